use std::path::{Path, PathBuf};

use semface::bitstream::{archive_from_bytes, archive_to_bytes, Bitstream};
use semface::codec::{
    evaluate_rd, train_codec_with, write_rd_csv, CodecArchitecture, CodecModel, TrainConfig,
};
use semface::corpus::DescriptorCorpus;
use semface::descriptor::SegmentMask;
use semface::evaluation::{
    evaluate_expression_ra, evaluate_verification_ra, write_ra_csv, Channel, Mode, RaRow, Task,
};
use semface::heads::{
    train_expression, train_verification, EmbeddingOracle, ExpressionHead, HeadArchitecture,
    HeadTrainConfig, PairSet, VerificationHead,
};
use semface::nn::AdamConfig;
use semface::synth::{generate_synthetic_corpus, SyntheticConfig, SyntheticTask};
use semface::{Error, Result};

use crate::output::{emit, write_atomic};
use crate::{
    CompressArgs, DecompressArgs, EvalRaArgs, OptimArgs, SynthArgs, TaskArg, TrainCodecArgs,
    TrainExprArgs, TrainVerifArgs,
};

fn load_corpus(path: &Path) -> Result<DescriptorCorpus> {
    DescriptorCorpus::from_bytes(&read(path)?)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

fn adam(o: &OptimArgs) -> AdamConfig {
    AdamConfig {
        lr: o.lr,
        ..AdamConfig::default()
    }
}

fn head_config(o: &OptimArgs, epochs: u32) -> HeadTrainConfig {
    HeadTrainConfig {
        adam: adam(o),
        batch_size: o.batch_size,
        epochs,
        seed: o.seed,
    }
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let task = match a.task {
        TaskArg::Expression => SyntheticTask::Expression,
        TaskArg::Identity => SyntheticTask::Identity,
    };
    let cfg = SyntheticConfig {
        class_mean_scale: a.mean_scale,
        noise_scale: a.noise,
        ..SyntheticConfig::new(task, a.classes, a.per_class, a.seed)
    };
    let full = generate_synthetic_corpus(&cfg)?.corpus;
    let (corpus, held_out) = match (a.holdout_every, &a.test_out) {
        (Some(k), Some(test_out)) => {
            if k < 2 {
                return Err(Error::Config(format!(
                    "--holdout-every must be at least 2, got {k}"
                )));
            }
            let (train, test) = full.split_every(k);
            write_atomic(test_out, &test.to_bytes()?)?;
            eprintln!(
                "wrote {} held-out items to {}",
                test.len(),
                test_out.display()
            );
            (train, Some(test))
        }
        _ => (full, None),
    };
    write_atomic(&a.out, &corpus.to_bytes()?)?;
    if let Some(pairs_out) = &a.pairs_out {
        let labels = held_out
            .as_ref()
            .unwrap_or(&corpus)
            .require_labels("pair sampling")?;
        let pairs = PairSet::sample(labels, a.pairs, a.seed)?;
        let mut buf = Vec::new();
        pairs.write_csv(&mut buf)?;
        write_atomic(pairs_out, &buf)?;
    }
    println!(
        "count={} classes={} seed={}",
        corpus.len(),
        corpus.class_count(),
        a.seed
    );
    Ok(())
}

pub fn train_codec(a: TrainCodecArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let mask = SegmentMask::parse(&a.mask)?;
    let cfg = TrainConfig {
        adam: adam(&a.optim),
        batch_size: a.optim.batch_size,
        epochs: a.epochs,
        lambda_mae: a.lambda_mae,
        lambda_r: a.lambda_r,
        seed: a.optim.seed,
    };
    let arch = CodecArchitecture {
        hidden: a.hidden,
        ..CodecArchitecture::default()
    };
    eprintln!(
        "training {mask} codec on {} descriptors for {} epochs",
        corpus.len(),
        cfg.epochs
    );
    println!("epoch,loss_total,loss_mae,loss_rate");
    let trained = train_codec_with(&corpus, mask, arch, &cfg, |e| {
        println!("{},{},{},{}", e.epoch, e.total, e.mae, e.rate);
    })?;
    write_atomic(&a.out, &trained.model.to_bytes())
}

pub fn train_expr(a: TrainExprArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let cfg = head_config(&a.optim, a.epochs);
    eprintln!("training expression head on {} descriptors", corpus.len());
    println!("epoch,loss");
    let trained = train_expression(&corpus, a.classes, HeadArchitecture::default(), &cfg, |e| {
        println!("{},{}", e.epoch, e.loss)
    })?;
    write_atomic(&a.out, &trained.head.to_bytes())
}

pub fn train_verif(a: TrainVerifArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let targets = EmbeddingOracle::new(a.oracle_seed).targets(&corpus)?;
    let cfg = head_config(&a.optim, a.epochs);
    eprintln!("training verification head on {} descriptors", corpus.len());
    println!("epoch,loss");
    let trained = train_verification(&corpus, &targets, HeadArchitecture::default(), &cfg, |e| {
        println!("{},{}", e.epoch, e.loss)
    })?;
    write_atomic(&a.out, &trained.head.to_bytes())
}

pub fn compress(a: CompressArgs) -> Result<()> {
    let model = CodecModel::from_bytes(&read(&a.model)?)?;
    let corpus = load_corpus(&a.corpus)?;
    let keep = a.mask.as_deref().map(SegmentMask::parse).transpose()?;
    let zero_pad = match keep {
        Some(k) if k == model.mask() => None,
        Some(k) if model.mask().is_full() => Some(k),
        Some(k) => {
            return Err(Error::Incompatible(format!(
                "requested segments {k} but the codec carries {}",
                model.mask()
            )))
        }
        None => None,
    };
    let streams = corpus
        .vectors()
        .iter()
        .map(|d| match zero_pad {
            Some(k) => model.compress(&d.zero_pad(k)),
            None => model.compress(d),
        })
        .collect::<Result<Vec<Bitstream>>>()?;
    write_atomic(&a.out, &archive_to_bytes(&streams)?)?;
    if a.stats {
        let bits: u64 = streams.iter().map(Bitstream::total_bits).sum();
        let payload: u64 = streams.iter().map(Bitstream::payload_bits).sum();
        let n = streams.len().max(1) as f64;
        println!("count,avg_bits,avg_payload_bits");
        println!(
            "{},{},{}",
            streams.len(),
            bits as f64 / n,
            payload as f64 / n
        );
    }
    Ok(())
}

pub fn decompress(a: DecompressArgs) -> Result<()> {
    let model = CodecModel::from_bytes(&read(&a.model)?)?;
    let streams = archive_from_bytes(&read(&a.archive)?)?;
    let vectors = streams
        .iter()
        .map(|s| model.decompress(s))
        .collect::<Result<Vec<_>>>()?;
    let corpus = DescriptorCorpus::unlabeled(vectors);
    write_atomic(&a.out, &corpus.to_bytes()?)?;
    eprintln!("reconstructed {} descriptors", corpus.len());
    Ok(())
}

pub fn eval_ra(a: EvalRaArgs) -> Result<()> {
    let inputs: Vec<&PathBuf> = a
        .models
        .iter()
        .chain(&a.partial_models)
        .chain([
            &a.expr_head,
            &a.verif_head,
            &a.expr_corpus,
            &a.verif_corpus,
            &a.pairs,
        ])
        .collect();
    let missing: Vec<String> = inputs
        .iter()
        .filter(|p| !p.is_file())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("missing artifacts: {}", missing.join(", ")),
        )));
    }

    let expr_head = ExpressionHead::from_bytes(&read(&a.expr_head)?)?;
    let verif_head = VerificationHead::from_bytes(&read(&a.verif_head)?)?;
    let expr_corpus = load_corpus(&a.expr_corpus)?;
    let verif_corpus = load_corpus(&a.verif_corpus)?;
    let pairs = PairSet::read_csv(read(&a.pairs)?.as_slice())?;
    pairs.validate(verif_corpus.len())?;
    let rd_corpus = expr_corpus.concat(&verif_corpus);

    let mut ra = Vec::new();
    let mut rd = Vec::new();
    let mut row = |task, mode, lambda_r, point| {
        ra.push(RaRow {
            task,
            mode,
            lambda_r,
            point,
        })
    };
    for path in &a.models {
        let codec = CodecModel::from_bytes(&read(path)?)?;
        if !codec.mask().is_full() {
            return Err(Error::Incompatible(format!(
                "{} is a partial codec ({}); pass it with --partial-model",
                path.display(),
                codec.mask()
            )));
        }
        let lambda = codec.metadata().lambda_r;
        eprintln!(
            "evaluating full codec {} (lambda_r {lambda})",
            path.display()
        );
        rd.push((lambda, evaluate_rd(&codec, &rd_corpus)?));
        let full = Channel::Codec(&codec);
        row(
            Task::Expression,
            Mode::Full,
            lambda,
            evaluate_expression_ra(full, &expr_head, &expr_corpus)?,
        );
        row(
            Task::Verification,
            Mode::Full,
            lambda,
            evaluate_verification_ra(full, &verif_head, &verif_corpus, &pairs)?,
        );
        let pad = |keep| Channel::ZeroPad {
            codec: &codec,
            keep,
        };
        row(
            Task::Expression,
            Mode::PortionZeroPad,
            lambda,
            evaluate_expression_ra(pad(ExpressionHead::MASK), &expr_head, &expr_corpus)?,
        );
        row(
            Task::Verification,
            Mode::PortionZeroPad,
            lambda,
            evaluate_verification_ra(
                pad(VerificationHead::MASK),
                &verif_head,
                &verif_corpus,
                &pairs,
            )?,
        );
    }
    for path in &a.partial_models {
        let codec = CodecModel::from_bytes(&read(path)?)?;
        let lambda = codec.metadata().lambda_r;
        let channel = Channel::Codec(&codec);
        eprintln!(
            "evaluating retrained codec {} ({})",
            path.display(),
            codec.mask()
        );
        match codec.mask() {
            m if m == ExpressionHead::MASK => row(
                Task::Expression,
                Mode::PortionRetrained,
                lambda,
                evaluate_expression_ra(channel, &expr_head, &expr_corpus)?,
            ),
            m if m == VerificationHead::MASK => row(
                Task::Verification,
                Mode::PortionRetrained,
                lambda,
                evaluate_verification_ra(channel, &verif_head, &verif_corpus, &pairs)?,
            ),
            m => {
                return Err(Error::Incompatible(format!(
                    "{} carries segments {m}, which match neither task head",
                    path.display()
                )))
            }
        }
    }

    let mut buf = Vec::new();
    write_ra_csv(&mut buf, &ra)?;
    emit(a.out.as_deref(), &buf)?;
    if let Some(rd_out) = &a.rd_out {
        let mut buf = Vec::new();
        write_rd_csv(&mut buf, &rd)?;
        write_atomic(rd_out, &buf)?;
    }
    Ok(())
}
