use semface::corpus::DescriptorCorpus;
use semface::descriptor::{Descriptor, Segment};
use semface::heads::{
    train_expression, train_verification, EmbeddingOracle, ExpressionHead, HeadArchitecture,
    HeadTrainConfig, PairSet, VerificationHead, EMBEDDING_WIDTH,
};
use semface::synth::{generate_synthetic_corpus, SyntheticConfig, SyntheticTask};
use semface::Error;

fn corpus(
    task: SyntheticTask,
    classes: usize,
    per: usize,
    seed: u64,
) -> (DescriptorCorpus, DescriptorCorpus) {
    generate_synthetic_corpus(&SyntheticConfig::new(task, classes, per, seed))
        .unwrap()
        .corpus
        .split_every(5)
}

fn perturb(d: &Descriptor, segments: &[Segment], delta: f64) -> Descriptor {
    let mut v = d.values().to_vec();
    for s in segments {
        for x in &mut v[s.range()] {
            *x += delta;
        }
    }
    Descriptor::new(v).unwrap()
}

#[test]
fn expression_head_learns_separable_classes() {
    let (train, test) = corpus(SyntheticTask::Expression, 8, 125, 21);
    let cfg = HeadTrainConfig {
        seed: 4,
        ..HeadTrainConfig::default()
    };
    assert_eq!(cfg.epochs, 30);
    let t = train_expression(&train, 8, HeadArchitecture::default(), &cfg, |_| {}).unwrap();
    assert!(t.losses.last().unwrap().loss < t.losses[0].loss);
    let acc = t.head.accuracy(&test).unwrap();
    assert!(acc >= 0.90, "held-out accuracy {acc}");
    assert_eq!(t.head.classes(), 8);

    let again = train_expression(&train, 8, HeadArchitecture::default(), &cfg, |_| {}).unwrap();
    assert_eq!(again.head.to_bytes(), t.head.to_bytes());
    let back = ExpressionHead::from_bytes(&t.head.to_bytes()).unwrap();
    assert_eq!(back, t.head);

    let d = &test.vectors()[0];
    let s = t.head.scores(d).unwrap();
    // argmax unaffected by shifting or by a strictly increasing map
    let shifted: Vec<f64> = s.iter().map(|v| v + 17.5).collect();
    let squashed: Vec<f64> = s.iter().map(|v| v.tanh() * 3.0 + 1.0).collect();
    let arg = |v: &[f64]| {
        v.iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0
    };
    assert_eq!(arg(&s), arg(&shifted));
    assert_eq!(arg(&s), arg(&squashed));
    assert_eq!(arg(&s), t.head.predict(d).unwrap());

    // only expression, rotation and translation are read
    let moved = perturb(
        d,
        &[Segment::Shape, Segment::Texture, Segment::Illumination],
        3.0,
    );
    assert_eq!(t.head.scores(&moved).unwrap(), s);
    let direct = t
        .head
        .infer(
            d.segment(Segment::Expression),
            d.segment(Segment::Rotation),
            d.segment(Segment::Translation),
        )
        .unwrap();
    assert_eq!(direct, s);
    assert!(matches!(
        t.head.infer(&[0.0; 63], &[0.0; 3], &[0.0; 3]),
        Err(Error::SegmentLength {
            segment: Segment::Expression,
            ..
        })
    ));
}

#[test]
fn single_class_corpus_predicts_that_class() {
    let (train, test) = corpus(SyntheticTask::Expression, 1, 60, 3);
    let arch = HeadArchitecture {
        width: 32,
        blocks: 1,
    };
    let cfg = HeadTrainConfig {
        epochs: 100,
        adam: semface::nn::AdamConfig {
            lr: 1e-3,
            ..Default::default()
        },
        ..HeadTrainConfig::default()
    };
    let t = train_expression(&train, 4, arch, &cfg, |_| {}).unwrap();
    assert!(
        t.losses.last().unwrap().loss < 0.05,
        "{:?}",
        t.losses.last()
    );
    assert_eq!(t.head.accuracy(&test).unwrap(), 1.0);
}

#[test]
fn expression_training_needs_labels() {
    let (train, _) = corpus(SyntheticTask::Expression, 2, 10, 3);
    let cfg = HeadTrainConfig::default();
    assert!(matches!(
        train_expression(
            &train.without_labels(),
            8,
            HeadArchitecture::default(),
            &cfg,
            |_| {}
        ),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        train_expression(&train, 1, HeadArchitecture::default(), &cfg, |_| {}),
        Err(Error::Config(_))
    ));
}

#[test]
fn verification_head_regresses_oracle_embeddings() {
    let (train, test) = corpus(SyntheticTask::Identity, 32, 25, 22);
    let oracle = EmbeddingOracle::new(5);
    let targets = oracle.targets(&train).unwrap();
    assert!(targets.iter().all(|t| t.len() == EMBEDDING_WIDTH
        && (t.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12));
    let cfg = HeadTrainConfig {
        seed: 8,
        ..HeadTrainConfig::default()
    };
    let t =
        train_verification(&train, &targets, HeadArchitecture::default(), &cfg, |_| {}).unwrap();
    assert!(t.losses.last().unwrap().loss < t.losses[0].loss);

    let test_targets = oracle.targets(&test).unwrap();
    let n = test.len() as f64;
    let mut mse = 0.0;
    for (d, target) in test.vectors().iter().zip(&test_targets) {
        let p = t.head.embed(d).unwrap();
        assert_eq!(p.len(), 512);
        mse += p
            .iter()
            .zip(target)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / 512.0;
    }
    mse /= n;
    let mut variance = 0.0;
    for k in 0..512 {
        let mean = test_targets.iter().map(|t| t[k]).sum::<f64>() / n;
        variance += test_targets
            .iter()
            .map(|t| (t[k] - mean).powi(2))
            .sum::<f64>()
            / n;
    }
    variance /= 512.0;
    assert!(mse < 0.1 * variance, "mse {mse} vs variance {variance}");

    let d = &test.vectors()[3];
    let e = t.head.embed(d).unwrap();
    assert_eq!(t.head.embed(d).unwrap(), e);
    let moved = perturb(
        d,
        &[
            Segment::Expression,
            Segment::Rotation,
            Segment::Translation,
            Segment::Illumination,
        ],
        -2.0,
    );
    assert_eq!(t.head.embed(&moved).unwrap(), e);
    assert_eq!(
        t.head
            .embed_segments(d.segment(Segment::Shape), d.segment(Segment::Texture))
            .unwrap(),
        e
    );

    let labels = test.labels().unwrap();
    let pairs = PairSet::sample(labels, 600, 1).unwrap();
    let embeddings: Vec<Vec<f64>> = test
        .vectors()
        .iter()
        .map(|d| t.head.embed(d).unwrap())
        .collect();
    let fit = semface::heads::find_threshold(&pairs, &embeddings).unwrap();
    assert!(fit.accuracy >= 0.9, "pair accuracy {}", fit.accuracy);

    let bytes = t.head.to_bytes();
    assert_eq!(VerificationHead::from_bytes(&bytes).unwrap(), t.head);
    assert!(matches!(
        ExpressionHead::from_bytes(&bytes),
        Err(Error::Incompatible(_))
    ));
}

#[test]
fn zero_targets_drive_output_to_zero() {
    let (train, _) = corpus(SyntheticTask::Identity, 4, 20, 9);
    let targets = vec![vec![0.0; 16]; train.len()];
    let arch = HeadArchitecture {
        width: 32,
        blocks: 1,
    };
    let cfg = HeadTrainConfig {
        epochs: 200,
        adam: semface::nn::AdamConfig {
            lr: 1e-3,
            ..Default::default()
        },
        ..HeadTrainConfig::default()
    };
    let t = train_verification(&train, &targets, arch, &cfg, |_| {}).unwrap();
    assert!(
        t.losses.last().unwrap().loss < 1e-4,
        "{:?}",
        t.losses.last()
    );
    assert!(matches!(
        train_verification(&train, &targets[1..], arch, &cfg, |_| {}),
        Err(Error::Config(_))
    ));
}
