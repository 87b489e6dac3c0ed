//! `semface`: synthesize descriptor corpora, train codecs and task heads,
//! compress and decompress descriptor files, and report rate-accuracy.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use semface::Error;

#[derive(Parser)]
#[command(
    name = "semface",
    version,
    about = "Semantic face descriptor compression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic descriptor corpus (SFD1).
    Synth(SynthArgs),
    /// Train a descriptor codec and write an SFM1 checkpoint.
    TrainCodec(TrainCodecArgs),
    /// Train the expression recognition head.
    TrainExpr(TrainExprArgs),
    /// Train the identity verification head.
    TrainVerif(TrainVerifArgs),
    /// Compress a corpus into an SFCS archive of per-descriptor bitstreams.
    Compress(CompressArgs),
    /// Reconstruct a corpus from an SFCS archive.
    Decompress(DecompressArgs),
    /// Rate-accuracy and rate-distortion reports over trained artifacts.
    EvalRa(EvalRaArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Expression,
    Identity,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    task: TaskArg,
    #[arg(long, default_value_t = 8)]
    classes: usize,
    #[arg(long, default_value_t = 200)]
    per_class: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 1.0)]
    mean_scale: f64,
    /// Keep every k-th item for a held-out file (requires --test-out).
    #[arg(long, requires = "test_out")]
    holdout_every: Option<usize>,
    #[arg(long)]
    test_out: Option<PathBuf>,
    /// Also write a balanced verification pair set, indexing the held-out
    /// corpus when one is written and the main output otherwise.
    #[arg(long)]
    pairs_out: Option<PathBuf>,
    #[arg(long, default_value_t = 600, requires = "pairs_out")]
    pairs: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OptimArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
}

#[derive(Args)]
struct TrainCodecArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Segments the codec carries, e.g. `delta,theta,l`.
    #[arg(long, default_value = "full")]
    mask: String,
    #[arg(long, default_value_t = 0.001)]
    lambda_r: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda_mae: f64,
    #[arg(long, default_value_t = 40)]
    epochs: u32,
    #[arg(long, default_value_t = 512)]
    hidden: usize,
    #[command(flatten)]
    optim: OptimArgs,
}

#[derive(Args)]
struct TrainExprArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    classes: usize,
    #[arg(long, default_value_t = 30)]
    epochs: u32,
    #[command(flatten)]
    optim: OptimArgs,
}

#[derive(Args)]
struct TrainVerifArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 30)]
    epochs: u32,
    /// Seed of the fixed random map producing target embeddings.
    #[arg(long, default_value_t = 0)]
    oracle_seed: u64,
    #[command(flatten)]
    optim: OptimArgs,
}

#[derive(Args)]
struct CompressArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Segments to transmit. With a full codec, other segments are zeroed
    /// first; with a partial codec it must match the codec's segments.
    #[arg(long)]
    mask: Option<String>,
    /// Print average bits per descriptor.
    #[arg(long)]
    stats: bool,
}

#[derive(Args)]
struct DecompressArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    archive: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalRaArgs {
    /// Full-descriptor codec checkpoints, one per rate weight.
    #[arg(long = "model", required = true)]
    models: Vec<PathBuf>,
    /// Retrained partial codecs; their segments decide the task they serve.
    #[arg(long = "partial-model")]
    partial_models: Vec<PathBuf>,
    #[arg(long)]
    expr_head: PathBuf,
    #[arg(long)]
    verif_head: PathBuf,
    /// Labeled expression evaluation corpus.
    #[arg(long)]
    expr_corpus: PathBuf,
    /// Labeled identity evaluation corpus.
    #[arg(long)]
    verif_corpus: PathBuf,
    /// Pair set over the identity corpus.
    #[arg(long)]
    pairs: PathBuf,
    /// Rate-accuracy CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Rate-distortion CSV for the full codecs.
    #[arg(long)]
    rd_out: Option<PathBuf>,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Shape(_) | Error::SegmentLength { .. } => 2,
        Error::NonFinite(_) | Error::Training { .. } | Error::LatentRange { .. } => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (stage, result) = match cli.command {
        Command::Synth(a) => ("synth", commands::synth(a)),
        Command::TrainCodec(a) => ("train-codec", commands::train_codec(a)),
        Command::TrainExpr(a) => ("train-expr", commands::train_expr(a)),
        Command::TrainVerif(a) => ("train-verif", commands::train_verif(a)),
        Command::Compress(a) => ("compress", commands::compress(a)),
        Command::Decompress(a) => ("decompress", commands::decompress(a)),
        Command::EvalRa(a) => ("eval-ra", commands::eval_ra(a)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("semface {stage}: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use semface::codec::{CodecArchitecture, TrainConfig};
    use semface::heads::HeadTrainConfig;

    fn parse(args: &[&str]) -> Command {
        Cli::try_parse_from(std::iter::once("semface").chain(args.iter().copied()))
            .unwrap()
            .command
    }

    #[test]
    fn codec_defaults_match_library() {
        let Command::TrainCodec(a) = parse(&["train-codec", "--corpus", "c", "--out", "m"]) else {
            panic!("wrong subcommand");
        };
        let d = TrainConfig::default();
        assert_eq!(a.optim.lr, d.adam.lr);
        assert_eq!(a.optim.batch_size, d.batch_size);
        assert_eq!(a.epochs, d.epochs);
        assert_eq!(a.lambda_mae, d.lambda_mae);
        assert_eq!(a.lambda_r, d.lambda_r);
        assert_eq!(a.hidden, CodecArchitecture::default().hidden);
        assert_eq!(a.mask, "full");
    }

    #[test]
    fn head_defaults_match_library() {
        let d = HeadTrainConfig::default();
        let Command::TrainExpr(a) = parse(&["train-expr", "--corpus", "c", "--out", "m"]) else {
            panic!("wrong subcommand");
        };
        assert_eq!(
            (a.epochs, a.optim.lr, a.optim.batch_size),
            (d.epochs, d.adam.lr, d.batch_size)
        );
        let Command::TrainVerif(a) = parse(&["train-verif", "--corpus", "c", "--out", "m"]) else {
            panic!("wrong subcommand");
        };
        assert_eq!(
            (a.epochs, a.optim.lr, a.optim.batch_size),
            (d.epochs, d.adam.lr, d.batch_size)
        );
    }

    #[test]
    fn usage_errors() {
        let bad: [&[&str]; 3] = [
            &["synth", "--task", "pose", "--out", "x"],
            &[
                "synth",
                "--task",
                "expression",
                "--out",
                "x",
                "--holdout-every",
                "4",
            ],
            &["compress", "--model", "m", "--corpus", "c"],
        ];
        for args in bad {
            let err = Cli::try_parse_from(std::iter::once("semface").chain(args.iter().copied()))
                .err()
                .unwrap();
            assert_eq!(err.exit_code(), 2, "{args:?}");
        }
    }

    #[test]
    fn exit_code_classes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::Incompatible("x".into())), 3);
        assert_eq!(exit_code(&Error::Version(9)), 3);
        assert_eq!(exit_code(&Error::NonFinite("x".into())), 4);
    }
}
