//! `saloss`: salience maps, salience-regularized training, faithfulness
//! evaluation and report comparison.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::error::ErrorKind as ClapErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use saloss_core::attribution::AttributionMethod;
use saloss_core::evaluation::{TestKind, Thresholder, DEFAULT_STEP};
use saloss_core::salience::SalienceMethod;
use saloss_core::{Error, ErrorKind, Result};

use commands::Mode;
use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "saloss",
    version,
    about = "Salience-regularized attention and explanation faithfulness"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML file with optional [model], [train], [textrank], [attribution]
    /// and [synthetic] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for per-document work. Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the planted-keyword benchmark as train/dev/test JSONL.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compute per-document salience maps for every split.
    Salience {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_parser = parse::<SalienceMethod>)]
        method: SalienceMethod,
        /// Tokens kept per document; defaults to the model's content capacity.
        #[arg(long)]
        max_tokens: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a classifier with the joint cross-entropy and salience loss.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        salience: Option<PathBuf>,
        /// One value, or a comma-separated list to select by dev faithfulness.
        #[arg(long, value_delimiter = ',')]
        lambda: Vec<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Erasure, FRESH and part-of-speech evaluation of a checkpoint.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Attribution methods; all four by default. A random ranking is always added.
        #[arg(long, value_delimiter = ',', value_parser = parse::<AttributionMethod>)]
        method: Vec<AttributionMethod>,
        #[arg(long, value_delimiter = ',', default_value = "erase")]
        mode: Vec<ModeArg>,
        #[arg(long, value_parser = parse::<Thresholder>)]
        thresholder: Option<Thresholder>,
        #[arg(long)]
        ratio: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_STEP)]
        step: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// FRESH classifiers trained per extractor, seeded seed, seed+1, ...
        #[arg(long, default_value_t = 1)]
        fresh_runs: usize,
        /// Rank tokens by absolute attribution.
        #[arg(long)]
        abs_rank: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Significance of per-method differences between two reports.
    Compare {
        report_a: PathBuf,
        report_b: PathBuf,
        #[arg(long, value_enum, default_value = "wilcoxon")]
        test: TestArg,
        /// Also write the comparison as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Erase,
    Fresh,
    Pos,
}

#[derive(Clone, Copy, ValueEnum)]
enum TestArg {
    Wilcoxon,
    Ttest,
}

fn parse<T: FromStr<Err = Error>>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("SALOSS_LOG", "info");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.common.jobs {
        if jobs == 0 {
            return Err(Error::config("--jobs must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::config(e.to_string()))?;
    }
    let cfg = RunConfig::load(cli.common.config.as_deref())?;
    match cli.command {
        Command::Synth { out, seed } => commands::synth(&commands::SynthArgs { out, seed }, &cfg),
        Command::Salience {
            dataset,
            method,
            max_tokens,
            out,
        } => commands::salience(
            &commands::SalienceArgs {
                dataset,
                method,
                max_tokens,
                out,
            },
            &cfg,
        ),
        Command::Train {
            dataset,
            salience,
            lambda,
            seed,
            out,
        } => commands::train(
            &commands::TrainArgs {
                dataset,
                salience,
                lambdas: lambda,
                seed,
                out,
            },
            &cfg,
        ),
        Command::Evaluate {
            checkpoint,
            dataset,
            method,
            mode,
            thresholder,
            ratio,
            step,
            seed,
            fresh_runs,
            abs_rank,
            out,
        } => {
            let methods = if method.is_empty() {
                AttributionMethod::EXPLANATORY.to_vec()
            } else {
                method
            };
            let mut modes = Vec::new();
            for m in mode {
                let m = match m {
                    ModeArg::Erase => Mode::Erase,
                    ModeArg::Fresh => Mode::Fresh,
                    ModeArg::Pos => Mode::Pos,
                };
                if !modes.contains(&m) {
                    modes.push(m);
                }
            }
            commands::evaluate(
                &commands::EvaluateArgs {
                    checkpoint,
                    dataset,
                    methods,
                    modes,
                    thresholder,
                    ratio,
                    step,
                    seed,
                    fresh_runs,
                    abs_rank,
                    out,
                },
                &cfg,
            )
        }
        Command::Compare {
            report_a,
            report_b,
            test,
            out,
        } => commands::compare(&commands::CompareArgs {
            report_a,
            report_b,
            test: match test {
                TestArg::Wilcoxon => TestKind::WilcoxonRankSum,
                TestArg::Ttest => TestKind::WelchT,
            },
            out,
        }),
    }
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numerical => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ClapErrorKind::DisplayHelp | ClapErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    init_logging();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
