use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use finesent_core::tagscheme::TagScheme;
use finesent_cli::adapters::Adapter;
use finesent_cli::commands::{cmd_convert, cmd_eval, cmd_predict, cmd_stats, ConvertArgs, OutputFormat, PredictArgs};
use finesent_cli::experiment::{run_experiment, ExperimentSpec, SweepOptions};
use finesent_cli::CliError;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Parser)]
#[command(name = "finesent", version, about = "Fine-grained sentiment corpora, taggers and experiment sweeps")]
struct Cli {
    /// Seed for splitting; for `run`, replaces the experiment's seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for `run`.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Re-run cells that already have a cached result.
    #[arg(long, global = true)]
    force: bool,
    #[arg(long, global = true, value_enum, default_value = "text")]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a source file to canonical JSON.
    Convert {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, default_value = "canonical")]
        adapter: String,
        /// Tag scheme of CoNLL input, e.g. joint_polarity/targeted.
        #[arg(long)]
        scheme: Option<String>,
        /// TSV of `raw_label<TAB>polarity` rows.
        #[arg(long)]
        polarity_map: Option<PathBuf>,
        #[arg(long)]
        name: Option<String>,
        /// Also write <output>.train/.dev/.test.json, split with --seed.
        #[arg(long)]
        split: bool,
    },
    /// Print corpus statistics; with three files, also target overlap.
    Stats {
        #[arg(required = true, num_args = 1..=3)]
        corpora: Vec<PathBuf>,
    },
    /// Run an experiment matrix.
    Run { experiment: PathBuf },
    /// Apply a saved model to a corpus.
    Predict {
        model: PathBuf,
        corpus: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
    /// Score predictions against a gold corpus.
    Eval {
        gold: PathBuf,
        pred: PathBuf,
        /// Tag scheme of CoNLL predictions.
        #[arg(long, default_value = "target/targeted")]
        scheme: String,
    },
}

fn parse_scheme(s: &str) -> Result<TagScheme, CliError> {
    s.parse().map_err(CliError::Usage)
}

fn dispatch(cli: Cli) -> Result<String, CliError> {
    let format = match cli.format {
        Format::Text => OutputFormat::Text,
        Format::Json => OutputFormat::Json,
    };
    match cli.command {
        Command::Convert {
            input,
            output,
            adapter,
            scheme,
            polarity_map,
            name,
            split,
        } => {
            let args = ConvertArgs {
                input,
                output,
                adapter: adapter.parse::<Adapter>()?,
                scheme: scheme.as_deref().map(parse_scheme).transpose()?,
                polarity_map,
                name,
                split_seed: split.then(|| cli.seed.unwrap_or(0)),
            };
            cmd_convert(&args)
        }
        Command::Stats { corpora } => cmd_stats(&corpora, format),
        Command::Run { experiment } => {
            let mut spec = ExperimentSpec::load(&experiment)?;
            if let Some(seed) = cli.seed {
                spec.seeds = vec![seed];
            }
            let outcome = run_experiment(
                &spec,
                SweepOptions {
                    jobs: cli.jobs,
                    force: cli.force,
                },
            )?;
            let mut out = match format {
                OutputFormat::Text => outcome.report.to_text(),
                OutputFormat::Json => serde_json::to_string_pretty(&outcome.report)
                    .map_err(|e| CliError::Runtime(e.to_string()))?,
            };
            if format == OutputFormat::Text {
                out.push_str(&format!(
                    "\n{} cells: {} executed, {} cached, {} failed\n",
                    outcome.records.len(),
                    outcome.executed,
                    outcome.skipped,
                    outcome.failed
                ));
            } else {
                out.push('\n');
            }
            Ok(out)
        }
        Command::Predict {
            model,
            corpus,
            output,
            embeddings,
            lexicon,
        } => cmd_predict(&PredictArgs {
            model,
            corpus,
            output,
            embeddings,
            lexicon,
        }),
        Command::Eval { gold, pred, scheme } => cmd_eval(&gold, &pred, parse_scheme(&scheme)?, format),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
