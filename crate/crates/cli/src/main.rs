mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::config::RunArgs;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] slotguide::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    /// 2 config, 3 data, 4 transport, 5 internal.
    pub fn exit_code(&self) -> u8 {
        use slotguide::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Io { .. } => 3,
            CliError::Core(e) => match e.root() {
                E::Config(_) | E::UnknownFormat(_) | E::Toml(_) | E::ToySpec(_) => 2,
                E::MalformedMr { .. }
                | E::SpanResolution { .. }
                | E::UnknownSlot(_)
                | E::EmptyCorpus
                | E::Data(_)
                | E::Csv(_)
                | E::Json(_)
                | E::Io(_)
                | E::TraceIncomplete { .. } => 3,
                E::Transport(_) | E::Schema(_) | E::Remote(_) => 4,
                _ => 5,
            },
        }
    }
}

#[derive(Parser)]
#[command(
    name = "slotguide",
    version,
    about = "Attention-guided decoding and slot error evaluation for MR-to-text generation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Linearize a dataset's MRs and write their slot layout.
    Preprocess {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Decode every MR with one or more strategies.
    Decode {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated: greedy, beam, beam+aligner, seaguide.
        #[arg(long)]
        strategy: Option<String>,
    },
    /// Slot error rate of utterances against their MRs.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        /// One utterance per line; the dataset references when absent.
        #[arg(long)]
        outputs: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        max_exemplars: usize,
    },
    /// Cross-attention heatmap of the greedy output for one MR.
    Heatmap {
        #[command(flatten)]
        run: RunArgs,
        /// The MR; otherwise entry `--index` of the dataset.
        #[arg(long)]
        mr: Option<String>,
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// 1-based decoder layer; all layers when absent.
        #[arg(long)]
        layer: Option<usize>,
        /// Step range `a..b`.
        #[arg(long)]
        steps: Option<String>,
        /// max, mean or sum over heads.
        #[arg(long, default_value = "max")]
        heads: String,
        /// max, mean or sum over layers.
        #[arg(long, default_value = "mean")]
        layers: String,
        /// Write SVG here instead of printing shaded text.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Grid search over tracker thresholds and aggregation.
    Tune {
        #[command(flatten)]
        run: RunArgs,
        /// Grid file (TOML); the default grid when absent.
        #[arg(long)]
        grid: Option<PathBuf>,
        /// Also write SVG charts.
        #[arg(long)]
        plots: bool,
    },
    /// SER by beam size and reranker.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "5,10,20")]
        sizes: String,
        #[arg(long, default_value = "none,semantic,aligner")]
        rerankers: String,
        #[arg(long)]
        plots: bool,
    },
    /// Decode through a live stepper and save a replayable trace.
    Record {
        #[command(flatten)]
        run: RunArgs,
        /// Strategies to record; all when absent.
        #[arg(long)]
        strategy: Option<String>,
    },
    /// Serve a stepper over the line protocol.
    Serve {
        #[command(flatten)]
        run: RunArgs,
        /// Address to listen on.
        #[arg(long, default_value = "127.0.0.1:7341", conflicts_with = "stdio")]
        listen: String,
        /// Speak the protocol on standard input and output.
        #[arg(long)]
        stdio: bool,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Preprocess { run } => commands::preprocess(&run),
        Command::Decode { run, strategy } => commands::decode(&run, strategy.as_deref()),
        Command::Eval { run, outputs, max_exemplars } => commands::eval(&run, outputs.as_deref(), max_exemplars),
        Command::Heatmap { run, mr, index, layer, steps, heads, layers, svg } => {
            commands::heatmap(&run, commands::HeatmapArgs { mr, index, layer, steps, heads, layers, svg })
        }
        Command::Tune { run, grid, plots } => commands::tune(&run, grid.as_deref(), plots),
        Command::Sweep { run, sizes, rerankers, plots } => commands::sweep(&run, &sizes, &rerankers, plots),
        Command::Record { run, strategy } => commands::record(&run, strategy.as_deref()),
        Command::Serve { run, listen, stdio } => commands::serve(&run, &listen, stdio),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
