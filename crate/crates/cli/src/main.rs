//! `sgg`: synthetic data, training, sampling, scoring and evaluation.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "sgg", version, about = "Scene-graph generation pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset from a scene grammar.
    SynthData(SynthData),
    /// Train a model on a dataset and write a checkpoint.
    Train(Train),
    /// Sample graphs from a checkpoint.
    Sample(Sample),
    /// Per-graph negative log-likelihood table.
    Nll(Nll),
    /// Relabel a fraction of nodes and edges in every graph.
    Corrupt(Corrupt),
    /// AUROC of NLL scores separating corrupt from clean graphs.
    Anomaly(Anomaly),
    /// MMD² between two datasets under the graph kernels.
    Mmd(Mmd),
    /// Occurrence, co-occurrence and count-distribution tables.
    Stats(Stats),
    /// Complete a partial graph.
    Complete(Complete),
    /// Most similar training graph for each query graph.
    Nearest(Nearest),
    /// Write one Graphviz file per graph.
    ExportDot(ExportDot),
}

#[derive(Args)]
struct Seed {
    /// RNG seed; a fresh one is generated and printed when omitted.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct Threads {
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    /// Full-scale architecture and schedule.
    Full,
    /// Smaller architecture and schedule for a single CPU core.
    Desk,
}

#[derive(Clone, Copy, ValueEnum)]
enum Ordering {
    Random,
    Bfs,
    Hierarchical,
}

#[derive(Args)]
struct SynthData {
    /// Grammar JSON; the bundled default when omitted.
    #[arg(long)]
    grammar: Option<PathBuf>,
    #[arg(long, required_unless_present = "print_grammar")]
    count: Option<usize>,
    #[arg(long, required_unless_present = "print_grammar")]
    out: Option<PathBuf>,
    /// Print the bundled grammar and exit.
    #[arg(long, conflicts_with_all = ["grammar", "count", "out"])]
    print_grammar: bool,
    #[command(flatten)]
    seed: Seed,
}

#[derive(Args)]
struct Train {
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint path (rewritten on schedule and at the end).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    validation: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Profile::Desk)]
    profile: Profile,
    #[arg(long, value_enum, default_value_t = Ordering::Random)]
    ordering: Ordering,
    /// Grammar supplying tiers for hierarchical ordering (bundled default when omitted).
    #[arg(long)]
    grammar: Option<PathBuf>,
    /// Overrides the profile; with --resume, extends the run.
    #[arg(long)]
    epochs: Option<u64>,
    #[arg(long)]
    batches_per_epoch: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Largest graph the model accepts.
    #[arg(long)]
    max_nodes: Option<usize>,
    /// Training log, one JSON record per line.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Continue from a checkpoint written by `train`.
    #[arg(long, conflicts_with_all = ["profile", "ordering", "batches_per_epoch", "batch_size", "lr", "max_nodes"])]
    resume: Option<PathBuf>,
    #[command(flatten)]
    seed: Seed,
    #[command(flatten)]
    threads: Threads,
}

#[derive(Args)]
struct SampleFlags {
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long)]
    max_nodes: Option<usize>,
}

#[derive(Args)]
struct Sample {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    count: usize,
    #[arg(long)]
    out: PathBuf,
    /// Also write one DOT file per sample into this directory.
    #[arg(long)]
    dot_dir: Option<PathBuf>,
    #[command(flatten)]
    sampling: SampleFlags,
    #[command(flatten)]
    seed: Seed,
}

#[derive(Args)]
struct Nll {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Corrupt {
    #[arg(long)]
    data: PathBuf,
    /// Share of nodes and edges relabeled per graph, in [0, 1].
    #[arg(long)]
    fraction: f64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    seed: Seed,
}

#[derive(Args)]
struct Anomaly {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    clean: PathBuf,
    #[arg(long)]
    corrupt: PathBuf,
}

#[derive(Args)]
struct KernelFlags {
    /// Walk length in nodes.
    #[arg(long, default_value_t = 3)]
    walk_length: usize,
    #[arg(long, default_value_t = 10_000)]
    walk_cap: usize,
    /// Sum walk kernels over all lengths up to the walk length.
    #[arg(long)]
    cumulative: bool,
}

#[derive(Args)]
struct Mmd {
    a: PathBuf,
    b: PathBuf,
    #[command(flatten)]
    kernel: KernelFlags,
    /// U-statistic instead of the default V-statistic.
    #[arg(long)]
    unbiased: bool,
    /// Write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    threads: Threads,
}

#[derive(Args)]
struct Stats {
    #[arg(long)]
    data: PathBuf,
    /// Second dataset for occurrence L1 and count-distribution KL.
    #[arg(long)]
    reference: Option<PathBuf>,
}

#[derive(Args)]
struct Complete {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset file; its first graph is the partial graph, in stored node order.
    #[arg(long)]
    partial: PathBuf,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    sampling: SampleFlags,
    #[command(flatten)]
    seed: Seed,
}

#[derive(Args)]
struct Nearest {
    /// Query graphs.
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    train: PathBuf,
    #[command(flatten)]
    kernel: KernelFlags,
    /// Compare object sets instead of walks.
    #[arg(long)]
    object_set: bool,
}

#[derive(Args)]
struct ExportDot {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
