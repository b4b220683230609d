//! Command-line front end: model evaluation, overlap probe, matrix
//! generation, partition inspection and strong-scaling benchmarks.

pub mod cmd;
pub mod output;
pub mod scaling;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub use cmd::bench::{cmd_bench, BenchArgs, BenchReport};
pub use cmd::gen::{cmd_gen, GenArgs};
pub use cmd::model::{cmd_model, model_report, ModelArgs, ModelReport};
pub use cmd::partition::{cmd_partition_info, PartitionArgs};
pub use cmd::probe::{cmd_probe, ProbeArgs};
pub use output::Format;

#[derive(Debug, Parser)]
#[command(name = "spmv-bench", version, about = "Distributed spMVM benchmark harness")]
pub struct Cli {
    /// Directory for result files. Without it, single tables go to stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,

    /// Output format (default: text for `model`, csv otherwise).
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a strong-scaling sweep over ranks and modes.
    Bench(BenchArgs),
    /// Measure whether nonblocking transfers progress during computation.
    Probe(ProbeArgs),
    /// Evaluate the code balance model.
    Model(ModelArgs),
    /// Write a synthetic matrix in Matrix Market format.
    Gen(GenArgs),
    /// Show per-rank rows, nonzeros and halo traffic of a partition.
    PartitionInfo(PartitionArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

impl From<OnOff> for bool {
    fn from(v: OnOff) -> bool {
        v == OnOff::On
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let out = output::Sink::new(cli.output, cli.format);
    match cli.command {
        Command::Bench(args) => cmd_bench(&args, &out).map(drop),
        Command::Probe(args) => cmd_probe(&args, &out),
        Command::Model(args) => cmd_model(&args, &out),
        Command::Gen(args) => cmd_gen(&args, &out),
        Command::PartitionInfo(args) => cmd_partition_info(&args, &out),
    }
}
