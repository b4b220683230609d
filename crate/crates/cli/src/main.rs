use clap::Parser;

fn main() -> anyhow::Result<()> {
    spmv_bench::run(spmv_bench::Cli::parse())
}
