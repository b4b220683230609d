use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use spmv_core::{generate, write_matrix_market};

use super::gen_spec;
use crate::output::Sink;

#[derive(Clone, Debug, Args)]
pub struct GenArgs {
    /// Generator spec, e.g. `banded:n=10000,nnzr=15,halfwidth=40`.
    pub spec: String,
    /// Seed used when the spec has none.
    #[arg(long, env = "SPMV_SEED")]
    pub seed: Option<u64>,
    /// Output file (default: matrix.mtx in the output directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn cmd_gen(args: &GenArgs, sink: &Sink) -> Result<()> {
    let spec = gen_spec(&args.spec, args.seed)?;
    let a = generate(&spec)?;
    let path = match (&args.out, &sink.dir) {
        (Some(p), _) => p.clone(),
        (None, Some(dir)) => {
            std::fs::create_dir_all(dir)?;
            dir.join("matrix.mtx")
        }
        (None, None) => PathBuf::from("matrix.mtx"),
    };
    write_matrix_market(&a, &path).with_context(|| format!("writing {}", path.display()))?;
    println!(
        "{}: {} rows, {} nonzeros, {:.3} per row ({spec})",
        path.display(),
        a.n_rows(),
        a.nnz(),
        a.nnzr()
    );
    Ok(())
}
