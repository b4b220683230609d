pub mod bench;
pub mod gen;
pub mod model;
pub mod partition;
pub mod probe;

use std::path::Path;

use anyhow::{Context, Result};
use spmv_core::{generate, read_matrix_market, CrsMatrix, GenSpec};

/// Loads a Matrix Market file, or generates from a spec such as
/// `banded:n=1000,nnzr=15,halfwidth=40`. `seed` fills in a missing spec seed.
pub fn load_matrix(source: &str, seed: Option<u64>) -> Result<CrsMatrix> {
    let path = Path::new(source);
    if path.exists() {
        return read_matrix_market(path).with_context(|| format!("reading {source}"));
    }
    if !source.contains(':') {
        anyhow::bail!("{source}: no such file, and not a generator spec");
    }
    let spec = gen_spec(source, seed)?;
    generate(&spec).with_context(|| format!("generating {spec}"))
}

pub fn gen_spec(text: &str, seed: Option<u64>) -> Result<GenSpec> {
    let mut spec: GenSpec = text.parse()?;
    if let Some(seed) = seed {
        if !text.contains("seed=") {
            spec.seed = seed;
        }
    }
    spec.validate()?;
    Ok(spec)
}

/// Deterministic RHS with entries in [0.5, 1.5).
pub fn default_rhs(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 + ((i as u64).wrapping_mul(2_654_435_761) % 1024) as f64 / 1024.0)
        .collect()
}
