//! Seeded synthetic square matrices.
//!
//! Specs have a compact text form used on the command line:
//! `banded:n=10000,nnzr=15,halfwidth=40,seed=1` or
//! `block:n=10000,nnzr=15,blocks=8,coupling=0.05,seed=1`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{contract, Error, Result};
use crate::sparse::CrsMatrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GenKind {
    /// Entries drawn uniformly within `halfwidth` of the diagonal.
    BandedRandom { halfwidth: usize },
    /// Dense-ish diagonal blocks; each off-diagonal entry leaves its block
    /// with probability `coupling`.
    BlockCoupled { blocks: usize, coupling: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenSpec {
    pub kind: GenKind,
    pub n: usize,
    /// Target average nonzeros per row, diagonal included.
    pub nnzr: f64,
    pub seed: u64,
}

impl GenSpec {
    pub fn banded(n: usize, nnzr: f64, halfwidth: usize, seed: u64) -> Self {
        Self {
            kind: GenKind::BandedRandom { halfwidth },
            n,
            nnzr,
            seed,
        }
    }

    pub fn block(n: usize, nnzr: f64, blocks: usize, coupling: f64, seed: u64) -> Self {
        Self {
            kind: GenKind::BlockCoupled { blocks, coupling },
            n,
            nnzr,
            seed,
        }
    }

    /// Largest `nnzr` every row can hold.
    pub fn max_nnzr(&self) -> usize {
        match self.kind {
            GenKind::BandedRandom { halfwidth } => halfwidth.min(self.n.saturating_sub(1)) + 1,
            GenKind::BlockCoupled { blocks, .. } => {
                (0..blocks.max(1)).map(|b| block_range(self.n, blocks, b).len()).min().unwrap_or(0)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        contract!(self.n >= 1, "matrix dimension must be positive");
        contract!(
            self.nnzr.is_finite() && self.nnzr >= 1.0,
            "nnzr must be at least 1 (the diagonal), got {}",
            self.nnzr
        );
        if let GenKind::BlockCoupled { blocks, coupling } = self.kind {
            contract!(
                blocks >= 1 && blocks <= self.n,
                "block count {blocks} must lie in [1, {}]",
                self.n
            );
            contract!(
                (0.0..=1.0).contains(&coupling),
                "coupling must lie in [0, 1], got {coupling}"
            );
            contract!(
                blocks > 1 || coupling == 0.0,
                "a single block cannot couple to other blocks"
            );
        }
        contract!(
            self.nnzr <= self.max_nnzr() as f64,
            "nnzr {} exceeds the {} entries the sparsest row can hold",
            self.nnzr,
            self.max_nnzr()
        );
        Ok(())
    }
}

fn block_range(n: usize, blocks: usize, b: usize) -> std::ops::Range<usize> {
    b * n / blocks..(b + 1) * n / blocks
}

impl fmt::Display for GenSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            GenKind::BandedRandom { halfwidth } => write!(
                f,
                "banded:n={},nnzr={},halfwidth={},seed={}",
                self.n, self.nnzr, halfwidth, self.seed
            ),
            GenKind::BlockCoupled { blocks, coupling } => write!(
                f,
                "block:n={},nnzr={},blocks={},coupling={},seed={}",
                self.n, self.nnzr, blocks, coupling, self.seed
            ),
        }
    }
}

impl FromStr for GenSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: String| Error::Contract(format!("generator spec {s:?}: {msg}"));
        let (kind, params) = s
            .split_once(':')
            .ok_or_else(|| bad("expected <kind>:<key>=<value>,...".into()))?;
        let mut kv = BTreeMap::new();
        for pair in params.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| bad(format!("{pair:?} is not key=value")))?;
            if kv.insert(k.trim(), v.trim()).is_some() {
                return Err(bad(format!("key {k:?} given twice")));
            }
        }
        let mut take = |key: &str, default: Option<&str>| -> Result<String> {
            kv.remove(key)
                .or(default)
                .map(str::to_owned)
                .ok_or_else(|| bad(format!("missing {key}")))
        };
        fn num<T: FromStr>(key: &str, v: String, bad: &dyn Fn(String) -> Error) -> Result<T> {
            v.parse().map_err(|_| bad(format!("invalid {key} {v:?}")))
        }
        let n = num("n", take("n", None)?, &bad)?;
        let nnzr = num("nnzr", take("nnzr", None)?, &bad)?;
        let seed = num("seed", take("seed", Some("0"))?, &bad)?;
        let kind = match kind {
            "banded" => GenKind::BandedRandom {
                halfwidth: num("halfwidth", take("halfwidth", None)?, &bad)?,
            },
            "block" => GenKind::BlockCoupled {
                blocks: num("blocks", take("blocks", None)?, &bad)?,
                coupling: num("coupling", take("coupling", None)?, &bad)?,
            },
            other => return Err(bad(format!("unknown kind {other:?}, expected banded|block"))),
        };
        if let Some(k) = kv.keys().next() {
            return Err(bad(format!("unknown key {k:?}")));
        }
        Ok(Self { kind, n, nnzr, seed })
    }
}

/// Entries in row `i`: the integer part of `nnzr`, plus one with probability
/// equal to its fractional part.
fn row_count(rng: &mut ChaCha8Rng, nnzr: f64) -> usize {
    let whole = nnzr.floor();
    whole as usize + usize::from(rng.gen_bool(nnzr - whole))
}

/// Generates the matrix described by `spec`. Every row holds its diagonal
/// and columns are sorted within each row.
pub fn generate(spec: &GenSpec) -> Result<CrsMatrix> {
    spec.validate()?;
    let n = spec.n;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut row_ptr = Vec::with_capacity(n + 1);
    row_ptr.push(0);
    let mut col_idx = Vec::with_capacity((spec.nnzr.ceil() as usize) * n);
    let mut cols = Vec::new();

    for i in 0..n {
        let k = row_count(&mut rng, spec.nnzr);
        cols.clear();
        cols.push(i);
        match spec.kind {
            GenKind::BandedRandom { halfwidth } => {
                let lo = i.saturating_sub(halfwidth);
                let hi = (i + halfwidth).min(n - 1);
                // Candidates are the band minus the diagonal.
                let width = hi - lo;
                for s in sample(&mut rng, width, k - 1) {
                    let c = lo + s;
                    cols.push(if c >= i { c + 1 } else { c });
                }
            }
            GenKind::BlockCoupled { blocks, coupling } => {
                let b = i * blocks / n;
                let b = if block_range(n, blocks, b).contains(&i) { b } else { b + 1 };
                let own = block_range(n, blocks, b);
                let outside = (0..k - 1).filter(|_| coupling > 0.0 && rng.gen_bool(coupling)).count();
                for s in sample(&mut rng, own.len() - 1, k - 1 - outside) {
                    let c = own.start + s;
                    cols.push(if c >= i { c + 1 } else { c });
                }
                for s in sample(&mut rng, n - own.len(), outside) {
                    cols.push(if s >= own.start { s + own.len() } else { s });
                }
            }
        }
        cols.sort_unstable();
        col_idx.extend(cols.iter().map(|&c| c as u32));
        row_ptr.push(col_idx.len());
    }
    let val = (0..col_idx.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    CrsMatrix::new(n, n, row_ptr, col_idx, val)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_band_is_diagonal() {
        let a = generate(&GenSpec::banded(50, 1.0, 0, 7)).unwrap();
        assert_eq!(a.nnz(), 50);
        for i in 0..50 {
            assert_eq!(a.row(i).0, [i as u32]);
        }
    }

    #[test]
    fn deterministic_in_seed() {
        for spec in [GenSpec::banded(500, 7.5, 20, 3), GenSpec::block(500, 9.0, 5, 0.1, 3)] {
            let a = generate(&spec).unwrap();
            assert_eq!(a, generate(&spec).unwrap());
            let mut other = spec;
            other.seed += 1;
            assert_ne!(a, generate(&other).unwrap());
        }
    }

    #[test]
    fn realized_nnzr_near_target() {
        for spec in [GenSpec::banded(10_000, 15.0, 60, 1), GenSpec::block(10_000, 15.0, 16, 0.1, 1), GenSpec::banded(10_000, 7.3, 10, 2)] {
            let a = generate(&spec).unwrap();
            let got = a.nnzr();
            assert!((got - spec.nnzr).abs() <= 0.05 * spec.nnzr, "{spec}: {got}");
        }
    }

    #[test]
    fn banded_entries_stay_in_band_with_diagonal() {
        let a = generate(&GenSpec::banded(300, 9.0, 8, 4)).unwrap();
        for i in 0..300 {
            let cols = a.row(i).0;
            assert!(cols.contains(&(i as u32)));
            assert!(cols.windows(2).all(|w| w[0] < w[1]));
            assert!(cols.iter().all(|&c| (c as usize).abs_diff(i) <= 8));
        }
    }

    #[test]
    fn uncoupled_blocks_stay_diagonal() {
        let a = generate(&GenSpec::block(120, 6.0, 4, 0.0, 9)).unwrap();
        for i in 0..120 {
            assert!(a.row(i).0.iter().all(|&c| c as usize / 30 == i / 30));
        }
    }

    #[test]
    fn coupling_fraction_roughly_realized() {
        let a = generate(&GenSpec::block(4000, 11.0, 8, 0.2, 5)).unwrap();
        let outside = (0..4000)
            .flat_map(|i| a.row(i).0.iter().map(move |&c| (i, c as usize)))
            .filter(|&(i, c)| i / 500 != c / 500)
            .count();
        let frac = outside as f64 / (a.nnz() - 4000) as f64;
        assert!((frac - 0.2).abs() < 0.02, "{frac}");
    }

    #[test]
    fn infeasible_specs_rejected() {
        for spec in [
            GenSpec::banded(100, 12.0, 5, 0),
            GenSpec::banded(100, 0.5, 5, 0),
            GenSpec::banded(0, 1.0, 5, 0),
            GenSpec::block(100, 30.0, 4, 0.1, 0),
            GenSpec::block(100, 3.0, 1, 0.1, 0),
            GenSpec::block(100, 3.0, 4, 1.5, 0),
            GenSpec::block(10, 1.0, 11, 0.0, 0),
        ] {
            assert!(matches!(generate(&spec), Err(Error::Contract(_))), "{spec}");
        }
    }

    #[test]
    fn spec_text_round_trip() {
        for spec in [GenSpec::banded(2000, 15.0, 40, 99), GenSpec::block(300, 7.5, 3, 0.05, 1)] {
            assert_eq!(spec.to_string().parse::<GenSpec>().unwrap(), spec);
        }
        let s: GenSpec = "banded:n=10,nnzr=3,halfwidth=2".parse().unwrap();
        assert_eq!(s.seed, 0);
        for bad in ["banded", "banded:n=10", "ring:n=1,nnzr=1", "banded:n=10,nnzr=3,halfwidth=2,foo=1", "banded:n=x,nnzr=3,halfwidth=2"] {
            assert!(bad.parse::<GenSpec>().is_err(), "{bad}");
        }
    }
}
