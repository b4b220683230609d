//! Memory-traffic (code balance) model for the CRS kernel.
//!
//! Units: bandwidth in GB/s and performance in GFlop/s, both decimal
//! (1 GB/s = 1e9 byte/s), as in STREAM. Per inner-loop iteration the kernel
//! moves `val` (8 bytes), `col_idx` (4 bytes by default), the result update
//! amortized over a row (16 bytes / n_nzr), one pass over the RHS
//! (8 bytes / n_nzr) and `kappa` bytes of RHS reloads, for 2 flops.
//! The split kernel writes the result twice, adding another 16 bytes / n_nzr.

use std::time::Instant;

use crate::error::{contract, Error, Result};

/// Bytes per stored value.
const VALUE_BYTES: f64 = 8.0;
/// Result update per row: write-allocate plus evict.
const RESULT_BYTES_PER_ROW: f64 = 16.0;
/// Minimum RHS load per row.
const RHS_BYTES_PER_ROW: f64 = 8.0;
const FLOPS_PER_ENTRY: f64 = 2.0;

/// Model constants. The default matches 4-byte column indices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    pub index_bytes: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { index_bytes: 4.0 }
    }
}

/// Inputs to one model evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelInput {
    pub n_nzr: f64,
    pub kappa: f64,
    /// GB/s
    pub bandwidth: f64,
}

impl ModelInput {
    pub fn new(n_nzr: f64, kappa: f64, bandwidth: f64) -> Result<Self> {
        check_nnzr_kappa(n_nzr, kappa)?;
        contract!(bandwidth > 0.0, "bandwidth must be positive, got {bandwidth}");
        Ok(Self {
            n_nzr,
            kappa,
            bandwidth,
        })
    }

    pub fn evaluate(&self, cfg: &ModelConfig) -> Result<ModelOutput> {
        let balance = cfg.code_balance(self.n_nzr, self.kappa)?;
        Ok(ModelOutput {
            balance,
            bound: perf_bound(self.bandwidth, balance)?,
        })
    }
}

/// Code balance (bytes/flop) and the bandwidth-derived bound (GFlop/s).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelOutput {
    pub balance: f64,
    pub bound: f64,
}

/// A kappa derived from measurements. A negative value means the measured
/// performance exceeds what the bandwidth allows and is flagged, not clamped.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KappaEstimate {
    pub kappa: f64,
    pub inconsistent: bool,
}

fn check_nnzr_kappa(n_nzr: f64, kappa: f64) -> Result<()> {
    contract!(
        n_nzr > 0.0 && n_nzr.is_finite(),
        "n_nzr must be positive, got {n_nzr}"
    );
    contract!(
        kappa >= 0.0 && kappa.is_finite(),
        "kappa must be nonnegative, got {kappa}"
    );
    Ok(())
}

impl ModelConfig {
    /// Bytes per inner iteration independent of the row length.
    fn fixed_bytes(&self) -> f64 {
        VALUE_BYTES + self.index_bytes
    }

    pub fn code_balance(&self, n_nzr: f64, kappa: f64) -> Result<f64> {
        check_nnzr_kappa(n_nzr, kappa)?;
        let per_row = RESULT_BYTES_PER_ROW + RHS_BYTES_PER_ROW;
        Ok((self.fixed_bytes() + per_row / n_nzr + kappa) / FLOPS_PER_ENTRY)
    }

    pub fn code_balance_split(&self, n_nzr: f64, kappa: f64) -> Result<f64> {
        check_nnzr_kappa(n_nzr, kappa)?;
        let per_row = 2.0 * RESULT_BYTES_PER_ROW + RHS_BYTES_PER_ROW;
        Ok((self.fixed_bytes() + per_row / n_nzr + kappa) / FLOPS_PER_ENTRY)
    }

    pub fn estimate_kappa(&self, perf: f64, bandwidth: f64, n_nzr: f64) -> Result<KappaEstimate> {
        contract!(perf > 0.0, "performance must be positive, got {perf}");
        contract!(bandwidth > 0.0, "bandwidth must be positive, got {bandwidth}");
        contract!(n_nzr > 0.0, "n_nzr must be positive, got {n_nzr}");
        let measured_balance = bandwidth / perf;
        let kappa = FLOPS_PER_ENTRY * measured_balance
            - self.fixed_bytes()
            - (RESULT_BYTES_PER_ROW + RHS_BYTES_PER_ROW) / n_nzr;
        Ok(KappaEstimate {
            kappa,
            inconsistent: kappa < 0.0,
        })
    }

    pub fn split_penalty(&self, n_nzr: f64, kappa: f64) -> Result<f64> {
        Ok(self.code_balance_split(n_nzr, kappa)? / self.code_balance(n_nzr, kappa)? - 1.0)
    }
}

/// `6 + 12/n_nzr + kappa/2` bytes per flop.
pub fn code_balance(n_nzr: f64, kappa: f64) -> Result<f64> {
    ModelConfig::default().code_balance(n_nzr, kappa)
}

/// `6 + 20/n_nzr + kappa/2` bytes per flop: the result vector is written twice.
pub fn code_balance_split(n_nzr: f64, kappa: f64) -> Result<f64> {
    ModelConfig::default().code_balance_split(n_nzr, kappa)
}

/// Upper performance limit in GFlop/s for a bandwidth in GB/s.
pub fn perf_bound(bandwidth: f64, balance: f64) -> Result<f64> {
    contract!(bandwidth > 0.0, "bandwidth must be positive, got {bandwidth}");
    contract!(balance > 0.0, "code balance must be positive, got {balance}");
    Ok(bandwidth / balance)
}

/// Inverts the balance model: the RHS reload traffic implied by a measured
/// performance (GFlop/s) at a measured bandwidth (GB/s).
pub fn estimate_kappa(perf: f64, bandwidth: f64, n_nzr: f64) -> Result<KappaEstimate> {
    ModelConfig::default().estimate_kappa(perf, bandwidth, n_nzr)
}

/// Predicted relative slowdown of the split kernel.
pub fn split_penalty(n_nzr: f64, kappa: f64) -> Result<f64> {
    ModelConfig::default().split_penalty(n_nzr, kappa)
}

/// Outcome of a triad run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TriadResult {
    /// GB/s counting four array transfers per iteration (write-allocate included).
    pub bandwidth: f64,
    /// GB/s counting only the three arrays the loop names.
    pub naive_bandwidth: f64,
    /// Best time of one sweep, seconds (slowest worker).
    pub best_seconds: f64,
    /// The working set was too small to leave the caches.
    pub cache_tainted: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct TriadConfig {
    pub array_length: usize,
    pub repetitions: usize,
    pub workers: usize,
    /// Results are flagged when all arrays fit in fewer than 4x this many bytes.
    pub cache_bytes_hint: usize,
}

impl Default for TriadConfig {
    fn default() -> Self {
        Self {
            array_length: 1 << 23,
            repetitions: 5,
            workers: 1,
            cache_bytes_hint: 32 << 20,
        }
    }
}

/// Converts a sweep time into (corrected, naive) GB/s.
pub fn triad_bandwidth(array_length: usize, workers: usize, seconds: f64) -> (f64, f64) {
    let per_array = (array_length * workers * std::mem::size_of::<f64>()) as f64;
    (4.0 * per_array / seconds / 1e9, 3.0 * per_array / seconds / 1e9)
}

fn try_alloc(len: usize, fill: f64) -> Result<Vec<f64>> {
    let mut v = Vec::new();
    v.try_reserve_exact(len)
        .map_err(|e| Error::Resource(format!("cannot allocate {len} doubles: {e}")))?;
    v.resize(len, fill);
    Ok(v)
}

fn triad_worker(len: usize, reps: usize) -> Result<f64> {
    let mut a = try_alloc(len, 0.0)?;
    let b = try_alloc(len, 1.0)?;
    let c = try_alloc(len, 2.0)?;
    let s = 3.0;
    let mut best = f64::INFINITY;
    for _ in 0..reps {
        let t = Instant::now();
        for ((ai, bi), ci) in a.iter_mut().zip(&b).zip(&c) {
            *ai = bi + s * ci;
        }
        std::hint::black_box(&mut a);
        best = best.min(t.elapsed().as_secs_f64());
    }
    Ok(best)
}

/// Runs `a(i) = b(i) + s*c(i)` and reports best-of-repetitions bandwidth.
/// With several workers each owns its arrays; the slowest worker's best
/// time sets the aggregate.
pub fn measure_triad_bandwidth(cfg: &TriadConfig) -> Result<TriadResult> {
    contract!(cfg.array_length > 0, "array length must be positive");
    contract!(cfg.repetitions > 0, "need at least one repetition");
    contract!(cfg.workers > 0, "need at least one worker");
    let times: Vec<Result<f64>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..cfg.workers)
            .map(|_| s.spawn(|| triad_worker(cfg.array_length, cfg.repetitions)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Resource("triad worker panicked".into()))))
            .collect()
    });
    let mut best_seconds: f64 = 0.0;
    for t in times {
        best_seconds = best_seconds.max(t?);
    }
    let best_seconds = best_seconds.max(f64::MIN_POSITIVE);
    let (bandwidth, naive_bandwidth) = triad_bandwidth(cfg.array_length, cfg.workers, best_seconds);
    let working_set = 3 * cfg.array_length * cfg.workers * std::mem::size_of::<f64>();
    Ok(TriadResult {
        bandwidth,
        naive_bandwidth,
        best_seconds,
        cache_tainted: working_set < 4 * cfg.cache_bytes_hint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn balance_reference_values() {
        assert!(close(code_balance(15.0, 0.0).unwrap(), 6.8, 1e-12));
        // 6 + 12/7 computed independently as 54/7.
        assert!(close(code_balance(7.0, 0.0).unwrap(), 54.0 / 7.0, 1e-12));
        assert!(close(code_balance(1e12, 0.0).unwrap(), 6.0, 1e-9));
        assert!(close(code_balance_split(15.0, 0.0).unwrap(), 22.0 / 3.0, 1e-12));
        assert!(close(code_balance_split(7.0, 0.0).unwrap(), 62.0 / 7.0, 1e-12));
    }

    #[test]
    fn split_difference_is_eight_over_nnzr() {
        for &n in &[1.0, 7.0, 15.0, 123.0, 0.5] {
            for &k in &[0.0, 2.5, 10.0] {
                let d = code_balance_split(n, k).unwrap() - code_balance(n, k).unwrap();
                assert!(close(d, 8.0 / n, 1e-12), "{n} {k}");
            }
        }
    }

    #[test]
    fn bounds_match_published_figures() {
        let b = code_balance(15.0, 0.0).unwrap();
        assert!(close(perf_bound(18.1, b).unwrap(), 2.66, 0.01));
        assert!(close(perf_bound(21.2, b).unwrap(), 3.12, 0.01));
        assert_eq!(perf_bound(3.5, 3.5).unwrap(), 1.0);
    }

    #[test]
    fn kappa_from_published_measurements() {
        let k = estimate_kappa(2.25, 18.1, 15.0).unwrap();
        assert!(close(k.kappa, 2.49, 0.005), "{}", k.kappa);
        assert!(!k.inconsistent);
        let k = estimate_kappa(2.99, 18.9, 123.0).unwrap();
        assert!(close(k.kappa, 0.447, 0.001), "{}", k.kappa);
        let at_bound = perf_bound(18.1, code_balance(15.0, 0.0).unwrap()).unwrap();
        assert!(estimate_kappa(at_bound, 18.1, 15.0).unwrap().kappa.abs() < 1e-12);
    }

    #[test]
    fn negative_kappa_is_flagged() {
        let k = estimate_kappa(5.0, 18.1, 15.0).unwrap();
        assert!(k.kappa < 0.0);
        assert!(k.inconsistent);
    }

    #[test]
    fn penalty_range_endpoints() {
        assert!(close(split_penalty(7.0, 0.0).unwrap(), 0.1481, 1e-4));
        assert!(close(split_penalty(15.0, 0.0).unwrap(), 0.0784, 1e-4));
        assert!(split_penalty(15.0, 1e6).unwrap() < 1e-5);
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(code_balance(0.0, 0.0), Err(Error::Contract(_))));
        assert!(code_balance(-1.0, 0.0).is_err());
        assert!(code_balance(5.0, -0.1).is_err());
        assert!(code_balance_split(0.0, 0.0).is_err());
        assert!(perf_bound(0.0, 6.8).is_err());
        assert!(perf_bound(1.0, -6.8).is_err());
        assert!(estimate_kappa(0.0, 18.1, 15.0).is_err());
        assert!(ModelInput::new(15.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn wide_index_knob() {
        let wide = ModelConfig { index_bytes: 8.0 };
        // (8 + 8 + 24/15) / 2
        assert!(close(wide.code_balance(15.0, 0.0).unwrap(), 8.8, 1e-12));
        assert!(close(
            wide.code_balance_split(15.0, 0.0).unwrap() - wide.code_balance(15.0, 0.0).unwrap(),
            8.0 / 15.0,
            1e-12
        ));
        let out = ModelInput::new(15.0, 0.0, 18.1).unwrap().evaluate(&wide).unwrap();
        assert!(close(out.bound, 18.1 / 8.8, 1e-12));
    }

    #[test]
    fn triad_accounting_identity() {
        let (corrected, naive) = triad_bandwidth(1000, 2, 1e-3);
        assert!(close(corrected / naive, 4.0 / 3.0, 1e-12));
        assert!(close(naive, 3.0 * 8.0 * 2000.0 / 1e-3 / 1e9, 1e-9));
    }

    #[test]
    fn small_triad_is_cache_tainted() {
        let r = measure_triad_bandwidth(&TriadConfig {
            array_length: 1024,
            repetitions: 3,
            workers: 1,
            cache_bytes_hint: 1 << 20,
        })
        .unwrap();
        assert!(r.cache_tainted);
        assert!(r.bandwidth > 0.0);
        assert!(close(r.bandwidth / r.naive_bandwidth, 4.0 / 3.0, 1e-12));
        let r = measure_triad_bandwidth(&TriadConfig {
            array_length: 1024,
            repetitions: 1,
            workers: 2,
            cache_bytes_hint: 1000,
        })
        .unwrap();
        assert!(!r.cache_tainted);
    }

    proptest! {
        #[test]
        fn balance_monotone(n in 0.1f64..1000.0, dn in 0.01f64..100.0, k in 0.0f64..50.0, dk in 0.01f64..50.0) {
            prop_assert!(code_balance(n + dn, k).unwrap() < code_balance(n, k).unwrap());
            prop_assert!(code_balance(n, k + dk).unwrap() > code_balance(n, k).unwrap());
            prop_assert!(split_penalty(n + dn, k).unwrap() < split_penalty(n, k).unwrap());
            prop_assert!(split_penalty(n, k + dk).unwrap() < split_penalty(n, k).unwrap());
            prop_assert!(code_balance(n, 0.0).unwrap() >= 6.0);
        }

        #[test]
        fn kappa_round_trip(n in 0.5f64..1000.0, k in 0.0f64..100.0, b in 0.1f64..1000.0) {
            let bound = perf_bound(b, code_balance(n, k).unwrap()).unwrap();
            let est = estimate_kappa(bound, b, n).unwrap().kappa;
            prop_assert!((est - k).abs() <= 1e-12, "{} vs {}", est, k);
        }
    }
}
