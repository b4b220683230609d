use std::collections::BTreeMap;

use super::{Phase, PhaseTimings};
use crate::error::{contract, Result};
use crate::transport::Rank;

/// Percentile levels reported by [`summarize_costs`].
pub const PERCENTILES: [f64; 5] = [10.0, 25.0, 50.0, 75.0, 90.0];

/// Spread of one phase's cost over ranks.
#[derive(Clone, Debug, PartialEq)]
pub struct CostSummary {
    pub phase: Phase,
    /// Ranks that executed the phase.
    pub ranks: usize,
    pub p10: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p90: f64,
}

/// Linear-interpolation percentile of ascending `sorted` data: position
/// `h = (len - 1) * p / 100`, interpolated between its neighbors.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let h = (sorted.len() - 1) as f64 * p / 100.0;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Cost percentiles per phase across ranks.
///
/// A rank's duration for a phase is its mean over iterations; cost is that
/// duration times `node_count`. Phases no rank executed are omitted.
pub fn summarize_costs(timings: &[PhaseTimings], node_count: usize) -> Result<Vec<CostSummary>> {
    contract!(!timings.is_empty(), "no timings to summarize");
    contract!(node_count >= 1, "node count must be positive");
    let mut per_rank: BTreeMap<(Phase, Rank), (f64, usize)> = BTreeMap::new();
    for t in timings {
        for (phase, secs) in t.iter() {
            let e = per_rank.entry((phase, t.rank)).or_insert((0.0, 0));
            e.0 += secs;
            e.1 += 1;
        }
    }
    let mut out = Vec::new();
    for phase in Phase::ALL {
        let mut costs: Vec<f64> = per_rank
            .range((phase, 0)..=(phase, Rank::MAX))
            .map(|(_, &(sum, count))| sum / count as f64 * node_count as f64)
            .collect();
        if costs.is_empty() {
            continue;
        }
        costs.sort_by(f64::total_cmp);
        let [p10, p25, p50, p75, p90] = PERCENTILES.map(|p| percentile(&costs, p));
        out.push(CostSummary {
            phase,
            ranks: costs.len(),
            p10,
            p25,
            p50,
            p75,
            p90,
        });
    }
    Ok(out)
}
