//! Distributed execution schemes and their phase-level instrumentation.
//!
//! * [`run_vector_noovl`]: exchange the halo, then multiply. No overlap.
//! * [`run_vector_naive`]: post the exchange, multiply the local part while
//!   it is (hopefully) in flight, wait, then multiply the remote part.
//! * [`run_task_mode`]: one communication agent per rank drives the exchange
//!   while compute workers assemble send buffers and multiply the local part.
//!
//! Every rank times each phase of every iteration into a [`PhaseTimings`].

mod cost;
mod modes;

pub use cost::{percentile, summarize_costs, CostSummary, PERCENTILES};
pub use modes::{run_task_mode, run_vector_naive, run_vector_noovl};

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use crate::error::{contract, Error, Result};
use crate::partition::{build_comm_plans, build_workset, communication_volume, partition_rows, BalancePolicy, CommVolume, Partition};
use crate::sparse::{spmv_full, CrsMatrix};
use crate::transport::{LocalTransport, Rank, TransportConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    RecvPost,
    BufferAssembly,
    SendPost,
    WaitAll,
    LocalCompute,
    NonlocalCompute,
    FullCompute,
    ParallelRegion,
}

impl Phase {
    pub const ALL: [Phase; 8] = [
        Phase::RecvPost,
        Phase::BufferAssembly,
        Phase::SendPost,
        Phase::WaitAll,
        Phase::LocalCompute,
        Phase::NonlocalCompute,
        Phase::FullCompute,
        Phase::ParallelRegion,
    ];

    /// Short label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            Phase::RecvPost => "ir",
            Phase::BufferAssembly => "ca",
            Phase::SendPost => "is",
            Phase::WaitAll => "wa",
            Phase::LocalCompute => "lc",
            Phase::NonlocalCompute => "nl",
            Phase::FullCompute => "fc",
            Phase::ParallelRegion => "pr",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Phase::ALL
            .into_iter()
            .find(|p| p.label() == s)
            .ok_or_else(|| Error::Contract(format!("unknown phase label {s:?}")))
    }
}

/// Wall time of each phase of one iteration on one rank.
///
/// Phases that the executed mode does not have are `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseTimings {
    pub rank: Rank,
    pub iteration: usize,
    phases: [Option<f64>; 8],
    /// Barrier exit to end of the iteration, seconds.
    pub iteration_seconds: f64,
}

impl PhaseTimings {
    pub fn new(rank: Rank, iteration: usize) -> Self {
        Self {
            rank,
            iteration,
            phases: [None; 8],
            iteration_seconds: 0.0,
        }
    }

    pub fn get(&self, phase: Phase) -> Option<f64> {
        self.phases[phase.index()]
    }

    pub fn set(&mut self, phase: Phase, seconds: f64) {
        debug_assert!(seconds >= 0.0);
        self.phases[phase.index()] = Some(seconds);
    }

    /// Populated phases in declaration order.
    pub fn iter(&self) -> impl Iterator<Item = (Phase, f64)> + '_ {
        Phase::ALL.into_iter().filter_map(|p| self.get(p).map(|s| (p, s)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    VectorNoovl,
    VectorNaive,
    Task,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::VectorNoovl, Mode::VectorNaive, Mode::Task];

    pub fn label(self) -> &'static str {
        match self {
            Mode::VectorNoovl => "noovl",
            Mode::VectorNaive => "naive",
            Mode::Task => "task",
        }
    }

    /// Whether the mode multiplies with a split (local/remote) workset.
    pub fn uses_split(self) -> bool {
        !matches!(self, Mode::VectorNoovl)
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| Error::Contract(format!("unknown mode {s:?}, expected noovl|naive|task")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunOptions {
    pub iterations: usize,
    /// Compute workers per rank.
    pub workers: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            iterations: 1,
            workers: 1,
        }
    }
}

impl RunOptions {
    pub fn validate(&self) -> Result<()> {
        contract!(self.iterations >= 1, "at least one iteration is required");
        contract!(self.workers >= 1, "at least one compute worker is required");
        Ok(())
    }
}

/// Output of one rank.
#[derive(Clone, Debug)]
pub struct RankRun {
    /// Owned result slice after the last iteration.
    pub y: Vec<f64>,
    pub timings: Vec<PhaseTimings>,
    /// Hash of the result bits after each iteration.
    pub checksums: Vec<u64>,
}

impl RankRun {
    fn with_capacity(iterations: usize) -> Self {
        Self {
            y: Vec::new(),
            timings: Vec::with_capacity(iterations),
            checksums: Vec::with_capacity(iterations),
        }
    }

    fn record(&mut self, timings: PhaseTimings, y: &[f64]) {
        let mut h = DefaultHasher::new();
        for v in y {
            v.to_bits().hash(&mut h);
        }
        self.timings.push(timings);
        self.checksums.push(h.finish());
    }

    /// True if every iteration produced bit-identical results.
    pub fn iterations_agree(&self) -> bool {
        self.checksums.windows(2).all(|w| w[0] == w[1])
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistConfig {
    pub ranks: usize,
    pub policy: BalancePolicy,
    pub mode: Mode,
    pub run: RunOptions,
    pub transport: TransportConfig,
}

impl Default for DistConfig {
    fn default() -> Self {
        Self {
            ranks: 1,
            policy: BalancePolicy::Nonzeros,
            mode: Mode::VectorNoovl,
            run: RunOptions::default(),
            transport: TransportConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DistRun {
    /// Global result, concatenated from the ranks' slices.
    pub y: Vec<f64>,
    pub partition: Partition,
    pub volume: CommVolume,
    /// All ranks' timings, ordered by rank then iteration.
    pub timings: Vec<PhaseTimings>,
    /// Per iteration, the slowest rank's time.
    pub iteration_seconds: Vec<f64>,
    /// Every rank produced bit-identical results in every iteration.
    pub iterations_agree: bool,
}

/// Partitions `a`, builds plans and worksets, and runs `cfg.mode` on
/// `cfg.ranks` in-process ranks.
pub fn run_distributed(a: &CrsMatrix, x: &[f64], cfg: &DistConfig) -> Result<DistRun> {
    cfg.run.validate()?;
    cfg.transport.validate()?;
    contract!(
        x.len() == a.n_cols(),
        "x has length {} but the matrix has {} columns",
        x.len(),
        a.n_cols()
    );
    let part = partition_rows(a, cfg.ranks, cfg.policy)?;
    let plans = build_comm_plans(a, &part)?;
    let volume = communication_volume(&plans);
    let mut worksets = (0..cfg.ranks)
        .map(|r| build_workset(a, &part, &plans[r], r, cfg.mode.uses_split()))
        .collect::<Result<Vec<_>>>()?;
    let endpoints = LocalTransport::create::<f64>(cfg.ranks, cfg.transport)?;

    let runs: Vec<Result<RankRun>> = std::thread::scope(|s| {
        let handles: Vec<_> = worksets
            .iter_mut()
            .zip(endpoints)
            .zip(&plans)
            .map(|((ws, mut ep), plan)| {
                let x_local = &x[part.rows(ws.rank())];
                let run = &cfg.run;
                s.spawn(move || match cfg.mode {
                    Mode::VectorNoovl => run_vector_noovl(ws, plan, &mut ep, x_local, run),
                    Mode::VectorNaive => run_vector_naive(ws, plan, &mut ep, x_local, run),
                    Mode::Task => run_task_mode(ws, plan, &mut ep, x_local, run),
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Internal("rank thread panicked".into()))))
            .collect()
    });

    let mut y = Vec::with_capacity(a.n_rows());
    let mut timings = Vec::new();
    let mut iteration_seconds = vec![0.0f64; cfg.run.iterations];
    let mut iterations_agree = true;
    for run in runs {
        let run = run?;
        iterations_agree &= run.iterations_agree();
        for t in &run.timings {
            iteration_seconds[t.iteration] = iteration_seconds[t.iteration].max(t.iteration_seconds);
        }
        y.extend_from_slice(&run.y);
        timings.extend(run.timings);
    }
    Ok(DistRun {
        y,
        partition: part,
        volume,
        timings,
        iteration_seconds,
        iterations_agree,
    })
}

/// Largest deviation of `y` from the serial product, relative to the
/// per-row magnitude `max_row_nnz * sum_j |a_ij x_j|`.
///
/// `bitwise` demands exact equality instead. Returns the observed deviation,
/// or an internal error if the check fails.
pub fn check_against_serial(a: &CrsMatrix, x: &[f64], y: &[f64], bitwise: bool) -> Result<f64> {
    let mut serial = vec![0.0; a.n_rows()];
    spmv_full(a, x, &mut serial, false)?;
    contract!(y.len() == serial.len(), "result has length {}, expected {}", y.len(), serial.len());
    let tol = 1e-13;
    let scale_rows = a.max_row_nnz().max(1) as f64;
    let mut worst = 0.0f64;
    for (i, (&p, &q)) in y.iter().zip(&serial).enumerate() {
        if bitwise {
            if p.to_bits() != q.to_bits() {
                return Err(Error::Internal(format!("row {i}: {p:e} differs bitwise from serial {q:e}")));
            }
            continue;
        }
        let (cols, vals) = a.row(i);
        let mag: f64 = cols.iter().zip(vals).map(|(&c, v)| (v * x[c as usize]).abs()).sum();
        let dev = (p - q).abs();
        if dev == 0.0 {
            continue;
        }
        let rel = dev / (scale_rows * mag);
        if rel.is_nan() || rel > tol {
            return Err(Error::Internal(format!(
                "row {i}: {p:e} vs serial {q:e}, relative deviation {rel:e} exceeds {tol:e}"
            )));
        }
        worst = worst.max(rel);
    }
    Ok(worst)
}
