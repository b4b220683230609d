use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;
use spmv_core::exec::{check_against_serial, percentile, summarize_costs, PERCENTILES};
use spmv_core::transport::DEFAULT_EAGER_THRESHOLD;
use spmv_core::{run_distributed, BalancePolicy, CrsMatrix, DistConfig, DistRun, Mode, RunOptions, TransportConfig};

use super::{default_rhs, load_matrix};
use crate::output::{write_csv, write_json, Format, Sink};
use crate::scaling::{half_efficiency_marker, parallel_efficiency};
use crate::OnOff;

const DEFAULT_DIR: &str = "spmv-results";
const RUN_WARNING: usize = 1000;

#[derive(Clone, Debug, Args)]
pub struct BenchArgs {
    /// Matrix Market file or generator spec.
    #[arg(long)]
    pub matrix: String,
    /// Execution modes: noovl, naive, task.
    #[arg(long, value_delimiter = ',', default_value = "noovl")]
    pub mode: Vec<Mode>,
    /// Rank counts to sweep.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub ranks: Vec<usize>,
    /// Compute workers per rank.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// nnz | rows
    #[arg(long, default_value = "nnz")]
    pub policy: BalancePolicy,
    #[arg(long, default_value_t = 10)]
    pub iterations: usize,
    /// Background progress of nonblocking transfers.
    #[arg(long = "async", value_enum, default_value = "off")]
    pub async_progress: OnOff,
    /// Synthetic transfer bandwidth, GB/s. Instant delivery without it.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Messages below this many bytes are sent eagerly.
    #[arg(long, default_value_t = DEFAULT_EAGER_THRESHOLD)]
    pub eager_threshold: usize,
    /// Seed for generated matrices whose spec has none.
    #[arg(long, env = "SPMV_SEED")]
    pub seed: Option<u64>,
    /// Ranks sharing one node, for cost accounting.
    #[arg(long, default_value_t = 1)]
    pub ranks_per_node: usize,
    /// Compare every result against the serial product.
    #[arg(long)]
    pub check: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRow {
    pub run_id: usize,
    pub mode: String,
    pub ranks: usize,
    pub workers: usize,
    pub rank: usize,
    pub iteration: usize,
    pub phase: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostRow {
    pub run_id: usize,
    pub mode: String,
    pub ranks: usize,
    pub workers: usize,
    pub nodes: usize,
    pub phase: String,
    /// Ranks that executed the phase.
    pub executed: usize,
    pub p10: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p90: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingRow {
    pub run_id: usize,
    pub mode: String,
    pub ranks: usize,
    pub workers: usize,
    pub policy: String,
    pub nodes: usize,
    pub nnz: usize,
    pub iterations: usize,
    pub total_seconds: f64,
    pub median_iteration_seconds: f64,
    /// GFlop/s over all iterations.
    pub gflops: f64,
    /// GFlop/s of the median iteration.
    pub gflops_median: f64,
    /// Relative to the smallest rank count of the same mode.
    pub efficiency: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct BenchReport {
    pub scaling: Vec<ScalingRow>,
    pub costs: Vec<CostRow>,
    pub iterations: Vec<IterationRow>,
    /// Per mode, the smallest rank count below half efficiency.
    pub half_efficiency: Vec<(String, Option<usize>)>,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    percentile(&v, 50.0)
}

fn validate(args: &BenchArgs) -> Result<()> {
    anyhow::ensure!(!args.mode.is_empty(), "at least one mode is required");
    anyhow::ensure!(!args.ranks.is_empty(), "at least one rank count is required");
    anyhow::ensure!(args.ranks.iter().all(|&p| p >= 1), "rank counts must be positive");
    anyhow::ensure!(args.ranks_per_node >= 1, "ranks per node must be positive");
    RunOptions {
        iterations: args.iterations,
        workers: args.workers,
    }
    .validate()?;
    transport(args).validate()?;
    let runs = args.mode.len() * args.ranks.len();
    if runs > RUN_WARNING {
        eprintln!("warning: {runs} runs requested");
    }
    Ok(())
}

fn transport(args: &BenchArgs) -> TransportConfig {
    TransportConfig {
        async_progress: args.async_progress.into(),
        synthetic_bandwidth: args.bandwidth,
        eager_threshold: args.eager_threshold,
    }
}

fn record(report: &mut BenchReport, run_id: usize, cfg: &DistConfig, nodes: usize, nnz: usize, run: &DistRun) -> Result<()> {
    let mode = cfg.mode.label().to_string();
    let workers = cfg.run.workers;
    for t in &run.timings {
        let row = |phase: &str, seconds| IterationRow {
            run_id,
            mode: mode.clone(),
            ranks: cfg.ranks,
            workers,
            rank: t.rank,
            iteration: t.iteration,
            phase: phase.to_string(),
            seconds,
        };
        report.iterations.extend(t.iter().map(|(p, s)| row(p.label(), s)));
        report.iterations.push(row("total", t.iteration_seconds));
    }

    let cost_row = |phase: String, executed, q: [f64; 5]| CostRow {
        run_id,
        mode: mode.clone(),
        ranks: cfg.ranks,
        workers,
        nodes,
        phase,
        executed,
        p10: q[0],
        p25: q[1],
        p50: q[2],
        p75: q[3],
        p90: q[4],
    };
    for c in summarize_costs(&run.timings, nodes)? {
        report
            .costs
            .push(cost_row(c.phase.label().to_string(), c.ranks, [c.p10, c.p25, c.p50, c.p75, c.p90]));
    }
    let mut totals = vec![(0.0, 0usize); cfg.ranks];
    for t in &run.timings {
        totals[t.rank].0 += t.iteration_seconds;
        totals[t.rank].1 += 1;
    }
    let mut costs: Vec<f64> = totals.iter().map(|&(s, c)| s / c as f64 * nodes as f64).collect();
    costs.sort_by(f64::total_cmp);
    report
        .costs
        .push(cost_row("total".into(), cfg.ranks, PERCENTILES.map(|p| percentile(&costs, p))));

    let total: f64 = run.iteration_seconds.iter().sum();
    let med = median(&run.iteration_seconds);
    let flops = 2.0 * nnz as f64;
    report.scaling.push(ScalingRow {
        run_id,
        mode,
        ranks: cfg.ranks,
        workers,
        policy: cfg.policy.to_string(),
        nodes,
        nnz,
        iterations: cfg.run.iterations,
        total_seconds: total,
        median_iteration_seconds: med,
        gflops: flops * cfg.run.iterations as f64 / total / 1e9,
        gflops_median: flops / med / 1e9,
        efficiency: f64::NAN,
    });
    Ok(())
}

fn fill_efficiency(report: &mut BenchReport, modes: &[Mode]) {
    for mode in modes {
        let idx: Vec<usize> = (0..report.scaling.len())
            .filter(|&i| report.scaling[i].mode == mode.label())
            .collect();
        let points: Vec<(usize, f64)> = idx
            .iter()
            .map(|&i| (report.scaling[i].ranks, report.scaling[i].gflops))
            .collect();
        for (&i, eff) in idx.iter().zip(parallel_efficiency(&points)) {
            report.scaling[i].efficiency = eff;
        }
        report
            .half_efficiency
            .push((mode.label().to_string(), half_efficiency_marker(&points)));
    }
}

/// Runs every (mode, ranks) combination on one matrix.
pub fn run_bench(args: &BenchArgs, a: &CrsMatrix) -> Result<BenchReport> {
    validate(args)?;
    let x = default_rhs(a.n_cols());
    let mut report = BenchReport::default();
    let mut run_id = 0;
    for &mode in &args.mode {
        for &ranks in &args.ranks {
            let cfg = DistConfig {
                ranks,
                policy: args.policy,
                mode,
                run: RunOptions {
                    iterations: args.iterations,
                    workers: args.workers,
                },
                transport: transport(args),
            };
            let run = run_distributed(a, &x, &cfg).with_context(|| format!("mode {mode}, {ranks} ranks"))?;
            if !run.iterations_agree {
                bail!("mode {mode}, {ranks} ranks: iterations produced different results");
            }
            if args.check {
                check_against_serial(a, &x, &run.y, false)
                    .with_context(|| format!("mode {mode}, {ranks} ranks: result check failed"))?;
            }
            let nodes = ranks.div_ceil(args.ranks_per_node);
            record(&mut report, run_id, &cfg, nodes, a.nnz(), &run)?;
            run_id += 1;
        }
    }
    fill_efficiency(&mut report, &args.mode);
    Ok(report)
}

pub fn cmd_bench(args: &BenchArgs, sink: &Sink) -> Result<BenchReport> {
    validate(args)?;
    let a = load_matrix(&args.matrix, args.seed)?;
    let report = run_bench(args, &a)?;

    let sink = Sink::new(Some(sink.dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_DIR))), sink.format);
    match sink.format_or(Format::Csv) {
        Format::Json => write_json(sink.open("bench.json")?, &report)?,
        Format::Csv | Format::Text => {
            write_csv(sink.open("iterations.csv")?, "iterations", &report.iterations)?;
            write_csv(sink.open("costs.csv")?, "costs", &report.costs)?;
            write_csv(sink.open("scaling.csv")?, "scaling", &report.scaling)?;
        }
    }

    println!("{:<6} {:>5} {:>12} {:>10} {:>10}", "mode", "ranks", "median_s", "gflops", "efficiency");
    for r in &report.scaling {
        println!(
            "{:<6} {:>5} {:>12.6} {:>10.4} {:>10.3}",
            r.mode, r.ranks, r.median_iteration_seconds, r.gflops, r.efficiency
        );
    }
    for (mode, marker) in &report.half_efficiency {
        match marker {
            Some(p) => println!("{mode}: efficiency below 0.5 from {p} ranks"),
            None => println!("{mode}: efficiency stays at or above 0.5"),
        }
    }
    eprintln!("results in {}", sink.dir.as_ref().expect("set above").display());
    Ok(report)
}
