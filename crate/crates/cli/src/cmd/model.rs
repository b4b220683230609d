use anyhow::Result;
use clap::Args;
use serde::{Deserialize, Serialize};
use spmv_core::model::ModelConfig;
use spmv_core::model::{perf_bound, ModelInput};

use crate::output::{write_record, Format, Sink};

#[derive(Clone, Debug, Args)]
pub struct ModelArgs {
    /// Average nonzeros per row.
    #[arg(long)]
    pub nnzr: f64,
    /// Memory bandwidth, GB/s.
    #[arg(long)]
    pub bandwidth: f64,
    /// Extra RHS traffic per inner iteration, bytes.
    #[arg(long, default_value_t = 0.0)]
    pub kappa: f64,
    /// Measured performance, GFlop/s; adds a kappa estimate.
    #[arg(long)]
    pub perf: Option<f64>,
    /// Bytes per column index.
    #[arg(long, default_value_t = 4.0)]
    pub index_bytes: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub nnzr: f64,
    pub kappa: f64,
    pub bandwidth: f64,
    pub index_bytes: f64,
    /// bytes/flop
    pub balance: f64,
    pub balance_split: f64,
    /// GFlop/s
    pub bound: f64,
    pub bound_split: f64,
    pub split_penalty: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perf: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa_estimate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa_inconsistent: Option<bool>,
}

pub fn model_report(args: &ModelArgs) -> Result<ModelReport> {
    let cfg = ModelConfig {
        index_bytes: args.index_bytes,
    };
    anyhow::ensure!(args.index_bytes > 0.0, "index bytes must be positive");
    let out = ModelInput::new(args.nnzr, args.kappa, args.bandwidth)?.evaluate(&cfg)?;
    let balance_split = cfg.code_balance_split(args.nnzr, args.kappa)?;
    let estimate = args
        .perf
        .map(|perf| cfg.estimate_kappa(perf, args.bandwidth, args.nnzr))
        .transpose()?;
    Ok(ModelReport {
        nnzr: args.nnzr,
        kappa: args.kappa,
        bandwidth: args.bandwidth,
        index_bytes: args.index_bytes,
        balance: out.balance,
        balance_split,
        bound: out.bound,
        bound_split: perf_bound(args.bandwidth, balance_split)?,
        split_penalty: cfg.split_penalty(args.nnzr, args.kappa)?,
        perf: args.perf,
        kappa_estimate: estimate.map(|e| e.kappa),
        kappa_inconsistent: estimate.map(|e| e.inconsistent),
    })
}

pub fn cmd_model(args: &ModelArgs, out: &Sink) -> Result<()> {
    let report = model_report(args)?;
    if report.kappa_inconsistent == Some(true) {
        eprintln!("warning: measured performance exceeds the bandwidth bound; kappa estimate is negative");
    }
    write_record(out.open("model.txt")?, "model", out.format_or(Format::Text), &report)
}
