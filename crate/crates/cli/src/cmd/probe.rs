use std::time::Duration;

use anyhow::Result;
use clap::Args;
use serde::Serialize;
use spmv_core::transport::{overlap_ratio, probe_overlap, Direction, ProbeParams};
use spmv_core::{LocalTransport, TransportConfig};

use crate::output::{write_table, Format, Sink};
use crate::OnOff;

#[derive(Clone, Debug, Args)]
pub struct ProbeArgs {
    /// Message size in bytes.
    #[arg(long, default_value_t = 80_000_000)]
    pub bytes: usize,
    /// Operation rank 0 posts nonblocking: send | recv
    #[arg(long, default_value = "recv")]
    pub direction: Direction,
    #[arg(long = "async", value_enum, default_value = "off")]
    pub async_progress: OnOff,
    /// Synthetic transfer bandwidth, GB/s.
    #[arg(long, default_value_t = 10.0)]
    pub bandwidth: f64,
    /// Busy-work durations, milliseconds.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,4,8,16,32")]
    pub work_steps: Vec<f64>,
    /// Runs per work step (median reported).
    #[arg(long, default_value_t = 3)]
    pub repetitions: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeRow {
    pub work_s: f64,
    pub total_s: f64,
}

pub fn cmd_probe(args: &ProbeArgs, out: &Sink) -> Result<()> {
    anyhow::ensure!(
        args.work_steps.iter().all(|w| w.is_finite() && *w >= 0.0),
        "work steps must be nonnegative milliseconds"
    );
    let cfg = TransportConfig {
        async_progress: args.async_progress.into(),
        synthetic_bandwidth: Some(args.bandwidth),
        ..TransportConfig::default()
    };
    cfg.validate()?;
    let params = ProbeParams {
        message_bytes: args.bytes,
        direction: args.direction,
        work: args.work_steps.iter().map(|ms| Duration::from_secs_f64(ms / 1e3)).collect(),
        repetitions: args.repetitions,
    };
    let samples = probe_overlap(LocalTransport::create::<f64>(2, cfg)?, &params)?;
    let rows: Vec<ProbeRow> = samples
        .iter()
        .map(|s| ProbeRow {
            work_s: s.work,
            total_s: s.total,
        })
        .collect();
    write_table(out.open("probe.csv")?, "probe", out.format_or(Format::Csv), &rows)?;
    let t_msg = cfg.transfer_time(args.bytes).as_secs_f64();
    match overlap_ratio(&samples, t_msg) {
        Ok(r) => eprintln!("transfer time {:.3} ms, overlap ratio {r:.3}", t_msg * 1e3),
        Err(e) => eprintln!("overlap ratio unavailable: {e}"),
    }
    Ok(())
}
