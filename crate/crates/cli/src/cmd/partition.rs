use anyhow::Result;
use clap::Args;
use serde::Serialize;
use spmv_core::partition::{build_comm_plans, partition_rows, BalancePolicy};

use super::load_matrix;
use crate::output::{write_table, Format, Sink};

#[derive(Clone, Debug, Args)]
pub struct PartitionArgs {
    /// Matrix Market file or generator spec.
    #[arg(long)]
    pub matrix: String,
    #[arg(long)]
    pub ranks: usize,
    /// nnz | rows
    #[arg(long, default_value = "nnz")]
    pub policy: BalancePolicy,
    #[arg(long, env = "SPMV_SEED")]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PartitionRow {
    pub rank: usize,
    pub rows: usize,
    pub nnz: usize,
    pub halo_size: usize,
    pub send_bytes: usize,
    pub recv_bytes: usize,
}

pub fn partition_rows_report(args: &PartitionArgs) -> Result<Vec<PartitionRow>> {
    let a = load_matrix(&args.matrix, args.seed)?;
    let part = partition_rows(&a, args.ranks, args.policy)?;
    let plans = build_comm_plans(&a, &part)?;
    Ok(plans
        .iter()
        .enumerate()
        .map(|(r, plan)| {
            let rows = part.rows(r);
            PartitionRow {
                rank: r,
                rows: rows.len(),
                nnz: a.row_ptr()[rows.end] - a.row_ptr()[rows.start],
                halo_size: plan.halo_size(),
                send_bytes: plan.send_bytes(),
                recv_bytes: plan.recv_bytes(),
            }
        })
        .collect())
}

pub fn cmd_partition_info(args: &PartitionArgs, out: &Sink) -> Result<()> {
    let rows = partition_rows_report(args)?;
    write_table(out.open("partition.csv")?, "partition", out.format_or(Format::Csv), &rows)
}
