//! Distributed sparse matrix-vector multiplication with explicit
//! communication/computation overlap.
//!
//! The matrix is stored in CRS form and distributed over ranks by
//! contiguous row blocks. Each rank multiplies its rows by the RHS after
//! receiving the halo entries it references from other ranks. The
//! [`exec`] module provides three ways of scheduling that exchange against
//! the computation; [`model`] predicts the node-level performance ceiling.

mod error;

pub mod exec;
pub mod generate;
pub mod model;
pub mod mtx;
pub mod partition;
pub mod sparse;
pub mod transport;

#[cfg(test)]
mod test_util;

pub use error::{Error, Result};
pub use exec::{run_distributed, DistConfig, DistRun, Mode, Phase, PhaseTimings, RunOptions};
pub use generate::{generate, GenKind, GenSpec};
pub use mtx::{read_matrix_market, write_matrix_market};
pub use partition::{partition_rows, BalancePolicy, CommPlan, Partition, RankWorkset};
pub use sparse::{chunk_by_nonzeros, spmv_full, spmv_threaded, ChunkPlan, ColIndex, CrsMatrix};
pub use transport::{Communicator, LocalTransport, TransportConfig};
