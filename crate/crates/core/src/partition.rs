//! Row-contiguous distribution of a matrix over ranks and the halo-exchange
//! bookkeeping that goes with it.
//!
//! Rank `r` owns rows `row_start[r]..row_start[r+1]` and the same range of
//! the RHS and result vectors. Any column a rank's rows reference outside
//! its own range is a halo element, received from the owning rank before
//! the remote part of the product can run.
//!
//! Halo layout: slots are ordered by (source rank, global index), so each
//! incoming message fills one contiguous segment of the halo buffer.

use std::collections::{BTreeMap, HashMap};
use std::ops::Range;

use crate::error::{contract, Error, Result};
use crate::sparse::{balanced_cuts, split_columns, ColIndex, CrsMatrix};
use crate::transport::{Communicator, Rank, Tag};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BalancePolicy {
    /// Equalize nonzeros per rank.
    Nonzeros,
    /// Equalize rows per rank.
    Rows,
}

impl std::str::FromStr for BalancePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nnz" | "nonzeros" => Ok(Self::Nonzeros),
            "rows" => Ok(Self::Rows),
            other => Err(Error::Contract(format!("unknown policy {other:?}, expected nnz|rows"))),
        }
    }
}

impl std::fmt::Display for BalancePolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Nonzeros => "nnz",
            Self::Rows => "rows",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    row_start: Vec<usize>,
    policy: BalancePolicy,
}

impl Partition {
    /// Builds a partition from explicit boundaries.
    pub fn from_boundaries(row_start: Vec<usize>, policy: BalancePolicy) -> Result<Self> {
        contract!(row_start.len() >= 2, "a partition needs at least one rank");
        contract!(row_start[0] == 0, "partition must start at row 0");
        contract!(
            row_start.windows(2).all(|w| w[0] <= w[1]),
            "partition boundaries must be nondecreasing"
        );
        Ok(Self { row_start, policy })
    }

    pub fn n_ranks(&self) -> usize {
        self.row_start.len() - 1
    }

    pub fn n_rows(&self) -> usize {
        *self.row_start.last().expect("nonempty")
    }

    pub fn policy(&self) -> BalancePolicy {
        self.policy
    }

    pub fn row_start(&self) -> &[usize] {
        &self.row_start
    }

    pub fn rows(&self, rank: Rank) -> Range<usize> {
        self.row_start[rank]..self.row_start[rank + 1]
    }

    /// Rank owning global index `g` (row or, for square matrices, column).
    pub fn owner(&self, g: usize) -> Rank {
        debug_assert!(g < self.n_rows());
        self.row_start.partition_point(|&s| s <= g) - 1
    }
}

/// Splits the rows of `a` over `ranks` contiguous ranges.
pub fn partition_rows(a: &CrsMatrix, ranks: usize, policy: BalancePolicy) -> Result<Partition> {
    let n = a.n_rows();
    contract!(
        ranks >= 1 && ranks <= n,
        "rank count {ranks} must lie in [1, {n}]"
    );
    let row_start = match policy {
        BalancePolicy::Rows => (0..=ranks).map(|r| r * n / ranks).collect(),
        BalancePolicy::Nonzeros => balanced_cuts(a.row_ptr(), ranks),
    };
    Ok(Partition { row_start, policy })
}

/// Halo-exchange plan of one rank.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommPlan {
    rank: Rank,
    recv_from: BTreeMap<Rank, Vec<usize>>,
    send_to: BTreeMap<Rank, Vec<usize>>,
    halo_globals: Vec<usize>,
    halo_map: HashMap<usize, usize>,
    recv_offsets: BTreeMap<Rank, usize>,
}

impl CommPlan {
    /// Assembles a plan from sorted per-peer index lists. Empty lists are dropped.
    pub fn from_lists(
        rank: Rank,
        mut recv_from: BTreeMap<Rank, Vec<usize>>,
        mut send_to: BTreeMap<Rank, Vec<usize>>,
    ) -> Result<Self> {
        recv_from.retain(|_, v| !v.is_empty());
        send_to.retain(|_, v| !v.is_empty());
        contract!(
            !recv_from.contains_key(&rank) && !send_to.contains_key(&rank),
            "rank {rank} cannot exchange halo data with itself"
        );
        let mut halo_globals = Vec::new();
        let mut recv_offsets = BTreeMap::new();
        for (&src, list) in &recv_from {
            contract!(
                list.windows(2).all(|w| w[0] < w[1]),
                "receive list from rank {src} is not strictly sorted"
            );
            recv_offsets.insert(src, halo_globals.len());
            halo_globals.extend_from_slice(list);
        }
        let halo_map: HashMap<usize, usize> = halo_globals.iter().enumerate().map(|(s, &g)| (g, s)).collect();
        contract!(
            halo_map.len() == halo_globals.len(),
            "a halo index appears in more than one receive list"
        );
        Ok(Self {
            rank,
            recv_from,
            send_to,
            halo_globals,
            halo_map,
            recv_offsets,
        })
    }

    pub fn rank(&self) -> Rank {
        self.rank
    }

    /// Source rank to sorted global indices received from it.
    pub fn recv_from(&self) -> &BTreeMap<Rank, Vec<usize>> {
        &self.recv_from
    }

    /// Destination rank to sorted global indices (owned by this rank) sent to it.
    pub fn send_to(&self) -> &BTreeMap<Rank, Vec<usize>> {
        &self.send_to
    }

    pub fn halo_size(&self) -> usize {
        self.halo_globals.len()
    }

    /// Global index held in each halo slot.
    pub fn halo_globals(&self) -> &[usize] {
        &self.halo_globals
    }

    pub fn halo_slot(&self, global: usize) -> Option<usize> {
        self.halo_map.get(&global).copied()
    }

    /// Halo range filled by the message from `source`.
    pub fn recv_segment(&self, source: Rank) -> Option<Range<usize>> {
        let start = *self.recv_offsets.get(&source)?;
        Some(start..start + self.recv_from[&source].len())
    }

    pub fn send_bytes(&self) -> usize {
        8 * self.send_to.values().map(Vec::len).sum::<usize>()
    }

    pub fn recv_bytes(&self) -> usize {
        8 * self.halo_size()
    }
}

/// Sorted distinct off-range columns of rank `rank`'s rows, grouped by owner.
fn recv_lists(a: &CrsMatrix, part: &Partition, rank: Rank) -> BTreeMap<Rank, Vec<usize>> {
    let rows = part.rows(rank);
    let entries = a.row_ptr()[rows.start]..a.row_ptr()[rows.end];
    let mut cols: Vec<usize> = a.col_idx()[entries]
        .iter()
        .map(|&c| c as usize)
        .filter(|c| !rows.contains(c))
        .collect();
    cols.sort_unstable();
    cols.dedup();
    let mut out: BTreeMap<Rank, Vec<usize>> = BTreeMap::new();
    for c in cols {
        out.entry(part.owner(c)).or_default().push(c);
    }
    out
}

fn check_plan_inputs(a: &CrsMatrix, part: &Partition) -> Result<()> {
    if !a.is_square() {
        return Err(Error::UnsupportedShape(format!(
            "halo exchange needs a square matrix, got {}x{}",
            a.n_rows(),
            a.n_cols()
        )));
    }
    contract!(
        part.n_rows() == a.n_rows(),
        "partition covers {} rows but the matrix has {}",
        part.n_rows(),
        a.n_rows()
    );
    Ok(())
}

/// Plan for one rank, computed from the global matrix.
pub fn build_comm_plan(a: &CrsMatrix, part: &Partition, rank: Rank) -> Result<CommPlan> {
    check_plan_inputs(a, part)?;
    contract!(rank < part.n_ranks(), "rank {rank} outside {} ranks", part.n_ranks());
    let recv = recv_lists(a, part, rank);
    let mut send = BTreeMap::new();
    for q in (0..part.n_ranks()).filter(|&q| q != rank) {
        if let Some(list) = recv_lists(a, part, q).remove(&rank) {
            send.insert(q, list);
        }
    }
    CommPlan::from_lists(rank, recv, send)
}

/// Plans for every rank at once.
pub fn build_comm_plans(a: &CrsMatrix, part: &Partition) -> Result<Vec<CommPlan>> {
    check_plan_inputs(a, part)?;
    let p = part.n_ranks();
    let recv: Vec<_> = (0..p).map(|r| recv_lists(a, part, r)).collect();
    let mut send: Vec<BTreeMap<Rank, Vec<usize>>> = vec![BTreeMap::new(); p];
    for (q, lists) in recv.iter().enumerate() {
        for (&owner, list) in lists {
            send[owner].insert(q, list.clone());
        }
    }
    recv.into_iter()
        .zip(send)
        .enumerate()
        .map(|(r, (rv, sd))| CommPlan::from_lists(r, rv, sd))
        .collect()
}

const PLAN_TAG: Tag = 0x504c;

/// Builds this rank's plan from its own rows only, learning the send lists
/// through one all-to-all exchange of receive lists.
///
/// `block` holds the rank's rows with global column indices.
pub fn exchange_comm_plan<C: Communicator<u64>>(
    ep: &mut C,
    block: &CrsMatrix,
    part: &Partition,
) -> Result<CommPlan> {
    let rank = ep.rank();
    contract!(
        ep.size() == part.n_ranks(),
        "transport has {} ranks, partition {}",
        ep.size(),
        part.n_ranks()
    );
    let rows = part.rows(rank);
    contract!(
        block.n_rows() == rows.len() && block.n_cols() == part.n_rows(),
        "block is {}x{}, expected {}x{}",
        block.n_rows(),
        block.n_cols(),
        rows.len(),
        part.n_rows()
    );
    let mut cols: Vec<usize> = block
        .col_idx()
        .iter()
        .map(|&c| c as usize)
        .filter(|c| !rows.contains(c))
        .collect();
    cols.sort_unstable();
    cols.dedup();
    let mut recv: BTreeMap<Rank, Vec<usize>> = BTreeMap::new();
    for c in cols {
        recv.entry(part.owner(c)).or_default().push(c);
    }

    let peers: Vec<Rank> = (0..part.n_ranks()).filter(|&q| q != rank).collect();
    let mut reqs = Vec::with_capacity(2 * peers.len());
    for &q in &peers {
        reqs.push(ep.post_recv(q, PLAN_TAG, rows.len())?);
    }
    for &q in &peers {
        let list = recv.get(&q).map_or_else(Vec::new, |l| l.iter().map(|&c| c as u64).collect());
        reqs.push(ep.post_send(q, PLAN_TAG, list)?);
    }
    ep.wait_all(&mut reqs)?;
    let mut send = BTreeMap::new();
    for (&q, req) in peers.iter().zip(reqs.iter_mut()) {
        let list = req.take_data().unwrap_or_default();
        send.insert(q, list.into_iter().map(|c| c as usize).collect());
    }
    CommPlan::from_lists(rank, recv, send)
}

/// The matrix a rank multiplies with.
#[derive(Clone, Debug, PartialEq)]
pub enum WorksetMatrix {
    /// Owned columns at `0..n_local`, halo slot `s` at column `n_local + s`.
    Full(CrsMatrix),
    /// `local` indexes the owned RHS slice, `remote` indexes halo slots.
    Split { local: CrsMatrix, remote: CrsMatrix },
}

/// Everything one rank needs to run its share of the product.
#[derive(Clone, Debug)]
pub struct RankWorkset {
    rank: Rank,
    rows: Range<usize>,
    matrix: WorksetMatrix,
    halo_globals: Vec<usize>,
    /// Owned RHS slice followed by the halo buffer.
    x: Vec<f64>,
    y: Vec<f64>,
}

impl RankWorkset {
    pub fn rank(&self) -> Rank {
        self.rank
    }

    /// Global rows owned by this rank.
    pub fn rows(&self) -> Range<usize> {
        self.rows.clone()
    }

    pub fn n_local(&self) -> usize {
        self.rows.len()
    }

    pub fn halo_size(&self) -> usize {
        self.halo_globals.len()
    }

    pub fn matrix(&self) -> &WorksetMatrix {
        &self.matrix
    }

    pub fn is_split(&self) -> bool {
        matches!(self.matrix, WorksetMatrix::Split { .. })
    }

    pub fn x_local(&self) -> &[f64] {
        &self.x[..self.rows.len()]
    }

    pub fn halo(&self) -> &[f64] {
        &self.x[self.rows.len()..]
    }

    pub fn halo_mut(&mut self) -> &mut [f64] {
        let n = self.rows.len();
        &mut self.x[n..]
    }

    pub fn y_local(&self) -> &[f64] {
        &self.y
    }

    /// Loads the owned slice of the RHS.
    pub fn load_x(&mut self, x_local: &[f64]) -> Result<()> {
        contract!(
            x_local.len() == self.rows.len(),
            "rank {} owns {} RHS entries, got {}",
            self.rank,
            self.rows.len(),
            x_local.len()
        );
        self.x[..x_local.len()].copy_from_slice(x_local);
        Ok(())
    }

    /// Split borrows used by the execution modes: matrix, the RHS buffer
    /// (owned slice then halo) and the result slice.
    pub(crate) fn parts_mut(&mut self) -> (&WorksetMatrix, &mut Vec<f64>, &mut Vec<f64>) {
        (&self.matrix, &mut self.x, &mut self.y)
    }

    /// Global column indices of local row `i`, in storage order (for the
    /// split form: local part first, then remote part).
    pub fn global_columns(&self, i: usize) -> Vec<usize> {
        let n = self.rows.len();
        let start = self.rows.start;
        let halo = &self.halo_globals;
        match &self.matrix {
            WorksetMatrix::Full(m) => m
                .row(i)
                .0
                .iter()
                .map(|&c| {
                    let c = c as usize;
                    if c < n {
                        start + c
                    } else {
                        halo[c - n]
                    }
                })
                .collect(),
            WorksetMatrix::Split { local, remote } => local
                .row(i)
                .0
                .iter()
                .map(|&c| start + c as usize)
                .chain(remote.row(i).0.iter().map(|&c| halo[c as usize]))
                .collect(),
        }
    }
}

/// Extracts rank `rank`'s rows and rewrites columns into local/halo numbering.
pub fn build_workset(
    a: &CrsMatrix,
    part: &Partition,
    plan: &CommPlan,
    rank: Rank,
    split: bool,
) -> Result<RankWorkset> {
    check_plan_inputs(a, part)?;
    contract!(
        plan.rank() == rank,
        "plan belongs to rank {}, not {rank}",
        plan.rank()
    );
    let rows = part.rows(rank);
    let n_local = rows.len();
    let block = a.row_block(rows.clone())?;
    let to_halo = |c: ColIndex| -> Result<ColIndex> {
        plan.halo_slot(c as usize).map(|s| s as ColIndex).ok_or_else(|| {
            Error::Internal(format!(
                "column {c} of rank {rank} is neither owned nor in the halo"
            ))
        })
    };
    let matrix = if split {
        let (local, remote) = split_columns(&block, rows.clone())?;
        let remote = remote.remap_columns(plan.halo_size(), to_halo)?;
        WorksetMatrix::Split { local, remote }
    } else {
        let start = rows.start as ColIndex;
        let end = rows.end as ColIndex;
        let full = block.remap_columns(n_local + plan.halo_size(), |c| {
            if (start..end).contains(&c) {
                Ok(c - start)
            } else {
                Ok(n_local as ColIndex + to_halo(c)?)
            }
        })?;
        WorksetMatrix::Full(full)
    };
    Ok(RankWorkset {
        rank,
        rows,
        matrix,
        halo_globals: plan.halo_globals().to_vec(),
        x: vec![0.0; n_local + plan.halo_size()],
        y: vec![0.0; n_local],
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RankVolume {
    pub send_bytes: usize,
    pub recv_bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommVolume {
    pub per_rank: Vec<RankVolume>,
    /// Bytes moved per product, summed over senders.
    pub total_bytes: usize,
    pub max_recv_bytes: usize,
    pub min_recv_bytes: usize,
    pub max_send_bytes: usize,
    pub min_send_bytes: usize,
}

/// Per-rank and total halo traffic of one product, 8 bytes per element.
pub fn communication_volume(plans: &[CommPlan]) -> CommVolume {
    let per_rank: Vec<RankVolume> = plans
        .iter()
        .map(|p| RankVolume {
            send_bytes: p.send_bytes(),
            recv_bytes: p.recv_bytes(),
        })
        .collect();
    let recv = per_rank.iter().map(|v| v.recv_bytes);
    let send = per_rank.iter().map(|v| v.send_bytes);
    CommVolume {
        total_bytes: per_rank.iter().map(|v| v.send_bytes).sum(),
        max_recv_bytes: recv.clone().max().unwrap_or(0),
        min_recv_bytes: recv.min().unwrap_or(0),
        max_send_bytes: send.clone().max().unwrap_or(0),
        min_send_bytes: send.min().unwrap_or(0),
        per_rank,
    }
}
