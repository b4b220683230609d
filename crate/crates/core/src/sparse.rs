//! Compressed-row storage and the spMVM kernels built on it.
//!
//! All kernels share one inner loop: for each row the products
//! `val[j] * x[col_idx[j]]` are summed in storage order, starting from `0.0`
//! (overwrite) or from the current `y[i]` (accumulate). Keeping that order
//! fixed is what makes the threaded and distributed variants bitwise
//! reproducible against the serial kernel.

use std::ops::Range;

use crate::error::{contract, Error, Result};

/// Column index type. The traffic model charges 4 bytes per index; building
/// with a wider index changes the model constants (see [`crate::model::ModelConfig`]).
pub type ColIndex = u32;

/// Compressed-row sparse matrix with `f64` values.
#[derive(Clone, Debug, PartialEq)]
pub struct CrsMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<ColIndex>,
    val: Vec<f64>,
}

impl CrsMatrix {
    /// Builds a matrix from raw CRS arrays, validating every structural invariant.
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<ColIndex>,
        val: Vec<f64>,
    ) -> Result<Self> {
        contract!(
            row_ptr.len() == n_rows + 1,
            "row_ptr has length {}, expected {}",
            row_ptr.len(),
            n_rows + 1
        );
        contract!(row_ptr[0] == 0, "row_ptr[0] = {}, expected 0", row_ptr[0]);
        contract!(
            row_ptr.windows(2).all(|w| w[0] <= w[1]),
            "row_ptr is not nondecreasing"
        );
        contract!(
            col_idx.len() == val.len(),
            "col_idx has {} entries but val has {}",
            col_idx.len(),
            val.len()
        );
        contract!(
            row_ptr[n_rows] == val.len(),
            "row_ptr[n_rows] = {} but there are {} nonzeros",
            row_ptr[n_rows],
            val.len()
        );
        contract!(
            n_cols <= ColIndex::MAX as usize + 1,
            "{n_cols} columns exceed the index type"
        );
        if let Some(bad) = col_idx.iter().find(|&&c| c as usize >= n_cols) {
            return Err(Error::Contract(format!(
                "column index {bad} out of range for {n_cols} columns"
            )));
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            val,
        })
    }

    /// Builds a matrix from `(row, col, value)` triplets.
    ///
    /// Entries are stably sorted by row, so within a row they keep their input
    /// order. Duplicates are kept and contribute additively.
    pub fn from_triplets(n_rows: usize, n_cols: usize, entries: &[(usize, usize, f64)]) -> Result<Self> {
        let mut counts = vec![0usize; n_rows + 1];
        for &(i, j, _) in entries {
            contract!(
                i < n_rows && j < n_cols,
                "entry ({i}, {j}) outside {n_rows}x{n_cols}"
            );
            counts[i + 1] += 1;
        }
        for i in 0..n_rows {
            counts[i + 1] += counts[i];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0; entries.len()];
        let mut val = vec![0.0; entries.len()];
        for &(i, j, v) in entries {
            let slot = next[i];
            next[i] += 1;
            col_idx[slot] = j as ColIndex;
            val[slot] = v;
        }
        Self::new(n_rows, n_cols, row_ptr, col_idx, val)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n as ColIndex).collect(),
            val: vec![1.0; n],
        }
    }

    /// A matrix with no stored entries.
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            row_ptr: vec![0; n_rows + 1],
            col_idx: Vec::new(),
            val: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.val.len()
    }

    /// Average nonzeros per row. Empty rows count towards the divisor.
    pub fn nnzr(&self) -> f64 {
        if self.n_rows == 0 {
            0.0
        } else {
            self.nnz() as f64 / self.n_rows as f64
        }
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[ColIndex] {
        &self.col_idx
    }

    pub fn val(&self) -> &[f64] {
        &self.val
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    pub fn row_nnz(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn max_row_nnz(&self) -> usize {
        self.row_ptr.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0)
    }

    /// Column indices and values of row `i`, in storage order.
    pub fn row(&self, i: usize) -> (&[ColIndex], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.val[r])
    }

    /// Copies out the rows in `rows`, keeping the full column space.
    pub fn row_block(&self, rows: Range<usize>) -> Result<Self> {
        contract!(
            rows.start <= rows.end && rows.end <= self.n_rows,
            "row block {rows:?} outside {} rows",
            self.n_rows
        );
        let base = self.row_ptr[rows.start];
        let entries = base..self.row_ptr[rows.end];
        Ok(Self {
            n_rows: rows.len(),
            n_cols: self.n_cols,
            row_ptr: self.row_ptr[rows.start..=rows.end].iter().map(|p| p - base).collect(),
            col_idx: self.col_idx[entries.clone()].to_vec(),
            val: self.val[entries].to_vec(),
        })
    }

    /// Applies `map` to every column index, producing a matrix with `n_cols` columns.
    /// Entry order is untouched.
    pub fn remap_columns(
        &self,
        n_cols: usize,
        mut map: impl FnMut(ColIndex) -> Result<ColIndex>,
    ) -> Result<Self> {
        let col_idx = self
            .col_idx
            .iter()
            .map(|&c| map(c))
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.n_rows, n_cols, self.row_ptr.clone(), col_idx, self.val.clone())
    }
}

/// Row boundaries of `k` contiguous chunks, one per compute worker.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChunkPlan {
    boundaries: Vec<usize>,
}

impl ChunkPlan {
    pub fn new(boundaries: Vec<usize>) -> Result<Self> {
        contract!(boundaries.len() >= 2, "a chunk plan needs at least one chunk");
        contract!(boundaries[0] == 0, "chunk boundaries must start at row 0");
        contract!(
            boundaries.windows(2).all(|w| w[0] <= w[1]),
            "chunk boundaries must be nondecreasing"
        );
        Ok(Self { boundaries })
    }

    /// A single chunk covering all rows.
    pub fn single(n_rows: usize) -> Self {
        Self {
            boundaries: vec![0, n_rows],
        }
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn len(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn chunk(&self, c: usize) -> Range<usize> {
        self.boundaries[c]..self.boundaries[c + 1]
    }

    pub fn chunks(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        self.boundaries.windows(2).map(|w| w[0]..w[1])
    }

    /// Checks that the plan covers exactly `n_rows` rows.
    pub fn validate_for(&self, n_rows: usize) -> Result<()> {
        let last = *self.boundaries.last().expect("nonempty boundaries");
        contract!(
            last == n_rows,
            "chunk plan ends at row {last} but the matrix has {n_rows} rows"
        );
        Ok(())
    }

    /// Splits `y` into one disjoint mutable slice per chunk.
    pub fn split_mut<'a>(&self, y: &'a mut [f64]) -> Vec<&'a mut [f64]> {
        let mut out = Vec::with_capacity(self.len());
        let mut rest = y;
        for r in self.chunks() {
            let (head, tail) = rest.split_at_mut(r.len());
            out.push(head);
            rest = tail;
        }
        out
    }
}

fn check_dims(a: &CrsMatrix, x: &[f64], y: &[f64]) -> Result<()> {
    contract!(
        x.len() == a.n_cols,
        "x has length {} but the matrix has {} columns",
        x.len(),
        a.n_cols
    );
    contract!(
        y.len() == a.n_rows,
        "y has length {} but the matrix has {} rows",
        y.len(),
        a.n_rows
    );
    Ok(())
}

/// Multiplies rows `rows` of `a` into `y_rows` (which holds exactly those rows).
#[inline]
pub(crate) fn spmv_rows(a: &CrsMatrix, x: &[f64], y_rows: &mut [f64], rows: Range<usize>, accumulate: bool) {
    debug_assert_eq!(y_rows.len(), rows.len());
    let row_ptr = &a.row_ptr;
    for (yi, i) in y_rows.iter_mut().zip(rows) {
        let r = row_ptr[i]..row_ptr[i + 1];
        let mut sum = if accumulate { *yi } else { 0.0 };
        for (v, &c) in a.val[r.clone()].iter().zip(&a.col_idx[r]) {
            sum += v * x[c as usize];
        }
        *yi = sum;
    }
}

/// `y = A x` (or `y += A x` with `accumulate`), one row at a time in storage order.
pub fn spmv_full(a: &CrsMatrix, x: &[f64], y: &mut [f64], accumulate: bool) -> Result<()> {
    check_dims(a, x, y)?;
    spmv_rows(a, x, y, 0..a.n_rows, accumulate);
    Ok(())
}

/// Like [`spmv_full`], with one worker per chunk of `chunks`.
///
/// Chunks own disjoint row ranges, so the result is bitwise identical to the
/// serial kernel whatever the interleaving.
pub fn spmv_threaded(
    a: &CrsMatrix,
    x: &[f64],
    y: &mut [f64],
    chunks: &ChunkPlan,
    accumulate: bool,
) -> Result<()> {
    check_dims(a, x, y)?;
    chunks.validate_for(a.n_rows)?;
    if chunks.len() == 1 {
        spmv_rows(a, x, y, 0..a.n_rows, accumulate);
        return Ok(());
    }
    let slices = chunks.split_mut(y);
    std::thread::scope(|s| {
        for (rows, y_rows) in chunks.chunks().zip(slices) {
            s.spawn(move || spmv_rows(a, x, y_rows, rows, accumulate));
        }
    });
    Ok(())
}

/// Cuts rows `0..n` into `k` nonempty contiguous ranges of near-equal weight,
/// where `prefix[i]` is the total weight of rows `0..i`.
///
/// Each cut goes to the row boundary nearest the ideal prefix `total * r / k`
/// (ties go before the crossing row). If the resulting spread between the
/// heaviest and lightest range exceeds the heaviest single row, the cuts are
/// recomputed so that every load falls in a window of that width.
pub(crate) fn balanced_cuts(prefix: &[usize], k: usize) -> Vec<usize> {
    let n = prefix.len() - 1;
    debug_assert!(k >= 1 && k <= n);
    let total = prefix[n] as u128;
    let kk = k as u128;
    let mut cuts = vec![0usize; k + 1];
    cuts[k] = n;
    for r in 1..k {
        let target = total * r as u128;
        // Last boundary whose scaled prefix does not pass the target.
        let before = prefix.partition_point(|&p| p as u128 * kk <= target) - 1;
        let mut cut = before;
        if before < n {
            let under = target - prefix[before] as u128 * kk;
            let over = prefix[before + 1] as u128 * kk - target;
            if over < under {
                cut = before + 1;
            }
        }
        cuts[r] = cut.clamp(cuts[r - 1] + 1, n - (k - r));
    }

    let max_row = prefix.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0);
    let spread = cuts
        .windows(2)
        .map(|w| prefix[w[1]] - prefix[w[0]])
        .fold((usize::MAX, 0), |(lo, hi), l| (lo.min(l), hi.max(l)));
    if spread.1 - spread.0 <= max_row {
        return cuts;
    }
    // Every range load in [floor, floor + max_row] for the largest floor that admits it.
    let mean = prefix[n] / k;
    (mean.saturating_sub(max_row)..=mean)
        .rev()
        .find_map(|floor| window_cuts(prefix, k, floor, max_row))
        .unwrap_or(cuts)
}

/// Cuts into `k` nonempty ranges whose loads all lie in `[floor, floor + width]`,
/// where `width` is at least the heaviest row. `None` if no such cut exists.
fn window_cuts(prefix: &[usize], k: usize, floor: usize, width: usize) -> Option<Vec<usize>> {
    let n = prefix.len() - 1;
    let total = prefix[n];
    let first_at_least = |v: usize| prefix.partition_point(|&p| p < v);
    let last_at_most = |v: usize| prefix.partition_point(|&p| p <= v) - 1;

    // Boundaries reachable after j ranges form one contiguous interval.
    let mut reach = Vec::with_capacity(k + 1);
    reach.push((0usize, 0usize));
    for _ in 0..k {
        let (a, b) = *reach.last().expect("seeded");
        if a >= n || prefix[a] + floor > total {
            return None;
        }
        let b = b.min(n - 1).min(last_at_most(total - floor));
        let lo = first_at_least(prefix[a] + floor).max(a + 1);
        let hi = last_at_most(prefix[b] + floor + width);
        reach.push((lo, hi));
    }
    let (a, b) = reach[k];
    if !(a..=b).contains(&n) {
        return None;
    }

    let mut cuts = vec![0usize; k + 1];
    cuts[k] = n;
    for j in (1..k).rev() {
        let e = cuts[j + 1];
        let (ra, rb) = reach[j];
        let lo = first_at_least(prefix[e].saturating_sub(floor + width)).max(ra);
        let hi = last_at_most(prefix[e].checked_sub(floor)?).min(rb).min(e - 1);
        if lo > hi {
            return None;
        }
        let ideal = (total as u128 * j as u128 / k as u128) as usize;
        cuts[j] = last_at_most(ideal).clamp(lo, hi);
    }
    Some(cuts)
}

/// Splits the rows of `a` into `k` contiguous chunks with near-equal nonzero counts.
pub fn chunk_by_nonzeros(a: &CrsMatrix, k: usize) -> Result<ChunkPlan> {
    contract!(
        k >= 1 && k <= a.n_rows,
        "chunk count {k} must lie in [1, {}]",
        a.n_rows
    );
    Ok(ChunkPlan {
        boundaries: balanced_cuts(&a.row_ptr, k),
    })
}

/// Separates the entries whose column lies in `local` from the rest.
///
/// The local part has its columns rebased to `local.start` and `local.len()`
/// columns; the remote part keeps the original column space. Within each row
/// both parts preserve the original storage order.
pub fn split_columns(a: &CrsMatrix, local: Range<usize>) -> Result<(CrsMatrix, CrsMatrix)> {
    contract!(
        local.start <= local.end && local.end <= a.n_cols,
        "local column range {local:?} outside {} columns",
        a.n_cols
    );
    let mut local_ptr = Vec::with_capacity(a.n_rows + 1);
    let mut remote_ptr = Vec::with_capacity(a.n_rows + 1);
    let (mut local_col, mut local_val) = (Vec::new(), Vec::new());
    let (mut remote_col, mut remote_val) = (Vec::new(), Vec::new());
    local_ptr.push(0);
    remote_ptr.push(0);
    let lo = local.start as ColIndex;
    for i in 0..a.n_rows {
        let (cols, vals) = a.row(i);
        for (&c, &v) in cols.iter().zip(vals) {
            if local.contains(&(c as usize)) {
                local_col.push(c - lo);
                local_val.push(v);
            } else {
                remote_col.push(c);
                remote_val.push(v);
            }
        }
        local_ptr.push(local_col.len());
        remote_ptr.push(remote_col.len());
    }
    Ok((
        CrsMatrix::new(a.n_rows, local.len(), local_ptr, local_col, local_val)?,
        CrsMatrix::new(a.n_rows, a.n_cols, remote_ptr, remote_col, remote_val)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util::{dense_oracle, random_matrix};
    use proptest::prelude::*;

    fn uniform(n: usize, per_row: usize) -> CrsMatrix {
        let entries: Vec<_> = (0..n)
            .flat_map(|i| (0..per_row).map(move |j| (i, (i + j) % n, 1.0)))
            .collect();
        CrsMatrix::from_triplets(n, n, &entries).unwrap()
    }

    #[test]
    fn rejects_malformed_arrays() {
        assert!(CrsMatrix::new(2, 2, vec![0, 1], vec![0], vec![1.0]).is_err());
        assert!(CrsMatrix::new(2, 2, vec![1, 1, 1], vec![0], vec![1.0]).is_err());
        assert!(CrsMatrix::new(2, 2, vec![0, 2, 1], vec![0], vec![1.0]).is_err());
        assert!(CrsMatrix::new(1, 2, vec![0, 1], vec![2], vec![1.0]).is_err());
        assert!(CrsMatrix::new(1, 2, vec![0, 1], vec![0, 1], vec![1.0]).is_err());
    }

    #[test]
    fn identity_product() {
        let a = CrsMatrix::identity(3);
        let mut y = vec![0.0; 3];
        spmv_full(&a, &[1.0, 2.0, 3.0], &mut y, false).unwrap();
        assert_eq!(y, [1.0, 2.0, 3.0]);
    }

    #[test]
    fn empty_row_yields_zero() {
        let a = CrsMatrix::from_triplets(3, 3, &[(0, 0, 2.0), (2, 1, 3.0)]).unwrap();
        let mut y = vec![7.0; 3];
        spmv_full(&a, &[1.0, 1.0, 1.0], &mut y, false).unwrap();
        assert_eq!(y, [2.0, 0.0, 3.0]);
    }

    #[test]
    fn accumulate_adds_to_existing() {
        let a = CrsMatrix::identity(2);
        let mut y = vec![10.0, 20.0];
        spmv_full(&a, &[1.0, 2.0], &mut y, true).unwrap();
        assert_eq!(y, [11.0, 22.0]);
    }

    #[test]
    fn duplicates_are_additive() {
        let a = CrsMatrix::from_triplets(1, 2, &[(0, 1, 2.0), (0, 1, 3.0)]).unwrap();
        let mut y = vec![0.0];
        spmv_full(&a, &[0.0, 1.0], &mut y, false).unwrap();
        assert_eq!(y, [5.0]);
    }

    #[test]
    fn dimension_mismatch_is_contract_error() {
        let a = CrsMatrix::identity(3);
        let mut y = vec![0.0; 3];
        assert!(matches!(spmv_full(&a, &[1.0; 2], &mut y, false), Err(Error::Contract(_))));
        let mut short = vec![0.0; 2];
        assert!(spmv_full(&a, &[1.0; 3], &mut short, false).is_err());
    }

    #[test]
    fn matches_dense_oracle_8x8() {
        let (a, x) = random_matrix(8, 20, 42);
        assert_eq!(a.nnz(), 20);
        let mut y = vec![0.0; 8];
        spmv_full(&a, &x, &mut y, false).unwrap();
        assert_eq!(y, dense_oracle(&a, &x));
    }

    #[test]
    fn threaded_single_chunk_and_four_chunks() {
        let (a, x) = random_matrix(100, 700, 7);
        let mut serial = vec![0.0; 100];
        spmv_full(&a, &x, &mut serial, false).unwrap();
        for k in [1, 4] {
            let plan = chunk_by_nonzeros(&a, k).unwrap();
            let mut y = vec![0.0; 100];
            spmv_threaded(&a, &x, &mut y, &plan, false).unwrap();
            let bits: Vec<u64> = y.iter().map(|v| v.to_bits()).collect();
            let expect: Vec<u64> = serial.iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits, expect, "k = {k}");
        }
    }

    #[test]
    fn threaded_rejects_short_plan() {
        let a = CrsMatrix::identity(4);
        let plan = ChunkPlan::new(vec![0, 2, 3]).unwrap();
        let mut y = vec![0.0; 4];
        assert!(matches!(
            spmv_threaded(&a, &[1.0; 4], &mut y, &plan, false),
            Err(Error::Contract(_))
        ));
        assert!(ChunkPlan::new(vec![0, 3, 2]).is_err());
        assert!(ChunkPlan::new(vec![1, 4]).is_err());
    }

    #[test]
    fn uniform_rows_chunk_evenly() {
        let a = uniform(12, 5);
        assert_eq!(chunk_by_nonzeros(&a, 3).unwrap().boundaries(), [0, 4, 8, 12]);
        let plan = chunk_by_nonzeros(&a, 12).unwrap();
        assert!(plan.chunks().all(|r| r.len() == 1));
    }

    #[test]
    fn chunk_count_out_of_range() {
        let a = uniform(4, 1);
        assert!(chunk_by_nonzeros(&a, 0).is_err());
        assert!(chunk_by_nonzeros(&a, 5).is_err());
    }

    /// Brute force over all contiguous 2-way cuts: smallest achievable
    /// heaviest-chunk load.
    fn best_two_way(a: &CrsMatrix) -> usize {
        let p = a.row_ptr();
        (1..a.n_rows())
            .map(|c| p[c].max(a.nnz() - p[c]))
            .min()
            .unwrap()
    }

    #[test]
    fn skewed_matrix_isolates_heavy_row() {
        // Row 5 holds 40 of the 80 nonzeros.
        let mut entries = Vec::new();
        for i in 0..10 {
            let width = if i == 5 { 40 } else { 4 + (i % 2) * 2 };
            for j in 0..width {
                entries.push((i, j % 40, 1.0));
            }
        }
        let a = CrsMatrix::from_triplets(10, 40, &entries).unwrap();
        let plan = chunk_by_nonzeros(&a, 2).unwrap();
        let loads: Vec<usize> = plan
            .chunks()
            .map(|r| a.row_ptr()[r.end] - a.row_ptr()[r.start])
            .collect();
        let spread = loads.iter().max().unwrap() - loads.iter().min().unwrap();
        assert!(spread <= a.max_row_nnz());
        assert_eq!(*loads.iter().max().unwrap(), best_two_way(&a));
    }

    #[test]
    fn nearest_rounding_alone_is_refined() {
        // 16 light rows, heavy, 8 light, heavy, 16 light: rounding each cut to
        // the nearest boundary gives loads 16/28/16, which the refinement fixes.
        let mut widths = vec![1; 16];
        widths.push(10);
        widths.extend([1; 8]);
        widths.push(10);
        widths.extend([1; 16]);
        let entries: Vec<_> = widths
            .iter()
            .enumerate()
            .flat_map(|(i, &w)| (0..w).map(move |j| (i, j, 1.0)))
            .collect();
        let a = CrsMatrix::from_triplets(widths.len(), 10, &entries).unwrap();
        let plan = chunk_by_nonzeros(&a, 3).unwrap();
        let loads: Vec<usize> = plan
            .chunks()
            .map(|r| a.row_ptr()[r.end] - a.row_ptr()[r.start])
            .collect();
        assert!(loads.iter().max().unwrap() - loads.iter().min().unwrap() <= 10, "{loads:?}");
    }

    #[test]
    fn split_all_local_and_all_remote() {
        let (a, _) = random_matrix(8, 20, 3);
        let (local, remote) = split_columns(&a, 0..8).unwrap();
        assert_eq!(local, a);
        assert_eq!(remote.nnz(), 0);
        let (local, remote) = split_columns(&a, 3..3).unwrap();
        assert_eq!(local.nnz(), 0);
        assert_eq!(remote, a);
        assert!(split_columns(&a, 2..9).is_err());
    }

    #[test]
    fn split_membership_matches_filter() {
        let (a, _) = random_matrix(8, 20, 11);
        let (local, remote) = split_columns(&a, 0..4).unwrap();
        for i in 0..8 {
            let (cols, vals) = a.row(i);
            let expect_local: Vec<(u32, f64)> = cols
                .iter()
                .zip(vals)
                .filter(|(c, _)| **c < 4)
                .map(|(c, v)| (*c, *v))
                .collect();
            let expect_remote: Vec<(u32, f64)> = cols
                .iter()
                .zip(vals)
                .filter(|(c, _)| **c >= 4)
                .map(|(c, v)| (*c, *v))
                .collect();
            let (lc, lv) = local.row(i);
            let (rc, rv) = remote.row(i);
            assert_eq!(lc.iter().copied().zip(lv.iter().copied()).collect::<Vec<_>>(), expect_local);
            assert_eq!(rc.iter().copied().zip(rv.iter().copied()).collect::<Vec<_>>(), expect_remote);
        }
        assert_eq!(local.nnz() + remote.nnz(), a.nnz());
    }

    proptest! {
        #[test]
        fn oracle_equivalence(n in 1usize..40, fill in 0usize..200, seed in any::<u64>()) {
            let nnz = fill.min(n * n);
            let (a, x) = random_matrix(n, nnz, seed);
            let mut y = vec![0.0; n];
            spmv_full(&a, &x, &mut y, false).unwrap();
            prop_assert_eq!(y, dense_oracle(&a, &x));
        }

        #[test]
        fn threading_is_bitwise_deterministic(n in 1usize..200, seed in any::<u64>(), k in 1usize..8) {
            let (a, x) = random_matrix(n, n * 4, seed);
            let plan = chunk_by_nonzeros(&a, k.min(n)).unwrap();
            let mut serial = vec![0.0; n];
            spmv_full(&a, &x, &mut serial, false).unwrap();
            let mut y = vec![0.0; n];
            spmv_threaded(&a, &x, &mut y, &plan, false).unwrap();
            prop_assert!(y.iter().zip(&serial).all(|(p, q)| p.to_bits() == q.to_bits()));
        }

        #[test]
        fn chunk_spread_bounded_by_heaviest_row(
            widths in proptest::collection::vec(0usize..30, 1..120),
            k in 1usize..16,
        ) {
            let entries: Vec<_> = widths
                .iter()
                .enumerate()
                .flat_map(|(i, &w)| (0..w).map(move |j| (i, j, 1.0)))
                .collect();
            let a = CrsMatrix::from_triplets(widths.len(), 30, &entries).unwrap();
            let k = k.min(widths.len());
            let plan = chunk_by_nonzeros(&a, k).unwrap();
            prop_assert_eq!(plan.len(), k);
            prop_assert!(plan.chunks().all(|r| !r.is_empty()));
            let loads: Vec<usize> = plan.chunks().map(|r| a.row_ptr()[r.end] - a.row_ptr()[r.start]).collect();
            let spread = loads.iter().max().unwrap() - loads.iter().min().unwrap();
            prop_assert!(spread <= a.max_row_nnz(), "loads {:?} max row {}", loads, a.max_row_nnz());
        }

        #[test]
        fn split_consistency(n in 2usize..80, seed in any::<u64>(), cut in 0usize..80, width in 0usize..80) {
            let (a, x) = random_matrix(n, n * 5, seed);
            let lo = cut % n;
            let hi = (lo + width).min(n);
            let (local, remote) = split_columns(&a, lo..hi).unwrap();
            let mut y = vec![0.0; n];
            spmv_full(&local, &x[lo..hi], &mut y, false).unwrap();
            spmv_full(&remote, &x, &mut y, true).unwrap();
            let mut serial = vec![0.0; n];
            spmv_full(&a, &x, &mut serial, false).unwrap();
            let tol = 1e-13 * a.max_row_nnz().max(1) as f64;
            let scale = crate::test_util::row_abs_sums(&a, &x);
            for ((p, q), s) in y.iter().zip(&serial).zip(&scale) {
                prop_assert!((p - q).abs() <= tol * s, "{} vs {}", p, q);
            }
        }
    }
}
