//! Independent reference routines for unit tests.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::sparse::CrsMatrix;

/// Random `n x n` matrix with exactly `nnz` distinct entries (columns sorted
/// within each row) and a random right-hand side.
pub fn random_matrix(n: usize, nnz: usize, seed: u64) -> (CrsMatrix, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nnz = nnz.min(n * n);
    let mut cells = sample(&mut rng, n * n, nnz).into_vec();
    cells.sort_unstable();
    let entries: Vec<_> = cells
        .into_iter()
        .map(|c| (c / n, c % n, rng.gen_range(-1.0..1.0)))
        .collect();
    let x = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    (CrsMatrix::from_triplets(n, n, &entries).unwrap(), x)
}

/// Dense row-major product summing every column in ascending order.
pub fn dense_oracle(a: &CrsMatrix, x: &[f64]) -> Vec<f64> {
    let mut dense = vec![vec![0.0; a.n_cols()]; a.n_rows()];
    for (i, row) in dense.iter_mut().enumerate() {
        let (cols, vals) = a.row(i);
        for (&c, &v) in cols.iter().zip(vals) {
            row[c as usize] += v;
        }
    }
    dense
        .iter()
        .map(|row| {
            let mut s = 0.0;
            for (d, xj) in row.iter().zip(x) {
                s += d * xj;
            }
            s
        })
        .collect()
}

/// `sum_j |a_ij x_j|` per row.
pub fn row_abs_sums(a: &CrsMatrix, x: &[f64]) -> Vec<f64> {
    (0..a.n_rows())
        .map(|i| {
            let (cols, vals) = a.row(i);
            cols.iter().zip(vals).map(|(&c, v)| (v * x[c as usize]).abs()).sum()
        })
        .collect()
}
