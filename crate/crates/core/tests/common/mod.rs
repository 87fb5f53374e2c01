#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use orbitfix::measurement::AmbiguityId;
use orbitfix::positioning::{LinearizedEpoch, SolveMode};
use rand::Rng;

/// `A A^T + floor I` with entries of `A` uniform in [-1, 1].
pub fn random_spd<R: Rng>(rng: &mut R, n: usize, floor: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(n, n) * floor
}

/// Box radius that is guaranteed to contain the integer least-squares
/// minimiser: the rounded vector has residual at most `n / (4 lmin)`, and
/// any point outside `round +- R` has residual at least `(R - 1/2)^2 / lmax`.
pub fn safe_box_radius(q: &DMatrix<f64>) -> i64 {
    let eig = q.clone().symmetric_eigen().eigenvalues;
    let lmin = eig.min();
    let lmax = eig.max();
    let bound = q.nrows() as f64 / (4.0 * lmin);
    ((bound * lmax).sqrt() + 1.5).ceil() as i64
}

/// Condition number from an eigen-decomposition of `A^T A`.
pub fn gram_eigen_condition(a: &DMatrix<f64>) -> f64 {
    let g = a.transpose() * a;
    let eig = g.symmetric_eigen().eigenvalues;
    (eig.max() / eig.min()).sqrt()
}

/// Normal equations from one stacked design matrix over all epochs, with a
/// block-diagonal weight. Columns: position, then ambiguities in `order`.
pub fn batch_normal_equations(
    epochs: &[LinearizedEpoch],
    mode: SolveMode,
    order: &[AmbiguityId],
) -> (DMatrix<f64>, DVector<f64>) {
    let col: BTreeMap<AmbiguityId, usize> = order.iter().enumerate().map(|(k, id)| (*id, 3 + k)).collect();
    let n = 3 + order.len();
    let use_code = matches!(mode, SolveMode::DelayOnly | SolveMode::Joint);
    let use_phase = matches!(mode, SolveMode::Joint | SolveMode::PhaseOnly);
    let rows: usize = epochs
        .iter()
        .map(|e| (use_code as usize) * e.code_rows.nrows() + (use_phase as usize) * e.phase_rows.nrows())
        .sum();
    let mut a = DMatrix::zeros(rows, n);
    let mut w = DMatrix::zeros(rows, rows);
    let mut y = DVector::zeros(rows);
    let mut r0 = 0;
    for e in epochs {
        let m = e.code_rows.nrows();
        if use_code {
            for i in 0..m {
                for c in 0..3 {
                    a[(r0 + i, c)] = e.code_rows[(i, c)];
                }
                y[r0 + i] = e.code_residual[i];
                for j in 0..m {
                    w[(r0 + i, r0 + j)] = e.code_weight[(i, j)];
                }
            }
            r0 += m;
        }
        if use_phase {
            for i in 0..m {
                for c in 0..3 {
                    a[(r0 + i, c)] = e.phase_rows[(i, c)];
                }
                for (k, id) in e.ambiguity_ids.iter().enumerate() {
                    a[(r0 + i, col[id])] = e.phase_rows[(i, 3 + k)];
                }
                y[r0 + i] = e.phase_residual[i];
                for j in 0..m {
                    w[(r0 + i, r0 + j)] = e.phase_weight[(i, j)];
                }
            }
            r0 += m;
        }
    }
    let at_w = a.transpose() * &w;
    (&at_w * &a, &at_w * &y)
}

pub fn max_relative_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = a.abs().max().max(b.abs().max()).max(f64::MIN_POSITIVE);
    (a - b).abs().max() / scale
}
