//! Dense kernels behind the Gramian layer.
//!
//! Everything here works on `nalgebra::DMatrix<f64>` (complex arithmetic stays
//! inside the logarithm and the shifted Hessenberg solves). All functions are
//! pure; the only shared state is a pair of thread-local counters recording how
//! many full matrix exponentials and logarithms the current thread evaluated,
//! which the cost comparison uses to prove the Laguerre path never forms them.

mod expm;
mod factor;
mod hessenberg;
mod logm;
mod lyapunov;
mod schur;

pub use expm::{expm_action, matrix_exponential};
pub use factor::{
    cholesky, compress_columns, compress_indefinite, semidef_factor, semidef_factor_diag, scale_columns, svd,
    CholeskyFactor, LdlFactor, SemidefFactor,
    SvdFactors, DEFAULT_TRUNCATION_TOL,
};
pub use hessenberg::{ShiftedLu, ShiftedSolver};
pub use logm::{principal_log_ratio, principal_log_ratio_with};
pub use lyapunov::{solve_lyapunov, LyapunovSolver};
pub use schur::{ComplexSchur, EigenTriplet, RealSchur};

use nalgebra::DMatrix;
use std::cell::Cell;

thread_local! {
    static EXPM_CALLS: Cell<u64> = const { Cell::new(0) };
    static LOGM_CALLS: Cell<u64> = const { Cell::new(0) };
}

/// Number of full (n×n) matrix exponentials evaluated on this thread.
pub fn expm_calls() -> u64 {
    EXPM_CALLS.with(Cell::get)
}

/// Number of full matrix logarithms evaluated on this thread.
pub fn logm_calls() -> u64 {
    LOGM_CALLS.with(Cell::get)
}

pub(crate) fn count_expm() {
    EXPM_CALLS.with(|c| c.set(c.get() + 1));
}

pub(crate) fn count_logm() {
    LOGM_CALLS.with(|c| c.set(c.get() + 1));
}

/// `(X + Xᵀ)/2`, bitwise symmetric.
pub fn symmetrize(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut out = x.clone();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (x[(i, j)] + x[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Relative asymmetry `‖X − Xᵀ‖_F / ‖X‖_F` (0 for the zero matrix).
pub fn asymmetry(x: &DMatrix<f64>) -> f64 {
    let norm = x.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (x - x.transpose()).norm() / norm
}

pub(crate) fn one_norm(x: &DMatrix<f64>) -> f64 {
    x.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// True when every entry below the first subdiagonal is exactly zero.
pub(crate) fn is_upper_hessenberg(a: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    (0..n).all(|j| ((j + 2)..n).all(|i| a[(i, j)] == 0.0))
}

/// `(start, size)` of the 1×1 and 2×2 diagonal blocks when `A` has no
/// nonzeros outside them.
pub(crate) fn diagonal_blocks(a: &DMatrix<f64>) -> Option<Vec<(usize, usize)>> {
    let n = a.nrows();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        let size = if i + 1 < n && (a[(i + 1, i)] != 0.0 || a[(i, i + 1)] != 0.0) { 2 } else { 1 };
        blocks.push((i, size));
        i += size;
    }
    for &(s, size) in &blocks {
        for r in s..s + size {
            for c in 0..n {
                if (c < s || c >= s + size) && a[(r, c)] != 0.0 {
                    return None;
                }
            }
        }
    }
    Some(blocks)
}

/// Eigenvalues of a symmetric matrix, sorted descending.
pub fn symmetric_eigenvalues_desc(x: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = symmetrize(x).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}
