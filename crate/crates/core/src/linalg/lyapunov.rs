use super::schur::RealSchur;
use super::symmetrize;
use crate::error::{Error, Result};
use nalgebra::{Complex, DMatrix};

/// Solves `A X + X Aᵀ + G = 0`.
pub fn solve_lyapunov(a: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    LyapunovSolver::new(a)?.solve(g)
}

/// Bartels–Stewart solver holding one real Schur factorization of `A`, so
/// that many right-hand sides (and the transposed equation) share it.
#[derive(Debug, Clone)]
pub struct LyapunovSolver {
    schur: RealSchur,
    // Reversal-permuted transpose of T, upper quasi-triangular, for Aᵀ X + X A.
    t_rev: DMatrix<f64>,
    blocks_rev: Vec<(usize, usize)>,
    tnorm: f64,
}

impl LyapunovSolver {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        Ok(Self::from_schur(RealSchur::new(a)?))
    }

    pub fn from_schur(schur: RealSchur) -> Self {
        let n = schur.dim();
        let t = schur.t();
        let t_rev = DMatrix::from_fn(n, n, |i, j| t[(n - 1 - j, n - 1 - i)]);
        let blocks_rev = schur
            .blocks()
            .iter()
            .rev()
            .map(|&(k, s)| (n - k - s, s))
            .collect();
        let tnorm = t.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Self { schur, t_rev, blocks_rev, tnorm }
    }

    pub fn schur(&self) -> &RealSchur {
        &self.schur
    }

    pub fn dim(&self) -> usize {
        self.schur.dim()
    }

    /// `A X + X Aᵀ + G = 0`.
    pub fn solve(&self, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_rhs(g)?;
        let q = self.schur.q();
        let c = -(q.transpose() * g * q);
        let y = solve_quasi(self.schur.t(), self.schur.blocks(), &c, self.tnorm)?;
        Ok(symmetrize(&(q * y * q.transpose())))
    }

    /// `Aᵀ X + X A + G = 0`.
    pub fn solve_transposed(&self, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_rhs(g)?;
        let n = self.dim();
        let q = self.schur.q();
        let c = -(q.transpose() * g * q);
        let c_rev = DMatrix::from_fn(n, n, |i, j| c[(n - 1 - i, n - 1 - j)]);
        let y_rev = solve_quasi(&self.t_rev, &self.blocks_rev, &c_rev, self.tnorm)?;
        let y = DMatrix::from_fn(n, n, |i, j| y_rev[(n - 1 - i, n - 1 - j)]);
        Ok(symmetrize(&(q * y * q.transpose())))
    }

    fn check_rhs(&self, g: &DMatrix<f64>) -> Result<()> {
        let n = self.dim();
        if g.nrows() != n || g.ncols() != n {
            return Err(Error::dim("G", format!("{n}x{n}"), format!("{}x{}", g.nrows(), g.ncols())));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("G".into()));
        }
        Ok(())
    }
}

/// Solves `T X + X Tᵀ = C` for upper quasi-triangular `T` with the given
/// diagonal blocks.
fn solve_quasi(
    t: &DMatrix<f64>,
    blocks: &[(usize, usize)],
    c: &DMatrix<f64>,
    tnorm: f64,
) -> Result<DMatrix<f64>> {
    let n = t.nrows();
    let mut x = DMatrix::<f64>::zeros(n, n);
    let tiny = 100.0 * f64::EPSILON * tnorm.max(f64::MIN_POSITIVE);
    for &(j0, bj) in blocks.iter().rev() {
        let jend = j0 + bj;
        // R = C[:, J] - X[:, L>J] T[J, L>J]ᵀ
        let mut r = c.columns(j0, bj).into_owned();
        if jend < n {
            let xl = x.columns(jend, n - jend);
            let tj = t.view((j0, jend), (bj, n - jend));
            r.gemm(-1.0, &xl, &tj.transpose(), 1.0);
        }
        for &(i0, bi) in blocks.iter().rev() {
            let sol = solve_small(t, i0, bi, j0, bj, &r, tiny)?;
            for cc in 0..bj {
                for ii in 0..bi {
                    x[(i0 + ii, j0 + cc)] = sol[ii + bi * cc];
                }
            }
            // R[0..i0, c] -= T[0..i0, I] X[I, c]
            if i0 > 0 {
                for cc in 0..bj {
                    for ii in 0..bi {
                        let xv = sol[ii + bi * cc];
                        if xv != 0.0 {
                            let tcol = t.column(i0 + ii);
                            r.column_mut(cc).rows_mut(0, i0).axpy(-xv, &tcol.rows(0, i0), 1.0);
                        }
                    }
                }
            }
        }
    }
    Ok(x)
}

fn solve_small(
    t: &DMatrix<f64>,
    i0: usize,
    bi: usize,
    j0: usize,
    bj: usize,
    r: &DMatrix<f64>,
    tiny: f64,
) -> Result<[f64; 4]> {
    let dim = bi * bj;
    let mut m = [[0.0f64; 4]; 4];
    let mut rhs = [0.0f64; 4];
    // (I_b ⊗ T_II + T_JJ ⊗ I_a) vec X = vec R, column-major vec.
    for cj in 0..bj {
        for ri in 0..bi {
            let row = ri + bi * cj;
            rhs[row] = r[(i0 + ri, cj)];
            for ck in 0..bj {
                for rk in 0..bi {
                    let col = rk + bi * ck;
                    let mut v = 0.0;
                    if cj == ck {
                        v += t[(i0 + ri, i0 + rk)];
                    }
                    if ri == rk {
                        v += t[(j0 + cj, j0 + ck)];
                    }
                    m[row][col] = v;
                }
            }
        }
    }
    let lam_i = block_eigs(t, i0, bi);
    let lam_j = block_eigs(t, j0, bj);
    let mut worst = Complex::new(f64::INFINITY, 0.0);
    for li in &lam_i[..bi] {
        for lj in &lam_j[..bj] {
            let s = li + lj;
            if s.norm() < worst.norm() {
                worst = s;
            }
        }
    }
    if worst.norm() <= tiny {
        return Err(Error::SingularSylvester { eigenvalue_sum: worst });
    }
    for col in 0..dim {
        let mut piv = col;
        for row in (col + 1)..dim {
            if m[row][col].abs() > m[piv][col].abs() {
                piv = row;
            }
        }
        if m[piv][col] == 0.0 {
            return Err(Error::SingularSylvester { eigenvalue_sum: worst });
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for row in (col + 1)..dim {
            let f = m[row][col] / m[col][col];
            if f != 0.0 {
                for k in col..dim {
                    m[row][k] -= f * m[col][k];
                }
                rhs[row] -= f * rhs[col];
            }
        }
    }
    let mut out = [0.0f64; 4];
    for row in (0..dim).rev() {
        let mut s = rhs[row];
        for k in (row + 1)..dim {
            s -= m[row][k] * out[k];
        }
        out[row] = s / m[row][row];
    }
    Ok(out)
}

fn block_eigs(t: &DMatrix<f64>, k: usize, s: usize) -> [Complex<f64>; 2] {
    if s == 1 {
        return [Complex::new(t[(k, k)], 0.0); 2];
    }
    let (a, b, c, d) = (t[(k, k)], t[(k, k + 1)], t[(k + 1, k)], t[(k + 1, k + 1)]);
    let mid = 0.5 * (a + d);
    let disc = 0.25 * (a - d) * (a - d) + b * c;
    let s = Complex::new(disc, 0.0).sqrt();
    [Complex::new(mid, 0.0) + s, Complex::new(mid, 0.0) - s]
}
