use crate::error::{Error, Result};
use nalgebra::{Complex, DMatrix, Schur};

type C64 = Complex<f64>;

/// Real Schur form `A = Q T Qᵀ` with `T` upper quasi-triangular.
///
/// Every 2×2 diagonal block of `T` carries a complex-conjugate eigenvalue pair;
/// real eigenvalues always sit on 1×1 blocks. Entries below the block
/// structure are exactly zero.
#[derive(Debug, Clone)]
pub struct RealSchur {
    q: DMatrix<f64>,
    t: DMatrix<f64>,
    blocks: Vec<(usize, usize)>,
}

impl RealSchur {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::dim("A", format!("{n}x{n}"), format!("{}x{}", n, a.ncols())));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("A".into()));
        }
        if n == 0 {
            return Ok(Self { q: DMatrix::zeros(0, 0), t: DMatrix::zeros(0, 0), blocks: vec![] });
        }
        let schur = Schur::try_new(a.clone(), f64::EPSILON, 200 * n.max(10))
            .ok_or(Error::EigenNonConvergence)?;
        let (mut q, mut t) = schur.unpack();
        for j in 0..n {
            for i in (j + 2)..n {
                t[(i, j)] = 0.0;
            }
        }
        let mut blocks = Vec::with_capacity(n);
        let mut k = 0;
        while k < n {
            if k + 1 < n && t[(k + 1, k)] != 0.0 {
                let (a11, a12, a21, a22) = (t[(k, k)], t[(k, k + 1)], t[(k + 1, k)], t[(k + 1, k + 1)]);
                let half = 0.5 * (a11 - a22);
                let disc = half * half + a12 * a21;
                if disc >= 0.0 {
                    split_real_block(&mut t, &mut q, k);
                    blocks.push((k, 1));
                    blocks.push((k + 1, 1));
                } else {
                    blocks.push((k, 2));
                }
                k += 2;
            } else {
                blocks.push((k, 1));
                k += 1;
            }
        }
        Ok(Self { q, t, blocks })
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn t(&self) -> &DMatrix<f64> {
        &self.t
    }

    /// Diagonal blocks as `(start, size)` with size 1 or 2, in order.
    pub fn blocks(&self) -> &[(usize, usize)] {
        &self.blocks
    }

    pub fn dim(&self) -> usize {
        self.t.nrows()
    }

    pub fn eigenvalues(&self) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.dim());
        for &(k, s) in &self.blocks {
            if s == 1 {
                out.push(C64::new(self.t[(k, k)], 0.0));
            } else {
                let (l1, l2) = block_eigenvalues(&self.t, k);
                out.push(l1);
                out.push(l2);
            }
        }
        out
    }

    pub fn spectral_abscissa(&self) -> f64 {
        self.eigenvalues().iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Unitary reduction of the quasi-triangular form to a triangular one.
    pub fn to_complex(&self) -> ComplexSchur {
        let n = self.dim();
        let mut t = self.t.map(|v| C64::new(v, 0.0));
        let mut w = self.q.map(|v| C64::new(v, 0.0));
        for &(k, s) in &self.blocks {
            if s != 2 {
                continue;
            }
            let (lambda, _) = block_eigenvalues(&self.t, k);
            // Eigenvector of the 2x2 block for `lambda`.
            let b11 = t[(k, k)];
            let b12 = t[(k, k + 1)];
            let (mut v1, mut v2) = (b12, lambda - b11);
            let nv = (v1.norm_sqr() + v2.norm_sqr()).sqrt();
            v1 /= nv;
            v2 /= nv;
            // G = [[v1, -conj(v2)], [v2, conj(v1)]]
            let g = [[v1, -v2.conj()], [v2, v1.conj()]];
            for j in k..n {
                let (x, y) = (t[(k, j)], t[(k + 1, j)]);
                t[(k, j)] = g[0][0].conj() * x + g[1][0].conj() * y;
                t[(k + 1, j)] = g[0][1].conj() * x + g[1][1].conj() * y;
            }
            for i in 0..(k + 2) {
                let (x, y) = (t[(i, k)], t[(i, k + 1)]);
                t[(i, k)] = x * g[0][0] + y * g[1][0];
                t[(i, k + 1)] = x * g[0][1] + y * g[1][1];
            }
            for i in 0..n {
                let (x, y) = (w[(i, k)], w[(i, k + 1)]);
                w[(i, k)] = x * g[0][0] + y * g[1][0];
                w[(i, k + 1)] = x * g[0][1] + y * g[1][1];
            }
            t[(k + 1, k)] = C64::new(0.0, 0.0);
        }
        ComplexSchur { w, t }
    }
}

fn block_eigenvalues(t: &DMatrix<f64>, k: usize) -> (C64, C64) {
    let (a11, a12, a21, a22) = (t[(k, k)], t[(k, k + 1)], t[(k + 1, k)], t[(k + 1, k + 1)]);
    let mid = 0.5 * (a11 + a22);
    let half = 0.5 * (a11 - a22);
    let disc = half * half + a12 * a21;
    if disc >= 0.0 {
        let s = disc.sqrt();
        (C64::new(mid + s, 0.0), C64::new(mid - s, 0.0))
    } else {
        let s = (-disc).sqrt();
        (C64::new(mid, s), C64::new(mid, -s))
    }
}

/// Rotates a 2×2 block with real eigenvalues into upper-triangular form.
fn split_real_block(t: &mut DMatrix<f64>, q: &mut DMatrix<f64>, k: usize) {
    let n = t.nrows();
    let (a11, a12, a21, a22) = (t[(k, k)], t[(k, k + 1)], t[(k + 1, k)], t[(k + 1, k + 1)]);
    let half = 0.5 * (a11 - a22);
    let disc = (half * half + a12 * a21).max(0.0).sqrt();
    let mid = 0.5 * (a11 + a22);
    let lambda = if half >= 0.0 { mid + disc } else { mid - disc };
    // Eigenvector (x, y) for lambda, whichever formulation is better conditioned.
    let (mut x, mut y) = if (lambda - a11).abs() + a12.abs() >= (lambda - a22).abs() + a21.abs() {
        (a12, lambda - a11)
    } else {
        (lambda - a22, a21)
    };
    let r = x.hypot(y);
    if r == 0.0 {
        t[(k + 1, k)] = 0.0;
        return;
    }
    x /= r;
    y /= r;
    // G = [[x, -y], [y, x]]
    for j in k..n {
        let (u, v) = (t[(k, j)], t[(k + 1, j)]);
        t[(k, j)] = x * u + y * v;
        t[(k + 1, j)] = -y * u + x * v;
    }
    for i in 0..(k + 2).min(n) {
        let (u, v) = (t[(i, k)], t[(i, k + 1)]);
        t[(i, k)] = x * u + y * v;
        t[(i, k + 1)] = -y * u + x * v;
    }
    for i in 0..n {
        let (u, v) = (q[(i, k)], q[(i, k + 1)]);
        q[(i, k)] = x * u + y * v;
        q[(i, k + 1)] = -y * u + x * v;
    }
    t[(k + 1, k)] = 0.0;
}

/// Complex Schur form `A = W T Wᴴ` with `T` upper triangular.
#[derive(Debug, Clone)]
pub struct ComplexSchur {
    w: DMatrix<C64>,
    t: DMatrix<C64>,
}

/// Eigenvalue with its right/left eigenvector projections through `B` and `C`.
#[derive(Debug, Clone)]
pub struct EigenTriplet {
    pub lambda: C64,
    /// `‖C x‖` (or `‖x‖` when `C` is empty) for the right eigenvector `x`.
    pub right_norm: f64,
    /// `‖yᴴ B‖` for the left eigenvector `y`.
    pub left_norm: f64,
    /// `|yᴴ x|`.
    pub overlap: f64,
    /// Set when back-substitution met a (near-)repeated eigenvalue.
    pub defective: bool,
}

impl ComplexSchur {
    pub fn w(&self) -> &DMatrix<C64> {
        &self.w
    }

    pub fn t(&self) -> &DMatrix<C64> {
        &self.t
    }

    pub fn eigenvalues(&self) -> Vec<C64> {
        (0..self.t.nrows()).map(|i| self.t[(i, i)]).collect()
    }

    /// Right/left eigenvector data for every eigenvalue, projected through
    /// `B` (n×m) and `C` (p×n) without forming the n-vectors in the original
    /// basis.
    pub fn triplets(&self, b: &DMatrix<f64>, c: &DMatrix<f64>) -> Vec<EigenTriplet> {
        let n = self.t.nrows();
        let bc = b.map(|v| C64::new(v, 0.0));
        let wb = self.w.adjoint() * bc; // n×m
        let use_c = c.nrows() > 0 && c.iter().any(|v| *v != 0.0);
        let cw = if use_c { Some(c.map(|v| C64::new(v, 0.0)) * &self.w) } else { None };
        let tnorm = self.t.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let small = f64::EPSILON * tnorm;

        let mut out = Vec::with_capacity(n);
        let mut x = vec![C64::new(0.0, 0.0); n];
        let mut y = vec![C64::new(0.0, 0.0); n];
        for k in 0..n {
            let lambda = self.t[(k, k)];
            let mut defective = false;
            // Right: (T - λI) x = 0, x_k = 1, x_{>k} = 0.
            x[k] = C64::new(1.0, 0.0);
            for i in (0..k).rev() {
                let mut s = C64::new(0.0, 0.0);
                for j in (i + 1)..=k {
                    s += self.t[(i, j)] * x[j];
                }
                let mut d = self.t[(i, i)] - lambda;
                if d.norm() <= small {
                    defective = true;
                    d = C64::new(small, 0.0);
                }
                x[i] = -s / d;
            }
            // Left: yᴴ (T - λI) = 0, y_k = 1, y_{<k} = 0.
            y[k] = C64::new(1.0, 0.0);
            for i in (k + 1)..n {
                let mut s = C64::new(0.0, 0.0);
                for j in k..i {
                    s += y[j].conj() * self.t[(j, i)];
                }
                let mut d = self.t[(i, i)] - lambda;
                if d.norm() <= small {
                    defective = true;
                    d = C64::new(small, 0.0);
                }
                // conj(y_i) * d = -s
                y[i] = (-s / d).conj();
            }
            let overlap = (y[k].conj() * x[k]).norm();
            // W is unitary, so inner products and norms carry over from the Schur basis.
            let right_norm = match &cw {
                Some(cw) => {
                    let mut acc = 0.0;
                    for r in 0..cw.nrows() {
                        let mut s = C64::new(0.0, 0.0);
                        for j in 0..=k {
                            s += cw[(r, j)] * x[j];
                        }
                        acc += s.norm_sqr();
                    }
                    acc.sqrt()
                }
                None => (0..=k).map(|j| x[j].norm_sqr()).sum::<f64>().sqrt(),
            };
            let mut left_sq = 0.0;
            for col in 0..wb.ncols() {
                let mut s = C64::new(0.0, 0.0);
                for i in k..n {
                    s += y[i].conj() * wb[(i, col)];
                }
                left_sq += s.norm_sqr();
            }
            for v in x.iter_mut().take(k + 1) {
                *v = C64::new(0.0, 0.0);
            }
            for v in y.iter_mut().skip(k) {
                *v = C64::new(0.0, 0.0);
            }
            out.push(EigenTriplet {
                lambda,
                right_norm,
                left_norm: left_sq.sqrt(),
                overlap,
                defective,
            });
        }
        out
    }
}
