use super::is_upper_hessenberg;
use crate::error::{Error, Result};
use nalgebra::{Complex, DMatrix};

type C64 = Complex<f64>;

/// Repeated shifted solves `(A + pI) x = b` and `(Aᵀ + pI) x = b`.
///
/// `A` is reduced once to upper Hessenberg form `A = Q H Qᵀ` (skipped when it
/// already is Hessenberg); each shift then costs one banded LU with
/// adjacent-row pivoting, `O(n·w)` for upper bandwidth `w` of `H`.
#[derive(Debug, Clone)]
pub struct ShiftedSolver {
    h: DMatrix<f64>,
    q: Option<DMatrix<f64>>,
    upper_bw: usize,
    scale: f64,
}

/// Banded LU of `H + pI` for one shift.
#[derive(Debug, Clone)]
pub struct ShiftedLu {
    shift: C64,
    // Row k of U starts at column k; width upper_bw + 2.
    u: Vec<Vec<C64>>,
    mult: Vec<C64>,
    swapped: Vec<bool>,
}

impl ShiftedSolver {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::dim("A", format!("{n}x{n}"), format!("{}x{}", n, a.ncols())));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("A".into()));
        }
        let (h, q) = if is_upper_hessenberg(a) {
            (a.clone(), None)
        } else {
            let (q, mut h) = a.clone().hessenberg().unpack();
            for j in 0..n {
                for i in (j + 2)..n {
                    h[(i, j)] = 0.0;
                }
            }
            (h, Some(q))
        };
        let mut upper_bw = 0;
        for j in 0..n {
            for i in 0..j {
                if h[(i, j)] != 0.0 {
                    upper_bw = upper_bw.max(j - i);
                    break;
                }
            }
        }
        let scale = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(Self { h, q, upper_bw, scale })
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn upper_bandwidth(&self) -> usize {
        self.upper_bw
    }

    pub fn factor(&self, p: C64) -> Result<ShiftedLu> {
        let n = self.dim();
        let w = self.upper_bw + 2;
        let tiny = 1e3 * f64::EPSILON * (self.scale + p.norm()).max(f64::MIN_POSITIVE);
        let row = |i: usize, start: usize| -> Vec<C64> {
            let mut r = vec![C64::new(0.0, 0.0); w];
            for (c, slot) in r.iter_mut().enumerate() {
                let j = start + c;
                if j < n && j + 1 >= i {
                    let mut v = C64::new(self.h[(i, j)], 0.0);
                    if i == j {
                        v += p;
                    }
                    *slot = v;
                }
            }
            r
        };
        let mut u = Vec::with_capacity(n);
        let mut mult = vec![C64::new(0.0, 0.0); n.saturating_sub(1)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        if n == 0 {
            return Ok(ShiftedLu { shift: p, u, mult, swapped });
        }
        let mut r = row(0, 0);
        for k in 0..n {
            if k == n - 1 {
                if r[0].norm() <= tiny {
                    return Err(Error::SingularShift { shift: p });
                }
                u.push(r);
                break;
            }
            let mut s = row(k + 1, k);
            if s[0].norm() > r[0].norm() {
                std::mem::swap(&mut r, &mut s);
                swapped[k] = true;
            }
            if r[0].norm() <= tiny {
                return Err(Error::SingularShift { shift: p });
            }
            let l = s[0] / r[0];
            mult[k] = l;
            if l != C64::new(0.0, 0.0) {
                for c in 0..w {
                    s[c] -= l * r[c];
                }
            }
            u.push(r);
            s.remove(0);
            s.push(C64::new(0.0, 0.0));
            r = s;
        }
        Ok(ShiftedLu { shift: p, u, mult, swapped })
    }

    /// `(A + pI)^{-1} B` for complex `B`.
    pub fn solve(&self, lu: &ShiftedLu, b: &DMatrix<C64>) -> DMatrix<C64> {
        let mut x = self.to_h(b);
        for mut col in x.column_iter_mut() {
            lu.solve_in_place(col.as_mut_slice());
        }
        self.from_h(x)
    }

    /// `(Aᵀ + pI)^{-1} B` for complex `B`.
    pub fn solve_transposed(&self, lu: &ShiftedLu, b: &DMatrix<C64>) -> DMatrix<C64> {
        let mut x = self.to_h(b);
        for mut col in x.column_iter_mut() {
            lu.solve_transposed_in_place(col.as_mut_slice());
        }
        self.from_h(x)
    }

    /// Real-shift convenience: `(A + pI)^{-1} B` (or the transposed system)
    /// for real `p` and real `B`.
    pub fn solve_real(&self, p: f64, b: &DMatrix<f64>, transposed: bool) -> Result<DMatrix<f64>> {
        let lu = self.factor(C64::new(p, 0.0))?;
        let bc = b.map(|v| C64::new(v, 0.0));
        let x = if transposed { self.solve_transposed(&lu, &bc) } else { self.solve(&lu, &bc) };
        Ok(x.map(|z| z.re))
    }

    fn to_h(&self, b: &DMatrix<C64>) -> DMatrix<C64> {
        match &self.q {
            None => b.clone(),
            Some(q) => real_left_mul_t(q, b),
        }
    }

    fn from_h(&self, x: DMatrix<C64>) -> DMatrix<C64> {
        match &self.q {
            None => x,
            Some(q) => real_left_mul(q, &x),
        }
    }
}

fn real_left_mul(q: &DMatrix<f64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    let re = q * b.map(|z| z.re);
    let im = q * b.map(|z| z.im);
    re.zip_map(&im, C64::new)
}

fn real_left_mul_t(q: &DMatrix<f64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    let re = q.tr_mul(&b.map(|z| z.re));
    let im = q.tr_mul(&b.map(|z| z.im));
    re.zip_map(&im, C64::new)
}

impl ShiftedLu {
    pub fn shift(&self) -> C64 {
        self.shift
    }

    fn solve_in_place(&self, x: &mut [C64]) {
        let n = self.u.len();
        for k in 0..n.saturating_sub(1) {
            if self.swapped[k] {
                x.swap(k, k + 1);
            }
            let t = x[k];
            x[k + 1] -= self.mult[k] * t;
        }
        for k in (0..n).rev() {
            let row = &self.u[k];
            let mut s = x[k];
            for (c, v) in row.iter().enumerate().skip(1) {
                if k + c < n {
                    s -= v * x[k + c];
                }
            }
            x[k] = s / row[0];
        }
    }

    fn solve_transposed_in_place(&self, x: &mut [C64]) {
        let n = self.u.len();
        // Uᵀ y = b
        for k in 0..n {
            x[k] /= self.u[k][0];
            let yk = x[k];
            for (c, v) in self.u[k].iter().enumerate().skip(1) {
                if k + c < n {
                    x[k + c] -= v * yk;
                }
            }
        }
        for k in (0..n.saturating_sub(1)).rev() {
            let t = x[k + 1];
            x[k] -= self.mult[k] * t;
            if self.swapped[k] {
                x.swap(k, k + 1);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn check(a: &DMatrix<f64>, p: C64) {
        let n = a.nrows();
        let solver = ShiftedSolver::new(a).unwrap();
        let lu = solver.factor(p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b = DMatrix::from_fn(n, 3, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let ac = a.map(|v| C64::new(v, 0.0)) + DMatrix::<C64>::identity(n, n) * p;
        let x = solver.solve(&lu, &b);
        assert!((&ac * &x - &b).norm() < 1e-12 * b.norm() * (1.0 + ac.norm()));
        let y = solver.solve_transposed(&lu, &b);
        assert!((ac.transpose() * &y - &b).norm() < 1e-12 * b.norm() * (1.0 + ac.norm()));
    }

    #[test]
    fn dense_matrix_complex_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = DMatrix::from_fn(12, 12, |_, _| rng.random_range(-1.0..1.0));
        check(&a, C64::new(0.7, -1.3));
        check(&a, C64::new(-2.0, 0.0));
    }

    #[test]
    fn block_diagonal_is_banded() {
        let mut a = DMatrix::zeros(10, 10);
        for k in 0..5 {
            let w = 1.0 + k as f64;
            a[(2 * k, 2 * k + 1)] = w;
            a[(2 * k + 1, 2 * k)] = -w;
            a[(2 * k + 1, 2 * k + 1)] = -0.2 * w;
        }
        let s = ShiftedSolver::new(&a).unwrap();
        assert_eq!(s.upper_bandwidth(), 1);
        check(&a, C64::new(0.3, 2.0));
    }

    #[test]
    fn singular_shift_detected() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]);
        let s = ShiftedSolver::new(&a).unwrap();
        assert!(matches!(s.factor(C64::new(1.0, 0.0)), Err(Error::SingularShift { .. })));
    }
}
