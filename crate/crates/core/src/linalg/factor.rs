use super::symmetrize;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Relative eigenvalue threshold used when none is given.
pub const DEFAULT_TRUNCATION_TOL: f64 = 1e-12;

/// `L D Lᵀ` with tall `L` (n×k) and symmetric, possibly indefinite `D` (k×k).
#[derive(Debug, Clone)]
pub struct LdlFactor {
    pub l: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl LdlFactor {
    pub fn new(l: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        if d.nrows() != l.ncols() || d.ncols() != l.ncols() {
            return Err(Error::dim("D", format!("{0}x{0}", l.ncols()), format!("{}x{}", d.nrows(), d.ncols())));
        }
        Ok(Self { l, d: symmetrize(&d) })
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        symmetrize(&(&self.l * &self.d * self.l.transpose()))
    }
}

/// `Z Zᵀ` approximation of an `L D Lᵀ` product.
#[derive(Debug, Clone)]
pub struct SemidefFactor {
    pub z: DMatrix<f64>,
    /// Retained eigenvalues of `R D Rᵀ`, descending.
    pub retained_eigenvalues: Vec<f64>,
    pub truncation_tol: f64,
    /// Eigenvalues below `-tol·max|λ|`, i.e. genuine indefiniteness.
    pub negative_warnings: usize,
    /// Sum of magnitudes of all dropped eigenvalues.
    pub discarded_mass: f64,
}

/// Thin QR of `L`, eigendecomposition of `R D Rᵀ`, keep eigenvalues above
/// `tol·max|λ|` and return `Z = U₁ U₂ Λ^{1/2}`. Wide `L` (more columns than
/// rows) skips the QR and decomposes `L D Lᵀ` directly.
pub fn semidef_factor(ldl: &LdlFactor, tol: f64) -> SemidefFactor {
    let (basis, lam) = reduced_eigen(&ldl.l, |r| r * &ldl.d);
    truncate_psd(ldl.l.nrows(), basis, lam, tol)
}

/// [`semidef_factor`] for a diagonal middle factor given by its entries.
pub fn semidef_factor_diag(l: &DMatrix<f64>, d: &[f64], tol: f64) -> SemidefFactor {
    assert_eq!(l.ncols(), d.len(), "diagonal length must match the columns of L");
    let (basis, lam) = reduced_eigen(l, |r| scale_columns(r, d));
    truncate_psd(l.nrows(), basis, lam, tol)
}

/// Rewrites `L D Lᵀ` as `U diag(λ) Uᵀ` with orthonormal `U`, keeping every
/// eigenvalue with `|λ| > tol·max|λ|` regardless of sign.
pub fn compress_indefinite(l: &DMatrix<f64>, d: &DMatrix<f64>, tol: f64) -> (DMatrix<f64>, Vec<f64>) {
    let (basis, lam) = reduced_eigen(l, |r| r * d);
    let max_abs = lam.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let keep: Vec<usize> = (0..lam.len()).filter(|&i| max_abs > 0.0 && lam[i].abs() > tol * max_abs).collect();
    let mut u = DMatrix::zeros(l.nrows(), keep.len());
    for (c, &i) in keep.iter().enumerate() {
        u.set_column(c, &basis.column(i));
    }
    (u, keep.iter().map(|&i| lam[i]).collect())
}

/// `M diag(d)`.
pub fn scale_columns(m: &DMatrix<f64>, d: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, s) in d.iter().enumerate() {
        out.column_mut(j).scale_mut(*s);
    }
    out
}

/// Column count above which [`reduced_eigen`] builds a truncated basis block
/// by block instead of taking a full QR.
const BLOCKED_ABOVE: usize = 64;
const BLOCK: usize = 32;

/// Orthonormal `U` and `λ` with `L D Lᵀ = U diag(λ) Uᵀ`; `weigh(R)` must
/// return `R D` for any `R` with `L = U₁ R`.
fn reduced_eigen<F>(l: &DMatrix<f64>, weigh: F) -> (DMatrix<f64>, Vec<f64>)
where
    F: Fn(&DMatrix<f64>) -> DMatrix<f64>,
{
    let (n, k) = l.shape();
    if n == 0 || k == 0 {
        return (DMatrix::zeros(n, 0), vec![]);
    }
    let (u1, r) = if k > BLOCKED_ABOVE {
        let (u, g) = truncated_range(l);
        (Some(u), g)
    } else if k <= n {
        let qr = l.clone().qr();
        (Some(qr.q()), qr.r())
    } else {
        (None, l.clone())
    };
    if r.nrows() == 0 {
        return (DMatrix::zeros(n, 0), vec![]);
    }
    let core = symmetrize(&(weigh(&r) * r.transpose()));
    let eig = core.symmetric_eigen();
    let basis = match u1 {
        Some(u1) => u1 * eig.eigenvectors,
        None => eig.eigenvectors,
    };
    (basis, eig.eigenvalues.iter().copied().collect())
}

/// Orthonormal basis `U` of the numerical range of `L` and coordinates `G`
/// with `L ≈ U G`, grown one column block at a time: two Gram–Schmidt passes
/// against the current basis, then an SVD of the remainder keeping singular
/// values above `1e-13` times the largest column norm of `L`.
fn truncated_range(l: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, k) = l.shape();
    let scale = l.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    let cut = 1e-13 * scale;
    let mut u = DMatrix::<f64>::zeros(n, 0);
    let mut coords: Vec<(usize, DMatrix<f64>)> = Vec::new();
    let mut c0 = 0;
    while c0 < k && scale > 0.0 {
        let w = BLOCK.min(k - c0);
        let v = l.columns(c0, w).into_owned();
        let mut coef = u.tr_mul(&v);
        let mut rest = &v - &u * &coef;
        let again = u.tr_mul(&rest);
        rest -= &u * &again;
        coef += again;
        let qr = rest.qr();
        let (q, r) = (qr.q(), qr.r());
        let svd = r.svd(true, true);
        let (su, svt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
        let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > cut).collect();
        let r0 = u.ncols();
        let mut grown = DMatrix::zeros(n, r0 + keep.len());
        grown.columns_mut(0, r0).copy_from(&u);
        let mut g = DMatrix::zeros(r0 + keep.len(), w);
        g.rows_mut(0, r0).copy_from(&coef);
        for (j, &i) in keep.iter().enumerate() {
            grown.set_column(r0 + j, &(&q * su.column(i)));
            g.set_row(r0 + j, &(svt.row(i) * svd.singular_values[i]));
        }
        u = grown;
        coords.push((c0, g));
        c0 += w;
    }
    let mut g = DMatrix::zeros(u.ncols(), k);
    for (c0, blk) in coords {
        g.view_mut((0, c0), (blk.nrows(), blk.ncols())).copy_from(&blk);
    }
    (u, g)
}

fn truncate_psd(n: usize, basis: DMatrix<f64>, lam: Vec<f64>, tol: f64) -> SemidefFactor {
    let max_abs = lam.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max_abs == 0.0 {
        return SemidefFactor {
            z: DMatrix::zeros(n, 0),
            retained_eigenvalues: vec![],
            truncation_tol: tol,
            negative_warnings: 0,
            discarded_mass: 0.0,
        };
    }
    let cut = tol * max_abs;
    let mut order: Vec<usize> = (0..lam.len()).collect();
    order.sort_by(|&a, &b| lam[b].total_cmp(&lam[a]));
    let mut keep = Vec::new();
    let mut warn = 0;
    let mut discarded = 0.0;
    for &i in &order {
        if lam[i] > cut {
            keep.push(i);
        } else {
            if lam[i] < -cut {
                warn += 1;
            }
            discarded += lam[i].abs();
        }
    }
    let mut z = DMatrix::zeros(n, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        z.set_column(c, &(basis.column(i) * lam[i].sqrt()));
    }
    SemidefFactor {
        z,
        retained_eigenvalues: keep.iter().map(|&i| lam[i]).collect(),
        truncation_tol: tol,
        negative_warnings: warn,
        discarded_mass: discarded,
    }
}

/// Re-expresses `Z Zᵀ` with the fewest columns allowed by `tol`.
pub fn compress_columns(z: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let k = z.ncols();
    let ldl = LdlFactor { l: z.clone(), d: DMatrix::identity(k, k) };
    semidef_factor(&ldl, tol).z
}

#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    /// Lower-triangular `L` with `X = L Lᵀ`.
    pub l: DMatrix<f64>,
    /// Set when plain Cholesky failed and the semidefinite square root was used.
    pub semidefinite_fallback: bool,
}

/// Cholesky factor of a symmetric PSD matrix. Numerically singular input is
/// handled through the eigendecomposition (negative eigenvalues clamped to 0)
/// followed by a QR step that restores triangular shape.
pub fn cholesky(x: &DMatrix<f64>) -> Result<CholeskyFactor> {
    let n = x.nrows();
    if x.ncols() != n {
        return Err(Error::dim("X", format!("{n}x{n}"), format!("{}x{}", n, x.ncols())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("X".into()));
    }
    let asym = super::asymmetry(x);
    if asym > 1e-8 {
        return Err(Error::NotSymmetric(asym));
    }
    let xs = symmetrize(x);
    if let Some(ch) = xs.clone().cholesky() {
        let l = ch.l();
        if l.iter().all(|v| v.is_finite()) {
            return Ok(CholeskyFactor { l, semidefinite_fallback: false });
        }
    }
    let eig = xs.symmetric_eigen();
    let mut f = eig.eigenvectors.clone();
    for (j, lam) in eig.eigenvalues.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        f.column_mut(j).scale_mut(s);
    }
    // X = F Fᵀ; with Fᵀ = Q R we get X = Rᵀ R.
    let r = f.transpose().qr().r();
    let mut l = r.transpose();
    // Fix signs so the diagonal is non-negative.
    for j in 0..n {
        if l[(j, j)] < 0.0 {
            l.column_mut(j).neg_mut();
        }
    }
    Ok(CholeskyFactor { l, semidefinite_fallback: true })
}

#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub u: DMatrix<f64>,
    /// Singular values, descending.
    pub sigma: Vec<f64>,
    pub v: DMatrix<f64>,
}

/// Thin SVD with singular values sorted descending.
pub fn svd(m: &DMatrix<f64>) -> Result<SvdFactors> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("SVD input".into()));
    }
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return Ok(SvdFactors { u: DMatrix::zeros(r, 0), sigma: vec![], v: DMatrix::zeros(c, 0) });
    }
    let s = m.clone().try_svd(true, true, f64::EPSILON, 0).ok_or(Error::EigenNonConvergence)?;
    let u = s.u.ok_or(Error::EigenNonConvergence)?;
    let vt = s.v_t.ok_or(Error::EigenNonConvergence)?;
    let mut order: Vec<usize> = (0..s.singular_values.len()).collect();
    order.sort_by(|&a, &b| s.singular_values[b].total_cmp(&s.singular_values[a]));
    let mut us = DMatrix::zeros(r, order.len());
    let mut vs = DMatrix::zeros(c, order.len());
    for (k, &i) in order.iter().enumerate() {
        us.set_column(k, &u.column(i));
        vs.set_column(k, &vt.row(i).transpose());
    }
    let sigma = order.iter().map(|&i| s.singular_values[i]).collect();
    Ok(SvdFactors { u: us, sigma, v: vs })
}

#[allow(dead_code)]
pub(crate) fn diag(values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn drops_zero_eigenvalue() {
        let f = semidef_factor(&LdlFactor::new(DMatrix::identity(2, 2), diag(&[2.0, 0.0])).unwrap(), 1e-12);
        assert_eq!(f.z.ncols(), 1);
        assert_relative_eq!(&f.z * f.z.transpose(), diag(&[2.0, 0.0]), epsilon = 1e-14);
    }

    #[test]
    fn negligible_negative_is_not_a_warning() {
        let f = semidef_factor(&LdlFactor::new(DMatrix::identity(2, 2), diag(&[1.0, -1e-15])).unwrap(), 1e-12);
        assert_eq!(f.z.ncols(), 1);
        assert_eq!(f.negative_warnings, 0);
    }

    #[test]
    fn fully_negative_yields_empty() {
        let f = semidef_factor(&LdlFactor::new(DMatrix::identity(2, 2), diag(&[-1.0, -2.0])).unwrap(), 1e-12);
        assert_eq!(f.z.ncols(), 0);
        assert_eq!(f.negative_warnings, 2);
    }

    #[test]
    fn random_psd_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = DMatrix::from_fn(5, 3, |_, _| rng.random_range(-1.0..1.0));
        let g = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let d = &g * g.transpose();
        let ldl = LdlFactor::new(l, d).unwrap();
        let f = semidef_factor(&ldl, 1e-12);
        assert!((&f.z * f.z.transpose() - ldl.reconstruct()).norm() <= 1e-10);
    }

    #[test]
    fn wide_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let l = DMatrix::from_fn(3, 7, |_, _| rng.random_range(-1.0..1.0));
        let d = DMatrix::identity(7, 7);
        let ldl = LdlFactor::new(l, d).unwrap();
        let f = semidef_factor(&ldl, 1e-12);
        assert_eq!(f.z.ncols(), 3);
        assert!((&f.z * f.z.transpose() - ldl.reconstruct()).norm() <= 1e-12);
    }

    #[test]
    fn blocked_path_keeps_low_rank_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let basis = DMatrix::from_fn(80, 30, |_, _| rng.random_range(-1.0..1.0));
        let mix = DMatrix::from_fn(30, 200, |_, _| rng.random_range(-1.0..1.0));
        let l = &basis * &mix;
        let d: Vec<f64> = (0..200).map(|i| if i % 3 == 0 { -0.5 } else { 1.0 }).collect();
        let x = &l * DMatrix::from_diagonal(&DVector::from_vec(d.clone())) * l.transpose();
        let (u, lam) = compress_indefinite(&l, &diag(&d), 1e-14);
        assert!(u.ncols() <= 30);
        let back = &u * diag(&lam) * u.transpose();
        assert!((back - &x).norm() <= 1e-10 * x.norm());
        let psd = semidef_factor_diag(&basis, &[1.0; 30], 1e-12);
        assert!((&psd.z * psd.z.transpose() - &basis * basis.transpose()).norm() <= 1e-10 * basis.norm_squared());
    }

    #[test]
    fn cholesky_examples() {
        let c = cholesky(&DMatrix::from_element(1, 1, 4.0)).unwrap();
        assert_eq!(c.l[(0, 0)], 2.0);
        let p = DMatrix::from_row_slice(2, 2, &[0.5, 1.0 / 3.0, 1.0 / 3.0, 0.25]);
        let c = cholesky(&p).unwrap();
        assert!(!c.semidefinite_fallback);
        assert_relative_eq!(&c.l * c.l.transpose(), p, epsilon = 1e-12);
    }

    #[test]
    fn cholesky_singular_fallback() {
        let v = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, -1.0]);
        let x = &v * v.transpose();
        let c = cholesky(&x).unwrap();
        assert!(c.semidefinite_fallback);
        assert_relative_eq!(&c.l * c.l.transpose(), x, epsilon = 1e-12);
        for i in 0..3 {
            for j in (i + 1)..3 {
                assert_eq!(c.l[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn svd_identity_and_order() {
        let s = svd(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(s.sigma, vec![1.0, 1.0, 1.0]);
        let m = diag(&[1.0, 5.0, 3.0]);
        let s = svd(&m).unwrap();
        assert_eq!(s.sigma, vec![5.0, 3.0, 1.0]);
        let back = &s.u * diag(&s.sigma) * s.v.transpose();
        assert_relative_eq!(back, m, epsilon = 1e-14);
    }

    proptest! {
        #[test]
        fn reconstruction_within_discarded_mass(seed in 0u64..500, k in 1usize..6, neg in 0usize..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 6;
            let l = DMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0));
            let dv: Vec<f64> = (0..k).map(|i| if i < neg { -rng.random_range(0.0..0.1) } else { rng.random_range(0.0..2.0) }).collect();
            let ldl = LdlFactor::new(l, diag(&dv)).unwrap();
            let f = semidef_factor(&ldl, 1e-12);
            let exact = ldl.reconstruct();
            let err = (&f.z * f.z.transpose() - &exact).norm();
            prop_assert!(err <= f.discarded_mass + 1e-12 * exact.norm() + 1e-14);
        }
    }
}
