use super::{count_logm, diagonal_blocks};
use super::schur::RealSchur;
use crate::error::{Error, Result};
use crate::quad::gauss_legendre;
use nalgebra::{Complex, DMatrix};

type C64 = Complex<f64>;

const PADE_NODES: usize = 10;
const MAX_SQRT: usize = 64;

/// `Re((j/π) · log((jω₁I + A)^{-1}(jω₂I + A)))`, the band prefactor `F_Ω`.
pub fn principal_log_ratio(a: &DMatrix<f64>, omega_1: f64, omega_2: f64) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::dim("A", format!("{n}x{n}"), format!("{}x{}", n, a.ncols())));
    }
    check_band(omega_1, omega_2)?;
    if omega_1 == omega_2 {
        return Ok(DMatrix::zeros(n, n));
    }
    if let Some(blocks) = diagonal_blocks(a).filter(|b| b.len() > 1) {
        // A function of a block-diagonal matrix is block diagonal.
        let mut f = DMatrix::zeros(n, n);
        for (s, size) in blocks {
            let blk = a.view((s, s), (size, size)).into_owned();
            let fb = principal_log_ratio_with(&RealSchur::new(&blk)?, omega_1, omega_2)?;
            f.view_mut((s, s), (size, size)).copy_from(&fb);
        }
        return Ok(f);
    }
    principal_log_ratio_with(&RealSchur::new(a)?, omega_1, omega_2)
}

fn check_band(omega_1: f64, omega_2: f64) -> Result<()> {
    if !omega_1.is_finite() || !omega_2.is_finite() {
        return Err(Error::NonFinite("band".into()));
    }
    if omega_1 < 0.0 || omega_2 < omega_1 {
        return Err(Error::InvalidArgument(format!(
            "band requires 0 <= omega_1 <= omega_2, got [{omega_1}, {omega_2}]"
        )));
    }
    Ok(())
}

/// As [`principal_log_ratio`], reusing an existing real Schur form of `A`.
pub fn principal_log_ratio_with(schur: &RealSchur, omega_1: f64, omega_2: f64) -> Result<DMatrix<f64>> {
    check_band(omega_1, omega_2)?;
    let n = schur.dim();
    if omega_1 == omega_2 || n == 0 {
        return Ok(DMatrix::zeros(n, n));
    }
    count_logm();
    let cs = schur.to_complex();
    let s = cs.t();
    let j1 = C64::new(0.0, omega_1);
    let j2 = C64::new(0.0, omega_2);
    let ident = DMatrix::<C64>::identity(n, n);
    let den = s + &ident * j1;
    let num = s + &ident * j2;
    for k in 0..n {
        if den[(k, k)].norm() == 0.0 {
            return Err(Error::BranchCut { eigenvalue: C64::new(0.0, 0.0) });
        }
    }
    let mut r = den.solve_upper_triangular(&num).ok_or(Error::BranchCut { eigenvalue: C64::new(0.0, 0.0) })?;
    upper_clean(&mut r);
    let diag: Vec<C64> = (0..n).map(|k| r[(k, k)]).collect();
    for &d in &diag {
        if d.im.abs() <= 1e-14 * d.norm() && d.re <= 0.0 {
            return Err(Error::BranchCut { eigenvalue: d });
        }
    }
    let mut squarings = 0;
    loop {
        if one_norm_c(&(&r - &ident)) <= 0.25 {
            break;
        }
        if squarings == MAX_SQRT {
            return Err(Error::LogNonConvergence);
        }
        r = sqrt_upper(&r);
        squarings += 1;
    }
    let x = &r - &ident;
    let (nodes, weights) = gauss_legendre(PADE_NODES, 0.0, 1.0);
    let mut l = DMatrix::<C64>::zeros(n, n);
    for (t, w) in nodes.iter().zip(weights.iter()) {
        let m = &ident + &x * C64::new(*t, 0.0);
        // X (I + tX)^{-1} = (I + tX)^{-1} X since they commute.
        let y = m.solve_upper_triangular(&x).ok_or(Error::LogNonConvergence)?;
        l += y * C64::new(*w, 0.0);
    }
    l *= C64::new(2f64.powi(squarings as i32), 0.0);
    for (k, d) in diag.iter().enumerate() {
        l[(k, k)] = d.ln();
    }
    upper_clean(&mut l);
    let w = cs.w();
    let full = w * l * w.adjoint();
    let scale = C64::new(0.0, 1.0 / std::f64::consts::PI);
    Ok(full.map(|z| (z * scale).re))
}

fn upper_clean(m: &mut DMatrix<C64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            m[(i, j)] = C64::new(0.0, 0.0);
        }
    }
}

fn one_norm_c(m: &DMatrix<C64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
}

/// Principal square root of an upper-triangular matrix (column recurrence).
fn sqrt_upper(t: &DMatrix<C64>) -> DMatrix<C64> {
    let n = t.nrows();
    let mut u = DMatrix::<C64>::zeros(n, n);
    for j in 0..n {
        u[(j, j)] = t[(j, j)].sqrt();
        for i in (0..j).rev() {
            let mut s = t[(i, j)];
            for k in (i + 1)..j {
                s -= u[(i, k)] * u[(k, j)];
            }
            u[(i, j)] = s / (u[(i, i)] + u[(j, j)]);
        }
    }
    u
}
