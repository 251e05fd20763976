//! Right-hand sides `K S Kᵀ` of the scenario-specific Lyapunov equations.

use crate::error::{Error, Result};
use crate::linalg::expm_action;
use crate::model::{FrequencyBand, LtiQoSystem, TimeInterval};
use crate::sparse::Operator;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Controllability,
    Observability,
}

/// Input blocks feeding one side: `[B]`, or `[Cᵀ, M₁Z, …, M_pZ]` with the `Cᵀ`
/// block dropped when `C = 0`.
pub(crate) fn input_blocks(sys: &LtiQoSystem, side: Side, z: Option<&DMatrix<f64>>) -> Result<Vec<DMatrix<f64>>> {
    match side {
        Side::Controllability => Ok(vec![sys.b().clone()]),
        Side::Observability => {
            let z = z.ok_or(Error::Missing("controllability factor for the observability side".into()))?;
            if z.nrows() != sys.n() {
                return Err(Error::dim("Z", format!("{} rows", sys.n()), z.nrows()));
            }
            let mut blocks = Vec::new();
            if sys.c().iter().any(|v| *v != 0.0) {
                blocks.push(sys.c().transpose());
            }
            for mi in sys.m_list() {
                blocks.push(mi * z);
            }
            Ok(blocks)
        }
    }
}

fn stack(blocks: &[DMatrix<f64>], n: usize) -> DMatrix<f64> {
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut k = DMatrix::zeros(n, cols);
    let mut c0 = 0;
    for b in blocks {
        k.columns_mut(c0, b.ncols()).copy_from(b);
        c0 += b.ncols();
    }
    k
}

/// Block diagonal `S` from per-block 2×2 patterns `[[d0, off], [off, d1]]`
/// scaled by identities of each block's width.
fn pattern(widths: &[usize], d0: f64, d1: f64, off: f64) -> DMatrix<f64> {
    let total: usize = widths.iter().map(|w| 2 * w).sum();
    let mut s = DMatrix::zeros(total, total);
    let mut o = 0;
    for &w in widths {
        for j in 0..w {
            s[(o + j, o + j)] = d0;
            s[(o + w + j, o + w + j)] = d1;
            s[(o + j, o + w + j)] = off;
            s[(o + w + j, o + j)] = off;
        }
        o += 2 * w;
    }
    s
}

/// `K = [X, …]` with `S = I` for the unrestricted equations.
pub fn assemble_infinite_rhs(sys: &LtiQoSystem, side: Side, z: Option<&DMatrix<f64>>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let blocks = input_blocks(sys, side, z)?;
    let k = stack(&blocks, sys.n());
    let q = k.ncols();
    Ok((k, DMatrix::identity(q, q)))
}

/// `K = [e^{𝔸τᵢ}X, e^{𝔸τ_f}X]` per input block with `S = diag(I, −I)`
/// (`𝔸 = A` for controllability, `Aᵀ` for observability).
pub fn assemble_time_rhs(
    sys: &LtiQoSystem,
    interval: TimeInterval,
    side: Side,
    z: Option<&DMatrix<f64>>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let blocks = input_blocks(sys, side, z)?;
    let op = match side {
        Side::Controllability => Operator::new(sys.a()),
        Side::Observability => Operator::new(&sys.a().transpose()),
    };
    let x = stack(&blocks, sys.n());
    let ei = expm_action(&op, &x, interval.tau_i)?;
    let ef = expm_action(&op, &x, interval.tau_f)?;
    let mut out = Vec::with_capacity(2 * blocks.len());
    let mut c0 = 0;
    for b in &blocks {
        let w = b.ncols();
        out.push(ei.columns(c0, w).into_owned());
        out.push(ef.columns(c0, w).into_owned());
        c0 += w;
    }
    let widths: Vec<usize> = blocks.iter().map(|b| b.ncols()).collect();
    Ok((stack(&out, sys.n()), pattern(&widths, 1.0, -1.0, 0.0)))
}

/// `K = [X, F X]` per input block (`Fᵀ` on the observability side) with the
/// anti-diagonal `S = [[0, I], [I, 0]]`.
pub fn assemble_freq_rhs(
    sys: &LtiQoSystem,
    band: FrequencyBand,
    side: Side,
    z: Option<&DMatrix<f64>>,
    f_omega: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = sys.n();
    if f_omega.shape() != (n, n) {
        return Err(Error::dim("F_Omega", format!("{n}x{n}"), format!("{}x{}", f_omega.nrows(), f_omega.ncols())));
    }
    FrequencyBand::new(band.omega_1, band.omega_2)?;
    let blocks = input_blocks(sys, side, z)?;
    let mut out = Vec::with_capacity(2 * blocks.len());
    for b in &blocks {
        let fb = match side {
            Side::Controllability => f_omega * b,
            Side::Observability => f_omega.tr_mul(b),
        };
        out.push(b.clone());
        out.push(fb);
    }
    let widths: Vec<usize> = blocks.iter().map(|b| b.ncols()).collect();
    Ok((stack(&out, n), pattern(&widths, 0.0, 0.0, 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn s1() -> LtiQoSystem {
        LtiQoSystem::new_stable(
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_element(1, 1, 1.0),
            None,
            vec![DMatrix::from_element(1, 1, 1.0)],
        )
        .unwrap()
    }

    #[test]
    fn scalar_time_controllability() {
        let (k, s) = assemble_time_rhs(&s1(), TimeInterval::new(0.0, 1.0).unwrap(), Side::Controllability, None).unwrap();
        assert_relative_eq!(k[(0, 0)], 1.0);
        assert_relative_eq!(k[(0, 1)], (-1f64).exp(), max_relative = 1e-14);
        assert_eq!(s, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]));
    }

    #[test]
    fn scalar_time_observability_drops_zero_c() {
        let z = DMatrix::from_element(1, 1, 0.7);
        let (k, s) =
            assemble_time_rhs(&s1(), TimeInterval::new(0.0, 1.0).unwrap(), Side::Observability, Some(&z)).unwrap();
        assert_eq!(k.ncols(), 2);
        assert_relative_eq!(k[(0, 0)], 0.7);
        assert_relative_eq!(k[(0, 1)], 0.7 * (-1f64).exp(), max_relative = 1e-14);
        assert_eq!(s[(1, 1)], -1.0);
    }

    #[test]
    fn empty_interval_cancels() {
        let (k, s) = assemble_time_rhs(&s1(), TimeInterval::new(0.5, 0.5).unwrap(), Side::Controllability, None).unwrap();
        assert_eq!((&k * &s * k.transpose())[(0, 0)], 0.0);
    }

    #[test]
    fn observability_requires_factor() {
        let r = assemble_time_rhs(&s1(), TimeInterval::new(0.0, 1.0).unwrap(), Side::Observability, None);
        assert!(matches!(r, Err(Error::Missing(_))));
    }

    #[test]
    fn scalar_band() {
        let f = DMatrix::from_element(1, 1, 0.25);
        let band = FrequencyBand::new(0.0, 1.0).unwrap();
        let (k, s) = assemble_freq_rhs(&s1(), band, Side::Controllability, None, &f).unwrap();
        assert_eq!(k, DMatrix::from_row_slice(1, 2, &[1.0, 0.25]));
        assert_eq!(s, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        let z = DMatrix::from_element(1, 1, 0.5);
        let (k, s) = assemble_freq_rhs(&s1(), band, Side::Observability, Some(&z), &f).unwrap();
        assert_eq!(k, DMatrix::from_row_slice(1, 2, &[0.5, 0.125]));
        assert_eq!(s, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        let zero = DMatrix::zeros(1, 1);
        let (k, s) = assemble_freq_rhs(&s1(), band, Side::Controllability, None, &zero).unwrap();
        assert_eq!((&k * &s * k.transpose())[(0, 0)], 0.0);
    }
}
