//! Direct quadrature of the defining Gramian integrals. Slow (`O(nodes·n³)`)
//! and used only as an independent reference.

use super::{assemble, GramianSet};
use crate::error::{Error, Result};
use crate::linalg::{matrix_exponential, symmetrize};
use crate::model::{FrequencyBand, LtiQoSystem, Scenario, TimeInterval};
use crate::quad::composite;
use nalgebra::{Complex, DMatrix};

type C64 = Complex<f64>;

const MAX_PANELS: usize = 1 << 12;
const REL_TOL: f64 = 1e-13;

/// Evaluates the Gramian integrals of `scenario` with a composite
/// Gauss–Legendre rule of `nodes` points per panel, doubling the panel count
/// until successive estimates agree. Unbounded time horizons are cut where
/// `‖e^{At}‖_F < 1e-14`; unbounded bands use `ν = c·tan φ`.
pub fn quadrature_gramian_oracle(sys: &LtiQoSystem, scenario: Scenario, nodes: usize) -> Result<GramianSet> {
    if nodes == 0 {
        return Err(Error::InvalidArgument("nodes must be positive".into()));
    }
    match scenario {
        Scenario::Infinite => {
            let t_end = tail_cut(sys.a())?;
            time_oracle(sys, 0.0, t_end, nodes, scenario)
        }
        Scenario::TimeLimited(TimeInterval { tau_i, tau_f }) => time_oracle(sys, tau_i, tau_f, nodes, scenario),
        Scenario::FrequencyLimited(band) => freq_oracle(sys, band, nodes, scenario),
    }
}

fn tail_cut(a: &DMatrix<f64>) -> Result<f64> {
    let mut t = 1.0;
    for _ in 0..60 {
        if matrix_exponential(a, t)?.norm() < 1e-14 {
            return Ok(t);
        }
        t *= 2.0;
    }
    Err(Error::Quadrature("exponential tail does not decay".into()))
}

/// Integrates a list of matrix-valued functions over `[lo, hi]`.
fn adaptive<F>(nodes: usize, lo: f64, hi: f64, f: F) -> Result<Vec<DMatrix<f64>>>
where
    F: Fn(f64) -> Result<Vec<DMatrix<f64>>>,
{
    let mut prev: Option<Vec<DMatrix<f64>>> = None;
    let mut panels = 1;
    while panels <= MAX_PANELS {
        let (x, w) = composite(nodes, panels, lo, hi);
        let mut acc: Option<Vec<DMatrix<f64>>> = None;
        for (t, wt) in x.iter().zip(w.iter()) {
            let vals = f(*t)?;
            match &mut acc {
                None => acc = Some(vals.into_iter().map(|v| v * *wt).collect()),
                Some(a) => {
                    for (ai, vi) in a.iter_mut().zip(vals) {
                        *ai += vi * *wt;
                    }
                }
            }
        }
        let acc = acc.unwrap_or_default();
        if let Some(p) = &prev {
            let converged = acc.iter().zip(p).all(|(a, b)| {
                let scale = a.norm().max(b.norm());
                (a - b).norm() <= REL_TOL * scale || scale == 0.0
            });
            if converged {
                return Ok(acc);
            }
        }
        prev = Some(acc);
        panels *= 2;
    }
    Err(Error::Quadrature(format!("{MAX_PANELS} panels of {nodes} nodes")))
}

fn time_oracle(sys: &LtiQoSystem, lo: f64, hi: f64, nodes: usize, scenario: Scenario) -> Result<GramianSet> {
    let n = sys.n();
    if lo == hi {
        let z = DMatrix::zeros(n, n);
        return Ok(assemble(z.clone(), vec![z; sys.p() + 1], scenario));
    }
    let a = sys.a();
    let p = adaptive(nodes, lo, hi, |t| {
        let eb = matrix_exponential(a, t)? * sys.b();
        Ok(vec![&eb * eb.transpose()])
    })?
    .remove(0);
    let p = symmetrize(&p);
    let mut kernels = vec![sys.c().tr_mul(sys.c())];
    kernels.extend(sys.m_list().iter().map(|mi| mi * &p * mi));
    let parts = adaptive(nodes, lo, hi, |t| {
        let e = matrix_exponential(a, t)?;
        Ok(kernels.iter().map(|k| e.tr_mul(&(k * &e))).collect())
    })?;
    Ok(assemble(p, parts.iter().map(symmetrize).collect(), scenario))
}

fn freq_oracle(sys: &LtiQoSystem, band: FrequencyBand, nodes: usize, scenario: Scenario) -> Result<GramianSet> {
    let n = sys.n();
    if band.is_empty() {
        let z = DMatrix::zeros(n, n);
        return Ok(assemble(z.clone(), vec![z; sys.p() + 1], scenario));
    }
    let a = sys.a();
    let c_scale = crate::linalg::one_norm(a).max(1e-3);
    let lo = (band.omega_1 / c_scale).atan();
    let hi = (band.omega_2 / c_scale).atan();
    let ac = a.map(|v| C64::new(v, 0.0));
    let resolvent_times = |phi: f64, rhs: &DMatrix<C64>| -> Result<(DMatrix<C64>, f64)> {
        let nu = c_scale * phi.tan();
        let jac = c_scale / phi.cos().powi(2) / std::f64::consts::PI;
        let mut m = -ac.clone();
        for i in 0..n {
            m[(i, i)] += C64::new(0.0, nu);
        }
        let x = m.lu().solve(rhs).ok_or(Error::Quadrature("singular resolvent".into()))?;
        Ok((x, jac))
    };
    let bc = sys.b().map(|v| C64::new(v, 0.0));
    let p = adaptive(nodes, lo, hi, |phi| {
        let (rb, jac) = resolvent_times(phi, &bc)?;
        Ok(vec![(&rb * rb.adjoint()).map(|z| z.re * jac)])
    })?
    .remove(0);
    let p = symmetrize(&p);
    let mut kernels = vec![sys.c().tr_mul(sys.c())];
    kernels.extend(sys.m_list().iter().map(|mi| mi * &p * mi));
    let ident = DMatrix::<C64>::identity(n, n);
    let parts = adaptive(nodes, lo, hi, |phi| {
        let (r, jac) = resolvent_times(phi, &ident)?;
        let rh = r.adjoint();
        Ok(kernels
            .iter()
            .map(|k| (&rh * k.map(|v| C64::new(v, 0.0)) * &r).map(|z| z.re * jac))
            .collect())
    })?;
    Ok(assemble(p, parts.iter().map(symmetrize).collect(), scenario))
}
