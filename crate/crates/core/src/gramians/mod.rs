//! Dense Gramians for the unrestricted, time-limited and frequency-limited
//! settings, plus auxiliary Gramians and energy functionals.

mod oracle;

pub use oracle::quadrature_gramian_oracle;

use crate::error::{Error, Result};
use crate::linalg::{
    diagonal_blocks, matrix_exponential, principal_log_ratio, principal_log_ratio_with, symmetrize, LyapunovSolver,
};
use crate::model::{FrequencyBand, LtiQoSystem, Scenario, TimeInterval};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

/// Controllability/observability pair for one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct GramianSet {
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    /// `[Q₀, Q₁, …, Q_p]` with `Q = Q₀ + Σ Q_i`.
    pub q_parts: Option<Vec<DMatrix<f64>>>,
    pub scenario: Scenario,
}

/// Auxiliary Gramians, one entry per quadratic map `M_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryGramians {
    pub q_hat_tau: Vec<DMatrix<f64>>,
    pub q_bar_tau: Vec<DMatrix<f64>>,
    pub q_tilde: Vec<DMatrix<f64>>,
    pub f_omega: Option<DMatrix<f64>>,
}

fn assemble(
    p: DMatrix<f64>,
    parts: Vec<DMatrix<f64>>,
    scenario: Scenario,
) -> GramianSet {
    let mut q = parts[0].clone();
    for qi in &parts[1..] {
        q += qi;
    }
    GramianSet { p, q: symmetrize(&q), q_parts: Some(parts), scenario }
}

/// Observability parts `[Q₀, Q₁, …]` from the `Aᵀ`-equations with the given
/// right-hand sides (one solve each, run concurrently, kept in index order).
fn observability_parts(solver: &LyapunovSolver, rhs: Vec<DMatrix<f64>>) -> Result<Vec<DMatrix<f64>>> {
    rhs.par_iter().map(|g| solver.solve_transposed(g)).collect()
}

/// `P`, `Q` from `AP + PAᵀ + BBᵀ = 0`, `AᵀQ₀ + Q₀A + CᵀC = 0`,
/// `AᵀQ_i + Q_iA + M_iPM_i = 0`.
pub fn gram_infinite(sys: &LtiQoSystem) -> Result<GramianSet> {
    sys.require_stable()?;
    let solver = LyapunovSolver::new(sys.a())?;
    gram_infinite_with(sys, &solver)
}

pub fn gram_infinite_with(sys: &LtiQoSystem, solver: &LyapunovSolver) -> Result<GramianSet> {
    let b = sys.b();
    let p = solver.solve(&(b * b.transpose()))?;
    let c = sys.c();
    let mut rhs = vec![c.tr_mul(c)];
    rhs.extend(sys.m_list().iter().map(|mi| mi * &p * mi));
    let parts = observability_parts(solver, rhs)?;
    Ok(assemble(p, parts, Scenario::Infinite))
}

/// Gramians restricted to `[τ_i, τ_f]`; `e^{Aτ_i}`, `e^{Aτ_f}` are formed once
/// and shared by every right-hand side.
pub fn gram_time_limited(sys: &LtiQoSystem, interval: TimeInterval) -> Result<GramianSet> {
    sys.require_stable()?;
    let solver = LyapunovSolver::new(sys.a())?;
    gram_time_limited_with(sys, &solver, interval)
}

pub fn gram_time_limited_with(
    sys: &LtiQoSystem,
    solver: &LyapunovSolver,
    interval: TimeInterval,
) -> Result<GramianSet> {
    let TimeInterval { tau_i, tau_f } = TimeInterval::new(interval.tau_i, interval.tau_f)?;
    let n = sys.n();
    let scenario = Scenario::TimeLimited(interval);
    if tau_i == tau_f {
        let zeros = DMatrix::zeros(n, n);
        return Ok(assemble(zeros.clone(), vec![zeros; sys.p() + 1], scenario));
    }
    let ei = matrix_exponential(sys.a(), tau_i)?;
    let ef = matrix_exponential(sys.a(), tau_f)?;
    let eib = &ei * sys.b();
    let efb = &ef * sys.b();
    let p = solver.solve(&(&eib * eib.transpose() - &efb * efb.transpose()))?;
    let cei = sys.c() * &ei;
    let cef = sys.c() * &ef;
    let mut rhs = vec![cei.tr_mul(&cei) - cef.tr_mul(&cef)];
    for mi in sys.m_list() {
        let k = mi * &p * mi;
        rhs.push(ei.tr_mul(&(&k * &ei)) - ef.tr_mul(&(&k * &ef)));
    }
    let parts = observability_parts(solver, rhs)?;
    Ok(assemble(p, parts, scenario))
}

/// `F_Ω` for a band, from the principal matrix logarithm.
pub fn f_omega(sys: &LtiQoSystem, band: FrequencyBand) -> Result<DMatrix<f64>> {
    let band = FrequencyBand::new(band.omega_1, band.omega_2)?;
    principal_log_ratio(sys.a(), band.omega_1, band.omega_2)
}

/// `F_Ω` reusing the solver's Schur form unless `A` is block diagonal, where
/// the per-block evaluation is cheaper.
fn band_prefactor(sys: &LtiQoSystem, solver: &LyapunovSolver, band: FrequencyBand) -> Result<DMatrix<f64>> {
    if diagonal_blocks(sys.a()).is_some_and(|b| b.len() > 1) {
        principal_log_ratio(sys.a(), band.omega_1, band.omega_2)
    } else {
        principal_log_ratio_with(solver.schur(), band.omega_1, band.omega_2)
    }
}

/// Gramians restricted to the band `[ω₁, ω₂]` (and its mirror image).
pub fn gram_freq_limited(sys: &LtiQoSystem, band: FrequencyBand) -> Result<GramianSet> {
    sys.require_stable()?;
    let solver = LyapunovSolver::new(sys.a())?;
    let band = FrequencyBand::new(band.omega_1, band.omega_2)?;
    let f = band_prefactor(sys, &solver, band)?;
    gram_freq_limited_with(sys, &solver, band, &f)
}

/// As [`gram_freq_limited`] with a precomputed `F_Ω`.
pub fn gram_freq_limited_with(
    sys: &LtiQoSystem,
    solver: &LyapunovSolver,
    band: FrequencyBand,
    f: &DMatrix<f64>,
) -> Result<GramianSet> {
    let n = sys.n();
    let scenario = Scenario::FrequencyLimited(band);
    if band.is_empty() {
        let zeros = DMatrix::zeros(n, n);
        return Ok(assemble(zeros.clone(), vec![zeros; sys.p() + 1], scenario));
    }
    let b = sys.b();
    let bb = b * b.transpose();
    let fbb = f * &bb;
    let p = solver.solve(&(&fbb + fbb.transpose()))?;
    let c = sys.c();
    let ctc = c.tr_mul(c);
    let ctcf = &ctc * f;
    let mut rhs = vec![&ctcf + ctcf.transpose()];
    for mi in sys.m_list() {
        let kf = mi * &p * mi * f;
        rhs.push(&kf + kf.transpose());
    }
    let parts = observability_parts(solver, rhs)?;
    Ok(assemble(p, parts, scenario))
}

/// Dense Gramians for any scenario.
pub fn gram_dense(sys: &LtiQoSystem, scenario: Scenario) -> Result<GramianSet> {
    match scenario {
        Scenario::Infinite => gram_infinite(sys),
        Scenario::TimeLimited(i) => gram_time_limited(sys, i),
        Scenario::FrequencyLimited(b) => gram_freq_limited(sys, b),
    }
}

/// `Q̂_τ` and `Q̄_τ` for each `M_i`, from `P` of the unrestricted problem:
/// `AᵀQ̂ + Q̂A + MPM − e^{Aᵀτ}MPMe^{Aτ} = 0` and
/// `AᵀQ̄ + Q̄A + Me^{Aτ}Pe^{Aᵀτ}M − e^{Aᵀτ}Me^{Aτ}Pe^{Aᵀτ}Me^{Aτ} = 0`.
pub fn aux_time_gramians(sys: &LtiQoSystem, tau: f64) -> Result<AuxiliaryGramians> {
    sys.require_stable()?;
    TimeInterval::new(0.0, tau)?;
    let solver = LyapunovSolver::new(sys.a())?;
    let b = sys.b();
    let p = solver.solve(&(b * b.transpose()))?;
    let e = matrix_exponential(sys.a(), tau)?;
    let epe = &e * &p * e.transpose();
    let mut rhs = Vec::new();
    for mi in sys.m_list() {
        let k = mi * &p * mi;
        rhs.push(&k - e.tr_mul(&(&k * &e)));
        let kb = mi * &epe * mi;
        rhs.push(&kb - e.tr_mul(&(&kb * &e)));
    }
    let sols = observability_parts(&solver, rhs)?;
    let mut q_hat_tau = Vec::new();
    let mut q_bar_tau = Vec::new();
    for (k, x) in sols.into_iter().enumerate() {
        if k % 2 == 0 {
            q_hat_tau.push(x);
        } else {
            q_bar_tau.push(x);
        }
    }
    Ok(AuxiliaryGramians { q_hat_tau, q_bar_tau, q_tilde: vec![], f_omega: None })
}

/// `Q̃` for each `M_i` (`AᵀQ̃ + Q̃A + M P_Ω M = 0`) together with `F_Ω`.
pub fn aux_freq_gramian(sys: &LtiQoSystem, band: FrequencyBand) -> Result<AuxiliaryGramians> {
    sys.require_stable()?;
    let band = FrequencyBand::new(band.omega_1, band.omega_2)?;
    let solver = LyapunovSolver::new(sys.a())?;
    let f = band_prefactor(sys, &solver, band)?;
    let b = sys.b();
    let fbb = &f * (b * b.transpose());
    let p = solver.solve(&(&fbb + fbb.transpose()))?;
    let rhs = sys.m_list().iter().map(|mi| mi * &p * mi).collect();
    let q_tilde = observability_parts(&solver, rhs)?;
    Ok(AuxiliaryGramians { q_hat_tau: vec![], q_bar_tau: vec![], q_tilde, f_omega: Some(f) })
}

/// `E_c = x₀ᵀP⁻¹x₀` and the output-energy bound `x₀ᵀQx₀ (1 + x₀ᵀP⁻¹x₀)`.
pub fn energy_bounds(p: &DMatrix<f64>, q: &DMatrix<f64>, x0: &DVector<f64>) -> Result<(f64, f64)> {
    let n = p.nrows();
    if p.ncols() != n || q.nrows() != n || q.ncols() != n || x0.len() != n {
        return Err(Error::dim("P/Q/x0", n, format!("{}/{}/{}", p.nrows(), q.nrows(), x0.len())));
    }
    let ch = symmetrize(p).cholesky().ok_or(Error::SingularGramian)?;
    let l = ch.l();
    let dmax = (0..n).map(|i| l[(i, i)]).fold(0.0, f64::max);
    let dmin = (0..n).map(|i| l[(i, i)]).fold(f64::INFINITY, f64::min);
    if !(dmin > 1e-8 * dmax) {
        return Err(Error::SingularGramian);
    }
    let ec = x0.dot(&ch.solve(x0));
    let eo = x0.dot(&(q * x0)) * (1.0 + ec);
    Ok((ec, eo))
}
