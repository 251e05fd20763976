//! Low-rank Gramian factors: `L D Lᵀ`-ADI with scenario-specific right-hand
//! sides, and truncated Laguerre expansions.

mod adi;
mod laguerre;
mod rhs;
mod shifts;

pub use adi::{adi_ldl, adi_ldl_with, AdiConfig, AdiOutcome, DEFAULT_ADI_TOL};
pub use laguerre::{
    laguerre_coefficients, laguerre_freq_factor, laguerre_gram_closed_form, laguerre_gram_matrix,
    laguerre_gram_quadrature, laguerre_time_factor, LaguerreConfig, LaguerreWindow, DEFAULT_GRAM_NODES,
};
pub use rhs::{assemble_freq_rhs, assemble_infinite_rhs, assemble_time_rhs, Side};
pub use shifts::{dominant_shifts, ShiftSelection};

use crate::error::{Error, Result};
use crate::gramians::f_omega;
use crate::linalg::{semidef_factor_diag, ShiftedSolver, DEFAULT_TRUNCATION_TOL};
use crate::model::{LtiQoSystem, Scenario};
use crate::sparse::Operator;
use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LowRankMethod {
    Adi,
    Laguerre,
}

/// How `Z` was extracted from the `L D Lᵀ` form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorRoute {
    Cholesky,
    #[default]
    Semidefinite,
    /// Truncated eigendecomposition of the small Laguerre Gram matrix.
    GramEigen,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LowRankDiagnostics {
    pub final_residual: Option<f64>,
    pub residual_history: Vec<f64>,
    pub converged: Option<bool>,
    pub iterations: usize,
    pub terms: Option<usize>,
    pub alpha: Option<f64>,
    pub route: FactorRoute,
    pub negative_warnings: usize,
    pub discarded_mass: f64,
    pub retained_rank: usize,
}

/// `Z` (n×k) with `Z Zᵀ` approximating one Gramian.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankGramian {
    pub z: DMatrix<f64>,
    pub scenario: Scenario,
    pub method: LowRankMethod,
    pub diagnostics: LowRankDiagnostics,
}

impl LowRankGramian {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        crate::linalg::symmetrize(&(&self.z * self.z.transpose()))
    }
}

/// ADI settings for [`lowrank_gramians`]; shifts default to
/// [`dominant_shifts`] with `n_shifts` slots.
#[derive(Debug, Clone, PartialEq)]
pub struct AdiOptions {
    pub shifts: Option<Vec<Complex<f64>>>,
    pub n_shifts: usize,
    pub max_iter: usize,
    pub rel_residual_tol: f64,
}

impl Default for AdiOptions {
    fn default() -> Self {
        Self { shifts: None, n_shifts: 20, max_iter: 100, rel_residual_tol: DEFAULT_ADI_TOL }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LowRankOptions {
    Adi(AdiOptions),
    Laguerre(LaguerreConfig),
}

/// Controllability and observability factors of one scenario.
#[derive(Debug, Clone)]
pub struct LowRankPair {
    pub controllability: LowRankGramian,
    pub observability: LowRankGramian,
    pub shift_selection: Option<ShiftSelection>,
}

/// Low-rank `P ≈ ZZᵀ` and `Q ≈ YYᵀ`. The observability side is fed with the
/// truncated controllability factor. `F_Ω` is computed when a frequency band
/// needs it and is not supplied.
pub fn lowrank_gramians(
    sys: &LtiQoSystem,
    scenario: Scenario,
    opts: &LowRankOptions,
    f_omega_hint: Option<&DMatrix<f64>>,
) -> Result<LowRankPair> {
    sys.require_stable()?;
    let solver = ShiftedSolver::new(sys.a())?;
    match opts {
        LowRankOptions::Adi(o) => adi_pair(sys, scenario, o, &solver, f_omega_hint),
        LowRankOptions::Laguerre(cfg) => laguerre_pair(sys, scenario, cfg, &solver),
    }
}

fn adi_pair(
    sys: &LtiQoSystem,
    scenario: Scenario,
    o: &AdiOptions,
    solver: &ShiftedSolver,
    f_hint: Option<&DMatrix<f64>>,
) -> Result<LowRankPair> {
    let (shifts, selection) = match &o.shifts {
        Some(s) => (s.clone(), None),
        None => {
            let sel = dominant_shifts(sys, o.n_shifts.min(sys.n()))?;
            (sel.shifts.clone(), Some(sel))
        }
    };
    if shifts.is_empty() {
        return Err(Error::InvalidArgument("no ADI shifts available".into()));
    }
    let cfg = AdiConfig { shifts, max_iter: o.max_iter, rel_residual_tol: o.rel_residual_tol };
    cfg.validate()?;
    let owned_f;
    let f = match scenario {
        Scenario::FrequencyLimited(band) => match f_hint {
            Some(f) => Some(f),
            None => {
                owned_f = f_omega(sys, band)?;
                Some(&owned_f)
            }
        },
        _ => None,
    };
    let rhs = |side: Side, z: Option<&DMatrix<f64>>| match scenario {
        Scenario::Infinite => assemble_infinite_rhs(sys, side, z),
        Scenario::TimeLimited(i) => assemble_time_rhs(sys, i, side, z),
        Scenario::FrequencyLimited(b) => assemble_freq_rhs(sys, b, side, z, f.expect("band needs F")),
    };
    let side_factor = |side: Side, z: Option<&DMatrix<f64>>| -> Result<LowRankGramian> {
        let (k, s) = rhs(side, z)?;
        let out = adi_ldl_with(solver, side == Side::Observability, &k, &s, &cfg)?;
        let sf = semidef_factor_diag(&out.l, &out.d, DEFAULT_TRUNCATION_TOL);
        let diagnostics = LowRankDiagnostics {
            final_residual: Some(out.final_residual()),
            residual_history: out.residual_history.clone(),
            converged: Some(out.converged),
            iterations: out.iterations,
            route: FactorRoute::Semidefinite,
            negative_warnings: sf.negative_warnings,
            discarded_mass: sf.discarded_mass,
            retained_rank: sf.z.ncols(),
            ..Default::default()
        };
        Ok(LowRankGramian { z: sf.z, scenario, method: LowRankMethod::Adi, diagnostics })
    };
    let controllability = side_factor(Side::Controllability, None)?;
    let observability = side_factor(Side::Observability, Some(&controllability.z))?;
    Ok(LowRankPair { controllability, observability, shift_selection: selection })
}

fn laguerre_pair(
    sys: &LtiQoSystem,
    scenario: Scenario,
    cfg: &LaguerreConfig,
    solver: &ShiftedSolver,
) -> Result<LowRankPair> {
    cfg.validate()?;
    let dbar = match scenario {
        Scenario::Infinite => DMatrix::identity(cfg.terms, cfg.terms),
        Scenario::TimeLimited(i) => laguerre_gram_matrix(LaguerreWindow::Time(i), cfg.alpha, cfg.terms, DEFAULT_GRAM_NODES)?,
        Scenario::FrequencyLimited(b) => {
            laguerre_gram_matrix(LaguerreWindow::Frequency(b), cfg.alpha, cfg.terms, DEFAULT_GRAM_NODES)?
        }
    };
    let op = Operator::new(sys.a());
    let fhat = laguerre_coefficients(solver, &op, false, sys.b(), cfg)?;
    let controllability = laguerre::assemble_gramian(&fhat, &dbar, sys.m(), cfg, scenario);
    let x = rhs::input_blocks(sys, Side::Observability, Some(&controllability.z))?;
    let width: usize = x.iter().map(|b| b.ncols()).sum();
    let mut btilde = DMatrix::zeros(sys.n(), width);
    let mut c0 = 0;
    for blk in &x {
        btilde.columns_mut(c0, blk.ncols()).copy_from(blk);
        c0 += blk.ncols();
    }
    let op_t = Operator::new(&sys.a().transpose());
    let fhat_t = laguerre_coefficients(solver, &op_t, true, &btilde, cfg)?;
    let observability = laguerre::assemble_gramian(&fhat_t, &dbar, width, cfg, scenario);
    Ok(LowRankPair { controllability, observability, shift_selection: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gramians::gram_dense;
    use crate::model::{modal_space_structure, FrequencyBand, ModalParams, TimeInterval};

    fn modal(n_modes: usize) -> LtiQoSystem {
        modal_space_structure(&ModalParams {
            n_modes,
            m: 1,
            p: 1,
            damping_range: (0.2, 0.6),
            freq_range: (0.5, 5.0),
            quad_card: 4,
            seed: 11,
        })
        .unwrap()
    }

    fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn adi_pair_matches_dense_on_small_modal() {
        let sys = modal(10);
        for scenario in [
            Scenario::Infinite,
            Scenario::TimeLimited(TimeInterval::new(0.0, 2.0).unwrap()),
            Scenario::FrequencyLimited(FrequencyBand::new(3.0, 4.0).unwrap()),
        ] {
            let opts = LowRankOptions::Adi(AdiOptions { n_shifts: 20, max_iter: 200, rel_residual_tol: 1e-12, shifts: None });
            let pair = lowrank_gramians(&sys, scenario, &opts, None).unwrap();
            let dense = gram_dense(&sys, scenario).unwrap();
            assert!(rel(&pair.controllability.reconstruct(), &dense.p) < 1e-8, "{scenario:?}");
            assert!(rel(&pair.observability.reconstruct(), &dense.q) < 1e-6, "{scenario:?}");
        }
    }

    #[test]
    fn laguerre_pair_matches_dense_on_small_modal() {
        let sys = modal(10);
        for scenario in [Scenario::Infinite, Scenario::TimeLimited(TimeInterval::new(0.0, 2.0).unwrap())] {
            let opts = LowRankOptions::Laguerre(LaguerreConfig::new(1.0, 60).unwrap());
            let pair = lowrank_gramians(&sys, scenario, &opts, None).unwrap();
            let dense = gram_dense(&sys, scenario).unwrap();
            let ep = rel(&pair.controllability.reconstruct(), &dense.p);
            let eq = rel(&pair.observability.reconstruct(), &dense.q);
            assert!(ep < 1e-3 && eq < 1e-2, "{scenario:?}: {ep} {eq}");
        }
    }
}
