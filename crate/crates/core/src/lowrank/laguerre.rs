use super::{FactorRoute, LowRankDiagnostics, LowRankGramian, LowRankMethod};
use crate::error::{Error, Result};
use crate::linalg::{semidef_factor, LdlFactor, ShiftedSolver, DEFAULT_TRUNCATION_TOL};
use crate::model::{FrequencyBand, Scenario, TimeInterval};
use crate::quad::composite;
use crate::sparse::Operator;
use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

type C64 = Complex<f64>;

const MAX_PANELS: usize = 1 << 14;
const GRAM_TOL: f64 = 1e-13;

/// Scaling `alpha` (1/s) and number of retained terms `terms` (`N`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaguerreConfig {
    pub alpha: f64,
    pub terms: usize,
}

impl Default for LaguerreConfig {
    fn default() -> Self {
        Self { alpha: 1.0, terms: 20 }
    }
}

impl LaguerreConfig {
    pub fn new(alpha: f64, terms: usize) -> Result<Self> {
        let cfg = Self { alpha, terms };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.terms == 0 {
            return Err(Error::InvalidArgument("at least one Laguerre term is required".into()));
        }
        Ok(())
    }
}

/// Integration window of the basis Gram matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LaguerreWindow {
    Time(TimeInterval),
    Frequency(FrequencyBand),
}

/// `D̄` for `N` terms: the closed form when `N = 2`, quadrature otherwise.
pub fn laguerre_gram_matrix(window: LaguerreWindow, alpha: f64, terms: usize, nodes: usize) -> Result<DMatrix<f64>> {
    LaguerreConfig::new(alpha, terms)?;
    if terms == 2 {
        Ok(laguerre_gram_closed_form(window, alpha))
    } else {
        laguerre_gram_quadrature(window, alpha, terms, nodes)
    }
}

/// Hard-coded 2×2 `D̄_τ` / `D̄_Ω`.
pub fn laguerre_gram_closed_form(window: LaguerreWindow, alpha: f64) -> DMatrix<f64> {
    match window {
        LaguerreWindow::Time(TimeInterval { tau_i, tau_f }) => {
            let (xi, xf) = (2.0 * alpha * tau_i, 2.0 * alpha * tau_f);
            let (ei, ef) = ((-xi).exp(), (-xf).exp());
            // x·e^{−x} with the underflowed tail set to zero.
            let xe = |x: f64, e: f64| if e == 0.0 { 0.0 } else { x * e };
            let d00 = ei - ef;
            let d01 = xe(xf, ef) - xe(xi, ei);
            let d11 = ei * (xi * xi + 1.0) - if ef == 0.0 { 0.0 } else { ef * (xf * xf + 1.0) };
            DMatrix::from_row_slice(2, 2, &[d00, d01, d01, d11])
        }
        LaguerreWindow::Frequency(FrequencyBand { omega_1, omega_2 }) => {
            let j = C64::new(0.0, 1.0);
            let pre = j * (2.0 / PI);
            let at = |w: f64| (j * (w / alpha)).atanh();
            let rat = |w: f64| C64::new(alpha, 0.0) / C64::new(alpha, -w);
            let diag = (pre * (at(omega_1) - at(omega_2))).re;
            let off = (pre * (rat(omega_2) - rat(omega_1))).re;
            DMatrix::from_row_slice(2, 2, &[diag, off, off, diag])
        }
    }
}

/// `e^{−x/2} L_k(x)` for `k < terms`, with intermediate rescaling so large
/// `x` neither overflows the polynomial nor underflows the weight.
fn scaled_laguerre(x: f64, terms: usize, out: &mut [f64]) {
    let mut prev = 0.0;
    let mut cur = 1.0;
    let mut log_scale = 0.0;
    for k in 0..terms {
        out[k] = cur * (log_scale - 0.5 * x).exp();
        let next = ((2 * k + 1) as f64 - x) * cur - k as f64 * prev;
        prev = cur;
        cur = next / (k + 1) as f64;
        if cur.abs() > 1e100 {
            prev *= 1e-100;
            cur *= 1e-100;
            log_scale += 100.0 * std::f64::consts::LN_10;
        }
    }
}

/// Adaptive composite Gauss–Legendre evaluation of `D̄` (panel doubling until
/// successive estimates agree to `1e-13` relative).
pub fn laguerre_gram_quadrature(window: LaguerreWindow, alpha: f64, terms: usize, nodes: usize) -> Result<DMatrix<f64>> {
    LaguerreConfig::new(alpha, terms)?;
    if nodes == 0 {
        return Err(Error::InvalidArgument("nodes must be positive".into()));
    }
    let (lo, hi, mut panels) = match window {
        LaguerreWindow::Time(TimeInterval { tau_i, tau_f }) => {
            // In x = 2αt the integrand is e^{−x} L_i L_k, negligible past 8N + 100.
            let cut = 8.0 * terms as f64 + 100.0;
            let lo = (2.0 * alpha * tau_i).min(cut);
            let hi = (2.0 * alpha * tau_f).min(cut);
            (lo, hi, ((hi - lo) / 4.0).ceil().max(1.0) as usize)
        }
        LaguerreWindow::Frequency(FrequencyBand { omega_1, omega_2 }) => {
            // ν = α tan ψ maps the band into [0, π/2).
            ((omega_1 / alpha).atan(), (omega_2 / alpha).atan(), (terms / 4).max(1))
        }
    };
    if lo >= hi {
        return Ok(DMatrix::zeros(terms, terms));
    }
    let mut vals = vec![0.0; terms];
    let mut cvals = vec![C64::new(0.0, 0.0); terms];
    let mut prev: Option<DMatrix<f64>> = None;
    while panels <= MAX_PANELS {
        let (xs, ws) = composite(nodes, panels, lo, hi);
        let mut acc = DMatrix::<f64>::zeros(terms, terms);
        for (&x, &w) in xs.iter().zip(&ws) {
            match window {
                LaguerreWindow::Time(_) => scaled_laguerre(x, terms, &mut vals),
                LaguerreWindow::Frequency(_) => {
                    let nu = alpha * x.tan();
                    let jac = alpha / x.cos().powi(2) / PI;
                    let den = C64::new(alpha, nu);
                    let ratio = C64::new(-alpha, nu) / den;
                    cvals[0] = (2.0 * alpha).sqrt() / den;
                    for k in 1..terms {
                        cvals[k] = cvals[k - 1] * ratio;
                    }
                    for k in 0..terms {
                        // Re(Φ_i conj Φ_k) = Re Φ_i Re Φ_k + Im Φ_i Im Φ_k, so
                        // the real and imaginary parts are accumulated separately.
                        vals[k] = cvals[k].re * jac.sqrt();
                    }
                    for i in 0..terms {
                        for k in 0..terms {
                            acc[(i, k)] += w * jac * cvals[i].im * cvals[k].im;
                        }
                    }
                }
            }
            for i in 0..terms {
                let wi = w * vals[i];
                for k in 0..terms {
                    acc[(i, k)] += wi * vals[k];
                }
            }
        }
        if let Some(p) = &prev {
            let scale = acc.amax();
            if scale == 0.0 || (&acc - p).amax() <= GRAM_TOL * scale {
                return Ok(crate::linalg::symmetrize(&acc));
            }
        }
        prev = Some(acc);
        panels *= 2;
    }
    Err(Error::Quadrature(format!("Laguerre Gram matrix, {MAX_PANELS} panels of {nodes} nodes")))
}

/// Default node count per panel for [`laguerre_gram_matrix`].
pub const DEFAULT_GRAM_NODES: usize = 32;

/// `F̂ = [A₀B̃, …, A_{N−1}B̃]` with `A₀B̃ = √(2α)(αI−𝔸)^{-1}B̃` and
/// `AᵢB̃ = (𝔸−αI)^{-1}(𝔸+αI)A_{i−1}B̃`, one factorization of `𝔸 − αI`.
/// `op` must apply `𝔸` (`Aᵀ` when `transposed`).
pub fn laguerre_coefficients(
    solver: &ShiftedSolver,
    op: &Operator,
    transposed: bool,
    b: &DMatrix<f64>,
    cfg: &LaguerreConfig,
) -> Result<DMatrix<f64>> {
    cfg.validate()?;
    let n = solver.dim();
    if b.nrows() != n || op.dim() != n {
        return Err(Error::dim("B", format!("{n} rows"), b.nrows()));
    }
    let m = b.ncols();
    let lu = solver.factor(C64::new(-cfg.alpha, 0.0))?;
    let solve = |x: &DMatrix<f64>| {
        let xc = x.map(|v| C64::new(v, 0.0));
        let y = if transposed { solver.solve_transposed(&lu, &xc) } else { solver.solve(&lu, &xc) };
        y.map(|z| z.re)
    };
    let mut f = DMatrix::zeros(n, cfg.terms * m);
    let mut cur = solve(b) * -(2.0 * cfg.alpha).sqrt();
    for i in 0..cfg.terms {
        f.columns_mut(i * m, m).copy_from(&cur);
        if i + 1 < cfg.terms {
            let shifted = op.apply(&cur) + &cur * cfg.alpha;
            cur = solve(&shifted);
        }
    }
    Ok(f)
}

/// `Z` with `Z Zᵀ = F̂ (D̄ ⊗ I_m) F̂ᵀ`: through the Cholesky factor of `D̄`
/// when it is positive definite, through [`semidef_factor`] when `F̂` has at
/// most `n` columns, and otherwise through the truncated eigendecomposition
/// of `D̄` alone.
pub(crate) fn factor_expansion(
    fhat: &DMatrix<f64>,
    dbar: &DMatrix<f64>,
    m: usize,
) -> (DMatrix<f64>, FactorRoute, usize, f64) {
    let n = fhat.nrows();
    let terms = dbar.nrows();
    if let Some(ch) = dbar.clone().cholesky() {
        let l = ch.l();
        let dmax = (0..terms).map(|i| l[(i, i)]).fold(0.0, f64::max);
        let dmin = (0..terms).map(|i| l[(i, i)]).fold(f64::INFINITY, f64::min);
        if dmin > 1e-7 * dmax {
            return (fhat * l.kronecker(&DMatrix::identity(m, m)), FactorRoute::Cholesky, 0, 0.0);
        }
    }
    if fhat.ncols() <= n {
        let ldl = LdlFactor { l: fhat.clone(), d: dbar.kronecker(&DMatrix::identity(m, m)) };
        let sf = semidef_factor(&ldl, DEFAULT_TRUNCATION_TOL);
        return (sf.z, FactorRoute::Semidefinite, sf.negative_warnings, sf.discarded_mass);
    }
    let eig = dbar.clone().symmetric_eigen();
    let max_abs = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let cut = DEFAULT_TRUNCATION_TOL * max_abs;
    let mut cols = Vec::new();
    let mut warn = 0;
    let mut discarded = 0.0;
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > cut {
            cols.push(eig.eigenvectors.column(k) * lam.sqrt());
        } else {
            if lam < -cut {
                warn += 1;
            }
            discarded += lam.abs();
        }
    }
    let ld = if cols.is_empty() { DMatrix::zeros(terms, 0) } else { DMatrix::from_columns(&cols) };
    (fhat * ld.kronecker(&DMatrix::identity(m, m)), FactorRoute::GramEigen, warn, discarded)
}

fn standalone(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    window: Option<LaguerreWindow>,
    cfg: &LaguerreConfig,
    scenario: Scenario,
) -> Result<LowRankGramian> {
    cfg.validate()?;
    let solver = ShiftedSolver::new(a)?;
    let op = Operator::new(a);
    let fhat = laguerre_coefficients(&solver, &op, false, b, cfg)?;
    let dbar = match window {
        Some(w) => laguerre_gram_matrix(w, cfg.alpha, cfg.terms, DEFAULT_GRAM_NODES)?,
        None => DMatrix::identity(cfg.terms, cfg.terms),
    };
    Ok(assemble_gramian(&fhat, &dbar, b.ncols(), cfg, scenario))
}

pub(crate) fn assemble_gramian(
    fhat: &DMatrix<f64>,
    dbar: &DMatrix<f64>,
    m: usize,
    cfg: &LaguerreConfig,
    scenario: Scenario,
) -> LowRankGramian {
    let (z, route, negative_warnings, discarded_mass) = factor_expansion(fhat, dbar, m);
    let diagnostics = LowRankDiagnostics {
        terms: Some(cfg.terms),
        alpha: Some(cfg.alpha),
        route,
        negative_warnings,
        discarded_mass,
        retained_rank: z.ncols(),
        ..Default::default()
    };
    LowRankGramian { z, scenario, method: LowRankMethod::Laguerre, diagnostics }
}

/// Low-rank factor of `∫_{τᵢ}^{τ_f} e^{At}BBᵀe^{Aᵀt} dt` from the truncated
/// Laguerre expansion of `e^{At}`. Pass `(Aᵀ, [Cᵀ, M₁Z, …])` for the dual.
pub fn laguerre_time_factor(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    interval: TimeInterval,
    cfg: &LaguerreConfig,
) -> Result<LowRankGramian> {
    standalone(a, b, Some(LaguerreWindow::Time(interval)), cfg, Scenario::TimeLimited(interval))
}

/// Low-rank factor of the band-limited controllability integral from the
/// truncated Laguerre expansion of `(jνI−A)^{-1}B`.
pub fn laguerre_freq_factor(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    band: FrequencyBand,
    cfg: &LaguerreConfig,
) -> Result<LowRankGramian> {
    standalone(a, b, Some(LaguerreWindow::Frequency(band)), cfg, Scenario::FrequencyLimited(band))
}
