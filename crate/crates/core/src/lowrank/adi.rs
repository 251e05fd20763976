use crate::error::{Error, Result};
use crate::linalg::{compress_indefinite, LdlFactor, ShiftedSolver, DEFAULT_TRUNCATION_TOL};
use nalgebra::{Complex, DMatrix};

type C64 = Complex<f64>;

pub const DEFAULT_ADI_TOL: f64 = 1e-4;

/// Shift set and stopping rule for [`adi_ldl`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdiConfig {
    pub shifts: Vec<C64>,
    pub max_iter: usize,
    pub rel_residual_tol: f64,
}

impl AdiConfig {
    pub fn new(shifts: Vec<C64>, max_iter: usize) -> Result<Self> {
        let cfg = Self { shifts, max_iter, rel_residual_tol: DEFAULT_ADI_TOL };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Shifts must lie in the open left half-plane and complex shifts must be
    /// followed directly by their conjugate.
    pub fn validate(&self) -> Result<()> {
        if self.shifts.is_empty() {
            return Err(Error::InvalidArgument("ADI needs at least one shift".into()));
        }
        if !(self.rel_residual_tol >= 0.0) {
            return Err(Error::InvalidArgument("residual tolerance must be non-negative".into()));
        }
        let mut i = 0;
        while i < self.shifts.len() {
            let p = self.shifts[i];
            if !(p.re.is_finite() && p.im.is_finite()) || p.re >= 0.0 {
                return Err(Error::InvalidArgument(format!("shift {p} is not in the open left half-plane")));
            }
            if p.im != 0.0 {
                match self.shifts.get(i + 1) {
                    Some(q) if *q == p.conj() => i += 2,
                    _ => return Err(Error::InvalidArgument(format!("shift {p} is not followed by its conjugate"))),
                }
            } else {
                i += 1;
            }
        }
        Ok(())
    }
}

/// Result of the `L D Lᵀ`-ADI iteration. `D` is diagonal.
#[derive(Debug, Clone)]
pub struct AdiOutcome {
    pub l: DMatrix<f64>,
    pub d: Vec<f64>,
    /// `‖𝔸X+X𝔸ᵀ+KSKᵀ‖_F / ‖KSKᵀ‖_F` after each step (a conjugate pair is one step).
    pub residual_history: Vec<f64>,
    /// Shifts consumed; a conjugate pair counts twice.
    pub iterations: usize,
    pub converged: bool,
}

impl AdiOutcome {
    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(0.0)
    }

    pub fn ldl(&self) -> LdlFactor {
        LdlFactor { l: self.l.clone(), d: DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.d)) }
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        crate::linalg::symmetrize(&(crate::linalg::scale_columns(&self.l, &self.d) * self.l.transpose()))
    }
}

/// Approximates `X` in `A X + X Aᵀ + K S Kᵀ = 0` by `L D Lᵀ`.
pub fn adi_ldl(a: &DMatrix<f64>, k: &DMatrix<f64>, s: &DMatrix<f64>, cfg: &AdiConfig) -> Result<AdiOutcome> {
    let solver = ShiftedSolver::new(a)?;
    adi_ldl_with(&solver, false, k, s, cfg)
}

/// [`adi_ldl`] on a prepared solver; `transposed` selects `𝔸 = Aᵀ`.
pub fn adi_ldl_with(
    solver: &ShiftedSolver,
    transposed: bool,
    k: &DMatrix<f64>,
    s: &DMatrix<f64>,
    cfg: &AdiConfig,
) -> Result<AdiOutcome> {
    cfg.validate()?;
    let n = solver.dim();
    if k.nrows() != n {
        return Err(Error::dim("K", format!("{n} rows"), k.nrows()));
    }
    if s.nrows() != k.ncols() || s.ncols() != k.ncols() {
        return Err(Error::dim("S", format!("{0}x{0}", k.ncols()), format!("{}x{}", s.nrows(), s.ncols())));
    }
    if k.iter().chain(s.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ADI right-hand side".into()));
    }
    let (mut w, sd) = compress_indefinite(k, &crate::linalg::symmetrize(s), DEFAULT_TRUNCATION_TOL);
    let mut outcome = AdiOutcome {
        l: DMatrix::zeros(n, 0),
        d: vec![],
        residual_history: vec![],
        iterations: 0,
        converged: true,
    };
    if w.ncols() == 0 {
        return Ok(outcome);
    }
    let norm0 = weighted_norm(&w, &sd);
    let mut blocks: Vec<DMatrix<f64>> = Vec::new();
    let mut d = Vec::new();
    let mut idx = 0;
    outcome.converged = false;
    while outcome.iterations < cfg.max_iter {
        let p = cfg.shifts[idx % cfg.shifts.len()];
        if p.im == 0.0 {
            let v = solver.solve_real(p.re, &w, transposed)?;
            w -= &v * (2.0 * p.re);
            d.extend(sd.iter().map(|x| -2.0 * p.re * x));
            blocks.push(v);
            outcome.iterations += 1;
            idx += 1;
        } else {
            let lu = solver.factor(p)?;
            let wc = w.map(|x| C64::new(x, 0.0));
            let v = if transposed { solver.solve_transposed(&lu, &wc) } else { solver.solve(&lu, &wc) };
            let vr = v.map(|z| z.re);
            let vi = v.map(|z| z.im);
            let delta = p.re / p.im;
            let g2 = -4.0 * p.re;
            let u = &vr + &vi * delta;
            w += &u * g2;
            d.extend(sd.iter().map(|x| g2 * x));
            d.extend(sd.iter().map(|x| g2 * (delta * delta + 1.0) * x));
            blocks.push(u);
            blocks.push(vi);
            outcome.iterations += 2;
            idx += 2;
        }
        let res = weighted_norm(&w, &sd) / norm0;
        outcome.residual_history.push(res);
        if res <= cfg.rel_residual_tol {
            outcome.converged = true;
            break;
        }
    }
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut l = DMatrix::zeros(n, cols);
    let mut c0 = 0;
    for b in &blocks {
        l.columns_mut(c0, b.ncols()).copy_from(b);
        c0 += b.ncols();
    }
    outcome.l = l;
    outcome.d = d;
    Ok(outcome)
}

/// `‖W diag(s) Wᵀ‖_F` through the small Gram matrix `WᵀW`.
fn weighted_norm(w: &DMatrix<f64>, s: &[f64]) -> f64 {
    let g = w.tr_mul(w);
    let mut acc = 0.0;
    for j in 0..s.len() {
        for i in 0..s.len() {
            acc += s[i] * s[j] * g[(i, j)] * g[(i, j)];
        }
    }
    acc.max(0.0).sqrt()
}
