//! Square-root balanced truncation for the unrestricted, time-limited and
//! frequency-limited Gramian pairs.

use crate::error::{Error, Result};
use crate::gramians::{f_omega, gram_freq_limited_with, gram_infinite_with, gram_time_limited_with};
use crate::linalg::{asymmetry, cholesky, symmetric_eigenvalues_desc, svd, LyapunovSolver};
use crate::lowrank::{lowrank_gramians, AdiOptions, LaguerreConfig, LowRankDiagnostics, LowRankOptions};
use crate::model::{project, GramianBackend, LtiQoSystem, ProjectionPair, ReducedSystem, Scenario};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Relative floor `σ_r ≥ SIGMA_FLOOR·σ₁` enforced before inverting `Σ^{1/2}`.
pub const SIGMA_FLOOR: f64 = 1e-12;

/// Gramian backend with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum BackendConfig {
    Dense,
    Adi(AdiOptions),
    Laguerre(LaguerreConfig),
}

impl BackendConfig {
    pub fn kind(&self) -> GramianBackend {
        match self {
            BackendConfig::Dense => GramianBackend::Dense,
            BackendConfig::Adi(_) => GramianBackend::Adi,
            BackendConfig::Laguerre(_) => GramianBackend::Laguerre,
        }
    }
}

/// Wall-clock seconds per pipeline stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    /// Gramians (dense) or low-rank factors, excluding `F_Ω`.
    pub gramians: f64,
    /// `F_Ω`, when the scenario needs it.
    pub f_omega: Option<f64>,
    /// Square-root factors of dense Gramians (zero for low-rank backends).
    pub factorization: f64,
    pub svd: f64,
    pub projection: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub order: usize,
    pub scenario: Scenario,
    pub backend: GramianBackend,
    pub sigma: Vec<f64>,
    pub discarded_sigma: Vec<f64>,
    pub controllability: Option<LowRankDiagnostics>,
    pub observability: Option<LowRankDiagnostics>,
    /// Set when the dense Cholesky factor needed the semidefinite fallback.
    pub semidefinite_fallback: bool,
    pub timings: StageTimings,
}

/// Result of [`square_root_reduce`]: the ROM and every singular value of `YᵀZ`.
#[derive(Debug, Clone)]
pub struct SquareRootOutput {
    pub reduced: ReducedSystem,
    pub all_sigma: Vec<f64>,
}

/// Balanced truncation from factors `P ≈ ZZᵀ`, `Q ≈ YYᵀ`: `YᵀZ = UΣVᵀ`,
/// `V_r = Z V₁ Σ_r^{-1/2}`, `W_r = Y U₁ Σ_r^{-1/2}`.
pub fn square_root_reduce(
    sys: &LtiQoSystem,
    z: &DMatrix<f64>,
    y: &DMatrix<f64>,
    r: usize,
    scenario: Scenario,
    backend: GramianBackend,
) -> Result<SquareRootOutput> {
    let (proj, all_sigma) = square_root_bases(sys.n(), z, y, r, scenario, backend)?;
    let reduced = project(sys, &proj)?;
    Ok(SquareRootOutput { reduced, all_sigma })
}

fn square_root_bases(
    n: usize,
    z: &DMatrix<f64>,
    y: &DMatrix<f64>,
    r: usize,
    scenario: Scenario,
    backend: GramianBackend,
) -> Result<(ProjectionPair, Vec<f64>)> {
    if z.nrows() != n || y.nrows() != n {
        return Err(Error::dim("Z/Y", format!("{n} rows"), format!("{}/{}", z.nrows(), y.nrows())));
    }
    if r == 0 {
        return Err(Error::InvalidArgument("reduced order must be positive".into()));
    }
    let f = svd(&y.tr_mul(z))?;
    let s1 = f.sigma.first().copied().unwrap_or(0.0);
    let rank_tol = f64::EPSILON * z.ncols().max(y.ncols()) as f64 * s1;
    let rank = f.sigma.iter().filter(|&&s| s1 > 0.0 && s > rank_tol).count();
    if r > rank {
        return Err(Error::RankExceeded { requested: r, max: rank });
    }
    let floor = SIGMA_FLOOR * s1;
    if f.sigma[r - 1] < floor {
        return Err(Error::BelowFloor { order: r, sigma: f.sigma[r - 1], floor });
    }
    let mut v = z * f.v.columns(0, r);
    let mut w = y * f.u.columns(0, r);
    for j in 0..r {
        let s = f.sigma[j].sqrt().recip();
        v.column_mut(j).scale_mut(s);
        w.column_mut(j).scale_mut(s);
    }
    let proj = ProjectionPair { v, w, sigma: f.sigma[..r].to_vec(), scenario, backend };
    Ok((proj, f.sigma))
}

/// Full pipeline: Gramians (or factors), square roots, SVD, projection.
pub fn reduce(
    sys: &LtiQoSystem,
    scenario: Scenario,
    backend: &BackendConfig,
    r: usize,
) -> Result<(ReducedSystem, ReductionReport)> {
    sys.require_stable()?;
    let mut timings = StageTimings::default();
    let mut report_fallback = false;
    let (z, y, diag_c, diag_o) = match backend {
        BackendConfig::Dense => {
            let t0 = Instant::now();
            let solver = LyapunovSolver::new(sys.a())?;
            let g = match scenario {
                Scenario::Infinite => gram_infinite_with(sys, &solver)?,
                Scenario::TimeLimited(i) => gram_time_limited_with(sys, &solver, i)?,
                Scenario::FrequencyLimited(b) => {
                    let mut elapsed = t0.elapsed().as_secs_f64();
                    let tf = Instant::now();
                    let f = f_omega(sys, b)?;
                    timings.f_omega = Some(tf.elapsed().as_secs_f64());
                    let tg = Instant::now();
                    let g = gram_freq_limited_with(sys, &solver, b, &f)?;
                    elapsed += tg.elapsed().as_secs_f64();
                    timings.gramians = elapsed;
                    g
                }
            };
            if timings.f_omega.is_none() {
                timings.gramians = t0.elapsed().as_secs_f64();
            }
            let t1 = Instant::now();
            let zc = cholesky(&g.p)?;
            let yc = cholesky(&g.q)?;
            timings.factorization = t1.elapsed().as_secs_f64();
            report_fallback = zc.semidefinite_fallback || yc.semidefinite_fallback;
            (zc.l, yc.l, None, None)
        }
        BackendConfig::Adi(_) | BackendConfig::Laguerre(_) => {
            let opts = match backend {
                BackendConfig::Adi(o) => LowRankOptions::Adi(o.clone()),
                BackendConfig::Laguerre(c) => LowRankOptions::Laguerre(*c),
                BackendConfig::Dense => unreachable!(),
            };
            // The ADI right-hand side needs F_Ω; the Laguerre path never forms it.
            let f = match (scenario, backend) {
                (Scenario::FrequencyLimited(b), BackendConfig::Adi(_)) => {
                    let tf = Instant::now();
                    let f = f_omega(sys, b)?;
                    timings.f_omega = Some(tf.elapsed().as_secs_f64());
                    Some(f)
                }
                _ => None,
            };
            let t0 = Instant::now();
            let pair = lowrank_gramians(sys, scenario, &opts, f.as_ref())?;
            timings.gramians = t0.elapsed().as_secs_f64();
            (
                pair.controllability.z,
                pair.observability.z,
                Some(pair.controllability.diagnostics),
                Some(pair.observability.diagnostics),
            )
        }
    };
    let t2 = Instant::now();
    let (proj, all_sigma) = square_root_bases(sys.n(), &z, &y, r, scenario, backend.kind())?;
    timings.svd = t2.elapsed().as_secs_f64();
    let t3 = Instant::now();
    let reduced = project(sys, &proj)?;
    timings.projection = t3.elapsed().as_secs_f64();
    let report = ReductionReport {
        order: r,
        scenario,
        backend: backend.kind(),
        sigma: all_sigma[..r].to_vec(),
        discarded_sigma: all_sigma[r..].to_vec(),
        controllability: diag_c,
        observability: diag_o,
        semidefinite_fallback: report_fallback,
        timings,
    };
    Ok((reduced, report))
}

/// Eigenvalues divided by the largest, descending; empty for the zero matrix.
pub fn eigenvalue_decay(g: &DMatrix<f64>) -> Result<Vec<f64>> {
    if g.nrows() != g.ncols() {
        return Err(Error::dim("G", "square", format!("{}x{}", g.nrows(), g.ncols())));
    }
    let asym = asymmetry(g);
    if asym > 1e-8 {
        return Err(Error::NotSymmetric(asym));
    }
    let ev = symmetric_eigenvalues_desc(g);
    match ev.first() {
        Some(&top) if top > 0.0 => Ok(ev.iter().map(|v| v / top).collect()),
        _ => Ok(vec![]),
    }
}

/// Smallest order whose next singular value falls below `ratio·σ₁`. A
/// heuristic only; the order is otherwise a user choice.
pub fn suggest_order(sigma: &[f64], ratio: f64) -> usize {
    let Some(&s1) = sigma.first() else { return 0 };
    sigma.iter().take_while(|&&s| s >= ratio * s1).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gramians::{gram_dense, gram_time_limited};
    use crate::model::{random_stable_system, FrequencyBand, TimeInterval};
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
    fn scalar_square_root() {
        let s = s1();
        let z = DMatrix::from_element(1, 1, 0.5f64.sqrt());
        let y = DMatrix::from_element(1, 1, 0.5);
        let out = square_root_reduce(&s, &z, &y, 1, Scenario::Infinite, GramianBackend::Dense).unwrap();
        assert_relative_eq!(out.all_sigma[0], 0.125f64.sqrt(), epsilon = 1e-15);
        let rom = &out.reduced.system;
        assert_relative_eq!(rom.a()[(0, 0)], -1.0, epsilon = 1e-14);
        // Same input-to-quadratic-output map: b_r² m_r = b² m.
        assert_relative_eq!(rom.b()[(0, 0)].powi(2) * rom.m_list()[0][(0, 0)], 1.0, epsilon = 1e-14);
        let err = square_root_reduce(&s, &z, &y, 2, Scenario::Infinite, GramianBackend::Dense).unwrap_err();
        assert!(matches!(err, Error::RankExceeded { requested: 2, max: 1 }));
    }

    #[test]
    fn scalar_pipelines() {
        let (rom, rep) = reduce(&s1(), Scenario::Infinite, &BackendConfig::Dense, 1).unwrap();
        assert_relative_eq!(rep.sigma[0], 0.125f64.sqrt(), epsilon = 1e-14);
        assert_eq!(rom.system.n(), 1);
        let interval = TimeInterval::new(0.0, 1.0).unwrap();
        let (_, rep) = reduce(&s1(), Scenario::TimeLimited(interval), &BackendConfig::Dense, 1).unwrap();
        let e2 = (-2f64).exp();
        let pt = (1.0 - e2) / 2.0;
        assert_relative_eq!(rep.sigma[0], (pt * pt * pt).sqrt(), epsilon = 1e-12);
        assert_relative_eq!(rep.sigma[0], 0.284267, epsilon = 1e-6);
        assert!(rep.timings.gramians >= 0.0 && rep.timings.svd >= 0.0);
    }

    #[test]
    fn empty_band_has_rank_zero() {
        let band = FrequencyBand::new(2.0, 2.0).unwrap();
        let err = reduce(&s1(), Scenario::FrequencyLimited(band), &BackendConfig::Dense, 1).unwrap_err();
        assert!(matches!(err, Error::RankExceeded { max: 0, .. }));
    }

    #[test]
    fn balancing_identity_time_limited() {
        let sys = random_stable_system(12, 2, 2, 4, 21).unwrap();
        let interval = TimeInterval::new(0.0, 1.5).unwrap();
        let g = gram_time_limited(&sys, interval).unwrap();
        let (rom, rep) = reduce(&sys, Scenario::TimeLimited(interval), &BackendConfig::Dense, 6).unwrap();
        let pr = &rom.projection;
        let wpw = pr.w.tr_mul(&(&g.p * &pr.w));
        let vqv = pr.v.tr_mul(&(&g.q * &pr.v));
        let sig = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(rep.sigma.clone()));
        assert!((wpw - &sig).norm() / sig.norm() < 1e-8);
        assert!((vqv - &sig).norm() / sig.norm() < 1e-8);
    }

    #[test]
    fn sigma_invariant_under_orthogonal_transform() {
        let sys = random_stable_system(8, 1, 1, 3, 2).unwrap();
        let q = DMatrix::from_fn(8, 8, |i, j| ((i * 7 + j * 3) as f64).sin()).qr().q();
        let moved = sys.orthogonal_transform(&q).unwrap();
        let scenario = Scenario::FrequencyLimited(FrequencyBand::new(0.5, 2.0).unwrap());
        let (_, a) = reduce(&sys, scenario, &BackendConfig::Dense, 4).unwrap();
        let (_, b) = reduce(&moved, scenario, &BackendConfig::Dense, 4).unwrap();
        for (x, y) in a.sigma.iter().zip(&b.sigma) {
            assert_relative_eq!(x, y, max_relative = 1e-8);
        }
        let _ = gram_dense(&sys, scenario).unwrap();
    }

    #[test]
    fn decay_examples() {
        assert_eq!(eigenvalue_decay(&DMatrix::identity(3, 3)).unwrap(), vec![1.0, 1.0, 1.0]);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 1.0, 0.0]));
        assert_eq!(eigenvalue_decay(&d).unwrap(), vec![1.0, 0.25, 0.0]);
        assert!(eigenvalue_decay(&DMatrix::zeros(2, 2)).unwrap().is_empty());
        assert!(eigenvalue_decay(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0])).is_err());
    }

    #[test]
    fn suggestion_heuristic() {
        assert_eq!(suggest_order(&[1.0, 0.5, 1e-3, 1e-9], 1e-2), 2);
        assert_eq!(suggest_order(&[], 1e-2), 0);
    }
}
