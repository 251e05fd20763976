//! Systems with quadratic outputs, their generators, and Petrov–Galerkin projection.

use crate::error::{Error, Result};
use crate::linalg::{symmetrize, RealSchur};
use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// `x' = A x + B u`, `y_i = (C x)_i + xᵀ M_i x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiQoSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    m: Vec<DMatrix<f64>>,
    abscissa: Option<f64>,
}

impl LtiQoSystem {
    /// Validates dimensions and finiteness and replaces each `M_i` by
    /// `(M_i + M_iᵀ)/2`. A missing `C` becomes a `p×n` zero matrix.
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: Option<DMatrix<f64>>,
        m_list: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let n = a.nrows();
        if n == 0 {
            return Err(Error::InvalidArgument("state dimension must be positive".into()));
        }
        if a.ncols() != n {
            return Err(Error::dim("A", format!("{n}x{n}"), format!("{}x{}", n, a.ncols())));
        }
        if b.nrows() != n {
            return Err(Error::dim("B", format!("{n} rows"), format!("{} rows", b.nrows())));
        }
        if b.ncols() == 0 {
            return Err(Error::InvalidArgument("B must have at least one column".into()));
        }
        let p = match &c {
            Some(c) => c.nrows(),
            None => m_list.len(),
        };
        if p == 0 {
            return Err(Error::InvalidArgument("at least one output is required".into()));
        }
        if m_list.len() != p {
            return Err(Error::dim("M_list", format!("{p} matrices"), format!("{} matrices", m_list.len())));
        }
        if let Some(c) = &c {
            if c.ncols() != n {
                return Err(Error::dim("C", format!("{n} columns"), format!("{} columns", c.ncols())));
            }
        }
        for (i, mi) in m_list.iter().enumerate() {
            if mi.nrows() != n || mi.ncols() != n {
                return Err(Error::dim(
                    format!("M_list[{i}]"),
                    format!("{n}x{n}"),
                    format!("{}x{}", mi.nrows(), mi.ncols()),
                ));
            }
        }
        let c = c.unwrap_or_else(|| DMatrix::zeros(p, n));
        let finite = |name: &str, x: &DMatrix<f64>| {
            if x.iter().all(|v| v.is_finite()) {
                Ok(())
            } else {
                Err(Error::NonFinite(name.to_string()))
            }
        };
        finite("A", &a)?;
        finite("B", &b)?;
        finite("C", &c)?;
        for (i, mi) in m_list.iter().enumerate() {
            finite(&format!("M_list[{i}]"), mi)?;
        }
        let m = m_list.iter().map(symmetrize).collect();
        Ok(Self { a, b, c, m, abscissa: None })
    }

    /// As [`LtiQoSystem::new`], additionally rejecting non-Hurwitz `A`.
    pub fn new_stable(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: Option<DMatrix<f64>>,
        m_list: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let sys = Self::new(a, b, c, m_list)?;
        let abscissa = spectral_abscissa(&sys)?;
        if abscissa >= 0.0 {
            return Err(Error::Unstable { abscissa });
        }
        Ok(sys.with_abscissa(abscissa))
    }

    pub(crate) fn with_abscissa(mut self, abscissa: f64) -> Self {
        self.abscissa = Some(abscissa);
        self
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn m_list(&self) -> &[DMatrix<f64>] {
        &self.m
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    /// Spectral abscissa recorded when stability was verified at construction.
    pub fn verified_abscissa(&self) -> Option<f64> {
        self.abscissa
    }

    /// Returns the spectral abscissa, failing unless it is negative.
    pub fn require_stable(&self) -> Result<f64> {
        let abscissa = match self.abscissa {
            Some(v) => v,
            None => spectral_abscissa(self)?,
        };
        if abscissa >= 0.0 {
            return Err(Error::Unstable { abscissa });
        }
        Ok(abscissa)
    }

    /// `y = C x + [xᵀ M_1 x, …, xᵀ M_p x]`.
    pub fn output(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = &self.c * x;
        for (i, mi) in self.m.iter().enumerate() {
            y[i] += x.dot(&(mi * x));
        }
        y
    }

    /// The system in coordinates `x = T x̃` for orthogonal `T`.
    pub fn orthogonal_transform(&self, t: &DMatrix<f64>) -> Result<Self> {
        let tt = t.transpose();
        let sys = Self::new(
            &tt * &self.a * t,
            &tt * &self.b,
            Some(&self.c * t),
            self.m.iter().map(|mi| &tt * mi * t).collect(),
        )?;
        Ok(match self.abscissa {
            Some(v) => sys.with_abscissa(v),
            None => sys,
        })
    }
}

/// Maximum real part over the eigenvalues of `A`.
pub fn spectral_abscissa(sys: &LtiQoSystem) -> Result<f64> {
    Ok(RealSchur::new(sys.a())?.spectral_abscissa())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeInterval {
    pub tau_i: f64,
    pub tau_f: f64,
}

impl TimeInterval {
    pub fn new(tau_i: f64, tau_f: f64) -> Result<Self> {
        if !tau_i.is_finite() || !tau_f.is_finite() {
            return Err(Error::NonFinite("time interval".into()));
        }
        if tau_i < 0.0 || tau_f < tau_i {
            return Err(Error::InvalidArgument(format!(
                "time interval requires 0 <= tau_i <= tau_f, got [{tau_i}, {tau_f}]"
            )));
        }
        Ok(Self { tau_i, tau_f })
    }

    pub fn is_empty(&self) -> bool {
        self.tau_i == self.tau_f
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyBand {
    pub omega_1: f64,
    pub omega_2: f64,
}

impl FrequencyBand {
    pub fn new(omega_1: f64, omega_2: f64) -> Result<Self> {
        if !omega_1.is_finite() || !omega_2.is_finite() {
            return Err(Error::NonFinite("frequency band".into()));
        }
        if omega_1 < 0.0 || omega_2 < omega_1 {
            return Err(Error::InvalidArgument(format!(
                "frequency band requires 0 <= omega_1 <= omega_2, got [{omega_1}, {omega_2}]"
            )));
        }
        Ok(Self { omega_1, omega_2 })
    }

    pub fn is_empty(&self) -> bool {
        self.omega_1 == self.omega_2
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.omega_1 + self.omega_2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    Infinite,
    TimeLimited(TimeInterval),
    FrequencyLimited(FrequencyBand),
}

impl Scenario {
    pub fn label(&self) -> &'static str {
        match self {
            Scenario::Infinite => "bt",
            Scenario::TimeLimited(_) => "tlbt",
            Scenario::FrequencyLimited(_) => "flbt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GramianBackend {
    Dense,
    Adi,
    Laguerre,
}

/// Reduction bases with their singular-value ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionPair {
    pub v: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub sigma: Vec<f64>,
    pub scenario: Scenario,
    pub backend: GramianBackend,
}

impl ProjectionPair {
    pub fn order(&self) -> usize {
        self.v.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSystem {
    pub system: LtiQoSystem,
    pub projection: ProjectionPair,
}

/// Largest entry of `|WᵀV − I|` accepted by [`project`].
pub const BIORTHOGONALITY_TOL: f64 = 1e-8;

/// `A_r = WᵀAV`, `B_r = WᵀB`, `C_r = CV`, `M_{i,r} = VᵀM_iV`.
pub fn project(sys: &LtiQoSystem, proj: &ProjectionPair) -> Result<ReducedSystem> {
    let n = sys.n();
    let (v, w) = (&proj.v, &proj.w);
    if v.nrows() != n || w.nrows() != n {
        return Err(Error::dim("V/W", format!("{n} rows"), format!("{}/{} rows", v.nrows(), w.nrows())));
    }
    if v.ncols() != w.ncols() {
        return Err(Error::dim("W", format!("{} columns", v.ncols()), w.ncols()));
    }
    let r = v.ncols();
    let wtv = w.tr_mul(v);
    let dev = (0..r)
        .flat_map(|i| (0..r).map(move |j| (i, j)))
        .map(|(i, j)| (wtv[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max);
    if dev > BIORTHOGONALITY_TOL {
        return Err(Error::Biorthogonality(dev));
    }
    let wt = w.transpose();
    let vt = v.transpose();
    let system = LtiQoSystem::new(
        &wt * sys.a() * v,
        &wt * sys.b(),
        Some(sys.c() * v),
        sys.m_list().iter().map(|mi| &vt * mi * v).collect(),
    )?;
    Ok(ReducedSystem { system, projection: proj.clone() })
}

fn quadratic_maps(rng: &mut ChaCha8Rng, n: usize, p: usize, quad_card: usize) -> Vec<DMatrix<f64>> {
    (0..p)
        .map(|_| {
            let mut mi = DMatrix::zeros(n, n);
            for k in sample(rng, n, quad_card).iter() {
                mi[(k, k)] = 1.0;
            }
            mi
        })
        .collect()
}

fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    let vals: Vec<f64> = (0..r * c).map(|_| rng.sample(StandardNormal)).collect();
    DMatrix::from_column_slice(r, c, &vals)
}

/// Dense random stable system `A = Q (D + S) Qᵀ` with `D` negative diagonal,
/// `S` skew-symmetric and `Q` Haar orthogonal; `B`, `C` standard normal; each
/// `M_i` diagonal with `quad_card` ones at random positions.
pub fn random_stable_system(n: usize, m: usize, p: usize, quad_card: usize, seed: u64) -> Result<LtiQoSystem> {
    if n == 0 || m == 0 || p == 0 {
        return Err(Error::InvalidArgument("n, m and p must be positive".into()));
    }
    if quad_card > n {
        return Err(Error::InvalidArgument(format!("quad_card {quad_card} exceeds n = {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let d: Vec<f64> = (0..n).map(|_| -rng.random_range(0.2..2.0)).collect();
        let g = normal_matrix(&mut rng, n, n);
        let s = (&g - g.transpose()) * (0.5 / (n as f64).sqrt());
        let core = DMatrix::from_diagonal(&DVector::from_vec(d)) + s;
        let z = normal_matrix(&mut rng, n, n);
        let qr = z.qr();
        let mut q = qr.q();
        let r = qr.r();
        for j in 0..n {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        let a = &q * core * q.transpose();
        let b = normal_matrix(&mut rng, n, m);
        let c = normal_matrix(&mut rng, p, n);
        let m_list = quadratic_maps(&mut rng, n, p, quad_card);
        let sys = LtiQoSystem::new(a, b, Some(c), m_list)?;
        let abscissa = spectral_abscissa(&sys)?;
        if abscissa < 0.0 {
            return Ok(sys.with_abscissa(abscissa));
        }
    }
}

/// Parameters of the procedural flexible-structure model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModalParams {
    pub n_modes: usize,
    pub m: usize,
    pub p: usize,
    pub damping_range: (f64, f64),
    pub freq_range: (f64, f64),
    pub quad_card: usize,
    pub seed: u64,
}

/// Block-diagonal modal model with blocks `[[0, ω_k], [−ω_k, −2ζ_kω_k]]`.
pub fn modal_space_structure(params: &ModalParams) -> Result<LtiQoSystem> {
    let ModalParams { n_modes, m, p, damping_range, freq_range, quad_card, seed } = *params;
    if n_modes == 0 || m == 0 || p == 0 {
        return Err(Error::InvalidArgument("n_modes, m and p must be positive".into()));
    }
    let (z0, z1) = damping_range;
    let (w0, w1) = freq_range;
    if !(z0 > 0.0 && z0 <= z1 && z1 <= 1.0) {
        return Err(Error::InvalidArgument(format!("damping range must satisfy 0 < lo <= hi <= 1, got [{z0}, {z1}]")));
    }
    if !(w0 > 0.0 && w0 <= w1 && w1.is_finite()) {
        return Err(Error::InvalidArgument(format!("frequency range must satisfy 0 < lo <= hi, got [{w0}, {w1}]")));
    }
    let n = 2 * n_modes;
    if quad_card > n {
        return Err(Error::InvalidArgument(format!("quad_card {quad_card} exceeds n = {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| if lo == hi { lo } else { rng.random_range(lo..hi) };
    let mut a = DMatrix::zeros(n, n);
    let mut abscissa = f64::NEG_INFINITY;
    for k in 0..n_modes {
        let zeta = draw(&mut rng, z0, z1);
        let omega = draw(&mut rng, w0, w1);
        a[(2 * k, 2 * k + 1)] = omega;
        a[(2 * k + 1, 2 * k)] = -omega;
        a[(2 * k + 1, 2 * k + 1)] = -2.0 * zeta * omega;
        let re = block_abscissa(zeta, omega);
        abscissa = abscissa.max(re);
    }
    let b = normal_matrix(&mut rng, n, m);
    let c = normal_matrix(&mut rng, p, n);
    let m_list = quadratic_maps(&mut rng, n, p, quad_card);
    Ok(LtiQoSystem::new(a, b, Some(c), m_list)?.with_abscissa(abscissa))
}

/// Largest real part of the roots of `λ² + 2ζωλ + ω²`.
fn block_abscissa(zeta: f64, omega: f64) -> f64 {
    let disc = zeta * zeta - 1.0;
    if disc <= 0.0 {
        -zeta * omega
    } else {
        -omega * (zeta - disc.sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s1() -> LtiQoSystem {
        LtiQoSystem::new(
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_element(1, 1, 1.0),
            None,
            vec![DMatrix::from_element(1, 1, 1.0)],
        )
        .unwrap()
    }

    #[test]
    fn scalar_construction() {
        let s = s1();
        assert_eq!((s.n(), s.m(), s.p()), (1, 1, 1));
        assert_eq!(s.c()[(0, 0)], 0.0);
        assert_eq!(spectral_abscissa(&s).unwrap(), -1.0);
    }

    #[test]
    fn symmetrizes_quadratic_map() {
        let s = LtiQoSystem::new(
            DMatrix::identity(2, 2) * -1.0,
            DMatrix::from_element(2, 1, 1.0),
            None,
            vec![DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 0.0, 0.0])],
        )
        .unwrap();
        assert_eq!(s.m_list()[0], DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
    }

    #[test]
    fn rejects_bad_dimensions_naming_field() {
        let err = LtiQoSystem::new(
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_element(2, 1, 1.0),
            None,
            vec![DMatrix::from_element(1, 1, 1.0)],
        )
        .unwrap_err();
        assert!(err.to_string().contains("`B`"));
        let err = LtiQoSystem::new(
            DMatrix::from_element(1, 1, f64::NAN),
            DMatrix::from_element(1, 1, 1.0),
            None,
            vec![DMatrix::from_element(1, 1, 1.0)],
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn idempotent_construction() {
        let s = random_stable_system(6, 2, 2, 3, 11).unwrap();
        let again = LtiQoSystem::new(s.a().clone(), s.b().clone(), Some(s.c().clone()), s.m_list().to_vec()).unwrap();
        assert_eq!(again.a(), s.a());
        assert_eq!(again.m_list(), s.m_list());
    }

    #[test]
    fn unstable_rejected_when_required() {
        let err = LtiQoSystem::new_stable(
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::from_element(1, 1, 1.0),
            None,
            vec![DMatrix::from_element(1, 1, 1.0)],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Unstable { .. }));
    }

    #[test]
    fn damped_oscillator_abscissa() {
        let s = LtiQoSystem::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -0.2]),
            DMatrix::from_element(2, 1, 1.0),
            None,
            vec![DMatrix::identity(2, 2)],
        )
        .unwrap();
        assert!((spectral_abscissa(&s).unwrap() + 0.1).abs() < 1e-14);
    }

    #[test]
    fn random_quadratic_maps_have_quad_card_ones() {
        let s = random_stable_system(4, 1, 1, 2, 7).unwrap();
        let m = &s.m_list()[0];
        assert_eq!(m.iter().filter(|v| **v == 1.0).count(), 2);
        assert_eq!(m.iter().filter(|v| **v != 0.0).count(), 2);
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert_eq!(m[(i, j)], 0.0);
                }
            }
        }
        assert_eq!(s, random_stable_system(4, 1, 1, 2, 7).unwrap());
    }

    #[test]
    fn quad_card_too_large() {
        assert!(random_stable_system(3, 1, 1, 4, 0).is_err());
    }

    #[test]
    fn single_mode_block() {
        let s = modal_space_structure(&ModalParams {
            n_modes: 1,
            m: 1,
            p: 1,
            damping_range: (0.1, 0.1),
            freq_range: (1.0, 1.0),
            quad_card: 1,
            seed: 0,
        })
        .unwrap();
        assert_eq!(s.a(), &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -0.2]));
        assert!((s.verified_abscissa().unwrap() + 0.1).abs() < 1e-15);
    }

    #[test]
    fn projection_identity_and_biorthogonality() {
        let s = s1();
        let pair = |v: f64, w: f64| ProjectionPair {
            v: DMatrix::from_element(1, 1, v),
            w: DMatrix::from_element(1, 1, w),
            sigma: vec![1.0],
            scenario: Scenario::Infinite,
            backend: GramianBackend::Dense,
        };
        let r = project(&s, &pair(1.0, 1.0)).unwrap();
        assert_eq!(r.system.a(), s.a());
        assert_eq!(r.system.m_list(), s.m_list());
        assert!(matches!(project(&s, &pair(2.0, 2.0)), Err(Error::Biorthogonality(_))));
    }
}
