//! Time-domain simulation from `x(0) = 0` with an embedded 5(4) Runge–Kutta
//! pair, and pointwise relative output errors between full and reduced models.

use crate::error::{Error, Result};
use crate::model::{LtiQoSystem, Scenario};
use crate::reduction::{reduce, BackendConfig, ReductionReport};
use crate::sparse::Operator;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::str::FromStr;

pub const DEFAULT_RTOL: f64 = 1e-8;
pub const DEFAULT_ATOL: f64 = 1e-10;
pub const DEFAULT_SAMPLES: usize = 2000;
pub const DEFAULT_GUARD: f64 = 1e-300;

/// Scalar input waveform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Signal {
    Zero,
    Step { amplitude: f64 },
    /// `amplitude·cos(omega·t + phase)`, `omega` in rad/s.
    Sinusoid { amplitude: f64, omega: f64, phase: f64 },
}

impl Signal {
    pub fn sinusoid(amplitude: f64, omega: f64) -> Self {
        Signal::Sinusoid { amplitude, omega, phase: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Signal::Zero => true,
            Signal::Step { amplitude } => amplitude.is_finite(),
            Signal::Sinusoid { amplitude, omega, phase } => {
                amplitude.is_finite() && omega.is_finite() && phase.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::NonFinite("signal parameters".into()))
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Signal::Zero => 0.0,
            Signal::Step { amplitude } => amplitude,
            Signal::Sinusoid { amplitude, omega, phase } => amplitude * (omega * t + phase).cos(),
        }
    }
}

/// Parses `zero`, `step:A` or `sin:A,omega[,phase]` (`cos:` is accepted too).
impl FromStr for Signal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("cannot parse signal `{s}`"));
        let (kind, params) = s.split_once(':').unwrap_or((s, ""));
        let nums: Vec<f64> = if params.trim().is_empty() {
            vec![]
        } else {
            params.split(',').map(|v| v.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<_>>()?
        };
        let sig = match (kind.trim(), nums.as_slice()) {
            ("zero", []) => Signal::Zero,
            ("step", [a]) => Signal::Step { amplitude: *a },
            ("sin" | "cos" | "sinusoid", [a, w]) => Signal::sinusoid(*a, *w),
            ("sin" | "cos" | "sinusoid", [a, w, p]) => Signal::Sinusoid { amplitude: *a, omega: *w, phase: *p },
            _ => return Err(bad()),
        };
        sig.validate()?;
        Ok(sig)
    }
}

/// One signal on every input channel unless overridden per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Input {
    pub default: Signal,
    #[serde(default)]
    pub overrides: BTreeMap<usize, Signal>,
}

impl From<Signal> for Input {
    fn from(default: Signal) -> Self {
        Self { default, overrides: BTreeMap::new() }
    }
}

impl Input {
    pub fn validate(&self, m: usize) -> Result<()> {
        self.default.validate()?;
        for (&ch, sig) in &self.overrides {
            if ch >= m {
                return Err(Error::InvalidArgument(format!("input channel {ch} out of range (m = {m})")));
            }
            sig.validate()?;
        }
        Ok(())
    }

    fn fill(&self, t: f64, u: &mut DVector<f64>) {
        u.fill(self.default.value(t));
        for (&ch, sig) in &self.overrides {
            u[ch] = sig.value(t);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub t_end: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Uniform report samples on `[0, t_end]`, endpoints included.
    pub samples: usize,
}

impl SimOptions {
    pub fn new(t_end: f64) -> Self {
        Self { t_end, rtol: DEFAULT_RTOL, atol: DEFAULT_ATOL, samples: DEFAULT_SAMPLES }
    }

    fn validate(&self) -> Result<()> {
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(Error::InvalidArgument(format!("t_end must be positive, got {}", self.t_end)));
        }
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        if self.samples < 2 {
            return Err(Error::InvalidArgument("at least two report samples are required".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        let last = (self.samples - 1) as f64;
        (0..self.samples).map(|k| if k + 1 == self.samples { self.t_end } else { self.t_end * k as f64 / last }).collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// `y = C x + [xᵀM_i x]_i` at each report time.
    pub outputs: Vec<DVector<f64>>,
    pub stats: SolverStats,
}

impl Trajectory {
    pub fn channel(&self, i: usize) -> Vec<f64> {
        self.outputs.iter().map(|y| y[i]).collect()
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.first().map_or(0, |y| y.len())
    }
}

// Dormand–Prince coefficients.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn lincomb(x: &DVector<f64>, h: f64, terms: &[(f64, &DVector<f64>)], out: &mut DVector<f64>) {
    out.copy_from(x);
    for (c, k) in terms {
        if *c != 0.0 {
            out.axpy(h * c, k, 1.0);
        }
    }
}

/// Simulates `ẋ = Ax + Bu`, `x(0) = 0`, sampling the dense output on
/// [`SimOptions::grid`].
pub fn simulate(sys: &LtiQoSystem, input: &Input, opts: &SimOptions) -> Result<Trajectory> {
    input.validate(sys.m())?;
    simulate_with(sys, |t, u| input.fill(t, u), opts)
}

/// As [`simulate`] with an arbitrary input `u(t)` written into its second argument.
pub fn simulate_with<F>(sys: &LtiQoSystem, input: F, opts: &SimOptions) -> Result<Trajectory>
where
    F: Fn(f64, &mut DVector<f64>),
{
    opts.validate()?;
    let n = sys.n();
    let op = Operator::new(sys.a());
    let b = sys.b();
    let mut u = DVector::zeros(sys.m());
    let mut evals = 0usize;
    let mut f = |t: f64, x: &DVector<f64>, out: &mut DVector<f64>| {
        op.apply_vec_into(x, out);
        input(t, &mut u);
        out.gemv(1.0, b, &u, 1.0);
        evals += 1;
    };
    let grid = opts.grid();
    let mut times = Vec::with_capacity(grid.len());
    let mut states = Vec::with_capacity(grid.len());
    let mut x = DVector::zeros(n);
    times.push(grid[0]);
    states.push(x.clone());
    let mut next = 1;

    let scale = |a: &DVector<f64>, b: &DVector<f64>, i: usize| opts.atol + opts.rtol * a[i].abs().max(b[i].abs());
    let rms = |v: &DVector<f64>, x: &DVector<f64>| -> f64 {
        (v.iter().enumerate().map(|(i, e)| (e / scale(x, x, i)).powi(2)).sum::<f64>() / n as f64).sqrt()
    };

    let mut k1 = DVector::zeros(n);
    f(0.0, &x, &mut k1);
    let mut k2 = DVector::zeros(n);
    let mut k3 = DVector::zeros(n);
    let mut k4 = DVector::zeros(n);
    let mut k5 = DVector::zeros(n);
    let mut k6 = DVector::zeros(n);
    let mut k7 = DVector::zeros(n);
    let mut tmp = DVector::zeros(n);
    let mut y1 = DVector::zeros(n);

    // Initial step size.
    let mut h = {
        let d0 = rms(&x, &x);
        let d1 = rms(&k1, &x);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        lincomb(&x, h0, &[(1.0, &k1)], &mut tmp);
        f(h0, &tmp, &mut k2);
        k2 -= &k1;
        let d2 = rms(&k2, &x) / h0;
        let m = d1.max(d2);
        let h1 = if m <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / m).powf(0.2) };
        (100.0 * h0).min(h1).min(opts.t_end)
    };

    let mut t = 0.0;
    let mut stats = SolverStats::default();
    let mut last_rejected = false;
    while t < opts.t_end {
        let last = t + h >= opts.t_end;
        if last {
            h = opts.t_end - t;
        }
        if h <= 16.0 * f64::EPSILON * t.abs().max(f64::MIN_POSITIVE) || !h.is_finite() {
            return Err(Error::StepUnderflow { t });
        }
        lincomb(&x, h, &[(A21, &k1)], &mut tmp);
        f(t + C2 * h, &tmp, &mut k2);
        lincomb(&x, h, &[(A31, &k1), (A32, &k2)], &mut tmp);
        f(t + C3 * h, &tmp, &mut k3);
        lincomb(&x, h, &[(A41, &k1), (A42, &k2), (A43, &k3)], &mut tmp);
        f(t + C4 * h, &tmp, &mut k4);
        lincomb(&x, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], &mut tmp);
        f(t + C5 * h, &tmp, &mut k5);
        lincomb(&x, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)], &mut tmp);
        let t_new = if last { opts.t_end } else { t + h };
        f(t_new, &tmp, &mut k6);
        lincomb(&x, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)], &mut y1);
        f(t_new, &y1, &mut k7);
        lincomb(&DVector::zeros(n), h, &[(E1, &k1), (E3, &k3), (E4, &k4), (E5, &k5), (E6, &k6), (E7, &k7)], &mut tmp);
        let err = (tmp.iter().enumerate().map(|(i, e)| (e / scale(&x, &y1, i)).powi(2)).sum::<f64>() / n as f64).sqrt();
        if !err.is_finite() {
            h *= 0.2;
            stats.rejected += 1;
            last_rejected = true;
            continue;
        }
        if err <= 1.0 {
            stats.accepted += 1;
            if next < grid.len() && grid[next] <= t_new {
                // Continuous extension on [t, t_new].
                let r2 = &y1 - &x;
                let r3 = &k1 * h - &r2;
                let r4 = &r2 - &k7 * h - &r3;
                let mut r5 = DVector::zeros(n);
                lincomb(&r5.clone(), h, &[(D1, &k1), (D3, &k3), (D4, &k4), (D5, &k5), (D6, &k6), (D7, &k7)], &mut r5);
                while next < grid.len() && grid[next] <= t_new {
                    let ts = grid[next];
                    let state = if ts == t_new {
                        y1.clone()
                    } else {
                        let th = (ts - t) / h;
                        let th1 = 1.0 - th;
                        &x + (&r2 + (&r3 + (&r4 + &r5 * th1) * th) * th1) * th
                    };
                    times.push(ts);
                    states.push(state);
                    next += 1;
                }
            }
            std::mem::swap(&mut x, &mut y1);
            std::mem::swap(&mut k1, &mut k7);
            t = t_new;
            let mut fac = (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 10.0);
            if last_rejected {
                fac = fac.min(1.0);
            }
            last_rejected = false;
            h *= fac;
        } else {
            stats.rejected += 1;
            last_rejected = true;
            h *= (0.9 * err.powf(-0.2)).max(0.2);
        }
    }
    stats.evaluations = evals;
    let outputs = states.iter().map(|s| sys.output(s)).collect();
    Ok(Trajectory { times, states, outputs, stats })
}

/// Pointwise `|y − y_r| / max(|y|, guard)` per output channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSeries {
    pub times: Vec<f64>,
    /// `errors[channel][sample]`.
    pub errors: Vec<Vec<f64>>,
    /// Samples where `|y| ≤ guard`; they are left out of the aggregates.
    pub flagged: Vec<Vec<bool>>,
    pub aggregates: Vec<ChannelAggregate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelAggregate {
    pub max: f64,
    /// Trapezoidal time average over segments with both ends unflagged.
    pub mean: f64,
    pub flagged: usize,
}

fn aggregate(times: &[f64], e: &[f64], flagged: &[bool]) -> ChannelAggregate {
    let max = e.iter().zip(flagged).filter(|(_, f)| !**f).map(|(v, _)| *v).fold(0.0, f64::max);
    let (mut area, mut span) = (0.0, 0.0);
    for k in 1..times.len() {
        if !flagged[k - 1] && !flagged[k] {
            let dt = times[k] - times[k - 1];
            area += 0.5 * dt * (e[k - 1] + e[k]);
            span += dt;
        }
    }
    let mean = if span > 0.0 {
        area / span
    } else {
        let kept: Vec<f64> = e.iter().zip(flagged).filter(|(_, f)| !**f).map(|(v, _)| *v).collect();
        if kept.is_empty() { 0.0 } else { kept.iter().sum::<f64>() / kept.len() as f64 }
    };
    ChannelAggregate { max, mean, flagged: flagged.iter().filter(|f| **f).count() }
}

impl ErrorSeries {
    fn build(times: Vec<f64>, errors: Vec<Vec<f64>>, flagged: Vec<Vec<bool>>) -> Self {
        let aggregates = errors.iter().zip(&flagged).map(|(e, f)| aggregate(&times, e, f)).collect();
        Self { times, errors, flagged, aggregates }
    }

    /// Samples with `t0 ≤ t ≤ t1`, aggregates recomputed.
    pub fn restrict(&self, t0: f64, t1: f64) -> Self {
        let keep: Vec<usize> = (0..self.times.len()).filter(|&k| self.times[k] >= t0 && self.times[k] <= t1).collect();
        let times = keep.iter().map(|&k| self.times[k]).collect();
        let errors = self.errors.iter().map(|e| keep.iter().map(|&k| e[k]).collect()).collect();
        let flagged = self.flagged.iter().map(|f| keep.iter().map(|&k| f[k]).collect()).collect();
        Self::build(times, errors, flagged)
    }

    /// Largest unflagged error over all channels.
    pub fn max(&self) -> f64 {
        self.aggregates.iter().map(|a| a.max).fold(0.0, f64::max)
    }

    /// Time-averaged error, averaged over channels.
    pub fn mean(&self) -> f64 {
        if self.aggregates.is_empty() {
            return 0.0;
        }
        self.aggregates.iter().map(|a| a.mean).sum::<f64>() / self.aggregates.len() as f64
    }
}

pub fn relative_error(y: &Trajectory, y_r: &Trajectory, guard: f64) -> Result<ErrorSeries> {
    if y.times.len() != y_r.times.len() {
        return Err(Error::GridMismatch(format!("{} vs {} samples", y.times.len(), y_r.times.len())));
    }
    let scale = y.times.last().copied().unwrap_or(0.0).abs().max(1.0);
    if let Some(k) = y.times.iter().zip(&y_r.times).position(|(a, b)| (a - b).abs() > 1e-12 * scale) {
        return Err(Error::GridMismatch(format!("t = {} vs {} at sample {k}", y.times[k], y_r.times[k])));
    }
    if y.n_outputs() != y_r.n_outputs() {
        return Err(Error::GridMismatch(format!("{} vs {} output channels", y.n_outputs(), y_r.n_outputs())));
    }
    if !(guard > 0.0) {
        return Err(Error::InvalidArgument("guard must be positive".into()));
    }
    let p = y.n_outputs();
    let mut errors = vec![Vec::with_capacity(y.times.len()); p];
    let mut flagged = vec![Vec::with_capacity(y.times.len()); p];
    for (a, b) in y.outputs.iter().zip(&y_r.outputs) {
        for i in 0..p {
            let den = a[i].abs();
            errors[i].push((a[i] - b[i]).abs() / den.max(guard));
            flagged[i].push(den <= guard);
        }
    }
    Ok(ErrorSeries::build(y.times.clone(), errors, flagged))
}

/// Settings for [`run_comparison`]. Unset fields take scenario defaults:
/// a `0.1·cos(ω t)` input at the band midpoint (1 rad/s outside frequency
/// scenarios) and a horizon of `τ_f` for time windows or `20/|Re λ_max|`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonConfig {
    pub scenario: Scenario,
    pub order: usize,
    pub backend: BackendConfig,
    pub signal: Option<Signal>,
    pub horizon: Option<f64>,
    pub rtol: f64,
    pub atol: f64,
    pub samples: usize,
    pub guard: f64,
}

impl ComparisonConfig {
    pub fn new(scenario: Scenario, order: usize, backend: BackendConfig) -> Self {
        Self {
            scenario,
            order,
            backend,
            signal: None,
            horizon: None,
            rtol: DEFAULT_RTOL,
            atol: DEFAULT_ATOL,
            samples: DEFAULT_SAMPLES,
            guard: DEFAULT_GUARD,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MethodComparison {
    pub error: ErrorSeries,
    pub report: ReductionReport,
    pub reduced: Trajectory,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub signal: Signal,
    pub horizon: f64,
    /// `1/|Re λ_max|`.
    pub settling_time: f64,
    /// Evaluation window the error series are restricted to.
    pub window: (f64, f64),
    pub full: Trajectory,
    pub bt: MethodComparison,
    /// Absent for the unrestricted scenario, which is the baseline itself.
    pub limited: Option<MethodComparison>,
}

/// `0.1·cos(ω t)` at the band midpoint, or at 1 rad/s outside frequency scenarios.
pub fn default_signal(scenario: Scenario) -> Signal {
    match scenario {
        Scenario::FrequencyLimited(b) => Signal::sinusoid(0.1, b.midpoint()),
        _ => Signal::sinusoid(0.1, 1.0),
    }
}

/// `τ_f` for a nonempty time window, otherwise `20/|abscissa|`.
pub fn default_horizon(scenario: Scenario, abscissa: f64) -> f64 {
    match scenario {
        Scenario::TimeLimited(i) if i.tau_f > 0.0 => i.tau_f,
        _ => 20.0 / abscissa.abs(),
    }
}

/// Reduces with plain BT and with the scenario's method, simulates the full
/// model and both ROMs, and returns the output errors over the window.
pub fn run_comparison(sys: &LtiQoSystem, cfg: &ComparisonConfig) -> Result<Comparison> {
    let abscissa = sys.require_stable()?;
    let settling_time = 1.0 / abscissa.abs();
    let signal = cfg.signal.unwrap_or_else(|| default_signal(cfg.scenario));
    let horizon = cfg.horizon.unwrap_or_else(|| default_horizon(cfg.scenario, abscissa));
    let window = match cfg.scenario {
        Scenario::TimeLimited(i) => {
            if horizon < i.tau_f {
                return Err(Error::InvalidArgument(format!("horizon {horizon} ends before tau_f = {}", i.tau_f)));
            }
            (i.tau_i, i.tau_f)
        }
        _ => (0.0, horizon),
    };
    let opts = SimOptions { t_end: horizon, rtol: cfg.rtol, atol: cfg.atol, samples: cfg.samples };
    opts.validate()?;
    let input = Input::from(signal);
    input.validate(sys.m())?;

    let (bt, limited) = rayon::join(
        || reduce(sys, Scenario::Infinite, &cfg.backend, cfg.order),
        || match cfg.scenario {
            Scenario::Infinite => Ok(None),
            s => reduce(sys, s, &cfg.backend, cfg.order).map(Some),
        },
    );
    let (bt_rom, bt_report) = bt?;
    let limited = limited?;

    let (full, (bt_traj, lim_traj)) = rayon::join(
        || simulate(sys, &input, &opts),
        || {
            rayon::join(
                || simulate(&bt_rom.system, &input, &opts),
                || limited.as_ref().map(|(rom, _)| simulate(&rom.system, &input, &opts)).transpose(),
            )
        },
    );
    let full = full?;
    let compare = |traj: Trajectory, report: ReductionReport| -> Result<MethodComparison> {
        let error = relative_error(&full, &traj, cfg.guard)?.restrict(window.0, window.1);
        Ok(MethodComparison { error, report, reduced: traj })
    };
    let bt = compare(bt_traj?, bt_report)?;
    let limited = match (limited, lim_traj?) {
        (Some((_, report)), Some(traj)) => Some(compare(traj, report)?),
        _ => None,
    };
    Ok(Comparison { signal, horizon, settling_time, window, full, bt, limited })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::matrix_exponential;
    use crate::model::{modal_space_structure, random_stable_system, ModalParams, TimeInterval};
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn s1() -> LtiQoSystem {
        LtiQoSystem::new_stable(
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_element(1, 1, 1.0),
            None,
            vec![DMatrix::from_element(1, 1, 1.0)],
        )
        .unwrap()
    }

    fn traj(times: Vec<f64>, ys: Vec<f64>) -> Trajectory {
        Trajectory {
            states: ys.iter().map(|_| DVector::zeros(1)).collect(),
            outputs: ys.iter().map(|y| DVector::from_element(1, *y)).collect(),
            times,
            stats: SolverStats::default(),
        }
    }

    #[test]
    fn signal_parsing() {
        assert_eq!("zero".parse::<Signal>().unwrap(), Signal::Zero);
        assert_eq!("step:2".parse::<Signal>().unwrap(), Signal::Step { amplitude: 2.0 });
        assert_eq!("sin:0.1,3.5".parse::<Signal>().unwrap(), Signal::sinusoid(0.1, 3.5));
        assert_eq!(
            "cos:1,2,0.5".parse::<Signal>().unwrap(),
            Signal::Sinusoid { amplitude: 1.0, omega: 2.0, phase: 0.5 }
        );
        assert!("step".parse::<Signal>().is_err());
        assert!("sin:1,inf".parse::<Signal>().is_err());
        let json = serde_json::to_string(&Signal::sinusoid(0.1, 1.5)).unwrap();
        assert_eq!(serde_json::from_str::<Signal>(&json).unwrap(), Signal::sinusoid(0.1, 1.5));
    }

    #[test]
    fn zero_input_stays_at_rest() {
        let sys = random_stable_system(5, 2, 2, 2, 1).unwrap();
        let tr = simulate(&sys, &Signal::Zero.into(), &SimOptions::new(3.0)).unwrap();
        assert_eq!(tr.times.len(), DEFAULT_SAMPLES);
        assert!(tr.outputs.iter().all(|y| y.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn scalar_step_response() {
        let tr = simulate(&s1(), &Signal::Step { amplitude: 1.0 }.into(), &SimOptions::new(10.0)).unwrap();
        for (t, y) in tr.times.iter().zip(&tr.outputs) {
            let exact = (1.0 - (-t).exp()).powi(2);
            assert!((y[0] - exact).abs() < 1e-8, "t = {t}");
        }
        assert_eq!(*tr.times.last().unwrap(), 10.0);
        assert!((tr.outputs.last().unwrap()[0] - 0.999909).abs() < 1e-6);
        assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn linear_system_matches_exponential_stepping() {
        let base = random_stable_system(6, 2, 2, 1, 9).unwrap();
        let sys = LtiQoSystem::new(base.a().clone(), base.b().clone(), Some(base.c().clone()), vec![DMatrix::zeros(6, 6); 2])
            .unwrap();
        let opts = SimOptions { samples: 201, ..SimOptions::new(4.0) };
        let tr = simulate(&sys, &Signal::Step { amplitude: 1.0 }.into(), &opts).unwrap();
        // Zero-order hold is exact for a step: exp([[A, B], [0, 0]] h).
        let h = 4.0 / 200.0;
        let mut aug = DMatrix::zeros(8, 8);
        aug.view_mut((0, 0), (6, 6)).copy_from(sys.a());
        aug.view_mut((0, 6), (6, 2)).copy_from(sys.b());
        let e = matrix_exponential(&aug, h).unwrap();
        let phi = e.view((0, 0), (6, 6)).into_owned();
        let gam = e.view((0, 6), (6, 2)) * DVector::from_element(2, 1.0);
        let mut x = DVector::zeros(6);
        for k in 0..tr.times.len() {
            let err = (&tr.states[k] - &x).amax();
            assert!(err < 1e-7, "sample {k}: {err}");
            x = &phi * &x + &gam;
        }
    }

    #[test]
    fn outputs_recompute_exactly() {
        let sys = random_stable_system(7, 1, 2, 3, 5).unwrap();
        let tr = simulate(&sys, &Signal::sinusoid(1.0, 2.0).into(), &SimOptions::new(5.0)).unwrap();
        for (x, y) in tr.states.iter().zip(&tr.outputs) {
            assert_eq!(&sys.output(x), y);
        }
    }

    #[test]
    fn state_superposition() {
        let sys = random_stable_system(6, 2, 1, 2, 3).unwrap();
        let opts = SimOptions { samples: 300, ..SimOptions::new(5.0) };
        let u1 = |t: f64, u: &mut DVector<f64>| u.copy_from_slice(&[1.0, 0.5 * t.sin()]);
        let u2 = |t: f64, u: &mut DVector<f64>| u.copy_from_slice(&[(3.0 * t).cos(), -1.0]);
        let a = simulate_with(&sys, u1, &opts).unwrap();
        let b = simulate_with(&sys, u2, &opts).unwrap();
        let ab = simulate_with(
            &sys,
            |t, u| {
                let mut v = DVector::zeros(2);
                u1(t, u);
                u2(t, &mut v);
                *u += v;
            },
            &opts,
        )
        .unwrap();
        for k in 0..ab.times.len() {
            assert!((&ab.states[k] - &a.states[k] - &b.states[k]).amax() < 1e-7);
        }
    }

    #[test]
    fn tolerance_halving_converges() {
        let sys = random_stable_system(8, 1, 1, 3, 12).unwrap();
        let input: Input = Signal::sinusoid(1.0, 1.5).into();
        let coarse = simulate(&sys, &input, &SimOptions::new(6.0)).unwrap();
        let fine = simulate(&sys, &input, &SimOptions { rtol: 5e-9, atol: 5e-11, ..SimOptions::new(6.0) }).unwrap();
        let diff = coarse.outputs.iter().zip(&fine.outputs).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);
        assert!(diff < 10.0 * DEFAULT_RTOL, "{diff}");
    }

    #[test]
    fn rejects_bad_options() {
        assert!(simulate(&s1(), &Signal::Zero.into(), &SimOptions::new(0.0)).is_err());
        let mut inp = Input::from(Signal::Zero);
        inp.overrides.insert(3, Signal::Zero);
        assert!(simulate(&s1(), &inp, &SimOptions::new(1.0)).is_err());
    }

    #[test]
    fn relative_error_examples() {
        let t = vec![0.0, 0.5, 1.0];
        let y = traj(t.clone(), vec![2.0, 2.0, 2.0]);
        let same = relative_error(&y, &y, DEFAULT_GUARD).unwrap();
        assert!(same.errors[0].iter().all(|e| *e == 0.0));
        let half = relative_error(&y, &traj(t.clone(), vec![1.0; 3]), DEFAULT_GUARD).unwrap();
        assert_eq!(half.errors[0], vec![0.5; 3]);
        assert_eq!(half.max(), 0.5);
        assert!((half.mean() - 0.5).abs() < 1e-15);
        assert!(relative_error(&y, &traj(vec![0.0, 0.5], vec![1.0; 2]), DEFAULT_GUARD).is_err());
        assert!(relative_error(&y, &traj(vec![0.0, 0.6, 1.0], vec![1.0; 3]), DEFAULT_GUARD).is_err());
    }

    #[test]
    fn zero_output_samples_are_flagged() {
        let t = vec![0.0, 1.0, 2.0];
        let e = relative_error(&traj(t.clone(), vec![0.0, 1.0, 1.0]), &traj(t, vec![1e-3, 0.9, 0.8]), DEFAULT_GUARD).unwrap();
        assert_eq!(e.flagged[0], vec![true, false, false]);
        assert_eq!(e.aggregates[0].flagged, 1);
        assert!((e.max() - 0.2).abs() < 1e-15);
        assert!((e.mean() - 0.15).abs() < 1e-15);
        let r = e.restrict(1.5, 2.0);
        assert_eq!(r.times, vec![2.0]);
        assert!((r.mean() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn full_order_comparison_is_exact() {
        let sys = modal_space_structure(&ModalParams {
            n_modes: 3,
            m: 1,
            p: 1,
            damping_range: (0.2, 0.6),
            freq_range: (0.5, 2.0),
            quad_card: 6,
            seed: 2,
        })
        .unwrap();
        let interval = TimeInterval::new(0.0, 2.0).unwrap();
        let mut cfg = ComparisonConfig::new(Scenario::TimeLimited(interval), 6, BackendConfig::Dense);
        cfg.signal = Some(Signal::sinusoid(0.1, 3.5));
        cfg.samples = 400;
        cfg.rtol = 1e-10;
        cfg.atol = 1e-13;
        let cmp = run_comparison(&sys, &cfg).unwrap();
        assert_eq!(cmp.window, (0.0, 2.0));
        assert!(cmp.bt.error.max() < 1e-6, "{}", cmp.bt.error.max());
        assert!(cmp.limited.as_ref().unwrap().error.max() < 1e-6);
    }

    proptest! {
        #[test]
        fn errors_are_non_negative(ys in prop::collection::vec(-1e3..1e3f64, 2..30), dy in prop::collection::vec(-1.0..1.0f64, 30)) {
            let t: Vec<f64> = (0..ys.len()).map(|k| k as f64).collect();
            let yr: Vec<f64> = ys.iter().zip(&dy).map(|(a, d)| a + d).collect();
            let e = relative_error(&traj(t.clone(), ys), &traj(t, yr), DEFAULT_GUARD).unwrap();
            prop_assert!(e.errors[0].iter().all(|v| *v >= 0.0));
            prop_assert!(e.mean() <= e.max() + 1e-12);
        }
    }
}
