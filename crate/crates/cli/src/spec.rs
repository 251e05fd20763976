use anyhow::{bail, ensure, Context, Result};
use clap::{Args, ValueEnum};
use qomor::lowrank::{AdiOptions, LaguerreConfig, DEFAULT_ADI_TOL};
use qomor::model::{modal_space_structure, random_stable_system, FrequencyBand, LtiQoSystem, ModalParams, Scenario, TimeInterval};
use qomor::reduction::BackendConfig;
use qomor::sim::Signal;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_OUT: &str = "qomor-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    #[value(alias = "infinite")]
    Bt,
    #[value(alias = "tlbt")]
    Tl,
    #[value(alias = "flbt")]
    Fl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Dense,
    Adi,
    Laguerre,
}

/// Procedural system generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GenSpec {
    Random {
        n: usize,
        #[serde(default = "one")]
        m: usize,
        #[serde(default = "one")]
        p: usize,
        #[serde(default = "one")]
        quad_card: usize,
    },
    Modal {
        n_modes: usize,
        #[serde(default = "one")]
        m: usize,
        #[serde(default = "one")]
        p: usize,
        #[serde(default = "one")]
        quad_card: usize,
        #[serde(default = "default_damping")]
        damping: [f64; 2],
        #[serde(default = "default_freq")]
        freq: [f64; 2],
    },
}

fn one() -> usize {
    1
}

fn default_damping() -> [f64; 2] {
    [0.2, 0.6]
}

fn default_freq() -> [f64; 2] {
    [0.5, 5.0]
}

impl GenSpec {
    pub fn build(&self, seed: u64) -> qomor::error::Result<LtiQoSystem> {
        match *self {
            GenSpec::Random { n, m, p, quad_card } => random_stable_system(n, m, p, quad_card, seed),
            GenSpec::Modal { n_modes, m, p, quad_card, damping, freq } => modal_space_structure(&ModalParams {
                n_modes,
                m,
                p,
                damping_range: (damping[0], damping[1]),
                freq_range: (freq[0], freq[1]),
                quad_card,
                seed,
            }),
        }
    }
}

/// `random:n=8,m=1,p=1,quad=3` or `modal:modes=100,quad=20,zeta=0.2..0.6,omega=0.5..5`.
impl FromStr for GenSpec {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, params) = s.split_once(':').unwrap_or((s, ""));
        let mut kv = Vec::new();
        for item in params.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let (k, v) = item.split_once('=').with_context(|| format!("expected key=value, got `{item}`"))?;
            kv.push((k.trim(), v.trim()));
        }
        let int = |key: &str, default: Option<usize>| -> Result<usize> {
            match kv.iter().find(|(k, _)| *k == key) {
                Some((_, v)) => v.parse().with_context(|| format!("`{key}` must be a positive integer")),
                None => default.with_context(|| format!("generator `{kind}` needs `{key}=`")),
            }
        };
        let range = |key: &str, default: [f64; 2]| -> Result<[f64; 2]> {
            match kv.iter().find(|(k, _)| *k == key) {
                Some((_, v)) => {
                    let (lo, hi) = v.split_once("..").with_context(|| format!("`{key}` must look like lo..hi"))?;
                    Ok([lo.parse()?, hi.parse()?])
                }
                None => Ok(default),
            }
        };
        let known: &[&str] = match kind {
            "random" => &["n", "m", "p", "quad"],
            "modal" => &["modes", "m", "p", "quad", "zeta", "omega"],
            _ => bail!("unknown generator `{kind}` (expected random or modal)"),
        };
        if let Some((k, _)) = kv.iter().find(|(k, _)| !known.contains(k)) {
            bail!("unknown key `{k}` for generator `{kind}`");
        }
        Ok(match kind {
            "random" => GenSpec::Random { n: int("n", None)?, m: int("m", Some(1))?, p: int("p", Some(1))?, quad_card: int("quad", Some(1))? },
            _ => GenSpec::Modal {
                n_modes: int("modes", None)?,
                m: int("m", Some(1))?,
                p: int("p", Some(1))?,
                quad_card: int("quad", Some(1))?,
                damping: range("zeta", default_damping())?,
                freq: range("omega", default_freq())?,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSource {
    /// Directory written by `gen` or `write_bundle`.
    Bundle(PathBuf),
    Generate(GenSpec),
}

/// Everything one experiment needs. Read from `--spec` JSON, then
/// overridden field by field by command-line flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suggest_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<BackendKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terms: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shifts: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct SpecArgs {
    /// JSON experiment spec; flags given here override its fields.
    #[arg(long, value_name = "FILE")]
    pub spec: Option<PathBuf>,
    /// System bundle directory.
    #[arg(long, value_name = "DIR", conflicts_with = "gen")]
    pub system: Option<PathBuf>,
    /// Generator, e.g. `modal:modes=100,quad=20` or `random:n=8,m=2,p=1,quad=3`.
    #[arg(long, value_name = "GEN")]
    pub gen: Option<GenSpec>,
    #[arg(long, value_enum)]
    pub scenario: Option<ScenarioKind>,
    /// Time interval in seconds.
    #[arg(long, num_args = 2, value_names = ["TAU_I", "TAU_F"])]
    pub interval: Option<Vec<f64>>,
    /// Frequency band in rad/s.
    #[arg(long, num_args = 2, value_names = ["OMEGA_1", "OMEGA_2"])]
    pub band: Option<Vec<f64>>,
    /// Reduced order r.
    #[arg(long, short = 'r')]
    pub order: Option<usize>,
    /// Without --order, pick the largest r with σ_r ≥ RATIO·σ₁ (a heuristic).
    #[arg(long, value_name = "RATIO")]
    pub suggest_ratio: Option<f64>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    /// Laguerre scaling α (1/s).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Laguerre terms N.
    #[arg(long)]
    pub terms: Option<usize>,
    /// Number of ADI shift slots.
    #[arg(long)]
    pub shifts: Option<usize>,
    /// ADI relative residual tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// ADI iteration cap.
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Input signal: `zero`, `step:A` or `cos:A,OMEGA[,PHASE]`.
    #[arg(long)]
    pub signal: Option<String>,
    /// Simulation end time in seconds.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Reporting grid size.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn pair(v: Option<Vec<f64>>, flag: &str) -> Result<Option<[f64; 2]>> {
    v.map(|v| <[f64; 2]>::try_from(v.as_slice()).map_err(|_| anyhow::anyhow!("--{flag} takes two numbers"))).transpose()
}

impl SpecArgs {
    /// Loads `--spec` if given and applies the flags on top.
    pub fn merged(self) -> Result<ExperimentSpec> {
        let mut spec = match &self.spec {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => ExperimentSpec::default(),
        };
        if let Some(dir) = self.system {
            spec.system = Some(SystemSource::Bundle(dir));
        }
        if let Some(g) = self.gen {
            spec.system = Some(SystemSource::Generate(g));
        }
        macro_rules! take {
            ($($f:ident),*) => { $(if self.$f.is_some() { spec.$f = self.$f; })* };
        }
        take!(scenario, order, suggest_ratio, backend, alpha, terms, shifts, tol, max_iter, signal, horizon, samples, out, seed);
        if let Some(i) = pair(self.interval, "interval")? {
            spec.interval = Some(i);
        }
        if let Some(b) = pair(self.band, "band")? {
            spec.band = Some(b);
        }
        Ok(spec)
    }
}

impl ExperimentSpec {
    /// Scenario with its parameters; the interval or band must be present
    /// exactly when the scenario uses it.
    pub fn scenario(&self) -> Result<Scenario> {
        let kind = self.scenario.unwrap_or(ScenarioKind::Bt);
        Ok(match (kind, self.interval, self.band) {
            (ScenarioKind::Bt, None, None) => Scenario::Infinite,
            (ScenarioKind::Tl, Some([a, b]), None) => Scenario::TimeLimited(TimeInterval::new(a, b)?),
            (ScenarioKind::Fl, None, Some([a, b])) => Scenario::FrequencyLimited(FrequencyBand::new(a, b)?),
            (ScenarioKind::Tl, None, _) => bail!("scenario tl needs --interval"),
            (ScenarioKind::Fl, _, None) => bail!("scenario fl needs --band"),
            (ScenarioKind::Bt, ..) => bail!("scenario bt takes neither an interval nor a band"),
            (ScenarioKind::Tl, Some(_), Some(_)) => bail!("scenario tl takes no band"),
            (ScenarioKind::Fl, Some(_), Some(_)) => bail!("scenario fl takes no interval"),
        })
    }

    pub fn backend(&self) -> Result<BackendConfig> {
        Ok(match self.backend.unwrap_or(BackendKind::Dense) {
            BackendKind::Dense => BackendConfig::Dense,
            BackendKind::Adi => {
                let d = AdiOptions::default();
                let o = AdiOptions {
                    shifts: None,
                    n_shifts: self.shifts.unwrap_or(d.n_shifts),
                    max_iter: self.max_iter.unwrap_or(d.max_iter),
                    rel_residual_tol: self.tol.unwrap_or(DEFAULT_ADI_TOL),
                };
                ensure!(o.n_shifts > 0, "--shifts must be positive");
                BackendConfig::Adi(o)
            }
            BackendKind::Laguerre => {
                let d = LaguerreConfig::default();
                BackendConfig::Laguerre(LaguerreConfig::new(self.alpha.unwrap_or(d.alpha), self.terms.unwrap_or(d.terms))?)
            }
        })
    }

    pub fn signal(&self) -> Result<Option<Signal>> {
        Ok(self.signal.as_deref().map(Signal::from_str).transpose()?)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    /// Checks every field that the given command will read.
    pub fn validate(&self) -> Result<()> {
        ensure!(self.system.is_some(), "no system given (use --system DIR or --gen SPEC)");
        self.scenario()?;
        self.backend()?;
        self.signal()?;
        if let Some(r) = self.order {
            ensure!(r > 0, "--order must be positive");
        }
        if let Some(ratio) = self.suggest_ratio {
            ensure!(ratio > 0.0 && ratio < 1.0, "--suggest-ratio must lie in (0, 1)");
        }
        if let Some(h) = self.horizon {
            ensure!(h.is_finite() && h > 0.0, "--horizon must be positive");
        }
        if let Some(s) = self.samples {
            ensure!(s >= 2, "--samples must be at least 2");
        }
        Ok(())
    }

    pub fn is_generated(&self) -> bool {
        matches!(self.system, Some(SystemSource::Generate(_)))
    }

    pub fn load_system(&self) -> Result<LtiQoSystem> {
        match &self.system {
            Some(SystemSource::Bundle(dir)) => Ok(qomor::io::read_bundle(dir)?.0),
            Some(SystemSource::Generate(g)) => Ok(g.build(self.seed())?),
            None => bail!("no system given"),
        }
    }

    /// The spec with defaults filled in, as recorded next to the outputs.
    pub fn resolved(&self, system_dir: Option<&Path>) -> Self {
        let mut s = self.clone();
        s.seed = Some(self.seed());
        s.out = Some(self.out_dir());
        s.scenario = Some(self.scenario.unwrap_or(ScenarioKind::Bt));
        s.backend = Some(self.backend.unwrap_or(BackendKind::Dense));
        if let Some(dir) = system_dir {
            s.system = Some(SystemSource::Bundle(dir.to_path_buf()));
        }
        s
    }
}
