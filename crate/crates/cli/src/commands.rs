use crate::spec::ExperimentSpec;
use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;
use qomor::gramians::gram_dense;
use qomor::io::{
    read_matrix_market, write_bundle, write_ladder_csv, write_matrix_market, write_series_csv, write_with_sidecar,
    FactorSidecar, GramianKind, GramianSidecar,
};
use qomor::lowrank::{lowrank_gramians, LowRankOptions};
use qomor::model::{LtiQoSystem, Scenario};
use qomor::reduction::{eigenvalue_decay, reduce, suggest_order, BackendConfig};
use qomor::sim::{
    default_horizon, default_signal, run_comparison, simulate, ChannelAggregate, ComparisonConfig, ErrorSeries, Input,
    MethodComparison, Signal, SimOptions, Trajectory, DEFAULT_SAMPLES,
};
use serde::Serialize;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

/// Pipeline stage attached to errors so the diagnostic names where it failed.
#[derive(Debug)]
pub struct Stage(pub &'static str);

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage `{}`", self.0)
    }
}

pub trait AtStage<T> {
    fn at(self, stage: &'static str) -> Result<T>;
}

impl<T, E: Into<anyhow::Error>> AtStage<T> for std::result::Result<T, E> {
    fn at(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.into().context(Stage(stage)))
    }
}

pub const SYSTEM_DIR: &str = "system";
pub const ROM_DIR: &str = "rom";

fn suffix(scenario: Scenario) -> &'static str {
    match scenario {
        Scenario::Infinite => "",
        Scenario::TimeLimited(_) => "_tau",
        Scenario::FrequencyLimited(_) => "_omega",
    }
}

fn announce(path: &Path) {
    println!("wrote {}", path.display());
}

fn prepare(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn write_spec(spec: &ExperimentSpec, out: &Path, name: &str) -> Result<()> {
    let path = out.join(name);
    fs::write(&path, serde_json::to_string_pretty(spec)?)?;
    announce(&path);
    Ok(())
}

/// Generates the system and writes it as a bundle under `<out>/system`.
pub fn gen(spec: &ExperimentSpec) -> Result<PathBuf> {
    if !spec.is_generated() {
        bail!("gen needs a generator (--gen)");
    }
    let sys = spec.load_system().at("generate")?;
    let out = spec.out_dir();
    prepare(&out).at("write")?;
    let dir = out.join(SYSTEM_DIR);
    write_bundle(&dir, &sys, Some(spec.seed())).at("write")?;
    announce(&dir);
    write_spec(&spec.resolved(Some(&dir)), &out, "spec.json").at("write")?;
    Ok(dir)
}

/// Decay of `ZZᵀ` from the singular values of `Z`.
fn factor_decay(z: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = z.clone().singular_values().iter().map(|v| v * v).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    match s.first().copied() {
        Some(top) if top > 0.0 => s.iter().map(|v| v / top).collect(),
        _ => vec![],
    }
}

fn write_decay(out: &Path, stem: &str, decay: &[f64]) -> Result<()> {
    let path = out.join(format!("decay_{stem}.csv"));
    write_ladder_csv(&path, "decay", decay)?;
    announce(&path);
    Ok(())
}

/// Dense Gramians `P`, `Q` or low-rank factors `Z`, `Y`, plus decay CSVs.
pub fn gram(spec: &ExperimentSpec, sys: &LtiQoSystem) -> Result<()> {
    let scenario = spec.scenario().at("validate")?;
    let backend = spec.backend().at("validate")?;
    let out = spec.out_dir();
    prepare(&out).at("write")?;
    let sfx = suffix(scenario);
    let (p_name, q_name) = (format!("P{sfx}"), format!("Q{sfx}"));
    let opts = match backend {
        BackendConfig::Dense => {
            let g = gram_dense(sys, scenario).at("gramians")?;
            for (name, kind, x) in [(&p_name, GramianKind::Controllability, &g.p), (&q_name, GramianKind::Observability, &g.q)] {
                let meta = GramianSidecar { kind, scenario, backend: backend.kind() };
                announce(&write_with_sidecar(out.join(name), x, &meta).at("write")?);
                write_decay(&out, name, &eigenvalue_decay(x).at("decay")?).at("write")?;
            }
            return Ok(());
        }
        BackendConfig::Adi(o) => LowRankOptions::Adi(o),
        BackendConfig::Laguerre(c) => LowRankOptions::Laguerre(c),
    };
    let pair = lowrank_gramians(sys, scenario, &opts, None).at("gramians")?;
    let sides = [
        (format!("Z{sfx}"), &p_name, GramianKind::Controllability, &pair.controllability),
        (format!("Y{sfx}"), &q_name, GramianKind::Observability, &pair.observability),
    ];
    for (name, gram_name, kind, g) in sides {
        let meta = FactorSidecar::new(kind, g, pair.shift_selection.as_ref());
        announce(&write_with_sidecar(out.join(&name), &g.z, &meta).at("write")?);
        write_decay(&out, gram_name, &factor_decay(&g.z)).at("write")?;
    }
    Ok(())
}

/// `--order`, or the σ-ratio suggestion when only `--suggest-ratio` is set.
pub fn resolve_order(spec: &ExperimentSpec, sys: &LtiQoSystem) -> Result<usize> {
    if let Some(r) = spec.order {
        return Ok(r);
    }
    let Some(ratio) = spec.suggest_ratio else {
        bail!("--order is required (or --suggest-ratio for a heuristic choice)");
    };
    let scenario = spec.scenario()?;
    let (_, report) = reduce(sys, scenario, &spec.backend()?, 1)?;
    let ladder: Vec<f64> = report.sigma.iter().chain(&report.discarded_sigma).copied().collect();
    let r = suggest_order(&ladder, ratio).max(1);
    eprintln!("note: heuristic order r = {r} (largest r with sigma_r >= {ratio} * sigma_1)");
    Ok(r)
}

/// ROM bundle, projection bases, full σ ladder and the reduction report.
pub fn reduce_cmd(spec: &ExperimentSpec, sys: &LtiQoSystem) -> Result<usize> {
    let scenario = spec.scenario().at("validate")?;
    let backend = spec.backend().at("validate")?;
    let r = resolve_order(spec, sys).at("order")?;
    let out = spec.out_dir();
    prepare(&out).at("write")?;
    let (rom, report) = reduce(sys, scenario, &backend, r).at("reduce")?;
    let rom_dir = out.join(ROM_DIR);
    write_bundle(&rom_dir, &rom.system, None).at("write")?;
    write_matrix_market(rom_dir.join("V.mtx"), &rom.projection.v).at("write")?;
    write_matrix_market(rom_dir.join("W.mtx"), &rom.projection.w).at("write")?;
    announce(&rom_dir);
    let ladder: Vec<f64> = report.sigma.iter().chain(&report.discarded_sigma).copied().collect();
    let sigma_path = out.join("sigma.csv");
    write_ladder_csv(&sigma_path, "sigma", &ladder).at("write")?;
    announce(&sigma_path);
    let report_path = out.join("report.json");
    fs::write(&report_path, serde_json::to_string_pretty(&report)?).at("write")?;
    announce(&report_path);
    Ok(r)
}

fn output_columns(prefix: &str, traj: &Trajectory) -> Vec<(String, Vec<f64>)> {
    (0..traj.n_outputs()).map(|i| (format!("{prefix}y{}", i + 1), traj.channel(i))).collect()
}

fn write_columns(path: &Path, times: &[f64], cols: &[(String, Vec<f64>)]) -> Result<()> {
    let refs: Vec<(&str, &[f64])> = cols.iter().map(|(n, v)| (n.as_str(), v.as_slice())).collect();
    write_series_csv(path, times, &refs)?;
    announce(path);
    Ok(())
}

/// Output trajectory of the system under the spec's input.
pub fn simulate_cmd(spec: &ExperimentSpec, sys: &LtiQoSystem) -> Result<()> {
    let scenario = spec.scenario().at("validate")?;
    let signal = spec.signal().at("validate")?.unwrap_or_else(|| default_signal(scenario));
    let horizon = match spec.horizon {
        Some(h) => h,
        None => {
            let abscissa = sys.require_stable().context("--horizon is required for systems not known to be stable").at("simulate")?;
            default_horizon(scenario, abscissa)
        }
    };
    let opts = SimOptions { samples: spec.samples.unwrap_or(DEFAULT_SAMPLES), ..SimOptions::new(horizon) };
    let traj = simulate(sys, &Input::from(signal), &opts).at("simulate")?;
    let out = spec.out_dir();
    prepare(&out).at("write")?;
    write_columns(&out.join("trajectory.csv"), &traj.times, &output_columns("", &traj)).at("write")?;
    Ok(())
}

#[derive(Serialize)]
struct MethodSummary<'a> {
    method: &'static str,
    order: usize,
    max: f64,
    mean: f64,
    channels: &'a [ChannelAggregate],
}

#[derive(Serialize)]
struct ComparisonSummary<'a> {
    signal: Signal,
    horizon: f64,
    settling_time: f64,
    window: (f64, f64),
    methods: Vec<MethodSummary<'a>>,
}

fn error_columns(e: &ErrorSeries) -> Vec<(String, Vec<f64>)> {
    e.errors.iter().enumerate().map(|(i, v)| (format!("y{}", i + 1), v.clone())).collect()
}

/// Reduces with BT and the scenario method, simulates all three models and
/// writes the output error series over the evaluation window.
pub fn compare(spec: &ExperimentSpec, sys: &LtiQoSystem, order: usize) -> Result<()> {
    let scenario = spec.scenario().at("validate")?;
    let mut cfg = ComparisonConfig::new(scenario, order, spec.backend().at("validate")?);
    cfg.signal = spec.signal().at("validate")?;
    cfg.horizon = spec.horizon;
    if let Some(s) = spec.samples {
        cfg.samples = s;
    }
    let cmp = run_comparison(sys, &cfg).at("compare")?;
    let out = spec.out_dir();
    prepare(&out).at("write")?;
    let mut methods: Vec<(&'static str, &MethodComparison)> = vec![("bt", &cmp.bt)];
    if let Some(l) = &cmp.limited {
        methods.push((scenario.label(), l));
    }
    let mut outputs = output_columns("full_", &cmp.full);
    for (label, m) in &methods {
        write_columns(&out.join(format!("error_{label}.csv")), &m.error.times, &error_columns(&m.error)).at("write")?;
        outputs.extend(output_columns(&format!("{label}_"), &m.reduced));
    }
    write_columns(&out.join("outputs.csv"), &cmp.full.times, &outputs).at("write")?;
    let summary = ComparisonSummary {
        signal: cmp.signal,
        horizon: cmp.horizon,
        settling_time: cmp.settling_time,
        window: cmp.window,
        methods: methods
            .iter()
            .map(|(label, m)| MethodSummary {
                method: label,
                order: m.report.order,
                max: m.error.max(),
                mean: m.error.mean(),
                channels: &m.error.aggregates,
            })
            .collect(),
    };
    let path = out.join("comparison.json");
    fs::write(&path, serde_json::to_string_pretty(&summary)?).at("write")?;
    announce(&path);
    for m in &summary.methods {
        println!("{:<5} r={:<4} mean={:.3e} max={:.3e}", m.method, m.order, m.mean, m.max);
    }
    Ok(())
}

/// Decay CSV of a Gramian file, or of `ZZᵀ` when `factor` is set.
pub fn decay(input: &Path, out: &Path, factor: bool) -> Result<()> {
    let x = read_matrix_market(input).at("read")?;
    let d = if factor { factor_decay(&x) } else { eigenvalue_decay(&x).at("decay")? };
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("gramian");
    prepare(out).at("write")?;
    write_decay(out, stem, &d).at("write")
}

/// `gen` (for generated systems), `gram`, `reduce` and `compare` in sequence,
/// writing into one output directory.
pub fn run(spec: &ExperimentSpec) -> Result<()> {
    let mut spec = spec.clone();
    if spec.is_generated() {
        let dir = gen(&spec)?;
        spec = spec.resolved(Some(&dir));
    } else {
        prepare(&spec.out_dir()).at("write")?;
        write_spec(&spec.resolved(None), &spec.out_dir(), "spec.json").at("write")?;
    }
    let sys = spec.load_system().at("load")?;
    gram(&spec, &sys)?;
    let order = reduce_cmd(&spec, &sys)?;
    compare(&spec, &sys, order)
}
