//! Matrix Market files, system bundles, JSON sidecars and CSV series.

use crate::error::{Error, Result};
use crate::lowrank::{LowRankGramian, LowRankMethod, ShiftSelection};
use crate::model::{GramianBackend, LtiQoSystem, Scenario};
use nalgebra::DMatrix;
use nalgebra_sparse::io::load_coo_from_matrix_market_file;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

/// Shortest round-trip decimal text: plain notation in `[1e-5, 1e16)`,
/// scientific elsewhere.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-5..1e16).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Dense `array real general` Matrix Market text (column-major values).
pub fn matrix_market_string(m: &DMatrix<f64>) -> String {
    let mut s = String::with_capacity(24 * m.len() + 64);
    s.push_str("%%MatrixMarket matrix array real general\n");
    let _ = writeln!(s, "{} {}", m.nrows(), m.ncols());
    for v in m.iter() {
        s.push_str(&fmt_f64(*v));
        s.push('\n');
    }
    s
}

pub fn write_matrix_market(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    fs::write(path, matrix_market_string(m))?;
    Ok(())
}

/// Reads coordinate or array files; symmetric storage is expanded.
pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let coo = load_coo_from_matrix_market_file::<f64, _>(path)
        .map_err(|e| Error::MatrixMarket(format!("{}: {e}", path.display())))?;
    Ok(DMatrix::from(&coo))
}

/// `manifest.json` of a system bundle directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub stable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

const MANIFEST: &str = "manifest.json";

fn quad_name(i: usize) -> String {
    format!("M_{}.mtx", i + 1)
}

/// Writes `A.mtx`, `B.mtx`, `C.mtx`, `M_1.mtx`… and `manifest.json` into `dir`.
pub fn write_bundle(dir: impl AsRef<Path>, sys: &LtiQoSystem, seed: Option<u64>) -> Result<BundleManifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    write_matrix_market(dir.join("A.mtx"), sys.a())?;
    write_matrix_market(dir.join("B.mtx"), sys.b())?;
    write_matrix_market(dir.join("C.mtx"), sys.c())?;
    for (i, mi) in sys.m_list().iter().enumerate() {
        write_matrix_market(dir.join(quad_name(i)), mi)?;
    }
    let manifest = BundleManifest { n: sys.n(), m: sys.m(), p: sys.p(), stable: sys.require_stable().is_ok(), seed };
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Loads a bundle; a manifest claiming stability is re-verified.
pub fn read_bundle(dir: impl AsRef<Path>) -> Result<(LtiQoSystem, BundleManifest)> {
    let dir = dir.as_ref();
    let manifest: BundleManifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST))?)?;
    let a = read_matrix_market(dir.join("A.mtx"))?;
    let b = read_matrix_market(dir.join("B.mtx"))?;
    let c_path = dir.join("C.mtx");
    let c = if c_path.exists() { Some(read_matrix_market(c_path)?) } else { None };
    let m_list = (0..manifest.p).map(|i| read_matrix_market(dir.join(quad_name(i)))).collect::<Result<Vec<_>>>()?;
    let sys = if manifest.stable {
        LtiQoSystem::new_stable(a, b, c, m_list)?
    } else {
        LtiQoSystem::new(a, b, c, m_list)?
    };
    if (sys.n(), sys.m(), sys.p()) != (manifest.n, manifest.m, manifest.p) {
        return Err(Error::dim(
            "bundle",
            format!("n={} m={} p={}", manifest.n, manifest.m, manifest.p),
            format!("n={} m={} p={}", sys.n(), sys.m(), sys.p()),
        ));
    }
    Ok((sys, manifest))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GramianKind {
    Controllability,
    Observability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramianSidecar {
    pub kind: GramianKind,
    pub scenario: Scenario,
    pub backend: GramianBackend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSidecar {
    pub kind: GramianKind,
    pub method: LowRankMethod,
    pub scenario: Scenario,
    pub alpha: Option<f64>,
    pub terms: Option<usize>,
    /// `[re, im]` pairs.
    pub shifts: Option<Vec<[f64; 2]>>,
    pub residual: Option<f64>,
    pub rank: usize,
}

impl FactorSidecar {
    pub fn new(kind: GramianKind, g: &LowRankGramian, shifts: Option<&ShiftSelection>) -> Self {
        Self {
            kind,
            method: g.method,
            scenario: g.scenario,
            alpha: g.diagnostics.alpha,
            terms: g.diagnostics.terms,
            shifts: shifts.map(|s| s.shifts.iter().map(|z| [z.re, z.im]).collect()),
            residual: g.diagnostics.final_residual,
            rank: g.z.ncols(),
        }
    }
}

/// Writes `<stem>.mtx` and `<stem>.json`; returns the matrix path.
pub fn write_with_sidecar<T: Serialize>(stem: impl AsRef<Path>, m: &DMatrix<f64>, meta: &T) -> Result<PathBuf> {
    let stem = stem.as_ref();
    let mtx = stem.with_extension("mtx");
    write_matrix_market(&mtx, m)?;
    fs::write(stem.with_extension("json"), serde_json::to_string_pretty(meta)?)?;
    Ok(mtx)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::Io(e.into()))
}

/// Two columns `index,<name>` with 1-based indices.
pub fn write_ladder_csv(path: impl AsRef<Path>, name: &str, values: &[f64]) -> Result<()> {
    let mut w = csv_writer(path.as_ref())?;
    let io = |e: csv::Error| Error::Io(e.into());
    w.write_record(["index", name]).map_err(io)?;
    for (i, v) in values.iter().enumerate() {
        w.write_record([(i + 1).to_string(), fmt_f64(*v)]).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// `time` followed by one column per named series.
pub fn write_series_csv(path: impl AsRef<Path>, times: &[f64], columns: &[(&str, &[f64])]) -> Result<()> {
    for (name, col) in columns {
        if col.len() != times.len() {
            return Err(Error::dim(*name, times.len(), col.len()));
        }
    }
    let mut w = csv_writer(path.as_ref())?;
    let io = |e: csv::Error| Error::Io(e.into());
    let header: Vec<&str> = std::iter::once("time").chain(columns.iter().map(|c| c.0)).collect();
    w.write_record(&header).map_err(io)?;
    for (k, t) in times.iter().enumerate() {
        let row: Vec<String> = std::iter::once(fmt_f64(*t)).chain(columns.iter().map(|c| fmt_f64(c.1[k]))).collect();
        w.write_record(&row).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::random_stable_system;

    #[test]
    fn round_trip_formatting() {
        for x in [0.0, -0.0, 1.0, 0.1, 1.0 / 3.0, 1e-300, 5e-324, -2.5e17, 123456.789, f64::MAX] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits(), "{x}");
        }
        assert_eq!(fmt_f64(0.125f64.sqrt()), "0.3535533905932738");
    }

    #[test]
    fn matrix_market_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = DMatrix::from_fn(3, 2, |i, j| (i as f64 - 1.3) * (j as f64 + 0.7).powi(9) * 1e-7);
        let path = dir.path().join("m.mtx");
        write_matrix_market(&path, &m).unwrap();
        assert_eq!(read_matrix_market(&path).unwrap(), m);
    }

    #[test]
    fn reads_coordinate_and_symmetric() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.mtx");
        fs::write(&path, "%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 1 4.0\n2 1 -1.5\n").unwrap();
        let m = read_matrix_market(&path).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[4.0, -1.5, -1.5, 0.0]));
        fs::write(&path, "%%MatrixMarket matrix coordinate real general\n2 x\n").unwrap();
        assert!(matches!(read_matrix_market(&path), Err(Error::MatrixMarket(_))));
    }

    #[test]
    fn bundle_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let sys = random_stable_system(6, 2, 2, 3, 4).unwrap();
        let man = write_bundle(dir.path(), &sys, Some(4)).unwrap();
        assert!(man.stable);
        let (back, man2) = read_bundle(dir.path()).unwrap();
        assert_eq!(man, man2);
        assert_eq!(back.a(), sys.a());
        assert_eq!(back.c(), sys.c());
        assert_eq!(back.m_list(), sys.m_list());
    }

    #[test]
    fn csv_writers() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        write_ladder_csv(&p, "sigma", &[0.5, 1e-20]).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "index,sigma\n1,0.5\n2,1e-20\n");
        write_series_csv(&p, &[0.0, 1.0], &[("y", &[1.0, 2.0])]).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "time,y\n0,1\n1,2\n");
        assert!(write_series_csv(&p, &[0.0], &[("y", &[1.0, 2.0])]).is_err());
    }
}
