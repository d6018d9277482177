//! Grid sweeps over `(estimator, v, ε, n)` driven by a JSON configuration.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimators::{
    estimate_concentration, estimate_fn, estimate_gg_residual, estimate_lemma1, estimate_positivity, Replication,
    TestFunction,
};
use crate::field::{Backend, FieldSpec, DEFAULT_JITTER, DEFAULT_P_MAX, MAX_P_MAX};
use crate::generators::MeasureSpec;
use crate::report::{EstimateReport, InnerMode, CSV_HEADER};
use crate::sphere::{DiscreteMeasure, ReplicaPredicate};

pub const RESULTS_FILE: &str = "results.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const STATUS_COLUMN: &str = "status";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Over `v × ε`.
    Positivity,
    /// Over `v × ε × n`, with `f = 1{z¹·z² <= -ε}` (`f ≡ 1` when `n = 1`).
    GgResidual,
    /// Over `v`.
    Lemma1,
    /// Over `v × ε × n`.
    Fn,
    /// Over `v`.
    Concentration,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Positivity => "positivity",
            EstimatorKind::GgResidual => "gg_residual",
            EstimatorKind::Lemma1 => "lemma1",
            EstimatorKind::Fn => "fn",
            EstimatorKind::Concentration => "concentration",
        }
    }

    fn uses_epsilon(self) -> bool {
        matches!(self, EstimatorKind::Positivity | EstimatorKind::GgResidual | EstimatorKind::Fn)
    }

    fn uses_n(self) -> bool {
        matches!(self, EstimatorKind::GgResidual | EstimatorKind::Fn)
    }
}

fn default_p_max() -> usize {
    DEFAULT_P_MAX
}
fn default_jitter() -> f64 {
    DEFAULT_JITTER
}
fn default_reps() -> usize {
    Replication::default().x_draws
}
fn default_field_draws() -> usize {
    Replication::default().field_draws
}
fn default_output() -> String {
    "results".to_string()
}
fn default_lemma1_p() -> usize {
    1
}
fn default_psi() -> TestFunction {
    TestFunction::Monomial { p: 1 }
}

/// Sweep configuration; see `docs/sweep-config.md` for the JSON schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub measure: MeasureSpec,
    pub v_grid: Vec<f64>,
    #[serde(default)]
    pub epsilon_grid: Vec<f64>,
    #[serde(default)]
    pub n_grid: Vec<usize>,
    #[serde(default = "default_p_max")]
    pub p_max: usize,
    #[serde(default)]
    pub backend: Backend,
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    /// Outer disorder replications (`x` draws).
    #[serde(default = "default_reps")]
    pub reps: usize,
    /// Gaussian field draws per outer replication.
    #[serde(default = "default_field_draws")]
    pub field_draws: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: String,
    pub estimators: Vec<EstimatorKind>,
    #[serde(default = "default_lemma1_p")]
    pub lemma1_p: usize,
    #[serde(default = "default_psi")]
    pub psi: TestFunction,
    #[serde(default)]
    pub workers: Option<usize>,
}

/// A configuration problem located in the source text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    /// 1-based line; 0 when the source has no line to point at.
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ConfigError {}

/// First line of `text` containing the JSON key `"key"`.
fn line_of_key(text: &str, key: &str) -> usize {
    let quoted = format!("\"{key}\"");
    text.lines()
        .position(|l| l.contains(&quoted))
        .map(|i| i + 1)
        .unwrap_or(1)
}

impl SweepConfig {
    /// Parses and validates; errors carry the offending line.
    pub fn parse(text: &str) -> std::result::Result<Self, ConfigError> {
        let config: SweepConfig = serde_json::from_str(text).map_err(|e| ConfigError {
            line: e.line(),
            message: e.to_string(),
        })?;
        config.validate().map_err(|(key, message)| ConfigError {
            line: line_of_key(text, key),
            message: format!("{key}: {message}"),
        })?;
        Ok(config)
    }

    /// Returns the offending key and a message on failure.
    pub fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        let fail = |key: &'static str, msg: &str| Err((key, msg.to_string()));
        if self.v_grid.is_empty() {
            return fail("v_grid", "must not be empty");
        }
        if self.v_grid.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return fail("v_grid", "strengths must be finite and nonnegative");
        }
        if self.estimators.is_empty() {
            return fail("estimators", "select at least one estimator");
        }
        if self.estimators.iter().any(|e| e.uses_epsilon()) && self.epsilon_grid.is_empty() {
            return fail("epsilon_grid", "must not be empty for the selected estimators");
        }
        if self.epsilon_grid.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return fail("epsilon_grid", "values must lie in (0, 1)");
        }
        if self.estimators.iter().any(|e| e.uses_n()) && self.n_grid.is_empty() {
            return fail("n_grid", "must not be empty for the selected estimators");
        }
        if self.n_grid.contains(&0) {
            return fail("n_grid", "replica counts must be at least 1");
        }
        if self.p_max == 0 || self.p_max > MAX_P_MAX {
            return Err(("p_max", format!("must lie in 1..={MAX_P_MAX}")));
        }
        if !(self.jitter.is_finite() && self.jitter >= 0.0) {
            return fail("jitter", "must be finite and nonnegative");
        }
        if self.reps < 2 {
            return fail("reps", "at least two replications are needed");
        }
        if self.field_draws == 0 {
            return fail("field_draws", "must be positive");
        }
        if self.lemma1_p == 0 {
            return fail("lemma1_p", "must be positive");
        }
        if let Err(e) = self.psi.validate() {
            return Err(("psi", e.to_string()));
        }
        if self.workers == Some(0) {
            return fail("workers", "must be positive");
        }
        if let Err(e) = self.measure.build::<f64>() {
            return Err(("measure", e.to_string()));
        }
        Ok(())
    }

    fn field_spec(&self, v: f64) -> FieldSpec<f64> {
        FieldSpec::new(v)
            .with_p_max(self.p_max)
            .with_backend(self.backend)
            .with_jitter(self.jitter)
    }

    fn replication(&self) -> Replication {
        Replication::new(self.reps, self.field_draws)
    }

    /// Grid cells in output order: estimator, then `ε`, then `n`, then `v`.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &estimator in &self.estimators {
            let eps: Vec<Option<usize>> = if estimator.uses_epsilon() {
                (0..self.epsilon_grid.len()).map(Some).collect()
            } else {
                vec![None]
            };
            let ns: Vec<Option<usize>> = if estimator.uses_n() {
                (0..self.n_grid.len()).map(Some).collect()
            } else {
                vec![None]
            };
            for &e in &eps {
                for &n in &ns {
                    for v in 0..self.v_grid.len() {
                        cells.push(Cell {
                            estimator,
                            v_index: v,
                            epsilon_index: e,
                            n_index: n,
                        });
                    }
                }
            }
        }
        cells
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cell {
    pub estimator: EstimatorKind,
    pub v_index: usize,
    pub epsilon_index: Option<usize>,
    pub n_index: Option<usize>,
}

/// Seed of a grid cell: SHA-256 of the master seed, estimator name and the `ε`
/// and `n` indices. The `v` index is left out so every point of a `v` curve
/// reuses the same unit-strength draws.
pub fn cell_seed(master: u64, cell: &Cell) -> u64 {
    let index = |i: Option<usize>| i.map_or(u64::MAX, |i| i as u64);
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(cell.estimator.name().as_bytes());
    hasher.update(index(cell.epsilon_index).to_le_bytes());
    hasher.update(index(cell.n_index).to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// One CSV row: an estimate, or the error that prevented it.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub report: EstimateReport,
    pub status: std::result::Result<(), String>,
}

impl SweepRow {
    fn csv_fields(&self) -> Vec<String> {
        let mut fields = self.report.csv_fields();
        fields.push(match &self.status {
            Ok(()) => "ok".to_string(),
            Err(e) => format!("error: {e}"),
        });
        fields
    }
}

fn run_cell(config: &SweepConfig, measure: &DiscreteMeasure<f64>, cell: &Cell) -> SweepRow {
    let v = config.v_grid[cell.v_index];
    let eps = cell.epsilon_index.map(|i| config.epsilon_grid[i]);
    let n = cell.n_index.map(|i| config.n_grid[i]);
    let seed = cell_seed(config.seed, cell);
    let spec = config.field_spec(v);
    let reps = config.replication();
    let result = match cell.estimator {
        EstimatorKind::Positivity => estimate_positivity(measure, &spec, eps.unwrap_or(0.0), reps, seed),
        EstimatorKind::GgResidual => {
            let (n, e) = (n.unwrap_or(1), eps.unwrap_or(0.0));
            let f = if n == 1 {
                ReplicaPredicate::constant(1, 1.0)
            } else {
                ReplicaPredicate::overlap_leq(n, 0, 1, e)
            };
            f.and_then(|f| estimate_gg_residual(measure, &spec, &f, &config.psi, reps, seed))
                .map(|g| g.report)
        }
        EstimatorKind::Lemma1 => estimate_lemma1(measure, &spec, config.lemma1_p, reps, seed),
        EstimatorKind::Fn => estimate_fn(measure, &spec, n.unwrap_or(0), eps.unwrap_or(0.0), reps, seed),
        EstimatorKind::Concentration => estimate_concentration(measure, &spec, reps, seed).map(|c| c.report),
    };
    match result {
        Ok(mut report) => {
            report.n = report.n.or(n);
            report.epsilon = report.epsilon.or(eps);
            SweepRow { report, status: Ok(()) }
        }
        Err(e) => SweepRow {
            report: EstimateReport {
                estimator: cell.estimator.name().to_string(),
                v,
                n,
                epsilon: eps,
                p_max: config.p_max,
                backend: config.backend,
                reps: config.reps,
                mean: f64::NAN,
                stderr: f64::NAN,
                inner_mode: InnerMode::Exact,
                seed,
            },
            status: Err(e.to_string()),
        },
    }
}

/// Computes every cell; rows come back in grid order whatever the scheduling.
pub fn compute_rows(config: &SweepConfig) -> Result<Vec<SweepRow>> {
    config
        .validate()
        .map_err(|(key, msg)| Error::Format(format!("{key}: {msg}")))?;
    let measure = config.measure.build::<f64>()?;
    let cells = config.cells();
    let work = || -> Vec<SweepRow> { cells.par_iter().map(|c| run_cell(config, &measure, c)).collect() };
    match config.workers {
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::Io(e.to_string()))?;
            Ok(pool.install(work))
        }
        None => Ok(work()),
    }
}

pub fn write_rows<W: std::io::Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = CSV_HEADER.to_vec();
    header.push(STATUS_COLUMN);
    writer.write_record(&header)?;
    for row in rows {
        writer.write_record(row.csv_fields())?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a SweepConfig,
    version: &'static str,
    wall_time_seconds: f64,
    rows: usize,
    error_rows: usize,
    results: &'static str,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub results_path: PathBuf,
    pub manifest_path: PathBuf,
}

/// Runs the grid and writes `results.csv` and `manifest.json` into `out_dir`.
pub fn run_sweep(config: &SweepConfig, out_dir: &Path) -> Result<SweepOutcome> {
    let started = Instant::now();
    fs::create_dir_all(out_dir)?;
    let rows = compute_rows(config)?;
    let results_path = out_dir.join(RESULTS_FILE);
    write_rows(fs::File::create(&results_path)?, &rows)?;
    let manifest = Manifest {
        config,
        version: env!("CARGO_PKG_VERSION"),
        wall_time_seconds: started.elapsed().as_secs_f64(),
        rows: rows.len(),
        error_rows: rows.iter().filter(|r| r.status.is_err()).count(),
        results: RESULTS_FILE,
    };
    let manifest_path = out_dir.join(MANIFEST_FILE);
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(SweepOutcome {
        rows,
        results_path,
        manifest_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::read_csv;

    fn base() -> String {
        r#"{
  "measure": { "generator": "antipodal", "dim": 4 },
  "v_grid": [0],
  "epsilon_grid": [0.5],
  "estimators": ["positivity"],
  "reps": 4,
  "field_draws": 8
}"#
        .to_string()
    }

    #[test]
    fn v_zero_row() {
        let config = SweepConfig::parse(&base()).unwrap();
        let rows = compute_rows(&config).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].report.mean, 0.5);
        assert_eq!(rows[0].report.stderr, 0.0);
        assert_eq!(rows[0].status, Ok(()));
    }

    #[test]
    fn empty_v_grid_points_at_its_line() {
        let text = base().replace("\"v_grid\": [0]", "\"v_grid\": []");
        let err = SweepConfig::parse(&text).unwrap_err();
        assert_eq!(err.line, 3);
        assert!(err.message.contains("v_grid"));
    }

    #[test]
    fn syntax_errors_carry_a_line() {
        let text = base().replace("\"reps\": 4,", "\"reps\": 4,,");
        assert_eq!(SweepConfig::parse(&text).unwrap_err().line, 6);
        let text = base().replace("\"reps\"", "\"repz\"");
        assert_eq!(SweepConfig::parse(&text).unwrap_err().line, 6);
    }

    #[test]
    fn invalid_values_are_rejected() {
        for (from, to) in [
            ("[0.5]", "[1.5]"),
            ("\"reps\": 4", "\"reps\": 1"),
            ("[0]", "[-1]"),
            ("[\"positivity\"]", "[]"),
            ("\"dim\": 4", "\"dim\": 0"),
        ] {
            assert!(SweepConfig::parse(&base().replace(from, to)).is_err(), "{to}");
        }
    }

    #[test]
    fn failing_cell_becomes_error_row() {
        let text = base()
            .replace("[\"positivity\"]", "[\"fn\", \"positivity\"]")
            .replace("\"reps\": 4", "\"n_grid\": [1, 2],\n  \"reps\": 4");
        let config = SweepConfig::parse(&text).unwrap();
        let rows = compute_rows(&config).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows[0].status.is_err());
        assert!(rows[0].report.mean.is_nan());
        assert_eq!(rows[1].status, Ok(()));
        assert_eq!(rows[2].report.estimator, "positivity");
    }

    #[test]
    fn cells_share_seeds_across_v() {
        let text = base().replace("\"v_grid\": [0]", "\"v_grid\": [0, 1, 2]");
        let config = SweepConfig::parse(&text).unwrap();
        let cells = config.cells();
        let seeds: Vec<u64> = cells.iter().map(|c| cell_seed(7, c)).collect();
        assert!(seeds.iter().all(|&s| s == seeds[0]));
        let other = Cell {
            estimator: EstimatorKind::Lemma1,
            ..cells[0]
        };
        assert_ne!(cell_seed(7, &other), seeds[0]);
        assert_ne!(cell_seed(8, &cells[0]), seeds[0]);
    }

    #[test]
    fn output_is_reproducible_and_parses_back() {
        let text = base()
            .replace("\"v_grid\": [0]", "\"v_grid\": [0, 2, 5]")
            .replace("[\"positivity\"]", "[\"positivity\", \"gg_residual\", \"lemma1\"]")
            .replace("\"reps\": 4", "\"n_grid\": [1, 2],\n  \"reps\": 4");
        let config = SweepConfig::parse(&text).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ra = run_sweep(&config, a.path()).unwrap();
        let mut parallel = config.clone();
        parallel.workers = Some(3);
        run_sweep(&parallel, b.path()).unwrap();
        let bytes_a = fs::read(a.path().join(RESULTS_FILE)).unwrap();
        assert_eq!(bytes_a, fs::read(b.path().join(RESULTS_FILE)).unwrap());
        let parsed = read_csv(bytes_a.as_slice()).unwrap();
        let expected: Vec<EstimateReport> = ra.rows.iter().map(|r| r.report.clone()).collect();
        assert_eq!(parsed, expected);
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(a.path().join(MANIFEST_FILE)).unwrap()).unwrap();
        assert_eq!(manifest["rows"], 3 + 6 + 3);
        assert!(manifest["wall_time_seconds"].as_f64().unwrap() >= 0.0);
        assert_eq!(manifest["config"]["v_grid"][2], 5.0);
    }
}
