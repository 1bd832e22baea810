//! Experiment drivers: each takes a config, returns result tables plus
//! machine-checked postconditions, and writes CSV with a JSON sidecar.

mod counterexample;
mod divergence;
mod figure1;
mod path_compare;
mod separation;
pub mod svg;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data_model::{build_spectrum, sample_dataset, CovarianceModel, Dataset, ParameterSpec, SpectrumSpec, TrueParameter};
use crate::error::{Error, Result};
use crate::risk::{QuadratureGrid, DEFAULT_ORDER};

pub use counterexample::{exp_counterexample, CounterexampleParams};
pub use divergence::{exp_divergence, DivergenceParams};
pub use figure1::{exp_figure1, Figure1Params};
pub use path_compare::{exp_path_compare, PathCompareParams};
pub use separation::{exp_separation, SeparationParams};

/// Population-oracle settings shared by all experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleSettings {
    pub quad_order: usize,
    /// Monte Carlo cross-check budget; 0 disables it.
    pub mc_budget: usize,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self {
            quad_order: DEFAULT_ORDER,
            mc_budget: 100_000,
        }
    }
}

impl OracleSettings {
    pub fn grid(&self) -> Result<QuadratureGrid> {
        QuadratureGrid::new(self.quad_order)
    }
}

/// Gaussian design: spectrum, dimensions and true parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    pub spectrum: SpectrumSpec,
    pub d: usize,
    pub n: usize,
    pub parameter: ParameterSpec,
}

impl DataSpec {
    pub fn population(&self) -> Result<(CovarianceModel, TrueParameter)> {
        let cov = build_spectrum(&self.spectrum, self.d)?;
        let p = TrueParameter::from_spec(&cov, &self.parameter)?;
        Ok((cov, p))
    }

    pub fn build(&self, seed: u64) -> Result<(CovarianceModel, TrueParameter, Dataset)> {
        let (cov, p) = self.population()?;
        let data = sample_dataset(&cov, &p, self.n, seed)?;
        Ok((cov, p, data))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentId {
    Figure1,
    Divergence,
    Separation,
    PathCompare,
    Counterexample,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 5] = [
        ExperimentId::Figure1,
        ExperimentId::Divergence,
        ExperimentId::Separation,
        ExperimentId::PathCompare,
        ExperimentId::Counterexample,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentId::Figure1 => "figure1",
            ExperimentId::Divergence => "divergence",
            ExperimentId::Separation => "separation",
            ExperimentId::PathCompare => "path_compare",
            ExperimentId::Counterexample => "counterexample",
        }
    }
}

impl std::str::FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|id| id.as_str() == key)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown experiment '{s}'")))
    }
}

/// Per-experiment parameters; the tag names the experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum ExperimentSpec {
    Figure1(Figure1Params),
    Divergence(DivergenceParams),
    Separation(SeparationParams),
    PathCompare(PathCompareParams),
    Counterexample(CounterexampleParams),
}

impl ExperimentSpec {
    pub fn id(&self) -> ExperimentId {
        match self {
            ExperimentSpec::Figure1(_) => ExperimentId::Figure1,
            ExperimentSpec::Divergence(_) => ExperimentId::Divergence,
            ExperimentSpec::Separation(_) => ExperimentId::Separation,
            ExperimentSpec::PathCompare(_) => ExperimentId::PathCompare,
            ExperimentSpec::Counterexample(_) => ExperimentId::Counterexample,
        }
    }

    pub fn default_for(id: ExperimentId) -> Self {
        match id {
            ExperimentId::Figure1 => ExperimentSpec::Figure1(Default::default()),
            ExperimentId::Divergence => ExperimentSpec::Divergence(Default::default()),
            ExperimentId::Separation => ExperimentSpec::Separation(Default::default()),
            ExperimentId::PathCompare => ExperimentSpec::PathCompare(Default::default()),
            ExperimentId::Counterexample => ExperimentSpec::Counterexample(Default::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub oracle: OracleSettings,
    pub experiment: ExperimentSpec,
}

fn default_seed() -> u64 {
    1
}

impl ExperimentConfig {
    pub fn default_for(id: ExperimentId) -> Self {
        Self {
            seed: default_seed(),
            oracle: OracleSettings::default(),
            experiment: ExperimentSpec::default_for(id),
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(&bytes)[..8])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub experiment: String,
    pub seed: u64,
    pub config_hash: String,
    pub version: String,
}

/// A table cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(u64),
    Num(f64),
    Text(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Num(x) => Some(*x),
            Value::Text(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            // shortest round-trip representation
            Value::Num(x) => write!(f, "{x:?}"),
            Value::Text(s) => write!(f, "{s}"),
        }
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Num(x)
    }
}

impl From<u64> for Value {
    fn from(x: u64) -> Self {
        Value::Int(x)
    }
}

impl From<usize> for Value {
    fn from(x: usize) -> Self {
        Value::Int(x as u64)
    }
}

impl From<bool> for Value {
    fn from(x: bool) -> Self {
        Value::Text(x.to_string())
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Text(s.to_string())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Text(s)
    }
}

/// Rows under a fixed column schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl ResultTable {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the schema of {}", self.name);
        self.rows.push(row);
    }

    fn index(&self, column: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == column)
            .ok_or_else(|| Error::InvalidArgument(format!("table {} has no column '{column}'", self.name)))
    }

    /// Numeric column; text cells become NaN.
    pub fn column(&self, column: &str) -> Result<Vec<f64>> {
        let j = self.index(column)?;
        Ok(self.rows.iter().map(|r| r[j].as_f64().unwrap_or(f64::NAN)).collect())
    }

    pub fn text_column(&self, column: &str) -> Result<Vec<String>> {
        let j = self.index(column)?;
        Ok(self.rows.iter().map(|r| r[j].to_string()).collect())
    }

    /// CSV with a leading `config_hash` column on every row.
    pub fn to_csv(&self, config_hash: &str) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["config_hash".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![config_hash.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// A postcondition. Asserted checks decide the exit status; the others
/// record observations only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub asserted: bool,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn assert(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            asserted: true,
            passed,
            detail: detail.into(),
        }
    }

    pub fn observe(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            asserted: false,
            passed,
            detail: detail.into(),
        }
    }
}

/// A line chart to render when plots are requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plot {
    pub name: String,
    pub title: String,
    pub x_label: String,
    pub log_x: bool,
    pub series: Vec<(String, Vec<(f64, f64)>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub provenance: Provenance,
    pub config: ExperimentConfig,
    pub tables: Vec<ResultTable>,
    pub checks: Vec<Check>,
    pub summary: serde_json::Value,
    #[serde(skip)]
    pub plots: Vec<Plot>,
}

impl ExperimentResult {
    fn new(config: &ExperimentConfig) -> Self {
        Self {
            provenance: Provenance {
                experiment: config.experiment.id().as_str().into(),
                seed: config.seed,
                config_hash: config.hash(),
                version: env!("CARGO_PKG_VERSION").into(),
            },
            config: config.clone(),
            tables: Vec::new(),
            checks: Vec::new(),
            summary: serde_json::Value::Object(Default::default()),
            plots: Vec::new(),
        }
    }

    pub fn table(&self, name: &str) -> Result<&ResultTable> {
        self.tables
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::InvalidArgument(format!("no table named '{name}'")))
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failed_assertions(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| c.asserted && !c.passed).collect()
    }

    pub fn passed(&self) -> bool {
        self.failed_assertions().is_empty()
    }

    fn set(&mut self, key: &str, value: impl Serialize) {
        self.summary[key] = serde_json::to_value(value).expect("summary values serialize");
    }

    fn prefix(&self) -> String {
        self.provenance.experiment.clone()
    }

    pub fn csv_bodies(&self) -> Result<Vec<(String, String)>> {
        self.tables
            .iter()
            .map(|t| Ok((format!("{}_{}.csv", self.prefix(), t.name), t.to_csv(&self.provenance.config_hash)?)))
            .collect()
    }

    /// Writes every table as CSV, a JSON sidecar with provenance, checks and
    /// summary, and optionally SVG plots. Returns the written paths.
    pub fn write(&self, out_dir: &Path, svg: bool) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(out_dir)?;
        let mut written = Vec::new();
        for (name, body) in self.csv_bodies()? {
            let path = out_dir.join(name);
            fs::write(&path, body)?;
            written.push(path);
        }
        let sidecar = serde_json::json!({
            "provenance": self.provenance,
            "config": self.config,
            "tables": self.tables.iter().map(|t| serde_json::json!({"name": t.name, "columns": t.columns, "rows": t.rows.len()})).collect::<Vec<_>>(),
            "checks": self.checks,
            "passed": self.passed(),
            "summary": self.summary,
        });
        let path = out_dir.join(format!("{}.json", self.prefix()));
        fs::write(&path, serde_json::to_string_pretty(&sidecar)?)?;
        written.push(path);
        if svg {
            for plot in &self.plots {
                let path = out_dir.join(format!("{}_{}.svg", self.prefix(), plot.name));
                fs::write(&path, svg::line_chart(plot))?;
                written.push(path);
            }
        }
        Ok(written)
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    match &config.experiment {
        ExperimentSpec::Figure1(p) => exp_figure1(config, p),
        ExperimentSpec::Divergence(p) => exp_divergence(config, p),
        ExperimentSpec::Separation(p) => exp_separation(config, p),
        ExperimentSpec::PathCompare(p) => exp_path_compare(config, p),
        ExperimentSpec::Counterexample(p) => exp_counterexample(config, p),
    }
}

// ---- helpers shared by the drivers ----

/// Records with `t` in the last `decades` decades before `t_final`.
fn in_window(t: u64, t_final: u64, decades: f64) -> bool {
    t > 0 && (t as f64) >= t_final as f64 / 10f64.powf(decades)
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|p| p[1] > p[0])
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|p| p[1] < p[0])
}

fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m == 0 {
        f64::NAN
    } else if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// Least-squares slope and intercept of `y` on `x`.
fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Independent stream seed for replicate `index` of group `group`.
fn derive_seed(seed: u64, group: u64, index: u64) -> u64 {
    // splitmix64 finalizer over a combined key
    let mut z = seed
        .wrapping_add(group.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
