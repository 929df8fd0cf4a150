//! Run configuration (TOML) and the result manifest.
//!
//! Couplings are entered as trig-term rows `[kind, coeff, k1, k2, kw, kt]` —
//! the polynomial is the contract, there is no expression parsing. The config
//! hash is taken over a canonical (key-sorted) JSON rendering, so it is
//! stable under field reordering in the file.

use crate::coupling::CouplingSpec;
use crate::grid::GridSpec;
use crate::trig::{Phase, TrigPoly, TrigTerm};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
}

/// One trig term row: (kind, coeff, k1, k2, kw, kt).
pub type TermRow = (String, f64, i64, i64, i64, i64);

pub fn terms_to_poly(rows: &[TermRow]) -> Result<TrigPoly, ConfigError> {
    let mut terms = Vec::with_capacity(rows.len());
    for (kind, coeff, k1, k2, kw, kt) in rows {
        let phase = match kind.as_str() {
            "cos" => Phase::Cos,
            "sin" => Phase::Sin,
            other => {
                return Err(ConfigError::Invalid(format!(
                    "coupling term kind must be \"cos\" or \"sin\", got {other:?}"
                )))
            }
        };
        terms.push(TrigTerm::new(phase, *coeff, [*k1, *k2, *kw, *kt]));
    }
    Ok(TrigPoly::new(terms))
}

pub fn poly_to_terms(p: &TrigPoly) -> Vec<TermRow> {
    p.terms
        .iter()
        .map(|t| {
            let kind = match t.phase {
                Phase::Cos => "cos".to_string(),
                Phase::Sin => "sin".to_string(),
            };
            (kind, t.coeff, t.wave[0], t.wave[1], t.wave[2], t.wave[3])
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingConfig {
    pub epsilon: f64,
    #[serde(default)]
    pub f1: Vec<TermRow>,
    #[serde(default)]
    pub f2: Vec<TermRow>,
    #[serde(default)]
    pub g: Vec<TermRow>,
}

fn default_n_phi() -> usize {
    64
}
fn default_n_t() -> usize {
    256
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    #[serde(default = "default_n_phi")]
    pub n_phi: usize,
    #[serde(default = "default_n_t")]
    pub n_t: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { n_phi: default_n_phi(), n_t: default_n_t() }
    }
}

fn default_n_max() -> usize {
    3
}
fn default_m_sum() -> usize {
    crate::series::DEFAULT_M_SUM
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesConfig {
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_m_sum")]
    pub m_sum: usize,
    /// auxiliary parameter; defaults to ε (tied) when absent
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        SeriesConfig { n_max: default_n_max(), m_sum: default_m_sum(), mu: None }
    }
}

fn default_dt() -> f64 {
    crate::flow::DEFAULT_DT
}
fn default_n_iter() -> usize {
    crate::lyapunov::DEFAULT_N_ITER
}
fn default_n_transient() -> usize {
    crate::lyapunov::DEFAULT_N_TRANSIENT
}
fn default_seed() -> u64 {
    1
}
fn default_n_points() -> usize {
    20_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsConfig {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_n_iter")]
    pub n_iter: usize,
    #[serde(default = "default_n_transient")]
    pub n_transient: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_n_points")]
    pub n_points: usize,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig {
            dt: default_dt(),
            n_iter: default_n_iter(),
            n_transient: default_n_transient(),
            seed: default_seed(),
            n_points: default_n_points(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMethod {
    Qr,
    Perturbative,
    Both,
}

impl Default for SweepMethod {
    fn default() -> Self {
        SweepMethod::Qr
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// explicit grid; wins over min/max/count when present
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default)]
    pub method: SweepMethod,
}

impl SweepConfig {
    pub fn grid(&self) -> Result<Vec<f64>, ConfigError> {
        if let Some(eps) = &self.eps {
            if eps.is_empty() {
                return Err(ConfigError::Invalid("sweep.eps must be nonempty".into()));
            }
            return Ok(eps.clone());
        }
        match (self.eps_min, self.eps_max, self.count) {
            (Some(lo), Some(hi), Some(n)) if n >= 2 && lo < hi => {
                Ok((0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect())
            }
            _ => Err(ConfigError::Invalid(
                "sweep needs eps = [...] or eps_min < eps_max with count ≥ 2".into(),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreesConfig {
    #[serde(default = "default_trees_n_max")]
    pub n_max: usize,
    #[serde(default)]
    pub render: bool,
}

fn default_trees_n_max() -> usize {
    5
}

impl Default for TreesConfig {
    fn default() -> Self {
        TreesConfig { n_max: default_trees_n_max(), render: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: default_out_dir() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub coupling: CouplingConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub series: SeriesConfig,
    #[serde(default)]
    pub dynamics: DynamicsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trees: Option<TreesConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let cfg: RunConfig = toml::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.coupling.g.is_empty() {
            return Err(ConfigError::Invalid("coupling.g required".into()));
        }
        if self.coupling.epsilon < 0.0 {
            return Err(ConfigError::Invalid("coupling.epsilon must be ≥ 0".into()));
        }
        if self.grid.n_phi < 2 || self.grid.n_t < 8 || self.grid.n_t % 2 != 0 {
            return Err(ConfigError::Invalid(
                "grid.n_phi ≥ 2 and even grid.n_t ≥ 8 required".into(),
            ));
        }
        if self.series.n_max == 0 {
            return Err(ConfigError::Invalid("series.n_max must be ≥ 1".into()));
        }
        if self.dynamics.dt <= 0.0 {
            return Err(ConfigError::Invalid("dynamics.dt must be positive".into()));
        }
        if let Some(sweep) = &self.sweep {
            sweep.grid()?;
        }
        Ok(())
    }

    pub fn coupling_spec(&self) -> Result<CouplingSpec, ConfigError> {
        CouplingSpec::new(
            terms_to_poly(&self.coupling.f1)?,
            terms_to_poly(&self.coupling.f2)?,
            terms_to_poly(&self.coupling.g)?,
            self.coupling.epsilon,
        )
        .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn grid_spec(&self) -> GridSpec {
        GridSpec::new(self.grid.n_phi, self.grid.n_t)
    }

    pub fn mu(&self) -> f64 {
        self.series.mu.unwrap_or(self.coupling.epsilon)
    }

    /// Hash over the canonical JSON rendering (serde_json sorts map keys),
    /// stable under field reordering in the TOML source.
    pub fn config_hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let canonical = serde_json::to_string(&value).expect("canonical form");
        format!("{:016x}", fnv1a(canonical.as_bytes()))
    }

    /// Key for the series/frame cache: the inputs the bundle depends on.
    pub fn bundle_cache_key(&self) -> String {
        let subset = serde_json::json!({
            "coupling": self.coupling,
            "grid": self.grid,
            "series": self.series,
            "mu": self.mu(),
        });
        format!("{:016x}", fnv1a(subset.to_string().as_bytes()))
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// What a command produced: every output file with its size and content hash.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub fnv64: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResultManifest {
    pub config_hash: String,
    pub version: String,
    pub command: String,
    pub files: Vec<FileEntry>,
    pub wall_clock_s: f64,
    pub diagnostics: serde_json::Value,
    pub notes: Vec<String>,
}

impl ResultManifest {
    pub fn new(command: &str, config_hash: String) -> Self {
        ResultManifest {
            config_hash,
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            files: Vec::new(),
            wall_clock_s: 0.0,
            diagnostics: serde_json::Value::Null,
            notes: Vec::new(),
        }
    }

    pub fn record_file(&mut self, dir: &Path, name: &str) -> std::io::Result<()> {
        let data = std::fs::read(dir.join(name))?;
        self.files.push(FileEntry {
            name: name.to_string(),
            bytes: data.len() as u64,
            fnv64: format!("{:016x}", fnv1a(&data)),
        });
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let body = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(dir.join("manifest.json"), body)
    }
}

/// 17-significant-digit decimal used by every CSV emitter, so numbers
/// round-trip bit-exactly across languages.
pub fn full_precision(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_toml() -> &'static str {
        r#"
[coupling]
epsilon = 0.05
f1 = [["cos", 1.0, 1, 0, 1, 1]]
g = [["sin", 1.0, 0, 0, 1, -1], ["sin", 1.0, 0, 1, 1, 1]]

[grid]
n_phi = 32
n_t = 128

[series]
n_max = 2

[dynamics]
seed = 9
"#
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg: RunConfig = toml::from_str(sample_toml()).unwrap();
        cfg.validate().unwrap();
        let text = toml::to_string(&cfg).unwrap();
        let again: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn missing_g_is_rejected_with_field_name() {
        let cfg: RunConfig = toml::from_str(
            r#"
[coupling]
epsilon = 0.1
"#,
        )
        .unwrap();
        match cfg.validate() {
            Err(ConfigError::Invalid(msg)) => assert_eq!(msg, "coupling.g required"),
            other => panic!("expected Invalid, got {other:?}"),
        }
    }

    #[test]
    fn hash_stable_under_reordering() {
        let a: RunConfig = toml::from_str(sample_toml()).unwrap();
        let reordered = r#"
[dynamics]
seed = 9

[series]
n_max = 2

[grid]
n_t = 128
n_phi = 32

[coupling]
g = [["sin", 1.0, 0, 0, 1, -1], ["sin", 1.0, 0, 1, 1, 1]]
f1 = [["cos", 1.0, 1, 0, 1, 1]]
epsilon = 0.05
"#;
        let b: RunConfig = toml::from_str(reordered).unwrap();
        assert_eq!(a.config_hash(), b.config_hash());
    }

    #[test]
    fn coupling_spec_materializes() {
        let cfg: RunConfig = toml::from_str(sample_toml()).unwrap();
        let spec = cfg.coupling_spec().unwrap();
        assert_eq!(spec.g.terms.len(), 2);
        assert_eq!(spec.f1.terms.len(), 1);
        assert!(spec.f2.is_zero());
        assert_eq!(spec.epsilon, 0.05);
    }

    #[test]
    fn bad_term_kind_is_reported() {
        let cfg: RunConfig = toml::from_str(
            r#"
[coupling]
epsilon = 0.0
g = [["tan", 1.0, 0, 0, 1, 0]]
"#,
        )
        .unwrap();
        assert!(cfg.coupling_spec().is_err());
    }

    #[test]
    fn sweep_grid_forms() {
        let sweep = SweepConfig {
            eps: None,
            eps_min: Some(0.1),
            eps_max: Some(0.2),
            count: Some(6),
            method: SweepMethod::Qr,
        };
        let grid = sweep.grid().unwrap();
        assert_eq!(grid.len(), 6);
        assert!((grid[0] - 0.1).abs() < 1e-15 && (grid[5] - 0.2).abs() < 1e-15);
    }
}
