//! Run configuration: a TOML document of flat tables, validated in full
//! before any solve starts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use skt_core::classifier::{SweepOptions, Thresholds, WarmStart};
use skt_core::continuation::{ContinuationConfig, ParamMode};
use skt_core::grid::{build_grid, Grid};
use skt_core::model::ModelParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("parse error{}{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default(), key.as_ref().map(|k| format!(" (key `{k}`)")).unwrap_or_default())]
    Parse {
        line: Option<usize>,
        key: Option<String>,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    #[serde(default = "default_a")]
    pub a: f64,
    #[serde(default = "default_b")]
    pub b: f64,
    #[serde(default = "default_n")]
    pub n: usize,
}

fn default_a() -> f64 {
    -0.5
}
fn default_b() -> f64 {
    0.5
}
fn default_n() -> usize {
    511
}

impl Default for DomainSection {
    fn default() -> Self {
        Self {
            a: default_a(),
            b: default_b(),
            n: default_n(),
        }
    }
}

/// Habitat weight: a constant or one sample per interior node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightSpec {
    Constant(f64),
    Samples(Vec<f64>),
}

impl Default for WeightSpec {
    fn default() -> Self {
        Self::Constant(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Lambda,
    D,
}

impl From<Mode> for ParamMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Lambda => ParamMode::Lambda,
            Mode::D => ParamMode::D,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub alpha: f64,
    pub b1: f64,
    pub b2: f64,
    pub c1: f64,
    pub c2: f64,
    #[serde(default)]
    pub m: WeightSpec,
    #[serde(default)]
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSection {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinuationSection {
    pub ds: f64,
    pub ds_max: f64,
    pub loc_tol: f64,
    pub max_points: usize,
    pub seed_amplitude: f64,
}

impl Default for ContinuationSection {
    fn default() -> Self {
        let c = ContinuationConfig::default();
        Self {
            ds: c.ds,
            ds_max: c.ds_max,
            loc_tol: c.loc_tol,
            max_points: c.max_points,
            seed_amplitude: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepBranch {
    Coexistence,
    Segregation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub lambda: f64,
    pub alphas: Vec<f64>,
    pub branch: SweepBranch,
    /// Index of the segregated profile; required for `segregation`.
    pub j: Option<usize>,
    #[serde(default = "default_max_ratio")]
    pub max_ratio: f64,
    #[serde(default = "default_amplitude_factor")]
    pub amplitude_factor: f64,
    #[serde(default = "default_symmetry")]
    pub symmetry: f64,
    #[serde(default = "default_product")]
    pub product: f64,
}

fn default_max_ratio() -> f64 {
    1.5
}
fn default_amplitude_factor() -> f64 {
    Thresholds::default().amplitude_factor
}
fn default_symmetry() -> f64 {
    Thresholds::default().symmetry
}
fn default_product() -> f64 {
    Thresholds::default().product
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: String,
}

fn default_dir() -> String {
    "out".into()
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: default_dir() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub domain: DomainSection,
    pub model: ModelSection,
    pub window: Option<WindowSection>,
    #[serde(default)]
    pub continuation: ContinuationSection,
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub output: OutputSection,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

fn key_of(message: &str) -> Option<String> {
    // toml reports offending keys in backticks
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(message[start..start + len].to_string())
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.span().map(|s| line_of(text, s.start)),
        key: key_of(e.message()),
        message: e.message().trim().to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &str) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_string(),
        source,
    })?;
    parse_config(&text)
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Validation(msg.into())
}

fn positive(name: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let d = &self.domain;
        if !(d.a.is_finite() && d.b.is_finite() && d.a < d.b) {
            return Err(invalid(format!("domain needs a < b, got ({}, {})", d.a, d.b)));
        }
        if d.n < 3 {
            return Err(invalid(format!("domain.n must be at least 3, got {}", d.n)));
        }
        let md = &self.model;
        positive("model.alpha", md.alpha)?;
        for (name, v) in [("model.b1", md.b1), ("model.b2", md.b2), ("model.c1", md.c1), ("model.c2", md.c2)] {
            positive(name, v)?;
        }
        match &md.m {
            WeightSpec::Constant(c) => positive("model.m", *c)?,
            WeightSpec::Samples(s) => {
                if s.len() != d.n {
                    return Err(invalid(format!("model.m has {} samples, domain.n is {}", s.len(), d.n)));
                }
                if s.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || s.iter().all(|v| *v == 0.0) {
                    return Err(invalid("model.m samples must be finite, nonnegative and not all zero"));
                }
            }
        }
        if let Some(w) = &self.window {
            positive("window.lo", w.lo)?;
            if !(w.hi.is_finite() && w.hi > w.lo) {
                return Err(invalid(format!("window needs lo < hi, got {}:{}", w.lo, w.hi)));
            }
        }
        let c = &self.continuation;
        positive("continuation.ds", c.ds)?;
        positive("continuation.loc_tol", c.loc_tol)?;
        positive("continuation.seed_amplitude", c.seed_amplitude)?;
        if !(c.ds_max >= c.ds) {
            return Err(invalid(format!("continuation.ds_max ({}) is below ds ({})", c.ds_max, c.ds)));
        }
        if c.max_points < 2 {
            return Err(invalid("continuation.max_points must be at least 2"));
        }
        if let Some(s) = &self.sweep {
            positive("sweep.lambda", s.lambda)?;
            if s.alphas.is_empty() || s.alphas.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(invalid("sweep.alphas must be nonempty and strictly increasing"));
            }
            if !(s.alphas[0] >= md.alpha) {
                return Err(invalid(format!(
                    "sweep.alphas must start at or above model.alpha = {}",
                    md.alpha
                )));
            }
            if !(s.max_ratio > 1.0) {
                return Err(invalid("sweep.max_ratio must exceed 1"));
            }
            for (name, v) in [
                ("sweep.amplitude_factor", s.amplitude_factor),
                ("sweep.symmetry", s.symmetry),
                ("sweep.product", s.product),
            ] {
                positive(name, v)?;
            }
            match (s.branch, s.j) {
                (SweepBranch::Segregation, None) => return Err(invalid("sweep.j is required for the segregation branch")),
                (_, Some(0)) => return Err(invalid("sweep.j starts at 1")),
                _ => {}
            }
        }
        if self.output.dir.is_empty() {
            return Err(invalid("output.dir is empty"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid, ConfigError> {
        build_grid(self.domain.a, self.domain.b, self.domain.n).map_err(|e| invalid(e.to_string()))
    }

    pub fn weight(&self) -> Vec<f64> {
        match &self.model.m {
            WeightSpec::Constant(c) => vec![*c; self.domain.n],
            WeightSpec::Samples(s) => s.clone(),
        }
    }

    /// Model parameters at `lambda`.
    pub fn params(&self, lambda: f64) -> Result<ModelParams, ConfigError> {
        let md = &self.model;
        ModelParams::new(md.alpha, md.b1, md.b2, md.c1, md.c2, self.weight(), lambda).map_err(|e| invalid(e.to_string()))
    }

    pub fn continuation(&self) -> ContinuationConfig {
        let c = &self.continuation;
        ContinuationConfig {
            ds: c.ds,
            ds_max: c.ds_max,
            loc_tol: c.loc_tol,
            max_points: c.max_points,
            ..ContinuationConfig::default()
        }
    }

    /// Window in `λ`; a `d`-mode window `[lo, hi]` maps to `[1/hi, 1/lo]`.
    pub fn lambda_window(&self, window: Option<(f64, f64)>) -> Result<(f64, f64), ConfigError> {
        let (lo, hi) = window
            .or(self.window.as_ref().map(|w| (w.lo, w.hi)))
            .ok_or_else(|| invalid("no continuation window given"))?;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(invalid(format!("window needs 0 < lo < hi, got {lo}:{hi}")));
        }
        Ok(match self.model.mode {
            Mode::Lambda => (lo, hi),
            Mode::D => (1.0 / hi, 1.0 / lo),
        })
    }

    pub fn sweep_options(&self) -> Option<SweepOptions> {
        let s = self.sweep.as_ref()?;
        let warm = match s.branch {
            SweepBranch::Coexistence => WarmStart::Coexistence,
            SweepBranch::Segregation => WarmStart::Segregation,
        };
        let mut o = SweepOptions::new(warm);
        o.mode = s.j;
        o.max_ratio = s.max_ratio;
        o.thresholds = Thresholds {
            amplitude_factor: s.amplitude_factor,
            symmetry: s.symmetry,
            product: s.product,
        };
        o.continuation = self.continuation();
        Some(o)
    }
}

/// Parses `lo:hi`.
pub fn parse_window(s: &str) -> Result<(f64, f64), ConfigError> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| invalid(format!("window `{s}` is not of the form lo:hi")))?;
    let lo = a.trim().parse::<f64>().map_err(|e| invalid(format!("window lower end `{a}`: {e}")))?;
    let hi = b.trim().parse::<f64>().map_err(|e| invalid(format!("window upper end `{b}`: {e}")))?;
    Ok((lo, hi))
}
