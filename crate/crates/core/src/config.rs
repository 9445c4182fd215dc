//! TOML run configuration.
//!
//! ```toml
//! experiment = "simulate"
//!
//! [model]
//! length = 6.283185307179586
//! nu = 1.0
//! boundary = "periodic"     # or "neumann"
//! modes = 32
//! noise = "white"           # "zero", { alphas = [...] } or { c = 1.0, p = 0.5 }
//!
//! [sim]
//! h = 0.001
//! t_end = 10.0
//! seed = 1
//! ```
//!
//! Omitted fields take the defaults listed in the README.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;
use thiserror::Error;

use crate::analysis::Probe;
use crate::integrator::{default_burn_in, ModelSpec, SimParams};
use crate::noise::NoiseSpectrum;
use crate::spectral::{BasisSpec, Boundary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Simulate,
    StationaryScan,
    VerifyPhi,
    Lemma61,
    Lemma62,
    OrderCheck,
    RefineCheck,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Simulate,
        Experiment::StationaryScan,
        Experiment::VerifyPhi,
        Experiment::Lemma61,
        Experiment::Lemma62,
        Experiment::OrderCheck,
        Experiment::RefineCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::StationaryScan => "stationary-scan",
            Experiment::VerifyPhi => "verify-phi",
            Experiment::Lemma61 => "lemma61",
            Experiment::Lemma62 => "lemma62",
            Experiment::OrderCheck => "order-check",
            Experiment::RefineCheck => "refine-check",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown experiment '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NamedNoise {
    White,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseConfig {
    Named(NamedNoise),
    Array { alphas: Vec<f64> },
    PowerLaw { c: f64, p: f64 },
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig::Named(NamedNoise::White)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_length")]
    pub length: f64,
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default = "default_boundary")]
    pub boundary: Boundary,
    #[serde(default = "default_modes")]
    pub modes: usize,
    #[serde(default)]
    pub noise: NoiseConfig,
}

fn default_length() -> f64 {
    2.0 * PI
}
fn default_nu() -> f64 {
    1.0
}
fn default_boundary() -> Boundary {
    Boundary::Periodic
}
fn default_modes() -> usize {
    32
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            length: default_length(),
            nu: default_nu(),
            boundary: default_boundary(),
            modes: default_modes(),
            noise: NoiseConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    /// `None` means ten slowest relaxation times, capped at `t_end`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_ensemble")]
    pub ensemble: usize,
    /// `None` means every probe.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probes: Option<Vec<Probe>>,
    #[serde(default = "default_true")]
    pub nonlinear: bool,
}

fn default_h() -> f64 {
    1e-3
}
fn default_t_end() -> f64 {
    10.0
}
fn default_stride() -> usize {
    10
}
fn default_ensemble() -> usize {
    1
}
fn default_true() -> bool {
    true
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            h: default_h(),
            t_end: default_t_end(),
            burn_in: None,
            record_stride: default_stride(),
            seed: 0,
            ensemble: default_ensemble(),
            probes: None,
            nonlinear: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilizerConfig {
    /// Fixed `n*`; selected automatically when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_star: Option<usize>,
    /// Target lower bound for the Schrödinger operator; `|ν|` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_target: Option<f64>,
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default = "default_form_samples")]
    pub form_samples: usize,
}

fn default_grid() -> usize {
    512
}
fn default_margin() -> f64 {
    0.05
}
fn default_form_samples() -> usize {
    10_000
}

impl Default for StabilizerConfig {
    fn default() -> Self {
        Self {
            n_star: None,
            c_target: None,
            grid: default_grid(),
            margin: default_margin(),
            form_samples: default_form_samples(),
        }
    }
}

/// Settings read by the verifier subcommands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentParams {
    #[serde(default = "default_modes_list")]
    pub modes_list: Vec<usize>,
    #[serde(default = "default_times")]
    pub times: Vec<f64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_xs")]
    pub xs: Vec<f64>,
    #[serde(default = "default_k")]
    pub k: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Tightness thresholds for the a-priori tail table.
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
}

fn default_modes_list() -> Vec<usize> {
    vec![16, 32, 64]
}
fn default_times() -> Vec<f64> {
    vec![1e-4, 1e-3, 1e-2, 1e-1]
}
fn default_samples() -> usize {
    20_000
}
fn default_xs() -> Vec<f64> {
    vec![1.0, 10.0, 100.0, 1e4]
}
fn default_k() -> f64 {
    1.0
}
fn default_eps() -> f64 {
    0.1
}
fn default_thresholds() -> Vec<f64> {
    vec![1.0, 10.0, 100.0]
}

impl Default for ExperimentParams {
    fn default() -> Self {
        Self {
            modes_list: default_modes_list(),
            times: default_times(),
            samples: default_samples(),
            xs: default_xs(),
            k: default_k(),
            eps: default_eps(),
            thresholds: default_thresholds(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stabilizer: Option<StabilizerConfig>,
    #[serde(default)]
    pub params: ExperimentParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid configuration:\n  {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\n  "))]
    Invalid(Vec<Violation>),
}

impl RunConfig {
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            output: None,
            model: ModelConfig::default(),
            sim: SimConfig::default(),
            stabilizer: None,
            params: ExperimentParams::default(),
        }
    }

    pub fn basis(&self) -> BasisSpec {
        BasisSpec::new(self.model.boundary, self.model.length, self.model.modes)
            .expect("validated basis")
    }

    pub fn noise(&self) -> NoiseSpectrum {
        let n = self.model.modes;
        match &self.model.noise {
            NoiseConfig::Named(NamedNoise::White) => NoiseSpectrum::white(n),
            NoiseConfig::Named(NamedNoise::Zero) => NoiseSpectrum::zero(n),
            NoiseConfig::Array { alphas } => {
                NoiseSpectrum::from_values(alphas[..n].to_vec()).expect("validated noise")
            }
            NoiseConfig::PowerLaw { c, p } => {
                NoiseSpectrum::power_law(*c, *p, n).expect("validated noise")
            }
        }
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            basis: self.basis(),
            nu: self.model.nu,
            noise: self.noise(),
        }
    }

    pub fn burn_in(&self) -> f64 {
        self.sim
            .burn_in
            .unwrap_or_else(|| default_burn_in(&self.model_spec()).min(self.sim.t_end))
    }

    pub fn probes(&self) -> Vec<Probe> {
        self.sim.probes.clone().unwrap_or_else(|| Probe::ALL.to_vec())
    }

    /// Simulation parameters without a stabilizer.
    pub fn sim_params(&self) -> SimParams {
        let mut p = SimParams::new(self.model_spec(), self.sim.h, self.sim.t_end)
            .with_burn_in(self.burn_in())
            .with_stride(self.sim.record_stride);
        p.nonlinear = self.sim.nonlinear;
        p
    }

    /// Every violated constraint.
    pub fn violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        let mut add = |field: &str, message: String| {
            v.push(Violation {
                field: field.into(),
                message,
            })
        };
        let m = &self.model;
        if !(m.length.is_finite() && m.length > 0.0) {
            add("model.length", format!("must be positive, got {}", m.length));
        }
        if !m.nu.is_finite() {
            add("model.nu", format!("must be finite, got {}", m.nu));
        }
        if m.modes == 0 {
            add("model.modes", "must be at least 1".into());
        }
        match &m.noise {
            NoiseConfig::Named(_) => {}
            NoiseConfig::Array { alphas } => {
                if alphas.len() < m.modes {
                    add(
                        "model.noise.alphas",
                        format!("has {} entries, need {}", alphas.len(), m.modes),
                    );
                }
                if let Some((i, a)) = alphas
                    .iter()
                    .enumerate()
                    .find(|(_, a)| !(a.is_finite() && **a >= 0.0))
                {
                    add("model.noise.alphas", format!("entry {} is {a}", i + 1));
                }
            }
            NoiseConfig::PowerLaw { c, p } => {
                if !(c.is_finite() && *c >= 0.0) {
                    add("model.noise.c", format!("must be nonnegative, got {c}"));
                }
                if !(p.is_finite() && *p >= 0.0) {
                    add("model.noise.p", format!("must be nonnegative, got {p}"));
                }
            }
        }
        let s = &self.sim;
        if !(s.h.is_finite() && s.h > 0.0) {
            add("sim.h", format!("must be positive, got {}", s.h));
        }
        if !(s.t_end.is_finite() && s.t_end >= 0.0) {
            add("sim.t_end", format!("must be nonnegative, got {}", s.t_end));
        }
        if let Some(b) = s.burn_in {
            if !(b.is_finite() && b >= 0.0) {
                add("sim.burn_in", format!("must be nonnegative, got {b}"));
            } else if b > s.t_end {
                add("sim.burn_in", format!("{b} exceeds t_end {}", s.t_end));
            }
        }
        if s.record_stride == 0 {
            add("sim.record_stride", "must be at least 1".into());
        }
        if s.ensemble == 0 {
            add("sim.ensemble", "must be at least 1".into());
        }
        if let Some(st) = &self.stabilizer {
            if st.n_star == Some(0) {
                add("stabilizer.n_star", "must be at least 1".into());
            }
            if let Some(c) = st.c_target {
                if !(c.is_finite() && c > 0.0) {
                    add("stabilizer.c_target", format!("must be positive, got {c}"));
                }
            }
            if st.grid < 64 {
                add("stabilizer.grid", format!("must be at least 64, got {}", st.grid));
            }
            if !(st.margin.is_finite() && st.margin >= 0.0) {
                add("stabilizer.margin", format!("must be nonnegative, got {}", st.margin));
            }
            if m.boundary != Boundary::Neumann {
                add("stabilizer", "requires boundary = \"neumann\"".into());
            }
        }
        let p = &self.params;
        if p.modes_list.is_empty() || p.modes_list.contains(&0) {
            add("params.modes_list", "must be nonempty with positive entries".into());
        }
        if p.times.is_empty() || p.times.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
            add("params.times", "entries must lie in (0, 1]".into());
        }
        if p.samples < 2 {
            add("params.samples", "must be at least 2".into());
        }
        if p.xs.is_empty() || p.xs.iter().any(|&x| !(x >= 1.0)) {
            add("params.xs", "entries must be at least 1".into());
        }
        if !(p.k.is_finite() && p.k > 0.0) {
            add("params.k", format!("must be positive, got {}", p.k));
        }
        if !(p.eps.is_finite() && p.eps > 0.0) {
            add("params.eps", format!("must be positive, got {}", p.eps));
        }
        v
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        ConfigError::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    let v = cfg.violations();
    if v.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Invalid(v))
    }
}

/// Canonical TOML form.
pub fn emit(cfg: &RunConfig) -> String {
    toml::to_string(cfg).expect("configuration serializes")
}
