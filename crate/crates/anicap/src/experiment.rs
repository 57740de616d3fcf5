//! Experiment configuration files.
//!
//! A configuration is checked against the published schema
//! (`schema/experiment.schema.json`) before it is deserialized, so every
//! rejection names the offending JSON path.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use anicap_core::flow::FlowConfig;
use anicap_core::stability::ConstraintMode;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::aniso::AnisoSpec;

/// The schema every experiment configuration must satisfy.
pub const SCHEMA: &str = include_str!("../schema/experiment.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SurfaceSource {
    /// Generated truncated Wulff caps, optionally radially perturbed by a
    /// seeded smooth field of relative size `perturbation`.
    Wulff {
        #[serde(default)]
        perturbation: f64,
    },
    File { path: PathBuf },
}

impl Default for SurfaceSource {
    fn default() -> Self {
        SurfaceSource::Wulff { perturbation: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Weak,
    Strong,
}

impl From<Mode> for ConstraintMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Weak => ConstraintMode::Weak,
            Mode::Strong => ConstraintMode::Strong,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumParams {
    pub mode: Mode,
    pub k: usize,
    /// Band half-width; `None` uses the mesh-dependent default.
    pub epsilon: Option<f64>,
    pub expect_stable: bool,
    pub write_matrix: bool,
}

impl Default for SpectrumParams {
    fn default() -> Self {
        Self { mode: Mode::Weak, k: 6, epsilon: None, expect_stable: false, write_matrix: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentityParams {
    pub order: usize,
    /// Amplitude of the capillary-preserving bump on the parametric cap.
    pub bump: f64,
    /// Angular wavenumber of the bump.
    pub wavenumber: u32,
    pub tol: f64,
}

impl Default for IdentityParams {
    fn default() -> Self {
        Self { order: 6, bump: 0.05, wavenumber: 3, tol: 1e-5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SecondVariationParams {
    pub radius: f64,
    pub center: [f64; 2],
    pub sigma: f64,
    pub steps: Vec<f64>,
    pub tol: f64,
}

impl Default for SecondVariationParams {
    fn default() -> Self {
        Self { radius: 1.0, center: [0.05, 0.5], sigma: 0.12, steps: vec![0.02, 0.01, 0.005], tol: 1e-3 }
    }
}

/// Serializable mirror of [`FlowConfig`] plus the checkpoint interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowParams {
    pub step: f64,
    pub max_steps: usize,
    pub camc_target: f64,
    pub volume_tol: f64,
    pub smoothing: f64,
    pub refine_ratio: Option<f64>,
    pub min_quality: f64,
    pub fit_interval: usize,
    /// Write an OFF checkpoint every this many accepted steps (0: never).
    pub checkpoint_every: usize,
}

impl Default for FlowParams {
    fn default() -> Self {
        let d = FlowConfig::default();
        Self {
            step: d.step,
            max_steps: d.max_steps,
            camc_target: d.camc_target,
            volume_tol: d.volume_tol,
            smoothing: d.smoothing,
            refine_ratio: d.refine_ratio,
            min_quality: d.min_quality,
            fit_interval: d.fit_interval,
            checkpoint_every: 0,
        }
    }
}

impl FlowParams {
    pub fn flow_config(&self) -> FlowConfig {
        FlowConfig {
            step: self.step,
            max_steps: self.max_steps,
            camc_target: self.camc_target,
            volume_tol: self.volume_tol,
            smoothing: self.smoothing,
            refine_ratio: self.refine_ratio,
            min_quality: self.min_quality,
            fit_interval: self.fit_interval,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BernsteinParams {
    /// Radius of the sampled half-plane.
    pub extent: f64,
    pub radii: Vec<f64>,
    pub cutoff: [f64; 2],
    /// Rings per e-fold of the log-graded sample.
    pub per_efold: usize,
}

impl Default for BernsteinParams {
    fn default() -> Self {
        Self { extent: 200.0, radii: vec![10.0, 50.0, 150.0], cutoff: [1.0, std::f64::consts::E.powi(4)], per_efold: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anisotropy: Option<AnisoSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega0: Option<f64>,
    pub surface: SurfaceSource,
    /// Ladder of refinement levels; each subcommand has its own default.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolution: Option<Vec<usize>>,
    pub output_dir: Option<PathBuf>,
    /// Single source of all randomness.
    pub seed: u64,
    pub spectrum: SpectrumParams,
    pub identities: IdentityParams,
    pub second_variation: SecondVariationParams,
    pub flow: FlowParams,
    pub bernstein: BernsteinParams,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {reason}")]
    Unreadable { path: PathBuf, reason: String },
    #[error("config {path} violates the schema:\n{}", .errors.join("\n"))]
    Schema { path: PathBuf, errors: Vec<String> },
}

fn validator() -> &'static jsonschema::Validator {
    static V: OnceLock<jsonschema::Validator> = OnceLock::new();
    V.get_or_init(|| {
        let schema: Value = serde_json::from_str(SCHEMA).expect("schema is JSON");
        jsonschema::validator_for(&schema).expect("schema is valid")
    })
}

/// Schema violations of a JSON document, one line each.
pub fn schema_errors(doc: &Value) -> Vec<String> {
    validator()
        .iter_errors(doc)
        .map(|e| {
            let at = e.instance_path().to_string();
            format!("  at {}: {}", if at.is_empty() { "/" } else { &at }, e)
        })
        .collect()
}

impl ExperimentConfig {
    /// Validate a parsed document against the schema, then deserialize it.
    pub fn from_value(doc: Value, path: &Path) -> Result<Self, ConfigError> {
        let errors = schema_errors(&doc);
        if !errors.is_empty() {
            return Err(ConfigError::Schema { path: path.to_path_buf(), errors });
        }
        serde_json::from_value(doc).map_err(|e| ConfigError::Schema { path: path.to_path_buf(), errors: vec![format!("  {e}")] })
    }

    /// Load a configuration file. Files that cannot be read or are not JSON
    /// are unreadable; well-formed JSON that breaks the schema is invalid.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError::Unreadable { path: path.to_path_buf(), reason: e.to_string() })?;
        let doc: Value = serde_json::from_str(&text)
            .map_err(|e| ConfigError::Unreadable { path: path.to_path_buf(), reason: e.to_string() })?;
        Self::from_value(doc, path)
    }
}
