use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::problems::{DatasetSpec, Sampling};
use crate::{Error, Result};

/// A full experiment description, read from JSON. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub algorithm: Algorithm,
    /// Gradient channel; defaults to exact for quadratics and `igahd`,
    /// sampled otherwise.
    #[serde(default)]
    pub gradient: Option<GradientKind>,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    /// Deterministic errors `‖M^x_k‖ = ‖M^y_k‖ = scale·k^{−exponent}`
    /// (exact gradients only).
    #[serde(default)]
    pub errors: Option<ErrorConfig>,
    /// Starting point; all ones for quadratics, zeros for data problems.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "one")]
    pub record_every: usize,
    /// Output directory; the command line and environment may override it.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub fit: FitConfig,
    /// Iterations excluded from the descent-inequality verdict.
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProblemConfig {
    /// `f(x) = ½xᵀAx − bᵀx` from a diagonal or a full symmetric matrix.
    Quadratic(QuadraticConfig),
    Regression(DataConfig),
    Classification(DataConfig),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticConfig {
    #[serde(default)]
    pub diagonal: Option<Vec<f64>>,
    #[serde(default)]
    pub matrix: Option<Vec<Vec<f64>>>,
    /// `b`; zero when absent.
    #[serde(default)]
    pub linear: Option<Vec<f64>>,
}

/// Either an explicit dataset or the standard generator (`m = 0`, `Σ = I`,
/// uniform weights) with optional conditioning and observation noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default)]
    pub dataset: Option<DatasetSpec>,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub outputs: Option<usize>,
    #[serde(default)]
    pub n_samples: Option<usize>,
    #[serde(default)]
    pub data_seed: Option<u64>,
    /// Target `λmax/λmin` of the feature second moment.
    #[serde(default)]
    pub condition_number: Option<f64>,
    #[serde(default)]
    pub noise_std: Option<f64>,
    #[serde(default)]
    pub sampling: Sampling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Igahd,
    Sigahd,
    Sfista,
    Shbf,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Igahd,
        Algorithm::Sigahd,
        Algorithm::Sfista,
        Algorithm::Shbf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Igahd => "igahd",
            Algorithm::Sigahd => "sigahd",
            Algorithm::Sfista => "sfista",
            Algorithm::Shbf => "shbf",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientKind {
    Exact,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// `β_k = η√s_k/2`; zero selects the undamped (FISTA) stepper.
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// `s₀`; `1/L` when absent.
    #[serde(default)]
    pub s0: Option<f64>,
    /// `p` in `s_k = s₀/(k + offset)^p`.
    #[serde(default)]
    pub step_exponent: f64,
    /// 0 or 1.
    #[serde(default)]
    pub step_offset: u8,
    /// Permit `η = 1` with sampled gradients.
    #[serde(default)]
    pub allow_boundary_eta: bool,
    #[serde(default)]
    pub batch: BatchConfig,
    /// Heavy-ball damping: momentum `1 − damping·√s_k`.
    #[serde(default = "default_hbf_damping")]
    pub hbf_damping: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            alpha: default_alpha(),
            eta: default_eta(),
            s0: None,
            step_exponent: 0.0,
            step_offset: 0,
            allow_boundary_eta: false,
            batch: BatchConfig::default(),
            hbf_damping: default_hbf_damping(),
        }
    }
}

/// `N_k = clamp(round(coefficient·k^exponent), min, max)` for all three
/// estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchConfig {
    #[serde(default = "default_batch_coefficient")]
    pub coefficient: f64,
    #[serde(default = "default_batch_exponent")]
    pub exponent: f64,
    #[serde(default = "one")]
    pub min: usize,
    #[serde(default)]
    pub max: Option<usize>,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self {
            coefficient: default_batch_coefficient(),
            exponent: default_batch_exponent(),
            min: 1,
            max: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorConfig {
    pub scale: f64,
    pub exponent: f64,
}

/// Range of the log-log rate fit reported in summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(default = "default_fit_min")]
    pub k_min: usize,
    /// `max_iter` when absent.
    #[serde(default)]
    pub k_max: Option<usize>,
    #[serde(default = "default_burn_in_fraction")]
    pub burn_in_fraction: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            k_min: default_fit_min(),
            k_max: None,
            burn_in_fraction: default_burn_in_fraction(),
        }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_max_iter() -> usize {
    1000
}
fn one() -> usize {
    1
}
fn default_burn_in() -> usize {
    crate::lyapunov::DEFAULT_BURN_IN
}
fn default_alpha() -> f64 {
    3.1
}
fn default_eta() -> f64 {
    0.5
}
fn default_hbf_damping() -> f64 {
    0.1
}
fn default_batch_coefficient() -> f64 {
    2.0
}
fn default_batch_exponent() -> f64 {
    2.0
}
fn default_fit_min() -> usize {
    100
}
fn default_burn_in_fraction() -> f64 {
    super::stats::DEFAULT_BURN_IN_FRACTION
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Applies `key=value` with a dotted key into the serialized config.
    /// The key must already exist; the value is parsed as JSON, falling back
    /// to a string.
    pub fn with_override(&self, assignment: &str) -> Result<Self> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not KEY=VALUE")))?;
        let mut doc = serde_json::to_value(self)?;
        let mut slot = &mut doc;
        for part in key.split('.') {
            slot = match slot {
                Value::Object(map) => map.get_mut(part),
                Value::Array(items) => part.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
                _ => None,
            }
            .ok_or_else(|| Error::Config(format!("unknown config key `{key}`")))?;
        }
        *slot = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        serde_json::from_value(doc).map_err(|e| Error::Config(format!("{key}: {e}")))
    }

    /// Fit range with `k_max` resolved.
    pub fn fit_range(&self) -> (usize, usize) {
        (self.fit.k_min, self.fit.k_max.unwrap_or(self.max_iter))
    }

    pub fn gradient_kind(&self) -> GradientKind {
        self.gradient
            .unwrap_or(match (self.algorithm, &self.problem) {
                (Algorithm::Igahd, _) | (_, ProblemConfig::Quadratic(_)) => GradientKind::Exact,
                _ => GradientKind::Sampled,
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "problem": {"kind": "quadratic", "diagonal": [1.0, 1000.0]},
        "algorithm": "igahd"
    }"#;

    #[test]
    fn defaults() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.schedule.alpha, 3.1);
        assert_eq!(c.seeds, vec![0]);
        assert_eq!(c.gradient_kind(), GradientKind::Exact);
        assert_eq!(c.record_every, 1);
    }

    #[test]
    fn unknown_keys_rejected_at_every_level() {
        for bad in [
            r#"{"problem": {"kind": "quadratic", "diagonal": [1.0]}, "algorithm": "igahd", "extra": 1}"#,
            r#"{"problem": {"kind": "quadratic", "diagonal": [1.0], "typo": 1}, "algorithm": "igahd"}"#,
            r#"{"problem": {"kind": "regression", "dimm": 3}, "algorithm": "sigahd"}"#,
            r#"{"problem": {"kind": "quadratic", "diagonal": [1.0]}, "algorithm": "igahd", "schedule": {"alfa": 3}}"#,
        ] {
            let err = ExperimentConfig::from_json(bad).unwrap_err().to_string();
            assert!(err.contains("unknown field"), "{err}");
        }
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = ExperimentConfig::from_json("{\n  \"algorithm\": 3\n}").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn overrides() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        let d = c.with_override("schedule.alpha=5").unwrap();
        assert_eq!(d.schedule.alpha, 5.0);
        let d = c.with_override("algorithm=sfista").unwrap();
        assert_eq!(d.algorithm, Algorithm::Sfista);
        let d = c.with_override("problem.diagonal.1=10").unwrap();
        let ProblemConfig::Quadratic(q) = &d.problem else {
            unreachable!()
        };
        assert_eq!(q.diagonal.as_deref(), Some(&[1.0, 10.0][..]));
        assert!(c.with_override("schedule.nope=1").is_err());
        assert!(c.with_override("schedule.alpha").is_err());
        assert!(c.with_override("schedule.alpha=\"x\"").is_err());
    }

    #[test]
    fn json_round_trip() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(ExperimentConfig::from_json(&c.to_json()).unwrap(), c);
        let r = r#"{"problem": {"kind": "regression", "dim": 3, "outputs": 2,
                    "condition_number": 1000, "sampling": "pool"}, "algorithm": "sigahd"}"#;
        let c = ExperimentConfig::from_json(r).unwrap();
        assert_eq!(ExperimentConfig::from_json(&c.to_json()).unwrap(), c);
        assert_eq!(c.gradient_kind(), GradientKind::Sampled);
    }
}
