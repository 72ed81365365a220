//! Effective configuration: defaults, then `--config` file entries, then
//! command-line flags. File and flags share the same `key=value` parser.

use std::fmt;
use std::path::Path;

use pushwatch_core::eval::{ClipDecisionConfig, SplitSpec};
use pushwatch_core::forest::ForestParams;
use pushwatch_core::interaction::GateConfig;
use pushwatch_core::kinematics::{FeatureSet, KinematicsConfig};
use pushwatch_core::pipeline::PipelineConfig;
use pushwatch_core::stream::{AlertMode, RunConfig};
use pushwatch_core::tracker::TrackerConfig;

/// Configuration or model problem; exits with code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Default)]
pub struct Settings {
    pub tracker: TrackerConfig,
    pub kinematics: KinematicsConfig,
    /// Set when the feature set was chosen explicitly rather than defaulted.
    pub feature_set_explicit: bool,
    pub gate: GateConfig,
    pub decision: ClipDecisionConfig,
    pub forest: ForestParams,
    pub split: SplitSpec,
    pub alert_mode: AlertMode,
    pub window_frames: Option<usize>,
    pub min_gated: Option<usize>,
    pub threads: usize,
}

pub const KEYS: &[&str] = &[
    "iou_min",
    "max_age",
    "history_cap",
    "kp_conf_min",
    "impute_window",
    "features",
    "kappa",
    "tau_clip",
    "trees",
    "seed",
    "min_samples_split",
    "min_samples_leaf",
    "max_features",
    "max_depth",
    "bootstrap",
    "split",
    "split_seed",
    "stratified",
    "alert_mode",
    "window_frames",
    "min_gated",
    "threads",
];

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    v.parse().map_err(|e| format!("{key}: cannot parse {v:?}: {e}"))
}

fn optional<T: std::str::FromStr>(key: &str, v: &str) -> Result<Option<T>, String>
where
    T::Err: fmt::Display,
{
    match v {
        "none" | "auto" => Ok(None),
        _ => num(key, v).map(Some),
    }
}

impl Settings {
    pub fn new() -> Self {
        Self { threads: 1, ..Default::default() }
    }

    pub fn apply(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "iou_min" => self.tracker.iou_min = num(key, v)?,
            "max_age" => self.tracker.max_age = num(key, v)?,
            "history_cap" => self.tracker.history_cap = num(key, v)?,
            "kp_conf_min" => self.kinematics.kp_conf_min = num(key, v)?,
            "impute_window" => self.kinematics.impute_window = num(key, v)?,
            "features" => {
                let n: usize = num(key, v)?;
                self.kinematics.feature_set =
                    FeatureSet::from_count(n).ok_or_else(|| format!("features must be 4 or 9, got {n}"))?;
                self.feature_set_explicit = true;
            }
            "kappa" => self.gate.kappa = num(key, v)?,
            "tau_clip" => self.decision.tau_clip = num(key, v)?,
            "trees" => self.forest.n_trees = num(key, v)?,
            "seed" => self.forest.seed = num(key, v)?,
            "min_samples_split" => self.forest.min_samples_split = num(key, v)?,
            "min_samples_leaf" => self.forest.min_samples_leaf = num(key, v)?,
            "max_features" => self.forest.max_features = optional(key, v)?,
            "max_depth" => self.forest.max_depth = optional(key, v)?,
            "bootstrap" => self.forest.bootstrap = num(key, v)?,
            "split" => {
                let parts = v.split(',').map(|p| num::<f64>(key, p.trim())).collect::<Result<Vec<_>, _>>()?;
                let [train, val, test] = parts[..] else {
                    return Err(format!("split needs three fractions, got {v:?}"));
                };
                self.split.train = train;
                self.split.val = val;
                self.split.test = test;
            }
            "split_seed" => self.split.seed = num(key, v)?,
            "stratified" => self.split.stratified = num(key, v)?,
            "alert_mode" => {
                self.alert_mode = match v {
                    "per-frame" => AlertMode::PerFrame,
                    "per-window" => AlertMode::PerWindow,
                    _ => return Err(format!("alert_mode must be per-frame or per-window, got {v:?}")),
                }
            }
            "window_frames" => self.window_frames = Some(num(key, v)?),
            "min_gated" => self.min_gated = Some(num(key, v)?),
            "threads" => self.threads = num(key, v)?,
            _ => return Err(format!("unknown key {key:?} (known: {})", KEYS.join(", "))),
        }
        Ok(())
    }

    /// Applies a `key=value` file: one entry per line, `#` comments.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), String> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| format!("line {}: expected key=value", i + 1))?;
            self.apply(k.trim(), v.trim()).map_err(|e| format!("line {}: {e}", i + 1))?;
        }
        Ok(())
    }

    pub fn apply_flags(&mut self, flags: &[(&str, Option<String>)]) -> Result<(), ConfigError> {
        for (k, v) in flags {
            if let Some(v) = v {
                self.apply(k, v).map_err(ConfigError)?;
            }
        }
        Ok(())
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig { tracker: self.tracker.clone(), kinematics: self.kinematics.clone(), gate: self.gate.clone() }
    }

    pub fn run_config(&self) -> RunConfig {
        let d = RunConfig::default();
        RunConfig {
            pipeline: self.pipeline(),
            decision: self.decision.clone(),
            alert_mode: self.alert_mode,
            window_frames: self.window_frames.unwrap_or(d.window_frames),
            min_gated: self.min_gated.unwrap_or(d.min_gated),
        }
    }

    /// Uses the model's feature layout unless one was configured; a
    /// configured layout must match the model.
    pub fn adopt_model_features(&mut self, feature_dim: usize) -> Result<(), ConfigError> {
        let from_model = (feature_dim % 2 == 0).then(|| FeatureSet::from_count(feature_dim / 2)).flatten();
        match from_model {
            None => Err(ConfigError(format!("model has {feature_dim} features; expected 8 or 18"))),
            Some(set) if self.feature_set_explicit && set != self.kinematics.feature_set => Err(ConfigError(format!(
                "model has {feature_dim} features but features={} was configured",
                self.kinematics.feature_set.per_person()
            ))),
            Some(set) => {
                self.kinematics.feature_set = set;
                Ok(())
            }
        }
    }
}
