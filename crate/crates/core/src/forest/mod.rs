//! Deterministic random forest for the two-class push/normal decision.
//!
//! Tree `i` draws its bootstrap sample (`n` draws of `below(n)`) and then
//! its per-node feature subsets from `SplitMix64::for_stream(seed, i)`, so
//! trees can be grown in any order or in parallel and the model bytes only
//! depend on the samples and parameters.
//!
//! Defaults not fixed by the classifier's published configuration
//! (criterion, thresholds, `max_features`, depth) are recorded in the model
//! file's `params` block.

mod io;
pub mod tree;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SplitMix64;
use crate::skeleton::Label;

pub use io::FORMAT_VERSION;
pub use tree::{gini, DecisionTree, Node, TreeParams};

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("invalid forest parameters: {0}")]
    InvalidParams(String),
    #[error("need at least 2 training samples, got {0}")]
    TooFewSamples(usize),
    #[error("training data contains a single class")]
    SingleClass,
    #[error("sample {row}, feature {col} is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{features} feature rows but {labels} labels")]
    LabelCount { features: usize, labels: usize },
    #[error("gini of an empty node")]
    EmptyNode,
    #[error("model format error: {0}")]
    Format(String),
    #[error("unsupported model format_version {0}")]
    UnsupportedVersion(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub seed: u64,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// `None` means `floor(sqrt(d))`, at least 1.
    pub max_features: Option<usize>,
    pub max_depth: Option<usize>,
    /// Bootstrap resampling per tree; off grows every tree on the full set.
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            seed: 42,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: None,
            max_depth: None,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn resolved_max_features(&self, d: usize) -> usize {
        self.max_features.unwrap_or_else(|| ((d as f64).sqrt().floor() as usize).max(1))
    }

    fn validate(&self, d: usize) -> Result<(), ForestError> {
        let bad = |m: String| Err(ForestError::InvalidParams(m));
        if self.n_trees < 1 {
            return bad("n_trees must be at least 1".into());
        }
        if self.min_samples_split < 2 {
            return bad("min_samples_split must be at least 2".into());
        }
        if self.min_samples_leaf < 1 {
            return bad("min_samples_leaf must be at least 1".into());
        }
        let mf = self.resolved_max_features(d);
        if mf < 1 || mf > d {
            return bad(format!("max_features {mf} outside 1..={d}"));
        }
        Ok(())
    }
}

/// Parameters as stored in a model file, with every default resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub n_trees: usize,
    pub seed: u64,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: usize,
    pub max_features_rule: String,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
    pub criterion: String,
    pub threshold_rule: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub params: ModelParams,
    pub feature_dim: usize,
    pub feature_names: Vec<String>,
    pub trees: Vec<DecisionTree>,
}

fn validate_rows(x: &[Vec<f64>], d: usize) -> Result<(), ForestError> {
    for (row, r) in x.iter().enumerate() {
        if r.len() != d {
            return Err(ForestError::DimensionMismatch { expected: d, got: r.len() });
        }
        if let Some(col) = r.iter().position(|v| !v.is_finite()) {
            return Err(ForestError::NonFinite { row, col });
        }
    }
    Ok(())
}

fn grow_tree(x: &[Vec<f64>], y: &[Label], params: &ForestParams, tp: &TreeParams, i: usize) -> DecisionTree {
    let mut rng = SplitMix64::for_stream(params.seed, i as u64);
    let n = x.len();
    let samples: Vec<usize> = if params.bootstrap {
        (0..n).map(|_| rng.below_usize(n)).collect()
    } else {
        (0..n).collect()
    };
    DecisionTree::grow(x, y, samples, tp, &mut rng)
}

impl ForestModel {
    /// Trains on rows `x` with labels `y`. Trees are grown on the current
    /// rayon pool; the result is identical for any thread count.
    pub fn fit(x: &[Vec<f64>], y: &[Label], params: &ForestParams) -> Result<ForestModel, ForestError> {
        if x.len() != y.len() {
            return Err(ForestError::LabelCount { features: x.len(), labels: y.len() });
        }
        if x.len() < 2 {
            return Err(ForestError::TooFewSamples(x.len()));
        }
        let d = x[0].len();
        if d == 0 {
            return Err(ForestError::InvalidParams("feature dimension is zero".into()));
        }
        validate_rows(x, d)?;
        if !(y.contains(&Label::Normal) && y.contains(&Label::Push)) {
            return Err(ForestError::SingleClass);
        }
        params.validate(d)?;
        let tp = TreeParams {
            min_samples_split: params.min_samples_split,
            min_samples_leaf: params.min_samples_leaf,
            max_features: params.resolved_max_features(d),
            max_depth: params.max_depth,
        };
        let trees: Vec<DecisionTree> = (0..params.n_trees)
            .into_par_iter()
            .map(|i| grow_tree(x, y, params, &tp, i))
            .collect();
        Ok(ForestModel {
            params: ModelParams {
                n_trees: params.n_trees,
                seed: params.seed,
                min_samples_split: params.min_samples_split,
                min_samples_leaf: params.min_samples_leaf,
                max_features: tp.max_features,
                max_features_rule: if params.max_features.is_some() { "explicit" } else { "sqrt" }.into(),
                max_depth: params.max_depth,
                bootstrap: params.bootstrap,
                criterion: "gini".into(),
                threshold_rule: "midpoint".into(),
            },
            feature_dim: d,
            feature_names: (1..=d).map(|i| format!("f{i}")).collect(),
            trees,
        })
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self, ForestError> {
        if names.len() != self.feature_dim {
            return Err(ForestError::DimensionMismatch { expected: self.feature_dim, got: names.len() });
        }
        self.feature_names = names;
        Ok(self)
    }

    fn check_row(&self, row: &[f64]) -> Result<(), ForestError> {
        if row.len() != self.feature_dim {
            return Err(ForestError::DimensionMismatch { expected: self.feature_dim, got: row.len() });
        }
        if let Some(col) = row.iter().position(|v| !v.is_finite()) {
            return Err(ForestError::NonFinite { row: 0, col });
        }
        Ok(())
    }

    /// Number of trees voting Push.
    pub fn push_votes(&self, row: &[f64]) -> Result<usize, ForestError> {
        self.check_row(row)?;
        Ok(self.trees.iter().filter(|t| t.predict(row) == Label::Push).count())
    }

    /// Fraction of trees voting Push.
    pub fn predict_proba(&self, row: &[f64]) -> Result<f64, ForestError> {
        Ok(self.push_votes(row)? as f64 / self.trees.len() as f64)
    }

    /// Majority vote; an even split goes to Normal.
    pub fn predict(&self, row: &[f64]) -> Result<Label, ForestError> {
        let push = self.push_votes(row)?;
        Ok(if 2 * push > self.trees.len() { Label::Push } else { Label::Normal })
    }

    /// Prediction and Push fraction from a single pass over the trees.
    pub fn predict_with_proba(&self, row: &[f64]) -> Result<(Label, f64), ForestError> {
        let push = self.push_votes(row)?;
        let n = self.trees.len();
        let label = if 2 * push > n { Label::Push } else { Label::Normal };
        Ok((label, push as f64 / n as f64))
    }

    pub fn save(&self) -> Vec<u8> {
        io::save(self)
    }

    pub fn load(bytes: &[u8]) -> Result<ForestModel, ForestError> {
        io::load(bytes)
    }
}
