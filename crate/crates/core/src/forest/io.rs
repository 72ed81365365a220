//! Model file format: one JSON object with a fixed key order, floats in
//! shortest round-trip form, and trees as preorder node arrays.

use serde::{Deserialize, Serialize};

use super::{DecisionTree, ForestError, ForestModel, ModelParams, Node};
use crate::rng::RNG_NAME;

pub const FORMAT_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NodeRepr {
    Split { f: usize, t: f64, r: usize },
    Leaf { c: [u32; 2] },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelRepr {
    format_version: u64,
    rng: String,
    params: ModelParams,
    feature_dim: usize,
    feature_names: Vec<String>,
    trees: Vec<Vec<NodeRepr>>,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u64,
}

pub(super) fn save(m: &ForestModel) -> Vec<u8> {
    let repr = ModelRepr {
        format_version: FORMAT_VERSION,
        rng: RNG_NAME.into(),
        params: m.params.clone(),
        feature_dim: m.feature_dim,
        feature_names: m.feature_names.clone(),
        trees: m
            .trees
            .iter()
            .map(|t| {
                t.nodes
                    .iter()
                    .map(|n| match *n {
                        Node::Split { feature, threshold, right } => NodeRepr::Split { f: feature, t: threshold, r: right },
                        Node::Leaf { counts } => NodeRepr::Leaf { c: counts },
                    })
                    .collect()
            })
            .collect(),
    };
    let mut out = serde_json::to_vec(&repr).expect("model serializes");
    out.push(b'\n');
    out
}

pub(super) fn load(bytes: &[u8]) -> Result<ForestModel, ForestError> {
    let fmt = |e: serde_json::Error| ForestError::Format(e.to_string());
    let probe: VersionProbe = serde_json::from_slice(bytes).map_err(fmt)?;
    if probe.format_version != FORMAT_VERSION {
        return Err(ForestError::UnsupportedVersion(probe.format_version));
    }
    let repr: ModelRepr = serde_json::from_slice(bytes).map_err(fmt)?;
    if repr.rng != RNG_NAME {
        return Err(ForestError::Format(format!("unknown rng {:?}", repr.rng)));
    }
    let p = &repr.params;
    if repr.feature_dim == 0 || repr.feature_names.len() != repr.feature_dim {
        return Err(ForestError::Format(format!(
            "feature_dim {} with {} feature names",
            repr.feature_dim,
            repr.feature_names.len()
        )));
    }
    if repr.trees.len() != p.n_trees || p.n_trees == 0 {
        return Err(ForestError::Format(format!("{} trees, params say {}", repr.trees.len(), p.n_trees)));
    }
    if p.criterion != "gini" || p.threshold_rule != "midpoint" {
        return Err(ForestError::Format("unsupported criterion or threshold rule".into()));
    }
    let trees: Vec<DecisionTree> = repr
        .trees
        .into_iter()
        .map(|nodes| DecisionTree {
            nodes: nodes
                .into_iter()
                .map(|n| match n {
                    NodeRepr::Split { f, t, r } => Node::Split { feature: f, threshold: t, right: r },
                    NodeRepr::Leaf { c } => Node::Leaf { counts: c },
                })
                .collect(),
        })
        .collect();
    for (i, t) in trees.iter().enumerate() {
        t.validate(repr.feature_dim, p.min_samples_leaf)
            .map_err(|e| ForestError::Format(format!("tree {i}: {e}")))?;
    }
    Ok(ForestModel { params: repr.params, feature_dim: repr.feature_dim, feature_names: repr.feature_names, trees })
}
