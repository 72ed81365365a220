//! Binary CART classification tree grown on Gini impurity.
//!
//! Nodes are stored in preorder: a split's left child immediately follows
//! it and `right` holds the index of its right child. Growth is iterative,
//! visits nodes in that same preorder, and draws feature subsets from the
//! caller's generator only at nodes that attempt a split.

use crate::rng::SplitMix64;
use crate::skeleton::Label;

use super::ForestError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Split { feature: usize, threshold: f64, right: usize },
    Leaf { counts: [u32; 2] },
}

impl Node {
    /// Majority class of a leaf; ties go to Normal.
    pub fn leaf_label(counts: [u32; 2]) -> Label {
        if counts[1] > counts[0] {
            Label::Push
        } else {
            Label::Normal
        }
    }
}

/// Gini impurity `1 - p0^2 - p1^2` of a two-class count pair.
pub fn gini(counts: [u64; 2]) -> Result<f64, ForestError> {
    let n = counts[0] + counts[1];
    if n == 0 {
        return Err(ForestError::EmptyNode);
    }
    let p0 = counts[0] as f64 / n as f64;
    let p1 = counts[1] as f64 / n as f64;
    Ok(1.0 - p0 * p0 - p1 * p1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: usize,
    pub max_depth: Option<usize>,
}

/// Candidate split quality. Minimizing weighted child Gini is the same as
/// maximizing `(l0^2 + l1^2) / nl + (r0^2 + r1^2) / nr`, kept here as an
/// exact fraction so that ties are exact.
#[derive(Debug, Clone, Copy)]
struct Score {
    num: u128,
    den: u128,
}

impl Score {
    fn new(left: [u64; 2], right: [u64; 2]) -> Score {
        let nl = (left[0] + left[1]) as u128;
        let nr = (right[0] + right[1]) as u128;
        let sl = (left[0] as u128).pow(2) + (left[1] as u128).pow(2);
        let sr = (right[0] as u128).pow(2) + (right[1] as u128).pow(2);
        Score { num: sl * nr + sr * nl, den: nl * nr }
    }

    fn better_than(&self, other: &Score) -> bool {
        self.num * other.den > other.num * self.den
    }
}

#[derive(Debug, Clone, Copy)]
struct BestSplit {
    feature: usize,
    threshold: f64,
    score: Score,
}

/// Midpoint strictly below `b` so that `a` goes left and `b` goes right.
fn midpoint(a: f64, b: f64) -> f64 {
    let m = a * 0.5 + b * 0.5;
    if m < b && m >= a {
        m
    } else {
        a
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

struct Task {
    samples: Vec<usize>,
    depth: usize,
    /// Split node whose `right` field points at this task's node.
    patch_parent: Option<usize>,
}

impl DecisionTree {
    /// Grows a tree on `samples` (row indices, repeats allowed).
    pub fn grow(
        x: &[Vec<f64>],
        y: &[Label],
        samples: Vec<usize>,
        params: &TreeParams,
        rng: &mut SplitMix64,
    ) -> DecisionTree {
        let d = x.first().map_or(0, Vec::len);
        let mut nodes: Vec<Node> = Vec::new();
        let mut stack = vec![Task { samples, depth: 0, patch_parent: None }];
        let mut sorted: Vec<(f64, Label)> = Vec::new();
        while let Some(task) = stack.pop() {
            let idx = nodes.len();
            if let Some(parent) = task.patch_parent {
                if let Node::Split { right, .. } = &mut nodes[parent] {
                    *right = idx;
                }
            }
            let mut counts = [0u64; 2];
            for &s in &task.samples {
                counts[y[s].index()] += 1;
            }
            let n = task.samples.len();
            let leaf = Node::Leaf { counts: [counts[0] as u32, counts[1] as u32] };
            let stop = counts[0] == 0
                || counts[1] == 0
                || n < params.min_samples_split
                || params.max_depth.is_some_and(|m| task.depth >= m);
            if stop {
                nodes.push(leaf);
                continue;
            }

            let features = rng.sample_distinct(d, params.max_features.min(d));
            let mut best: Option<BestSplit> = None;
            for &f in &features {
                sorted.clear();
                sorted.extend(task.samples.iter().map(|&s| (x[s][f], y[s])));
                sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut left = [0u64; 2];
                for i in 0..n - 1 {
                    left[sorted[i].1.index()] += 1;
                    if sorted[i].0 == sorted[i + 1].0 {
                        continue;
                    }
                    let nl = i + 1;
                    if nl < params.min_samples_leaf || n - nl < params.min_samples_leaf {
                        continue;
                    }
                    let right = [counts[0] - left[0], counts[1] - left[1]];
                    let score = Score::new(left, right);
                    // Features and thresholds are visited in increasing
                    // order, so only a strictly better score replaces.
                    if best.as_ref().is_none_or(|b| score.better_than(&b.score)) {
                        best = Some(BestSplit {
                            feature: f,
                            threshold: midpoint(sorted[i].0, sorted[i + 1].0),
                            score,
                        });
                    }
                }
            }

            let Some(split) = best else {
                nodes.push(leaf);
                continue;
            };
            let (l, r): (Vec<usize>, Vec<usize>) =
                task.samples.iter().partition(|&&s| x[s][split.feature] <= split.threshold);
            nodes.push(Node::Split { feature: split.feature, threshold: split.threshold, right: 0 });
            stack.push(Task { samples: r, depth: task.depth + 1, patch_parent: Some(idx) });
            stack.push(Task { samples: l, depth: task.depth + 1, patch_parent: None });
        }
        DecisionTree { nodes }
    }

    /// Class counts of the leaf reached by `row`.
    pub fn leaf_counts(&self, row: &[f64]) -> [u32; 2] {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { counts } => return counts,
                Node::Split { feature, threshold, right } => {
                    i = if row[feature] <= threshold { i + 1 } else { right };
                }
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> Label {
        Node::leaf_label(self.leaf_counts(row))
    }

    pub fn depth(&self) -> usize {
        let mut max = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((i, d)) = stack.pop() {
            max = max.max(d);
            if let Node::Split { right, .. } = self.nodes[i] {
                stack.push((right, d + 1));
                stack.push((i + 1, d + 1));
            }
        }
        max
    }

    /// Checks the preorder layout and feature bounds.
    pub fn validate(&self, feature_dim: usize, min_leaf: usize) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("empty tree".into());
        }
        let mut expected = 0usize;
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            if i != expected || i >= self.nodes.len() {
                return Err(format!("node {i} out of preorder position {expected}"));
            }
            expected += 1;
            match self.nodes[i] {
                Node::Leaf { counts } => {
                    let total = counts[0] as usize + counts[1] as usize;
                    if total < min_leaf.max(1) {
                        return Err(format!("leaf {i} holds {total} samples"));
                    }
                }
                Node::Split { feature, threshold, right } => {
                    if feature >= feature_dim {
                        return Err(format!("node {i} splits on feature {feature} >= {feature_dim}"));
                    }
                    if !threshold.is_finite() {
                        return Err(format!("node {i} has a non-finite threshold"));
                    }
                    if right <= i + 1 || right >= self.nodes.len() {
                        return Err(format!("node {i} has right child {right}"));
                    }
                    stack.push(right);
                    stack.push(i + 1);
                }
            }
        }
        if expected != self.nodes.len() {
            return Err(format!("{} unreachable nodes", self.nodes.len() - expected));
        }
        Ok(())
    }
}
