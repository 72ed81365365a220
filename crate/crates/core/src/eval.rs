//! Dataset splitting, the clip-level decision rule and confusion-matrix
//! metrics.

use serde::Serialize;
use thiserror::Error;

use crate::rng::SplitMix64;
use crate::skeleton::{ClipRecord, Label};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("class {0} has {1} clips, need at least 3 for a stratified split")]
    ClassTooSmall(Label, usize),
    #[error("clip {0} has no label")]
    Unlabeled(String),
    #[error("{truth} true labels but {pred} predictions")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("no labels to evaluate")]
    Empty,
    #[error("tau_clip {0} outside (0, 1]")]
    InvalidTau(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train: 0.8, val: 0.1, test: 0.1, seed: 42, stratified: true }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        let f = [self.train, self.val, self.test];
        if f.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(EvalError::InvalidSplit(format!("fractions must be positive, got {f:?}")));
        }
        if (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(EvalError::InvalidSplit(format!("fractions sum to {}", f.iter().sum::<f64>())));
        }
        Ok(())
    }

    fn fractions(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }
}

/// Indices into the input, per bucket, in ascending order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Largest-remainder apportionment of `n` items over `fractions`. Equal
/// remainders (within 1e-9) go to the bucket with the smaller `running`
/// total, then to the lower bucket.
fn apportion(n: usize, fractions: &[f64; 3], running: &[usize; 3]) -> [usize; 3] {
    let quotas: Vec<f64> = fractions.iter().map(|f| n as f64 * f).collect();
    let mut out = [0usize; 3];
    for (o, q) in out.iter_mut().zip(&quotas) {
        *o = (q + 1e-9).floor() as usize;
    }
    let mut left = n.saturating_sub(out.iter().sum());
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - out[a] as f64;
        let rb = quotas[b] - out[b] as f64;
        if (ra - rb).abs() > 1e-9 {
            rb.total_cmp(&ra)
        } else {
            running[a].cmp(&running[b]).then(a.cmp(&b))
        }
    });
    for &b in order.iter().cycle() {
        if left == 0 {
            break;
        }
        out[b] += 1;
        left -= 1;
    }
    out
}

/// Seeded partition of labeled items into train/val/test. Stratified
/// splits shuffle each class on its own stream (Normal then Push) and slice
/// it contiguously; otherwise all items are shuffled together.
pub fn split_indices(labels: &[Label], spec: &SplitSpec) -> Result<Split, EvalError> {
    spec.validate()?;
    let groups: Vec<Vec<usize>> = if spec.stratified {
        [Label::Normal, Label::Push]
            .iter()
            .map(|l| (0..labels.len()).filter(|&i| labels[i] == *l).collect())
            .collect()
    } else {
        vec![(0..labels.len()).collect()]
    };
    if spec.stratified {
        for (g, l) in groups.iter().zip([Label::Normal, Label::Push]) {
            if g.len() < 3 {
                return Err(EvalError::ClassTooSmall(l, g.len()));
            }
        }
    }
    let mut running = [0usize; 3];
    let mut buckets: [Vec<usize>; 3] = Default::default();
    for (stream, mut g) in groups.into_iter().enumerate() {
        SplitMix64::for_stream(spec.seed, stream as u64).shuffle(&mut g);
        let counts = apportion(g.len(), &spec.fractions(), &running);
        let mut start = 0;
        for b in 0..3 {
            buckets[b].extend_from_slice(&g[start..start + counts[b]]);
            start += counts[b];
            running[b] += counts[b];
        }
    }
    for b in &mut buckets {
        b.sort_unstable();
    }
    let [train, val, test] = buckets;
    Ok(Split { train, val, test })
}

pub fn split_clips(clips: &[ClipRecord], spec: &SplitSpec) -> Result<Split, EvalError> {
    let labels = clips
        .iter()
        .map(|c| c.label.ok_or_else(|| EvalError::Unlabeled(c.clip_id.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    split_indices(&labels, spec)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClipDecisionConfig {
    pub tau_clip: f64,
}

impl Default for ClipDecisionConfig {
    fn default() -> Self {
        Self { tau_clip: 0.3 }
    }
}

impl ClipDecisionConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !(self.tau_clip > 0.0 && self.tau_clip <= 1.0) {
            return Err(EvalError::InvalidTau(self.tau_clip));
        }
        Ok(())
    }

    /// Push iff `push / total >= tau_clip`; no gated frames means Normal.
    pub fn decide(&self, push: usize, total: usize) -> Label {
        if total > 0 && push as f64 / total as f64 >= self.tau_clip {
            Label::Push
        } else {
            Label::Normal
        }
    }
}

pub fn decide_clip(frame_preds: &[Label], cfg: &ClipDecisionConfig) -> Label {
    let push = frame_preds.iter().filter(|l| **l == Label::Push).count();
    cfg.decide(push, frame_preds.len())
}

/// Counts indexed `[true][pred]` over (Normal, Push).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 2]; 2],
}

impl ConfusionMatrix {
    pub fn from_counts(counts: [[u64; 2]; 2]) -> Self {
        Self { counts }
    }

    pub fn add(&mut self, truth: Label, pred: Label) {
        self.counts[truth.index()][pred.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Each row divided by its total; a row with no samples is `None`.
    pub fn normalize_rows(&self) -> [Option<[f64; 2]>; 2] {
        self.counts.map(|row| {
            let t = row[0] + row[1];
            (t > 0).then(|| [row[0] as f64 / t as f64, row[1] as f64 / t as f64])
        })
    }

    /// Precision and recall of the Push class; `None` when undefined.
    pub fn precision_recall(&self) -> (Option<f64>, Option<f64>) {
        let tp = self.counts[1][1];
        let fp = self.counts[0][1];
        let fn_ = self.counts[1][0];
        let ratio = |n: u64, d: u64| (d > 0).then(|| n as f64 / d as f64);
        (ratio(tp, tp + fp), ratio(tp, tp + fn_))
    }

    /// Row-normalized matrix at two decimals, `undef` for empty rows.
    pub fn render_normalized(&self) -> String {
        let mut s = String::from("            pred normal  pred push\n");
        for (label, row) in ["true normal", "true push  "].iter().zip(self.normalize_rows()) {
            match row {
                Some([a, b]) => s.push_str(&format!("{label} {a:>11.2} {b:>10.2}\n")),
                None => s.push_str(&format!("{label} {:>11} {:>10}\n", "undef", "undef")),
            }
        }
        s
    }
}

pub fn confusion(truth: &[Label], pred: &[Label]) -> Result<ConfusionMatrix, EvalError> {
    if truth.len() != pred.len() {
        return Err(EvalError::LengthMismatch { truth: truth.len(), pred: pred.len() });
    }
    if truth.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut cm = ConfusionMatrix::default();
    for (t, p) in truth.iter().zip(pred) {
        cm.add(*t, *p);
    }
    Ok(cm)
}

/// Two-decimal rendering used in reports; `None` prints as `undef`.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undef".to_string(), |x| format!("{x:.2}"))
}
