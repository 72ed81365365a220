//! Per-frame post-pose pipeline: track, extract features, gate pairs,
//! classify. Each stage owns its state so the stages can run on separate
//! threads in a chain, or back to back on one.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::eval::{ClipDecisionConfig, ConfusionMatrix};
use crate::forest::{ForestError, ForestModel};
use crate::interaction::{pair_rows, GateConfig, PairSample};
use crate::kinematics::{FeatureHistory, FeatureVector, KinematicsConfig};
use crate::skeleton::{ClipRecord, FrameDetections, Label, Skeleton};
use crate::tracker::{TrackError, Tracker, TrackerConfig};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Track(#[from] TrackError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("model expects {model} features but the {set} feature set gives {pipeline} per pair")]
    FeatureDim { model: usize, pipeline: usize, set: &'static str },
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error("frame {frame}: track id {tid} appears twice")]
    DuplicateTid { frame: u64, tid: u64 },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineConfig {
    pub tracker: TrackerConfig,
    pub kinematics: KinematicsConfig,
    pub gate: GateConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.tracker.validate()?;
        self.kinematics.validate().map_err(PipelineError::Config)?;
        self.gate.validate().map_err(PipelineError::Config)?;
        Ok(())
    }

    pub fn pair_dim(&self) -> usize {
        2 * self.kinematics.feature_set.per_person()
    }

    /// Fails when `model` was trained on a different feature layout.
    pub fn check_model(&self, model: &ForestModel) -> Result<(), PipelineError> {
        if model.feature_dim != self.pair_dim() {
            return Err(PipelineError::FeatureDim {
                model: model.feature_dim,
                pipeline: self.pair_dim(),
                set: match self.kinematics.feature_set {
                    crate::kinematics::FeatureSet::Quad => "quad",
                    crate::kinematics::FeatureSet::Full => "full",
                },
            });
        }
        Ok(())
    }
}

/// Identity stage. Already tracked input (every person carries a `tid`)
/// passes through unchanged; otherwise the greedy tracker assigns ids.
#[derive(Debug)]
pub struct TrackStage {
    tracker: Tracker,
}

impl TrackStage {
    pub fn new(cfg: &TrackerConfig) -> Result<Self, PipelineError> {
        Ok(Self { tracker: Tracker::new(cfg.clone())? })
    }

    pub fn process(&mut self, frame: &FrameDetections) -> Result<Vec<(u64, Skeleton)>, PipelineError> {
        let tracked = if !frame.persons.is_empty() && frame.persons.iter().all(|p| p.tid.is_some()) {
            frame.persons.iter().map(|p| (p.tid.unwrap_or_default(), p.clone())).collect()
        } else {
            self.tracker.step(frame)?
        };
        for (i, (tid, _)) in tracked.iter().enumerate() {
            if tracked[..i].iter().any(|(t, _)| t == tid) {
                return Err(PipelineError::DuplicateTid { frame: frame.frame_idx, tid: *tid });
            }
        }
        Ok(tracked)
    }

    pub fn live_tracks(&self) -> usize {
        self.tracker.tracks().len()
    }
}

/// Feature and gating stage. Keeps one imputation history per track and
/// forgets tracks unseen for longer than the imputation window, which
/// cannot influence later frames.
#[derive(Debug)]
pub struct FeatureStage {
    kcfg: KinematicsConfig,
    gcfg: GateConfig,
    histories: BTreeMap<u64, (u64, FeatureHistory)>,
}

/// One gated pair ready for classification.
#[derive(Debug, Clone, PartialEq)]
pub struct PairRow {
    pub tid_a: u64,
    pub tid_b: u64,
    pub features: Vec<f64>,
}

impl FeatureStage {
    pub fn new(kcfg: &KinematicsConfig, gcfg: &GateConfig) -> Self {
        Self { kcfg: kcfg.clone(), gcfg: gcfg.clone(), histories: BTreeMap::new() }
    }

    pub fn features(&mut self, frame_idx: u64, tracks: &[(u64, Skeleton)]) -> Vec<FeatureVector> {
        let fvs = tracks
            .iter()
            .map(|(tid, s)| {
                let e = self.histories.entry(*tid).or_default();
                e.0 = frame_idx;
                e.1.update(s, frame_idx, &self.kcfg)
            })
            .collect();
        let window = self.kcfg.impute_window;
        self.histories.retain(|_, (last, _)| frame_idx - *last <= window);
        fvs
    }

    pub fn process(&mut self, frame_idx: u64, tracks: &[(u64, Skeleton)]) -> Vec<PairRow> {
        let fvs = self.features(frame_idx, tracks);
        pair_rows(tracks, &fvs, self.kcfg.feature_set, &self.gcfg)
            .into_iter()
            .map(|(tid_a, tid_b, features)| PairRow { tid_a, tid_b, features })
            .collect()
    }

    pub fn tracked_histories(&self) -> usize {
        self.histories.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairPrediction {
    pub tid_a: u64,
    pub tid_b: u64,
    pub pred: Label,
    pub proba: f64,
}

pub fn classify(model: &ForestModel, rows: &[PairRow]) -> Result<Vec<PairPrediction>, ForestError> {
    rows.iter()
        .map(|r| {
            let (pred, proba) = model.predict_with_proba(&r.features)?;
            Ok(PairPrediction { tid_a: r.tid_a, tid_b: r.tid_b, pred, proba })
        })
        .collect()
}

/// A frame is gated when it has at least one classified pair, and
/// predicted Push when any of its pairs is.
pub fn frame_label(preds: &[PairPrediction]) -> Option<Label> {
    if preds.is_empty() {
        None
    } else if preds.iter().any(|p| p.pred == Label::Push) {
        Some(Label::Push)
    } else {
        Some(Label::Normal)
    }
}

/// Predicted labels of the gated frames of one clip, in frame order.
pub fn clip_frame_labels(
    model: &ForestModel,
    clip: &ClipRecord,
    cfg: &PipelineConfig,
) -> Result<Vec<(u64, Label)>, PipelineError> {
    let mut track = TrackStage::new(&cfg.tracker)?;
    let mut feat = FeatureStage::new(&cfg.kinematics, &cfg.gate);
    let mut out = Vec::new();
    for frame in &clip.frames {
        let tracks = track.process(frame)?;
        let rows = feat.process(frame.frame_idx, &tracks);
        if let Some(l) = frame_label(&classify(model, &rows)?) {
            out.push((frame.frame_idx, l));
        }
    }
    Ok(out)
}

/// Labeled pair samples of one clip, tracking it first when needed.
pub fn clip_pair_samples(clip: &ClipRecord, cfg: &PipelineConfig) -> Result<Vec<PairSample>, PipelineError> {
    let mut track = TrackStage::new(&cfg.tracker)?;
    let mut feat = FeatureStage::new(&cfg.kinematics, &cfg.gate);
    let mut out = Vec::new();
    for frame in &clip.frames {
        let tracks = track.process(frame)?;
        for r in feat.process(frame.frame_idx, &tracks) {
            out.push(PairSample {
                clip_id: clip.clip_id.clone(),
                frame_idx: frame.frame_idx,
                tid_a: r.tid_a,
                tid_b: r.tid_b,
                features: r.features,
                label: clip.label,
            });
        }
    }
    Ok(out)
}

/// Training matrix from the pair samples of labeled clips, in clip order.
pub fn training_set(clips: &[&ClipRecord], cfg: &PipelineConfig) -> Result<(Vec<Vec<f64>>, Vec<Label>), PipelineError> {
    use rayon::prelude::*;
    cfg.validate()?;
    let per_clip: Vec<Vec<PairSample>> =
        clips.par_iter().map(|c| clip_pair_samples(c, cfg)).collect::<Result<_, _>>()?;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for s in per_clip.into_iter().flatten() {
        let label = s.label.ok_or_else(|| PipelineError::Config(format!("clip {} has no label", s.clip_id)))?;
        x.push(s.features);
        y.push(label);
    }
    Ok((x, y))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClipOutcome {
    pub clip_id: String,
    pub truth: Label,
    pub pred: Label,
    pub gated_frames: usize,
    pub push_frames: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub clips: Vec<ClipOutcome>,
    pub clip_level: ConfusionMatrix,
    /// Gated frames, each carrying its clip's label as truth.
    pub frame_level: ConfusionMatrix,
}

/// Clip- and frame-level evaluation of labeled clips.
pub fn evaluate(
    model: &ForestModel,
    clips: &[&ClipRecord],
    cfg: &PipelineConfig,
    decision: &ClipDecisionConfig,
) -> Result<Evaluation, PipelineError> {
    use rayon::prelude::*;
    cfg.validate()?;
    cfg.check_model(model)?;
    let per_clip: Vec<(ClipOutcome, Vec<Label>)> = clips
        .par_iter()
        .map(|clip| {
            let truth = clip.label.ok_or_else(|| PipelineError::Config(format!("clip {} has no label", clip.clip_id)))?;
            let frames: Vec<Label> = clip_frame_labels(model, clip, cfg)?.into_iter().map(|(_, l)| l).collect();
            let push_frames = frames.iter().filter(|l| **l == Label::Push).count();
            let outcome = ClipOutcome {
                clip_id: clip.clip_id.clone(),
                truth,
                pred: decision.decide(push_frames, frames.len()),
                gated_frames: frames.len(),
                push_frames,
            };
            Ok((outcome, frames))
        })
        .collect::<Result<_, PipelineError>>()?;
    let mut clip_level = ConfusionMatrix::default();
    let mut frame_level = ConfusionMatrix::default();
    for (o, frames) in &per_clip {
        clip_level.add(o.truth, o.pred);
        for l in frames {
            frame_level.add(o.truth, *l);
        }
    }
    Ok(Evaluation { clips: per_clip.into_iter().map(|(o, _)| o).collect(), clip_level, frame_level })
}
