//! Two-person gating: only pairs of distinct, nearby tracked subjects are
//! ever classified.
//!
//! Two subjects are a candidate pair when their bbox centroids are closer
//! than `kappa` times the taller of the two boxes. Within a pair, `a` is
//! the subject whose centroid is further left (lower track id on a tie), so
//! the concatenated feature row does not depend on input order.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::kinematics::{FeatureHistory, FeatureSet, FeatureVector, KinematicsConfig};
use crate::skeleton::{ClipRecord, Label, Skeleton};

#[derive(Debug, Clone, PartialEq)]
pub struct GateConfig {
    pub kappa: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self { kappa: 1.5 }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(format!("kappa must be positive, got {}", self.kappa));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InteractionError {
    #[error("frame {frame}: person {index} has no track id")]
    Untracked { frame: u64, index: usize },
    #[error("frame {frame}: track id {tid} appears twice")]
    DuplicateTid { frame: u64, tid: u64 },
}

/// A classified unit: two subjects in one frame, features of `a` followed
/// by features of `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSample {
    pub clip_id: String,
    pub frame_idx: u64,
    pub tid_a: u64,
    pub tid_b: u64,
    pub features: Vec<f64>,
    pub label: Option<Label>,
}

fn ordered<'a>(x: (u64, &'a Skeleton), y: (u64, &'a Skeleton)) -> ((u64, &'a Skeleton), (u64, &'a Skeleton)) {
    let cx = x.1.bbox.centroid().x;
    let cy = y.1.bbox.centroid().x;
    if cx < cy || (cx == cy && x.0 < y.0) {
        (x, y)
    } else {
        (y, x)
    }
}

/// Whether two subjects are close enough to interact.
pub fn within_gate(a: &Skeleton, b: &Skeleton, cfg: &GateConfig) -> bool {
    let ca = a.bbox.centroid();
    let cb = b.bbox.centroid();
    let dist = (ca.x - cb.x).hypot(ca.y - cb.y);
    dist < cfg.kappa * a.bbox.h.max(b.bbox.h)
}

/// All gated pairs of one frame as `(tid_a, tid_b)`, sorted.
pub fn gate_pairs(frame_tracks: &[(u64, Skeleton)], cfg: &GateConfig) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    for i in 0..frame_tracks.len() {
        for j in (i + 1)..frame_tracks.len() {
            let (ti, si) = &frame_tracks[i];
            let (tj, sj) = &frame_tracks[j];
            if ti == tj || !within_gate(si, sj, cfg) {
                continue;
            }
            let (a, b) = ordered((*ti, si), (*tj, sj));
            out.push((a.0, b.0));
        }
    }
    out.sort_unstable();
    out
}

/// Concatenated feature rows for every gated pair of a frame whose selected
/// entries are all usable. `features[k]` belongs to `frame_tracks[k]`.
pub fn pair_rows(
    frame_tracks: &[(u64, Skeleton)],
    features: &[FeatureVector],
    set: FeatureSet,
    cfg: &GateConfig,
) -> Vec<(u64, u64, Vec<f64>)> {
    let selected: BTreeMap<u64, Option<Vec<f64>>> = frame_tracks
        .iter()
        .zip(features)
        .map(|((tid, _), fv)| (*tid, fv.select(set)))
        .collect();
    gate_pairs(frame_tracks, cfg)
        .into_iter()
        .filter_map(|(a, b)| {
            let fa = selected[&a].as_ref()?;
            let fb = selected[&b].as_ref()?;
            let mut row = Vec::with_capacity(fa.len() + fb.len());
            row.extend_from_slice(fa);
            row.extend_from_slice(fb);
            Some((a, b, row))
        })
        .collect()
}

/// Pair samples for every frame of a tracked clip. Features are extracted
/// per track in frame order with short-horizon imputation; labeled clips
/// label every sample with the clip label.
pub fn build_pair_samples(
    clip: &ClipRecord,
    kcfg: &KinematicsConfig,
    gcfg: &GateConfig,
) -> Result<Vec<PairSample>, InteractionError> {
    let mut histories: BTreeMap<u64, FeatureHistory> = BTreeMap::new();
    let mut out = Vec::new();
    for frame in &clip.frames {
        let mut tracks: Vec<(u64, Skeleton)> = Vec::with_capacity(frame.persons.len());
        for (index, p) in frame.persons.iter().enumerate() {
            let tid = p.tid.ok_or(InteractionError::Untracked { frame: frame.frame_idx, index })?;
            if tracks.iter().any(|(t, _)| *t == tid) {
                return Err(InteractionError::DuplicateTid { frame: frame.frame_idx, tid });
            }
            tracks.push((tid, p.clone()));
        }
        let features: Vec<FeatureVector> = tracks
            .iter()
            .map(|(tid, s)| histories.entry(*tid).or_default().update(s, frame.frame_idx, kcfg))
            .collect();
        for (tid_a, tid_b, row) in pair_rows(&tracks, &features, kcfg.feature_set, gcfg) {
            out.push(PairSample {
                clip_id: clip.clip_id.clone(),
                frame_idx: frame.frame_idx,
                tid_a,
                tid_b,
                features: row,
                label: clip.label,
            });
        }
    }
    Ok(out)
}
