//! Greedy IoU tracker assigning persistent identities to detected people.
//!
//! Every frame, all (track, detection) IoUs are ranked in descending order,
//! ties broken by lower track id then lower detection index, and pairs at or
//! above `iou_min` are accepted while both sides are free. Leftover
//! detections open new tracks; tracks unseen for more than `max_age` frames
//! are retired and their ids are never reused.

use std::collections::VecDeque;

use thiserror::Error;

use crate::error::SequenceError;
use crate::skeleton::{BBox, ClipRecord, FrameDetections, Skeleton};

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub iou_min: f64,
    pub max_age: u64,
    pub history_cap: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self { iou_min: 0.3, max_age: 30, history_cap: 64 }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), TrackError> {
        if !(self.iou_min > 0.0 && self.iou_min < 1.0) {
            return Err(TrackError::Config(format!("iou_min {} outside (0, 1)", self.iou_min)));
        }
        if self.max_age < 1 {
            return Err(TrackError::Config("max_age must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackError {
    #[error("sequencing error: {0}")]
    Sequencing(#[from] SequenceError),
    #[error("invalid tracker config: {0}")]
    Config(String),
}

#[derive(Debug, Clone)]
pub struct Track {
    pub track_id: u64,
    pub last_bbox: BBox,
    pub last_frame_idx: u64,
    pub history: VecDeque<(u64, Skeleton)>,
}

impl Track {
    pub fn age_frames(&self, current_frame: u64) -> u64 {
        current_frame.saturating_sub(self.last_frame_idx)
    }
}

/// Intersection over union of two boxes; 0 for disjoint boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let ix = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let iy = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Greedy one-to-one matching on an IoU matrix indexed `[track][detection]`.
/// `track_ids` orders tracks for tie-breaking. Returns
/// `(track position, detection index)` pairs.
pub fn greedy_match(ious: &[Vec<f64>], track_ids: &[u64], iou_min: f64) -> Vec<(usize, usize)> {
    let mut cand: Vec<(f64, u64, usize, usize)> = Vec::new();
    for (ti, row) in ious.iter().enumerate() {
        for (di, &v) in row.iter().enumerate() {
            if v >= iou_min {
                cand.push((v, track_ids[ti], ti, di));
            }
        }
    }
    cand.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.3.cmp(&b.3)));
    let n_dets = ious.first().map_or(0, Vec::len);
    let mut track_used = vec![false; ious.len()];
    let mut det_used = vec![false; n_dets];
    let mut out = Vec::new();
    for (_, _, ti, di) in cand {
        if !track_used[ti] && !det_used[di] {
            track_used[ti] = true;
            det_used[di] = true;
            out.push((ti, di));
        }
    }
    out
}

/// Single-stream tracker state.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    tracks: Vec<Track>,
    next_id: u64,
    last_frame: Option<u64>,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Result<Self, TrackError> {
        cfg.validate()?;
        Ok(Self { cfg, tracks: Vec::new(), next_id: 1, last_frame: None })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    /// Live tracks in creation order.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Advances one frame. Returns the skeletons of this frame in detection
    /// order, each tagged with its track id.
    pub fn step(&mut self, dets: &FrameDetections) -> Result<Vec<(u64, Skeleton)>, TrackError> {
        let frame = dets.frame_idx;
        if let Some(prev) = self.last_frame {
            if frame <= prev {
                return Err(SequenceError::FrameIndex { previous: prev, got: frame }.into());
            }
        }
        self.last_frame = Some(frame);

        let max_age = self.cfg.max_age;
        self.tracks.retain(|t| t.age_frames(frame) <= max_age);

        let ious: Vec<Vec<f64>> = self
            .tracks
            .iter()
            .map(|t| dets.persons.iter().map(|d| iou(&t.last_bbox, &d.bbox)).collect())
            .collect();
        let ids: Vec<u64> = self.tracks.iter().map(|t| t.track_id).collect();
        let matches = greedy_match(&ious, &ids, self.cfg.iou_min);

        let mut assigned: Vec<Option<usize>> = vec![None; dets.persons.len()];
        for (ti, di) in matches {
            assigned[di] = Some(ti);
        }

        let mut out = Vec::with_capacity(dets.persons.len());
        for (di, det) in dets.persons.iter().enumerate() {
            let ti = match assigned[di] {
                Some(ti) => ti,
                None => {
                    self.tracks.push(Track {
                        track_id: self.next_id,
                        last_bbox: det.bbox,
                        last_frame_idx: frame,
                        history: VecDeque::with_capacity(self.cfg.history_cap.min(1024)),
                    });
                    self.next_id += 1;
                    self.tracks.len() - 1
                }
            };
            let track = &mut self.tracks[ti];
            track.last_bbox = det.bbox;
            track.last_frame_idx = frame;
            let tagged = det.clone().with_tid(track.track_id);
            if self.cfg.history_cap > 0 {
                if track.history.len() == self.cfg.history_cap {
                    track.history.pop_front();
                }
                track.history.push_back((frame, tagged.clone()));
            }
            out.push((track.track_id, tagged));
        }
        Ok(out)
    }

    pub fn live_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.tracks.iter().map(|t| t.track_id)
    }
}

/// Runs a fresh tracker over a clip and returns a copy with `tid` set on
/// every person.
pub fn track_clip(clip: &ClipRecord, cfg: &TrackerConfig) -> Result<ClipRecord, TrackError> {
    let mut tracker = Tracker::new(cfg.clone())?;
    let mut out = clip.clone();
    for frame in &mut out.frames {
        let tagged = tracker.step(frame)?;
        frame.persons = tagged.into_iter().map(|(_, s)| s).collect();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::{Keypoint, NUM_KEYPOINTS};

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox::new(x, y, w, h).unwrap()
    }

    fn det(b: BBox) -> Skeleton {
        Skeleton::new([Keypoint { x: b.x, y: b.y, conf: 1.0 }; NUM_KEYPOINTS], b, 0.9).unwrap()
    }

    fn frame(idx: u64, boxes: &[BBox]) -> FrameDetections {
        FrameDetections::new(idx, idx as i64 * 33, boxes.iter().copied().map(det).collect())
    }

    #[test]
    fn iou_analytic_cases() {
        let a = bb(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bb(20.0, 20.0, 5.0, 5.0)), 0.0);
        assert_eq!(iou(&a, &bb(10.0, 0.0, 10.0, 10.0)), 0.0);
        let b = bb(5.0, 0.0, 10.0, 10.0);
        assert!((iou(&a, &b) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(iou(&a, &b), iou(&b, &a));
    }

    #[test]
    fn new_tracks_get_ids_in_detection_order() {
        let mut t = Tracker::new(TrackerConfig::default()).unwrap();
        let out = t.step(&frame(0, &[bb(0.0, 0.0, 10.0, 10.0), bb(50.0, 0.0, 10.0, 10.0)])).unwrap();
        assert_eq!(out.iter().map(|(id, _)| *id).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(out[1].1.tid, Some(2));
    }

    #[test]
    fn overlapping_detection_keeps_track_id() {
        let mut t = Tracker::new(TrackerConfig::default()).unwrap();
        t.step(&frame(0, &[bb(0.0, 0.0, 10.0, 10.0)])).unwrap();
        // IoU 0.5 with the previous box.
        let b = bb(0.0, 0.0, 10.0, 10.0);
        let moved = bb(0.0, 0.0, 10.0, 5.0);
        assert!((iou(&b, &moved) - 0.5).abs() < 1e-12);
        let out = t.step(&frame(1, &[moved])).unwrap();
        assert_eq!(out[0].0, 1);
    }

    #[test]
    fn out_of_order_frame_is_rejected() {
        let mut t = Tracker::new(TrackerConfig::default()).unwrap();
        t.step(&frame(3, &[])).unwrap();
        assert!(matches!(t.step(&frame(3, &[])), Err(TrackError::Sequencing(_))));
        assert!(matches!(t.step(&frame(2, &[])), Err(TrackError::Sequencing(_))));
    }

    #[test]
    fn stale_tracks_retire_and_ids_are_not_reused() {
        let cfg = TrackerConfig { max_age: 2, ..Default::default() };
        let mut t = Tracker::new(cfg).unwrap();
        let a = bb(0.0, 0.0, 10.0, 10.0);
        t.step(&frame(0, &[a])).unwrap();
        t.step(&frame(2, &[])).unwrap();
        assert_eq!(t.tracks().len(), 1);
        // age 3 > max_age 2: the returning subject gets a fresh id.
        let out = t.step(&frame(3, &[a])).unwrap();
        assert_eq!(out[0].0, 2);
        assert_eq!(t.tracks().len(), 1);
    }

    #[test]
    fn history_is_capped() {
        let cfg = TrackerConfig { history_cap: 3, ..Default::default() };
        let mut t = Tracker::new(cfg).unwrap();
        for f in 0..10 {
            t.step(&frame(f, &[bb(0.0, 0.0, 10.0, 10.0)])).unwrap();
        }
        let h = &t.tracks()[0].history;
        assert_eq!(h.len(), 3);
        assert_eq!(h.iter().map(|(f, _)| *f).collect::<Vec<_>>(), vec![7, 8, 9]);
    }

    #[test]
    fn config_is_validated() {
        assert!(Tracker::new(TrackerConfig { iou_min: 0.0, ..Default::default() }).is_err());
        assert!(Tracker::new(TrackerConfig { iou_min: 1.0, ..Default::default() }).is_err());
        assert!(Tracker::new(TrackerConfig { max_age: 0, ..Default::default() }).is_err());
    }

    /// Best-sum assignment on a 2x2 instance by trying both permutations.
    fn brute_force_2x2(m: &[Vec<f64>]) -> [usize; 2] {
        if m[0][0] + m[1][1] >= m[0][1] + m[1][0] {
            [0, 1]
        } else {
            [1, 0]
        }
    }

    #[test]
    fn crossing_pair_matches_exhaustive_assignment() {
        // Two tracks whose subjects swap sides slightly; all IoUs distinct.
        let tracks = [bb(0.0, 0.0, 40.0, 100.0), bb(30.0, 0.0, 40.0, 100.0)];
        let dets = [bb(22.0, 0.0, 40.0, 100.0), bb(6.0, 0.0, 40.0, 100.0)];
        let m: Vec<Vec<f64>> =
            tracks.iter().map(|t| dets.iter().map(|d| iou(t, d)).collect()).collect();
        let mut vals: Vec<f64> = m.iter().flatten().copied().collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        assert_eq!(vals.len(), 4);

        let expected = brute_force_2x2(&m);
        assert_eq!(expected, [1, 0]);

        let mut t = Tracker::new(TrackerConfig { iou_min: 0.05, ..Default::default() }).unwrap();
        t.step(&frame(0, &tracks)).unwrap();
        let out = t.step(&frame(1, &dets)).unwrap();
        let track_for_det = |d: usize| expected.iter().position(|&x| x == d).unwrap() as u64 + 1;
        assert_eq!(out[0].0, track_for_det(0));
        assert_eq!(out[1].0, track_for_det(1));
        assert_eq!(out[0].0, 2);
    }

    #[test]
    fn tie_break_prefers_lower_track_then_lower_detection() {
        let m = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        let pairs = greedy_match(&m, &[7, 3], 0.3);
        // Track id 3 (position 1) wins the first tie and takes detection 0.
        assert_eq!(pairs, vec![(1, 0), (0, 1)]);
    }

    #[test]
    fn track_clip_tags_every_person() {
        let frames = vec![frame(0, &[bb(0.0, 0.0, 10.0, 10.0)]), frame(1, &[bb(1.0, 0.0, 10.0, 10.0)])];
        let clip = ClipRecord::new("c", None, (100, 100), frames).unwrap();
        assert!(!clip.is_tracked());
        let tracked = track_clip(&clip, &TrackerConfig::default()).unwrap();
        assert!(tracked.is_tracked());
        assert_eq!(tracked.frames[1].persons[0].tid, Some(1));
    }
}
