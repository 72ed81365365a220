//! Keypoints, detections, frames and labeled clips.
//!
//! Coordinates are image pixels with the origin at the top-left corner and
//! `y` growing downward. Keypoints follow the 17-point COCO order.

use std::fmt;
use std::str::FromStr;

use crate::error::SchemaError;

/// Number of keypoints in a COCO skeleton.
pub const NUM_KEYPOINTS: usize = 17;

pub const NOSE: usize = 0;
pub const LEFT_EYE: usize = 1;
pub const RIGHT_EYE: usize = 2;
pub const LEFT_EAR: usize = 3;
pub const RIGHT_EAR: usize = 4;
pub const LEFT_SHOULDER: usize = 5;
pub const RIGHT_SHOULDER: usize = 6;
pub const LEFT_ELBOW: usize = 7;
pub const RIGHT_ELBOW: usize = 8;
pub const LEFT_WRIST: usize = 9;
pub const RIGHT_WRIST: usize = 10;
pub const LEFT_HIP: usize = 11;
pub const RIGHT_HIP: usize = 12;
pub const LEFT_KNEE: usize = 13;
pub const RIGHT_KNEE: usize = 14;
pub const LEFT_ANKLE: usize = 15;
pub const RIGHT_ANKLE: usize = 16;

/// Keypoints used for analysis: limbs and torso. Head and face points
/// (0..=4) are carried in records but never feed a feature.
pub const BODY_KEYPOINTS: std::ops::RangeInclusive<usize> = LEFT_SHOULDER..=RIGHT_ANKLE;

/// Index permutation that exchanges left and right landmarks.
pub const MIRROR_INDEX: [usize; NUM_KEYPOINTS] = [0, 2, 1, 4, 3, 6, 5, 8, 7, 10, 9, 12, 11, 14, 13, 16, 15];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn midpoint(self, other: Point) -> Point {
        Point::new((self.x + other.x) * 0.5, (self.y + other.y) * 0.5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub conf: f64,
}

impl Keypoint {
    pub fn new(x: f64, y: f64, conf: f64) -> Result<Self, SchemaError> {
        let kp = Self { x, y, conf };
        kp.validate()?;
        Ok(kp)
    }

    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }

    pub(crate) fn validate(&self) -> Result<(), SchemaError> {
        if !self.x.is_finite() || !self.y.is_finite() {
            return Err(SchemaError::new("kpts", "keypoint coordinates must be finite"));
        }
        if !(0.0..=1.0).contains(&self.conf) {
            return Err(SchemaError::new(
                "kpts",
                format!("keypoint confidence {} outside [0, 1]", self.conf),
            ));
        }
        Ok(())
    }
}

/// Axis-aligned box as `(x, y, w, h)` with `(x, y)` the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, SchemaError> {
        let b = Self { x, y, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn centroid(&self) -> Point {
        Point::new(self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }

    pub(crate) fn validate(&self) -> Result<(), SchemaError> {
        if ![self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite()) {
            return Err(SchemaError::new("bbox", "bbox values must be finite"));
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(SchemaError::new(
                "bbox",
                format!("bbox width and height must be positive, got {}x{}", self.w, self.h),
            ));
        }
        Ok(())
    }
}

/// One person in one frame. `tid` is present once a tracker has assigned
/// an identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    pub keypoints: [Keypoint; NUM_KEYPOINTS],
    pub bbox: BBox,
    pub det_conf: f64,
    pub tid: Option<u64>,
}

impl Skeleton {
    pub fn new(
        keypoints: [Keypoint; NUM_KEYPOINTS],
        bbox: BBox,
        det_conf: f64,
    ) -> Result<Self, SchemaError> {
        let s = Self { keypoints, bbox, det_conf, tid: None };
        s.validate()?;
        Ok(s)
    }

    pub fn with_tid(mut self, tid: u64) -> Self {
        self.tid = Some(tid);
        self
    }

    pub fn point(&self, idx: usize) -> Point {
        self.keypoints[idx].point()
    }

    pub(crate) fn validate(&self) -> Result<(), SchemaError> {
        for kp in &self.keypoints {
            kp.validate()?;
        }
        self.bbox.validate()?;
        if !(0.0..=1.0).contains(&self.det_conf) {
            return Err(SchemaError::new(
                "conf",
                format!("detection confidence {} outside [0, 1]", self.det_conf),
            ));
        }
        if self.tid == Some(0) {
            return Err(SchemaError::new("tid", "track ids are positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameDetections {
    pub frame_idx: u64,
    pub ts_ms: i64,
    pub persons: Vec<Skeleton>,
}

impl FrameDetections {
    pub fn new(frame_idx: u64, ts_ms: i64, persons: Vec<Skeleton>) -> Self {
        Self { frame_idx, ts_ms, persons }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal = 0,
    Push = 1,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Push => "push",
        }
    }

    pub fn index(&self) -> usize {
        *self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::Normal),
            1 => Some(Label::Push),
            _ => None,
        }
    }

    pub fn other(&self) -> Label {
        match self {
            Label::Normal => Label::Push,
            Label::Push => Label::Normal,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = SchemaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "normal" => Ok(Label::Normal),
            "push" => Ok(Label::Push),
            other => Err(SchemaError::new(
                "label",
                format!("expected \"push\" or \"normal\", got {other:?}"),
            )),
        }
    }
}

/// A labeled sequence of frames; the unit of dataset splitting and
/// clip-level evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipRecord {
    pub clip_id: String,
    pub label: Option<Label>,
    pub resolution: (u32, u32),
    pub frames: Vec<FrameDetections>,
}

impl ClipRecord {
    /// Builds a clip, enforcing resolution, frame count, frame ordering and
    /// every per-person invariant.
    pub fn new(
        clip_id: impl Into<String>,
        label: Option<Label>,
        resolution: (u32, u32),
        frames: Vec<FrameDetections>,
    ) -> Result<Self, crate::error::ClipError> {
        let clip = Self { clip_id: clip_id.into(), label, resolution, frames };
        clip.validate()?;
        Ok(clip)
    }

    pub fn validate(&self) -> Result<(), crate::error::ClipError> {
        use crate::error::ClipError;
        if self.resolution.0 == 0 || self.resolution.1 == 0 {
            return Err(SchemaError::new("res", "resolution must be positive").into());
        }
        if self.frames.is_empty() {
            return Err(ClipError::Empty);
        }
        let mut prev: Option<&FrameDetections> = None;
        for f in &self.frames {
            if let Some(p) = prev {
                if f.frame_idx <= p.frame_idx {
                    return Err(ClipError::Sequencing(crate::error::SequenceError::FrameIndex {
                        previous: p.frame_idx,
                        got: f.frame_idx,
                    }));
                }
                if f.ts_ms < p.ts_ms {
                    return Err(ClipError::Sequencing(crate::error::SequenceError::Timestamp {
                        previous: p.ts_ms,
                        got: f.ts_ms,
                    }));
                }
            }
            for s in &f.persons {
                s.validate()?;
            }
            prev = Some(f);
        }
        Ok(())
    }

    pub fn is_tracked(&self) -> bool {
        self.frames.iter().flat_map(|f| &f.persons).all(|p| p.tid.is_some())
    }
}
