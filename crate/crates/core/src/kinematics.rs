//! Kinematic angle features computed from tracked skeletons.
//!
//! Every angle is the dot-product joint angle at a center point `B` between
//! the segments `BA` and `BC`, reported in degrees in `[0, 180]`. A skeleton
//! yields nine entries:
//!
//! | entry        | vertices                                   |
//! |--------------|--------------------------------------------|
//! | `quad_ls`    | right shoulder, left shoulder, left hip    |
//! | `quad_rs`    | left shoulder, right shoulder, right hip   |
//! | `quad_rh`    | right shoulder, right hip, left hip        |
//! | `quad_lh`    | right hip, left hip, left shoulder         |
//! | `torso_incl` | hip midpoint to shoulder midpoint vs. image up |
//! | `elbow_l/r`  | shoulder, elbow, wrist                     |
//! | `abduct_l/r` | hip, shoulder, elbow                       |
//!
//! The first four are the interior angles of the shoulder-hip quadrilateral.

use std::fmt;

use thiserror::Error;

use crate::skeleton::{
    Point, Skeleton, LEFT_ELBOW, LEFT_HIP, LEFT_SHOULDER, LEFT_WRIST, RIGHT_ELBOW, RIGHT_HIP,
    RIGHT_SHOULDER, RIGHT_WRIST,
};

pub const NUM_FEATURES: usize = 9;

pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "quad_ls",
    "quad_rs",
    "quad_rh",
    "quad_lh",
    "torso_incl",
    "elbow_l",
    "elbow_r",
    "abduct_l",
    "abduct_r",
];

pub const QUAD_LS: usize = 0;
pub const QUAD_RS: usize = 1;
pub const QUAD_RH: usize = 2;
pub const QUAD_LH: usize = 3;
pub const TORSO_INCL: usize = 4;
pub const ELBOW_L: usize = 5;
pub const ELBOW_R: usize = 6;
pub const ABDUCT_L: usize = 7;
pub const ABDUCT_R: usize = 8;

/// Entry permutation induced by exchanging left and right landmarks.
pub const MIRROR_FEATURE: [usize; NUM_FEATURES] = [
    QUAD_RS, QUAD_LS, QUAD_LH, QUAD_RH, TORSO_INCL, ELBOW_R, ELBOW_L, ABDUCT_R, ABDUCT_L,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("degenerate geometry: zero-length segment")]
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum FeatureError {
    #[error("required keypoint below confidence threshold")]
    Missing,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicsConfig {
    /// Keypoints with confidence below this are unreliable.
    pub kp_conf_min: f64,
    /// How many frames back a missing entry may be filled from.
    pub impute_window: u64,
    pub feature_set: FeatureSet,
}

impl Default for KinematicsConfig {
    fn default() -> Self {
        Self { kp_conf_min: 0.5, impute_window: 5, feature_set: FeatureSet::Full }
    }
}

impl KinematicsConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.kp_conf_min > 0.0 && self.kp_conf_min < 1.0) {
            return Err(format!("kp_conf_min {} outside (0, 1)", self.kp_conf_min));
        }
        Ok(())
    }
}

/// Which per-person entries feed the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureSet {
    /// The four shoulder-hip quadrilateral angles.
    Quad,
    /// All nine entries.
    #[default]
    Full,
}

impl FeatureSet {
    pub fn indices(&self) -> &'static [usize] {
        const QUAD: [usize; 4] = [QUAD_LS, QUAD_RS, QUAD_RH, QUAD_LH];
        const FULL: [usize; 9] = [0, 1, 2, 3, 4, 5, 6, 7, 8];
        match self {
            FeatureSet::Quad => &QUAD,
            FeatureSet::Full => &FULL,
        }
    }

    pub fn per_person(&self) -> usize {
        self.indices().len()
    }

    pub fn from_count(n: usize) -> Option<FeatureSet> {
        match n {
            4 => Some(FeatureSet::Quad),
            9 => Some(FeatureSet::Full),
            _ => None,
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> {
        self.indices().iter().map(|&i| FEATURE_NAMES[i])
    }
}

/// Double-double value `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    fn two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        let bb = s - a;
        Dd { hi: s, lo: (a - (s - bb)) + (b - bb) }
    }

    fn two_prod(a: f64, b: f64) -> Dd {
        let p = a * b;
        Dd { hi: p, lo: a.mul_add(b, -p) }
    }

    fn renorm(hi: f64, lo: f64) -> Dd {
        let s = hi + lo;
        Dd { hi: s, lo: lo - (s - hi) }
    }

    fn add(self, o: Dd) -> Dd {
        let s = Dd::two_sum(self.hi, o.hi);
        Dd::renorm(s.hi, s.lo + self.lo + o.lo)
    }

    fn mul(self, o: Dd) -> Dd {
        let p = Dd::two_prod(self.hi, o.hi);
        Dd::renorm(p.hi, p.lo + self.hi * o.lo + self.lo * o.hi)
    }

    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.add(o.mul(Dd { hi: -q1, lo: 0.0 }));
        let q2 = r.hi / o.hi;
        Dd::renorm(q1, q2)
    }

    fn sqrt(self) -> Dd {
        let x = self.hi.sqrt();
        let r = self.add(Dd::two_prod(-x, x));
        Dd::renorm(x, r.hi / (2.0 * x))
    }
}

/// Angle in degrees between two vectors: the arccosine of the normalized
/// dot product. The cosine is formed in double-double precision and the
/// arccosine is corrected to first order for the residual below `f64`
/// rounding, which keeps near-collinear angles accurate.
fn vector_angle(u: (f64, f64), v: (f64, f64)) -> Result<f64, GeometryError> {
    let nu2 = Dd::two_prod(u.0, u.0).add(Dd::two_prod(u.1, u.1));
    let nv2 = Dd::two_prod(v.0, v.0).add(Dd::two_prod(v.1, v.1));
    if nu2.hi == 0.0 || nv2.hi == 0.0 || !nu2.hi.is_finite() || !nv2.hi.is_finite() {
        return Err(GeometryError::Degenerate);
    }
    let dot = Dd::two_prod(u.0, v.0).add(Dd::two_prod(u.1, v.1));
    let cos = dot.div(nu2.mul(nv2).sqrt());
    let c = cos.hi.clamp(-1.0, 1.0);
    let mut theta = c.acos();
    if c.abs() < 1.0 {
        // d(acos c)/dc = -1 / sin(theta)
        let sin = ((1.0 - c) * (1.0 + c)).sqrt();
        theta -= cos.lo / sin;
    }
    Ok(theta.to_degrees().clamp(0.0, 180.0))
}

/// Angle at `b` between `BA` and `BC`, in degrees.
pub fn joint_angle(a: Point, b: Point, c: Point) -> Result<f64, GeometryError> {
    vector_angle((a.x - b.x, a.y - b.y), (c.x - b.x, c.y - b.y))
}

fn usable(skel: &Skeleton, idx: &[usize], conf_min: f64) -> Result<(), FeatureError> {
    if idx.iter().all(|&i| skel.keypoints[i].conf >= conf_min) {
        Ok(())
    } else {
        Err(FeatureError::Missing)
    }
}

fn torso_from_points(ls: Point, rs: Point, lh: Point, rh: Point) -> Result<f64, GeometryError> {
    let shoulders = ls.midpoint(rs);
    let hips = lh.midpoint(rh);
    // Image up is -y.
    vector_angle((shoulders.x - hips.x, shoulders.y - hips.y), (0.0, -1.0))
}

/// Tilt of the hip-midpoint to shoulder-midpoint axis away from vertical:
/// 0 upright, 90 horizontal.
pub fn torso_inclination(skel: &Skeleton, cfg: &KinematicsConfig) -> Result<f64, FeatureError> {
    usable(skel, &[LEFT_SHOULDER, RIGHT_SHOULDER, LEFT_HIP, RIGHT_HIP], cfg.kp_conf_min)?;
    Ok(torso_from_points(
        skel.point(LEFT_SHOULDER),
        skel.point(RIGHT_SHOULDER),
        skel.point(LEFT_HIP),
        skel.point(RIGHT_HIP),
    )?)
}

/// Interior angles of the quadrilateral (left shoulder, right shoulder,
/// right hip, left hip), in that vertex order.
pub fn quad_angles_from_points(
    ls: Point,
    rs: Point,
    rh: Point,
    lh: Point,
) -> Result<[f64; 4], GeometryError> {
    Ok([
        joint_angle(rs, ls, lh)?,
        joint_angle(ls, rs, rh)?,
        joint_angle(rs, rh, lh)?,
        joint_angle(rh, lh, ls)?,
    ])
}

pub fn quad_angles(skel: &Skeleton, cfg: &KinematicsConfig) -> Result<[f64; 4], FeatureError> {
    usable(skel, &[LEFT_SHOULDER, RIGHT_SHOULDER, LEFT_HIP, RIGHT_HIP], cfg.kp_conf_min)?;
    Ok(quad_angles_from_points(
        skel.point(LEFT_SHOULDER),
        skel.point(RIGHT_SHOULDER),
        skel.point(RIGHT_HIP),
        skel.point(LEFT_HIP),
    )?)
}

fn angle_entry(skel: &Skeleton, cfg: &KinematicsConfig, a: usize, b: usize, c: usize) -> Option<f64> {
    usable(skel, &[a, b, c], cfg.kp_conf_min).ok()?;
    joint_angle(skel.point(a), skel.point(b), skel.point(c)).ok()
}

/// Entries computable from this skeleton alone; `None` where a keypoint is
/// unreliable or the geometry degenerates.
pub fn raw_features(skel: &Skeleton, cfg: &KinematicsConfig) -> [Option<f64>; NUM_FEATURES] {
    let mut out = [None; NUM_FEATURES];
    if let Ok(q) = quad_angles(skel, cfg) {
        out[QUAD_LS..=QUAD_LH].copy_from_slice(&q.map(Some));
    }
    out[TORSO_INCL] = torso_inclination(skel, cfg).ok();
    out[ELBOW_L] = angle_entry(skel, cfg, LEFT_SHOULDER, LEFT_ELBOW, LEFT_WRIST);
    out[ELBOW_R] = angle_entry(skel, cfg, RIGHT_SHOULDER, RIGHT_ELBOW, RIGHT_WRIST);
    out[ABDUCT_L] = angle_entry(skel, cfg, LEFT_HIP, LEFT_SHOULDER, LEFT_ELBOW);
    out[ABDUCT_R] = angle_entry(skel, cfg, RIGHT_HIP, RIGHT_SHOULDER, RIGHT_ELBOW);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryState {
    Valid,
    Imputed,
    Invalid,
}

impl EntryState {
    pub fn as_char(&self) -> char {
        match self {
            EntryState::Valid => 'v',
            EntryState::Imputed => 'i',
            EntryState::Invalid => 'x',
        }
    }

    pub fn is_usable(&self) -> bool {
        !matches!(self, EntryState::Invalid)
    }
}

/// Nine angles for one person in one frame plus per-entry validity.
/// Invalid entries hold `NaN`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    pub values: [f64; NUM_FEATURES],
    pub mask: [EntryState; NUM_FEATURES],
}

impl FeatureVector {
    pub fn invalid() -> Self {
        Self { values: [f64::NAN; NUM_FEATURES], mask: [EntryState::Invalid; NUM_FEATURES] }
    }

    pub fn mask_string(&self) -> String {
        self.mask.iter().map(EntryState::as_char).collect()
    }

    /// Entries of `set`, or `None` if any of them is invalid.
    pub fn select(&self, set: FeatureSet) -> Option<Vec<f64>> {
        set.indices()
            .iter()
            .map(|&i| self.mask[i].is_usable().then_some(self.values[i]))
            .collect()
    }

    pub fn get(&self, idx: usize) -> Option<f64> {
        self.mask[idx].is_usable().then_some(self.values[idx])
    }
}

impl fmt::Display for FeatureVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, name) in FEATURE_NAMES.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{name}={:.2}{}", self.values[i], self.mask[i].as_char())?;
        }
        Ok(())
    }
}

/// Computes the feature vector for `skel` at `frame_idx`. Entries that
/// cannot be computed take the most recent directly computed value of the
/// same entry from `history` (older frames of the same track, any order)
/// within `impute_window` frames, else they are invalid.
pub fn extract_features(
    skel: &Skeleton,
    frame_idx: u64,
    history: &[(u64, Skeleton)],
    cfg: &KinematicsConfig,
) -> FeatureVector {
    let raw = raw_features(skel, cfg);
    let mut fv = FeatureVector::invalid();
    let mut past: Vec<&(u64, Skeleton)> = history
        .iter()
        .filter(|(f, _)| *f < frame_idx && frame_idx - *f <= cfg.impute_window)
        .collect();
    past.sort_by(|a, b| b.0.cmp(&a.0));
    let mut past_raw: Vec<Option<[Option<f64>; NUM_FEATURES]>> = vec![None; past.len()];
    for e in 0..NUM_FEATURES {
        if let Some(v) = raw[e] {
            fv.values[e] = v;
            fv.mask[e] = EntryState::Valid;
            continue;
        }
        for (k, (_, s)) in past.iter().enumerate() {
            let r = past_raw[k].get_or_insert_with(|| raw_features(s, cfg));
            if let Some(v) = r[e] {
                fv.values[e] = v;
                fv.mask[e] = EntryState::Imputed;
                break;
            }
        }
    }
    fv
}

/// Streaming form of [`extract_features`] for one track: remembers the last
/// directly computed value of each entry instead of re-deriving it from
/// stored skeletons. Frames must be fed in increasing order.
#[derive(Debug, Clone, Default)]
pub struct FeatureHistory {
    last_valid: [Option<(u64, f64)>; NUM_FEATURES],
}

impl FeatureHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, skel: &Skeleton, frame_idx: u64, cfg: &KinematicsConfig) -> FeatureVector {
        let raw = raw_features(skel, cfg);
        let mut fv = FeatureVector::invalid();
        for e in 0..NUM_FEATURES {
            match raw[e] {
                Some(v) => {
                    fv.values[e] = v;
                    fv.mask[e] = EntryState::Valid;
                    self.last_valid[e] = Some((frame_idx, v));
                }
                None => {
                    if let Some((f, v)) = self.last_valid[e] {
                        if frame_idx > f && frame_idx - f <= cfg.impute_window {
                            fv.values[e] = v;
                            fv.mask[e] = EntryState::Imputed;
                        }
                    }
                }
            }
        }
        fv
    }
}
