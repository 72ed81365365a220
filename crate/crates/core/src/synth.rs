//! Synthetic two-actor clips with known kinematics.
//!
//! Each actor is a rigid 2D stick figure seen from the front: fixed
//! segment lengths, posed per frame by a hip position, a torso
//! inclination, per-arm abduction and elbow angles, and leg swing.
//!
//! * Normal clips: two people walk past each other (or side by side in
//!   separate lanes) with a sinusoidal gait. Torso inclination stays within
//!   8 degrees and abduction within 30 degrees.
//! * Push clips: a short approach, then a contact phase in which the pusher
//!   raises both arms towards the other person to 85-95 degrees of
//!   abduction with elbows at 160-180 degrees, while the pushed person's
//!   torso tilts 20-30 degrees away and they accelerate away, then
//!   separation.
//!
//! Keypoints then get Gaussian jitter and dropout (confidence drawn below
//! 0.5). All emitted values are rounded to 6 decimals so a clip equals its
//! own JSONL round trip.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::kinematics::NUM_FEATURES;
use crate::skeleton::*;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid scenario parameters: {0}")]
pub struct SynthError(String);

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioParams {
    pub scenario: Label,
    pub seed: u64,
    pub n_frames: usize,
    pub resolution: (u32, u32),
    /// Standard deviation of keypoint jitter in pixels.
    pub noise_px: f64,
    /// Per-keypoint probability of a low-confidence reading.
    pub dropout_p: f64,
    /// Nominal person height in pixels.
    pub scale: f64,
    /// Normal clips only: walk side by side in lanes that never overlap
    /// instead of crossing.
    pub separated: bool,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            scenario: Label::Normal,
            seed: 0,
            n_frames: 60,
            resolution: (848, 848),
            noise_px: 1.0,
            dropout_p: 0.02,
            scale: 300.0,
            separated: false,
        }
    }
}

impl ScenarioParams {
    /// Heavier noise and dropout standing in for steep, distant cameras.
    pub fn case3() -> Self {
        Self { noise_px: 4.0, dropout_p: 0.10, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_frames < 2 {
            return Err(SynthError(format!("n_frames must be at least 2, got {}", self.n_frames)));
        }
        if !(self.noise_px >= 0.0 && self.noise_px.is_finite()) {
            return Err(SynthError(format!("noise_px must be >= 0, got {}", self.noise_px)));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(SynthError(format!("dropout_p must be in [0, 1), got {}", self.dropout_p)));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(SynthError(format!("scale must be positive, got {}", self.scale)));
        }
        if self.resolution.0 == 0 || self.resolution.1 == 0 {
            return Err(SynthError("resolution must be positive".into()));
        }
        Ok(())
    }
}

/// Segment lengths of one actor, in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Body {
    pub height: f64,
    pub shoulder_half: f64,
    pub hip_half: f64,
    pub torso: f64,
    pub upper_arm: f64,
    pub forearm: f64,
    pub thigh: f64,
    pub shin: f64,
}

impl Body {
    pub fn standard(height: f64) -> Self {
        Body {
            height,
            shoulder_half: 0.125 * height,
            hip_half: 0.09 * height,
            torso: 0.30 * height,
            upper_arm: 0.17 * height,
            forearm: 0.15 * height,
            thigh: 0.23 * height,
            shin: 0.23 * height,
        }
    }

    fn sample(height: f64, rng: &mut impl Rng) -> Self {
        let mut j = || rng.random_range(0.95..1.05);
        let b = Body::standard(height);
        Body {
            height,
            shoulder_half: b.shoulder_half * j(),
            hip_half: b.hip_half * j(),
            torso: b.torso * j(),
            upper_arm: b.upper_arm * j(),
            forearm: b.forearm * j(),
            thigh: b.thigh * j(),
            shin: b.shin * j(),
        }
    }
}

/// Which way an arm swings away from hanging along the torso.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArmTarget {
    /// Away from the body's midline.
    Outward,
    /// Towards image `+x` (`1.0`) or `-x` (`-1.0`), crossing the body if
    /// needed.
    Horizontal(f64),
}

/// One arm's pose in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmPose {
    pub abduction: f64,
    pub elbow: f64,
    pub target: ArmTarget,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posture {
    pub hip_mid: Point,
    /// Signed torso lean in degrees; positive tips the shoulders to `+x`.
    pub lean: f64,
    pub left_arm: ArmPose,
    pub right_arm: ArmPose,
    /// Signed thigh angles from vertical, degrees.
    pub left_leg: f64,
    pub right_leg: f64,
    pub knee_flex: [f64; 2],
}

fn rot(v: Point, deg: f64) -> Point {
    let (s, c) = deg.to_radians().sin_cos();
    Point::new(v.x * c - v.y * s, v.x * s + v.y * c)
}

fn add(a: Point, v: Point, k: f64) -> Point {
    Point::new(a.x + k * v.x, a.y + k * v.y)
}

fn unit(a: Point, b: Point) -> Point {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let n = dx.hypot(dy);
    Point::new(dx / n, dy / n)
}

/// Rotation sign that swings `d` towards `toward`.
fn sense(d: Point, toward: Point) -> f64 {
    let q = rot(d, 90.0);
    if q.x * toward.x + q.y * toward.y >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Noiseless keypoints of `body` in `posture`, COCO order. The person faces
/// the camera, so their left side is at image `+x` when upright.
pub fn build_pose(body: &Body, posture: &Posture) -> [Point; NUM_KEYPOINTS] {
    let h = body.height;
    let up = rot(Point::new(0.0, -1.0), posture.lean);
    let side = rot(Point::new(1.0, 0.0), posture.lean);
    let hm = posture.hip_mid;
    let sm = add(hm, up, body.torso);
    let mut p = [Point::new(0.0, 0.0); NUM_KEYPOINTS];
    p[LEFT_SHOULDER] = add(sm, side, body.shoulder_half);
    p[RIGHT_SHOULDER] = add(sm, side, -body.shoulder_half);
    p[LEFT_HIP] = add(hm, side, body.hip_half);
    p[RIGHT_HIP] = add(hm, side, -body.hip_half);

    let arms = [
        (LEFT_SHOULDER, LEFT_HIP, LEFT_ELBOW, LEFT_WRIST, posture.left_arm, 1.0),
        (RIGHT_SHOULDER, RIGHT_HIP, RIGHT_ELBOW, RIGHT_WRIST, posture.right_arm, -1.0),
    ];
    for (s, hp, e, w, arm, out) in arms {
        let d0 = unit(p[s], p[hp]);
        let toward = match arm.target {
            ArmTarget::Outward => Point::new(side.x * out, side.y * out),
            ArmTarget::Horizontal(dir) => Point::new(dir, 0.0),
        };
        let sg = sense(d0, toward);
        let ua = rot(d0, sg * arm.abduction);
        p[e] = add(p[s], ua, body.upper_arm);
        let fa = rot(ua, sg * (180.0 - arm.elbow));
        p[w] = add(p[e], fa, body.forearm);
    }

    let legs = [
        (LEFT_HIP, LEFT_KNEE, LEFT_ANKLE, posture.left_leg, posture.knee_flex[0]),
        (RIGHT_HIP, RIGHT_KNEE, RIGHT_ANKLE, posture.right_leg, posture.knee_flex[1]),
    ];
    for (hp, k, a, swing, flex) in legs {
        let th = rot(Point::new(0.0, 1.0), swing);
        p[k] = add(p[hp], th, body.thigh);
        p[a] = add(p[k], rot(th, -flex), body.shin);
    }

    let nose = add(sm, up, 0.13 * h);
    p[NOSE] = nose;
    p[LEFT_EYE] = add(add(nose, up, 0.03 * h), side, 0.025 * h);
    p[RIGHT_EYE] = add(add(nose, up, 0.03 * h), side, -0.025 * h);
    p[LEFT_EAR] = add(add(nose, up, 0.015 * h), side, 0.055 * h);
    p[RIGHT_EAR] = add(add(nose, up, 0.015 * h), side, -0.055 * h);
    p
}

fn atan2_angle(a: Point, b: Point, c: Point) -> f64 {
    let (ux, uy) = (a.x - b.x, a.y - b.y);
    let (vx, vy) = (c.x - b.x, c.y - b.y);
    (ux * vy - uy * vx).abs().atan2(ux * vx + uy * vy).to_degrees()
}

/// The nine feature angles of a clean pose, computed independently of the
/// kinematics module.
pub fn true_angles(p: &[Point; NUM_KEYPOINTS]) -> [f64; NUM_FEATURES] {
    let (ls, rs, lh, rh) = (p[LEFT_SHOULDER], p[RIGHT_SHOULDER], p[LEFT_HIP], p[RIGHT_HIP]);
    let sm = ls.midpoint(rs);
    let hm = lh.midpoint(rh);
    let above = Point::new(hm.x, hm.y - 1.0);
    [
        atan2_angle(rs, ls, lh),
        atan2_angle(ls, rs, rh),
        atan2_angle(rs, rh, lh),
        atan2_angle(rh, lh, ls),
        atan2_angle(sm, hm, above),
        atan2_angle(ls, p[LEFT_ELBOW], p[LEFT_WRIST]),
        atan2_angle(rs, p[RIGHT_ELBOW], p[RIGHT_WRIST]),
        atan2_angle(lh, ls, p[LEFT_ELBOW]),
        atan2_angle(rh, rs, p[RIGHT_ELBOW]),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActorTruth {
    pub role: &'static str,
    /// Person index within each frame's `persons`.
    pub person: usize,
    pub body: [f64; 8],
    /// True feature angles per frame.
    pub angles: Vec<[f64; NUM_FEATURES]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    pub clip_id: String,
    pub scenario: Label,
    pub seed: u64,
    /// Inclusive frame interval where the push is at full strength.
    pub contact: Option<(u64, u64)>,
    /// First frame of the push ramp.
    pub onset: Option<u64>,
    pub actors: Vec<ActorTruth>,
}

/// Clean keypoints per frame for both actors plus the ground truth.
#[derive(Debug, Clone)]
pub struct Animation {
    pub poses: Vec<[[Point; NUM_KEYPOINTS]; 2]>,
    pub bodies: [Body; 2],
    pub truth: GroundTruth,
}

#[derive(Debug, Clone, Copy)]
struct Gait {
    phase: f64,
    period: f64,
    arm_base: [f64; 2],
    arm_amp: [f64; 2],
    elbow_bend: [f64; 2],
    lean_bias: f64,
    sway: f64,
    leg_amp: f64,
}

impl Gait {
    fn sample(rng: &mut impl Rng) -> Self {
        Gait {
            phase: rng.random_range(0.0..std::f64::consts::TAU),
            period: rng.random_range(16.0..24.0),
            arm_base: [rng.random_range(3.0..10.0), rng.random_range(3.0..10.0)],
            arm_amp: [rng.random_range(5.0..15.0), rng.random_range(5.0..15.0)],
            elbow_bend: [rng.random_range(5.0..25.0), rng.random_range(5.0..25.0)],
            lean_bias: rng.random_range(-2.0..2.0),
            sway: rng.random_range(1.0..5.0),
            leg_amp: rng.random_range(10.0..18.0),
        }
    }

    fn posture(&self, t: f64, hip_mid: Point, walking: f64) -> Posture {
        let phi = self.phase + std::f64::consts::TAU * t / self.period;
        let wave = |off: f64| 0.5 + 0.5 * (phi + off).sin();
        let arm = |i: usize, off: f64| ArmPose {
            abduction: self.arm_base[i] + self.arm_amp[i] * wave(off),
            elbow: 180.0 - self.elbow_bend[i] * wave(off + 1.0),
            target: ArmTarget::Outward,
        };
        let swing = self.leg_amp * walking * phi.sin();
        Posture {
            hip_mid,
            lean: self.lean_bias + self.sway * (2.0 * phi).sin(),
            left_arm: arm(0, 0.0),
            right_arm: arm(1, std::f64::consts::PI),
            left_leg: swing,
            right_leg: -swing,
            knee_flex: [5.0 + 15.0 * walking * wave(0.5), 5.0 + 15.0 * walking * wave(0.5 + std::f64::consts::PI)],
        }
    }
}

fn lerp(a: f64, b: f64, e: f64) -> f64 {
    a + (b - a) * e
}

/// Push timeline: `(envelope per frame, ramp start, first contact frame,
/// last contact frame)`. The envelope ramps 0 -> 1, holds, and ramps back to 0.
fn push_envelope(n: usize) -> (Vec<f64>, usize, usize, usize) {
    let approach = (0.15 * n as f64).round() as usize;
    let ramp = ((0.07 * n as f64).round() as usize).max(1);
    let hold = ((0.4 * n as f64).round() as usize).max(1);
    let c0 = approach + ramp;
    let c1 = (c0 + hold).min(n) - 1;
    let env = (0..n)
        .map(|t| {
            if t < approach {
                0.0
            } else if t < c0 {
                (t - approach + 1) as f64 / (ramp + 1) as f64
            } else if t <= c1 {
                1.0
            } else if t < c1 + 1 + ramp {
                1.0 - (t - c1) as f64 / (ramp + 1) as f64
            } else {
                0.0
            }
        })
        .collect();
    (env, approach, c0, c1)
}

pub fn clip_id(scenario: Label, seed: u64) -> String {
    format!("{}_{seed:06}", scenario.as_str())
}

fn body_array(b: &Body) -> [f64; 8] {
    [b.height, b.shoulder_half, b.hip_half, b.torso, b.upper_arm, b.forearm, b.thigh, b.shin]
}

/// Clean animation for `params`; consumes the first part of the clip's
/// random stream.
fn animate_with(params: &ScenarioParams, rng: &mut ChaCha8Rng) -> Animation {
    let n = params.n_frames;
    let (w, hres) = (params.resolution.0 as f64, params.resolution.1 as f64);
    let push = params.scenario == Label::Push;
    let crossing = !push && !params.separated;
    let h0 = params.scale * rng.random_range(0.92..1.08);
    let h1 = params.scale * rng.random_range(0.92..1.08) * if crossing { 0.9 } else { 1.0 };
    let bodies = [Body::sample(h0, rng), Body::sample(h1, rng)];
    let gaits = [Gait::sample(rng), Gait::sample(rng)];
    let ground = 0.5 * hres + 0.5 * params.scale + rng.random_range(-10.0..10.0);
    let hip_y = |b: &Body, g: f64| g - 0.45 * b.height;
    let center = 0.5 * w + rng.random_range(-30.0..30.0);
    let dir = if rng.random_bool(0.5) { 1.0 } else { -1.0 };

    let mut poses = Vec::with_capacity(n);
    let mut angles: [Vec<[f64; NUM_FEATURES]>; 2] = [Vec::with_capacity(n), Vec::with_capacity(n)];
    let mut contact = None;
    let mut onset = None;
    let frames: Vec<[Posture; 2]> = if push {
        let (env, start, c0, c1) = push_envelope(n);
        contact = Some((c0 as u64, c1 as u64));
        onset = Some(start as u64);
        let s = h0.max(h1);
        let (d_start, d_contact, d_travel) = (1.0 * s, 0.6 * s, 0.8 * s);
        let peak = [rng.random_range(85.0..95.0), rng.random_range(85.0..95.0)];
        let straight = [rng.random_range(160.0..180.0), rng.random_range(160.0..180.0)];
        let tilt = rng.random_range(20.0..30.0);
        let lean = rng.random_range(3.0..7.0);
        let flail = rng.random_range(0.0..5.0);
        let tail = (n - c0).max(1) as f64;
        let a_x = center - dir * d_contact / 2.0;
        (0..n)
            .map(|t| {
                let tf = t as f64;
                let e = env[t];
                let (xa, xb) = if t < c0 {
                    let d = lerp(d_start, d_contact, tf / c0 as f64);
                    (center - dir * d / 2.0, center + dir * d / 2.0)
                } else {
                    let u = (tf - c0 as f64 + 1.0) / tail;
                    (a_x, a_x + dir * (d_contact + d_travel * u * u))
                };
                let walking = if t < c0 { 1.0 } else { 0.2 };
                let mut pa = gaits[0].posture(tf, Point::new(xa, hip_y(&bodies[0], ground)), walking);
                let mut pb = gaits[1].posture(tf, Point::new(xb, hip_y(&bodies[1], ground)), walking);
                pa.lean = lerp(pa.lean, dir * lean, e);
                for (arm, i) in [(&mut pa.left_arm, 0), (&mut pa.right_arm, 1)] {
                    arm.abduction = lerp(arm.abduction, peak[i], e);
                    arm.elbow = lerp(arm.elbow, straight[i], e);
                    if e > 0.0 {
                        arm.target = ArmTarget::Horizontal(dir);
                    }
                }
                pb.lean = lerp(pb.lean, -dir * tilt, e);
                pb.left_arm.abduction += e * flail;
                pb.right_arm.abduction += e * flail;
                [pa, pb]
            })
            .collect()
    } else {
        let speed = rng.random_range(0.85..1.15);
        let span = 0.9 * params.scale * speed;
        (0..n)
            .map(|t| {
                let u = t as f64 / (n - 1) as f64;
                let (xa, xb, gb) = if crossing {
                    let xa = center - dir * span * (1.0 - 2.0 * u);
                    let xb = center + dir * span * (1.0 - 2.0 * u);
                    (xa, xb, ground - 0.12 * params.scale)
                } else {
                    let xa = center - dir * (0.55 * params.scale + 0.3 * span * (1.0 - 2.0 * u));
                    (xa, xa + dir * 1.1 * params.scale, ground)
                };
                let tf = t as f64;
                [
                    gaits[0].posture(tf, Point::new(xa, hip_y(&bodies[0], ground)), 1.0),
                    gaits[1].posture(tf, Point::new(xb, hip_y(&bodies[1], gb)), 1.0),
                ]
            })
            .collect()
    };
    for postures in &frames {
        let pose = [build_pose(&bodies[0], &postures[0]), build_pose(&bodies[1], &postures[1])];
        for (k, p) in pose.iter().enumerate() {
            angles[k].push(true_angles(p));
        }
        poses.push(pose);
    }
    let roles = if push { ["pusher", "pushed"] } else { ["walker", "walker"] };
    let [a0, a1] = angles;
    let truth = GroundTruth {
        clip_id: clip_id(params.scenario, params.seed),
        scenario: params.scenario,
        seed: params.seed,
        contact,
        onset,
        actors: vec![
            ActorTruth { role: roles[0], person: 0, body: body_array(&bodies[0]), angles: a0 },
            ActorTruth { role: roles[1], person: 1, body: body_array(&bodies[1]), angles: a1 },
        ],
    };
    Animation { poses, bodies, truth }
}

pub fn animate(params: &ScenarioParams) -> Result<Animation, SynthError> {
    params.validate()?;
    Ok(animate_with(params, &mut ChaCha8Rng::seed_from_u64(params.seed)))
}

fn q6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6 + 0.0
}

fn observe(
    clean: &[Point; NUM_KEYPOINTS],
    body: &Body,
    params: &ScenarioParams,
    jitter: &Normal<f64>,
    rng: &mut ChaCha8Rng,
) -> Skeleton {
    let mut kps = [Keypoint { x: 0.0, y: 0.0, conf: 1.0 }; NUM_KEYPOINTS];
    for (k, p) in kps.iter_mut().zip(clean) {
        let x = p.x + jitter.sample(rng);
        let y = p.y + jitter.sample(rng);
        let dropped = rng.random_bool(params.dropout_p);
        let conf = if dropped { rng.random_range(0.05..0.45) } else { rng.random_range(0.6..1.0) };
        *k = Keypoint { x: q6(x), y: q6(y), conf: q6(conf) };
    }
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for k in &kps {
        x0 = x0.min(k.x);
        x1 = x1.max(k.x);
        y0 = y0.min(k.y);
        y1 = y1.max(k.y);
    }
    let h = body.height;
    let (bx, by) = (q6(x0 - 0.05 * h), q6(y0 - 0.08 * h));
    let bbox = BBox { x: bx, y: by, w: q6(x1 + 0.05 * h - bx), h: q6(y1 + 0.03 * h - by) };
    let det_conf = q6(rng.random_range(0.8..0.99));
    Skeleton::new(kps, bbox, det_conf).expect("generated skeletons are valid")
}

/// One labeled clip and its ground truth. A pure function of `params`.
pub fn gen_clip(params: &ScenarioParams) -> Result<(ClipRecord, GroundTruth), SynthError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let anim = animate_with(params, &mut rng);
    let jitter = Normal::new(0.0, params.noise_px).map_err(|e| SynthError(e.to_string()))?;
    let frames = anim
        .poses
        .iter()
        .enumerate()
        .map(|(t, pose)| {
            let persons = (0..2).map(|k| observe(&pose[k], &anim.bodies[k], params, &jitter, &mut rng)).collect();
            FrameDetections::new(t as u64, (t as i64 * 1000) / 30, persons)
        })
        .collect();
    let clip = ClipRecord::new(anim.truth.clip_id.clone(), Some(params.scenario), params.resolution, frames)
        .expect("generated clips are valid");
    Ok((clip, anim.truth))
}

/// `n_push` Push clips then `n_normal` Normal clips; clip `i` uses seed
/// `base_seed + i`. Generated in parallel, returned in order.
pub fn gen_corpus_with_truth(
    n_push: usize,
    n_normal: usize,
    base_seed: u64,
    template: &ScenarioParams,
) -> Result<Vec<(ClipRecord, GroundTruth)>, SynthError> {
    template.validate()?;
    (0..n_push + n_normal)
        .into_par_iter()
        .map(|i| {
            let scenario = if i < n_push { Label::Push } else { Label::Normal };
            gen_clip(&ScenarioParams { scenario, seed: base_seed + i as u64, ..template.clone() })
        })
        .collect()
}

pub fn gen_corpus(
    n_push: usize,
    n_normal: usize,
    base_seed: u64,
    template: &ScenarioParams,
) -> Result<Vec<ClipRecord>, SynthError> {
    Ok(gen_corpus_with_truth(n_push, n_normal, base_seed, template)?.into_iter().map(|(c, _)| c).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{extract_features, KinematicsConfig, ABDUCT_L, ABDUCT_R, ELBOW_L, ELBOW_R, TORSO_INCL};
    use crate::wire::{parse_clip_str, serialize_clip};

    fn clean(scenario: Label, seed: u64) -> ScenarioParams {
        ScenarioParams { scenario, seed, noise_px: 0.0, dropout_p: 0.0, ..Default::default() }
    }

    #[test]
    fn same_params_give_identical_bytes() {
        for scenario in [Label::Push, Label::Normal] {
            let p = ScenarioParams { scenario, seed: 11, ..Default::default() };
            let a = serialize_clip(&gen_clip(&p).unwrap().0);
            let b = serialize_clip(&gen_clip(&p).unwrap().0);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn clips_equal_their_wire_round_trip() {
        let (clip, _) = gen_clip(&ScenarioParams { scenario: Label::Push, seed: 3, ..Default::default() }).unwrap();
        let text = String::from_utf8(serialize_clip(&clip)).unwrap();
        assert_eq!(parse_clip_str(&text).unwrap(), clip);
    }

    #[test]
    fn upright_pose_with_hanging_straight_arms() {
        let arm = ArmPose { abduction: 10.0, elbow: 180.0, target: ArmTarget::Outward };
        let posture = Posture {
            hip_mid: Point::new(400.0, 400.0),
            lean: 0.0,
            left_arm: arm,
            right_arm: arm,
            left_leg: 0.0,
            right_leg: 0.0,
            knee_flex: [0.0, 0.0],
        };
        let pts = build_pose(&Body::standard(300.0), &posture);
        let kps = pts.map(|p| Keypoint { x: p.x, y: p.y, conf: 1.0 });
        let skel = Skeleton::new(kps, BBox::new(300.0, 100.0, 200.0, 400.0).unwrap(), 1.0).unwrap();
        let fv = extract_features(&skel, 0, &[], &KinematicsConfig::default());
        assert!(fv.values[TORSO_INCL].abs() < 1e-9);
        assert!((fv.values[ELBOW_L] - 180.0).abs() < 1e-6 && (fv.values[ELBOW_R] - 180.0).abs() < 1e-6);
        for a in [fv.values[ABDUCT_L], fv.values[ABDUCT_R]] {
            assert!((a - 10.0).abs() < 1e-9, "{a}");
        }
    }

    #[test]
    fn truth_matches_posture_parameters() {
        let arm = ArmPose { abduction: 90.0, elbow: 170.0, target: ArmTarget::Horizontal(-1.0) };
        let posture = Posture {
            hip_mid: Point::new(0.0, 0.0),
            lean: -25.0,
            left_arm: arm,
            right_arm: arm,
            left_leg: 10.0,
            right_leg: -10.0,
            knee_flex: [5.0, 5.0],
        };
        let a = true_angles(&build_pose(&Body::standard(300.0), &posture));
        assert!((a[TORSO_INCL] - 25.0).abs() < 1e-9);
        assert!((a[ABDUCT_L] - 90.0).abs() < 1e-9 && (a[ABDUCT_R] - 90.0).abs() < 1e-9);
        assert!((a[ELBOW_L] - 170.0).abs() < 1e-9);
        // Quadrilateral of a symmetric trapezoid.
        assert!((a[0] - a[1]).abs() < 1e-9 && (a[0] + a[3] - 180.0).abs() < 1e-9);
    }

    #[test]
    fn extracted_tilt_matches_truth_on_contact_frames() {
        for seed in 0..5 {
            let (clip, gt) = gen_clip(&clean(Label::Push, seed)).unwrap();
            let (c0, c1) = gt.contact.unwrap();
            assert!(c1 > c0);
            for t in c0..=c1 {
                let skel = &clip.frames[t as usize].persons[1];
                let fv = extract_features(skel, t, &[], &KinematicsConfig::default());
                let truth = gt.actors[1].angles[t as usize][TORSO_INCL];
                assert!((fv.values[TORSO_INCL] - truth).abs() <= 0.5);
                assert!((20.0..=30.0).contains(&truth));
                let pusher = gt.actors[0].angles[t as usize];
                assert!(pusher[ABDUCT_L] > 85.0 - 1e-9 && pusher[ABDUCT_L] < 95.0 + 1e-9);
                assert!(pusher[ELBOW_R] > 160.0 - 1e-9 && pusher[ELBOW_R] < 180.0 + 1e-9);
            }
        }
    }

    #[test]
    fn normal_clips_never_show_the_push_signature() {
        for seed in 0..40 {
            for separated in [false, true] {
                let p = ScenarioParams { seed, separated, ..Default::default() };
                let gt = animate(&p).unwrap().truth;
                assert!(gt.contact.is_none());
                for t in 0..p.n_frames {
                    for k in 0..2 {
                        let me = gt.actors[k].angles[t];
                        let other = gt.actors[1 - k].angles[t];
                        assert!(me[TORSO_INCL] <= 8.0 && me[ABDUCT_L] <= 30.0 && me[ABDUCT_R] <= 30.0);
                        assert!(!(me[ABDUCT_L].max(me[ABDUCT_R]) > 60.0 && other[TORSO_INCL] > 15.0));
                    }
                }
            }
        }
    }

    fn dist(a: Point, b: Point) -> f64 {
        (a.x - b.x).hypot(a.y - b.y)
    }

    #[test]
    fn segments_are_rigid_within_a_clip() {
        let segs = [
            (LEFT_SHOULDER, LEFT_ELBOW),
            (RIGHT_SHOULDER, RIGHT_ELBOW),
            (LEFT_ELBOW, LEFT_WRIST),
            (RIGHT_ELBOW, RIGHT_WRIST),
            (LEFT_HIP, LEFT_KNEE),
            (LEFT_KNEE, LEFT_ANKLE),
            (RIGHT_HIP, RIGHT_KNEE),
            (RIGHT_KNEE, RIGHT_ANKLE),
            (LEFT_SHOULDER, RIGHT_SHOULDER),
            (LEFT_HIP, RIGHT_HIP),
            (LEFT_SHOULDER, LEFT_HIP),
        ];
        for scenario in [Label::Push, Label::Normal] {
            let anim = animate(&ScenarioParams { scenario, seed: 8, ..Default::default() }).unwrap();
            for k in 0..2 {
                for (a, b) in segs {
                    let first = dist(anim.poses[0][k][a], anim.poses[0][k][b]);
                    for pose in &anim.poses {
                        assert!((dist(pose[k][a], pose[k][b]) - first).abs() < 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn corpus_counts_and_seeds() {
        let c = gen_corpus(45, 45, 100, &ScenarioParams::default()).unwrap();
        assert_eq!(c.len(), 90);
        assert_eq!(c.iter().filter(|c| c.label == Some(Label::Push)).count(), 45);
        assert_eq!(c[0].clip_id, "push_000100");
        assert_eq!(c[45].clip_id, "normal_000145");
        assert!(gen_corpus(0, 0, 1, &ScenarioParams::default()).unwrap().is_empty());
        assert_eq!(gen_corpus(21, 21, 1, &ScenarioParams::default()).unwrap().len(), 42);
    }

    #[test]
    fn parallel_generation_matches_sequential() {
        let t = ScenarioParams::case3();
        let par = gen_corpus(3, 3, 50, &t).unwrap();
        let seq: Vec<ClipRecord> = (0..6)
            .map(|i| {
                let scenario = if i < 3 { Label::Push } else { Label::Normal };
                gen_clip(&ScenarioParams { scenario, seed: 50 + i, ..t.clone() }).unwrap().0
            })
            .collect();
        assert_eq!(par, seq);
    }

    #[test]
    fn dropout_lowers_confidence() {
        let p = ScenarioParams { dropout_p: 0.5, seed: 2, ..Default::default() };
        let (clip, _) = gen_clip(&p).unwrap();
        let low = clip.frames.iter().flat_map(|f| &f.persons).flat_map(|s| &s.keypoints).filter(|k| k.conf < 0.5).count();
        let total = clip.frames.len() * 2 * NUM_KEYPOINTS;
        assert!(low > total / 3 && low < 2 * total / 3, "{low}/{total}");
    }

    #[test]
    fn invalid_params_are_rejected() {
        assert!(ScenarioParams { n_frames: 1, ..Default::default() }.validate().is_err());
        assert!(ScenarioParams { dropout_p: 1.0, ..Default::default() }.validate().is_err());
        assert!(ScenarioParams { noise_px: -1.0, ..Default::default() }.validate().is_err());
        assert!(gen_clip(&ScenarioParams { n_frames: 2, scenario: Label::Push, ..Default::default() }).is_ok());
    }
}
