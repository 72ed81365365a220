use pushwatch_core::forest::{ForestModel, ForestParams};
use pushwatch_core::kinematics::{FeatureSet, KinematicsConfig};
use pushwatch_core::pipeline::{training_set, PipelineConfig, PipelineError};
use pushwatch_core::stream::{run_stream, RunConfig, StreamError};
use pushwatch_core::synth::{gen_clip, gen_corpus, ScenarioParams};
use pushwatch_core::wire::serialize_clip;
use pushwatch_core::{ClipRecord, Label};

fn model() -> ForestModel {
    let clips = gen_corpus(12, 12, 500, &ScenarioParams::default()).unwrap();
    let refs: Vec<&ClipRecord> = clips.iter().collect();
    let (x, y) = training_set(&refs, &PipelineConfig::default()).unwrap();
    ForestModel::fit(&x, &y, &ForestParams { n_trees: 30, ..Default::default() }).unwrap()
}

fn run(input: &[u8], m: &ForestModel, threads: usize) -> (String, u64, u64) {
    let mut out = Vec::new();
    let s = run_stream(input, &mut out, m, &RunConfig::default(), threads).unwrap();
    (String::from_utf8(out).unwrap(), s.frames, s.skipped)
}

#[test]
fn push_clip_raises_alert_during_contact() {
    let m = model();
    for seed in 9000u64..9010 {
        let (clip, gt) = gen_clip(&ScenarioParams { scenario: Label::Push, seed, ..Default::default() }).unwrap();
        let (out, frames, _) = run(&serialize_clip(&clip), &m, 1);
        assert_eq!(frames as usize, clip.frames.len());
        let (_, c1) = gt.contact.unwrap();
        let onset = gt.onset.unwrap();
        let first_alert = out
            .lines()
            .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
            .find(|v| v["alert"] == true)
            .map(|v| v["frame"].as_u64().unwrap())
            .expect("an alert");
        assert!(first_alert >= onset && first_alert <= c1 + 30, "{first_alert} vs {onset}..{c1}");
    }
}

#[test]
fn lone_person_never_pairs() {
    let m = model();
    let (mut clip, _) = gen_clip(&ScenarioParams { seed: 4, ..Default::default() }).unwrap();
    for f in &mut clip.frames {
        f.persons.truncate(1);
    }
    let (out, frames, _) = run(&serialize_clip(&clip), &m, 1);
    assert_eq!(frames, 60);
    assert!(out.lines().all(|l| l.contains("\"pairs\": [], \"alert\": false")));
}

#[test]
fn threads_do_not_change_output() {
    let m = model();
    let mut input = Vec::new();
    for seed in 0..4 {
        let scenario = if seed % 2 == 0 { Label::Push } else { Label::Normal };
        let (mut clip, _) = gen_clip(&ScenarioParams { scenario, seed, ..Default::default() }).unwrap();
        for f in &mut clip.frames {
            f.frame_idx += seed * 1000;
        }
        input.extend(serialize_clip(&clip));
        input.extend(b"{broken\n");
    }
    let (a, fa, sa) = run(&input, &m, 1);
    let (b, fb, sb) = run(&input, &m, 4);
    assert_eq!(a, b);
    assert_eq!((fa, sa), (240, 4));
    assert_eq!((fb, sb), (240, 4));
}

#[test]
fn out_of_order_frames_are_skipped() {
    let m = model();
    let (clip, _) = gen_clip(&ScenarioParams { seed: 2, n_frames: 5, ..Default::default() }).unwrap();
    let text = String::from_utf8(serialize_clip(&clip)).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let shuffled = [lines[0], lines[2], lines[1], lines[3], lines[4]].join("\n");
    let mut out = Vec::new();
    let s = run_stream(shuffled.as_bytes(), &mut out, &m, &RunConfig::default(), 1).unwrap();
    assert_eq!((s.frames, s.skipped), (4, 1));
    assert_eq!(s.issues[0].line, 3);
}

#[test]
fn feature_set_mismatch_is_a_startup_error() {
    let m = model();
    let mut cfg = RunConfig::default();
    cfg.pipeline.kinematics = KinematicsConfig { feature_set: FeatureSet::Quad, ..Default::default() };
    let r = run_stream(&b""[..], Vec::new(), &m, &cfg, 1);
    assert!(matches!(r, Err(StreamError::Pipeline(PipelineError::FeatureDim { model: 18, pipeline: 8, .. }))));
}

#[test]
fn resident_state_stays_bounded_under_identity_churn() {
    use pushwatch_core::pipeline::{FeatureStage, TrackStage};
    use pushwatch_core::tracker::TrackerConfig;

    // Every 40 frames both actors jump far away, so the tracker keeps
    // opening new identities for the whole stream.
    let cfg = PipelineConfig::default();
    let mut track = TrackStage::new(&cfg.tracker).unwrap();
    let mut feat = FeatureStage::new(&cfg.kinematics, &cfg.gate);
    let (clip, _) = gen_clip(&ScenarioParams { seed: 4, n_frames: 40, ..Default::default() }).unwrap();
    let max_age = TrackerConfig::default().max_age as usize;
    let mut peak = (0, 0);
    for k in 0..100u64 {
        for f in &clip.frames {
            let mut f = f.clone();
            f.frame_idx += k * 40;
            for p in &mut f.persons {
                p.bbox.x += (k % 2) as f64 * 3000.0;
            }
            let tracks = track.process(&f).unwrap();
            feat.process(f.frame_idx, &tracks);
            peak = (peak.0.max(track.live_tracks()), peak.1.max(feat.tracked_histories()));
        }
    }
    // Two actors per segment, and a lost track lives at most max_age frames.
    let bound = 2 * (max_age / 40 + 2);
    assert!(peak.0 <= bound && peak.1 <= bound, "peak {peak:?}, bound {bound}");
}
