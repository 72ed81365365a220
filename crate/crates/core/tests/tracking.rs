mod common;

use std::collections::BTreeSet;

use pushwatch_core::interaction::{build_pair_samples, GateConfig};
use pushwatch_core::kinematics::KinematicsConfig;
use pushwatch_core::synth::{gen_clip, ScenarioParams};
use pushwatch_core::tracker::{greedy_match, iou, track_clip, TrackerConfig};
use pushwatch_core::{BBox, Label};

#[test]
fn separated_actors_keep_one_id_each() {
    for seed in 0..50u64 {
        let p = ScenarioParams { seed, separated: true, ..Default::default() };
        let (clip, _) = gen_clip(&p).unwrap();
        for f in &clip.frames {
            assert_eq!(iou(&f.persons[0].bbox, &f.persons[1].bbox), 0.0);
        }
        let tracked = track_clip(&clip, &TrackerConfig::default()).unwrap();
        for actor in 0..2 {
            let ids: BTreeSet<u64> = tracked.frames.iter().map(|f| f.persons[actor].tid.unwrap()).collect();
            assert_eq!(ids.len(), 1, "seed {seed} actor {actor}");
        }
    }
}

fn boxes_2x2(k: u64) -> ([BBox; 2], [BBox; 2]) {
    let f = k as f64;
    let t = [BBox::new(0.0, 0.0, 10.0, 10.0).unwrap(), BBox::new(6.0 + f * 0.1, 0.0, 10.0, 10.0).unwrap()];
    let d = [
        BBox::new(4.0 + f * 0.05, 0.5, 10.0, 10.0).unwrap(),
        BBox::new(1.0 + f * 0.2, -0.5, 10.0, 10.0).unwrap(),
    ];
    (t, d)
}

#[test]
fn greedy_matches_exhaustive_on_crossings() {
    let mut checked = 0;
    for k in 0..40 {
        let (t, d) = boxes_2x2(k);
        let m = [[iou(&t[0], &d[0]), iou(&t[0], &d[1])], [iou(&t[1], &d[0]), iou(&t[1], &d[1])]];
        let all: Vec<f64> = m.iter().flatten().copied().collect();
        let mut sorted = all.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        if sorted.len() < 4 || all.iter().any(|&v| v < 0.3) {
            continue;
        }
        // Greedy is optimal on 2x2 when the best pair also belongs to the
        // best-sum assignment.
        let best = common::brute_force_2x2(m);
        let top = (0..4).max_by(|&a, &b| all[a].total_cmp(&all[b])).unwrap();
        if best[top / 2] != top % 2 {
            continue;
        }
        let ious = vec![m[0].to_vec(), m[1].to_vec()];
        let got = greedy_match(&ious, &[1, 2], 0.3);
        let mut assign = [usize::MAX; 2];
        for (tp, di) in got {
            assign[tp] = di;
        }
        assert_eq!(assign, best, "instance {k}");
        checked += 1;
    }
    assert!(checked > 5, "only {checked} instances exercised");
}

#[test]
fn person_order_does_not_change_pair_samples() {
    let (clip, _) = gen_clip(&ScenarioParams { scenario: Label::Push, seed: 12, ..Default::default() }).unwrap();
    let tracked = track_clip(&clip, &TrackerConfig::default()).unwrap();
    let mut swapped = tracked.clone();
    for f in &mut swapped.frames {
        f.persons.reverse();
    }
    let k = KinematicsConfig::default();
    let g = GateConfig::default();
    let a = build_pair_samples(&tracked, &k, &g).unwrap();
    let b = build_pair_samples(&swapped, &k, &g).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
    assert!(a.iter().all(|s| s.label == Some(Label::Push) && s.features.len() == 18));
}

#[test]
fn far_apart_actors_give_no_samples() {
    let (clip, _) = gen_clip(&ScenarioParams { seed: 1, ..Default::default() }).unwrap();
    let mut tracked = track_clip(&clip, &TrackerConfig::default()).unwrap();
    for f in &mut tracked.frames {
        f.persons[1].bbox.x += 5000.0;
    }
    let s = build_pair_samples(&tracked, &KinematicsConfig::default(), &GateConfig::default()).unwrap();
    assert!(s.is_empty());
}
