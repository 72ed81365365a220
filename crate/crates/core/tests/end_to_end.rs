use pushwatch_core::eval::{split_clips, ClipDecisionConfig, SplitSpec};
use pushwatch_core::forest::{ForestModel, ForestParams};
use pushwatch_core::pipeline::{evaluate, training_set, Evaluation, PipelineConfig};
use pushwatch_core::synth::{gen_corpus, ScenarioParams};

fn run(template: &ScenarioParams, seed: u64) -> (Evaluation, Vec<u8>) {
    let clips = gen_corpus(45, 45, seed, template).unwrap();
    let split = split_clips(&clips, &SplitSpec::default()).unwrap();
    let train: Vec<_> = split.train.iter().map(|&i| &clips[i]).collect();
    let test: Vec<_> = split.test.iter().map(|&i| &clips[i]).collect();
    let cfg = PipelineConfig::default();
    let (x, y) = training_set(&train, &cfg).unwrap();
    let model = ForestModel::fit(&x, &y, &ForestParams::default()).unwrap();
    let ev = evaluate(&model, &test, &cfg, &ClipDecisionConfig::default()).unwrap();
    (ev, model.save())
}

#[test]
fn default_noise_corpus_classifies_test_clips() {
    let (ev, model) = run(&ScenarioParams::default(), 1000);
    let rows = ev.clip_level.normalize_rows();
    assert!(rows[0].unwrap()[0] >= 0.85 && rows[1].unwrap()[1] >= 0.85, "{rows:?}");
    assert_eq!(ev.clip_level.total(), 9);
    let (again, model_again) = run(&ScenarioParams::default(), 1000);
    assert_eq!(model, model_again);
    assert_eq!(ev, again);
}
