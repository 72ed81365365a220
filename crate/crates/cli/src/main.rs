mod settings;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pushwatch_core::eval::split_clips;
use pushwatch_core::forest::{ForestModel, FORMAT_VERSION};
use pushwatch_core::interaction::PairSample;
use pushwatch_core::pipeline::{clip_pair_samples, evaluate, FeatureStage, TrackStage};
use pushwatch_core::stream::run_stream;
use pushwatch_core::synth::{gen_corpus_with_truth, ScenarioParams};
use pushwatch_core::table::{read_pairs, write_pairs, write_predictions, FeatureWriter};
use pushwatch_core::tracker::track_clip;
use pushwatch_core::wire::{parse_clip, serialize_clip};
use pushwatch_core::ClipRecord;
use serde_json::{json, Value};

use settings::{ConfigError, Settings};

#[derive(Parser)]
#[command(name = "pushwatch", about = "Skeleton-based push detection for surveillance video", disable_version_flag = true)]
struct Cli {
    /// key=value settings file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the version and the model format it reads and writes.
    #[arg(long)]
    version: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic labeled clips plus ground_truth.json.
    Synth(SynthArgs),
    /// Assign track ids to every person of a clip.
    Track(TrackArgs),
    /// Per-person feature table, or pair samples with --pairs.
    Extract(ExtractArgs),
    /// Train a forest on a pair-sample table.
    Train(TrainArgs),
    /// Classify the rows of a pair-sample table.
    Predict(PredictArgs),
    /// Clip- and frame-level evaluation on a split of a clip directory.
    Eval(EvalArgs),
    /// Live mode: JSONL frames in, JSONL events out.
    Run(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Scenario {
    Push,
    Normal,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Case1,
    Case3,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Bucket {
    Train,
    Val,
    Test,
    All,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    scenario: Scenario,
    #[arg(long, default_value_t = 45)]
    n: usize,
    /// Clip i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Preset::Case1)]
    preset: Preset,
    /// Keypoint jitter in pixels; overrides the preset.
    #[arg(long)]
    noise: Option<f64>,
    /// Low-confidence keypoint probability; overrides the preset.
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    frames: Option<usize>,
    /// Nominal person height in pixels.
    #[arg(long)]
    scale: Option<f64>,
    /// Normal clips walk in lanes that never overlap.
    #[arg(long)]
    separated: bool,
}

#[derive(Args)]
struct TrackerFlags {
    #[arg(long)]
    iou_min: Option<String>,
    #[arg(long)]
    max_age: Option<String>,
    #[arg(long)]
    history_cap: Option<String>,
}

impl TrackerFlags {
    fn pairs(&self) -> Vec<(&'static str, Option<String>)> {
        vec![("iou_min", self.iou_min.clone()), ("max_age", self.max_age.clone()), ("history_cap", self.history_cap.clone())]
    }
}

#[derive(Args)]
struct FeatureFlags {
    /// Per-person features: 4 (quadrilateral) or 9 (all).
    #[arg(long)]
    features: Option<String>,
    #[arg(long)]
    kp_conf_min: Option<String>,
    #[arg(long)]
    impute_window: Option<String>,
    /// Gate radius as a multiple of the taller box height.
    #[arg(long)]
    kappa: Option<String>,
}

impl FeatureFlags {
    fn pairs(&self) -> Vec<(&'static str, Option<String>)> {
        vec![
            ("features", self.features.clone()),
            ("kp_conf_min", self.kp_conf_min.clone()),
            ("impute_window", self.impute_window.clone()),
            ("kappa", self.kappa.clone()),
        ]
    }
}

#[derive(Args)]
struct TrackArgs {
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    tracker: TrackerFlags,
}

#[derive(Args)]
struct ExtractArgs {
    /// One clip file; stdin when neither this nor --clips is given.
    #[arg(long = "in", conflicts_with = "clips")]
    input: Option<PathBuf>,
    /// Directory of clip files.
    #[arg(long)]
    clips: Option<PathBuf>,
    /// Emit pair samples instead of per-person features.
    #[arg(long)]
    pairs: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Train/val/test fractions, e.g. 0.8,0.1,0.1.
    #[arg(long)]
    split: Option<String>,
    /// Split seed.
    #[arg(long)]
    seed: Option<String>,
    /// Split bucket to export.
    #[arg(long, value_enum, default_value_t = Bucket::All)]
    bucket: Bucket,
    #[command(flatten)]
    tracker: TrackerFlags,
    #[command(flatten)]
    feats: FeatureFlags,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    trees: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Expected per-person feature count of the table: 4 or 9.
    #[arg(long)]
    features: Option<String>,
    #[arg(long)]
    min_samples_split: Option<String>,
    #[arg(long)]
    min_samples_leaf: Option<String>,
    /// Candidate features per split; `auto` is the square root rule.
    #[arg(long)]
    max_features: Option<String>,
    #[arg(long)]
    max_depth: Option<String>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    clips: PathBuf,
    #[arg(long)]
    split: Option<String>,
    /// Split seed.
    #[arg(long)]
    seed: Option<String>,
    #[arg(long, value_enum, default_value_t = Bucket::Test)]
    bucket: Bucket,
    /// Push fraction of gated frames that makes a clip Push.
    #[arg(long)]
    tau: Option<String>,
    /// Also write the JSON report to this file, `-` for stdout.
    #[arg(long)]
    json: Option<String>,
    #[command(flatten)]
    tracker: TrackerFlags,
    #[command(flatten)]
    feats: FeatureFlags,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// More than one runs the staged pipeline on separate threads.
    #[arg(long)]
    threads: Option<String>,
    /// Sliding window length in frames.
    #[arg(long)]
    window: Option<String>,
    /// per-frame or per-window.
    #[arg(long)]
    alert_mode: Option<String>,
    #[arg(long)]
    tau: Option<String>,
    /// Gated frames a window needs before it can alert.
    #[arg(long)]
    min_gated: Option<String>,
    #[command(flatten)]
    tracker: TrackerFlags,
    #[command(flatten)]
    feats: FeatureFlags,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.version {
        println!("pushwatch {} (model format_version {FORMAT_VERSION}; reads {FORMAT_VERSION})", env!("CARGO_PKG_VERSION"));
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        eprintln!("error: a subcommand is required (see --help)");
        return ExitCode::from(2);
    };
    let mut settings = Settings::new();
    let outcome = match &cli.config {
        Some(path) => settings.apply_file(path).map_err(anyhow::Error::from),
        None => Ok(()),
    }
    .and_then(|_| dispatch(command, settings));
    match outcome {
        Ok(0) => ExitCode::SUCCESS,
        Ok(n) => {
            eprintln!("{n} input error(s)");
            ExitCode::from(1)
        }
        Err(e) if e.chain().any(|c| c.downcast_ref::<io::Error>().is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe)) => {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<ConfigError>()) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

/// Runs a subcommand; the result is the number of skipped input items.
fn dispatch(command: Command, mut s: Settings) -> Result<usize> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Track(a) => {
            s.apply_flags(&a.tracker.pairs())?;
            track(a, &s)
        }
        Command::Extract(a) => {
            s.apply_flags(&a.tracker.pairs())?;
            s.apply_flags(&a.feats.pairs())?;
            s.apply_flags(&[("split", a.split.clone()), ("split_seed", a.seed.clone())])?;
            extract(a, &s)
        }
        Command::Train(a) => {
            s.apply_flags(&[
                ("trees", a.trees.clone()),
                ("seed", a.seed.clone()),
                ("features", a.features.clone()),
                ("min_samples_split", a.min_samples_split.clone()),
                ("min_samples_leaf", a.min_samples_leaf.clone()),
                ("max_features", a.max_features.clone()),
                ("max_depth", a.max_depth.clone()),
            ])?;
            train(a, &s)
        }
        Command::Predict(a) => predict(a),
        Command::Eval(a) => {
            s.apply_flags(&a.tracker.pairs())?;
            s.apply_flags(&a.feats.pairs())?;
            s.apply_flags(&[("split", a.split.clone()), ("split_seed", a.seed.clone()), ("tau_clip", a.tau.clone())])?;
            eval(a, s)
        }
        Command::Run(a) => {
            s.apply_flags(&a.tracker.pairs())?;
            s.apply_flags(&a.feats.pairs())?;
            s.apply_flags(&[
                ("threads", a.threads.clone()),
                ("window_frames", a.window.clone()),
                ("alert_mode", a.alert_mode.clone()),
                ("tau_clip", a.tau.clone()),
                ("min_gated", a.min_gated.clone()),
            ])?;
            run(a, s)
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> anyhow::Error {
    ConfigError(e.to_string()).into()
}

fn open_input(path: &Option<PathBuf>) -> Result<Box<dyn BufRead + Send>> {
    Ok(match path {
        Some(p) => Box::new(BufReader::new(File::open(p).with_context(|| format!("cannot open {}", p.display()))?)),
        None => Box::new(BufReader::new(io::stdin())),
    })
}

fn open_output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("cannot create {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_model(path: &Path) -> Result<ForestModel> {
    let bytes = fs::read(path).with_context(|| format!("cannot read model {}", path.display())).map_err(config_err)?;
    ForestModel::load(&bytes).map_err(|e| config_err(format!("model {}: {e}", path.display())))
}

/// Parses every `*.jsonl` file of `dir` in name order. Unreadable clips are
/// skipped and counted.
fn load_clip_dir(dir: &Path) -> Result<(Vec<ClipRecord>, usize)> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("cannot list {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    let mut clips = Vec::new();
    let mut bad = 0;
    for p in paths {
        let parsed = File::open(&p).map_err(anyhow::Error::from).and_then(|f| Ok(parse_clip(BufReader::new(f))?));
        match parsed {
            Ok(c) => clips.push(c),
            Err(e) => {
                log::warn!("{}: {e:#}; skipped", p.display());
                bad += 1;
            }
        }
    }
    if clips.is_empty() {
        bail!("no readable clips in {}", dir.display());
    }
    Ok((clips, bad))
}

fn select_bucket<'a>(clips: &'a [ClipRecord], s: &Settings, bucket: Bucket) -> Result<Vec<&'a ClipRecord>> {
    if bucket == Bucket::All {
        return Ok(clips.iter().collect());
    }
    s.split.validate().map_err(config_err)?;
    let split = split_clips(clips, &s.split)?;
    let idx = match bucket {
        Bucket::Train => split.train,
        Bucket::Val => split.val,
        Bucket::Test => split.test,
        Bucket::All => unreachable!(),
    };
    Ok(idx.into_iter().map(|i| &clips[i]).collect())
}

fn synth(a: SynthArgs) -> Result<usize> {
    let mut template = match a.preset {
        Preset::Case1 => ScenarioParams::default(),
        Preset::Case3 => ScenarioParams::case3(),
    };
    if let Some(v) = a.noise {
        template.noise_px = v;
    }
    if let Some(v) = a.dropout {
        template.dropout_p = v;
    }
    if let Some(v) = a.frames {
        template.n_frames = v;
    }
    if let Some(v) = a.scale {
        template.scale = v;
    }
    template.separated = a.separated;
    let (n_push, n_normal) = match a.scenario {
        Scenario::Push => (a.n, 0),
        Scenario::Normal => (0, a.n),
    };
    let corpus = gen_corpus_with_truth(n_push, n_normal, a.seed, &template).map_err(config_err)?;
    fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    let gt_path = a.out.join("ground_truth.json");
    let mut gt: BTreeMap<String, Value> = match fs::read(&gt_path) {
        Ok(bytes) => serde_json::from_slice(&bytes).with_context(|| format!("cannot parse {}", gt_path.display()))?,
        Err(_) => BTreeMap::new(),
    };
    for (clip, truth) in &corpus {
        fs::write(a.out.join(format!("{}.jsonl", clip.clip_id)), serialize_clip(clip))?;
        gt.insert(clip.clip_id.clone(), serde_json::to_value(truth)?);
    }
    let mut text = serde_json::to_string_pretty(&gt)?;
    text.push('\n');
    fs::write(&gt_path, text)?;
    eprintln!("wrote {} clips to {}", corpus.len(), a.out.display());
    Ok(0)
}

fn track(a: TrackArgs, s: &Settings) -> Result<usize> {
    s.tracker.validate().map_err(config_err)?;
    let clip = parse_clip(open_input(&a.input)?).context("cannot read clip")?;
    let tracked = track_clip(&clip, &s.tracker)?;
    let mut out = open_output(&a.out)?;
    out.write_all(&serialize_clip(&tracked))?;
    out.flush()?;
    Ok(0)
}

fn extract(a: ExtractArgs, s: &Settings) -> Result<usize> {
    let cfg = s.pipeline();
    cfg.validate().map_err(config_err)?;
    let (clips, bad) = match &a.clips {
        Some(dir) => load_clip_dir(dir)?,
        None => (vec![parse_clip(open_input(&a.input)?).context("cannot read clip")?], 0),
    };
    let selected = select_bucket(&clips, s, a.bucket)?;
    let out = open_output(&a.out)?;
    if a.pairs {
        let samples: Vec<PairSample> = selected
            .iter()
            .map(|c| clip_pair_samples(c, &cfg))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .flatten()
            .collect();
        write_pairs(out, cfg.pair_dim(), &samples)?;
    } else {
        let mut w = FeatureWriter::new(out)?;
        for clip in selected {
            let mut track = TrackStage::new(&cfg.tracker)?;
            let mut feat = FeatureStage::new(&cfg.kinematics, &cfg.gate);
            for frame in &clip.frames {
                let tracks = track.process(frame)?;
                for ((tid, _), fv) in tracks.iter().zip(feat.features(frame.frame_idx, &tracks)) {
                    w.write(&clip.clip_id, frame.frame_idx, *tid, &fv)?;
                }
            }
        }
        w.finish()?.flush()?;
    }
    Ok(bad)
}

fn read_pair_file(path: &Path) -> Result<(usize, Vec<PairSample>)> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    read_pairs(BufReader::new(f)).with_context(|| format!("cannot read {}", path.display()))
}

fn train(a: TrainArgs, s: &Settings) -> Result<usize> {
    let (dim, samples) = read_pair_file(&a.pairs)?;
    if s.feature_set_explicit && dim != 2 * s.kinematics.feature_set.per_person() {
        return Err(config_err(format!(
            "table has {dim} features but features={} was configured",
            s.kinematics.feature_set.per_person()
        )));
    }
    let mut x = Vec::with_capacity(samples.len());
    let mut y = Vec::with_capacity(samples.len());
    let mut unlabeled = 0;
    for smp in samples {
        match smp.label {
            Some(l) => {
                x.push(smp.features);
                y.push(l);
            }
            None => unlabeled += 1,
        }
    }
    if unlabeled > 0 {
        log::warn!("{unlabeled} unlabeled rows skipped");
    }
    let names = pair_feature_names(dim);
    let model = ForestModel::fit(&x, &y, &s.forest).and_then(|m| m.with_feature_names(names)).map_err(config_err)?;
    fs::write(&a.out, model.save()).with_context(|| format!("cannot write {}", a.out.display()))?;
    eprintln!("trained {} trees on {} samples", s.forest.n_trees, x.len());
    Ok(unlabeled)
}

fn pair_feature_names(dim: usize) -> Vec<String> {
    let set = pushwatch_core::kinematics::FeatureSet::from_count(dim / 2);
    match set {
        Some(set) if dim % 2 == 0 => ["a", "b"]
            .iter()
            .flat_map(|side| set.names().map(move |n| format!("{side}_{n}")))
            .collect(),
        _ => (1..=dim).map(|i| format!("f{i}")).collect(),
    }
}

fn predict(a: PredictArgs) -> Result<usize> {
    let model = load_model(&a.model)?;
    let (dim, samples) = read_pair_file(&a.pairs)?;
    if dim != model.feature_dim {
        return Err(config_err(format!("table has {dim} features, model expects {}", model.feature_dim)));
    }
    let preds = samples.iter().map(|smp| model.predict_with_proba(&smp.features)).collect::<Result<Vec<_>, _>>()?;
    write_predictions(open_output(&a.out)?, dim, &samples, &preds)?;
    Ok(0)
}

fn matrix_json(m: &pushwatch_core::eval::ConfusionMatrix) -> Value {
    let (precision, recall) = m.precision_recall();
    json!({
        "confusion_counts": m.counts,
        "confusion_normalized": m.normalize_rows(),
        "precision": precision,
        "recall": recall,
    })
}

fn eval(a: EvalArgs, mut s: Settings) -> Result<usize> {
    let model = load_model(&a.model)?;
    s.adopt_model_features(model.feature_dim)?;
    let cfg = s.pipeline();
    cfg.validate().map_err(config_err)?;
    s.decision.validate().map_err(config_err)?;
    let (clips, bad) = load_clip_dir(&a.clips)?;
    let selected = select_bucket(&clips, &s, a.bucket)?;
    let ev = evaluate(&model, &selected, &cfg, &s.decision)?;

    let mut report = String::new();
    let bucket = match a.bucket {
        Bucket::Train => "train",
        Bucket::Val => "val",
        Bucket::Test => "test",
        Bucket::All => "all",
    };
    report.push_str(&format!(
        "clips: {} ({bucket} bucket of {}; split {},{},{} seed {})\n",
        selected.len(),
        clips.len(),
        s.split.train,
        s.split.val,
        s.split.test,
        s.split.seed
    ));
    report.push_str(&format!(
        "features per person: {}  kappa: {}  tau_clip: {}\n\n",
        s.kinematics.feature_set.per_person(),
        s.gate.kappa,
        s.decision.tau_clip
    ));
    for (title, m) in [("clip level", &ev.clip_level), ("gated frame level", &ev.frame_level)] {
        let (p, r) = m.precision_recall();
        report.push_str(&format!("{title} (n = {})\n", m.total()));
        report.push_str(&format!("counts [[{}, {}], [{}, {}]]\n", m.counts[0][0], m.counts[0][1], m.counts[1][0], m.counts[1][1]));
        report.push_str(&m.render_normalized());
        if !report.ends_with('\n') {
            report.push('\n');
        }
        report.push_str(&format!(
            "precision {}  recall {}\n\n",
            pushwatch_core::eval::fmt_opt(p),
            pushwatch_core::eval::fmt_opt(r)
        ));
    }
    report.push_str("per clip\n");
    for o in &ev.clips {
        report.push_str(&format!(
            "  {:<16} truth {:<6} pred {:<6} push {}/{}\n",
            o.clip_id,
            o.truth.as_str(),
            o.pred.as_str(),
            o.push_frames,
            o.gated_frames
        ));
    }

    let mut doc = matrix_json(&ev.clip_level);
    doc["frame_level"] = matrix_json(&ev.frame_level);
    doc["clips"] = serde_json::to_value(&ev.clips)?;
    doc["config"] = json!({
        "model": a.model.display().to_string(),
        "clips_dir": a.clips.display().to_string(),
        "bucket": bucket,
        "split": [s.split.train, s.split.val, s.split.test],
        "split_seed": s.split.seed,
        "stratified": s.split.stratified,
        "features": s.kinematics.feature_set.per_person(),
        "iou_min": s.tracker.iou_min,
        "max_age": s.tracker.max_age,
        "kp_conf_min": s.kinematics.kp_conf_min,
        "impute_window": s.kinematics.impute_window,
        "kappa": s.gate.kappa,
        "tau_clip": s.decision.tau_clip,
    });
    let json_text = format!("{}\n", serde_json::to_string_pretty(&doc)?);
    match a.json.as_deref() {
        Some("-") => {
            print!("{json_text}");
            eprint!("{report}");
        }
        Some(path) => {
            fs::write(path, &json_text).with_context(|| format!("cannot write {path}"))?;
            print!("{report}");
        }
        None => print!("{report}"),
    }
    Ok(bad)
}

fn run(a: RunArgs, mut s: Settings) -> Result<usize> {
    let model = load_model(&a.model)?;
    s.adopt_model_features(model.feature_dim)?;
    let cfg = s.run_config();
    let input = open_input(&a.input)?;
    let output = open_output(&a.out)?;
    let summary = run_stream(input, output, &model, &cfg, s.threads.max(1)).map_err(|e| match e {
        pushwatch_core::stream::StreamError::Io(io) => anyhow::Error::from(io),
        other => config_err(other),
    })?;
    log::info!("{} frames, {} alert frames, {} skipped", summary.frames, summary.alerts, summary.skipped);
    Ok(summary.skipped as usize)
}
