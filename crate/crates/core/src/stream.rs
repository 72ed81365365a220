//! Live mode: JSONL frames in, one JSONL event per frame out.
//!
//! Each event lists the classified pairs of the frame and an alert flag.
//! With windowed alerts the flag is raised when, over the last
//! `window_frames` frames, the fraction of gated frames predicted Push
//! reaches `tau_clip` and the window holds at least `min_gated` gated
//! frames, so a single early frame cannot raise it. Resident state is the tracker, the per-track
//! imputation state and the window.
//!
//! With more than one thread the work runs as a chain
//! reader -> tracking and features -> classification and alerts -> writer
//! over bounded channels; every stage is in order, so the output is the
//! same as the single-threaded loop.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::sync::mpsc::{sync_channel, Receiver, SyncSender};
use std::thread;

use thiserror::Error;

use crate::eval::ClipDecisionConfig;
use crate::forest::ForestModel;
use crate::pipeline::{classify, frame_label, FeatureStage, PairPrediction, PairRow, PipelineConfig, PipelineError, TrackStage};
use crate::skeleton::{FrameDetections, Label};
use crate::wire::{format_float, parse_frame_line};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AlertMode {
    /// Alert on any frame with a Push pair.
    PerFrame,
    /// Alert on the sliding-window Push fraction.
    #[default]
    PerWindow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub decision: ClipDecisionConfig,
    pub alert_mode: AlertMode,
    pub window_frames: usize,
    /// Windowed alerts need at least this many gated frames in the window.
    pub min_gated: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            decision: ClipDecisionConfig::default(),
            alert_mode: AlertMode::PerWindow,
            window_frames: 30,
            min_gated: 10,
        }
    }
}

#[derive(Debug, Error)]
pub enum StreamError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("window_frames must be at least 1")]
    Window,
    #[error(transparent)]
    Decision(#[from] crate::eval::EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A skipped input line.
#[derive(Debug, Clone, PartialEq)]
pub struct InputIssue {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunSummary {
    pub frames: u64,
    pub alerts: u64,
    pub skipped: u64,
    /// The first few skipped lines.
    pub issues: Vec<InputIssue>,
}

const MAX_ISSUES: usize = 20;

/// Sliding window over per-frame gated/push flags.
#[derive(Debug)]
pub struct AlertWindow {
    cap: usize,
    frames: VecDeque<Option<Label>>,
    gated: usize,
    push: usize,
}

impl AlertWindow {
    pub fn new(cap: usize) -> Self {
        Self { cap, frames: VecDeque::with_capacity(cap), gated: 0, push: 0 }
    }

    pub fn push(&mut self, label: Option<Label>) {
        if self.frames.len() == self.cap {
            if let Some(old) = self.frames.pop_front().flatten() {
                self.gated -= 1;
                self.push -= (old == Label::Push) as usize;
            }
        }
        if let Some(l) = label {
            self.gated += 1;
            self.push += (l == Label::Push) as usize;
        }
        self.frames.push_back(label);
    }

    pub fn counts(&self) -> (usize, usize) {
        (self.push, self.gated)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

pub fn format_event(frame: u64, preds: &[PairPrediction], alert: bool) -> String {
    let mut s = format!("{{\"frame\": {frame}, \"pairs\": [");
    for (i, p) in preds.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        let _ = write!(
            s,
            "{{\"a\": {}, \"b\": {}, \"pred\": \"{}\", \"proba\": {}}}",
            p.tid_a,
            p.tid_b,
            p.pred.as_str(),
            format_float(p.proba)
        );
    }
    let _ = write!(s, "], \"alert\": {alert}}}");
    s
}

enum Item<T> {
    Frame(T),
    Issue(InputIssue),
}

/// Classification and alert stage.
struct Decider<'m> {
    model: &'m ForestModel,
    cfg: RunConfig,
    window: AlertWindow,
}

impl Decider<'_> {
    fn event(&mut self, frame: u64, rows: &[PairRow]) -> Result<(String, bool), StreamError> {
        let preds = classify(self.model, rows).map_err(PipelineError::from)?;
        let label = frame_label(&preds);
        self.window.push(label);
        let alert = match self.cfg.alert_mode {
            AlertMode::PerFrame => label == Some(Label::Push),
            AlertMode::PerWindow => {
                let (push, gated) = self.window.counts();
                gated >= self.cfg.min_gated && self.cfg.decision.decide(push, gated) == Label::Push
            }
        };
        Ok((format_event(frame, &preds, alert), alert))
    }
}

/// Tracking and feature stage with frame-order checking.
struct Featurizer {
    track: TrackStage,
    feat: FeatureStage,
    last_frame: Option<u64>,
}

impl Featurizer {
    fn rows(&mut self, line: usize, frame: &FrameDetections) -> Result<Vec<PairRow>, InputIssue> {
        if let Some(prev) = self.last_frame {
            if frame.frame_idx <= prev {
                return Err(InputIssue {
                    line,
                    message: format!("frame {} does not follow frame {prev}", frame.frame_idx),
                });
            }
        }
        let tracks = self.track.process(frame).map_err(|e| InputIssue { line, message: e.to_string() })?;
        self.last_frame = Some(frame.frame_idx);
        Ok(self.feat.process(frame.frame_idx, &tracks))
    }
}

fn read_item(n: usize, line: std::io::Result<String>) -> Option<Result<Item<(usize, FrameDetections)>, std::io::Error>> {
    match line {
        Err(e) => Some(Err(e)),
        Ok(l) if l.trim().is_empty() => None,
        Ok(l) => Some(Ok(match parse_frame_line(&l) {
            Ok(fl) => Item::Frame((n, fl.frame)),
            Err(e) => Item::Issue(InputIssue { line: n, message: e.to_string() }),
        })),
    }
}

fn note(summary: &mut RunSummary, issue: InputIssue) {
    log::warn!("line {}: {}; skipped", issue.line, issue.message);
    summary.skipped += 1;
    if summary.issues.len() < MAX_ISSUES {
        summary.issues.push(issue);
    }
}

/// Runs the live pipeline over `input`, writing one event line per valid
/// frame to `output`. Malformed or out-of-order lines are skipped and
/// reported in the summary. `threads > 1` runs the staged chain.
pub fn run_stream<R: BufRead + Send, W: Write>(
    input: R,
    mut output: W,
    model: &ForestModel,
    cfg: &RunConfig,
    threads: usize,
) -> Result<RunSummary, StreamError> {
    cfg.pipeline.validate()?;
    cfg.pipeline.check_model(model)?;
    cfg.decision.validate()?;
    if cfg.window_frames == 0 {
        return Err(StreamError::Window);
    }
    let mut featurizer = Featurizer {
        track: TrackStage::new(&cfg.pipeline.tracker)?,
        feat: FeatureStage::new(&cfg.pipeline.kinematics, &cfg.pipeline.gate),
        last_frame: None,
    };
    let mut decider = Decider { model, cfg: cfg.clone(), window: AlertWindow::new(cfg.window_frames) };
    let mut summary = RunSummary::default();

    if threads <= 1 {
        for (i, line) in input.lines().enumerate() {
            let Some(item) = read_item(i + 1, line) else { continue };
            match item? {
                Item::Issue(issue) => note(&mut summary, issue),
                Item::Frame((line, frame)) => match featurizer.rows(line, &frame) {
                    Err(issue) => note(&mut summary, issue),
                    Ok(rows) => {
                        let (ev, alert) = decider.event(frame.frame_idx, &rows)?;
                        writeln!(output, "{ev}")?;
                        summary.frames += 1;
                        summary.alerts += alert as u64;
                    }
                },
            }
        }
        output.flush()?;
        return Ok(summary);
    }

    const DEPTH: usize = 256;
    type Parsed = Result<Item<(usize, FrameDetections)>, std::io::Error>;
    type Featured = Result<Item<(u64, Vec<PairRow>)>, std::io::Error>;
    type Decided = Result<Item<(String, bool)>, StreamError>;
    let (tx1, rx1): (SyncSender<Parsed>, Receiver<Parsed>) = sync_channel(DEPTH);
    let (tx2, rx2): (SyncSender<Featured>, Receiver<Featured>) = sync_channel(DEPTH);
    let (tx3, rx3): (SyncSender<Decided>, Receiver<Decided>) = sync_channel(DEPTH);
    thread::scope(|scope| -> Result<(), StreamError> {
        scope.spawn(move || {
            for (i, line) in input.lines().enumerate() {
                let Some(item) = read_item(i + 1, line) else { continue };
                let stop = item.is_err();
                if tx1.send(item).is_err() || stop {
                    break;
                }
            }
        });
        scope.spawn(move || {
            for item in rx1 {
                let out = match item {
                    Ok(Item::Frame((line, frame))) => Ok(match featurizer.rows(line, &frame) {
                        Ok(rows) => Item::Frame((frame.frame_idx, rows)),
                        Err(issue) => Item::Issue(issue),
                    }),
                    Ok(Item::Issue(i)) => Ok(Item::Issue(i)),
                    Err(e) => Err(e),
                };
                if tx2.send(out).is_err() {
                    break;
                }
            }
        });
        scope.spawn(move || {
            for item in rx2 {
                let out = match item {
                    Ok(Item::Frame((frame, rows))) => decider.event(frame, &rows).map(Item::Frame),
                    Ok(Item::Issue(i)) => Ok(Item::Issue(i)),
                    Err(e) => Err(e.into()),
                };
                let stop = out.is_err();
                if tx3.send(out).is_err() || stop {
                    break;
                }
            }
        });
        for item in rx3 {
            match item? {
                Item::Issue(issue) => note(&mut summary, issue),
                Item::Frame((ev, alert)) => {
                    writeln!(output, "{ev}")?;
                    summary.frames += 1;
                    summary.alerts += alert as u64;
                }
            }
        }
        Ok(())
    })?;
    output.flush()?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_counts_slide() {
        let mut w = AlertWindow::new(3);
        w.push(Some(Label::Push));
        w.push(None);
        w.push(Some(Label::Normal));
        assert_eq!(w.counts(), (1, 2));
        w.push(Some(Label::Normal));
        assert_eq!(w.counts(), (0, 2));
        w.push(None);
        w.push(None);
        assert_eq!(w.counts(), (0, 1));
        assert_eq!(w.len(), 3);
    }

    #[test]
    fn event_format() {
        let p = PairPrediction { tid_a: 1, tid_b: 2, pred: Label::Push, proba: 0.63 };
        assert_eq!(
            format_event(4, &[p], true),
            "{\"frame\": 4, \"pairs\": [{\"a\": 1, \"b\": 2, \"pred\": \"push\", \"proba\": 0.63}], \"alert\": true}"
        );
        assert_eq!(format_event(0, &[], false), "{\"frame\": 0, \"pairs\": [], \"alert\": false}");
    }
}
