//! JSONL keypoint wire format, one frame per line:
//!
//! ```text
//! {"clip_id": "c001", "label": "push", "res": [848, 848], "frame": 0, "ts_ms": 0,
//!  "persons": [{"bbox": [x, y, w, h], "conf": 0.97, "kpts": [[x0, y0, c0], ...]}]}
//! ```
//!
//! Tracked streams add a `"tid"` integer to each person. Floats are written
//! with at most six decimals in their shortest form, so a parsed clip
//! serializes back to the same bytes.

use std::fmt::Write as _;
use std::io::BufRead;

use serde::Deserialize;
use thiserror::Error;

use crate::error::{ClipError, SchemaError, SequenceError};
use crate::skeleton::{BBox, ClipRecord, FrameDetections, Keypoint, Label, Skeleton, NUM_KEYPOINTS};

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: schema error: {source}")]
    Schema { line: usize, source: SchemaError },
    #[error("line {line}: sequencing error: {source}")]
    Sequencing { line: usize, source: SequenceError },
    #[error("stream contains no frames")]
    Empty,
    #[error("read failed: {0}")]
    Io(#[from] std::io::Error),
}

impl ParseError {
    pub fn line(&self) -> Option<usize> {
        match self {
            ParseError::Malformed { line, .. }
            | ParseError::Schema { line, .. }
            | ParseError::Sequencing { line, .. } => Some(*line),
            _ => None,
        }
    }
}

/// Failure to decode a single line, before a line number is attached.
#[derive(Debug, Error)]
pub enum LineError {
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

impl LineError {
    fn at(self, line: usize) -> ParseError {
        match self {
            LineError::Malformed(message) => ParseError::Malformed { line, message },
            LineError::Schema(source) => ParseError::Schema { line, source },
        }
    }
}

#[derive(Deserialize)]
struct RawFrame {
    clip_id: String,
    label: Option<String>,
    res: [u32; 2],
    frame: u64,
    ts_ms: i64,
    persons: Vec<RawPerson>,
}

#[derive(Deserialize)]
struct RawPerson {
    bbox: Vec<f64>,
    conf: f64,
    kpts: Vec<Vec<f64>>,
    #[serde(default)]
    tid: Option<u64>,
}

/// One decoded line: the frame plus the clip-level fields every line repeats.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameLine {
    pub clip_id: String,
    pub label: Option<Label>,
    pub resolution: (u32, u32),
    pub frame: FrameDetections,
}

fn person_from_raw(raw: RawPerson) -> Result<Skeleton, SchemaError> {
    if raw.bbox.len() != 4 {
        return Err(SchemaError::new(
            "bbox",
            format!("expected [x, y, w, h], got {} values", raw.bbox.len()),
        ));
    }
    if raw.kpts.len() != NUM_KEYPOINTS {
        return Err(SchemaError::new(
            "kpts",
            format!("expected {NUM_KEYPOINTS} keypoints, got {}", raw.kpts.len()),
        ));
    }
    let mut keypoints = [Keypoint { x: 0.0, y: 0.0, conf: 0.0 }; NUM_KEYPOINTS];
    for (i, k) in raw.kpts.iter().enumerate() {
        if k.len() != 3 {
            return Err(SchemaError::new(
                "kpts",
                format!("keypoint {i} must be [x, y, conf], got {} values", k.len()),
            ));
        }
        keypoints[i] = Keypoint::new(k[0], k[1], k[2])?;
    }
    let bbox = BBox::new(raw.bbox[0], raw.bbox[1], raw.bbox[2], raw.bbox[3])?;
    let mut s = Skeleton::new(keypoints, bbox, raw.conf)?;
    if let Some(tid) = raw.tid {
        if tid == 0 {
            return Err(SchemaError::new("tid", "track ids are positive"));
        }
        s.tid = Some(tid);
    }
    Ok(s)
}

/// Decodes and validates one JSONL record.
pub fn parse_frame_line(line: &str) -> Result<FrameLine, LineError> {
    let raw: RawFrame =
        serde_json::from_str(line).map_err(|e| LineError::Malformed(e.to_string()))?;
    let label = raw.label.as_deref().map(str::parse::<Label>).transpose()?;
    if raw.res[0] == 0 || raw.res[1] == 0 {
        return Err(SchemaError::new("res", "resolution must be positive").into());
    }
    let persons = raw
        .persons
        .into_iter()
        .map(person_from_raw)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FrameLine {
        clip_id: raw.clip_id,
        label,
        resolution: (raw.res[0], raw.res[1]),
        frame: FrameDetections::new(raw.frame, raw.ts_ms, persons),
    })
}

/// Reads a whole clip from a JSONL stream. Blank lines are ignored; every
/// record must agree on `clip_id`, `label` and `res`.
pub fn parse_clip<R: BufRead>(reader: R) -> Result<ClipRecord, ParseError> {
    let mut header: Option<(String, Option<Label>, (u32, u32))> = None;
    let mut frames: Vec<FrameDetections> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = parse_frame_line(&line).map_err(|e| e.at(line_no))?;
        match &header {
            None => header = Some((rec.clip_id.clone(), rec.label, rec.resolution)),
            Some((id, label, res)) => {
                let mismatch = if *id != rec.clip_id {
                    Some("clip_id")
                } else if *label != rec.label {
                    Some("label")
                } else if *res != rec.resolution {
                    Some("res")
                } else {
                    None
                };
                if let Some(field) = mismatch {
                    return Err(ParseError::Schema {
                        line: line_no,
                        source: SchemaError::new(field, "differs from the first record of the clip"),
                    });
                }
            }
        }
        if let Some(prev) = frames.last() {
            let seq = if rec.frame.frame_idx <= prev.frame_idx {
                Some(SequenceError::FrameIndex { previous: prev.frame_idx, got: rec.frame.frame_idx })
            } else if rec.frame.ts_ms < prev.ts_ms {
                Some(SequenceError::Timestamp { previous: prev.ts_ms, got: rec.frame.ts_ms })
            } else {
                None
            };
            if let Some(source) = seq {
                return Err(ParseError::Sequencing { line: line_no, source });
            }
        }
        frames.push(rec.frame);
    }
    let (clip_id, label, resolution) = header.ok_or(ParseError::Empty)?;
    ClipRecord::new(clip_id, label, resolution, frames).map_err(|e| match e {
        // Per-line checks above already cover every clip invariant.
        ClipError::Empty => ParseError::Empty,
        other => ParseError::Malformed { line: 0, message: other.to_string() },
    })
}

pub fn parse_clip_str(s: &str) -> Result<ClipRecord, ParseError> {
    parse_clip(s.as_bytes())
}

/// Formats a float with at most six decimals, dropping trailing zeros.
pub fn format_float(v: f64) -> String {
    let mut s = format!("{v:.6}");
    if s.contains('.') {
        let trimmed = s.trim_end_matches('0').trim_end_matches('.').len();
        s.truncate(trimmed);
    }
    if s == "-0" {
        s = "0".to_owned();
    }
    s
}

fn push_json_string(out: &mut String, s: &str) {
    out.push_str(&serde_json::to_string(s).expect("strings always serialize"));
}

fn write_person(out: &mut String, p: &Skeleton) {
    let b = &p.bbox;
    let _ = write!(
        out,
        "{{\"bbox\": [{}, {}, {}, {}], \"conf\": {}, \"kpts\": [",
        format_float(b.x),
        format_float(b.y),
        format_float(b.w),
        format_float(b.h),
        format_float(p.det_conf)
    );
    for (i, k) in p.keypoints.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(
            out,
            "[{}, {}, {}]",
            format_float(k.x),
            format_float(k.y),
            format_float(k.conf)
        );
    }
    out.push(']');
    if let Some(tid) = p.tid {
        let _ = write!(out, ", \"tid\": {tid}");
    }
    out.push('}');
}

/// Serializes one frame as a single JSONL line (without the newline).
pub fn format_frame_line(
    clip_id: &str,
    label: Option<Label>,
    resolution: (u32, u32),
    frame: &FrameDetections,
) -> String {
    let mut out = String::with_capacity(256 + frame.persons.len() * 700);
    out.push_str("{\"clip_id\": ");
    push_json_string(&mut out, clip_id);
    out.push_str(", \"label\": ");
    match label {
        Some(l) => {
            out.push('"');
            out.push_str(l.as_str());
            out.push('"');
        }
        None => out.push_str("null"),
    }
    let _ = write!(
        out,
        ", \"res\": [{}, {}], \"frame\": {}, \"ts_ms\": {}, \"persons\": [",
        resolution.0, resolution.1, frame.frame_idx, frame.ts_ms
    );
    for (i, p) in frame.persons.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_person(&mut out, p);
    }
    out.push_str("]}");
    out
}

/// Serializes a clip to JSONL, one line per frame, each newline-terminated.
pub fn serialize_clip(clip: &ClipRecord) -> Vec<u8> {
    let mut out = String::new();
    for f in &clip.frames {
        out.push_str(&format_frame_line(&clip.clip_id, clip.label, clip.resolution, f));
        out.push('\n');
    }
    out.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn person_json(n_kpts: usize) -> String {
        let kpts: Vec<String> = (0..n_kpts).map(|i| format!("[{i}, {}, 1.0]", i * 2)).collect();
        format!(
            "{{\"bbox\": [1, 2, 30, 60], \"conf\": 0.97, \"kpts\": [{}]}}",
            kpts.join(", ")
        )
    }

    #[test]
    fn empty_frame_parses_to_single_frame_clip() {
        let line = r#"{"clip_id": "c001", "label": "push", "res": [848, 848], "frame": 0, "ts_ms": 0, "persons": []}"#;
        let clip = parse_clip_str(line).unwrap();
        assert_eq!(clip.frames.len(), 1);
        assert!(clip.frames[0].persons.is_empty());
        assert_eq!(clip.label, Some(Label::Push));
        assert_eq!(clip.resolution, (848, 848));
        let bytes = serialize_clip(&clip);
        assert_eq!(String::from_utf8(bytes).unwrap(), format!("{line}\n"));
    }

    #[test]
    fn full_confidence_skeleton_round_trips_bit_exactly() {
        let line = format!(
            r#"{{"clip_id": "c001", "label": null, "res": [1920, 1080], "frame": 4, "ts_ms": 133, "persons": [{}]}}"#,
            person_json(17)
        );
        let clip = parse_clip_str(&line).unwrap();
        let again = parse_clip(&serialize_clip(&clip)[..]).unwrap();
        assert_eq!(again, clip);
        for (a, b) in clip.frames[0].persons[0].keypoints.iter().zip(&again.frames[0].persons[0].keypoints) {
            assert_eq!(a.x.to_bits(), b.x.to_bits());
            assert_eq!(a.y.to_bits(), b.y.to_bits());
            assert_eq!(b.conf, 1.0);
        }
    }

    #[test]
    fn sixteen_keypoints_is_a_schema_error_on_kpts() {
        let line = format!(
            r#"{{"clip_id": "c", "label": null, "res": [10, 10], "frame": 0, "ts_ms": 0, "persons": [{}]}}"#,
            person_json(16)
        );
        match parse_clip_str(&line).unwrap_err() {
            ParseError::Schema { line, source } => {
                assert_eq!(line, 1);
                assert_eq!(source.field, "kpts");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn malformed_json_reports_line_number() {
        let text = "{\"clip_id\": \"c\", \"label\": null, \"res\": [10, 10], \"frame\": 0, \"ts_ms\": 0, \"persons\": []}\n{not json\n";
        let err = parse_clip_str(text).unwrap_err();
        assert!(matches!(err, ParseError::Malformed { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn non_monotone_frame_is_a_sequencing_error() {
        let text = "{\"clip_id\": \"c\", \"label\": null, \"res\": [10, 10], \"frame\": 5, \"ts_ms\": 0, \"persons\": []}\n\
                    {\"clip_id\": \"c\", \"label\": null, \"res\": [10, 10], \"frame\": 5, \"ts_ms\": 1, \"persons\": []}\n";
        let err = parse_clip_str(text).unwrap_err();
        assert!(matches!(err, ParseError::Sequencing { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn inconsistent_clip_fields_are_rejected() {
        let text = "{\"clip_id\": \"c\", \"label\": null, \"res\": [10, 10], \"frame\": 0, \"ts_ms\": 0, \"persons\": []}\n\
                    {\"clip_id\": \"d\", \"label\": null, \"res\": [10, 10], \"frame\": 1, \"ts_ms\": 1, \"persons\": []}\n";
        match parse_clip_str(text).unwrap_err() {
            ParseError::Schema { line: 2, source } => assert_eq!(source.field, "clip_id"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_label_and_confidence_are_rejected() {
        let text = "{\"clip_id\": \"c\", \"label\": \"fight\", \"res\": [10, 10], \"frame\": 0, \"ts_ms\": 0, \"persons\": []}";
        assert!(matches!(parse_clip_str(text).unwrap_err(), ParseError::Schema { .. }));
        let p = person_json(17).replace("\"conf\": 0.97", "\"conf\": 1.5");
        let text = format!(
            r#"{{"clip_id": "c", "label": null, "res": [10, 10], "frame": 0, "ts_ms": 0, "persons": [{p}]}}"#
        );
        match parse_clip_str(&text).unwrap_err() {
            ParseError::Schema { source, .. } => assert_eq!(source.field, "conf"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_stream_is_an_error() {
        assert!(matches!(parse_clip_str("\n\n").unwrap_err(), ParseError::Empty));
    }

    #[test]
    fn float_formatting_is_shortest_six_decimal() {
        assert_eq!(format_float(1.0), "1");
        assert_eq!(format_float(0.5), "0.5");
        assert_eq!(format_float(0.1234567), "0.123457");
        assert_eq!(format_float(-0.0000001), "0");
        assert_eq!(format_float(-12.25), "-12.25");
        assert_eq!(format_float(300.0), "300");
    }

    #[test]
    fn tid_is_carried_through() {
        let p = person_json(17).replace("}", ", \"tid\": 7}");
        let text = format!(
            r#"{{"clip_id": "c", "label": null, "res": [10, 10], "frame": 0, "ts_ms": 0, "persons": [{p}]}}"#
        );
        let clip = parse_clip_str(&text).unwrap();
        assert_eq!(clip.frames[0].persons[0].tid, Some(7));
        assert!(String::from_utf8(serialize_clip(&clip)).unwrap().contains("\"tid\": 7}"));
    }
}
