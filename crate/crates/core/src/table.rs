//! CSV tables: per-person features, pair samples and pair predictions.
//! Floats are written in shortest round-trip form.

use std::io::{Read, Write};

use thiserror::Error;

use crate::interaction::PairSample;
use crate::kinematics::{FeatureVector, FEATURE_NAMES};
use crate::skeleton::Label;

#[derive(Debug, Error)]
pub enum TableError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad header: {0}")]
    Header(String),
    #[error("row {row}: {message}")]
    Field { row: u64, message: String },
}

pub fn features_header() -> Vec<String> {
    let mut h = vec!["clip_id".to_string(), "frame".into(), "tid".into()];
    h.extend(FEATURE_NAMES.iter().map(|s| s.to_string()));
    h.push("mask".into());
    h
}

/// Writes per-person feature rows; invalid entries are left empty.
pub struct FeatureWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> FeatureWriter<W> {
    pub fn new(out: W) -> Result<Self, TableError> {
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(features_header())?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, clip_id: &str, frame: u64, tid: u64, fv: &FeatureVector) -> Result<(), TableError> {
        let mut rec = vec![clip_id.to_string(), frame.to_string(), tid.to_string()];
        for i in 0..FEATURE_NAMES.len() {
            rec.push(fv.get(i).map(|v| v.to_string()).unwrap_or_default());
        }
        rec.push(fv.mask_string());
        self.inner.write_record(rec)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, TableError> {
        self.inner.flush()?;
        self.inner.into_inner().map_err(|e| TableError::Io(e.into_error()))
    }
}

pub fn pairs_header(dim: usize) -> Vec<String> {
    let mut h = vec!["clip_id".to_string(), "frame".into(), "tid_a".into(), "tid_b".into()];
    h.extend((1..=dim).map(|i| format!("f{i}")));
    h.push("label".into());
    h
}

fn pair_record(s: &PairSample) -> Vec<String> {
    let mut rec = vec![s.clip_id.clone(), s.frame_idx.to_string(), s.tid_a.to_string(), s.tid_b.to_string()];
    rec.extend(s.features.iter().map(|v| v.to_string()));
    rec.push(s.label.map(|l| l.as_str().to_string()).unwrap_or_default());
    rec
}

pub fn write_pairs<W: Write>(out: W, dim: usize, samples: &[PairSample]) -> Result<(), TableError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(pairs_header(dim))?;
    for s in samples {
        if s.features.len() != dim {
            return Err(TableError::Header(format!("sample has {} features, table has {dim}", s.features.len())));
        }
        w.write_record(pair_record(s))?;
    }
    w.flush()?;
    Ok(())
}

/// Pair samples plus the feature dimension read from the header.
pub fn read_pairs<R: Read>(input: R) -> Result<(usize, Vec<PairSample>), TableError> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let dim = header.len().saturating_sub(5);
    if header.len() < 6 || header != pairs_header(dim) {
        return Err(TableError::Header(format!("expected clip_id,frame,tid_a,tid_b,f1..fN,label, got {}", header.join(","))));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = i as u64 + 2;
        let bad = |message: String| TableError::Field { row, message };
        let int = |k: usize| rec[k].parse::<u64>().map_err(|e| bad(format!("{}: {e}", header[k])));
        let features = (4..4 + dim)
            .map(|k| {
                let v: f64 = rec[k].parse().map_err(|e| bad(format!("{}: {e}", header[k])))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(bad(format!("{} is not finite", header[k])))
                }
            })
            .collect::<Result<Vec<f64>, _>>()?;
        let label = match &rec[4 + dim] {
            "" => None,
            s => Some(s.parse::<Label>().map_err(|_| bad(format!("unknown label {s:?}")))?),
        };
        out.push(PairSample {
            clip_id: rec[0].to_string(),
            frame_idx: int(1)?,
            tid_a: int(2)?,
            tid_b: int(3)?,
            features,
            label,
        });
    }
    Ok((dim, out))
}

/// Pair rows with `pred,proba` appended.
pub fn write_predictions<W: Write>(
    out: W,
    dim: usize,
    samples: &[PairSample],
    preds: &[(Label, f64)],
) -> Result<(), TableError> {
    let mut w = csv::Writer::from_writer(out);
    let mut h = pairs_header(dim);
    h.push("pred".into());
    h.push("proba".into());
    w.write_record(h)?;
    for (s, (label, p)) in samples.iter().zip(preds) {
        let mut rec = pair_record(s);
        rec.push(label.as_str().to_string());
        rec.push(p.to_string());
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}
