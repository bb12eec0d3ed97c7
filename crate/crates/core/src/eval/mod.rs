//! Detection-style evaluation of judged reps: temporal IoU matching,
//! per-class precision/recall/F1, threshold grid search, RTF.

mod grid;
mod hungarian;
mod report;

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::validator::{RepLabel, RepRecord};

pub use grid::{grid_search_thresholds, DatasetItem, GridCell, GridResult, ThresholdGrid};
pub use hungarian::{max_weight_matching, min_cost_assignment};
pub use report::{render_table, EvalReport, ReportRow};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("annotation error: {0}")]
    Annotation(String),
    #[error("real-time factor needs a positive duration")]
    ZeroDuration,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
}

/// Inclusive frame interval.
pub type Segment = (u64, u64);

/// Temporal IoU of two inclusive frame intervals.
pub fn tiou(a: Segment, b: Segment) -> f64 {
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    if hi < lo {
        return 0.0;
    }
    let inter = (hi - lo + 1) as f64;
    let union = (a.1 - a.0 + 1) as f64 + (b.1 - b.0 + 1) as f64 - inter;
    inter / union
}

fn label_code<S: Serializer>(l: &RepLabel, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_u8(match l {
        RepLabel::Valid => 0,
        RepLabel::Invalid => 1,
    })
}

fn label_from_code<'de, D: Deserializer<'de>>(d: D) -> Result<RepLabel, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Code {
        Num(u8),
        Text(RepLabel),
    }
    match Code::deserialize(d)? {
        Code::Num(0) => Ok(RepLabel::Valid),
        Code::Num(1) => Ok(RepLabel::Invalid),
        Code::Num(n) => Err(serde::de::Error::custom(format!("label must be 0 or 1, got {n}"))),
        Code::Text(l) => Ok(l),
    }
}

/// Annotated rep; the file form encodes valid as 0 and invalid as 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthRep {
    #[serde(rename = "start")]
    pub t_start: u64,
    #[serde(rename = "end")]
    pub t_end: u64,
    #[serde(serialize_with = "label_code", deserialize_with = "label_from_code")]
    pub label: RepLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Front,
    Diag,
    Side,
}

impl std::fmt::Display for View {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            View::Front => "front",
            View::Diag => "diag",
            View::Side => "side",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub video: String,
    pub movement: String,
    pub view: View,
    pub reps: Vec<GroundTruthRep>,
}

impl GroundTruth {
    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
        let gt: GroundTruth = serde_json::from_str(&text)
            .map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
        check_ground_truth(&gt.reps)?;
        Ok(gt)
    }
}

/// Reject malformed or overlapping annotations.
pub fn check_ground_truth(gt: &[GroundTruthRep]) -> Result<(), EvalError> {
    let mut sorted: Vec<&GroundTruthRep> = gt.iter().collect();
    sorted.sort_by_key(|r| r.t_start);
    for r in &sorted {
        if r.t_start > r.t_end {
            return Err(EvalError::Annotation(format!(
                "rep [{}, {}] ends before it starts",
                r.t_start, r.t_end
            )));
        }
    }
    for w in sorted.windows(2) {
        if w[1].t_start <= w[0].t_end {
            return Err(EvalError::Annotation(format!(
                "reps [{}, {}] and [{}, {}] overlap",
                w[0].t_start, w[0].t_end, w[1].t_start, w[1].t_end
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Matcher {
    /// One-to-one by descending tIoU.
    #[default]
    Greedy,
    /// Most true positives, then largest total tIoU.
    Optimal,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub pred: usize,
    pub gt: usize,
    pub tiou: f64,
    pub label: RepLabel,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub valid: ClassCounts,
    pub invalid: ClassCounts,
    pub pairs: Vec<MatchedPair>,
}

impl MatchResult {
    pub fn class(&self, l: RepLabel) -> &ClassCounts {
        match l {
            RepLabel::Valid => &self.valid,
            RepLabel::Invalid => &self.invalid,
        }
    }

    fn class_mut(&mut self, l: RepLabel) -> &mut ClassCounts {
        match l {
            RepLabel::Valid => &mut self.valid,
            RepLabel::Invalid => &mut self.invalid,
        }
    }

    pub fn merge(&mut self, other: &MatchResult) {
        for l in [RepLabel::Valid, RepLabel::Invalid] {
            let o = *other.class(l);
            let c = self.class_mut(l);
            c.tp += o.tp;
            c.fp += o.fp;
            c.fn_ += o.fn_;
        }
    }
}

fn match_class(
    pred: &[(usize, Segment)],
    gt: &[(usize, Segment)],
    tau: f64,
    matcher: Matcher,
) -> Vec<(usize, usize, f64)> {
    let mut cand: Vec<(f64, usize, usize)> = Vec::new();
    for (pi, (_, ps)) in pred.iter().enumerate() {
        for (gi, (_, gs)) in gt.iter().enumerate() {
            let v = tiou(*ps, *gs);
            if v >= tau && v > 0.0 {
                cand.push((v, pi, gi));
            }
        }
    }
    let local: Vec<(usize, usize, f64)> = match matcher {
        Matcher::Greedy => {
            cand.sort_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .unwrap_or(Ordering::Equal)
                    .then(a.1.cmp(&b.1))
                    .then(a.2.cmp(&b.2))
            });
            let mut pu = vec![false; pred.len()];
            let mut gu = vec![false; gt.len()];
            let mut out = Vec::new();
            for (v, p, g) in cand {
                if !pu[p] && !gu[g] {
                    pu[p] = true;
                    gu[g] = true;
                    out.push((p, g, v));
                }
            }
            out
        }
        Matcher::Optimal => {
            // each pair is worth more than any sum of tIoUs, so the pair count
            // is maximized first
            let big = (pred.len().min(gt.len()) + 1) as f64;
            let mut w = vec![vec![0.0; gt.len()]; pred.len()];
            for (v, p, g) in &cand {
                w[*p][*g] = big + v;
            }
            max_weight_matching(&w)
                .into_iter()
                .map(|(p, g)| (p, g, w[p][g] - big))
                .collect()
        }
    };
    local
        .into_iter()
        .map(|(p, g, v)| (pred[p].0, gt[g].0, v))
        .collect()
}

/// Class-partitioned one-to-one matching at tIoU threshold `tau`.
pub fn match_reps(
    pred: &[RepRecord],
    gt: &[GroundTruthRep],
    tau: f64,
    matcher: Matcher,
) -> Result<MatchResult, EvalError> {
    check_ground_truth(gt)?;
    let mut out = MatchResult::default();
    for label in [RepLabel::Valid, RepLabel::Invalid] {
        let p: Vec<(usize, Segment)> = pred
            .iter()
            .enumerate()
            .filter(|(_, r)| r.label == label)
            .map(|(i, r)| (i, (r.t_start, r.t_end)))
            .collect();
        let g: Vec<(usize, Segment)> = gt
            .iter()
            .enumerate()
            .filter(|(_, r)| r.label == label)
            .map(|(i, r)| (i, (r.t_start, r.t_end)))
            .collect();
        let pairs = match_class(&p, &g, tau, matcher);
        let c = out.class_mut(label);
        c.tp = pairs.len();
        c.fp = p.len() - pairs.len();
        c.fn_ = g.len() - pairs.len();
        out.pairs.extend(pairs.into_iter().map(|(pred, gt, tiou)| MatchedPair {
            pred,
            gt,
            tiou,
            label,
        }));
    }
    out.pairs.sort_by_key(|p| (p.pred, p.gt));
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(c: &ClassCounts) -> Self {
        let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub valid: Prf,
    pub invalid: Prf,
    pub macro_avg: Prf,
}

/// Per-class and macro-averaged precision, recall and F1.
pub fn prf(result: &MatchResult) -> Metrics {
    let valid = Prf::from_counts(&result.valid);
    let invalid = Prf::from_counts(&result.invalid);
    Metrics {
        valid,
        invalid,
        macro_avg: Prf {
            precision: (valid.precision + invalid.precision) / 2.0,
            recall: (valid.recall + invalid.recall) / 2.0,
            f1: (valid.f1 + invalid.f1) / 2.0,
        },
    }
}

/// Real-time factor: processing time over media duration.
pub fn rtf(processing_seconds: f64, video_seconds: f64) -> Result<f64, EvalError> {
    if video_seconds <= 0.0 {
        return Err(EvalError::ZeroDuration);
    }
    Ok(processing_seconds / video_seconds)
}
