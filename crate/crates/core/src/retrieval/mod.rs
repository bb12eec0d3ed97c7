//! Page-level chunk store with label-filtered cosine retrieval and the
//! similarity-threshold sweep.

mod embed;
mod store;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use embed::{Embedder, HashEmbedder, HttpEmbedder, PrecomputedEmbedder};
pub use store::{Chunk, ChunkMetadata, ChunkStore};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RetrievalError {
    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("embedding provider failed on page {page}: {message}")]
    Provider { page: u64, message: String },
    #[error("label must be 0 or 1, got {0}")]
    Label(u8),
    #[error("store format: {0}")]
    Format(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("configuration error: {0}")]
    Config(String),
}

/// Cosine similarity, with negative values clamped to 0.
pub fn cosine_similarity(q: &[f32], v: &[f32]) -> Result<f64, RetrievalError> {
    if q.len() != v.len() {
        return Err(RetrievalError::Shape {
            expected: q.len(),
            got: v.len(),
        });
    }
    let (mut dot, mut nq, mut nv) = (0.0f64, 0.0f64, 0.0f64);
    for (a, b) in q.iter().zip(v) {
        let (a, b) = (*a as f64, *b as f64);
        dot += a * b;
        nq += a * a;
        nv += b * b;
    }
    if nq == 0.0 || nv == 0.0 {
        return Err(RetrievalError::ZeroVector);
    }
    Ok((dot / (nq.sqrt() * nv.sqrt())).clamp(0.0, 1.0))
}

/// A source page before embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Page {
    pub text: String,
    pub label: u8,
    #[serde(rename = "sourceType")]
    pub source_type: String,
    #[serde(rename = "pageIndex")]
    pub page_index: u64,
}

/// One chunk per page.
pub fn ingest(pages: &[Page], embedder: &dyn Embedder) -> Result<ChunkStore, RetrievalError> {
    let mut store = ChunkStore::new(embedder.dimension());
    for p in pages {
        if p.label > 1 {
            return Err(RetrievalError::Label(p.label));
        }
        let embedding = embedder.embed(&p.text).map_err(|message| RetrievalError::Provider {
            page: p.page_index,
            message,
        })?;
        store.push(Chunk {
            text: p.text.clone(),
            embedding,
            metadata: ChunkMetadata {
                label: p.label,
                source_type: p.source_type.clone(),
                page_index: p.page_index,
            },
        })?;
    }
    Ok(store)
}

/// Minimum similarity kept per source label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelThresholds {
    pub label0: f64,
    pub label1: f64,
}

impl Default for LabelThresholds {
    fn default() -> Self {
        LabelThresholds {
            label0: 0.6,
            label1: 0.4,
        }
    }
}

impl LabelThresholds {
    pub fn for_label(&self, label: u8) -> f64 {
        if label == 1 {
            self.label1
        } else {
            self.label0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    /// Position of the chunk in the store.
    pub index: usize,
    pub similarity: f64,
    #[serde(rename = "pageIndex")]
    pub page_index: u64,
    pub text: String,
}

/// Top-`k` chunks of `label` by similarity, then those under the label
/// threshold (or `threshold` when given) are dropped.
pub fn retrieve(
    query: &[f32],
    store: &ChunkStore,
    label: u8,
    k: usize,
    threshold: Option<f64>,
    defaults: &LabelThresholds,
) -> Result<Vec<Hit>, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::Config("k must be >= 1".into()));
    }
    if label > 1 {
        return Err(RetrievalError::Label(label));
    }
    if store.is_empty() {
        return Ok(Vec::new());
    }
    let mut scored = Vec::new();
    for (i, c) in store.chunks().iter().enumerate() {
        if c.metadata.label != label {
            continue;
        }
        match cosine_similarity(query, &c.embedding) {
            Ok(s) => scored.push((i, s)),
            Err(RetrievalError::ZeroVector) if query.iter().any(|v| *v != 0.0) => {}
            Err(e) => return Err(e),
        }
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    let t = threshold.unwrap_or_else(|| defaults.for_label(label));
    Ok(scored
        .into_iter()
        .filter(|(_, s)| *s >= t)
        .map(|(i, s)| {
            let c = &store.chunks()[i];
            Hit {
                index: i,
                similarity: s,
                page_index: c.metadata.page_index,
                text: c.text.clone(),
            }
        })
        .collect())
}

/// A query paired with a store chunk and a relevance judgement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub query: Vec<f32>,
    pub chunk: usize,
    pub relevant: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub similarity: f64,
    pub relevant: bool,
}

pub fn score_pairs(pairs: &[LabeledPair], store: &ChunkStore) -> Result<Vec<ScoredPair>, RetrievalError> {
    pairs
        .iter()
        .map(|p| {
            let c = store.chunks().get(p.chunk).ok_or_else(|| {
                RetrievalError::Config(format!("pair refers to chunk {} of {}", p.chunk, store.len()))
            })?;
            Ok(ScoredPair {
                similarity: cosine_similarity(&p.query, &c.embedding)?,
                relevant: p.relevant,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub points: Vec<SweepPoint>,
    pub best_threshold: f64,
    pub best_f1: f64,
    /// Whether no other threshold reaches `best_f1`.
    pub unique_best: bool,
}

/// Precision/recall/F1 of "similarity ≥ t" against relevance for each `t`.
/// The best threshold is the lowest one reaching the maximum F1.
pub fn sweep_threshold(pairs: &[ScoredPair], grid: &[f64]) -> Result<Sweep, RetrievalError> {
    if pairs.is_empty() || grid.is_empty() {
        return Err(RetrievalError::Config("sweep needs pairs and thresholds".into()));
    }
    let mut ts = grid.to_vec();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let points: Vec<SweepPoint> = ts
        .iter()
        .map(|&t| {
            let (mut tp, mut fp, mut fn_) = (0, 0, 0);
            for p in pairs {
                match (p.similarity >= t, p.relevant) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => {}
                }
            }
            let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
            let precision = ratio(tp, tp + fp);
            let recall = ratio(tp, tp + fn_);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            SweepPoint {
                threshold: t,
                tp,
                fp,
                fn_,
                precision,
                recall,
                f1,
            }
        })
        .collect();
    let best_f1 = points.iter().map(|p| p.f1).fold(f64::NEG_INFINITY, f64::max);
    let best = points.iter().find(|p| p.f1 == best_f1).expect("nonempty grid");
    Ok(Sweep {
        best_threshold: best.threshold,
        best_f1,
        unique_best: points.iter().filter(|p| p.f1 == best_f1).count() == 1,
        points,
    })
}

/// `n + 1` evenly spaced thresholds over [0, 1].
pub fn uniform_grid(n: usize) -> Vec<f64> {
    (0..=n).map(|i| i as f64 / n.max(1) as f64).collect()
}
