use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use serde::Deserialize;

use super::RetrievalError;

/// Text embedding provider. Errors are plain messages; callers attach
/// context such as the page index.
pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f32>, String>;
}

/// Embeddings looked up by exact text from a JSON file of
/// `[{"text": ..., "embedding": [...]}]`.
#[derive(Debug, Clone)]
pub struct PrecomputedEmbedder {
    dimension: usize,
    table: HashMap<String, Vec<f32>>,
}

#[derive(Deserialize)]
struct Entry {
    text: String,
    embedding: Vec<f32>,
}

impl PrecomputedEmbedder {
    pub fn from_entries(entries: Vec<(String, Vec<f32>)>) -> Result<Self, RetrievalError> {
        let dimension = entries.first().map_or(0, |e| e.1.len());
        let mut table = HashMap::with_capacity(entries.len());
        for (text, e) in entries {
            if e.len() != dimension {
                return Err(RetrievalError::Shape {
                    expected: dimension,
                    got: e.len(),
                });
            }
            table.insert(text, e);
        }
        Ok(PrecomputedEmbedder { dimension, table })
    }

    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        let text = std::fs::read_to_string(path).map_err(|e| RetrievalError::Io(format!("{}: {e}", path.display())))?;
        let entries: Vec<Entry> =
            serde_json::from_str(&text).map_err(|e| RetrievalError::Format(format!("{}: {e}", path.display())))?;
        Self::from_entries(entries.into_iter().map(|e| (e.text, e.embedding)).collect())
    }
}

impl Embedder for PrecomputedEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, String> {
        self.table
            .get(text)
            .cloned()
            .ok_or_else(|| format!("no precomputed embedding for text starting {:?}", text.chars().take(40).collect::<String>()))
    }
}

/// Deterministic bag-of-words embedder: lowercase alphanumeric tokens are
/// hashed (FNV-1a) into buckets and the count vector is L2-normalized.
#[derive(Debug, Clone, Copy)]
pub struct HashEmbedder {
    dimension: usize,
}

impl HashEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "dimension must be positive");
        HashEmbedder { dimension }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl Embedder for HashEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, String> {
        let mut v = vec![0.0f32; self.dimension];
        let lower = text.to_lowercase();
        for tok in lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            v[(fnv1a(tok.as_bytes()) % self.dimension as u64) as usize] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if norm == 0.0 {
            return Err("text has no tokens".into());
        }
        Ok(v.into_iter().map(|x| x / norm).collect())
    }
}

/// Client for an OpenAI-style `POST /embeddings` endpoint.
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    pub url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub dimension: usize,
    pub timeout: Duration,
}

#[derive(Deserialize)]
struct HttpResponse {
    data: Vec<HttpItem>,
}

#[derive(Deserialize)]
struct HttpItem {
    embedding: Vec<f32>,
}

impl HttpEmbedder {
    pub fn new(url: &str, model: &str, dimension: usize) -> Self {
        HttpEmbedder {
            url: url.to_string(),
            model: model.to_string(),
            api_key: None,
            dimension,
            timeout: Duration::from_secs(30),
        }
    }
}

impl Embedder for HttpEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, String> {
        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| e.to_string())?;
        let mut req = client
            .post(&self.url)
            .json(&serde_json::json!({"model": self.model, "input": text}));
        if let Some(k) = &self.api_key {
            req = req.bearer_auth(k);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        if !resp.status().is_success() {
            return Err(format!("HTTP {}", resp.status()));
        }
        let body: HttpResponse = resp.json().map_err(|e| e.to_string())?;
        let e = body
            .data
            .into_iter()
            .next()
            .ok_or("response has no embeddings")?
            .embedding;
        if e.len() != self.dimension {
            return Err(format!("expected dimension {}, got {}", self.dimension, e.len()));
        }
        Ok(e)
    }
}
