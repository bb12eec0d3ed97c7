use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RetrievalError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkMetadata {
    pub label: u8,
    #[serde(rename = "sourceType")]
    pub source_type: String,
    #[serde(rename = "pageIndex")]
    pub page_index: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub text: String,
    pub embedding: Vec<f32>,
    pub metadata: ChunkMetadata,
}

#[derive(Serialize, Deserialize)]
struct Header {
    dimension: usize,
    count: usize,
}

#[derive(Serialize, Deserialize)]
struct Record {
    text: String,
    #[serde(flatten)]
    metadata: ChunkMetadata,
}

/// In-memory chunk index.
///
/// On disk: a JSON header line `{"dimension":d,"count":n}`, then `n * d`
/// little-endian `f32` values, then a JSON array of text and metadata
/// records in the same order.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkStore {
    dimension: usize,
    chunks: Vec<Chunk>,
}

impl ChunkStore {
    pub fn new(dimension: usize) -> Self {
        ChunkStore {
            dimension,
            chunks: Vec::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn push(&mut self, chunk: Chunk) -> Result<(), RetrievalError> {
        if chunk.embedding.len() != self.dimension {
            return Err(RetrievalError::Shape {
                expected: self.dimension,
                got: chunk.embedding.len(),
            });
        }
        if chunk.metadata.label > 1 {
            return Err(RetrievalError::Label(chunk.metadata.label));
        }
        self.chunks.push(chunk);
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            dimension: self.dimension,
            count: self.chunks.len(),
        };
        let mut out = serde_json::to_vec(&header).expect("header serializes");
        out.push(b'\n');
        for c in &self.chunks {
            for v in &c.embedding {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let records: Vec<Record> = self
            .chunks
            .iter()
            .map(|c| Record {
                text: c.text.clone(),
                metadata: c.metadata.clone(),
            })
            .collect();
        out.extend(serde_json::to_vec(&records).expect("records serialize"));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, RetrievalError> {
        let bad = |m: String| RetrievalError::Format(m);
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("missing header line".into()))?;
        let header: Header =
            serde_json::from_slice(&bytes[..nl]).map_err(|e| bad(format!("header: {e}")))?;
        let n_floats = header
            .dimension
            .checked_mul(header.count)
            .ok_or_else(|| bad("header sizes overflow".into()))?;
        let body_start = nl + 1;
        let body_end = body_start + n_floats * 4;
        if bytes.len() < body_end {
            return Err(bad(format!(
                "embedding block truncated: need {} bytes, have {}",
                n_floats * 4,
                bytes.len() - body_start
            )));
        }
        let floats: Vec<f32> = bytes[body_start..body_end]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let records: Vec<Record> =
            serde_json::from_slice(&bytes[body_end..]).map_err(|e| bad(format!("records: {e}")))?;
        if records.len() != header.count {
            return Err(bad(format!(
                "header says {} chunks, found {} records",
                header.count,
                records.len()
            )));
        }
        let mut store = ChunkStore::new(header.dimension);
        for (i, r) in records.into_iter().enumerate() {
            let d = header.dimension;
            store.push(Chunk {
                text: r.text,
                embedding: floats[i * d..(i + 1) * d].to_vec(),
                metadata: r.metadata,
            })?;
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<(), RetrievalError> {
        std::fs::write(path, self.to_bytes()).map_err(|e| RetrievalError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        let bytes = std::fs::read(path).map_err(|e| RetrievalError::Io(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}
