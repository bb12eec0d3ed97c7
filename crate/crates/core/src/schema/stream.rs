//! JSON-Lines keypoint stream: one pose frame per line.
//!
//! `{"frame": n, "t": sec, "schema": name, "instances": [{"track_id": k,
//! "bbox": [x, y, w, h], "kps": [[x, y, c], ...]}]}`

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::geometry::{BBox, Point};
use super::KeypointSchema;

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("stream uses schema '{found}' but '{expected}' is configured")]
    SchemaMismatch { expected: String, found: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

impl Keypoint {
    pub const fn new(x: f64, y: f64, confidence: f64) -> Self {
        Keypoint { x, y, confidence }
    }

    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

impl From<[f64; 3]> for Keypoint {
    fn from([x, y, confidence]: [f64; 3]) -> Self {
        Keypoint { x, y, confidence }
    }
}

impl From<Keypoint> for [f64; 3] {
    fn from(k: Keypoint) -> Self {
        [k.x, k.y, k.confidence]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
struct BoxArray(BBox);

impl From<[f64; 4]> for BoxArray {
    fn from([x, y, w, h]: [f64; 4]) -> Self {
        BoxArray(BBox::new(x, y, w, h))
    }
}

impl From<BoxArray> for [f64; 4] {
    fn from(b: BoxArray) -> Self {
        [b.0.x, b.0.y, b.0.w, b.0.h]
    }
}

mod box_opt {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &Option<BBox>, s: S) -> Result<S::Ok, S::Error> {
        b.map(BoxArray).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<BBox>, D::Error> {
        Ok(Option::<BoxArray>::deserialize(d)?.map(|b| b.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonInstance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub track_id: Option<u64>,
    #[serde(default, with = "box_opt", skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BBox>,
    #[serde(rename = "kps")]
    pub keypoints: Vec<Keypoint>,
}

impl PersonInstance {
    pub fn new(keypoints: Vec<Keypoint>, bbox: Option<BBox>) -> Self {
        PersonInstance {
            track_id: None,
            bbox,
            keypoints,
        }
    }

    /// Tight box around keypoints at or above `conf_floor`.
    pub fn extent_box(&self, conf_floor: f64) -> Option<BBox> {
        BBox::enclosing(
            self.keypoints
                .iter()
                .filter(|k| k.confidence >= conf_floor)
                .map(Keypoint::point),
        )
    }

    /// The instance bbox, else the keypoint extent box.
    pub fn reference_box(&self, conf_floor: f64) -> Option<BBox> {
        self.bbox.or_else(|| self.extent_box(conf_floor))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseFrame {
    #[serde(rename = "frame")]
    pub frame_index: u64,
    #[serde(rename = "t")]
    pub timestamp: f64,
    pub schema: String,
    pub instances: Vec<PersonInstance>,
}

fn check_instance(inst: &PersonInstance) -> Result<(), String> {
    for (j, k) in inst.keypoints.iter().enumerate() {
        if !(0.0..=1.0).contains(&k.confidence) {
            return Err(format!("keypoint {j} confidence {} outside [0, 1]", k.confidence));
        }
        if !(k.x.is_finite() && k.y.is_finite()) {
            return Err(format!("keypoint {j} has non-finite coordinates"));
        }
    }
    if let Some(b) = inst.bbox {
        if !(b.w > 0.0 && b.h > 0.0) {
            return Err(format!("bbox must have w, h > 0, got {} x {}", b.w, b.h));
        }
    }
    Ok(())
}

/// Parse a stream, checking per-line invariants and frame ordering.
/// Blank lines are skipped.
pub fn read_keypoint_stream(reader: impl BufRead) -> Result<Vec<PoseFrame>, StreamError> {
    let mut frames: Vec<PoseFrame> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let frame: PoseFrame = serde_json::from_str(&line).map_err(|e| StreamError::Parse {
            line: n,
            message: e.to_string(),
        })?;
        let invalid = |message: String| StreamError::Invalid { line: n, message };
        if let Some(prev) = frames.last() {
            if frame.frame_index <= prev.frame_index {
                return Err(invalid(format!(
                    "frame index {} does not increase (previous {})",
                    frame.frame_index, prev.frame_index
                )));
            }
            if frame.schema != prev.schema {
                return Err(invalid(format!(
                    "schema changes from '{}' to '{}'",
                    prev.schema, frame.schema
                )));
            }
        }
        for inst in &frame.instances {
            check_instance(inst).map_err(invalid)?;
        }
        frames.push(frame);
    }
    Ok(frames)
}

pub fn read_keypoint_stream_file(path: &Path) -> Result<Vec<PoseFrame>, StreamError> {
    let f = std::fs::File::open(path)?;
    read_keypoint_stream(BufReader::new(f))
}

pub fn write_keypoint_stream<'a>(
    mut w: impl Write,
    frames: impl IntoIterator<Item = &'a PoseFrame>,
) -> std::io::Result<()> {
    for f in frames {
        serde_json::to_writer(&mut w, f)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

impl KeypointSchema {
    /// Check that a parsed stream was produced under this schema.
    pub fn check_stream(&self, frames: &[PoseFrame]) -> Result<(), StreamError> {
        for (i, f) in frames.iter().enumerate() {
            if f.schema != self.name() {
                return Err(StreamError::SchemaMismatch {
                    expected: self.name().to_string(),
                    found: f.schema.clone(),
                });
            }
            for inst in &f.instances {
                if inst.keypoints.len() != self.len() {
                    return Err(StreamError::Invalid {
                        line: i + 1,
                        message: format!(
                            "instance has {} keypoints, schema '{}' has {}",
                            inst.keypoints.len(),
                            self.name(),
                            self.len()
                        ),
                    });
                }
            }
        }
        Ok(())
    }
}
