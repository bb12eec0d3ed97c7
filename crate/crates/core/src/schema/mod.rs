//! Keypoint schemas of the supported pose-model families, joint resolution,
//! pose streams and kinematic feature extraction.

mod builtin;
mod features;
pub mod geometry;
mod stream;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use features::{
    barbell_proxy, compute_features, select_side, Feature, FeatureOptions, KinematicFeatures, Side,
};
pub use geometry::{joint_angle, BBox, DegenerateGeometry, Point};
pub use stream::{
    read_keypoint_stream, read_keypoint_stream_file, write_keypoint_stream, Keypoint, PersonInstance,
    PoseFrame, StreamError,
};

/// Semantic name of the barbell pseudo-joint.
pub const BARBELL: &str = "barbell";

#[derive(Debug, Error, PartialEq)]
pub enum SchemaError {
    #[error("unknown schema '{0}'")]
    UnknownSchema(String),
    #[error("joint '{joint}' is not provided by schema '{schema}' and has no fallback")]
    MissingKeypoint { joint: String, schema: String },
    #[error("invalid schema '{schema}': {message}")]
    Invalid { schema: String, message: String },
    #[error("'{0}' cannot be located: required keypoints are below the confidence floor")]
    LowConfidence(String),
    #[error("schema registry I/O: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDef {
    pub name: String,
    /// Per-joint OKS localization constant.
    pub kappa: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawSchema {
    schema_name: String,
    has_hands: bool,
    joints: Vec<JointDef>,
}

/// Ordered joint list of one pose-model family.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawSchema", into = "RawSchema")]
pub struct KeypointSchema {
    name: String,
    has_hands: bool,
    joints: Vec<JointDef>,
    index: HashMap<String, usize>,
}

impl PartialEq for KeypointSchema {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.has_hands == other.has_hands && self.joints == other.joints
    }
}

impl TryFrom<RawSchema> for KeypointSchema {
    type Error = SchemaError;

    fn try_from(raw: RawSchema) -> Result<Self, SchemaError> {
        KeypointSchema::new(raw.schema_name, raw.joints, raw.has_hands)
    }
}

impl From<KeypointSchema> for RawSchema {
    fn from(s: KeypointSchema) -> Self {
        RawSchema {
            schema_name: s.name,
            has_hands: s.has_hands,
            joints: s.joints,
        }
    }
}

/// How a semantic joint name is located under a schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JointRef {
    Index(usize),
    Fallback(Fallback),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fallback {
    /// Midpoint of the two middle-finger MCP joints.
    BarbellFromMcp { left: usize, right: usize },
    /// Wrist midpoint displaced along +y by a fixed offset.
    BarbellFromWrist { left: usize, right: usize },
    /// Hand joint on a schema without hands: the feature is dropped.
    ExcludedHandJoint,
}

const HAND_PARTS: [&str; 6] = [
    "hand_root",
    "thumb",
    "forefinger",
    "middle_finger",
    "ring_finger",
    "pinky_finger",
];

/// Whether `name` denotes a joint of the hand proper (wrist excluded).
pub fn is_hand_joint(name: &str) -> bool {
    let rest = name
        .strip_prefix("left_")
        .or_else(|| name.strip_prefix("right_"))
        .unwrap_or(name);
    rest.starts_with("hand") || rest.ends_with("_mcp") || HAND_PARTS.iter().any(|p| rest.starts_with(p))
}

fn canonical_name(name: &str) -> &str {
    match name {
        "left_middle_mcp" | "left_middle_finger_mcp" => "left_middle_finger1",
        "right_middle_mcp" | "right_middle_finger_mcp" => "right_middle_finger1",
        other => other,
    }
}

impl KeypointSchema {
    pub fn new(
        name: impl Into<String>,
        joints: Vec<JointDef>,
        has_hands: bool,
    ) -> Result<Self, SchemaError> {
        let name = name.into();
        let invalid = |message: String| SchemaError::Invalid {
            schema: name.clone(),
            message,
        };
        if joints.is_empty() {
            return Err(invalid("no joints".into()));
        }
        let mut index = HashMap::with_capacity(joints.len());
        for (i, j) in joints.iter().enumerate() {
            if !(j.kappa.is_finite() && j.kappa > 0.0) {
                return Err(invalid(format!("joint '{}' has non-positive kappa", j.name)));
            }
            if index.insert(j.name.clone(), i).is_some() {
                return Err(invalid(format!("duplicate joint '{}'", j.name)));
            }
        }
        Ok(KeypointSchema {
            name,
            has_hands,
            joints,
            index,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn has_hands(&self) -> bool {
        self.has_hands
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn joints(&self) -> &[JointDef] {
        &self.joints
    }

    pub fn joint_names(&self) -> impl Iterator<Item = &str> {
        self.joints.iter().map(|j| j.name.as_str())
    }

    pub fn kappas(&self) -> Vec<f64> {
        self.joints.iter().map(|j| j.kappa).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(canonical_name(name)).copied()
    }

    pub fn resolve_joint(&self, name: &str) -> Result<JointRef, SchemaError> {
        if let Some(i) = self.index_of(name) {
            return Ok(JointRef::Index(i));
        }
        let missing = || SchemaError::MissingKeypoint {
            joint: name.to_string(),
            schema: self.name.clone(),
        };
        if name == BARBELL {
            if self.has_hands {
                if let (Some(left), Some(right)) = (
                    self.index_of("left_middle_finger1"),
                    self.index_of("right_middle_finger1"),
                ) {
                    return Ok(JointRef::Fallback(Fallback::BarbellFromMcp { left, right }));
                }
            }
            return match (self.index_of("left_wrist"), self.index_of("right_wrist")) {
                (Some(left), Some(right)) => {
                    Ok(JointRef::Fallback(Fallback::BarbellFromWrist { left, right }))
                }
                _ => Err(missing()),
            };
        }
        if !self.has_hands && is_hand_joint(name) {
            return Ok(JointRef::Fallback(Fallback::ExcludedHandJoint));
        }
        Err(missing())
    }
}

/// Named collection of schemas, preloaded with the built-in families.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemaRegistry {
    schemas: BTreeMap<String, KeypointSchema>,
}

#[derive(Serialize, Deserialize)]
struct RegistryFile {
    schemas: Vec<KeypointSchema>,
}

impl Default for SchemaRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl SchemaRegistry {
    pub fn empty() -> Self {
        SchemaRegistry {
            schemas: BTreeMap::new(),
        }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        for s in builtin::all() {
            r.insert(s);
        }
        r
    }

    pub fn insert(&mut self, schema: KeypointSchema) {
        self.schemas.insert(schema.name.clone(), schema);
    }

    pub fn get(&self, name: &str) -> Result<&KeypointSchema, SchemaError> {
        let key = name.to_ascii_lowercase().replace('-', "");
        self.schemas
            .get(name)
            .or_else(|| self.schemas.get(&key))
            .ok_or_else(|| SchemaError::UnknownSchema(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.schemas.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = &KeypointSchema> {
        self.schemas.values()
    }

    pub fn from_json(text: &str) -> Result<Self, SchemaError> {
        let file: RegistryFile =
            serde_json::from_str(text).map_err(|e| SchemaError::Io(e.to_string()))?;
        let mut r = Self::empty();
        for s in file.schemas {
            r.insert(s);
        }
        Ok(r)
    }

    pub fn to_json(&self) -> String {
        let file = RegistryFile {
            schemas: self.schemas.values().cloned().collect(),
        };
        serde_json::to_string_pretty(&file).expect("registry serializes")
    }

    /// Built-ins overlaid with the schemas in `path`.
    pub fn load(path: &Path) -> Result<Self, SchemaError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SchemaError::Io(format!("{}: {e}", path.display())))?;
        let mut r = Self::builtin();
        for s in Self::from_json(&text)?.schemas.into_values() {
            r.insert(s);
        }
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_lookup_on_every_body_schema() {
        let reg = SchemaRegistry::builtin();
        for s in reg.iter() {
            let i = s.index_of("left_knee").unwrap();
            assert_eq!(s.resolve_joint("left_knee"), Ok(JointRef::Index(i)));
        }
    }

    #[test]
    fn barbell_fallbacks() {
        let reg = SchemaRegistry::builtin();
        let wb = reg.get("coco_wholebody").unwrap();
        assert!(matches!(
            wb.resolve_joint(BARBELL),
            Ok(JointRef::Fallback(Fallback::BarbellFromMcp { .. }))
        ));
        let coco = reg.get("coco17").unwrap();
        assert!(matches!(
            coco.resolve_joint(BARBELL),
            Ok(JointRef::Fallback(Fallback::BarbellFromWrist { .. }))
        ));
    }

    #[test]
    fn hand_joints_excluded_without_hands() {
        let reg = SchemaRegistry::builtin();
        let coco = reg.get("coco17").unwrap();
        assert_eq!(
            coco.resolve_joint("left_middle_finger1"),
            Ok(JointRef::Fallback(Fallback::ExcludedHandJoint))
        );
        assert!(matches!(
            coco.resolve_joint("left_toe"),
            Err(SchemaError::MissingKeypoint { .. })
        ));
        let wb = reg.get("coco_wholebody").unwrap();
        assert!(matches!(wb.resolve_joint("left_middle_mcp"), Ok(JointRef::Index(_))));
    }

    #[test]
    fn schema_invariants_enforced() {
        let j = |n: &str, k: f64| JointDef {
            name: n.into(),
            kappa: k,
        };
        assert!(KeypointSchema::new("x", vec![j("a", 0.1), j("a", 0.1)], false).is_err());
        assert!(KeypointSchema::new("x", vec![j("a", 0.0)], false).is_err());
        assert!(KeypointSchema::new("x", vec![j("a", 0.1)], false).is_ok());
    }

    #[test]
    fn registry_json_round_trip() {
        let reg = SchemaRegistry::builtin();
        let back = SchemaRegistry::from_json(&reg.to_json()).unwrap();
        assert_eq!(reg, back);
        assert!(reg.get("HALPE-26").is_ok());
        assert!(matches!(reg.get("nope"), Err(SchemaError::UnknownSchema(_))));
    }
}
