use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::geometry::{joint_angle, Point};
use super::stream::PersonInstance;
use super::{Fallback, JointRef, KeypointSchema, SchemaError, BARBELL};
use crate::rules::{MovementRuleSet, Primitive, SideSelection};

/// One kinematic quantity for one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Value(f64),
    /// A constituent keypoint is below the confidence floor or missing.
    Unavailable,
    /// Dropped by design: hand joint on a hand-less schema, or the side not
    /// selected this frame.
    Excluded,
}

impl Feature {
    pub fn value(self) -> Option<f64> {
        match self {
            Feature::Value(v) => Some(v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    fn prefix(self) -> &'static str {
        match self {
            Side::Left => "left_",
            Side::Right => "right_",
        }
    }

    fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureOptions {
    pub conf_floor: f64,
    /// Pixels added along +y to the wrist midpoint for the barbell proxy.
    pub barbell_offset: f64,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        FeatureOptions {
            conf_floor: 0.3,
            barbell_offset: 20.0,
        }
    }
}

impl FeatureOptions {
    pub fn with_floor(conf_floor: f64) -> Self {
        FeatureOptions {
            conf_floor,
            ..Default::default()
        }
    }
}

/// Per-frame feature values keyed by primitive.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KinematicFeatures {
    values: BTreeMap<Primitive, Feature>,
    unresolved: BTreeSet<String>,
    /// Side chosen under confident side selection.
    pub side: Option<Side>,
}

impl KinematicFeatures {
    pub fn get(&self, p: &Primitive) -> Option<Feature> {
        self.values.get(p).copied()
    }

    pub fn insert(&mut self, p: Primitive, f: Feature) {
        self.values.insert(p, f);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Primitive, Feature)> {
        self.values.iter().map(|(p, f)| (p, *f))
    }

    /// Joints that the schema cannot provide.
    pub fn unresolved(&self) -> impl Iterator<Item = &str> {
        self.unresolved.iter().map(String::as_str)
    }

    /// The joint to blame when `p` has no entry.
    pub fn missing_joint_of<'a>(&'a self, p: &'a Primitive) -> &'a str {
        let joints = p.joints();
        joints
            .iter()
            .find(|j| self.unresolved.contains(**j))
            .or(joints.first())
            .copied()
            .unwrap_or("")
    }

    pub fn any_unavailable(&self) -> bool {
        self.values.values().any(|f| *f == Feature::Unavailable)
    }

    /// Features for a frame without a target: every resolvable feature is
    /// unavailable; exclusions still apply.
    pub fn without_target(rules: &MovementRuleSet, schema: &KeypointSchema) -> Self {
        let empty = PersonInstance::new(Vec::new(), None);
        let mut f = compute_features(&empty, rules, schema, &FeatureOptions::default());
        f.side = None;
        for v in f.values.values_mut() {
            if *v != Feature::Excluded {
                *v = Feature::Unavailable;
            }
        }
        f
    }
}

enum Loc {
    At(Point),
    Unavailable,
    Excluded,
    Unresolved,
}

fn confident(inst: &PersonInstance, i: usize, floor: f64) -> Option<Point> {
    inst.keypoints
        .get(i)
        .filter(|k| k.confidence >= floor)
        .map(|k| k.point())
}

fn pick(a: Option<Point>, b: Option<Point>) -> Option<Point> {
    match (a, b) {
        (Some(a), Some(b)) => Some(a.midpoint(b)),
        (a, b) => a.or(b),
    }
}

/// Barbell position: middle-finger MCP midpoint on hand-bearing schemas,
/// otherwise the wrist midpoint displaced by `barbell_offset` along +y.
/// A single confident joint stands in for the pair.
pub fn barbell_proxy(
    instance: &PersonInstance,
    schema: &KeypointSchema,
    opts: &FeatureOptions,
) -> Result<Point, SchemaError> {
    let floor = opts.conf_floor;
    if let Ok(JointRef::Fallback(Fallback::BarbellFromMcp { left, right })) =
        schema.resolve_joint(BARBELL)
    {
        if let Some(p) = pick(confident(instance, left, floor), confident(instance, right, floor)) {
            return Ok(p);
        }
    }
    let missing = |j: &str| SchemaError::MissingKeypoint {
        joint: j.to_string(),
        schema: schema.name().to_string(),
    };
    let l = schema.index_of("left_wrist").ok_or_else(|| missing("left_wrist"))?;
    let r = schema.index_of("right_wrist").ok_or_else(|| missing("right_wrist"))?;
    pick(confident(instance, l, floor), confident(instance, r, floor))
        .map(|p| Point::new(p.x, p.y + opts.barbell_offset))
        .ok_or_else(|| SchemaError::LowConfidence(BARBELL.to_string()))
}

fn side_confidence(inst: &PersonInstance, schema: &KeypointSchema, side: Side) -> f64 {
    let parts = ["shoulder", "elbow", "wrist"];
    let total: f64 = parts
        .iter()
        .map(|p| {
            schema
                .index_of(&format!("{}{p}", side.prefix()))
                .and_then(|i| inst.keypoints.get(i))
                .map_or(0.0, |k| k.confidence)
        })
        .sum();
    total / parts.len() as f64
}

/// Side with higher mean shoulder/elbow/wrist confidence; ties go left.
pub fn select_side(inst: &PersonInstance, schema: &KeypointSchema) -> Side {
    if side_confidence(inst, schema, Side::Right) > side_confidence(inst, schema, Side::Left) {
        Side::Right
    } else {
        Side::Left
    }
}

fn locate(
    inst: &PersonInstance,
    schema: &KeypointSchema,
    joint: &str,
    opts: &FeatureOptions,
    dropped: Option<Side>,
) -> Loc {
    if dropped.is_some_and(|s| joint.starts_with(s.prefix())) {
        return Loc::Excluded;
    }
    match schema.resolve_joint(joint) {
        Ok(JointRef::Index(i)) => {
            confident(inst, i, opts.conf_floor).map_or(Loc::Unavailable, Loc::At)
        }
        Ok(JointRef::Fallback(Fallback::ExcludedHandJoint)) => Loc::Excluded,
        Ok(JointRef::Fallback(_)) => {
            barbell_proxy(inst, schema, opts).map_or(Loc::Unavailable, Loc::At)
        }
        Err(_) => Loc::Unresolved,
    }
}

/// Compute exactly the primitives referenced by `rules`.
///
/// Low-confidence inputs yield [`Feature::Unavailable`]; joints the schema
/// cannot provide at all are left out and reported by
/// [`KinematicFeatures::unresolved`].
pub fn compute_features(
    instance: &PersonInstance,
    rules: &MovementRuleSet,
    schema: &KeypointSchema,
    opts: &FeatureOptions,
) -> KinematicFeatures {
    let mut out = KinematicFeatures::default();
    let dropped = match rules.side_selection {
        SideSelection::Both => None,
        SideSelection::Confident => {
            let s = select_side(instance, schema);
            out.side = Some(s);
            Some(s.other())
        }
    };
    let reference = instance
        .reference_box(opts.conf_floor)
        .filter(|b| b.h > 0.0);

    for p in rules.primitives() {
        let locs: Vec<(&str, Loc)> = p
            .joints()
            .into_iter()
            .map(|j| (j, locate(instance, schema, j, opts, dropped)))
            .collect();
        let mut unresolved = false;
        for (j, l) in &locs {
            if matches!(l, Loc::Unresolved) {
                out.unresolved.insert(j.to_string());
                unresolved = true;
            }
        }
        if unresolved {
            continue;
        }
        let feature = if locs.iter().any(|(_, l)| matches!(l, Loc::Excluded)) {
            Feature::Excluded
        } else if locs.iter().any(|(_, l)| matches!(l, Loc::Unavailable)) {
            Feature::Unavailable
        } else {
            let pts: Vec<Point> = locs
                .iter()
                .map(|(_, l)| match l {
                    Loc::At(p) => *p,
                    _ => unreachable!("filtered above"),
                })
                .collect();
            match p {
                Primitive::Angle(..) => joint_angle(pts[0], pts[1], pts[2])
                    .map_or(Feature::Unavailable, Feature::Value),
                Primitive::X(_) => reference
                    .map_or(Feature::Unavailable, |b| Feature::Value((pts[0].x - b.x) / b.h)),
                Primitive::Y(_) => reference
                    .map_or(Feature::Unavailable, |b| Feature::Value((pts[0].y - b.y) / b.h)),
            }
        };
        out.insert(p.clone(), feature);
    }
    out
}
