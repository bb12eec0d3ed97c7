//! The structured movement-rule document and its JSON form.
//!
//! Accepted shape:
//!
//! ```json
//! {
//!   "movement": "Air Squat",
//!   "y_axis": "up",
//!   "response": {
//!     "rep_start": { "standing": { "keypoints": [...], "condition": "..." } },
//!     "rep_end": { ... },
//!     "rep_requirements": { ... },
//!     "no_rep_conditions": ["Heels off the ground"]
//!   }
//! }
//! ```
//!
//! Groups may sit under `response` or at the top level. A group is either an
//! object keyed by semantic key or an array of `{"name", "keypoints",
//! "condition", "tolerance"}` objects; `no_rep_conditions` additionally
//! accepts bare strings.

use std::collections::HashSet;
use std::fmt;

use serde::de::{MapAccess, SeqAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use super::expr::{parse_condition, Comparison, ConditionExpr, GrammarError, Operand, Primitive};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum YAxis {
    /// Rules are authored with y growing upward (rulebook reading).
    #[default]
    Up,
    /// Rules already use image coordinates.
    Down,
}

/// How left/right joints are used per frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SideSelection {
    /// Evaluate every referenced joint.
    #[default]
    Both,
    /// Evaluate only the side whose shoulder/elbow/wrist are more confident.
    Confident,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedConstraint {
    pub semantic_key: String,
    pub keypoints: Vec<String>,
    pub condition: ConditionExpr,
    /// Optional `~=` tolerance for this constraint only.
    pub tolerance: Option<f64>,
}

/// A no-rep condition that is not grammar-parseable; carried for reporting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub semantic_key: String,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    RepStart,
    RepEnd,
    RepRequirements,
    NoRepConditions,
}

impl Group {
    pub fn as_str(self) -> &'static str {
        match self {
            Group::RepStart => "rep_start",
            Group::RepEnd => "rep_end",
            Group::RepRequirements => "rep_requirements",
            Group::NoRepConditions => "no_rep_conditions",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Parsed, normalized rules for one movement. Immutable after parsing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovementRuleSet {
    pub movement_name: String,
    pub y_axis: YAxis,
    pub side_selection: SideSelection,
    pub rep_start: Vec<NamedConstraint>,
    pub rep_end: Vec<NamedConstraint>,
    pub rep_requirements: Vec<NamedConstraint>,
    pub no_rep_conditions: Vec<NamedConstraint>,
    pub annotations: Vec<Annotation>,
}

impl MovementRuleSet {
    pub fn group(&self, g: Group) -> &[NamedConstraint] {
        match g {
            Group::RepStart => &self.rep_start,
            Group::RepEnd => &self.rep_end,
            Group::RepRequirements => &self.rep_requirements,
            Group::NoRepConditions => &self.no_rep_conditions,
        }
    }

    pub fn groups(&self) -> impl Iterator<Item = (Group, &NamedConstraint)> {
        [
            Group::RepStart,
            Group::RepEnd,
            Group::RepRequirements,
            Group::NoRepConditions,
        ]
        .into_iter()
        .flat_map(move |g| self.group(g).iter().map(move |c| (g, c)))
    }

    /// Distinct primitives referenced by any active constraint.
    pub fn primitives(&self) -> Vec<&Primitive> {
        let mut out: Vec<&Primitive> = Vec::new();
        for (_, c) in self.groups() {
            for p in c.condition.primitives() {
                if !out.contains(&p) {
                    out.push(p);
                }
            }
        }
        out
    }

    /// Comparisons whose two sides carry different unit classes.
    pub fn unit_mismatches(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (_, c) in self.groups() {
            c.condition.visit_comparisons(&mut |cmp| {
                let rhs_class = match &cmp.rhs {
                    Operand::Primitive(p) => Some(p.unit_class()),
                    Operand::Literal(l) => l.unit_class(),
                };
                if rhs_class.is_some_and(|rc| rc != cmp.lhs.unit_class()) {
                    out.push((c.semantic_key.clone(), cmp.to_string()));
                }
            });
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("malformed rule JSON at byte {offset}: {message}")]
    Json { offset: usize, message: String },
    #[error("rule schema error: {0}")]
    Schema(String),
    #[error("cannot parse condition of '{key}': {source}")]
    Grammar {
        key: String,
        #[source]
        source: GrammarError,
    },
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawBody {
    Text(String),
    Full {
        keypoints: Option<Vec<String>>,
        condition: String,
        tolerance: Option<f64>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawItem {
    Text(String),
    Named {
        #[serde(alias = "semantic_key")]
        name: String,
        keypoints: Option<Vec<String>>,
        condition: String,
        tolerance: Option<f64>,
    },
}

struct RawEntry {
    key: Option<String>,
    keypoints: Option<Vec<String>>,
    condition: String,
    tolerance: Option<f64>,
}

/// A group in document order, with duplicate keys detected rather than merged.
struct RawGroup {
    entries: Vec<RawEntry>,
    duplicate: Option<String>,
}

impl<'de> Deserialize<'de> for RawGroup {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = RawGroup;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object keyed by semantic key or an array of constraints")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<RawGroup, A::Error> {
                let mut entries = Vec::new();
                let mut seen = HashSet::new();
                let mut duplicate = None;
                while let Some((key, body)) = map.next_entry::<String, RawBody>()? {
                    if !seen.insert(key.clone()) && duplicate.is_none() {
                        duplicate = Some(key.clone());
                    }
                    entries.push(match body {
                        RawBody::Text(condition) => RawEntry {
                            key: Some(key),
                            keypoints: None,
                            condition,
                            tolerance: None,
                        },
                        RawBody::Full {
                            keypoints,
                            condition,
                            tolerance,
                        } => RawEntry {
                            key: Some(key),
                            keypoints,
                            condition,
                            tolerance,
                        },
                    });
                }
                Ok(RawGroup { entries, duplicate })
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<RawGroup, A::Error> {
                let mut entries = Vec::new();
                let mut seen = HashSet::new();
                let mut duplicate = None;
                while let Some(item) = seq.next_element::<RawItem>()? {
                    entries.push(match item {
                        RawItem::Text(condition) => RawEntry {
                            key: None,
                            keypoints: None,
                            condition,
                            tolerance: None,
                        },
                        RawItem::Named {
                            name,
                            keypoints,
                            condition,
                            tolerance,
                        } => {
                            if !seen.insert(name.clone()) && duplicate.is_none() {
                                duplicate = Some(name.clone());
                            }
                            RawEntry {
                                key: Some(name),
                                keypoints,
                                condition,
                                tolerance,
                            }
                        }
                    });
                }
                Ok(RawGroup { entries, duplicate })
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Deserialize, Default)]
struct RawGroups {
    rep_start: Option<RawGroup>,
    rep_end: Option<RawGroup>,
    rep_requirements: Option<RawGroup>,
    no_rep_conditions: Option<RawGroup>,
}

#[derive(Deserialize)]
struct RawDoc {
    #[serde(alias = "movement_name")]
    movement: Option<String>,
    #[serde(default)]
    y_axis: YAxis,
    #[serde(default)]
    side_selection: SideSelection,
    response: Option<RawGroups>,
    rep_start: Option<RawGroup>,
    rep_end: Option<RawGroup>,
    rep_requirements: Option<RawGroup>,
    no_rep_conditions: Option<RawGroup>,
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut offset = 0;
    for (i, l) in text.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            return (offset + column.saturating_sub(1)).min(text.len());
        }
        offset += l.len();
    }
    text.len()
}

/// Parse a rule document into a validated, y-normalized rule set.
pub fn parse_rule_set(document: &str) -> Result<MovementRuleSet, RuleError> {
    let raw: RawDoc = serde_json::from_str(document).map_err(|e| {
        if e.is_data() {
            RuleError::Schema(e.to_string())
        } else {
            RuleError::Json {
                offset: byte_offset(document, e.line(), e.column()),
                message: e.to_string(),
            }
        }
    })?;

    let movement_name = raw
        .movement
        .filter(|m| !m.trim().is_empty())
        .ok_or_else(|| RuleError::Schema("movement name is missing or empty".into()))?;

    let mut top = RawGroups {
        rep_start: raw.rep_start,
        rep_end: raw.rep_end,
        rep_requirements: raw.rep_requirements,
        no_rep_conditions: raw.no_rep_conditions,
    };
    if let Some(resp) = raw.response {
        fn merge(
            a: &mut Option<RawGroup>,
            b: Option<RawGroup>,
            g: Group,
        ) -> Result<(), RuleError> {
            if let Some(b) = b {
                if a.is_some() {
                    return Err(RuleError::Schema(format!(
                        "group '{g}' given both at top level and under 'response'"
                    )));
                }
                *a = Some(b);
            }
            Ok(())
        }
        merge(&mut top.rep_start, resp.rep_start, Group::RepStart)?;
        merge(&mut top.rep_end, resp.rep_end, Group::RepEnd)?;
        merge(&mut top.rep_requirements, resp.rep_requirements, Group::RepRequirements)?;
        merge(&mut top.no_rep_conditions, resp.no_rep_conditions, Group::NoRepConditions)?;
    }

    let y_axis = raw.y_axis;
    let required = |g: Option<RawGroup>, group: Group| -> Result<Vec<NamedConstraint>, RuleError> {
        let g = g.ok_or_else(|| RuleError::Schema(format!("missing group '{group}'")))?;
        let out = build_group(g, group, y_axis)?.0;
        if out.is_empty() {
            return Err(RuleError::Schema(format!("group '{group}' must not be empty")));
        }
        Ok(out)
    };
    let rep_start = required(top.rep_start, Group::RepStart)?;
    let rep_end = required(top.rep_end, Group::RepEnd)?;
    let rep_requirements = match top.rep_requirements {
        Some(g) => build_group(g, Group::RepRequirements, y_axis)?.0,
        None => Vec::new(),
    };
    let (no_rep_conditions, annotations) = match top.no_rep_conditions {
        Some(g) => build_group(g, Group::NoRepConditions, y_axis)?,
        None => (Vec::new(), Vec::new()),
    };

    Ok(MovementRuleSet {
        movement_name,
        y_axis,
        side_selection: raw.side_selection,
        rep_start,
        rep_end,
        rep_requirements,
        no_rep_conditions,
        annotations,
    })
}

fn build_group(
    g: RawGroup,
    group: Group,
    y_axis: YAxis,
) -> Result<(Vec<NamedConstraint>, Vec<Annotation>), RuleError> {
    if let Some(dup) = g.duplicate {
        return Err(RuleError::Schema(format!(
            "duplicate semantic key '{dup}' in group '{group}'"
        )));
    }
    let mut constraints = Vec::new();
    let mut annotations = Vec::new();
    let prefix = match group {
        Group::NoRepConditions => "no_rep",
        other => other.as_str(),
    };
    for (i, e) in g.entries.into_iter().enumerate() {
        let key = match e.key {
            Some(k) if k.trim().is_empty() => {
                return Err(RuleError::Schema(format!("empty semantic key in group '{group}'")))
            }
            Some(k) => k,
            None if group == Group::NoRepConditions => format!("{prefix}_{i}"),
            None => {
                return Err(RuleError::Schema(format!(
                    "unnamed constraint in group '{group}'"
                )))
            }
        };
        let condition = match parse_condition(&e.condition) {
            Ok(c) => c,
            Err(_) if group == Group::NoRepConditions => {
                annotations.push(Annotation {
                    semantic_key: key,
                    text: e.condition,
                });
                continue;
            }
            Err(source) => return Err(RuleError::Grammar { key, source }),
        };
        if let Some(t) = e.tolerance {
            if !(t.is_finite() && t >= 0.0) {
                return Err(RuleError::Schema(format!(
                    "tolerance of '{key}' must be finite and >= 0"
                )));
            }
        }
        let referenced: Vec<String> = condition.joints().into_iter().map(String::from).collect();
        let keypoints = match e.keypoints {
            Some(kps) => {
                if let Some(j) = referenced.iter().find(|j| !kps.contains(j)) {
                    return Err(RuleError::Schema(format!(
                        "constraint '{key}' references joint '{j}' not listed in its keypoints"
                    )));
                }
                kps
            }
            None => referenced,
        };
        let condition = match y_axis {
            YAxis::Up => to_image_y(condition),
            YAxis::Down => condition,
        };
        constraints.push(NamedConstraint {
            semantic_key: key,
            keypoints,
            condition,
            tolerance: e.tolerance,
        });
    }
    Ok((constraints, annotations))
}

/// Rewrite y-up comparisons into image coordinates.
///
/// Normalized image y is measured from the top of the reference box, so the
/// y-up value is `1 - y`. Between two Y primitives this mirrors the
/// comparator; against a literal it also maps the literal to `1 - v`.
fn to_image_y(expr: ConditionExpr) -> ConditionExpr {
    expr.map_comparisons(&mut |c: Comparison| {
        if !matches!(c.lhs, Primitive::Y(_)) {
            return c;
        }
        match c.rhs {
            Operand::Primitive(Primitive::Y(_)) => Comparison {
                cmp: c.cmp.mirrored(),
                ..c
            },
            Operand::Literal(mut l) if l.unit.is_none() => {
                l.value = 1.0 - l.value;
                Comparison {
                    lhs: c.lhs,
                    cmp: c.cmp.mirrored(),
                    rhs: Operand::Literal(l),
                }
            }
            rhs => Comparison { rhs, ..c },
        }
    })
}
