use serde::{Deserialize, Serialize};

use super::document::{Annotation, Group, MovementRuleSet};
use crate::schema::{Fallback, JointRef, KeypointSchema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coverage {
    BarbellFromMcp,
    BarbellFromWrist,
    ExcludedHandJoint,
    Uncovered,
}

impl Coverage {
    pub fn is_covered(self) -> bool {
        self != Coverage::Uncovered
    }
}

/// A joint referenced by the rules but not present in the schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gap {
    pub joint: String,
    pub coverage: Coverage,
    /// `(group, semantic_key)` of every constraint referencing the joint.
    pub constraints: Vec<(Group, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub schema: String,
    pub movement: String,
    pub gaps: Vec<Gap>,
    /// Free-text no-rep conditions carried without evaluation.
    pub annotations: Vec<Annotation>,
    /// `(semantic_key, comparison)` pairs with mixed unit classes.
    pub unit_mismatches: Vec<(String, String)>,
    /// True iff every gap is covered by a fallback.
    pub runnable: bool,
}

impl ValidationReport {
    /// Constraints that will evaluate as excluded under this schema.
    pub fn excluded_constraints(&self) -> Vec<&(Group, String)> {
        self.gaps
            .iter()
            .filter(|g| g.coverage == Coverage::ExcludedHandJoint)
            .flat_map(|g| g.constraints.iter())
            .collect()
    }
}

pub fn validate_rule_set(rules: &MovementRuleSet, schema: &KeypointSchema) -> ValidationReport {
    let mut gaps: Vec<Gap> = Vec::new();
    for (group, c) in rules.groups() {
        for joint in c.condition.joints() {
            let coverage = match schema.resolve_joint(joint) {
                Ok(JointRef::Index(_)) => continue,
                Ok(JointRef::Fallback(Fallback::BarbellFromMcp { .. })) => Coverage::BarbellFromMcp,
                Ok(JointRef::Fallback(Fallback::BarbellFromWrist { .. })) => {
                    Coverage::BarbellFromWrist
                }
                Ok(JointRef::Fallback(Fallback::ExcludedHandJoint)) => Coverage::ExcludedHandJoint,
                Err(_) => Coverage::Uncovered,
            };
            let entry = (group, c.semantic_key.clone());
            match gaps.iter_mut().find(|g| g.joint == joint) {
                Some(g) => {
                    if !g.constraints.contains(&entry) {
                        g.constraints.push(entry);
                    }
                }
                None => gaps.push(Gap {
                    joint: joint.to_string(),
                    coverage,
                    constraints: vec![entry],
                }),
            }
        }
    }
    let runnable = gaps.iter().all(|g| g.coverage.is_covered());
    ValidationReport {
        schema: schema.name().to_string(),
        movement: rules.movement_name.clone(),
        gaps,
        annotations: rules.annotations.clone(),
        unit_mismatches: rules.unit_mismatches(),
        runnable,
    }
}
