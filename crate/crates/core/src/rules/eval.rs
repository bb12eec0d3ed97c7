use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::document::NamedConstraint;
use super::expr::{Comparator, Comparison, ConditionExpr, Operand, Primitive, UnitClass};
use crate::schema::{Feature, KinematicFeatures};
use crate::thresholds::ThresholdConfig;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("missing keypoint '{joint}'")]
    MissingKeypoint { joint: String },
    #[error("unit mismatch in '{expr}'")]
    UnitMismatch { expr: String },
    #[error("feature {feature} is unavailable in this frame")]
    Unavailable { feature: String },
    #[error("feature {feature} is excluded under the active schema")]
    Excluded { feature: String },
}

/// Three-valued truth plus a neutral value for excluded features.
///
/// `Unknown` arises from low-confidence keypoints; `Excluded` from features
/// the schema cannot provide and the rules allow dropping. Excluded terms are
/// removed from connectives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    True,
    False,
    Unknown,
    Excluded,
}

impl Verdict {
    fn from_bool(b: bool) -> Verdict {
        if b {
            Verdict::True
        } else {
            Verdict::False
        }
    }
}

fn lookup(features: &KinematicFeatures, p: &Primitive) -> Result<Feature, EvalError> {
    features.get(p).ok_or_else(|| EvalError::MissingKeypoint {
        joint: features.missing_joint_of(p).to_string(),
    })
}

fn compare(
    c: &Comparison,
    features: &KinematicFeatures,
    tolerance: &dyn Fn(UnitClass) -> f64,
) -> Result<Verdict, EvalError> {
    let class = c.lhs.unit_class();
    let lhs = lookup(features, &c.lhs)?;
    let rhs = match &c.rhs {
        Operand::Primitive(p) => {
            if p.unit_class() != class {
                return Err(EvalError::UnitMismatch { expr: c.to_string() });
            }
            lookup(features, p)?
        }
        Operand::Literal(l) => {
            if l.unit_class().is_some_and(|u| u != class) {
                return Err(EvalError::UnitMismatch { expr: c.to_string() });
            }
            Feature::Value(l.value)
        }
    };
    let (a, b) = match (lhs, rhs) {
        (Feature::Excluded, _) | (_, Feature::Excluded) => return Ok(Verdict::Excluded),
        (Feature::Unavailable, _) | (_, Feature::Unavailable) => return Ok(Verdict::Unknown),
        (Feature::Value(a), Feature::Value(b)) => (a, b),
    };
    Ok(Verdict::from_bool(match c.cmp {
        Comparator::ApproxEq => (a - b).abs() <= tolerance(class),
        Comparator::Lt => a < b,
        Comparator::Gt => a > b,
        Comparator::Le => a <= b,
        Comparator::Ge => a >= b,
    }))
}

fn assess_with(
    expr: &ConditionExpr,
    features: &KinematicFeatures,
    tolerance: &dyn Fn(UnitClass) -> f64,
) -> Result<Verdict, EvalError> {
    match expr {
        ConditionExpr::Compare(c) => compare(c, features, tolerance),
        ConditionExpr::And(xs) => {
            let (mut any_unknown, mut all_excluded) = (false, true);
            for x in xs {
                match assess_with(x, features, tolerance)? {
                    Verdict::False => return Ok(Verdict::False),
                    Verdict::Unknown => {
                        any_unknown = true;
                        all_excluded = false;
                    }
                    Verdict::True => all_excluded = false,
                    Verdict::Excluded => {}
                }
            }
            Ok(if all_excluded {
                Verdict::Excluded
            } else if any_unknown {
                Verdict::Unknown
            } else {
                Verdict::True
            })
        }
        ConditionExpr::Or(xs) => {
            let (mut any_unknown, mut all_excluded) = (false, true);
            for x in xs {
                match assess_with(x, features, tolerance)? {
                    Verdict::True => return Ok(Verdict::True),
                    Verdict::Unknown => {
                        any_unknown = true;
                        all_excluded = false;
                    }
                    Verdict::False => all_excluded = false,
                    Verdict::Excluded => {}
                }
            }
            Ok(if all_excluded {
                Verdict::Excluded
            } else if any_unknown {
                Verdict::Unknown
            } else {
                Verdict::False
            })
        }
    }
}

/// Three-valued evaluation with class-default tolerances.
pub fn assess(
    expr: &ConditionExpr,
    features: &KinematicFeatures,
    thresholds: &ThresholdConfig,
) -> Result<Verdict, EvalError> {
    assess_with(expr, features, &|class| thresholds.tolerance_for(None, None, class))
}

/// Three-valued evaluation honouring per-constraint tolerance overrides.
pub fn assess_constraint(
    constraint: &NamedConstraint,
    features: &KinematicFeatures,
    thresholds: &ThresholdConfig,
) -> Result<Verdict, EvalError> {
    let key = constraint.semantic_key.as_str();
    assess_with(&constraint.condition, features, &|class| {
        thresholds.tolerance_for(Some(key), constraint.tolerance, class)
    })
}

/// Evaluate a condition to a definite boolean.
///
/// Fails when the outcome depends on an unavailable or excluded feature.
pub fn evaluate_condition(
    expr: &ConditionExpr,
    features: &KinematicFeatures,
    thresholds: &ThresholdConfig,
) -> Result<bool, EvalError> {
    match assess(expr, features, thresholds)? {
        Verdict::True => Ok(true),
        Verdict::False => Ok(false),
        v => {
            let wanted = if v == Verdict::Unknown {
                Feature::Unavailable
            } else {
                Feature::Excluded
            };
            let feature = expr
                .primitives()
                .into_iter()
                .find(|p| features.get(p) == Some(wanted))
                .map(|p| p.to_string())
                .unwrap_or_default();
            Err(if v == Verdict::Unknown {
                EvalError::Unavailable { feature }
            } else {
                EvalError::Excluded { feature }
            })
        }
    }
}
