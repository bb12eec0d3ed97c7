//! Movement-rule documents, the condition language and its evaluation.

mod document;
mod eval;
pub mod expr;
mod validate;

pub use document::{
    parse_rule_set, Annotation, Group, MovementRuleSet, NamedConstraint, RuleError, SideSelection, YAxis,
};
pub use eval::{assess, assess_constraint, evaluate_condition, EvalError, Verdict};
pub use expr::{
    parse_condition, Comparator, Comparison, ConditionExpr, GrammarError, Literal, Operand, Primitive,
    Unit, UnitClass,
};
pub use validate::{validate_rule_set, Coverage, Gap, ValidationReport};
