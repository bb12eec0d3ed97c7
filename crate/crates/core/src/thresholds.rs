use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rules::UnitClass;

#[derive(Debug, Error, PartialEq)]
pub enum ThresholdError {
    #[error("tolerance '{name}' must be finite and >= 0, got {value}")]
    NegativeTolerance { name: String, value: f64 },
    #[error("debounce must be >= 1")]
    ZeroDebounce,
    #[error("conf_floor must lie in [0, 1], got {0}")]
    ConfFloor(f64),
}

/// Numeric tolerances for one (pose model, movement, camera view) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdConfig {
    /// Degrees allowed for `~=` on angles.
    pub angle_tolerance: f64,
    /// Bbox-height-normalized units allowed for `~=` on positions.
    pub position_tolerance: f64,
    /// Per-constraint tolerance overrides keyed by semantic key.
    pub overrides: BTreeMap<String, f64>,
    /// Consecutive frames a start/end predicate must hold.
    pub debounce: usize,
    /// Reps spanning fewer frames than this are discarded.
    pub min_rep_frames: usize,
    /// Keypoints below this confidence are treated as unavailable.
    pub conf_floor: f64,
    /// Whether frames of the end window feed the requirement ledger.
    pub ledger_includes_end_window: bool,
    /// Arm end detection only after the athlete has left the start pose.
    pub require_departure: bool,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            angle_tolerance: 5.0,
            position_tolerance: 0.05,
            overrides: BTreeMap::new(),
            debounce: 2,
            min_rep_frames: 5,
            conf_floor: 0.3,
            ledger_includes_end_window: true,
            require_departure: true,
        }
    }
}

impl ThresholdConfig {
    pub fn validate(&self) -> Result<(), ThresholdError> {
        let check = |name: &str, value: f64| {
            if value.is_finite() && value >= 0.0 {
                Ok(())
            } else {
                Err(ThresholdError::NegativeTolerance {
                    name: name.to_string(),
                    value,
                })
            }
        };
        check("angle_tolerance", self.angle_tolerance)?;
        check("position_tolerance", self.position_tolerance)?;
        for (k, v) in &self.overrides {
            check(k, *v)?;
        }
        if self.debounce == 0 {
            return Err(ThresholdError::ZeroDebounce);
        }
        if !(0.0..=1.0).contains(&self.conf_floor) {
            return Err(ThresholdError::ConfFloor(self.conf_floor));
        }
        Ok(())
    }

    /// Tolerance for an `~=` node: config override, then the constraint's own
    /// value, then the class default.
    pub fn tolerance_for(&self, key: Option<&str>, own: Option<f64>, class: UnitClass) -> f64 {
        if let Some(v) = key.and_then(|k| self.overrides.get(k)) {
            return *v;
        }
        if let Some(v) = own {
            return v;
        }
        match class {
            UnitClass::Degrees => self.angle_tolerance,
            UnitClass::Position => self.position_tolerance,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_precedence() {
        let mut t = ThresholdConfig::default();
        assert_eq!(t.tolerance_for(None, None, UnitClass::Degrees), 5.0);
        assert_eq!(t.tolerance_for(Some("k"), Some(2.0), UnitClass::Degrees), 2.0);
        t.overrides.insert("k".into(), 9.0);
        assert_eq!(t.tolerance_for(Some("k"), Some(2.0), UnitClass::Degrees), 9.0);
        assert_eq!(t.tolerance_for(Some("j"), None, UnitClass::Position), 0.05);
    }

    #[test]
    fn validation() {
        assert!(ThresholdConfig::default().validate().is_ok());
        let t = ThresholdConfig {
            debounce: 0,
            ..Default::default()
        };
        assert_eq!(t.validate(), Err(ThresholdError::ZeroDebounce));
        let t = ThresholdConfig {
            angle_tolerance: -1.0,
            ..Default::default()
        };
        assert!(t.validate().is_err());
    }

    #[test]
    fn partial_json_uses_defaults() {
        let t: ThresholdConfig = serde_json::from_str(r#"{"angle_tolerance": 8}"#).unwrap();
        assert_eq!(t.angle_tolerance, 8.0);
        assert_eq!(t.debounce, 2);
    }
}
