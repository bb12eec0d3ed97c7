//! Rep state machine over per-frame kinematic features.
//!
//! Phases: idle, armed (start pose held for `debounce` frames, the start
//! anchor slides while the pose is held) and moving (the start pose was left;
//! requirement and no-rep ledgers accumulate until the end pose is held for
//! `debounce` frames). With `require_departure` off the machine goes straight
//! from idle to moving.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rules::{assess_constraint, EvalError, MovementRuleSet, NamedConstraint, Verdict};
use crate::schema::KinematicFeatures;
use crate::thresholds::ThresholdConfig;

/// No-rep key attached to reps that never reached their end condition.
pub const INCOMPLETE_REP: &str = "incomplete_rep";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidatorError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("frame index {got} does not follow {prev}")]
    NonMonotonic { prev: u64, got: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RepLabel {
    Valid,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepRecord {
    #[serde(rename = "start")]
    pub t_start: u64,
    #[serde(rename = "end")]
    pub t_end: u64,
    pub label: RepLabel,
    #[serde(rename = "failed")]
    pub failed_requirements: Vec<String>,
    #[serde(rename = "no_reps")]
    pub triggered_no_reps: Vec<String>,
}

impl RepRecord {
    pub fn len(&self) -> u64 {
        self.t_end - self.t_start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Idle,
    Active,
}

/// Read-only snapshot of the machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidatorState {
    pub phase: Phase,
    pub t_start: Option<u64>,
    /// Whether the start pose has been left in the current rep.
    pub departed: bool,
    pub requirements: BTreeMap<String, bool>,
    pub no_reps: BTreeMap<String, bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidatorDiagnostics {
    pub frames: u64,
    /// Frames where at least one constraint depended on an unavailable feature.
    pub unavailable_feature_frames: u64,
    pub discarded_short_reps: u64,
    pub incomplete_reps: u64,
}

#[derive(Debug, Clone)]
struct Entry {
    frame: u64,
    req: Vec<bool>,
    no_rep: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Idle,
    Armed { t_start: u64 },
    Moving { t_start: u64 },
}

#[derive(Debug, Clone)]
pub struct RepValidator {
    rules: MovementRuleSet,
    thresholds: ThresholdConfig,
    mode: Mode,
    start_run: usize,
    end_run: usize,
    recent: VecDeque<u64>,
    ring: VecDeque<Entry>,
    end_pending: Vec<Entry>,
    req_ledger: Vec<bool>,
    no_rep_ledger: Vec<bool>,
    last_end: Option<u64>,
    last_frame: Option<u64>,
    diagnostics: ValidatorDiagnostics,
}

fn satisfied(v: Verdict) -> bool {
    matches!(v, Verdict::True | Verdict::Excluded)
}

fn or_into(ledger: &mut [bool], xs: &[bool]) {
    for (l, x) in ledger.iter_mut().zip(xs) {
        *l |= *x;
    }
}

impl RepValidator {
    pub fn new(rules: MovementRuleSet, thresholds: ThresholdConfig) -> Self {
        let nr = rules.rep_requirements.len();
        let nn = rules.no_rep_conditions.len();
        RepValidator {
            rules,
            thresholds,
            mode: Mode::Idle,
            start_run: 0,
            end_run: 0,
            recent: VecDeque::new(),
            ring: VecDeque::new(),
            end_pending: Vec::new(),
            req_ledger: vec![false; nr],
            no_rep_ledger: vec![false; nn],
            last_end: None,
            last_frame: None,
            diagnostics: ValidatorDiagnostics::default(),
        }
    }

    pub fn rules(&self) -> &MovementRuleSet {
        &self.rules
    }

    pub fn thresholds(&self) -> &ThresholdConfig {
        &self.thresholds
    }

    pub fn diagnostics(&self) -> &ValidatorDiagnostics {
        &self.diagnostics
    }

    pub fn state(&self) -> ValidatorState {
        let (phase, t_start, departed) = match self.mode {
            Mode::Idle => (Phase::Idle, None, false),
            Mode::Armed { t_start } => (Phase::Active, Some(t_start), false),
            Mode::Moving { t_start } => (Phase::Active, Some(t_start), true),
        };
        let keyed = |cs: &[NamedConstraint], l: &[bool]| {
            cs.iter()
                .zip(l)
                .map(|(c, v)| (c.semantic_key.clone(), *v))
                .collect()
        };
        ValidatorState {
            phase,
            t_start,
            departed,
            requirements: keyed(&self.rules.rep_requirements, &self.req_ledger),
            no_reps: keyed(&self.rules.no_rep_conditions, &self.no_rep_ledger),
        }
    }

    fn verdicts(
        &self,
        cs: &[NamedConstraint],
        f: &KinematicFeatures,
        unknown: &mut bool,
    ) -> Result<Vec<Verdict>, EvalError> {
        cs.iter()
            .map(|c| {
                let v = assess_constraint(c, f, &self.thresholds)?;
                *unknown |= v == Verdict::Unknown;
                Ok(v)
            })
            .collect()
    }

    /// Frame index `k` frames back from the newest (0 = current).
    fn back(&self, k: usize) -> Option<u64> {
        self.recent.len().checked_sub(k + 1).map(|i| self.recent[i])
    }

    fn floor_start(&self, t: u64) -> u64 {
        self.last_end.map_or(t, |e| t.max(e + 1))
    }

    fn reset_ledgers(&mut self) {
        self.req_ledger.iter_mut().for_each(|x| *x = false);
        self.no_rep_ledger.iter_mut().for_each(|x| *x = false);
        self.end_pending.clear();
        self.end_run = 0;
    }

    fn absorb(&mut self, e: &Entry) {
        or_into(&mut self.req_ledger, &e.req);
        or_into(&mut self.no_rep_ledger, &e.no_rep);
    }

    fn seed_from_ring(&mut self, t_start: u64) {
        let ring: Vec<Entry> = self.ring.iter().filter(|e| e.frame >= t_start).cloned().collect();
        for e in &ring {
            self.absorb(e);
        }
    }

    fn close(&mut self, t_start: u64, t_end: u64, incomplete: bool) -> Option<RepRecord> {
        let failed: Vec<String> = self
            .rules
            .rep_requirements
            .iter()
            .zip(&self.req_ledger)
            .filter(|(_, ok)| !**ok)
            .map(|(c, _)| c.semantic_key.clone())
            .collect();
        let mut no_reps: Vec<String> = self
            .rules
            .no_rep_conditions
            .iter()
            .zip(&self.no_rep_ledger)
            .filter(|(_, hit)| **hit)
            .map(|(c, _)| c.semantic_key.clone())
            .collect();
        if incomplete {
            no_reps.push(INCOMPLETE_REP.to_string());
        }
        self.mode = Mode::Idle;
        self.last_end = Some(t_end);
        self.reset_ledgers();
        if t_end + 1 - t_start < self.thresholds.min_rep_frames as u64 {
            self.diagnostics.discarded_short_reps += 1;
            return None;
        }
        if incomplete {
            self.diagnostics.incomplete_reps += 1;
        }
        let label = if failed.is_empty() && no_reps.is_empty() {
            RepLabel::Valid
        } else {
            RepLabel::Invalid
        };
        Some(RepRecord {
            t_start,
            t_end,
            label,
            failed_requirements: failed,
            triggered_no_reps: no_reps,
        })
    }

    /// One moving-phase frame. Returns a closed rep, if any.
    fn moving(&mut self, t_start: u64, e: Entry, end_ok: bool, may_reenter: bool) -> Option<RepRecord> {
        let d = self.thresholds.debounce;
        if end_ok {
            self.end_run += 1;
            self.end_pending.push(e);
            if self.end_run >= d {
                let t_end = self.end_pending[self.end_pending.len() - d].frame;
                if self.thresholds.ledger_includes_end_window {
                    for p in std::mem::take(&mut self.end_pending) {
                        self.absorb(&p);
                    }
                }
                return self.close(t_start, t_end, false);
            }
            return None;
        }
        self.end_run = 0;
        for p in std::mem::take(&mut self.end_pending) {
            self.absorb(&p);
        }
        self.absorb(&e);
        if may_reenter && self.start_run >= d {
            // start pose re-entered without the end firing
            let t_end = self.back(d).unwrap_or(t_start).max(t_start);
            return self.close(t_start, t_end, true);
        }
        None
    }

    /// Feed one frame. `frame` must increase strictly across calls.
    pub fn step(
        &mut self,
        frame: u64,
        features: &KinematicFeatures,
    ) -> Result<Option<RepRecord>, ValidatorError> {
        if let Some(prev) = self.last_frame {
            if frame <= prev {
                return Err(ValidatorError::NonMonotonic { prev, got: frame });
            }
        }
        let mut unknown = false;
        let start = self.verdicts(&self.rules.rep_start, features, &mut unknown)?;
        let end = self.verdicts(&self.rules.rep_end, features, &mut unknown)?;
        let req = self.verdicts(&self.rules.rep_requirements, features, &mut unknown)?;
        let nr = self.verdicts(&self.rules.no_rep_conditions, features, &mut unknown)?;

        self.last_frame = Some(frame);
        self.diagnostics.frames += 1;
        if unknown {
            self.diagnostics.unavailable_feature_frames += 1;
        }
        let d = self.thresholds.debounce.max(1);
        self.recent.push_back(frame);
        while self.recent.len() > d + 1 {
            self.recent.pop_front();
        }
        let start_ok = start.iter().all(|v| satisfied(*v));
        let end_ok = end.iter().all(|v| satisfied(*v));
        self.start_run = if start_ok { self.start_run + 1 } else { 0 };
        let entry = Entry {
            frame,
            req: req.iter().map(|v| satisfied(*v)).collect(),
            no_rep: nr.iter().map(|v| *v == Verdict::True).collect(),
        };

        let mut out = None;
        match self.mode {
            Mode::Moving { t_start } => {
                out = self.moving(t_start, entry.clone(), end_ok, true);
            }
            Mode::Armed { t_start } => {
                if start_ok {
                    let anchor = self.floor_start(self.back(d - 1).unwrap_or(frame));
                    self.mode = Mode::Armed {
                        t_start: anchor.max(t_start),
                    };
                } else {
                    self.mode = Mode::Moving { t_start };
                    self.reset_ledgers();
                    self.seed_from_ring(t_start);
                    out = self.moving(t_start, entry.clone(), end_ok, false);
                }
            }
            Mode::Idle => {}
        }
        if self.mode == Mode::Idle && self.start_run >= d {
            let t_start = self.floor_start(self.back(d - 1).unwrap_or(frame));
            self.reset_ledgers();
            if self.thresholds.require_departure {
                self.mode = Mode::Armed { t_start };
            } else {
                self.mode = Mode::Moving { t_start };
                self.seed_from_ring(t_start);
                self.absorb(&entry);
            }
        }

        self.ring.push_back(entry);
        while self.ring.len() > d {
            self.ring.pop_front();
        }
        Ok(out)
    }

    /// Close out the stream. A rep in progress (start pose left, end not
    /// reached) becomes an invalid incomplete rep ending at `last_frame`.
    pub fn finalize(&mut self, last_frame: u64) -> Option<RepRecord> {
        match self.mode {
            Mode::Moving { t_start } => {
                for p in std::mem::take(&mut self.end_pending) {
                    self.absorb(&p);
                }
                self.close(t_start, last_frame.max(t_start), true)
            }
            Mode::Armed { .. } => {
                self.mode = Mode::Idle;
                self.reset_ledgers();
                None
            }
            Mode::Idle => None,
        }
    }

    /// Judge a whole feature sequence `(frame, features)`.
    pub fn run<'a>(
        mut self,
        frames: impl IntoIterator<Item = (u64, &'a KinematicFeatures)>,
    ) -> Result<(Vec<RepRecord>, ValidatorDiagnostics), ValidatorError> {
        let mut reps = Vec::new();
        for (t, f) in frames {
            reps.extend(self.step(t, f)?);
        }
        if let Some(last) = self.last_frame {
            reps.extend(self.finalize(last));
        }
        Ok((reps, self.diagnostics))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::{parse_rule_set, Primitive};
    use crate::schema::Feature;
    use proptest::prelude::*;

    fn squat_rules() -> MovementRuleSet {
        parse_rule_set(
            r#"{"movement":"Air Squat","y_axis":"down",
            "rep_start":{"standing":"Angle(hip,knee,ankle) ~= 180 deg"},
            "rep_end":{"standing":"Angle(hip,knee,ankle) ~= 180 deg"},
            "rep_requirements":{"squat_depth":"Y(hip) > Y(knee)"}}"#,
        )
        .unwrap()
    }

    fn knee() -> Primitive {
        Primitive::Angle("hip".into(), "knee".into(), "ankle".into())
    }

    fn frame_feats(angle: f64, hip_below: bool) -> KinematicFeatures {
        let mut f = KinematicFeatures::default();
        f.insert(knee(), Feature::Value(angle));
        f.insert(Primitive::Y("hip".into()), Feature::Value(if hip_below { 0.7 } else { 0.5 }));
        f.insert(Primitive::Y("knee".into()), Feature::Value(0.6));
        f
    }

    /// 30 frames: standing 0..=4, descent 5..=11, bottom 12..=17, ascent
    /// 18..=24, standing 25..=29.
    fn squat_trace(deep: bool) -> Vec<KinematicFeatures> {
        (0..30)
            .map(|t| match t {
                0..=4 | 25..=29 => frame_feats(178.0, false),
                5..=11 => frame_feats(160.0 - 10.0 * (t - 5) as f64, false),
                12..=17 => frame_feats(90.0, deep),
                _ => frame_feats(100.0 + 10.0 * (t - 18) as f64, false),
            })
            .collect()
    }

    fn run(rules: MovementRuleSet, th: ThresholdConfig, feats: &[KinematicFeatures]) -> Vec<RepRecord> {
        RepValidator::new(rules, th)
            .run(feats.iter().enumerate().map(|(t, f)| (t as u64, f)))
            .unwrap()
            .0
    }

    fn debounce(d: usize) -> ThresholdConfig {
        ThresholdConfig {
            debounce: d,
            ..Default::default()
        }
    }

    #[test]
    fn valid_squat_with_debounce_one() {
        let reps = run(squat_rules(), debounce(1), &squat_trace(true));
        assert_eq!(
            reps,
            [RepRecord {
                t_start: 4,
                t_end: 25,
                label: RepLabel::Valid,
                failed_requirements: vec![],
                triggered_no_reps: vec![],
            }]
        );
    }

    #[test]
    fn shallow_squat_fails_depth() {
        let reps = run(squat_rules(), debounce(1), &squat_trace(false));
        assert_eq!(reps.len(), 1);
        assert_eq!(reps[0].label, RepLabel::Invalid);
        assert_eq!(reps[0].failed_requirements, ["squat_depth"]);
    }

    #[test]
    fn debounce_anchors_to_window_start() {
        let reps = run(squat_rules(), debounce(2), &squat_trace(true));
        assert_eq!((reps[0].t_start, reps[0].t_end), (3, 25));
    }

    #[test]
    fn constant_standing_emits_nothing() {
        let feats = vec![frame_feats(179.0, false); 100];
        assert!(run(squat_rules(), debounce(2), &feats).is_empty());
        let literal = ThresholdConfig {
            require_departure: false,
            ..debounce(2)
        };
        let mut v = RepValidator::new(squat_rules(), literal);
        let mut reps = Vec::new();
        for (t, f) in feats.iter().enumerate() {
            reps.extend(v.step(t as u64, f).unwrap());
        }
        assert!(reps.is_empty());
        assert!(v.diagnostics().discarded_short_reps > 0);
    }

    #[test]
    fn finalize_cases() {
        let mut v = RepValidator::new(squat_rules(), debounce(1));
        assert_eq!(v.finalize(0), None);
        let trace = squat_trace(true);
        for (t, f) in trace.iter().take(15).enumerate() {
            assert_eq!(v.step(t as u64, f).unwrap(), None);
        }
        let r = v.finalize(14).unwrap();
        assert_eq!((r.t_start, r.t_end, r.label), (4, 14, RepLabel::Invalid));
        assert_eq!(r.triggered_no_reps, [INCOMPLETE_REP]);
        assert_eq!(v.state().phase, Phase::Idle);
    }

    #[test]
    fn unavailable_requirement_never_satisfies() {
        let mut trace = squat_trace(true);
        for f in &mut trace[12..=17] {
            f.insert(Primitive::Y("hip".into()), Feature::Unavailable);
        }
        let mut v = RepValidator::new(squat_rules(), debounce(1));
        let mut reps = Vec::new();
        for (t, f) in trace.iter().enumerate() {
            reps.extend(v.step(t as u64, f).unwrap());
        }
        assert_eq!(reps[0].failed_requirements, ["squat_depth"]);
        assert_eq!(v.diagnostics().unavailable_feature_frames, 6);
    }

    #[test]
    fn end_window_ledger_flag() {
        let rules = parse_rule_set(
            r#"{"movement":"m","y_axis":"down",
            "rep_start":{"s":"X(a) < 0.1"},
            "rep_end":{"e":"X(a) > 0.9"},
            "rep_requirements":{"r":"X(b) > 0.5"}}"#,
        )
        .unwrap();
        let f = |a: f64, b: f64| {
            let mut k = KinematicFeatures::default();
            k.insert(Primitive::X("a".into()), Feature::Value(a));
            k.insert(Primitive::X("b".into()), Feature::Value(b));
            k
        };
        // requirement only holds inside the end window
        let trace = [f(0.0, 0.0), f(0.0, 0.0), f(0.5, 0.0), f(0.5, 0.0), f(0.5, 0.0), f(1.0, 1.0), f(1.0, 1.0)];
        let th = ThresholdConfig {
            debounce: 2,
            min_rep_frames: 1,
            ..Default::default()
        };
        let on = run(rules.clone(), th.clone(), &trace);
        assert_eq!(on[0].label, RepLabel::Valid);
        assert_eq!((on[0].t_start, on[0].t_end), (0, 5));
        let off = run(
            rules,
            ThresholdConfig {
                ledger_includes_end_window: false,
                ..th
            },
            &trace,
        );
        assert_eq!(off[0].failed_requirements, ["r"]);
    }

    #[test]
    fn reentering_start_without_end_is_incomplete() {
        let rules = parse_rule_set(
            r#"{"movement":"m",
            "rep_start":{"s":"X(a) < 0.1"},
            "rep_end":{"e":"X(a) > 0.9"}}"#,
        )
        .unwrap();
        let f = |a: f64| {
            let mut k = KinematicFeatures::default();
            k.insert(Primitive::X("a".into()), Feature::Value(a));
            k
        };
        let xs = [0.0, 0.0, 0.5, 0.5, 0.5, 0.5, 0.0, 0.0, 0.5, 0.5, 1.0, 1.0];
        let feats: Vec<_> = xs.iter().map(|&x| f(x)).collect();
        let th = ThresholdConfig {
            min_rep_frames: 1,
            ..Default::default()
        };
        let reps = run(rules, th, &feats);
        assert_eq!(reps.len(), 2);
        assert_eq!((reps[0].t_start, reps[0].t_end), (0, 5));
        assert_eq!(reps[0].triggered_no_reps, [INCOMPLETE_REP]);
        assert_eq!((reps[1].t_start, reps[1].t_end, reps[1].label), (6, 10, RepLabel::Valid));
    }

    #[test]
    fn touch_and_go_reps() {
        // two reps sharing only a two-frame standing top
        let mut feats = Vec::new();
        for _ in 0..3 {
            feats.push(frame_feats(178.0, false));
        }
        for _ in 0..2 {
            for a in [150.0, 100.0, 90.0, 100.0, 150.0] {
                feats.push(frame_feats(a, a < 95.0));
            }
            feats.push(frame_feats(178.0, false));
            feats.push(frame_feats(178.0, false));
        }
        let reps = run(squat_rules(), debounce(2), &feats);
        assert_eq!(reps.len(), 2);
        assert!(reps.iter().all(|r| r.label == RepLabel::Valid));
        assert!(reps[0].t_end < reps[1].t_start);
    }

    #[test]
    fn rejects_non_increasing_frames() {
        let mut v = RepValidator::new(squat_rules(), debounce(1));
        let f = frame_feats(178.0, false);
        v.step(3, &f).unwrap();
        assert_eq!(v.step(3, &f), Err(ValidatorError::NonMonotonic { prev: 3, got: 3 }));
    }

    #[test]
    fn lowering_floor_moves_toward_valid() {
        // the same trace with the depth feature hidden vs visible
        let hidden = {
            let mut t = squat_trace(true);
            for f in &mut t[12..=17] {
                f.insert(Primitive::Y("hip".into()), Feature::Unavailable);
            }
            t
        };
        let a = run(squat_rules(), debounce(1), &hidden);
        let b = run(squat_rules(), debounce(1), &squat_trace(true));
        assert_eq!(a[0].label, RepLabel::Invalid);
        assert_eq!(b[0].label, RepLabel::Valid);
    }

    fn arb_feats() -> impl Strategy<Value = Vec<KinematicFeatures>> {
        prop::collection::vec((0u8..4, 0u8..3, 0u8..3), 0..120).prop_map(|v| {
            v.into_iter()
                .map(|(a, b, n)| {
                    let mut k = KinematicFeatures::default();
                    let val = |x: u8| match x {
                        0 => Feature::Unavailable,
                        x => Feature::Value(x as f64 / 3.0),
                    };
                    k.insert(Primitive::X("a".into()), val(a));
                    k.insert(Primitive::X("b".into()), val(b));
                    k.insert(Primitive::X("n".into()), val(n));
                    k
                })
                .collect()
        })
    }

    fn prop_rules() -> MovementRuleSet {
        parse_rule_set(
            r#"{"movement":"m",
            "rep_start":{"s":"X(a) < 0.5"},
            "rep_end":{"e":"X(a) < 0.5 or X(a) > 0.9"},
            "rep_requirements":{"r":"X(b) > 0.5"},
            "no_rep_conditions":{"n":"X(n) > 0.5"}}"#,
        )
        .unwrap()
    }

    proptest! {
        #[test]
        fn records_ordered_labelled_and_deterministic(
            feats in arb_feats(),
            d in 1usize..4,
            m in 1usize..6,
            dep in any::<bool>(),
        ) {
            let th = ThresholdConfig { debounce: d, min_rep_frames: m, require_departure: dep, ..Default::default() };
            let reps = run(prop_rules(), th.clone(), &feats);
            prop_assert_eq!(&reps, &run(prop_rules(), th, &feats));
            for r in &reps {
                prop_assert!(r.t_start <= r.t_end);
                prop_assert!(r.len() >= m as u64);
                let valid = r.failed_requirements.is_empty() && r.triggered_no_reps.is_empty();
                prop_assert_eq!(r.label == RepLabel::Valid, valid);
            }
            for w in reps.windows(2) {
                prop_assert!(w[0].t_end < w[1].t_start);
            }
        }

        #[test]
        fn ledgers_are_monotone_within_a_rep(feats in arb_feats(), d in 1usize..4) {
            let mut v = RepValidator::new(prop_rules(), ThresholdConfig { debounce: d, min_rep_frames: 1, ..Default::default() });
            let mut prev: Option<ValidatorState> = None;
            for (t, f) in feats.iter().enumerate() {
                let emitted = v.step(t as u64, f).unwrap();
                let s = v.state();
                if let Some(p) = &prev {
                    let same_rep = emitted.is_none() && p.departed && s.departed && p.t_start == s.t_start;
                    if same_rep {
                        for (k, was) in &p.requirements {
                            prop_assert!(!was || s.requirements[k]);
                        }
                        for (k, was) in &p.no_reps {
                            prop_assert!(!was || s.no_reps[k]);
                        }
                    }
                }
                if s.phase == Phase::Idle {
                    prop_assert!(s.t_start.is_none());
                    prop_assert!(s.requirements.values().all(|x| !x));
                }
                prev = Some(s);
            }
        }
    }
}
