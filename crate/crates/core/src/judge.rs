//! End-to-end judging of one keypoint stream: detection and pose inference
//! (optionally cached), tracking, feature extraction and the rep state
//! machine, with latency and cache accounting.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::{dc_bbox, CacheError, CachePolicy, CacheStats, Decision, FrameSet, RoiCache};
use crate::rules::{validate_rule_set, Coverage, MovementRuleSet};
use crate::schema::{
    compute_features, BBox, FeatureOptions, KeypointSchema, KinematicFeatures, PersonInstance, PoseFrame,
    StreamError,
};
use crate::thresholds::{ThresholdConfig, ThresholdError};
use crate::tracking::{iou, TrackError, TrackMode, TrackState, TrackerConfig};
use crate::validator::{RepLabel, RepRecord, RepValidator, ValidatorError};

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Thresholds(#[from] ThresholdError),
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Track(#[from] TrackError),
    #[error(transparent)]
    Validator(#[from] ValidatorError),
}

/// A pose pipeline seen as two stages.
pub trait PoseSource {
    /// Whether a person detector precedes pose estimation.
    fn has_detector(&self) -> bool;
    /// Person boxes over the full frame.
    fn detect(&mut self, frame_index: u64) -> Vec<BBox>;
    /// Pose estimation inside `rois`, or over the full frame for bottom-up
    /// models (`None`).
    fn infer(&mut self, frame_index: u64, rois: Option<&[BBox]>) -> Vec<PersonInstance>;
}

/// Simulated per-call costs of a [`ReplaySource`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulatedCost {
    pub detector_ms: f64,
    pub pose_ms: f64,
}

fn busy(ms: f64) {
    if ms > 0.0 {
        std::thread::sleep(Duration::from_secs_f64(ms / 1000.0));
    }
}

/// Replays a recorded keypoint stream as if it were a live pose model.
///
/// With ROIs, each ROI yields the recorded instance it overlaps most.
#[derive(Debug, Clone)]
pub struct ReplaySource {
    frames: HashMap<u64, Vec<PersonInstance>>,
    top_down: bool,
    cost: SimulatedCost,
}

impl ReplaySource {
    pub fn new(frames: &[PoseFrame], cost: SimulatedCost) -> Self {
        let top_down = !frames.is_empty()
            && frames
                .iter()
                .flat_map(|f| &f.instances)
                .all(|i| i.bbox.is_some());
        ReplaySource {
            frames: frames
                .iter()
                .map(|f| (f.frame_index, f.instances.clone()))
                .collect(),
            top_down,
            cost,
        }
    }
}

impl PoseSource for ReplaySource {
    fn has_detector(&self) -> bool {
        self.top_down
    }

    fn detect(&mut self, frame_index: u64) -> Vec<BBox> {
        busy(self.cost.detector_ms);
        self.frames
            .get(&frame_index)
            .map(|v| v.iter().filter_map(|i| i.bbox).collect())
            .unwrap_or_default()
    }

    fn infer(&mut self, frame_index: u64, rois: Option<&[BBox]>) -> Vec<PersonInstance> {
        busy(self.cost.pose_ms);
        let all = self.frames.get(&frame_index).cloned().unwrap_or_default();
        let Some(rois) = rois else { return all };
        let mut taken = vec![false; all.len()];
        let mut out = Vec::new();
        for roi in rois {
            let best = all
                .iter()
                .enumerate()
                .filter(|(i, _)| !taken[*i])
                .filter_map(|(i, inst)| {
                    let b = inst.reference_box(0.0)?;
                    let v = iou(roi, &b);
                    (v > 0.0).then_some((v, i))
                })
                .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
            if let Some((_, i)) = best {
                taken[i] = true;
                out.push(all[i].clone());
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackerChoice {
    /// IoU when the stream carries detector boxes, OKS otherwise.
    #[default]
    Auto,
    Iou,
    Oks,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    #[default]
    Prerecorded,
    /// Frames are released at `fps` as from a live camera.
    Streamed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JudgeConfig {
    pub thresholds: ThresholdConfig,
    pub tracker: TrackerConfig,
    pub tracker_mode: TrackerChoice,
    pub cache: CachePolicy,
    pub cost: SimulatedCost,
    pub mode: RunMode,
    pub fps: f64,
    /// Frame size used to clamp DC boxes when no frames are supplied.
    pub frame_size: Option<(f64, f64)>,
    pub barbell_offset: f64,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        JudgeConfig {
            thresholds: ThresholdConfig::default(),
            tracker: TrackerConfig::default(),
            tracker_mode: TrackerChoice::Auto,
            cache: CachePolicy::default(),
            cost: SimulatedCost::default(),
            mode: RunMode::Prerecorded,
            fps: 30.0,
            frame_size: None,
            barbell_offset: 20.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub count: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
}

impl LatencySummary {
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let pct = |p: f64| {
            let rank = (p * (s.len() - 1) as f64).round() as usize;
            s[rank.min(s.len() - 1)]
        };
        LatencySummary {
            count: s.len(),
            mean_ms: s.iter().sum::<f64>() / s.len() as f64,
            median_ms: if s.len() % 2 == 1 {
                s[s.len() / 2]
            } else {
                (s[s.len() / 2 - 1] + s[s.len() / 2]) / 2.0
            },
            p95_ms: pct(0.95),
            max_ms: s[s.len() - 1],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub frames: u64,
    pub tracker_mode: Option<TrackMode>,
    pub cache: CacheStats,
    /// DC was requested but the source has no detector.
    pub dc_ignored: bool,
    pub no_target_frames: u64,
    pub unavailable_feature_frames: u64,
    pub discarded_short_reps: u64,
    pub incomplete_reps: u64,
    /// Constraints dropped under this schema, as `group/key`.
    pub excluded_constraints: Vec<String>,
    /// Compute time, excluding pacing waits.
    pub processing_seconds: f64,
    pub video_seconds: f64,
    pub rtf: Option<f64>,
    pub frame_latency_ms: Vec<f64>,
    pub frame_latency: LatencySummary,
    pub rep_decision_latency_ms: Vec<f64>,
    pub rep_decision_latency: LatencySummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeOutput {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video: Option<String>,
    pub movement: String,
    pub reps: Vec<RepRecord>,
    pub diagnostics: Diagnostics,
}

impl JudgeOutput {
    /// `(valid, invalid)` rep counts.
    pub fn counts(&self) -> (usize, usize) {
        let v = self.reps.iter().filter(|r| r.label == RepLabel::Valid).count();
        (v, self.reps.len() - v)
    }

    /// True when the stream had frames but the target was never found.
    pub fn is_anomalous(&self) -> bool {
        self.diagnostics.frames > 0 && self.diagnostics.no_target_frames == self.diagnostics.frames
    }

    /// Records alone, as compact JSON; timing-free and deterministic.
    pub fn records_json(&self) -> String {
        serde_json::to_string(&self.reps).expect("records serialize")
    }
}

/// Check that a rule set can run on `schema` and that `frames` match it.
pub fn preflight(
    frames: &[PoseFrame],
    rules: &MovementRuleSet,
    schema: &KeypointSchema,
) -> Result<Vec<String>, JudgeError> {
    schema
        .check_stream(frames)
        .map_err(|e| JudgeError::Config(e.to_string()))?;
    let report = validate_rule_set(rules, schema);
    let uncovered: Vec<&str> = report
        .gaps
        .iter()
        .filter(|g| g.coverage == Coverage::Uncovered)
        .map(|g| g.joint.as_str())
        .collect();
    if !uncovered.is_empty() {
        return Err(JudgeError::Config(format!(
            "schema '{}' lacks joints required by '{}': {}",
            schema.name(),
            rules.movement_name,
            uncovered.join(", ")
        )));
    }
    if let Some((key, expr)) = report.unit_mismatches.first() {
        return Err(JudgeError::Config(format!("unit mismatch in '{key}': {expr}")));
    }
    Ok(report
        .excluded_constraints()
        .into_iter()
        .map(|(g, k)| format!("{g}/{k}"))
        .collect())
}

/// Judge `frames` replayed through a [`ReplaySource`] with the configured
/// simulated costs.
pub fn judge_stream(
    frames: &[PoseFrame],
    rules: &MovementRuleSet,
    schema: &KeypointSchema,
    gray: Option<&FrameSet>,
    config: &JudgeConfig,
) -> Result<JudgeOutput, JudgeError> {
    let mut source = ReplaySource::new(frames, config.cost);
    judge_with_source(frames, &mut source, rules, schema, gray, config)
}

/// Judge the frame indices of `frames`, obtaining poses from `source`.
pub fn judge_with_source(
    frames: &[PoseFrame],
    source: &mut dyn PoseSource,
    rules: &MovementRuleSet,
    schema: &KeypointSchema,
    gray: Option<&FrameSet>,
    config: &JudgeConfig,
) -> Result<JudgeOutput, JudgeError> {
    config.thresholds.validate()?;
    config.cache.validate()?;
    if !(config.fps.is_finite() && config.fps > 0.0) {
        return Err(JudgeError::Config(format!("fps must be > 0, got {}", config.fps)));
    }
    if config.cache.rtc_enabled && gray.is_none() {
        return Err(JudgeError::Config("RTC needs a frame stream".into()));
    }
    let excluded = preflight(frames, rules, schema)?;

    let th = &config.thresholds;
    let feat_opts = FeatureOptions {
        conf_floor: th.conf_floor,
        barbell_offset: config.barbell_offset,
    };
    let mode = match config.tracker_mode {
        TrackerChoice::Iou => TrackMode::Iou,
        TrackerChoice::Oks => TrackMode::Oks,
        TrackerChoice::Auto if source.has_detector() => TrackMode::Iou,
        TrackerChoice::Auto => TrackMode::Oks,
    };
    let tracker_cfg = TrackerConfig {
        conf_floor: th.conf_floor,
        ..config.tracker
    };
    let mut tracker = TrackState::new(tracker_cfg, schema.kappas());
    let mut validator = RepValidator::new(rules.clone(), th.clone());
    let mut rtc = RoiCache::new(config.cache);
    let bounds = gray
        .and_then(|g| g.dimensions())
        .map(|(w, h)| (w as f64, h as f64))
        .or(config.frame_size)
        .unwrap_or((f64::INFINITY, f64::INFINITY));
    let use_dc = config.cache.dc_enabled && source.has_detector();
    let mut diag = Diagnostics {
        tracker_mode: Some(mode),
        dc_ignored: config.cache.dc_enabled && !source.has_detector(),
        excluded_constraints: excluded,
        ..Default::default()
    };
    let mut dc_box: Option<BBox> = None;
    let mut last_target: Option<PersonInstance> = None;
    let mut reps = Vec::new();
    let mut busy_time = Duration::ZERO;
    let frame_period = Duration::from_secs_f64(1.0 / config.fps);
    let clock = Instant::now();

    for (i, pf) in frames.iter().enumerate() {
        let t = pf.frame_index;
        let arrival = match config.mode {
            RunMode::Streamed => {
                let due = frame_period * i as u32;
                let now = clock.elapsed();
                if due > now {
                    std::thread::sleep(due - now);
                }
                clock + due
            }
            RunMode::Prerecorded => Instant::now(),
        };
        let work_start = Instant::now();
        let image = gray.and_then(|g| g.get(t));

        let (decision, d) = match image {
            Some(img) if config.cache.rtc_enabled && last_target.is_some() => rtc.check(img),
            _ => (Decision::Infer, None),
        };
        diag.cache.rpd_trace.push(d);
        diag.cache.frames_total += 1;

        let target = if decision == Decision::Skip {
            diag.cache.rtc_skips += 1;
            last_target.clone()
        } else {
            let rois: Option<Vec<BBox>> = if use_dc {
                if dc_box.is_none() {
                    diag.cache.detector_invocations += 1;
                    let dets = source.detect(t);
                    dc_box = dets
                        .iter()
                        .max_by(|a, b| a.area().total_cmp(&b.area()))
                        .map(|b| dc_bbox(b, config.cache.dc_offset, bounds));
                }
                Some(dc_box.into_iter().collect())
            } else if source.has_detector() {
                diag.cache.detector_invocations += 1;
                Some(source.detect(t))
            } else {
                None
            };
            diag.cache.pose_inferences += 1;
            let mut posed = PoseFrame {
                frame_index: t,
                timestamp: pf.timestamp,
                schema: pf.schema.clone(),
                instances: source.infer(t, rois.as_deref()),
            };
            let idx = tracker.target_in(&mut posed, mode)?;
            let target = idx.map(|k| posed.instances.swap_remove(k));
            if let Some(img) = image {
                rtc.update(img, target.as_ref().and_then(|p| p.extent_box(th.conf_floor)));
            }
            last_target = target.clone();
            target
        };

        let features = match &target {
            Some(inst) => compute_features(inst, rules, schema, &feat_opts),
            None => {
                diag.no_target_frames += 1;
                KinematicFeatures::without_target(rules, schema)
            }
        };
        let emitted = validator.step(t, &features)?;
        busy_time += work_start.elapsed();
        let latency = arrival.elapsed().as_secs_f64() * 1000.0;
        diag.frame_latency_ms.push(latency);
        if let Some(r) = emitted {
            diag.rep_decision_latency_ms.push(latency);
            reps.push(r);
        }
    }
    if let Some(last) = frames.last() {
        let start = Instant::now();
        reps.extend(validator.finalize(last.frame_index));
        busy_time += start.elapsed();
    }

    let vd = validator.diagnostics();
    diag.frames = frames.len() as u64;
    diag.unavailable_feature_frames = vd.unavailable_feature_frames;
    diag.discarded_short_reps = vd.discarded_short_reps;
    diag.incomplete_reps = vd.incomplete_reps;
    diag.processing_seconds = busy_time.as_secs_f64();
    diag.video_seconds = frames.len() as f64 / config.fps;
    diag.rtf = crate::eval::rtf(diag.processing_seconds, diag.video_seconds).ok();
    diag.frame_latency = LatencySummary::from_samples(&diag.frame_latency_ms);
    diag.rep_decision_latency = LatencySummary::from_samples(&diag.rep_decision_latency_ms);

    Ok(JudgeOutput {
        video: None,
        movement: rules.movement_name.clone(),
        reps,
        diagnostics: diag,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauTrial {
    pub tau: f64,
    pub counts: (usize, usize),
    pub rtc_skips: u64,
    pub preserves_counts: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauCalibration {
    pub tau: f64,
    pub oracle_counts: (usize, usize),
    pub trials: Vec<TauTrial>,
}

/// Largest τ in `grid` whose cached run keeps the no-cache per-class rep
/// counts; 0 when none does.
pub fn calibrate_tau(
    frames: &[PoseFrame],
    gray: &FrameSet,
    rules: &MovementRuleSet,
    schema: &KeypointSchema,
    base: &JudgeConfig,
    grid: &[f64],
) -> Result<TauCalibration, JudgeError> {
    if grid.is_empty() {
        return Err(JudgeError::Config("empty tau grid".into()));
    }
    let quiet = JudgeConfig {
        cost: SimulatedCost::default(),
        mode: RunMode::Prerecorded,
        ..base.clone()
    };
    let oracle_cfg = JudgeConfig {
        cache: CachePolicy {
            rtc_enabled: false,
            dc_enabled: false,
            ..quiet.cache
        },
        ..quiet.clone()
    };
    let oracle = judge_stream(frames, rules, schema, Some(gray), &oracle_cfg)?.counts();
    let mut trials = Vec::with_capacity(grid.len());
    for &tau in grid {
        let cfg = JudgeConfig {
            cache: CachePolicy {
                rtc_enabled: true,
                rtc_tau: tau,
                ..quiet.cache
            },
            ..quiet.clone()
        };
        let out = judge_stream(frames, rules, schema, Some(gray), &cfg)?;
        trials.push(TauTrial {
            tau,
            counts: out.counts(),
            rtc_skips: out.diagnostics.cache.rtc_skips,
            preserves_counts: out.counts() == oracle,
        });
    }
    let tau = trials
        .iter()
        .filter(|t| t.preserves_counts)
        .map(|t| t.tau)
        .fold(None, |m: Option<f64>, t| Some(m.map_or(t, |m| m.max(t))))
        .unwrap_or(0.0);
    Ok(TauCalibration {
        tau,
        oracle_counts: oracle,
        trials,
    })
}
