//! Cross-frame identity for person instances and target locking.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{BBox, Keypoint, PersonInstance, PoseFrame};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrackError {
    #[error("IoU tracking needs a bbox on every instance (frame {frame}, instance {instance})")]
    MissingBBox { frame: u64, instance: usize },
    #[error("OKS is undefined without visible joints")]
    NoVisibleJoints,
    #[error("OKS needs a positive scale, got {0}")]
    BadScale(String),
    #[error("no person in frame {0}")]
    NoTarget(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TrackMode {
    /// Detector boxes are matched by IoU.
    #[default]
    Iou,
    /// Keypoint sets are matched by OKS.
    Oks,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    pub iou_threshold: f64,
    pub oks_threshold: f64,
    /// Tracks unseen for more than this many frames are retired.
    pub max_gap_frames: u64,
    /// Joints below this confidence count as invisible for OKS.
    pub conf_floor: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            iou_threshold: 0.3,
            oks_threshold: 0.5,
            max_gap_frames: 15,
            conf_floor: 0.3,
        }
    }
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection(b).map_or(0.0, |i| i.area());
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Object keypoint similarity over the joints marked visible.
pub fn oks(
    a: &[(f64, f64)],
    visible: &[bool],
    b: &[(f64, f64)],
    s: f64,
    kappa: &[f64],
) -> Result<f64, TrackError> {
    if !(s.is_finite() && s > 0.0) {
        return Err(TrackError::BadScale(s.to_string()));
    }
    let (mut num, mut den) = (0.0, 0usize);
    for i in 0..a.len().min(b.len()).min(visible.len()).min(kappa.len()) {
        if !visible[i] {
            continue;
        }
        let d2 = (a[i].0 - b[i].0).powi(2) + (a[i].1 - b[i].1).powi(2);
        num += (-d2 / (2.0 * s * s * kappa[i] * kappa[i])).exp();
        den += 1;
    }
    if den == 0 {
        return Err(TrackError::NoVisibleJoints);
    }
    Ok(num / den as f64)
}

/// OKS between two keypoint sets; a joint is visible when both sides clear
/// `conf_floor`.
pub fn keypoint_oks(
    a: &[Keypoint],
    b: &[Keypoint],
    s: f64,
    kappa: &[f64],
    conf_floor: f64,
) -> Result<f64, TrackError> {
    let pa: Vec<(f64, f64)> = a.iter().map(|k| (k.x, k.y)).collect();
    let pb: Vec<(f64, f64)> = b.iter().map(|k| (k.x, k.y)).collect();
    let vis: Vec<bool> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x.confidence >= conf_floor && y.confidence >= conf_floor)
        .collect();
    oks(&pa, &vis, &pb, s, kappa)
}

#[derive(Debug, Clone, PartialEq)]
struct Track {
    id: u64,
    bbox: Option<BBox>,
    keypoints: Vec<Keypoint>,
    last_seen: u64,
}

/// Tracker state for one stream.
#[derive(Debug, Clone)]
pub struct TrackState {
    pub config: TrackerConfig,
    kappa: Vec<f64>,
    next_track_id: u64,
    tracks: Vec<Track>,
    target_id: Option<u64>,
}

fn instance_area(inst: &PersonInstance, conf_floor: f64) -> f64 {
    inst.reference_box(conf_floor).map_or(0.0, |b| b.area())
}

impl TrackState {
    pub fn new(config: TrackerConfig, kappa: Vec<f64>) -> Self {
        TrackState {
            config,
            kappa,
            next_track_id: 0,
            tracks: Vec::new(),
            target_id: None,
        }
    }

    pub fn target_id(&self) -> Option<u64> {
        self.target_id
    }

    pub fn active_ids(&self) -> Vec<u64> {
        self.tracks.iter().map(|t| t.id).collect()
    }

    fn similarity(&self, inst: &PersonInstance, track: &Track, mode: TrackMode) -> f64 {
        match mode {
            TrackMode::Iou => match (inst.bbox, track.bbox) {
                (Some(a), Some(b)) => iou(&a, &b),
                _ => 0.0,
            },
            TrackMode::Oks => {
                let floor = self.config.conf_floor;
                let scale_box = track.bbox.or_else(|| {
                    BBox::enclosing(
                        track
                            .keypoints
                            .iter()
                            .filter(|k| k.confidence >= floor)
                            .map(Keypoint::point),
                    )
                });
                let s = scale_box.map_or(0.0, |b| b.area().sqrt());
                keypoint_oks(&inst.keypoints, &track.keypoints, s, &self.kappa, floor).unwrap_or(0.0)
            }
        }
    }

    /// Assign track ids to the instances of `frame` (written into
    /// `track_id`) and return them in instance order.
    pub fn track_step(&mut self, frame: &mut PoseFrame, mode: TrackMode) -> Result<Vec<u64>, TrackError> {
        if mode == TrackMode::Iou {
            if let Some(i) = frame.instances.iter().position(|p| p.bbox.is_none()) {
                return Err(TrackError::MissingBBox {
                    frame: frame.frame_index,
                    instance: i,
                });
            }
        }
        let now = frame.frame_index;
        let gap = self.config.max_gap_frames;
        self.tracks.retain(|t| now.saturating_sub(t.last_seen) <= gap);

        let threshold = match mode {
            TrackMode::Iou => self.config.iou_threshold,
            TrackMode::Oks => self.config.oks_threshold,
        };
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (i, inst) in frame.instances.iter().enumerate() {
            for (k, t) in self.tracks.iter().enumerate() {
                let s = self.similarity(inst, t, mode);
                if s > threshold {
                    pairs.push((s, i, k));
                }
            }
        }
        pairs.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(Ordering::Equal)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        let mut inst_track: Vec<Option<usize>> = vec![None; frame.instances.len()];
        let mut track_used = vec![false; self.tracks.len()];
        for (_, i, k) in pairs {
            if inst_track[i].is_none() && !track_used[k] {
                inst_track[i] = Some(k);
                track_used[k] = true;
            }
        }

        let mut ids = Vec::with_capacity(frame.instances.len());
        for (i, inst) in frame.instances.iter_mut().enumerate() {
            let id = match inst_track[i] {
                Some(k) => {
                    let t = &mut self.tracks[k];
                    t.bbox = inst.bbox;
                    t.keypoints = inst.keypoints.clone();
                    t.last_seen = now;
                    t.id
                }
                None => {
                    let id = self.next_track_id;
                    self.next_track_id += 1;
                    self.tracks.push(Track {
                        id,
                        bbox: inst.bbox,
                        keypoints: inst.keypoints.clone(),
                        last_seen: now,
                    });
                    id
                }
            };
            inst.track_id = Some(id);
            ids.push(id);
        }
        Ok(ids)
    }

    /// Lock onto the largest instance on first call (ties: lowest index),
    /// then keep that id while its track lives. Call after `track_step`.
    pub fn select_target(&mut self, frame: &PoseFrame) -> Result<u64, TrackError> {
        if let Some(id) = self.target_id {
            if self.tracks.iter().any(|t| t.id == id) {
                return Ok(id);
            }
            self.target_id = None;
        }
        let floor = self.config.conf_floor;
        let mut best: Option<(f64, u64)> = None;
        for inst in &frame.instances {
            let Some(id) = inst.track_id else { continue };
            let a = instance_area(inst, floor);
            if best.is_none_or(|(ba, _)| a > ba) {
                best = Some((a, id));
            }
        }
        let (_, id) = best.ok_or(TrackError::NoTarget(frame.frame_index))?;
        self.target_id = Some(id);
        Ok(id)
    }

    /// Run both steps and return the index of the target instance in this
    /// frame, if present.
    pub fn target_in(&mut self, frame: &mut PoseFrame, mode: TrackMode) -> Result<Option<usize>, TrackError> {
        self.track_step(frame, mode)?;
        match self.select_target(frame) {
            Ok(id) => Ok(frame.instances.iter().position(|p| p.track_id == Some(id))),
            Err(TrackError::NoTarget(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn person(b: BBox) -> PersonInstance {
        PersonInstance::new(vec![Keypoint::new(b.x, b.y, 1.0)], Some(b))
    }

    fn frame(i: u64, boxes: &[BBox]) -> PoseFrame {
        PoseFrame {
            frame_index: i,
            timestamp: i as f64 / 30.0,
            schema: "s".into(),
            instances: boxes.iter().copied().map(person).collect(),
        }
    }

    #[test]
    fn iou_examples() {
        let a = BBox::new(0., 0., 10., 10.);
        assert_eq!(iou(&a, &a), 1.0);
        assert_abs_diff_eq!(iou(&a, &BBox::new(5., 0., 10., 10.)), 1.0 / 3.0, epsilon = 1e-12);
        assert_eq!(iou(&a, &BBox::new(50., 50., 1., 1.)), 0.0);
        let z = BBox::new(0., 0., 0., 0.);
        assert_eq!(iou(&z, &z), 0.0);
    }

    #[test]
    fn oks_examples() {
        let a = [(0.0, 0.0), (0.0, 0.0)];
        let b = [(0.0, 0.0), (1.0, 1.0)];
        let v = oks(&a, &[true, true], &b, 1.0, &[1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(v, (1.0 + (-1.0f64).exp()) / 2.0, epsilon = 1e-12);
        assert_eq!(oks(&a, &[true, true], &a, 3.0, &[0.1, 0.1]).unwrap(), 1.0);
        assert_eq!(
            oks(&a, &[false, false], &b, 1.0, &[1.0, 1.0]),
            Err(TrackError::NoVisibleJoints)
        );
    }

    #[test]
    fn inherits_and_spawns() {
        let mut t = TrackState::new(TrackerConfig::default(), vec![0.1]);
        let mut f0 = frame(0, &[BBox::new(0., 0., 10., 10.)]);
        assert_eq!(t.track_step(&mut f0, TrackMode::Iou).unwrap(), [0]);
        let mut f1 = frame(1, &[BBox::new(0.5, 0., 10., 10.)]);
        assert_eq!(t.track_step(&mut f1, TrackMode::Iou).unwrap(), [0]);
        assert_eq!(f1.instances[0].track_id, Some(0));
        // IoU ~0.1 against the previous box: below 0.3
        let mut f2 = frame(2, &[BBox::new(8.5, 0., 10., 10.)]);
        assert_eq!(t.track_step(&mut f2, TrackMode::Iou).unwrap(), [1]);
    }

    #[test]
    fn crossing_instances_keep_ids() {
        // A->1: 0.8, A->2: 0.1, B->1: 0.2, B->2: 0.7 in IoU terms
        let mut t = TrackState::new(TrackerConfig::default(), vec![0.1]);
        let mut f0 = frame(0, &[BBox::new(0., 0., 10., 10.), BBox::new(12., 0., 10., 10.)]);
        t.track_step(&mut f0, TrackMode::Iou).unwrap();
        let mut f1 = frame(1, &[BBox::new(11., 0., 10., 10.), BBox::new(1., 0., 10., 10.)]);
        assert_eq!(t.track_step(&mut f1, TrackMode::Iou).unwrap(), [1, 0]);
    }

    #[test]
    fn iou_mode_requires_bbox() {
        let mut t = TrackState::new(TrackerConfig::default(), vec![0.1]);
        let mut f = frame(0, &[BBox::new(0., 0., 1., 1.)]);
        f.instances[0].bbox = None;
        assert_eq!(
            t.track_step(&mut f, TrackMode::Iou),
            Err(TrackError::MissingBBox { frame: 0, instance: 0 })
        );
        assert!(t.track_step(&mut f, TrackMode::Oks).is_ok());
    }

    #[test]
    fn gap_retirement() {
        let cfg = TrackerConfig {
            max_gap_frames: 2,
            ..Default::default()
        };
        let mut t = TrackState::new(cfg, vec![0.1]);
        let b = BBox::new(0., 0., 10., 10.);
        t.track_step(&mut frame(0, &[b]), TrackMode::Iou).unwrap();
        assert_eq!(t.track_step(&mut frame(2, &[b]), TrackMode::Iou).unwrap(), [0]);
        assert_eq!(t.track_step(&mut frame(5, &[b]), TrackMode::Iou).unwrap(), [1]);
    }

    #[test]
    fn target_is_sticky() {
        let mut t = TrackState::new(TrackerConfig::default(), vec![0.1]);
        let a = BBox::new(0., 0., 50., 100.);
        let b = BBox::new(200., 0., 90., 100.);
        let mut f0 = frame(0, &[a, b]);
        t.track_step(&mut f0, TrackMode::Iou).unwrap();
        assert_eq!(t.select_target(&f0).unwrap(), 1);
        let mut f1 = frame(1, &[BBox::new(0., 0., 60., 200.), BBox::new(201., 0., 90., 100.)]);
        t.track_step(&mut f1, TrackMode::Iou).unwrap();
        assert_eq!(t.select_target(&f1).unwrap(), 1);
    }

    #[test]
    fn empty_first_frame_retries() {
        let mut t = TrackState::new(TrackerConfig::default(), vec![0.1]);
        let mut e = frame(0, &[]);
        t.track_step(&mut e, TrackMode::Iou).unwrap();
        assert_eq!(t.select_target(&e), Err(TrackError::NoTarget(0)));
        let mut f = frame(1, &[BBox::new(0., 0., 5., 5.)]);
        assert_eq!(t.target_in(&mut f, TrackMode::Iou).unwrap(), Some(0));
    }

    #[test]
    fn equal_areas_pick_lowest_index() {
        let mut t = TrackState::new(TrackerConfig::default(), vec![0.1]);
        let mut f = frame(0, &[BBox::new(0., 0., 10., 10.), BBox::new(50., 0., 10., 10.)]);
        assert_eq!(t.target_in(&mut f, TrackMode::Iou).unwrap(), Some(0));
    }

    fn bbox() -> impl Strategy<Value = BBox> {
        (0.0..100.0f64, 0.0..100.0f64, 0.0..50.0f64, 0.0..50.0f64)
            .prop_map(|(x, y, w, h)| BBox::new(x, y, w, h))
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in bbox(), b in bbox()) {
            let v = iou(&a, &b);
            prop_assert!((v - iou(&b, &a)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&v));
        }

        #[test]
        fn oks_symmetric_and_scale_invariant(
            pts in prop::collection::vec(((0.0..100.0f64, 0.0..100.0f64), (0.0..100.0f64, 0.0..100.0f64), any::<bool>(), 0.01..0.2f64), 1..20),
            s in 1.0..200.0f64,
            k in 0.1..10.0f64,
        ) {
            prop_assume!(pts.iter().any(|p| p.2));
            let a: Vec<_> = pts.iter().map(|p| p.0).collect();
            let b: Vec<_> = pts.iter().map(|p| p.1).collect();
            let v: Vec<_> = pts.iter().map(|p| p.2).collect();
            let kap: Vec<_> = pts.iter().map(|p| p.3).collect();
            let ab = oks(&a, &v, &b, s, &kap).unwrap();
            prop_assert!((ab - oks(&b, &v, &a, s, &kap).unwrap()).abs() < 1e-12);
            let scale = |q: &Vec<(f64, f64)>| q.iter().map(|&(x, y)| (x * k, y * k)).collect::<Vec<_>>();
            let scaled = oks(&scale(&a), &v, &scale(&b), s * k, &kap).unwrap();
            prop_assert!((ab - scaled).abs() < 1e-9);
        }

        #[test]
        fn ids_never_reused(steps in prop::collection::vec(prop::collection::vec(bbox(), 0..4), 1..30)) {
            let mut t = TrackState::new(TrackerConfig { max_gap_frames: 2, ..Default::default() }, vec![0.1]);
            let mut seen = std::collections::BTreeSet::new();
            for (i, boxes) in steps.iter().enumerate() {
                let before = t.active_ids();
                let mut f = frame(i as u64, boxes);
                let ids = t.track_step(&mut f, TrackMode::Iou).unwrap();
                let mut uniq = ids.clone();
                uniq.sort();
                uniq.dedup();
                prop_assert_eq!(uniq.len(), ids.len());
                for id in &ids {
                    if !before.contains(id) {
                        prop_assert!(seen.insert(*id), "id {} reused", id);
                    }
                }
            }
        }

        #[test]
        fn single_person_target_constant(
            start in bbox(),
            drift in prop::collection::vec((-0.5..0.5f64, -0.5..0.5f64), 1..60),
        ) {
            let mut b = BBox::new(start.x, start.y, start.w + 20.0, start.h + 20.0);
            let mut t = TrackState::new(TrackerConfig::default(), vec![0.1]);
            let mut first = None;
            for (i, (dx, dy)) in drift.iter().enumerate() {
                b.x += dx;
                b.y += dy;
                let mut f = frame(i as u64, &[b]);
                t.target_in(&mut f, TrackMode::Iou).unwrap();
                let id = t.target_id().unwrap();
                prop_assert_eq!(*first.get_or_insert(id), id);
            }
        }
    }
}
