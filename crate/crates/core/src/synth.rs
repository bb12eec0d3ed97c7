//! Synthetic side-view squat videos with known rep boundaries: coco17
//! keypoint streams, matching grayscale frames, and annotations.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cache::{write_pgm_dir, write_raw, FrameSet, GrayFrame};
use crate::eval::{GroundTruth, GroundTruthRep, View};
use crate::schema::{write_keypoint_stream, BBox, Keypoint, PersonInstance, Point, PoseFrame};
use crate::validator::RepLabel;

/// Rule document matched to the generator.
pub const SQUAT_RULES: &str = r#"{
  "movement": "Air Squat",
  "y_axis": "up",
  "response": {
    "rep_start": {
      "standing": {
        "keypoints": ["left_hip", "left_knee", "left_ankle"],
        "condition": "Angle(left_hip, left_knee, left_ankle) ~= 180 deg"
      }
    },
    "rep_end": {
      "standing": {
        "keypoints": ["left_hip", "left_knee", "left_ankle"],
        "condition": "Angle(left_hip, left_knee, left_ankle) ~= 180 deg"
      }
    },
    "rep_requirements": {
      "squat_depth": {
        "keypoints": ["left_hip", "left_knee"],
        "condition": "Y(left_hip) < Y(left_knee)"
      },
      "hip_knee_extension": {
        "keypoints": ["left_shoulder", "left_hip", "left_knee", "left_ankle"],
        "condition": "Angle(left_shoulder, left_hip, left_knee) ~= 180 deg and Angle(left_hip, left_knee, left_ankle) ~= 180 deg"
      }
    },
    "no_rep_conditions": [
      {
        "name": "heels_off_ground",
        "keypoints": ["left_ankle"],
        "condition": "Y(left_ankle) > 0.15"
      },
      "Knees caving inward"
    ]
  }
}
"#;

pub const WIDTH: usize = 96;
pub const HEIGHT: usize = 72;
const BACKGROUND: u8 = 40;
const FOREGROUND: u8 = 220;

const FLOOR: f64 = 68.0;
const ANKLE_X: f64 = 36.0;
const SHANK: f64 = 17.0;
const THIGH: f64 = 17.0;
const TORSO: f64 = 20.0;
const NECK: f64 = 6.0;
const STANDING_FLEX: f64 = 4.0;
const HEEL_RAISE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepKind {
    /// Hip below knee.
    Valid,
    /// Clear descent that stops above parallel.
    Shallow,
    /// A small dip: leaves the standing tolerance only when it is tight.
    Half,
    /// Full depth with the heels lifting at the bottom.
    HeelRaise,
}

impl RepKind {
    /// Knee flexion at the bottom, in degrees.
    pub fn peak_flex(self) -> f64 {
        match self {
            RepKind::Valid | RepKind::HeelRaise => 140.0,
            RepKind::Shallow => 80.0,
            RepKind::Half => 10.0,
        }
    }

    pub fn label(self) -> RepLabel {
        match self {
            RepKind::Valid => RepLabel::Valid,
            _ => RepLabel::Invalid,
        }
    }

    /// Inclusive range of descent (and ascent) frame counts.
    fn phase_frames(self) -> (usize, usize) {
        match self {
            RepKind::Valid | RepKind::HeelRaise => (3, 6),
            RepKind::Shallow => (3, 5),
            RepKind::Half => (1, 2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SquatPlan {
    pub seed: u64,
    pub reps: Vec<RepKind>,
    /// Standing frames before the first rep.
    pub lead_in: usize,
    /// Inclusive range of standing frames between reps.
    pub gap: (usize, usize),
    /// Inclusive range of frames held at the bottom.
    pub hold: (usize, usize),
    /// Standing frames after the last rep.
    pub tail: usize,
    /// Extend the tail so the video has at least this many frames.
    pub pad_to: Option<usize>,
    /// Half-width of uniform jitter on standing knee flexion.
    pub standing_jitter: f64,
    pub fps: f64,
}

impl Default for SquatPlan {
    fn default() -> Self {
        SquatPlan {
            seed: 0,
            reps: vec![RepKind::Valid, RepKind::Shallow, RepKind::Valid],
            lead_in: 8,
            gap: (6, 10),
            hold: (2, 4),
            tail: 8,
            pad_to: None,
            standing_jitter: 0.5,
            fps: 30.0,
        }
    }
}

impl SquatPlan {
    /// One to five reps of random kinds with random timing.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let kinds = [RepKind::Valid, RepKind::Shallow, RepKind::Half, RepKind::HeelRaise];
        let n = rng.gen_range(1..=5);
        SquatPlan {
            seed,
            reps: (0..n).map(|_| kinds[rng.gen_range(0..kinds.len())]).collect(),
            lead_in: rng.gen_range(5..12),
            gap: (5, rng.gen_range(6..14)),
            hold: (1, rng.gen_range(2..6)),
            tail: rng.gen_range(5..10),
            ..Default::default()
        }
    }

    /// Long static stretches and no jitter: most frames repeat exactly.
    pub fn low_motion() -> Self {
        SquatPlan {
            seed: 7,
            reps: vec![RepKind::Valid, RepKind::Shallow, RepKind::Valid],
            lead_in: 60,
            gap: (60, 70),
            hold: (2, 3),
            tail: 30,
            pad_to: Some(300),
            standing_jitter: 0.0,
            ..Default::default()
        }
    }
}

/// A rep as placed on the timeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedRep {
    pub kind: RepKind,
    /// Last standing frame before the descent.
    pub last_standing: u64,
    /// First standing frame after the ascent.
    pub first_standing: u64,
}

impl PlannedRep {
    /// The record a debounced judge should produce for this rep.
    pub fn expected(&self, debounce: usize) -> (u64, u64, RepLabel) {
        (
            self.last_standing + 1 - debounce as u64,
            self.first_standing,
            self.kind.label(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthVideo {
    pub frames: Vec<PoseFrame>,
    /// Knee flexion per frame.
    pub flex: Vec<f64>,
    /// Heel lift per frame, in pixels.
    pub heel: Vec<f64>,
    pub reps: Vec<PlannedRep>,
    pub fps: f64,
}

impl SynthVideo {
    pub fn ground_truth(&self) -> Vec<GroundTruthRep> {
        self.reps
            .iter()
            .map(|r| GroundTruthRep {
                t_start: r.last_standing,
                t_end: r.first_standing,
                label: r.kind.label(),
            })
            .collect()
    }

    pub fn ground_truth_file(&self, video: &str) -> GroundTruth {
        GroundTruth {
            video: video.to_string(),
            movement: "Air Squat".into(),
            view: View::Side,
            reps: self.ground_truth(),
        }
    }
}

/// Build the timeline and poses for `plan`.
///
/// Lead-in and gaps must leave room for the debounce windows used to judge
/// the video (at least `debounce` and `debounce + 1` frames respectively).
pub fn generate(plan: &SquatPlan) -> SynthVideo {
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut flex: Vec<f64> = Vec::new();
    let mut heel: Vec<f64> = Vec::new();
    let mut reps = Vec::new();
    let stand = |n: usize, flex: &mut Vec<f64>, heel: &mut Vec<f64>, rng: &mut ChaCha8Rng| {
        for _ in 0..n {
            let j = if plan.standing_jitter > 0.0 {
                rng.gen_range(-plan.standing_jitter..=plan.standing_jitter)
            } else {
                0.0
            };
            flex.push(STANDING_FLEX + j);
            heel.push(0.0);
        }
    };
    stand(plan.lead_in.max(1), &mut flex, &mut heel, &mut rng);
    for (i, &kind) in plan.reps.iter().enumerate() {
        if i > 0 {
            let g = rng.gen_range(plan.gap.0..=plan.gap.1.max(plan.gap.0));
            stand(g, &mut flex, &mut heel, &mut rng);
        }
        let last_standing = flex.len() as u64 - 1;
        let (lo, hi) = kind.phase_frames();
        let n_d = rng.gen_range(lo..=hi);
        let n_a = rng.gen_range(lo..=hi);
        let mut n_h = rng.gen_range(plan.hold.0..=plan.hold.1.max(plan.hold.0)).max(1);
        if n_d + n_h + n_a < 4 {
            n_h = 4 - n_d - n_a;
        }
        let peak = kind.peak_flex();
        let lift = if kind == RepKind::HeelRaise { HEEL_RAISE } else { 0.0 };
        for k in 1..=n_d {
            flex.push(STANDING_FLEX + (peak - STANDING_FLEX) * k as f64 / n_d as f64);
            heel.push(0.0);
        }
        for _ in 0..n_h {
            flex.push(peak);
            heel.push(lift);
        }
        for k in 1..n_a {
            flex.push(peak - (peak - STANDING_FLEX) * k as f64 / n_a as f64);
            heel.push(0.0);
        }
        reps.push(PlannedRep {
            kind,
            last_standing,
            first_standing: flex.len() as u64,
        });
    }
    stand(plan.tail.max(1), &mut flex, &mut heel, &mut rng);
    if let Some(n) = plan.pad_to {
        let extra = n.saturating_sub(flex.len());
        stand(extra, &mut flex, &mut heel, &mut rng);
    }

    let frames = flex
        .iter()
        .zip(&heel)
        .enumerate()
        .map(|(t, (&f, &h))| PoseFrame {
            frame_index: t as u64,
            timestamp: t as f64 / plan.fps,
            schema: "coco17".into(),
            instances: vec![pose(f, h)],
        })
        .collect();
    SynthVideo {
        frames,
        flex,
        heel,
        reps,
        fps: plan.fps,
    }
}

fn along(from: Point, len: f64, angle_from_up: f64, forward: bool) -> Point {
    let dx = len * angle_from_up.to_radians().sin();
    Point::new(
        if forward { from.x + dx } else { from.x - dx },
        from.y - len * angle_from_up.to_radians().cos(),
    )
}

/// Side-view skeleton facing +x. Knee flexion is split 0.3 / 0.7 between
/// shank and thigh; the torso leans by the shank angle so the hip angle
/// equals the knee angle.
pub fn skeleton(flex: f64, heel: f64) -> ([Point; 17], Point) {
    let (a, b, g) = (0.3 * flex, 0.7 * flex, 0.3 * flex);
    let ankle = Point::new(ANKLE_X, FLOOR - heel);
    let toe = Point::new(ANKLE_X + 6.0, FLOOR);
    let knee = along(ankle, SHANK, a, true);
    let hip = along(knee, THIGH, b, false);
    let shoulder = along(hip, TORSO, g, true);
    let head = along(shoulder, NECK, g, true);
    let elbow = Point::new(shoulder.x + 7.0, shoulder.y + 1.0);
    let wrist = Point::new(shoulder.x + 14.0, shoulder.y + 2.0);
    let nose = Point::new(head.x + 3.0, head.y);
    let eye = Point::new(head.x + 2.0, head.y - 1.0);
    let ear = Point::new(head.x - 1.0, head.y);
    let far = |p: Point| Point::new(p.x - 1.0, p.y);
    (
        [
            nose,
            eye,
            far(eye),
            ear,
            far(ear),
            shoulder,
            far(shoulder),
            elbow,
            far(elbow),
            wrist,
            far(wrist),
            hip,
            far(hip),
            knee,
            far(knee),
            ankle,
            far(ankle),
        ],
        toe,
    )
}

fn pose(flex: f64, heel: f64) -> PersonInstance {
    let (pts, toe) = skeleton(flex, heel);
    let kps: Vec<Keypoint> = pts
        .iter()
        .enumerate()
        .map(|(j, p)| {
            // odd indices past the nose are the near (left) side
            let c = if j == 0 || j % 2 == 1 { 0.95 } else { 0.8 };
            Keypoint::new(p.x, p.y, c)
        })
        .collect();
    let ext = BBox::enclosing(pts.iter().copied().chain([toe])).expect("nonempty");
    PersonInstance::new(kps, Some(ext.expand(2.0, 2.0)))
}

fn draw_segment(img: &mut GrayFrame, a: Point, b: Point, radius: f64) {
    let (x0, x1) = (a.x.min(b.x) - radius, a.x.max(b.x) + radius);
    let (y0, y1) = (a.y.min(b.y) - radius, a.y.max(b.y) + radius);
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    for y in (y0.floor().max(0.0) as usize)..=(y1.ceil().min(img.height() as f64 - 1.0) as usize) {
        for x in (x0.floor().max(0.0) as usize)..=(x1.ceil().min(img.width() as f64 - 1.0) as usize) {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let t = if len2 == 0.0 {
                0.0
            } else {
                (((px - a.x) * dx + (py - a.y) * dy) / len2).clamp(0.0, 1.0)
            };
            let (cx, cy) = (a.x + t * dx - px, a.y + t * dy - py);
            if cx * cx + cy * cy <= radius * radius {
                img.set(x, y, FOREGROUND);
            }
        }
    }
}

/// Grayscale stick-figure frames for `video`, with optional uniform pixel
/// noise of amplitude `noise`.
pub fn render(video: &SynthVideo, noise: u8, seed: u64) -> FrameSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FrameSet::from_frames(video.flex.iter().zip(&video.heel).enumerate().map(|(t, (&f, &h))| {
        let mut img = GrayFrame::filled(WIDTH, HEIGHT, BACKGROUND);
        let (p, toe) = skeleton(f, h);
        draw_segment(&mut img, p[15], toe, 1.5);
        draw_segment(&mut img, p[15], p[13], 1.5);
        draw_segment(&mut img, p[13], p[11], 2.0);
        draw_segment(&mut img, p[11], p[5], 2.5);
        draw_segment(&mut img, p[5], p[9], 1.2);
        let head = Point::new(p[3].x + 1.0, p[3].y);
        draw_segment(&mut img, head, head, 4.0);
        if noise > 0 {
            let n = noise as i16;
            for v in img.data_mut() {
                *v = (*v as i16 + rng.gen_range(-n..=n)).clamp(0, 255) as u8;
            }
        }
        (t as u64, img)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameFormat {
    PgmDir,
    Raw,
}

/// Write `stream.jsonl`, `gt.json` and, when given, the frames (`frames/`
/// or `frames.raw` with its `frames.json` sidecar) into `dir`.
pub fn write_video(
    dir: &Path,
    name: &str,
    video: &SynthVideo,
    frames: Option<(&FrameSet, FrameFormat)>,
) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut s = std::io::BufWriter::new(std::fs::File::create(dir.join("stream.jsonl"))?);
    write_keypoint_stream(&mut s, &video.frames)?;
    drop(s);
    let gt = serde_json::to_string_pretty(&video.ground_truth_file(name)).map_err(std::io::Error::other)?;
    std::fs::write(dir.join("gt.json"), gt + "\n")?;
    let other = |e: crate::cache::CacheError| std::io::Error::other(e.to_string());
    match frames {
        Some((f, FrameFormat::PgmDir)) => write_pgm_dir(&dir.join("frames"), f).map_err(other)?,
        Some((f, FrameFormat::Raw)) => write_raw(&dir.join("frames.raw"), &dir.join("frames.json"), f).map_err(other)?,
        None => {}
    }
    Ok(())
}
