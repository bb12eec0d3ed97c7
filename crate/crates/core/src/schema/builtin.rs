//! Built-in schemas.
//!
//! κ for the 17 body joints are the published COCO per-keypoint sigmas
//! (σ/10 form). Other joints inherit from their nearest anatomical neighbour:
//!
//! | joint                         | inherits from |
//! |-------------------------------|---------------|
//! | head_top, top_head, head      | ear           |
//! | neck                          | shoulder      |
//! | hip (pelvis centre)           | hip           |
//! | big/small toe, heel           | ankle         |
//! | face_*                        | nose          |
//! | hand joints                   | wrist         |

use super::{JointDef, KeypointSchema};

const NOSE: f64 = 0.026;
const EYE: f64 = 0.025;
const EAR: f64 = 0.035;
const SHOULDER: f64 = 0.079;
const ELBOW: f64 = 0.072;
const WRIST: f64 = 0.062;
const HIP: f64 = 0.107;
const KNEE: f64 = 0.087;
const ANKLE: f64 = 0.089;

fn kappa(name: &str) -> f64 {
    let base = name
        .strip_prefix("left_")
        .or_else(|| name.strip_prefix("right_"))
        .unwrap_or(name);
    match base {
        "nose" => NOSE,
        "eye" => EYE,
        "ear" | "head_top" | "top_head" | "head" => EAR,
        "shoulder" | "neck" => SHOULDER,
        "elbow" => ELBOW,
        "wrist" => WRIST,
        "hip" => HIP,
        "knee" => KNEE,
        "ankle" | "big_toe" | "small_toe" | "heel" => ANKLE,
        b if b.starts_with("face_") => NOSE,
        _ => WRIST,
    }
}

fn make(name: &str, joints: &[String], has_hands: bool) -> KeypointSchema {
    let defs = joints
        .iter()
        .map(|j| JointDef {
            name: j.clone(),
            kappa: kappa(j),
        })
        .collect();
    KeypointSchema::new(name, defs, has_hands).expect("built-in schema is valid")
}

fn owned(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

const COCO17: [&str; 17] = [
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];

fn coco17() -> Vec<String> {
    owned(&COCO17)
}

fn aic() -> Vec<String> {
    owned(&[
        "right_shoulder",
        "right_elbow",
        "right_wrist",
        "left_shoulder",
        "left_elbow",
        "left_wrist",
        "right_hip",
        "right_knee",
        "right_ankle",
        "left_hip",
        "left_knee",
        "left_ankle",
        "head_top",
        "neck",
    ])
}

fn crowdpose() -> Vec<String> {
    owned(&[
        "left_shoulder",
        "right_shoulder",
        "left_elbow",
        "right_elbow",
        "left_wrist",
        "right_wrist",
        "left_hip",
        "right_hip",
        "left_knee",
        "right_knee",
        "left_ankle",
        "right_ankle",
        "top_head",
        "neck",
    ])
}

fn halpe26() -> Vec<String> {
    let mut v = coco17();
    v.extend(owned(&[
        "head",
        "neck",
        "hip",
        "left_big_toe",
        "right_big_toe",
        "left_small_toe",
        "right_small_toe",
        "left_heel",
        "right_heel",
    ]));
    v
}

fn hand(side: &str) -> Vec<String> {
    let mut v = vec![format!("{side}_hand_root")];
    for finger in ["thumb", "forefinger", "middle_finger", "ring_finger", "pinky_finger"] {
        for k in 1..=4 {
            v.push(format!("{side}_{finger}{k}"));
        }
    }
    v
}

fn coco_wholebody() -> Vec<String> {
    let mut v = coco17();
    v.extend(owned(&[
        "left_big_toe",
        "left_small_toe",
        "left_heel",
        "right_big_toe",
        "right_small_toe",
        "right_heel",
    ]));
    v.extend((0..68).map(|i| format!("face_{i}")));
    v.extend(hand("left"));
    v.extend(hand("right"));
    v
}

pub(super) fn all() -> Vec<KeypointSchema> {
    vec![
        make("coco17", &coco17(), false),
        make("humanart", &coco17(), false),
        make("body7", &coco17(), false),
        make("aic", &aic(), false),
        make("crowdpose", &crowdpose(), false),
        make("halpe26", &halpe26(), false),
        make("coco_wholebody", &coco_wholebody(), true),
    ]
}
