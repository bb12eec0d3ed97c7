//! Detector cache (reuse an enlarged first detection) and ROI temporal cache
//! (skip pose inference while the target region barely changes).

mod frames;
mod patch;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::BBox;

pub use frames::{
    decode_pgm, encode_pgm, load_pgm_dir, load_raw, write_pgm_dir, write_raw, FrameSet, GrayFrame,
    RawSidecar,
};
pub use patch::{crop, gaussian_blur, gaussian_kernel, resize_area, roi_patch, rpd, Patch};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CacheError {
    #[error("ROI error: {0}")]
    Roi(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("frame format: {0}")]
    Format(String),
    #[error("frame I/O: {0}")]
    Io(String),
    #[error("invalid cache policy: {0}")]
    Config(String),
}

/// Which patch a new frame is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferencePolicy {
    /// The patch of the last frame that ran inference.
    #[default]
    LastInferred,
    /// The patch of the immediately preceding frame, skipped or not.
    Previous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CachePolicy {
    pub dc_enabled: bool,
    /// Pixels added on every side of the first detection.
    pub dc_offset: f64,
    pub rtc_enabled: bool,
    /// Skip threshold on the mean absolute 8-bit intensity difference.
    pub rtc_tau: f64,
    pub patch_width: usize,
    pub patch_height: usize,
    pub smoothing_kernel: usize,
    pub smoothing_sigma: f64,
    /// ROI padding per side, as a fraction of the ROI dimension.
    pub roi_padding: f64,
    pub reference: ReferencePolicy,
}

impl Default for CachePolicy {
    fn default() -> Self {
        CachePolicy {
            dc_enabled: false,
            dc_offset: 20.0,
            rtc_enabled: false,
            rtc_tau: 0.0,
            patch_width: 32,
            patch_height: 32,
            smoothing_kernel: 5,
            smoothing_sigma: 1.0,
            roi_padding: 0.1,
            reference: ReferencePolicy::LastInferred,
        }
    }
}

impl CachePolicy {
    pub fn validate(&self) -> Result<(), CacheError> {
        let bad = |m: &str| Err(CacheError::Config(m.to_string()));
        if !(self.dc_offset.is_finite() && self.dc_offset >= 0.0) {
            return bad("dc_offset must be >= 0");
        }
        if !(self.rtc_tau.is_finite() && self.rtc_tau >= 0.0) {
            return bad("rtc_tau must be >= 0");
        }
        if self.patch_width == 0 || self.patch_height == 0 {
            return bad("patch dimensions must be >= 1");
        }
        if self.smoothing_kernel.is_multiple_of(2) && self.smoothing_kernel != 0 {
            return bad("smoothing kernel size must be odd");
        }
        if !(self.roi_padding.is_finite() && self.roi_padding >= 0.0) {
            return bad("roi_padding must be >= 0");
        }
        Ok(())
    }
}

/// First detection grown by `offset` on all sides and clamped to the frame.
pub fn dc_bbox(first_detection: &BBox, offset: f64, frame_bounds: (f64, f64)) -> BBox {
    first_detection
        .expand(offset, offset)
        .clamp_to(frame_bounds.0, frame_bounds.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Skip,
    Infer,
}

pub fn cache_decide(d: f64, tau: f64) -> Decision {
    if d <= tau {
        Decision::Skip
    } else {
        Decision::Infer
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CacheStats {
    pub frames_total: u64,
    pub detector_invocations: u64,
    pub pose_inferences: u64,
    pub rtc_skips: u64,
    /// RPD per frame; `None` where no comparison was possible.
    pub rpd_trace: Vec<Option<f64>>,
}

impl CacheStats {
    pub fn skip_ratio(&self) -> f64 {
        if self.frames_total == 0 {
            0.0
        } else {
            self.rtc_skips as f64 / self.frames_total as f64
        }
    }
}

/// ROI temporal cache state for one stream.
#[derive(Debug, Clone)]
pub struct RoiCache {
    policy: CachePolicy,
    roi: Option<BBox>,
    reference: Option<Patch>,
}

impl RoiCache {
    pub fn new(policy: CachePolicy) -> Self {
        RoiCache {
            policy,
            roi: None,
            reference: None,
        }
    }

    pub fn roi(&self) -> Option<BBox> {
        self.roi
    }

    /// Decide for `frame`; also returns the RPD when one was computed.
    /// Frames that cannot be compared always infer.
    pub fn check(&mut self, frame: &GrayFrame) -> (Decision, Option<f64>) {
        if !self.policy.rtc_enabled {
            return (Decision::Infer, None);
        }
        let (Some(roi), Some(reference)) = (self.roi, self.reference.as_ref()) else {
            return (Decision::Infer, None);
        };
        let Ok(p) = roi_patch(frame, &roi, &self.policy) else {
            return (Decision::Infer, None);
        };
        let Ok(d) = rpd(&p, reference) else {
            return (Decision::Infer, None);
        };
        let decision = cache_decide(d, self.policy.rtc_tau);
        if decision == Decision::Skip && self.policy.reference == ReferencePolicy::Previous {
            self.reference = Some(p);
        }
        (decision, Some(d))
    }

    /// Record an inference on `frame` whose target occupies `roi`.
    pub fn update(&mut self, frame: &GrayFrame, roi: Option<BBox>) {
        self.roi = roi;
        self.reference = roi.and_then(|r| roi_patch(frame, &r, &self.policy).ok());
        if self.reference.is_none() {
            self.roi = None;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dc_examples() {
        let b = BBox::new(100., 100., 200., 300.);
        assert_eq!(dc_bbox(&b, 20.0, (1920., 1080.)), BBox::new(80., 80., 240., 340.));
        assert_eq!(dc_bbox(&b, 0.0, (1920., 1080.)), b);
        let c = dc_bbox(&BBox::new(5., 5., 50., 50.), 20.0, (1920., 1080.));
        assert_eq!((c.x, c.y), (0.0, 0.0));
        assert_eq!((c.right(), c.bottom()), (75.0, 75.0));
    }

    #[test]
    fn decide_is_inclusive() {
        assert_eq!(cache_decide(0.5, 1.0), Decision::Skip);
        assert_eq!(cache_decide(1.0, 1.0), Decision::Skip);
        assert_eq!(cache_decide(1.5, 1.0), Decision::Infer);
    }

    #[test]
    fn policy_validation() {
        assert!(CachePolicy::default().validate().is_ok());
        let p = CachePolicy {
            rtc_tau: -1.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = CachePolicy {
            patch_width: 0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }

    /// Skips over uniform frames of the given intensities with a fixed ROI.
    pub(crate) fn count_skips(levels: &[u8], tau: f64, reference: ReferencePolicy) -> usize {
        let policy = CachePolicy {
            rtc_enabled: true,
            rtc_tau: tau,
            reference,
            patch_width: 4,
            patch_height: 4,
            ..Default::default()
        };
        let roi = BBox::new(2., 2., 8., 8.);
        let mut c = RoiCache::new(policy);
        let mut skips = 0;
        for &l in levels {
            let f = GrayFrame::filled(12, 12, l);
            match c.check(&f).0 {
                Decision::Skip => skips += 1,
                Decision::Infer => c.update(&f, Some(roi)),
            }
        }
        skips
    }

    #[test]
    fn anchored_reference_is_not_monotone_in_tau() {
        let levels = [100, 112, 122, 102];
        assert_eq!(count_skips(&levels, 10.0, ReferencePolicy::LastInferred), 2);
        assert_eq!(count_skips(&levels, 15.0, ReferencePolicy::LastInferred), 1);
        assert!(
            count_skips(&levels, 15.0, ReferencePolicy::Previous)
                >= count_skips(&levels, 10.0, ReferencePolicy::Previous)
        );
    }

    #[test]
    fn zero_tau_skips_only_identical_patches() {
        assert_eq!(count_skips(&[1, 2, 3, 4], 0.0, ReferencePolicy::LastInferred), 0);
        assert_eq!(count_skips(&[1, 1, 3, 3], 0.0, ReferencePolicy::LastInferred), 2);
    }

    proptest! {
        #[test]
        fn skips_monotone_in_tau_with_previous_reference(
            levels in prop::collection::vec(any::<u8>(), 0..40),
            t1 in 0.0..60.0f64,
            dt in 0.0..60.0f64,
        ) {
            let a = count_skips(&levels, t1, ReferencePolicy::Previous);
            let b = count_skips(&levels, t1 + dt, ReferencePolicy::Previous);
            prop_assert!(a <= b);
        }

        #[test]
        fn dc_contains_detection(
            x in 0.0..100.0f64, y in 0.0..100.0f64, w in 1.0..100.0f64, h in 1.0..100.0f64,
            off in 0.0..50.0f64,
        ) {
            let det = BBox::new(x, y, w, h);
            let bounds = (150.0, 120.0);
            let inside = det.clamp_to(bounds.0, bounds.1);
            prop_assert!(dc_bbox(&det, off, bounds).contains_box(&inside));
        }
    }
}
