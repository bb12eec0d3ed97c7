//! ROI patches: crop, Gaussian smoothing, area-average downsampling.

use super::{CacheError, CachePolicy, GrayFrame};
use crate::schema::BBox;

/// Fixed-size float patch, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Patch {
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Patch {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len().max(1) as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.data.iter().map(|v| (v - m).powi(2)).sum::<f64>() / self.data.len().max(1) as f64
    }
}

/// Normalized 1-D Gaussian taps.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as f64;
    let taps: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - half;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Separable Gaussian blur with replicated borders.
pub fn gaussian_blur(src: &Patch, size: usize, sigma: f64) -> Patch {
    if size <= 1 || sigma <= 0.0 {
        return src.clone();
    }
    let k = gaussian_kernel(size, sigma);
    let r = (size / 2) as isize;
    let (w, h) = (src.width as isize, src.height as isize);
    let at = |p: &Patch, x: isize, y: isize| {
        p.data[(y.clamp(0, h - 1) * w + x.clamp(0, w - 1)) as usize]
    };
    let mut tmp = Patch::filled(src.width, src.height, 0.0);
    for y in 0..h {
        for x in 0..w {
            tmp.data[(y * w + x) as usize] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * at(src, x + i as isize - r, y))
                .sum();
        }
    }
    let mut out = Patch::filled(src.width, src.height, 0.0);
    for y in 0..h {
        for x in 0..w {
            out.data[(y * w + x) as usize] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * at(&tmp, x, y + i as isize - r))
                .sum();
        }
    }
    out
}

/// `weights[o]` lists `(source index, weight)` so that output cell `o`
/// averages the source interval it covers.
fn area_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let (a, b) = (o as f64 * scale, (o + 1) as f64 * scale);
            let mut ws = Vec::new();
            let mut i = a.floor() as usize;
            while (i as f64) < b && i < src {
                let overlap = (b.min(i as f64 + 1.0) - a.max(i as f64)).max(0.0);
                if overlap > 0.0 {
                    ws.push((i, overlap / scale));
                }
                i += 1;
            }
            ws
        })
        .collect()
}

/// Area-averaging resize.
pub fn resize_area(src: &Patch, width: usize, height: usize) -> Patch {
    let wx = area_weights(src.width, width);
    let wy = area_weights(src.height, height);
    let mut tmp = Patch::filled(width, src.height, 0.0);
    for y in 0..src.height {
        for (ox, ws) in wx.iter().enumerate() {
            tmp.data[y * width + ox] = ws.iter().map(|(i, w)| w * src.data[y * src.width + i]).sum();
        }
    }
    let mut out = Patch::filled(width, height, 0.0);
    for (oy, ws) in wy.iter().enumerate() {
        for x in 0..width {
            out.data[oy * width + x] = ws.iter().map(|(i, w)| w * tmp.data[i * width + x]).sum();
        }
    }
    out
}

/// Integer pixel window of `roi` after padding and clamping.
pub fn crop_window(frame: &GrayFrame, roi: &BBox, padding: f64) -> Result<(usize, usize, usize, usize), CacheError> {
    let padded = roi.expand(roi.w * padding, roi.h * padding);
    let (fw, fh) = (frame.width() as f64, frame.height() as f64);
    let x0 = padded.x.floor().max(0.0);
    let y0 = padded.y.floor().max(0.0);
    let x1 = padded.right().ceil().min(fw);
    let y1 = padded.bottom().ceil().min(fh);
    if !(x1 > x0 && y1 > y0) {
        return Err(CacheError::Roi(format!(
            "ROI ({}, {}, {}, {}) does not intersect the {}x{} frame",
            roi.x,
            roi.y,
            roi.w,
            roi.h,
            frame.width(),
            frame.height()
        )));
    }
    Ok((x0 as usize, y0 as usize, x1 as usize, y1 as usize))
}

pub fn crop(frame: &GrayFrame, roi: &BBox, padding: f64) -> Result<Patch, CacheError> {
    let (x0, y0, x1, y1) = crop_window(frame, roi, padding)?;
    let mut data = Vec::with_capacity((x1 - x0) * (y1 - y0));
    for y in y0..y1 {
        data.extend(frame.data()[y * frame.width() + x0..y * frame.width() + x1].iter().map(|&v| v as f64));
    }
    Ok(Patch {
        width: x1 - x0,
        height: y1 - y0,
        data,
    })
}

pub fn roi_patch(frame: &GrayFrame, roi: &BBox, policy: &CachePolicy) -> Result<Patch, CacheError> {
    let c = crop(frame, roi, policy.roi_padding)?;
    let s = gaussian_blur(&c, policy.smoothing_kernel, policy.smoothing_sigma);
    Ok(resize_area(&s, policy.patch_width, policy.patch_height))
}

/// Mean absolute difference between two equally sized patches.
pub fn rpd(a: &Patch, b: &Patch) -> Result<f64, CacheError> {
    if a.width != b.width || a.height != b.height {
        return Err(CacheError::Shape(format!(
            "patch {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let n = a.data.len().max(1) as f64;
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).sum::<f64>() / n)
}
