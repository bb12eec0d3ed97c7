//! Grayscale frame input: a directory of PGM files named by frame index, or
//! one raw 8-bit file with a JSON sidecar `{"width":W,"height":H,"frames":N}`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageFormat};
use serde::{Deserialize, Serialize};

use super::CacheError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayFrame {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, CacheError> {
        if data.len() != width * height {
            return Err(CacheError::Shape(format!(
                "buffer of {} bytes for a {width}x{height} frame",
                data.len()
            )));
        }
        Ok(GrayFrame { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        GrayFrame {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSidecar {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
}

/// Frames keyed by frame index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameSet {
    frames: BTreeMap<u64, GrayFrame>,
}

impl FrameSet {
    pub fn from_frames(frames: impl IntoIterator<Item = (u64, GrayFrame)>) -> Self {
        FrameSet {
            frames: frames.into_iter().collect(),
        }
    }

    pub fn get(&self, index: u64) -> Option<&GrayFrame> {
        self.frames.get(&index)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &GrayFrame)> {
        self.frames.iter().map(|(k, v)| (*k, v))
    }

    /// Frame dimensions, taken from the first frame.
    pub fn dimensions(&self) -> Option<(usize, usize)> {
        self.frames.values().next().map(|f| (f.width, f.height))
    }

    /// Load either a PGM directory or a raw file (sidecar at `<path>.json`
    /// or the path with its extension replaced by `.json`).
    pub fn load(path: &Path) -> Result<Self, CacheError> {
        if path.is_dir() {
            load_pgm_dir(path)
        } else {
            load_raw(path, &sidecar_path(path)?)
        }
    }
}

fn io(path: &Path, e: impl std::fmt::Display) -> CacheError {
    CacheError::Io(format!("{}: {e}", path.display()))
}

fn sidecar_path(raw: &Path) -> Result<PathBuf, CacheError> {
    let appended = PathBuf::from(format!("{}.json", raw.display()));
    if appended.exists() {
        return Ok(appended);
    }
    let replaced = raw.with_extension("json");
    if replaced.exists() {
        return Ok(replaced);
    }
    Err(CacheError::Io(format!("no JSON sidecar found for {}", raw.display())))
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayFrame, CacheError> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Pnm)
        .map_err(|e| CacheError::Format(e.to_string()))?
        .into_luma8();
    let (w, h) = img.dimensions();
    GrayFrame::new(w as usize, h as usize, img.into_raw())
}

pub fn encode_pgm(frame: &GrayFrame, out: impl Write) -> Result<(), CacheError> {
    PnmEncoder::new(out)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(
            &frame.data,
            frame.width as u32,
            frame.height as u32,
            ExtendedColorType::L8,
        )
        .map_err(|e| CacheError::Format(e.to_string()))
}

/// Read every `<index>.pgm` in `dir`; other files are ignored.
pub fn load_pgm_dir(dir: &Path) -> Result<FrameSet, CacheError> {
    let mut frames = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| io(dir, e))? {
        let path = entry.map_err(|e| io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("pgm") {
            continue;
        }
        let Some(index) = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.parse::<u64>().ok())
        else {
            continue;
        };
        let bytes = fs::read(&path).map_err(|e| io(&path, e))?;
        frames.insert(index, decode_pgm(&bytes)?);
    }
    Ok(FrameSet { frames })
}

pub fn write_pgm_dir(dir: &Path, frames: &FrameSet) -> Result<(), CacheError> {
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    for (i, f) in frames.iter() {
        let path = dir.join(format!("{i:06}.pgm"));
        let file = fs::File::create(&path).map_err(|e| io(&path, e))?;
        encode_pgm(f, BufWriter::new(file))?;
    }
    Ok(())
}

pub fn load_raw(raw: &Path, sidecar: &Path) -> Result<FrameSet, CacheError> {
    let meta: RawSidecar = serde_json::from_str(
        &fs::read_to_string(sidecar).map_err(|e| io(sidecar, e))?,
    )
    .map_err(|e| io(sidecar, e))?;
    let size = meta.width * meta.height;
    let mut bytes = Vec::new();
    fs::File::open(raw)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| io(raw, e))?;
    if bytes.len() != size * meta.frames {
        return Err(CacheError::Shape(format!(
            "{} holds {} bytes, sidecar implies {}",
            raw.display(),
            bytes.len(),
            size * meta.frames
        )));
    }
    let frames = bytes
        .chunks_exact(size.max(1))
        .take(meta.frames)
        .enumerate()
        .map(|(i, c)| (i as u64, GrayFrame::new(meta.width, meta.height, c.to_vec()).unwrap()))
        .collect();
    Ok(FrameSet { frames })
}

/// Write frames `0..N` contiguously; the set must be dense from 0.
pub fn write_raw(raw: &Path, sidecar: &Path, frames: &FrameSet) -> Result<(), CacheError> {
    let (width, height) = frames.dimensions().unwrap_or((0, 0));
    let mut out = BufWriter::new(fs::File::create(raw).map_err(|e| io(raw, e))?);
    for (expect, (i, f)) in frames.iter().enumerate() {
        if i != expect as u64 || f.width != width || f.height != height {
            return Err(CacheError::Shape("raw output needs dense, equally sized frames".into()));
        }
        out.write_all(&f.data).map_err(|e| io(raw, e))?;
    }
    out.flush().map_err(|e| io(raw, e))?;
    let meta = RawSidecar {
        width,
        height,
        frames: frames.len(),
    };
    fs::write(sidecar, serde_json::to_string(&meta).unwrap()).map_err(|e| io(sidecar, e))
}
