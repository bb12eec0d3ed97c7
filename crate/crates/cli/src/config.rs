use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use repjudge::cache::{CachePolicy, FrameSet};
use repjudge::judge::{JudgeConfig, RunMode, SimulatedCost, TrackerChoice};
use repjudge::rules::{parse_rule_set, MovementRuleSet};
use repjudge::schema::{read_keypoint_stream_file, KeypointSchema, PoseFrame, SchemaRegistry};
use repjudge::tracking::TrackerConfig;
use repjudge::ThresholdConfig;

/// Settings accepted from a `--config` TOML file. Command-line flags win.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub schema: Option<String>,
    pub schemas: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub threshold_file: Option<PathBuf>,
    pub stream: Option<PathBuf>,
    pub frames: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub video: Option<String>,
    pub mode: Option<RunMode>,
    pub fps: Option<f64>,
    pub tracker_mode: Option<TrackerChoice>,
    pub thresholds: Option<ThresholdConfig>,
    pub cache: Option<CachePolicy>,
    pub tracker: Option<TrackerConfig>,
    pub cost: Option<SimulatedCost>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    /// Base judge settings before flags are applied.
    pub fn judge_config(&self) -> Result<JudgeConfig> {
        let mut cfg = JudgeConfig::default();
        if let Some(t) = &self.thresholds {
            cfg.thresholds = t.clone();
        }
        if let Some(p) = &self.threshold_file {
            cfg.thresholds = load_thresholds(p)?;
        }
        if let Some(c) = self.cache {
            cfg.cache = c;
        }
        if let Some(t) = self.tracker {
            cfg.tracker = t;
        }
        if let Some(c) = self.cost {
            cfg.cost = c;
        }
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(f) = self.fps {
            cfg.fps = f;
        }
        if let Some(t) = self.tracker_mode {
            cfg.tracker_mode = t;
        }
        Ok(cfg)
    }
}

/// Threshold config from JSON, or TOML when the extension says so.
pub fn load_thresholds(path: &Path) -> Result<ThresholdConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read thresholds {}", path.display()))?;
    let cfg: ThresholdConfig = if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).with_context(|| format!("invalid thresholds {}", path.display()))?
    } else {
        serde_json::from_str(&text).with_context(|| format!("invalid thresholds {}", path.display()))?
    };
    cfg.validate().with_context(|| format!("invalid thresholds {}", path.display()))?;
    Ok(cfg)
}

pub fn load_rules(path: &Path) -> Result<MovementRuleSet> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read rule file {}", path.display()))?;
    parse_rule_set(&text).with_context(|| format!("invalid rule file {}", path.display()))
}

pub fn load_registry(path: Option<&Path>) -> Result<SchemaRegistry> {
    match path {
        Some(p) => SchemaRegistry::load(p).with_context(|| format!("cannot load schemas {}", p.display())),
        None => Ok(SchemaRegistry::builtin()),
    }
}

pub fn load_stream(path: &Path) -> Result<Vec<PoseFrame>> {
    read_keypoint_stream_file(path).with_context(|| format!("invalid keypoint stream {}", path.display()))
}

pub fn load_frames(path: &Path) -> Result<FrameSet> {
    FrameSet::load(path).with_context(|| format!("cannot load frames {}", path.display()))
}

/// The named schema, else the one the stream declares.
pub fn pick_schema<'a>(
    registry: &'a SchemaRegistry,
    name: Option<&str>,
    frames: &[PoseFrame],
) -> Result<&'a KeypointSchema> {
    let name = match name {
        Some(n) => n.to_string(),
        None => match frames.first() {
            Some(f) => f.schema.clone(),
            None => bail!("empty stream: pass --schema"),
        },
    };
    registry.get(&name).with_context(|| {
        format!(
            "unknown schema '{name}' (known: {})",
            registry.names().collect::<Vec<_>>().join(", ")
        )
    })
}

/// `WxH`, e.g. `32x32`.
pub fn parse_patch(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH, got '{s}'"))?;
    let w: usize = w.trim().parse().map_err(|_| format!("bad width in '{s}'"))?;
    let h: usize = h.trim().parse().map_err(|_| format!("bad height in '{s}'"))?;
    if w == 0 || h == 0 {
        return Err("patch dimensions must be positive".into());
    }
    Ok((w, h))
}

pub fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {what} {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid {what} {}", path.display()))
}
