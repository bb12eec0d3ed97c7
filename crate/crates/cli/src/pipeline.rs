use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use repjudge::eval::{
    grid_search_thresholds, match_reps, render_table, DatasetItem, EvalReport, GroundTruth, Matcher, ThresholdGrid,
    View,
};
use repjudge::judge::{calibrate_tau as tau_search, judge_stream, JudgeConfig, JudgeOutput, RunMode, TrackerChoice};
use repjudge::rules::validate_rule_set;
use repjudge::synth::{generate, render, write_video, FrameFormat, SquatPlan};
use repjudge::validator::RepRecord;

use crate::config::{
    load_frames, load_registry, load_rules, load_stream, load_thresholds, pick_schema, read_json,
    write_json, FileConfig,
};
use crate::{CacheFlags, MatcherArg, ModeArg, TrackerArg, EXIT_ANOMALY};

/// What `judge` writes: rep records without timing, so runs can be diffed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordFile {
    #[serde(default)]
    pub video: Option<String>,
    pub movement: String,
    #[serde(default)]
    pub schema: Option<String>,
    pub reps: Vec<RepRecord>,
}

/// Inputs shared by commands that run the judge on one stream.
#[derive(Debug, Clone, Args)]
pub struct StreamArgs {
    /// Keypoint stream (JSON lines).
    #[arg(long)]
    stream: Option<PathBuf>,
    /// Movement rule file.
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Keypoint schema name; defaults to the one the stream declares.
    #[arg(long)]
    schema: Option<String>,
    /// Schema registry JSON replacing the built-in schemas.
    #[arg(long)]
    schemas: Option<PathBuf>,
    /// Grayscale frames: a PGM directory or a raw file with JSON sidecar.
    #[arg(long)]
    frames: Option<PathBuf>,
    /// Threshold config (JSON or TOML).
    #[arg(long)]
    thresholds: Option<PathBuf>,
    #[arg(long)]
    debounce: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    fps: Option<f64>,
    #[arg(long, value_enum)]
    tracker: Option<TrackerArg>,
    /// Simulated pose inference cost per call, in ms.
    #[arg(long)]
    pose_ms: Option<f64>,
    /// Simulated detector cost per call, in ms.
    #[arg(long)]
    detector_ms: Option<f64>,
}

struct Loaded {
    frames: Vec<repjudge::schema::PoseFrame>,
    rules: repjudge::rules::MovementRuleSet,
    registry: repjudge::schema::SchemaRegistry,
    schema: String,
    gray: Option<repjudge::cache::FrameSet>,
    config: JudgeConfig,
}

impl StreamArgs {
    fn load(&self, file: &FileConfig) -> Result<Loaded> {
        let mut config = file.judge_config()?;
        if let Some(p) = &self.thresholds {
            config.thresholds = load_thresholds(p)?;
        }
        if let Some(d) = self.debounce {
            config.thresholds.debounce = d;
        }
        if let Some(m) = self.mode {
            config.mode = match m {
                ModeArg::Prerecorded => RunMode::Prerecorded,
                ModeArg::Streamed => RunMode::Streamed,
            };
        }
        if let Some(f) = self.fps {
            config.fps = f;
        }
        if let Some(t) = self.tracker {
            config.tracker_mode = match t {
                TrackerArg::Auto => TrackerChoice::Auto,
                TrackerArg::Iou => TrackerChoice::Iou,
                TrackerArg::Oks => TrackerChoice::Oks,
            };
        }
        if let Some(v) = self.pose_ms {
            config.cost.pose_ms = v;
        }
        if let Some(v) = self.detector_ms {
            config.cost.detector_ms = v;
        }
        config.thresholds.validate().context("invalid thresholds")?;

        let rules_path = self.rules.as_ref().or(file.rules.as_ref()).context("no rule file: pass --rules")?;
        let rules = load_rules(rules_path)?;
        let stream_path = self
            .stream
            .as_ref()
            .or(file.stream.as_ref())
            .context("no keypoint stream: pass --stream")?;
        let frames = load_stream(stream_path)?;
        let registry = load_registry(self.schemas.as_deref().or(file.schemas.as_deref()))?;
        let schema = pick_schema(&registry, self.schema.as_deref().or(file.schema.as_deref()), &frames)?
            .name()
            .to_string();
        let gray = match self.frames.as_ref().or(file.frames.as_ref()) {
            Some(p) => Some(load_frames(p)?),
            None => None,
        };
        Ok(Loaded {
            frames,
            rules,
            registry,
            schema,
            gray,
            config,
        })
    }
}

impl Loaded {
    fn run(&self, config: &JudgeConfig) -> Result<JudgeOutput> {
        let schema = self.registry.get(&self.schema)?;
        judge_stream(&self.frames, &self.rules, schema, self.gray.as_ref(), config).context("judging failed")
    }
}

#[derive(Debug, Args)]
pub struct JudgeArgs {
    #[command(flatten)]
    input: StreamArgs,
    #[command(flatten)]
    cache: CacheFlags,
    /// Video id written into the records.
    #[arg(long)]
    video: Option<String>,
    /// Records file; stdout when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Diagnostics file (cache counters, latency, RTF).
    #[arg(long)]
    diagnostics: Option<PathBuf>,
}

pub fn judge(args: JudgeArgs, file: &FileConfig) -> Result<u8> {
    let loaded = args.input.load(file)?;
    let mut config = loaded.config.clone();
    args.cache.apply(&mut config.cache);
    let mut out = loaded.run(&config)?;
    out.video = args.video.or_else(|| file.video.clone());
    let records = RecordFile {
        video: out.video.clone(),
        movement: out.movement.clone(),
        schema: Some(loaded.schema.clone()),
        reps: out.reps.clone(),
    };
    match args.out.as_ref().or(file.out.as_ref()) {
        Some(p) => write_json(p, &records)?,
        None => println!("{}", serde_json::to_string_pretty(&records)?),
    }
    if let Some(p) = &args.diagnostics {
        write_json(p, &out.diagnostics)?;
    }
    let (v, i) = out.counts();
    eprintln!("{} reps: {v} valid, {i} invalid", v + i);
    if !out.diagnostics.excluded_constraints.is_empty() {
        eprintln!("excluded: {}", out.diagnostics.excluded_constraints.join(", "));
    }
    if out.is_anomalous() {
        eprintln!("warning: target person never found in {} frames", out.diagnostics.frames);
        return Ok(EXIT_ANOMALY);
    }
    Ok(0)
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Records written by `judge`; repeat for several videos.
    #[arg(long, required = true)]
    pred: Vec<PathBuf>,
    /// Ground-truth files, paired with predictions by video id.
    #[arg(long, required = true)]
    gt: Vec<PathBuf>,
    /// Minimum temporal IoU for a match.
    #[arg(long, default_value_t = 0.2)]
    tiou: f64,
    #[arg(long, value_enum, default_value = "greedy")]
    matcher: MatcherArg,
    /// Model name for the report; defaults to the records' schema.
    #[arg(long)]
    model: Option<String>,
    /// Full report as JSON.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

fn matcher(m: MatcherArg) -> Matcher {
    match m {
        MatcherArg::Greedy => Matcher::Greedy,
        MatcherArg::Optimal => Matcher::Optimal,
    }
}

pub fn evaluate(args: EvaluateArgs) -> Result<u8> {
    let preds = args
        .pred
        .iter()
        .map(|p| read_json::<RecordFile>(p, "records").map(|r| (p, r)))
        .collect::<Result<Vec<_>>>()?;
    let mut gts = BTreeMap::new();
    for p in &args.gt {
        let gt = GroundTruth::load(p).with_context(|| format!("invalid ground truth {}", p.display()))?;
        if gts.insert(gt.video.clone(), gt).is_some() {
            bail!("duplicate ground truth for video {}", p.display());
        }
    }
    let single = preds.len() == 1 && gts.len() == 1;
    let mut report = EvalReport {
        tau_tiou: args.tiou,
        rows: Vec::new(),
    };
    let mut used = Vec::new();
    for (path, pred) in &preds {
        let video = match (&pred.video, single) {
            (Some(v), _) => v.clone(),
            (None, true) => gts.keys().next().cloned().expect("one ground truth"),
            (None, false) => bail!("records {} carry no video id; pass --video to judge", path.display()),
        };
        let Some(gt) = gts.get(&video) else {
            bail!("no ground truth for video '{video}' ({})", path.display());
        };
        let res = match_reps(&pred.reps, &gt.reps, args.tiou, matcher(args.matcher))
            .with_context(|| format!("cannot score {}", path.display()))?;
        let model = args
            .model
            .clone()
            .or_else(|| pred.schema.clone())
            .unwrap_or_else(|| "unknown".into());
        report.record(&model, &gt.movement, gt.view, &video, &res);
        used.push(video);
    }
    let missing: Vec<&String> = gts.keys().filter(|v| !used.contains(v)).collect();
    if !missing.is_empty() {
        bail!(
            "ground truth without predictions: {}",
            missing.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
        );
    }
    print!("{}", render_table(&report));
    if let Some(p) = &args.out {
        write_json(p, &report)?;
    }
    Ok(0)
}

/// One video of a calibration manifest. Paths are relative to the manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub video: String,
    pub movement: String,
    pub view: View,
    pub stream: PathBuf,
    pub gt: PathBuf,
    /// Frame stream; threshold search does not read it.
    #[serde(default)]
    pub frames: Option<PathBuf>,
    #[serde(default)]
    pub schema: Option<String>,
    #[serde(default)]
    pub rules: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// JSON list of {video, movement, view, stream, gt[, schema, rules]}.
    #[arg(long)]
    manifest: PathBuf,
    /// Directory of rule files named after the movement, e.g. air_squat.json.
    #[arg(long)]
    rules_dir: Option<PathBuf>,
    #[arg(long)]
    schemas: Option<PathBuf>,
    /// Grid as JSON {angle_tolerance, position_tolerance, debounce}.
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    angle: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    position: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    debounce: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0.2)]
    tiou: f64,
    #[arg(long, value_enum, default_value = "greedy")]
    matcher: MatcherArg,
    /// One threshold file per (model, movement, view) goes here.
    #[arg(long)]
    out_dir: PathBuf,
}

/// `Air Squat` -> `air_squat`.
pub fn slug(name: &str) -> String {
    let mut s = String::new();
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            s.push(c.to_ascii_lowercase());
        } else if !s.is_empty() && !s.ends_with('_') {
            s.push('_');
        }
    }
    s.trim_end_matches('_').to_string()
}

pub fn calibrate(args: CalibrateArgs, file: &FileConfig) -> Result<u8> {
    let entries: Vec<ManifestEntry> = read_json(&args.manifest, "manifest")?;
    if entries.is_empty() {
        bail!("manifest {} lists no videos", args.manifest.display());
    }
    let base = args.manifest.parent().unwrap_or(Path::new("."));
    let registry = load_registry(args.schemas.as_deref().or(file.schemas.as_deref()))?;
    let mut grid = match &args.grid {
        Some(p) => read_json::<ThresholdGrid>(p, "grid")?,
        None => ThresholdGrid::default(),
    };
    if let Some(a) = args.angle {
        grid.angle_tolerance = a;
    }
    if let Some(p) = args.position {
        grid.position_tolerance = p;
    }
    if let Some(d) = args.debounce {
        grid.debounce = d;
    }
    let judge_base = file.judge_config()?;

    // (schema, movement) -> (rule path, items)
    let mut groups: BTreeMap<(String, String), (PathBuf, Vec<DatasetItem>)> = BTreeMap::new();
    for e in &entries {
        let frames = load_stream(&base.join(&e.stream))?;
        let schema = pick_schema(&registry, e.schema.as_deref().or(file.schema.as_deref()), &frames)?
            .name()
            .to_string();
        let gt_path = base.join(&e.gt);
        let gt = GroundTruth::load(&gt_path).with_context(|| format!("invalid ground truth {}", gt_path.display()))?;
        let rules = match (&e.rules, &args.rules_dir) {
            (Some(r), _) => base.join(r),
            (None, Some(d)) => d.join(format!("{}.json", slug(&e.movement))),
            (None, None) => bail!("no rules for '{}': pass --rules-dir", e.video),
        };
        let group = groups
            .entry((schema, e.movement.clone()))
            .or_insert_with(|| (rules.clone(), Vec::new()));
        if group.0 != rules {
            bail!("conflicting rule files for movement '{}'", e.movement);
        }
        group.1.push(DatasetItem {
            video: e.video.clone(),
            view: e.view,
            frames,
            gt: gt.reps,
        });
    }

    let mut all = Vec::new();
    for ((schema, movement), (rules_path, items)) in &groups {
        let rules = load_rules(rules_path)?;
        let results = grid_search_thresholds(
            &grid,
            items,
            &rules,
            registry.get(schema)?,
            &judge_base,
            args.tiou,
            matcher(args.matcher),
        )
        .with_context(|| format!("calibration failed for {schema}/{movement}"))?;
        for r in results {
            let name = format!("{}__{}__{}.json", slug(&r.model), slug(&r.movement), r.view);
            write_json(&args.out_dir.join(&name), &r.best)?;
            println!(
                "{}\t{}\t{}\tangle={}\tposition={}\tdebounce={}\tF1={:.4}",
                r.model,
                r.movement,
                r.view,
                r.best.angle_tolerance,
                r.best.position_tolerance,
                r.best.debounce,
                r.best_f1
            );
            all.push(r);
        }
    }
    write_json(&args.out_dir.join("grid_search.json"), &all)?;
    Ok(0)
}

#[derive(Debug, Args)]
pub struct CalibrateTauArgs {
    #[command(flatten)]
    input: StreamArgs,
    /// Candidate thresholds.
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,2,4,8,16")]
    grid: Vec<f64>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

pub fn calibrate_tau(args: CalibrateTauArgs, file: &FileConfig) -> Result<u8> {
    let loaded = args.input.load(file)?;
    let gray = loaded.gray.as_ref().context("tau calibration needs --frames")?;
        let cal = tau_search(
        &loaded.frames,
        gray,
        &loaded.rules,
        loaded.registry.get(&loaded.schema)?,
        &loaded.config,
        &args.grid,
    )?;
    for t in &cal.trials {
        println!(
            "tau={}\tvalid={}\tinvalid={}\tskips={}\t{}",
            t.tau,
            t.counts.0,
            t.counts.1,
            t.rtc_skips,
            if t.preserves_counts { "ok" } else { "changed" }
        );
    }
    println!("selected tau={}", cal.tau);
    if let Some(p) = &args.out {
        write_json(p, &cal)?;
    }
    Ok(0)
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    input: StreamArgs,
    #[arg(long, default_value_t = 20.0)]
    dc_offset: f64,
    #[arg(long, default_value_t = 2.0)]
    rtc_tau: f64,
    /// Runs per configuration.
    #[arg(long, default_value_t = 1)]
    repeat: usize,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub config: String,
    pub frames: u64,
    pub detector_invocations: u64,
    pub pose_inferences: u64,
    pub rtc_skips: u64,
    pub processing_seconds: f64,
    pub rtf: Option<f64>,
    pub rep_latency_mean_ms: f64,
    pub rep_latency_p95_ms: f64,
    pub speedup: f64,
    pub counts: (usize, usize),
}

pub fn bench(args: BenchArgs, file: &FileConfig) -> Result<u8> {
    let loaded = args.input.load(file)?;
    let mut variants = vec![("none", false, false), ("dc", true, false)];
    if loaded.gray.is_some() {
        variants.push(("rtc", false, true));
        variants.push(("dc+rtc", true, true));
    } else {
        eprintln!("no --frames given: skipping RTC variants");
    }
    let mut rows: Vec<BenchRow> = Vec::new();
    for (name, dc, rtc) in variants {
        let mut config = loaded.config.clone();
        config.cache.dc_enabled = dc;
        config.cache.dc_offset = args.dc_offset;
        config.cache.rtc_enabled = rtc;
        config.cache.rtc_tau = args.rtc_tau;
        let mut secs = 0.0;
        let mut latencies = Vec::new();
        let mut last = None;
        for _ in 0..args.repeat.max(1) {
            let out = loaded.run(&config)?;
            secs += out.diagnostics.processing_seconds;
            latencies.extend_from_slice(&out.diagnostics.rep_decision_latency_ms);
            last = Some(out);
        }
        let out = last.expect("at least one run");
        let secs = secs / args.repeat.max(1) as f64;
        let lat = repjudge::judge::LatencySummary::from_samples(&latencies);
        let rtf = (out.diagnostics.video_seconds > 0.0).then(|| secs / out.diagnostics.video_seconds);
        let c = &out.diagnostics.cache;
        rows.push(BenchRow {
            config: name.into(),
            frames: c.frames_total,
            detector_invocations: c.detector_invocations,
            pose_inferences: c.pose_inferences,
            rtc_skips: c.rtc_skips,
            processing_seconds: secs,
            rtf,
            rep_latency_mean_ms: lat.mean_ms,
            rep_latency_p95_ms: lat.p95_ms,
            speedup: 1.0,
            counts: out.counts(),
        });
    }
    let base = rows[0].processing_seconds;
    for r in &mut rows {
        r.speedup = if r.processing_seconds > 0.0 { base / r.processing_seconds } else { f64::NAN };
    }
    let mut table = String::from("config\tframes\tdetector\tinferences\tskips\tseconds\tRTF\trep_ms\tspeedup\treps\n");
    for r in &rows {
        let _ = writeln!(
            table,
            "{}\t{}\t{}\t{}\t{}\t{:.4}\t{}\t{:.2}\t{:.2}\t{}/{}",
            r.config,
            r.frames,
            r.detector_invocations,
            r.pose_inferences,
            r.rtc_skips,
            r.processing_seconds,
            r.rtf.map_or("-".into(), |v| format!("{v:.3}")),
            r.rep_latency_mean_ms,
            r.speedup,
            r.counts.0,
            r.counts.1
        );
    }
    print!("{table}");
    if let Some(p) = &args.out {
        write_json(p, &rows)?;
    }
    Ok(0)
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    Default,
    LowMotion,
    Random,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FramesArg {
    Pgm,
    Raw,
    None,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "default")]
    preset: Preset,
    /// Seed of the random preset.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "pgm")]
    frames: FramesArg,
    /// Uniform pixel noise amplitude.
    #[arg(long, default_value_t = 0)]
    noise: u8,
    #[arg(long, default_value = "synth")]
    video: String,
}

pub fn synth(args: SynthArgs) -> Result<u8> {
    let plan = match args.preset {
        Preset::Default => SquatPlan::default(),
        Preset::LowMotion => SquatPlan::low_motion(),
        Preset::Random => SquatPlan::random(args.seed),
    };
    let video = generate(&plan);
    let rendered = match args.frames {
        FramesArg::None => None,
        _ => Some(render(&video, args.noise, args.seed)),
    };
    let frames = match args.frames {
        FramesArg::Pgm => rendered.as_ref().map(|f| (f, FrameFormat::PgmDir)),
        FramesArg::Raw => rendered.as_ref().map(|f| (f, FrameFormat::Raw)),
        FramesArg::None => None,
    };
    write_video(&args.out_dir, &args.video, &video, frames)
        .with_context(|| format!("cannot write {}", args.out_dir.display()))?;
    eprintln!("{} frames, {} reps -> {}", video.frames.len(), video.reps.len(), args.out_dir.display());
    Ok(0)
}

#[derive(Debug, Args)]
pub struct SchemasArgs {
    #[arg(long)]
    schemas: Option<PathBuf>,
    /// Check this rule file against the schemas.
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Only this schema.
    #[arg(long)]
    schema: Option<String>,
    /// Write the registry as JSON.
    #[arg(long)]
    export: Option<PathBuf>,
}

pub fn schemas(args: SchemasArgs, file: &FileConfig) -> Result<u8> {
    let registry = load_registry(args.schemas.as_deref().or(file.schemas.as_deref()))?;
    if let Some(p) = &args.export {
        std::fs::write(p, registry.to_json() + "\n").with_context(|| format!("cannot write {}", p.display()))?;
    }
    let selected: Vec<_> = match args.schema.as_deref().or(file.schema.as_deref()) {
        Some(n) => vec![registry.get(n)?],
        None => registry.iter().collect(),
    };
    let Some(rules_path) = &args.rules else {
        for s in selected {
            println!("{}\t{} joints{}", s.name(), s.len(), if s.has_hands() { "\thands" } else { "" });
        }
        return Ok(0);
    };
    let rules = load_rules(rules_path)?;
    let reports: Vec<_> = selected.iter().map(|s| validate_rule_set(&rules, s)).collect();
    println!("{}", serde_json::to_string_pretty(&reports)?);
    if args.schema.is_some() && !reports[0].runnable {
        bail!("'{}' cannot run on schema '{}'", rules.movement_name, reports[0].schema);
    }
    Ok(0)
}
