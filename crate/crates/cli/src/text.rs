use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;

use repjudge::retrieval::{
    ingest as embed_pages, retrieve as query_store, score_pairs, sweep_threshold, uniform_grid, ChunkStore, Embedder,
    HashEmbedder, HttpEmbedder, LabelThresholds, LabeledPair, Page, PrecomputedEmbedder,
};
use repjudge::stats::{rater_report, Ratings, Weights};

use crate::config::{read_json, write_json};

/// Embedder selection shared by `ingest` and `retrieve`.
#[derive(Debug, Args)]
pub struct EmbedderArgs {
    /// `hash`, `precomputed:<file.json>` or `http:<url>`.
    #[arg(long, default_value = "hash")]
    embedder: String,
    /// Vector dimension for `hash` and `http`.
    #[arg(long, default_value_t = 256)]
    dim: usize,
    /// Model name sent to an HTTP embedder.
    #[arg(long, default_value = "text-embedding-3-small")]
    embed_model: String,
    /// Environment variable holding the HTTP bearer token.
    #[arg(long, default_value = "OPENAI_API_KEY")]
    api_key_env: String,
}

impl EmbedderArgs {
    fn build(&self) -> Result<Box<dyn Embedder>> {
        let (kind, arg) = match self.embedder.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (self.embedder.as_str(), None),
        };
        Ok(match (kind, arg) {
            ("hash", None) => Box::new(HashEmbedder::new(self.dim)),
            ("precomputed", Some(p)) => Box::new(
                PrecomputedEmbedder::load(p.as_ref()).with_context(|| format!("cannot load embeddings {p}"))?,
            ),
            ("http", Some(url)) => {
                let mut e = HttpEmbedder::new(url, &self.embed_model, self.dim);
                e.api_key = std::env::var(&self.api_key_env).ok();
                Box::new(e)
            }
            _ => bail!("unknown embedder '{}': use hash, precomputed:<file> or http:<url>", self.embedder),
        })
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// JSON list of {text, label, sourceType, pageIndex}.
    #[arg(long)]
    pages: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    #[command(flatten)]
    embedder: EmbedderArgs,
}

pub fn ingest(args: IngestArgs) -> Result<u8> {
    let pages: Vec<Page> = read_json(&args.pages, "pages")?;
    let embedder = args.embedder.build()?;
    let store = embed_pages(&pages, embedder.as_ref())?;
    store.save(&args.out).with_context(|| format!("cannot write {}", args.out.display()))?;
    eprintln!("{} chunks of dimension {} -> {}", store.len(), store.dimension(), args.out.display());
    Ok(0)
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    #[arg(long)]
    store: PathBuf,
    /// Chunk label to search (0 or 1).
    #[arg(long)]
    label: u8,
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Similarity floor; defaults to the label's threshold.
    #[arg(long)]
    threshold: Option<f64>,
    /// Query vector: a JSON array or whitespace-separated floats.
    #[arg(long, conflicts_with = "query")]
    query_file: Option<PathBuf>,
    /// Query text, embedded with --embedder.
    #[arg(long)]
    query: Option<String>,
    #[command(flatten)]
    embedder: EmbedderArgs,
}

fn read_vector(path: &std::path::Path) -> Result<Vec<f32>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read query {}", path.display()))?;
    if text.trim_start().starts_with('[') {
        return serde_json::from_str(&text).with_context(|| format!("invalid query {}", path.display()));
    }
    text.split_whitespace()
        .map(|t| t.parse::<f32>().with_context(|| format!("bad number '{t}' in {}", path.display())))
        .collect()
}

pub fn retrieve(args: RetrieveArgs) -> Result<u8> {
    let store = ChunkStore::load(&args.store).with_context(|| format!("cannot load store {}", args.store.display()))?;
    let query = match (&args.query_file, &args.query) {
        (Some(p), _) => read_vector(p)?,
        (None, Some(q)) => args.embedder.build()?.embed(q).map_err(anyhow::Error::msg)?,
        (None, None) => bail!("pass --query-file or --query"),
    };
    let hits = query_store(&query, &store, args.label, args.k, args.threshold, &LabelThresholds::default())?;
    println!("{}", serde_json::to_string_pretty(&hits)?);
    Ok(0)
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    store: PathBuf,
    /// JSON list of {query, chunk, relevant}.
    #[arg(long)]
    pairs: PathBuf,
    /// Explicit thresholds; otherwise `--steps + 1` evenly spaced ones.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

pub fn sweep(args: SweepArgs) -> Result<u8> {
    let store = ChunkStore::load(&args.store).with_context(|| format!("cannot load store {}", args.store.display()))?;
    let pairs: Vec<LabeledPair> = read_json(&args.pairs, "pairs")?;
    let scored = score_pairs(&pairs, &store)?;
    let grid = args.grid.clone().unwrap_or_else(|| uniform_grid(args.steps));
    let sweep = sweep_threshold(&scored, &grid)?;
    println!("threshold\tTP\tFP\tFN\tP\tR\tF1");
    for p in &sweep.points {
        println!(
            "{:.4}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}",
            p.threshold, p.tp, p.fp, p.fn_, p.precision, p.recall, p.f1
        );
    }
    println!(
        "best threshold {} (F1 {:.4}{})",
        sweep.best_threshold,
        sweep.best_f1,
        if sweep.unique_best { "" } else { ", tied" }
    );
    if let Some(p) = &args.out {
        write_json(p, &sweep)?;
    }
    Ok(0)
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Human ratings CSV: rater,item,dimension,score.
    #[arg(long)]
    ratings: PathBuf,
    /// Ratings to calibrate against the humans (e.g. an automatic judge).
    #[arg(long)]
    other: Option<PathBuf>,
    /// Faithfulness, completeness, consistency weights.
    #[arg(long, value_delimiter = ',', num_args = 3, default_value = "0.4,0.4,0.2")]
    weights: Vec<f64>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

pub fn stats(args: StatsArgs) -> Result<u8> {
    let [f, c, s] = args.weights[..] else {
        bail!("--weights takes three values");
    };
    let w = Weights::new(f, c, s)?;
    let human = Ratings::load(&args.ratings).with_context(|| format!("invalid ratings {}", args.ratings.display()))?;
    let other = match &args.other {
        Some(p) => Some(Ratings::load(p).with_context(|| format!("invalid ratings {}", p.display()))?),
        None => None,
    };
    let report = rater_report(&human, other.as_ref(), &w)?;
    println!("items {}  raters {}", report.items.len(), report.raters.len());
    println!("MWS {:.4}  SD {:.4}", report.mws, report.sd);
    if let Some(icc) = report.icc {
        println!("ICC {icc:.4}");
    }
    if let Some(cal) = &report.calibration {
        println!("delta {:.4}  SD(diff) {:.4}", cal.delta, cal.sd_diff);
        if let (Some(t), Some(r)) = (cal.kendall_tau, cal.spearman_rho) {
            println!("kendall {t:.4}  spearman {r:.4}");
        }
    }
    if let Some(p) = &args.out {
        write_json(p, &report)?;
    }
    Ok(0)
}
