use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{prf, MatchResult, Metrics, View};

/// Pooled metrics for one (model, movement, view) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub movement: String,
    pub view: View,
    pub videos: Vec<String>,
    pub counts: MatchResult,
    pub metrics: Metrics,
}

impl ReportRow {
    pub fn new(model: &str, movement: &str, view: View) -> Self {
        ReportRow {
            model: model.to_string(),
            movement: movement.to_string(),
            view,
            videos: Vec::new(),
            counts: MatchResult::default(),
            metrics: Metrics::default(),
        }
    }

    pub fn add(&mut self, video: &str, result: &MatchResult) {
        self.videos.push(video.to_string());
        self.counts.merge(result);
        self.counts.pairs.clear();
        self.metrics = prf(&self.counts);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tau_tiou: f64,
    pub rows: Vec<ReportRow>,
}

impl EvalReport {
    /// Add `result` to the row for its group, creating it on first use.
    pub fn record(&mut self, model: &str, movement: &str, view: View, video: &str, result: &MatchResult) {
        let pos = self
            .rows
            .iter()
            .position(|r| r.model == model && r.movement == movement && r.view == view);
        let row = match pos {
            Some(i) => &mut self.rows[i],
            None => {
                self.rows.push(ReportRow::new(model, movement, view));
                self.rows.last_mut().expect("just pushed")
            }
        };
        row.add(video, result);
    }
}

/// Plain-text table: one line per group with macro P/R/F1.
pub fn render_table(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:<16} {:<6} {:>6} {:>6} {:>6}",
        "model", "movement", "view", "P", "R", "F1"
    );
    for r in &report.rows {
        let m = &r.metrics.macro_avg;
        let _ = writeln!(
            out,
            "{:<16} {:<16} {:<6} {:>6.3} {:>6.3} {:>6.3}",
            r.model,
            r.movement,
            r.view.to_string(),
            m.precision,
            m.recall,
            m.f1
        );
    }
    out
}
