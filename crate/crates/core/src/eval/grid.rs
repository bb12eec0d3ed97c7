use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{match_reps, prf, EvalError, GroundTruthRep, Matcher, View};
use crate::judge::{judge_stream, JudgeConfig, RunMode, SimulatedCost};
use crate::rules::MovementRuleSet;
use crate::schema::{KeypointSchema, PoseFrame};
use crate::thresholds::ThresholdConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdGrid {
    pub angle_tolerance: Vec<f64>,
    pub position_tolerance: Vec<f64>,
    pub debounce: Vec<usize>,
}

impl Default for ThresholdGrid {
    fn default() -> Self {
        ThresholdGrid {
            angle_tolerance: vec![3.0, 5.0, 8.0, 12.0],
            position_tolerance: vec![0.02, 0.05, 0.1],
            debounce: vec![1, 2, 3],
        }
    }
}

impl ThresholdGrid {
    pub fn len(&self) -> usize {
        self.angle_tolerance.len() * self.position_tolerance.len() * self.debounce.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn points(&self) -> Vec<(f64, f64, usize)> {
        let mut out = Vec::with_capacity(self.len());
        for &a in &self.angle_tolerance {
            for &p in &self.position_tolerance {
                for &d in &self.debounce {
                    out.push((a, p, d));
                }
            }
        }
        out.sort_by(|x, y| cmp_point(*x, *y));
        out.dedup();
        out
    }
}

fn cmp_point(x: (f64, f64, usize), y: (f64, f64, usize)) -> Ordering {
    x.0.total_cmp(&y.0)
        .then(x.1.total_cmp(&y.1))
        .then(x.2.cmp(&y.2))
}

/// One annotated video of a calibration group.
#[derive(Debug, Clone)]
pub struct DatasetItem {
    pub video: String,
    pub view: View,
    pub frames: Vec<PoseFrame>,
    pub gt: Vec<GroundTruthRep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub angle_tolerance: f64,
    pub position_tolerance: f64,
    pub debounce: usize,
    pub mean_macro_f1: f64,
    pub per_video_f1: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub model: String,
    pub movement: String,
    pub view: View,
    pub best: ThresholdConfig,
    pub best_f1: f64,
    pub cells: Vec<GridCell>,
}

/// Exhaustive threshold search, one result per view present in `dataset`.
///
/// Each cell scores the mean per-video macro F1; ties go to the smaller
/// angle tolerance, then position tolerance, then debounce.
pub fn grid_search_thresholds(
    grid: &ThresholdGrid,
    dataset: &[DatasetItem],
    rules: &MovementRuleSet,
    schema: &KeypointSchema,
    base: &JudgeConfig,
    tau_tiou: f64,
    matcher: Matcher,
) -> Result<Vec<GridResult>, EvalError> {
    if dataset.is_empty() {
        return Err(EvalError::Config(format!(
            "no videos for movement '{}' on '{}'",
            rules.movement_name,
            schema.name()
        )));
    }
    let points = grid.points();
    if points.is_empty() {
        return Err(EvalError::Config("empty threshold grid".into()));
    }
    let mut groups: BTreeMap<String, (View, Vec<&DatasetItem>)> = BTreeMap::new();
    for item in dataset {
        groups
            .entry(item.view.to_string())
            .or_insert_with(|| (item.view, Vec::new()))
            .1
            .push(item);
    }
    let quiet = JudgeConfig {
        cost: SimulatedCost::default(),
        mode: RunMode::Prerecorded,
        ..base.clone()
    };

    let mut results = Vec::new();
    for (view, items) in groups.into_values() {
        let jobs: Vec<(usize, usize)> = (0..points.len())
            .flat_map(|p| (0..items.len()).map(move |v| (p, v)))
            .collect();
        let scores: Vec<Result<f64, EvalError>> = jobs
            .par_iter()
            .map(|&(p, v)| {
                let (a, pos, d) = points[p];
                let cfg = JudgeConfig {
                    thresholds: ThresholdConfig {
                        angle_tolerance: a,
                        position_tolerance: pos,
                        debounce: d,
                        ..quiet.thresholds.clone()
                    },
                    ..quiet.clone()
                };
                let item = items[v];
                let out = judge_stream(&item.frames, rules, schema, None, &cfg)
                    .map_err(|e| EvalError::Config(format!("{}: {e}", item.video)))?;
                let m = match_reps(&out.reps, &item.gt, tau_tiou, matcher)
                    .map_err(|e| EvalError::Annotation(format!("{}: {e}", item.video)))?;
                Ok(prf(&m).macro_avg.f1)
            })
            .collect();

        let mut cells = Vec::with_capacity(points.len());
        for (p, &(a, pos, d)) in points.iter().enumerate() {
            let per_video = scores[p * items.len()..(p + 1) * items.len()]
                .iter()
                .cloned()
                .collect::<Result<Vec<f64>, _>>()?;
            cells.push(GridCell {
                angle_tolerance: a,
                position_tolerance: pos,
                debounce: d,
                mean_macro_f1: per_video.iter().sum::<f64>() / per_video.len() as f64,
                per_video_f1: per_video,
            });
        }
        // cells are in tie-break order, so the first maximum wins
        let best = cells
            .iter()
            .fold(None::<&GridCell>, |acc, c| match acc {
                Some(b) if b.mean_macro_f1 >= c.mean_macro_f1 => Some(b),
                _ => Some(c),
            })
            .expect("nonempty grid");
        results.push(GridResult {
            model: schema.name().to_string(),
            movement: rules.movement_name.clone(),
            view,
            best: ThresholdConfig {
                angle_tolerance: best.angle_tolerance,
                position_tolerance: best.position_tolerance,
                debounce: best.debounce,
                ..quiet.thresholds.clone()
            },
            best_f1: best.mean_macro_f1,
            cells,
        });
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_are_sorted_and_deduplicated() {
        let g = ThresholdGrid {
            angle_tolerance: vec![8.0, 3.0, 8.0],
            position_tolerance: vec![0.1, 0.02],
            debounce: vec![2, 1],
        };
        let pts = g.points();
        assert_eq!(pts.len(), 8);
        assert_eq!(pts[0], (3.0, 0.02, 1));
        assert_eq!(pts[7], (8.0, 0.1, 2));
    }

    #[test]
    fn default_grid_size() {
        assert_eq!(ThresholdGrid::default().len(), 36);
    }
}
