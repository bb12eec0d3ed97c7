//! Rubric statistics: weighted scores, rater spread and reliability, and
//! agreement between two sets of per-item scores.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("ratings file: {0}")]
    Parse(String),
}

pub const RUBRIC_MIN: f64 = 1.0;
pub const RUBRIC_MAX: f64 = 5.0;

/// Map a 1-5 rubric score onto [0, 1].
pub fn normalize_rubric(score: f64) -> Result<f64, StatsError> {
    if !(RUBRIC_MIN..=RUBRIC_MAX).contains(&score) {
        return Err(StatsError::Domain(format!("rubric score {score} outside [1, 5]")));
    }
    Ok((score - RUBRIC_MIN) / (RUBRIC_MAX - RUBRIC_MIN))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub faithfulness: f64,
    pub completeness: f64,
    pub consistency: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights {
            faithfulness: 0.4,
            completeness: 0.4,
            consistency: 0.2,
        }
    }
}

impl Weights {
    pub fn new(faithfulness: f64, completeness: f64, consistency: f64) -> Result<Self, StatsError> {
        let w = Weights {
            faithfulness,
            completeness,
            consistency,
        };
        let parts = [faithfulness, completeness, consistency];
        if parts.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(StatsError::Domain("weights must be finite and >= 0".into()));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(StatsError::Domain("weights must sum to 1".into()));
        }
        Ok(w)
    }
}

/// Weighted score of normalized faithfulness, completeness, consistency.
pub fn mws(f: f64, c: f64, s: f64, w: &Weights) -> Result<f64, StatsError> {
    for (name, v) in [("F", f), ("C", c), ("S", s)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(StatsError::Domain(format!("{name} = {v} outside [0, 1]")));
        }
    }
    Ok(w.faithfulness * f + w.completeness * c + w.consistency * s)
}

/// Scores as raters × items, no missing cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub raters: Vec<String>,
    pub items: Vec<String>,
    /// `scores[rater][item]`
    pub scores: Vec<Vec<f64>>,
}

impl ScoreMatrix {
    pub fn new(scores: Vec<Vec<f64>>) -> Result<Self, StatsError> {
        let k = scores.len();
        let n = scores.first().map_or(0, Vec::len);
        if k == 0 || n == 0 {
            return Err(StatsError::Domain("empty score matrix".into()));
        }
        if scores.iter().any(|r| r.len() != n) {
            return Err(StatsError::Shape("ragged score matrix".into()));
        }
        Ok(ScoreMatrix {
            raters: (0..k).map(|i| format!("r{i}")).collect(),
            items: (0..n).map(|j| format!("i{j}")).collect(),
            scores,
        })
    }

    pub fn n_raters(&self) -> usize {
        self.scores.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    fn column(&self, item: usize) -> impl Iterator<Item = f64> + '_ {
        self.scores.iter().map(move |r| r[item])
    }
}

/// Mean over raters for each item.
pub fn aggregate_human(m: &ScoreMatrix) -> Result<Vec<f64>, StatsError> {
    if m.n_raters() == 0 || m.n_items() == 0 {
        return Err(StatsError::Domain("empty score matrix".into()));
    }
    let k = m.n_raters() as f64;
    Ok((0..m.n_items()).map(|j| m.column(j).sum::<f64>() / k).collect())
}

/// Population standard deviation over raters for each item.
pub fn sd_per_item(m: &ScoreMatrix) -> Vec<f64> {
    let k = m.n_raters() as f64;
    (0..m.n_items())
        .map(|j| {
            let mean = m.column(j).sum::<f64>() / k;
            (m.column(j).map(|x| (x - mean).powi(2)).sum::<f64>() / k).sqrt()
        })
        .collect()
}

/// Two-way ANOVA mean squares `(MSR, MSC, MSE)`: between items, between
/// raters, residual.
pub fn mean_squares(m: &ScoreMatrix) -> (f64, f64, f64) {
    let (k, n) = (m.n_raters(), m.n_items());
    let (kf, nf) = (k as f64, n as f64);
    let grand = m.scores.iter().flatten().sum::<f64>() / (kf * nf);
    let item_means: Vec<f64> = (0..n).map(|j| m.column(j).sum::<f64>() / kf).collect();
    let rater_means: Vec<f64> = m.scores.iter().map(|r| r.iter().sum::<f64>() / nf).collect();
    let ssr = kf * item_means.iter().map(|v| (v - grand).powi(2)).sum::<f64>();
    let ssc = nf * rater_means.iter().map(|v| (v - grand).powi(2)).sum::<f64>();
    let mut sse = 0.0;
    for (i, row) in m.scores.iter().enumerate() {
        for (j, x) in row.iter().enumerate() {
            sse += (x - item_means[j] - rater_means[i] + grand).powi(2);
        }
    }
    (
        ssr / (nf - 1.0),
        ssc / (kf - 1.0),
        sse / ((nf - 1.0) * (kf - 1.0)),
    )
}

/// Average-measures two-way random-effects ICC:
/// `(MSR − MSE) / (MSR + (MSC − MSE)/n + (k − 1)·MSE)`.
pub fn icc2k(m: &ScoreMatrix) -> Result<f64, StatsError> {
    let (k, n) = (m.n_raters(), m.n_items());
    if k < 2 || n < 2 {
        return Err(StatsError::Domain(format!("ICC needs >= 2 raters and items, got {k} x {n}")));
    }
    let (msr, msc, mse) = mean_squares(m);
    let denom = msr + (msc - mse) / n as f64 + (k as f64 - 1.0) * mse;
    if msr == 0.0 || denom == 0.0 {
        return Err(StatsError::Degenerate("no between-item variance".into()));
    }
    Ok((msr - mse) / denom)
}

pub fn mean_abs_delta(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::Shape(format!("{} vs {} items", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(StatsError::Domain("no items".into()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

fn check_pairs(a: &[f64], b: &[f64]) -> Result<(), StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::Shape(format!("{} vs {} items", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(StatsError::Domain("rank statistics need >= 2 items".into()));
    }
    Ok(())
}

/// Kendall τ-a: tied pairs count as neither concordant nor discordant.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    check_pairs(a, b)?;
    let n = a.len();
    let mut score = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            let s = (a[i] - a[j]).signum() * (b[i] - b[j]).signum();
            if a[i] != a[j] && b[i] != b[j] {
                score += s as i64;
            }
        }
    }
    Ok(score as f64 / (n * (n - 1) / 2) as f64)
}

/// 1-based ranks, ties sharing their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0.0; v.len()];
    let mut s = 0;
    while s < idx.len() {
        let mut e = s;
        while e + 1 < idx.len() && v[idx[e + 1]] == v[idx[s]] {
            e += 1;
        }
        let r = (s + e) as f64 / 2.0 + 1.0;
        for &i in &idx[s..=e] {
            ranks[i] = r;
        }
        s = e + 1;
    }
    ranks
}

/// Spearman ρ by the rank-difference formula on average ranks.
pub fn spearman_rho(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    check_pairs(a, b)?;
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y).powi(2)).sum();
    // with ties the formula can leave [-1, 1]
    Ok((1.0 - 6.0 * d2 / (n * (n * n - 1.0))).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dimension {
    F,
    C,
    S,
}

impl std::str::FromStr for Dimension {
    type Err = StatsError;

    fn from_str(s: &str) -> Result<Self, StatsError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "f" | "faithfulness" => Ok(Dimension::F),
            "c" | "completeness" => Ok(Dimension::C),
            "s" | "consistency" | "internal_consistency" => Ok(Dimension::S),
            other => Err(StatsError::Parse(format!("unknown dimension '{other}'"))),
        }
    }
}

#[derive(Debug, Deserialize)]
struct Row {
    rater: String,
    item: String,
    dimension: String,
    score: f64,
}

/// Rubric scores keyed by (rater, item, dimension).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ratings {
    cells: BTreeMap<(String, String, Dimension), f64>,
}

impl Ratings {
    pub fn insert(&mut self, rater: &str, item: &str, dim: Dimension, score: f64) -> Result<(), StatsError> {
        normalize_rubric(score)?;
        let key = (rater.to_string(), item.to_string(), dim);
        if self.cells.insert(key, score).is_some() {
            return Err(StatsError::Parse(format!("duplicate score for {rater}/{item}/{dim:?}")));
        }
        Ok(())
    }

    /// Parse CSV with header `rater,item,dimension,score`.
    pub fn from_csv<R: std::io::Read>(reader: R) -> Result<Self, StatsError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut out = Ratings::default();
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| StatsError::Parse(format!("line {line}: {e}")))?;
            let dim = row
                .dimension
                .parse()
                .map_err(|e| StatsError::Parse(format!("line {line}: {e}")))?;
            out.insert(&row.rater, &row.item, dim, row.score)
                .map_err(|e| StatsError::Parse(format!("line {line}: {e}")))?;
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self, StatsError> {
        let f = std::fs::File::open(path).map_err(|e| StatsError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_csv(f).map_err(|e| StatsError::Parse(format!("{}: {e}", path.display())))
    }

    pub fn raters(&self) -> Vec<String> {
        self.cells.keys().map(|k| k.0.clone()).collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn items(&self) -> Vec<String> {
        self.cells.keys().map(|k| k.1.clone()).collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// Raw rubric scores of one dimension as raters × items.
    pub fn matrix(&self, dim: Dimension) -> Result<ScoreMatrix, StatsError> {
        self.build(|r, i| {
            self.cells
                .get(&(r.to_string(), i.to_string(), dim))
                .copied()
                .ok_or_else(|| StatsError::Shape(format!("missing {dim:?} score for {r}/{i}")))
        })
    }

    /// Each rater's weighted score per item, from normalized rubric scores.
    pub fn mws_matrix(&self, w: &Weights) -> Result<ScoreMatrix, StatsError> {
        self.build(|r, i| {
            let get = |d: Dimension| {
                self.cells
                    .get(&(r.to_string(), i.to_string(), d))
                    .copied()
                    .ok_or_else(|| StatsError::Shape(format!("missing {d:?} score for {r}/{i}")))
                    .and_then(normalize_rubric)
            };
            mws(get(Dimension::F)?, get(Dimension::C)?, get(Dimension::S)?, w)
        })
    }

    fn build(&self, cell: impl Fn(&str, &str) -> Result<f64, StatsError>) -> Result<ScoreMatrix, StatsError> {
        let (raters, items) = (self.raters(), self.items());
        if raters.is_empty() {
            return Err(StatsError::Domain("no ratings".into()));
        }
        let scores = raters
            .iter()
            .map(|r| items.iter().map(|i| cell(r, i)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ScoreMatrix { raters, items, scores })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub delta: f64,
    /// Population SD of per-item score differences.
    pub sd_diff: f64,
    pub kendall_tau: Option<f64>,
    pub spearman_rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterReport {
    pub weights: Weights,
    pub items: Vec<String>,
    pub raters: Vec<String>,
    pub item_mws: Vec<f64>,
    pub mws: f64,
    /// Per-item SD of rater MWS, averaged over items.
    pub sd: f64,
    pub icc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<Calibration>,
}

/// Summary of human ratings, optionally compared with a second rater
/// group (e.g. automated evaluators) over the same items.
pub fn rater_report(human: &Ratings, other: Option<&Ratings>, w: &Weights) -> Result<RaterReport, StatsError> {
    let hm = human.mws_matrix(w)?;
    let item_mws = aggregate_human(&hm)?;
    let sds = sd_per_item(&hm);
    let icc = match icc2k(&hm) {
        Ok(v) => Some(v),
        Err(StatsError::Domain(_)) | Err(StatsError::Degenerate(_)) => None,
        Err(e) => return Err(e),
    };
    let calibration = match other {
        None => None,
        Some(o) => {
            let om = o.mws_matrix(w)?;
            if om.items != hm.items {
                return Err(StatsError::Shape("rater groups scored different items".into()));
            }
            let other_mws = aggregate_human(&om)?;
            let diffs: Vec<f64> = item_mws.iter().zip(&other_mws).map(|(a, b)| a - b).collect();
            let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
            Some(Calibration {
                delta: mean_abs_delta(&item_mws, &other_mws)?,
                sd_diff: (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / diffs.len() as f64).sqrt(),
                kendall_tau: kendall_tau(&item_mws, &other_mws).ok(),
                spearman_rho: spearman_rho(&item_mws, &other_mws).ok(),
            })
        }
    };
    Ok(RaterReport {
        weights: *w,
        items: hm.items.clone(),
        raters: hm.raters.clone(),
        mws: item_mws.iter().sum::<f64>() / item_mws.len() as f64,
        sd: sds.iter().sum::<f64>() / sds.len() as f64,
        item_mws,
        icc,
        calibration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn mws_examples() {
        let w = Weights::default();
        assert_eq!(mws(1.0, 1.0, 1.0, &w).unwrap(), 1.0);
        assert_abs_diff_eq!(mws(0.9, 0.8, 1.0, &w).unwrap(), 0.88, epsilon = 1e-12);
        assert!(mws(1.2, 0.0, 0.0, &w).is_err());
        assert!(Weights::new(0.5, 0.5, 0.5).is_err());
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_rubric(1.0).unwrap(), 0.0);
        assert_eq!(normalize_rubric(3.0).unwrap(), 0.5);
        assert_eq!(normalize_rubric(5.0).unwrap(), 1.0);
        assert!(normalize_rubric(0.0).is_err());
    }

    #[test]
    fn aggregate_and_sd() {
        let m = ScoreMatrix::new(vec![vec![3.0, 5.0, 1.0], vec![4.0, 5.0, 5.0], vec![4.0, 5.0, 1.0], vec![5.0, 5.0, 5.0]])
            .unwrap();
        assert_eq!(aggregate_human(&m).unwrap(), vec![4.0, 5.0, 3.0]);
        let sd = sd_per_item(&m);
        assert_eq!(sd[1], 0.0);
        assert_eq!(sd[2], 2.0);
        let two = ScoreMatrix::new(vec![vec![3.0], vec![5.0]]).unwrap();
        assert_eq!(sd_per_item(&two), vec![1.0]);
    }

    #[test]
    fn icc_examples() {
        let perfect = ScoreMatrix::new(vec![vec![1.0, 3.0, 5.0], vec![1.0, 3.0, 5.0]]).unwrap();
        assert_abs_diff_eq!(icc2k(&perfect).unwrap(), 1.0, epsilon = 1e-12);
        let flat = ScoreMatrix::new(vec![vec![3.0; 3]; 3]).unwrap();
        assert!(matches!(icc2k(&flat), Err(StatsError::Degenerate(_))));
        // SSR = 24, SSC = 14/3, SSE = 4/3 by hand
        let m = ScoreMatrix::new(vec![vec![1.0, 3.0, 5.0], vec![2.0, 4.0, 7.0], vec![3.0, 5.0, 6.0]]).unwrap();
        let (msr, msc, mse) = mean_squares(&m);
        assert_abs_diff_eq!(msr, 12.0, epsilon = 1e-12);
        assert_abs_diff_eq!(msc, 7.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(mse, 1.0 / 3.0, epsilon = 1e-12);
        let expect = (msr - mse) / (msr + (msc - mse) / 3.0 + 2.0 * mse);
        assert_abs_diff_eq!(icc2k(&m).unwrap(), expect, epsilon = 1e-12);
    }

    #[test]
    fn delta_examples() {
        assert_eq!(mean_abs_delta(&[0.5, 0.2], &[0.5, 0.2]).unwrap(), 0.0);
        assert_abs_diff_eq!(mean_abs_delta(&[0.9, 0.8], &[0.8, 0.9]).unwrap(), 0.1, epsilon = 1e-12);
        assert!(matches!(mean_abs_delta(&[1.0], &[1.0, 2.0]), Err(StatsError::Shape(_))));
    }

    #[test]
    fn rank_examples() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(kendall_tau(&a, &a).unwrap(), 1.0);
        assert_eq!(kendall_tau(&a, &[4.0, 3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert_abs_diff_eq!(kendall_tau(&a, &[1.0, 3.0, 2.0, 4.0]).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(spearman_rho(&a, &a).unwrap(), 1.0);
        assert_eq!(spearman_rho(&a, &[4.0, 3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert_abs_diff_eq!(spearman_rho(&a, &[2.0, 1.0, 3.0, 4.0]).unwrap(), 0.8, epsilon = 1e-15);
        assert!(kendall_tau(&[1.0], &[1.0]).is_err());
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn csv_ratings() {
        let text = "rater,item,dimension,score\n\
                    h1,squat,F,5\nh1,squat,C,5\nh1,squat,S,5\n\
                    h2,squat,F,3\nh2,squat,C,3\nh2,squat,S,3\n";
        let r = Ratings::from_csv(text.as_bytes()).unwrap();
        let rep = rater_report(&r, Some(&r), &Weights::default()).unwrap();
        assert_eq!(rep.item_mws, vec![0.75]);
        assert_eq!(rep.sd, 0.25);
        assert_eq!(rep.icc, None);
        assert_eq!(rep.calibration.unwrap().delta, 0.0);
        let bad = "rater,item,dimension,score\nh1,squat,F,9\n";
        assert!(matches!(Ratings::from_csv(bad.as_bytes()), Err(StatsError::Parse(m)) if m.contains("line 2")));
        let missing = "rater,item,dimension,score\nh1,squat,F,4\n";
        assert!(matches!(
            Ratings::from_csv(missing.as_bytes()).unwrap().mws_matrix(&Weights::default()),
            Err(StatsError::Shape(_))
        ));
    }

    fn vecs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..12).prop_flat_map(|n| {
            (
                prop::collection::vec(1u8..6, n).prop_map(|v| v.into_iter().map(f64::from).collect()),
                prop::collection::vec(1u8..6, n).prop_map(|v| v.into_iter().map(f64::from).collect()),
            )
        })
    }

    proptest! {
        #[test]
        fn mws_bounded_and_linear(f in 0.0..1.0f64, c in 0.0..1.0f64, s in 0.0..1.0f64, g in 0.0..1.0f64) {
            let w = Weights::default();
            let v = mws(f, c, s, &w).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
            let lhs = mws((f + g) / 2.0, c, s, &w).unwrap();
            let rhs = (v + mws(g, c, s, &w).unwrap()) / 2.0;
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }

        #[test]
        fn rank_stats_bounded_with_ties((a, b) in vecs()) {
            let t = kendall_tau(&a, &b).unwrap();
            let r = spearman_rho(&a, &b).unwrap();
            prop_assert!((-1.0..=1.0).contains(&t));
            prop_assert!((-1.0..=1.0).contains(&r));
            prop_assert!(mean_abs_delta(&a, &b).unwrap() >= 0.0);
        }

        #[test]
        fn rank_stats_monotone_invariant((a, b) in vecs()) {
            let g: Vec<f64> = a.iter().map(|x| x.powi(3) + 2.0 * x).collect();
            prop_assert_eq!(kendall_tau(&a, &b).unwrap(), kendall_tau(&g, &b).unwrap());
            prop_assert_eq!(spearman_rho(&a, &b).unwrap(), spearman_rho(&g, &b).unwrap());
        }

        #[test]
        fn sd_non_negative(rows in prop::collection::vec(prop::collection::vec(1.0..5.0f64, 4), 1..5)) {
            let m = ScoreMatrix::new(rows).unwrap();
            prop_assert!(sd_per_item(&m).iter().all(|v| *v >= 0.0));
        }
    }
}
