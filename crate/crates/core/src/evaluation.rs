//! Cross-validation and the comparison statistics: sensitivity, specificity,
//! GMean, degree of class imbalance, Pearson correlation, least-squares lines
//! and the two-tailed Wilcoxon signed-rank test.
//!
//! Metrics are on the percent scale (0-100). Class index 1 is positive.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataset::{stratified_kfold, Dataset};
use crate::error::{Error, Result};
use crate::hierarchy::FeatureDag;
use crate::hretan::evaluate_hre_tan;
use crate::tan::{evaluate_tan, RootPolicy};

/// Largest remaining-pair count for which the exact null distribution is used.
pub const EXACT_WILCOXON_MAX: usize = 25;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub fp: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fn_ + self.tn + self.fp
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
            fp: self.fp + o.fp,
        }
    }
}

pub fn confusion(predictions: &[usize], labels: &[usize]) -> Result<ConfusionCounts> {
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch(predictions.len(), labels.len()));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &l) in predictions.iter().zip(labels) {
        match (l, p) {
            (1, 1) => c.tp += 1,
            (1, 0) => c.fn_ += 1,
            (0, 0) => c.tn += 1,
            (0, 1) => c.fp += 1,
            _ => return Err(Error::Argument(format!("non-binary class pair ({l}, {p})"))),
        }
    }
    Ok(c)
}

/// `None` marks a metric whose class had no test instances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub gmean: Option<f64>,
}

pub fn gmean(sensitivity: f64, specificity: f64) -> f64 {
    (sensitivity * specificity).sqrt()
}

pub fn metrics(c: &ConfusionCounts) -> Metrics {
    let rate = |hit: usize, miss: usize| {
        (hit + miss > 0).then(|| 100.0 * hit as f64 / (hit + miss) as f64)
    };
    let sensitivity = rate(c.tp, c.fn_);
    let specificity = rate(c.tn, c.fp);
    Metrics {
        sensitivity,
        specificity,
        gmean: sensitivity.zip(specificity).map(|(a, b)| gmean(a, b)),
    }
}

/// D = 1 - #minority / #majority.
pub fn degree_of_imbalance(labels: &[usize]) -> Result<f64> {
    let mut counts = [0usize; 2];
    for &l in labels {
        match counts.get_mut(l) {
            Some(c) => *c += 1,
            None => return Err(Error::Argument(format!("label {l} is not binary"))),
        }
    }
    if counts.contains(&0) {
        return Err(Error::Argument("one class is absent".into()));
    }
    let (minor, major) = (counts[0].min(counts[1]), counts[0].max(counts[1]));
    Ok(1.0 - minor as f64 / major as f64)
}

fn check_pairs(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(Error::Degenerate("need at least two points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    Ok((n, mx, my))
}

/// Sample Pearson correlation.
pub fn pearson_r(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let (_, mx, my) = check_pairs(xs, ys)?;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
}

impl LinearFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

/// Ordinary least squares y = slope * x + intercept.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    let (_, mx, my) = check_pairs(xs, ys)?;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    if sxx == 0.0 {
        return Err(Error::Degenerate("constant x values".into()));
    }
    let slope = sxy / sxx;
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WilcoxonResult {
    /// min(W+, W-)
    pub statistic: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    pub p_value: f64,
    /// Pairs left after discarding zero differences.
    pub n_used: usize,
    pub exact: bool,
    /// Pairs where the first sample is larger / equal / smaller.
    pub wins: usize,
    pub ties: usize,
    pub losses: usize,
}

/// Average ranks (1-based) of `values`; values within a relative 1e-9 of each
/// other count as tied so that differences of decimal data tie as intended.
/// Returns the ranks and the sizes of tie groups.
fn average_ranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut groups = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() {
            let (prev, cur) = (values[order[end - 1]], values[order[end]]);
            if cur - prev > 1e-9 * cur.abs().max(1.0) {
                break;
            }
            end += 1;
        }
        // ranks start+1 ..= end share their mean
        let avg = (start + 1 + end) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = avg;
        }
        groups.push(end - start);
        start = end;
    }
    (ranks, groups)
}

/// Two-tailed signed-rank test of `a` against `b`. Zero differences are
/// discarded, tied magnitudes get average ranks. Up to
/// [`EXACT_WILCOXON_MAX`] remaining pairs the exact null distribution of W+
/// (under the observed ranks) is enumerated; above that a normal
/// approximation with tie-corrected variance and continuity correction is used.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let wins = diffs.iter().filter(|&&d| d > 0.0).count();
    let losses = diffs.iter().filter(|&&d| d < 0.0).count();
    let ties = diffs.len() - wins - losses;

    let nonzero: Vec<f64> = diffs.into_iter().filter(|&d| d != 0.0).collect();
    let n = nonzero.len();
    if n < 5 {
        return Err(Error::TooFewPairs(n));
    }
    let magnitudes: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let (ranks, groups) = average_ranks(&magnitudes);
    let w_plus: f64 = nonzero
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w_minus = total - w_plus;

    let (p_value, exact) = if n <= EXACT_WILCOXON_MAX {
        (exact_two_tailed(&ranks, w_plus), true)
    } else {
        let mean = total / 2.0;
        let tie_term: f64 = groups
            .iter()
            .map(|&t| {
                let t = t as f64;
                t * t * t - t
            })
            .sum::<f64>();
        let nf = n as f64;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        ((2.0 * normal.sf(z)).min(1.0), false)
    };

    Ok(WilcoxonResult {
        statistic: w_plus.min(w_minus),
        w_plus,
        w_minus,
        p_value,
        n_used: n,
        exact,
        wins,
        ties,
        losses,
    })
}

/// Exact two-tailed p-value for W+ by dynamic programming over doubled ranks
/// (average ranks are multiples of one half).
fn exact_two_tailed(ranks: &[f64], w_plus: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let max_sum: usize = doubled.iter().sum();
    let mut ways = vec![0u64; max_sum + 1];
    ways[0] = 1;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if ways[s] > 0 {
                ways[s + r] += ways[s];
            }
        }
        reach += r;
    }
    let observed = (2.0 * w_plus).round() as usize;
    let all = 2f64.powi(ranks.len() as i32);
    let lower: u64 = ways[..=observed].iter().sum();
    let upper: u64 = ways[observed..].iter().sum();
    (2.0 * lower.min(upper) as f64 / all).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Tan,
    HreTan,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tan" => Ok(Method::Tan),
            "hre-tan" => Ok(Method::HreTan),
            other => Err(Error::Argument(format!("unknown classifier `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvConfig {
    pub folds: usize,
    pub seed: u64,
    pub smoothing: f64,
    pub root: RootPolicy,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 10,
            seed: 0,
            smoothing: 1.0,
            root: RootPolicy::Random(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub n_instances: usize,
    pub folds: usize,
    pub seed: u64,
    pub fold_counts: Vec<ConfusionCounts>,
    pub pooled: ConfusionCounts,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub gmean: Option<f64>,
    pub se_sensitivity: Option<f64>,
    pub se_specificity: Option<f64>,
    pub degree_of_imbalance: Option<f64>,
    /// Predicted class per dataset row.
    #[serde(skip)]
    pub predictions: Vec<usize>,
}

fn standard_error(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    Some((var / m).sqrt())
}

/// Stratified k-fold evaluation of one classifier. Sensitivity, specificity
/// and GMean come from confusion counts pooled over folds; standard errors
/// from the per-fold values.
pub fn cross_validate(
    data: &Dataset,
    dag: &FeatureDag,
    method: Method,
    config: &CvConfig,
) -> Result<EvalReport> {
    if data.n_classes() != 2 {
        return Err(Error::Argument(format!(
            "binary class needed, found {} classes",
            data.n_classes()
        )));
    }
    if dag.n_features() != data.n_features() {
        return Err(Error::Dimension {
            expected: data.n_features(),
            actual: dag.n_features(),
        });
    }
    let split = stratified_kfold(data, config.folds, config.seed)?;
    let fold_results: Vec<(Vec<usize>, Vec<usize>)> = (0..config.folds)
        .into_par_iter()
        .map(|fold| {
            let test_rows = split.test_rows(fold);
            let train = data.subset(&split.train_rows(fold))?;
            let test: Vec<_> = test_rows.iter().map(|&r| data.instance(r)).collect();
            let predicted = match method {
                Method::Tan => evaluate_tan(&train, &test, config.root, config.smoothing)?
                    .into_iter()
                    .map(|p| p.label)
                    .collect(),
                Method::HreTan => {
                    evaluate_hre_tan(&train, &test, dag, config.root, config.smoothing)?
                        .into_iter()
                        .map(|p| p.result.label)
                        .collect()
                }
            };
            Ok((test_rows, predicted))
        })
        .collect::<Result<_>>()?;

    let mut predictions = vec![0; data.n_instances()];
    let mut fold_counts = Vec::with_capacity(config.folds);
    let (mut sens, mut spec) = (Vec::new(), Vec::new());
    for (rows, predicted) in &fold_results {
        let labels: Vec<usize> = rows.iter().map(|&r| data.labels()[r]).collect();
        let counts = confusion(predicted, &labels)?;
        let m = metrics(&counts);
        sens.extend(m.sensitivity);
        spec.extend(m.specificity);
        fold_counts.push(counts);
        for (&r, &p) in rows.iter().zip(predicted) {
            predictions[r] = p;
        }
    }
    let pooled = fold_counts
        .iter()
        .fold(ConfusionCounts::default(), |acc, &c| acc + c);
    let m = metrics(&pooled);
    Ok(EvalReport {
        n_instances: data.n_instances(),
        folds: config.folds,
        seed: config.seed,
        fold_counts,
        pooled,
        sensitivity: m.sensitivity,
        specificity: m.specificity,
        gmean: m.gmean,
        se_sensitivity: standard_error(&sens),
        se_specificity: standard_error(&spec),
        degree_of_imbalance: degree_of_imbalance(data.labels()).ok(),
        predictions,
    })
}

/// One dataset's GMeans for the two classifiers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetComparison {
    pub name: String,
    pub degree_of_imbalance: f64,
    pub gmean_hretan: f64,
    pub gmean_tan: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodTrend {
    pub pearson_r: Option<f64>,
    pub fit: Option<LinearFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailedDataset {
    pub name: String,
    pub error: String,
}

/// Head-to-head HRE-TAN vs TAN summary; wins/ties/losses count HRE-TAN.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub datasets: Vec<DatasetComparison>,
    pub wins: usize,
    pub ties: usize,
    pub losses: usize,
    pub wilcoxon: Option<WilcoxonResult>,
    pub hretan: MethodTrend,
    pub tan: MethodTrend,
    pub failed: Vec<FailedDataset>,
}

fn trend(xs: &[f64], ys: &[f64]) -> MethodTrend {
    MethodTrend {
        pearson_r: pearson_r(xs, ys).ok(),
        fit: linear_fit(xs, ys).ok(),
    }
}

pub fn compare(datasets: Vec<DatasetComparison>, failed: Vec<FailedDataset>) -> ComparisonReport {
    let hre: Vec<f64> = datasets.iter().map(|d| d.gmean_hretan).collect();
    let tan: Vec<f64> = datasets.iter().map(|d| d.gmean_tan).collect();
    let d: Vec<f64> = datasets.iter().map(|d| d.degree_of_imbalance).collect();
    let wins = hre.iter().zip(&tan).filter(|(a, b)| a > b).count();
    let losses = hre.iter().zip(&tan).filter(|(a, b)| a < b).count();
    ComparisonReport {
        wins,
        ties: datasets.len() - wins - losses,
        losses,
        wilcoxon: wilcoxon_signed_rank(&hre, &tan).ok(),
        hretan: trend(&d, &hre),
        tan: trend(&d, &tan),
        datasets,
        failed,
    }
}

impl ComparisonReport {
    /// `dataset,D,gmean_tan,gmean_hretan` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dataset,D,gmean_tan,gmean_hretan\n");
        for d in &self.datasets {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                d.name, d.degree_of_imbalance, d.gmean_tan, d.gmean_hretan
            );
        }
        out
    }

    /// `method<TAB>x<TAB>y<TAB>fitted_y` rows, x = D and y = GMean.
    pub fn to_plot_tsv(&self) -> String {
        let mut out = String::from("method\tx\ty\tfitted_y\n");
        for (method, trend, pick) in [
            (
                "tan",
                &self.tan,
                (|d: &DatasetComparison| d.gmean_tan) as fn(&DatasetComparison) -> f64,
            ),
            ("hre-tan", &self.hretan, |d: &DatasetComparison| {
                d.gmean_hretan
            }),
        ] {
            for d in &self.datasets {
                let x = d.degree_of_imbalance;
                let fitted = trend
                    .fit
                    .map_or_else(String::new, |f| f.predict(x).to_string());
                let _ = writeln!(out, "{method}\t{x}\t{}\t{fitted}", pick(d));
            }
        }
        out
    }
}
