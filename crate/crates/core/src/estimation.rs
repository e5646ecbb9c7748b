//! Discrete probability estimates: class priors, conditional probability
//! tables, and class-conditional mutual information between feature pairs.

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::tan::DirectedTree;

const CLAMP_EPS: f64 = 1e-12;

/// P(c) = (count(c) + smoothing) / (N + smoothing * |C|).
pub fn class_prior(train: &Dataset, smoothing: f64) -> Result<Vec<f64>> {
    check_smoothing(smoothing)?;
    Ok(prior_from_counts(&train.class_counts(), smoothing))
}

fn prior_from_counts(counts: &[usize], smoothing: f64) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    let denom = total as f64 + smoothing * counts.len() as f64;
    if denom == 0.0 {
        return vec![1.0 / counts.len() as f64; counts.len()];
    }
    counts
        .iter()
        .map(|&c| (c as f64 + smoothing) / denom)
        .collect()
}

fn check_smoothing(smoothing: f64) -> Result<()> {
    if smoothing.is_finite() && smoothing >= 0.0 {
        Ok(())
    } else {
        Err(Error::Argument(format!(
            "smoothing {smoothing} must be finite and >= 0"
        )))
    }
}

/// Joint counts n(x_lo = a, x_hi = b, c), indexed `[c][a][b]`.
type PairTable = Vec<[[u64; 2]; 2]>;

/// I(X_i; X_j | C) in nats from maximum-likelihood frequencies. Cells with a
/// zero joint count contribute nothing.
pub fn conditional_mutual_information(train: &Dataset, i: usize, j: usize) -> Result<f64> {
    let n = train.n_features();
    if i >= n || j >= n {
        return Err(Error::Index(format!(
            "feature pair ({i}, {j}) out of range for {n} features"
        )));
    }
    if i == j {
        return Err(Error::Index(format!(
            "feature pair ({i}, {j}) is not a pair"
        )));
    }
    let (lo, hi) = (i.min(j), i.max(j));
    let mut table: PairTable = vec![[[0; 2]; 2]; train.n_classes()];
    for (r, &c) in train.labels().iter().enumerate() {
        table[c][train.value(r, lo) as usize][train.value(r, hi) as usize] += 1;
    }
    Ok(cmi_from_table(&table, train.n_instances()))
}

fn cmi_from_table(table: &PairTable, n_rows: usize) -> f64 {
    let n = n_rows as f64;
    let mut total = 0.0;
    for cell in table {
        let n_c = (cell[0][0] + cell[0][1] + cell[1][0] + cell[1][1]) as f64;
        let lo_marg = [cell[0][0] + cell[0][1], cell[1][0] + cell[1][1]];
        let hi_marg = [cell[0][0] + cell[1][0], cell[0][1] + cell[1][1]];
        for a in 0..2 {
            for b in 0..2 {
                let joint = cell[a][b];
                if joint == 0 {
                    continue;
                }
                let joint = joint as f64;
                let ratio = (joint * n_c) / (lo_marg[a] as f64 * hi_marg[b] as f64);
                total += joint / n * ratio.ln();
            }
        }
    }
    if total < 0.0 && total > -CLAMP_EPS {
        0.0
    } else {
        total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoredEdge {
    pub i: usize,
    pub j: usize,
    pub cmi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeStatus {
    Available,
    Unavailable,
}

/// Every unordered feature pair, sorted by descending weight with ties broken
/// by ascending `(i, j)`, plus per-node incidence lists.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredEdgeList {
    n_features: usize,
    edges: Vec<ScoredEdge>,
    status: Vec<EdgeStatus>,
    incidence: Vec<Vec<usize>>,
}

impl ScoredEdgeList {
    /// Validates that `edges` covers each unordered pair over `n_features`
    /// exactly once, then sorts.
    pub fn new(n_features: usize, mut edges: Vec<ScoredEdge>) -> Result<Self> {
        let expected = n_features * n_features.saturating_sub(1) / 2;
        if edges.len() != expected {
            return Err(Error::Argument(format!(
                "{} edges given, {expected} pairs needed for {n_features} features",
                edges.len()
            )));
        }
        let mut seen = vec![false; n_features * n_features];
        for e in &mut edges {
            if e.i == e.j || e.i >= n_features || e.j >= n_features {
                return Err(Error::Index(format!("invalid edge ({}, {})", e.i, e.j)));
            }
            if e.i > e.j {
                std::mem::swap(&mut e.i, &mut e.j);
            }
            if !e.cmi.is_finite() {
                return Err(Error::Argument(format!(
                    "non-finite weight on ({}, {})",
                    e.i, e.j
                )));
            }
            if std::mem::replace(&mut seen[e.i * n_features + e.j], true) {
                return Err(Error::Argument(format!(
                    "edge ({}, {}) listed twice",
                    e.i, e.j
                )));
            }
        }
        edges.sort_by(|a, b| {
            b.cmi
                .total_cmp(&a.cmi)
                .then_with(|| (a.i, a.j).cmp(&(b.i, b.j)))
        });
        let mut incidence = vec![Vec::with_capacity(n_features.saturating_sub(1)); n_features];
        for (k, e) in edges.iter().enumerate() {
            incidence[e.i].push(k);
            incidence[e.j].push(k);
        }
        Ok(Self {
            n_features,
            status: vec![EdgeStatus::Available; edges.len()],
            edges,
            incidence,
        })
    }

    /// Builds a list whose order is exactly `ranking` (first = heaviest) by
    /// assigning strictly decreasing weights.
    pub fn from_ranking(n_features: usize, ranking: &[(usize, usize)]) -> Result<Self> {
        let m = ranking.len();
        let edges = ranking
            .iter()
            .enumerate()
            .map(|(rank, &(i, j))| ScoredEdge {
                i,
                j,
                cmi: (m - rank) as f64,
            })
            .collect();
        Self::new(n_features, edges)
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn edges(&self) -> &[ScoredEdge] {
        &self.edges
    }

    pub fn status(&self) -> &[EdgeStatus] {
        &self.status
    }

    /// Positions in [`Self::edges`] of every edge touching `node`.
    pub fn incident(&self, node: usize) -> &[usize] {
        &self.incidence[node]
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

/// Scores all feature pairs by conditional mutual information given the class.
pub fn score_all_edges(train: &Dataset) -> Result<ScoredEdgeList> {
    let n = train.n_features();
    if n < 2 {
        return Err(Error::Argument(
            "edge scoring needs at least two features".into(),
        ));
    }
    let words = train.n_instances().div_ceil(64);
    let n_classes = train.n_classes();

    // columns[c][f] = bitset over rows of class c where feature f is 1
    let mut columns = vec![vec![vec![0u64; words]; n]; n_classes];
    let mut class_size = vec![0u64; n_classes];
    for (r, &c) in train.labels().iter().enumerate() {
        class_size[c] += 1;
        let row = train.row(r);
        for f in 0..n {
            if row[f] == 1 {
                columns[c][f][r / 64] |= 1 << (r % 64);
            }
        }
    }
    let ones: Vec<Vec<u64>> = columns
        .iter()
        .map(|cols| cols.iter().map(|b| popcount(b)).collect())
        .collect();

    let edges: Vec<ScoredEdge> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let columns = &columns;
            let ones = &ones;
            let class_size = &class_size;
            (i + 1..n).map(move |j| {
                let table: PairTable = (0..n_classes)
                    .map(|c| {
                        let both = and_popcount(&columns[c][i], &columns[c][j]);
                        let (oi, oj) = (ones[c][i], ones[c][j]);
                        [
                            [class_size[c] + both - oi - oj, oj - both],
                            [oi - both, both],
                        ]
                    })
                    .collect();
                ScoredEdge {
                    i,
                    j,
                    cmi: cmi_from_table(&table, train.n_instances()),
                }
            })
        })
        .collect();
    ScoredEdgeList::new(n, edges)
}

fn popcount(bits: &[u64]) -> u64 {
    bits.iter().map(|w| u64::from(w.count_ones())).sum()
}

fn and_popcount(a: &[u64], b: &[u64]) -> u64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| u64::from((x & y).count_ones()))
        .sum()
}

/// Conditional table for one tree node. `probs` is laid out `[c][u][v]`
/// where `u` is the parent's value (a single slot for the root).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeCpt {
    pub feature: usize,
    pub parent: Option<usize>,
    probs: Vec<f64>,
}

impl NodeCpt {
    /// P(x = v | parent = u, c). `u` is ignored for the root.
    #[inline]
    pub fn prob(&self, class: usize, parent_value: u8, value: u8) -> f64 {
        let slots = if self.parent.is_some() { 2 } else { 1 };
        let u = if self.parent.is_some() {
            parent_value as usize
        } else {
            0
        };
        self.probs[(class * slots + u) * 2 + value as usize]
    }

    pub fn table(&self) -> &[f64] {
        &self.probs
    }
}

/// Class prior plus one conditional table per tree feature, in the order of
/// the tree's feature list.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cpt {
    pub prior: Vec<f64>,
    pub nodes: Vec<NodeCpt>,
}

impl Cpt {
    pub fn n_classes(&self) -> usize {
        self.prior.len()
    }
}

/// Estimates P(c), P(root | c), and P(x | parent(x), c) for every other tree
/// feature with add-`smoothing` pseudo-counts per conditional distribution.
/// A conditioning cell with no mass at all gets a uniform distribution.
pub fn estimate_cpts(train: &Dataset, tree: &DirectedTree, smoothing: f64) -> Result<Cpt> {
    check_smoothing(smoothing)?;
    let n = train.n_features();
    if let Some(&bad) = tree.features().iter().find(|&&f| f >= n) {
        return Err(Error::Structure(format!(
            "tree feature {bad} not among {n} training features"
        )));
    }
    let n_classes = train.n_classes();
    let nodes = tree
        .features()
        .iter()
        .map(|&feature| {
            let parent = tree.parent_of(feature);
            let slots = if parent.is_some() { 2 } else { 1 };
            let mut counts = vec![0u64; n_classes * slots * 2];
            for (r, &c) in train.labels().iter().enumerate() {
                let u = parent.map_or(0, |p| train.value(r, p) as usize);
                counts[(c * slots + u) * 2 + train.value(r, feature) as usize] += 1;
            }
            let probs = counts
                .chunks(2)
                .flat_map(|pair| {
                    let denom = (pair[0] + pair[1]) as f64 + 2.0 * smoothing;
                    if denom == 0.0 {
                        [0.5, 0.5]
                    } else {
                        [
                            (pair[0] as f64 + smoothing) / denom,
                            (pair[1] as f64 + smoothing) / denom,
                        ]
                    }
                })
                .collect();
            NodeCpt {
                feature,
                parent,
                probs,
            }
        })
        .collect();
    Ok(Cpt {
        prior: prior_from_counts(&train.class_counts(), smoothing),
        nodes,
    })
}
