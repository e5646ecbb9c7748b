//! Shared fixtures and brute-force oracles for the integration suites. The
//! oracles recompute everything from raw rows and never call the library's
//! estimators.

#![allow(dead_code)]

use hretan_core::estimation::ScoredEdgeList;
use hretan_core::{Dataset, FeatureDag, Instance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Published per-dataset results, one row per (organism, GO combination):
/// HRE-TAN sens, spec, GMean, then TAN sens, spec, GMean.
pub const PUBLISHED: [[f64; 6]; 28] = [
    // C. elegans: BP, MF, CC, BP+MF, BP+CC, MF+CC, BP+MF+CC
    [41.1, 76.8, 56.2, 34.0, 79.6, 52.0],
    [23.1, 75.3, 41.7, 37.2, 61.4, 47.8],
    [24.5, 80.8, 44.5, 39.8, 78.2, 55.8],
    [42.3, 80.0, 58.2, 35.2, 80.3, 53.2],
    [44.6, 74.4, 57.6, 42.7, 81.7, 59.1],
    [32.4, 79.8, 50.8, 40.6, 74.4, 55.0],
    [44.2, 79.3, 59.2, 39.5, 80.1, 56.2],
    // D. melanogaster
    [86.8, 30.6, 51.5, 92.3, 19.4, 42.3],
    [86.8, 41.2, 59.8, 91.2, 20.6, 43.3],
    [75.8, 28.6, 46.6, 90.3, 32.1, 53.8],
    [87.0, 31.6, 52.4, 92.4, 23.7, 46.8],
    [84.6, 32.4, 52.4, 86.8, 18.9, 40.5],
    [87.1, 39.5, 58.7, 90.6, 31.6, 53.5],
    [82.6, 47.4, 62.6, 92.4, 18.4, 41.2],
    // M. musculus
    [86.8, 47.1, 63.9, 89.7, 41.2, 60.8],
    [83.1, 42.4, 59.4, 89.2, 33.3, 54.5],
    [86.4, 41.2, 59.7, 75.8, 41.2, 55.9],
    [83.8, 41.2, 58.8, 86.8, 35.3, 55.4],
    [79.4, 47.1, 61.2, 88.2, 47.1, 64.5],
    [89.7, 35.3, 56.3, 88.2, 41.2, 60.3],
    [85.3, 44.1, 61.3, 91.2, 41.2, 61.3],
    // S. cerevisiae
    [20.0, 93.5, 43.2, 3.3, 98.9, 18.1],
    [0.0, 96.9, 0.0, 0.0, 97.7, 0.0],
    [12.5, 93.5, 34.2, 16.7, 95.9, 40.0],
    [26.7, 95.8, 50.6, 3.3, 99.0, 18.1],
    [26.7, 94.1, 50.1, 10.0, 99.0, 31.5],
    [10.3, 95.4, 31.3, 5.0, 98.5, 22.2],
    [23.3, 96.2, 47.3, 0.0, 99.0, 0.0],
];

/// Degree of class imbalance per dataset, same order as [`PUBLISHED`].
pub const IMBALANCE: [f64; 28] = [
    0.345, 0.234, 0.372, 0.374, 0.381, 0.351, 0.398, 0.604, 0.500, 0.548, 0.587, 0.593, 0.553,
    0.587, 0.500, 0.492, 0.485, 0.500, 0.500, 0.500, 0.500, 0.838, 0.802, 0.805, 0.844, 0.853,
    0.853, 0.856,
];

pub const DATASET_NAMES: [&str; 28] = [
    "CE-BP",
    "CE-MF",
    "CE-CC",
    "CE-BP+MF",
    "CE-BP+CC",
    "CE-MF+CC",
    "CE-BP+MF+CC",
    "DM-BP",
    "DM-MF",
    "DM-CC",
    "DM-BP+MF",
    "DM-BP+CC",
    "DM-MF+CC",
    "DM-BP+MF+CC",
    "MM-BP",
    "MM-MF",
    "MM-CC",
    "MM-BP+MF",
    "MM-BP+CC",
    "MM-MF+CC",
    "MM-BP+MF+CC",
    "SC-BP",
    "SC-MF",
    "SC-CC",
    "SC-BP+MF",
    "SC-BP+CC",
    "SC-MF+CC",
    "SC-BP+MF+CC",
];

pub fn gmeans_hretan() -> Vec<f64> {
    PUBLISHED.iter().map(|r| r[2]).collect()
}

pub fn gmeans_tan() -> Vec<f64> {
    PUBLISHED.iter().map(|r| r[5]).collect()
}

/// Stub-mode input for `compare --stub-gmeans`.
pub fn stub_tsv() -> String {
    let mut s = String::from("dataset\tD\tgmean_tan\tgmean_hretan\n");
    for (k, row) in PUBLISHED.iter().enumerate() {
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            DATASET_NAMES[k], IMBALANCE[k], row[5], row[2]
        ));
    }
    s
}

// Six-node example hierarchy: root-to-leaf paths F -> C -> B, F -> A -> D, E -> D.
pub const EXAMPLE_NAMES: [&str; 6] = ["F", "C", "B", "A", "D", "E"];
pub const F: usize = 0;
pub const C: usize = 1;
pub const B: usize = 2;
pub const A: usize = 3;
pub const D: usize = 4;
pub const E: usize = 5;

pub fn example_dag() -> FeatureDag {
    FeatureDag::build(
        &EXAMPLE_NAMES,
        &[("C", "F"), ("B", "C"), ("A", "F"), ("D", "A"), ("D", "E")],
    )
    .unwrap()
}

/// F=1, C=1, B=0, A=0, D=0, E=1
pub fn example_instance() -> Instance {
    Instance::new(vec![1, 1, 0, 0, 0, 1]).unwrap()
}

/// E(F,A) heads the list, the ten C/D edges fill ranks 2-11 (their relative
/// order is not printed, this one is fixed here), then F-B, B-E, B-A, F-E, E-A.
pub fn example_ranking() -> ScoredEdgeList {
    ScoredEdgeList::from_ranking(
        6,
        &[
            (F, A),
            (C, E),
            (C, D),
            (F, C),
            (B, C),
            (C, A),
            (E, D),
            (B, D),
            (A, D),
            (F, D),
            (F, B),
            (B, E),
            (B, A),
            (F, E),
            (E, A),
        ],
    )
    .unwrap()
}

pub fn binary_dataset(rows: Vec<Vec<u8>>, labels: Vec<usize>) -> Dataset {
    let nf = rows[0].len();
    Dataset::new(
        (0..nf).map(|f| format!("x{f}")).collect(),
        "class".into(),
        vec!["neg".into(), "pos".into()],
        rows,
        labels,
    )
    .unwrap()
}

pub fn random_dataset(rng: &mut ChaCha8Rng, n_rows: usize, n_features: usize) -> Dataset {
    let rows = (0..n_rows)
        .map(|_| (0..n_features).map(|_| rng.random_range(0..2u8)).collect())
        .collect();
    let labels = (0..n_rows).map(|_| rng.random_range(0..2usize)).collect();
    binary_dataset(rows, labels)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// I(Xi; Xj | C) by looping over every (vi, vj, c) cell with probabilities
/// recounted from the rows.
pub fn cmi_bruteforce(d: &Dataset, i: usize, j: usize) -> f64 {
    let n = d.n_instances() as f64;
    let count =
        |pred: &dyn Fn(usize) -> bool| (0..d.n_instances()).filter(|&r| pred(r)).count() as f64;
    let mut total = 0.0;
    for vi in 0..2u8 {
        for vj in 0..2u8 {
            for c in 0..d.n_classes() {
                let label = |r: usize| d.labels()[r] == c;
                let p_joint =
                    count(&|r| label(r) && d.value(r, i) == vi && d.value(r, j) == vj) / n;
                if p_joint == 0.0 {
                    continue;
                }
                let p_c = count(&|r| label(r)) / n;
                let p_i = count(&|r| label(r) && d.value(r, i) == vi) / n;
                let p_j = count(&|r| label(r) && d.value(r, j) == vj) / n;
                // P(vi,vj|c) / (P(vi|c) P(vj|c)) = P(vi,vj,c) P(c) / (P(vi,c) P(vj,c))
                total += p_joint * (p_joint * p_c / (p_i * p_j)).ln();
            }
        }
    }
    total.max(0.0)
}

/// Every labeled spanning tree on `n` vertices, decoded from Prüfer sequences.
pub fn all_spanning_trees(n: usize) -> Vec<Vec<(usize, usize)>> {
    if n == 1 {
        return vec![vec![]];
    }
    if n == 2 {
        return vec![vec![(0, 1)]];
    }
    let len = n - 2;
    let total = n.pow(len as u32);
    let mut out = Vec::with_capacity(total);
    for code in 0..total {
        let mut seq = Vec::with_capacity(len);
        let mut c = code;
        for _ in 0..len {
            seq.push(c % n);
            c /= n;
        }
        let mut degree = vec![1usize; n];
        for &s in &seq {
            degree[s] += 1;
        }
        let mut edges = Vec::with_capacity(n - 1);
        for &s in &seq {
            let leaf = (0..n).find(|&v| degree[v] == 1).unwrap();
            edges.push((leaf.min(s), leaf.max(s)));
            degree[leaf] -= 1;
            degree[s] -= 1;
        }
        let rest: Vec<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
        edges.push((rest[0], rest[1]));
        out.push(edges);
    }
    out
}

/// Posterior of the TAN factorization for `inst` over a tree given as
/// `(child, parent)` links, with every probability recounted from `train`
/// and add-`alpha` smoothing, evaluated by direct products.
pub fn tan_posterior_bruteforce(
    train: &Dataset,
    root: usize,
    links: &[(usize, usize)],
    inst: &[u8],
    alpha: f64,
) -> Vec<f64> {
    let k = train.n_classes();
    let rows = 0..train.n_instances();
    let mut joint = vec![0.0; k];
    for (c, slot) in joint.iter_mut().enumerate() {
        let in_class: Vec<usize> = rows.clone().filter(|&r| train.labels()[r] == c).collect();
        let mut p =
            (in_class.len() as f64 + alpha) / (train.n_instances() as f64 + alpha * k as f64);
        let cond = |num: usize, den: usize| {
            let d = den as f64 + 2.0 * alpha;
            if d == 0.0 {
                0.5
            } else {
                (num as f64 + alpha) / d
            }
        };
        let num = in_class
            .iter()
            .filter(|&&r| train.value(r, root) == inst[root])
            .count();
        p *= cond(num, in_class.len());
        for &(child, parent) in links {
            let given: Vec<usize> = in_class
                .iter()
                .copied()
                .filter(|&r| train.value(r, parent) == inst[parent])
                .collect();
            let num = given
                .iter()
                .filter(|&&r| train.value(r, child) == inst[child])
                .count();
            p *= cond(num, given.len());
        }
        *slot = p;
    }
    let z: f64 = joint.iter().sum();
    joint.iter().map(|p| p / z).collect()
}

/// Two-tailed signed-rank p-value by enumerating all 2^n sign assignments of
/// the given ranks.
pub fn signed_rank_p_enumerated(ranks: &[f64], w_plus: f64) -> f64 {
    let n = ranks.len();
    let (mut le, mut ge) = (0u64, 0u64);
    for mask in 0u64..(1 << n) {
        let w: f64 = (0..n)
            .filter(|&k| mask >> k & 1 == 1)
            .map(|k| ranks[k])
            .sum();
        if w <= w_plus + 1e-9 {
            le += 1;
        }
        if w >= w_plus - 1e-9 {
            ge += 1;
        }
    }
    (2.0 * le.min(ge) as f64 / (1u64 << n) as f64).min(1.0)
}
