//! Conventional Tree Augmented Naive Bayes: Kruskal maximum-weight spanning
//! tree over scored feature pairs, a seeded random root, and CPT inference.

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{Dataset, Instance};
use crate::error::{Error, Result};
use crate::estimation::{estimate_cpts, score_all_edges, Cpt, ScoredEdgeList};

/// Disjoint sets with path compression and union by rank.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            cur = std::mem::replace(&mut self.parent[cur], root);
        }
        root
    }

    /// Merges the sets of `a` and `b`; false if they were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

/// Undirected tree: sorted vertex set and edges in insertion order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UndirectedTree {
    pub vertices: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
}

impl UndirectedTree {
    /// Edges as `(min, max)` pairs, sorted.
    pub fn canonical_edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<_> = self
            .edges
            .iter()
            .map(|&(a, b)| (a.min(b), a.max(b)))
            .collect();
        e.sort_unstable();
        e
    }
}

/// Kruskal over the descending-weight list.
pub fn build_mst(edges: &ScoredEdgeList, n_features: usize) -> Result<UndirectedTree> {
    if edges.n_features() != n_features {
        return Err(Error::Dimension {
            expected: n_features,
            actual: edges.n_features(),
        });
    }
    if n_features == 0 {
        return Err(Error::Argument("spanning tree over zero features".into()));
    }
    let mut uf = UnionFind::new(n_features);
    let mut chosen = Vec::with_capacity(n_features - 1);
    for e in edges.edges() {
        if uf.union(e.i, e.j) {
            chosen.push((e.i, e.j));
            if chosen.len() + 1 == n_features {
                break;
            }
        }
    }
    Ok(UndirectedTree {
        vertices: (0..n_features).collect(),
        edges: chosen,
    })
}

/// How a spanning tree gets its root.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootPolicy {
    /// Uniform draw over the sorted vertex list from a ChaCha8 stream seeded
    /// with the given value.
    Random(u64),
    /// Lowest feature index.
    First,
}

impl RootPolicy {
    pub fn choose(&self, vertices: &[usize]) -> usize {
        assert!(!vertices.is_empty(), "root drawn from an empty vertex set");
        match *self {
            RootPolicy::First => vertices.iter().copied().min().unwrap(),
            RootPolicy::Random(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                vertices[rng.random_range(0..vertices.len())]
            }
        }
    }
}

/// Rooted tree over a subset of features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DirectedTree {
    features: Vec<usize>,
    root: usize,
    parent_of: BTreeMap<usize, usize>,
}

impl DirectedTree {
    pub fn single(feature: usize) -> Self {
        Self {
            features: vec![feature],
            root: feature,
            parent_of: BTreeMap::new(),
        }
    }

    /// Builds from explicit `(child, parent)` links and checks the tree
    /// invariants: one root, one parent per other feature, all reach the root.
    pub fn from_parents(features: &[usize], root: usize, links: &[(usize, usize)]) -> Result<Self> {
        let mut sorted = features.to_vec();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Structure("feature listed twice".into()));
        }
        let member = |f: usize| sorted.binary_search(&f).is_ok();
        if !member(root) {
            return Err(Error::Structure(format!(
                "root {root} is not a tree feature"
            )));
        }
        let mut parent_of = BTreeMap::new();
        for &(child, parent) in links {
            if !member(child) || !member(parent) {
                return Err(Error::Structure(format!(
                    "link {child} -> {parent} leaves the tree"
                )));
            }
            if child == root {
                return Err(Error::Structure("root has a parent".into()));
            }
            if parent_of.insert(child, parent).is_some() {
                return Err(Error::Structure(format!("feature {child} has two parents")));
            }
        }
        if parent_of.len() + 1 != sorted.len() {
            return Err(Error::Structure(format!(
                "{} links for {} features",
                parent_of.len(),
                sorted.len()
            )));
        }
        for &f in &sorted {
            let mut cur = f;
            let mut steps = 0;
            while cur != root {
                cur = parent_of[&cur];
                steps += 1;
                if steps > sorted.len() {
                    return Err(Error::Structure(format!(
                        "feature {f} never reaches the root"
                    )));
                }
            }
        }
        Ok(Self {
            features: sorted,
            root,
            parent_of,
        })
    }

    /// Tree features in ascending order.
    pub fn features(&self) -> &[usize] {
        &self.features
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent_of(&self, feature: usize) -> Option<usize> {
        self.parent_of.get(&feature).copied()
    }

    /// `(child, parent)` links ordered by child.
    pub fn links(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.parent_of.iter().map(|(&c, &p)| (c, p))
    }

    /// Undirected edge set as sorted `(min, max)` pairs.
    pub fn undirected_edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<_> = self.links().map(|(c, p)| (c.min(p), c.max(p))).collect();
        e.sort_unstable();
        e
    }

    /// Same tree with every feature index replaced by `map(index)`.
    pub fn relabel(&self, map: impl Fn(usize) -> usize) -> Result<Self> {
        let features: Vec<usize> = self.features.iter().map(|&f| map(f)).collect();
        let links: Vec<(usize, usize)> = self.links().map(|(c, p)| (map(c), map(p))).collect();
        Self::from_parents(&features, map(self.root), &links)
    }
}

/// Orients every edge away from `root`, breadth first.
pub fn direct_tree(tree: &UndirectedTree, root: usize) -> Result<DirectedTree> {
    if tree.vertices.binary_search(&root).is_err() {
        return Err(Error::Structure(format!(
            "root {root} is not a vertex of the tree"
        )));
    }
    let mut adjacency: BTreeMap<usize, Vec<usize>> =
        tree.vertices.iter().map(|&v| (v, Vec::new())).collect();
    for &(a, b) in &tree.edges {
        for (x, y) in [(a, b), (b, a)] {
            adjacency
                .get_mut(&x)
                .ok_or_else(|| Error::Structure(format!("edge endpoint {x} is not a vertex")))?
                .push(y);
        }
    }
    for list in adjacency.values_mut() {
        list.sort_unstable();
    }
    let mut links = Vec::with_capacity(tree.edges.len());
    let mut seen = BTreeMap::from([(root, ())]);
    let mut queue = VecDeque::from([root]);
    while let Some(v) = queue.pop_front() {
        for &w in &adjacency[&v] {
            if seen.insert(w, ()).is_none() {
                links.push((w, v));
                queue.push_back(w);
            }
        }
    }
    if seen.len() != tree.vertices.len() {
        return Err(Error::Structure("tree is not connected".into()));
    }
    DirectedTree::from_parents(&tree.vertices, root, &links)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionResult {
    pub label: usize,
    pub posterior: Vec<f64>,
}

impl PredictionResult {
    /// Normalizes log-domain scores; the label is the first maximum.
    pub fn from_log_scores(scores: &[f64]) -> Self {
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let posterior = if max == f64::NEG_INFINITY {
            vec![1.0 / scores.len() as f64; scores.len()]
        } else {
            let exp: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let z: f64 = exp.iter().sum();
            exp.into_iter().map(|e| e / z).collect()
        };
        Self::from_posterior(posterior)
    }

    pub fn from_posterior(posterior: Vec<f64>) -> Self {
        let mut label = 0;
        for (c, &p) in posterior.iter().enumerate() {
            if p > posterior[label] {
                label = c;
            }
        }
        Self { label, posterior }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TanModel {
    pub tree: DirectedTree,
    pub cpt: Cpt,
    pub n_features: usize,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
}

impl TanModel {
    /// Estimates CPTs for a fixed structure.
    pub fn from_tree(train: &Dataset, tree: DirectedTree, smoothing: f64) -> Result<Self> {
        let cpt = estimate_cpts(train, &tree, smoothing)?;
        Ok(Self {
            tree,
            cpt,
            n_features: train.n_features(),
            feature_names: train.feature_names().to_vec(),
            class_names: train.class_names().to_vec(),
        })
    }

    /// Debugging dump: root, `[parent, child]` edges, and CPT arrays.
    pub fn to_json(&self) -> serde_json::Value {
        let name = |f: usize| self.feature_names[f].clone();
        serde_json::json!({
            "root": name(self.tree.root()),
            "edges": self.tree.links().map(|(c, p)| [name(p), name(c)]).collect::<Vec<_>>(),
            "classes": self.class_names,
            "cpt": {
                "prior": self.cpt.prior,
                "nodes": self.cpt.nodes.iter().map(|n| serde_json::json!({
                    "feature": name(n.feature),
                    "parent": n.parent.map(name),
                    "table": n.table(),
                })).collect::<Vec<_>>(),
            },
        })
    }
}

/// Scores all pairs, takes the maximum spanning tree, roots it per `root`,
/// and estimates the CPTs.
pub fn fit_tan(train: &Dataset, root: RootPolicy, smoothing: f64) -> Result<TanModel> {
    let edges = score_all_edges(train)?;
    fit_tan_with_edges(train, &edges, root, smoothing)
}

/// [`fit_tan`] with precomputed pair scores.
pub fn fit_tan_with_edges(
    train: &Dataset,
    edges: &ScoredEdgeList,
    root: RootPolicy,
    smoothing: f64,
) -> Result<TanModel> {
    let mst = build_mst(edges, train.n_features())?;
    let tree = direct_tree(&mst, root.choose(&mst.vertices))?;
    TanModel::from_tree(train, tree, smoothing)
}

/// Posterior over classes, accumulated in log space.
pub fn classify(model: &TanModel, inst: &Instance) -> Result<PredictionResult> {
    if inst.len() != model.n_features {
        return Err(Error::Dimension {
            expected: model.n_features,
            actual: inst.len(),
        });
    }
    let x = inst.values();
    let scores: Vec<f64> = (0..model.cpt.n_classes())
        .map(|c| {
            model.cpt.prior[c].ln()
                + model
                    .cpt
                    .nodes
                    .iter()
                    .map(|node| {
                        let u = node.parent.map_or(0, |p| x[p]);
                        node.prob(c, u, x[node.feature]).ln()
                    })
                    .sum::<f64>()
        })
        .collect();
    Ok(PredictionResult::from_log_scores(&scores))
}

/// Fits one model on `train` and classifies every test instance.
pub fn evaluate_tan(
    train: &Dataset,
    test: &[Instance],
    root: RootPolicy,
    smoothing: f64,
) -> Result<Vec<PredictionResult>> {
    let model = fit_tan(train, root, smoothing)?;
    test.par_iter().map(|inst| classify(&model, inst)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::ScoredEdge;

    #[test]
    fn union_find_basics() {
        let mut uf = UnionFind::new(5);
        assert!(uf.union(0, 1));
        assert!(uf.union(3, 4));
        assert!(!uf.union(1, 0));
        assert!(uf.union(1, 4));
        assert_eq!(uf.find(0), uf.find(3));
        assert_ne!(uf.find(2), uf.find(0));
    }

    #[test]
    fn mst_two_features() {
        let list = ScoredEdgeList::new(
            2,
            vec![ScoredEdge {
                i: 0,
                j: 1,
                cmi: 0.3,
            }],
        )
        .unwrap();
        let t = build_mst(&list, 2).unwrap();
        assert_eq!(t.edges, [(0, 1)]);
        assert!(build_mst(&list, 3).is_err());
    }

    #[test]
    fn mst_equal_weights_takes_earliest_pairs() {
        let edges = (0..4)
            .flat_map(|i| (i + 1..4).map(move |j| ScoredEdge { i, j, cmi: 1.0 }))
            .collect();
        let list = ScoredEdgeList::new(4, edges).unwrap();
        assert_eq!(build_mst(&list, 4).unwrap().edges, [(0, 1), (0, 2), (0, 3)]);
    }

    #[test]
    fn direct_path_from_middle() {
        // A=0, B=1, C=2
        let t = UndirectedTree {
            vertices: vec![0, 1, 2],
            edges: vec![(0, 1), (1, 2)],
        };
        let d = direct_tree(&t, 1).unwrap();
        assert_eq!(d.root(), 1);
        assert_eq!(d.parent_of(0), Some(1));
        assert_eq!(d.parent_of(2), Some(1));
        assert_eq!(d.parent_of(1), None);
        assert!(matches!(direct_tree(&t, 7), Err(Error::Structure(_))));
    }

    #[test]
    fn direct_single_node() {
        let t = UndirectedTree {
            vertices: vec![4],
            edges: vec![],
        };
        let d = direct_tree(&t, 4).unwrap();
        assert_eq!(d.links().count(), 0);
        assert_eq!(d, DirectedTree::single(4));
    }

    #[test]
    fn tree_validation() {
        assert!(DirectedTree::from_parents(&[0, 1, 2], 0, &[(1, 0)]).is_err());
        assert!(DirectedTree::from_parents(&[0, 1, 2], 0, &[(1, 2), (2, 1)]).is_err());
        assert!(DirectedTree::from_parents(&[0, 1], 3, &[(1, 0)]).is_err());
        assert!(DirectedTree::from_parents(&[0, 1, 2], 0, &[(1, 0), (2, 1)]).is_ok());
    }

    #[test]
    fn root_policy() {
        assert_eq!(RootPolicy::First.choose(&[5, 2, 9]), 2);
        let v: Vec<usize> = (0..10).collect();
        let a = RootPolicy::Random(42).choose(&v);
        assert_eq!(a, RootPolicy::Random(42).choose(&v));
        let distinct: std::collections::BTreeSet<_> =
            (0..200).map(|s| RootPolicy::Random(s).choose(&v)).collect();
        assert_eq!(distinct.len(), 10);
    }

    // ten rows per class with the requested share of x = 1
    fn one_feature_model(p_pos: f64, p_neg: f64) -> TanModel {
        let ones = |p: f64| (p * 10.0).round() as usize;
        let rows: Vec<Vec<u8>> = (0..10)
            .map(|k| vec![u8::from(k < ones(p_neg))])
            .chain((0..10).map(|k| vec![u8::from(k < ones(p_pos))]))
            .collect();
        let labels = (0..20).map(|k| usize::from(k >= 10)).collect();
        let d = Dataset::new(
            vec!["x".into()],
            "class".into(),
            vec!["neg".into(), "pos".into()],
            rows,
            labels,
        )
        .unwrap();
        TanModel::from_tree(&d, DirectedTree::single(0), 0.0).unwrap()
    }

    #[test]
    fn bayes_rule_single_feature() {
        let m = one_feature_model(0.9, 0.1);
        let r = classify(&m, &Instance::new(vec![1]).unwrap()).unwrap();
        assert!((r.posterior[0] - 0.1).abs() < 1e-12);
        assert!((r.posterior[1] - 0.9).abs() < 1e-12);
        assert_eq!(r.label, 1);
        assert!(matches!(
            classify(&m, &Instance::new(vec![1, 0]).unwrap()),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn uniform_model_ties_to_class_zero() {
        let m = one_feature_model(0.5, 0.5);
        let r = classify(&m, &Instance::new(vec![0]).unwrap()).unwrap();
        assert_eq!(r.posterior, vec![0.5, 0.5]);
        assert_eq!(r.label, 0);
    }

    #[test]
    fn log_scores_are_shift_invariant() {
        let a = PredictionResult::from_log_scores(&[-3.0, -1.5, -7.25]);
        let b = PredictionResult::from_log_scores(&[-1003.0, -1001.5, -1007.25]);
        assert_eq!(a.label, b.label);
        for (x, y) in a.posterior.iter().zip(&b.posterior) {
            assert!((x - y).abs() < 1e-12);
        }
        let all_zero = PredictionResult::from_log_scores(&[f64::NEG_INFINITY; 2]);
        assert_eq!(all_zero.posterior, vec![0.5, 0.5]);
    }

    #[test]
    fn fit_is_deterministic_and_json_dumps() {
        let d = Dataset::new(
            vec!["a".into(), "b".into(), "c".into()],
            "class".into(),
            vec!["neg".into(), "pos".into()],
            vec![
                vec![1, 1, 0],
                vec![0, 0, 1],
                vec![1, 0, 0],
                vec![0, 1, 1],
                vec![1, 1, 1],
            ],
            vec![1, 0, 1, 0, 1],
        )
        .unwrap();
        let a = fit_tan(&d, RootPolicy::Random(3), 1.0).unwrap();
        let b = fit_tan(&d, RootPolicy::Random(3), 1.0).unwrap();
        assert_eq!(a, b);
        let json = a.to_json();
        assert_eq!(json["edges"].as_array().unwrap().len(), 2);
        assert!(json["root"].is_string());
    }
}
