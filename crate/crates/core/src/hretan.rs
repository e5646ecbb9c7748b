//! Lazy hierarchical-redundancy-eliminated TAN.
//!
//! Pair scores are computed once from the training set. For every test
//! instance a spanning tree is grown greedily over the descending-score list:
//! an edge is taken when it is still available, its endpoints are not
//! hierarchically redundant with each other in that instance, and it closes
//! no cycle. Each taken endpoint then disables every edge of the hierarchy
//! relatives (ancestors and descendants) that share its value. The surviving
//! features form the tree a TAN model is fitted on for that instance alone.

use rayon::prelude::*;

use crate::dataset::{project_instance, Dataset, Instance};
use crate::error::{Error, Result};
use crate::estimation::{class_prior, score_all_edges, EdgeStatus, ScoredEdgeList};
use crate::hierarchy::FeatureDag;
use crate::tan::{
    classify, direct_tree, DirectedTree, PredictionResult, RootPolicy, TanModel, UndirectedTree,
    UnionFind,
};

/// Per-instance copy of the edge statuses. The shared list is never mutated,
/// which stands in for resetting every status to available after each instance.
#[derive(Debug, Clone)]
pub struct EdgeStatusScratch {
    available: Vec<bool>,
    disabled_node: Vec<bool>,
}

impl EdgeStatusScratch {
    pub fn new(edges: &ScoredEdgeList) -> Self {
        Self {
            available: edges
                .status()
                .iter()
                .map(|s| *s == EdgeStatus::Available)
                .collect(),
            disabled_node: vec![false; edges.n_features()],
        }
    }

    pub fn is_available(&self, edge: usize) -> bool {
        self.available[edge]
    }

    /// Marks every edge touching `node` unavailable.
    pub fn disable_node(&mut self, node: usize, edges: &ScoredEdgeList) {
        if std::mem::replace(&mut self.disabled_node[node], true) {
            return;
        }
        for &k in edges.incident(node) {
            self.available[k] = false;
        }
    }
}

fn check_dims(dag: &FeatureDag, edges: &ScoredEdgeList, inst: &Instance) -> Result<()> {
    let n = dag.n_features();
    for actual in [edges.n_features(), inst.len()] {
        if actual != n {
            return Err(Error::Dimension {
                expected: n,
                actual,
            });
        }
    }
    Ok(())
}

/// Undirected redundancy-eliminated spanning tree for one instance.
/// Fails with [`Error::EmptyTree`] when no edge is admissible.
pub fn hre_spanning_tree(
    dag: &FeatureDag,
    edges: &ScoredEdgeList,
    inst: &Instance,
) -> Result<UndirectedTree> {
    check_dims(dag, edges, inst)?;
    let values = inst.values();
    let n = dag.n_features();
    let mut status = EdgeStatusScratch::new(edges);
    let mut components = UnionFind::new(n);
    let mut in_tree = vec![false; n];
    let mut chosen = Vec::new();

    for (k, e) in edges.edges().iter().enumerate() {
        if !status.is_available(k) || dag.redundant_unchecked(e.i, e.j, values) {
            continue;
        }
        if !components.union(e.i, e.j) {
            continue;
        }
        chosen.push((e.i, e.j));
        for g in [e.i, e.j] {
            in_tree[g] = true;
            for &h in dag.related(g) {
                if values[h] == values[g] {
                    status.disable_node(h, edges);
                }
            }
        }
    }
    if chosen.is_empty() {
        return Err(Error::EmptyTree);
    }
    Ok(UndirectedTree {
        vertices: (0..n).filter(|&f| in_tree[f]).collect(),
        edges: chosen,
    })
}

/// [`hre_spanning_tree`] rooted per `root` (drawn from the kept features) and
/// directed outward.
pub fn hre_mst(
    dag: &FeatureDag,
    edges: &ScoredEdgeList,
    inst: &Instance,
    root: RootPolicy,
) -> Result<DirectedTree> {
    let tree = hre_spanning_tree(dag, edges, inst)?;
    direct_tree(&tree, root.choose(&tree.vertices))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LazyPrediction {
    pub result: PredictionResult,
    /// `None` when elimination left no edge and the class prior decided.
    pub tree: Option<DirectedTree>,
}

/// Classifies one instance with a TAN built on its own redundancy-eliminated
/// tree, re-estimating CPTs on the training columns the tree kept.
pub fn classify_lazy(
    train: &Dataset,
    dag: &FeatureDag,
    edges: &ScoredEdgeList,
    inst: &Instance,
    root: RootPolicy,
    smoothing: f64,
) -> Result<LazyPrediction> {
    if train.n_features() != dag.n_features() {
        return Err(Error::Dimension {
            expected: dag.n_features(),
            actual: train.n_features(),
        });
    }
    let tree = match hre_mst(dag, edges, inst, root) {
        Ok(tree) => tree,
        Err(Error::EmptyTree) => {
            return Ok(LazyPrediction {
                result: PredictionResult::from_posterior(class_prior(train, smoothing)?),
                tree: None,
            })
        }
        Err(e) => return Err(e),
    };
    let kept = tree.features();
    let local = |f: usize| kept.binary_search(&f).expect("tree feature is kept");
    let projected_tree = tree.relabel(local)?;
    let projected_train = train.project(kept)?;
    let projected_inst = project_instance(inst, kept)?;
    let model = TanModel::from_tree(&projected_train, projected_tree, smoothing)?;
    Ok(LazyPrediction {
        result: classify(&model, &projected_inst)?,
        tree: Some(tree),
    })
}

/// Scores pairs on `train` once, then classifies every test instance
/// independently (and in parallel). Every instance uses the same root policy,
/// so predictions do not depend on test order.
pub fn evaluate_hre_tan(
    train: &Dataset,
    test: &[Instance],
    dag: &FeatureDag,
    root: RootPolicy,
    smoothing: f64,
) -> Result<Vec<LazyPrediction>> {
    let edges = score_all_edges(train)?;
    evaluate_hre_tan_with_edges(train, test, dag, &edges, root, smoothing)
}

pub fn evaluate_hre_tan_with_edges(
    train: &Dataset,
    test: &[Instance],
    dag: &FeatureDag,
    edges: &ScoredEdgeList,
    root: RootPolicy,
    smoothing: f64,
) -> Result<Vec<LazyPrediction>> {
    test.par_iter()
        .map(|inst| classify_lazy(train, dag, edges, inst, root, smoothing))
        .collect()
}
