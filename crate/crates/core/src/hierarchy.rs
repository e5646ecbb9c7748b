//! Feature hierarchy: a DAG over features with materialized ancestor and
//! descendant closures, plus the hierarchical-redundancy predicate used while
//! building redundancy-eliminated spanning trees.
//!
//! Edges point from a child term to its (more generic) parent term.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::dataset::{Dataset, Instance};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDag {
    names: Vec<String>,
    index: HashMap<String, usize>,
    parents: Vec<Vec<usize>>,
    ancestors: Vec<Vec<usize>>,
    descendants: Vec<Vec<usize>>,
    // sorted union of ancestors and descendants; the hot path of HRE-MST
    related: Vec<Vec<usize>>,
}

/// A row where a feature is `1` but one of its ancestors is `0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Violation {
    pub row: usize,
    pub feature: usize,
    pub ancestor: usize,
}

impl FeatureDag {
    /// Builds the hierarchy from `(child, parent)` name pairs and materializes
    /// both closures. An empty edge list gives a flat hierarchy.
    pub fn build<S: AsRef<str>, T: AsRef<str>>(
        feature_names: &[S],
        edges: &[(T, T)],
    ) -> Result<Self> {
        let names: Vec<String> = feature_names
            .iter()
            .map(|s| s.as_ref().to_owned())
            .collect();
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::DuplicateFeature(name.clone()));
            }
        }
        let n = names.len();
        let lookup = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| Error::UnknownFeature(name.to_owned()))
        };
        let mut parents = vec![Vec::new(); n];
        for (child, parent) in edges {
            let c = lookup(child.as_ref())?;
            let p = lookup(parent.as_ref())?;
            parents[c].push(p);
        }
        for list in &mut parents {
            list.sort_unstable();
            list.dedup();
        }

        let order = topological_order(&names, &parents)?;

        // `order` lists every parent before its children.
        let mut ancestors: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut stamp = vec![usize::MAX; n];
        for &v in &order {
            let mut acc = Vec::new();
            for &p in &parents[v] {
                if stamp[p] != v {
                    stamp[p] = v;
                    acc.push(p);
                }
                for &a in &ancestors[p] {
                    if stamp[a] != v {
                        stamp[a] = v;
                        acc.push(a);
                    }
                }
            }
            acc.sort_unstable();
            ancestors[v] = acc;
        }

        let mut descendants: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (v, anc) in ancestors.iter().enumerate() {
            for &a in anc {
                descendants[a].push(v);
            }
        }

        let related = ancestors
            .iter()
            .zip(&descendants)
            .map(|(a, d)| {
                let mut r: Vec<usize> = a.iter().chain(d).copied().collect();
                r.sort_unstable();
                r
            })
            .collect();

        Ok(Self {
            names,
            index,
            parents,
            ancestors,
            descendants,
            related,
        })
    }

    /// A hierarchy with no edges.
    pub fn flat<S: AsRef<str>>(feature_names: &[S]) -> Result<Self> {
        Self::build::<S, &str>(feature_names, &[])
    }

    pub fn n_features(&self) -> usize {
        self.names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn parents(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    /// All transitive ancestors of `i`, sorted, excluding `i`.
    pub fn ancestors(&self, i: usize) -> &[usize] {
        &self.ancestors[i]
    }

    /// All transitive descendants of `i`, sorted, excluding `i`.
    pub fn descendants(&self, i: usize) -> &[usize] {
        &self.descendants[i]
    }

    /// Ancestors and descendants of `i` together, sorted.
    pub fn related(&self, i: usize) -> &[usize] {
        &self.related[i]
    }

    pub fn edge_count(&self) -> usize {
        self.parents.iter().map(Vec::len).sum()
    }

    pub fn is_flat(&self) -> bool {
        self.edge_count() == 0
    }

    /// True iff one of `i`, `j` is an ancestor of the other and both take the
    /// same value in `inst`.
    pub fn is_hierarchically_redundant(&self, i: usize, j: usize, inst: &Instance) -> Result<bool> {
        let n = self.n_features();
        if inst.len() != n {
            return Err(Error::Dimension {
                expected: n,
                actual: inst.len(),
            });
        }
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
        Ok(self.redundant_unchecked(i, j, inst.values()))
    }

    #[inline]
    pub(crate) fn redundant_unchecked(&self, i: usize, j: usize, values: &[u8]) -> bool {
        values[i] == values[j] && self.related[i].binary_search(&j).is_ok()
    }

    /// Reports every `(row, feature, ancestor)` where the feature is annotated
    /// but the ancestor is not.
    pub fn validate_true_path(&self, data: &Dataset) -> Result<Vec<Violation>> {
        self.check_columns(data)?;
        let mut out = Vec::new();
        for row in 0..data.n_instances() {
            let values = data.row(row);
            for (feature, anc) in self.ancestors.iter().enumerate() {
                if values[feature] != 1 {
                    continue;
                }
                out.extend(
                    anc.iter()
                        .filter(|&&a| values[a] == 0)
                        .map(|&ancestor| Violation {
                            row,
                            feature,
                            ancestor,
                        }),
                );
            }
        }
        Ok(out)
    }

    /// Copy of `data` with every annotated feature's ancestors set to `1`.
    pub fn repair_true_path(&self, data: &Dataset) -> Result<Dataset> {
        self.check_columns(data)?;
        let rows = (0..data.n_instances())
            .map(|r| {
                let mut row = data.row(r).to_vec();
                self.propagate_up(&mut row);
                row
            })
            .collect();
        Dataset::new(
            data.feature_names().to_vec(),
            data.class_column().to_owned(),
            data.class_names().to_vec(),
            rows,
            data.labels().to_vec(),
        )
    }

    pub(crate) fn propagate_up(&self, row: &mut [u8]) {
        for f in 0..row.len() {
            if row[f] == 1 {
                for &a in &self.ancestors[f] {
                    row[a] = 1;
                }
            }
        }
    }

    fn check_columns(&self, data: &Dataset) -> Result<()> {
        if data.n_features() != self.n_features() {
            return Err(Error::Dimension {
                expected: self.n_features(),
                actual: data.n_features(),
            });
        }
        Ok(())
    }

    /// Renders the edge list as `child<TAB>parent` lines.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for (c, ps) in self.parents.iter().enumerate() {
            for &p in ps {
                let _ = writeln!(out, "{}\t{}", self.names[c], self.names[p]);
            }
        }
        out
    }
}

/// Parses a `child<TAB>parent` edge file against the dataset's feature universe.
/// `#` starts a comment line; blank lines are skipped.
pub fn parse_dag<S: AsRef<str>>(text: &str, feature_names: &[S]) -> Result<FeatureDag> {
    let mut edges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() != 2 || fields.iter().any(|f| f.is_empty()) {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!("expected `child<TAB>parent`, found `{trimmed}`"),
            });
        }
        edges.push((fields[0].to_owned(), fields[1].to_owned()));
    }
    FeatureDag::build(feature_names, &edges)
}

/// Parents-first ordering via iterative depth-first search; reports one cycle
/// by name if the parent relation is not acyclic.
fn topological_order(names: &[String], parents: &[Vec<usize>]) -> Result<Vec<usize>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Open,
        Done,
    }
    let n = parents.len();
    let mut mark = vec![Mark::New; n];
    let mut order = Vec::with_capacity(n);
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for start in 0..n {
        if mark[start] != Mark::New {
            continue;
        }
        mark[start] = Mark::Open;
        stack.push((start, 0));
        while let Some(&mut (v, ref mut next)) = stack.last_mut() {
            if let Some(&p) = parents[v].get(*next) {
                *next += 1;
                match mark[p] {
                    Mark::New => {
                        mark[p] = Mark::Open;
                        stack.push((p, 0));
                    }
                    Mark::Open => {
                        let pos = stack.iter().position(|&(u, _)| u == p).unwrap_or(0);
                        let mut cycle: Vec<String> = stack[pos..]
                            .iter()
                            .map(|&(u, _)| names[u].clone())
                            .collect();
                        cycle.push(names[p].clone());
                        return Err(Error::Cycle(cycle));
                    }
                    Mark::Done => {}
                }
            } else {
                mark[v] = Mark::Done;
                order.push(v);
                stack.pop();
            }
        }
    }
    Ok(order)
}
