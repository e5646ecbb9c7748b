//! Binary-feature classification datasets: CSV ingestion, stratified folds,
//! column projection and a hierarchy-consistent synthetic generator.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hierarchy::FeatureDag;

/// Binary feature matrix (row-major) with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    feature_names: Vec<String>,
    class_column: String,
    class_names: Vec<String>,
    values: Vec<u8>,
    labels: Vec<usize>,
}

/// One row of binary feature values.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Instance {
    values: Vec<u8>,
}

impl Instance {
    pub fn new(values: Vec<u8>) -> Result<Self> {
        if let Some(pos) = values.iter().position(|&v| v > 1) {
            return Err(Error::Argument(format!(
                "instance value {} at position {pos} is not binary",
                values[pos]
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl Dataset {
    pub fn new(
        feature_names: Vec<String>,
        class_column: String,
        class_names: Vec<String>,
        rows: Vec<Vec<u8>>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        let n_features = feature_names.len();
        if n_features == 0 {
            return Err(Error::Argument("dataset needs at least one feature".into()));
        }
        if rows.is_empty() {
            return Err(Error::Argument(
                "dataset needs at least one instance".into(),
            ));
        }
        if rows.len() != labels.len() {
            return Err(Error::LengthMismatch(rows.len(), labels.len()));
        }
        let mut seen = BTreeSet::new();
        for name in &feature_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::DuplicateFeature(name.clone()));
            }
        }
        let mut values = Vec::with_capacity(rows.len() * n_features);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != n_features {
                return Err(Error::Dimension {
                    expected: n_features,
                    actual: row.len(),
                });
            }
            if row.iter().any(|&v| v > 1) {
                return Err(Error::Argument(format!("row {r} holds a non-binary value")));
            }
            values.extend_from_slice(row);
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::Argument(format!(
                "label {bad} exceeds {} class names",
                class_names.len()
            )));
        }
        Ok(Self {
            feature_names,
            class_column,
            class_names,
            values,
            labels,
        })
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_instances(&self) -> usize {
        self.labels.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn class_column(&self) -> &str {
        &self.class_column
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, r: usize) -> &[u8] {
        let n = self.n_features();
        &self.values[r * n..(r + 1) * n]
    }

    #[inline]
    pub fn value(&self, r: usize, f: usize) -> u8 {
        self.values[r * self.n_features() + f]
    }

    pub fn instance(&self, r: usize) -> Instance {
        Instance {
            values: self.row(r).to_vec(),
        }
    }

    pub fn instances(&self) -> Vec<Instance> {
        (0..self.n_instances()).map(|r| self.instance(r)).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows in the given order; the feature and class universe is kept.
    pub fn subset(&self, rows: &[usize]) -> Result<Dataset> {
        if rows.is_empty() {
            return Err(Error::Argument("subset needs at least one row".into()));
        }
        let n = self.n_instances();
        if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
            return Err(Error::Index(format!("row {bad} out of range for {n} rows")));
        }
        let mut values = Vec::with_capacity(rows.len() * self.n_features());
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        Ok(Dataset {
            feature_names: self.feature_names.clone(),
            class_column: self.class_column.clone(),
            class_names: self.class_names.clone(),
            values,
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
        })
    }

    /// Keeps only the `kept` columns, in that order.
    pub fn project(&self, kept: &[usize]) -> Result<Dataset> {
        check_kept(kept, self.n_features())?;
        let mut values = Vec::with_capacity(self.n_instances() * kept.len());
        for r in 0..self.n_instances() {
            let row = self.row(r);
            values.extend(kept.iter().map(|&f| row[f]));
        }
        Ok(Dataset {
            feature_names: kept
                .iter()
                .map(|&f| self.feature_names[f].clone())
                .collect(),
            class_column: self.class_column.clone(),
            class_names: self.class_names.clone(),
            values,
            labels: self.labels.clone(),
        })
    }

    /// Serializes to the CSV layout read by [`parse_dataset`].
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for name in &self.feature_names {
            out.push_str(name);
            out.push(',');
        }
        out.push_str(&self.class_column);
        out.push('\n');
        for r in 0..self.n_instances() {
            for &v in self.row(r) {
                out.push(if v == 1 { '1' } else { '0' });
                out.push(',');
            }
            let _ = writeln!(out, "{}", self.class_names[self.labels[r]]);
        }
        out
    }
}

pub fn project_instance(inst: &Instance, kept: &[usize]) -> Result<Instance> {
    check_kept(kept, inst.len())?;
    Ok(Instance {
        values: kept.iter().map(|&f| inst.values[f]).collect(),
    })
}

fn check_kept(kept: &[usize], n: usize) -> Result<()> {
    if kept.is_empty() {
        return Err(Error::Index("projection onto zero features".into()));
    }
    let mut seen = vec![false; n];
    for &f in kept {
        if f >= n {
            return Err(Error::Index(format!(
                "feature {f} out of range for {n} features"
            )));
        }
        if std::mem::replace(&mut seen[f], true) {
            return Err(Error::Index(format!("feature {f} listed twice")));
        }
    }
    Ok(())
}

/// Parses a dataset CSV: header line of feature names followed by the class
/// column name; feature cells are `0`/`1`; the last cell is the class label.
///
/// Class names are sorted lexicographically. When `positive` is given, that
/// class is moved to the last index (index 1 for two-class data).
pub fn parse_dataset(text: &str, positive: Option<&str>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();

    let parse_err = |line: u64, message: String| Error::Parse {
        line: line as usize,
        message,
    };

    let header = match records.next() {
        Some(rec) => rec.map_err(|e| parse_err(1, e.to_string()))?,
        None => return Err(parse_err(1, "empty header".into())),
    };
    let header_line = header.position().map_or(1, |p| p.line());
    let columns: Vec<String> = header.iter().map(str::to_owned).collect();
    if columns.iter().all(String::is_empty) {
        return Err(parse_err(header_line, "empty header".into()));
    }
    if columns.len() < 2 {
        return Err(parse_err(
            header_line,
            "header needs at least one feature and a class column".into(),
        ));
    }
    if let Some(blank) = columns.iter().position(String::is_empty) {
        return Err(parse_err(
            header_line,
            format!("column {} has an empty name", blank + 1),
        ));
    }
    let n_features = columns.len() - 1;

    let mut rows = Vec::new();
    let mut raw_labels = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != columns.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", columns.len(), rec.len()),
            ));
        }
        let mut row = Vec::with_capacity(n_features);
        for (f, cell) in rec.iter().take(n_features).enumerate() {
            row.push(match cell {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(parse_err(
                        line,
                        format!("non-binary value `{other}` in column `{}`", columns[f]),
                    ))
                }
            });
        }
        let label = &rec[n_features];
        if label.is_empty() {
            return Err(parse_err(line, "missing class label".into()));
        }
        rows.push(row);
        raw_labels.push(label.to_owned());
    }
    if rows.is_empty() {
        return Err(parse_err(header_line + 1, "no instances".into()));
    }

    let mut class_names: Vec<String> = raw_labels
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if let Some(pos) = positive {
        let at = class_names.iter().position(|c| c == pos).ok_or_else(|| {
            Error::Argument(format!("positive class `{pos}` does not occur in the data"))
        })?;
        let name = class_names.remove(at);
        class_names.push(name);
    }
    let labels = raw_labels
        .iter()
        .map(|l| class_names.iter().position(|c| c == l).unwrap())
        .collect();

    let mut features = columns;
    let class_column = features.pop().unwrap();
    Dataset::new(features, class_column, class_names, rows, labels).map_err(|e| match e {
        Error::DuplicateFeature(name) => {
            parse_err(header_line, format!("duplicate feature `{name}`"))
        }
        other => other,
    })
}

/// Fold id per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    k: usize,
    assignment: Vec<usize>,
}

impl FoldSplit {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&r| self.assignment[r] == fold)
            .collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&r| self.assignment[r] != fold)
            .collect()
    }
}

/// Stratified k-fold assignment.
///
/// Row indices of each class (classes in index order) are shuffled with a
/// ChaCha8 stream seeded from `seed`, then dealt round-robin to folds. The
/// dealing position carries over from one class to the next, so fold sizes
/// and per-class fold counts each differ by at most one.
pub fn stratified_kfold(data: &Dataset, k: usize, seed: u64) -> Result<FoldSplit> {
    let n = data.n_instances();
    if k < 2 || k > n {
        return Err(Error::Argument(format!(
            "fold count {k} must lie in [2, {n}] for {n} instances"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; n];
    let mut next = 0usize;
    for class in 0..data.n_classes() {
        let mut rows: Vec<usize> = (0..n).filter(|&r| data.labels()[r] == class).collect();
        rows.shuffle(&mut rng);
        for r in rows {
            assignment[r] = next % k;
            next += 1;
        }
    }
    Ok(FoldSplit { k, assignment })
}

/// Generates a random hierarchy over `n_features` terms named `T0001`, ...
/// Each term may receive up to `max_parents` parents chosen among earlier terms,
/// each candidate with probability `edge_prob`.
pub fn synthesize_dag(
    n_features: usize,
    max_parents: usize,
    edge_prob: f64,
    seed: u64,
) -> Result<FeatureDag> {
    if n_features == 0 {
        return Err(Error::Argument("need at least one feature".into()));
    }
    if !(0.0..=1.0).contains(&edge_prob) {
        return Err(Error::Argument(format!(
            "edge probability {edge_prob} outside [0, 1]"
        )));
    }
    let width = n_features.to_string().len().max(4);
    let names: Vec<String> = (1..=n_features).map(|i| format!("T{i:0width$}")).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for child in 1..n_features {
        let mut chosen = 0;
        for parent in (0..child).rev() {
            if chosen < max_parents && rng.random_bool(edge_prob) {
                edges.push((names[child].clone(), names[parent].clone()));
                chosen += 1;
            }
        }
    }
    FeatureDag::build(&names, &edges)
}

/// Samples a dataset whose rows respect the hierarchy's true-path rule.
///
/// Each row draws a class (`1` with probability `class_balance`) and a latent
/// binary factor shared by all features. Leaf terms are annotated with
/// probability `(1 - s) * p_leaf(class) + s * q_leaf(latent)` where `s` is
/// `dependency_strength`; annotations are then propagated to all ancestors.
/// With `s = 0` leaves are independent given the class.
pub fn synthesize(
    dag: &FeatureDag,
    n_instances: usize,
    class_balance: f64,
    dependency_strength: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_instances == 0 {
        return Err(Error::Argument("need at least one instance".into()));
    }
    if !(class_balance > 0.0 && class_balance < 1.0) {
        return Err(Error::Argument(format!(
            "class balance {class_balance} outside (0, 1)"
        )));
    }
    if !(0.0..=1.0).contains(&dependency_strength) {
        return Err(Error::Argument(format!(
            "dependency strength {dependency_strength} outside [0, 1]"
        )));
    }
    let n = dag.n_features();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let leaves: Vec<usize> = (0..n).filter(|&f| dag.descendants(f).is_empty()).collect();

    struct LeafRates {
        by_class: [f64; 2],
        by_latent: [f64; 2],
    }
    let rates: Vec<LeafRates> = leaves
        .iter()
        .map(|_| {
            let base = rng.random_range(0.05..0.4);
            let shift = rng.random_range(-0.3..0.3);
            LeafRates {
                by_class: [base, f64::clamp(base + shift, 0.02, 0.98)],
                by_latent: [rng.random_range(0.05..0.4), rng.random_range(0.6..0.95)],
            }
        })
        .collect();

    let s = dependency_strength;
    let mut rows = Vec::with_capacity(n_instances);
    let mut labels = Vec::with_capacity(n_instances);
    for _ in 0..n_instances {
        let class = usize::from(rng.random_bool(class_balance));
        let latent = usize::from(rng.random_bool(0.5));
        let mut row = vec![0u8; n];
        for (&leaf, r) in leaves.iter().zip(&rates) {
            let p = (1.0 - s) * r.by_class[class] + s * r.by_latent[latent];
            row[leaf] = u8::from(rng.random::<f64>() < p);
        }
        dag.propagate_up(&mut row);
        rows.push(row);
        labels.push(class);
    }
    Dataset::new(
        dag.feature_names().to_vec(),
        "class".into(),
        vec!["anti".into(), "pro".into()],
        rows,
        labels,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn balanced(n_per_class: usize) -> Dataset {
        let rows = (0..2 * n_per_class).map(|r| vec![(r % 2) as u8]).collect();
        let labels = (0..2 * n_per_class).map(|r| r / n_per_class).collect();
        Dataset::new(
            vec!["f".into()],
            "class".into(),
            vec!["a".into(), "b".into()],
            rows,
            labels,
        )
        .unwrap()
    }

    #[test]
    fn parse_minimal() {
        let d = parse_dataset("f1,f2,class\n1,0,pro\n", None).unwrap();
        assert_eq!(d.n_instances(), 1);
        assert_eq!(d.row(0), &[1, 0]);
        assert_eq!(d.class_names()[d.labels()[0]], "pro");
        assert_eq!(d.feature_names(), ["f1", "f2"]);
        assert_eq!(d.class_column(), "class");
    }

    #[test]
    fn parse_rejects_non_binary() {
        let err = parse_dataset("f1,f2,class\n1,0,pro\n1,2,pro\n", None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn parse_rejects_header_only_and_empty() {
        assert!(matches!(
            parse_dataset("f1,f2,class\n", None),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            parse_dataset("", None),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_dataset("class\nanti\n", None),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn parse_rejects_ragged_and_missing() {
        let err = parse_dataset("a,b,class\n1,0,x\n1,x\n", None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
        let err = parse_dataset("a,b,class\n1,,x\n", None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err:?}");
        let err = parse_dataset("a,b,class\n1,0,\n", None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn class_order_and_positive_override() {
        let text = "a,class\n1,pro\n0,anti\n";
        let d = parse_dataset(text, None).unwrap();
        assert_eq!(d.class_names(), ["anti", "pro"]);
        assert_eq!(d.labels(), [1, 0]);
        let d = parse_dataset(text, Some("anti")).unwrap();
        assert_eq!(d.class_names(), ["pro", "anti"]);
        assert_eq!(d.labels(), [0, 1]);
        assert!(matches!(
            parse_dataset(text, Some("other")),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let text = "a,b,c,label\n1,0,1,pro\n0,0,0,anti\n1,1,1,pro\n";
        let d = parse_dataset(text, None).unwrap();
        assert_eq!(d.to_csv(), text);
        assert_eq!(parse_dataset(&d.to_csv(), None).unwrap(), d);
    }

    #[test]
    fn kfold_perfect_stratification() {
        let d = balanced(5);
        let split = stratified_kfold(&d, 5, 11).unwrap();
        for fold in 0..5 {
            let rows = split.test_rows(fold);
            assert_eq!(rows.len(), 2);
            let pos = rows.iter().filter(|&&r| d.labels()[r] == 1).count();
            assert_eq!(pos, 1);
        }
        assert_eq!(split, stratified_kfold(&d, 5, 11).unwrap());
    }

    #[test]
    fn kfold_rejects_bad_k() {
        let d = balanced(3);
        assert!(stratified_kfold(&d, 1, 0).is_err());
        assert!(stratified_kfold(&d, 7, 0).is_err());
        assert!(stratified_kfold(&d, 6, 0).is_ok());
    }

    #[test]
    fn kfold_small_classes_spread_first() {
        // 3 minority rows and k = 5: each lands in a different fold
        let rows = (0..20).map(|_| vec![0u8]).collect();
        let labels = (0..20).map(|r| usize::from(r < 3)).collect();
        let d = Dataset::new(
            vec!["f".into()],
            "class".into(),
            vec!["a".into(), "b".into()],
            rows,
            labels,
        )
        .unwrap();
        let split = stratified_kfold(&d, 5, 3).unwrap();
        let mut folds: Vec<usize> = (0..3).map(|r| split.assignment()[r]).collect();
        folds.sort();
        folds.dedup();
        assert_eq!(folds.len(), 3);
    }

    #[test]
    fn projection() {
        let d = parse_dataset(
            "F,C,B,A,D,E,class\n1,1,0,0,0,1,pro\n0,0,0,0,0,0,anti\n",
            None,
        )
        .unwrap();
        assert_eq!(d.project(&[0, 1, 2, 3, 4, 5]).unwrap(), d);
        let p = d.project(&[3, 2, 5, 0]).unwrap();
        assert_eq!(p.feature_names(), ["A", "B", "E", "F"]);
        assert_eq!(p.row(0), &[0, 0, 1, 1]);
        assert_eq!(p.labels(), d.labels());
        assert!(matches!(d.project(&[]), Err(Error::Index(_))));
        assert!(matches!(d.project(&[1, 1]), Err(Error::Index(_))));
        assert!(matches!(d.project(&[6]), Err(Error::Index(_))));

        let inst = d.instance(0);
        assert_eq!(project_instance(&inst, &[5, 0]).unwrap().values(), &[1, 1]);
        assert!(project_instance(&inst, &[]).is_err());
    }

    #[test]
    fn synthesize_respects_true_path() {
        let dag = synthesize_dag(30, 2, 0.15, 5).unwrap();
        assert!(!dag.is_flat());
        let d = synthesize(&dag, 300, 0.4, 0.5, 9).unwrap();
        assert!(dag.validate_true_path(&d).unwrap().is_empty());
        assert_eq!(d, synthesize(&dag, 300, 0.4, 0.5, 9).unwrap());
    }

    #[test]
    fn synthesize_argument_errors() {
        let dag = FeatureDag::flat(&["a"]).unwrap();
        assert!(synthesize(&dag, 0, 0.5, 0.0, 0).is_err());
        assert!(synthesize(&dag, 10, 0.0, 0.0, 0).is_err());
        assert!(synthesize(&dag, 10, 1.0, 0.0, 0).is_err());
        assert!(synthesize(&dag, 10, 0.5, 1.5, 0).is_err());
    }

    #[test]
    fn synthesize_class_balance_binomial_bound() {
        // P(|Bin(1000, 0.5) - 500| > 100) < 1e-9
        let dag = FeatureDag::flat(&["a", "b"]).unwrap();
        for seed in 0..20 {
            let d = synthesize(&dag, 1000, 0.5, 0.3, seed).unwrap();
            let pos = d.class_counts()[1];
            assert!((400..=600).contains(&pos), "seed {seed}: {pos}");
        }
    }
}
