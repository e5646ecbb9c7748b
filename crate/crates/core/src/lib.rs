//! Tree Augmented Naive Bayes and its lazy, hierarchical-redundancy-eliminated
//! variant (HRE-TAN) for binary features organized in a DAG, together with
//! the evaluation harness used to compare them.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod estimation;
pub mod evaluation;
pub mod hierarchy;
pub mod hretan;
pub mod tan;

pub use dataset::{Dataset, Instance};
pub use error::{Error, Result};
pub use hierarchy::FeatureDag;
pub use tan::{PredictionResult, RootPolicy};
