//! Shapley-value attribution for trained models.
//!
//! Two routes are implemented and cross-checked:
//!
//! * [`exact_shapley`] / [`exact_shapley_tree`] — subset enumeration of the
//!   defining weighted-average formula, exponential in the feature count and
//!   capped accordingly. The conditional expectation is either `marginal`
//!   (background substitution) or `tree_path_dependent` (cover-weighted
//!   traversal).
//! * [`tree_shapley`] — the polynomial-time path-dependent algorithm for
//!   forests, equal to the exact route under matching semantics.

mod exact;
mod report;
mod tree_shap;

pub use exact::{exact_shapley, exact_shapley_tree, BackgroundSet, SUBSET_LIMIT_DEFAULT};
pub use report::{
    importance_report, patient_timeline, write_beeswarm_csv, write_heatmap_csv,
    write_timeline_csv, ImportanceReport, TimelineReport,
};
pub use tree_shap::{tree_expected_value, tree_shapley};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("{n_features} features exceed the subset enumeration limit {limit}")]
    TooManyFeatures { n_features: usize, limit: usize },
    #[error("background set is empty")]
    EmptyBackground,
    #[error("row width {got} does not match expected {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("class {class} out of range for {n_classes} classes")]
    BadClass { class: usize, n_classes: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which scalar output of a classifier is being explained: the probability
/// mass on a group of classes (singleton for the usual positive class; e.g.
/// the two longest-stay bins summed for long-stay reports).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplainTarget {
    pub classes: Vec<usize>,
}

impl ExplainTarget {
    /// Positive class of a binary task.
    pub fn positive() -> Self {
        ExplainTarget { classes: vec![1] }
    }

    pub fn class(c: usize) -> Self {
        ExplainTarget { classes: vec![c] }
    }

    pub fn group(classes: Vec<usize>) -> Self {
        ExplainTarget { classes }
    }

    pub fn validate(&self, n_classes: usize) -> Result<(), ExplainError> {
        for c in &self.classes {
            if *c >= n_classes {
                return Err(ExplainError::BadClass {
                    class: *c,
                    n_classes,
                });
            }
        }
        Ok(())
    }

    pub fn leaf_value(&self, probs: &[f64]) -> f64 {
        self.classes.iter().map(|c| probs[*c]).sum()
    }
}

/// Additive attribution of one model output at one sample: the output equals
/// `base_value + phi.sum()` up to the method tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub base_value: f64,
    pub phi: Vec<f64>,
    /// The explained output f(x) itself.
    pub prediction: f64,
}

impl Explanation {
    /// |f(x) − (φ₀ + Σφ)|
    pub fn additivity_gap(&self) -> f64 {
        (self.prediction - self.base_value - self.phi.iter().sum::<f64>()).abs()
    }
}
