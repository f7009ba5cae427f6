//! Metric suite, calibration, bootstrap confidence intervals, pairwise
//! significance matrices, and sliced evaluation.

mod bootstrap;
mod metrics;
mod sliced;

pub use bootstrap::{bootstrap_ci, significance_matrix, BootstrapOutcome, SignificanceMatrix};
pub use metrics::{
    auc_pr, auc_roc, brier, calibration_curve, kappa, mad, CalibrationBin, KappaWeighting,
    LOS_REPRESENTATIVE_HOURS,
};
pub use sliced::{sliced_eval, SliceResult, Slicer};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty input")]
    Empty,
    #[error("inputs have mismatched lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("metric needs both classes present")]
    SingleClass,
    #[error("metric needs at least one positive")]
    NoPositives,
    #[error("bootstrap needs at least 100 resamples, got {0}")]
    TooFewResamples(usize),
    #[error("significance needs at least two models")]
    TooFewModels,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    AucRoc,
    AucPr,
    Kappa,
    Mad,
    Brier,
}

impl std::fmt::Display for MetricName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            MetricName::AucRoc => "AUC-ROC",
            MetricName::AucPr => "AUC-PR",
            MetricName::Kappa => "Kappa",
            MetricName::Mad => "MAD",
            MetricName::Brier => "Brier",
        };
        f.write_str(s)
    }
}

/// 95% percentile interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ci {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
}

/// A named point estimate with an optional confidence interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub name: MetricName,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci: Option<Ci>,
}
