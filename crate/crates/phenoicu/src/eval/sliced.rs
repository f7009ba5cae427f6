//! Per-slice evaluation: disease-specific cohorts by tag, or episodes grouped
//! by their total stay-length bin.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::cohort::Episode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slicer {
    CohortTag,
    LosBucket,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceResult {
    pub value: f64,
    pub count: usize,
}

/// Evaluate a metric independently per slice. Samples are tagged with the
/// index of the episode they came from; an episode with several cohort tags
/// contributes to each of them. Slices where the metric is degenerate are
/// absent from the output, not zero.
pub fn sliced_eval<T, F>(
    samples: &[(usize, T)],
    episodes: &[Episode],
    slicer: Slicer,
    metric: F,
) -> BTreeMap<String, SliceResult>
where
    T: Clone,
    F: Fn(&[T]) -> Result<f64, EvalError>,
{
    let mut groups: BTreeMap<String, Vec<T>> = BTreeMap::new();
    for (episode_idx, sample) in samples {
        let episode = &episodes[*episode_idx];
        match slicer {
            Slicer::CohortTag => {
                for tag in &episode.cohort_tags {
                    groups.entry(tag.clone()).or_default().push(sample.clone());
                }
            }
            Slicer::LosBucket => {
                groups
                    .entry(format!("los_bin_{}", episode.los_bin()))
                    .or_default()
                    .push(sample.clone());
            }
        }
    }
    let mut out = BTreeMap::new();
    for (key, group) in groups {
        if let Ok(value) = metric(&group) {
            out.insert(
                key,
                SliceResult {
                    value,
                    count: group.len(),
                },
            );
        }
    }
    out
}
