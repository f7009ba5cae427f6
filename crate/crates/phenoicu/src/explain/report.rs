//! Cohort-level importance rankings and per-patient attribution timelines,
//! with the tabular exports behind the beeswarm, heatmap and force-plot
//! figures.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{tree_shapley, ExplainError, ExplainTarget, Explanation};
use crate::models::forest::Forest;

/// Mean-|φ| feature ranking over an evaluation set, with the per-sample φ
/// matrix kept for the beeswarm export.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub feature_names: Vec<String>,
    /// (feature index, mean |φ|), descending, ties by name.
    pub ranking: Vec<(usize, f64)>,
    pub explanations: Vec<Explanation>,
}

impl ImportanceReport {
    pub fn top(&self, k: usize) -> Vec<(&str, f64)> {
        self.ranking
            .iter()
            .take(k)
            .map(|(i, v)| (self.feature_names[*i].as_str(), *v))
            .collect()
    }

    /// Rank position of a feature name (0 = most important).
    pub fn rank_of(&self, name: &str) -> Option<usize> {
        let idx = self.feature_names.iter().position(|n| n == name)?;
        self.ranking.iter().position(|(i, _)| *i == idx)
    }
}

/// Explain every row and rank features by mean absolute attribution.
pub fn importance_report(
    forest: &Forest,
    values: &[f64],
    width: usize,
    feature_names: &[String],
    target: &ExplainTarget,
) -> Result<ImportanceReport, ExplainError> {
    if width != forest.n_features || feature_names.len() != width {
        return Err(ExplainError::WidthMismatch {
            expected: forest.n_features,
            got: width,
        });
    }
    let n = values.len() / width;
    let explanations: Result<Vec<Explanation>, ExplainError> = (0..n)
        .into_par_iter()
        .map(|i| tree_shapley(forest, &values[i * width..(i + 1) * width], target))
        .collect();
    let explanations = explanations?;
    let mut mean_abs = vec![0.0f64; width];
    for e in &explanations {
        for (m, p) in mean_abs.iter_mut().zip(&e.phi) {
            *m += p.abs();
        }
    }
    for m in &mut mean_abs {
        *m /= n.max(1) as f64;
    }
    let mut ranking: Vec<(usize, f64)> = mean_abs.iter().copied().enumerate().collect();
    ranking.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| feature_names[a.0].cmp(&feature_names[b.0]))
    });
    Ok(ImportanceReport {
        feature_names: feature_names.to_vec(),
        ranking,
        explanations,
    })
}

/// `feature,sample,value,phi` rows for beeswarm plotting.
pub fn write_beeswarm_csv(
    mut w: impl Write,
    report: &ImportanceReport,
    values: &[f64],
    width: usize,
) -> Result<(), ExplainError> {
    writeln!(w, "feature,sample,value,phi")?;
    for (s, e) in report.explanations.iter().enumerate() {
        for (f, phi) in e.phi.iter().enumerate() {
            writeln!(
                w,
                "{},{s},{},{phi}",
                report.feature_names[f],
                values[s * width + f]
            )?;
        }
    }
    Ok(())
}

/// Hour-by-hour attribution series for one episode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimelineReport {
    pub hours: Vec<u32>,
    pub feature_names: Vec<String>,
    pub explanations: Vec<Explanation>,
    /// Per-feature mean |φ| across the episode (heatmap side bars).
    pub importance: Vec<f64>,
    /// Feature indices ordered by that importance, descending.
    pub feature_order: Vec<usize>,
    /// Raw explained probability per hour.
    pub probability: Vec<f64>,
    /// The same series min-max normalized over the episode.
    pub probability_normalized: Vec<f64>,
}

/// Explain one episode's rows hour by hour (rows must be in hour order and
/// belong to one episode).
pub fn patient_timeline(
    forest: &Forest,
    values: &[f64],
    width: usize,
    hours: &[u32],
    feature_names: &[String],
    target: &ExplainTarget,
) -> Result<TimelineReport, ExplainError> {
    if width != forest.n_features || feature_names.len() != width {
        return Err(ExplainError::WidthMismatch {
            expected: forest.n_features,
            got: width,
        });
    }
    let explanations: Result<Vec<Explanation>, ExplainError> = (0..hours.len())
        .into_par_iter()
        .map(|i| tree_shapley(forest, &values[i * width..(i + 1) * width], target))
        .collect();
    let explanations = explanations?;
    let mut importance = vec![0.0f64; width];
    for e in &explanations {
        for (m, p) in importance.iter_mut().zip(&e.phi) {
            *m += p.abs();
        }
    }
    for m in &mut importance {
        *m /= hours.len().max(1) as f64;
    }
    let mut feature_order: Vec<usize> = (0..width).collect();
    feature_order.sort_by(|a, b| {
        importance[*b]
            .total_cmp(&importance[*a])
            .then_with(|| feature_names[*a].cmp(&feature_names[*b]))
    });
    let probability: Vec<f64> = explanations.iter().map(|e| e.prediction).collect();
    let (lo, hi) = probability
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(*p), hi.max(*p))
        });
    let span = if hi > lo { hi - lo } else { 1.0 };
    let probability_normalized = probability.iter().map(|p| (p - lo) / span).collect();
    Ok(TimelineReport {
        hours: hours.to_vec(),
        feature_names: feature_names.to_vec(),
        explanations,
        importance,
        feature_order,
        probability,
        probability_normalized,
    })
}

impl TimelineReport {
    pub fn phi_at(&self, hour: u32, feature_name: &str) -> Option<f64> {
        let h = self.hours.iter().position(|x| *x == hour)?;
        let f = self.feature_names.iter().position(|n| n == feature_name)?;
        Some(self.explanations[h].phi[f])
    }
}

/// Long-format force-plot rows:
/// `hour,feature,value,phi,prediction,probability_raw,probability_minmax`.
pub fn write_timeline_csv(
    mut w: impl Write,
    report: &TimelineReport,
    values: &[f64],
    width: usize,
) -> Result<(), ExplainError> {
    writeln!(
        w,
        "hour,feature,value,phi,prediction,probability_raw,probability_minmax"
    )?;
    for (h, hour) in report.hours.iter().enumerate() {
        let e = &report.explanations[h];
        let reconstructed = e.base_value + e.phi.iter().sum::<f64>();
        for &f in &report.feature_order {
            writeln!(
                w,
                "{hour},{},{},{},{reconstructed},{},{}",
                report.feature_names[f],
                values[h * width + f],
                e.phi[f],
                report.probability[h],
                report.probability_normalized[h]
            )?;
        }
    }
    Ok(())
}

/// Wide-format heatmap: one row per feature (importance-ordered), one column
/// per hour, plus the importance bar value.
pub fn write_heatmap_csv(mut w: impl Write, report: &TimelineReport) -> Result<(), ExplainError> {
    write!(w, "feature,importance")?;
    for hour in &report.hours {
        write!(w, ",h{hour}")?;
    }
    writeln!(w)?;
    for &f in &report.feature_order {
        write!(w, "{},{}", report.feature_names[f], report.importance[f])?;
        for e in &report.explanations {
            write!(w, ",{}", e.phi[f])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::forest::ForestConfig;
    use crate::models::train_forest;
    use rand::Rng;

    fn names(width: usize) -> Vec<String> {
        (0..width).map(|i| format!("f{i}")).collect()
    }

    /// Forest trained on data where only feature 0 matters.
    fn single_feature_forest(width: usize) -> (Forest, Vec<f64>) {
        let mut rng = crate::seeds::stream_rng(9, "report", 0);
        let n = 400;
        let values: Vec<f64> = (0..n * width).map(|_| rng.random::<f64>()).collect();
        let labels: Vec<u8> = (0..n).map(|i| u8::from(values[i * width] > 0.5)).collect();
        let cfg = ForestConfig {
            n_estimators: 20,
            seed: 1,
            ..ForestConfig::default()
        };
        (
            train_forest(&values, width, &labels, 2, &cfg).unwrap(),
            values,
        )
    }

    #[test]
    fn dominant_feature_ranks_first() {
        let width = 4;
        let (forest, values) = single_feature_forest(width);
        let report = importance_report(
            &forest,
            &values[..50 * width],
            width,
            &names(width),
            &ExplainTarget::positive(),
        )
        .unwrap();
        assert_eq!(report.ranking[0].0, 0);
        assert_eq!(report.rank_of("f0"), Some(0));
    }

    #[test]
    fn duplicated_rows_leave_the_report_unchanged() {
        let width = 3;
        let (forest, values) = single_feature_forest(width);
        let rows = &values[..30 * width];
        let mut doubled = rows.to_vec();
        doubled.extend_from_slice(rows);
        let a = importance_report(&forest, rows, width, &names(width), &ExplainTarget::positive())
            .unwrap();
        let b = importance_report(
            &forest,
            &doubled,
            width,
            &names(width),
            &ExplainTarget::positive(),
        )
        .unwrap();
        for ((ia, va), (ib, vb)) in a.ranking.iter().zip(&b.ranking) {
            assert_eq!(ia, ib);
            assert!((va - vb).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_rows_give_a_constant_timeline() {
        let width = 3;
        let (forest, _) = single_feature_forest(width);
        let row = vec![0.4, 0.6, 0.1];
        let mut values = Vec::new();
        for _ in 0..5 {
            values.extend_from_slice(&row);
        }
        let hours: Vec<u32> = (5..10).collect();
        let t = patient_timeline(
            &forest,
            &values,
            width,
            &hours,
            &names(width),
            &ExplainTarget::positive(),
        )
        .unwrap();
        for e in &t.explanations[1..] {
            assert_eq!(e.phi, t.explanations[0].phi);
        }
        // additivity column: prediction equals base + sum(phi) each hour
        for e in &t.explanations {
            assert!(e.additivity_gap() < 1e-9);
        }
    }

    #[test]
    fn feature_flip_moves_phi_at_that_hour() {
        let width = 3;
        let (forest, _) = single_feature_forest(width);
        // feature 0 jumps at the 4th row (hour 45)
        let mut values = Vec::new();
        for h in 0..6 {
            values.extend_from_slice(&[if h >= 3 { 0.9 } else { 0.1 }, 0.5, 0.5]);
        }
        let hours: Vec<u32> = (42..48).collect();
        let t = patient_timeline(
            &forest,
            &values,
            width,
            &hours,
            &names(width),
            &ExplainTarget::positive(),
        )
        .unwrap();
        let before = t.phi_at(44, "f0").unwrap();
        let after = t.phi_at(45, "f0").unwrap();
        assert!(after > before, "{after} vs {before}");
        assert!(t.probability[3] > t.probability[2]);
    }

    #[test]
    fn csv_exports_are_well_formed() {
        let width = 3;
        let (forest, values) = single_feature_forest(width);
        let rows = &values[..4 * width];
        let report =
            importance_report(&forest, rows, width, &names(width), &ExplainTarget::positive())
                .unwrap();
        let mut buf = Vec::new();
        write_beeswarm_csv(&mut buf, &report, rows, width).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 4 * width);

        let hours: Vec<u32> = (0..4).collect();
        let t = patient_timeline(
            &forest,
            rows,
            width,
            &hours,
            &names(width),
            &ExplainTarget::positive(),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_timeline_csv(&mut buf, &t, rows, width).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("hour,feature,value,phi,"));
        assert_eq!(text.lines().count(), 1 + 4 * width);
        let mut buf = Vec::new();
        write_heatmap_csv(&mut buf, &t).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + width);
    }
}
