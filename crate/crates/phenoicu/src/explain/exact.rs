//! Exact Shapley values by subset enumeration.
//!
//! For every feature i the attribution is the weighted average of marginal
//! contributions over subsets S of the remaining features,
//! `sum_S |S|!(M-|S|-1)!/M! * (v(S + i) - v(S))`, where `v(S)` is the model
//! expectation with the features in S fixed to the explained row. `v` is
//! evaluated once per subset and reused across features.

use super::{ExplainError, ExplainTarget, Explanation};
use crate::models::forest::Forest;
use crate::models::tree::{Node, Tree};

/// Default cap on enumerable features (2^M subset evaluations).
pub const SUBSET_LIMIT_DEFAULT: usize = 14;

/// Reference rows the marginal expectation averages over.
#[derive(Debug, Clone)]
pub struct BackgroundSet {
    values: Vec<f64>,
    width: usize,
}

impl BackgroundSet {
    pub fn new(values: Vec<f64>, width: usize) -> Result<Self, ExplainError> {
        if values.is_empty() || width == 0 || !values.len().is_multiple_of(width) {
            return Err(ExplainError::EmptyBackground);
        }
        Ok(BackgroundSet { values, width })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self, ExplainError> {
        let width = rows.first().map_or(0, |r| r.len());
        let mut values = Vec::with_capacity(rows.len() * width);
        for r in rows {
            values.extend_from_slice(r);
        }
        BackgroundSet::new(values, width)
    }

    pub fn n_rows(&self) -> usize {
        self.values.len() / self.width
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.width..(i + 1) * self.width]
    }
}

/// A conditional-expectation game bound to one explained row.
trait SubsetValuation {
    fn n_features(&self) -> usize;
    /// v(S) for the subset encoded as a bitmask.
    fn value(&self, mask: u64) -> f64;
}

/// Marginal semantics: features outside S are replaced by background rows and
/// the model output is averaged.
struct MarginalValuation<'a, F: Fn(&[f64]) -> f64> {
    f: &'a F,
    x: &'a [f64],
    background: &'a BackgroundSet,
}

impl<'a, F: Fn(&[f64]) -> f64> SubsetValuation for MarginalValuation<'a, F> {
    fn n_features(&self) -> usize {
        self.x.len()
    }

    fn value(&self, mask: u64) -> f64 {
        let mut total = 0.0;
        let mut z = vec![0.0; self.x.len()];
        for b in 0..self.background.n_rows() {
            let row = self.background.row(b);
            for j in 0..self.x.len() {
                z[j] = if mask & (1 << j) != 0 {
                    self.x[j]
                } else {
                    row[j]
                };
            }
            total += (self.f)(&z);
        }
        total / self.background.n_rows() as f64
    }
}

/// Tree-path-dependent semantics: outside-S splits are averaged with the
/// training cover of each branch, matching the fast tree algorithm.
struct TreePathValuation<'a> {
    forest: &'a Forest,
    x: &'a [f64],
    target: &'a ExplainTarget,
}

fn tree_subset_value(tree: &Tree, at: usize, x: &[f64], mask: u64, target: &ExplainTarget) -> f64 {
    match &tree.nodes[at] {
        Node::Leaf { probs, .. } => target.leaf_value(probs),
        Node::Split {
            feature,
            threshold,
            left,
            right,
            cover,
        } => {
            if mask & (1 << *feature) != 0 {
                let next = if x[*feature] <= *threshold {
                    *left
                } else {
                    *right
                };
                tree_subset_value(tree, next as usize, x, mask, target)
            } else {
                let cover_of = |n: u32| match &tree.nodes[n as usize] {
                    Node::Leaf { cover, .. } | Node::Split { cover, .. } => *cover,
                };
                let wl = cover_of(*left) / cover;
                let wr = cover_of(*right) / cover;
                wl * tree_subset_value(tree, *left as usize, x, mask, target)
                    + wr * tree_subset_value(tree, *right as usize, x, mask, target)
            }
        }
    }
}

impl<'a> SubsetValuation for TreePathValuation<'a> {
    fn n_features(&self) -> usize {
        self.x.len()
    }

    fn value(&self, mask: u64) -> f64 {
        let total: f64 = self
            .forest
            .trees
            .iter()
            .map(|t| tree_subset_value(t, 0, self.x, mask, self.target))
            .sum();
        total / self.forest.trees.len() as f64
    }
}

fn enumerate(valuation: &dyn SubsetValuation, limit: usize) -> Result<Explanation, ExplainError> {
    let m = valuation.n_features();
    if m > limit || m >= 64 {
        return Err(ExplainError::TooManyFeatures {
            n_features: m,
            limit,
        });
    }
    let full: u64 = if m == 0 { 0 } else { (1u64 << m) - 1 };
    let mut v = vec![0.0f64; (full + 1) as usize];
    for (mask, slot) in v.iter_mut().enumerate() {
        *slot = valuation.value(mask as u64);
    }

    // w[s] = s! (M-s-1)! / M!
    let mut factorial = vec![1.0f64; m + 1];
    for k in 1..=m {
        factorial[k] = factorial[k - 1] * k as f64;
    }
    let weights: Vec<f64> = (0..m.max(1))
        .map(|s| {
            if m == 0 {
                0.0
            } else {
                factorial[s] * factorial[m - s - 1] / factorial[m]
            }
        })
        .collect();

    let mut phi = vec![0.0f64; m];
    for mask in 0..=full {
        let s = mask.count_ones() as usize;
        for (i, phi_i) in phi.iter_mut().enumerate() {
            let bit = 1u64 << i;
            if mask & bit == 0 {
                *phi_i += weights[s] * (v[(mask | bit) as usize] - v[mask as usize]);
            }
        }
    }
    Ok(Explanation {
        base_value: v[0],
        phi,
        prediction: v[full as usize],
    })
}

/// Exact Shapley values of a black-box scalar model under marginal
/// (background substitution) expectations.
pub fn exact_shapley(
    f: impl Fn(&[f64]) -> f64,
    x: &[f64],
    background: &BackgroundSet,
    subset_limit: usize,
) -> Result<Explanation, ExplainError> {
    if background.width() != x.len() {
        return Err(ExplainError::WidthMismatch {
            expected: x.len(),
            got: background.width(),
        });
    }
    enumerate(
        &MarginalValuation {
            f: &f,
            x,
            background,
        },
        subset_limit,
    )
}

/// Exact Shapley values of a forest output under tree-path-dependent
/// expectations — the oracle the fast tree algorithm is checked against.
pub fn exact_shapley_tree(
    forest: &Forest,
    x: &[f64],
    target: &ExplainTarget,
    subset_limit: usize,
) -> Result<Explanation, ExplainError> {
    if x.len() != forest.n_features {
        return Err(ExplainError::WidthMismatch {
            expected: forest.n_features,
            got: x.len(),
        });
    }
    target.validate(forest.n_classes)?;
    enumerate(&TreePathValuation { forest, x, target }, subset_limit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn additive_model_recovers_closed_form() {
        // f = x1 + x2 with background means (m1, m2): phi_i = x_i - m_i
        let background = BackgroundSet::new(vec![1.0, 5.0, 3.0, 7.0], 2).unwrap();
        let f = |row: &[f64]| row[0] + row[1];
        let x = [10.0, 20.0];
        let e = exact_shapley(f, &x, &background, SUBSET_LIMIT_DEFAULT).unwrap();
        let (m1, m2) = (2.0, 6.0);
        assert!((e.phi[0] - (x[0] - m1)).abs() < 1e-12);
        assert!((e.phi[1] - (x[1] - m2)).abs() < 1e-12);
        assert!((e.base_value - (m1 + m2)).abs() < 1e-12);
        assert!(e.additivity_gap() < 1e-12);
    }

    #[test]
    fn constant_model_attributes_nothing() {
        let background = BackgroundSet::new(vec![0.0, 0.0, 1.0, 1.0], 2).unwrap();
        let e = exact_shapley(|_| 4.5, &[9.0, -3.0], &background, 14).unwrap();
        assert!(e.phi.iter().all(|p| p.abs() < 1e-15));
        assert_eq!(e.base_value, 4.5);
    }

    #[test]
    fn symmetric_features_share_credit() {
        // f = x1 * x2, exchangeable background, x1 == x2
        let background = BackgroundSet::new(vec![1.0, 2.0, 2.0, 1.0, 0.5, 0.5], 2).unwrap();
        let e = exact_shapley(|r| r[0] * r[1], &[3.0, 3.0], &background, 14).unwrap();
        assert!((e.phi[0] - e.phi[1]).abs() < 1e-12);
        assert!(e.additivity_gap() < 1e-12);
    }

    #[test]
    fn feature_limit_is_enforced() {
        let background = BackgroundSet::new(vec![0.0; 15], 15).unwrap();
        let x = [0.0; 15];
        assert!(matches!(
            exact_shapley(|_| 0.0, &x, &background, 14),
            Err(ExplainError::TooManyFeatures { n_features: 15, limit: 14 })
        ));
    }

    #[test]
    fn empty_background_is_rejected() {
        assert!(BackgroundSet::new(vec![], 3).is_err());
    }
}
