//! Random forest: bootstrap-sampled Gini trees with per-node feature
//! subsampling, averaged over 300 estimators by default.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{TrainData, Tree, TreeParams};
use super::ModelError;
use crate::seeds::stream_rng;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_estimators: usize,
    pub criterion: String,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub seed: u64,
    /// Draw class-balanced bootstrap samples instead of uniform ones.
    /// Off by default: no reweighting is applied unless asked for.
    pub balance_classes: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_estimators: 300,
            criterion: "gini".to_string(),
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            seed: 0,
            balance_classes: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub n_features: usize,
    pub n_classes: usize,
}

/// Train a forest on row-major data. Trees grow in parallel on bootstrap
/// samples with per-tree derived seeds, so the result does not depend on
/// thread scheduling. Per-node feature subsampling uses `sqrt(n_features)`.
pub fn train_forest(
    values: &[f64],
    width: usize,
    labels: &[u8],
    n_classes: usize,
    cfg: &ForestConfig,
) -> Result<Forest, ModelError> {
    if labels.is_empty() || width == 0 {
        return Err(ModelError::EmptyInput);
    }
    let data = TrainData {
        values,
        width,
        labels,
    };
    let n = labels.len();
    let mtry = ((width as f64).sqrt().floor() as usize).max(1);
    let params = TreeParams {
        min_samples_split: cfg.min_samples_split,
        min_samples_leaf: cfg.min_samples_leaf,
        max_depth: cfg.max_depth,
        feature_subsample: mtry,
    };
    let by_class: Vec<Vec<usize>> = if cfg.balance_classes {
        let mut groups = vec![Vec::new(); n_classes];
        for (i, l) in labels.iter().enumerate() {
            groups[*l as usize].push(i);
        }
        groups.retain(|g| !g.is_empty());
        groups
    } else {
        Vec::new()
    };
    let trees: Result<Vec<Tree>, ModelError> = (0..cfg.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(cfg.seed, "tree", t as u64);
            let indices: Vec<usize> = if cfg.balance_classes {
                // equal draws per present class
                let per_class = (n / by_class.len()).max(1);
                let mut out = Vec::with_capacity(per_class * by_class.len());
                for group in &by_class {
                    for _ in 0..per_class {
                        out.push(group[rng.random_range(0..group.len())]);
                    }
                }
                out
            } else {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            };
            Tree::train(&data, &indices, n_classes, &params, &mut rng)
        })
        .collect();
    Ok(Forest {
        trees: trees?,
        n_features: width,
        n_classes,
    })
}

impl Forest {
    /// Mean of the tree leaf distributions.
    pub fn predict_proba(&self, row: &[f64]) -> Result<Vec<f64>, ModelError> {
        if row.len() != self.n_features {
            return Err(ModelError::WidthMismatch {
                expected: self.n_features,
                got: row.len(),
            });
        }
        let mut acc = vec![0.0f64; self.n_classes];
        for tree in &self.trees {
            for (a, p) in acc.iter_mut().zip(tree.predict_proba(row)) {
                *a += p;
            }
        }
        let n = self.trees.len() as f64;
        for a in &mut acc {
            *a /= n;
        }
        Ok(acc)
    }

    /// Probabilities for many rows, parallel across rows.
    pub fn predict_proba_batch(
        &self,
        values: &[f64],
        width: usize,
    ) -> Result<Vec<Vec<f64>>, ModelError> {
        if width != self.n_features {
            return Err(ModelError::WidthMismatch {
                expected: self.n_features,
                got: width,
            });
        }
        let n = values.len() / width;
        (0..n)
            .into_par_iter()
            .map(|i| self.predict_proba(&values[i * width..(i + 1) * width]))
            .collect()
    }

    /// Probability mass on a class group (e.g. the positive class, or the
    /// long-stay classes summed).
    pub fn predict_group(&self, row: &[f64], group: &[usize]) -> Result<f64, ModelError> {
        let probs = self.predict_proba(row)?;
        Ok(group.iter().map(|c| probs[*c]).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob_pair(n_per: usize, seed: u64, sep: f64) -> (Vec<f64>, Vec<u8>) {
        // two Gaussian-ish blobs in 2-D with the given center separation
        let mut rng = stream_rng(seed, "blob", 0);
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for i in 0..2 * n_per {
            let class = (i % 2) as u8;
            let cx = if class == 0 { 0.0 } else { sep };
            let noise = |rng: &mut rand_chacha::ChaCha8Rng| {
                let u: f64 = rng.random();
                let v: f64 = rng.random();
                (-2.0 * u.max(1e-12).ln()).sqrt() * (std::f64::consts::TAU * v).cos()
            };
            values.push(cx + noise(&mut rng));
            values.push(cx * 0.5 + noise(&mut rng));
            labels.push(class);
        }
        (values, labels)
    }

    #[test]
    fn single_class_training_set_predicts_it_with_certainty() {
        let values = vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let labels = vec![1u8, 1, 1];
        let cfg = ForestConfig {
            n_estimators: 10,
            ..ForestConfig::default()
        };
        let forest = train_forest(&values, 2, &labels, 2, &cfg).unwrap();
        assert_eq!(forest.predict_proba(&[1.0, 2.0]).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn separable_blobs_reach_95_percent_holdout_accuracy() {
        // generator margin is ~3 sigma between class centers
        let (train_v, train_l) = blob_pair(150, 5, 6.0);
        let (test_v, test_l) = blob_pair(100, 6, 6.0);
        let cfg = ForestConfig {
            n_estimators: 60,
            seed: 2,
            ..ForestConfig::default()
        };
        let forest = train_forest(&train_v, 2, &train_l, 2, &cfg).unwrap();
        let mut correct = 0usize;
        for (i, label) in test_l.iter().enumerate() {
            let p = forest.predict_proba(&test_v[i * 2..i * 2 + 2]).unwrap();
            let pred = u8::from(p[1] > 0.5);
            correct += usize::from(pred == *label);
        }
        let acc = correct as f64 / test_l.len() as f64;
        assert!(acc >= 0.95, "holdout accuracy {acc}");
    }

    #[test]
    fn same_seed_gives_identical_forests() {
        let (values, labels) = blob_pair(60, 9, 2.0);
        let cfg = ForestConfig {
            n_estimators: 20,
            seed: 42,
            ..ForestConfig::default()
        };
        let a = train_forest(&values, 2, &labels, 2, &cfg).unwrap();
        let b = train_forest(&values, 2, &labels, 2, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn defaults_are_the_standard_hyperparameters() {
        let cfg = ForestConfig::default();
        assert_eq!(cfg.n_estimators, 300);
        assert_eq!(cfg.criterion, "gini");
        assert_eq!(cfg.max_depth, None);
        assert_eq!(cfg.min_samples_split, 2);
        assert_eq!(cfg.min_samples_leaf, 1);
        assert!(!cfg.balance_classes);
    }

    #[test]
    fn balanced_bootstrap_equalizes_class_mass() {
        // unsplittable rows: every tree is a single leaf holding its
        // bootstrap class fractions, so the flag is directly observable
        let n = 200;
        let values = vec![1.0; n];
        let labels: Vec<u8> = (0..n).map(|i| u8::from(i % 10 == 0)).collect();
        let train = |balance: bool| {
            let cfg = ForestConfig {
                n_estimators: 60,
                seed: 4,
                balance_classes: balance,
                ..ForestConfig::default()
            };
            train_forest(&values, 1, &labels, 2, &cfg).unwrap()
        };
        let plain = train(false).predict_proba(&[1.0]).unwrap()[1];
        let balanced = train(true).predict_proba(&[1.0]).unwrap()[1];
        assert!((plain - 0.1).abs() < 0.05, "plain leaf mass {plain}");
        assert!((balanced - 0.5).abs() < 0.05, "balanced leaf mass {balanced}");
    }

    #[test]
    fn probabilities_are_a_distribution_and_order_invariant() {
        let (values, labels) = blob_pair(80, 3, 1.0);
        let cfg = ForestConfig {
            n_estimators: 30,
            seed: 8,
            ..ForestConfig::default()
        };
        let mut forest = train_forest(&values, 2, &labels, 2, &cfg).unwrap();
        let row = [0.4, -0.2];
        let before = forest.predict_proba(&row).unwrap();
        let sum: f64 = before.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(before.iter().all(|p| (0.0..=1.0).contains(p)));
        forest.trees.reverse();
        let after = forest.predict_proba(&row).unwrap();
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let (values, labels) = blob_pair(20, 3, 1.0);
        let cfg = ForestConfig {
            n_estimators: 5,
            ..ForestConfig::default()
        };
        let forest = train_forest(&values, 2, &labels, 2, &cfg).unwrap();
        assert!(matches!(
            forest.predict_proba(&[1.0]),
            Err(ModelError::WidthMismatch {
                expected: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn two_single_leaf_trees_average_their_votes() {
        let forest = Forest {
            trees: vec![
                Tree {
                    nodes: vec![super::super::tree::Node::Leaf {
                        probs: vec![1.0, 0.0],
                        cover: 1.0,
                    }],
                    n_classes: 2,
                },
                Tree {
                    nodes: vec![super::super::tree::Node::Leaf {
                        probs: vec![0.0, 1.0],
                        cover: 1.0,
                    }],
                    n_classes: 2,
                },
            ],
            n_features: 3,
            n_classes: 2,
        };
        assert_eq!(forest.predict_proba(&[0.0; 3]).unwrap(), vec![0.5, 0.5]);
    }
}
