//! CART decision tree with Gini impurity, grown greedily to purity.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;

/// Flat-arena tree node. `cover` is the number of training rows that reached
/// the node; the path-dependent explainer weighs branches with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: u32,
        right: u32,
        cover: f64,
    },
    Leaf {
        probs: Vec<f64>,
        cover: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
    pub n_classes: usize,
}

/// Borrowed training view: row-major values plus labels.
#[derive(Clone, Copy)]
pub struct TrainData<'a> {
    pub values: &'a [f64],
    pub width: usize,
    pub labels: &'a [u8],
}

impl<'a> TrainData<'a> {
    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.values[i * self.width..(i + 1) * self.width]
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TreeParams {
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_depth: Option<usize>,
    /// Features examined per node; `width` disables subsampling.
    pub feature_subsample: usize,
}

impl Tree {
    /// Grow a tree on the given row indices. Deterministic for a fixed RNG:
    /// candidate features are drawn per node, then examined in ascending
    /// order, with ties broken toward the lowest feature index and threshold.
    pub fn train(
        data: &TrainData<'_>,
        indices: &[usize],
        n_classes: usize,
        params: &TreeParams,
        rng: &mut ChaCha8Rng,
    ) -> Result<Tree, ModelError> {
        if indices.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        let mut tree = Tree {
            nodes: Vec::new(),
            n_classes,
        };
        let mut scratch = indices.to_vec();
        let root = tree.grow(data, &mut scratch, n_classes, params, rng, 0);
        debug_assert_eq!(root, 0);
        Ok(tree)
    }

    fn leaf(&mut self, counts: &[usize], n: usize) -> u32 {
        let probs = counts
            .iter()
            .map(|c| *c as f64 / n as f64)
            .collect::<Vec<_>>();
        self.nodes.push(Node::Leaf {
            probs,
            cover: n as f64,
        });
        (self.nodes.len() - 1) as u32
    }

    fn grow(
        &mut self,
        data: &TrainData<'_>,
        indices: &mut [usize],
        n_classes: usize,
        params: &TreeParams,
        rng: &mut ChaCha8Rng,
        depth: usize,
    ) -> u32 {
        let n = indices.len();
        let mut counts = vec![0usize; n_classes];
        for &i in indices.iter() {
            counts[data.labels[i] as usize] += 1;
        }
        let pure = counts.contains(&n);
        let depth_capped = params.max_depth.is_some_and(|d| depth >= d);
        if pure || n < params.min_samples_split || depth_capped {
            return self.leaf(&counts, n);
        }

        let candidates = sample_features(rng, data.width, params.feature_subsample);
        let best = best_split(data, indices, &counts, &candidates, params.min_samples_leaf);
        let Some((feature, threshold)) = best else {
            return self.leaf(&counts, n);
        };

        // in-place partition keeps allocations near zero
        let mut mid = 0usize;
        for i in 0..n {
            if data.row(indices[i])[feature] <= threshold {
                indices.swap(i, mid);
                mid += 1;
            }
        }
        debug_assert!(mid > 0 && mid < n);

        let slot = self.nodes.len() as u32;
        self.nodes.push(Node::Split {
            feature,
            threshold,
            left: 0,
            right: 0,
            cover: n as f64,
        });
        let (left_idx, right_idx) = indices.split_at_mut(mid);
        let left = self.grow(data, left_idx, n_classes, params, rng, depth + 1);
        let right = self.grow(data, right_idx, n_classes, params, rng, depth + 1);
        match &mut self.nodes[slot as usize] {
            Node::Split {
                left: l, right: r, ..
            } => {
                *l = left;
                *r = right;
            }
            Node::Leaf { .. } => unreachable!(),
        }
        slot
    }

    pub fn predict_leaf(&self, row: &[f64]) -> &Node {
        let mut cursor = 0usize;
        loop {
            match &self.nodes[cursor] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    cursor = if row[*feature] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
                leaf @ Node::Leaf { .. } => return leaf,
            }
        }
    }

    pub fn predict_proba(&self, row: &[f64]) -> &[f64] {
        match self.predict_leaf(row) {
            Node::Leaf { probs, .. } => probs,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn max_depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }
}

/// Distinct feature indices in ascending order (partial Fisher-Yates).
fn sample_features(rng: &mut ChaCha8Rng, width: usize, take: usize) -> Vec<usize> {
    let take = take.clamp(1, width);
    if take == width {
        return (0..width).collect();
    }
    let mut pool: Vec<usize> = (0..width).collect();
    for i in 0..take {
        let j = rng.random_range(i..width);
        pool.swap(i, j);
    }
    let mut chosen = pool[..take].to_vec();
    chosen.sort_unstable();
    chosen
}

fn gini_from_counts(counts: &[usize], n: usize) -> f64 {
    let mut sum_sq = 0.0;
    for c in counts {
        let p = *c as f64 / n as f64;
        sum_sq += p * p;
    }
    1.0 - sum_sq
}

/// Best (feature, threshold) by weighted Gini over candidate boundaries at
/// midpoints of consecutive distinct values. Returns `None` when no feature
/// separates the rows.
fn best_split(
    data: &TrainData<'_>,
    indices: &[usize],
    parent_counts: &[usize],
    candidates: &[usize],
    min_samples_leaf: usize,
) -> Option<(usize, f64)> {
    let n = indices.len();
    let n_classes = parent_counts.len();
    let mut best: Option<(f64, usize, f64)> = None;
    let mut sorted: Vec<(f64, u8)> = Vec::with_capacity(n);

    for &feature in candidates {
        sorted.clear();
        sorted.extend(
            indices
                .iter()
                .map(|&i| (data.row(i)[feature], data.labels[i])),
        );
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        if sorted[0].0 == sorted[n - 1].0 {
            continue; // constant feature here
        }
        let mut left_counts = vec![0usize; n_classes];
        let mut left_n = 0usize;
        for w in 0..n - 1 {
            left_counts[sorted[w].1 as usize] += 1;
            left_n += 1;
            if sorted[w + 1].0 <= sorted[w].0 {
                continue; // not a distinct-value boundary
            }
            let right_n = n - left_n;
            if left_n < min_samples_leaf || right_n < min_samples_leaf {
                continue;
            }
            let mut right_counts = vec![0usize; n_classes];
            for (c, rc) in right_counts.iter_mut().enumerate() {
                *rc = parent_counts[c] - left_counts[c];
            }
            let score = (left_n as f64 * gini_from_counts(&left_counts, left_n)
                + right_n as f64 * gini_from_counts(&right_counts, right_n))
                / n as f64;
            let threshold = 0.5 * (sorted[w].0 + sorted[w + 1].0);
            let candidate = (score, feature, threshold);
            let better = match &best {
                None => true,
                // strict improvement only: first (lowest feature, lowest
                // threshold) candidate wins ties
                Some((s, _, _)) => score < *s,
            };
            if better {
                best = Some(candidate);
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(1)
    }

    fn params(width: usize) -> TreeParams {
        TreeParams {
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_depth: None,
            feature_subsample: width,
        }
    }

    #[test]
    fn pure_node_is_a_single_leaf() {
        let values = [0.0, 1.0, 2.0, 3.0];
        let labels = [1u8, 1, 1, 1];
        let data = TrainData {
            values: &values,
            width: 1,
            labels: &labels,
        };
        let tree = Tree::train(&data, &[0, 1, 2, 3], 2, &params(1), &mut rng()).unwrap();
        assert_eq!(tree.nodes.len(), 1);
        assert_eq!(tree.predict_proba(&[5.0]), &[0.0, 1.0]);
    }

    #[test]
    fn one_dimensional_split_lands_between_classes() {
        // exhaustive oracle: all midpoints, weighted Gini by hand
        let values = [0.0, 1.0, 2.0, 3.0];
        let labels = [0u8, 0, 1, 1];
        let data = TrainData {
            values: &values,
            width: 1,
            labels: &labels,
        };
        let mut best = (f64::INFINITY, f64::NAN);
        for w in 0..3 {
            let thr = 0.5 * (values[w] + values[w + 1]);
            let left: Vec<u8> = (0..4).filter(|i| values[*i] <= thr).map(|i| labels[i]).collect();
            let right: Vec<u8> = (0..4).filter(|i| values[*i] > thr).map(|i| labels[i]).collect();
            let gini = |v: &[u8]| {
                let n = v.len() as f64;
                let p1 = v.iter().filter(|l| **l == 1).count() as f64 / n;
                1.0 - p1 * p1 - (1.0 - p1) * (1.0 - p1)
            };
            let score = left.len() as f64 / 4.0 * gini(&left) + right.len() as f64 / 4.0 * gini(&right);
            if score < best.0 {
                best = (score, thr);
            }
        }
        assert_eq!(best.1, 1.5);

        let tree = Tree::train(&data, &[0, 1, 2, 3], 2, &params(1), &mut rng()).unwrap();
        match &tree.nodes[0] {
            Node::Split { threshold, feature, .. } => {
                assert_eq!(*feature, 0);
                assert!(*threshold > 1.0 && *threshold < 2.0, "threshold {threshold}");
                assert_eq!(*threshold, best.1);
            }
            other => panic!("expected split at root, got {other:?}"),
        }
        assert_eq!(tree.predict_proba(&[0.5]), &[1.0, 0.0]);
        assert_eq!(tree.predict_proba(&[2.5]), &[0.0, 1.0]);
    }

    #[test]
    fn unsplittable_tie_becomes_half_half_leaf() {
        let values = [1.0, 1.0];
        let labels = [0u8, 1];
        let data = TrainData {
            values: &values,
            width: 1,
            labels: &labels,
        };
        let tree = Tree::train(&data, &[0, 1], 2, &params(1), &mut rng()).unwrap();
        assert_eq!(tree.nodes.len(), 1);
        assert_eq!(tree.predict_proba(&[1.0]), &[0.5, 0.5]);
    }

    #[test]
    fn empty_input_is_an_error() {
        let data = TrainData {
            values: &[],
            width: 1,
            labels: &[],
        };
        assert!(matches!(
            Tree::train(&data, &[], 2, &params(1), &mut rng()),
            Err(ModelError::EmptyInput)
        ));
    }

    #[test]
    fn duplicating_the_training_set_keeps_the_structure() {
        let values: Vec<f64> = vec![
            0.1, 3.0, 0.9, 1.0, 2.2, 0.5, 3.3, 1.9, 0.4, 2.8, 1.5, 0.2, 2.0, 2.0, 0.7, 3.9,
        ];
        let labels: Vec<u8> = vec![0, 1, 0, 1, 1, 0, 1, 0];
        let data = TrainData {
            values: &values,
            width: 2,
            labels: &labels,
        };
        let single = Tree::train(&data, &(0..8).collect::<Vec<_>>(), 2, &params(2), &mut rng()).unwrap();

        let mut values2 = values.clone();
        values2.extend_from_slice(&values);
        let mut labels2 = labels.clone();
        labels2.extend_from_slice(&labels);
        let data2 = TrainData {
            values: &values2,
            width: 2,
            labels: &labels2,
        };
        let doubled =
            Tree::train(&data2, &(0..16).collect::<Vec<_>>(), 2, &params(2), &mut rng()).unwrap();

        let shape = |t: &Tree| -> Vec<(Option<usize>, Option<f64>, Vec<f64>)> {
            t.nodes
                .iter()
                .map(|n| match n {
                    Node::Split {
                        feature, threshold, ..
                    } => (Some(*feature), Some(*threshold), vec![]),
                    Node::Leaf { probs, .. } => (None, None, probs.clone()),
                })
                .collect()
        };
        assert_eq!(shape(&single), shape(&doubled));
    }

    #[test]
    fn max_depth_caps_growth() {
        let values: Vec<f64> = (0..32).map(f64::from).collect();
        let labels: Vec<u8> = (0..32).map(|i| (i % 2) as u8).collect();
        let data = TrainData {
            values: &values,
            width: 1,
            labels: &labels,
        };
        let mut p = params(1);
        p.max_depth = Some(3);
        let tree = Tree::train(&data, &(0..32).collect::<Vec<_>>(), 2, &p, &mut rng()).unwrap();
        assert!(tree.max_depth() <= 3);
    }

    #[test]
    fn leaf_probabilities_sum_to_one() {
        use rand::Rng;
        let mut r = rng();
        let n = 200;
        let width = 5;
        let values: Vec<f64> = (0..n * width).map(|_| r.random::<f64>()).collect();
        let labels: Vec<u8> = (0..n).map(|_| r.random_range(0..3u8)).collect();
        let data = TrainData {
            values: &values,
            width,
            labels: &labels,
        };
        let tree = Tree::train(&data, &(0..n).collect::<Vec<_>>(), 3, &params(width), &mut r).unwrap();
        for node in &tree.nodes {
            if let Node::Leaf { probs, .. } = node {
                let sum: f64 = probs.iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
                assert!(probs.iter().all(|p| (0.0..=1.0).contains(p)));
            }
        }
    }
}
