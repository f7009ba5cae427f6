//! Path-dependent Shapley values for tree ensembles in polynomial time.
//!
//! Walks each tree once per explained row, carrying the weighted fractions of
//! all subset-conditioned paths (the extend/unwind bookkeeping of the fast
//! tree algorithm). Branch weights come from training covers, so this matches
//! the exact oracle under tree-path-dependent expectations.

use super::{ExplainError, ExplainTarget, Explanation};
use crate::models::forest::Forest;
use crate::models::tree::{Node, Tree};

#[derive(Debug, Clone, Copy, Default)]
struct PathElement {
    feature: usize,
    zero_fraction: f64,
    one_fraction: f64,
    pweight: f64,
}

fn extend(path: &mut Vec<PathElement>, zero_fraction: f64, one_fraction: f64, feature: usize) {
    let depth = path.len();
    path.push(PathElement {
        feature,
        zero_fraction,
        one_fraction,
        pweight: if depth == 0 { 1.0 } else { 0.0 },
    });
    for i in (0..depth).rev() {
        path[i + 1].pweight +=
            one_fraction * path[i].pweight * (i + 1) as f64 / (depth + 1) as f64;
        path[i].pweight = zero_fraction * path[i].pweight * (depth - i) as f64 / (depth + 1) as f64;
    }
}

fn unwind(path: &mut Vec<PathElement>, index: usize) {
    let depth = path.len() - 1;
    let one_fraction = path[index].one_fraction;
    let zero_fraction = path[index].zero_fraction;
    let mut next_one_portion = path[depth].pweight;
    for i in (0..depth).rev() {
        if one_fraction != 0.0 {
            let tmp = path[i].pweight;
            path[i].pweight = next_one_portion * (depth + 1) as f64 / ((i + 1) as f64 * one_fraction);
            next_one_portion =
                tmp - path[i].pweight * zero_fraction * (depth - i) as f64 / (depth + 1) as f64;
        } else {
            path[i].pweight =
                path[i].pweight * (depth + 1) as f64 / (zero_fraction * (depth - i) as f64);
        }
    }
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
    path.pop();
}

fn unwound_sum(path: &[PathElement], index: usize) -> f64 {
    let depth = path.len() - 1;
    let one_fraction = path[index].one_fraction;
    let zero_fraction = path[index].zero_fraction;
    let mut next_one_portion = path[depth].pweight;
    let mut total = 0.0;
    for i in (0..depth).rev() {
        if one_fraction != 0.0 {
            let tmp = next_one_portion * (depth + 1) as f64 / ((i + 1) as f64 * one_fraction);
            total += tmp;
            next_one_portion =
                path[i].pweight - tmp * zero_fraction * (depth - i) as f64 / (depth + 1) as f64;
        } else {
            total += path[i].pweight / zero_fraction * (depth + 1) as f64 / (depth - i) as f64;
        }
    }
    total
}

const ROOT_SENTINEL: usize = usize::MAX;

#[allow(clippy::too_many_arguments)]
fn recurse(
    tree: &Tree,
    x: &[f64],
    target: &ExplainTarget,
    phi: &mut [f64],
    node: usize,
    mut path: Vec<PathElement>,
    parent_zero: f64,
    parent_one: f64,
    parent_feature: usize,
) {
    extend(&mut path, parent_zero, parent_one, parent_feature);
    match &tree.nodes[node] {
        Node::Leaf { probs, .. } => {
            let value = target.leaf_value(probs);
            for i in 1..path.len() {
                let w = unwound_sum(&path, i);
                let el = &path[i];
                phi[el.feature] += w * (el.one_fraction - el.zero_fraction) * value;
            }
        }
        Node::Split {
            feature,
            threshold,
            left,
            right,
            cover,
        } => {
            let (hot, cold) = if x[*feature] <= *threshold {
                (*left, *right)
            } else {
                (*right, *left)
            };
            let cover_of = |n: u32| match &tree.nodes[n as usize] {
                Node::Leaf { cover, .. } | Node::Split { cover, .. } => *cover,
            };
            let mut incoming_zero = 1.0;
            let mut incoming_one = 1.0;
            // a feature reappearing on the path is unwound and re-extended
            if let Some(prev) = (1..path.len()).find(|i| path[*i].feature == *feature) {
                incoming_zero = path[prev].zero_fraction;
                incoming_one = path[prev].one_fraction;
                unwind(&mut path, prev);
            }
            let hot_zero = cover_of(hot) / cover;
            let cold_zero = cover_of(cold) / cover;
            recurse(
                tree,
                x,
                target,
                phi,
                hot as usize,
                path.clone(),
                hot_zero * incoming_zero,
                incoming_one,
                *feature,
            );
            recurse(
                tree,
                x,
                target,
                phi,
                cold as usize,
                path,
                cold_zero * incoming_zero,
                0.0,
                *feature,
            );
        }
    }
}

/// Cover-weighted expected target value of one tree.
pub fn tree_expected_value(tree: &Tree, target: &ExplainTarget) -> f64 {
    fn walk(tree: &Tree, at: usize, target: &ExplainTarget) -> f64 {
        match &tree.nodes[at] {
            Node::Leaf { probs, .. } => target.leaf_value(probs),
            Node::Split {
                left, right, cover, ..
            } => {
                let cover_of = |n: u32| match &tree.nodes[n as usize] {
                    Node::Leaf { cover, .. } | Node::Split { cover, .. } => *cover,
                };
                (cover_of(*left) * walk(tree, *left as usize, target)
                    + cover_of(*right) * walk(tree, *right as usize, target))
                    / cover
            }
        }
    }
    walk(tree, 0, target)
}

/// Path-dependent Shapley values of a forest output at one row: per-tree
/// attributions averaged over the ensemble, with the cover-weighted tree
/// expectation as the base value.
pub fn tree_shapley(
    forest: &Forest,
    x: &[f64],
    target: &ExplainTarget,
) -> Result<Explanation, ExplainError> {
    if x.len() != forest.n_features {
        return Err(ExplainError::WidthMismatch {
            expected: forest.n_features,
            got: x.len(),
        });
    }
    target.validate(forest.n_classes)?;
    let mut phi = vec![0.0f64; forest.n_features];
    let mut base = 0.0;
    let mut prediction = 0.0;
    for tree in &forest.trees {
        recurse(
            tree,
            x,
            target,
            &mut phi,
            0,
            Vec::with_capacity(16),
            1.0,
            1.0,
            ROOT_SENTINEL,
        );
        base += tree_expected_value(tree, target);
        prediction += target.leaf_value(match tree.predict_leaf(x) {
            Node::Leaf { probs, .. } => probs,
            Node::Split { .. } => unreachable!(),
        });
    }
    let n = forest.trees.len() as f64;
    for p in &mut phi {
        *p /= n;
    }
    Ok(Explanation {
        base_value: base / n,
        phi,
        prediction: prediction / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explain::exact::exact_shapley_tree;
    use crate::models::forest::ForestConfig;
    use rand::Rng;

    fn leaf(p1: f64, cover: f64) -> Node {
        Node::Leaf {
            probs: vec![1.0 - p1, p1],
            cover,
        }
    }

    #[test]
    fn single_leaf_tree_has_zero_phi() {
        let forest = Forest {
            trees: vec![Tree {
                nodes: vec![leaf(0.7, 10.0)],
                n_classes: 2,
            }],
            n_features: 4,
            n_classes: 2,
        };
        let e = tree_shapley(&forest, &[0.0; 4], &ExplainTarget::positive()).unwrap();
        assert!(e.phi.iter().all(|p| *p == 0.0));
        assert!((e.base_value - 0.7).abs() < 1e-15);
        assert!((e.prediction - 0.7).abs() < 1e-15);
    }

    #[test]
    fn depth_one_tree_touches_only_its_split_feature() {
        let tree = Tree {
            nodes: vec![
                Node::Split {
                    feature: 3,
                    threshold: 0.5,
                    left: 1,
                    right: 2,
                    cover: 10.0,
                },
                leaf(0.2, 6.0),
                leaf(0.9, 4.0),
            ],
            n_classes: 2,
        };
        let forest = Forest {
            trees: vec![tree],
            n_features: 5,
            n_classes: 2,
        };
        let e = tree_shapley(&forest, &[9.0, 9.0, 9.0, 0.0, 9.0], &ExplainTarget::positive()).unwrap();
        for (i, p) in e.phi.iter().enumerate() {
            if i == 3 {
                assert!(p.abs() > 1e-9);
            } else {
                assert_eq!(*p, 0.0, "feature {i} should be untouched");
            }
        }
        // base = (6*0.2 + 4*0.9)/10 = 0.48, prediction = 0.2
        assert!((e.base_value - 0.48).abs() < 1e-12);
        assert!((e.prediction - 0.2).abs() < 1e-12);
        assert!(e.additivity_gap() < 1e-12);
    }

    /// Structurally random small tree with consistent covers; features repeat
    /// along paths by construction pressure (few features, depth up to 4).
    pub(super) fn random_tree(
        rng: &mut rand_chacha::ChaCha8Rng,
        n_features: usize,
        n_classes: usize,
        depth: usize,
        cover: f64,
    ) -> Vec<Node> {
        fn build(
            rng: &mut rand_chacha::ChaCha8Rng,
            nodes: &mut Vec<Node>,
            n_features: usize,
            n_classes: usize,
            depth: usize,
            cover: f64,
        ) -> u32 {
            let make_leaf = depth == 0 || rng.random::<f64>() < 0.25 || cover < 2.0;
            if make_leaf {
                let mut probs: Vec<f64> = (0..n_classes).map(|_| rng.random::<f64>()).collect();
                let sum: f64 = probs.iter().sum();
                for p in &mut probs {
                    *p /= sum;
                }
                nodes.push(Node::Leaf { probs, cover });
                return (nodes.len() - 1) as u32;
            }
            let slot = nodes.len();
            nodes.push(Node::Leaf {
                probs: vec![],
                cover: 0.0,
            }); // placeholder
            let fraction = 0.2 + rng.random::<f64>() * 0.6;
            let left_cover = (cover * fraction).max(1.0);
            let right_cover = (cover - left_cover).max(1.0);
            let left = build(rng, nodes, n_features, n_classes, depth - 1, left_cover);
            let right = build(rng, nodes, n_features, n_classes, depth - 1, right_cover);
            nodes[slot] = Node::Split {
                feature: rng.random_range(0..n_features),
                threshold: rng.random::<f64>() * 2.0 - 1.0,
                left,
                right,
                cover: left_cover + right_cover,
            };
            slot as u32
        }
        let mut nodes = Vec::new();
        build(rng, &mut nodes, n_features, n_classes, depth, cover);
        nodes
    }

    #[test]
    fn matches_exact_oracle_on_random_forests() {
        let mut rng = crate::seeds::stream_rng(77, "treeshap", 0);
        for round in 0..10 {
            let n_features = 2 + (round % 6);
            let forest = Forest {
                trees: (0..3)
                    .map(|_| Tree {
                        nodes: random_tree(&mut rng, n_features, 2, 4, 64.0),
                        n_classes: 2,
                    })
                    .collect(),
                n_features,
                n_classes: 2,
            };
            for _ in 0..5 {
                let x: Vec<f64> = (0..n_features).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
                let fast = tree_shapley(&forest, &x, &ExplainTarget::positive()).unwrap();
                let exact =
                    exact_shapley_tree(&forest, &x, &ExplainTarget::positive(), 14).unwrap();
                for (a, b) in fast.phi.iter().zip(&exact.phi) {
                    assert!((a - b).abs() < 1e-9, "{a} vs {b}");
                }
                assert!((fast.base_value - exact.base_value).abs() < 1e-9);
                assert!(fast.additivity_gap() < 1e-9);
            }
        }
    }

    #[test]
    fn ensemble_phi_is_the_mean_of_per_tree_phi() {
        let mut rng = crate::seeds::stream_rng(78, "treeshap", 1);
        let trees: Vec<Tree> = (0..4)
            .map(|_| Tree {
                nodes: random_tree(&mut rng, 5, 2, 3, 32.0),
                n_classes: 2,
            })
            .collect();
        let forest = Forest {
            trees: trees.clone(),
            n_features: 5,
            n_classes: 2,
        };
        let x = [0.1, -0.4, 0.9, 0.0, 0.3];
        let whole = tree_shapley(&forest, &x, &ExplainTarget::positive()).unwrap();
        let mut mean_phi = vec![0.0; 5];
        for tree in trees {
            let single = Forest {
                trees: vec![tree],
                n_features: 5,
                n_classes: 2,
            };
            let e = tree_shapley(&single, &x, &ExplainTarget::positive()).unwrap();
            for (m, p) in mean_phi.iter_mut().zip(&e.phi) {
                *m += p / 4.0;
            }
        }
        for (a, b) in whole.phi.iter().zip(&mean_phi) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn scaling_leaf_values_scales_phi_linearly() {
        let mut rng = crate::seeds::stream_rng(79, "treeshap", 2);
        let nodes = random_tree(&mut rng, 4, 2, 3, 50.0);
        let scaled_nodes: Vec<Node> = nodes
            .iter()
            .map(|n| match n {
                Node::Leaf { probs, cover } => Node::Leaf {
                    probs: probs.iter().map(|p| p * 3.0).collect(),
                    cover: *cover,
                },
                other => other.clone(),
            })
            .collect();
        let make = |nodes: Vec<Node>| Forest {
            trees: vec![Tree {
                nodes,
                n_classes: 2,
            }],
            n_features: 4,
            n_classes: 2,
        };
        let x = [0.2, 0.5, -0.1, 0.8];
        let a = tree_shapley(&make(nodes), &x, &ExplainTarget::positive()).unwrap();
        let b = tree_shapley(&make(scaled_nodes), &x, &ExplainTarget::positive()).unwrap();
        for (pa, pb) in a.phi.iter().zip(&b.phi) {
            assert!((pa * 3.0 - pb).abs() < 1e-12);
        }
        assert!((a.base_value * 3.0 - b.base_value).abs() < 1e-12);
    }

    #[test]
    fn trained_forest_explanations_are_additive() {
        let mut rng = crate::seeds::stream_rng(80, "treeshap", 3);
        let n = 300;
        let width = 6;
        let values: Vec<f64> = (0..n * width).map(|_| rng.random::<f64>()).collect();
        let labels: Vec<u8> = (0..n)
            .map(|i| u8::from(values[i * width] + values[i * width + 3] > 1.0))
            .collect();
        let cfg = ForestConfig {
            n_estimators: 25,
            seed: 4,
            ..ForestConfig::default()
        };
        let forest = crate::models::train_forest(&values, width, &labels, 2, &cfg).unwrap();
        for i in 0..20 {
            let row = &values[i * width..(i + 1) * width];
            let e = tree_shapley(&forest, row, &ExplainTarget::positive()).unwrap();
            assert!(e.additivity_gap() < 1e-6, "gap {}", e.additivity_gap());
            let predicted = forest.predict_proba(row).unwrap()[1];
            assert!((e.prediction - predicted).abs() < 1e-9);
        }
    }
}
