//! Shapley attributions for a forest: the exact oracle against the fast
//! path-dependent algorithm, then a mean-|phi| importance ranking.
//!
//! ```bash
//! cargo run --release --example explain_forest
//! ```

use rand::Rng;

use phenoicu::explain::{
    exact_shapley_tree, importance_report, tree_shapley, ExplainTarget,
};
use phenoicu::models::{train_forest, ForestConfig};
use phenoicu::seeds::stream_rng;

fn main() {
    // synthetic rows: only features 0 and 2 drive the label
    let mut rng = stream_rng(5, "explain-example", 0);
    let n = 600;
    let width = 6;
    let values: Vec<f64> = (0..n * width).map(|_| rng.random::<f64>()).collect();
    let labels: Vec<u8> = (0..n)
        .map(|i| u8::from(values[i * width] + 0.7 * values[i * width + 2] > 0.85))
        .collect();
    let forest = train_forest(
        &values,
        width,
        &labels,
        2,
        &ForestConfig {
            n_estimators: 40,
            seed: 1,
            ..ForestConfig::default()
        },
    )
    .unwrap();

    let target = ExplainTarget::positive();
    let x = &values[..width];
    let fast = tree_shapley(&forest, x, &target).unwrap();
    let exact = exact_shapley_tree(&forest, x, &target, 14).unwrap();
    println!("row {x:.3?}");
    println!("prediction {:.4}, base value {:.4}", fast.prediction, fast.base_value);
    println!("feature |    fast phi |   exact phi");
    for f in 0..width {
        println!("{f:>7} | {:>11.6} | {:>11.6}", fast.phi[f], exact.phi[f]);
    }
    println!(
        "additivity gap: fast {:.2e}, exact {:.2e}",
        fast.additivity_gap(),
        exact.additivity_gap()
    );

    let names: Vec<String> = (0..width).map(|f| format!("feature_{f}")).collect();
    let report = importance_report(&forest, &values[..200 * width], width, &names, &target).unwrap();
    println!("\nmean |phi| ranking (features 0 and 2 are causal):");
    for (name, value) in report.top(width) {
        println!("  {name}: {value:.5}");
    }
}
