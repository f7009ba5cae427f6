//! The metric suite: discrimination, agreement, calibration, and bootstrap
//! confidence intervals.
//!
//! ```bash
//! cargo run --release --example evaluate_metrics
//! ```

use rand::Rng;

use phenoicu::eval::{
    auc_pr, auc_roc, bootstrap_ci, brier, calibration_curve, kappa, mad, KappaWeighting,
};
use phenoicu::seeds::stream_rng;

fn main() {
    let mut rng = stream_rng(3, "metrics-example", 0);

    // a noisy binary scorer on 500 samples
    let samples: Vec<(f64, bool)> = (0..500)
        .map(|_| {
            let label = rng.random_bool(0.3);
            let score = (rng.random::<f64>() + if label { 0.55 } else { 0.0 }).clamp(0.0, 1.0);
            (score, label)
        })
        .collect();
    let scores: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let labels: Vec<bool> = samples.iter().map(|s| s.1).collect();
    println!("AUC-ROC {:.4}", auc_roc(&scores, &labels).unwrap());
    println!("AUC-PR  {:.4}", auc_pr(&scores, &labels).unwrap());
    println!("Brier   {:.4}", brier(&scores, &labels).unwrap());

    let outcome = bootstrap_ci(
        &samples,
        |s| {
            let sc: Vec<f64> = s.iter().map(|x| x.0).collect();
            let lb: Vec<bool> = s.iter().map(|x| x.1).collect();
            auc_roc(&sc, &lb)
        },
        1000,
        11,
    )
    .unwrap();
    println!(
        "AUC-ROC with bootstrap: {:.4} (95% CI {:.4}, {:.4}; {} degenerate resamples skipped)",
        outcome.point, outcome.ci.lo, outcome.ci.hi, outcome.skipped
    );

    println!("\nreliability curve (10 bins):");
    for bin in calibration_curve(&scores, &labels, 10) {
        println!(
            "  predicted {:.3} -> observed {:.3} (n={})",
            bin.mean_predicted, bin.observed_frequency, bin.count
        );
    }

    // ten-class agreement for the stay-length task
    let truth: Vec<u8> = (0..2000).map(|_| rng.random_range(0..10)).collect();
    let pred: Vec<u8> = truth
        .iter()
        .map(|t| {
            let drift = rng.random_range(0..3);
            (t + drift).min(9)
        })
        .collect();
    println!(
        "\nKappa (linear) {:.4}, unweighted {:.4}",
        kappa(&pred, &truth, KappaWeighting::Linear, 10).unwrap(),
        kappa(&pred, &truth, KappaWeighting::None, 10).unwrap()
    );
    let remaining: Vec<f64> = truth.iter().map(|t| f64::from(*t) * 24.0 + 12.0).collect();
    println!("MAD {:.1} hours", mad(&pred, &remaining).unwrap());
}
