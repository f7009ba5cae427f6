//! Train the LSTM on a synthetic per-timestep rule and verify the gradients.
//!
//! ```bash
//! cargo run --release --example train_lstm
//! ```

use rand::Rng;

use phenoicu::models::{
    gradient_check, predict_sequence, train_lstm, LstmConfig, LstmParams, Sequence,
};
use phenoicu::seeds::stream_rng;

fn sequences(seed: u64, n: usize) -> Vec<Sequence> {
    // label_t = 1 iff the running mean of the input so far is positive
    let mut rng = stream_rng(seed, "lstm-example", 0);
    (0..n)
        .map(|_| {
            let inputs: Vec<f64> = (0..16).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let mut labels = Vec::with_capacity(16);
            let mut sum = 0.0;
            for (t, x) in inputs.iter().enumerate() {
                sum += x;
                labels.push(Some(u8::from(sum / (t + 1) as f64 > 0.0)));
            }
            Sequence { inputs, labels }
        })
        .collect()
}

fn main() {
    // sanity-check the backward pass before spending time on training
    let tiny = LstmParams::init(1, 4, 1, 3);
    let err = gradient_check(&tiny, &sequences(9, 2), 1e-5);
    println!("gradient check max relative error: {err:.2e}");

    let train = sequences(1, 200);
    let test = sequences(2, 60);
    let cfg = LstmConfig {
        hidden_size: 16,
        epochs: 30,
        batch_size: 8,
        learning_rate: 0.02,
        patience: None,
        seed: 7,
        ..LstmConfig::default()
    };
    let trained = train_lstm(&train, 1, 1, &cfg, None).unwrap();
    println!(
        "loss: {:.4} -> {:.4} over {} epochs",
        trained.loss_curve.first().unwrap(),
        trained.loss_curve.last().unwrap(),
        trained.loss_curve.len()
    );

    let mut correct = 0usize;
    let mut total = 0usize;
    for seq in &test {
        let probs = predict_sequence(&trained.params, &seq.inputs);
        for (t, label) in seq.labels.iter().enumerate() {
            correct += usize::from(u8::from(probs[t][1] > 0.5) == label.unwrap());
            total += 1;
        }
    }
    println!(
        "held-out per-timestep accuracy: {:.4}",
        correct as f64 / total as f64
    );
}
