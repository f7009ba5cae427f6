//! Generate a synthetic cohort and check its marginals against the
//! configuration.
//!
//! ```bash
//! cargo run --release --example generate_cohort
//! ```

use std::collections::BTreeMap;

use phenoicu::cohort::{generate, GeneratorConfig};
use phenoicu::tasks::{decomp_labels, TaskConfig};

fn main() {
    let cfg = GeneratorConfig {
        n_patients: 2000,
        seed: 7,
        ..GeneratorConfig::default()
    };
    let episodes = generate(&cfg).unwrap();

    let mut patients: BTreeMap<&str, bool> = BTreeMap::new();
    for e in &episodes {
        *patients.entry(&e.patient_id).or_insert(false) |= e.died_in_hospital;
    }
    let mortality = patients.values().filter(|d| **d).count() as f64 / patients.len() as f64;

    let task_cfg = TaskConfig::default();
    let mut positives = 0usize;
    let mut timesteps = 0usize;
    for e in &episodes {
        for (_, label) in decomp_labels(e, &task_cfg) {
            positives += usize::from(label);
            timesteps += 1;
        }
    }

    let mut histogram = [0usize; 10];
    for e in &episodes {
        histogram[e.los_bin() as usize] += 1;
    }

    println!("episodes: {}, patients: {}", episodes.len(), patients.len());
    println!(
        "patient mortality: {mortality:.4} (target {:.4})",
        cfg.mortality_rate
    );
    println!(
        "decomp positive timesteps: {:.4} (target {:.4})",
        positives as f64 / timesteps as f64,
        cfg.decomp_rate
    );
    println!("stay-length bins (fraction vs target):");
    for (bin, count) in histogram.iter().enumerate() {
        println!(
            "  bin {bin}: {:.4} vs {:.4}",
            *count as f64 / episodes.len() as f64,
            cfg.los_weights[bin]
        );
    }
    let notes: usize = episodes.iter().map(|e| e.notes.len()).sum();
    let hours: u64 = episodes.iter().map(|e| u64::from(e.length_hours)).sum();
    println!(
        "notes: {notes} over {hours} hours (one per {:.1}h, target {:.1}h)",
        hours as f64 / notes as f64,
        cfg.note_interval_hours
    );
}
