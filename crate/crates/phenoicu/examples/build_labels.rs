//! Label construction for the three ICU tasks on one illustrative episode.
//!
//! ```bash
//! cargo run --example build_labels
//! ```

use std::collections::BTreeMap;

use phenoicu::cohort::Episode;
use phenoicu::tasks::{decomp_labels, los_labels, mortality_label, TaskConfig};

fn main() {
    // a 60-hour stay ending in death
    let episode = Episode {
        patient_id: "p0".into(),
        episode_id: "p0e0".into(),
        length_hours: 60,
        channels: BTreeMap::new(),
        notes: vec![],
        died_in_hospital: true,
        death_hour: Some(60),
        cohort_tags: Default::default(),
    };
    let cfg = TaskConfig::default();

    let (hour, label) = mortality_label(&episode).unwrap();
    println!("mortality: one label at hour {hour}: {label}");

    let decomp = decomp_labels(&episode, &cfg);
    let first_positive = decomp.iter().find(|(_, l)| *l).unwrap().0;
    println!(
        "decompensation: {} hourly labels from hour {}, positive from hour {first_positive} \
         (death at {} minus the 24h window)",
        decomp.len(),
        cfg.obs_start_hour,
        episode.death_hour.unwrap()
    );

    let los = los_labels(&episode, &cfg);
    println!("length of stay classes over time (non-increasing):");
    for (h, class) in los.iter().step_by(12) {
        println!("  hour {h:>3}: class {class} ({}h remaining)", 60 - h);
    }
}
