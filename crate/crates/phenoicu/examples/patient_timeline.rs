//! Hour-by-hour Shapley timeline for one patient: a phenotype noted mid-stay
//! starts contributing at exactly its note hour.
//!
//! ```bash
//! cargo run --release --example patient_timeline
//! ```

use std::io::BufReader;

use phenoicu::annotate::PersistencyMap;
use phenoicu::cohort::{generate, GeneratorConfig, Note};
use phenoicu::explain::{patient_timeline, ExplainTarget};
use phenoicu::features::{assemble, AnnotationSource, FeatureConfig};
use phenoicu::models::{train_forest, ForestConfig};
use phenoicu::ontology::{Ontology, TermId};
use phenoicu::tasks::{build_labels, Task, TaskConfig};

fn main() {
    let base = env!("CARGO_MANIFEST_DIR");
    let ontology =
        Ontology::parse_obo(&std::fs::read_to_string(format!("{base}/data/hpo_small.obo")).unwrap())
            .unwrap();
    let pmap = PersistencyMap::from_tsv(BufReader::new(
        std::fs::File::open(format!("{base}/data/persistency.tsv")).unwrap(),
    ))
    .unwrap();

    // cohort for training, plus one probe episode whose only phenotype
    // arrives with the note written at hour 42
    let neoplasm = TermId::new("HP:0100606").unwrap();
    let mut episodes = generate(&GeneratorConfig {
        n_patients: 800,
        seed: 9,
        ..GeneratorConfig::default()
    })
    .unwrap();
    let mut probe = episodes[0].clone();
    probe.patient_id = "probe".into();
    probe.episode_id = "probe-e0".into();
    probe.length_hours = 60;
    probe.died_in_hospital = false;
    probe.death_hour = None;
    for series in probe.channels.values_mut() {
        series.resize(60, None);
    }
    probe.notes = vec![
        Note { hour: 0, note_id: "probe-n0".into(), terms: vec![], text: None },
        Note { hour: 42, note_id: "probe-n42".into(), terms: vec![neoplasm.clone()], text: None },
    ];
    episodes.push(probe);

    let labels = build_labels(Task::Decompensation, &episodes, &TaskConfig::default());
    let matrix = assemble(
        &episodes,
        &labels,
        &ontology,
        &pmap,
        &AnnotationSource::NoteTerms,
        &FeatureConfig::default(),
    )
    .unwrap();
    let train = matrix.select_rows(&(0..matrix.n_rows().min(20_000)).collect::<Vec<_>>());
    let forest = train_forest(
        &train.values,
        train.width(),
        &train.labels,
        2,
        &ForestConfig { n_estimators: 80, seed: 2, ..ForestConfig::default() },
    )
    .unwrap();

    let probe_idx = episodes.len() - 1;
    let rows: Vec<usize> = matrix
        .rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.episode as usize == probe_idx)
        .map(|(i, _)| i)
        .collect();
    let probe_matrix = matrix.select_rows(&rows);
    let hours: Vec<u32> = probe_matrix.rows.iter().map(|r| r.hour).collect();
    let timeline = patient_timeline(
        &forest,
        &probe_matrix.values,
        probe_matrix.width(),
        &hours,
        &matrix.schema.names,
        &ExplainTarget::positive(),
    )
    .unwrap();

    println!("hour | P(decomp) | phi({neoplasm})");
    for h in [5u32, 20, 40, 41, 42, 43, 50, 59] {
        let i = hours.iter().position(|x| *x == h).unwrap();
        println!(
            "{h:>4} | {:>9.4} | {:>10.5}",
            timeline.probability[i],
            timeline.phi_at(h, neoplasm.as_str()).unwrap()
        );
    }
    println!("\ntop features for this patient (mean |phi| across the stay):");
    for &f in timeline.feature_order.iter().take(5) {
        println!("  {}: {:.5}", timeline.feature_names[f], timeline.importance[f]);
    }
}
