//! Feature assembly: imputation, persistency propagation and ontology
//! aggregation on a hand-built episode.
//!
//! ```bash
//! cargo run --example assemble_features
//! ```

use std::collections::BTreeMap;
use std::io::BufReader;

use phenoicu::annotate::PersistencyMap;
use phenoicu::cohort::{Episode, Note, CHANNELS};
use phenoicu::features::{assemble, AnnotationSource, FeatureConfig};
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

    // 24-hour stay: sparse heart rate readings, hypotension noted at hour 6,
    // diabetes (persistent) noted at hour 6 as well, next note at hour 14
    let mut channels = BTreeMap::new();
    for spec in CHANNELS {
        channels.insert(spec.name.to_string(), vec![None; 24]);
    }
    let hr = channels.get_mut("heart rate").unwrap();
    hr[0] = Some(88.0);
    hr[8] = Some(120.0);
    let episode = Episode {
        patient_id: "p0".into(),
        episode_id: "p0e0".into(),
        length_hours: 24,
        channels,
        notes: vec![
            Note {
                hour: 6,
                note_id: "n0".into(),
                terms: vec![
                    TermId::new("HP:0002615").unwrap(), // hypotension, transient
                    TermId::new("HP:0000819").unwrap(), // diabetes, persistent
                ],
                text: None,
            },
            Note {
                hour: 14,
                note_id: "n1".into(),
                terms: vec![],
                text: None,
            },
        ],
        died_in_hospital: false,
        death_hour: None,
        cohort_tags: Default::default(),
    };

    let episodes = vec![episode];
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

    println!(
        "schema: {} structured + {} phenotype columns, hash {}",
        matrix.schema.n_structured,
        matrix.schema.phenotype_terms.len(),
        matrix.schema.version_hash
    );
    let hr_col = matrix.schema.names.iter().position(|n| n == "heart rate").unwrap();
    let hypo_col = matrix.schema.names.iter().position(|n| n == "HP:0002615").unwrap();
    let dm_col = matrix.schema.names.iter().position(|n| n == "HP:0000819").unwrap();
    let endo_col = matrix.schema.names.iter().position(|n| n == "HP:0000818").unwrap();

    println!("\nhour | heart rate | hypotension | diabetes | endocrine-parent");
    for (i, meta) in matrix.rows.iter().enumerate() {
        let row = matrix.row(i);
        println!(
            "{:>4} | {:>10.1} | {:>11} | {:>8} | {:>16}",
            meta.hour, row[hr_col], row[hypo_col], row[dm_col], row[endo_col]
        );
    }
    println!(
        "\nhypotension is transient: active from its note (hour 6) until the next note \
         (hour 14); diabetes persists to discharge and its parent column follows it"
    );
}
