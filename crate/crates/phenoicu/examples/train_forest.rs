//! Train the random forest on a synthetic cohort for in-hospital mortality
//! and score the held-out split.
//!
//! ```bash
//! cargo run --release --example train_forest
//! ```

use std::collections::BTreeSet;
use std::io::BufReader;

use phenoicu::annotate::PersistencyMap;
use phenoicu::cohort::{generate, split_train_test, GeneratorConfig};
use phenoicu::eval::auc_roc;
use phenoicu::features::{assemble, AnnotationSource, FeatureConfig};
use phenoicu::models::{train_forest, ForestConfig};
use phenoicu::ontology::Ontology;
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

    let episodes = generate(&GeneratorConfig {
        n_patients: 1000,
        seed: 42,
        ..GeneratorConfig::default()
    })
    .unwrap();
    let labels = build_labels(Task::Mortality, &episodes, &TaskConfig::default());
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
        "{} eligible episodes, {} features",
        matrix.n_rows(),
        matrix.width()
    );

    let (train, test) = split_train_test(&episodes, 0.85, 42);
    let train_rows = matrix.rows_for_episodes(&train.iter().copied().collect::<BTreeSet<_>>());
    let test_rows = matrix.rows_for_episodes(&test.iter().copied().collect::<BTreeSet<_>>());
    let train_matrix = matrix.select_rows(&train_rows);
    let test_matrix = matrix.select_rows(&test_rows);

    let forest = train_forest(
        &train_matrix.values,
        train_matrix.width(),
        &train_matrix.labels,
        2,
        &ForestConfig {
            n_estimators: 150,
            seed: 42,
            ..ForestConfig::default()
        },
    )
    .unwrap();

    let mut scores = Vec::new();
    let mut outcomes = Vec::new();
    for i in 0..test_matrix.n_rows() {
        scores.push(forest.predict_proba(test_matrix.row(i)).unwrap()[1]);
        outcomes.push(test_matrix.labels[i] == 1);
    }
    let auc = auc_roc(&scores, &outcomes).unwrap();
    println!(
        "held-out AUC-ROC {auc:.4} on {} episodes ({} deaths)",
        outcomes.len(),
        outcomes.iter().filter(|o| **o).count()
    );
}
