//! Pairwise bootstrap win rates: does adding phenotype features beat the
//! structured channels alone?
//!
//! ```bash
//! cargo run --release --example significance_matrix
//! ```

use std::collections::BTreeSet;
use std::io::BufReader;

use phenoicu::annotate::PersistencyMap;
use phenoicu::cohort::{generate, split_train_test, GeneratorConfig};
use phenoicu::eval::{auc_roc, significance_matrix};
use phenoicu::features::{assemble, AnnotationSource, FeatureConfig, FeatureMode};
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
        n_patients: 4000,
        seed: 7,
        ..GeneratorConfig::default()
    })
    .unwrap();
    let labels = build_labels(Task::Mortality, &episodes, &TaskConfig::default());
    let (train, test) = split_train_test(&episodes, 0.85, 7);
    let train_set: BTreeSet<usize> = train.into_iter().collect();
    let test_set: BTreeSet<usize> = test.into_iter().collect();

    let mut models = Vec::new();
    for (name, mode) in [
        ("S", FeatureMode::Structured),
        ("S+notes", FeatureMode::WithPhenotypes),
    ] {
        let cfg = FeatureConfig {
            mode,
            ..FeatureConfig::default()
        };
        let matrix = assemble(
            &episodes,
            &labels,
            &ontology,
            &pmap,
            &AnnotationSource::NoteTerms,
            &cfg,
        )
        .unwrap();
        let train_m = matrix.select_rows(&matrix.rows_for_episodes(&train_set));
        let test_m = matrix.select_rows(&matrix.rows_for_episodes(&test_set));
        let forest = train_forest(
            &train_m.values,
            train_m.width(),
            &train_m.labels,
            2,
            &ForestConfig {
                n_estimators: 150,
                seed: 7,
                ..ForestConfig::default()
            },
        )
        .unwrap();
        let samples: Vec<(f64, bool)> = (0..test_m.n_rows())
            .map(|i| {
                (
                    forest.predict_proba(test_m.row(i)).unwrap()[1],
                    test_m.labels[i] == 1,
                )
            })
            .collect();
        models.push((name.to_string(), samples));
    }

    let matrix = significance_matrix(
        &models,
        |s: &[(f64, bool)]| {
            let scores: Vec<f64> = s.iter().map(|x| x.0).collect();
            let labels: Vec<bool> = s.iter().map(|x| x.1).collect();
            auc_roc(&scores, &labels)
        },
        1000,
        13,
    )
    .unwrap();

    println!("win % of row over column (AUC-ROC, 1000 shared resamples):");
    for i in 0..matrix.names.len() {
        for j in 0..matrix.names.len() {
            if i == j {
                continue;
            }
            println!(
                "  {} > {}: {:.2}% (ties {:.2}%)",
                matrix.names[i],
                matrix.names[j],
                matrix.win_pct(i, j),
                matrix.tie_pct(i, j)
            );
        }
    }
}
