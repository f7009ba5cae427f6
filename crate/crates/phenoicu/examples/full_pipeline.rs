//! Drive the whole batch pipeline programmatically: generate, ingest, train,
//! eval, explain, significance, ablation — the same path as the `phenoicu`
//! binary.
//!
//! ```bash
//! cargo run --release --example full_pipeline
//! ```

use std::path::PathBuf;

use phenoicu::cli::{self, Cli, CommonArgs, RunConfig};
use phenoicu::tasks::Task;

fn main() {
    let work = std::env::temp_dir().join("phenoicu-full-pipeline");
    let _ = std::fs::remove_dir_all(&work);
    std::fs::create_dir_all(&work).unwrap();

    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data");
    let mut cfg = RunConfig {
        task: Task::Mortality,
        seed: 7,
        n_resamples: Some(500),
        out_dir: work.join("out"),
        ..RunConfig::default()
    };
    cfg.paths.ontology = data.join("hpo_small.obo");
    cfg.paths.persistency = Some(data.join("persistency.tsv"));
    cfg.paths.cohort = work.join("cohort.jsonl");
    cfg.generator.n_patients = 500;
    cfg.generator.seed = 7;
    cfg.model.rf.n_estimators = 80;

    let cfg_path = work.join("config.json");
    std::fs::write(&cfg_path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();

    for make in [
        cli::Command::Generate as fn(CommonArgs) -> cli::Command,
        cli::Command::Ingest,
        cli::Command::Train,
        cli::Command::Eval,
        cli::Command::Explain,
        cli::Command::Significance,
        cli::Command::Ablation,
    ] {
        cli::execute(Cli {
            command: make(CommonArgs {
                config: cfg_path.clone(),
                seed: None,
                out: None,
            }),
        })
        .unwrap();
    }
    println!("\nartifacts under {}:", cfg.out_dir.display());
    let mut names: Vec<String> = std::fs::read_dir(&cfg.out_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    for name in names {
        println!("  {name}");
    }
}
