//! Subcommand implementations. Each command reads the config, works through
//! the library modules, writes its artifacts under the output directory, and
//! finishes with a manifest. Nothing mutates its inputs, and fixed seeds give
//! byte-identical artifacts on rerun.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{
    AnnotationSourceKind, ModelKind, RunConfig, SplitSection, Variant,
};
use super::manifest::Manifest;
use super::CliError;
use crate::annotate::{load_annotations, Annotation, Lexicon, PersistencyMap};
use crate::cohort::{
    generate, load_episodes, split_kfold, split_train_test, write_episodes, Episode,
};
use crate::eval::{
    auc_pr, auc_roc, bootstrap_ci, brier, calibration_curve, kappa, mad, significance_matrix,
    sliced_eval, BootstrapOutcome, CalibrationBin, Ci, EvalError, KappaWeighting, MetricName,
    MetricValue, SignificanceMatrix, SliceResult, Slicer,
};
use crate::explain::{
    importance_report, patient_timeline, write_beeswarm_csv, write_heatmap_csv,
    write_timeline_csv, ExplainTarget,
};
use crate::features::{
    assemble, assemble_sequences, AnnotationSource, FeatureMatrix, FeatureMode, Standardizer,
};
use crate::models::{
    load_model, save_model, train_forest, Forest, LstmBundle, ModelHeader, Sequence, TrainedModel,
};
use crate::ontology::Ontology;
use crate::plot::{bar_chart, line_chart, LineSeries};
use crate::seeds::{derive_seed, stream_rng};
use crate::tasks::{build_labels, write_labels_csv, Task, TaskLabels};

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Data(format!("serialize {}: {e}", path.display())))?;
    text.push('\n');
    write_text(path, &text)
}

fn ensure_out_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))
}

/// Everything the pipeline loads from disk.
pub struct Inputs {
    pub ontology: Ontology,
    pub pmap: PersistencyMap,
    pub episodes: Vec<Episode>,
    /// Materialized external annotations (lexicon or file source), keyed by
    /// episode id.
    pub external: Option<BTreeMap<String, Vec<Annotation>>>,
}

fn load_ontology(path: &Path) -> Result<Ontology, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    Ontology::parse_obo(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn load_inputs(cfg: &RunConfig) -> Result<Inputs, CliError> {
    let ontology = load_ontology(&cfg.paths.ontology)?;
    let pmap = match &cfg.paths.persistency {
        Some(path) => {
            let file = fs::File::open(path)
                .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
            PersistencyMap::from_tsv(BufReader::new(file))
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        }
        None => PersistencyMap::default(),
    };
    let cohort_file = fs::File::open(&cfg.paths.cohort).map_err(|e| {
        CliError::Data(format!("cannot open {}: {e}", cfg.paths.cohort.display()))
    })?;
    let episodes = load_episodes(BufReader::new(cohort_file), cfg.require_notes)
        .map_err(|e| CliError::Data(format!("{}: {e}", cfg.paths.cohort.display())))?;

    let external = match (cfg.feature.mode, cfg.feature.source) {
        (FeatureMode::WithPhenotypes, AnnotationSourceKind::Lexicon) => {
            let path = cfg.paths.lexicon.as_ref().expect("validated");
            let file = fs::File::open(path)
                .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
            let lexicon = Lexicon::from_tsv(BufReader::new(file), &path.display().to_string())
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            Some(match_cohort(&lexicon, &episodes))
        }
        (FeatureMode::WithPhenotypes, AnnotationSourceKind::File) => {
            let path = cfg.paths.annotations.as_ref().expect("validated");
            Some(load_external_annotations(path, &episodes)?)
        }
        _ => None,
    };
    Ok(Inputs {
        ontology,
        pmap,
        episodes,
        external,
    })
}

/// Run the lexicon matcher over every note with text.
fn match_cohort(lexicon: &Lexicon, episodes: &[Episode]) -> BTreeMap<String, Vec<Annotation>> {
    let mut out = BTreeMap::new();
    for e in episodes {
        let mut annotations = Vec::new();
        for note in &e.notes {
            if let Some(text) = &note.text {
                annotations.extend(lexicon.match_text(text, note.hour, &note.note_id));
            }
        }
        out.insert(e.episode_id.clone(), annotations);
    }
    out
}

/// External annotations reference cohort notes by note id.
fn load_external_annotations(
    path: &Path,
    episodes: &[Episode],
) -> Result<BTreeMap<String, Vec<Annotation>>, CliError> {
    let file = fs::File::open(path)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    let annotations = load_annotations(BufReader::new(file))
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut note_to_episode: BTreeMap<&str, &str> = BTreeMap::new();
    for e in episodes {
        for note in &e.notes {
            note_to_episode.insert(&note.note_id, &e.episode_id);
        }
    }
    let mut out: BTreeMap<String, Vec<Annotation>> = episodes
        .iter()
        .map(|e| (e.episode_id.clone(), Vec::new()))
        .collect();
    for a in annotations {
        let episode_id = note_to_episode.get(a.note_id.as_str()).ok_or_else(|| {
            CliError::Data(format!(
                "{}: annotation references unknown note `{}`",
                path.display(),
                a.note_id
            ))
        })?;
        out.get_mut(*episode_id).expect("episode present").push(a);
    }
    Ok(out)
}

fn annotation_source<'a>(inputs: &'a Inputs) -> AnnotationSource<'a> {
    match &inputs.external {
        Some(map) => AnnotationSource::External(map),
        None => AnnotationSource::NoteTerms,
    }
}

fn build_matrix(
    cfg: &RunConfig,
    inputs: &Inputs,
    feature: &super::config::FeatureSection,
) -> Result<(TaskLabels, FeatureMatrix), CliError> {
    let labels = build_labels(cfg.task, &inputs.episodes, &cfg.task_options);
    let matrix = assemble(
        &inputs.episodes,
        &labels,
        &inputs.ontology,
        &inputs.pmap,
        &annotation_source(inputs),
        &feature.to_feature_config(),
    )
    .map_err(|e| CliError::Data(e.to_string()))?;
    Ok((labels, matrix))
}

enum SplitPlan {
    TrainTest { train: Vec<usize>, test: Vec<usize> },
    Kfold(Vec<Vec<usize>>),
}

fn plan_split(cfg: &RunConfig, episodes: &[Episode]) -> Result<SplitPlan, CliError> {
    match &cfg.split {
        SplitSection::TrainTest { train_fraction } => {
            let (train, test) = split_train_test(episodes, *train_fraction, cfg.seed);
            Ok(SplitPlan::TrainTest { train, test })
        }
        SplitSection::Kfold { k } => split_kfold(episodes, *k, cfg.seed)
            .map(SplitPlan::Kfold)
            .map_err(|e| CliError::Config(e.to_string())),
    }
}

fn require_train_test(plan: &SplitPlan, command: &str) -> Result<(Vec<usize>, Vec<usize>), CliError> {
    match plan {
        SplitPlan::TrainTest { train, test } => Ok((train.clone(), test.clone())),
        SplitPlan::Kfold(_) => Err(CliError::Config(format!(
            "`{command}` needs split.scheme=train_test"
        ))),
    }
}

/// Seeded subsample keeping row order; caps per-hour training cost.
fn subsample_rows(rows: Vec<usize>, cap: Option<usize>, seed: u64) -> Vec<usize> {
    use rand::Rng;
    let Some(cap) = cap else { return rows };
    if rows.len() <= cap {
        return rows;
    }
    let mut rng = stream_rng(seed, "row-subsample", 0);
    let mut pool = rows;
    for i in 0..cap {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
    let mut chosen = pool[..cap].to_vec();
    chosen.sort_unstable();
    chosen
}

fn train_rf_on(
    cfg: &RunConfig,
    matrix: &FeatureMatrix,
    train_episodes: &[usize],
    seed_stream: u64,
) -> Result<Forest, CliError> {
    let set: BTreeSet<usize> = train_episodes.iter().copied().collect();
    let rows = matrix.rows_for_episodes(&set);
    let cap = match cfg.task {
        Task::Mortality => None, // one row per episode already
        _ => cfg.max_train_rows,
    };
    let rows = subsample_rows(rows, cap, derive_seed(cfg.seed, "train", seed_stream));
    let sub = matrix.select_rows(&rows);
    let mut rf_cfg = cfg.model.rf.clone();
    rf_cfg.seed = derive_seed(cfg.seed, "forest", seed_stream);
    train_forest(
        &sub.values,
        sub.width(),
        &sub.labels,
        cfg.task.n_classes(),
        &rf_cfg,
    )
    .map_err(|e| CliError::Numeric(e.to_string()))
}

/// Sequences for the recurrent model, standardized with train-split
/// statistics.
struct LstmData {
    train: Vec<Sequence>,
    test: Vec<(usize, Sequence)>, // episode index kept for slicing
    standardizer: Standardizer,
    width: usize,
}

fn build_sequences(
    inputs: &Inputs,
    feature: &super::config::FeatureSection,
    labels: &TaskLabels,
    train_episodes: &[usize],
    test_episodes: &[usize],
) -> Result<LstmData, CliError> {
    let set = assemble_sequences(
        &inputs.episodes,
        labels,
        &inputs.ontology,
        &inputs.pmap,
        &annotation_source(inputs),
        &feature.to_feature_config(),
    )
    .map_err(|e| CliError::Data(e.to_string()))?;
    let width = set.schema.width();
    let train_set: BTreeSet<usize> = train_episodes.iter().copied().collect();
    let test_set: BTreeSet<usize> = test_episodes.iter().copied().collect();
    let train_rows = set
        .sequences
        .iter()
        .filter(|s| train_set.contains(&s.episode))
        .flat_map(|s| (0..s.n_hours).map(move |h| &s.rows[h * width..(h + 1) * width]));
    let standardizer = Standardizer::fit(train_rows, width);
    let convert = |s: &crate::features::EpisodeSequence| -> Sequence {
        let mut rows = s.rows.clone();
        for h in 0..s.n_hours {
            standardizer.apply(&mut rows[h * width..(h + 1) * width]);
        }
        Sequence {
            inputs: rows,
            labels: s.labels.clone(),
        }
    };
    let mut train = Vec::new();
    let mut test = Vec::new();
    for s in &set.sequences {
        if train_set.contains(&s.episode) {
            train.push(convert(s));
        } else if test_set.contains(&s.episode) {
            test.push((s.episode, convert(s)));
        }
    }
    Ok(LstmData {
        train,
        test,
        standardizer,
        width,
    })
}

/// Per-task prediction samples on the held-out side.
enum Scores {
    /// (episode index, positive probability, label)
    Binary(Vec<(usize, f64, bool)>),
    /// (episode index, predicted class, true class, true remaining hours)
    Los(Vec<(usize, u8, u8, f64)>),
}

fn argmax(probs: &[f64]) -> u8 {
    let mut best = 0usize;
    for (i, p) in probs.iter().enumerate() {
        if *p > probs[best] {
            best = i;
        }
    }
    best as u8
}

fn score_forest(
    cfg: &RunConfig,
    forest: &Forest,
    matrix: &FeatureMatrix,
    test_episodes: &[usize],
    episodes: &[Episode],
) -> Result<Scores, CliError> {
    let set: BTreeSet<usize> = test_episodes.iter().copied().collect();
    let rows = matrix.rows_for_episodes(&set);
    let mut binary = Vec::new();
    let mut los = Vec::new();
    for i in rows {
        let meta = matrix.rows[i];
        let probs = forest
            .predict_proba(matrix.row(i))
            .map_err(|e| CliError::Numeric(e.to_string()))?;
        match cfg.task {
            Task::LengthOfStay => {
                let episode = &episodes[meta.episode as usize];
                let remaining = f64::from(episode.length_hours - meta.hour);
                los.push((
                    meta.episode as usize,
                    argmax(&probs),
                    matrix.labels[i],
                    remaining,
                ));
            }
            _ => binary.push((meta.episode as usize, probs[1], matrix.labels[i] == 1)),
        }
    }
    Ok(match cfg.task {
        Task::LengthOfStay => Scores::Los(los),
        _ => Scores::Binary(binary),
    })
}

fn score_lstm(
    cfg: &RunConfig,
    bundle: &LstmBundle,
    data: &LstmData,
    episodes: &[Episode],
) -> Scores {
    let mut binary = Vec::new();
    let mut los = Vec::new();
    for (episode_idx, seq) in &data.test {
        let probs = crate::models::predict_sequence(&bundle.params, &seq.inputs);
        for (h, label) in seq.labels.iter().enumerate() {
            let Some(label) = label else { continue };
            match cfg.task {
                Task::LengthOfStay => {
                    let episode = &episodes[*episode_idx];
                    // sequence row h backs the prediction at hour h
                    let remaining = f64::from(episode.length_hours - h as u32);
                    los.push((*episode_idx, argmax(&probs[h]), *label, remaining));
                }
                _ => binary.push((*episode_idx, probs[h][1], *label == 1)),
            }
        }
    }
    match cfg.task {
        Task::LengthOfStay => Scores::Los(los),
        _ => Scores::Binary(binary),
    }
}

fn binary_auc_metric(samples: &[(f64, bool)]) -> Result<f64, EvalError> {
    let scores: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let labels: Vec<bool> = samples.iter().map(|s| s.1).collect();
    auc_roc(&scores, &labels)
}

fn binary_pr_metric(samples: &[(f64, bool)]) -> Result<f64, EvalError> {
    let scores: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let labels: Vec<bool> = samples.iter().map(|s| s.1).collect();
    auc_pr(&scores, &labels)
}

fn los_kappa_metric(samples: &[(u8, u8)]) -> Result<f64, EvalError> {
    let pred: Vec<u8> = samples.iter().map(|s| s.0).collect();
    let truth: Vec<u8> = samples.iter().map(|s| s.1).collect();
    kappa(&pred, &truth, KappaWeighting::Linear, 10)
}

fn los_mad_metric(samples: &[(u8, f64)]) -> Result<f64, EvalError> {
    let pred: Vec<u8> = samples.iter().map(|s| s.0).collect();
    let hours: Vec<f64> = samples.iter().map(|s| s.1).collect();
    mad(&pred, &hours)
}

#[derive(Serialize)]
struct EvalReport {
    task: Task,
    feature_design: String,
    model: ModelKind,
    n_test_samples: usize,
    n_test_episodes: usize,
    metrics: Vec<MetricValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    brier: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    calibration: Vec<CalibrationBin>,
    slices: BTreeMap<String, BTreeMap<String, SliceResult>>,
    bootstrap_resamples: usize,
    bootstrap_skipped: usize,
    schema_hash: String,
    seed: u64,
}

fn to_metric(name: MetricName, out: &BootstrapOutcome) -> MetricValue {
    MetricValue {
        name,
        value: out.point,
        ci: Some(Ci {
            lo: out.ci.lo,
            hi: out.ci.hi,
            level: out.ci.level,
        }),
    }
}

/// Metrics + CIs + slices for one scored test set.
fn evaluate_scores(
    cfg: &RunConfig,
    scores: &Scores,
    episodes: &[Episode],
    feature_design: String,
    schema_hash: String,
) -> Result<EvalReport, CliError> {
    let n_resamples = cfg.resamples();
    let seed = derive_seed(cfg.seed, "eval", 0);
    let mut metrics = Vec::new();
    let mut brier_value = None;
    let mut calibration = Vec::new();
    let mut slices = BTreeMap::new();
    let mut skipped = 0;
    let (n_samples, n_episodes);

    match scores {
        Scores::Binary(samples) => {
            n_samples = samples.len();
            n_episodes = samples.iter().map(|s| s.0).collect::<BTreeSet<_>>().len();
            let flat: Vec<(f64, bool)> = samples.iter().map(|s| (s.1, s.2)).collect();
            let roc = bootstrap_ci(&flat, binary_auc_metric, n_resamples, seed)
                .map_err(|e| CliError::Numeric(e.to_string()))?;
            skipped += roc.skipped;
            metrics.push(to_metric(MetricName::AucRoc, &roc));
            let pr = bootstrap_ci(&flat, binary_pr_metric, n_resamples, seed)
                .map_err(|e| CliError::Numeric(e.to_string()))?;
            skipped += pr.skipped;
            metrics.push(to_metric(MetricName::AucPr, &pr));
            let probs: Vec<f64> = flat.iter().map(|s| s.0).collect();
            let labels: Vec<bool> = flat.iter().map(|s| s.1).collect();
            brier_value = Some(brier(&probs, &labels).map_err(|e| CliError::Numeric(e.to_string()))?);
            calibration = calibration_curve(&probs, &labels, 10);
            let tag_samples: Vec<(usize, (f64, bool))> =
                samples.iter().map(|s| (s.0, (s.1, s.2))).collect();
            slices.insert(
                "cohort_tag".to_string(),
                sliced_eval(&tag_samples, episodes, Slicer::CohortTag, binary_auc_metric),
            );
            slices.insert(
                "los_bucket".to_string(),
                sliced_eval(&tag_samples, episodes, Slicer::LosBucket, binary_auc_metric),
            );
        }
        Scores::Los(samples) => {
            n_samples = samples.len();
            n_episodes = samples.iter().map(|s| s.0).collect::<BTreeSet<_>>().len();
            let kappa_samples: Vec<(u8, u8)> = samples.iter().map(|s| (s.1, s.2)).collect();
            let kappa_out = bootstrap_ci(&kappa_samples, los_kappa_metric, n_resamples, seed)
                .map_err(|e| CliError::Numeric(e.to_string()))?;
            skipped += kappa_out.skipped;
            metrics.push(to_metric(MetricName::Kappa, &kappa_out));
            let mad_samples: Vec<(u8, f64)> = samples.iter().map(|s| (s.1, s.3)).collect();
            let mad_out = bootstrap_ci(&mad_samples, los_mad_metric, n_resamples, seed)
                .map_err(|e| CliError::Numeric(e.to_string()))?;
            skipped += mad_out.skipped;
            metrics.push(to_metric(MetricName::Mad, &mad_out));
            let tag_samples: Vec<(usize, (u8, u8))> =
                samples.iter().map(|s| (s.0, (s.1, s.2))).collect();
            slices.insert(
                "cohort_tag".to_string(),
                sliced_eval(&tag_samples, episodes, Slicer::CohortTag, los_kappa_metric),
            );
            slices.insert(
                "los_bucket".to_string(),
                sliced_eval(&tag_samples, episodes, Slicer::LosBucket, los_kappa_metric),
            );
        }
    }
    Ok(EvalReport {
        task: cfg.task,
        feature_design,
        model: cfg.model.kind,
        n_test_samples: n_samples,
        n_test_episodes: n_episodes,
        metrics,
        brier: brier_value,
        calibration,
        slices,
        bootstrap_resamples: n_resamples,
        bootstrap_skipped: skipped,
        schema_hash,
        seed: cfg.seed,
    })
}

fn record_common_inputs(manifest: &mut Manifest, cfg: &RunConfig) -> Result<(), CliError> {
    manifest.record_input(&cfg.paths.ontology)?;
    manifest.record_input(&cfg.paths.cohort)?;
    if let Some(p) = &cfg.paths.persistency {
        manifest.record_input(p)?;
    }
    if let Some(p) = &cfg.paths.lexicon {
        manifest.record_input(p)?;
    }
    if let Some(p) = &cfg.paths.annotations {
        manifest.record_input(p)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// generate

pub fn cmd_generate(cfg: &RunConfig, out_override: Option<PathBuf>) -> Result<(), CliError> {
    let out_path = out_override.unwrap_or_else(|| cfg.paths.cohort.clone());
    let episodes = generate(&cfg.generator).map_err(|e| match e {
        crate::cohort::CohortError::InvalidConfig(_) => CliError::Config(e.to_string()),
        other => CliError::Data(other.to_string()),
    })?;
    if let Some(parent) = out_path.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_out_dir(parent)?;
        }
    }
    let mut buf = Vec::new();
    write_episodes(&mut buf, &episodes).map_err(|e| CliError::Data(e.to_string()))?;
    fs::write(&out_path, &buf)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", out_path.display())))?;
    let mut manifest = Manifest::new("generate", cfg.generator.seed, cfg.content_hash());
    manifest.record_output(&out_path);
    manifest.write(&out_path.with_extension("manifest.json"))?;
    println!(
        "generated {} episodes for {} patients -> {}",
        episodes.len(),
        cfg.generator.n_patients,
        out_path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// ingest

#[derive(Serialize)]
struct IngestSummary {
    episodes: usize,
    patients: usize,
    patient_mortality: f64,
    decomp_positive_fraction: f64,
    los_bin_histogram: [usize; 10],
    notes: usize,
    annotated_terms: usize,
}

pub fn cmd_ingest(cfg: &RunConfig, out_override: Option<PathBuf>) -> Result<(), CliError> {
    let out_dir = out_override.unwrap_or_else(|| cfg.out_dir.clone());
    ensure_out_dir(&out_dir)?;
    let inputs = load_inputs(cfg)?;

    // validate annotation terms against the ontology right away
    if let Some(map) = &inputs.external {
        for (episode_id, annotations) in map {
            for a in annotations {
                if !inputs.ontology.contains(&a.term) {
                    return Err(CliError::Data(format!(
                        "episode {episode_id}: annotation term {} not in ontology",
                        a.term
                    )));
                }
            }
        }
    }

    let episodes = &inputs.episodes;
    if episodes.is_empty() {
        return Err(CliError::Data("cohort is empty after filtering".into()));
    }
    let mut patients: BTreeMap<&str, bool> = BTreeMap::new();
    for e in episodes {
        *patients.entry(&e.patient_id).or_insert(false) |= e.died_in_hospital;
    }
    let labels = build_labels(Task::Decompensation, episodes, &cfg.task_options);
    let positives = labels.rows.iter().filter(|r| r.label == 1).count();
    let mut histogram = [0usize; 10];
    for e in episodes {
        histogram[e.los_bin() as usize] += 1;
    }
    let summary = IngestSummary {
        episodes: episodes.len(),
        patients: patients.len(),
        patient_mortality: patients.values().filter(|d| **d).count() as f64
            / patients.len() as f64,
        decomp_positive_fraction: positives as f64 / labels.rows.len().max(1) as f64,
        los_bin_histogram: histogram,
        notes: episodes.iter().map(|e| e.notes.len()).sum(),
        annotated_terms: episodes
            .iter()
            .flat_map(|e| &e.notes)
            .map(|n| n.terms.len())
            .sum(),
    };

    let normalized = out_dir.join("cohort.normalized.jsonl");
    let mut buf = Vec::new();
    write_episodes(&mut buf, episodes).map_err(|e| CliError::Data(e.to_string()))?;
    fs::write(&normalized, &buf)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", normalized.display())))?;
    write_json(&out_dir.join("ingest.json"), &summary)?;

    let task_labels = build_labels(cfg.task, episodes, &cfg.task_options);
    let mut csv = Vec::new();
    write_labels_csv(&mut csv, &task_labels, episodes)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let labels_path = out_dir.join(format!("labels.{}.csv", cfg.task));
    fs::write(&labels_path, &csv)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", labels_path.display())))?;

    let mut manifest = Manifest::new("ingest", cfg.seed, cfg.content_hash());
    record_common_inputs(&mut manifest, cfg)?;
    manifest.record_output(&normalized);
    manifest.record_output(&out_dir.join("ingest.json"));
    manifest.record_output(&labels_path);
    manifest.write(&out_dir.join("ingest.manifest.json"))?;
    println!(
        "ingested {} episodes / {} patients (mortality {:.4}, decomp fraction {:.4})",
        summary.episodes, summary.patients, summary.patient_mortality, summary.decomp_positive_fraction
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train

fn model_header(cfg: &RunConfig, schema_hash: &str, kind: &str) -> ModelHeader {
    let hyperparameters = match cfg.model.kind {
        ModelKind::Rf => serde_json::to_value(&cfg.model.rf),
        ModelKind::Lstm => serde_json::to_value(&cfg.model.lstm),
    }
    .expect("hyperparameters serialize");
    ModelHeader {
        kind: kind.to_string(),
        schema_hash: schema_hash.to_string(),
        n_features: 0, // filled by caller
        n_classes: cfg.task.n_classes(),
        seed: cfg.seed,
        hyperparameters,
    }
}

fn save_model_file(
    path: &Path,
    model: &TrainedModel,
    mut header: ModelHeader,
    n_features: usize,
) -> Result<(), CliError> {
    header.n_features = n_features;
    let mut buf = Vec::new();
    save_model(&mut buf, model, &header).map_err(|e| CliError::Data(e.to_string()))?;
    fs::write(path, &buf)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn train_one(
    cfg: &RunConfig,
    inputs: &Inputs,
    labels: &TaskLabels,
    matrix: &FeatureMatrix,
    train_episodes: &[usize],
    test_episodes: &[usize],
    seed_stream: u64,
) -> Result<(TrainedModel, Option<LstmData>), CliError> {
    match cfg.model.kind {
        ModelKind::Rf => {
            let forest = train_rf_on(cfg, matrix, train_episodes, seed_stream)?;
            Ok((TrainedModel::Forest(forest), None))
        }
        ModelKind::Lstm => {
            let data = build_sequences(
                inputs,
                &cfg.feature,
                labels,
                train_episodes,
                test_episodes,
            )?;
            let mut lstm_cfg = cfg.model.lstm.clone();
            lstm_cfg.seed = derive_seed(cfg.seed, "lstm", seed_stream);
            let trained = crate::models::train_lstm(
                &data.train,
                data.width,
                if cfg.task.n_classes() == 2 { 1 } else { cfg.task.n_classes() },
                &lstm_cfg,
                None,
            )
            .map_err(|e| CliError::Numeric(e.to_string()))?;
            let bundle = LstmBundle {
                params: trained.params,
                standardizer: data.standardizer.clone(),
                loss_curve: trained.loss_curve,
            };
            Ok((TrainedModel::Lstm(bundle), Some(data)))
        }
    }
}

pub fn cmd_train(cfg: &RunConfig, out_override: Option<PathBuf>) -> Result<(), CliError> {
    let out_dir = out_override.unwrap_or_else(|| cfg.out_dir.clone());
    ensure_out_dir(&out_dir)?;
    let inputs = load_inputs(cfg)?;
    let (labels, matrix) = build_matrix(cfg, &inputs, &cfg.feature)?;
    let plan = plan_split(cfg, &inputs.episodes)?;
    let kind = match cfg.model.kind {
        ModelKind::Rf => "forest",
        ModelKind::Lstm => "lstm",
    };

    let mut manifest = Manifest::new("train", cfg.seed, cfg.content_hash());
    record_common_inputs(&mut manifest, cfg)?;

    write_json(&out_dir.join("schema.json"), &matrix.schema)?;
    manifest.record_output(&out_dir.join("schema.json"));

    if cfg.export_matrix {
        let bin_path = out_dir.join("features.bin");
        let mut buf = Vec::new();
        matrix
            .write_binary(&mut buf)
            .map_err(|e| CliError::Data(e.to_string()))?;
        fs::write(&bin_path, &buf)
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", bin_path.display())))?;
        let mut csv = Vec::new();
        matrix
            .write_csv(&mut csv)
            .map_err(|e| CliError::Data(e.to_string()))?;
        fs::write(out_dir.join("features.csv"), &csv)
            .map_err(|e| CliError::Data(e.to_string()))?;
        manifest.record_output(&bin_path);
        manifest.record_output(&out_dir.join("features.csv"));
    }

    match plan {
        SplitPlan::TrainTest { train, test } => {
            let (model, data) = train_one(cfg, &inputs, &labels, &matrix, &train, &test, 0)?;
            let path = out_dir.join("model.bin");
            save_model_file(
                &path,
                &model,
                model_header(cfg, &matrix.schema.version_hash, kind),
                matrix.width(),
            )?;
            manifest.record_output(&path);
            if let TrainedModel::Lstm(bundle) = &model {
                let mut csv = String::from("epoch,loss\n");
                for (i, l) in bundle.loss_curve.iter().enumerate() {
                    csv.push_str(&format!("{i},{l}\n"));
                }
                write_text(&out_dir.join("loss_curve.csv"), &csv)?;
                manifest.record_output(&out_dir.join("loss_curve.csv"));
            }
            let _ = data;
            println!(
                "trained {kind} on {} train episodes ({} features) -> {}",
                train.len(),
                matrix.width(),
                path.display()
            );
        }
        SplitPlan::Kfold(folds) => {
            for (i, held_out) in folds.iter().enumerate() {
                let train: Vec<usize> = folds
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .flat_map(|(_, f)| f.iter().copied())
                    .collect();
                let (model, _) =
                    train_one(cfg, &inputs, &labels, &matrix, &train, held_out, i as u64)?;
                let path = out_dir.join(format!("model_fold{i}.bin"));
                save_model_file(
                    &path,
                    &model,
                    model_header(cfg, &matrix.schema.version_hash, kind),
                    matrix.width(),
                )?;
                manifest.record_output(&path);
            }
            println!("trained {kind} across {} folds", folds.len());
        }
    }
    manifest.write(&out_dir.join("train.manifest.json"))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// eval

fn load_model_file(path: &Path) -> Result<(TrainedModel, ModelHeader), CliError> {
    let file = fs::File::open(path)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    load_model(BufReader::new(file)).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_calibration_artifacts(
    out_dir: &Path,
    report: &EvalReport,
    manifest: &mut Manifest,
) -> Result<(), CliError> {
    if report.calibration.is_empty() {
        return Ok(());
    }
    let mut csv = String::from("mean_predicted,observed_frequency,count\n");
    for bin in &report.calibration {
        csv.push_str(&format!(
            "{},{},{}\n",
            bin.mean_predicted, bin.observed_frequency, bin.count
        ));
    }
    let csv_path = out_dir.join("calibration.csv");
    write_text(&csv_path, &csv)?;
    manifest.record_output(&csv_path);

    let points: Vec<(f64, f64)> = report
        .calibration
        .iter()
        .map(|b| (b.mean_predicted, b.observed_frequency))
        .collect();
    let series = [LineSeries {
        name: "model",
        points: &points,
    }];
    let title = format!(
        "Reliability ({}, Brier {:.4})",
        report.task,
        report.brier.unwrap_or(f64::NAN)
    );
    let svg_path = out_dir.join("calibration.svg");
    write_text(&svg_path, &line_chart(&title, &series, true))?;
    manifest.record_output(&svg_path);
    Ok(())
}

pub fn cmd_eval(cfg: &RunConfig, out_override: Option<PathBuf>) -> Result<(), CliError> {
    let out_dir = out_override.unwrap_or_else(|| cfg.out_dir.clone());
    ensure_out_dir(&out_dir)?;
    let inputs = load_inputs(cfg)?;
    let (labels, matrix) = build_matrix(cfg, &inputs, &cfg.feature)?;
    let plan = plan_split(cfg, &inputs.episodes)?;

    let mut manifest = Manifest::new("eval", cfg.seed, cfg.content_hash());
    record_common_inputs(&mut manifest, cfg)?;

    match plan {
        SplitPlan::TrainTest { train, test } => {
            let model_path = cfg
                .paths
                .model
                .clone()
                .unwrap_or_else(|| cfg.out_dir.join("model.bin"));
            manifest.record_input(&model_path)?;
            let (model, header) = load_model_file(&model_path)?;
            if header.schema_hash != matrix.schema.version_hash {
                return Err(CliError::Data(format!(
                    "model schema {} does not match assembled schema {}",
                    header.schema_hash, matrix.schema.version_hash
                )));
            }
            let scores = match &model {
                TrainedModel::Forest(forest) => {
                    score_forest(cfg, forest, &matrix, &test, &inputs.episodes)?
                }
                TrainedModel::Lstm(bundle) => {
                    let data =
                        build_sequences(&inputs, &cfg.feature, &labels, &train, &test)?;
                    score_lstm(cfg, bundle, &data, &inputs.episodes)
                }
            };
            let report = evaluate_scores(
                cfg,
                &scores,
                &inputs.episodes,
                cfg.feature.label(),
                matrix.schema.version_hash.clone(),
            )?;
            write_json(&out_dir.join("report.json"), &report)?;
            manifest.record_output(&out_dir.join("report.json"));
            write_calibration_artifacts(&out_dir, &report, &mut manifest)?;
            for m in &report.metrics {
                let ci = m.ci.as_ref().expect("eval metrics carry CIs");
                println!(
                    "{}: {:.4} (95% CI {:.4}, {:.4})",
                    m.name, m.value, ci.lo, ci.hi
                );
            }
        }
        SplitPlan::Kfold(folds) => {
            #[derive(Serialize)]
            struct FoldAggregate {
                task: Task,
                folds: usize,
                metrics: BTreeMap<String, (f64, f64)>, // mean, sd
                per_fold: Vec<BTreeMap<String, f64>>,
            }
            let mut per_fold: Vec<BTreeMap<String, f64>> = Vec::new();
            for (i, held_out) in folds.iter().enumerate() {
                let model_path = cfg.out_dir.join(format!("model_fold{i}.bin"));
                manifest.record_input(&model_path)?;
                let (model, header) = load_model_file(&model_path)?;
                if header.schema_hash != matrix.schema.version_hash {
                    return Err(CliError::Data(format!(
                        "fold {i} model schema {} does not match assembled schema {}",
                        header.schema_hash, matrix.schema.version_hash
                    )));
                }
                let train: Vec<usize> = folds
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .flat_map(|(_, f)| f.iter().copied())
                    .collect();
                let scores = match &model {
                    TrainedModel::Forest(forest) => {
                        score_forest(cfg, forest, &matrix, held_out, &inputs.episodes)?
                    }
                    TrainedModel::Lstm(bundle) => {
                        let data =
                            build_sequences(&inputs, &cfg.feature, &labels, &train, held_out)?;
                        score_lstm(cfg, bundle, &data, &inputs.episodes)
                    }
                };
                let mut fold_metrics = BTreeMap::new();
                match &scores {
                    Scores::Binary(samples) => {
                        let flat: Vec<(f64, bool)> = samples.iter().map(|s| (s.1, s.2)).collect();
                        fold_metrics.insert(
                            "AUC-ROC".to_string(),
                            binary_auc_metric(&flat).map_err(|e| CliError::Numeric(e.to_string()))?,
                        );
                        fold_metrics.insert(
                            "AUC-PR".to_string(),
                            binary_pr_metric(&flat).map_err(|e| CliError::Numeric(e.to_string()))?,
                        );
                    }
                    Scores::Los(samples) => {
                        let ks: Vec<(u8, u8)> = samples.iter().map(|s| (s.1, s.2)).collect();
                        let ms: Vec<(u8, f64)> = samples.iter().map(|s| (s.1, s.3)).collect();
                        fold_metrics.insert(
                            "Kappa".to_string(),
                            los_kappa_metric(&ks).map_err(|e| CliError::Numeric(e.to_string()))?,
                        );
                        fold_metrics.insert(
                            "MAD".to_string(),
                            los_mad_metric(&ms).map_err(|e| CliError::Numeric(e.to_string()))?,
                        );
                    }
                }
                per_fold.push(fold_metrics);
            }
            let mut aggregate: BTreeMap<String, (f64, f64)> = BTreeMap::new();
            if let Some(first) = per_fold.first() {
                for name in first.keys() {
                    let values: Vec<f64> = per_fold.iter().map(|f| f[name]).collect();
                    let mean = values.iter().sum::<f64>() / values.len() as f64;
                    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                        / (values.len().saturating_sub(1)).max(1) as f64;
                    aggregate.insert(name.clone(), (mean, var.sqrt()));
                }
            }
            let report = FoldAggregate {
                task: cfg.task,
                folds: folds.len(),
                metrics: aggregate,
                per_fold,
            };
            write_json(&out_dir.join("report.cv.json"), &report)?;
            manifest.record_output(&out_dir.join("report.cv.json"));
            for (name, (mean, sd)) in &report.metrics {
                println!("{name}: mean {mean:.4} sd {sd:.4} over {} folds", report.folds);
            }
        }
    }
    manifest.write(&out_dir.join("eval.manifest.json"))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// explain

fn explain_target(cfg: &RunConfig) -> ExplainTarget {
    match &cfg.explain.class_group {
        Some(group) => ExplainTarget::group(group.clone()),
        None => match cfg.task {
            Task::LengthOfStay => ExplainTarget::group(vec![8, 9]),
            _ => ExplainTarget::positive(),
        },
    }
}

pub fn cmd_explain(cfg: &RunConfig, out_override: Option<PathBuf>) -> Result<(), CliError> {
    let out_dir = out_override.unwrap_or_else(|| cfg.out_dir.clone());
    ensure_out_dir(&out_dir)?;
    let inputs = load_inputs(cfg)?;
    let (_, matrix) = build_matrix(cfg, &inputs, &cfg.feature)?;
    let plan = plan_split(cfg, &inputs.episodes)?;
    let (_, test) = require_train_test(&plan, "explain")?;

    let model_path = cfg
        .paths
        .model
        .clone()
        .unwrap_or_else(|| cfg.out_dir.join("model.bin"));
    let (model, header) = load_model_file(&model_path)?;
    if header.schema_hash != matrix.schema.version_hash {
        return Err(CliError::Data(format!(
            "model schema {} does not match assembled schema {}",
            header.schema_hash, matrix.schema.version_hash
        )));
    }
    let TrainedModel::Forest(forest) = &model else {
        return Err(CliError::Config(
            "explain runs on the tree model only; train with model.kind=rf".into(),
        ));
    };
    let target = explain_target(cfg);
    let mut manifest = Manifest::new("explain", cfg.seed, cfg.content_hash());
    record_common_inputs(&mut manifest, cfg)?;
    manifest.record_input(&model_path)?;

    // cohort-level importance over a seeded sample of test rows
    let set: BTreeSet<usize> = test.iter().copied().collect();
    let rows = matrix.rows_for_episodes(&set);
    let rows = subsample_rows(rows, Some(cfg.explain.max_rows), derive_seed(cfg.seed, "explain", 0));
    let sub = matrix.select_rows(&rows);
    let report = importance_report(
        forest,
        &sub.values,
        sub.width(),
        &matrix.schema.names,
        &target,
    )
    .map_err(|e| CliError::Numeric(e.to_string()))?;

    let mut csv = String::from("rank,feature,mean_abs_phi\n");
    for (rank, (feature, value)) in report.ranking.iter().enumerate() {
        csv.push_str(&format!(
            "{rank},{},{value}\n",
            report.feature_names[*feature]
        ));
    }
    write_text(&out_dir.join("importance.csv"), &csv)?;
    manifest.record_output(&out_dir.join("importance.csv"));
    let mut beeswarm = Vec::new();
    write_beeswarm_csv(&mut beeswarm, &report, &sub.values, sub.width())
        .map_err(|e| CliError::Data(e.to_string()))?;
    fs::write(out_dir.join("beeswarm.csv"), &beeswarm)
        .map_err(|e| CliError::Data(e.to_string()))?;
    manifest.record_output(&out_dir.join("beeswarm.csv"));
    let top: Vec<(String, f64)> = report
        .top(cfg.explain.top_k)
        .into_iter()
        .map(|(n, v)| (n.to_string(), v))
        .collect();
    write_text(
        &out_dir.join("importance.svg"),
        &bar_chart("Mean |phi| by feature", &top),
    )?;
    manifest.record_output(&out_dir.join("importance.svg"));

    // per-patient timeline
    let episode_idx = pick_timeline_episode(cfg, &inputs.episodes, &test)?;
    let episode_rows: Vec<usize> = matrix
        .rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.episode as usize == episode_idx)
        .map(|(i, _)| i)
        .collect();
    if episode_rows.is_empty() {
        return Err(CliError::Data(format!(
            "episode {} has no labeled rows to explain",
            inputs.episodes[episode_idx].episode_id
        )));
    }
    let timeline_matrix = matrix.select_rows(&episode_rows);
    let hours: Vec<u32> = timeline_matrix.rows.iter().map(|r| r.hour).collect();
    let timeline = patient_timeline(
        forest,
        &timeline_matrix.values,
        timeline_matrix.width(),
        &hours,
        &matrix.schema.names,
        &target,
    )
    .map_err(|e| CliError::Numeric(e.to_string()))?;
    let mut buf = Vec::new();
    write_timeline_csv(&mut buf, &timeline, &timeline_matrix.values, timeline_matrix.width())
        .map_err(|e| CliError::Data(e.to_string()))?;
    fs::write(out_dir.join("timeline.csv"), &buf).map_err(|e| CliError::Data(e.to_string()))?;
    manifest.record_output(&out_dir.join("timeline.csv"));
    let mut buf = Vec::new();
    write_heatmap_csv(&mut buf, &timeline).map_err(|e| CliError::Data(e.to_string()))?;
    fs::write(out_dir.join("heatmap.csv"), &buf).map_err(|e| CliError::Data(e.to_string()))?;
    manifest.record_output(&out_dir.join("heatmap.csv"));

    let raw: Vec<(f64, f64)> = hours
        .iter()
        .zip(&timeline.probability)
        .map(|(h, p)| (f64::from(*h), *p))
        .collect();
    let norm: Vec<(f64, f64)> = hours
        .iter()
        .zip(&timeline.probability_normalized)
        .map(|(h, p)| (f64::from(*h), *p))
        .collect();
    let series = [
        LineSeries {
            name: "probability",
            points: &raw,
        },
        LineSeries {
            name: "min-max normalized",
            points: &norm,
        },
    ];
    let title = format!(
        "Predicted probability over time ({})",
        inputs.episodes[episode_idx].episode_id
    );
    write_text(&out_dir.join("timeline.svg"), &line_chart(&title, &series, false))?;
    manifest.record_output(&out_dir.join("timeline.svg"));

    manifest.write(&out_dir.join("explain.manifest.json"))?;
    println!(
        "explained {} rows; top feature: {}; timeline episode: {}",
        rows.len(),
        report
            .top(1)
            .first()
            .map(|(n, _)| n.to_string())
            .unwrap_or_default(),
        inputs.episodes[episode_idx].episode_id
    );
    Ok(())
}

fn pick_timeline_episode(
    cfg: &RunConfig,
    episodes: &[Episode],
    test: &[usize],
) -> Result<usize, CliError> {
    if let Some(id) = &cfg.explain.episode_id {
        return episodes
            .iter()
            .position(|e| &e.episode_id == id)
            .ok_or_else(|| CliError::Data(format!("episode {id} not found in cohort")));
    }
    // default: test episode with the most notes, ties to the smaller id
    test.iter()
        .copied()
        .max_by(|a, b| {
            episodes[*a]
                .notes
                .len()
                .cmp(&episodes[*b].notes.len())
                .then_with(|| episodes[*b].episode_id.cmp(&episodes[*a].episode_id))
        })
        .ok_or_else(|| CliError::Data("test split is empty".into()))
}

// ---------------------------------------------------------------------------
// significance

#[derive(Serialize)]
struct SignificanceReport {
    task: Task,
    metric: String,
    n_resamples: usize,
    matrix: SignificanceMatrix,
    win_percentages: Vec<Vec<f64>>,
}

pub fn cmd_significance(cfg: &RunConfig, out_override: Option<PathBuf>) -> Result<(), CliError> {
    let out_dir = out_override.unwrap_or_else(|| cfg.out_dir.clone());
    ensure_out_dir(&out_dir)?;
    if cfg.variants.len() < 2 {
        return Err(CliError::Config(
            "significance needs at least two entries in `variants`".into(),
        ));
    }
    let plan = plan_split(cfg, &load_cohort_only(cfg)?)?;
    let (train, test) = require_train_test(&plan, "significance")?;

    let mut models: Vec<(String, Vec<(f64, bool)>)> = Vec::new();
    let mut los_models: Vec<(String, Vec<(u8, u8)>)> = Vec::new();
    for (v_idx, variant) in cfg.variants.iter().enumerate() {
        let scores = run_variant(cfg, variant, &train, &test, v_idx as u64)?;
        match scores {
            Scores::Binary(samples) => {
                models.push((
                    variant.name.clone(),
                    samples.iter().map(|s| (s.1, s.2)).collect(),
                ));
            }
            Scores::Los(samples) => {
                los_models.push((
                    variant.name.clone(),
                    samples.iter().map(|s| (s.1, s.2)).collect(),
                ));
            }
        }
    }

    let n_resamples = cfg.resamples();
    let seed = derive_seed(cfg.seed, "significance", 0);
    let (matrix, metric_name) = if cfg.task == Task::LengthOfStay {
        (
            significance_matrix(&los_models, los_kappa_metric, n_resamples, seed)
                .map_err(|e| CliError::Numeric(e.to_string()))?,
            "Kappa",
        )
    } else {
        (
            significance_matrix(&models, binary_auc_metric, n_resamples, seed)
                .map_err(|e| CliError::Numeric(e.to_string()))?,
            "AUC-ROC",
        )
    };

    let k = matrix.names.len();
    let win_percentages: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| if i == j { f64::NAN } else { matrix.win_pct(i, j) }).collect())
        .collect();
    let report = SignificanceReport {
        task: cfg.task,
        metric: metric_name.to_string(),
        n_resamples,
        matrix: matrix.clone(),
        win_percentages,
    };
    write_json(&out_dir.join("significance.json"), &report)?;

    let mut table = format!("win % of row over column ({metric_name}, {n_resamples} resamples)\n");
    table.push_str(&format!("{:>24}", ""));
    for name in &matrix.names {
        table.push_str(&format!("{name:>12}"));
    }
    table.push('\n');
    for i in 0..k {
        table.push_str(&format!("{:>24}", matrix.names[i]));
        for j in 0..k {
            if i == j {
                table.push_str(&format!("{:>12}", "-"));
            } else {
                table.push_str(&format!("{:>12.2}", matrix.win_pct(i, j)));
            }
        }
        table.push('\n');
    }
    write_text(&out_dir.join("significance.txt"), &table)?;
    print!("{table}");

    let mut manifest = Manifest::new("significance", cfg.seed, cfg.content_hash());
    record_common_inputs(&mut manifest, cfg)?;
    manifest.record_output(&out_dir.join("significance.json"));
    manifest.record_output(&out_dir.join("significance.txt"));
    manifest.write(&out_dir.join("significance.manifest.json"))?;
    Ok(())
}

fn load_cohort_only(cfg: &RunConfig) -> Result<Vec<Episode>, CliError> {
    let cohort_file = fs::File::open(&cfg.paths.cohort).map_err(|e| {
        CliError::Data(format!("cannot open {}: {e}", cfg.paths.cohort.display()))
    })?;
    load_episodes(BufReader::new(cohort_file), cfg.require_notes)
        .map_err(|e| CliError::Data(format!("{}: {e}", cfg.paths.cohort.display())))
}

/// Train and score one feature variant on the shared split.
fn run_variant(
    cfg: &RunConfig,
    variant: &Variant,
    train: &[usize],
    test: &[usize],
    seed_stream: u64,
) -> Result<Scores, CliError> {
    let mut variant_cfg = cfg.clone();
    variant_cfg.feature = variant.feature.clone();
    variant_cfg.validate()?;
    let inputs = load_inputs(&variant_cfg)?;
    let (labels, matrix) = build_matrix(&variant_cfg, &inputs, &variant.feature)?;
    match cfg.model.kind {
        ModelKind::Rf => {
            let forest = train_rf_on(&variant_cfg, &matrix, train, seed_stream)?;
            score_forest(&variant_cfg, &forest, &matrix, test, &inputs.episodes)
        }
        ModelKind::Lstm => {
            let data = build_sequences(&inputs, &variant.feature, &labels, train, test)?;
            let mut lstm_cfg = cfg.model.lstm.clone();
            lstm_cfg.seed = derive_seed(cfg.seed, "lstm", seed_stream);
            let trained = crate::models::train_lstm(
                &data.train,
                data.width,
                if cfg.task.n_classes() == 2 { 1 } else { cfg.task.n_classes() },
                &lstm_cfg,
                None,
            )
            .map_err(|e| CliError::Numeric(e.to_string()))?;
            let bundle = LstmBundle {
                params: trained.params,
                standardizer: data.standardizer.clone(),
                loss_curve: trained.loss_curve,
            };
            Ok(score_lstm(&variant_cfg, &bundle, &data, &inputs.episodes))
        }
    }
}

// ---------------------------------------------------------------------------
// ablation

#[derive(Serialize)]
struct AblationArm {
    feature_design: String,
    metrics: Vec<MetricValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    brier: Option<f64>,
}

#[derive(Serialize)]
struct AblationReport {
    task: Task,
    model: ModelKind,
    with_propagation: AblationArm,
    without_propagation: AblationArm,
    /// primary-metric delta, with-propagation minus without
    delta: BTreeMap<String, f64>,
}

pub fn cmd_ablation(cfg: &RunConfig, out_override: Option<PathBuf>) -> Result<(), CliError> {
    let out_dir = out_override.unwrap_or_else(|| cfg.out_dir.clone());
    ensure_out_dir(&out_dir)?;
    let plan = plan_split(cfg, &load_cohort_only(cfg)?)?;
    let (train, test) = require_train_test(&plan, "ablation")?;

    let mut arms = Vec::new();
    for (i, propagation) in [true, false].into_iter().enumerate() {
        let mut feature = cfg.feature.clone();
        feature.mode = FeatureMode::WithPhenotypes;
        feature.propagation = propagation;
        let variant = Variant {
            name: if propagation { "with" } else { "without" }.to_string(),
            feature: feature.clone(),
        };
        let scores = run_variant(cfg, &variant, &train, &test, 100 + i as u64)?;
        let mut variant_cfg = cfg.clone();
        variant_cfg.feature = feature.clone();
        let episodes = load_cohort_only(cfg)?;
        let report = evaluate_scores(&variant_cfg, &scores, &episodes, feature.label(), String::new())?;
        arms.push(AblationArm {
            feature_design: feature.label(),
            metrics: report.metrics,
            brier: report.brier,
        });
    }
    let without = arms.pop().expect("two arms");
    let with = arms.pop().expect("two arms");
    let mut delta = BTreeMap::new();
    for m in &with.metrics {
        if let Some(other) = without.metrics.iter().find(|o| o.name == m.name) {
            delta.insert(m.name.to_string(), m.value - other.value);
        }
    }
    let report = AblationReport {
        task: cfg.task,
        model: cfg.model.kind,
        with_propagation: with,
        without_propagation: without,
        delta,
    };
    write_json(&out_dir.join("ablation.json"), &report)?;

    let mut table = format!("phenotype propagation ablation ({})\n", report.task);
    table.push_str(&format!(
        "{:>14}{:>12}{:>12}{:>24}\n",
        "arm", "metric", "value", "95% CI"
    ));
    for (name, arm) in [
        ("with", &report.with_propagation),
        ("without", &report.without_propagation),
    ] {
        for m in &arm.metrics {
            let ci = m.ci.as_ref().expect("eval metrics carry CIs");
            table.push_str(&format!(
                "{name:>14}{:>12}{:>12.4}{:>24}\n",
                m.name.to_string(),
                m.value,
                format!("({:.4}, {:.4})", ci.lo, ci.hi)
            ));
        }
    }
    for (metric, d) in &report.delta {
        table.push_str(&format!("delta {metric}: {d:+.4} (with - without)\n"));
    }
    write_text(&out_dir.join("ablation.txt"), &table)?;
    print!("{table}");

    let mut manifest = Manifest::new("ablation", cfg.seed, cfg.content_hash());
    record_common_inputs(&mut manifest, cfg)?;
    manifest.record_output(&out_dir.join("ablation.json"));
    manifest.record_output(&out_dir.join("ablation.txt"));
    manifest.write(&out_dir.join("ablation.manifest.json"))?;
    Ok(())
}

