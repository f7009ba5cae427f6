//! The declarative run configuration: one JSON document drives every
//! subcommand. Command-line flags (`--seed`, `--out`) override the matching
//! config keys.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cohort::GeneratorConfig;
use crate::features::{FeatureConfig, FeatureMode};
use crate::models::{ForestConfig, LstmConfig};
use crate::ontology::AggregationMode;
use crate::tasks::{Task, TaskConfig};

use super::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub task: Task,
    pub feature: FeatureSection,
    pub model: ModelSection,
    pub split: SplitSection,
    pub seed: u64,
    pub paths: PathsSection,
    pub generator: GeneratorConfig,
    pub task_options: TaskConfig,
    pub out_dir: PathBuf,
    /// Bootstrap resamples; the per-task defaults are 10,000 for mortality
    /// and 1,000 for the per-hour tasks.
    pub n_resamples: Option<usize>,
    /// Cap on training rows for the per-hour tasks (seeded subsample).
    pub max_train_rows: Option<usize>,
    /// Drop episodes without clinical notes on load.
    pub require_notes: bool,
    /// Also write the assembled matrix (binary + CSV + schema) from `train`.
    pub export_matrix: bool,
    pub explain: ExplainSection,
    /// Feature variants compared by `significance`.
    pub variants: Vec<Variant>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: Task::Mortality,
            feature: FeatureSection::default(),
            model: ModelSection::default(),
            split: SplitSection::default(),
            seed: 7,
            paths: PathsSection::default(),
            generator: GeneratorConfig::default(),
            task_options: TaskConfig::default(),
            out_dir: PathBuf::from("out"),
            n_resamples: None,
            max_train_rows: Some(20_000),
            require_notes: true,
            export_matrix: false,
            explain: ExplainSection::default(),
            variants: vec![
                Variant {
                    name: "S".into(),
                    feature: FeatureSection {
                        mode: FeatureMode::Structured,
                        ..FeatureSection::default()
                    },
                },
                Variant {
                    name: "S+notes".into(),
                    feature: FeatureSection::default(),
                },
            ],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureSection {
    pub mode: FeatureMode,
    /// Where annotations come from in `with_phenotypes` mode.
    pub source: AnnotationSourceKind,
    pub propagation: bool,
    pub aggregation_levels: u32,
    pub aggregation_mode: AggregationMode,
    pub one_hot_categoricals: bool,
}

impl Default for FeatureSection {
    fn default() -> Self {
        FeatureSection {
            mode: FeatureMode::WithPhenotypes,
            source: AnnotationSourceKind::Notes,
            propagation: true,
            aggregation_levels: 1,
            aggregation_mode: AggregationMode::Augment,
            one_hot_categoricals: false,
        }
    }
}

impl FeatureSection {
    pub fn to_feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            mode: self.mode,
            propagation: self.propagation,
            aggregation_levels: self.aggregation_levels,
            aggregation_mode: self.aggregation_mode,
            one_hot_categoricals: self.one_hot_categoricals,
        }
    }

    pub fn label(&self) -> String {
        match self.mode {
            FeatureMode::Structured => "S".to_string(),
            FeatureMode::WithPhenotypes => format!(
                "S+{}{}",
                match self.source {
                    AnnotationSourceKind::Notes => "notes",
                    AnnotationSourceKind::Lexicon => "lexicon",
                    AnnotationSourceKind::File => "file",
                },
                if self.propagation { "" } else { " (no propagation)" }
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationSourceKind {
    /// Terms attached to the cohort's notes.
    Notes,
    /// Run the lexicon matcher over note text.
    Lexicon,
    /// Load the annotations JSONL from `paths.annotations`.
    File,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub rf: ForestConfig,
    pub lstm: LstmConfig,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            kind: ModelKind::Rf,
            rf: ForestConfig::default(),
            lstm: LstmConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Rf,
    Lstm,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum SplitSection {
    TrainTest { train_fraction: f64 },
    Kfold { k: usize },
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection::TrainTest {
            train_fraction: 0.85,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsSection {
    pub ontology: PathBuf,
    pub cohort: PathBuf,
    pub persistency: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainSection {
    /// Episode to build the timeline for; default picks the test episode
    /// with the most notes.
    pub episode_id: Option<String>,
    pub top_k: usize,
    /// Explained classes; default is the positive class for binary tasks and
    /// the two longest-stay bins for length of stay.
    pub class_group: Option<Vec<usize>>,
    /// Rows sampled for the importance report.
    pub max_rows: usize,
}

impl Default for ExplainSection {
    fn default() -> Self {
        ExplainSection {
            episode_id: None,
            top_k: 20,
            class_group: None,
            max_rows: 400,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    pub feature: FeatureSection,
}

impl RunConfig {
    /// Parse and validate a config file; schema errors carry the JSON path of
    /// the offending key.
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut deserializer = serde_json::Deserializer::from_str(&text);
        let cfg: RunConfig = serde_path_to_error::deserialize(&mut deserializer)
            .map_err(|e| CliError::Config(format!("{}: at `{}`: {}", path.display(), e.path(), e.inner())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        match &self.split {
            SplitSection::TrainTest { train_fraction } => {
                if !(0.0..1.0).contains(train_fraction) {
                    return Err(CliError::Config(format!(
                        "split.train_fraction={train_fraction} not in (0,1)"
                    )));
                }
            }
            SplitSection::Kfold { k } => {
                if *k < 2 {
                    return Err(CliError::Config("split.k must be >= 2".into()));
                }
            }
        }
        if self.feature.mode == FeatureMode::WithPhenotypes {
            match self.feature.source {
                AnnotationSourceKind::Lexicon if self.paths.lexicon.is_none() => {
                    return Err(CliError::Config(
                        "feature.source=lexicon requires paths.lexicon".into(),
                    ));
                }
                AnnotationSourceKind::File if self.paths.annotations.is_none() => {
                    return Err(CliError::Config(
                        "feature.source=file requires paths.annotations".into(),
                    ));
                }
                _ => {}
            }
        }
        if let Some(n) = self.n_resamples {
            if n < 100 {
                return Err(CliError::Config(format!(
                    "n_resamples={n} must be at least 100"
                )));
            }
        }
        Ok(())
    }

    /// Per-task bootstrap resample defaults.
    pub fn resamples(&self) -> usize {
        self.n_resamples.unwrap_or(match self.task {
            Task::Mortality => 10_000,
            _ => 1_000,
        })
    }

    /// Canonical JSON content hash (seed overrides applied by the caller
    /// first).
    pub fn content_hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        format!("{:016x}", crate::seeds::fnv64(&canonical))
    }
}
