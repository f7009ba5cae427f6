//! Episode data model, JSONL loaders, patient-level splits, and the synthetic
//! cohort generator.

mod generate;

pub use generate::{generate, GeneratorConfig, PhenotypeEffect};

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::TermId;

/// Continuous channels carry raw measurements; categorical ones carry ordinal
/// codes (clinically ordered scales).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Continuous,
    Categorical,
}

/// One of the 17 structured bedside/laboratory channels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub name: &'static str,
    pub kind: ChannelKind,
    /// Imputation default when nothing has been observed yet.
    pub normal_value: f64,
    pub min: f64,
    pub max: f64,
}

/// The 17 structured channels, in canonical column order.
///
/// Normal values are implementation constants (documented in the README), not
/// values reported by any study.
pub const CHANNELS: [ChannelSpec; 17] = [
    ChannelSpec { name: "capillary refill rate", kind: ChannelKind::Categorical, normal_value: 0.0, min: 0.0, max: 1.0 },
    ChannelSpec { name: "diastolic blood pressure", kind: ChannelKind::Continuous, normal_value: 59.0, min: 0.0, max: 375.0 },
    ChannelSpec { name: "fraction inspired oxygen", kind: ChannelKind::Continuous, normal_value: 0.21, min: 0.2, max: 1.1 },
    ChannelSpec { name: "glasgow coma scale eye opening", kind: ChannelKind::Categorical, normal_value: 4.0, min: 1.0, max: 4.0 },
    ChannelSpec { name: "glasgow coma scale motor response", kind: ChannelKind::Categorical, normal_value: 6.0, min: 1.0, max: 6.0 },
    ChannelSpec { name: "glasgow coma scale verbal response", kind: ChannelKind::Categorical, normal_value: 5.0, min: 1.0, max: 5.0 },
    ChannelSpec { name: "glasgow coma scale total", kind: ChannelKind::Categorical, normal_value: 15.0, min: 3.0, max: 15.0 },
    ChannelSpec { name: "glucose", kind: ChannelKind::Continuous, normal_value: 128.0, min: 33.0, max: 2200.0 },
    ChannelSpec { name: "heart rate", kind: ChannelKind::Continuous, normal_value: 86.0, min: 0.0, max: 350.0 },
    ChannelSpec { name: "height", kind: ChannelKind::Continuous, normal_value: 170.0, min: 0.0, max: 275.0 },
    ChannelSpec { name: "mean blood pressure", kind: ChannelKind::Continuous, normal_value: 77.0, min: 0.0, max: 375.0 },
    ChannelSpec { name: "oxygen saturation", kind: ChannelKind::Continuous, normal_value: 98.0, min: 0.0, max: 100.0 },
    ChannelSpec { name: "respiratory rate", kind: ChannelKind::Continuous, normal_value: 19.0, min: 0.0, max: 150.0 },
    ChannelSpec { name: "systolic blood pressure", kind: ChannelKind::Continuous, normal_value: 118.0, min: 0.0, max: 375.0 },
    ChannelSpec { name: "temperature", kind: ChannelKind::Continuous, normal_value: 37.0, min: 14.2, max: 47.0 },
    ChannelSpec { name: "weight", kind: ChannelKind::Continuous, normal_value: 81.0, min: 0.0, max: 250.0 },
    ChannelSpec { name: "ph", kind: ChannelKind::Continuous, normal_value: 7.4, min: 6.3, max: 10.0 },
];

pub fn channel_index(name: &str) -> Option<usize> {
    CHANNELS.iter().position(|c| c.name == name)
}

/// A clinical note: either pre-annotated terms, raw text, or both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Note {
    pub hour: u32,
    pub note_id: String,
    #[serde(default)]
    pub terms: Vec<TermId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

/// One ICU stay: an hourly grid of the 17 channels plus timestamped notes and
/// outcome fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub patient_id: String,
    pub episode_id: String,
    pub length_hours: u32,
    /// channel name → one optional value per in-stay hour
    pub channels: BTreeMap<String, Vec<Option<f64>>>,
    pub notes: Vec<Note>,
    pub died_in_hospital: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub death_hour: Option<u32>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub cohort_tags: BTreeSet<String>,
}

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("episode {episode}: {message}")]
    Invalid { episode: String, message: String },
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("kfold k={k} exceeds patient count {patients}")]
    TooManyFolds { k: usize, patients: usize },
    #[error("kfold requires k >= 2, got {0}")]
    KTooSmall(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Episode {
    /// Check the structural invariants; loaders and the generator both route
    /// through this.
    pub fn validate(&self) -> Result<(), CohortError> {
        let fail = |message: String| {
            Err(CohortError::Invalid {
                episode: self.episode_id.clone(),
                message,
            })
        };
        if self.length_hours == 0 {
            return fail("length_hours must be >= 1".into());
        }
        if let Some(dh) = self.death_hour {
            if !self.died_in_hospital {
                return fail(format!("death_hour={dh} set but died_in_hospital=false"));
            }
            if dh > self.length_hours {
                return fail(format!(
                    "death_hour={dh} exceeds length_hours={}",
                    self.length_hours
                ));
            }
        }
        if self.died_in_hospital && self.death_hour.is_none() {
            return fail("died_in_hospital=true requires death_hour".into());
        }
        for (name, series) in &self.channels {
            if channel_index(name).is_none() {
                return fail(format!("unknown channel `{name}`"));
            }
            if series.len() != self.length_hours as usize {
                return fail(format!(
                    "channel `{name}` has {} cells, expected {}",
                    series.len(),
                    self.length_hours
                ));
            }
        }
        for note in &self.notes {
            if note.hour >= self.length_hours {
                return fail(format!(
                    "note {} at hour {} outside stay of {}h",
                    note.note_id, note.hour, self.length_hours
                ));
            }
        }
        Ok(())
    }

    /// Sorted distinct note hours; propagation windows are defined on these.
    pub fn note_hours(&self) -> Vec<u32> {
        let mut hours: Vec<u32> = self.notes.iter().map(|n| n.hour).collect();
        hours.sort_unstable();
        hours.dedup();
        hours
    }

    /// Day bin of the total stay length under the 10-bin scheme.
    pub fn los_bin(&self) -> u8 {
        crate::tasks::los_class_for_remaining_hours(self.length_hours)
    }
}

/// Load episodes from JSONL, one object per line. Set `require_notes` to drop
/// episodes without any clinical note (applied per episode).
pub fn load_episodes(reader: impl BufRead, require_notes: bool) -> Result<Vec<Episode>, CohortError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let episode: Episode = serde_json::from_str(&line).map_err(|e| CohortError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        episode.validate().map_err(|e| CohortError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if require_notes && episode.notes.is_empty() {
            continue;
        }
        out.push(episode);
    }
    Ok(out)
}

pub fn write_episodes(mut writer: impl Write, episodes: &[Episode]) -> Result<(), CohortError> {
    for e in episodes {
        serde_json::to_writer(&mut writer, e).map_err(|err| CohortError::Invalid {
            episode: e.episode_id.clone(),
            message: err.to_string(),
        })?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Distinct patient ids in first-appearance order.
fn patient_order(episodes: &[Episode]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut order = Vec::new();
    for e in episodes {
        if seen.insert(e.patient_id.clone()) {
            order.push(e.patient_id.clone());
        }
    }
    order
}

fn episodes_of(episodes: &[Episode], patients: &BTreeSet<&String>) -> Vec<usize> {
    episodes
        .iter()
        .enumerate()
        .filter(|(_, e)| patients.contains(&e.patient_id))
        .map(|(i, _)| i)
        .collect()
}

/// Deterministic patient-level train/test split. `train_fraction` is the
/// fraction of patients assigned to train; all episodes of a patient land on
/// the same side.
pub fn split_train_test(
    episodes: &[Episode],
    train_fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut patients = patient_order(episodes);
    let mut rng = ChaCha8Rng::seed_from_u64(crate::seeds::derive_seed(seed, "split", 0));
    patients.shuffle(&mut rng);
    let n_train = (train_fraction * patients.len() as f64).round() as usize;
    let (train_p, test_p) = patients.split_at(n_train.min(patients.len()));
    let train_set: BTreeSet<&String> = train_p.iter().collect();
    let test_set: BTreeSet<&String> = test_p.iter().collect();
    (
        episodes_of(episodes, &train_set),
        episodes_of(episodes, &test_set),
    )
}

/// Deterministic patient-level k-fold partition. Folds are sized within one
/// patient of each other; fold i is the held-out set of round i.
pub fn split_kfold(
    episodes: &[Episode],
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>, CohortError> {
    if k < 2 {
        return Err(CohortError::KTooSmall(k));
    }
    let mut patients = patient_order(episodes);
    if k > patients.len() {
        return Err(CohortError::TooManyFolds {
            k,
            patients: patients.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(crate::seeds::derive_seed(seed, "split", 1));
    patients.shuffle(&mut rng);
    let base = patients.len() / k;
    let extra = patients.len() % k;
    let mut folds = Vec::with_capacity(k);
    let mut cursor = 0;
    for i in 0..k {
        let size = base + usize::from(i < extra);
        let fold_p: BTreeSet<&String> = patients[cursor..cursor + size].iter().collect();
        folds.push(episodes_of(episodes, &fold_p));
        cursor += size;
    }
    Ok(folds)
}
