//! Label construction for the three benchmark tasks.
//!
//! * Mortality: one binary label per eligible episode (stay of at least 48
//!   hours), fixed at the 48-hour mark, positive when the patient dies before
//!   discharge.
//! * Decompensation: one binary label per prediction hour, positive when death
//!   occurs within the next 24 hours.
//! * Length of stay: one 10-class label per prediction hour, binning the
//!   remaining stay into days 0..7, one week-to-two bin, and an over-two-weeks
//!   bin.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::Episode;

/// Hour of the fixed mortality prediction point.
pub const MORTALITY_HOUR: u32 = 48;
/// Width of the decompensation look-ahead window.
pub const DECOMP_WINDOW_HOURS: u32 = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Mortality,
    Decompensation,
    LengthOfStay,
}

impl Task {
    pub fn n_classes(&self) -> usize {
        match self {
            Task::LengthOfStay => 10,
            _ => 2,
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Task::Mortality => "mortality",
            Task::Decompensation => "decompensation",
            Task::LengthOfStay => "length_of_stay",
        };
        f.write_str(s)
    }
}

/// Knobs for label construction. `obs_start_hour` is the first prediction
/// hour for the per-hour tasks; the default leaves a four-hour warm-up of
/// observed data before the first prediction.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskConfig {
    pub obs_start_hour: u32,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig { obs_start_hour: 5 }
    }
}

/// Labels for one task over a cohort; rows are (episode index, hour, label).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskLabels {
    pub task: Task,
    pub rows: Vec<LabelRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub episode: usize,
    pub hour: u32,
    pub label: u8,
}

#[derive(Debug, Error)]
pub enum TaskError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Mortality label at the 48-hour mark; `None` when the stay is too short to
/// be eligible.
pub fn mortality_label(e: &Episode) -> Option<(u32, bool)> {
    if e.length_hours < MORTALITY_HOUR {
        return None;
    }
    Some((MORTALITY_HOUR, e.died_in_hospital))
}

/// Hourly decompensation labels: positive when death is at most 24 hours away.
pub fn decomp_labels(e: &Episode, cfg: &TaskConfig) -> Vec<(u32, bool)> {
    let death = e.death_hour.filter(|_| e.died_in_hospital);
    (cfg.obs_start_hour..e.length_hours)
        .map(|h| {
            let positive = matches!(death, Some(d) if d >= h && d - h <= DECOMP_WINDOW_HOURS);
            (h, positive)
        })
        .collect()
}

/// Remaining-stay class under the 10-bin scheme, by integer hours: under a
/// day, one bin per day through the first week, 8..14 days, then two weeks up.
pub fn los_class_for_remaining_hours(remaining: u32) -> u8 {
    match remaining {
        0..=23 => 0,
        24..=191 => (remaining / 24) as u8, // classes 1..=7 at one day per bin
        192..=335 => 8,
        _ => 9,
    }
}

/// Hourly remaining length-of-stay classes.
pub fn los_labels(e: &Episode, cfg: &TaskConfig) -> Vec<(u32, u8)> {
    (cfg.obs_start_hour..e.length_hours)
        .map(|h| (h, los_class_for_remaining_hours(e.length_hours - h)))
        .collect()
}

/// Build the label table for a whole cohort.
pub fn build_labels(task: Task, episodes: &[Episode], cfg: &TaskConfig) -> TaskLabels {
    let mut rows = Vec::new();
    for (idx, e) in episodes.iter().enumerate() {
        match task {
            Task::Mortality => {
                if let Some((hour, died)) = mortality_label(e) {
                    rows.push(LabelRow {
                        episode: idx,
                        hour,
                        label: u8::from(died),
                    });
                }
            }
            Task::Decompensation => {
                for (hour, positive) in decomp_labels(e, cfg) {
                    rows.push(LabelRow {
                        episode: idx,
                        hour,
                        label: u8::from(positive),
                    });
                }
            }
            Task::LengthOfStay => {
                for (hour, class) in los_labels(e, cfg) {
                    rows.push(LabelRow {
                        episode: idx,
                        hour,
                        label: class,
                    });
                }
            }
        }
    }
    TaskLabels { task, rows }
}

/// Export labels as `episode_id,hour,label`.
pub fn write_labels_csv(
    mut writer: impl Write,
    labels: &TaskLabels,
    episodes: &[Episode],
) -> Result<(), TaskError> {
    writeln!(writer, "episode_id,hour,label")?;
    for row in &labels.rows {
        writeln!(
            writer,
            "{},{},{}",
            episodes[row.episode].episode_id, row.hour, row.label
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn episode(length: u32, death_hour: Option<u32>) -> Episode {
        Episode {
            patient_id: "p".into(),
            episode_id: "e".into(),
            length_hours: length,
            channels: BTreeMap::new(),
            notes: Vec::new(),
            died_in_hospital: death_hour.is_some(),
            death_hour,
            cohort_tags: Default::default(),
        }
    }

    #[test]
    fn mortality_eligibility_and_labels() {
        assert_eq!(mortality_label(&episode(100, None)), Some((48, false)));
        assert_eq!(mortality_label(&episode(90, Some(90))), Some((48, true)));
        assert_eq!(mortality_label(&episode(30, None)), None);
        assert_eq!(mortality_label(&episode(48, None)), Some((48, false)));
    }

    #[test]
    fn decomp_rule_matches_window_arithmetic() {
        let cfg = TaskConfig { obs_start_hour: 0 };
        let e = episode(50, Some(50));
        let labels: BTreeMap<u32, bool> = decomp_labels(&e, &cfg).into_iter().collect();
        // death_hour - h <= 24
        assert!(labels[&26]);
        assert!(!labels[&25]);
        assert!(!labels[&20]);
        assert!(labels[&49]);
    }

    #[test]
    fn survivor_hours_are_all_negative() {
        let cfg = TaskConfig::default();
        let e = episode(80, None);
        assert!(decomp_labels(&e, &cfg).iter().all(|(_, l)| !l));
    }

    #[test]
    fn death_soon_after_admission_is_positive_from_the_start() {
        let cfg = TaskConfig { obs_start_hour: 0 };
        let e = episode(10, Some(10));
        let labels = decomp_labels(&e, &cfg);
        assert_eq!(labels[0], (0, true));
    }

    #[test]
    fn decomp_labels_form_a_suffix_of_ones() {
        let cfg = TaskConfig::default();
        for length in [10u32, 26, 48, 120, 400] {
            let e = episode(length, Some(length));
            let labels = decomp_labels(&e, &cfg);
            let ones = labels.iter().filter(|(_, l)| *l).count() as u32;
            let window = length.saturating_sub(cfg.obs_start_hour);
            assert_eq!(ones, DECOMP_WINDOW_HOURS.min(window));
            // all ones at the end, all zeros before
            let first_one = labels.iter().position(|(_, l)| *l);
            if let Some(pos) = first_one {
                assert!(labels[pos..].iter().all(|(_, l)| *l));
                assert!(labels[..pos].iter().all(|(_, l)| !l));
            }
        }
    }

    #[test]
    fn los_binning_hits_the_day_boundaries() {
        assert_eq!(los_class_for_remaining_hours(30), 1); // 1.25 days
        assert_eq!(los_class_for_remaining_hours(23), 0);
        assert_eq!(los_class_for_remaining_hours(24), 1); // exactly one day
        assert_eq!(los_class_for_remaining_hours(191), 7);
        assert_eq!(los_class_for_remaining_hours(192), 8);
        assert_eq!(los_class_for_remaining_hours(336), 9);
        assert_eq!(los_class_for_remaining_hours(400), 9); // 16.7 days
    }

    #[test]
    fn los_class_sequence_is_non_increasing() {
        let cfg = TaskConfig::default();
        for length in [30u32, 100, 250, 500] {
            let e = episode(length, None);
            let labels = los_labels(&e, &cfg);
            for w in labels.windows(2) {
                assert!(w[1].1 <= w[0].1);
            }
        }
    }

    #[test]
    fn cohort_mortality_labels_count_eligible_non_survivors() {
        let episodes = vec![
            episode(100, None),
            episode(90, Some(90)),
            episode(30, Some(30)), // dies but ineligible
            episode(60, None),
            episode(500, Some(500)),
        ];
        let labels = build_labels(Task::Mortality, &episodes, &TaskConfig::default());
        let positives: usize = labels.rows.iter().map(|r| r.label as usize).sum();
        let eligible_deaths = episodes
            .iter()
            .filter(|e| e.length_hours >= MORTALITY_HOUR && e.died_in_hospital)
            .count();
        assert_eq!(positives, eligible_deaths);
        assert_eq!(labels.rows.len(), 4);
    }

    #[test]
    fn labels_csv_has_one_line_per_row() {
        let episodes = vec![episode(10, None)];
        let labels = build_labels(Task::LengthOfStay, &episodes, &TaskConfig::default());
        let mut buf = Vec::new();
        write_labels_csv(&mut buf, &labels, &episodes).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + labels.rows.len());
        assert!(text.starts_with("episode_id,hour,label\n"));
    }
}
