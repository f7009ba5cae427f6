//! Synthetic cohort generator calibrated to realistic cohort marginals:
//! patient mortality near 13.12%, positive decompensation timesteps near
//! 2.01%, notes roughly every 12 hours, and a 10-bin stay-length mixture.
//!
//! Rates in the config are cohort marginals. Phenotype effects tilt individual
//! risk around them: the generator solves the base mortality log-odds so the
//! cohort-level rate still matches the config, rescales non-survivor stay
//! lengths so the decompensation marginal matches, and centers the stay-length
//! mixture so per-patient day shifts do not move the cohort histogram.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ChannelKind, ChannelSpec, CohortError, Episode, Note, CHANNELS};
use crate::ontology::TermId;
use crate::seeds::stream_rng;
use crate::tasks;

/// Outcome tilt for carriers of one phenotype. The log-odds shift applies to
/// the patient's death risk (and through it to decompensation); the day shift
/// applies to stay length.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhenotypeEffect {
    pub term: TermId,
    pub prevalence: f64,
    pub log_odds: f64,
    pub los_day_shift: f64,
    /// Surface form written into note text when `emit_text` is on.
    pub surface: String,
    /// Cohort tag given to carriers (drives disease-specific slicing).
    #[serde(default)]
    pub cohort_tag: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_patients: usize,
    pub seed: u64,
    /// Fraction of patients who die in hospital.
    pub mortality_rate: f64,
    /// Fraction of labeled timesteps that are decompensation-positive.
    pub decomp_rate: f64,
    /// Mean gap between clinical notes.
    pub note_interval_hours: f64,
    /// Stay-length mixture over the 10 day bins; must sum to 1.
    pub los_weights: [f64; 10],
    pub phenotype_effects: Vec<PhenotypeEffect>,
    /// No-effect terms sprinkled into notes: (term, text surface).
    pub noise_terms: Vec<(TermId, String)>,
    /// Mean number of noise terms per note.
    pub noise_rate: f64,
    /// Probability a carried phenotype is mentioned in any given note.
    pub mention_rate: f64,
    /// Probability a patient gets a second ICU episode.
    pub second_episode_rate: f64,
    /// Fraction of episodes with no note at all (exercises the loader filter).
    pub noteless_rate: f64,
    /// Fraction of deaths with damped terminal drift in the channels.
    pub sudden_death_rate: f64,
    /// Scale on the terminal deterioration drift of non-survivors.
    pub deterioration_scale: f64,
    /// Scale on the baseline channel shift of non-survivors.
    pub severity_shift_scale: f64,
    /// Also write note text built from term surfaces.
    pub emit_text: bool,
}

/// Stay-length histogram weights for the 10 day bins.
pub const DEFAULT_LOS_COUNTS: [f64; 10] = [
    95439.0, 61372.0, 38858.0, 27142.0, 20171.0, 15878.0, 12940.0, 10953.0, 40856.0, 45741.0,
];

fn tid(s: &str) -> TermId {
    TermId::new(s).expect("static term id")
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        let total: f64 = DEFAULT_LOS_COUNTS.iter().sum();
        let mut los_weights = [0.0; 10];
        for (w, c) in los_weights.iter_mut().zip(DEFAULT_LOS_COUNTS) {
            *w = c / total;
        }
        GeneratorConfig {
            n_patients: 1000,
            seed: 7,
            mortality_rate: 0.1312,
            decomp_rate: 0.0201,
            note_interval_hours: 12.0,
            los_weights,
            phenotype_effects: default_effects(),
            noise_terms: default_noise_terms(),
            noise_rate: 0.5,
            mention_rate: 0.7,
            second_episode_rate: 0.1,
            noteless_rate: 0.02,
            sudden_death_rate: 0.4,
            deterioration_scale: 1.0,
            severity_shift_scale: 1.0,
            emit_text: false,
        }
    }
}

/// Default planted effects; term ids match the bundled test ontology.
fn default_effects() -> Vec<PhenotypeEffect> {
    vec![
        PhenotypeEffect {
            term: tid("HP:0100606"),
            prevalence: 0.12,
            log_odds: 2.2,
            los_day_shift: 0.4,
            surface: "neoplasm of the respiratory system".into(),
            cohort_tag: Some("cancer".into()),
        },
        PhenotypeEffect {
            term: tid("HP:0002615"),
            prevalence: 0.18,
            log_odds: 1.25,
            los_day_shift: 0.15,
            surface: "hypotension".into(),
            cohort_tag: Some("cardiovascular".into()),
        },
        PhenotypeEffect {
            term: tid("HP:0100806"),
            prevalence: 0.10,
            log_odds: 1.5,
            los_day_shift: 0.25,
            surface: "sepsis".into(),
            cohort_tag: None,
        },
        PhenotypeEffect {
            term: tid("HP:0012531"),
            prevalence: 0.30,
            log_odds: -0.9,
            los_day_shift: -0.1,
            surface: "pain".into(),
            cohort_tag: None,
        },
        PhenotypeEffect {
            term: tid("HP:0001945"),
            prevalence: 0.20,
            log_odds: 0.45,
            los_day_shift: 0.15,
            surface: "fever".into(),
            cohort_tag: None,
        },
        PhenotypeEffect {
            term: tid("HP:0000819"),
            prevalence: 0.15,
            log_odds: 0.35,
            los_day_shift: 0.1,
            surface: "diabetes mellitus".into(),
            cohort_tag: Some("diabetes".into()),
        },
    ]
}

fn default_noise_terms() -> Vec<(TermId, String)> {
    [
        ("HP:0012735", "cough"),
        ("HP:0002094", "dyspnea"),
        ("HP:0002018", "nausea"),
        ("HP:0002013", "vomiting"),
        ("HP:0002014", "diarrhea"),
        ("HP:0002315", "headache"),
        ("HP:0001250", "seizure"),
        ("HP:0001903", "anemia"),
        ("HP:0001873", "thrombocytopenia"),
        ("HP:0000988", "skin rash"),
        ("HP:0001324", "muscle weakness"),
        ("HP:0000969", "edema"),
        ("HP:0012378", "fatigue"),
        ("HP:0000790", "hematuria"),
    ]
    .into_iter()
    .map(|(id, s)| (tid(id), s.to_string()))
    .collect()
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), CohortError> {
        let check_rate = |name: &str, v: f64| {
            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                Err(CohortError::InvalidConfig(format!("{name}={v} not in [0,1]")))
            } else {
                Ok(())
            }
        };
        if self.n_patients == 0 {
            return Err(CohortError::InvalidConfig("n_patients must be >= 1".into()));
        }
        check_rate("mortality_rate", self.mortality_rate)?;
        check_rate("decomp_rate", self.decomp_rate)?;
        check_rate("mention_rate", self.mention_rate)?;
        check_rate("second_episode_rate", self.second_episode_rate)?;
        check_rate("noteless_rate", self.noteless_rate)?;
        check_rate("sudden_death_rate", self.sudden_death_rate)?;
        if self.note_interval_hours <= 0.0 {
            return Err(CohortError::InvalidConfig(
                "note_interval_hours must be positive".into(),
            ));
        }
        let sum: f64 = self.los_weights.iter().sum();
        if (sum - 1.0).abs() > 1e-6 || self.los_weights.iter().any(|w| *w < 0.0) {
            return Err(CohortError::InvalidConfig(format!(
                "los_weights must be nonnegative and sum to 1 (sum={sum})"
            )));
        }
        for e in &self.phenotype_effects {
            check_rate(&format!("prevalence of {}", e.term), e.prevalence)?;
        }
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Standard normal via Box-Muller.
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-12);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn exponential(rng: &mut ChaCha8Rng, mean: f64) -> f64 {
    let u: f64 = rng.random::<f64>().max(1e-12);
    -mean * u.ln()
}

/// Inclusive hour range of each stay-length bin; stays are drawn on integer
/// hours so a shift-free draw lands exactly in its bin. The open tail is
/// capped for sampling.
const BIN_HOURS: [(u32, u32); 10] = [
    (2, 23),
    (24, 47),
    (48, 71),
    (72, 95),
    (96, 119),
    (120, 143),
    (144, 167),
    (168, 191),
    (192, 335),
    (336, 672),
];

struct PatientPlan {
    carried: Vec<usize>, // indices into cfg.phenotype_effects
    log_odds: f64,
    death_draw: f64,
    n_episodes: usize,
    base_days: Vec<f64>,
    sudden: Vec<bool>,
}

struct EpisodePlan {
    patient: usize,
    episode_of_patient: usize,
    length_hours: u32,
    died: bool,
    sudden: bool,
}

/// Per-channel AR(1) dynamics: baseline spread, observation noise, terminal
/// drift for non-survivors, observation probability.
struct Dynamics {
    baseline_sd: f64,
    noise_sd: f64,
    drift: f64,
    obs_prob: f64,
}

const DYNAMICS: [Dynamics; 17] = [
    Dynamics { baseline_sd: 0.0, noise_sd: 0.0, drift: 0.0, obs_prob: 0.20 }, // capillary refill (latent prob model)
    Dynamics { baseline_sd: 8.0, noise_sd: 3.0, drift: -15.0, obs_prob: 0.75 }, // DBP
    Dynamics { baseline_sd: 0.04, noise_sd: 0.02, drift: 0.30, obs_prob: 0.30 }, // FiO2
    Dynamics { baseline_sd: 0.6, noise_sd: 0.3, drift: -1.8, obs_prob: 0.50 }, // GCS eye
    Dynamics { baseline_sd: 0.8, noise_sd: 0.3, drift: -2.8, obs_prob: 0.50 }, // GCS motor
    Dynamics { baseline_sd: 0.6, noise_sd: 0.3, drift: -2.2, obs_prob: 0.50 }, // GCS verbal
    Dynamics { baseline_sd: 0.0, noise_sd: 0.0, drift: 0.0, obs_prob: 0.50 }, // GCS total (derived)
    Dynamics { baseline_sd: 25.0, noise_sd: 12.0, drift: 45.0, obs_prob: 0.15 }, // glucose
    Dynamics { baseline_sd: 10.0, noise_sd: 3.5, drift: 28.0, obs_prob: 0.80 }, // heart rate
    Dynamics { baseline_sd: 10.0, noise_sd: 0.0, drift: 0.0, obs_prob: 0.0 },  // height (admission only)
    Dynamics { baseline_sd: 9.0, noise_sd: 3.0, drift: -20.0, obs_prob: 0.75 }, // MBP
    Dynamics { baseline_sd: 1.2, noise_sd: 0.8, drift: -9.0, obs_prob: 0.80 }, // SpO2
    Dynamics { baseline_sd: 3.0, noise_sd: 1.5, drift: 9.0, obs_prob: 0.80 },  // resp rate
    Dynamics { baseline_sd: 12.0, noise_sd: 4.0, drift: -30.0, obs_prob: 0.75 }, // SBP
    Dynamics { baseline_sd: 0.35, noise_sd: 0.15, drift: 1.3, obs_prob: 0.55 }, // temperature
    Dynamics { baseline_sd: 11.0, noise_sd: 0.3, drift: 0.0, obs_prob: 0.0 },  // weight (daily)
    Dynamics { baseline_sd: 0.04, noise_sd: 0.025, drift: -0.18, obs_prob: 0.12 }, // pH
];

const IDX_CAP_REFILL: usize = 0;
const IDX_GCS_EYE: usize = 3;
const IDX_GCS_MOTOR: usize = 4;
const IDX_GCS_VERBAL: usize = 5;
const IDX_GCS_TOTAL: usize = 6;
const IDX_HEIGHT: usize = 9;
const IDX_WEIGHT: usize = 15;
const AR_RHO: f64 = 0.9;

/// Decompensation-positive labeled hours of a non-survivor stay of `len`
/// hours, under the default first-prediction hour.
fn positive_hours(len: u32) -> u64 {
    let obs = tasks::TaskConfig::default().obs_start_hour;
    u64::from(len.saturating_sub(obs).min(tasks::DECOMP_WINDOW_HOURS))
}

fn labeled_hours(len: u32) -> u64 {
    let obs = tasks::TaskConfig::default().obs_start_hour;
    u64::from(len.saturating_sub(obs))
}

/// Generate a cohort. Deterministic for a fixed config: per-patient and
/// per-episode RNG streams are derived from the config seed, so the output is
/// independent of thread scheduling.
pub fn generate(cfg: &GeneratorConfig) -> Result<Vec<Episode>, CohortError> {
    cfg.validate()?;

    // Phase 1: per-patient outcome plans.
    let plans: Vec<PatientPlan> = (0..cfg.n_patients)
        .into_par_iter()
        .map(|p| {
            let mut rng = stream_rng(cfg.seed, "patient", p as u64);
            let mut carried = Vec::new();
            let mut log_odds = 0.0;
            for (i, effect) in cfg.phenotype_effects.iter().enumerate() {
                if rng.random::<f64>() < effect.prevalence {
                    carried.push(i);
                    log_odds += effect.log_odds;
                }
            }
            let death_draw: f64 = rng.random();
            let n_episodes = 1 + usize::from(rng.random::<f64>() < cfg.second_episode_rate);
            let los_shift: f64 = carried
                .iter()
                .map(|i| cfg.phenotype_effects[*i].los_day_shift)
                .sum();
            // center the mixture so cohort-wide day shifts cancel in expectation
            let expected_shift: f64 = cfg
                .phenotype_effects
                .iter()
                .map(|e| e.prevalence * e.los_day_shift)
                .sum();
            let mut base_days = Vec::with_capacity(n_episodes);
            let mut sudden = Vec::with_capacity(n_episodes);
            for _ in 0..n_episodes {
                let bin = sample_weighted(&mut rng, &cfg.los_weights);
                let (lo, hi) = BIN_HOURS[bin];
                let hours = rng.random_range(lo..=hi);
                let days = f64::from(hours) / 24.0 + los_shift - expected_shift;
                base_days.push(days.max(2.0 / 24.0));
                sudden.push(rng.random::<f64>() < cfg.sudden_death_rate);
            }
            PatientPlan {
                carried,
                log_odds,
                death_draw,
                n_episodes,
                base_days,
                sudden,
            }
        })
        .collect();

    // Phase 2a: solve the base log-odds so patient mortality hits the config.
    let base_logit = solve_base_logit(cfg.mortality_rate, &plans);
    let died: Vec<bool> = plans
        .iter()
        .map(|p| match base_logit {
            Some(c) => p.death_draw < sigmoid(c + p.log_odds),
            None => cfg.mortality_rate >= 1.0,
        })
        .collect();

    // Phase 2b: rescale non-survivor stay lengths until the decompensation
    // marginal matches the config.
    let mut survivor_lengths: Vec<u32> = Vec::new();
    let mut died_lengths: Vec<u32> = Vec::new();
    for (p, plan) in plans.iter().enumerate() {
        for (e, days) in plan.base_days.iter().enumerate() {
            let len = ((days * 24.0).round() as u32).max(2);
            let is_death_episode = died[p] && e + 1 == plan.n_episodes;
            if is_death_episode {
                died_lengths.push(len);
            } else {
                survivor_lengths.push(len);
            }
        }
    }
    let m = calibrate_death_length_scale(cfg.decomp_rate, &survivor_lengths, &died_lengths);

    // Phase 2c: flatten into episode plans.
    let mut episode_plans = Vec::new();
    for (p, plan) in plans.iter().enumerate() {
        for (e, days) in plan.base_days.iter().enumerate() {
            let is_death_episode = died[p] && e + 1 == plan.n_episodes;
            let mut len = ((days * 24.0).round() as u32).max(2);
            if is_death_episode {
                len = ((f64::from(len) * m).round() as u32).max(2);
            }
            episode_plans.push(EpisodePlan {
                patient: p,
                episode_of_patient: e,
                length_hours: len,
                died: is_death_episode,
                sudden: plan.sudden[e],
            });
        }
    }

    // Phase 3: materialize every episode in parallel.
    let episodes: Vec<Episode> = episode_plans
        .par_iter()
        .enumerate()
        .map(|(idx, ep)| build_episode(cfg, &plans[ep.patient], ep, idx as u64))
        .collect();

    for e in &episodes {
        e.validate()?;
    }
    Ok(episodes)
}

fn sample_weighted(rng: &mut ChaCha8Rng, weights: &[f64; 10]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    9
}

/// Bisect the intercept c so mean(sigmoid(c + shift_i)) == target.
fn solve_base_logit(target: f64, plans: &[PatientPlan]) -> Option<f64> {
    if target <= 0.0 {
        return None; // no deaths at all
    }
    if target >= 1.0 {
        return None; // everyone dies; handled by caller
    }
    let mean_p = |c: f64| -> f64 {
        plans.iter().map(|p| sigmoid(c + p.log_odds)).sum::<f64>() / plans.len() as f64
    };
    let (mut lo, mut hi) = (-30.0, 30.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if mean_p(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Grid-search the length multiplier for non-survivor stays that brings the
/// decompensation-positive fraction closest to the target. The multiplier is
/// kept near one: the stay-length histogram and the decompensation marginal
/// are structurally coupled (positives are capped at the 24-hour window), so
/// only a gentle nudge is allowed and each marginal lands inside its own
/// tolerance window instead of one being sacrificed to the other.
fn calibrate_death_length_scale(target: f64, survivor: &[u32], died: &[u32]) -> f64 {
    if died.is_empty() || target <= 0.0 {
        return 1.0;
    }
    let survivor_total: u64 = survivor.iter().map(|l| labeled_hours(*l)).sum();
    let fraction = |m: f64| -> f64 {
        let mut pos = 0u64;
        let mut tot = survivor_total;
        for l in died {
            let scaled = ((f64::from(*l) * m).round() as u32).max(2);
            pos += positive_hours(scaled);
            tot += labeled_hours(scaled);
        }
        if tot == 0 {
            0.0
        } else {
            pos as f64 / tot as f64
        }
    };
    let mut best = (f64::INFINITY, 1.0);
    let (lo, hi, steps) = (0.75f64, 1.3f64, 110);
    for i in 0..=steps {
        let m = lo * (hi / lo).powf(f64::from(i) / f64::from(steps));
        let err = (fraction(m) - target).abs();
        if err < best.0 {
            best = (err, m);
        }
    }
    best.1
}

fn build_episode(
    cfg: &GeneratorConfig,
    plan: &PatientPlan,
    ep: &EpisodePlan,
    global_idx: u64,
) -> Episode {
    let mut rng = stream_rng(cfg.seed, "episode", global_idx);
    let len = ep.length_hours as usize;
    let patient_id = format!("p{:06}", ep.patient);
    let episode_id = format!("{patient_id}e{}", ep.episode_of_patient);

    let notes = build_notes(cfg, plan, ep, &episode_id, &mut rng);
    let channels = build_channels(cfg, ep, &mut rng);

    let mut cohort_tags = BTreeSet::new();
    for i in &plan.carried {
        if let Some(tag) = &cfg.phenotype_effects[*i].cohort_tag {
            cohort_tags.insert(tag.clone());
        }
    }
    if rng.random::<f64>() < 0.06 {
        cohort_tags.insert("depression".to_string());
    }

    debug_assert!(channels.values().all(|v| v.len() == len));
    Episode {
        patient_id,
        episode_id,
        length_hours: ep.length_hours,
        channels,
        notes,
        died_in_hospital: ep.died,
        death_hour: ep.died.then_some(ep.length_hours),
        cohort_tags,
    }
}

fn build_notes(
    cfg: &GeneratorConfig,
    plan: &PatientPlan,
    ep: &EpisodePlan,
    episode_id: &str,
    rng: &mut ChaCha8Rng,
) -> Vec<Note> {
    if rng.random::<f64>() < cfg.noteless_rate {
        return Vec::new();
    }
    let mut hours: Vec<u32> = Vec::new();
    let first = rng.random_range(0..4u32.min(ep.length_hours));
    hours.push(first);
    let mut cursor = f64::from(first);
    loop {
        cursor += exponential(rng, cfg.note_interval_hours).max(1.0);
        if cursor >= f64::from(ep.length_hours) {
            break;
        }
        hours.push(cursor.floor() as u32);
    }
    hours.dedup();

    let mut notes = Vec::with_capacity(hours.len());
    for (k, hour) in hours.iter().enumerate() {
        let mut terms: Vec<TermId> = Vec::new();
        let mut surfaces: Vec<&str> = Vec::new();
        for i in &plan.carried {
            let effect = &cfg.phenotype_effects[*i];
            // admission notes almost always document history
            let p = if k == 0 { 0.9 } else { cfg.mention_rate };
            if rng.random::<f64>() < p {
                terms.push(effect.term.clone());
                surfaces.push(&effect.surface);
            }
        }
        if !cfg.noise_terms.is_empty() {
            let per_term = cfg.noise_rate / cfg.noise_terms.len() as f64;
            for (term, surface) in &cfg.noise_terms {
                if rng.random::<f64>() < per_term {
                    terms.push(term.clone());
                    surfaces.push(surface);
                }
            }
        }
        let text = if cfg.emit_text {
            Some(if surfaces.is_empty() {
                "vitals reviewed, no new findings".to_string()
            } else {
                format!("pt with {}, plan reviewed", surfaces.join(", "))
            })
        } else {
            None
        };
        notes.push(Note {
            hour: *hour,
            note_id: format!("{episode_id}-n{k}"),
            terms,
            text,
        });
    }
    notes
}

fn build_channels(
    cfg: &GeneratorConfig,
    ep: &EpisodePlan,
    rng: &mut ChaCha8Rng,
) -> BTreeMap<String, Vec<Option<f64>>> {
    let len = ep.length_hours as usize;
    // sudden deaths leave almost no trace in the channels; their risk is only
    // visible through the phenotype record
    let drift_scale = if ep.died && !ep.sudden {
        cfg.deterioration_scale
    } else {
        0.0
    };
    let window = 24.0 + rng.random::<f64>() * 24.0; // terminal 24-48h ramp
    let ramp = |h: usize| -> f64 {
        if drift_scale == 0.0 {
            return 0.0;
        }
        let start = f64::from(ep.length_hours) - window;
        ((h as f64 - start) / window).clamp(0.0, 1.0) * drift_scale
    };

    // One noisy severity latent per episode drives every channel's baseline
    // shift, so the channels cannot be stacked into a clean outcome signal:
    // some survivors look sick and some non-survivors (the sudden ones
    // especially) look fine.
    let sick_offset = if ep.died && !ep.sudden { 0.8 } else { 0.0 };
    let severity_latent = (0.8 * normal(rng) + sick_offset) * cfg.severity_shift_scale;

    // latent per-channel series, before missingness
    let mut latent = vec![vec![0.0f64; len]; 17];
    for (c, spec) in CHANNELS.iter().enumerate() {
        if c == IDX_CAP_REFILL || c == IDX_GCS_TOTAL {
            continue;
        }
        let dyn_c = &DYNAMICS[c];
        let severity = dyn_c.drift * 0.25 * severity_latent;
        let baseline = spec.normal_value + normal(rng) * dyn_c.baseline_sd + severity;
        let mut value = baseline;
        for (h, slot) in latent[c].iter_mut().enumerate() {
            value = baseline + AR_RHO * (value - baseline) + normal(rng) * dyn_c.noise_sd;
            *slot = (value + dyn_c.drift * ramp(h)).clamp(spec.min, spec.max);
        }
    }
    // GCS total is the sum of its three components.
    #[allow(clippy::needless_range_loop)] // reads three rows, writes a fourth
    for h in 0..len {
        let total = latent[IDX_GCS_EYE][h].round()
            + latent[IDX_GCS_MOTOR][h].round()
            + latent[IDX_GCS_VERBAL][h].round();
        latent[IDX_GCS_TOTAL][h] = total.clamp(3.0, 15.0);
    }
    // capillary refill: probability of being abnormal rises with the ramp
    for (h, slot) in latent[IDX_CAP_REFILL].iter_mut().enumerate().take(len) {
        let p = 0.02 + 0.5 * ramp(h);
        *slot = f64::from(rng.random::<f64>() < p);
    }

    let mut channels = BTreeMap::new();
    for (c, spec) in CHANNELS.iter().enumerate() {
        let mut series: Vec<Option<f64>> = vec![None; len];
        match c {
            IDX_HEIGHT => {
                if rng.random::<f64>() < 0.9 {
                    series[0] = Some(quantize(latent[c][0], spec));
                }
            }
            IDX_WEIGHT => {
                for h in (0..len).step_by(24) {
                    if h == 0 || rng.random::<f64>() < 0.6 {
                        series[h] = Some(quantize(latent[c][h], spec));
                    }
                }
            }
            _ => {
                for h in 0..len {
                    if rng.random::<f64>() < DYNAMICS[c].obs_prob {
                        series[h] = Some(quantize(latent[c][h], spec));
                    }
                }
            }
        }
        channels.insert(spec.name.to_string(), series);
    }
    channels
}

fn quantize(value: f64, spec: &ChannelSpec) -> f64 {
    let v = match spec.kind {
        ChannelKind::Categorical => value.round(),
        // one decimal keeps serialized cohorts compact
        ChannelKind::Continuous => (value * 10.0).round() / 10.0,
    };
    v.clamp(spec.min, spec.max)
}
