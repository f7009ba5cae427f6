//! Per-timestep feature assembly: imputed structured channels plus binary
//! phenotype indicators under persistency propagation and ontology
//! aggregation.
//!
//! Alignment convention: a per-hour prediction at hour `h` uses the grid row
//! of hour `h` (a note written at hour `h` is visible to that prediction); the
//! fixed 48-hour mortality prediction uses grid row 47, the last of the first
//! 48 hours.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{Annotation, Persistence, PersistencyMap};
use crate::cohort::{ChannelKind, Episode, CHANNELS};
use crate::ontology::{AggregationMode, Ontology, TermId};
use crate::tasks::{Task, TaskLabels};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("episode {0} has no annotations but a phenotype mode was requested")]
    MissingAnnotations(String),
    #[error("episode {episode}: annotation term {term} not in the ontology")]
    UnknownTerm { episode: String, term: TermId },
    #[error("episode {episode}: annotation at hour {hour} outside stay of {length}h")]
    AnnotationOutOfRange {
        episode: String,
        hour: u32,
        length: u32,
    },
    #[error("feature matrix is malformed: {0}")]
    Malformed(String),
    #[error(transparent)]
    Ontology(#[from] crate::ontology::OntologyError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Structured-only, or structured plus phenotype indicator columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    Structured,
    WithPhenotypes,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub mode: FeatureMode,
    /// Forward-propagate phenotypes (off reproduces the sparsity ablation).
    pub propagation: bool,
    /// Parent hops added by ontology aggregation; 0 disables it.
    pub aggregation_levels: u32,
    pub aggregation_mode: AggregationMode,
    /// Expand categorical channels into indicator columns instead of ordinal
    /// codes.
    pub one_hot_categoricals: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            mode: FeatureMode::WithPhenotypes,
            propagation: true,
            aggregation_levels: 1,
            aggregation_mode: AggregationMode::Augment,
            one_hot_categoricals: false,
        }
    }
}

/// Where phenotype annotations come from.
pub enum AnnotationSource<'a> {
    /// Terms already attached to each clinical note.
    NoteTerms,
    /// Externally produced annotations, keyed by episode id.
    External(&'a BTreeMap<String, Vec<Annotation>>),
}

/// Ordered feature names plus a stable content hash.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub names: Vec<String>,
    pub n_structured: usize,
    pub phenotype_terms: Vec<TermId>,
    pub version_hash: String,
}

impl FeatureSchema {
    pub fn width(&self) -> usize {
        self.names.len()
    }
}

fn fnv64(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn structured_names(cfg: &FeatureConfig) -> Vec<String> {
    let mut names = Vec::new();
    for spec in CHANNELS.iter() {
        if cfg.one_hot_categoricals && spec.kind == ChannelKind::Categorical {
            let lo = spec.min as i64;
            let hi = spec.max as i64;
            for level in lo..=hi {
                names.push(format!("{}={level}", spec.name));
            }
        } else {
            names.push(spec.name.to_string());
        }
    }
    names
}

fn build_schema(cfg: &FeatureConfig, terms: &BTreeSet<TermId>) -> FeatureSchema {
    let mut names = structured_names(cfg);
    let n_structured = names.len();
    let phenotype_terms: Vec<TermId> = match cfg.mode {
        FeatureMode::Structured => Vec::new(),
        FeatureMode::WithPhenotypes => terms.iter().cloned().collect(),
    };
    names.extend(phenotype_terms.iter().map(|t| t.as_str().to_string()));
    let digest = format!(
        "{:?}|{}|{}|{:?}|{}",
        cfg.mode, cfg.propagation, cfg.aggregation_levels, cfg.aggregation_mode, cfg.one_hot_categoricals
    );
    let hash = fnv64(
        names
            .iter()
            .flat_map(|n| n.bytes().chain(std::iter::once(0)))
            .chain(digest.bytes()),
    );
    FeatureSchema {
        names,
        n_structured,
        phenotype_terms,
        version_hash: format!("{hash:016x}"),
    }
}

/// Imputed hourly grid for one episode.
pub struct ImputedGrid {
    /// `[hour][channel]`, fully dense.
    pub values: Vec<[f64; 17]>,
    /// `[hour][channel]`, true where the cell was actually observed.
    pub observed: Vec<[bool; 17]>,
    /// Values pushed back into the plausible range.
    pub clamped: usize,
}

/// Forward-fill each channel; hours before the first observation take the
/// channel's normal value. Out-of-range observations are clamped and counted.
pub fn impute_channels(episode: &Episode) -> ImputedGrid {
    let len = episode.length_hours as usize;
    let mut values = vec![[0.0f64; 17]; len];
    let mut observed = vec![[false; 17]; len];
    let mut clamped = 0usize;
    for (c, spec) in CHANNELS.iter().enumerate() {
        let series = episode.channels.get(spec.name);
        let mut last: Option<f64> = None;
        for h in 0..len {
            let cell = series.and_then(|s| s[h]);
            if let Some(raw) = cell {
                let v = raw.clamp(spec.min, spec.max);
                if v != raw {
                    clamped += 1;
                }
                last = Some(v);
                observed[h][c] = true;
            }
            values[h][c] = last.unwrap_or(spec.normal_value);
        }
    }
    ImputedGrid {
        values,
        observed,
        clamped,
    }
}

/// Per-hour active term sets under the persistency rule.
///
/// With propagation enabled, a transient term observed at note hour `t` stays
/// active until the next note (or the end of the stay when no note follows); a
/// persistent term stays active until the end of the stay. Disabled, a term is
/// active only at the hour it was observed.
pub fn propagate_phenotypes(
    annotations: &[Annotation],
    pmap: &PersistencyMap,
    note_hours: &[u32],
    length_hours: u32,
    enabled: bool,
) -> Vec<BTreeSet<TermId>> {
    let mut active: Vec<BTreeSet<TermId>> = vec![BTreeSet::new(); length_hours as usize];
    for ann in annotations {
        if ann.hour >= length_hours {
            continue; // validated upstream; never extend past the grid
        }
        let start = ann.hour;
        let end = if !enabled {
            start + 1
        } else {
            match pmap.classify(&ann.term) {
                Persistence::Persistent => length_hours,
                Persistence::Transient => note_hours
                    .iter()
                    .copied()
                    .find(|h| *h > start)
                    .unwrap_or(length_hours),
            }
        };
        for h in start..end.min(length_hours) {
            active[h as usize].insert(ann.term.clone());
        }
    }
    active
}

/// Dense per-timestep feature rows aligned 1:1 with a label table.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub schema: FeatureSchema,
    /// Episode id per episode index referenced by `rows`.
    pub episode_ids: Vec<String>,
    pub rows: Vec<RowMeta>,
    /// Row-major values, `rows.len() * schema.width()`.
    pub values: Vec<f64>,
    pub labels: Vec<u8>,
    pub clamped_values: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowMeta {
    pub episode: u32,
    pub hour: u32,
}

impl FeatureMatrix {
    pub fn width(&self) -> usize {
        self.schema.width()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.values[i * w..(i + 1) * w]
    }

    /// New matrix holding only the chosen rows (split or subsample selection).
    pub fn select_rows(&self, indices: &[usize]) -> FeatureMatrix {
        let w = self.width();
        let mut values = Vec::with_capacity(indices.len() * w);
        let mut rows = Vec::with_capacity(indices.len());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            values.extend_from_slice(self.row(i));
            rows.push(self.rows[i]);
            labels.push(self.labels[i]);
        }
        FeatureMatrix {
            schema: self.schema.clone(),
            episode_ids: self.episode_ids.clone(),
            rows,
            values,
            labels,
            clamped_values: self.clamped_values,
        }
    }

    /// Row indices belonging to a set of episode indices.
    pub fn rows_for_episodes(&self, episodes: &BTreeSet<usize>) -> Vec<usize> {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, r)| episodes.contains(&(r.episode as usize)))
            .map(|(i, _)| i)
            .collect()
    }
}

struct EpisodeFeatures {
    grid: Vec<f64>, // row-major, length_hours x width
    clamped: usize,
}

fn annotations_for<'a>(
    episode: &'a Episode,
    source: &'a AnnotationSource<'_>,
    mode: FeatureMode,
) -> Result<Vec<Annotation>, FeatureError> {
    if mode == FeatureMode::Structured {
        return Ok(Vec::new());
    }
    match source {
        AnnotationSource::NoteTerms => Ok(episode
            .notes
            .iter()
            .flat_map(|n| {
                n.terms.iter().map(|t| Annotation {
                    term: t.clone(),
                    hour: n.hour,
                    note_id: n.note_id.clone(),
                    span: None,
                })
            })
            .collect()),
        AnnotationSource::External(map) => map
            .get(&episode.episode_id)
            .cloned()
            .ok_or_else(|| FeatureError::MissingAnnotations(episode.episode_id.clone())),
    }
}

fn validate_annotations(
    episode: &Episode,
    annotations: &[Annotation],
    ontology: &Ontology,
) -> Result<(), FeatureError> {
    for a in annotations {
        if !ontology.contains(&a.term) {
            return Err(FeatureError::UnknownTerm {
                episode: episode.episode_id.clone(),
                term: a.term.clone(),
            });
        }
        if a.hour >= episode.length_hours {
            return Err(FeatureError::AnnotationOutOfRange {
                episode: episode.episode_id.clone(),
                hour: a.hour,
                length: episode.length_hours,
            });
        }
    }
    Ok(())
}

/// Map each term to the parents the aggregation adds for it, computed once.
fn aggregation_table(
    ontology: &Ontology,
    terms: &BTreeSet<TermId>,
    cfg: &FeatureConfig,
) -> Result<BTreeMap<TermId, BTreeSet<TermId>>, FeatureError> {
    let mut table = BTreeMap::new();
    for term in terms {
        let single = BTreeSet::from([term.clone()]);
        let expanded =
            ontology.aggregate_to_parents(&single, cfg.aggregation_levels, cfg.aggregation_mode)?;
        table.insert(term.clone(), expanded);
    }
    Ok(table)
}

fn build_episode_grid(
    episode: &Episode,
    annotations: &[Annotation],
    pmap: &PersistencyMap,
    schema: &FeatureSchema,
    table: &BTreeMap<TermId, BTreeSet<TermId>>,
    cfg: &FeatureConfig,
) -> EpisodeFeatures {
    let len = episode.length_hours as usize;
    let width = schema.width();
    let imputed = impute_channels(episode);
    let mut grid = vec![0.0f64; len * width];

    // structured block
    for h in 0..len {
        let row = &mut grid[h * width..h * width + schema.n_structured];
        if cfg.one_hot_categoricals {
            let mut cursor = 0usize;
            for (c, spec) in CHANNELS.iter().enumerate() {
                if spec.kind == ChannelKind::Categorical {
                    let lo = spec.min as i64;
                    let hi = spec.max as i64;
                    let code = imputed.values[h][c].round() as i64;
                    for level in lo..=hi {
                        row[cursor] = f64::from(level == code);
                        cursor += 1;
                    }
                } else {
                    row[cursor] = imputed.values[h][c];
                    cursor += 1;
                }
            }
        } else {
            for (c, v) in imputed.values[h].iter().enumerate() {
                row[c] = *v;
            }
        }
    }

    // phenotype block
    if cfg.mode == FeatureMode::WithPhenotypes && !schema.phenotype_terms.is_empty() {
        let column: BTreeMap<&TermId, usize> = schema
            .phenotype_terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t, schema.n_structured + i))
            .collect();
        let note_hours = episode.note_hours();
        let active = propagate_phenotypes(
            annotations,
            pmap,
            &note_hours,
            episode.length_hours,
            cfg.propagation,
        );
        for (h, terms) in active.iter().enumerate() {
            for term in terms {
                for expanded in &table[term] {
                    if let Some(&col) = column.get(expanded) {
                        grid[h * width + col] = 1.0;
                    }
                }
            }
        }
    }

    EpisodeFeatures {
        grid,
        clamped: imputed.clamped,
    }
}

/// Grid row index backing a prediction at `hour` for a task.
fn grid_index(task: Task, hour: u32) -> usize {
    match task {
        Task::Mortality => hour as usize - 1,
        _ => hour as usize,
    }
}

struct AssemblyContext {
    schema: FeatureSchema,
    /// raw annotation term → columns it turns on (itself plus aggregated
    /// parents)
    table: BTreeMap<TermId, BTreeSet<TermId>>,
}

fn prepare(
    episodes: &[Episode],
    source: &AnnotationSource<'_>,
    ontology: &Ontology,
    cfg: &FeatureConfig,
) -> Result<AssemblyContext, FeatureError> {
    let mut raw_terms = BTreeSet::new();
    if cfg.mode == FeatureMode::WithPhenotypes {
        for episode in episodes {
            let annotations = annotations_for(episode, source, cfg.mode)?;
            validate_annotations(episode, &annotations, ontology)?;
            for a in annotations {
                raw_terms.insert(a.term);
            }
        }
    }
    let table = aggregation_table(ontology, &raw_terms, cfg)?;
    let mut columns = BTreeSet::new();
    for expanded in table.values() {
        columns.extend(expanded.iter().cloned());
    }
    // replace-mode aggregation may drop the raw term itself from the columns;
    // the schema carries exactly what the rows can light up
    Ok(AssemblyContext {
        schema: build_schema(cfg, &columns),
        table,
    })
}

/// Assemble the dense feature matrix for a labeled task over a cohort. Rows
/// align 1:1 with `labels.rows`.
pub fn assemble(
    episodes: &[Episode],
    labels: &TaskLabels,
    ontology: &Ontology,
    pmap: &PersistencyMap,
    source: &AnnotationSource<'_>,
    cfg: &FeatureConfig,
) -> Result<FeatureMatrix, FeatureError> {
    let ctx = prepare(episodes, source, ontology, cfg)?;
    let schema = &ctx.schema;

    // group label rows per episode so each grid is built once
    let mut per_episode: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, row) in labels.rows.iter().enumerate() {
        per_episode.entry(row.episode).or_default().push(i);
    }

    let width = schema.width();
    let episode_rows: Vec<(usize, Vec<usize>, EpisodeFeatures)> = per_episode
        .into_par_iter()
        .map(|(ep_idx, row_ids)| {
            let episode = &episodes[ep_idx];
            let annotations = annotations_for(episode, source, cfg.mode).expect("validated");
            let feats = build_episode_grid(episode, &annotations, pmap, schema, &ctx.table, cfg);
            (ep_idx, row_ids, feats)
        })
        .collect();

    let mut values = vec![0.0f64; labels.rows.len() * width];
    let mut clamped = 0usize;
    for (_, row_ids, feats) in &episode_rows {
        clamped += feats.clamped;
        for &ri in row_ids {
            let row = labels.rows[ri];
            let g = grid_index(labels.task, row.hour);
            values[ri * width..(ri + 1) * width]
                .copy_from_slice(&feats.grid[g * width..(g + 1) * width]);
        }
    }

    Ok(FeatureMatrix {
        schema: ctx.schema,
        episode_ids: episodes.iter().map(|e| e.episode_id.clone()).collect(),
        rows: labels
            .rows
            .iter()
            .map(|r| RowMeta {
                episode: r.episode as u32,
                hour: r.hour,
            })
            .collect(),
        values,
        labels: labels.rows.iter().map(|r| r.label).collect(),
        clamped_values: clamped,
    })
}

/// One per-episode sequence for the recurrent model: the full hourly grid,
/// with a label wherever that hour is a prediction point.
pub struct EpisodeSequence {
    pub episode: usize,
    pub n_hours: usize,
    /// Row-major `n_hours * width`.
    pub rows: Vec<f64>,
    pub labels: Vec<Option<u8>>,
}

pub struct SequenceSet {
    pub schema: FeatureSchema,
    pub sequences: Vec<EpisodeSequence>,
}

/// Assemble per-episode sequences for the same task/labels. For mortality the
/// sequence is truncated to the first 48 hours and labeled at its last row.
pub fn assemble_sequences(
    episodes: &[Episode],
    labels: &TaskLabels,
    ontology: &Ontology,
    pmap: &PersistencyMap,
    source: &AnnotationSource<'_>,
    cfg: &FeatureConfig,
) -> Result<SequenceSet, FeatureError> {
    let ctx = prepare(episodes, source, ontology, cfg)?;
    let width = ctx.schema.width();

    let mut per_episode: BTreeMap<usize, Vec<&crate::tasks::LabelRow>> = BTreeMap::new();
    for row in &labels.rows {
        per_episode.entry(row.episode).or_default().push(row);
    }

    let sequences: Vec<EpisodeSequence> = per_episode
        .into_par_iter()
        .map(|(ep_idx, rows)| {
            let episode = &episodes[ep_idx];
            let annotations = annotations_for(episode, source, cfg.mode).expect("validated");
            let feats =
                build_episode_grid(episode, &annotations, pmap, &ctx.schema, &ctx.table, cfg);
            let n_hours = match labels.task {
                Task::Mortality => crate::tasks::MORTALITY_HOUR as usize,
                _ => episode.length_hours as usize,
            };
            let mut seq_labels = vec![None; n_hours];
            for row in rows {
                let g = grid_index(labels.task, row.hour);
                seq_labels[g] = Some(row.label);
            }
            EpisodeSequence {
                episode: ep_idx,
                n_hours,
                rows: feats.grid[..n_hours * width].to_vec(),
                labels: seq_labels,
            }
        })
        .collect();

    Ok(SequenceSet {
        schema: ctx.schema,
        sequences,
    })
}

/// Per-feature affine standardization fit on training rows; used by the
/// recurrent model only (trees are scale-invariant).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit<'a>(rows: impl Iterator<Item = &'a [f64]>, width: usize) -> Standardizer {
        let mut n = 0usize;
        let mut mean = vec![0.0; width];
        let mut m2 = vec![0.0; width];
        for row in rows {
            n += 1;
            for (i, v) in row.iter().enumerate() {
                let delta = v - mean[i];
                mean[i] += delta / n as f64;
                m2[i] += delta * (v - mean[i]);
            }
        }
        let std = m2
            .iter()
            .map(|s| {
                if n > 1 {
                    (s / (n - 1) as f64).sqrt().max(1e-9)
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, std }
    }

    pub fn apply(&self, row: &mut [f64]) {
        for (i, v) in row.iter_mut().enumerate() {
            *v = (*v - self.mean[i]) / self.std[i];
        }
    }
}

const MATRIX_MAGIC: &[u8; 4] = b"PHFM";
const MATRIX_VERSION: u32 = 1;

impl FeatureMatrix {
    /// Column-major binary export; the schema goes to a JSON sidecar.
    pub fn write_binary(&self, mut w: impl Write) -> Result<(), FeatureError> {
        w.write_all(MATRIX_MAGIC)?;
        w.write_all(&MATRIX_VERSION.to_le_bytes())?;
        w.write_all(&(self.n_rows() as u64).to_le_bytes())?;
        w.write_all(&(self.width() as u64).to_le_bytes())?;
        for c in 0..self.width() {
            for r in 0..self.n_rows() {
                w.write_all(&self.values[r * self.width() + c].to_le_bytes())?;
            }
        }
        for row in &self.rows {
            w.write_all(&row.episode.to_le_bytes())?;
            w.write_all(&row.hour.to_le_bytes())?;
        }
        w.write_all(&self.labels)?;
        w.write_all(&(self.episode_ids.len() as u64).to_le_bytes())?;
        for id in &self.episode_ids {
            w.write_all(&(id.len() as u32).to_le_bytes())?;
            w.write_all(id.as_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary(mut r: impl Read, schema: FeatureSchema) -> Result<Self, FeatureError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MATRIX_MAGIC {
            return Err(FeatureError::Malformed("bad magic".into()));
        }
        let mut buf4 = [0u8; 4];
        let mut buf8 = [0u8; 8];
        r.read_exact(&mut buf4)?;
        if u32::from_le_bytes(buf4) != MATRIX_VERSION {
            return Err(FeatureError::Malformed("unsupported version".into()));
        }
        r.read_exact(&mut buf8)?;
        let n_rows = u64::from_le_bytes(buf8) as usize;
        r.read_exact(&mut buf8)?;
        let width = u64::from_le_bytes(buf8) as usize;
        if width != schema.width() {
            return Err(FeatureError::Malformed(format!(
                "width {width} does not match schema width {}",
                schema.width()
            )));
        }
        let mut values = vec![0.0f64; n_rows * width];
        for c in 0..width {
            for r_i in 0..n_rows {
                r.read_exact(&mut buf8)?;
                values[r_i * width + c] = f64::from_le_bytes(buf8);
            }
        }
        let mut rows = Vec::with_capacity(n_rows);
        for _ in 0..n_rows {
            r.read_exact(&mut buf4)?;
            let episode = u32::from_le_bytes(buf4);
            r.read_exact(&mut buf4)?;
            rows.push(RowMeta {
                episode,
                hour: u32::from_le_bytes(buf4),
            });
        }
        let mut labels = vec![0u8; n_rows];
        r.read_exact(&mut labels)?;
        r.read_exact(&mut buf8)?;
        let n_ids = u64::from_le_bytes(buf8) as usize;
        let mut episode_ids = Vec::with_capacity(n_ids);
        for _ in 0..n_ids {
            r.read_exact(&mut buf4)?;
            let len = u32::from_le_bytes(buf4) as usize;
            let mut s = vec![0u8; len];
            r.read_exact(&mut s)?;
            episode_ids
                .push(String::from_utf8(s).map_err(|e| FeatureError::Malformed(e.to_string()))?);
        }
        Ok(FeatureMatrix {
            schema,
            episode_ids,
            rows,
            values,
            labels,
            clamped_values: 0,
        })
    }

    /// Human-readable dump for debugging.
    pub fn write_csv(&self, mut w: impl Write) -> Result<(), FeatureError> {
        write!(w, "episode_id,hour,label")?;
        for name in &self.schema.names {
            write!(w, ",{name}")?;
        }
        writeln!(w)?;
        for (i, row) in self.rows.iter().enumerate() {
            write!(
                w,
                "{},{},{}",
                self.episode_ids[row.episode as usize], row.hour, self.labels[i]
            )?;
            for v in self.row(i) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}
