//! Interpretable ICU outcome prediction on phenotype and bedside features.
//!
//! The crate covers the whole pipeline at desk scale:
//!
//! * [`ontology`] — HPO-style term DAG parsed from OBO flat files, with
//!   ancestor queries and parent aggregation.
//! * [`annotate`] — deterministic lexicon matching over note text and loaders
//!   for externally produced annotation files.
//! * [`cohort`] — the episode data model, JSONL loaders, patient-level splits
//!   and a seeded synthetic cohort generator.
//! * [`tasks`] — label construction for in-hospital mortality, physiological
//!   decompensation and length-of-stay.
//! * [`features`] — per-timestep feature assembly: imputed structured channels
//!   plus phenotype indicators under persistency propagation and ontology
//!   aggregation.
//! * [`models`] — from-scratch random forest and single-layer LSTM with
//!   gradient-checked training.
//! * [`explain`] — Shapley attributions: an exact subset-enumeration oracle
//!   and the polynomial-time path-dependent algorithm for forests.
//! * [`eval`] — metrics, calibration, bootstrap confidence intervals and
//!   pairwise significance matrices.
//! * [`cli`] — the `phenoicu` batch driver tying everything together.
//!
//! Every seeded entry point is deterministic: the same config and seed produce
//! byte-identical artifacts. See the `examples/` directory for one runnable
//! program per capability.

pub mod annotate;
pub mod cli;
pub mod cohort;
pub mod eval;
pub mod explain;
pub mod features;
pub mod models;
pub mod ontology;
pub mod plot;
pub mod seeds;
pub mod tasks;

pub use cohort::{Episode, GeneratorConfig};
pub use features::{FeatureMatrix, FeatureSchema};
pub use ontology::{Ontology, TermId};
