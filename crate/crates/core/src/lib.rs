//! Clinical narrative to FHIR R4 patient digital twins.
//!
//! Notes flow through [`ner`], [`normalizer`] and [`relations`], are turned
//! into resources by [`fhir`] and scored by [`evaluation`]. The
//! [`synthesizer`] builds annotated test corpora from structured tables.

pub mod evaluation;
pub mod exec;
pub mod fhir;
pub mod ner;
pub mod normalizer;
pub mod pipeline;
pub mod relations;
pub mod synthesizer;
pub mod terminology;

pub use exec::ExecMode;
pub use ner::ClinicalNote;
pub use pipeline::{Ablation, NoteAnalysis, Pipeline, TwinOutput};
pub use terminology::{CodeSystem, EntityType, TerminologyIndex};
