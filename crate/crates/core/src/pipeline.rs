//! End-to-end wiring of the extraction, normalization, relation and
//! assembly stages, with switches for the ablation configurations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::exec::{self, ExecMode};
use crate::fhir::{self, AssemblyError, AssemblyOptions, FhirResource, TwinBundle, ValidationIssue, Validator};
use crate::ner::{segment, ClinicalNote, Extractor, PatternSet, Sentence};
use crate::normalizer::{normalize_all, passthrough, AnnotatedMention};
use crate::relations::{extract_relations, CueList, Relation};
use crate::terminology::TerminologyIndex;

/// Stage switches. Naive mapping implies no normalization and no relations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablation {
    pub disable_normalization: bool,
    pub disable_relations: bool,
    pub disable_validation: bool,
    pub naive_mapping: bool,
}

impl Ablation {
    pub fn normalizes(&self) -> bool {
        !self.disable_normalization && !self.naive_mapping
    }

    pub fn relates(&self) -> bool {
        !self.disable_relations && !self.naive_mapping
    }

    pub fn validates(&self) -> bool {
        !self.disable_validation
    }

    /// Short human label, e.g. for a summary row.
    pub fn label(&self) -> String {
        if self.naive_mapping {
            return "naive-mapping".to_string();
        }
        let mut parts = Vec::new();
        if self.disable_normalization {
            parts.push("no-normalize");
        }
        if self.disable_relations {
            parts.push("no-relations");
        }
        if self.disable_validation {
            parts.push("no-validate");
        }
        if parts.is_empty() {
            "full".to_string()
        } else {
            parts.join("+")
        }
    }
}

/// Per-note output of the text stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteAnalysis {
    pub note_id: String,
    pub patient_id: String,
    pub sentences: Vec<Sentence>,
    pub mentions: Vec<AnnotatedMention>,
    pub relations: Vec<Relation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinOutput {
    pub patient_id: String,
    pub bundle: TwinBundle,
    pub issues: Vec<ValidationIssue>,
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    index: TerminologyIndex,
    extractor: Extractor,
    cues: CueList,
    ablation: Ablation,
    assembly: AssemblyOptions,
}

impl Pipeline {
    pub fn new(index: TerminologyIndex, patterns: PatternSet, cues: CueList) -> Self {
        let extractor = Extractor::new(&index, patterns);
        Self {
            index,
            extractor,
            cues,
            ablation: Ablation::default(),
            assembly: AssemblyOptions::default(),
        }
    }

    /// Bundled terminology, patterns and cue phrases.
    pub fn bundled() -> Self {
        let index = TerminologyIndex::bundled();
        let patterns = PatternSet::bundled(&index);
        Self::new(index, patterns, CueList::default())
    }

    pub fn with_ablation(mut self, ablation: Ablation) -> Self {
        self.ablation = ablation;
        self.assembly.naive = ablation.naive_mapping;
        self
    }

    pub fn with_default_timestamp(mut self, timestamp: impl Into<String>) -> Self {
        self.assembly.default_timestamp = timestamp.into();
        self
    }

    pub fn ablation(&self) -> Ablation {
        self.ablation
    }

    pub fn index(&self) -> &TerminologyIndex {
        &self.index
    }

    pub fn assembly_options(&self) -> &AssemblyOptions {
        &self.assembly
    }

    pub fn validator(&self) -> Validator {
        Validator {
            default_timestamp: Some(self.assembly.default_timestamp.clone()),
            placeholder_dosage: self.assembly.placeholder_dosage.clone(),
        }
    }

    pub fn analyze(&self, note: &ClinicalNote) -> NoteAnalysis {
        let sentences = segment(&note.text);
        let mentions = self.extractor.extract_with_sentences(note, &sentences);
        let annotated = if self.ablation.normalizes() {
            normalize_all(&mentions, &self.index)
        } else {
            passthrough(&mentions)
        };
        let relations = if self.ablation.relates() {
            extract_relations(&annotated, &sentences, &note.text, &self.cues)
        } else {
            Vec::new()
        };
        log::info!(
            "note={} stage=analyze sentences={} mentions={} coded={} relations={}",
            note.note_id,
            sentences.len(),
            annotated.len(),
            annotated.iter().filter(|a| a.concept.is_some()).count(),
            relations.len()
        );
        NoteAnalysis {
            note_id: note.note_id.clone(),
            patient_id: note.patient_id.clone(),
            sentences,
            mentions: annotated,
            relations,
        }
    }

    pub fn analyze_all(&self, notes: &[ClinicalNote], mode: ExecMode) -> Vec<NoteAnalysis> {
        exec::map(mode, notes, |n| self.analyze(n))
    }

    /// Assembles, validates and bundles one patient's notes.
    pub fn twin_from_analyses(
        &self,
        patient_id: &str,
        notes: &[(&ClinicalNote, &NoteAnalysis)],
    ) -> Result<TwinOutput, AssemblyError> {
        let patient = fhir::build_patient(patient_id)?;
        let resources: Vec<FhirResource> = notes
            .iter()
            .flat_map(|(note, analysis)| {
                fhir::assemble(note, &analysis.mentions, &analysis.relations, &self.assembly)
            })
            .collect();
        let issues = self.validator().validate(&resources, &patient);
        let bundle = if self.ablation.validates() {
            fhir::bundle(&patient, &resources, &issues)
        } else {
            fhir::bundle(&patient, &resources, &[])
        };
        log::info!(
            "patient={} stage=twin resources={} errors={} warnings={} bundled={}",
            patient_id,
            resources.len(),
            issues.iter().filter(|i| i.severity == fhir::Severity::Error).count(),
            issues.iter().filter(|i| i.severity == fhir::Severity::Warning).count(),
            bundle.entry.len()
        );
        Ok(TwinOutput {
            patient_id: patient_id.to_string(),
            bundle,
            issues,
        })
    }

    pub fn twin(&self, patient_id: &str, notes: &[&ClinicalNote]) -> Result<TwinOutput, AssemblyError> {
        let analyses: Vec<NoteAnalysis> = notes.iter().map(|n| self.analyze(n)).collect();
        let pairs: Vec<_> = notes.iter().copied().zip(analyses.iter()).collect();
        self.twin_from_analyses(patient_id, &pairs)
    }

    /// One twin per distinct patient, ordered by patient id.
    pub fn twins(&self, notes: &[ClinicalNote], mode: ExecMode) -> Vec<Result<TwinOutput, AssemblyError>> {
        let groups: Vec<(String, Vec<&ClinicalNote>)> = group_by_patient(notes).into_iter().collect();
        exec::map(mode, &groups, |(pid, notes)| self.twin(pid, notes))
    }
}

pub fn group_by_patient(notes: &[ClinicalNote]) -> BTreeMap<String, Vec<&ClinicalNote>> {
    let mut groups: BTreeMap<String, Vec<&ClinicalNote>> = BTreeMap::new();
    for note in notes {
        groups.entry(note.patient_id.clone()).or_default().push(note);
    }
    for group in groups.values_mut() {
        group.sort_by(|a, b| a.note_id.cmp(&b.note_id));
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;

    const CASE: &str = "65-year-old male with history of hypertension and type 2 diabetes. BP 145/92. Started Lisinopril 10mg daily.";

    #[test]
    fn full_pipeline_case_study() {
        let p = Pipeline::bundled();
        let note = ClinicalNote::new("n", "p002", CASE).with_timestamp("2024-01-01T00:00:00Z");
        let out = p.twin("p002", &[&note]).unwrap();
        assert_eq!(out.bundle.entry.len(), 5);
        assert!(out.issues.is_empty(), "{:?}", out.issues);
    }

    #[test]
    fn ablation_flags_compose() {
        let naive = Ablation { naive_mapping: true, ..Default::default() };
        assert!(!naive.normalizes() && !naive.relates() && naive.validates());
        assert_eq!(naive.label(), "naive-mapping");
        let both = Ablation {
            disable_relations: true,
            disable_validation: true,
            ..Default::default()
        };
        assert_eq!(both.label(), "no-relations+no-validate");
        assert_eq!(Ablation::default().label(), "full");
    }

    #[test]
    fn no_normalization_keeps_mentions_but_drops_concepts() {
        let note = ClinicalNote::new("n", "p", CASE);
        let full = Pipeline::bundled().analyze(&note);
        let ablated = Pipeline::bundled()
            .with_ablation(Ablation { disable_normalization: true, ..Default::default() })
            .analyze(&note);
        assert_eq!(full.mentions.len(), ablated.mentions.len());
        assert!(ablated.mentions.iter().all(|a| a.concept.is_none()));
        assert_eq!(full.relations, ablated.relations);
    }

    #[test]
    fn naive_mapping_bundles_only_patient() {
        let note = ClinicalNote::new("n", "p", CASE);
        let p = Pipeline::bundled().with_ablation(Ablation { naive_mapping: true, ..Default::default() });
        let out = p.twin("p", &[&note]).unwrap();
        assert_eq!(out.bundle.entry.len(), 1);
        assert!(out.issues.iter().any(|i| i.severity == fhir::Severity::Error));
    }
}
