//! Narrative synthesis from structured diagnosis, prescription and lab
//! tables, with gold annotations and a reference twin for every note.

pub mod split;
pub mod tables;
pub mod templates;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::{GoldAnnotations, GoldMention, GoldRelation};
use crate::fhir::{self, AssemblyOptions, Severity, TwinBundle};
use crate::ner::{segment, ClinicalNote, EntityMention};
use crate::normalizer::{normalize, AnnotatedMention};
use crate::relations::{Relation, RelationType};
use crate::terminology::{CodeSystem, ConceptEntry, EntityType, TerminologyIndex};

pub use split::{split_corpus, split_patients, CorpusSplit, SplitError, DEFAULT_RATIOS};
pub use tables::{load_tables, parse_tables, TableLoad};
pub use templates::{Rendered, SlotValue, Template, TemplateSet};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("template error: {0}")]
    Template(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{file} line {line}: {message}")]
    Table { file: String, line: usize, message: String },
    #[error("required table {0} is missing")]
    MissingTable(String),
    #[error("record has an empty patient id or no items")]
    EmptyRecord,
    #[error("no item of patient {patient_id} resolves in the terminology")]
    UnresolvableRecord { patient_id: String },
    #[error("reference twin for patient {patient_id} fails validation: {message}")]
    InvalidReference { patient_id: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub system: CodeSystem,
    pub code: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prescription {
    pub drug: String,
    pub dose: String,
    pub frequency: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabEvent {
    pub test: String,
    pub value: String,
    pub unit: String,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredRecord {
    pub patient_id: String,
    pub diagnoses: Vec<Diagnosis>,
    pub medications: Vec<Prescription>,
    pub labs: Vec<LabEvent>,
}

impl StructuredRecord {
    pub fn new(patient_id: impl Into<String>) -> Self {
        Self {
            patient_id: patient_id.into(),
            diagnoses: Vec::new(),
            medications: Vec::new(),
            labs: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.diagnoses.is_empty() && self.medications.is_empty() && self.labs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCase {
    pub note: ClinicalNote,
    pub gold: GoldAnnotations,
    pub reference: TwinBundle,
}

/// An input item left out of the note, with the reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedItem {
    pub patient_id: String,
    pub item: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub case: SyntheticCase,
    pub skipped: Vec<SkippedItem>,
}

fn same_code(system: CodeSystem, a: &str, b: &str) -> bool {
    match system {
        CodeSystem::Icd10 => a.replace('.', "").eq_ignore_ascii_case(&b.replace('.', "")),
        _ => a == b,
    }
}

/// Text to render for a diagnosis: the description when it looks up to the
/// recorded code, else a surface form of the coded entry.
fn diagnosis_surface(dx: &Diagnosis, index: &TerminologyIndex) -> Option<String> {
    let hits = |surface: &str| {
        index
            .lookup(surface, Some(EntityType::Condition))
            .into_iter()
            .any(|e| e.system == dx.system && same_code(dx.system, &e.code, &dx.code))
    };
    let description = dx.description.trim();
    if !description.is_empty() && hits(description) {
        return Some(description.to_string());
    }
    index
        .entries()
        .filter(|e: &&ConceptEntry| {
            e.entity_type == EntityType::Condition && e.system == dx.system && same_code(dx.system, &e.code, &dx.code)
        })
        .map(|e| e.surface_form.clone())
        .min()
}

struct Piece {
    text: String,
    spans: Vec<(usize, usize, EntityType)>,
    dosage_of: Option<(usize, usize)>,
}

fn rendered_piece(rendered: Rendered, spans: Vec<(usize, usize, EntityType)>, dosage_of: Option<(usize, usize)>) -> Piece {
    Piece {
        text: rendered.text,
        spans,
        dosage_of,
    }
}

fn text(s: &str) -> SlotValue {
    SlotValue::Text(s.trim().to_string())
}

/// [`synthesize_with`] under default assembly options.
pub fn synthesize(
    record: &StructuredRecord,
    templates: &TemplateSet,
    index: &TerminologyIndex,
) -> Result<Synthesis, SynthError> {
    synthesize_with(record, templates, index, &AssemblyOptions::default())
}

/// Renders one note for a record. Sentence order is diagnoses (folded into
/// one history sentence when there are two or more and the template set has
/// one), then labs, then medications. The note timestamp is the latest lab
/// timestamp.
pub fn synthesize_with(
    record: &StructuredRecord,
    templates: &TemplateSet,
    index: &TerminologyIndex,
    opts: &AssemblyOptions,
) -> Result<Synthesis, SynthError> {
    let pid = record.patient_id.trim();
    if pid.is_empty() || record.is_empty() {
        return Err(SynthError::EmptyRecord);
    }
    let mut skipped = Vec::new();
    let mut skip = |item: String, reason: &str| {
        skipped.push(SkippedItem {
            patient_id: pid.to_string(),
            item,
            reason: reason.to_string(),
        })
    };

    let mut conditions = Vec::new();
    for dx in &record.diagnoses {
        match diagnosis_surface(dx, index) {
            Some(s) => conditions.push(s),
            None => skip(format!("diagnosis {} {}", dx.system, dx.code), "code not in terminology"),
        }
    }
    let mut labs = Vec::new();
    for lab in &record.labs {
        if index.lookup(&lab.test, Some(EntityType::Observation)).is_empty() {
            skip(format!("lab {}", lab.test), "test not in terminology");
        } else if lab.value.trim().is_empty() {
            skip(format!("lab {}", lab.test), "empty value");
        } else {
            labs.push(lab);
        }
    }
    let mut meds = Vec::new();
    for rx in &record.medications {
        if index.lookup(&rx.drug, Some(EntityType::Medication)).is_empty() {
            skip(format!("medication {}", rx.drug), "drug not in terminology");
        } else {
            meds.push(rx);
        }
    }
    if conditions.is_empty() && labs.is_empty() && meds.is_empty() {
        return Err(SynthError::UnresolvableRecord {
            patient_id: pid.to_string(),
        });
    }

    let mut pieces: Vec<Piece> = Vec::new();
    match (&templates.history, conditions.len()) {
        (Some(history), n) if n >= 2 => {
            let r = history.render(&HashMap::from([("descriptions", SlotValue::List(conditions.clone()))]));
            let spans = r.spans.get("descriptions").cloned().unwrap_or_default();
            let spans = spans.into_iter().map(|(s, e)| (s, e, EntityType::Condition)).collect();
            pieces.push(rendered_piece(r, spans, None));
        }
        _ => {
            for c in &conditions {
                let r = templates.diagnosis.render(&HashMap::from([("description", text(c))]));
                let spans = r.span("description").map(|(s, e)| (s, e, EntityType::Condition)).into_iter().collect();
                pieces.push(rendered_piece(r, spans, None));
            }
        }
    }
    for lab in &labs {
        let r = templates.lab.render(&HashMap::from([
            ("test", text(&lab.test)),
            ("value", text(&lab.value)),
            ("unit", text(&lab.unit)),
        ]));
        let start = r.span("test").map(|s| s.0);
        let end = r.span("unit").or(r.span("value")).map(|s| s.1);
        let spans = start.zip(end).map(|(s, e)| (s, e, EntityType::Observation)).into_iter().collect();
        pieces.push(rendered_piece(r, spans, None));
    }
    for rx in &meds {
        let r = templates.medication.render(&HashMap::from([
            ("drug", text(&rx.drug)),
            ("dose", text(&rx.dose)),
            ("frequency", text(&rx.frequency)),
        ]));
        let mut spans: Vec<(usize, usize, EntityType)> =
            r.span("drug").map(|(s, e)| (s, e, EntityType::Medication)).into_iter().collect();
        // A frequency alone is not a dosage mention.
        let dosage = r.span("dose").map(|(s, e)| (s, r.span("frequency").map_or(e, |f| f.1)));
        if let Some((s, e)) = dosage {
            spans.push((s, e, EntityType::Dosage));
        }
        let link = r.span("drug").zip(dosage).map(|(d, _)| d);
        pieces.push(rendered_piece(r, spans, link));
    }

    // Concatenate sentences and shift spans to note offsets.
    let mut note_text = String::new();
    let mut spans: Vec<(usize, usize, EntityType)> = Vec::new();
    let mut dosage_links: Vec<((usize, usize), (usize, usize))> = Vec::new();
    for piece in pieces {
        if !note_text.is_empty() {
            note_text.push(' ');
        }
        let offset = note_text.len();
        note_text.push_str(&piece.text);
        let shifted: Vec<_> = piece.spans.iter().map(|&(s, e, t)| (s + offset, e + offset, t)).collect();
        if let Some((ds, de)) = piece.dosage_of {
            if let Some(&(s, e, _)) = shifted.iter().find(|m| m.2 == EntityType::Dosage) {
                dosage_links.push(((ds + offset, de + offset), (s, e)));
            }
        }
        spans.extend(shifted);
    }
    spans.sort();

    let timestamp = labs
        .iter()
        .map(|l| l.timestamp.trim())
        .filter(|t| !t.is_empty())
        .max()
        .map(str::to_string);
    let mut note = ClinicalNote::new(format!("note-{pid}"), pid, note_text);
    note.timestamp = timestamp;

    let sentences = segment(&note.text);
    let annotated: Vec<AnnotatedMention> = spans
        .iter()
        .enumerate()
        .map(|(i, &(start, end, etype))| {
            let mention = EntityMention {
                mention_id: format!("{}:g{i}", note.note_id),
                note_id: note.note_id.clone(),
                start,
                end,
                text: note.text[start..end].to_string(),
                etype,
                sentence_index: sentences.iter().position(|s| s.start <= start && end <= s.end).unwrap_or(0),
            };
            let concept = if etype.is_codeable() {
                normalize(&mention, index).ok().flatten()
            } else {
                None
            };
            AnnotatedMention { mention, concept }
        })
        .collect();
    let by_span = |span: (usize, usize)| annotated.iter().find(|a| a.mention.span() == span).map(|a| &a.mention);
    let relations: Vec<Relation> = dosage_links
        .iter()
        .filter_map(|&(head, tail)| {
            let (h, t) = (by_span(head)?, by_span(tail)?);
            Some(Relation {
                rtype: RelationType::HasDosage,
                head: h.mention_id.clone(),
                tail: t.mention_id.clone(),
                head_span: head,
                tail_span: tail,
            })
        })
        .collect();

    let gold = GoldAnnotations {
        note_id: note.note_id.clone(),
        mentions: annotated
            .iter()
            .map(|a| GoldMention {
                start: a.mention.start,
                end: a.mention.end,
                etype: a.mention.etype,
                system: a.concept.as_ref().map(|c| c.system),
                code: a.concept.as_ref().map(|c| c.code.clone()),
            })
            .collect(),
        relations: relations
            .iter()
            .map(|r| GoldRelation {
                rtype: r.rtype,
                head: r.head_span,
                tail: r.tail_span,
            })
            .collect(),
    };

    let reference_opts = AssemblyOptions {
        naive: false,
        ..opts.clone()
    };
    let patient = fhir::build_patient(pid).map_err(|_| SynthError::EmptyRecord)?;
    let resources = fhir::assemble(&note, &annotated, &relations, &reference_opts);
    let validator = fhir::Validator {
        default_timestamp: Some(reference_opts.default_timestamp.clone()),
        placeholder_dosage: reference_opts.placeholder_dosage.clone(),
    };
    let issues = validator.validate(&resources, &patient);
    if let Some(err) = issues.iter().find(|i| i.severity == Severity::Error) {
        return Err(SynthError::InvalidReference {
            patient_id: pid.to_string(),
            message: err.message.clone(),
        });
    }
    let reference = fhir::bundle(&patient, &resources, &issues);
    Ok(Synthesis {
        case: SyntheticCase { note, gold, reference },
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig1_record() -> StructuredRecord {
        StructuredRecord {
            patient_id: "p001".into(),
            diagnoses: vec![Diagnosis {
                system: CodeSystem::Icd10,
                code: "E14.9".into(),
                description: "diabetes".into(),
            }],
            medications: vec![Prescription {
                drug: "Metformin".into(),
                dose: "500mg".into(),
                frequency: "twice daily".into(),
            }],
            labs: vec![],
        }
    }

    #[test]
    fn figure_one_note() {
        let index = TerminologyIndex::bundled();
        let out = synthesize(&fig1_record(), &TemplateSet::default(), &index).unwrap();
        let case = out.case;
        assert_eq!(case.note.text, "Patient has diabetes. Started Metformin 500mg twice daily.");
        assert_eq!(case.note.note_id, "note-p001");
        let slices: Vec<&str> = case.gold.mentions.iter().map(|m| &case.note.text[m.start..m.end]).collect();
        assert_eq!(slices, ["diabetes", "Metformin", "500mg twice daily"]);
        assert_eq!(case.gold.mentions[0].code.as_deref(), Some("73211009"));
        assert_eq!(case.gold.mentions[1].code.as_deref(), Some("6809"));
        assert_eq!(case.gold.relations.len(), 1);
        assert_eq!(case.gold.relations[0].head, (30, 39));
        assert_eq!(case.reference.entry.len(), 3);
        assert!(out.skipped.is_empty());
    }

    #[test]
    fn history_sentence_for_two_diagnoses() {
        let index = TerminologyIndex::bundled();
        let rec = StructuredRecord {
            patient_id: "p002".into(),
            diagnoses: vec![
                Diagnosis {
                    system: CodeSystem::Icd10,
                    code: "I10".into(),
                    description: "hypertension".into(),
                },
                Diagnosis {
                    system: CodeSystem::Icd10,
                    code: "E119".into(),
                    description: "Type 2 diabetes mellitus without complications".into(),
                },
            ],
            medications: vec![],
            labs: vec![LabEvent {
                test: "BP".into(),
                value: "145/92".into(),
                unit: "".into(),
                timestamp: "2024-02-01T09:00:00Z".into(),
            }],
        };
        let case = synthesize(&rec, &TemplateSet::default(), &index).unwrap().case;
        assert_eq!(
            case.note.text,
            "Patient with history of hypertension and type 2 diabetes. BP 145/92."
        );
        assert_eq!(case.note.timestamp.as_deref(), Some("2024-02-01T09:00:00Z"));
        let obs = case.gold.mentions.iter().find(|m| m.etype == EntityType::Observation).unwrap();
        assert_eq!(&case.note.text[obs.start..obs.end], "BP 145/92");
    }

    #[test]
    fn unresolvable_items_are_skipped_or_fatal() {
        let index = TerminologyIndex::bundled();
        let mut rec = fig1_record();
        rec.medications[0].drug = "Zzzmab".into();
        let out = synthesize(&rec, &TemplateSet::default(), &index).unwrap();
        assert_eq!(out.skipped.len(), 1);
        assert_eq!(out.case.note.text, "Patient has diabetes.");

        rec.diagnoses[0].code = "Z99.99".into();
        assert!(matches!(
            synthesize(&rec, &TemplateSet::default(), &index),
            Err(SynthError::UnresolvableRecord { .. })
        ));
        assert_eq!(
            synthesize(&StructuredRecord::new("p"), &TemplateSet::default(), &index),
            Err(SynthError::EmptyRecord)
        );
    }

    #[test]
    fn medication_without_dose_has_no_relation() {
        let index = TerminologyIndex::bundled();
        let mut rec = fig1_record();
        rec.medications[0].dose.clear();
        rec.medications[0].frequency.clear();
        let case = synthesize(&rec, &TemplateSet::default(), &index).unwrap().case;
        assert!(case.gold.relations.is_empty());
        assert!(case.note.text.ends_with("Started Metformin."));
    }
}
