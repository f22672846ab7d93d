//! Turns annotated mentions and relations into candidate FHIR resources.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ner::{split_observation, ClinicalNote};
use crate::normalizer::{normalization_key, AnnotatedMention};
use crate::relations::{Relation, RelationType};
use crate::terminology::EntityType;

use super::{
    resource_id, CodeableConcept, Coding, Condition, Dosage, FhirResource, Identifier,
    MedicationRequest, Observation, Patient, Reference, ResourceType,
};

pub const DEFAULT_TIMESTAMP: &str = "2000-01-01T00:00:00Z";
pub const PLACEHOLDER_DOSAGE: &str = "as directed";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AssemblyError {
    #[error("patient id is empty")]
    EmptyPatientId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssemblyOptions {
    /// Emit uncoded resources for mentions without a concept.
    pub naive: bool,
    /// Stands in for a missing note timestamp.
    pub default_timestamp: String,
    pub placeholder_dosage: String,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self {
            naive: false,
            default_timestamp: DEFAULT_TIMESTAMP.to_string(),
            placeholder_dosage: PLACEHOLDER_DOSAGE.to_string(),
        }
    }
}

pub fn build_patient(patient_id: &str) -> Result<FhirResource, AssemblyError> {
    if patient_id.trim().is_empty() {
        return Err(AssemblyError::EmptyPatientId);
    }
    Ok(FhirResource::Patient(Patient {
        id: resource_id(patient_id, ResourceType::Patient, "", 0),
        identifier: vec![Identifier {
            value: patient_id.to_string(),
        }],
    }))
}

/// One Condition, Observation or MedicationRequest per codeable mention.
/// Mentions without a concept are skipped unless `opts.naive` is set.
pub fn assemble(
    note: &ClinicalNote,
    annotated: &[AnnotatedMention],
    rels: &[Relation],
    opts: &AssemblyOptions,
) -> Vec<FhirResource> {
    let patient_ref = Reference::patient(&resource_id(&note.patient_id, ResourceType::Patient, "", 0));
    let timestamp = note
        .timestamp
        .clone()
        .unwrap_or_else(|| opts.default_timestamp.clone());
    let tails = |rtype: RelationType, head: &str| -> Vec<&str> {
        rels.iter()
            .filter(|r| r.rtype == rtype && r.head == head)
            .filter_map(|r| note.text.get(r.tail_span.0..r.tail_span.1))
            .map(str::trim)
            .collect()
    };

    let mut out = Vec::new();
    for a in annotated {
        let m = &a.mention;
        if !m.etype.is_codeable() {
            continue;
        }
        let (concept, id_code) = match &a.concept {
            Some(c) => (
                CodeableConcept::coded(Coding::new(c.system, &c.code, &c.display)),
                format!("{}|{}", c.system.uri(), c.code),
            ),
            None if opts.naive => {
                let key = normalization_key(m);
                if key.is_empty() {
                    continue;
                }
                (CodeableConcept::text_only(key), key.to_lowercase())
            }
            None => continue,
        };
        let resource = match m.etype {
            EntityType::Condition => FhirResource::Condition(Condition {
                id: resource_id(&note.patient_id, ResourceType::Condition, &id_code, m.start),
                clinical_status: Some(Condition::default_clinical_status()),
                verification_status: Some(Condition::default_verification_status()),
                code: Some(concept),
                subject: Some(patient_ref.clone()),
            }),
            EntityType::Observation => {
                let value = split_observation(&m.text)
                    .1
                    .map(str::to_string)
                    .or_else(|| {
                        tails(RelationType::HasResult, &m.mention_id)
                            .first()
                            .map(|v| v.to_string())
                    });
                FhirResource::Observation(Observation {
                    id: resource_id(&note.patient_id, ResourceType::Observation, &id_code, m.start),
                    status: "final".to_string(),
                    code: Some(concept),
                    subject: Some(patient_ref.clone()),
                    effective_date_time: Some(timestamp.clone()),
                    value_string: value,
                })
            }
            EntityType::Medication => {
                let mut dosage: Vec<Dosage> = tails(RelationType::HasDosage, &m.mention_id)
                    .into_iter()
                    .map(|t| Dosage { text: t.to_string() })
                    .collect();
                if dosage.is_empty() {
                    dosage.push(Dosage {
                        text: opts.placeholder_dosage.clone(),
                    });
                }
                FhirResource::MedicationRequest(MedicationRequest {
                    id: resource_id(&note.patient_id, ResourceType::MedicationRequest, &id_code, m.start),
                    status: "active".to_string(),
                    intent: "order".to_string(),
                    medication_codeable_concept: Some(concept),
                    subject: Some(patient_ref.clone()),
                    authored_on: Some(timestamp.clone()),
                    dosage_instruction: dosage,
                })
            }
            EntityType::Dosage | EntityType::Temporal => unreachable!("filtered above"),
        };
        out.push(resource);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ner::{segment, Extractor, PatternSet};
    use crate::normalizer::normalize_all;
    use crate::relations::{extract_relations, CueList};
    use crate::terminology::TerminologyIndex;

    fn assemble_text(text: &str, timestamp: Option<&str>) -> Vec<FhirResource> {
        let index = TerminologyIndex::bundled();
        let ex = Extractor::new(&index, PatternSet::bundled(&index));
        let mut note = ClinicalNote::new("n1", "p001", text);
        note.timestamp = timestamp.map(str::to_string);
        let sentences = segment(text);
        let annotated = normalize_all(&ex.extract_with_sentences(&note, &sentences), &index);
        let rels = extract_relations(&annotated, &sentences, text, &CueList::default());
        assemble(&note, &annotated, &rels, &AssemblyOptions::default())
    }

    #[test]
    fn patient_guard_and_determinism() {
        assert_eq!(build_patient(""), Err(AssemblyError::EmptyPatientId));
        let a = build_patient("p001").unwrap();
        assert_eq!(a, build_patient("p001").unwrap());
        match a {
            FhirResource::Patient(p) => assert_eq!(p.identifier[0].value, "p001"),
            _ => panic!("not a patient"),
        }
    }

    #[test]
    fn case_study_resources() {
        let res = assemble_text(
            "65-year-old male with history of hypertension and type 2 diabetes. BP 145/92. Started Lisinopril 10mg daily.",
            Some("2024-03-01T10:00:00Z"),
        );
        let summary: Vec<_> = res
            .iter()
            .map(|r| (r.resource_type(), r.primary_code().unwrap()))
            .collect();
        assert_eq!(
            summary,
            vec![
                (ResourceType::Condition, "http://snomed.info/sct|38341003".to_string()),
                (ResourceType::Condition, "http://snomed.info/sct|44054006".to_string()),
                (ResourceType::Observation, "http://loinc.org|85354-9".to_string()),
                (
                    ResourceType::MedicationRequest,
                    "http://www.nlm.nih.gov/research/umls/rxnorm|29046".to_string()
                ),
            ]
        );
        let FhirResource::Observation(obs) = &res[2] else { panic!() };
        assert_eq!(obs.value_string.as_deref(), Some("145/92"));
        assert_eq!(obs.effective_date_time.as_deref(), Some("2024-03-01T10:00:00Z"));
        let FhirResource::MedicationRequest(med) = &res[3] else { panic!() };
        assert_eq!(med.dosage_instruction, vec![Dosage { text: "10mg daily".into() }]);
    }

    #[test]
    fn empty_mentions_give_no_resources() {
        let note = ClinicalNote::new("n", "p", "");
        assert!(assemble(&note, &[], &[], &AssemblyOptions::default()).is_empty());
    }

    #[test]
    fn medication_without_dosage_gets_placeholder() {
        let res = assemble_text("Continue Aspirin.", None);
        let FhirResource::MedicationRequest(med) = &res[0] else { panic!() };
        assert_eq!(med.dosage_instruction[0].text, PLACEHOLDER_DOSAGE);
        assert_eq!(med.authored_on.as_deref(), Some(DEFAULT_TIMESTAMP));
    }

    #[test]
    fn separated_result_fills_value() {
        let res = assemble_text("Glucose was 180 mg/dL.", None);
        assert_eq!(res.len(), 1);
        let FhirResource::Observation(obs) = &res[0] else { panic!() };
        assert_eq!(obs.value_string.as_deref(), Some("180 mg/dL"));
    }
}
