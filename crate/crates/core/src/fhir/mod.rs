//! Minimal FHIR R4 resource model for a patient digital twin.
//!
//! Only the elements the twin profile needs are modelled. Required profile
//! elements are `Option`s so that incomplete resources can still be
//! represented, serialized and reported on by the validator.

pub mod assembly;
pub mod validation;

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::terminology::CodeSystem;

pub use assembly::{assemble, build_patient, AssemblyError, AssemblyOptions};
pub use validation::{validate, Rule, Severity, ValidationIssue, Validator};

pub const CONDITION_CLINICAL_URI: &str = "http://terminology.hl7.org/CodeSystem/condition-clinical";
pub const CONDITION_VERIFICATION_URI: &str =
    "http://terminology.hl7.org/CodeSystem/condition-ver-status";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coding {
    pub system: String,
    pub code: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub display: Option<String>,
}

impl Coding {
    pub fn new(system: CodeSystem, code: impl Into<String>, display: impl Into<String>) -> Self {
        Self {
            system: system.uri().to_string(),
            code: code.into(),
            display: Some(display.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CodeableConcept {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub coding: Vec<Coding>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl CodeableConcept {
    pub fn coded(coding: Coding) -> Self {
        Self {
            coding: vec![coding],
            text: None,
        }
    }

    pub fn text_only(text: impl Into<String>) -> Self {
        Self {
            coding: Vec::new(),
            text: Some(text.into()),
        }
    }

    fn status(system: &str, code: &str) -> Self {
        Self::coded(Coding {
            system: system.to_string(),
            code: code.to_string(),
            display: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reference {
    pub reference: String,
}

impl Reference {
    pub fn patient(patient_resource_id: &str) -> Self {
        Self {
            reference: format!("Patient/{patient_resource_id}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Identifier {
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dosage {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Patient {
    pub id: String,
    pub identifier: Vec<Identifier>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Condition {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clinical_status: Option<CodeableConcept>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verification_status: Option<CodeableConcept>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<CodeableConcept>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<Reference>,
}

impl Condition {
    pub fn default_clinical_status() -> CodeableConcept {
        CodeableConcept::status(CONDITION_CLINICAL_URI, "active")
    }

    pub fn default_verification_status() -> CodeableConcept {
        CodeableConcept::status(CONDITION_VERIFICATION_URI, "confirmed")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Observation {
    pub id: String,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<CodeableConcept>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<Reference>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effective_date_time: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_string: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MedicationRequest {
    pub id: String,
    pub status: String,
    pub intent: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub medication_codeable_concept: Option<CodeableConcept>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<Reference>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub authored_on: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dosage_instruction: Vec<Dosage>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ResourceType {
    Patient,
    Condition,
    Observation,
    MedicationRequest,
}

impl fmt::Display for ResourceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResourceType::Patient => "Patient",
            ResourceType::Condition => "Condition",
            ResourceType::Observation => "Observation",
            ResourceType::MedicationRequest => "MedicationRequest",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "resourceType")]
pub enum FhirResource {
    Patient(Patient),
    Condition(Condition),
    Observation(Observation),
    MedicationRequest(MedicationRequest),
}

/// Name and canonical value of one required profile element. `None` means
/// the element is absent.
pub type RequiredField = (&'static str, Option<String>);

fn coding_key(cc: &Option<CodeableConcept>) -> Option<String> {
    let c = cc.as_ref()?.coding.first()?;
    Some(format!("{}|{}", c.system, c.code))
}

impl FhirResource {
    pub fn id(&self) -> &str {
        match self {
            FhirResource::Patient(r) => &r.id,
            FhirResource::Condition(r) => &r.id,
            FhirResource::Observation(r) => &r.id,
            FhirResource::MedicationRequest(r) => &r.id,
        }
    }

    pub fn resource_type(&self) -> ResourceType {
        match self {
            FhirResource::Patient(_) => ResourceType::Patient,
            FhirResource::Condition(_) => ResourceType::Condition,
            FhirResource::Observation(_) => ResourceType::Observation,
            FhirResource::MedicationRequest(_) => ResourceType::MedicationRequest,
        }
    }

    pub fn subject(&self) -> Option<&Reference> {
        match self {
            FhirResource::Patient(_) => None,
            FhirResource::Condition(r) => r.subject.as_ref(),
            FhirResource::Observation(r) => r.subject.as_ref(),
            FhirResource::MedicationRequest(r) => r.subject.as_ref(),
        }
    }

    /// The clinical concept the resource is about.
    pub fn concept(&self) -> Option<&CodeableConcept> {
        match self {
            FhirResource::Patient(_) => None,
            FhirResource::Condition(r) => r.code.as_ref(),
            FhirResource::Observation(r) => r.code.as_ref(),
            FhirResource::MedicationRequest(r) => r.medication_codeable_concept.as_ref(),
        }
    }

    /// `system|code` of the first coding of the clinical concept.
    pub fn primary_code(&self) -> Option<String> {
        let c = self.concept()?.coding.first()?;
        Some(format!("{}|{}", c.system, c.code))
    }

    /// The profile's required elements, in a fixed order.
    pub fn required_fields(&self) -> Vec<RequiredField> {
        let subject = self.subject().map(|s| s.reference.clone());
        match self {
            FhirResource::Patient(p) => {
                vec![("identifier", p.identifier.first().map(|i| i.value.clone()))]
            }
            FhirResource::Condition(r) => vec![
                ("code", coding_key(&r.code)),
                ("clinicalStatus", coding_key(&r.clinical_status)),
                ("verificationStatus", coding_key(&r.verification_status)),
                ("subject", subject),
            ],
            FhirResource::Observation(r) => vec![
                ("code", coding_key(&r.code)),
                ("value", r.value_string.clone()),
                ("effectiveDateTime", r.effective_date_time.clone()),
                ("subject", subject),
            ],
            FhirResource::MedicationRequest(r) => vec![
                ("medicationCodeableConcept", coding_key(&r.medication_codeable_concept)),
                (
                    "dosageInstruction",
                    (!r.dosage_instruction.is_empty()).then(|| {
                        r.dosage_instruction
                            .iter()
                            .map(|d| d.text.as_str())
                            .collect::<Vec<_>>()
                            .join("\u{1f}")
                    }),
                ),
                ("authoredOn", r.authored_on.clone()),
                ("subject", subject),
            ],
        }
    }
}

/// Deterministic resource id: leading 64 bits of SHA-256 over the
/// identifying tuple, as lowercase hex.
pub fn resource_id(patient_id: &str, resource_type: ResourceType, code: &str, span_start: usize) -> String {
    let digest = Sha256::digest(format!("{patient_id}|{resource_type}|{code}|{span_start}").as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleEntry {
    pub resource: FhirResource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwinBundle {
    #[serde(rename = "resourceType")]
    pub resource_type: String,
    pub id: String,
    #[serde(rename = "type")]
    pub bundle_type: String,
    pub entry: Vec<BundleEntry>,
}

impl TwinBundle {
    pub fn patient(&self) -> Option<&Patient> {
        self.entry.iter().find_map(|e| match &e.resource {
            FhirResource::Patient(p) => Some(p),
            _ => None,
        })
    }

    pub fn patient_identifier(&self) -> Option<&str> {
        self.patient()
            .and_then(|p| p.identifier.first())
            .map(|i| i.value.as_str())
    }

    /// Every entry except the Patient.
    pub fn clinical_resources(&self) -> impl Iterator<Item = &FhirResource> {
        self.entry
            .iter()
            .map(|e| &e.resource)
            .filter(|r| r.resource_type() != ResourceType::Patient)
    }

    pub fn resources(&self) -> impl Iterator<Item = &FhirResource> {
        self.entry.iter().map(|e| &e.resource)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("bundle serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

/// Bundles the patient plus every resource without an ERROR issue, ordered
/// Patient, Conditions, Observations, MedicationRequests, each group by id.
pub fn bundle(patient: &FhirResource, resources: &[FhirResource], issues: &[ValidationIssue]) -> TwinBundle {
    let rejected: std::collections::HashSet<&str> = issues
        .iter()
        .filter(|i| i.severity == Severity::Error)
        .map(|i| i.resource_id.as_str())
        .collect();
    let mut kept: Vec<FhirResource> = resources
        .iter()
        .filter(|r| r.resource_type() != ResourceType::Patient && !rejected.contains(r.id()))
        .cloned()
        .collect();
    kept.sort_by(|a, b| (a.resource_type(), a.id()).cmp(&(b.resource_type(), b.id())));
    let entry = std::iter::once(patient.clone())
        .chain(kept)
        .map(|resource| BundleEntry { resource })
        .collect();
    TwinBundle {
        resource_type: "Bundle".to_string(),
        id: format!("twin-{}", patient.id()),
        bundle_type: "collection".to_string(),
        entry,
    }
}
