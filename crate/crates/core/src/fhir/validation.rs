//! Profile checks for twin resources.
//!
//! | rule | resource          | requirement                                         |
//! |------|-------------------|-----------------------------------------------------|
//! | C1   | Condition         | `code` coded in SNOMED CT or ICD-10                 |
//! | C2   | Condition         | `clinicalStatus` and `verificationStatus` present   |
//! | O1   | Observation       | `code` coded in LOINC or SNOMED CT                  |
//! | O2   | Observation       | `value` and `effectiveDateTime` present             |
//! | M1   | MedicationRequest | RxNorm coding and at least one `dosageInstruction`  |
//! | M2   | MedicationRequest | `authoredOn` present                                |
//! | S1   | all but Patient   | `subject` references the twin's Patient             |
//!
//! A placeholder dosage or a defaulted timestamp is a WARNING; everything
//! else is an ERROR.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::terminology::CodeSystem;

use super::assembly::{DEFAULT_TIMESTAMP, PLACEHOLDER_DOSAGE};
use super::{CodeableConcept, FhirResource, Reference};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Rule {
    C1,
    C2,
    O1,
    O2,
    M1,
    M2,
    S1,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub resource_id: String,
    pub rule: Rule,
    pub severity: Severity,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Validator {
    /// Timestamp value that marks a defaulted anchor.
    pub default_timestamp: Option<String>,
    pub placeholder_dosage: String,
}

impl Default for Validator {
    fn default() -> Self {
        Self {
            default_timestamp: Some(DEFAULT_TIMESTAMP.to_string()),
            placeholder_dosage: PLACEHOLDER_DOSAGE.to_string(),
        }
    }
}

struct Report<'a> {
    resource_id: &'a str,
    issues: Vec<ValidationIssue>,
}

impl Report<'_> {
    fn push(&mut self, rule: Rule, severity: Severity, message: impl Into<String>) {
        self.issues.push(ValidationIssue {
            resource_id: self.resource_id.to_string(),
            rule,
            severity,
            message: message.into(),
        });
    }
}

/// Problem with a clinical coding, if any.
fn coding_problem(cc: Option<&CodeableConcept>, allowed: &[CodeSystem]) -> Option<String> {
    let Some(cc) = cc else {
        return Some("missing code".to_string());
    };
    if cc.coding.is_empty() {
        return Some("code has no coding".to_string());
    }
    for c in &cc.coding {
        match CodeSystem::from_uri(&c.system) {
            Some(s) if allowed.contains(&s) => {}
            _ => {
                let names: Vec<_> = allowed.iter().map(|s| s.tag()).collect();
                return Some(format!(
                    "coding system `{}` not allowed, expected {}",
                    c.system,
                    names.join(" or ")
                ));
            }
        }
        if c.code.trim().is_empty() {
            return Some("coding has an empty code".to_string());
        }
    }
    None
}

fn present(cc: &Option<CodeableConcept>) -> bool {
    cc.as_ref().is_some_and(|c| !c.coding.is_empty() || c.text.is_some())
}

fn filled(s: &Option<String>) -> bool {
    s.as_deref().is_some_and(|s| !s.trim().is_empty())
}

impl Validator {
    pub fn validate(&self, resources: &[FhirResource], patient: &FhirResource) -> Vec<ValidationIssue> {
        let expected = Reference::patient(patient.id());
        let mut issues = Vec::new();
        for resource in resources {
            let mut report = Report {
                resource_id: resource.id(),
                issues: Vec::new(),
            };
            self.check(resource, &mut report);
            if !matches!(resource, FhirResource::Patient(_)) {
                match resource.subject() {
                    Some(s) if *s == expected => {}
                    Some(s) => report.push(
                        Rule::S1,
                        Severity::Error,
                        format!("subject `{}` is not `{}`", s.reference, expected.reference),
                    ),
                    None => report.push(Rule::S1, Severity::Error, "missing subject"),
                }
            }
            issues.extend(report.issues);
        }
        issues
    }

    fn is_default_time(&self, value: &Option<String>) -> bool {
        self.default_timestamp.is_some() && *value == self.default_timestamp
    }

    fn check(&self, resource: &FhirResource, report: &mut Report<'_>) {
        match resource {
            FhirResource::Patient(_) => {}
            FhirResource::Condition(c) => {
                if let Some(p) = coding_problem(c.code.as_ref(), &[CodeSystem::Snomed, CodeSystem::Icd10]) {
                    report.push(Rule::C1, Severity::Error, p);
                }
                let mut missing = Vec::new();
                if !present(&c.clinical_status) {
                    missing.push("clinicalStatus");
                }
                if !present(&c.verification_status) {
                    missing.push("verificationStatus");
                }
                if !missing.is_empty() {
                    report.push(Rule::C2, Severity::Error, format!("missing {}", missing.join(", ")));
                }
            }
            FhirResource::Observation(o) => {
                if let Some(p) = coding_problem(o.code.as_ref(), &[CodeSystem::Loinc, CodeSystem::Snomed]) {
                    report.push(Rule::O1, Severity::Error, p);
                }
                let mut missing = Vec::new();
                if !filled(&o.value_string) {
                    missing.push("value");
                }
                if !filled(&o.effective_date_time) {
                    missing.push("effectiveDateTime");
                }
                if !missing.is_empty() {
                    report.push(Rule::O2, Severity::Error, format!("missing {}", missing.join(", ")));
                } else if self.is_default_time(&o.effective_date_time) {
                    report.push(Rule::O2, Severity::Warning, "effectiveDateTime defaulted");
                }
            }
            FhirResource::MedicationRequest(m) => {
                if let Some(p) = coding_problem(m.medication_codeable_concept.as_ref(), &[CodeSystem::Rxnorm]) {
                    report.push(Rule::M1, Severity::Error, p);
                }
                if m.dosage_instruction.is_empty() {
                    report.push(Rule::M1, Severity::Error, "no dosageInstruction");
                } else if m
                    .dosage_instruction
                    .iter()
                    .any(|d| d.text == self.placeholder_dosage)
                {
                    report.push(Rule::M1, Severity::Warning, "placeholder dosageInstruction");
                }
                if !filled(&m.authored_on) {
                    report.push(Rule::M2, Severity::Error, "missing authoredOn");
                } else if self.is_default_time(&m.authored_on) {
                    report.push(Rule::M2, Severity::Warning, "authoredOn defaulted");
                }
            }
        }
    }
}

pub fn validate(resources: &[FhirResource], patient: &FhirResource) -> Vec<ValidationIssue> {
    Validator::default().validate(resources, patient)
}
