//! Scoring against gold annotations and reference bundles.
//!
//! * NER and relation F1 are micro-averaged over the corpus with exact
//!   span (and type) matching.
//! * Semantic completeness and the interoperability score compare a
//!   generated twin with a reference twin field by field and are averaged
//!   over patients.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{self, ExecMode};
use crate::fhir::{self, FhirResource, TwinBundle};
use crate::ner::ClinicalNote;
use crate::pipeline::{NoteAnalysis, Pipeline};
use crate::relations::RelationType;
use crate::synthesizer::SyntheticCase;
use crate::terminology::{CodeSystem, EntityType};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvaluationError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("bundles describe different patients ({generated:?} vs {reference:?})")]
    PatientMismatch {
        generated: Option<String>,
        reference: Option<String>,
    },
    #[error(transparent)]
    Assembly(#[from] fhir::AssemblyError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldMention {
    pub start: usize,
    pub end: usize,
    pub etype: EntityType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<CodeSystem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldRelation {
    pub rtype: RelationType,
    pub head: (usize, usize),
    pub tail: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldAnnotations {
    pub note_id: String,
    pub mentions: Vec<GoldMention>,
    pub relations: Vec<GoldRelation>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SpanKey {
    pub note_id: String,
    pub start: usize,
    pub end: usize,
    pub etype: EntityType,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RelationKey {
    pub note_id: String,
    pub rtype: RelationType,
    pub head: (usize, usize),
    pub tail: (usize, usize),
}

/// Matching counts. Addition is associative and commutative, so per-note
/// counts can be reduced in any order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl std::ops::Add for Counts {
    type Output = Counts;

    fn add(self, o: Counts) -> Counts {
        Counts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

impl std::iter::Sum for Counts {
    fn sum<I: Iterator<Item = Counts>>(iter: I) -> Counts {
        iter.fold(Counts::default(), |a, b| a + b)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Counts {
    /// Zero denominators give zero.
    pub fn prf(self) -> Prf {
        let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            precision,
            recall,
            f1,
        }
    }
}

/// Multiset matching: each gold item pairs with at most one prediction.
pub fn match_counts<K: Ord>(predicted: &[K], gold: &[K]) -> Counts {
    let mut remaining: BTreeMap<&K, usize> = BTreeMap::new();
    for g in gold {
        *remaining.entry(g).or_default() += 1;
    }
    let mut tp = 0;
    for p in predicted {
        if let Some(n) = remaining.get_mut(p) {
            if *n > 0 {
                *n -= 1;
                tp += 1;
            }
        }
    }
    Counts {
        tp,
        fp: predicted.len() - tp,
        fn_: gold.len() - tp,
    }
}

pub fn ner_f1(predicted: &[SpanKey], gold: &[SpanKey]) -> Prf {
    match_counts(predicted, gold).prf()
}

pub fn relation_f1(predicted: &[RelationKey], gold: &[RelationKey]) -> Prf {
    match_counts(predicted, gold).prf()
}

fn check_same_patient(generated: &TwinBundle, reference: &TwinBundle) -> Result<(), EvaluationError> {
    let g = generated.patient_identifier();
    let r = reference.patient_identifier();
    if g != r {
        return Err(EvaluationError::PatientMismatch {
            generated: g.map(str::to_string),
            reference: r.map(str::to_string),
        });
    }
    Ok(())
}

/// Pairs (generated index, reference index). Each reference resource, in
/// bundle order, takes the first unmatched generated resource with the same
/// type and primary coding.
pub fn match_resources(generated: &[&FhirResource], reference: &[&FhirResource]) -> Vec<(usize, usize)> {
    let mut used = vec![false; generated.len()];
    let mut pairs = Vec::new();
    for (ri, r) in reference.iter().enumerate() {
        let Some(code) = r.primary_code() else { continue };
        let hit = generated.iter().enumerate().position(|(gi, g)| {
            !used[gi] && g.resource_type() == r.resource_type() && g.primary_code().as_deref() == Some(code.as_str())
        });
        if let Some(gi) = hit {
            used[gi] = true;
            pairs.push((gi, ri));
        }
    }
    pairs
}

/// Number of reference fields the generated resource reproduces, and the
/// number of required fields on the reference.
fn field_agreement(generated: &FhirResource, reference: &FhirResource) -> (usize, usize) {
    let g = generated.required_fields();
    let r = reference.required_fields();
    let equal = r
        .iter()
        .filter(|(name, value)| {
            value.is_some() && g.iter().any(|(gn, gv)| gn == name && gv == value)
        })
        .count();
    (equal, r.len())
}

/// Correctly populated required fields over all required reference fields.
/// With no clinical reference resources the score is 1 if the generated twin
/// is also empty and 0 otherwise.
pub fn semantic_completeness(generated: &TwinBundle, reference: &TwinBundle) -> Result<f64, EvaluationError> {
    check_same_patient(generated, reference)?;
    let gen: Vec<&FhirResource> = generated.clinical_resources().collect();
    let refs: Vec<&FhirResource> = reference.clinical_resources().collect();
    let denominator: usize = refs.iter().map(|r| r.required_fields().len()).sum();
    if denominator == 0 {
        return Ok(if gen.is_empty() { 1.0 } else { 0.0 });
    }
    let numerator: usize = match_resources(&gen, &refs)
        .into_iter()
        .map(|(gi, ri)| field_agreement(gen[gi], refs[ri]).0)
        .sum();
    Ok(numerator as f64 / denominator as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteropWeights {
    pub structural: f64,
    pub semantic: f64,
}

impl Default for InteropWeights {
    fn default() -> Self {
        Self {
            structural: 0.5,
            semantic: 0.5,
        }
    }
}

pub fn interoperability_score(generated: &TwinBundle, reference: &TwinBundle) -> Result<f64, EvaluationError> {
    interoperability_score_weighted(generated, reference, InteropWeights::default())
}

/// `structural * F1(resource matching) + semantic * mean field agreement`.
pub fn interoperability_score_weighted(
    generated: &TwinBundle,
    reference: &TwinBundle,
    weights: InteropWeights,
) -> Result<f64, EvaluationError> {
    check_same_patient(generated, reference)?;
    let gen: Vec<&FhirResource> = generated.clinical_resources().collect();
    let refs: Vec<&FhirResource> = reference.clinical_resources().collect();
    match (gen.is_empty(), refs.is_empty()) {
        (true, true) => return Ok(1.0),
        (true, false) | (false, true) => return Ok(0.0),
        _ => {}
    }
    let pairs = match_resources(&gen, &refs);
    let matched = pairs.len();
    let structural = Counts {
        tp: matched,
        fp: gen.len() - matched,
        fn_: refs.len() - matched,
    }
    .prf()
    .f1;
    let semantic = if matched == 0 {
        0.0
    } else {
        pairs
            .iter()
            .map(|&(gi, ri)| {
                let (eq, total) = field_agreement(gen[gi], refs[ri]);
                if total == 0 {
                    1.0
                } else {
                    eq as f64 / total as f64
                }
            })
            .sum::<f64>()
            / matched as f64
    };
    Ok(weights.structural * structural + weights.semantic * semantic)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteScores {
    pub note_id: String,
    pub patient_id: String,
    pub ner: Prf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub re: Option<Prf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientScores {
    pub patient_id: String,
    pub semantic_completeness: f64,
    pub interoperability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub configuration: String,
    pub notes: usize,
    pub patients: usize,
    pub ner_precision: f64,
    pub ner_recall: f64,
    pub ner_f1: f64,
    pub re_precision: Option<f64>,
    pub re_recall: Option<f64>,
    pub re_f1: Option<f64>,
    pub semantic_completeness: f64,
    pub interoperability: f64,
    pub per_note: Vec<NoteScores>,
    pub per_patient: Vec<PatientScores>,
}

impl EvaluationReport {
    pub const SUMMARY_HEADER: &'static str = "Method\tNER\tRE\tComp.\tInterop.";

    /// One tab-separated row in the column order NER, RE, Comp., Interop.
    pub fn summary_row(&self) -> String {
        let re = self
            .re_f1
            .map_or_else(|| "--".to_string(), |f| format!("{f:.4}"));
        format!(
            "{}\t{:.4}\t{}\t{:.2}%\t{:.4}",
            self.configuration,
            self.ner_f1,
            re,
            self.semantic_completeness * 100.0,
            self.interoperability
        )
    }
}

pub fn gold_span_keys(gold: &GoldAnnotations) -> Vec<SpanKey> {
    gold.mentions
        .iter()
        .map(|m| SpanKey {
            note_id: gold.note_id.clone(),
            start: m.start,
            end: m.end,
            etype: m.etype,
        })
        .collect()
}

pub fn gold_relation_keys(gold: &GoldAnnotations) -> Vec<RelationKey> {
    gold.relations
        .iter()
        .map(|r| RelationKey {
            note_id: gold.note_id.clone(),
            rtype: r.rtype,
            head: r.head,
            tail: r.tail,
        })
        .collect()
}

pub fn predicted_span_keys(analysis: &NoteAnalysis) -> Vec<SpanKey> {
    analysis
        .mentions
        .iter()
        .map(|a| SpanKey {
            note_id: analysis.note_id.clone(),
            start: a.mention.start,
            end: a.mention.end,
            etype: a.mention.etype,
        })
        .collect()
}

pub fn predicted_relation_keys(analysis: &NoteAnalysis) -> Vec<RelationKey> {
    analysis
        .relations
        .iter()
        .map(|r| RelationKey {
            note_id: analysis.note_id.clone(),
            rtype: r.rtype,
            head: r.head_span,
            tail: r.tail_span,
        })
        .collect()
}

/// Merges several reference bundles for one patient into one.
pub fn merge_references(bundles: &[&TwinBundle]) -> Option<TwinBundle> {
    let first = bundles.first()?;
    let patient = first.resources().find(|r| matches!(r, FhirResource::Patient(_)))?.clone();
    let mut seen = HashSet::new();
    let resources: Vec<FhirResource> = bundles
        .iter()
        .flat_map(|b| b.clinical_resources())
        .filter(|r| seen.insert(r.id().to_string()))
        .cloned()
        .collect();
    Some(fhir::bundle(&patient, &resources, &[]))
}

/// Runs the pipeline over every case and aggregates the four metrics.
pub fn evaluate_corpus(
    cases: &[SyntheticCase],
    pipeline: &Pipeline,
    mode: ExecMode,
) -> Result<EvaluationReport, EvaluationError> {
    if cases.is_empty() {
        return Err(EvaluationError::EmptyCorpus);
    }
    let ablation = pipeline.ablation();
    let notes: Vec<ClinicalNote> = cases.iter().map(|c| c.note.clone()).collect();
    let analyses = pipeline.analyze_all(&notes, mode);

    let mut ner_counts = Counts::default();
    let mut re_counts = Counts::default();
    let mut per_note = Vec::with_capacity(cases.len());
    for (case, analysis) in cases.iter().zip(&analyses) {
        let ner = match_counts(&predicted_span_keys(analysis), &gold_span_keys(&case.gold));
        let re = match_counts(&predicted_relation_keys(analysis), &gold_relation_keys(&case.gold));
        ner_counts = ner_counts + ner;
        re_counts = re_counts + re;
        per_note.push(NoteScores {
            note_id: case.note.note_id.clone(),
            patient_id: case.note.patient_id.clone(),
            ner: ner.prf(),
            re: ablation.relates().then(|| re.prf()),
        });
    }

    let mut by_patient: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, case) in cases.iter().enumerate() {
        by_patient.entry(case.note.patient_id.as_str()).or_default().push(i);
    }
    let groups: Vec<(&str, Vec<usize>)> = by_patient.into_iter().collect();
    let scored = exec::map(mode, &groups, |(pid, idx)| -> Result<PatientScores, EvaluationError> {
        let pairs: Vec<_> = idx.iter().map(|&i| (&cases[i].note, &analyses[i])).collect();
        let generated = pipeline.twin_from_analyses(pid, &pairs)?.bundle;
        let refs: Vec<&TwinBundle> = idx.iter().map(|&i| &cases[i].reference).collect();
        let reference = merge_references(&refs).ok_or(EvaluationError::PatientMismatch {
            generated: Some(pid.to_string()),
            reference: None,
        })?;
        Ok(PatientScores {
            patient_id: pid.to_string(),
            semantic_completeness: semantic_completeness(&generated, &reference)?,
            interoperability: interoperability_score(&generated, &reference)?,
        })
    });
    let per_patient = scored.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mean = |f: fn(&PatientScores) -> f64| per_patient.iter().map(f).sum::<f64>() / per_patient.len() as f64;

    let ner = ner_counts.prf();
    let re = ablation.relates().then(|| re_counts.prf());
    Ok(EvaluationReport {
        configuration: ablation.label(),
        notes: cases.len(),
        patients: per_patient.len(),
        ner_precision: ner.precision,
        ner_recall: ner.recall,
        ner_f1: ner.f1,
        re_precision: re.map(|p| p.precision),
        re_recall: re.map(|p| p.recall),
        re_f1: re.map(|p| p.f1),
        semantic_completeness: mean(|p| p.semantic_completeness),
        interoperability: mean(|p| p.interoperability),
        per_note,
        per_patient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fhir::{build_patient, bundle, CodeableConcept, Coding, Condition, Reference};

    fn key(start: usize, etype: EntityType) -> SpanKey {
        SpanKey {
            note_id: "n".into(),
            start,
            end: start + 3,
            etype,
        }
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn ner_identity_and_empty() {
        let gold = vec![key(0, EntityType::Condition), key(5, EntityType::Dosage)];
        assert_eq!(ner_f1(&gold, &gold), Prf { precision: 1.0, recall: 1.0, f1: 1.0 });
        assert_eq!(ner_f1(&[], &gold), Prf::default());
        assert_eq!(ner_f1(&[], &[]), Prf::default());
    }

    #[test]
    fn ner_two_of_three() {
        let a = key(0, EntityType::Condition);
        let b = key(10, EntityType::Medication);
        let c = key(20, EntityType::Dosage);
        let d = key(30, EntityType::Dosage);
        let p = ner_f1(&[a.clone(), b.clone(), d], &[a, b, c]);
        assert!(close(p.precision, 2.0 / 3.0) && close(p.recall, 2.0 / 3.0) && close(p.f1, 2.0 / 3.0));
    }

    #[test]
    fn type_mismatch_is_not_a_hit() {
        let p = ner_f1(&[key(0, EntityType::Observation)], &[key(0, EntityType::Condition)]);
        assert_eq!(p.f1, 0.0);
    }

    #[test]
    fn relation_spurious_prediction() {
        let r = |s: usize| RelationKey {
            note_id: "n".into(),
            rtype: RelationType::HasDosage,
            head: (s, s + 1),
            tail: (s + 2, s + 3),
        };
        let p = relation_f1(&[r(0), r(10), r(20)], &[r(0), r(10)]);
        assert!(close(p.precision, 2.0 / 3.0) && close(p.recall, 1.0) && close(p.f1, 0.8));
        assert_eq!(relation_f1(&[r(0)], &[r(5)]), Prf::default());
    }

    fn condition(patient: &FhirResource, code: &str, verification: &str) -> FhirResource {
        let mut vs = Condition::default_verification_status();
        vs.coding[0].code = verification.into();
        FhirResource::Condition(Condition {
            id: format!("c-{code}-{verification}"),
            clinical_status: Some(Condition::default_clinical_status()),
            verification_status: Some(vs),
            code: Some(CodeableConcept::coded(Coding::new(CodeSystem::Snomed, code, "x"))),
            subject: Some(Reference::patient(patient.id())),
        })
    }

    #[test]
    fn completeness_three_of_four() {
        let p = build_patient("p1").unwrap();
        let reference = bundle(&p, &[condition(&p, "1", "confirmed")], &[]);
        let generated = bundle(&p, &[condition(&p, "1", "provisional")], &[]);
        assert!(close(semantic_completeness(&generated, &reference).unwrap(), 0.75));
        assert!(close(semantic_completeness(&reference, &reference).unwrap(), 1.0));
        let empty = bundle(&p, &[], &[]);
        assert_eq!(semantic_completeness(&empty, &reference).unwrap(), 0.0);
    }

    #[test]
    fn interop_partial_match() {
        let p = build_patient("p1").unwrap();
        let a = condition(&p, "1", "confirmed");
        let b = condition(&p, "2", "confirmed");
        let reference = bundle(&p, &[a.clone(), b], &[]);
        let generated = bundle(&p, &[a], &[]);
        assert!(close(interoperability_score(&generated, &reference).unwrap(), 5.0 / 6.0));
        assert!(close(interoperability_score(&reference, &reference).unwrap(), 1.0));
        let empty = bundle(&p, &[], &[]);
        assert_eq!(interoperability_score(&empty, &reference).unwrap(), 0.0);
        assert_eq!(interoperability_score(&empty, &empty).unwrap(), 1.0);
    }

    #[test]
    fn patient_mismatch() {
        let p1 = build_patient("p1").unwrap();
        let p2 = build_patient("p2").unwrap();
        let err = semantic_completeness(&bundle(&p1, &[], &[]), &bundle(&p2, &[], &[])).unwrap_err();
        assert!(matches!(err, EvaluationError::PatientMismatch { .. }));
        assert!(interoperability_score(&bundle(&p1, &[], &[]), &bundle(&p2, &[], &[])).is_err());
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let err = evaluate_corpus(&[], &Pipeline::bundled(), ExecMode::Sequential).unwrap_err();
        assert_eq!(err, EvaluationError::EmptyCorpus);
    }

    #[test]
    fn summary_row_uses_dash_without_relations() {
        let report = EvaluationReport {
            configuration: "no-relations".into(),
            notes: 1,
            patients: 1,
            ner_precision: 1.0,
            ner_recall: 1.0,
            ner_f1: 1.0,
            re_precision: None,
            re_recall: None,
            re_f1: None,
            semantic_completeness: 0.5,
            interoperability: 0.75,
            per_note: vec![],
            per_patient: vec![],
        };
        assert_eq!(report.summary_row(), "no-relations\t1.0000\t--\t50.00%\t0.7500");
    }
}
