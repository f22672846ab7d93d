//! Maps codeable mentions onto a single ontology concept.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ner::{split_observation, EntityMention};
use crate::terminology::{Candidate, CodeSystem, EntityType, TerminologyIndex};

/// Score given to a concept reached through an alias.
pub const SYNONYM_SCORE: f64 = 0.9;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NormalizeError {
    #[error("mention {mention_id} is {etype} and carries no coding")]
    TypeMismatch { mention_id: String, etype: EntityType },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedConcept {
    pub system: CodeSystem,
    pub code: String,
    pub display: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedMention {
    #[serde(flatten)]
    pub mention: EntityMention,
    pub concept: Option<NormalizedConcept>,
}

/// Ranks a lookup candidate for a mention. Scores must lie in (0, 1].
pub trait CandidateScorer {
    fn score(&self, mention: &EntityMention, candidate: &Candidate<'_>) -> f64;
}

/// 1.0 for exact surface hits, [`SYNONYM_SCORE`] for alias hits.
#[derive(Debug, Clone, Copy, Default)]
pub struct DictionaryScorer;

impl CandidateScorer for DictionaryScorer {
    fn score(&self, _mention: &EntityMention, candidate: &Candidate<'_>) -> f64 {
        if candidate.via_synonym {
            SYNONYM_SCORE
        } else {
            1.0
        }
    }
}

/// Lookup key for a mention: observation spans lose their trailing value.
pub fn normalization_key(mention: &EntityMention) -> &str {
    match mention.etype {
        EntityType::Observation => split_observation(&mention.text).0,
        _ => mention.text.as_str(),
    }
}

pub fn normalize(
    mention: &EntityMention,
    index: &TerminologyIndex,
) -> Result<Option<NormalizedConcept>, NormalizeError> {
    normalize_with(mention, index, &DictionaryScorer)
}

/// Picks the best compatible candidate: highest score, then the mention
/// type's system preference, then the smallest code.
pub fn normalize_with(
    mention: &EntityMention,
    index: &TerminologyIndex,
    scorer: &impl CandidateScorer,
) -> Result<Option<NormalizedConcept>, NormalizeError> {
    if !mention.etype.is_codeable() {
        return Err(NormalizeError::TypeMismatch {
            mention_id: mention.mention_id.clone(),
            etype: mention.etype,
        });
    }
    let allowed = mention.etype.allowed_systems();
    let best = index
        .candidates(normalization_key(mention), Some(mention.etype))
        .into_iter()
        .filter_map(|c| {
            let rank = allowed.iter().position(|&s| s == c.entry.system)?;
            let score = scorer.score(mention, &c);
            (score > 0.0).then_some((score, rank, c))
        })
        .min_by(|(sa, ra, ca), (sb, rb, cb)| {
            sb.total_cmp(sa)
                .then(ra.cmp(rb))
                .then(ca.entry.code.cmp(&cb.entry.code))
        });
    Ok(best.map(|(score, _, c)| NormalizedConcept {
        system: c.entry.system,
        code: c.entry.code.clone(),
        display: c.entry.display.clone(),
        score: score.min(1.0),
    }))
}

/// Order-preserving; dosage and temporal mentions pass through uncoded.
pub fn normalize_all(mentions: &[EntityMention], index: &TerminologyIndex) -> Vec<AnnotatedMention> {
    mentions
        .iter()
        .map(|m| AnnotatedMention {
            mention: m.clone(),
            concept: if m.etype.is_codeable() {
                normalize(m, index).ok().flatten()
            } else {
                None
            },
        })
        .collect()
}

/// Ablation path: same mentions, no concepts.
pub fn passthrough(mentions: &[EntityMention]) -> Vec<AnnotatedMention> {
    mentions
        .iter()
        .map(|m| AnnotatedMention {
            mention: m.clone(),
            concept: None,
        })
        .collect()
}
