//! Sentence-scoped proximity rules linking mentions.
//!
//! * has-dosage: a dosage attaches to the nearest medication before it.
//! * has-result: an observation name followed by a separate value segment
//!   ("Glucose was 180 mg/dL"). Spans that already carry their value inline
//!   ("BP 145/92") need no relation.
//! * symptom-of: a finding or condition, a cue phrase, then a condition.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ner::{split_observation, EntityMention, Sentence};
use crate::normalizer::AnnotatedMention;
use crate::terminology::{normalize_surface, EntityType};

const BUNDLED_CUES: &str = include_str!("../data/cues.txt");

/// Words allowed between an observation name and its value segment.
const RESULT_LINKERS: &[&str] = &["was", "is", "were", "of", "at", "measured", "level", "reading"];
const MAX_LINKER_WORDS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RelationType {
    SymptomOf,
    HasDosage,
    HasResult,
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RelationType::SymptomOf => "symptom-of",
            RelationType::HasDosage => "has-dosage",
            RelationType::HasResult => "has-result",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Relation {
    pub rtype: RelationType,
    pub head: String,
    pub tail: String,
    pub head_span: (usize, usize),
    pub tail_span: (usize, usize),
}

impl Relation {
    fn between(rtype: RelationType, head: &EntityMention, tail: &EntityMention) -> Self {
        Self {
            rtype,
            head: head.mention_id.clone(),
            tail: tail.mention_id.clone(),
            head_span: head.span(),
            tail_span: tail.span(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CueList {
    phrases: Vec<String>,
}

impl Default for CueList {
    fn default() -> Self {
        Self::parse(BUNDLED_CUES)
    }
}

impl CueList {
    pub fn parse(text: &str) -> Self {
        let mut phrases: Vec<String> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(normalize_surface)
            .collect();
        phrases.sort();
        phrases.dedup();
        Self { phrases }
    }

    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Self> {
        Ok(Self::parse(&fs::read_to_string(path)?))
    }

    /// True when the normalized gap ends with a cue phrase on a word boundary.
    fn matches_gap(&self, gap: &str) -> bool {
        let gap = normalize_surface(gap.trim_matches(|c: char| !c.is_alphanumeric()));
        self.phrases.iter().any(|p| {
            gap == *p
                || gap
                    .strip_suffix(p.as_str())
                    .is_some_and(|rest| rest.ends_with(' '))
        })
    }
}

fn is_value_segment(m: &EntityMention) -> bool {
    m.etype == EntityType::Observation && split_observation(&m.text).0.is_empty()
}

fn is_bare_observation(m: &EntityMention) -> bool {
    if m.etype != EntityType::Observation {
        return false;
    }
    let (name, value) = split_observation(&m.text);
    !name.is_empty() && value.is_none()
}

fn is_result_linker(gap: &str) -> bool {
    let words: Vec<&str> = gap
        .split(|c: char| c.is_whitespace() || c == ':' || c == '=' || c == ',')
        .filter(|w| !w.is_empty())
        .collect();
    words.len() <= MAX_LINKER_WORDS
        && words
            .iter()
            .all(|w| RESULT_LINKERS.contains(&w.to_lowercase().as_str()))
}

pub fn extract_relations(
    mentions: &[AnnotatedMention],
    sentences: &[Sentence],
    text: &str,
    cues: &CueList,
) -> Vec<Relation> {
    let mut out = Vec::new();
    for sentence in sentences {
        let mut local: Vec<&EntityMention> = mentions
            .iter()
            .map(|a| &a.mention)
            .filter(|m| m.sentence_index == sentence.index)
            .collect();
        local.sort_by_key(|m| (m.start, m.end));

        for (i, m) in local.iter().enumerate() {
            match m.etype {
                EntityType::Dosage => {
                    if let Some(med) = local[..i]
                        .iter()
                        .rev()
                        .find(|p| p.etype == EntityType::Medication)
                    {
                        out.push(Relation::between(RelationType::HasDosage, med, m));
                    }
                }
                EntityType::Observation | EntityType::Condition => {
                    let Some(next) = local.get(i + 1) else { continue };
                    let gap = &text[m.end..next.start];
                    if is_bare_observation(m) && is_value_segment(next) && is_result_linker(gap) {
                        out.push(Relation::between(RelationType::HasResult, m, next));
                    }
                    let head_ok = m.etype == EntityType::Condition
                        || (m.etype == EntityType::Observation && !is_value_segment(m));
                    if head_ok && next.etype == EntityType::Condition && cues.matches_gap(gap) {
                        out.push(Relation::between(RelationType::SymptomOf, m, next));
                    }
                }
                _ => {}
            }
        }
    }
    let sentence_of = |r: &Relation| {
        mentions
            .iter()
            .find(|a| a.mention.mention_id == r.head)
            .map_or(0, |a| a.mention.sentence_index)
    };
    out.sort_by(|a, b| {
        (sentence_of(a), a.head_span.0, a.rtype, a.tail_span.0)
            .cmp(&(sentence_of(b), b.head_span.0, b.rtype, b.tail_span.0))
    });
    out.dedup();
    out
}
