//! Entity extraction: dictionary phrase matching plus regex rules, resolved
//! into a non-overlapping, sentence-contained mention list.

pub mod patterns;
pub mod segment;

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::terminology::{EntityType, TerminologyIndex};

pub use patterns::{NamedPattern, PatternError, PatternSet};
pub use segment::{segment, tokenize, Sentence, Token};

/// Longest dictionary phrase, in tokens, that the matcher tries.
pub const DEFAULT_MAX_NGRAM: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClinicalNote {
    pub note_id: String,
    pub patient_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    pub text: String,
}

impl ClinicalNote {
    pub fn new(note_id: impl Into<String>, patient_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            note_id: note_id.into(),
            patient_id: patient_id.into(),
            timestamp: None,
            text: text.into(),
        }
    }

    pub fn with_timestamp(mut self, timestamp: impl Into<String>) -> Self {
        self.timestamp = Some(timestamp.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    pub mention_id: String,
    pub note_id: String,
    pub start: usize,
    pub end: usize,
    pub text: String,
    pub etype: EntityType,
    pub sentence_index: usize,
}

impl EntityMention {
    pub fn span(&self) -> (usize, usize) {
        (self.start, self.end)
    }

    pub fn overlaps(&self, other: &EntityMention) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// Splits an observation span into its name and its inline value.
///
/// The value starts at the first digit that begins a token ("SpO2 98%"
/// keeps "SpO2" whole). Separators between the two halves are dropped.
pub fn split_observation(text: &str) -> (&str, Option<&str>) {
    let mut prev: Option<char> = None;
    for (i, c) in text.char_indices() {
        if c.is_ascii_digit() && !prev.is_some_and(char::is_alphanumeric) {
            let name = text[..i].trim_end_matches(|c: char| !c.is_alphanumeric());
            let value = text[i..].trim();
            return (name, (!value.is_empty()).then_some(value));
        }
        prev = Some(c);
    }
    (text.trim(), None)
}

/// Phrase table derived from a terminology index, keyed by [`segment::token_key`].
#[derive(Debug, Clone, Default)]
pub struct DictionaryMatcher {
    phrases: HashMap<String, BTreeSet<EntityType>>,
    max_ngram: usize,
}

impl DictionaryMatcher {
    pub fn new(index: &TerminologyIndex) -> Self {
        Self::with_max_ngram(index, DEFAULT_MAX_NGRAM)
    }

    pub fn with_max_ngram(index: &TerminologyIndex, max_ngram: usize) -> Self {
        let mut phrases: HashMap<String, BTreeSet<EntityType>> = HashMap::new();
        let surfaces = index
            .surface_forms()
            .chain(index.synonyms().map(|(alias, _)| alias));
        for surface in surfaces {
            let types = index.entity_types(surface);
            let key = segment::token_key(surface);
            if key.is_empty() || types.is_empty() {
                continue;
            }
            phrases.entry(key).or_default().extend(types);
        }
        Self {
            phrases,
            max_ngram: max_ngram.max(1),
        }
    }

    fn lookup(&self, key: &str) -> Option<&BTreeSet<EntityType>> {
        self.phrases.get(key)
    }
}

/// Everything `extract_entities` needs, built once per terminology.
#[derive(Debug, Clone)]
pub struct Extractor {
    matcher: DictionaryMatcher,
    patterns: PatternSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Candidate {
    start: usize,
    end: usize,
    etype: EntityType,
    sentence: usize,
}

impl Extractor {
    pub fn new(index: &TerminologyIndex, patterns: PatternSet) -> Self {
        Self {
            matcher: DictionaryMatcher::new(index),
            patterns,
        }
    }

    pub fn with_matcher(matcher: DictionaryMatcher, patterns: PatternSet) -> Self {
        Self { matcher, patterns }
    }

    pub fn extract(&self, note: &ClinicalNote) -> Vec<EntityMention> {
        self.extract_with_sentences(note, &segment(&note.text))
    }

    pub fn extract_with_sentences(
        &self,
        note: &ClinicalNote,
        sentences: &[Sentence],
    ) -> Vec<EntityMention> {
        let mut candidates = Vec::new();
        for sentence in sentences {
            self.dictionary_hits(&note.text, sentence, &mut candidates);
            self.pattern_hits(&note.text, sentence, &mut candidates);
        }
        resolve_overlaps(candidates)
            .into_iter()
            .enumerate()
            .map(|(i, c)| EntityMention {
                mention_id: format!("{}:m{}", note.note_id, i),
                note_id: note.note_id.clone(),
                start: c.start,
                end: c.end,
                text: note.text[c.start..c.end].to_string(),
                etype: c.etype,
                sentence_index: c.sentence,
            })
            .collect()
    }

    fn dictionary_hits(&self, text: &str, sentence: &Sentence, out: &mut Vec<Candidate>) {
        let slice = &text[sentence.start..sentence.end];
        let tokens = tokenize(slice);
        let lowered: Vec<String> = tokens
            .iter()
            .map(|t| slice[t.start..t.end].to_lowercase())
            .collect();
        for i in 0..tokens.len() {
            let mut key = String::new();
            for n in 1..=self.matcher.max_ngram.min(tokens.len() - i) {
                if n > 1 {
                    key.push(' ');
                }
                key.push_str(&lowered[i + n - 1]);
                if let Some(types) = self.matcher.lookup(&key) {
                    for &etype in types {
                        out.push(Candidate {
                            start: sentence.start + tokens[i].start,
                            end: sentence.start + tokens[i + n - 1].end,
                            etype,
                            sentence: sentence.index,
                        });
                    }
                }
            }
        }
    }

    fn pattern_hits(&self, text: &str, sentence: &Sentence, out: &mut Vec<Candidate>) {
        let slice = &text[sentence.start..sentence.end];
        for pattern in self.patterns.iter() {
            for m in pattern.regex.find_iter(slice) {
                if m.as_str().trim().is_empty() {
                    continue;
                }
                out.push(Candidate {
                    start: sentence.start + m.start(),
                    end: sentence.start + m.end(),
                    etype: pattern.etype,
                    sentence: sentence.index,
                });
            }
        }
    }
}

/// Greedy selection: longer spans first, then leftmost, then entity-type
/// priority. Survivors come back ordered by start offset.
fn resolve_overlaps(mut candidates: Vec<Candidate>) -> Vec<Candidate> {
    candidates.sort_by(|a, b| {
        (b.end - b.start)
            .cmp(&(a.end - a.start))
            .then(a.start.cmp(&b.start))
            .then(a.etype.cmp(&b.etype))
    });
    candidates.dedup();
    let mut kept: Vec<Candidate> = Vec::new();
    for c in candidates {
        if kept.iter().all(|k| c.end <= k.start || k.end <= c.start) {
            kept.push(c);
        }
    }
    kept.sort_by_key(|c| (c.start, c.end));
    kept
}

/// Convenience wrapper building a one-off [`Extractor`].
pub fn extract_entities(
    note: &ClinicalNote,
    index: &TerminologyIndex,
    patterns: &PatternSet,
) -> Vec<EntityMention> {
    Extractor::new(index, patterns.clone()).extract(note)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundled() -> Extractor {
        let index = TerminologyIndex::bundled();
        let patterns = PatternSet::bundled(&index);
        Extractor::new(&index, patterns)
    }

    fn kinds(mentions: &[EntityMention]) -> Vec<(&str, EntityType)> {
        mentions.iter().map(|m| (m.text.as_str(), m.etype)).collect()
    }

    #[test]
    fn figure_one_note() {
        let note = ClinicalNote::new("n1", "p1", "Patient has diabetes. Started Metformin 500mg twice daily.");
        let mentions = bundled().extract(&note);
        assert_eq!(
            kinds(&mentions),
            vec![
                ("diabetes", EntityType::Condition),
                ("Metformin", EntityType::Medication),
                ("500mg twice daily", EntityType::Dosage),
            ]
        );
        assert_eq!(mentions[0].sentence_index, 0);
        assert_eq!(mentions[2].sentence_index, 1);
    }

    #[test]
    fn case_study_note() {
        let note = ClinicalNote::new(
            "n2",
            "p2",
            "65-year-old male with history of hypertension and type 2 diabetes. BP 145/92. Started Lisinopril 10mg daily.",
        );
        let mentions = bundled().extract(&note);
        assert_eq!(
            kinds(&mentions),
            vec![
                ("hypertension", EntityType::Condition),
                ("type 2 diabetes", EntityType::Condition),
                ("BP 145/92", EntityType::Observation),
                ("Lisinopril", EntityType::Medication),
                ("10mg daily", EntityType::Dosage),
            ]
        );
        for m in &mentions {
            assert_eq!(&note.text[m.start..m.end], m.text);
        }
    }

    #[test]
    fn no_clinical_content() {
        let note = ClinicalNote::new("n3", "p3", "The weather is nice");
        assert!(bundled().extract(&note).is_empty());
    }

    #[test]
    fn ids_are_positional() {
        let note = ClinicalNote::new("abc", "p", "HTN and asthma.");
        let ids: Vec<_> = bundled().extract(&note).into_iter().map(|m| m.mention_id).collect();
        assert_eq!(ids, vec!["abc:m0", "abc:m1"]);
    }

    #[test]
    fn overlap_ties_prefer_condition() {
        let mut index = TerminologyIndex::parse_dictionary(
            "cold,SNOMED,1,Common cold,CONDITION\ncold,LOINC,2,Cold exposure,OBSERVATION\n",
            None,
        )
        .unwrap();
        index.add_synonym("chill", "cold");
        let ex = Extractor::new(&index, PatternSet::default());
        let m = ex.extract(&ClinicalNote::new("n", "p", "A cold and a chill."));
        assert_eq!(
            kinds(&m),
            vec![("cold", EntityType::Condition), ("chill", EntityType::Condition)]
        );
    }

    #[test]
    fn separated_observation_value() {
        let note = ClinicalNote::new("n", "p", "Glucose was 180 mg/dL today.");
        let m = bundled().extract(&note);
        assert_eq!(
            kinds(&m),
            vec![
                ("Glucose", EntityType::Observation),
                ("180 mg/dL", EntityType::Observation),
                ("today", EntityType::Temporal),
            ]
        );
    }

    #[test]
    fn splits_observation_text() {
        assert_eq!(split_observation("BP 145/92"), ("BP", Some("145/92")));
        assert_eq!(split_observation("SpO2 98%"), ("SpO2", Some("98%")));
        assert_eq!(split_observation("BP: 120/80"), ("BP", Some("120/80")));
        assert_eq!(
            split_observation("hemoglobin A1c 7.2 %"),
            ("hemoglobin A1c", Some("7.2 %"))
        );
        assert_eq!(split_observation("glucose"), ("glucose", None));
        assert_eq!(split_observation("180 mg/dL"), ("", Some("180 mg/dL")));
    }
}
