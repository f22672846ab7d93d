//! Named regular-expression rules for dosages, valued observations and
//! temporal expressions.

use std::fs;
use std::path::Path;

use regex::Regex;
use thiserror::Error;

use crate::terminology::{EntityType, TerminologyIndex};

use super::segment::tokenize;

const BUNDLED_PATTERNS: &str = include_str!("../../data/patterns.tsv");

#[derive(Debug, Error)]
pub enum PatternError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected NAME<TAB>ETYPE<TAB>REGEX")]
    MalformedLine { line: usize },
    #[error("line {line}: unknown entity type `{tag}`")]
    UnknownEntityType { line: usize, tag: String },
    #[error("line {line}: pattern `{name}` does not compile: {source}")]
    BadRegex {
        line: usize,
        name: String,
        #[source]
        source: regex::Error,
    },
}

#[derive(Debug, Clone)]
pub struct NamedPattern {
    pub name: String,
    pub etype: EntityType,
    pub regex: Regex,
}

#[derive(Debug, Clone, Default)]
pub struct PatternSet {
    patterns: Vec<NamedPattern>,
}

impl PatternSet {
    pub fn bundled(index: &TerminologyIndex) -> Self {
        Self::parse(BUNDLED_PATTERNS, index).expect("bundled patterns compile")
    }

    pub fn load(path: impl AsRef<Path>, index: &TerminologyIndex) -> Result<Self, PatternError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| PatternError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, index)
    }

    /// Parses `NAME<TAB>ETYPE<TAB>REGEX` lines. `{TERMS:<ETYPE>}` inside a
    /// regex expands to an alternation over the index's surface forms and
    /// aliases of that type; a pattern whose expansion is empty is dropped.
    pub fn parse(text: &str, index: &TerminologyIndex) -> Result<Self, PatternError> {
        let mut patterns = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
                continue;
            }
            let mut parts = raw.splitn(3, '\t');
            let (Some(name), Some(etype), Some(regex)) = (parts.next(), parts.next(), parts.next())
            else {
                return Err(PatternError::MalformedLine { line });
            };
            let etype: EntityType =
                etype
                    .parse()
                    .map_err(|_| PatternError::UnknownEntityType {
                        line,
                        tag: etype.to_string(),
                    })?;
            let Some(expanded) = expand_terms(regex.trim_end_matches('\r'), index) else {
                log::debug!("pattern {name} dropped: no terms to expand");
                continue;
            };
            let regex = Regex::new(&expanded).map_err(|source| PatternError::BadRegex {
                line,
                name: name.to_string(),
                source,
            })?;
            patterns.push(NamedPattern {
                name: name.to_string(),
                etype,
                regex,
            });
        }
        Ok(Self { patterns })
    }

    pub fn iter(&self) -> impl Iterator<Item = &NamedPattern> {
        self.patterns.iter()
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }
}

fn expand_terms(regex: &str, index: &TerminologyIndex) -> Option<String> {
    const OPEN: &str = "{TERMS:";
    let mut out = String::with_capacity(regex.len());
    let mut rest = regex;
    while let Some(pos) = rest.find(OPEN) {
        out.push_str(&rest[..pos]);
        let after = &rest[pos + OPEN.len()..];
        let Some(close) = after.find('}') else {
            out.push_str(&rest[pos..]);
            return Some(out);
        };
        let etype: EntityType = after[..close].parse().ok()?;
        let alternation = term_alternation(index, etype)?;
        out.push_str(&alternation);
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    Some(out)
}

/// Longest terms first so leftmost-first alternation prefers them.
fn term_alternation(index: &TerminologyIndex, etype: EntityType) -> Option<String> {
    let mut terms: Vec<&str> = index
        .entries()
        .filter(|e| e.entity_type == etype)
        .map(|e| e.surface_form.as_str())
        .chain(
            index
                .synonyms()
                .filter(|(_, canonical)| index.entity_types(canonical).contains(&etype))
                .map(|(alias, _)| alias),
        )
        .collect();
    terms.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
    terms.dedup();
    if terms.is_empty() {
        return None;
    }
    let parts: Vec<String> = terms
        .iter()
        .map(|t| {
            let toks = tokenize(t);
            toks.iter()
                .map(|tok| regex::escape(&t[tok.start..tok.end]))
                .collect::<Vec<_>>()
                .join(r"[\s\-]+")
        })
        .filter(|p| !p.is_empty())
        .collect();
    Some(parts.join("|"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_set_compiles() {
        let index = TerminologyIndex::bundled();
        let set = PatternSet::bundled(&index);
        assert!(set.iter().any(|p| p.etype == EntityType::Dosage));
        assert!(set.iter().any(|p| p.name == "observation_value"));
    }

    #[test]
    fn terms_placeholder_dropped_without_terms() {
        let set = PatternSet::parse(
            "obs\tOBSERVATION\t\\b(?:{TERMS:OBSERVATION}) \\d+\nd\tDOSAGE\t\\d+mg\n",
            &TerminologyIndex::new(),
        )
        .unwrap();
        assert_eq!(set.len(), 1);
    }

    #[test]
    fn malformed_lines_are_reported() {
        let index = TerminologyIndex::new();
        assert!(matches!(
            PatternSet::parse("only\tTWO", &index),
            Err(PatternError::MalformedLine { line: 1 })
        ));
        assert!(matches!(
            PatternSet::parse("x\tVITAL\t\\d", &index),
            Err(PatternError::UnknownEntityType { .. })
        ));
        assert!(matches!(
            PatternSet::parse("x\tDOSAGE\t(", &index),
            Err(PatternError::BadRegex { .. })
        ));
    }

    #[test]
    fn dose_pattern_matches_frequencies() {
        let index = TerminologyIndex::bundled();
        let set = PatternSet::bundled(&index);
        let dose = set.iter().find(|p| p.name == "dose_frequency").unwrap();
        for (text, want) in [
            ("500mg twice daily.", "500mg twice daily"),
            ("10mg daily", "10mg daily"),
            ("81 mg daily and", "81 mg daily"),
            ("5 mg b.i.d.", "5 mg b.i.d"),
            ("20 units nightly", "20 units nightly"),
            ("40mg.", "40mg"),
        ] {
            assert_eq!(dose.regex.find(text).map(|m| m.as_str()), Some(want), "{text}");
        }
    }
}
