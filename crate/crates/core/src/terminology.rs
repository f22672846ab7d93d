//! Controlled-vocabulary dictionaries and surface-form lookup.
//!
//! A [`TerminologyIndex`] maps normalized surface forms to one or more
//! [`ConceptEntry`] rows drawn from SNOMED CT, ICD-10, LOINC and RxNorm
//! subsets, plus a flat alias table. The index is immutable once built and
//! can be shared across worker threads.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const BUNDLED_DICTIONARY: &str = include_str!("../data/terminology.csv");
const BUNDLED_SYNONYMS: &str = include_str!("../data/synonyms.csv");

#[derive(Debug, Error)]
pub enum TerminologyError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected {expected} columns, found {found}")]
    MalformedRow {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: unknown code system `{tag}`")]
    UnknownSystem { line: usize, tag: String },
    #[error("line {line}: unknown entity type `{tag}`")]
    UnknownEntityType { line: usize, tag: String },
    #[error("line {line}: empty {field}")]
    EmptyField { line: usize, field: &'static str },
    #[error("line {line}: row uses {found} but the file is declared as {expected}")]
    SystemMismatch {
        line: usize,
        expected: CodeSystem,
        found: CodeSystem,
    },
}

/// The four controlled vocabularies a twin may cite.
///
/// Variant order is the lookup precedence (SNOMED < ICD10 < LOINC < RXNORM).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CodeSystem {
    Snomed,
    Icd10,
    Loinc,
    Rxnorm,
}

impl CodeSystem {
    pub const ALL: [CodeSystem; 4] = [
        CodeSystem::Snomed,
        CodeSystem::Icd10,
        CodeSystem::Loinc,
        CodeSystem::Rxnorm,
    ];

    pub fn uri(self) -> &'static str {
        match self {
            CodeSystem::Snomed => "http://snomed.info/sct",
            CodeSystem::Icd10 => "http://hl7.org/fhir/sid/icd-10",
            CodeSystem::Loinc => "http://loinc.org",
            CodeSystem::Rxnorm => "http://www.nlm.nih.gov/research/umls/rxnorm",
        }
    }

    pub fn from_uri(uri: &str) -> Option<CodeSystem> {
        CodeSystem::ALL.into_iter().find(|s| s.uri() == uri)
    }

    pub fn tag(self) -> &'static str {
        match self {
            CodeSystem::Snomed => "SNOMED",
            CodeSystem::Icd10 => "ICD10",
            CodeSystem::Loinc => "LOINC",
            CodeSystem::Rxnorm => "RXNORM",
        }
    }
}

impl fmt::Display for CodeSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for CodeSystem {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "SNOMED" | "SNOMED-CT" | "SNOMEDCT" | "SCT" => Ok(CodeSystem::Snomed),
            "ICD10" | "ICD-10" | "ICD10CM" | "ICD-10-CM" => Ok(CodeSystem::Icd10),
            "LOINC" => Ok(CodeSystem::Loinc),
            "RXNORM" => Ok(CodeSystem::Rxnorm),
            _ => Err(()),
        }
    }
}

/// Kind of a text span. Only the first three are codeable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EntityType {
    Condition,
    Medication,
    Observation,
    Dosage,
    Temporal,
}

impl EntityType {
    pub fn is_codeable(self) -> bool {
        matches!(
            self,
            EntityType::Condition | EntityType::Medication | EntityType::Observation
        )
    }

    /// Code systems a concept for this kind of mention may come from, in
    /// preference order.
    pub fn allowed_systems(self) -> &'static [CodeSystem] {
        match self {
            EntityType::Condition => &[CodeSystem::Snomed, CodeSystem::Icd10],
            EntityType::Medication => &[CodeSystem::Rxnorm],
            EntityType::Observation => &[CodeSystem::Loinc, CodeSystem::Snomed],
            EntityType::Dosage | EntityType::Temporal => &[],
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            EntityType::Condition => "CONDITION",
            EntityType::Medication => "MEDICATION",
            EntityType::Observation => "OBSERVATION",
            EntityType::Dosage => "DOSAGE",
            EntityType::Temporal => "TEMPORAL",
        }
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for EntityType {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CONDITION" => Ok(EntityType::Condition),
            "MEDICATION" => Ok(EntityType::Medication),
            "OBSERVATION" => Ok(EntityType::Observation),
            "DOSAGE" => Ok(EntityType::Dosage),
            "TEMPORAL" => Ok(EntityType::Temporal),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConceptEntry {
    pub surface_form: String,
    pub system: CodeSystem,
    pub code: String,
    pub display: String,
    pub entity_type: EntityType,
}

/// A lookup hit, remembering whether it was reached through an alias.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Candidate<'a> {
    pub entry: &'a ConceptEntry,
    pub via_synonym: bool,
}

/// Case-folds and collapses runs of whitespace.
pub fn normalize_surface(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TerminologyIndex {
    entries: BTreeMap<String, Vec<ConceptEntry>>,
    synonyms: BTreeMap<String, String>,
}

impl TerminologyIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// The mini-terminology shipped with the crate.
    pub fn bundled() -> Self {
        let mut index = Self::parse_dictionary(BUNDLED_DICTIONARY, None)
            .expect("bundled dictionary is well formed");
        index
            .add_synonyms_str(BUNDLED_SYNONYMS)
            .expect("bundled synonyms are well formed");
        index
    }

    pub fn load_dictionary(
        path: impl AsRef<Path>,
        expected_system: Option<CodeSystem>,
    ) -> Result<Self, TerminologyError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| TerminologyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse_dictionary(&text, expected_system)
    }

    /// Parses the 5-column dictionary format. Any bad row rejects the whole
    /// file.
    pub fn parse_dictionary(
        text: &str,
        expected_system: Option<CodeSystem>,
    ) -> Result<Self, TerminologyError> {
        let mut index = Self::new();
        for (line, fields) in delimited_rows(text) {
            let fields = fields?;
            if fields.len() != 5 {
                return Err(TerminologyError::MalformedRow {
                    line,
                    expected: 5,
                    found: fields.len(),
                });
            }
            let surface_form = normalize_surface(&fields[0]);
            if surface_form.is_empty() {
                return Err(TerminologyError::EmptyField {
                    line,
                    field: "surface_form",
                });
            }
            let system: CodeSystem =
                fields[1]
                    .parse()
                    .map_err(|_| TerminologyError::UnknownSystem {
                        line,
                        tag: fields[1].trim().to_string(),
                    })?;
            if let Some(expected) = expected_system {
                if expected != system {
                    return Err(TerminologyError::SystemMismatch {
                        line,
                        expected,
                        found: system,
                    });
                }
            }
            let code = fields[2].trim().to_string();
            if code.is_empty() {
                return Err(TerminologyError::EmptyField { line, field: "code" });
            }
            let entity_type = match fields[4].parse::<EntityType>() {
                Ok(t) if t.is_codeable() => t,
                _ => {
                    return Err(TerminologyError::UnknownEntityType {
                        line,
                        tag: fields[4].trim().to_string(),
                    })
                }
            };
            index.insert(ConceptEntry {
                surface_form,
                system,
                code,
                display: fields[3].trim().to_string(),
                entity_type,
            });
        }
        Ok(index)
    }

    pub fn load_synonyms(&mut self, path: impl AsRef<Path>) -> Result<(), TerminologyError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| TerminologyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.add_synonyms_str(&text)
    }

    pub fn add_synonyms_str(&mut self, text: &str) -> Result<(), TerminologyError> {
        let mut pairs = Vec::new();
        for (line, fields) in delimited_rows(text) {
            let fields = fields?;
            if fields.len() != 2 {
                return Err(TerminologyError::MalformedRow {
                    line,
                    expected: 2,
                    found: fields.len(),
                });
            }
            let alias = normalize_surface(&fields[0]);
            let canonical = normalize_surface(&fields[1]);
            if alias.is_empty() {
                return Err(TerminologyError::EmptyField { line, field: "alias" });
            }
            if canonical.is_empty() {
                return Err(TerminologyError::EmptyField {
                    line,
                    field: "canonical",
                });
            }
            pairs.push((alias, canonical));
        }
        for (alias, canonical) in pairs {
            self.add_synonym(&alias, &canonical);
        }
        Ok(())
    }

    /// Registers `alias -> canonical`, keeping the map one level deep.
    pub fn add_synonym(&mut self, alias: &str, canonical: &str) {
        let alias = normalize_surface(alias);
        let mut canonical = normalize_surface(canonical);
        if let Some(target) = self.synonyms.get(&canonical) {
            canonical = target.clone();
        }
        if alias.is_empty() || canonical.is_empty() || alias == canonical {
            return;
        }
        // anything that pointed at the new alias now points past it
        for target in self.synonyms.values_mut() {
            if *target == alias {
                *target = canonical.clone();
            }
        }
        self.synonyms.retain(|a, c| a != c);
        self.synonyms.insert(alias, canonical);
    }

    pub fn insert(&mut self, entry: ConceptEntry) {
        let bucket = self.entries.entry(entry.surface_form.clone()).or_default();
        if !bucket
            .iter()
            .any(|e| e.system == entry.system && e.code == entry.code)
        {
            bucket.push(entry);
            bucket.sort_by(|a, b| (a.system, &a.code).cmp(&(b.system, &b.code)));
        }
    }

    pub fn merge(&mut self, other: TerminologyIndex) {
        for entry in other.entries.into_values().flatten() {
            self.insert(entry);
        }
        for (alias, canonical) in other.synonyms {
            self.add_synonym(&alias, &canonical);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn surface_forms(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn synonyms(&self) -> impl Iterator<Item = (&str, &str)> {
        self.synonyms.iter().map(|(a, c)| (a.as_str(), c.as_str()))
    }

    pub fn entries(&self) -> impl Iterator<Item = &ConceptEntry> {
        self.entries.values().flatten()
    }

    /// Canonical form an alias resolves to, if it is an alias.
    pub fn canonical(&self, surface: &str) -> Option<&str> {
        self.synonyms
            .get(&normalize_surface(surface))
            .map(String::as_str)
    }

    /// Entity types reachable from a surface form, directly or through an
    /// alias.
    pub fn entity_types(&self, surface: &str) -> BTreeSet<EntityType> {
        self.candidates(surface, None)
            .into_iter()
            .map(|c| c.entry.entity_type)
            .collect()
    }

    /// First entry carrying the given code.
    pub fn find_code(&self, system: CodeSystem, code: &str) -> Option<&ConceptEntry> {
        self.entries()
            .filter(|e| e.system == system && e.code == code)
            .min_by(|a, b| a.surface_form.cmp(&b.surface_form))
    }

    pub fn lookup(&self, surface: &str, type_filter: Option<EntityType>) -> Vec<&ConceptEntry> {
        self.candidates(surface, type_filter)
            .into_iter()
            .map(|c| c.entry)
            .collect()
    }

    /// Candidate generation: exact surface hits plus alias-resolved hits,
    /// ordered by system precedence then code. A concept reachable both ways
    /// is reported once, as an exact hit.
    pub fn candidates(&self, surface: &str, type_filter: Option<EntityType>) -> Vec<Candidate<'_>> {
        let key = normalize_surface(surface);
        if key.is_empty() {
            return Vec::new();
        }
        let mut out: Vec<Candidate<'_>> = Vec::new();
        let direct = self.entries.get(&key).into_iter().flatten();
        let resolved = self
            .synonyms
            .get(&key)
            .and_then(|c| self.entries.get(c))
            .into_iter()
            .flatten();
        for (entry, via_synonym) in direct.map(|e| (e, false)).chain(resolved.map(|e| (e, true))) {
            if type_filter.is_some_and(|t| t != entry.entity_type) {
                continue;
            }
            if out
                .iter()
                .any(|c| c.entry.system == entry.system && c.entry.code == entry.code)
            {
                continue;
            }
            out.push(Candidate { entry, via_synonym });
        }
        out.sort_by(|a, b| (a.entry.system, &a.entry.code).cmp(&(b.entry.system, &b.entry.code)));
        out
    }
}

/// Yields (1-based line number, fields) for every non-blank, non-comment
/// line. Fields honour double quotes so displays may contain commas.
fn delimited_rows(
    text: &str,
) -> impl Iterator<Item = (usize, Result<Vec<String>, TerminologyError>)> + '_ {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            return None;
        }
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(trimmed.as_bytes());
        let record = reader.records().next();
        let fields = match record {
            Some(Ok(r)) => Ok(r.iter().map(str::to_string).collect()),
            _ => Err(TerminologyError::MalformedRow {
                line,
                expected: 0,
                found: 0,
            }),
        };
        Some((line, fields))
    })
}
