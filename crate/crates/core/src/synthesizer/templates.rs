//! Sentence templates with `{slot}` placeholders.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::SynthError;

const BUNDLED_TEMPLATES: &str = include_str!("../../data/templates.tsv");

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Literal(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pieces: Vec<Piece>,
}

/// Value bound to a slot. Lists render as "a, b and c".
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SlotValue {
    Text(String),
    List(Vec<String>),
}

/// Rendered text plus the byte span of every slot value (one span per list
/// item). Empty values get no span.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Rendered {
    pub text: String,
    pub spans: HashMap<String, Vec<(usize, usize)>>,
}

impl Rendered {
    pub fn span(&self, slot: &str) -> Option<(usize, usize)> {
        self.spans.get(slot).and_then(|s| s.first().copied())
    }
}

impl Template {
    pub fn parse(text: &str) -> Result<Self, SynthError> {
        let mut pieces = Vec::new();
        let mut rest = text;
        while let Some(open) = rest.find('{') {
            if open > 0 {
                pieces.push(Piece::Literal(rest[..open].to_string()));
            }
            let close = rest[open..]
                .find('}')
                .ok_or_else(|| SynthError::Template(format!("unclosed slot in `{text}`")))?;
            let name = rest[open + 1..open + close].trim();
            if name.is_empty() {
                return Err(SynthError::Template(format!("empty slot in `{text}`")));
            }
            pieces.push(Piece::Slot(name.to_string()));
            rest = &rest[open + close + 1..];
        }
        if !rest.is_empty() {
            pieces.push(Piece::Literal(rest.to_string()));
        }
        Ok(Self { pieces })
    }

    /// Unbound or empty slots render as nothing and swallow one preceding
    /// space, so "{a} {b}." with empty b gives "a.".
    pub fn render(&self, values: &HashMap<&str, SlotValue>) -> Rendered {
        let mut out = Rendered::default();
        for piece in &self.pieces {
            match piece {
                Piece::Literal(s) => out.text.push_str(s),
                Piece::Slot(name) => {
                    let items: Vec<&str> = match values.get(name.as_str()) {
                        Some(SlotValue::Text(t)) if !t.is_empty() => vec![t.as_str()],
                        Some(SlotValue::List(l)) => {
                            l.iter().map(String::as_str).filter(|s| !s.is_empty()).collect()
                        }
                        _ => Vec::new(),
                    };
                    if items.is_empty() {
                        if out.text.ends_with(' ') {
                            out.text.pop();
                        }
                        continue;
                    }
                    let spans = out.spans.entry(name.clone()).or_default();
                    for (i, item) in items.iter().enumerate() {
                        if i > 0 {
                            out.text.push_str(if i + 1 == items.len() { " and " } else { ", " });
                        }
                        let start = out.text.len();
                        out.text.push_str(item);
                        spans.push((start, out.text.len()));
                    }
                }
            }
        }
        out
    }
}

/// The four sentence kinds. `history` is optional and used for patients
/// with two or more diagnoses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub diagnosis: Template,
    pub history: Option<Template>,
    pub medication: Template,
    pub lab: Template,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::parse(BUNDLED_TEMPLATES).expect("bundled templates parse")
    }
}

impl TemplateSet {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SynthError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| SynthError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    /// `KIND<TAB>TEMPLATE` lines, `#` comments allowed.
    pub fn parse(text: &str) -> Result<Self, SynthError> {
        let mut kinds: HashMap<String, Template> = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (kind, body) = line
                .split_once('\t')
                .ok_or_else(|| SynthError::Template(format!("line {}: expected KIND<TAB>TEMPLATE", i + 1)))?;
            kinds.insert(kind.trim().to_lowercase(), Template::parse(body)?);
        }
        let mut take = |k: &str| {
            kinds
                .remove(k)
                .ok_or_else(|| SynthError::Template(format!("missing `{k}` template")))
        };
        Ok(Self {
            diagnosis: take("diagnosis")?,
            medication: take("medication")?,
            lab: take("lab")?,
            history: kinds.remove("history"),
        })
    }
}
