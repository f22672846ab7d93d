//! Sentence segmentation and word tokenization.
//!
//! Offsets are byte offsets into the UTF-8 note text, so `&text[start..end]`
//! always reproduces the slice.

use serde::{Deserialize, Serialize};

/// Words whose trailing period never ends a sentence.
pub const ABBREVIATIONS: &[&str] = &[
    "dr", "mr", "mrs", "ms", "pt", "pts", "hx", "dx", "rx", "tx", "sx", "fx", "mg", "mcg", "ml",
    "vs", "approx", "no", "st", "e.g", "i.e", "etc", "b.i.d", "t.i.d", "q.i.d", "q.d", "q.h.s",
    "p.o", "p.r.n", "a.m", "p.m", "h.s", "q.o.d",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub start: usize,
    pub end: usize,
    pub index: usize,
}

impl Sentence {
    pub fn contains(&self, start: usize, end: usize) -> bool {
        self.start <= start && end <= self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token {
    pub start: usize,
    pub end: usize,
}

/// Splits on `.`, `!`, `?` and newlines. A period only ends a sentence when
/// it is followed by whitespace or the end of the text and the word it
/// closes is not a known abbreviation. Sentence spans include their
/// terminator and exclude surrounding whitespace.
pub fn segment(text: &str) -> Vec<Sentence> {
    let mut out = Vec::new();
    let mut seg_start = 0;
    let mut iter = text.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        let next = iter.peek().map(|&(_, n)| n);
        let split_after = match c {
            '!' | '?' => true,
            '\n' => {
                push_trimmed(text, seg_start, i, &mut out);
                seg_start = i + 1;
                continue;
            }
            '.' => next.is_none_or(char::is_whitespace) && !is_abbreviation(text, i),
            _ => false,
        };
        if split_after {
            push_trimmed(text, seg_start, i + c.len_utf8(), &mut out);
            seg_start = i + c.len_utf8();
        }
    }
    push_trimmed(text, seg_start, text.len(), &mut out);
    out
}

fn push_trimmed(text: &str, start: usize, end: usize, out: &mut Vec<Sentence>) {
    let slice = &text[start..end];
    let lead = slice.len() - slice.trim_start().len();
    let trail = slice.len() - slice.trim_end().len();
    if lead + trail >= slice.len() {
        return;
    }
    out.push(Sentence {
        start: start + lead,
        end: end - trail,
        index: out.len(),
    });
}

/// The whitespace-delimited word ending at the period at `dot`, minus
/// leading punctuation and the final period, checked against
/// [`ABBREVIATIONS`].
fn is_abbreviation(text: &str, dot: usize) -> bool {
    let word_start = text[..dot]
        .rfind(char::is_whitespace)
        .map_or(0, |p| p + text[p..].chars().next().map_or(1, char::len_utf8));
    let word = text[word_start..dot].trim_start_matches(|c: char| !c.is_alphanumeric());
    if word.is_empty() {
        return false;
    }
    let lower = word.to_lowercase();
    ABBREVIATIONS.contains(&lower.as_str())
}

/// Splits on whitespace and punctuation, keeping `.` and `/` when they sit
/// between two digits ("2.5", "145/92").
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut tokens = Vec::new();
    let mut start: Option<usize> = None;
    for (k, &(i, c)) in chars.iter().enumerate() {
        let joins = c.is_alphanumeric()
            || ((c == '.' || c == '/')
                && start.is_some()
                && k > 0
                && chars[k - 1].1.is_ascii_digit()
                && chars.get(k + 1).is_some_and(|&(_, n)| n.is_ascii_digit()));
        match (joins, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                tokens.push(Token { start: s, end: i });
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        tokens.push(Token {
            start: s,
            end: text.len(),
        });
    }
    tokens
}

/// Lowercased tokens joined with single spaces; the key under which
/// dictionary phrases are matched.
pub fn token_key(text: &str) -> String {
    tokenize(text)
        .iter()
        .map(|t| text[t.start..t.end].to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slices<'a>(text: &'a str, s: &[Sentence]) -> Vec<&'a str> {
        s.iter().map(|s| &text[s.start..s.end]).collect()
    }

    #[test]
    fn two_sentences() {
        let text = "Patient has diabetes. Started Metformin 500mg twice daily.";
        let s = segment(text);
        assert_eq!(
            slices(text, &s),
            vec!["Patient has diabetes.", "Started Metformin 500mg twice daily."]
        );
    }

    #[test]
    fn empty_text() {
        assert!(segment("").is_empty());
        assert!(segment("  \n\n ").is_empty());
    }

    #[test]
    fn offsets_match_manual_positions() {
        let text = "BP 145/92. Started Lisinopril 10mg daily.";
        let s = segment(text);
        assert_eq!(
            s,
            vec![
                Sentence { start: 0, end: 10, index: 0 },
                Sentence { start: 11, end: 41, index: 1 },
            ]
        );
        assert_eq!(&text[11..41], "Started Lisinopril 10mg daily.");
    }

    #[test]
    fn abbreviations_and_decimals_do_not_split() {
        let text = "Seen by Dr. Smith. Take 2.5 mg. b.i.d. with food! Better?\nNext line";
        let s = segment(text);
        assert_eq!(
            slices(text, &s),
            vec![
                "Seen by Dr. Smith.",
                "Take 2.5 mg. b.i.d. with food!",
                "Better?",
                "Next line"
            ]
        );
    }

    #[test]
    fn tokenizer_keeps_numeric_joins() {
        let text = "BP 145/92, Warfarin 2.5mg (2x/day).";
        let toks: Vec<_> = tokenize(text).iter().map(|t| &text[t.start..t.end]).collect();
        assert_eq!(toks, vec!["BP", "145/92", "Warfarin", "2.5mg", "2x", "day"]);
        assert_eq!(token_key("Type-2  Diabetes"), "type 2 diabetes");
    }
}
