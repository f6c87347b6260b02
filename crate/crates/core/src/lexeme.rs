//! Identifier splitting and the grammar-pattern type system.
//!
//! A method name is split into terms (snake_case, camelCase, PascalCase,
//! acronym runs and digit runs), and each term carries one part-of-speech
//! tag from a closed, identifier-oriented tagset. The ordered tag list is a
//! [`GrammarPattern`], written canonically as `V,NPL`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LexemeError {
    #[error("identifier {0:?} has no letters or digits")]
    EmptyIdentifier(String),
    #[error("identifier {0:?} contains a character that is not a letter, digit or underscore")]
    InvalidIdentifier(String),
    #[error("bad grammar pattern {pattern:?}: {reason}")]
    BadPattern { pattern: String, reason: String },
}

/// Part-of-speech tag for a single identifier term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tag {
    /// Noun.
    N,
    /// Noun modifier: adjective or noun-adjunct.
    NM,
    /// Plural noun.
    NPL,
    /// Verb.
    V,
    /// Verb modifier (adverb).
    VM,
    /// Preposition.
    P,
    /// Determiner.
    DT,
    /// Conjunction.
    CJ,
    /// Pronoun.
    PR,
    /// Digit.
    D,
    /// Preamble: a prefix with no grammatical role (`m`, `my`, `p`).
    PRE,
}

impl Tag {
    pub const ALL: [Tag; 11] = [
        Tag::N,
        Tag::NM,
        Tag::NPL,
        Tag::V,
        Tag::VM,
        Tag::P,
        Tag::DT,
        Tag::CJ,
        Tag::PR,
        Tag::D,
        Tag::PRE,
    ];

    pub fn mnemonic(self) -> &'static str {
        match self {
            Tag::N => "N",
            Tag::NM => "NM",
            Tag::NPL => "NPL",
            Tag::V => "V",
            Tag::VM => "VM",
            Tag::P => "P",
            Tag::DT => "DT",
            Tag::CJ => "CJ",
            Tag::PR => "PR",
            Tag::D => "D",
            Tag::PRE => "PRE",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Tag::N => "noun",
            Tag::NM => "noun modifier (adjective or noun-adjunct)",
            Tag::NPL => "plural noun",
            Tag::V => "verb",
            Tag::VM => "verb modifier (adverb)",
            Tag::P => "preposition",
            Tag::DT => "determiner",
            Tag::CJ => "conjunction",
            Tag::PR => "pronoun",
            Tag::D => "digit",
            Tag::PRE => "preamble (prefix without grammatical meaning)",
        }
    }

    /// Case-insensitive mnemonic lookup.
    pub fn from_mnemonic(text: &str) -> Option<Tag> {
        let upper = text.trim().to_ascii_uppercase();
        Tag::ALL.into_iter().find(|t| t.mnemonic() == upper)
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

/// Non-empty ordered sequence of tags.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GrammarPattern(Vec<Tag>);

impl GrammarPattern {
    /// Returns `None` for an empty tag list.
    pub fn new(tags: Vec<Tag>) -> Option<Self> {
        if tags.is_empty() {
            None
        } else {
            Some(GrammarPattern(tags))
        }
    }

    pub fn tags(&self) -> &[Tag] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn first(&self) -> Tag {
        self.0[0]
    }

    pub fn last(&self) -> Tag {
        self.0[self.0.len() - 1]
    }
}

impl fmt::Display for GrammarPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, tag) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            f.write_str(tag.mnemonic())?;
        }
        Ok(())
    }
}

impl FromStr for GrammarPattern {
    type Err = LexemeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_pattern(s)
    }
}

impl Serialize for GrammarPattern {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GrammarPattern {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_pattern(&text).map_err(serde::de::Error::custom)
    }
}

/// Parses a pattern string such as `"v, npl"` or `"V;N"` into canonical form.
pub fn parse_pattern(text: &str) -> Result<GrammarPattern, LexemeError> {
    let bad = |reason: String| LexemeError::BadPattern {
        pattern: text.to_string(),
        reason,
    };
    if text.trim().is_empty() {
        return Err(bad("empty pattern".into()));
    }
    let tags = text
        .split([',', ';'])
        .map(|piece| {
            let piece = piece.trim();
            if piece.is_empty() {
                return Err(bad("empty tag between separators".into()));
            }
            Tag::from_mnemonic(piece).ok_or_else(|| bad(format!("unknown tag {piece:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GrammarPattern(tags))
}

/// One term of a split identifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    pub raw: String,
    pub lower: String,
    /// Underscores between the previous term and this one (always 0 for the first term).
    pub underscores_before: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitName {
    pub original: String,
    pub terms: Vec<Term>,
    pub leading_underscores: usize,
    pub trailing_underscores: usize,
}

impl SplitName {
    pub fn word_count(&self) -> usize {
        self.terms.len()
    }

    pub fn lower_terms(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().map(|t| t.lower.as_str())
    }

    /// Reassembles the identifier from its terms and recorded underscores.
    pub fn reconstruct(&self) -> String {
        let mut out = String::with_capacity(self.original.len());
        out.extend(std::iter::repeat_n('_', self.leading_underscores));
        for term in &self.terms {
            out.extend(std::iter::repeat_n('_', term.underscores_before));
            out.push_str(&term.raw);
        }
        out.extend(std::iter::repeat_n('_', self.trailing_underscores));
        out
    }

    /// Lowercase snake_case join of the terms.
    pub fn to_snake_case(&self) -> String {
        self.lower_terms().collect::<Vec<_>>().join("_")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CharClass {
    Upper,
    Lower,
    Digit,
}

fn classify(c: char) -> CharClass {
    if c.is_numeric() {
        CharClass::Digit
    } else if c.is_uppercase() {
        CharClass::Upper
    } else {
        // lowercase and caseless letters behave alike
        CharClass::Lower
    }
}

/// Splits an underscore-free chunk on case and digit boundaries.
fn split_chunk(chunk: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = chunk.char_indices().collect();
    let mut pieces = Vec::new();
    let mut start = 0;
    for i in 1..chars.len() {
        let prev = classify(chars[i - 1].1);
        let cur = classify(chars[i].1);
        let next = chars.get(i + 1).map(|&(_, c)| classify(c));
        let boundary = match (prev, cur) {
            (CharClass::Lower, CharClass::Upper) => true,
            (CharClass::Upper, CharClass::Upper) => next == Some(CharClass::Lower),
            (CharClass::Digit, CharClass::Digit) => false,
            (CharClass::Digit, _) | (_, CharClass::Digit) => true,
            _ => false,
        };
        if boundary {
            let at = chars[i].0;
            pieces.push(&chunk[start..at]);
            start = at;
        }
    }
    if start < chunk.len() {
        pieces.push(&chunk[start..]);
    }
    pieces
}

/// Splits an identifier into terms.
///
/// Rules, in order: underscores separate terms (leading and trailing runs are
/// counted, not kept as terms); a lowercase-to-uppercase transition starts a
/// term; an uppercase run followed by a lowercase letter breaks before its last
/// capital (`HTTPResponse` is `HTTP` + `Response`); letter/digit transitions
/// start a term, so digit runs stand alone.
pub fn split_identifier(name: &str) -> Result<SplitName, LexemeError> {
    if name.chars().any(|c| !(c == '_' || c.is_alphanumeric())) {
        return Err(LexemeError::InvalidIdentifier(name.to_string()));
    }
    let body = name.trim_start_matches('_');
    let leading = name.len() - body.len();
    let core = body.trim_end_matches('_');
    let trailing = body.len() - core.len();
    if core.is_empty() {
        return Err(LexemeError::EmptyIdentifier(name.to_string()));
    }

    let mut terms = Vec::new();
    let mut gap = 0;
    for chunk in core.split('_') {
        if chunk.is_empty() {
            gap += 1;
            continue;
        }
        for (i, piece) in split_chunk(chunk).into_iter().enumerate() {
            terms.push(Term {
                raw: piece.to_string(),
                lower: piece.to_lowercase(),
                underscores_before: if i == 0 { gap } else { 0 },
            });
        }
        gap = 1;
    }
    Ok(SplitName {
        original: name.to_string(),
        terms,
        leading_underscores: leading,
        trailing_underscores: trailing,
    })
}

/// How a pattern's tag count relates to a name's word count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arity {
    Equal,
    MoreTagsThanWords,
    FewerTagsThanWords,
}

pub fn compare_arity(split: &SplitName, pattern: &GrammarPattern) -> Arity {
    use std::cmp::Ordering;
    match pattern.len().cmp(&split.word_count()) {
        Ordering::Equal => Arity::Equal,
        Ordering::Greater => Arity::MoreTagsThanWords,
        Ordering::Less => Arity::FewerTagsThanWords,
    }
}
