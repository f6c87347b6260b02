//! Rule-and-lexicon grammar-pattern tagger and the method-name lint.
//!
//! The tagger sees only the name. Each term is resolved by a fixed precedence:
//! digit, acronym, preposition, determiner, conjunction, pronoun, verb
//! modifier, then position-dependent rules (preamble prefix at position 0,
//! listed verb at the head, plural/singular noun at the end, noun modifier
//! before a noun). Words the lexicon does not know default to N at the end of
//! a name and NM elsewhere, so tagging is total.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexeme::{compare_arity, Arity, GrammarPattern, SplitName, Tag, Term};

const DEFAULT_LEXICON: &str = include_str!("../data/default.lex");

/// Words ending in a single `s` that are not plurals.
const SINGULAR_S_WORDS: &[&str] = &[
    "alias", "analysis", "as", "atlas", "axis", "basis", "bias", "bonus", "bus", "canvas",
    "chaos", "corpus", "crisis", "diagnosis", "focus", "gas", "genesis", "has", "hypothesis",
    "is", "its", "lens", "locus", "minus", "modulus", "news", "nexus", "plus", "radius",
    "synopsis", "synthesis", "status", "this", "thus", "us", "was", "yes", "virus",
];

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("lexicon line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("cannot read lexicon {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("pattern {pattern} has {tags} tags but {name:?} has {words} words")]
pub struct MismatchedPattern {
    pub name: String,
    pub pattern: GrammarPattern,
    pub tags: usize,
    pub words: usize,
}

/// Word knowledge used by the rule tagger, lint and abbreviation analysis.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    pub verbs: BTreeSet<String>,
    pub nouns: BTreeSet<String>,
    pub prepositions: BTreeSet<String>,
    pub determiners: BTreeSet<String>,
    pub conjunctions: BTreeSet<String>,
    pub pronouns: BTreeSet<String>,
    pub verb_modifiers: BTreeSet<String>,
    pub acronyms: BTreeMap<String, Vec<String>>,
    pub preamble_prefixes: BTreeSet<String>,
}

impl Lexicon {
    /// The lexicon shipped with the crate.
    pub fn builtin() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("bundled lexicon parses")
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        let text = std::fs::read_to_string(path).map_err(|source| LexiconError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Parses the sectioned text format: `[section]` headers, `#` comments,
    /// whitespace-separated words, and `token = expansion words` under `[acronyms]`.
    pub fn parse(text: &str) -> Result<Self, LexiconError> {
        let mut lex = Lexicon::default();
        let mut section: Option<String> = None;
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim().to_ascii_lowercase();
                if lex.word_set_mut(&name).is_none() && name != "acronyms" {
                    return Err(LexiconError::Syntax {
                        line: line_no,
                        message: format!("unknown section [{name}]"),
                    });
                }
                section = Some(name);
                continue;
            }
            let Some(current) = section.as_deref() else {
                return Err(LexiconError::Syntax {
                    line: line_no,
                    message: "entry before any section header".into(),
                });
            };
            if current == "acronyms" {
                let Some((token, expansion)) = line.split_once('=') else {
                    return Err(LexiconError::Syntax {
                        line: line_no,
                        message: "acronym lines must look like `token = words`".into(),
                    });
                };
                let token = token.trim().to_lowercase();
                let words: Vec<String> = expansion
                    .split_whitespace()
                    .map(str::to_lowercase)
                    .collect();
                if token.is_empty() {
                    return Err(LexiconError::Syntax {
                        line: line_no,
                        message: "empty acronym".into(),
                    });
                }
                lex.acronyms.insert(token, words);
            } else {
                let set = lex.word_set_mut(current).expect("section validated");
                set.extend(line.split_whitespace().map(str::to_lowercase));
            }
        }
        Ok(lex)
    }

    fn word_set_mut(&mut self, section: &str) -> Option<&mut BTreeSet<String>> {
        Some(match section {
            "verbs" => &mut self.verbs,
            "nouns" => &mut self.nouns,
            "prepositions" => &mut self.prepositions,
            "determiners" => &mut self.determiners,
            "conjunctions" => &mut self.conjunctions,
            "pronouns" => &mut self.pronouns,
            "verb_modifiers" => &mut self.verb_modifiers,
            "preamble_prefixes" => &mut self.preamble_prefixes,
            _ => return None,
        })
    }

    /// True when the word appears in any word list (acronyms excluded).
    pub fn is_known_word(&self, lower: &str) -> bool {
        [
            &self.verbs,
            &self.nouns,
            &self.prepositions,
            &self.determiners,
            &self.conjunctions,
            &self.pronouns,
            &self.verb_modifiers,
        ]
        .iter()
        .any(|set| set.contains(lower))
    }

    pub fn expansion(&self, lower: &str) -> Option<&[String]> {
        self.acronyms.get(lower).map(Vec::as_slice)
    }

    /// A term is an abbreviation when it is a listed acronym, or when it is an
    /// all-capitals word of 2 to 5 letters that no word list knows.
    pub fn is_abbreviation(&self, term: &Term) -> bool {
        if self.acronyms.contains_key(&term.lower) {
            return true;
        }
        let len = term.raw.chars().count();
        (2..=5).contains(&len)
            && term.raw.chars().all(|c| c.is_alphabetic() && c.is_uppercase())
            && !self.is_known_word(&term.lower)
    }
}

pub fn is_plural(term: &str) -> bool {
    term.len() > 1
        && term.ends_with('s')
        && !term.ends_with("ss")
        && !SINGULAR_S_WORDS.contains(&term)
}

fn is_digit_term(term: &Term) -> bool {
    term.raw.chars().all(char::is_numeric)
}

/// Assigns one tag per term.
pub fn rule_tag(split: &SplitName, lex: &Lexicon) -> GrammarPattern {
    let n = split.terms.len();
    let mut tags: Vec<Option<Tag>> = split
        .terms
        .iter()
        .enumerate()
        .map(|(i, term)| {
            let w = term.lower.as_str();
            if is_digit_term(term) {
                Some(Tag::D)
            } else if lex.acronyms.contains_key(w) {
                Some(Tag::N)
            } else if lex.prepositions.contains(w) {
                Some(Tag::P)
            } else if lex.determiners.contains(w) {
                Some(Tag::DT)
            } else if lex.conjunctions.contains(w) {
                Some(Tag::CJ)
            } else if lex.pronouns.contains(w) {
                Some(Tag::PR)
            } else if lex.verb_modifiers.contains(w) {
                Some(Tag::VM)
            } else if i == 0 && n > 1 && lex.preamble_prefixes.contains(w) {
                Some(Tag::PRE)
            } else {
                None
            }
        })
        .collect();

    let head = usize::from(tags.first() == Some(&Some(Tag::PRE)));
    if head < n && tags[head].is_none() && lex.verbs.contains(&split.terms[head].lower) {
        tags[head] = Some(Tag::V);
    }

    // right to left, so each open slot can see the tag that follows it
    for i in (0..n).rev() {
        if tags[i].is_some() {
            continue;
        }
        let noun = if is_plural(&split.terms[i].lower) {
            Tag::NPL
        } else {
            Tag::N
        };
        tags[i] = Some(match tags.get(i + 1).copied().flatten() {
            None => noun,
            Some(Tag::N | Tag::NPL | Tag::NM) => Tag::NM,
            Some(_) => noun,
        });
    }

    GrammarPattern::new(tags.into_iter().map(|t| t.expect("all slots filled")).collect())
        .expect("identifier has at least one term")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LintCode {
    NotVerbFirst,
    EndsWithVerb,
    SingleAmbiguousTerm,
    ContainsAbbreviation,
    PluralMismatch,
}

impl fmt::Display for LintCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LintFinding {
    pub code: LintCode,
    pub term_index: Option<usize>,
    pub message: String,
}

/// Checks a name and its pattern against common method-naming practice.
pub fn lint_name(
    split: &SplitName,
    pattern: &GrammarPattern,
    lex: &Lexicon,
) -> Result<Vec<LintFinding>, MismatchedPattern> {
    if compare_arity(split, pattern) != Arity::Equal {
        return Err(MismatchedPattern {
            name: split.original.clone(),
            pattern: pattern.clone(),
            tags: pattern.len(),
            words: split.word_count(),
        });
    }
    let tags = pattern.tags();
    let mut findings = Vec::new();

    if !matches!(pattern.first(), Tag::V | Tag::VM) {
        findings.push(LintFinding {
            code: LintCode::NotVerbFirst,
            term_index: Some(0),
            message: format!(
                "method name starts with {} ({}) instead of a verb",
                pattern.first(),
                split.terms[0].raw
            ),
        });
    }
    if tags.len() > 1 && pattern.last() == Tag::V {
        findings.push(LintFinding {
            code: LintCode::EndsWithVerb,
            term_index: Some(tags.len() - 1),
            message: format!("method name ends with the verb {:?}", split.terms[tags.len() - 1].raw),
        });
    }
    if split.word_count() == 1 && pattern.first() != Tag::V {
        findings.push(LintFinding {
            code: LintCode::SingleAmbiguousTerm,
            term_index: Some(0),
            message: format!(
                "single-term name {:?} does not describe an action",
                split.terms[0].raw
            ),
        });
    }
    for (i, term) in split.terms.iter().enumerate() {
        if lex.is_abbreviation(term) {
            let message = match lex.expansion(&term.lower) {
                Some(words) if !words.is_empty() => {
                    format!("{:?} abbreviates {:?}", term.raw, words.join(" "))
                }
                _ => format!("{:?} looks like an abbreviation or acronym", term.raw),
            };
            findings.push(LintFinding {
                code: LintCode::ContainsAbbreviation,
                term_index: Some(i),
                message,
            });
        }
    }
    for (i, (term, &tag)) in split.terms.iter().zip(tags).enumerate() {
        if !matches!(tag, Tag::N | Tag::NPL)
            || lex.is_abbreviation(term)
            || !term.raw.chars().all(char::is_alphabetic)
        {
            continue;
        }
        let plural = is_plural(&term.lower);
        if plural != (tag == Tag::NPL) {
            let message = if plural {
                format!("{:?} looks plural but is tagged N", term.raw)
            } else {
                format!("{:?} looks singular but is tagged NPL", term.raw)
            };
            findings.push(LintFinding {
                code: LintCode::PluralMismatch,
                term_index: Some(i),
                message,
            });
        }
    }
    Ok(findings)
}
