//! Agreement statistics and rename-quality analyses.
//!
//! Grammar patterns are compared as whole canonical strings, so each method
//! contributes one categorical label per rater. Cohen's and Fleiss' kappa are
//! evaluated from integer counts with a single final division, which keeps
//! them exactly invariant under relabeling of the categories.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexeme::{compare_arity, split_identifier, Arity, GrammarPattern, SplitName, Tag};
use crate::raters::{normalize_name, RaterOutput};
use crate::tagger::Lexicon;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("metric needs at least one item")]
    EmptyInput,
    #[error("row {row} sums to {sum}, expected {expected} ratings per item")]
    RaggedTable { row: usize, sum: usize, expected: usize },
    #[error("Fleiss' kappa needs at least 2 ratings per item, got {0}")]
    TooFewRaters(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub item_id: String,
    pub label_a: String,
    pub label_b: String,
}

impl LabeledPair {
    pub fn new(item_id: impl Into<String>, label_a: impl Into<String>, label_b: impl Into<String>) -> Self {
        LabeledPair {
            item_id: item_id.into(),
            label_a: label_a.into(),
            label_b: label_b.into(),
        }
    }

    pub fn agrees(&self) -> bool {
        self.label_a == self.label_b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementResult {
    pub accuracy: f64,
    pub kappa: f64,
    pub n: usize,
    pub matches: usize,
}

pub fn accuracy(pairs: &[LabeledPair]) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let matches = pairs.iter().filter(|p| p.agrees()).count();
    Ok(matches as f64 / pairs.len() as f64)
}

/// Cohen's kappa, `(p_o - p_e) / (1 - p_e)` with `p_e` from each rater's own
/// marginals. Two constant, identical raters give `p_e = 1`; that case
/// returns 1.0.
pub fn cohen_kappa(pairs: &[LabeledPair]) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let n = pairs.len() as i128;
    let agree = pairs.iter().filter(|p| p.agrees()).count() as i128;
    let mut marg_a: HashMap<&str, i128> = HashMap::new();
    let mut marg_b: HashMap<&str, i128> = HashMap::new();
    for p in pairs {
        *marg_a.entry(&p.label_a).or_default() += 1;
        *marg_b.entry(&p.label_b).or_default() += 1;
    }
    // chance agreement scaled by n^2
    let chance: i128 = marg_a
        .iter()
        .map(|(label, ca)| ca * marg_b.get(label).copied().unwrap_or(0))
        .sum();
    let denom = n * n - chance;
    if denom == 0 {
        return Ok(1.0);
    }
    Ok((n * agree - chance) as f64 / denom as f64)
}

pub fn agreement(pairs: &[LabeledPair]) -> Result<AgreementResult, MetricsError> {
    Ok(AgreementResult {
        accuracy: accuracy(pairs)?,
        kappa: cohen_kappa(pairs)?,
        n: pairs.len(),
        matches: pairs.iter().filter(|p| p.agrees()).count(),
    })
}

/// Fleiss' kappa over an items x categories count matrix where every row
/// sums to `raters_per_item`. A table whose expected agreement is 1 (every
/// rating in a single category) returns 1.0.
pub fn fleiss_kappa(table: &[Vec<usize>], raters_per_item: usize) -> Result<f64, MetricsError> {
    if table.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if raters_per_item < 2 {
        return Err(MetricsError::TooFewRaters(raters_per_item));
    }
    for (row, counts) in table.iter().enumerate() {
        let sum: usize = counts.iter().sum();
        if sum != raters_per_item {
            return Err(MetricsError::RaggedTable {
                row,
                sum,
                expected: raters_per_item,
            });
        }
    }
    let items = table.len() as i128;
    let r = raters_per_item as i128;
    let width = table.iter().map(Vec::len).max().unwrap_or(0);
    let mut column_totals = vec![0i128; width];
    let mut square_sum = 0i128;
    for counts in table {
        for (j, &c) in counts.iter().enumerate() {
            let c = c as i128;
            column_totals[j] += c;
            square_sum += c * c;
        }
    }
    // P_bar = a / d1, P_e = b / d2
    let a = square_sum - items * r;
    let d1 = items * r * (r - 1);
    let b: i128 = column_totals.iter().map(|c| c * c).sum();
    let d2 = (items * r) * (items * r);
    if d2 == b {
        return Ok(1.0);
    }
    Ok((a * d2 - b * d1) as f64 / (d1 * (d2 - b)) as f64)
}

/// Count matrix for Fleiss' kappa from per-item label lists. Categories are
/// returned in sorted order.
pub fn category_table(items: &[Vec<String>]) -> (Vec<String>, Vec<Vec<usize>>) {
    let categories: Vec<String> = items
        .iter()
        .flatten()
        .cloned()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: HashMap<&str, usize> = categories.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let table = items
        .iter()
        .map(|labels| {
            let mut row = vec![0; categories.len()];
            for l in labels {
                row[index[l.as_str()]] += 1;
            }
            row
        })
        .collect();
    (categories, table)
}

/// Fleiss' kappa straight from per-item labels; every item must carry the
/// same number of labels.
pub fn fleiss_kappa_labels(items: &[Vec<String>]) -> Result<f64, MetricsError> {
    let r = items.first().map(Vec::len).ok_or(MetricsError::EmptyInput)?;
    let (_, table) = category_table(items);
    fleiss_kappa(&table, r)
}

/// Number of items on which every label is identical.
pub fn unanimous_count(items: &[Vec<String>]) -> usize {
    items
        .iter()
        .filter(|labels| labels.windows(2).all(|w| w[0] == w[1]))
        .count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionEntry {
    pub truth: String,
    pub predicted: String,
    pub count: usize,
    /// Share of all disagreeing pairs, as a fraction.
    pub pct_of_disagreements: f64,
}

/// Every disagreeing (truth, predicted) combination, most frequent first,
/// ties in lexicographic order. `label_a` is the truth.
pub fn confusion_entries(pairs: &[LabeledPair]) -> Vec<ConfusionEntry> {
    let mut counts: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for p in pairs.iter().filter(|p| !p.agrees()) {
        *counts.entry((&p.label_a, &p.label_b)).or_default() += 1;
    }
    let total: usize = counts.values().sum();
    let mut entries: Vec<ConfusionEntry> = counts
        .into_iter()
        .map(|((truth, predicted), count)| ConfusionEntry {
            truth: truth.to_string(),
            predicted: predicted.to_string(),
            count,
            pct_of_disagreements: count as f64 / total as f64,
        })
        .collect();
    // BTreeMap order already gives the lexicographic tie-break; the sort is stable
    entries.sort_by_key(|e| std::cmp::Reverse(e.count));
    entries
}

pub fn misclassification_topk(pairs: &[LabeledPair], k: usize) -> Vec<ConfusionEntry> {
    let mut entries = confusion_entries(pairs);
    entries.truncate(k);
    entries
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preservation {
    pub n: usize,
    pub preserved: usize,
    pub changed: usize,
    pub fraction: f64,
    /// Preserved after lowercasing and dropping underscores.
    pub preserved_normalized: usize,
}

/// Counts outputs whose corrected name is exactly the current name.
pub fn preservation_rate(outputs: &[RaterOutput]) -> Preservation {
    let mut p = Preservation {
        n: 0,
        preserved: 0,
        changed: 0,
        fraction: 0.0,
        preserved_normalized: 0,
    };
    for o in outputs {
        let (Some(current), Some(corrected)) = (&o.current_name, &o.corrected_name) else {
            continue;
        };
        p.n += 1;
        if current == corrected {
            p.preserved += 1;
        } else {
            p.changed += 1;
        }
        if normalize_name(current) == normalize_name(corrected) {
            p.preserved_normalized += 1;
        }
    }
    if p.n > 0 {
        p.fraction = p.preserved as f64 / p.n as f64;
    }
    p
}

pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthGrowth {
    pub n: usize,
    pub avg_words_original: f64,
    pub avg_words_corrected: f64,
    /// Percentage points, from the averages rounded to two decimals.
    pub word_growth_pct: f64,
    pub avg_chars_original: f64,
    pub avg_chars_corrected: f64,
    pub char_growth_pct: f64,
}

fn growth_pct(original: f64, corrected: f64) -> f64 {
    let (o, c) = (round2(original), round2(corrected));
    if o == 0.0 {
        0.0
    } else {
        (c - o) / o * 100.0
    }
}

/// Average word and character counts of original and corrected names,
/// over renamed methods only. Characters are counted on the raw identifier,
/// underscores included.
///
/// Growth is derived from the two-decimal averages, the precision they are
/// reported at, so a growth figure can be recomputed from the averages shown
/// next to it.
pub fn length_growth(changed: &[(SplitName, SplitName)]) -> Result<LengthGrowth, MetricsError> {
    if changed.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let n = changed.len() as f64;
    let sum = |f: &dyn Fn(&(SplitName, SplitName)) -> usize| changed.iter().map(f).sum::<usize>() as f64 / n;
    let avg_words_original = sum(&|(o, _)| o.word_count());
    let avg_words_corrected = sum(&|(_, c)| c.word_count());
    let avg_chars_original = sum(&|(o, _)| o.original.chars().count());
    let avg_chars_corrected = sum(&|(_, c)| c.original.chars().count());
    Ok(LengthGrowth {
        n: changed.len(),
        avg_words_original,
        avg_words_corrected,
        word_growth_pct: growth_pct(avg_words_original, avg_words_corrected),
        avg_chars_original,
        avg_chars_corrected,
        char_growth_pct: growth_pct(avg_chars_original, avg_chars_corrected),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermDiff {
    pub original: String,
    pub corrected: String,
    /// Lowercase terms of the corrected name not matched in the original (multiset, sorted).
    pub added: Vec<String>,
    /// Lowercase terms of the original not matched in the corrected name (multiset, sorted).
    pub removed: Vec<String>,
}

pub fn term_diff(original: &SplitName, corrected: &SplitName) -> TermDiff {
    let mut balance: BTreeMap<&str, i64> = BTreeMap::new();
    for t in corrected.lower_terms() {
        *balance.entry(t).or_default() += 1;
    }
    for t in original.lower_terms() {
        *balance.entry(t).or_default() -= 1;
    }
    let mut added = Vec::new();
    let mut removed = Vec::new();
    for (term, n) in balance {
        let target = if n > 0 { &mut added } else { &mut removed };
        target.extend(std::iter::repeat_n(term.to_string(), n.unsigned_abs() as usize));
    }
    TermDiff {
        original: original.original.clone(),
        corrected: corrected.original.clone(),
        added,
        removed,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermCount {
    pub term: String,
    pub count: usize,
    /// First rename, in input order, that showed this change.
    pub example: (String, String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermChanges {
    pub added: Vec<TermCount>,
    pub removed: Vec<TermCount>,
}

fn rank_terms<'a>(diffs: &'a [TermDiff], pick: impl Fn(&'a TermDiff) -> &'a [String], k: usize) -> Vec<TermCount> {
    let mut counts: BTreeMap<&str, (usize, &TermDiff)> = BTreeMap::new();
    for d in diffs {
        for term in pick(d) {
            counts.entry(term).or_insert((0, d)).0 += 1;
        }
    }
    let mut ranked: Vec<TermCount> = counts
        .into_iter()
        .map(|(term, (count, d))| TermCount {
            term: term.to_string(),
            count,
            example: (d.original.clone(), d.corrected.clone()),
        })
        .collect();
    ranked.sort_by_key(|t| std::cmp::Reverse(t.count));
    ranked.truncate(k);
    ranked
}

pub fn top_added_removed(diffs: &[TermDiff], k: usize) -> TermChanges {
    TermChanges {
        added: rank_terms(diffs, |d| &d.added, k),
        removed: rank_terms(diffs, |d| &d.removed, k),
    }
}

/// Fraction of patterns whose first tag is V.
pub fn verb_start_rate(patterns: &[GrammarPattern]) -> Result<f64, MetricsError> {
    if patterns.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let verbs = patterns.iter().filter(|p| p.first() == Tag::V).count();
    Ok(verbs as f64 / patterns.len() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArityTally {
    pub equal: usize,
    pub more_tags: usize,
    pub fewer_tags: usize,
}

impl ArityTally {
    pub fn total(&self) -> usize {
        self.equal + self.more_tags + self.fewer_tags
    }
}

pub fn tag_word_consistency(items: &[(SplitName, GrammarPattern)]) -> ArityTally {
    let mut tally = ArityTally::default();
    for (split, pattern) in items {
        match compare_arity(split, pattern) {
            Arity::Equal => tally.equal += 1,
            Arity::MoreTagsThanWords => tally.more_tags += 1,
            Arity::FewerTagsThanWords => tally.fewer_tags += 1,
        }
    }
    tally
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenExpansion {
    pub method_id: String,
    pub token: String,
    pub original: String,
    pub corrected: String,
    pub expanded: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbbreviationReport {
    /// Methods whose original name holds at least one abbreviation.
    pub methods: usize,
    pub not_expanded: usize,
    pub expanded: usize,
    pub tokens: Vec<TokenExpansion>,
}

impl AbbreviationReport {
    pub fn total(&self) -> usize {
        self.expanded + self.not_expanded
    }

    /// (not expanded, expanded) per lowercase token.
    pub fn per_token(&self) -> BTreeMap<String, (usize, usize)> {
        let mut out: BTreeMap<String, (usize, usize)> = BTreeMap::new();
        for t in &self.tokens {
            let e = out.entry(t.token.clone()).or_default();
            if t.expanded {
                e.1 += 1;
            } else {
                e.0 += 1;
            }
        }
        out
    }
}

/// Decides whether one abbreviation token was expanded in a rename.
pub fn is_expanded(token: &str, original: &SplitName, corrected: &SplitName, lex: &Lexicon) -> bool {
    let corrected_terms: Vec<&str> = corrected.lower_terms().collect();
    if corrected_terms.contains(&token) {
        return false;
    }
    match lex.expansion(token) {
        Some(words) if !words.is_empty() => words.iter().all(|w| corrected_terms.contains(&w.as_str())),
        _ => corrected.word_count() >= original.word_count() + 2,
    }
}

/// Counts abbreviation tokens in original names and how many each rater
/// expanded. Outputs without both names are skipped.
pub fn abbreviation_expansion_report(outputs: &[RaterOutput], lex: &Lexicon) -> AbbreviationReport {
    let mut report = AbbreviationReport::default();
    for o in outputs {
        let (Some(current), Some(corrected)) = (&o.current_name, &o.corrected_name) else {
            continue;
        };
        let (Ok(orig), Ok(corr)) = (split_identifier(current), split_identifier(corrected)) else {
            continue;
        };
        let tokens: Vec<&str> = orig
            .terms
            .iter()
            .filter(|t| lex.is_abbreviation(t))
            .map(|t| t.lower.as_str())
            .collect();
        if tokens.is_empty() {
            continue;
        }
        report.methods += 1;
        for token in tokens {
            let expanded = is_expanded(token, &orig, &corr, lex);
            if expanded {
                report.expanded += 1;
            } else {
                report.not_expanded += 1;
            }
            report.tokens.push(TokenExpansion {
                method_id: o.method_id.clone(),
                token: token.to_string(),
                original: current.clone(),
                corrected: corrected.clone(),
                expanded,
            });
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexeme::parse_pattern;
    use crate::raters::Status;
    use proptest::prelude::*;

    // Independent textbook evaluations used as oracles.

    /// Cohen's kappa through an explicit k x k contingency table in floats.
    fn cohen_oracle(a: &[&str], b: &[&str]) -> f64 {
        let mut cats: Vec<&str> = a.iter().chain(b).copied().collect();
        cats.sort();
        cats.dedup();
        let k = cats.len();
        let pos = |x: &str| cats.iter().position(|c| *c == x).unwrap();
        let mut m = vec![vec![0.0f64; k]; k];
        for (x, y) in a.iter().zip(b) {
            m[pos(x)][pos(y)] += 1.0;
        }
        let n = a.len() as f64;
        let po: f64 = (0..k).map(|i| m[i][i]).sum::<f64>() / n;
        let pe: f64 = (0..k)
            .map(|i| {
                let row: f64 = m[i].iter().sum::<f64>() / n;
                let col: f64 = (0..k).map(|j| m[j][i]).sum::<f64>() / n;
                row * col
            })
            .sum();
        if (1.0 - pe).abs() < 1e-15 {
            1.0
        } else {
            (po - pe) / (1.0 - pe)
        }
    }

    /// Fleiss' kappa with per-item agreement P_i and category shares p_j.
    fn fleiss_oracle(table: &[Vec<usize>], r: usize) -> f64 {
        let n_items = table.len() as f64;
        let rf = r as f64;
        let p_i: Vec<f64> = table
            .iter()
            .map(|row| {
                let s: f64 = row.iter().map(|&c| (c * c) as f64).sum();
                (s - rf) / (rf * (rf - 1.0))
            })
            .collect();
        let p_bar = p_i.iter().sum::<f64>() / n_items;
        let k = table[0].len();
        let p_e: f64 = (0..k)
            .map(|j| {
                let pj = table.iter().map(|row| row[j] as f64).sum::<f64>() / (n_items * rf);
                pj * pj
            })
            .sum();
        if (1.0 - p_e).abs() < 1e-15 {
            1.0
        } else {
            (p_bar - p_e) / (1.0 - p_e)
        }
    }

    fn pairs(a: &[&str], b: &[&str]) -> Vec<LabeledPair> {
        a.iter()
            .zip(b)
            .enumerate()
            .map(|(i, (x, y))| LabeledPair::new(format!("m{i}"), *x, *y))
            .collect()
    }

    #[test]
    fn oracle_values() {
        assert_eq!(cohen_oracle(&["x", "x", "y", "y"], &["x", "y", "y", "y"]), 0.5);
        let f = fleiss_oracle(&[vec![4, 0], vec![2, 2]], 4);
        assert!((f - 1.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&pairs(&["V,N", "N"], &["V,N", "V"])).unwrap(), 0.5);
        assert_eq!(accuracy(&pairs(&["a", "b"], &["a", "b"])).unwrap(), 1.0);
        let mut many = Vec::new();
        for i in 0..496 {
            let b = if i < 303 { "V" } else { "N" };
            many.push(LabeledPair::new(i.to_string(), "V", b));
        }
        assert!((accuracy(&many).unwrap() - 0.611).abs() < 0.0005);
        assert_eq!(accuracy(&[]), Err(MetricsError::EmptyInput));
    }

    #[test]
    fn cohen_examples() {
        let a = ["x", "x", "y", "y"];
        let b = ["x", "y", "y", "y"];
        assert_eq!(cohen_kappa(&pairs(&a, &b)).unwrap(), 0.5);
        assert_eq!(cohen_kappa(&pairs(&["a", "b", "c"], &["a", "b", "c"])).unwrap(), 1.0);
        assert_eq!(cohen_kappa(&pairs(&["x", "x", "y", "y"], &["x", "y", "x", "y"])).unwrap(), 0.0);
        assert_eq!(cohen_kappa(&pairs(&["x", "x"], &["x", "x"])).unwrap(), 1.0);
        assert_eq!(cohen_kappa(&[]), Err(MetricsError::EmptyInput));
    }

    #[test]
    fn fleiss_examples() {
        assert_eq!(fleiss_kappa(&[vec![4, 0], vec![0, 4]], 4).unwrap(), 1.0);
        assert_eq!(fleiss_kappa(&[vec![4, 0], vec![4, 0]], 4).unwrap(), 1.0);
        let k = fleiss_kappa(&[vec![4, 0], vec![2, 2]], 4).unwrap();
        assert!((k - 0.1111).abs() < 1e-4);
        assert!(matches!(
            fleiss_kappa(&[vec![3, 0], vec![2, 2]], 4),
            Err(MetricsError::RaggedTable { row: 0, .. })
        ));
        assert_eq!(fleiss_kappa(&[], 3), Err(MetricsError::EmptyInput));
        assert_eq!(fleiss_kappa(&[vec![1]], 1), Err(MetricsError::TooFewRaters(1)));
    }

    #[test]
    fn fleiss_from_labels() {
        let items: Vec<Vec<String>> = vec![
            vec!["a".into(), "a".into(), "a".into(), "a".into()],
            vec!["a".into(), "b".into(), "a".into(), "b".into()],
        ];
        let k = fleiss_kappa_labels(&items).unwrap();
        assert!((k - 1.0 / 9.0).abs() < 1e-12);
        assert_eq!(unanimous_count(&items), 1);
    }

    #[test]
    fn confusion_examples() {
        let truth = ["N", "N", "V", "VM", "N", "N"];
        let pred = ["V", "V", "N", "V", "N", "N"];
        let top = misclassification_topk(&pairs(&truth, &pred), 3);
        assert_eq!(top[0].truth, "N");
        assert_eq!(top[0].predicted, "V");
        assert_eq!(top[0].count, 2);
        assert_eq!(top[0].pct_of_disagreements, 0.5);
        // tie between (V,N) and (VM,V) resolved lexicographically
        assert_eq!((top[1].truth.as_str(), top[2].truth.as_str()), ("V", "VM"));
        assert!(misclassification_topk(&pairs(&["a"], &["a"]), 3).is_empty());
        assert_eq!(misclassification_topk(&pairs(&truth, &pred), 1).len(), 1);
    }

    #[test]
    fn confusion_percentage_matches_denominator() {
        let mut ps = Vec::new();
        for i in 0..193 {
            let (t, p) = if i < 16 { ("N", "PRE") } else { ("A", "B") };
            ps.push(LabeledPair::new(i.to_string(), t, format!("{p}{}", if i >= 16 { i } else { 0 })));
        }
        let top = misclassification_topk(&ps, 1);
        assert_eq!(top[0].count, 16);
        assert!((top[0].pct_of_disagreements * 100.0 - 8.29).abs() < 0.005);
    }

    fn out(current: &str, corrected: &str) -> RaterOutput {
        RaterOutput {
            status: Status::Valid,
            current_name: Some(current.into()),
            current_pattern: Some(parse_pattern("N").unwrap()),
            corrected_name: Some(corrected.into()),
            corrected_pattern: Some(parse_pattern("N").unwrap()),
            ..RaterOutput::missing(current, "r")
        }
    }

    #[test]
    fn preservation_examples() {
        let all_diff = [out("a", "b"), out("c", "d")];
        let p = preservation_rate(&all_diff);
        assert_eq!((p.preserved, p.fraction), (0, 0.0));
        let all_same = [out("a", "a"), out("c", "c")];
        let p = preservation_rate(&all_same);
        assert_eq!((p.preserved, p.fraction), (2, 1.0));
        let p = preservation_rate(&[out("MSE", "mse")]);
        assert_eq!((p.preserved, p.preserved_normalized), (0, 1));
    }

    fn s(name: &str) -> SplitName {
        split_identifier(name).unwrap()
    }

    #[test]
    fn growth_examples() {
        let same = [(s("load_image"), s("load_image")), (s("f"), s("f"))];
        let g = length_growth(&same).unwrap();
        assert_eq!((g.word_growth_pct, g.char_growth_pct), (0.0, 0.0));
        assert_eq!(length_growth(&[]), Err(MetricsError::EmptyInput));

        let g = length_growth(&[(s("variance"), s("calculate_variance"))]).unwrap();
        assert_eq!((g.avg_words_original, g.avg_words_corrected), (1.0, 2.0));
        assert_eq!((g.avg_chars_original, g.avg_chars_corrected), (8.0, 18.0));
        assert!((g.word_growth_pct - 100.0).abs() < 1e-9);
        assert!((g.char_growth_pct - 125.0).abs() < 1e-9);
        assert!((growth_pct(1.78, 2.77) - 55.62).abs() < 0.005);
        assert!((growth_pct(10.86, 17.97) - 65.47).abs() < 0.005);
    }

    #[test]
    fn term_diff_examples() {
        let d = term_diff(&s("variance"), &s("calculate_variance"));
        assert_eq!((d.added, d.removed), (vec!["calculate".to_string()], vec![]));
        let d = term_diff(&s("MSE"), &s("calculate_mean_squared_error"));
        assert_eq!(d.added, ["calculate", "error", "mean", "squared"]);
        assert_eq!(d.removed, ["mse"]);
        let d = term_diff(&s("load_image"), &s("loadImage"));
        assert!(d.added.is_empty() && d.removed.is_empty());
    }

    #[test]
    fn ranking_terms() {
        let diffs = vec![
            term_diff(&s("variance"), &s("calculate_variance")),
            term_diff(&s("square"), &s("calculate_square")),
            term_diff(&s("get_params"), &s("initialize_parameters")),
            term_diff(&s("mean"), &s("compute_mean")),
        ];
        let top = top_added_removed(&diffs, 2);
        assert_eq!(top.added[0].term, "calculate");
        assert_eq!(top.added[0].count, 2);
        assert_eq!(top.added[0].example, ("variance".into(), "calculate_variance".into()));
        // compute/initialize/parameters tie at 1: lexicographic
        assert_eq!(top.added[1].term, "compute");
        assert_eq!(top.removed.iter().map(|t| t.term.as_str()).collect::<Vec<_>>(), ["get", "params"]);
        assert_eq!(top_added_removed(&[], 2), TermChanges::default());
    }

    #[test]
    fn verb_start_examples() {
        let ps: Vec<GrammarPattern> = ["V,N", "N", "V"].iter().map(|p| parse_pattern(p).unwrap()).collect();
        assert!((verb_start_rate(&ps).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        let none = [parse_pattern("N").unwrap()];
        assert_eq!(verb_start_rate(&none).unwrap(), 0.0);
        assert_eq!(verb_start_rate(&[]), Err(MetricsError::EmptyInput));
    }

    #[test]
    fn arity_tally() {
        let p = |x: &str| parse_pattern(x).unwrap();
        let t = tag_word_consistency(&[(s("load_image"), p("V,N")), (s("f"), p("N"))]);
        assert_eq!(t, ArityTally { equal: 2, more_tags: 0, fewer_tags: 0 });
        let t = tag_word_consistency(&[(s("apply_pcr_noise_model"), p("V,NM"))]);
        assert_eq!(t, ArityTally { equal: 0, more_tags: 0, fewer_tags: 1 });
    }

    #[test]
    fn abbreviation_examples() {
        let lex = Lexicon::builtin();
        let r = abbreviation_expansion_report(&[out("MSE", "calculate_mean_squared_error")], &lex);
        assert_eq!((r.methods, r.expanded, r.not_expanded), (1, 1, 0));
        let r = abbreviation_expansion_report(&[out("load_csv", "load_csv_file")], &lex);
        assert_eq!((r.expanded, r.not_expanded), (0, 1));
        let r = abbreviation_expansion_report(&[out("MSE", "MSE")], &lex);
        assert_eq!((r.expanded, r.not_expanded), (0, 1));
        // unknown all-caps token: expanded only if dropped and two terms gained
        let r = abbreviation_expansion_report(
            &[out("KNN", "k_nearest_neighbors"), out("fit_KNN", "fit_model")],
            &lex,
        );
        assert_eq!((r.expanded, r.not_expanded), (1, 1));
        assert_eq!(r.per_token()["knn"], (1, 1));
        let r = abbreviation_expansion_report(&[out("load_image", "read_image")], &lex);
        assert_eq!(r.methods, 0);
    }

    fn labels() -> impl Strategy<Value = Vec<(u8, u8)>> {
        prop::collection::vec((0u8..5, 0u8..5), 1..60)
    }

    fn to_pairs(raw: &[(u8, u8)], rename: impl Fn(u8) -> String) -> Vec<LabeledPair> {
        raw.iter()
            .enumerate()
            .map(|(i, &(a, b))| LabeledPair::new(i.to_string(), rename(a), rename(b)))
            .collect()
    }

    proptest! {
        #[test]
        fn cohen_matches_oracle(raw in labels()) {
            let ps = to_pairs(&raw, |x| x.to_string());
            let a: Vec<&str> = ps.iter().map(|p| p.label_a.as_str()).collect();
            let b: Vec<&str> = ps.iter().map(|p| p.label_b.as_str()).collect();
            let k = cohen_kappa(&ps).unwrap();
            prop_assert!((k - cohen_oracle(&a, &b)).abs() < 1e-9);
        }

        #[test]
        fn fleiss_matches_oracle(rows in prop::collection::vec(prop::collection::vec(0usize..4, 3), 1..30)) {
            let r = 5;
            let table: Vec<Vec<usize>> = rows
                .iter()
                .map(|row| {
                    let mut full = vec![0usize; 4];
                    let mut left = r;
                    for (j, &c) in row.iter().enumerate() {
                        let take = c.min(left);
                        full[j] = take;
                        left -= take;
                    }
                    full[3] = left;
                    full
                })
                .collect();
            let k = fleiss_kappa(&table, r).unwrap();
            prop_assert!((k - fleiss_oracle(&table, r)).abs() < 1e-9);
            prop_assert!(k <= 1.0);
        }

        #[test]
        fn relabeling_invariance(raw in labels(), offset in 1u8..50) {
            let base = to_pairs(&raw, |x| format!("L{x}"));
            let renamed = to_pairs(&raw, |x| format!("Z{}", (x as u16 * 7 + offset as u16) % 251));
            prop_assert_eq!(accuracy(&base).unwrap(), accuracy(&renamed).unwrap());
            prop_assert_eq!(cohen_kappa(&base).unwrap(), cohen_kappa(&renamed).unwrap());
            let counts = |ps: &[LabeledPair]| {
                let mut c: Vec<usize> = confusion_entries(ps).iter().map(|e| e.count).collect();
                c.sort();
                c
            };
            prop_assert_eq!(counts(&base), counts(&renamed));
        }

        #[test]
        fn confusion_conservation_and_kappa_bound(raw in labels()) {
            let ps = to_pairs(&raw, |x| x.to_string());
            let entries = confusion_entries(&ps);
            let disagreements = ps.iter().filter(|p| !p.agrees()).count();
            prop_assert_eq!(entries.iter().map(|e| e.count).sum::<usize>(), disagreements);
            if disagreements > 0 {
                let pct: f64 = entries.iter().map(|e| e.pct_of_disagreements).sum();
                prop_assert!((pct - 1.0).abs() < 1e-9);
            }
            prop_assert!(entries.iter().all(|e| e.truth != e.predicted));
            let k = cohen_kappa(&ps).unwrap();
            prop_assert!(k <= 1.0);
            prop_assert_eq!(k == 1.0, disagreements == 0);
        }

        #[test]
        fn preservation_partitions(raw in prop::collection::vec((0u8..3, 0u8..3), 0..40)) {
            let outs: Vec<RaterOutput> = raw.iter().map(|(a, b)| out(&format!("n{a}"), &format!("n{b}"))).collect();
            let p = preservation_rate(&outs);
            prop_assert_eq!(p.preserved + p.changed, outs.len());
        }

        #[test]
        fn diff_sides_are_disjoint(a in "[a-z]{1,3}(_[a-z]{1,3}){0,4}", b in "[a-z]{1,3}(_[a-z]{1,3}){0,4}") {
            let d = term_diff(&s(&a), &s(&b));
            prop_assert!(d.added.iter().all(|t| !d.removed.contains(t)));
        }
    }
}
