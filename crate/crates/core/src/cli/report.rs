//! Report tables computed from one stored run.
//!
//! Every table is built once as rows of display strings; the CSV files and
//! report.md are both rendered from those same strings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::corpus::MethodRecord;
use crate::lexeme::{split_identifier, SplitName};
use crate::metrics::{
    abbreviation_expansion_report, agreement, fleiss_kappa_labels, length_growth, misclassification_topk,
    preservation_rate, round2, tag_word_consistency, term_diff, top_added_removed, unanimous_count, verb_start_rate,
    TermCount,
};
use crate::raters::{common_valid_subset, normalize_name, status_counts, RaterOutput, Status};
use crate::store::{Store, StoreError};
use crate::tagger::Lexicon;

pub const DEFAULT_TOP_K: usize = 3;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("run {0:?} does not exist")]
    UnknownRun(String),
    #[error("run {0:?} has no rater outputs")]
    NoRaters(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub file: &'static str,
    pub title: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(file: &'static str, title: &'static str, header: &[&'static str]) -> Self {
        Table {
            file,
            title,
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_markdown(&self) -> String {
        let cell = |s: &str| s.replace('|', "\\|");
        let mut out = format!("## {}\n\n", self.title);
        if self.rows.is_empty() {
            out.push_str("(no rows)\n");
            return out;
        }
        let _ = writeln!(out, "| {} |", self.header.join(" | "));
        let _ = writeln!(out, "|{}", "---|".repeat(self.header.len()));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|c| cell(c)).collect();
            let _ = writeln!(out, "| {} |", cells.join(" | "));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub run_id: String,
    pub tables: Vec<Table>,
    pub fleiss: String,
    pub diagnostics: Vec<String>,
    /// True when agreement tables were skipped for lack of human annotations.
    pub missing_annotations: bool,
}

impl Report {
    pub fn table(&self, file: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.file == file)
    }

    pub fn markdown(&self) -> String {
        let mut out = format!("# Method name report: {}\n\n", self.run_id);
        if !self.diagnostics.is_empty() {
            out.push_str("## Diagnostics\n\n");
            for d in &self.diagnostics {
                let _ = writeln!(out, "- {d}");
            }
            out.push('\n');
        }
        for t in &self.tables {
            out.push_str(&t.to_markdown());
            out.push('\n');
        }
        out.push_str("## Fleiss' kappa\n\n```\n");
        out.push_str(&self.fleiss);
        out.push_str("```\n");
        out
    }

    /// Writes every CSV, fleiss.txt and report.md into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| ReportError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let mut written = Vec::new();
        let mut put = |name: &str, content: String| -> Result<(), ReportError> {
            let path = dir.join(name);
            std::fs::write(&path, content).map_err(io(&path))?;
            written.push(path);
            Ok(())
        };
        for t in &self.tables {
            put(t.file, t.to_csv()?)?;
        }
        put("fleiss.txt", self.fleiss.clone())?;
        put("report.md", self.markdown())?;
        Ok(written)
    }
}

fn pct(num: usize, den: usize, decimals: usize) -> String {
    if den == 0 {
        return String::new();
    }
    format!("{:.*}%", decimals, num as f64 * 100.0 / den as f64)
}

fn fixed(x: f64, decimals: usize) -> String {
    format!("{x:.decimals$}")
}

/// Outputs restricted to `subset`, with `current_name` replaced by the real
/// method name so renames are measured against the source, not the echo.
fn restrict(outputs: &[RaterOutput], subset: &BTreeSet<String>, methods: &BTreeMap<String, MethodRecord>) -> Vec<RaterOutput> {
    outputs
        .iter()
        .filter(|o| subset.contains(&o.method_id))
        .map(|o| {
            let mut o = o.clone();
            if let Some(m) = methods.get(&o.method_id) {
                o.current_name = Some(m.name.clone());
            }
            o
        })
        .collect()
}

fn renamed_pairs(outputs: &[RaterOutput]) -> Vec<(SplitName, SplitName)> {
    outputs
        .iter()
        .filter_map(|o| {
            let (cur, cor) = (o.current_name.as_ref()?, o.corrected_name.as_ref()?);
            if cur == cor {
                return None;
            }
            Some((split_identifier(cur).ok()?, split_identifier(cor).ok()?))
        })
        .collect()
}

fn fleiss_text(raters: &[&String], items: &[&String], by_rater: &BTreeMap<String, Vec<RaterOutput>>) -> String {
    if raters.len() < 3 {
        return format!("Fleiss' kappa requires >=3 raters; this run has {}.\n", raters.len());
    }
    let mut out = format!(
        "raters: {}\nitems: {}\n",
        raters.iter().map(|r| r.as_str()).collect::<Vec<_>>().join(", "),
        items.len()
    );
    if items.is_empty() {
        out.push_str("no items in the common valid subset\n");
        return out;
    }
    let lookup: BTreeMap<(&str, &str), &RaterOutput> = by_rater
        .iter()
        .flat_map(|(r, outs)| outs.iter().map(move |o| ((r.as_str(), o.method_id.as_str()), o)))
        .collect();
    let labels = |f: &dyn Fn(&RaterOutput) -> String| -> Vec<Vec<String>> {
        items
            .iter()
            .map(|id| raters.iter().map(|r| f(lookup[&(r.as_str(), id.as_str())])).collect())
            .collect()
    };
    let patterns = labels(&|o| o.current_pattern.as_ref().map(ToString::to_string).unwrap_or_default());
    let names = labels(&|o| o.corrected_name.as_deref().map(normalize_name).unwrap_or_default());
    for (label, items) in [("grammar_pattern", patterns), ("corrected_name", names)] {
        match fleiss_kappa_labels(&items) {
            Ok(k) => {
                let _ = writeln!(
                    out,
                    "{label}: kappa {k:.3} (unanimous {} of {})",
                    unanimous_count(&items),
                    items.len()
                );
            }
            Err(e) => {
                let _ = writeln!(out, "{label}: {e}");
            }
        }
    }
    out
}

pub fn build_report(store: &Store, run_id: &str, top_k: usize, lex: &Lexicon) -> Result<Report, ReportError> {
    if store.run(run_id)?.is_none() {
        return Err(ReportError::UnknownRun(run_id.to_string()));
    }
    let by_rater = store.outputs(run_id)?;
    if by_rater.is_empty() {
        return Err(ReportError::NoRaters(run_id.to_string()));
    }
    let methods: BTreeMap<String, MethodRecord> = store.methods()?.into_iter().map(|m| (m.id.clone(), m)).collect();
    let annotations = store.annotations()?;
    let subset = common_valid_subset(&by_rater);
    let raters: Vec<&String> = by_rater.keys().collect();
    let mut diagnostics = Vec::new();
    if subset.is_empty() {
        diagnostics.push("common valid subset is empty: no method has a valid output from every rater".to_string());
    }

    let mut status = Table::new(
        "status_counts.csv",
        "Rater output status",
        &["rater", "total", "valid", "malformed", "hallucinated", "missing"],
    );
    for (rater, outs) in &by_rater {
        let c = status_counts(outs);
        let mut row = vec![rater.clone(), outs.len().to_string()];
        row.extend(Status::ALL.iter().map(|s| c[s].to_string()));
        status.rows.push(row);
    }
    let mut subset_table = Table::new("subset.csv", "Common valid subset", &["methods", "raters", "common_valid"]);
    subset_table
        .rows
        .push(vec![methods.len().to_string(), raters.len().to_string(), subset.len().to_string()]);

    let mut t1 = Table::new(
        "table1_agreement.csv",
        "Table 1: agreement with human grammar patterns",
        &["rater", "n", "matches", "accuracy", "cohen_kappa"],
    );
    let mut t2 = Table::new(
        "table2_misclassifications.csv",
        "Table 2: most common grammar pattern misclassifications",
        &["rater", "rank", "human_pattern", "rater_pattern", "count", "disagreements", "pct_of_disagreements"],
    );
    let mut t3 = Table::new(
        "table3_preservation.csv",
        "Table 3: original names preserved",
        &["rater", "n", "preserved", "preserved_pct", "changed", "changed_pct", "preserved_normalized"],
    );
    let mut t4 = Table::new(
        "table4_length_growth.csv",
        "Table 4: length of renamed methods",
        &[
            "rater",
            "renamed",
            "avg_words_original",
            "avg_words_corrected",
            "word_growth",
            "avg_chars_original",
            "avg_chars_corrected",
            "char_growth",
        ],
    );
    let mut t5 = Table::new(
        "table5_term_changes.csv",
        "Table 5: terms most often added and removed",
        &["rater", "change", "rank", "term", "count", "example_original", "example_corrected"],
    );
    let mut t6 = Table::new(
        "table6_tag_word_consistency.csv",
        "Table 6: tag count against word count of corrected names",
        &["rater", "n", "equal", "equal_pct", "more_tags", "more_tags_pct", "fewer_tags", "fewer_tags_pct"],
    );
    let mut t7 = Table::new(
        "table7_abbreviations.csv",
        "Table 7: abbreviations and acronyms expanded",
        &["rater", "instances", "not_expanded", "not_expanded_pct", "expanded", "expanded_pct"],
    );
    let mut vs = Table::new(
        "verb_start.csv",
        "Names starting with a verb",
        &["rater", "n", "current_verb_first", "current_pct", "corrected_verb_first", "corrected_pct"],
    );

    let missing_annotations = annotations.is_empty();
    if missing_annotations {
        diagnostics.push("no human annotations imported: agreement tables skipped".to_string());
    }

    for rater in &raters {
        let outs = restrict(&by_rater[*rater], &subset, &methods);

        if !missing_annotations {
            let q = store.query_pairs(run_id, rater, &subset)?;
            if q.omitted > 0 {
                diagnostics.push(format!("{rater}: {} methods without a human annotation left out of tables 1-2", q.omitted));
            }
            if let Ok(a) = agreement(&q.pairs) {
                t1.rows.push(vec![
                    rater.to_string(),
                    a.n.to_string(),
                    a.matches.to_string(),
                    fixed(a.accuracy, 3),
                    fixed(a.kappa, 3),
                ]);
            }
            let disagreements = q.pairs.iter().filter(|p| !p.agrees()).count();
            for (i, e) in misclassification_topk(&q.pairs, top_k).into_iter().enumerate() {
                t2.rows.push(vec![
                    rater.to_string(),
                    (i + 1).to_string(),
                    e.truth,
                    e.predicted,
                    e.count.to_string(),
                    disagreements.to_string(),
                    pct(e.count, disagreements, 2),
                ]);
            }
        }

        let p = preservation_rate(&outs);
        if p.n > 0 {
            t3.rows.push(vec![
                rater.to_string(),
                p.n.to_string(),
                p.preserved.to_string(),
                pct(p.preserved, p.n, 1),
                p.changed.to_string(),
                pct(p.changed, p.n, 1),
                p.preserved_normalized.to_string(),
            ]);
        }

        let renamed = renamed_pairs(&outs);
        if let Ok(g) = length_growth(&renamed) {
            t4.rows.push(vec![
                rater.to_string(),
                g.n.to_string(),
                fixed(round2(g.avg_words_original), 2),
                fixed(round2(g.avg_words_corrected), 2),
                format!("{:+.2}%", g.word_growth_pct),
                fixed(round2(g.avg_chars_original), 2),
                fixed(round2(g.avg_chars_corrected), 2),
                format!("{:+.2}%", g.char_growth_pct),
            ]);
        }

        let diffs: Vec<_> = renamed.iter().map(|(o, c)| term_diff(o, c)).collect();
        let changes = top_added_removed(&diffs, top_k);
        for (kind, list) in [("added", changes.added), ("removed", changes.removed)] {
            for (i, TermCount { term, count, example }) in list.into_iter().enumerate() {
                t5.rows.push(vec![
                    rater.to_string(),
                    kind.to_string(),
                    (i + 1).to_string(),
                    term,
                    count.to_string(),
                    example.0,
                    example.1,
                ]);
            }
        }

        let corrected: Vec<_> = outs
            .iter()
            .filter_map(|o| Some((split_identifier(o.corrected_name.as_ref()?).ok()?, o.corrected_pattern.clone()?)))
            .collect();
        let tally = tag_word_consistency(&corrected);
        let n = tally.total();
        if n > 0 {
            t6.rows.push(vec![
                rater.to_string(),
                n.to_string(),
                tally.equal.to_string(),
                pct(tally.equal, n, 2),
                tally.more_tags.to_string(),
                pct(tally.more_tags, n, 2),
                tally.fewer_tags.to_string(),
                pct(tally.fewer_tags, n, 2),
            ]);
        }

        let abbr = abbreviation_expansion_report(&outs, lex);
        if abbr.total() > 0 {
            t7.rows.push(vec![
                rater.to_string(),
                abbr.total().to_string(),
                abbr.not_expanded.to_string(),
                pct(abbr.not_expanded, abbr.total(), 2),
                abbr.expanded.to_string(),
                pct(abbr.expanded, abbr.total(), 2),
            ]);
        }

        let current: Vec<_> = outs.iter().filter_map(|o| o.current_pattern.clone()).collect();
        let fixed_up: Vec<_> = outs.iter().filter_map(|o| o.corrected_pattern.clone()).collect();
        if let (Ok(_), Ok(_)) = (verb_start_rate(&current), verb_start_rate(&fixed_up)) {
            let vc = current.iter().filter(|p| p.first() == crate::lexeme::Tag::V).count();
            let vf = fixed_up.iter().filter(|p| p.first() == crate::lexeme::Tag::V).count();
            vs.rows.push(vec![
                rater.to_string(),
                outs.len().to_string(),
                vc.to_string(),
                pct(vc, current.len(), 2),
                vf.to_string(),
                pct(vf, fixed_up.len(), 2),
            ]);
        }
    }

    let items: Vec<&String> = subset.iter().collect();
    let fleiss = fleiss_text(&raters, &items, &by_rater);

    let mut tables = vec![status, subset_table];
    if !missing_annotations {
        tables.push(t1);
        tables.push(t2);
    }
    tables.extend([t3, t4, t5, t6, t7, vs]);
    Ok(Report {
        run_id: run_id.to_string(),
        tables,
        fleiss,
        diagnostics,
        missing_annotations,
    })
}
