//! The `namegauge` command line.

pub mod report;

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::corpus::{extract_methods_with_diagnostics, import_annotations, parse_notebook};
use crate::lexeme::split_identifier;
use crate::raters::{run_rater, run_rule_rater, status_counts, RaterConfig, RaterError, RaterMode, Status, TEMPLATE_VERSION};
use crate::store::{corpus_fingerprint, RunRecord, Store};
use crate::tagger::{lint_name, rule_tag, Lexicon};

pub use report::{build_report, Report, ReportError, DEFAULT_TOP_K};

/// Exit status when lint emits findings.
pub const EXIT_FINDINGS: i32 = 1;
/// Exit status for any error.
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "namegauge", version, about = "Method-name analysis for Jupyter notebooks")]
pub struct Cli {
    /// Word lists for the rule tagger and lint (defaults to the built-in lexicon).
    #[arg(long, global = true, value_name = "FILE")]
    pub lexicon: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract method definitions from notebooks into the database.
    Ingest {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(long)]
        db: PathBuf,
    },
    /// Human annotation tables.
    Annotations {
        #[command(subcommand)]
        action: AnnotationsCommand,
    },
    /// Ask the configured raters for patterns and renames.
    Rate {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Overrides the mode of every configured rater.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Adds the built-in rule tagger as a rater named "rule".
        #[arg(long)]
        rule_rater: bool,
    },
    /// Write the report tables for a run.
    Report {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        run: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOP_K)]
        top_k: usize,
    },
    /// Lint method names given as arguments, on stdin, or stored in a database.
    Lint {
        names: Vec<String>,
        #[arg(long, conflicts_with = "names")]
        db: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum AnnotationsCommand {
    /// Import a `method_key,pattern` CSV.
    Import {
        file: PathBuf,
        #[arg(long)]
        db: PathBuf,
        /// What `method_key` holds.
        #[arg(long, value_enum, default_value_t = KeyKind::Name)]
        key: KeyKind,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KeyKind {
    /// A method name; applies to every stored method with that name.
    Name,
    /// A stored method id.
    Id,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Live,
    Replay,
}

impl From<ModeArg> for RaterMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Live => RaterMode::Live,
            ModeArg::Replay => RaterMode::Replay,
        }
    }
}

/// Rater config file:
///
/// ```toml
/// rule_rater = true
///
/// [[rater]]
/// name = "gemini"
/// mode = "replay"
/// fixtures = "replies/gemini"
/// ```
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatersFile {
    #[serde(default)]
    pub rule_rater: bool,
    #[serde(default, rename = "rater")]
    pub raters: Vec<RaterConfig>,
}

impl RatersFile {
    /// Reads the file and resolves relative fixture directories against the
    /// file's own directory.
    pub fn load(path: &Path) -> Result<RatersFile, RaterError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RaterError::Config(format!("{}: {e}", path.display())))?;
        let mut file: RatersFile =
            toml::from_str(&text).map_err(|e| RaterError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for r in &mut file.raters {
            if let Some(dir) = &r.fixtures {
                if dir.is_relative() {
                    r.fixtures = Some(base.join(dir));
                }
            }
        }
        Ok(file)
    }
}

fn load_lexicon(path: Option<&Path>) -> Result<Lexicon> {
    match path {
        Some(p) => Lexicon::load(p).with_context(|| format!("loading lexicon {}", p.display())),
        None => Ok(Lexicon::builtin()),
    }
}

pub fn run(cli: Cli, out: &mut dyn Write, input: &mut dyn BufRead) -> Result<i32> {
    let lex = load_lexicon(cli.lexicon.as_deref())?;
    match cli.command {
        Command::Ingest { paths, db } => cmd_ingest(&paths, &db, out),
        Command::Annotations {
            action: AnnotationsCommand::Import { file, db, key },
        } => cmd_import_annotations(&file, &db, key, out),
        Command::Rate {
            db,
            config,
            mode,
            rule_rater,
        } => cmd_rate(&db, &config, mode.map(Into::into), rule_rater, &lex, out).map(|_| 0),
        Command::Report { db, run, out: dir, top_k } => cmd_report(&db, &run, &dir, top_k, &lex, out),
        Command::Lint { names, db } => cmd_lint(&names, db.as_deref(), &lex, input, out),
    }
}

/// Notebook files under `paths`, directories walked recursively in sorted
/// order. Checkpoint copies are skipped.
pub fn notebook_files(paths: &[PathBuf]) -> Vec<PathBuf> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let walker = walkdir::WalkDir::new(p)
                .sort_by_file_name()
                .into_iter()
                .filter_entry(|e| e.file_name() != ".ipynb_checkpoints");
            for entry in walker.filter_map(|e| e.ok()) {
                if entry.file_type().is_file() && entry.path().extension().is_some_and(|x| x == "ipynb") {
                    files.push(entry.into_path());
                }
            }
        } else {
            files.push(p.clone());
        }
    }
    files
}

pub fn cmd_ingest(paths: &[PathBuf], db: &Path, out: &mut dyn Write) -> Result<i32> {
    let store = Store::init_schema(db)?;
    let files = notebook_files(paths);
    let (mut parsed, mut failed, mut methods) = (0usize, 0usize, 0usize);
    for file in &files {
        let display = file.to_string_lossy().replace('\\', "/");
        let doc = std::fs::read(file)
            .map_err(|e| e.to_string())
            .and_then(|bytes| parse_notebook(&display, &bytes).map_err(|e| e.to_string()));
        match doc {
            Ok(doc) => {
                let ex = extract_methods_with_diagnostics(&doc);
                for d in &ex.diagnostics {
                    log::warn!("{d}");
                }
                store.record_methods(&ex.methods)?;
                methods += ex.methods.len();
                parsed += 1;
            }
            Err(e) => {
                log::error!("{display}: {e}");
                writeln!(out, "failed: {display}: {e}")?;
                failed += 1;
            }
        }
    }
    writeln!(out, "{parsed} notebooks parsed, {methods} methods found, {failed} failures")?;
    Ok(if failed > 0 && parsed == 0 { EXIT_ERROR } else { 0 })
}

pub fn cmd_import_annotations(file: &Path, db: &Path, key: KeyKind, out: &mut dyn Write) -> Result<i32> {
    let store = Store::init_schema(db)?;
    let reader = std::fs::File::open(file).with_context(|| format!("opening {}", file.display()))?;
    let import = import_annotations(reader)?;
    for r in &import.rejected {
        writeln!(out, "rejected row {}: {}", r.row, r.error)?;
    }
    let by_name = store.ids_by_name()?;
    let known: BTreeSet<String> = store.methods()?.into_iter().map(|m| m.id).collect();
    let (mut stored, mut unknown) = (0usize, 0usize);
    for rec in &import.records {
        let ids: Vec<String> = match key {
            KeyKind::Id if known.contains(&rec.method_key) => vec![rec.method_key.clone()],
            KeyKind::Id => Vec::new(),
            KeyKind::Name => by_name.get(&rec.method_key).cloned().unwrap_or_default(),
        };
        if ids.is_empty() {
            writeln!(out, "unknown method {:?}", rec.method_key)?;
            unknown += 1;
        }
        for id in ids {
            store.record_annotation(&id, &rec.pattern)?;
            stored += 1;
        }
    }
    writeln!(
        out,
        "{stored} annotations stored, {} rows rejected, {unknown} unknown methods",
        import.rejected.len()
    )?;
    Ok(0)
}

/// Runs every configured rater over the stored methods and records the run.
pub fn cmd_rate(
    db: &Path,
    config: &Path,
    mode: Option<RaterMode>,
    rule_rater: bool,
    lex: &Lexicon,
    out: &mut dyn Write,
) -> Result<String> {
    let mut file = RatersFile::load(config)?;
    if let Some(mode) = mode {
        for r in &mut file.raters {
            r.mode = mode;
        }
    }
    for r in &file.raters {
        r.validate()?;
    }
    let mut names = BTreeSet::new();
    for r in &file.raters {
        if !names.insert(r.name.as_str()) {
            return Err(RaterError::Config(format!("rater {:?} configured twice", r.name)).into());
        }
    }
    let use_rule = rule_rater || file.rule_rater;
    if file.raters.is_empty() && !use_rule {
        return Err(RaterError::Config("no raters configured".into()).into());
    }
    let store = Store::init_schema(db)?;
    let methods = store.methods()?;
    if methods.is_empty() {
        bail!("no methods in {}; run ingest first", db.display());
    }

    let run_id = store.next_run_id()?;
    let run = RunRecord {
        run_id: run_id.clone(),
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        template_version: TEMPLATE_VERSION.to_string(),
        config_json: serde_json::to_string(&serde_json::json!({
            "rule_rater": use_rule,
            "raters": file.raters,
            "extraction": { "nested_defs": true, "lambdas": false },
        }))?,
        corpus_hash: corpus_fingerprint(&methods),
    };

    let mut results = Vec::new();
    for cfg in &file.raters {
        log::info!("rating {} methods with {}", methods.len(), cfg.name);
        results.push(run_rater(cfg, &methods)?);
    }
    if use_rule {
        results.push(run_rule_rater(&methods, lex));
    }

    store.record_run(&run)?;
    writeln!(out, "{run_id}")?;
    for outputs in &results {
        store.record_outputs(&run_id, outputs)?;
        let name = outputs.first().map(|o| o.rater_name.as_str()).unwrap_or("?");
        let c = status_counts(outputs);
        let counts: Vec<String> = Status::ALL.iter().map(|s| format!("{s} {}", c[s])).collect();
        writeln!(out, "{name}: {}", counts.join(", "))?;
    }
    Ok(run_id)
}

pub fn cmd_report(db: &Path, run_id: &str, dir: &Path, top_k: usize, lex: &Lexicon, out: &mut dyn Write) -> Result<i32> {
    if !db.exists() {
        bail!("database {} does not exist", db.display());
    }
    let store = Store::init_schema(db)?;
    let report = build_report(&store, run_id, top_k, lex)?;
    for d in &report.diagnostics {
        log::warn!("{d}");
        writeln!(out, "warning: {d}")?;
    }
    let written = report.write_to(dir)?;
    writeln!(out, "{} files written to {}", written.len(), dir.display())?;
    Ok(0)
}

/// One line per finding, `name: Code: message`. Returns the number of findings.
pub fn lint_lines(label: &str, name: &str, lex: &Lexicon, out: &mut dyn Write) -> Result<usize> {
    let split = match split_identifier(name) {
        Ok(s) => s,
        Err(e) => {
            writeln!(out, "{label}: InvalidIdentifier: {e}")?;
            return Ok(1);
        }
    };
    let pattern = rule_tag(&split, lex);
    let findings = lint_name(&split, &pattern, lex).map_err(|e| anyhow!(e))?;
    for f in &findings {
        writeln!(out, "{label}: {}: {}", f.code, f.message)?;
    }
    Ok(findings.len())
}

pub fn cmd_lint(names: &[String], db: Option<&Path>, lex: &Lexicon, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<i32> {
    let mut findings = 0;
    if let Some(db) = db {
        let store = Store::init_schema(db)?;
        for m in store.methods()? {
            findings += lint_lines(&format!("{} ({})", m.name, m.id), &m.name, lex, out)?;
        }
    } else if !names.is_empty() {
        for n in names {
            findings += lint_lines(n, n, lex, out)?;
        }
    } else {
        let mut text = String::new();
        input.read_to_string(&mut text)?;
        for n in text.split_whitespace() {
            findings += lint_lines(n, n, lex, out)?;
        }
    }
    Ok(if findings > 0 { EXIT_FINDINGS } else { 0 })
}
