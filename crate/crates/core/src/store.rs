//! SQLite persistence for methods, annotations, runs and rater outputs.
//!
//! One database file holds a whole study. Table and column names are part of
//! the external interface:
//!
//! ```text
//! meta(key, value)
//! methods(id, name, source, notebook_path, cell_index, start_line)
//! annotations(method_id, pattern)
//! runs(run_id, timestamp, template_version, config_json, corpus_hash)
//! rater_outputs(run_id, method_id, rater_name, status, current_name,
//!               current_pattern, corrected_name, corrected_pattern, raw_response)
//! ```
//!
//! Patterns are stored as canonical tag strings (`V,NPL`), statuses in
//! lowercase and raw responses verbatim.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rusqlite::{params, Connection, OptionalExtension, Row};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::MethodRecord;
use crate::lexeme::GrammarPattern;
use crate::metrics::LabeledPair;
use crate::raters::{RaterOutput, Status};

pub const SCHEMA_VERSION: i64 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("database schema version {found:?} is not supported (expected {expected})")]
    IncompatibleSchema { found: Option<String>, expected: i64 },
    #[error("foreign key violation: {0}")]
    ForeignKeyViolation(String),
    #[error("corrupt row in {table}: {reason}")]
    Corrupt { table: &'static str, reason: String },
    #[error(transparent)]
    Sqlite(#[from] rusqlite::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    /// RFC 3339.
    pub timestamp: String,
    pub template_version: String,
    /// JSON snapshot of the rater configurations used.
    pub config_json: String,
    /// Hex SHA-256 over the method table, see [`corpus_fingerprint`].
    pub corpus_hash: String,
}

/// Result of [`Store::query_pairs`]: pairs ordered by method id, plus how many
/// subset members were dropped for lacking an annotation or a pattern.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairQuery {
    pub pairs: Vec<LabeledPair>,
    pub omitted: usize,
}

const SCHEMA: &str = "
CREATE TABLE meta (
    key   TEXT PRIMARY KEY,
    value TEXT NOT NULL
);
CREATE TABLE methods (
    id            TEXT PRIMARY KEY,
    name          TEXT NOT NULL,
    source        TEXT NOT NULL,
    notebook_path TEXT NOT NULL,
    cell_index    INTEGER NOT NULL,
    start_line    INTEGER NOT NULL
);
CREATE TABLE annotations (
    method_id TEXT PRIMARY KEY REFERENCES methods(id),
    pattern   TEXT NOT NULL
);
CREATE TABLE runs (
    run_id           TEXT PRIMARY KEY,
    timestamp        TEXT NOT NULL,
    template_version TEXT NOT NULL,
    config_json      TEXT NOT NULL,
    corpus_hash      TEXT NOT NULL
);
CREATE TABLE rater_outputs (
    run_id            TEXT NOT NULL REFERENCES runs(run_id),
    method_id         TEXT NOT NULL REFERENCES methods(id),
    rater_name        TEXT NOT NULL,
    status            TEXT NOT NULL,
    current_name      TEXT,
    current_pattern   TEXT,
    corrected_name    TEXT,
    corrected_pattern TEXT,
    raw_response      TEXT NOT NULL,
    PRIMARY KEY (run_id, method_id, rater_name)
);
";

pub struct Store {
    conn: Connection,
}

fn map_fk(err: rusqlite::Error, what: impl FnOnce() -> String) -> StoreError {
    if let rusqlite::Error::SqliteFailure(e, _) = &err {
        if e.extended_code == rusqlite::ffi::SQLITE_CONSTRAINT_FOREIGNKEY {
            return StoreError::ForeignKeyViolation(what());
        }
    }
    StoreError::Sqlite(err)
}

fn pattern_column(
    row: &Row<'_>,
    idx: usize,
    table: &'static str,
) -> Result<Option<GrammarPattern>, StoreError> {
    let text: Option<String> = row.get(idx)?;
    text.map(|t| {
        t.parse::<GrammarPattern>().map_err(|e| StoreError::Corrupt {
            table,
            reason: e.to_string(),
        })
    })
    .transpose()
}

impl Store {
    /// Opens or creates the database at `path` and makes sure the schema is
    /// present. Calling it again on the same file changes nothing.
    pub fn init_schema(path: impl AsRef<Path>) -> Result<Store, StoreError> {
        Self::setup(Connection::open(path)?)
    }

    pub fn in_memory() -> Result<Store, StoreError> {
        Self::setup(Connection::open_in_memory()?)
    }

    fn setup(conn: Connection) -> Result<Store, StoreError> {
        conn.pragma_update(None, "foreign_keys", true)?;
        let tables: i64 = conn.query_row(
            "SELECT COUNT(*) FROM sqlite_master WHERE type = 'table'",
            [],
            |r| r.get(0),
        )?;
        if tables == 0 {
            let tx = conn.unchecked_transaction()?;
            tx.execute_batch(SCHEMA)?;
            tx.execute(
                "INSERT INTO meta (key, value) VALUES ('schema_version', ?1)",
                [SCHEMA_VERSION.to_string()],
            )?;
            tx.commit()?;
        } else {
            let has_meta: i64 = conn.query_row(
                "SELECT COUNT(*) FROM sqlite_master WHERE type = 'table' AND name = 'meta'",
                [],
                |r| r.get(0),
            )?;
            let found: Option<String> = if has_meta == 1 {
                conn.query_row("SELECT value FROM meta WHERE key = 'schema_version'", [], |r| r.get(0))
                    .optional()?
            } else {
                None
            };
            if found.as_deref() != Some(SCHEMA_VERSION.to_string().as_str()) {
                return Err(StoreError::IncompatibleSchema {
                    found,
                    expected: SCHEMA_VERSION,
                });
            }
        }
        Ok(Store { conn })
    }

    pub fn schema_version(&self) -> Result<Option<String>, StoreError> {
        Ok(self
            .conn
            .query_row("SELECT value FROM meta WHERE key = 'schema_version'", [], |r| r.get(0))
            .optional()?)
    }

    pub fn connection(&self) -> &Connection {
        &self.conn
    }

    pub fn record_method(&self, m: &MethodRecord) -> Result<String, StoreError> {
        self.conn.execute(
            "INSERT INTO methods (id, name, source, notebook_path, cell_index, start_line)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6)
             ON CONFLICT(id) DO UPDATE SET name = excluded.name, source = excluded.source,
                notebook_path = excluded.notebook_path, cell_index = excluded.cell_index,
                start_line = excluded.start_line",
            params![m.id, m.name, m.source, m.notebook_path, m.cell_index as i64, m.start_line as i64],
        )?;
        Ok(m.id.clone())
    }

    pub fn record_methods(&self, methods: &[MethodRecord]) -> Result<usize, StoreError> {
        let tx = self.conn.unchecked_transaction()?;
        for m in methods {
            self.record_method(m)?;
        }
        tx.commit()?;
        Ok(methods.len())
    }

    /// Stores the human pattern for an existing method id.
    pub fn record_annotation(&self, method_id: &str, pattern: &GrammarPattern) -> Result<String, StoreError> {
        self.conn
            .execute(
                "INSERT INTO annotations (method_id, pattern) VALUES (?1, ?2)
                 ON CONFLICT(method_id) DO UPDATE SET pattern = excluded.pattern",
                params![method_id, pattern.to_string()],
            )
            .map_err(|e| map_fk(e, || format!("annotation for unknown method {method_id:?}")))?;
        Ok(method_id.to_string())
    }

    pub fn record_run(&self, run: &RunRecord) -> Result<String, StoreError> {
        self.conn.execute(
            "INSERT INTO runs (run_id, timestamp, template_version, config_json, corpus_hash)
             VALUES (?1, ?2, ?3, ?4, ?5)
             ON CONFLICT(run_id) DO UPDATE SET timestamp = excluded.timestamp,
                template_version = excluded.template_version, config_json = excluded.config_json,
                corpus_hash = excluded.corpus_hash",
            params![run.run_id, run.timestamp, run.template_version, run.config_json, run.corpus_hash],
        )?;
        Ok(run.run_id.clone())
    }

    pub fn record_output(&self, run_id: &str, o: &RaterOutput) -> Result<(String, String, String), StoreError> {
        self.conn
            .execute(
                "INSERT INTO rater_outputs (run_id, method_id, rater_name, status, current_name,
                    current_pattern, corrected_name, corrected_pattern, raw_response)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9)
                 ON CONFLICT(run_id, method_id, rater_name) DO UPDATE SET status = excluded.status,
                    current_name = excluded.current_name, current_pattern = excluded.current_pattern,
                    corrected_name = excluded.corrected_name,
                    corrected_pattern = excluded.corrected_pattern,
                    raw_response = excluded.raw_response",
                params![
                    run_id,
                    o.method_id,
                    o.rater_name,
                    o.status.as_str(),
                    o.current_name,
                    o.current_pattern.as_ref().map(ToString::to_string),
                    o.corrected_name,
                    o.corrected_pattern.as_ref().map(ToString::to_string),
                    o.raw_response,
                ],
            )
            .map_err(|e| {
                map_fk(e, || {
                    format!("output of {:?} references run {run_id:?} / method {:?}", o.rater_name, o.method_id)
                })
            })?;
        Ok((run_id.to_string(), o.method_id.clone(), o.rater_name.clone()))
    }

    /// Writes a batch of outputs in one transaction; nothing is kept if any
    /// row fails.
    pub fn record_outputs(&self, run_id: &str, outputs: &[RaterOutput]) -> Result<usize, StoreError> {
        let tx = self.conn.unchecked_transaction()?;
        for o in outputs {
            self.record_output(run_id, o)?;
        }
        tx.commit()?;
        Ok(outputs.len())
    }

    pub fn method_count(&self) -> Result<usize, StoreError> {
        let n: i64 = self.conn.query_row("SELECT COUNT(*) FROM methods", [], |r| r.get(0))?;
        Ok(n as usize)
    }

    /// All methods ordered by id.
    pub fn methods(&self) -> Result<Vec<MethodRecord>, StoreError> {
        let mut stmt = self.conn.prepare(
            "SELECT id, name, source, notebook_path, cell_index, start_line FROM methods ORDER BY id",
        )?;
        let rows = stmt.query_map([], |r| {
            Ok(MethodRecord {
                id: r.get(0)?,
                name: r.get(1)?,
                source: r.get(2)?,
                notebook_path: r.get(3)?,
                cell_index: r.get::<_, i64>(4)? as usize,
                start_line: r.get::<_, i64>(5)? as usize,
            })
        })?;
        Ok(rows.collect::<Result<_, _>>()?)
    }

    pub fn method(&self, id: &str) -> Result<Option<MethodRecord>, StoreError> {
        Ok(self.methods()?.into_iter().find(|m| m.id == id))
    }

    pub fn annotations(&self) -> Result<BTreeMap<String, GrammarPattern>, StoreError> {
        let mut stmt = self.conn.prepare("SELECT method_id, pattern FROM annotations ORDER BY method_id")?;
        let mut rows = stmt.query([])?;
        let mut out = BTreeMap::new();
        while let Some(row) = rows.next()? {
            let id: String = row.get(0)?;
            if let Some(p) = pattern_column(row, 1, "annotations")? {
                out.insert(id, p);
            }
        }
        Ok(out)
    }

    pub fn runs(&self) -> Result<Vec<RunRecord>, StoreError> {
        let mut stmt = self.conn.prepare(
            "SELECT run_id, timestamp, template_version, config_json, corpus_hash FROM runs ORDER BY run_id",
        )?;
        let rows = stmt.query_map([], |r| {
            Ok(RunRecord {
                run_id: r.get(0)?,
                timestamp: r.get(1)?,
                template_version: r.get(2)?,
                config_json: r.get(3)?,
                corpus_hash: r.get(4)?,
            })
        })?;
        Ok(rows.collect::<Result<_, _>>()?)
    }

    pub fn run(&self, run_id: &str) -> Result<Option<RunRecord>, StoreError> {
        Ok(self.runs()?.into_iter().find(|r| r.run_id == run_id))
    }

    /// Next free id of the form `run-0001`.
    pub fn next_run_id(&self) -> Result<String, StoreError> {
        let taken: BTreeSet<String> = self.runs()?.into_iter().map(|r| r.run_id).collect();
        let mut n = taken.len() + 1;
        loop {
            let id = format!("run-{n:04}");
            if !taken.contains(&id) {
                return Ok(id);
            }
            n += 1;
        }
    }

    /// Outputs of one run grouped by rater, each list ordered by method id.
    pub fn outputs(&self, run_id: &str) -> Result<BTreeMap<String, Vec<RaterOutput>>, StoreError> {
        let mut stmt = self.conn.prepare(
            "SELECT method_id, rater_name, status, current_name, current_pattern, corrected_name,
                    corrected_pattern, raw_response
             FROM rater_outputs WHERE run_id = ?1 ORDER BY rater_name, method_id",
        )?;
        let mut rows = stmt.query([run_id])?;
        let mut out: BTreeMap<String, Vec<RaterOutput>> = BTreeMap::new();
        while let Some(row) = rows.next()? {
            let status: String = row.get(2)?;
            let status: Status = status.parse().map_err(|_| StoreError::Corrupt {
                table: "rater_outputs",
                reason: format!("unknown status {status:?}"),
            })?;
            let o = RaterOutput {
                method_id: row.get(0)?,
                rater_name: row.get(1)?,
                status,
                current_name: row.get(3)?,
                current_pattern: pattern_column(row, 4, "rater_outputs")?,
                corrected_name: row.get(5)?,
                corrected_pattern: pattern_column(row, 6, "rater_outputs")?,
                raw_response: row.get(7)?,
            };
            out.entry(o.rater_name.clone()).or_default().push(o);
        }
        Ok(out)
    }

    /// Human pattern (`label_a`) against the rater's current pattern
    /// (`label_b`) for each subset member, ordered by method id.
    pub fn query_pairs(&self, run_id: &str, rater_name: &str, subset: &BTreeSet<String>) -> Result<PairQuery, StoreError> {
        let annotations = self.annotations()?;
        let outputs = self.outputs(run_id)?;
        let by_method: BTreeMap<&str, &RaterOutput> = outputs
            .get(rater_name)
            .map(|v| v.iter().map(|o| (o.method_id.as_str(), o)).collect())
            .unwrap_or_default();
        let mut result = PairQuery::default();
        for id in subset {
            let human = annotations.get(id);
            let rater = by_method.get(id.as_str()).and_then(|o| o.current_pattern.as_ref());
            match (human, rater) {
                (Some(h), Some(r)) => result.pairs.push(LabeledPair::new(id.clone(), h.to_string(), r.to_string())),
                _ => result.omitted += 1,
            }
        }
        Ok(result)
    }

    /// Maps a method name to the ids carrying it, for importing annotations
    /// keyed by name.
    pub fn ids_by_name(&self) -> Result<BTreeMap<String, Vec<String>>, StoreError> {
        let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for m in self.methods()? {
            out.entry(m.name).or_default().push(m.id);
        }
        Ok(out)
    }
}

/// Hex SHA-256 over (id, source) of every method, in id order.
pub fn corpus_fingerprint(methods: &[MethodRecord]) -> String {
    let mut sorted: Vec<&MethodRecord> = methods.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut h = Sha256::new();
    for m in sorted {
        for part in [m.id.as_bytes(), m.source.as_bytes()] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part);
        }
    }
    hex::encode(h.finalize())
}
