//! Notebook parsing, method extraction and annotation import.
//!
//! Methods are recovered by indentation block-scanning rather than by a
//! Python grammar, so cells holding partial or invalid code still yield their
//! definitions. A small string-state tracker keeps `def` lines that live
//! inside triple-quoted strings from being reported.

use std::io::Read;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::lexeme::{parse_pattern, GrammarPattern, LexemeError};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed notebook {path}: {reason}")]
    MalformedNotebook { path: String, reason: String },
    #[error("annotation table: {0}")]
    AnnotationFormat(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeCell {
    pub index: usize,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NotebookDocument {
    pub path: String,
    pub cells: Vec<CodeCell>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodRecord {
    pub id: String,
    pub name: String,
    pub source: String,
    pub notebook_path: String,
    pub cell_index: usize,
    /// 1-based line of the `def` within its cell.
    pub start_line: usize,
}

impl MethodRecord {
    pub fn make_id(notebook_path: &str, cell_index: usize, start_line: usize, name: &str) -> String {
        format!("{notebook_path}:{cell_index}:{start_line}:{name}")
    }
}

/// Reads a notebook document. Code cells keep file order and are renumbered
/// from 0; markdown and raw cells are dropped.
pub fn parse_notebook(path: &str, bytes: &[u8]) -> Result<NotebookDocument, CorpusError> {
    let malformed = |reason: String| CorpusError::MalformedNotebook {
        path: path.to_string(),
        reason,
    };
    let text = std::str::from_utf8(bytes).map_err(|e| malformed(format!("not UTF-8: {e}")))?;
    let root: Value = serde_json::from_str(text).map_err(|e| malformed(e.to_string()))?;
    let root = root
        .as_object()
        .ok_or_else(|| malformed("top level is not an object".into()))?;

    // nbformat 4 keeps cells at the top level; nbformat 3 nests them in worksheets
    // and calls the cell text "input".
    let raw_cells: Vec<(&Value, &str)> = match (root.get("cells"), root.get("worksheets")) {
        (Some(cells), _) => cells
            .as_array()
            .ok_or_else(|| malformed("\"cells\" is not an array".into()))?
            .iter()
            .map(|c| (c, "source"))
            .collect(),
        (None, Some(sheets)) => {
            let sheets = sheets
                .as_array()
                .ok_or_else(|| malformed("\"worksheets\" is not an array".into()))?;
            let mut all = Vec::new();
            for sheet in sheets {
                let cells = sheet
                    .get("cells")
                    .and_then(Value::as_array)
                    .ok_or_else(|| malformed("worksheet without a cells array".into()))?;
                all.extend(cells.iter().map(|c| (c, "input")));
            }
            all
        }
        (None, None) => return Err(malformed("missing \"cells\"".into())),
    };

    let mut cells = Vec::new();
    for (position, (cell, source_key)) in raw_cells.into_iter().enumerate() {
        let cell_type = cell
            .get("cell_type")
            .and_then(Value::as_str)
            .ok_or_else(|| malformed(format!("cell {position} has no cell_type")))?;
        if cell_type != "code" {
            continue;
        }
        let source = match cell.get(source_key) {
            None | Some(Value::Null) => String::new(),
            Some(Value::String(s)) => s.clone(),
            Some(Value::Array(lines)) => lines
                .iter()
                .map(|l| {
                    l.as_str()
                        .ok_or_else(|| malformed(format!("cell {position} source has a non-string line")))
                })
                .collect::<Result<String, _>>()?,
            Some(_) => return Err(malformed(format!("cell {position} source has an unexpected type"))),
        };
        cells.push(CodeCell {
            index: cells.len(),
            source,
        });
    }
    Ok(NotebookDocument {
        path: path.to_string(),
        cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum StringState {
    Code,
    Triple(char),
}

struct LineScan {
    state_after: StringState,
    bracket_delta: i64,
}

/// Tracks triple-quoted strings and bracket depth across one line.
fn scan_line(line: &str, mut state: StringState) -> LineScan {
    let chars: Vec<char> = line.chars().collect();
    let mut delta = 0i64;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match state {
            StringState::Triple(q) => {
                if c == '\\' {
                    i += 2;
                    continue;
                }
                if c == q && chars.get(i + 1) == Some(&q) && chars.get(i + 2) == Some(&q) {
                    state = StringState::Code;
                    i += 3;
                    continue;
                }
                i += 1;
            }
            StringState::Code => match c {
                '#' => break,
                '(' | '[' | '{' => {
                    delta += 1;
                    i += 1;
                }
                ')' | ']' | '}' => {
                    delta -= 1;
                    i += 1;
                }
                '\'' | '"' => {
                    if chars.get(i + 1) == Some(&c) && chars.get(i + 2) == Some(&c) {
                        state = StringState::Triple(c);
                        i += 3;
                        continue;
                    }
                    i += 1;
                    while i < chars.len() && chars[i] != c {
                        if chars[i] == '\\' {
                            i += 1;
                        }
                        i += 1;
                    }
                    i += 1;
                }
                _ => i += 1,
            },
        }
    }
    LineScan {
        state_after: state,
        bracket_delta: delta,
    }
}

fn indent_width(line: &str) -> usize {
    let mut width = 0;
    for c in line.chars() {
        match c {
            ' ' => width += 1,
            '\t' => width = (width / 8 + 1) * 8,
            _ => break,
        }
    }
    width
}

fn is_blank_or_comment(line: &str) -> bool {
    let t = line.trim();
    t.is_empty() || t.starts_with('#')
}

fn def_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^[ \t]*(?:async[ \t]+)?def[ \t]+([^\W\d]\w*)[ \t]*\(").expect("valid regex")
    })
}

struct LineInfo {
    in_string: bool,
    in_brackets: bool,
    depth_after: i64,
}

fn line_infos(lines: &[&str]) -> (Vec<LineInfo>, StringState) {
    let mut state = StringState::Code;
    let mut depth = 0i64;
    let mut infos = Vec::with_capacity(lines.len());
    for line in lines {
        let in_string = state != StringState::Code;
        let in_brackets = depth > 0;
        let scan = scan_line(line, state);
        state = scan.state_after;
        depth = (depth + scan.bracket_delta).max(0);
        infos.push(LineInfo {
            in_string,
            in_brackets,
            depth_after: depth,
        });
    }
    (infos, state)
}

/// A `def` located in a cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DefinitionSpan {
    pub name: String,
    /// 0-based line of the `def` keyword.
    pub def_line: usize,
    /// 0-based first line (a decorator, when present) and last line, inclusive.
    pub first_line: usize,
    pub last_line: usize,
}

/// Finds every function definition in a block of Python source.
///
/// Returns `Err` with a reason when the cell cannot be block-scanned.
pub fn scan_definitions(source: &str) -> Result<Vec<DefinitionSpan>, String> {
    let lines: Vec<&str> = source.split('\n').collect();
    let (infos, final_state) = line_infos(&lines);
    if final_state != StringState::Code {
        return Err("unterminated triple-quoted string".into());
    }

    let mut spans = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if infos[i].in_string || infos[i].in_brackets {
            continue;
        }
        let Some(caps) = def_regex().captures(line) else {
            continue;
        };
        let name = caps[1].to_string();
        let indent = indent_width(line);

        let mut header_end = i;
        while header_end + 1 < lines.len() && infos[header_end].depth_after > 0 {
            header_end += 1;
        }

        let mut last = header_end;
        for (j, candidate) in lines.iter().enumerate().skip(header_end + 1) {
            let info = &infos[j];
            if info.in_string || info.in_brackets {
                last = j;
            } else if is_blank_or_comment(candidate) {
                continue;
            } else if indent_width(candidate) > indent {
                last = j;
            } else {
                break;
            }
        }

        let mut first = i;
        while first > 0 {
            let above = lines[first - 1];
            let info = &infos[first - 1];
            if !info.in_string
                && !info.in_brackets
                && indent_width(above) == indent
                && above.trim_start().starts_with('@')
            {
                first -= 1;
            } else {
                break;
            }
        }

        spans.push(DefinitionSpan {
            name,
            def_line: i,
            first_line: first,
            last_line: last,
        });
    }
    Ok(spans)
}

/// Extraction result with per-cell diagnostics for cells that were skipped.
#[derive(Debug, Clone, Default)]
pub struct Extraction {
    pub methods: Vec<MethodRecord>,
    pub diagnostics: Vec<String>,
}

pub fn extract_methods_with_diagnostics(doc: &NotebookDocument) -> Extraction {
    let mut out = Extraction::default();
    for cell in &doc.cells {
        match scan_definitions(&cell.source) {
            Ok(spans) => {
                let lines: Vec<&str> = cell.source.split('\n').collect();
                for span in spans {
                    let start_line = span.def_line + 1;
                    out.methods.push(MethodRecord {
                        id: MethodRecord::make_id(&doc.path, cell.index, start_line, &span.name),
                        source: lines[span.first_line..=span.last_line].join("\n"),
                        name: span.name,
                        notebook_path: doc.path.clone(),
                        cell_index: cell.index,
                        start_line,
                    });
                }
            }
            Err(reason) => {
                let msg = format!("{} cell {}: skipped ({reason})", doc.path, cell.index);
                log::warn!("{msg}");
                out.diagnostics.push(msg);
            }
        }
    }
    out
}

/// One record per `def`, nested definitions included.
pub fn extract_methods(doc: &NotebookDocument) -> Vec<MethodRecord> {
    extract_methods_with_diagnostics(doc).methods
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub method_key: String,
    pub pattern: GrammarPattern,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectedRow {
    /// 1-based data row, header excluded.
    pub row: usize,
    pub error: LexemeError,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnnotationImport {
    pub records: Vec<AnnotationRecord>,
    pub rejected: Vec<RejectedRow>,
}

/// Reads a `method_key,pattern` CSV. Rows with unknown tags are rejected
/// individually; the rest of the file still imports.
pub fn import_annotations<R: Read>(reader: R) -> Result<AnnotationImport, CorpusError> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv
        .headers()
        .map_err(|e| CorpusError::AnnotationFormat(e.to_string()))?
        .clone();
    if headers.len() != 2 || &headers[0] != "method_key" || &headers[1] != "pattern" {
        return Err(CorpusError::AnnotationFormat(format!(
            "expected header `method_key,pattern`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = AnnotationImport::default();
    for (i, row) in csv.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| CorpusError::AnnotationFormat(e.to_string()))?;
        match parse_pattern(&row[1]) {
            Ok(pattern) => out.records.push(AnnotationRecord {
                method_key: row[0].to_string(),
                pattern,
            }),
            Err(error) => {
                log::warn!("annotation row {row_no}: {error}");
                out.rejected.push(RejectedRow { row: row_no, error });
            }
        }
    }
    Ok(out)
}
