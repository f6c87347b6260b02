#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use namegauge::corpus::MethodRecord;
use namegauge::lexeme::{parse_pattern, Tag};
use namegauge::raters::{RaterOutput, Status};
use namegauge::store::{RunRecord, Store};

pub const RUN_ID: &str = "run-0001";
pub const RATER: &str = "gemini";

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_namegauge"))
}

/// Runs the binary in `dir` and returns its output.
pub fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("spawn namegauge")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Copies the fixture notebooks into `dir/notebooks` so method ids do not
/// depend on where the repository lives.
pub fn stage_notebooks(dir: &Path) {
    let target = dir.join("notebooks");
    std::fs::create_dir_all(&target).unwrap();
    for entry in std::fs::read_dir(fixtures().join("notebooks")).unwrap() {
        let entry = entry.unwrap();
        std::fs::copy(entry.path(), target.join(entry.file_name())).unwrap();
    }
}

/// `n` identifier words built from `letter`, with `letters` characters in
/// total spread as evenly as possible.
fn word_name(letter: char, words: usize, letters: usize) -> String {
    (0..words)
        .map(|i| {
            let len = letters / words + usize::from(i < letters % words);
            std::iter::repeat_n(letter, len).collect::<String>()
        })
        .collect::<Vec<_>>()
        .join("_")
}

/// Splits `total` into `parts` near-equal shares.
fn shares(total: usize, parts: usize) -> Vec<usize> {
    (0..parts).map(|i| total / parts + usize::from(i < total % parts)).collect()
}

struct Row {
    name: String,
    corrected: String,
}

/// Rename rows for one rater over 496 methods:
///
/// - 324 names kept, 53 of them holding an abbreviation (`save_png`)
/// - 52 `mse` renamed to `calculate_mean_squared_error` (expanded)
/// - 35 `load_csv` renamed to `load_csv_file` (not expanded)
/// - 85 renames of filler names; the fillers use only the letters z and q
///   so they add no abbreviations and no dictionary words
///
/// Renamed totals: 306 -> 477 words and 1868 -> 3091 characters.
fn rename_rows() -> Vec<Row> {
    let mut rows = Vec::new();
    let kept = |name: String| Row {
        corrected: name.clone(),
        name,
    };
    for i in 0..53 {
        rows.push(kept(format!("save_png{}", "_z".repeat(i % 3))));
    }
    for i in 0..(324 - 53) {
        rows.push(kept(word_name('z', 1 + i % 3, 6 + i % 5)));
    }
    for _ in 0..52 {
        rows.push(Row {
            name: "mse".into(),
            corrected: "calculate_mean_squared_error".into(),
        });
    }
    for _ in 0..35 {
        rows.push(Row {
            name: "load_csv".into(),
            corrected: "load_csv_file".into(),
        });
    }
    // originals: 14 three-word + 71 two-word names = 184 words, 1432 chars
    // corrected: 79 two-word + 6 one-word names = 164 words, 1180 chars
    let orig_words: Vec<usize> = (0..85).map(|i| if i < 14 { 3 } else { 2 }).collect();
    let corr_words: Vec<usize> = (0..85).map(|i| if i < 79 { 2 } else { 1 }).collect();
    let orig_letters = shares(1432 - (184 - 85), 85);
    let corr_letters = shares(1180 - (164 - 85), 85);
    for i in 0..85 {
        rows.push(Row {
            name: word_name('z', orig_words[i], orig_letters[i].max(orig_words[i])),
            corrected: word_name('q', corr_words[i], corr_letters[i].max(corr_words[i])),
        });
    }
    rows
}

fn method(i: usize, name: &str) -> MethodRecord {
    let path = "synthetic.ipynb";
    MethodRecord {
        id: MethodRecord::make_id(path, i, 1, name),
        name: name.to_string(),
        source: format!("def {name}():\n    pass\n"),
        notebook_path: path.into(),
        cell_index: i,
        start_line: 1,
    }
}

/// Human pattern and rater pattern for item `i`: 303 agreements and 193
/// disagreements, of which 16 are N -> PRE, 11 VM -> V, 9 V,NPL -> V,N and the
/// remaining 157 distinct combinations of two-tag patterns.
fn label_pair(i: usize) -> (String, String) {
    if i < 303 {
        return ("V,N".into(), "V,N".into());
    }
    let j = i - 303;
    match j {
        0..=15 => ("N".into(), "PRE".into()),
        16..=26 => ("VM".into(), "V".into()),
        27..=35 => ("V,NPL".into(), "V,N".into()),
        _ => {
            let k = j - 36;
            let suffix = if k < 121 { "N" } else { "NPL" };
            let truth = format!("{},{suffix}", Tag::ALL[k / 11 % 11]);
            let predicted = format!("{},NM", Tag::ALL[k % 11]);
            (truth, predicted)
        }
    }
}

/// Corrected pattern with an arity chosen so the corrected names score
/// 475 equal, 19 more tags, 2 fewer tags.
fn corrected_pattern(i: usize, corrected: &str) -> String {
    let words = namegauge::lexeme::split_identifier(corrected).unwrap().word_count();
    let tags = if i < 19 {
        words + 1
    } else if (19..21).contains(&i) {
        assert!(words >= 2, "fewer-tag rows need a multi-word name");
        words - 1
    } else {
        words
    };
    let mut parts = vec!["V"];
    parts.extend(std::iter::repeat_n("N", tags - 1));
    parts.join(",")
}

/// One run of one rater over 496 methods with the counts listed above.
pub fn gemini_store() -> Store {
    fill_gemini(Store::in_memory().unwrap())
}

pub fn gemini_store_at(path: &Path) -> Store {
    fill_gemini(Store::init_schema(path).unwrap())
}

fn fill_gemini(store: Store) -> Store {
    store
        .record_run(&RunRecord {
            run_id: RUN_ID.into(),
            timestamp: "2025-01-01T00:00:00Z".into(),
            template_version: namegauge::raters::TEMPLATE_VERSION.into(),
            config_json: "{}".into(),
            corpus_hash: String::new(),
        })
        .unwrap();
    let rows = rename_rows();
    assert_eq!(rows.len(), 496);
    // the fewer-tag slots must land on renamed multi-word names
    let mut order: Vec<usize> = (0..496).collect();
    order.sort_by_key(|&i| if rows[i].corrected.starts_with("calculate") { 0 } else { 1 });
    let mut arity_slot = vec![0; 496];
    for (slot, &i) in order.iter().enumerate() {
        arity_slot[i] = (slot + 19) % 496;
    }
    for (i, row) in rows.iter().enumerate() {
        let m = method(i, &row.name);
        store.record_method(&m).unwrap();
        let (human, rated) = label_pair(i);
        store.record_annotation(&m.id, &parse_pattern(&human).unwrap()).unwrap();
        let corrected = corrected_pattern(arity_slot[i], &row.corrected);
        let out = RaterOutput {
            method_id: m.id.clone(),
            rater_name: RATER.into(),
            status: Status::Valid,
            current_name: Some(row.name.clone()),
            current_pattern: Some(parse_pattern(&rated).unwrap()),
            corrected_name: Some(row.corrected.clone()),
            corrected_pattern: Some(parse_pattern(&corrected).unwrap()),
            raw_response: String::new(),
        };
        store.record_output(RUN_ID, &out).unwrap();
    }
    store
}
