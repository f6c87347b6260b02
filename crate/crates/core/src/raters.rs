//! Prompting LLM raters and validating what they send back.
//!
//! Every rater sees the same versioned prompt. Replies are reduced to a
//! [`RaterOutput`] whose [`Status`] records whether the reply was usable:
//! `Malformed` when no complete structured object could be read,
//! `Hallucinated` when the reply describes some other method, `Missing` when
//! no reply arrived at all. Raw replies are always kept so parsing can be
//! re-run without querying a model again.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::corpus::MethodRecord;
use crate::lexeme::{parse_pattern, split_identifier, GrammarPattern, Tag};
use crate::tagger::{rule_tag, Lexicon};

pub const TEMPLATE_VERSION: &str = "namegauge-prompt/1";

pub const KEY_CURRENT_NAME: &str = "current_method_name";
pub const KEY_CURRENT_PATTERN: &str = "current_grammar_pattern";
pub const KEY_CORRECTED_NAME: &str = "corrected_method_name";
pub const KEY_CORRECTED_PATTERN: &str = "corrected_grammar_pattern";

/// Name of the built-in rule-tagger rater.
pub const RULE_RATER: &str = "rule";

const API_KEY_PREFIX: &str = "NAMEGAUGE_API_KEY_";

#[derive(Debug, Error)]
pub enum RaterError {
    #[error("rater config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Error)]
#[error("{0}")]
pub struct TransportError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RaterMode {
    Live,
    Replay,
}

fn default_max_retries() -> u32 {
    3
}
fn default_timeout_secs() -> u64 {
    120
}
fn default_concurrency() -> usize {
    4
}
fn default_backoff_ms() -> u64 {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterConfig {
    pub name: String,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model_id: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    pub mode: RaterMode,
    /// Directory of recorded replies; required in replay mode.
    #[serde(default)]
    pub fixtures: Option<PathBuf>,
    /// In-flight request limit.
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    /// First retry delay; doubles on each further attempt.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

impl RaterConfig {
    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }

    /// Checks everything that can be checked before the first request.
    pub fn validate(&self) -> Result<(), RaterError> {
        let err = |m: String| Err(RaterError::Config(format!("rater {:?}: {m}", self.name)));
        if self.name.trim().is_empty() {
            return Err(RaterError::Config("rater name is empty".into()));
        }
        if self.name == RULE_RATER {
            return err(format!("the name {RULE_RATER:?} is reserved for the built-in rule tagger"));
        }
        if self.concurrency == 0 {
            return err("concurrency must be at least 1".into());
        }
        match self.mode {
            RaterMode::Replay => match &self.fixtures {
                None => err("replay mode requires a fixtures directory".into()),
                Some(dir) if !dir.is_dir() => {
                    err(format!("fixtures directory {} does not exist", dir.display()))
                }
                Some(_) => Ok(()),
            },
            RaterMode::Live => match self.endpoint.as_deref() {
                None => err("live mode requires an endpoint".into()),
                Some(url) if !(url.starts_with("http://") || url.starts_with("https://")) => {
                    err(format!("endpoint {url:?} is not an http(s) URL"))
                }
                Some(_) if self.model_id.trim().is_empty() => err("live mode requires a model_id".into()),
                Some(_) => Ok(()),
            },
        }
    }
}

/// Environment variable holding the bearer token for a rater.
pub fn api_key_env_var(rater_name: &str) -> String {
    let suffix: String = rater_name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_uppercase() } else { '_' })
        .collect();
    format!("{API_KEY_PREFIX}{suffix}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Status {
    Valid,
    Malformed,
    Hallucinated,
    Missing,
}

impl Status {
    pub const ALL: [Status; 4] = [Status::Valid, Status::Malformed, Status::Hallucinated, Status::Missing];

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Valid => "valid",
            Status::Malformed => "malformed",
            Status::Hallucinated => "hallucinated",
            Status::Missing => "missing",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Status {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Status::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown status {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaterOutput {
    pub method_id: String,
    pub rater_name: String,
    pub status: Status,
    pub current_name: Option<String>,
    pub current_pattern: Option<GrammarPattern>,
    pub corrected_name: Option<String>,
    pub corrected_pattern: Option<GrammarPattern>,
    pub raw_response: String,
}

impl RaterOutput {
    pub fn missing(method_id: &str, rater_name: &str) -> Self {
        RaterOutput {
            method_id: method_id.to_string(),
            rater_name: rater_name.to_string(),
            status: Status::Missing,
            current_name: None,
            current_pattern: None,
            corrected_name: None,
            corrected_pattern: None,
            raw_response: String::new(),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.status == Status::Valid
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub method_id: String,
    pub template_version: String,
    pub text: String,
}

const PROMPT_TEMPLATE: &str = r#"You are an expert software engineer specializing in Python programming. You review method names in scientific code for how well they follow software engineering naming practice.

## Part-of-speech tags for identifiers

Tag every term of the method name with exactly one tag from this table. Do not use natural-language tagsets such as Penn Treebank; use only these mnemonics.

{{TAG_TABLE}}

## Splitting the name into terms

- Split the name into terms using camelCase, PascalCase, or snake_case boundaries: `loadImage`, `LoadImage` and `load_image` all have the terms `load` and `image`.
- Underscores only separate terms. Leading or trailing underscores (`_hash`, `__init__`) are not terms and get no tag.
- A run of capitals followed by a lowercase letter breaks before its last capital: `parseHTTPResponse` has the terms `parse`, `HTTP`, `Response`.
- Digits form their own term and are tagged D: `conv2d` has the terms `conv`, `2`, `d`.
- The grammar pattern has exactly one tag per term, in order.

## Acronyms, abbreviations and numbers

- An acronym or abbreviation (`MSE`, `img`, `csv`) is one term. Tag it by the role its full form plays in the name, usually N or NM.
- Do not tag an acronym as a preamble (PRE). PRE is only for prefixes that carry no meaning, such as `m_` or `my`.
- In a corrected name you may expand an abbreviation when the full form is clearer, and keep widely known ones such as `csv` or `json`.

## Evaluating the name

- A method name should describe the action the method performs, so it normally starts with a verb.
- Prefer complete words over unclear abbreviations and avoid single-term names that do not say what happens.
- Read the code below to understand what the method does before judging the name.
- If the current name already follows good practice, repeat it unchanged as the corrected name.
- The corrected name must be a valid Python identifier in snake_case.

## Output format

Respond with a single JSON object and nothing else. Use exactly these keys:

- "current_method_name": the method name exactly as written in the code
- "current_grammar_pattern": the tags of the current name joined by commas, e.g. "V,NPL"
- "corrected_method_name": your suggested name (the current name when no change is needed)
- "corrected_grammar_pattern": the tags of the corrected name joined by commas

Example output for a method named `features`:

{"current_method_name": "features", "current_grammar_pattern": "NPL", "corrected_method_name": "extract_features", "corrected_grammar_pattern": "V,NPL"}

## Method code

```python
{{METHOD_SOURCE}}
```
"#;

fn tag_example(tag: Tag) -> &'static str {
    match tag {
        Tag::N => "`image` in `load_image`",
        Tag::NM => "`training` in `get_training_data`",
        Tag::NPL => "`features` in `process_features`",
        Tag::V => "`calculate` in `calculate_variance`",
        Tag::VM => "`quickly` in `sort_quickly`",
        Tag::P => "`to` in `convert_to_string`",
        Tag::DT => "`all` in `remove_all_files`",
        Tag::CJ => "`and` in `load_and_plot`",
        Tag::PR => "`it` in `save_it`",
        Tag::D => "`2` in `conv2d_layer`",
        Tag::PRE => "`m` in `m_get_value`",
    }
}

fn tag_table() -> String {
    let mut rows = String::from("| Tag | Meaning | Example |\n|-----|---------|---------|\n");
    for tag in Tag::ALL {
        rows.push_str(&format!(
            "| {} | {} | {} |\n",
            tag.mnemonic(),
            tag.description(),
            tag_example(tag)
        ));
    }
    rows.pop();
    rows
}

/// Renders the prompt for one method.
pub fn build_prompt(method: &MethodRecord) -> PromptBundle {
    let text = PROMPT_TEMPLATE
        .replace("{{TAG_TABLE}}", &tag_table())
        .replace("{{METHOD_SOURCE}}", &method.source);
    PromptBundle {
        method_id: method.id.clone(),
        template_version: TEMPLATE_VERSION.to_string(),
        text,
    }
}

/// Lowercase with underscores removed, for comparing names across formatting.
pub fn normalize_name(name: &str) -> String {
    name.trim().chars().filter(|&c| c != '_').flat_map(char::to_lowercase).collect()
}

fn strip_think_blocks(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("<think>") {
        out.push_str(&rest[..start]);
        match rest[start..].find("</think>") {
            Some(end) => rest = &rest[start + end + "</think>".len()..],
            None => {
                rest = "";
                break;
            }
        }
    }
    out.push_str(rest);
    out
}

/// First JSON object embedded anywhere in `text`.
pub fn extract_first_object(text: &str) -> Option<Map<String, Value>> {
    let cleaned = strip_think_blocks(text);
    for (start, _) in cleaned.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&cleaned[start..]).into_iter::<Value>();
        if let Some(Ok(Value::Object(map))) = stream.next() {
            return Some(map);
        }
    }
    None
}

fn string_field(obj: &Map<String, Value>, key: &str) -> Option<String> {
    match obj.get(key)? {
        Value::String(s) if !s.trim().is_empty() => Some(s.trim().to_string()),
        _ => None,
    }
}

fn pattern_field(obj: &Map<String, Value>, key: &str) -> Option<GrammarPattern> {
    match obj.get(key)? {
        Value::String(s) => parse_pattern(s).ok(),
        Value::Array(items) => {
            let parts: Option<Vec<&str>> = items.iter().map(Value::as_str).collect();
            parse_pattern(&parts?.join(",")).ok()
        }
        _ => None,
    }
}

/// Classifies one reply to the prompt for `method`.
pub fn parse_response(text: &str, method: &MethodRecord, rater_name: &str) -> RaterOutput {
    let mut out = RaterOutput {
        method_id: method.id.clone(),
        rater_name: rater_name.to_string(),
        status: Status::Malformed,
        current_name: None,
        current_pattern: None,
        corrected_name: None,
        corrected_pattern: None,
        raw_response: text.to_string(),
    };
    let Some(obj) = extract_first_object(text) else {
        return out;
    };
    out.current_name = string_field(&obj, KEY_CURRENT_NAME);
    out.current_pattern = pattern_field(&obj, KEY_CURRENT_PATTERN);
    out.corrected_name = string_field(&obj, KEY_CORRECTED_NAME);
    out.corrected_pattern = pattern_field(&obj, KEY_CORRECTED_PATTERN);

    let complete = out.current_name.is_some()
        && out.current_pattern.is_some()
        && out.corrected_name.is_some()
        && out.corrected_pattern.is_some();
    if !complete {
        return out;
    }
    let current = out.current_name.as_deref().expect("checked above");
    out.status = if normalize_name(current) == normalize_name(&method.name) {
        Status::Valid
    } else {
        Status::Hallucinated
    };
    out
}

/// Something that can answer a prompt.
pub trait Backend: Sync {
    fn complete(&self, prompt: &str) -> Result<String, TransportError>;
}

/// Chat-completion style HTTP backend (OpenAI-compatible servers and Ollama).
pub struct HttpBackend {
    agent: ureq::Agent,
    endpoint: String,
    model_id: String,
    temperature: f64,
    api_key: Option<String>,
}

impl HttpBackend {
    pub fn new(cfg: &RaterConfig) -> Result<Self, RaterError> {
        let endpoint = cfg
            .endpoint
            .clone()
            .ok_or_else(|| RaterError::Config(format!("rater {:?} has no endpoint", cfg.name)))?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout()))
            .build()
            .into();
        Ok(HttpBackend {
            agent,
            endpoint,
            model_id: cfg.model_id.clone(),
            temperature: cfg.temperature,
            api_key: std::env::var(api_key_env_var(&cfg.name)).ok(),
        })
    }

    fn request_body(&self, prompt: &str) -> Value {
        json!({
            "model": self.model_id,
            "temperature": self.temperature,
            "options": { "temperature": self.temperature },
            "stream": false,
            "messages": [{ "role": "user", "content": prompt }],
        })
    }
}

/// Pulls the reply text out of the common chat-completion response shapes.
pub fn reply_text(body: &Value) -> Option<String> {
    let candidates = [
        body.pointer("/choices/0/message/content"),
        body.pointer("/message/content"),
        body.pointer("/response"),
        body.pointer("/candidates/0/content/parts/0/text"),
    ];
    candidates
        .into_iter()
        .flatten()
        .find_map(|v| v.as_str().map(str::to_string))
}

impl Backend for HttpBackend {
    fn complete(&self, prompt: &str) -> Result<String, TransportError> {
        let mut request = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request
            .send_json(self.request_body(prompt))
            .map_err(|e| TransportError(e.to_string()))?;
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError(e.to_string()))?;
        // a body that is not a known response shape is kept verbatim and
        // will most likely parse as Malformed
        Ok(serde_json::from_str::<Value>(&body)
            .ok()
            .and_then(|v| reply_text(&v))
            .unwrap_or(body))
    }
}

/// Applies `f` to every item with at most `limit` calls in flight; results
/// keep input order.
fn map_bounded<T, R, F>(items: &[T], limit: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    let workers = limit.max(1).min(items.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let result = f(&items[i]);
                *slots[i].lock().expect("slot lock") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().expect("slot lock").expect("every slot filled"))
        .collect()
}

/// Queries `backend` for each method, retrying transport failures with
/// exponential backoff before giving up with `Missing`.
pub fn run_with_backend(
    cfg: &RaterConfig,
    backend: &dyn Backend,
    methods: &[MethodRecord],
) -> Vec<RaterOutput> {
    map_bounded(methods, cfg.concurrency, |method| {
        let prompt = build_prompt(method);
        let mut attempt = 0;
        loop {
            match backend.complete(&prompt.text) {
                Ok(reply) => return parse_response(&reply, method, &cfg.name),
                Err(e) if attempt < cfg.max_retries => {
                    let delay = cfg.backoff_ms.saturating_mul(1 << attempt.min(16));
                    log::debug!("{} {}: attempt {} failed: {e}; retrying", cfg.name, method.id, attempt + 1);
                    std::thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
                Err(e) => {
                    log::warn!("{} {}: giving up after {} attempts: {e}", cfg.name, method.id, attempt + 1);
                    return RaterOutput::missing(&method.id, &cfg.name);
                }
            }
        }
    })
}

/// File name of the recorded reply for a method: the id with every character
/// outside `[A-Za-z0-9._-]` replaced by `_`, plus `.txt`.
pub fn fixture_file_name(method_id: &str) -> String {
    let stem: String = method_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' })
        .collect();
    format!("{stem}.txt")
}

fn run_replay(cfg: &RaterConfig, dir: &Path, methods: &[MethodRecord]) -> Vec<RaterOutput> {
    map_bounded(methods, cfg.concurrency, |method| {
        let path = dir.join(fixture_file_name(&method.id));
        match std::fs::read_to_string(&path) {
            Ok(reply) => parse_response(&reply, method, &cfg.name),
            Err(_) => RaterOutput::missing(&method.id, &cfg.name),
        }
    })
}

/// Produces one output per method, in input order.
pub fn run_rater(cfg: &RaterConfig, methods: &[MethodRecord]) -> Result<Vec<RaterOutput>, RaterError> {
    cfg.validate()?;
    match cfg.mode {
        RaterMode::Replay => {
            let dir = cfg.fixtures.as_deref().expect("validated");
            Ok(run_replay(cfg, dir, methods))
        }
        RaterMode::Live => {
            let backend = HttpBackend::new(cfg)?;
            Ok(run_with_backend(cfg, &backend, methods))
        }
    }
}

/// The rule tagger as a rater: it tags the name and never proposes a rename.
pub fn run_rule_rater(methods: &[MethodRecord], lex: &Lexicon) -> Vec<RaterOutput> {
    methods
        .iter()
        .map(|method| match split_identifier(&method.name) {
            Ok(split) => {
                let pattern = rule_tag(&split, lex);
                let raw = json!({
                    KEY_CURRENT_NAME: method.name,
                    KEY_CURRENT_PATTERN: pattern.to_string(),
                    KEY_CORRECTED_NAME: method.name,
                    KEY_CORRECTED_PATTERN: pattern.to_string(),
                })
                .to_string();
                RaterOutput {
                    method_id: method.id.clone(),
                    rater_name: RULE_RATER.to_string(),
                    status: Status::Valid,
                    current_name: Some(method.name.clone()),
                    current_pattern: Some(pattern.clone()),
                    corrected_name: Some(method.name.clone()),
                    corrected_pattern: Some(pattern),
                    raw_response: raw,
                }
            }
            Err(e) => {
                log::warn!("rule rater {}: {e}", method.id);
                RaterOutput {
                    status: Status::Malformed,
                    ..RaterOutput::missing(&method.id, RULE_RATER)
                }
            }
        })
        .collect()
}

/// Methods every rater answered validly.
pub fn common_valid_subset(outputs_by_rater: &BTreeMap<String, Vec<RaterOutput>>) -> BTreeSet<String> {
    let mut sets = outputs_by_rater.values().map(|outputs| {
        outputs
            .iter()
            .filter(|o| o.is_valid())
            .map(|o| o.method_id.clone())
            .collect::<BTreeSet<_>>()
    });
    let Some(first) = sets.next() else {
        return BTreeSet::new();
    };
    sets.fold(first, |acc, set| acc.intersection(&set).cloned().collect())
}

/// Per-status counts.
pub fn status_counts(outputs: &[RaterOutput]) -> BTreeMap<Status, usize> {
    let mut counts: BTreeMap<Status, usize> = Status::ALL.into_iter().map(|s| (s, 0)).collect();
    for o in outputs {
        *counts.entry(o.status).or_default() += 1;
    }
    counts
}
