//! Method-name analysis for notebook corpora.
//!
//! The pipeline extracts method definitions from Jupyter notebooks
//! ([`corpus`]), splits and tags their names ([`lexeme`], [`tagger`]), asks
//! LLM raters for grammar patterns and rename suggestions ([`raters`]),
//! stores everything in a single SQLite file ([`store`]) and computes
//! agreement and rename-quality tables ([`metrics`], [`cli`]).

pub mod corpus;
pub mod lexeme;
pub mod tagger;
pub mod raters;
pub mod metrics;
pub mod store;
pub mod cli;
