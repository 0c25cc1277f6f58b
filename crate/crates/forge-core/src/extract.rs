//! Toxic-entity extraction.
//!
//! The primary backend asks a chat model to quote the harmful segments via a
//! few-shot prompt; the lexicon backend is the deterministic offline
//! fallback. Either way the output is surface strings, and spans are
//! recovered by first verbatim occurrence — model output that does not occur
//! verbatim in the text is dropped with a warning rather than trusted.

use crate::bench::client::{ChatBackend, GenConfig};
use crate::bench::prompt::{template, Message, Role, TemplateId};
use crate::perturb::ToxicSpan;
use num::rational::Ratio;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("empty text")]
    EmptyText,
    #[error("failed to read lexicon {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("lexicon {path}:{line}: empty term")]
    EmptyTerm { path: String, line: usize },
    #[error("extraction backend: {0}")]
    Backend(String),
    #[error("result/gold id sets differ: {0} missing on one side")]
    IdMismatch(String),
    #[error("accuracy over empty input")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionSource {
    Model,
    Lexicon,
    Gold,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub text: String,
    /// Non-overlapping, sorted by start.
    pub spans: Vec<ToxicSpan>,
    pub source: ExtractionSource,
}

/// Offline term list with category tags. Matching is longest-match-first,
/// left to right.
#[derive(Debug, Clone)]
pub struct ToxicLexicon {
    /// (term chars, category), longest terms first.
    terms: Vec<(Vec<char>, String)>,
}

impl ToxicLexicon {
    /// One term per line, optional tab-separated category, `#` comments.
    pub fn load(path: impl AsRef<Path>) -> Result<ToxicLexicon, ExtractError> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|source| ExtractError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut terms = Vec::new();
        for (i, line) in content.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (term, category) = match line.split_once('\t') {
                Some((t, c)) => (t.trim(), c.trim()),
                None => (line, "generic"),
            };
            if term.is_empty() {
                return Err(ExtractError::EmptyTerm {
                    path: path.display().to_string(),
                    line: i + 1,
                });
            }
            terms.push((term.chars().collect(), category.to_string()));
        }
        Ok(ToxicLexicon::from_terms(terms))
    }

    pub fn from_terms(mut terms: Vec<(Vec<char>, String)>) -> ToxicLexicon {
        terms.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        ToxicLexicon { terms }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Longest-match scan; overlaps resolve left to right.
    pub fn find_spans(&self, text: &str) -> Vec<ToxicSpan> {
        let chars: Vec<char> = text.chars().collect();
        let mut spans = Vec::new();
        let mut i = 0usize;
        while i < chars.len() {
            let hit = self
                .terms
                .iter()
                .find(|(term, _)| chars[i..].starts_with(term));
            match hit {
                Some((term, _)) => {
                    spans.push(ToxicSpan {
                        start: i,
                        end: i + term.len(),
                        surface: term.iter().collect(),
                    });
                    i += term.len();
                }
                None => i += 1,
            }
        }
        spans
    }
}

/// Where extracted surface strings come from.
pub trait ExtractBackend {
    fn surfaces(&self, id: &str, text: &str) -> Result<Vec<String>, ExtractError>;
    fn source(&self) -> ExtractionSource;
}

pub struct LexiconBackend(pub ToxicLexicon);

impl ExtractBackend for LexiconBackend {
    fn surfaces(&self, _id: &str, text: &str) -> Result<Vec<String>, ExtractError> {
        Ok(self.0.find_spans(text).into_iter().map(|s| s.surface).collect())
    }

    fn source(&self) -> ExtractionSource {
        ExtractionSource::Lexicon
    }
}

/// Few-shot model extraction over a chat backend.
pub struct ModelBackend<'a> {
    pub backend: &'a dyn ChatBackend,
}

impl ExtractBackend for ModelBackend<'_> {
    fn surfaces(&self, id: &str, text: &str) -> Result<Vec<String>, ExtractError> {
        let prompt = template(TemplateId::ExtractFewshot);
        let messages = vec![
            Message { role: Role::System, content: prompt.text.to_string() },
            Message { role: Role::User, content: format!("句子：{text}\n输出：") },
        ];
        let raw = self
            .backend
            .complete(id, &messages, &GenConfig::default())
            .map_err(|e| ExtractError::Backend(e.to_string()))?;
        Ok(parse_surfaces(&raw))
    }

    fn source(&self) -> ExtractionSource {
        ExtractionSource::Model
    }
}

/// Splits a model extraction reply into candidate surfaces.
pub fn parse_surfaces(raw: &str) -> Vec<String> {
    let trimmed = raw.trim();
    let trimmed = trimmed.strip_prefix("输出：").unwrap_or(trimmed).trim();
    if trimmed.is_empty() || trimmed == "无" || trimmed.eq_ignore_ascii_case("none") {
        return Vec::new();
    }
    trimmed
        .split(['；', ';', '\n'])
        .map(|s| s.trim().trim_matches(['“', '”', '"', '「', '」']).to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

/// Extraction outcome plus the surfaces that had to be dropped because they
/// do not occur verbatim in the text.
#[derive(Debug)]
pub struct ExtractionOutcome {
    pub result: ExtractionResult,
    pub dropped: Vec<String>,
}

/// Runs a backend over `text` and aligns its surfaces to spans by first
/// verbatim occurrence (skipping occurrences that would overlap an earlier
/// span).
pub fn extract_entities(
    backend: &dyn ExtractBackend,
    id: &str,
    text: &str,
) -> Result<ExtractionOutcome, ExtractError> {
    if text.is_empty() {
        return Err(ExtractError::EmptyText);
    }
    let surfaces = backend.surfaces(id, text)?;
    let chars: Vec<char> = text.chars().collect();
    let mut spans: Vec<ToxicSpan> = Vec::new();
    let mut dropped = Vec::new();
    'surface: for surface in surfaces {
        let needle: Vec<char> = surface.chars().collect();
        if needle.is_empty() {
            continue;
        }
        for start in 0..=chars.len().saturating_sub(needle.len()) {
            if chars[start..].starts_with(&needle)
                && !spans.iter().any(|s| start < s.end && start + needle.len() > s.start)
            {
                spans.push(ToxicSpan { start, end: start + needle.len(), surface });
                continue 'surface;
            }
        }
        dropped.push(surface);
    }
    spans.sort_by_key(|s| s.start);
    Ok(ExtractionOutcome {
        result: ExtractionResult { text: text.to_string(), spans, source: backend.source() },
        dropped,
    })
}

/// Fraction of samples whose predicted span set equals the gold span set
/// exactly (all toxic segments found and nothing benign flagged).
pub fn extraction_accuracy(
    results: &BTreeMap<String, Vec<ToxicSpan>>,
    gold: &BTreeMap<String, Vec<ToxicSpan>>,
) -> Result<Ratio<u64>, ExtractError> {
    if results.len() != gold.len() {
        let missing = results
            .keys()
            .find(|k| !gold.contains_key(*k))
            .or_else(|| gold.keys().find(|k| !results.contains_key(*k)));
        return Err(ExtractError::IdMismatch(missing.cloned().unwrap_or_default()));
    }
    if results.is_empty() {
        return Err(ExtractError::Empty);
    }
    let mut correct = 0u64;
    for (id, spans) in results {
        let Some(gold_spans) = gold.get(id) else {
            return Err(ExtractError::IdMismatch(id.clone()));
        };
        let mut a = spans.clone();
        let mut b = gold_spans.clone();
        a.sort_by_key(|s| (s.start, s.end));
        b.sort_by_key(|s| (s.start, s.end));
        if a == b {
            correct += 1;
        }
    }
    Ok(Ratio::new(correct, results.len() as u64))
}
