//! The eight perturbation strategies.
//!
//! Three glyph strategies work per character (visual neighbor, component
//! split, traditional form), three phonetic and the emoji strategy work on
//! the whole toxic word (pinyin initials, full pinyin, homophone, emoji),
//! and shuffling moves span characters within a small window of context.
//!
//! Every application is a pure function of `(kb, type, text, spans, config)`:
//! character selection and shuffle moves draw from the seeded stream in
//! [`crate::seed`], so reruns reproduce outputs exactly.

use crate::charkb::{CharacterKnowledgeBase, KbError};
use crate::seed::strategy_rng;
use crate::text::{char_len, char_slice, cjk_count, is_cjk};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PerturbError {
    #[error("nothing to perturb: no non-empty toxic span")]
    NothingToPerturb,
    #[error("no in-span character is perturbable under {strategy}")]
    NoCandidate { strategy: PerturbationType },
    #[error(transparent)]
    UnknownChar(#[from] KbError),
    #[error("invalid span {start}..{end} for text of {len} chars")]
    InvalidSpan { start: usize, end: usize, len: usize },
    #[error("span {start}..{end} surface mismatch: expected {expected:?}, span says {actual:?}")]
    SpanSurface { start: usize, end: usize, expected: String, actual: String },
    #[error("edits overlap at offset {at}")]
    OverlappingEdits { at: usize },
    #[error("edit {start}..{end} out of bounds for text of {len} chars")]
    EditOutOfBounds { start: usize, end: usize, len: usize },
    #[error("max_rate must be in (0, 1], got {0}")]
    BadRate(f64),
}

/// The closed set of eight perturbation methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationType {
    VSim,
    Split,
    Trad,
    PyInit,
    PyFull,
    Homo,
    Shuff,
    Emoji,
}

impl PerturbationType {
    pub const ALL: [PerturbationType; 8] = [
        PerturbationType::VSim,
        PerturbationType::Split,
        PerturbationType::Trad,
        PerturbationType::PyInit,
        PerturbationType::PyFull,
        PerturbationType::Homo,
        PerturbationType::Shuff,
        PerturbationType::Emoji,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            PerturbationType::VSim => "vsim",
            PerturbationType::Split => "split",
            PerturbationType::Trad => "trad",
            PerturbationType::PyInit => "py_init",
            PerturbationType::PyFull => "py_full",
            PerturbationType::Homo => "homo",
            PerturbationType::Shuff => "shuff",
            PerturbationType::Emoji => "emoji",
        }
    }

    /// Column label used in the report tables.
    pub fn label(&self) -> &'static str {
        match self {
            PerturbationType::VSim => "VSim",
            PerturbationType::Split => "Split",
            PerturbationType::Trad => "Trad",
            PerturbationType::PyInit => "PY_Init",
            PerturbationType::PyFull => "PY_Full",
            PerturbationType::Homo => "Homo",
            PerturbationType::Shuff => "Shuff",
            PerturbationType::Emoji => "Emoji",
        }
    }

    pub fn parse(s: &str) -> Option<PerturbationType> {
        let lower = s.to_ascii_lowercase();
        Self::ALL.iter().copied().find(|t| t.tag() == lower || t.label().to_ascii_lowercase() == lower)
    }
}

impl std::fmt::Display for PerturbationType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// A harmful segment, in codepoint offsets, `end` exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToxicSpan {
    pub start: usize,
    pub end: usize,
    pub surface: String,
}

impl ToxicSpan {
    pub fn new(text: &str, start: usize, end: usize) -> ToxicSpan {
        ToxicSpan { start, end, surface: char_slice(text, start, end) }
    }
}

fn validate_spans(text: &str, spans: &[ToxicSpan]) -> Result<(), PerturbError> {
    let len = char_len(text);
    for s in spans {
        if s.start >= s.end || s.end > len {
            return Err(PerturbError::InvalidSpan { start: s.start, end: s.end, len });
        }
        let actual = char_slice(text, s.start, s.end);
        if actual != s.surface {
            return Err(PerturbError::SpanSurface {
                start: s.start,
                end: s.end,
                expected: actual,
                actual: s.surface.clone(),
            });
        }
    }
    Ok(())
}

/// One replacement: the codepoint span of the original it covers and the
/// string that replaces it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edit {
    pub start: usize,
    pub end: usize,
    pub replacement: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Toxic,
    NonToxic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbedSample {
    pub original: String,
    pub perturbed: String,
    #[serde(rename = "type")]
    pub ptype: PerturbationType,
    pub edits: Vec<Edit>,
    pub ratio: f64,
    pub seed: u64,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PinyinCase {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbConfig {
    /// Per-sentence cap on the fraction of CJK characters edited.
    pub max_rate: f64,
    pub seed: u64,
    pub pinyin_case: PinyinCase,
    /// Maximum distance a shuffled character may move.
    pub shuffle_window: usize,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        PerturbConfig { max_rate: 0.3, seed: 0, pinyin_case: PinyinCase::Lower, shuffle_window: 2 }
    }
}

/// Applies non-overlapping `edits` (sorted by start) to `original`.
pub fn apply_edits(original: &str, edits: &[Edit]) -> String {
    let chars: Vec<char> = original.chars().collect();
    let mut out = String::new();
    let mut pos = 0usize;
    for e in edits {
        out.extend(chars[pos..e.start].iter());
        out.push_str(&e.replacement);
        pos = e.end;
    }
    out.extend(chars[pos..].iter());
    out
}

/// Fraction of the original's CJK characters covered by edit source spans.
/// A character split into several components still counts once: coverage is
/// measured on the source side.
pub fn perturbation_ratio(original: &str, edits: &[Edit]) -> Result<f64, PerturbError> {
    if edits.is_empty() {
        return Ok(0.0);
    }
    let len = char_len(original);
    let mut sorted: Vec<&Edit> = edits.iter().collect();
    sorted.sort_by_key(|e| e.start);
    let mut prev_end = 0usize;
    for e in &sorted {
        if e.start >= e.end || e.end > len {
            return Err(PerturbError::EditOutOfBounds { start: e.start, end: e.end, len });
        }
        if e.start < prev_end {
            return Err(PerturbError::OverlappingEdits { at: e.start });
        }
        prev_end = e.end;
    }
    let chars: Vec<char> = original.chars().collect();
    let covered: usize = sorted
        .iter()
        .map(|e| chars[e.start..e.end].iter().filter(|c| is_cjk(**c)).count())
        .sum();
    let total = cjk_count(original);
    if total == 0 {
        return Err(PerturbError::NothingToPerturb);
    }
    Ok(covered as f64 / total as f64)
}

/// In-span CJK character offsets, ascending, deduplicated.
fn span_char_pool(text: &str, spans: &[ToxicSpan]) -> Vec<usize> {
    let chars: Vec<char> = text.chars().collect();
    let mut pool: BTreeSet<usize> = BTreeSet::new();
    for s in spans {
        for off in s.start..s.end {
            if is_cjk(chars[off]) {
                pool.insert(off);
            }
        }
    }
    pool.into_iter().collect()
}

fn char_budget(text: &str, max_rate: f64) -> usize {
    ((cjk_count(text) as f64) * max_rate).floor().max(1.0) as usize
}

/// Chooses which in-span characters a per-character strategy will edit.
///
/// At most `floor(max_rate · CJK count)` characters (at least one), all inside
/// toxic spans; the choice is a pure function of the arguments.
pub fn select_targets(
    text: &str,
    spans: &[ToxicSpan],
    max_rate: f64,
    seed: u64,
) -> Result<Vec<usize>, PerturbError> {
    if !(max_rate > 0.0 && max_rate <= 1.0) {
        return Err(PerturbError::BadRate(max_rate));
    }
    validate_spans(text, spans)?;
    let pool = span_char_pool(text, spans);
    if pool.is_empty() {
        return Err(PerturbError::NothingToPerturb);
    }
    let budget = char_budget(text, max_rate);
    if budget >= pool.len() {
        return Ok(pool);
    }
    let mut shuffled = pool;
    shuffled.shuffle(&mut strategy_rng(seed, text, "select"));
    let mut chosen: Vec<usize> = shuffled.into_iter().take(budget).collect();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Chooses whole spans for the word-level strategies, greedily under the same
/// character budget. Always selects at least one span (the shortest, if none
/// fits the budget).
fn select_spans(
    text: &str,
    spans: &[ToxicSpan],
    max_rate: f64,
    seed: u64,
) -> Result<Vec<ToxicSpan>, PerturbError> {
    if !(max_rate > 0.0 && max_rate <= 1.0) {
        return Err(PerturbError::BadRate(max_rate));
    }
    validate_spans(text, spans)?;
    let mut nonempty: Vec<&ToxicSpan> = spans.iter().filter(|s| s.end > s.start).collect();
    if nonempty.is_empty() {
        return Err(PerturbError::NothingToPerturb);
    }
    let budget = char_budget(text, max_rate);
    nonempty.shuffle(&mut strategy_rng(seed, text, "select-spans"));
    let mut chosen: Vec<ToxicSpan> = Vec::new();
    let mut used = 0usize;
    for s in &nonempty {
        let cost = s.surface.chars().filter(|c| is_cjk(*c)).count();
        if used + cost <= budget {
            chosen.push((*s).clone());
            used += cost;
        }
    }
    if chosen.is_empty() {
        let shortest = nonempty
            .iter()
            .min_by_key(|s| (s.surface.chars().filter(|c| is_cjk(*c)).count(), s.start))
            .unwrap();
        chosen.push((*shortest).clone());
    }
    chosen.sort_by_key(|s| s.start);
    Ok(chosen)
}

/// Replacement for one character under a per-character strategy, when the
/// strategy applies to it.
fn char_candidate(
    kb: &CharacterKnowledgeBase,
    ptype: PerturbationType,
    ch: char,
) -> Result<Option<String>, PerturbError> {
    if !kb.contains(ch) {
        return Err(KbError::UnknownChar { ch }.into());
    }
    Ok(match ptype {
        PerturbationType::VSim => kb.visual_neighbors(ch, 1)?.first().map(|c| c.to_string()),
        PerturbationType::Split => {
            let comps = kb.decompose(ch)?;
            if comps.is_empty() {
                None
            } else {
                Some(comps.iter().collect())
            }
        }
        PerturbationType::Trad => {
            let t = kb.to_traditional(ch)?;
            if t == ch {
                None
            } else {
                Some(t.to_string())
            }
        }
        _ => unreachable!("char_candidate is only called for per-character strategies"),
    })
}

fn apply_char_strategy(
    kb: &CharacterKnowledgeBase,
    ptype: PerturbationType,
    text: &str,
    spans: &[ToxicSpan],
    cfg: &PerturbConfig,
) -> Result<Vec<Edit>, PerturbError> {
    let chosen = select_targets(text, spans, cfg.max_rate, cfg.seed)?;
    let target_n = chosen.len();
    let chosen_set: BTreeSet<usize> = chosen.iter().copied().collect();
    // Fallback order: the chosen characters first, then the remaining in-span
    // characters by ascending offset.
    let mut order = chosen.clone();
    order.extend(span_char_pool(text, spans).into_iter().filter(|o| !chosen_set.contains(o)));

    let chars: Vec<char> = text.chars().collect();
    let mut edits: Vec<Edit> = Vec::new();
    for off in order {
        if edits.len() == target_n {
            break;
        }
        if let Some(replacement) = char_candidate(kb, ptype, chars[off])? {
            edits.push(Edit { start: off, end: off + 1, replacement });
        }
    }
    if edits.is_empty() {
        return Err(PerturbError::NoCandidate { strategy: ptype });
    }
    edits.sort_by_key(|e| e.start);
    Ok(edits)
}

/// Replacement string for a whole word under a word-level strategy.
fn word_candidate(
    kb: &CharacterKnowledgeBase,
    ptype: PerturbationType,
    word: &str,
    cfg: &PerturbConfig,
) -> Result<Option<String>, PerturbError> {
    match ptype {
        PerturbationType::PyInit => {
            let initials: String =
                kb.pinyin_of(word)?.iter().map(|s| s.syllable.first_letter()).collect();
            if initials.is_empty() {
                return Ok(None);
            }
            Ok(Some(match cfg.pinyin_case {
                PinyinCase::Lower => initials,
                PinyinCase::Upper => initials.to_ascii_uppercase(),
            }))
        }
        PerturbationType::PyFull => {
            let syllables: Vec<String> =
                kb.pinyin_of(word)?.iter().map(|s| s.syllable.toneless()).collect();
            if syllables.is_empty() {
                return Ok(None);
            }
            let joined = syllables.join(" ");
            Ok(Some(match cfg.pinyin_case {
                PinyinCase::Lower => joined,
                PinyinCase::Upper => joined.to_ascii_uppercase(),
            }))
        }
        PerturbationType::Homo => Ok(kb.homophones(word)?.into_iter().next()),
        _ => unreachable!("word_candidate is only called for word-level strategies"),
    }
}

fn apply_word_strategy(
    kb: &CharacterKnowledgeBase,
    ptype: PerturbationType,
    text: &str,
    spans: &[ToxicSpan],
    cfg: &PerturbConfig,
) -> Result<Vec<Edit>, PerturbError> {
    let chosen = select_spans(text, spans, cfg.max_rate, cfg.seed)?;
    let mut edits: Vec<Edit> = Vec::new();
    for span in &chosen {
        if ptype == PerturbationType::Emoji {
            if kb.has_emoji(&span.surface) {
                let top = &kb.emoji_for(&span.surface)[0];
                edits.push(Edit { start: span.start, end: span.end, replacement: top.emoji.clone() });
            } else {
                // No row for the word: substitute the indexed characters,
                // leaving the rest in place (杀人 → 💀人).
                for (i, emoji) in kb.emoji_per_char(&span.surface) {
                    edits.push(Edit {
                        start: span.start + i,
                        end: span.start + i + 1,
                        replacement: emoji,
                    });
                }
            }
        } else if let Some(replacement) = word_candidate(kb, ptype, &span.surface, cfg)? {
            edits.push(Edit { start: span.start, end: span.end, replacement });
        }
    }
    if edits.is_empty() {
        return Err(PerturbError::NoCandidate { strategy: ptype });
    }
    edits.sort_by_key(|e| e.start);
    Ok(edits)
}

fn apply_shuffle(
    text: &str,
    spans: &[ToxicSpan],
    cfg: &PerturbConfig,
) -> Result<Vec<Edit>, PerturbError> {
    // A swap touches two characters, so the mover budget is half the
    // character budget.
    let half_rate = (cfg.max_rate / 2.0).max(f64::MIN_POSITIVE);
    let chosen = select_targets(text, spans, half_rate, cfg.seed)?;
    let window = cfg.shuffle_window.max(1) as isize;
    let mut rng = strategy_rng(cfg.seed, text, "shuff");
    let original: Vec<char> = text.chars().collect();
    let mut chars = original.clone();

    let mut deltas: Vec<isize> = (-window..=window).filter(|d| *d != 0).collect();
    for &pos in &chosen {
        deltas.shuffle(&mut rng);
        for &d in &deltas {
            let target = pos as isize + d;
            if target < 0 || target as usize >= chars.len() {
                continue;
            }
            let target = target as usize;
            if !is_cjk(chars[target]) || chars[target] == chars[pos] {
                continue;
            }
            chars.swap(pos, target);
            break;
        }
    }
    if chars == original {
        // Later swaps undid earlier ones (or every neighbor was identical):
        // force one visible adjacent swap.
        'outer: for &pos in &chosen {
            for d in [-1isize, 1] {
                let t = pos as isize + d;
                if t >= 0
                    && (t as usize) < chars.len()
                    && is_cjk(chars[t as usize])
                    && chars[t as usize] != chars[pos]
                {
                    chars.swap(pos, t as usize);
                    break 'outer;
                }
            }
        }
    }
    if chars == original {
        return Err(PerturbError::NoCandidate { strategy: PerturbationType::Shuff });
    }

    // Derive edits as the merged runs of changed positions.
    let mut edits: Vec<Edit> = Vec::new();
    let mut run_start: Option<usize> = None;
    for i in 0..=original.len() {
        let changed = i < original.len() && original[i] != chars[i];
        match (changed, run_start) {
            (true, None) => run_start = Some(i),
            (false, Some(s)) => {
                edits.push(Edit { start: s, end: i, replacement: chars[s..i].iter().collect() });
                run_start = None;
            }
            _ => {}
        }
    }
    Ok(edits)
}

/// Applies one strategy to the toxic spans of `text`.
///
/// Characters outside the returned edits are preserved verbatim. If a chosen
/// character has no candidate under the strategy, the next in-span character
/// is tried; `NoCandidate` is returned only when none qualifies.
pub fn apply(
    kb: &CharacterKnowledgeBase,
    ptype: PerturbationType,
    text: &str,
    spans: &[ToxicSpan],
    cfg: &PerturbConfig,
) -> Result<PerturbedSample, PerturbError> {
    let edits = match ptype {
        PerturbationType::VSim | PerturbationType::Split | PerturbationType::Trad => {
            apply_char_strategy(kb, ptype, text, spans, cfg)?
        }
        PerturbationType::PyInit
        | PerturbationType::PyFull
        | PerturbationType::Homo
        | PerturbationType::Emoji => apply_word_strategy(kb, ptype, text, spans, cfg)?,
        PerturbationType::Shuff => apply_shuffle(text, spans, cfg)?,
    };
    let ratio = perturbation_ratio(text, &edits)?;
    Ok(PerturbedSample {
        original: text.to_string(),
        perturbed: apply_edits(text, &edits),
        ptype,
        edits,
        ratio,
        seed: cfg.seed,
        label: Label::Toxic,
    })
}

/// One input to `batch_perturb`.
#[derive(Debug, Clone)]
pub struct BatchInput {
    pub id: String,
    pub text: String,
    pub spans: Vec<ToxicSpan>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchSkip {
    pub original_id: String,
    #[serde(rename = "type")]
    pub ptype: PerturbationType,
    pub reason: String,
}

#[derive(Debug)]
pub struct BatchOutput {
    /// `(original id, type, sample)` in input × type order.
    pub items: Vec<(String, PerturbationType, PerturbedSample)>,
    pub skips: Vec<BatchSkip>,
}

/// Applies every requested type to every input. Per-item failures are
/// recorded as skips, not errors; output order is input order, then type
/// order, regardless of how the work is scheduled.
pub fn batch_perturb(
    kb: &CharacterKnowledgeBase,
    inputs: &[BatchInput],
    types: &[PerturbationType],
    cfg: &PerturbConfig,
) -> BatchOutput {
    let mut items = Vec::new();
    let mut skips = Vec::new();
    for input in inputs {
        for &ptype in types {
            match apply(kb, ptype, &input.text, &input.spans, cfg) {
                Ok(sample) => items.push((input.id.clone(), ptype, sample)),
                Err(err) => skips.push(BatchSkip {
                    original_id: input.id.clone(),
                    ptype,
                    reason: err.to_string(),
                }),
            }
        }
    }
    BatchOutput { items, skips }
}
