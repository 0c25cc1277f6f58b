//! Per-character linguistic knowledge base.
//!
//! Three tab-separated tables (see `parse`) are loaded into immutable
//! indexes: decompositions, pinyin readings, traditional forms, visually
//! similar characters, homophones, and emoji substitutes. The perturbation
//! strategies only ever read from this structure, so a loaded KB is safe to
//! share across worker threads.

mod parse;

pub use parse::{validate_tables, TablePaths, ValidationReport};

use crate::text::is_cjk;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Pinyin initials, longest first so `zh`/`ch`/`sh` win over `z`/`c`/`s`.
const INITIALS: [&str; 23] = [
    "zh", "ch", "sh", "b", "p", "m", "f", "d", "t", "n", "l", "g", "k", "h", "j", "q", "x", "r",
    "z", "c", "s", "y", "w",
];

#[derive(Debug, Error)]
pub enum KbError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {msg}")]
    Parse { file: String, line: usize, msg: String },
    #[error("no entries in {file}")]
    NoEntries { file: String },
    #[error("duplicate char {ch} at {file}:{line}")]
    DuplicateChar { ch: char, file: String, line: usize },
    #[error("{count} violation(s) in character tables; first: {first}")]
    Invalid { count: usize, first: String },
    #[error("unknown char {ch}")]
    UnknownChar { ch: char },
    #[error("unknown char {ch} at offset {offset}")]
    UnknownCharAt { ch: char, offset: usize },
}

/// One pinyin reading split into initial and final, with the tone digit
/// (0 = neutral).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Syllable {
    pub initial: String,
    /// The final (everything after the initial); `final` is reserved in Rust.
    pub rime: String,
    pub tone: u8,
}

impl Syllable {
    /// Parses `"han4"` / `"lv4"` / `"de0"` style cells.
    pub fn parse(s: &str) -> Result<Syllable, String> {
        let (body, tone_ch) = match s.char_indices().last() {
            Some((i, c)) if c.is_ascii_digit() => (&s[..i], c),
            _ => return Err(format!("syllable {s:?} missing tone digit")),
        };
        let tone = tone_ch.to_digit(10).unwrap() as u8;
        if tone > 4 {
            return Err(format!("tone {tone} out of range 0..4 in {s:?}"));
        }
        if body.is_empty() || !body.bytes().all(|b| b.is_ascii_lowercase()) {
            return Err(format!("syllable {s:?} must be ASCII lowercase letters + tone"));
        }
        let initial = INITIALS
            .iter()
            .find(|i| body.starts_with(**i))
            .copied()
            .unwrap_or("")
            .to_string();
        let rime = body[initial.len()..].to_string();
        if rime.is_empty() || rime.len() > 4 {
            return Err(format!("final {rime:?} of {s:?} must be 1..4 letters"));
        }
        Ok(Syllable { initial, rime, tone })
    }

    /// Toneless romanization: initial + final.
    pub fn toneless(&self) -> String {
        format!("{}{}", self.initial, self.rime)
    }

    /// First letter of the toneless syllable (the PY_Init unit).
    pub fn first_letter(&self) -> char {
        self.toneless().chars().next().unwrap()
    }
}

impl std::fmt::Display for Syllable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}{}{}", self.initial, self.rime, self.tone)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharEntry {
    pub ch: char,
    /// Single-level visual components, empty when the character is atomic.
    pub decomposition: Vec<char>,
    /// Readings in priority order; the first is the primary reading.
    pub readings: Vec<Syllable>,
    /// Distinct traditional form, when the table has one.
    pub traditional: Option<char>,
    pub frequency_rank: u32,
    pub stroke_count: Option<u32>,
}

impl CharEntry {
    pub fn primary(&self) -> &Syllable {
        &self.readings[0]
    }

    /// True when the table maps this character to a distinct traditional form.
    pub fn is_simplified(&self) -> bool {
        self.traditional.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmojiProvenance {
    Homophonic,
    Pictographic,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmojiCandidate {
    pub emoji: String,
    pub provenance: EmojiProvenance,
}

/// A syllable resolved for one character of a text, with its codepoint offset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextSyllable {
    pub offset: usize,
    pub ch: char,
    pub syllable: Syllable,
}

/// Immutable character knowledge base.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharacterKnowledgeBase {
    entries: BTreeMap<char, CharEntry>,
    visual_index: BTreeMap<char, Vec<char>>,
    homophone_index: BTreeMap<String, Vec<char>>,
    emoji_index: BTreeMap<String, Vec<EmojiCandidate>>,
    reverse_split_index: BTreeMap<String, char>,
    checksum: String,
}

/// Upper bound on candidates returned by `homophones`.
const HOMOPHONE_CAP: usize = 256;
/// Per-position cut applied before taking a cartesian product, to keep the
/// enumeration bounded on large tables.
const HOMOPHONE_PER_POSITION: usize = 12;

impl CharacterKnowledgeBase {
    /// Loads and cross-validates the three tables. Fails atomically: any
    /// violation anywhere rejects the whole load.
    pub fn load(paths: &TablePaths) -> Result<Self, KbError> {
        let report = validate_tables(paths)?;
        if !report.violations.is_empty() {
            return Err(KbError::Invalid {
                count: report.violations.len(),
                first: report.violations[0].clone(),
            });
        }
        Ok(report.kb.expect("kb present when no violations"))
    }

    pub(crate) fn from_parts(
        entries: BTreeMap<char, CharEntry>,
        visual_raw: Vec<(char, Vec<char>)>,
        emoji_raw: Vec<(String, Vec<String>, EmojiProvenance)>,
        checksum: String,
    ) -> Self {
        // Visual neighbors: primary key is |stroke difference| when both
        // stroke counts are present, 0 otherwise; input order is the
        // secondary key (stable sort), so pre-ranked rows keep their order.
        let mut visual_index: BTreeMap<char, Vec<char>> = BTreeMap::new();
        for (ch, neighbors) in visual_raw {
            let own = entries.get(&ch).and_then(|e| e.stroke_count);
            let mut ranked = neighbors;
            ranked.sort_by_key(|n| {
                match (own, entries.get(n).and_then(|e| e.stroke_count)) {
                    (Some(a), Some(b)) => a.abs_diff(b),
                    _ => 0,
                }
            });
            visual_index.entry(ch).or_default().extend(ranked);
        }

        // Homophone index: every reading participates, lists ordered by
        // frequency rank.
        let mut homophone_index: BTreeMap<String, Vec<char>> = BTreeMap::new();
        for entry in entries.values() {
            for reading in &entry.readings {
                let list = homophone_index.entry(reading.toneless()).or_default();
                if !list.contains(&entry.ch) {
                    list.push(entry.ch);
                }
            }
        }
        for list in homophone_index.values_mut() {
            list.sort_by_key(|c| entries[c].frequency_rank);
        }

        let mut emoji_index: BTreeMap<String, Vec<EmojiCandidate>> = BTreeMap::new();
        for (unit, emojis, provenance) in emoji_raw {
            let list = emoji_index.entry(unit).or_default();
            for emoji in emojis {
                list.push(EmojiCandidate { emoji, provenance });
            }
        }

        let reverse_split_index = entries
            .values()
            .filter(|e| !e.decomposition.is_empty())
            .map(|e| (e.decomposition.iter().collect::<String>(), e.ch))
            .collect();

        CharacterKnowledgeBase {
            entries,
            visual_index,
            homophone_index,
            emoji_index,
            reverse_split_index,
            checksum,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// SHA-256 over the raw table bytes, recorded in run manifests.
    pub fn checksum(&self) -> &str {
        &self.checksum
    }

    pub fn contains(&self, ch: char) -> bool {
        self.entries.contains_key(&ch)
    }

    pub fn entry(&self, ch: char) -> Result<&CharEntry, KbError> {
        self.entries.get(&ch).ok_or(KbError::UnknownChar { ch })
    }

    pub fn entries(&self) -> impl Iterator<Item = &CharEntry> {
        self.entries.values()
    }

    /// Ordered visual components of `ch`; empty for atomic characters.
    pub fn decompose(&self, ch: char) -> Result<&[char], KbError> {
        Ok(&self.entry(ch)?.decomposition)
    }

    /// Original character for a component sequence, if the sequence came from
    /// some entry's decomposition.
    pub fn recompose(&self, components: &str) -> Option<char> {
        self.reverse_split_index.get(components).copied()
    }

    /// Primary reading of every CJK character in `text`. Non-CJK characters
    /// are skipped; the returned offsets mark where each syllable came from.
    pub fn pinyin_of(&self, text: &str) -> Result<Vec<TextSyllable>, KbError> {
        let mut out = Vec::new();
        for (offset, ch) in text.chars().enumerate() {
            if !is_cjk(ch) {
                continue;
            }
            let entry = self
                .entries
                .get(&ch)
                .ok_or(KbError::UnknownCharAt { ch, offset })?;
            out.push(TextSyllable { offset, ch, syllable: entry.primary().clone() });
        }
        Ok(out)
    }

    /// Traditional form of `ch`, or `ch` itself when it is its own
    /// traditional form.
    pub fn to_traditional(&self, ch: char) -> Result<char, KbError> {
        Ok(self.entry(ch)?.traditional.unwrap_or(ch))
    }

    /// Up to `k` visually similar characters, best first. Never contains
    /// `ch`; empty when the index has no row for it.
    pub fn visual_neighbors(&self, ch: char, k: usize) -> Result<Vec<char>, KbError> {
        self.entry(ch)?;
        Ok(self
            .visual_index
            .get(&ch)
            .map(|v| v.iter().copied().take(k).collect())
            .unwrap_or_default())
    }

    /// Replacement strings whose toneless primary pinyin equals `word`'s,
    /// ranked by summed frequency rank (most common first). `word` itself is
    /// excluded.
    pub fn homophones(&self, word: &str) -> Result<Vec<String>, KbError> {
        let chars: Vec<char> = word.chars().collect();
        let mut per_position: Vec<Vec<(u32, char)>> = Vec::with_capacity(chars.len());
        for &ch in &chars {
            let entry = self.entry(ch)?;
            let syl = entry.primary().toneless();
            // The index carries secondary readings too; candidates must match
            // on their primary reading or pinyin_of(candidate) would differ.
            let mut cands: Vec<(u32, char)> = self
                .homophone_index
                .get(&syl)
                .map(|list| {
                    list.iter()
                        .filter(|c| self.entries[c].primary().toneless() == syl)
                        .map(|c| (self.entries[c].frequency_rank, *c))
                        .collect()
                })
                .unwrap_or_default();
            cands.truncate(HOMOPHONE_PER_POSITION);
            if cands.is_empty() {
                return Ok(Vec::new());
            }
            per_position.push(cands);
        }
        if per_position.is_empty() {
            return Ok(Vec::new());
        }

        let mut combos: Vec<(u64, String)> = vec![(0, String::new())];
        for cands in &per_position {
            let mut next = Vec::with_capacity(combos.len() * cands.len());
            for (rank, prefix) in &combos {
                for (r, c) in cands {
                    let mut s = prefix.clone();
                    s.push(*c);
                    next.push((rank + u64::from(*r), s));
                }
            }
            next.sort();
            next.truncate(HOMOPHONE_CAP * 4);
            combos = next;
        }
        combos.sort();
        let mut out: Vec<String> = combos
            .into_iter()
            .map(|(_, s)| s)
            .filter(|s| s != word)
            .collect();
        out.dedup();
        out.truncate(HOMOPHONE_CAP);
        Ok(out)
    }

    /// True when the unit (character or word) has a direct emoji row.
    pub fn has_emoji(&self, unit: &str) -> bool {
        self.emoji_index.contains_key(unit)
    }

    /// Ranked emoji substitutes for a character or word. A multi-character
    /// unit without a direct row composes one candidate from its indexed
    /// characters (unindexed characters pass through). Empty when nothing is
    /// mapped.
    pub fn emoji_for(&self, unit: &str) -> Vec<EmojiCandidate> {
        if let Some(direct) = self.emoji_index.get(unit) {
            return direct.clone();
        }
        if unit.chars().count() < 2 {
            return Vec::new();
        }
        let mut composed = String::new();
        let mut provenance = None;
        let mut mapped = false;
        for ch in unit.chars() {
            match self.emoji_index.get(ch.to_string().as_str()).and_then(|v| v.first()) {
                Some(c) => {
                    composed.push_str(&c.emoji);
                    provenance.get_or_insert(c.provenance);
                    mapped = true;
                }
                None => composed.push(ch),
            }
        }
        if !mapped {
            return Vec::new();
        }
        vec![EmojiCandidate {
            emoji: composed,
            provenance: provenance.unwrap_or(EmojiProvenance::Pictographic),
        }]
    }

    /// Top emoji substitution per character of `unit`, for per-character
    /// edits: `(offset within unit, emoji)` pairs for the indexed characters.
    pub fn emoji_per_char(&self, unit: &str) -> Vec<(usize, String)> {
        unit.chars()
            .enumerate()
            .filter_map(|(i, ch)| {
                self.emoji_index
                    .get(ch.to_string().as_str())
                    .and_then(|v| v.first())
                    .map(|c| (i, c.emoji.clone()))
            })
            .collect()
    }
}
