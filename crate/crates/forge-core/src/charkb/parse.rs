//! Table parsing and validation.
//!
//! All three tables are UTF-8, tab-separated, one record per line, with
//! `#`-prefixed comment lines and blank lines ignored:
//!
//! - `chars.tsv`: char ⟂ decomposition ⟂ pinyin (`;`-separated
//!   `syllable+toneDigit`) ⟂ traditional ⟂ frequency_rank ⟂ stroke_count
//!   (optional column)
//! - `visual.tsv`: char ⟂ space-separated neighbor chars, pre-ranked
//! - `emoji.tsv`: unit ⟂ space-separated emoji ⟂ `homo`|`picto`
//!
//! `validate_tables` collects every violation (for `forge kb validate`);
//! `CharacterKnowledgeBase::load` rejects tables with any violation.

use super::{CharEntry, CharacterKnowledgeBase, EmojiProvenance, KbError, Syllable};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct TablePaths {
    pub chars: PathBuf,
    pub visual: PathBuf,
    pub emoji: PathBuf,
}

impl TablePaths {
    /// Conventional layout: `DIR/chars.tsv`, `DIR/visual.tsv`, `DIR/emoji.tsv`.
    pub fn in_dir(dir: impl AsRef<Path>) -> TablePaths {
        let dir = dir.as_ref();
        TablePaths {
            chars: dir.join("chars.tsv"),
            visual: dir.join("visual.tsv"),
            emoji: dir.join("emoji.tsv"),
        }
    }
}

#[derive(Debug)]
pub struct ValidationReport {
    pub entry_count: usize,
    pub visual_rows: usize,
    pub emoji_rows: usize,
    pub violations: Vec<String>,
    /// Present when the tables were clean.
    pub kb: Option<CharacterKnowledgeBase>,
}

fn read(path: &Path) -> Result<String, KbError> {
    std::fs::read_to_string(path).map_err(|source| KbError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn rows(content: &str) -> impl Iterator<Item = (usize, &str)> {
    content
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
}

fn single_char(field: &str) -> Option<char> {
    let mut it = field.chars();
    match (it.next(), it.next()) {
        (Some(c), None) => Some(c),
        _ => None,
    }
}

/// Parses and cross-checks all three tables, collecting every violation.
pub fn validate_tables(paths: &TablePaths) -> Result<ValidationReport, KbError> {
    let chars_src = read(&paths.chars)?;
    let visual_src = read(&paths.visual)?;
    let emoji_src = read(&paths.emoji)?;

    let mut checksum = Sha256::new();
    for src in [&chars_src, &visual_src, &emoji_src] {
        checksum.update(src.as_bytes());
    }
    let checksum = hex::encode(checksum.finalize());

    let chars_file = paths.chars.display().to_string();
    let visual_file = paths.visual.display().to_string();
    let emoji_file = paths.emoji.display().to_string();

    let mut violations: Vec<String> = Vec::new();
    let mut entries: BTreeMap<char, CharEntry> = BTreeMap::new();
    let mut ranks: BTreeMap<u32, char> = BTreeMap::new();

    for (line, row) in rows(&chars_src) {
        let cols: Vec<&str> = row.split('\t').collect();
        if !(5..=6).contains(&cols.len()) {
            violations.push(format!(
                "{chars_file}:{line}: expected 5-6 columns, got {}",
                cols.len()
            ));
            continue;
        }
        let Some(ch) = single_char(cols[0]) else {
            violations.push(format!(
                "{chars_file}:{line}: column 1 must be a single char, got {:?}",
                cols[0]
            ));
            continue;
        };
        if entries.contains_key(&ch) {
            violations.push(format!("{chars_file}:{line}: duplicate char {ch}"));
            continue;
        }

        let decomposition: Vec<char> = cols[1].chars().collect();
        if decomposition.len() == 1 || decomposition.len() > 4 {
            violations.push(format!(
                "{chars_file}:{line}: column 2: decomposition must have 0 or 2..4 components"
            ));
            continue;
        }

        let mut readings = Vec::new();
        let mut bad_reading = false;
        for part in cols[2].split(';') {
            match Syllable::parse(part) {
                Ok(s) => readings.push(s),
                Err(msg) => {
                    violations.push(format!("{chars_file}:{line}: column 3: {msg}"));
                    bad_reading = true;
                }
            }
        }
        if bad_reading {
            continue;
        }
        if readings.is_empty() {
            violations.push(format!("{chars_file}:{line}: column 3: no readings"));
            continue;
        }

        let traditional = if cols[3].is_empty() {
            None
        } else {
            match single_char(cols[3]) {
                Some(t) => Some(t),
                None => {
                    violations.push(format!(
                        "{chars_file}:{line}: column 4 must be empty or a single char"
                    ));
                    continue;
                }
            }
        };

        let frequency_rank = match cols[4].parse::<u32>() {
            Ok(r) if r > 0 => r,
            _ => {
                violations.push(format!(
                    "{chars_file}:{line}: column 5 must be a positive integer, got {:?}",
                    cols[4]
                ));
                continue;
            }
        };
        if let Some(prev) = ranks.insert(frequency_rank, ch) {
            violations.push(format!(
                "{chars_file}:{line}: frequency_rank {frequency_rank} already used by {prev}"
            ));
        }

        let stroke_count = match cols.get(5) {
            None => None,
            Some(s) if s.is_empty() => None,
            Some(s) => match s.parse::<u32>() {
                Ok(n) if n > 0 => Some(n),
                _ => {
                    violations.push(format!(
                        "{chars_file}:{line}: column 6 must be empty or a positive integer"
                    ));
                    continue;
                }
            },
        };

        entries.insert(
            ch,
            CharEntry { ch, decomposition, readings, traditional, frequency_rank, stroke_count },
        );
    }

    if entries.is_empty() && violations.is_empty() {
        return Err(KbError::NoEntries { file: chars_file });
    }

    // Cross-checks over the assembled entries.
    let mut split_seqs: BTreeMap<String, char> = BTreeMap::new();
    for entry in entries.values() {
        for &comp in &entry.decomposition {
            if !entries.contains_key(&comp) {
                violations.push(format!(
                    "{chars_file}: decomposition of {} references unknown codepoint {comp}",
                    entry.ch
                ));
            }
        }
        if !entry.decomposition.is_empty() {
            let seq: String = entry.decomposition.iter().collect();
            if let Some(prev) = split_seqs.insert(seq.clone(), entry.ch) {
                violations.push(format!(
                    "{chars_file}: decomposition {seq} of {} duplicates {prev}",
                    entry.ch
                ));
            }
        }
    }

    let mut visual_raw: Vec<(char, Vec<char>)> = Vec::new();
    for (line, row) in rows(&visual_src) {
        let cols: Vec<&str> = row.split('\t').collect();
        if cols.len() > 2 {
            violations.push(format!("{visual_file}:{line}: expected 1-2 columns"));
            continue;
        }
        let Some(ch) = single_char(cols[0]) else {
            violations.push(format!(
                "{visual_file}:{line}: column 1 must be a single char, got {:?}",
                cols[0]
            ));
            continue;
        };
        if !entries.contains_key(&ch) {
            violations.push(format!("{visual_file}:{line}: {ch} is not a table entry"));
            continue;
        }
        let mut neighbors = Vec::new();
        for field in cols.get(1).copied().unwrap_or("").split_whitespace() {
            match single_char(field) {
                Some(n) if n == ch => violations.push(format!(
                    "{visual_file}:{line}: neighbor list of {ch} contains itself"
                )),
                Some(n) => neighbors.push(n),
                None => violations.push(format!(
                    "{visual_file}:{line}: neighbor {field:?} must be a single char"
                )),
            }
        }
        visual_raw.push((ch, neighbors));
    }

    let mut emoji_raw: Vec<(String, Vec<String>, EmojiProvenance)> = Vec::new();
    for (line, row) in rows(&emoji_src) {
        let cols: Vec<&str> = row.split('\t').collect();
        if cols.len() != 3 {
            violations.push(format!("{emoji_file}:{line}: expected 3 columns"));
            continue;
        }
        if cols[0].is_empty() {
            violations.push(format!("{emoji_file}:{line}: empty unit"));
            continue;
        }
        let emojis: Vec<String> = cols[1].split_whitespace().map(str::to_string).collect();
        if emojis.is_empty() {
            violations.push(format!("{emoji_file}:{line}: empty emoji list"));
            continue;
        }
        let provenance = match cols[2] {
            "homo" => EmojiProvenance::Homophonic,
            "picto" => EmojiProvenance::Pictographic,
            other => {
                violations.push(format!(
                    "{emoji_file}:{line}: provenance must be homo|picto, got {other:?}"
                ));
                continue;
            }
        };
        emoji_raw.push((cols[0].to_string(), emojis, provenance));
    }

    let entry_count = entries.len();
    let visual_rows = visual_raw.len();
    let emoji_rows = emoji_raw.len();
    let kb = if violations.is_empty() {
        Some(CharacterKnowledgeBase::from_parts(entries, visual_raw, emoji_raw, checksum))
    } else {
        None
    };

    Ok(ValidationReport { entry_count, visual_rows, emoji_rows, violations, kb })
}
