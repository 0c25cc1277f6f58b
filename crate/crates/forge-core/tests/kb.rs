//! Knowledge-base loading, lookups, and invariants over the bundled tables.

mod common;

use common::{load_mini_kb, mini_kb_paths};
use forge_core::charkb::{
    validate_tables, CharacterKnowledgeBase, EmojiProvenance, KbError, Syllable, TablePaths,
};
use std::io::Write;

#[test]
fn bundled_tables_load_with_enough_entries() {
    let kb = load_mini_kb();
    assert!(kb.len() >= 500, "mini table has {} entries", kb.len());
}

#[test]
fn decompositions_match_table_one() {
    let kb = load_mini_kb();
    assert_eq!(kb.decompose('精').unwrap(), &['米', '青']);
    assert_eq!(kb.decompose('树').unwrap(), &['木', '又', '寸']);
    assert_eq!(kb.decompose('人').unwrap(), &[] as &[char]);
    assert!(matches!(kb.decompose('𠀀'), Err(KbError::UnknownChar { .. })));
}

#[test]
fn pinyin_of_reads_primary_syllables() {
    let kb = load_mini_kb();
    let han = kb.pinyin_of("汉").unwrap();
    assert_eq!(han.len(), 1);
    assert_eq!(han[0].syllable.toneless(), "han");
    assert_eq!(han[0].syllable.tone, 4);
    assert_eq!(han[0].syllable.initial, "h");
    assert_eq!(han[0].syllable.rime, "an");

    let sha_ren = kb.pinyin_of("杀人").unwrap();
    assert_eq!(
        sha_ren.iter().map(|s| (s.syllable.toneless(), s.syllable.tone)).collect::<Vec<_>>(),
        vec![("sha".to_string(), 1), ("ren".to_string(), 2)]
    );

    assert!(kb.pinyin_of("").unwrap().is_empty());
    // non-CJK skipped, offsets preserved
    let mixed = kb.pinyin_of("a汉!人").unwrap();
    assert_eq!(mixed.iter().map(|s| s.offset).collect::<Vec<_>>(), vec![1, 3]);
    // unknown CJK char named with offset
    match kb.pinyin_of("汉㿗") {
        Err(KbError::UnknownCharAt { ch, offset }) => {
            assert_eq!(ch, '㿗');
            assert_eq!(offset, 1);
        }
        other => panic!("expected UnknownCharAt, got {other:?}"),
    }
}

#[test]
fn traditional_mappings() {
    let kb = load_mini_kb();
    assert_eq!(kb.to_traditional('乐').unwrap(), '樂');
    assert_eq!(kb.to_traditional('瘫').unwrap(), '癱');
    assert_eq!(kb.to_traditional('脑').unwrap(), '腦');
    // fixed point: identical in both scripts
    assert_eq!(kb.to_traditional('人').unwrap(), '人');
}

#[test]
fn visual_neighbors_ranked_and_irreflexive() {
    let kb = load_mini_kb();
    assert!(kb.visual_neighbors('池', 8).unwrap().contains(&'也'));
    assert!(kb.visual_neighbors('比', 8).unwrap().contains(&'此'));
    // char present in the table but without a visual row
    assert!(kb.visual_neighbors('的', 8).unwrap().is_empty());
    // k truncates
    assert_eq!(kb.visual_neighbors('人', 1).unwrap().len(), 1);
    for entry in kb.entries() {
        let neighbors = kb.visual_neighbors(entry.ch, 64).unwrap();
        assert!(!neighbors.contains(&entry.ch), "{} lists itself", entry.ch);
    }
}

#[test]
fn stroke_difference_reorders_visual_neighbors() {
    // 日(4) -> 百(6), 目(5): input order says 百 first, stroke distance says 目.
    let kb = load_mini_kb();
    assert_eq!(kb.visual_neighbors('日', 2).unwrap(), vec!['目', '百']);
}

#[test]
fn homophones_rank_by_frequency() {
    let kb = load_mini_kb();
    let candidates = kb.homophones("歪瓜裂枣").unwrap();
    assert_eq!(candidates.first().map(String::as_str), Some("外挂列早"));
    assert!(!candidates.iter().any(|c| c == "歪瓜裂枣"));

    let hanjian = kb.homophones("汉奸").unwrap();
    assert!(hanjian.iter().any(|c| c == "韩箭"), "韩箭 missing from {hanjian:?}");

    // 孽 is the only nie-syllable entry in the mini table
    assert!(kb.homophones("孽").unwrap().is_empty());
    // ... so any 孽-word candidate keeps 孽 in position 0
    assert!(kb.homophones("孽畜").unwrap().iter().all(|c| c.starts_with('孽')));
}

#[test]
fn homophone_soundness_over_all_candidates() {
    let kb = load_mini_kb();
    for word in ["妈", "汉奸", "歪瓜裂枣", "杀人", "舔狗"] {
        let want: Vec<String> =
            kb.pinyin_of(word).unwrap().iter().map(|s| s.syllable.toneless()).collect();
        for cand in kb.homophones(word).unwrap() {
            let got: Vec<String> =
                kb.pinyin_of(&cand).unwrap().iter().map(|s| s.syllable.toneless()).collect();
            assert_eq!(got, want, "candidate {cand} not a homophone of {word}");
        }
    }
}

#[test]
fn emoji_lookups() {
    let kb = load_mini_kb();
    let sha = kb.emoji_for("杀");
    assert_eq!(sha[0].emoji, "💀");
    assert_eq!(sha[0].provenance, EmojiProvenance::Pictographic);

    let ma = kb.emoji_for("妈");
    assert_eq!(ma[0].emoji, "🐴");
    assert_eq!(ma[0].provenance, EmojiProvenance::Homophonic);

    // direct word row
    assert_eq!(kb.emoji_for("舔狗")[0].emoji, "👅🐶");
    // composed from indexed chars
    assert_eq!(kb.emoji_for("杀人")[0].emoji, "💀人");
    // nothing mapped
    assert!(kb.emoji_for("条").is_empty());
}

#[test]
fn reverse_split_index_inverts_decompositions() {
    let kb = load_mini_kb();
    let mut checked = 0;
    for entry in kb.entries() {
        if !entry.decomposition.is_empty() {
            let seq: String = entry.decomposition.iter().collect();
            assert_eq!(kb.recompose(&seq), Some(entry.ch));
            checked += 1;
        }
    }
    assert!(checked >= 100, "only {checked} decomposed entries");
}

#[test]
fn load_is_deterministic() {
    let a = CharacterKnowledgeBase::load(&mini_kb_paths()).unwrap();
    let b = CharacterKnowledgeBase::load(&mini_kb_paths()).unwrap();
    assert_eq!(a, b);
}

fn write_tables(dir: &std::path::Path, chars: &str, visual: &str, emoji: &str) -> TablePaths {
    let paths = TablePaths::in_dir(dir);
    std::fs::File::create(&paths.chars).unwrap().write_all(chars.as_bytes()).unwrap();
    std::fs::File::create(&paths.visual).unwrap().write_all(visual.as_bytes()).unwrap();
    std::fs::File::create(&paths.emoji).unwrap().write_all(emoji.as_bytes()).unwrap();
    paths
}

#[test]
fn empty_chars_table_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_tables(dir.path(), "# only a comment\n", "", "");
    match CharacterKnowledgeBase::load(&paths) {
        Err(KbError::NoEntries { .. }) => {}
        other => panic!("expected NoEntries, got {other:?}"),
    }
}

#[test]
fn duplicate_char_rejected_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_tables(
        dir.path(),
        "人\t\tren2\t\t1\t\n人\t\tren2\t\t2\t\n",
        "",
        "",
    );
    let report = validate_tables(&paths).unwrap();
    assert!(report.violations.iter().any(|v| v.contains(":2:") && v.contains("duplicate")));
    assert!(CharacterKnowledgeBase::load(&paths).is_err());
}

#[test]
fn unknown_decomposition_component_fails_load() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_tables(dir.path(), "好\t女子\thao3\t\t1\t\n女\t\tnv3\t\t2\t\n", "", "");
    let report = validate_tables(&paths).unwrap();
    assert!(report.violations.iter().any(|v| v.contains("unknown codepoint 子")));
}

#[test]
fn malformed_rows_report_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_tables(
        dir.path(),
        "人\t\tren2\t\t1\t\n木\t\tmu4\t\tnot_a_number\t\n比\t\tBI3\t\t3\t\n",
        "",
        "",
    );
    let report = validate_tables(&paths).unwrap();
    assert!(report.violations.iter().any(|v| v.contains(":2:") && v.contains("column 5")));
    assert!(report.violations.iter().any(|v| v.contains(":3:") && v.contains("column 3")));
}

#[test]
fn duplicate_frequency_rank_is_a_violation() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_tables(dir.path(), "人\t\tren2\t\t1\t\n木\t\tmu4\t\t1\t\n", "", "");
    let report = validate_tables(&paths).unwrap();
    assert!(report.violations.iter().any(|v| v.contains("frequency_rank 1 already used")));
}

#[test]
fn visual_self_reference_is_a_violation() {
    let dir = tempfile::tempdir().unwrap();
    let paths =
        write_tables(dir.path(), "人\t\tren2\t\t1\t\n入\t\tru4\t\t2\t\n", "人\t人 入\n", "");
    let report = validate_tables(&paths).unwrap();
    assert!(report.violations.iter().any(|v| v.contains("contains itself")));
}

#[test]
fn syllable_parsing_rules() {
    let s = Syllable::parse("zhuang1").unwrap();
    assert_eq!((s.initial.as_str(), s.rime.as_str(), s.tone), ("zh", "uang", 1));
    let s = Syllable::parse("an4").unwrap();
    assert_eq!((s.initial.as_str(), s.rime.as_str(), s.tone), ("", "an", 4));
    let s = Syllable::parse("lv4").unwrap();
    assert_eq!((s.initial.as_str(), s.rime.as_str(), s.tone), ("l", "v", 4));
    let s = Syllable::parse("de0").unwrap();
    assert_eq!(s.tone, 0);
    assert!(Syllable::parse("han").is_err(), "missing tone digit");
    assert!(Syllable::parse("hàn4").is_err(), "non-ascii");
    assert!(Syllable::parse("han5").is_err(), "tone out of range");
    assert!(Syllable::parse("zh4").is_err(), "empty final");
}
