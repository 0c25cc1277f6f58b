//! Codepoint-level helpers for mixed Chinese/ASCII/emoji text.
//!
//! All offsets in this crate are codepoint offsets, not byte offsets:
//! perturbation spans, edits, and shuffle windows move whole characters.

/// True for codepoints in the CJK ideograph blocks (unified, extensions A/B,
/// compatibility ideographs) and the radicals supplement used by component
/// forms like 氵 and 礻.
pub fn is_cjk(c: char) -> bool {
    matches!(u32::from(c),
        0x4E00..=0x9FFF
        | 0x3400..=0x4DBF
        | 0xF900..=0xFAFF
        | 0x20000..=0x2A6DF
        | 0x2E80..=0x2EFF)
}

/// Number of CJK codepoints in `s`.
pub fn cjk_count(s: &str) -> usize {
    s.chars().filter(|&c| is_cjk(c)).count()
}

/// Number of codepoints in `s`.
pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Slice `s` by codepoint offsets `[start, end)`.
pub fn char_slice(s: &str, start: usize, end: usize) -> String {
    s.chars().skip(start).take(end.saturating_sub(start)).collect()
}

const CJK_PUNCT: &str = "，。！？；：、“”‘’「」『』（）【】《》〈〉…—～·\u{3000}";

/// Normalization used when comparing extracted toxic text against a gold
/// entity: drops ASCII punctuation, CJK punctuation, and all whitespace,
/// and lowercases ASCII letters.
pub fn normalize_for_match(s: &str) -> String {
    s.chars()
        .filter(|c| !c.is_whitespace() && !c.is_ascii_punctuation() && !CJK_PUNCT.contains(*c))
        .flat_map(|c| c.to_lowercase())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cjk_detection() {
        assert!(is_cjk('汉'));
        assert!(is_cjk('氵')); // radical supplement block member 6C35 is unified, 亻 too
        assert!(is_cjk('⺮'));
        assert!(!is_cjk('a'));
        assert!(!is_cjk('，'));
        assert!(!is_cjk('💀'));
    }

    #[test]
    fn counting_and_slicing() {
        assert_eq!(cjk_count("杀人, ok 💀"), 2);
        assert_eq!(char_len("💀人"), 2);
        assert_eq!(char_slice("没有任何舔狗", 4, 6), "舔狗");
    }

    #[test]
    fn normalization_strips_punct_and_space() {
        assert_eq!(normalize_for_match(" 脑瘫。"), "脑瘫");
        assert_eq!(normalize_for_match("“Nie Chu”"), "niechu");
        assert_eq!(normalize_for_match("废物；去死"), "废物去死");
    }
}
