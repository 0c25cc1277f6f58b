//! Parsing model replies into verdicts.
//!
//! Replies are expected to follow the `0，没有毒性内容 / 1，毒性内容是：xxx`
//! convention, but models deviate freely: Chinese or ASCII punctuation,
//! leading prose, translated labels. The parser is total — every string maps
//! to exactly one verdict, with `Unparseable` as the sink state, never a
//! panic or error.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PredLabel {
    #[serde(rename = "0")]
    Zero,
    #[serde(rename = "1")]
    One,
    #[serde(rename = "unparseable")]
    Unparseable,
}

impl PredLabel {
    /// Toxic prediction. Unparseable counts as a non-detection.
    pub fn is_toxic(&self) -> bool {
        matches!(self, PredLabel::One)
    }
}

/// The three CA-CoT stages, verbatim segments of the reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacotStages {
    pub analysis: String,
    pub recovery: String,
    pub judgment: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub label: PredLabel,
    /// The quoted toxic text, when the reply provides one. Present only for
    /// label 1.
    pub extracted: Option<String>,
    pub raw: String,
    /// Populated by the CA-CoT parser.
    pub stages: Option<CacotStages>,
}

/// First standalone `0`/`1` in the text: not embedded in a longer number,
/// word, or decimal.
fn find_label(chars: &[char]) -> Option<(usize, PredLabel)> {
    for (i, &c) in chars.iter().enumerate() {
        if c != '0' && c != '1' {
            continue;
        }
        if i > 0 {
            let prev = chars[i - 1];
            if prev.is_ascii_digit() || prev.is_ascii_alphabetic() {
                continue;
            }
        }
        if let Some(&next) = chars.get(i + 1) {
            if next.is_ascii_digit() {
                continue;
            }
            if next == '.' && chars.get(i + 2).is_some_and(|c| c.is_ascii_digit()) {
                continue;
            }
        }
        let label = if c == '1' { PredLabel::One } else { PredLabel::Zero };
        return Some((i, label));
    }
    None
}

const EXTRACT_MARKERS: [&str; 6] = [
    "毒性内容是",
    "冒犯性内容是",
    "冒犯内容是",
    "toxic content is",
    "offensive content is",
    "toxic part is",
];

/// Case-insensitive search for `marker` in `chars`, returning the offset
/// just past the marker.
fn find_marker_end(chars: &[char], marker: &str) -> Option<usize> {
    let needle: Vec<char> = marker.chars().map(|c| c.to_ascii_lowercase()).collect();
    if needle.is_empty() || chars.len() < needle.len() {
        return None;
    }
    (0..=chars.len() - needle.len()).find_map(|start| {
        let matches = chars[start..start + needle.len()]
            .iter()
            .zip(&needle)
            .all(|(a, b)| a.to_ascii_lowercase() == *b);
        matches.then_some(start + needle.len())
    })
}

fn extract_after_marker(chars: &[char]) -> Option<String> {
    let after = EXTRACT_MARKERS.iter().find_map(|m| find_marker_end(chars, m))?;
    let separators = ['：', ':', '，', ',', '。', ' ', '\t', '"', '“', '”', '「', '」', '*'];
    let start = chars[after..]
        .iter()
        .position(|c| !separators.contains(c))
        .map(|p| after + p)?;
    let end = chars[start..]
        .iter()
        .position(|&c| c == '\n' || c == '。')
        .map(|p| start + p)
        .unwrap_or(chars.len());
    let text: String = chars[start..end].iter().collect();
    let text = text
        .trim()
        .trim_matches(['"', '“', '”', '「', '」', '‘', '’', '\'', '*', '；', ';', '，', ','])
        .to_string();
    (!text.is_empty()).then_some(text)
}

/// Parses a plain detection reply. Total: never panics, never errors.
pub fn parse_verdict(raw: &str) -> Verdict {
    let chars: Vec<char> = raw.chars().collect();
    match find_label(&chars) {
        Some((at, PredLabel::One)) => {
            let extracted = extract_after_marker(&chars[at..]);
            Verdict { label: PredLabel::One, extracted, raw: raw.to_string(), stages: None }
        }
        Some((_, label)) => Verdict { label, extracted: None, raw: raw.to_string(), stages: None },
        None => Verdict {
            label: PredLabel::Unparseable,
            extracted: None,
            raw: raw.to_string(),
            stages: None,
        },
    }
}

const STAGE1_MARKERS: [&str; 2] = ["【第一步】", "[Step 1]"];
const STAGE2_MARKERS: [&str; 2] = ["【第二步】", "[Step 2]"];
const STAGE3_MARKERS: [&str; 3] = ["【第三步】", "[Step 3]", "第三步"];

fn stage_pos(chars: &[char], markers: &[&str]) -> Option<(usize, usize)> {
    markers.iter().find_map(|m| {
        find_marker_end(chars, m).map(|end| (end - m.chars().count(), end))
    })
}

/// Parses a CA-CoT three-stage reply. The final label comes from the stage-3
/// segment; a reply without a stage-3 marker is unparseable.
pub fn parse_cacot(raw: &str) -> Verdict {
    let chars: Vec<char> = raw.chars().collect();
    let s1 = stage_pos(&chars, &STAGE1_MARKERS);
    let s2 = stage_pos(&chars, &STAGE2_MARKERS);
    let s3 = stage_pos(&chars, &STAGE3_MARKERS);

    let segment = |from: usize, to: usize| -> String {
        chars[from..to].iter().collect::<String>().trim().to_string()
    };
    let Some((s3_start, s3_end)) = s3 else {
        return Verdict {
            label: PredLabel::Unparseable,
            extracted: None,
            raw: raw.to_string(),
            stages: None,
        };
    };
    let analysis = match (s1, s2) {
        (Some((_, e1)), Some((b2, _))) if b2 >= e1 => segment(e1, b2),
        (Some((_, e1)), _) => segment(e1, s3_start),
        _ => String::new(),
    };
    let recovery = match s2 {
        Some((_, e2)) if s3_start >= e2 => segment(e2, s3_start),
        _ => String::new(),
    };
    let judgment = segment(s3_end, chars.len());

    let inner = parse_verdict(&judgment);
    Verdict {
        label: inner.label,
        extracted: inner.extracted,
        raw: raw.to_string(),
        stages: Some(CacotStages { analysis, recovery, judgment }),
    }
}
