//! Prompt catalog and message rendering.
//!
//! Each template is embedded byte-for-byte from its catalog file under
//! `prompts/`. The detection templates take the sentence as the user turn;
//! in-context examples, when provided, go between the instructions and the
//! sentence. The CA-CoT template carries an `{examples}` slot because its
//! few-shot examples are user-supplied data, not part of the instructions.

use super::BenchError;
use crate::perturb::PerturbationType;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TemplateId {
    Cn,
    Eng,
    CnConcise,
    CnDetailed,
    EngConcise,
    EngDetailed,
    Cacot,
    ExtractFewshot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lang {
    Cn,
    Eng,
}

impl TemplateId {
    pub const ALL: [TemplateId; 8] = [
        TemplateId::Cn,
        TemplateId::Eng,
        TemplateId::CnConcise,
        TemplateId::CnDetailed,
        TemplateId::EngConcise,
        TemplateId::EngDetailed,
        TemplateId::Cacot,
        TemplateId::ExtractFewshot,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TemplateId::Cn => "CN",
            TemplateId::Eng => "ENG",
            TemplateId::CnConcise => "CN_Concise",
            TemplateId::CnDetailed => "CN_Detailed",
            TemplateId::EngConcise => "ENG_Concise",
            TemplateId::EngDetailed => "ENG_Detailed",
            TemplateId::Cacot => "CACOT",
            TemplateId::ExtractFewshot => "EXTRACT_FEWSHOT",
        }
    }

    pub fn parse(s: &str) -> Result<TemplateId, BenchError> {
        Self::ALL
            .iter()
            .copied()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| BenchError::UnknownTemplate(s.to_string()))
    }
}

impl std::fmt::Display for TemplateId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub language: Lang,
    /// Byte-identical to the catalog file.
    pub text: &'static str,
}

const CATALOG: [PromptTemplate; 8] = [
    PromptTemplate { id: TemplateId::Cn, language: Lang::Cn, text: include_str!("../../prompts/cn.txt") },
    PromptTemplate { id: TemplateId::Eng, language: Lang::Eng, text: include_str!("../../prompts/eng.txt") },
    PromptTemplate {
        id: TemplateId::CnConcise,
        language: Lang::Cn,
        text: include_str!("../../prompts/cn_concise.txt"),
    },
    PromptTemplate {
        id: TemplateId::CnDetailed,
        language: Lang::Cn,
        text: include_str!("../../prompts/cn_detailed.txt"),
    },
    PromptTemplate {
        id: TemplateId::EngConcise,
        language: Lang::Eng,
        text: include_str!("../../prompts/eng_concise.txt"),
    },
    PromptTemplate {
        id: TemplateId::EngDetailed,
        language: Lang::Eng,
        text: include_str!("../../prompts/eng_detailed.txt"),
    },
    PromptTemplate {
        id: TemplateId::Cacot,
        language: Lang::Cn,
        text: include_str!("../../prompts/cacot.txt"),
    },
    PromptTemplate {
        id: TemplateId::ExtractFewshot,
        language: Lang::Cn,
        text: include_str!("../../prompts/extract_fewshot.txt"),
    },
];

pub fn catalog() -> &'static [PromptTemplate] {
    &CATALOG
}

pub fn template(id: TemplateId) -> &'static PromptTemplate {
    CATALOG.iter().find(|t| t.id == id).expect("catalog covers every id")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

/// One labeled in-context example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IclExample {
    pub text: String,
    /// 0 = non-toxic, 1 = toxic.
    pub label: u8,
    pub analysis: String,
    #[serde(rename = "type")]
    pub ptype: PerturbationType,
}

/// A validated set of in-context examples: exactly 10 per requested type.
#[derive(Debug, Clone)]
pub struct IclBlock {
    examples: Vec<IclExample>,
}

impl IclBlock {
    pub fn new(
        examples: Vec<IclExample>,
        requested: &[PerturbationType],
    ) -> Result<IclBlock, BenchError> {
        let mut counts: BTreeMap<PerturbationType, usize> = BTreeMap::new();
        for e in &examples {
            *counts.entry(e.ptype).or_default() += 1;
        }
        for &ptype in requested {
            let got = counts.get(&ptype).copied().unwrap_or(0);
            if got != 10 {
                return Err(BenchError::BadIclBlock { ptype: ptype.tag().to_string(), got });
            }
        }
        Ok(IclBlock { examples })
    }

    /// JSON Lines, one example per line.
    pub fn load(path: impl AsRef<Path>, requested: &[PerturbationType]) -> Result<IclBlock, BenchError> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut examples = Vec::new();
        for line in content.lines().filter(|l| !l.trim().is_empty()) {
            examples.push(serde_json::from_str(line).map_err(|source| BenchError::Json {
                path: path.display().to_string(),
                source,
            })?);
        }
        IclBlock::new(examples, requested)
    }

    pub fn examples(&self) -> &[IclExample] {
        &self.examples
    }

    fn render(&self, language: Lang) -> String {
        let mut out = String::new();
        for (i, e) in self.examples.iter().enumerate() {
            match language {
                Lang::Cn => {
                    out.push_str(&format!(
                        "示例{}：{}\n标签：{}\n分析：{}\n\n",
                        i + 1,
                        e.text,
                        e.label,
                        e.analysis
                    ));
                }
                Lang::Eng => {
                    out.push_str(&format!(
                        "Example {}: {}\nLabel: {}\nAnalysis: {}\n\n",
                        i + 1,
                        e.text,
                        e.label,
                        e.analysis
                    ));
                }
            }
        }
        out.trim_end().to_string()
    }
}

const CACOT_EXAMPLES_SLOT: &str = "{examples}";
const CACOT_EXAMPLES_HEADER: &str = "以下是若干示例：";

/// Renders a template plus sample into a chat message sequence.
pub fn render_prompt(
    template: &PromptTemplate,
    sample_text: &str,
    icl: Option<&IclBlock>,
) -> Result<Vec<Message>, BenchError> {
    if sample_text.is_empty() {
        return Err(BenchError::EmptySample);
    }
    let system = match (template.id, icl) {
        (TemplateId::Cacot, Some(block)) => {
            template.text.replace(CACOT_EXAMPLES_SLOT, &block.render(template.language))
        }
        (TemplateId::Cacot, None) => {
            // Drop the examples section entirely when none are supplied.
            match template.text.find(CACOT_EXAMPLES_HEADER) {
                Some(at) => template.text[..at].trim_end().to_string(),
                None => template.text.to_string(),
            }
        }
        _ => template.text.to_string(),
    };
    let user = match (template.id, icl) {
        (TemplateId::Cacot, _) | (_, None) => sample_text.to_string(),
        (_, Some(block)) => format!("{}\n\n{}", block.render(template.language), sample_text),
    };
    Ok(vec![
        Message { role: Role::System, content: system },
        Message { role: Role::User, content: user },
    ])
}
