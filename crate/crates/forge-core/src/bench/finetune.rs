//! Fine-tune export: chat-format training files plus a hyperparameter
//! sidecar. The artifact only produces the files — training itself runs on
//! the provider side, so the sidecar records the settings a run should use.

use super::prompt::{template, Message, Role, TemplateId};
use super::verdict::parse_verdict;
use super::BenchError;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// One labeled training sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FtSample {
    pub text: String,
    /// 0 = non-toxic, 1 = toxic.
    pub label: u8,
    /// Toxic surface quoted in the assistant turn when label is 1.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub entity: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ChatLine {
    messages: Vec<Message>,
}

/// Hyperparameters recorded next to every export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FtHyperparams {
    pub batch_size: u32,
    pub n_epochs: u32,
    pub learning_rate_multiplier: f64,
    pub presence_penalty: f64,
    pub frequency_penalty: f64,
    pub logit_bias: Option<serde_json::Value>,
    pub inference_temperature: f64,
    pub inference_top_p: f64,
    pub n_samples: usize,
}

impl FtHyperparams {
    pub fn defaults(n_samples: usize) -> FtHyperparams {
        FtHyperparams {
            batch_size: 16,
            n_epochs: 3,
            learning_rate_multiplier: 0.1,
            presence_penalty: 0.0,
            frequency_penalty: 0.0,
            logit_bias: None,
            inference_temperature: 0.0,
            inference_top_p: 1.0,
            n_samples,
        }
    }
}

#[derive(Debug)]
pub struct ExportReport {
    pub written: usize,
    pub training_path: PathBuf,
    pub sidecar_path: PathBuf,
    pub warnings: Vec<String>,
}

fn assistant_reply(sample: &FtSample) -> String {
    if sample.label == 1 {
        match &sample.entity {
            Some(entity) => format!("1，毒性内容是：{entity}"),
            None => "1，毒性内容是：".to_string(),
        }
    } else {
        "0，没有毒性内容".to_string()
    }
}

pub fn sidecar_path(training_path: &Path) -> PathBuf {
    let stem = training_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "train".to_string());
    training_path.with_file_name(format!("{stem}.hyperparams.json"))
}

/// Writes the first `n` samples in chat format plus the hyperparameter
/// sidecar. Sizes outside the studied {10, 20, 40} grid are allowed but
/// flagged in the report's warnings.
pub fn export_finetune(
    samples: &[FtSample],
    n: usize,
    training_path: impl AsRef<Path>,
) -> Result<ExportReport, BenchError> {
    if n == 0 {
        return Err(BenchError::ZeroExport);
    }
    if samples.len() < n {
        return Err(BenchError::InsufficientSamples { need: n, have: samples.len() });
    }
    let training_path = training_path.as_ref().to_path_buf();
    let mut warnings = Vec::new();
    if ![10, 20, 40].contains(&n) {
        warnings.push(format!("n={n} is outside the studied sizes {{10, 20, 40}}"));
    }

    let system = template(TemplateId::Cn).text.to_string();
    let mut out = String::new();
    for sample in &samples[..n] {
        let line = ChatLine {
            messages: vec![
                Message { role: Role::System, content: system.clone() },
                Message { role: Role::User, content: sample.text.clone() },
                Message { role: Role::Assistant, content: assistant_reply(sample) },
            ],
        };
        out.push_str(&serde_json::to_string(&line).expect("chat line serializes"));
        out.push('\n');
    }
    let io_err = |path: &Path| {
        let path = path.display().to_string();
        move |source: std::io::Error| BenchError::Io { path, source }
    };
    std::fs::write(&training_path, out).map_err(io_err(&training_path))?;

    let sidecar = sidecar_path(&training_path);
    let params = FtHyperparams::defaults(n);
    std::fs::write(&sidecar, serde_json::to_string_pretty(&params).expect("sidecar serializes"))
        .map_err(io_err(&sidecar))?;

    Ok(ExportReport { written: n, training_path, sidecar_path: sidecar, warnings })
}

/// Reads a chat-format training file back into samples.
pub fn import_finetune(training_path: impl AsRef<Path>) -> Result<Vec<FtSample>, BenchError> {
    let path = training_path.as_ref();
    let content = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut samples = Vec::new();
    for line in content.lines().filter(|l| !l.trim().is_empty()) {
        let parsed: ChatLine = serde_json::from_str(line).map_err(|source| BenchError::Json {
            path: path.display().to_string(),
            source,
        })?;
        let text = parsed
            .messages
            .iter()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.clone())
            .unwrap_or_default();
        let assistant = parsed
            .messages
            .iter()
            .find(|m| m.role == Role::Assistant)
            .map(|m| m.content.clone())
            .unwrap_or_default();
        let verdict = parse_verdict(&assistant);
        samples.push(FtSample {
            text,
            label: u8::from(verdict.label.is_toxic()),
            entity: verdict.extracted,
        });
    }
    Ok(samples)
}
