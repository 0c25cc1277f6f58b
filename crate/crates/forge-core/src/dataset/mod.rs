//! Dataset construction pipeline.
//!
//! `build_dataset` runs: sample the base corpus → extract toxic entities →
//! embed perturbations → export the readability worksheet → (after human
//! annotations are imported) filter by readability → emit the final record
//! file and manifest.
//!
//! Every stage writes its output to a file in the output directory and is
//! skipped when that file already exists, so a build is resumable from any
//! point and re-running a complete stage is a no-op. Stage files are written
//! via temp-file-and-rename, so an aborted run never leaves a
//! complete-looking partial stage behind.

use crate::charkb::CharacterKnowledgeBase;
use crate::extract::{extract_entities, ExtractBackend, ExtractError, ExtractionSource};
use crate::perturb::{
    batch_perturb, BatchInput, BatchSkip, Edit, Label, PerturbConfig, PerturbationType, ToxicSpan,
};
use crate::seed::rng_from;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Malformed { path: String, line: usize, msg: String },
    #[error("corpus: duplicate id {0}")]
    DuplicateId(String),
    #[error("corpus: record {0} has empty text")]
    EmptyText(String),
    #[error("corpus has {have} {label} records, need {need}")]
    Insufficient { label: &'static str, have: usize, need: usize },
    #[error("stage {stage} failed: {msg}")]
    Stage { stage: &'static str, msg: String },
    #[error("annotation references unknown sample {0}")]
    UnknownSample(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub text: String,
    pub label: Label,
    pub source_tag: String,
}

/// One line of a dataset record file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub text: String,
    pub label: Label,
    #[serde(rename = "type", skip_serializing_if = "Option::is_none", default)]
    pub ptype: Option<PerturbationType>,
    pub original_id: String,
    #[serde(default)]
    pub edits: Vec<Edit>,
    #[serde(default)]
    pub ratio: f64,
    pub seed: u64,
}

impl Record {
    /// An unperturbed record (base toxic or non-toxic sample).
    pub fn base(rec: &CorpusRecord, seed: u64) -> Record {
        Record {
            id: rec.id.clone(),
            text: rec.text.clone(),
            label: rec.label,
            ptype: None,
            original_id: rec.id.clone(),
            edits: Vec::new(),
            ratio: 0.0,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanRecord {
    pub id: String,
    pub text: String,
    pub spans: Vec<ToxicSpan>,
    pub source: ExtractionSource,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub sample_id: String,
    /// 1 = completely unreadable .. 5 = fully readable and coherent.
    pub readability: u8,
    pub extraction_ok: Option<bool>,
    pub annotator: String,
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<CorpusRecord>, DatasetError> {
    let path = path.as_ref();
    let content = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut seen = BTreeSet::new();
    let mut records = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: CorpusRecord =
            serde_json::from_str(line).map_err(|e| DatasetError::Malformed {
                path: path.display().to_string(),
                line: i + 1,
                msg: e.to_string(),
            })?;
        if !seen.insert(rec.id.clone()) {
            return Err(DatasetError::DuplicateId(rec.id));
        }
        if rec.text.is_empty() {
            return Err(DatasetError::EmptyText(rec.id));
        }
        records.push(rec);
    }
    Ok(records)
}

/// Atomic line-oriented JSON write: temp file in the same directory, then
/// rename over the target.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), DatasetError> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("record serializes"));
        out.push('\n');
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(path))?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, out).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))?;
    Ok(())
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, DatasetError> {
    let content = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut items = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        items.push(serde_json::from_str(line).map_err(|e| DatasetError::Malformed {
            path: path.display().to_string(),
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(items)
}

/// Draws exactly `toxic_n` toxic and `nontoxic_n` non-toxic records without
/// replacement, deterministically in `seed`. The selection is returned in
/// corpus order (toxic first).
pub fn sample_base(
    corpus: &[CorpusRecord],
    toxic_n: usize,
    nontoxic_n: usize,
    seed: u64,
) -> Result<Vec<CorpusRecord>, DatasetError> {
    let pick = |label: Label, n: usize, tag: &str, name: &'static str| {
        let pool: Vec<&CorpusRecord> = corpus.iter().filter(|r| r.label == label).collect();
        if pool.len() < n {
            return Err(DatasetError::Insufficient { label: name, have: pool.len(), need: n });
        }
        let mut indices: Vec<usize> = (0..pool.len()).collect();
        indices.shuffle(&mut rng_from(&[seed, crate::seed::fnv1a64(tag.as_bytes())]));
        let chosen: BTreeSet<usize> = indices.into_iter().take(n).collect();
        Ok(pool
            .into_iter()
            .enumerate()
            .filter(|(i, _)| chosen.contains(i))
            .map(|(_, r)| r.clone())
            .collect::<Vec<_>>())
    };
    let mut out = pick(Label::Toxic, toxic_n, "sample-toxic", "toxic")?;
    out.extend(pick(Label::NonToxic, nontoxic_n, "sample-nontoxic", "non_toxic")?);
    Ok(out)
}

#[derive(Debug, Default)]
pub struct FilterOutcome {
    pub kept: Vec<String>,
    pub discarded: Vec<String>,
    /// Samples with no annotation yet: excluded from the final dataset, never
    /// silently kept.
    pub pending: Vec<String>,
    /// Mean of per-sample mean readability over all annotated samples.
    pub mean_readability: Option<f64>,
}

/// Per-sample mean readability against a keep threshold (ties kept).
pub fn filter_readability(
    sample_ids: &[String],
    annotations: &[AnnotationRecord],
    threshold: f64,
) -> FilterOutcome {
    let mut by_sample: BTreeMap<&str, Vec<u8>> = BTreeMap::new();
    for a in annotations {
        by_sample.entry(a.sample_id.as_str()).or_default().push(a.readability);
    }
    let mut outcome = FilterOutcome::default();
    let mut means = Vec::new();
    for id in sample_ids {
        match by_sample.get(id.as_str()) {
            None => outcome.pending.push(id.clone()),
            Some(scores) => {
                let mean =
                    scores.iter().map(|s| f64::from(*s)).sum::<f64>() / scores.len() as f64;
                means.push(mean);
                if mean >= threshold {
                    outcome.kept.push(id.clone());
                } else {
                    outcome.discarded.push(id.clone());
                }
            }
        }
    }
    if !means.is_empty() {
        outcome.mean_readability = Some(means.iter().sum::<f64>() / means.len() as f64);
    }
    outcome
}

const WORKSHEET_HEADER: &str = "# sample_id\ttext\treadability\textraction_ok\tannotator";

pub fn write_worksheet(path: &Path, records: &[Record]) -> Result<(), DatasetError> {
    let mut out = String::from(WORKSHEET_HEADER);
    out.push('\n');
    for rec in records {
        out.push_str(&format!("{}\t{}\t\t\t\n", rec.id, rec.text));
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, out).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))?;
    Ok(())
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "y" => Some(true),
        "false" | "0" | "no" | "n" => Some(false),
        _ => None,
    }
}

/// Parses a filled-in worksheet. Rows without a readability score are
/// skipped (still pending); malformed scores are errors.
pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationRecord>, DatasetError> {
    let content = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 3 {
            return Err(DatasetError::Malformed {
                path: path.display().to_string(),
                line: line_no,
                msg: format!("expected at least 3 columns, got {}", cols.len()),
            });
        }
        let readability_field = cols[2].trim();
        if readability_field.is_empty() {
            continue;
        }
        let readability: u8 = readability_field.parse().map_err(|_| DatasetError::Malformed {
            path: path.display().to_string(),
            line: line_no,
            msg: format!("readability {readability_field:?} is not an integer"),
        })?;
        if !(1..=5).contains(&readability) {
            return Err(DatasetError::Malformed {
                path: path.display().to_string(),
                line: line_no,
                msg: format!("readability {readability} outside 1..5"),
            });
        }
        let extraction_ok = cols.get(3).and_then(|s| parse_bool(s));
        let annotator = cols
            .get(4)
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .unwrap_or("anon")
            .to_string();
        out.push(AnnotationRecord {
            sample_id: cols[0].trim().to_string(),
            readability,
            extraction_ok,
            annotator,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuildConfig {
    pub toxic_n: usize,
    pub nontoxic_n: usize,
    pub rate: f64,
    pub seed: u64,
    pub types: Vec<PerturbationType>,
    pub readability_threshold: f64,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            toxic_n: 0,
            nontoxic_n: 0,
            rate: 0.3,
            seed: 0,
            types: PerturbationType::ALL.to_vec(),
            readability_threshold: 3.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub kb_checksum: String,
    pub toxic_n: usize,
    pub nontoxic_n: usize,
    pub rate: f64,
    pub types: Vec<String>,
    pub readability_threshold: f64,
    /// "mean-of-annotators": per-sample score is the mean over annotators,
    /// ties at the threshold kept.
    pub readability_aggregation: String,
    pub perturbed_kept: BTreeMap<String, usize>,
    pub base_toxic: usize,
    pub non_toxic: usize,
    pub discarded: usize,
    pub pending: usize,
    pub skips: BTreeMap<String, usize>,
    pub mean_ratio: Option<f64>,
    pub mean_readability: Option<f64>,
}

/// Well-known file names inside a dataset output directory.
pub struct StagePaths {
    pub base: PathBuf,
    pub spans: PathBuf,
    pub perturbed: PathBuf,
    pub skips: PathBuf,
    pub worksheet: PathBuf,
    pub annotations: PathBuf,
    pub final_records: PathBuf,
    pub manifest: PathBuf,
}

impl StagePaths {
    pub fn new(out_dir: &Path) -> StagePaths {
        StagePaths {
            base: out_dir.join("base.jsonl"),
            spans: out_dir.join("spans.jsonl"),
            perturbed: out_dir.join("perturbed.jsonl"),
            skips: out_dir.join("skips.jsonl"),
            worksheet: out_dir.join("worksheet.tsv"),
            annotations: out_dir.join("annotations.tsv"),
            final_records: out_dir.join("final").join("records.jsonl"),
            manifest: out_dir.join("final").join("manifest.json"),
        }
    }
}

#[derive(Debug)]
pub enum BuildStatus {
    /// Pipeline stopped at the human-validation gate; annotate the worksheet
    /// and import it to continue.
    AwaitingAnnotations { worksheet: PathBuf },
    Complete { manifest: DatasetManifest },
}

/// Runs the pipeline, resuming from whatever stage files already exist.
pub fn build_dataset(
    out_dir: &Path,
    corpus: &[CorpusRecord],
    kb: &CharacterKnowledgeBase,
    extractor: &dyn ExtractBackend,
    cfg: &BuildConfig,
) -> Result<BuildStatus, DatasetError> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let paths = StagePaths::new(out_dir);

    // Stage 1: base sampling.
    let base: Vec<CorpusRecord> = if paths.base.exists() {
        read_jsonl(&paths.base)?
    } else {
        let sampled = sample_base(corpus, cfg.toxic_n, cfg.nontoxic_n, cfg.seed)?;
        write_jsonl(&paths.base, &sampled)?;
        sampled
    };

    // Stage 2: toxic entity extraction.
    let spans: Vec<SpanRecord> = if paths.spans.exists() {
        read_jsonl(&paths.spans)?
    } else {
        let mut out = Vec::new();
        for rec in base.iter().filter(|r| r.label == Label::Toxic) {
            let outcome = extract_entities(extractor, &rec.id, &rec.text).map_err(|e| {
                DatasetError::Stage { stage: "extract", msg: format!("{}: {e}", rec.id) }
            })?;
            out.push(SpanRecord {
                id: rec.id.clone(),
                text: rec.text.clone(),
                spans: outcome.result.spans,
                source: outcome.result.source,
                dropped: outcome.dropped,
            });
        }
        write_jsonl(&paths.spans, &out)?;
        out
    };

    // Stage 3: perturbation embedding.
    let (perturbed, skips): (Vec<Record>, Vec<BatchSkip>) =
        if paths.perturbed.exists() && paths.skips.exists() {
            (read_jsonl(&paths.perturbed)?, read_jsonl(&paths.skips)?)
        } else {
            let inputs: Vec<BatchInput> = spans
                .iter()
                .filter(|s| !s.spans.is_empty())
                .map(|s| BatchInput { id: s.id.clone(), text: s.text.clone(), spans: s.spans.clone() })
                .collect();
            let pcfg = PerturbConfig { max_rate: cfg.rate, seed: cfg.seed, ..Default::default() };
            let output = batch_perturb(kb, &inputs, &cfg.types, &pcfg);
            let records: Vec<Record> = output
                .items
                .into_iter()
                .map(|(orig_id, ptype, sample)| Record {
                    id: format!("{orig_id}-{}", ptype.tag()),
                    text: sample.perturbed,
                    label: Label::Toxic,
                    ptype: Some(ptype),
                    original_id: orig_id,
                    edits: sample.edits,
                    ratio: sample.ratio,
                    seed: cfg.seed,
                })
                .collect();
            write_jsonl(&paths.perturbed, &records)?;
            write_jsonl(&paths.skips, &output.skips)?;
            (records, output.skips)
        };

    // Stage 4: worksheet export for human validation.
    if !paths.worksheet.exists() {
        write_worksheet(&paths.worksheet, &perturbed)?;
    }

    // Stage 5: annotations must be imported before the dataset can finalize.
    if !paths.annotations.exists() {
        return Ok(BuildStatus::AwaitingAnnotations { worksheet: paths.worksheet });
    }
    let annotations = read_annotations(&paths.annotations)?;
    let known: BTreeSet<&str> = perturbed.iter().map(|r| r.id.as_str()).collect();
    if let Some(bad) = annotations.iter().find(|a| !known.contains(a.sample_id.as_str())) {
        return Err(DatasetError::UnknownSample(bad.sample_id.clone()));
    }

    // Stage 6: readability filter and final emission.
    let ids: Vec<String> = perturbed.iter().map(|r| r.id.clone()).collect();
    let outcome = filter_readability(&ids, &annotations, cfg.readability_threshold);
    let kept_set: BTreeSet<&str> = outcome.kept.iter().map(String::as_str).collect();

    let mut final_records: Vec<Record> = Vec::new();
    for rec in base.iter().filter(|r| r.label == Label::Toxic) {
        final_records.push(Record::base(rec, cfg.seed));
    }
    for rec in base.iter().filter(|r| r.label == Label::NonToxic) {
        final_records.push(Record::base(rec, cfg.seed));
    }
    let kept_perturbed: Vec<&Record> =
        perturbed.iter().filter(|r| kept_set.contains(r.id.as_str())).collect();
    final_records.extend(kept_perturbed.iter().map(|r| (*r).clone()));
    write_jsonl(&paths.final_records, &final_records)?;

    let mut perturbed_kept: BTreeMap<String, usize> = BTreeMap::new();
    for rec in &kept_perturbed {
        if let Some(ptype) = rec.ptype {
            *perturbed_kept.entry(ptype.tag().to_string()).or_default() += 1;
        }
    }
    let mut skip_counts: BTreeMap<String, usize> = BTreeMap::new();
    for skip in &skips {
        *skip_counts.entry(skip.ptype.tag().to_string()).or_default() += 1;
    }
    let mean_ratio = if kept_perturbed.is_empty() {
        None
    } else {
        Some(kept_perturbed.iter().map(|r| r.ratio).sum::<f64>() / kept_perturbed.len() as f64)
    };
    let manifest = DatasetManifest {
        seed: cfg.seed,
        kb_checksum: kb.checksum().to_string(),
        toxic_n: cfg.toxic_n,
        nontoxic_n: cfg.nontoxic_n,
        rate: cfg.rate,
        types: cfg.types.iter().map(|t| t.tag().to_string()).collect(),
        readability_threshold: cfg.readability_threshold,
        readability_aggregation: "mean-of-annotators".to_string(),
        perturbed_kept,
        base_toxic: base.iter().filter(|r| r.label == Label::Toxic).count(),
        non_toxic: base.iter().filter(|r| r.label == Label::NonToxic).count(),
        discarded: outcome.discarded.len(),
        pending: outcome.pending.len(),
        skips: skip_counts,
        mean_ratio,
        mean_readability: outcome.mean_readability,
    };
    let tmp = paths.manifest.with_extension("tmp");
    std::fs::write(&tmp, serde_json::to_string_pretty(&manifest).expect("manifest serializes"))
        .map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, &paths.manifest).map_err(io_err(&paths.manifest))?;

    Ok(BuildStatus::Complete { manifest })
}

/// Convenience used by eval: join final records with their span records to
/// recover gold entities per sample.
pub fn gold_entities_for(
    record: &Record,
    spans_by_id: &BTreeMap<String, SpanRecord>,
) -> (Vec<String>, Vec<String>) {
    let Some(span_rec) = spans_by_id.get(&record.original_id) else {
        return (Vec::new(), Vec::new());
    };
    let gold: Vec<String> = span_rec.spans.iter().map(|s| s.surface.clone()).collect();
    let perturbed: Vec<String> = span_rec
        .spans
        .iter()
        .map(|s| {
            let overlapping: Vec<&Edit> = record
                .edits
                .iter()
                .filter(|e| e.start < s.end && e.end > s.start)
                .collect();
            if overlapping.is_empty() {
                s.surface.clone()
            } else {
                // Rebuild the span surface as it appears post-edit.
                let chars: Vec<char> = span_rec.text.chars().collect();
                let mut out = String::new();
                let mut pos = s.start;
                for e in &overlapping {
                    let from = e.start.max(s.start);
                    if from > pos {
                        out.extend(chars[pos..from].iter());
                    }
                    out.push_str(&e.replacement);
                    pos = e.end.min(s.end);
                }
                if pos < s.end {
                    out.extend(chars[pos..s.end].iter());
                }
                out
            }
        })
        .collect();
    (gold, perturbed)
}

impl ExtractError {
    /// Maps an extraction failure into its pipeline stage error.
    pub fn into_stage(self) -> DatasetError {
        DatasetError::Stage { stage: "extract", msg: self.to_string() }
    }
}
