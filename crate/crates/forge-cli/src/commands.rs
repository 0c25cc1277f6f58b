//! Subcommand implementations. Every command that writes does so only under
//! its `--out`/`--cache-dir` paths and leaves a manifest (config, seed, input
//! checksums) sufficient to reproduce the run.

use crate::config::ConfigFile;
use crate::{DatasetBuildArgs, EvalArgs, ExportFtArgs, PerturbArgs, ReportArgs};
use anyhow::{anyhow, bail, Context, Result};
use forge_core::bench::client::{CachedBackend, ChatBackend, HttpBackend, MockBackend};
use forge_core::bench::finetune::{export_finetune, FtSample};
use forge_core::bench::prompt::{IclBlock, TemplateId};
use forge_core::bench::runner::{run_eval, EvalTask, RunOptions};
use forge_core::charkb::{validate_tables, CharacterKnowledgeBase, TablePaths};
use forge_core::dataset::{
    build_dataset, gold_entities_for, load_corpus, read_annotations, read_jsonl, write_jsonl,
    write_worksheet, BuildConfig, BuildStatus, CorpusRecord, Record, SpanRecord, StagePaths,
};
use forge_core::extract::{LexiconBackend, ModelBackend, ToxicLexicon};
use forge_core::metrics::{aggregate, render_report, types_present, EvalRecord, ReportOptions};
use forge_core::perturb::{
    apply, PerturbConfig, PerturbationType, PinyinCase, ToxicSpan,
};
use forge_core::seed::fnv1a64;
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub enum Outcome {
    Success,
    ValidationFailed,
}

pub fn kb_validate(tables: &Path) -> Result<Outcome> {
    let report = validate_tables(&TablePaths::in_dir(tables))?;
    println!(
        "entries: {}  visual rows: {}  emoji rows: {}",
        report.entry_count, report.visual_rows, report.emoji_rows
    );
    if report.violations.is_empty() {
        println!("ok: no violations");
        Ok(Outcome::Success)
    } else {
        for v in &report.violations {
            println!("violation: {v}");
        }
        println!("{} violation(s)", report.violations.len());
        Ok(Outcome::ValidationFailed)
    }
}

fn load_kb(tables: &Path) -> Result<CharacterKnowledgeBase> {
    CharacterKnowledgeBase::load(&TablePaths::in_dir(tables))
        .with_context(|| format!("loading tables from {}", tables.display()))
}

/// Reads `--in` either as dataset records or, failing that, as corpus
/// records (id/text/label/source_tag) promoted to base records.
fn read_input_records(path: &Path) -> Result<Vec<Record>> {
    if let Ok(records) = read_jsonl::<Record>(path) {
        return Ok(records);
    }
    let corpus: Vec<CorpusRecord> = read_jsonl(path)
        .with_context(|| format!("{} is neither record nor corpus JSONL", path.display()))?;
    Ok(corpus.iter().map(|c| Record::base(c, 0)).collect())
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    seed: u64,
    inputs: BTreeMap<&'a str, String>,
    config: serde_json::Value,
}

fn file_checksum(path: &Path) -> String {
    match std::fs::read(path) {
        Ok(bytes) => format!("{:016x}", fnv1a64(&bytes)),
        Err(_) => "unreadable".to_string(),
    }
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(manifest)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn perturb(args: &PerturbArgs, config: &ConfigFile) -> Result<Outcome> {
    let Some(ptype) = PerturbationType::parse(&args.ptype) else {
        bail!(
            "unknown perturbation type {:?}; expected one of {}",
            args.ptype,
            PerturbationType::ALL.map(|t| t.tag()).join(", ")
        );
    };
    let kb = load_kb(&args.tables)?;
    let records = read_input_records(&args.input)?;
    let seed = args.seed;
    let rate = config.defaults.rate.map_or(args.rate, |d| if args.rate == 0.3 { d } else { args.rate });

    let spans_by_id: BTreeMap<String, Vec<ToxicSpan>> = match (&args.spans, &args.lexicon) {
        (Some(path), _) => {
            let spans: Vec<SpanRecord> = read_jsonl(path)?;
            spans.into_iter().map(|s| (s.id, s.spans)).collect()
        }
        (None, Some(path)) => {
            let lexicon = ToxicLexicon::load(path)?;
            records
                .iter()
                .map(|r| (r.id.clone(), lexicon.find_spans(&r.text)))
                .collect()
        }
        (None, None) => bail!("need --spans or --lexicon to locate toxic entities"),
    };

    let pinyin_case = match args.pinyin_case.as_str() {
        "lower" => PinyinCase::Lower,
        "upper" => PinyinCase::Upper,
        other => bail!("--pinyin-case must be lower|upper, got {other:?}"),
    };
    let cfg = PerturbConfig { max_rate: rate, seed, pinyin_case, ..Default::default() };

    let mut out: Vec<Record> = Vec::new();
    let mut skipped = 0usize;
    for rec in &records {
        if rec.label == forge_core::perturb::Label::NonToxic {
            out.push(rec.clone());
            continue;
        }
        let spans = spans_by_id.get(&rec.id).cloned().unwrap_or_default();
        match apply(&kb, ptype, &rec.text, &spans, &cfg) {
            Ok(sample) => out.push(Record {
                id: format!("{}-{}", rec.id, ptype.tag()),
                text: sample.perturbed,
                label: forge_core::perturb::Label::Toxic,
                ptype: Some(ptype),
                original_id: rec.id.clone(),
                edits: sample.edits,
                ratio: sample.ratio,
                seed,
            }),
            Err(e) => {
                eprintln!("skip {}: {e}", rec.id);
                skipped += 1;
            }
        }
    }
    write_jsonl(&args.output, &out)?;
    let out_dir = args.output.parent().unwrap_or(Path::new("."));
    write_manifest(
        out_dir,
        &RunManifest {
            command: "perturb",
            seed,
            inputs: BTreeMap::from([
                ("in", file_checksum(&args.input)),
                ("tables", kb.checksum().to_string()),
            ]),
            config: serde_json::json!({
                "type": ptype.tag(),
                "rate": rate,
                "pinyin_case": args.pinyin_case,
            }),
        },
    )?;
    println!("wrote {} records ({} skipped) to {}", out.len(), skipped, args.output.display());
    Ok(Outcome::Success)
}

pub fn dataset_build(
    args: &DatasetBuildArgs,
    config: &ConfigFile,
    mock: Option<&Path>,
) -> Result<Outcome> {
    let kb = load_kb(&args.tables)?;
    let corpus = load_corpus(&args.corpus)?;
    let seed = args.seed.or(config.defaults.seed).unwrap_or(0);
    let toxic_total = corpus.iter().filter(|r| r.label == forge_core::perturb::Label::Toxic).count();
    let nontoxic_total = corpus.len() - toxic_total;
    let cfg = BuildConfig {
        toxic_n: args.toxic_n.or(config.defaults.toxic_n).unwrap_or(toxic_total),
        nontoxic_n: args.nontoxic_n.or(config.defaults.nontoxic_n).unwrap_or(nontoxic_total),
        rate: args.rate.or(config.defaults.rate).unwrap_or(0.3),
        seed,
        types: match &args.types {
            None => PerturbationType::ALL.to_vec(),
            Some(list) => list
                .split(',')
                .map(|t| {
                    PerturbationType::parse(t.trim())
                        .ok_or_else(|| anyhow!("unknown type {t:?} in --types"))
                })
                .collect::<Result<Vec<_>>>()?,
        },
        readability_threshold: args.threshold,
    };

    let mock_backend;
    let http_backend;
    let lexicon_backend;
    let extractor: &dyn forge_core::extract::ExtractBackend =
        if let Some(name) = &args.extract_model {
            let endpoint = config
                .endpoints
                .get(name)
                .ok_or_else(|| anyhow!("endpoint {name:?} not in config"))?
                .to_endpoint(name);
            http_backend = HttpBackend::new(endpoint)?;
            mock_backend = None::<MockBackend>;
            let _ = &mock_backend;
            lexicon_backend = None::<LexiconBackend>;
            let _ = &lexicon_backend;
            Box::leak(Box::new(ModelBackend { backend: Box::leak(Box::new(http_backend)) }))
        } else if let Some(script) = mock {
            mock_backend = Some(MockBackend::from_script_file(script)?);
            Box::leak(Box::new(ModelBackend {
                backend: Box::leak(Box::new(mock_backend.unwrap())),
            }))
        } else if let Some(path) = &args.lexicon {
            lexicon_backend = Some(LexiconBackend(ToxicLexicon::load(path)?));
            Box::leak(Box::new(lexicon_backend.unwrap()))
        } else {
            bail!("need --lexicon, --extract-model, or --mock for entity extraction");
        };

    let status = build_dataset(&args.out, &corpus, &kb, extractor, &cfg)?;
    write_manifest(
        &args.out,
        &RunManifest {
            command: "dataset build",
            seed,
            inputs: BTreeMap::from([
                ("corpus", file_checksum(&args.corpus)),
                ("tables", kb.checksum().to_string()),
            ]),
            config: serde_json::to_value(&cfg)?,
        },
    )?;
    match status {
        BuildStatus::AwaitingAnnotations { worksheet } => {
            println!(
                "worksheet exported: {}\nfill in readability scores, then run `forge dataset annotate-import --out {} --file <filled.tsv>` and build again",
                worksheet.display(),
                args.out.display()
            );
        }
        BuildStatus::Complete { manifest } => {
            println!(
                "dataset complete: {} perturbed kept, {} discarded, {} pending",
                manifest.perturbed_kept.values().sum::<usize>(),
                manifest.discarded,
                manifest.pending
            );
        }
    }
    Ok(Outcome::Success)
}

pub fn annotate_export(out_dir: &Path, file: Option<&Path>) -> Result<Outcome> {
    let paths = StagePaths::new(out_dir);
    let perturbed: Vec<Record> = read_jsonl(&paths.perturbed)
        .with_context(|| "no perturbed stage output; run `forge dataset build` first")?;
    let target = file.map(Path::to_path_buf).unwrap_or(paths.worksheet);
    write_worksheet(&target, &perturbed)?;
    println!("worksheet: {}", target.display());
    Ok(Outcome::Success)
}

pub fn annotate_import(out_dir: &Path, file: &Path) -> Result<Outcome> {
    let paths = StagePaths::new(out_dir);
    let perturbed: Vec<Record> = read_jsonl(&paths.perturbed)
        .with_context(|| "no perturbed stage output; run `forge dataset build` first")?;
    let incoming = read_annotations(file)?;
    if incoming.is_empty() {
        eprintln!("no filled-in rows found in {}", file.display());
        return Ok(Outcome::ValidationFailed);
    }
    let known: std::collections::BTreeSet<&str> =
        perturbed.iter().map(|r| r.id.as_str()).collect();
    let mut bad = 0usize;
    for a in &incoming {
        if !known.contains(a.sample_id.as_str()) {
            eprintln!("unknown sample id {}", a.sample_id);
            bad += 1;
        }
    }
    if bad > 0 {
        return Ok(Outcome::ValidationFailed);
    }
    // Merge with whatever was imported before: replace per (sample, annotator).
    let mut merged: BTreeMap<(String, String), forge_core::dataset::AnnotationRecord> =
        BTreeMap::new();
    if paths.annotations.exists() {
        for a in read_annotations(&paths.annotations)? {
            merged.insert((a.sample_id.clone(), a.annotator.clone()), a);
        }
    }
    for a in incoming {
        merged.insert((a.sample_id.clone(), a.annotator.clone()), a);
    }
    let mut out = String::from("# sample_id\ttext\treadability\textraction_ok\tannotator\n");
    let text_by_id: BTreeMap<&str, &str> =
        perturbed.iter().map(|r| (r.id.as_str(), r.text.as_str())).collect();
    for a in merged.values() {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            a.sample_id,
            text_by_id.get(a.sample_id.as_str()).copied().unwrap_or(""),
            a.readability,
            a.extraction_ok.map(|b| b.to_string()).unwrap_or_default(),
            a.annotator
        ));
    }
    let tmp = paths.annotations.with_extension("tmp");
    std::fs::write(&tmp, out)?;
    std::fs::rename(&tmp, &paths.annotations)?;
    println!("imported {} annotation rows", merged.len());
    Ok(Outcome::Success)
}

fn record_to_task(rec: &Record, spans_by_id: &BTreeMap<String, SpanRecord>) -> EvalTask {
    let (gold_entities, perturbed_entities) = if rec.label == forge_core::perturb::Label::Toxic {
        gold_entities_for(rec, spans_by_id)
    } else {
        (Vec::new(), Vec::new())
    };
    let original_text = spans_by_id.get(&rec.original_id).map(|s| s.text.clone());
    EvalTask {
        id: rec.id.clone(),
        text: rec.text.clone(),
        ptype: rec.ptype,
        gold_label: rec.label,
        gold_entities,
        perturbed_entities,
        edits: rec.edits.clone(),
        original_text,
    }
}

pub fn eval(args: &EvalArgs, config: &ConfigFile, mock: Option<&Path>) -> Result<Outcome> {
    let paths = StagePaths::new(&args.data);
    let records: Vec<Record> = read_jsonl(&paths.final_records).with_context(|| {
        format!("no final records under {}; finish `forge dataset build` first", args.data.display())
    })?;
    let spans_by_id: BTreeMap<String, SpanRecord> = if paths.spans.exists() {
        read_jsonl::<SpanRecord>(&paths.spans)?
            .into_iter()
            .map(|s| (s.id.clone(), s))
            .collect()
    } else {
        BTreeMap::new()
    };

    let template_name = args
        .template
        .clone()
        .or_else(|| config.defaults.template.clone())
        .unwrap_or_else(|| "CN".to_string());
    let template = TemplateId::parse(&template_name)?;
    let seed = args.seed.or(config.defaults.seed).unwrap_or(0);

    let tasks: Vec<EvalTask> = records
        .iter()
        .filter(|r| match args.slice.as_str() {
            "all" => true,
            "base" => r.ptype.is_none() && r.label == forge_core::perturb::Label::Toxic,
            "nontoxic" => r.label == forge_core::perturb::Label::NonToxic,
            tag => r.ptype.map(|t| t.tag() == tag).unwrap_or(false),
        })
        .map(|r| record_to_task(r, &spans_by_id))
        .collect();
    if tasks.is_empty() {
        bail!("slice {:?} selected no samples", args.slice);
    }

    let icl = match &args.icl {
        None => None,
        Some(path) => {
            let requested: Vec<PerturbationType> =
                tasks.iter().filter_map(|t| t.ptype).collect::<std::collections::BTreeSet<_>>()
                    .into_iter().collect();
            Some(IclBlock::load(path, &requested)?)
        }
    };

    let mut opts = RunOptions::new(&args.model, template, seed);
    let cache_dir = args
        .cache_dir
        .clone()
        .or_else(|| config.defaults.cache_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| args.out.join("cache"));
    let backend: Arc<dyn ChatBackend> = match mock {
        Some(script) => {
            Arc::new(CachedBackend::new(MockBackend::from_script_file(script)?, &cache_dir))
        }
        None => {
            let endpoint = config
                .endpoints
                .get(&args.model)
                .ok_or_else(|| anyhow!("endpoint {:?} not in config (and no --mock)", args.model))?
                .to_endpoint(&args.model);
            opts.max_concurrent = endpoint.limits.max_concurrent;
            Arc::new(CachedBackend::new(HttpBackend::new(endpoint)?, &cache_dir))
        }
    };

    let results = run_eval(backend, &tasks, icl.as_ref(), &opts)?;
    std::fs::create_dir_all(&args.out)?;
    write_jsonl(&args.out.join("results.jsonl"), &results)?;
    let unparseable = results
        .iter()
        .filter(|r| r.pred == forge_core::bench::verdict::PredLabel::Unparseable)
        .count();
    write_manifest(
        &args.out,
        &RunManifest {
            command: "eval",
            seed,
            inputs: BTreeMap::from([("data", file_checksum(&paths.final_records))]),
            config: serde_json::json!({
                "model": args.model,
                "template": template.as_str(),
                "slice": args.slice,
                "icl": args.icl.as_ref().map(|p| p.display().to_string()),
                "samples": results.len(),
                "unparseable": unparseable,
            }),
        },
    )?;
    println!(
        "evaluated {} samples ({} unparseable) -> {}",
        results.len(),
        unparseable,
        args.out.join("results.jsonl").display()
    );
    Ok(Outcome::Success)
}

pub fn export_ft(args: &ExportFtArgs, config: &ConfigFile) -> Result<Outcome> {
    let paths = StagePaths::new(&args.data);
    let records: Vec<Record> = read_jsonl(&paths.final_records)
        .with_context(|| format!("no final records under {}", args.data.display()))?;
    let spans_by_id: BTreeMap<String, SpanRecord> = if paths.spans.exists() {
        read_jsonl::<SpanRecord>(&paths.spans)?
            .into_iter()
            .map(|s| (s.id.clone(), s))
            .collect()
    } else {
        BTreeMap::new()
    };
    let seed = args.seed.or(config.defaults.seed).unwrap_or(0);

    let mut pool: Vec<FtSample> = records
        .iter()
        .filter(|r| r.ptype.is_some())
        .map(|r| {
            let (_, perturbed_entities) = gold_entities_for(r, &spans_by_id);
            FtSample { text: r.text.clone(), label: 1, entity: perturbed_entities.first().cloned() }
        })
        .collect();
    forge_core::seed::shuffle(&mut pool, &[seed, fnv1a64(b"export-ft")]);

    std::fs::create_dir_all(&args.out)?;
    let training = args.out.join(format!("ft_train_{}.jsonl", args.n));
    let report = export_finetune(&pool, args.n, &training)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    write_manifest(
        &args.out,
        &RunManifest {
            command: "export-ft",
            seed,
            inputs: BTreeMap::from([("data", file_checksum(&paths.final_records))]),
            config: serde_json::json!({ "n": args.n }),
        },
    )?;
    println!(
        "wrote {} samples to {} (sidecar {})",
        report.written,
        report.training_path.display(),
        report.sidecar_path.display()
    );
    Ok(Outcome::Success)
}

/// MR override worksheet: annotation columns plus a trailing `understood`
/// boolean column.
fn read_mr_overrides(path: &Path) -> Result<BTreeMap<String, bool>> {
    let content = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut out = BTreeMap::new();
    for line in content.lines() {
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let (Some(id), Some(flag)) = (cols.first(), cols.last()) else {
            continue;
        };
        let understood = match flag.trim().to_ascii_lowercase().as_str() {
            "true" | "1" | "yes" | "y" => true,
            "false" | "0" | "no" | "n" => false,
            other => bail!("{}: understood column must be boolean, got {other:?}", path.display()),
        };
        out.insert(id.trim().to_string(), understood);
    }
    Ok(out)
}

fn collect_results(dir: &Path) -> Result<Vec<EvalRecord>> {
    let mut files: Vec<PathBuf> = Vec::new();
    if dir.is_file() {
        files.push(dir.to_path_buf());
    } else {
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for entry in std::fs::read_dir(&d).with_context(|| format!("reading {}", d.display()))? {
                let path = entry?.path();
                if path.is_dir() {
                    stack.push(path);
                } else if path
                    .file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("results") && n.ends_with(".jsonl"))
                {
                    files.push(path);
                }
            }
        }
    }
    files.sort();
    let mut records = Vec::new();
    for f in files {
        records.extend(read_jsonl::<EvalRecord>(&f)?);
    }
    Ok(records)
}

pub fn report(args: &ReportArgs) -> Result<Outcome> {
    let records = collect_results(&args.input)?;
    if records.is_empty() {
        bail!("no results*.jsonl under {}", args.input.display());
    }
    let opts = ReportOptions {
        mr_k: args.mr_k,
        mr_seed: args.mr_seed,
        mr_overrides: match &args.mr_overrides {
            Some(path) => read_mr_overrides(path)?,
            None => BTreeMap::new(),
        },
    };
    let rows = aggregate(&records, &opts);
    let (tsv, txt) = render_report(&rows);
    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("report.tsv"), &tsv)?;
    std::fs::write(args.out.join("report.txt"), &txt)?;
    write_manifest(
        &args.out,
        &RunManifest {
            command: "report",
            seed: args.mr_seed,
            inputs: BTreeMap::from([("in", args.input.display().to_string())]),
            config: serde_json::json!({
                "mr_k": args.mr_k,
                "records": records.len(),
                "types": types_present(&records).iter().map(|t| t.tag()).collect::<Vec<_>>(),
            }),
        },
    )?;
    print!("{txt}");
    println!("wrote {} and report.txt", args.out.join("report.tsv").display());
    Ok(Outcome::Success)
}
