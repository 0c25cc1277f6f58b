//! The eval loop: render, query, parse, one verdict per sample.
//!
//! Requests fan out over a bounded worker pool; results are keyed by sample
//! id and sorted before returning, so scheduling never affects output. A run
//! aborts only when more than the configured fraction of calls fail after
//! retries — individual failures under that limit degrade to unparseable
//! verdicts so the sample stays scored.

use super::client::{ChatBackend, GenConfig};
use super::prompt::{render_prompt, template, IclBlock, TemplateId};
use super::verdict::{parse_cacot, parse_verdict, PredLabel, Verdict};
use super::BenchError;
use crate::metrics::EvalRecord;
use crate::perturb::{Edit, Label, PerturbationType};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

/// One sample to evaluate, with the gold data the metrics will need later.
#[derive(Debug, Clone)]
pub struct EvalTask {
    pub id: String,
    pub text: String,
    pub ptype: Option<PerturbationType>,
    pub gold_label: Label,
    pub gold_entities: Vec<String>,
    pub perturbed_entities: Vec<String>,
    pub edits: Vec<Edit>,
    pub original_text: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub model_name: String,
    pub template: TemplateId,
    pub seed: u64,
    pub max_concurrent: usize,
    /// Abort when more than this fraction of calls fail after retries.
    pub fail_abort_fraction: f64,
}

impl RunOptions {
    pub fn new(model_name: impl Into<String>, template: TemplateId, seed: u64) -> RunOptions {
        RunOptions {
            model_name: model_name.into(),
            template,
            seed,
            max_concurrent: 4,
            fail_abort_fraction: 0.10,
        }
    }
}

fn parse_for(template_id: TemplateId, raw: &str) -> Verdict {
    if template_id == TemplateId::Cacot {
        parse_cacot(raw)
    } else {
        parse_verdict(raw)
    }
}

/// Evaluates every task, returning records sorted by sample id.
pub fn run_eval(
    backend: Arc<dyn ChatBackend>,
    tasks: &[EvalTask],
    icl: Option<&IclBlock>,
    opts: &RunOptions,
) -> Result<Vec<EvalRecord>, BenchError> {
    let tmpl = template(opts.template);
    let gen = GenConfig::default();
    let failures = Arc::new(AtomicUsize::new(0));

    let (task_tx, task_rx) = crossbeam_channel::unbounded::<(usize, EvalTask)>();
    let (result_tx, result_rx) = crossbeam_channel::unbounded();
    for (i, task) in tasks.iter().enumerate() {
        task_tx.send((i, task.clone())).expect("queue send");
    }
    drop(task_tx);

    let workers = opts.max_concurrent.max(1).min(tasks.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let task_rx = task_rx.clone();
            let result_tx = result_tx.clone();
            let backend = Arc::clone(&backend);
            let failures = Arc::clone(&failures);
            let gen = gen.clone();
            scope.spawn(move || {
                while let Ok((i, task)) = task_rx.recv() {
                    let verdict = match render_prompt(tmpl, &task.text, icl) {
                        Ok(messages) => match backend.complete(&task.id, &messages, &gen) {
                            Ok(raw) => parse_for(opts.template, &raw),
                            Err(err) => {
                                failures.fetch_add(1, Ordering::Relaxed);
                                Verdict {
                                    label: PredLabel::Unparseable,
                                    extracted: None,
                                    raw: format!("<call failed: {err}>"),
                                    stages: None,
                                }
                            }
                        },
                        Err(err) => {
                            failures.fetch_add(1, Ordering::Relaxed);
                            Verdict {
                                label: PredLabel::Unparseable,
                                extracted: None,
                                raw: format!("<render failed: {err}>"),
                                stages: None,
                            }
                        }
                    };
                    result_tx.send((i, verdict)).expect("result send");
                }
            });
        }
        drop(result_tx);

        let mut collected: Vec<Option<Verdict>> = vec![None; tasks.len()];
        while let Ok((i, verdict)) = result_rx.recv() {
            collected[i] = Some(verdict);
        }

        let failed = failures.load(Ordering::Relaxed);
        if !tasks.is_empty() && (failed as f64) / (tasks.len() as f64) > opts.fail_abort_fraction {
            return Err(BenchError::TooManyFailures {
                failed,
                total: tasks.len(),
                limit: opts.fail_abort_fraction * 100.0,
            });
        }

        let mut records: Vec<EvalRecord> = tasks
            .iter()
            .zip(collected)
            .map(|(task, verdict)| {
                let v = verdict.expect("every task produced a verdict");
                EvalRecord {
                    id: task.id.clone(),
                    ptype: task.ptype,
                    gold_label: task.gold_label,
                    pred: v.label,
                    extracted: v.extracted,
                    gold_entities: task.gold_entities.clone(),
                    perturbed_entities: task.perturbed_entities.clone(),
                    edits: task.edits.clone(),
                    original_text: task.original_text.clone(),
                    model: opts.model_name.clone(),
                    template: opts.template.as_str().to_string(),
                    seed: opts.seed,
                    raw: v.raw,
                }
            })
            .collect();
        records.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(records)
    })
}
