//! Toolkit for building perturbed toxic-Chinese datasets and benchmarking
//! chat-completion models on detecting them.
//!
//! The crate is organized around the stages of that workflow:
//!
//! - [`charkb`] — the per-character knowledge base (decompositions, pinyin,
//!   traditional forms, visual neighbors, homophones, emoji substitutes) that
//!   the perturbation strategies consume.
//! - [`perturb`] — the eight perturbation strategies (glyph, phonetic,
//!   semantic), applied under a perturbation-rate budget, deterministic in a
//!   seed.
//! - [`extract`] — toxic-entity extraction via a model backend or an offline
//!   lexicon fallback.
//! - [`dataset`] — the corpus sampling / extraction / perturbation /
//!   annotation pipeline with resumable on-disk stages.
//! - [`bench`] — prompt catalog, chat-completions client with caching and
//!   retries, verdict parsers, eval runner, fine-tune export.
//! - [`metrics`] — detection rate, F1, error rate, misinterpretation rate,
//!   and report rendering with exact rational arithmetic.
//!
//! All randomness flows from explicit 64-bit seeds through the generator
//! described in [`seed`], so any two runs with the same inputs and seed
//! produce byte-identical outputs.

pub mod bench;
pub mod charkb;
pub mod dataset;
pub mod extract;
pub mod metrics;
pub mod perturb;
pub mod seed;
pub mod text;
