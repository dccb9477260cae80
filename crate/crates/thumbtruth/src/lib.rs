//! Detection pipeline for misleading video thumbnails.
//!
//! The crate assembles multimodal evidence for each video (thumbnail,
//! subtitles, generated video description), renders classification prompts
//! under three strategies (zero-shot, fixed few-shot, dynamic few-shot with
//! embedding-retrieved exemplars), dispatches them to pluggable LLM backends,
//! and evaluates the results: confusion metrics, balanced per-group analyses,
//! McNemar significance tests, annotator agreement, and token-level cost
//! accounting.
//!
//! Everything runs offline against scripted backends, so every stage of the
//! pipeline is reproducible and testable without credentials.
//!
//! # Examples
//!
//! Each major capability has a runnable example:
//!
//! ```bash
//! cargo run -p thumbtruth --example ingest_and_kappa
//! cargo run -p thumbtruth --example evidence_preparation
//! cargo run -p thumbtruth --example exemplar_retrieval
//! cargo run -p thumbtruth --example prompt_rendering
//! cargo run -p thumbtruth --example mock_classification
//! cargo run -p thumbtruth --example evaluation_metrics
//! cargo run -p thumbtruth --example cost_accounting
//! cargo run -p thumbtruth --example full_pipeline
//! ```
//!
//! A thin `thumbtruth` binary exposes the same operations as subcommands
//! (`ingest`, `describe`, `exemplars`, `classify`, `evaluate`, `ablate`,
//! `cost`, `report`).

pub mod corpus;
pub mod evidence;
pub mod exemplars;
pub mod prompts;
pub mod providers;
pub mod costing;
pub mod classify;

pub(crate) mod hashing;
#[cfg(test)]
pub(crate) mod testutil;

pub use corpus::{Label, VideoRecord};
pub use evidence::{AblationMask, EvidenceBundle};
