//! End-to-end classification: assemble evidence, select strategy, render the
//! prompt, dispatch to the backend, parse the verdict, persist results.
//!
//! Results are deterministic for scripted backends and a fixed seed: jitter
//! seeds derive from `(run seed, video id)` so worker scheduling cannot
//! change outcomes, and terminal outcomes are cached so a rerun with the
//! same configuration reissues zero provider calls and writes byte-identical
//! files.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::VideoRecord;
use crate::costing::{Stage, UsageCollector, UsageEntry};
use crate::evidence::{
    assemble_bundle, build_description_request, fetch_subtitles, frame_set_prompt,
    full_video_prompt, AblationMask, DescriptionCache, DescriptionKind, DescriptionMedia,
    ImageRef, TranscriptSource, Translator,
};
use crate::exemplars::{build_card, embed, Embedder, ExemplarIndex, PoolFilter};
use crate::hashing;
use crate::prompts::{self, PromptPart, PromptStrategy};
use crate::providers::{
    send_with_retry, BlockReason, ChatBackend, ChatOutcome, ChatRequest, OutcomeStatus,
    RetryPolicy, TokenUsage,
};

/// Classifier verdict for one video.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Misleading,
    NotMisleading,
    Unclassifiable,
}

impl Verdict {
    pub fn as_label(self) -> Option<crate::corpus::Label> {
        match self {
            Verdict::Misleading => Some(crate::corpus::Label::Misleading),
            Verdict::NotMisleading => Some(crate::corpus::Label::NotMisleading),
            Verdict::Unclassifiable => None,
        }
    }
}

/// Why a record did or did not produce a verdict.
///
/// `TransportFailed` also covers infrastructure failures ahead of the model
/// call (transcript source down, description service unreachable): the batch
/// never aborts on one record, and anything that failed before a model
/// answered is excluded from metrics the same way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "reason", rename_all = "snake_case")]
pub enum ClassificationStatus {
    Ok,
    Blocked(BlockReason),
    Refused,
    ParseFailed,
    TransportFailed,
}

impl ClassificationStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, ClassificationStatus::Ok)
    }
}

/// One classification attempt with full provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub video_id: String,
    pub model_id: String,
    pub strategy: PromptStrategy,
    pub ablation: AblationMask,
    pub verdict: Verdict,
    pub explanation: String,
    pub status: ClassificationStatus,
    pub usage: TokenUsage,
    pub latency_ms: u64,
    pub exemplar_ids: Vec<String>,
}

/// Parse a model response into a verdict.
///
/// Primary grammar: a line beginning `Categorization:` (case-insensitive)
/// whose value names a class; the explanation is everything after that line.
/// Fallback: search the full text, checking the negated phrase first since
/// "not misleading" contains "misleading". No match yields
/// `Unclassifiable` with the full text.
pub fn parse_verdict(text: &str) -> (Verdict, String) {
    let lines: Vec<&str> = text.lines().collect();
    for (i, line) in lines.iter().enumerate() {
        let lower = line.trim_start().to_lowercase();
        if let Some(value) = lower.strip_prefix("categorization:") {
            let verdict = if value.contains("not misleading") {
                Some(Verdict::NotMisleading)
            } else if value.contains("misleading") {
                Some(Verdict::Misleading)
            } else {
                None
            };
            if let Some(verdict) = verdict {
                let explanation = lines[i + 1..].join("\n").trim().to_string();
                return (verdict, explanation);
            }
        }
    }
    let lower = text.to_lowercase();
    if lower.contains("not misleading") {
        (Verdict::NotMisleading, text.trim().to_string())
    } else if lower.contains("misleading") {
        (Verdict::Misleading, text.trim().to_string())
    } else {
        (Verdict::Unclassifiable, text.trim().to_string())
    }
}

/// Configuration of one classification run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub backend_name: String,
    pub model_id: String,
    pub strategy: PromptStrategy,
    pub ablation: AblationMask,
    pub concurrency_limit: usize,
    pub seed: u64,
    pub cache_dir: PathBuf,
    pub temperature: Option<f64>,
    pub max_output_tokens: Option<u32>,
    pub retry: RetryPolicy,
    pub pool: PoolFilter,
}

/// Everything a classification run needs besides the config.
pub struct ClassifyDeps<'a> {
    pub classifier: &'a dyn ChatBackend,
    /// Backend that generates video descriptions on cache misses. `None`
    /// means descriptions must already be cached (or ablated away).
    pub describer: Option<&'a dyn ChatBackend>,
    /// Identity of the description source, part of the description cache key.
    pub describer_id: String,
    pub describer_model_id: String,
    pub describe_kind: DescriptionKind,
    pub transcript_source: &'a dyn TranscriptSource,
    pub translator: &'a dyn Translator,
    pub exemplar_index: Option<&'a ExemplarIndex>,
    /// Used to embed queries that are not already in the exemplar index.
    pub embedder: Option<&'a dyn Embedder>,
    pub description_cache: &'a DescriptionCache,
    pub outcome_cache: Option<&'a OutcomeCache>,
    pub usage: Option<&'a UsageCollector>,
}

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("video {video_id}: evidence preparation failed: {reason}")]
    PreparationFailed { video_id: String, reason: String },
    #[error("dynamic few-shot requires a built exemplar store")]
    MissingExemplarIndex,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

/// File-backed cache of terminal chat outcomes, keyed by the full request
/// identity. Reruns with identical configuration replay from here with zero
/// provider calls. Transport errors are transient and never cached.
pub struct OutcomeCache {
    dir: PathBuf,
}

impl OutcomeCache {
    pub fn open(dir: &Path) -> Result<Self, ClassifyError> {
        fs::create_dir_all(dir)
            .map_err(|source| ClassifyError::Io { path: dir.to_path_buf(), source })?;
        Ok(OutcomeCache { dir: dir.to_path_buf() })
    }

    fn file_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{}.json", hashing::short(key, 32)))
    }

    pub fn get(&self, key: &str) -> Option<ChatOutcome> {
        let text = fs::read_to_string(self.file_for(key)).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn put(&self, key: &str, outcome: &ChatOutcome) -> Result<(), ClassifyError> {
        let target = self.file_for(key);
        let tmp = target.with_extension("json.tmp");
        let text = serde_json::to_string(outcome).expect("outcome serialization cannot fail");
        fs::write(&tmp, text).map_err(|source| ClassifyError::Io { path: tmp.clone(), source })?;
        fs::rename(&tmp, &target)
            .map_err(|source| ClassifyError::Io { path: target, source })?;
        Ok(())
    }
}

fn outcome_cache_key(config: &RunConfig, video_id: &str, prompt_checksum: &str) -> String {
    hashing::sha256_hex_parts([
        config.backend_name.as_str(),
        config.model_id.as_str(),
        config.strategy.name(),
        config.ablation.name(),
        video_id,
        prompt_checksum,
        &format!("{:?}/{:?}", config.temperature, config.max_output_tokens),
    ])
}

/// Convert a description request into a chat request. The media lands as a
/// single attachment reference (`video:<path>` or `frames:<id>:<t0>,...`)
/// that the backend adapter resolves; frame extraction itself stays behind
/// the media interface.
fn description_chat_request(
    record: &VideoRecord,
    kind: DescriptionKind,
    model_id: &str,
) -> Result<ChatRequest, crate::evidence::EvidenceError> {
    let request = build_description_request(record, kind)?;
    let media_ref = match &request.media {
        DescriptionMedia::FullVideo { video_path } => format!("video:{}", video_path.display()),
        DescriptionMedia::FrameSet { timestamps } => format!(
            "frames:{}:{}",
            record.video_id,
            timestamps.iter().map(|t| format!("{t:.3}")).collect::<Vec<_>>().join(",")
        ),
    };
    Ok(ChatRequest::from_parts(
        model_id,
        vec![PromptPart::Text(request.prompt_text), PromptPart::Image(ImageRef(media_ref))],
    ))
}

struct ResultParts {
    verdict: Verdict,
    explanation: String,
    status: ClassificationStatus,
    usage: TokenUsage,
    latency_ms: u64,
}

fn finish(
    record: &VideoRecord,
    config: &RunConfig,
    exemplar_ids: Vec<String>,
    parts: ResultParts,
) -> ClassificationResult {
    ClassificationResult {
        video_id: record.video_id.clone(),
        model_id: config.model_id.clone(),
        strategy: config.strategy,
        ablation: config.ablation,
        verdict: parts.verdict,
        explanation: parts.explanation,
        status: parts.status,
        usage: parts.usage,
        latency_ms: parts.latency_ms,
        exemplar_ids,
    }
}

fn failure(status: ClassificationStatus, explanation: String) -> ResultParts {
    ResultParts {
        verdict: Verdict::Unclassifiable,
        explanation,
        status,
        usage: TokenUsage::default(),
        latency_ms: 0,
    }
}

/// Classify one video end to end.
///
/// Provider-side failures (safety blocks, refusals, exhausted transports)
/// come back as statuses on the result, never as errors; errors are reserved
/// for evidence that cannot be prepared at all.
pub fn classify_one(
    record: &VideoRecord,
    config: &RunConfig,
    deps: &ClassifyDeps<'_>,
) -> Result<ClassificationResult, ClassifyError> {
    let prep_failed = |reason: String| ClassifyError::PreparationFailed {
        video_id: record.video_id.clone(),
        reason,
    };

    // Subtitles (skipped entirely when the mask suppresses them).
    let subtitles = if config.ablation.include_subtitles {
        let mut jitter = seeded_jitter(config.seed, "subtitles", &record.video_id);
        crate::providers::with_retry(
            &config.retry,
            &mut jitter,
            &mut |d| std::thread::sleep(d),
            || fetch_subtitles(record, deps.transcript_source, deps.translator),
        )
        .map_err(|e| prep_failed(e.to_string()))?
        .value
    } else {
        String::new()
    };

    // Video description: cache first, then the configured describer.
    let mut description = String::new();
    if config.ablation.include_description {
        let prompt_text = match deps.describe_kind {
            DescriptionKind::FullVideo => full_video_prompt(),
            DescriptionKind::FrameSet => frame_set_prompt(),
        };
        match deps.description_cache.get(&record.video_id, &deps.describer_id, prompt_text) {
            Some(text) => description = text,
            None => {
                let backend = deps.describer.ok_or_else(|| {
                    prep_failed(format!(
                        "no cached description from source \"{}\" and no describer configured",
                        deps.describer_id
                    ))
                })?;
                let request =
                    description_chat_request(record, deps.describe_kind, &deps.describer_model_id)
                        .map_err(|e| prep_failed(e.to_string()))?;
                let seed = hashing::derive_seed(
                    config.seed,
                    &format!("describe:{}", record.video_id),
                );
                match send_with_retry(backend, &request, &config.retry, seed) {
                    Ok(outcome) => {
                        let outcome = outcome.value;
                        match outcome.status {
                            OutcomeStatus::Ok => {
                                deps.description_cache
                                    .put(
                                        &record.video_id,
                                        &deps.describer_id,
                                        prompt_text,
                                        &outcome.text,
                                    )
                                    .map_err(|e| prep_failed(e.to_string()))?;
                                if let Some(usage) = deps.usage {
                                    usage.push(UsageEntry {
                                        stage: Stage::Describe,
                                        backend: deps.describer_id.clone(),
                                        video_id: record.video_id.clone(),
                                        usage: outcome.usage,
                                    });
                                }
                                description = outcome.text;
                            }
                            OutcomeStatus::Blocked(reason) => {
                                return Ok(finish(
                                    record,
                                    config,
                                    Vec::new(),
                                    failure(
                                        ClassificationStatus::Blocked(reason),
                                        format!("video description generation blocked ({reason})"),
                                    ),
                                ));
                            }
                            OutcomeStatus::Refused => {
                                return Ok(finish(
                                    record,
                                    config,
                                    Vec::new(),
                                    failure(ClassificationStatus::Refused, outcome.text),
                                ));
                            }
                            OutcomeStatus::TransportError => {
                                return Ok(finish(
                                    record,
                                    config,
                                    Vec::new(),
                                    failure(
                                        ClassificationStatus::TransportFailed,
                                        "video description transport error".into(),
                                    ),
                                ));
                            }
                        }
                    }
                    Err(err) => {
                        return Ok(finish(
                            record,
                            config,
                            Vec::new(),
                            failure(ClassificationStatus::TransportFailed, err.to_string()),
                        ));
                    }
                }
            }
        }
    }

    let bundle = assemble_bundle(record, &subtitles, &description, config.ablation)
        .map_err(|e| prep_failed(e.to_string()))?;

    // Dynamic few-shot: retrieve the nearest exemplar of each class.
    let cards = if config.strategy == PromptStrategy::DynamicFewShot {
        let index = deps.exemplar_index.ok_or(ClassifyError::MissingExemplarIndex)?;
        let vector = match index.get(&record.video_id) {
            Some(entry) => entry.vector.clone(),
            None => {
                let embedder = deps.embedder.ok_or_else(|| {
                    prep_failed("query not in exemplar store and no embedder configured".into())
                })?;
                embed(&description, embedder).map_err(|e| prep_failed(e.to_string()))?
            }
        };
        let (misleading, not_misleading) = index
            .nearest_per_class_in_pool(&record.video_id, &vector, &config.pool)
            .map_err(|e| prep_failed(e.to_string()))?;
        let m = build_card(misleading).map_err(|e| prep_failed(e.to_string()))?;
        let n = build_card(not_misleading).map_err(|e| prep_failed(e.to_string()))?;
        Some((m, n))
    } else {
        None
    };

    let document = prompts::render(
        &bundle,
        config.strategy,
        cards.as_ref().map(|(m, n)| (m, n)),
    )
    .map_err(|e| prep_failed(e.to_string()))?;

    let request = ChatRequest {
        model_id: config.model_id.clone(),
        parts: document.parts.clone(),
        temperature: config.temperature,
        max_output_tokens: config.max_output_tokens,
    };

    let cache_key = outcome_cache_key(config, &record.video_id, &document.checksum);
    let cached = deps.outcome_cache.and_then(|c| c.get(&cache_key));
    let (outcome, from_cache) = match cached {
        Some(outcome) => (outcome, true),
        None => {
            let seed =
                hashing::derive_seed(config.seed, &format!("classify:{}", record.video_id));
            match send_with_retry(deps.classifier, &request, &config.retry, seed) {
                Ok(outcome) => (outcome.value, false),
                Err(err) => {
                    return Ok(finish(
                        record,
                        config,
                        document.exemplar_ids,
                        failure(ClassificationStatus::TransportFailed, err.to_string()),
                    ));
                }
            }
        }
    };

    if !from_cache {
        if outcome.status != OutcomeStatus::TransportError {
            if let Some(cache) = deps.outcome_cache {
                cache.put(&cache_key, &outcome)?;
            }
        }
        if matches!(outcome.status, OutcomeStatus::Ok | OutcomeStatus::Refused) {
            if let Some(usage) = deps.usage {
                usage.push(UsageEntry {
                    stage: Stage::Classify,
                    backend: config.backend_name.clone(),
                    video_id: record.video_id.clone(),
                    usage: outcome.usage,
                });
            }
        }
    }

    let parts = match outcome.status {
        OutcomeStatus::Ok => {
            let (verdict, explanation) = parse_verdict(&outcome.text);
            let status = match verdict {
                Verdict::Unclassifiable => ClassificationStatus::ParseFailed,
                _ => ClassificationStatus::Ok,
            };
            ResultParts {
                verdict,
                explanation,
                status,
                usage: outcome.usage,
                latency_ms: outcome.latency_ms,
            }
        }
        OutcomeStatus::Blocked(reason) => ResultParts {
            verdict: Verdict::Unclassifiable,
            explanation: String::new(),
            status: ClassificationStatus::Blocked(reason),
            usage: outcome.usage,
            latency_ms: outcome.latency_ms,
        },
        OutcomeStatus::Refused => ResultParts {
            verdict: Verdict::Unclassifiable,
            explanation: outcome.text.clone(),
            status: ClassificationStatus::Refused,
            usage: outcome.usage,
            latency_ms: outcome.latency_ms,
        },
        OutcomeStatus::TransportError => failure(
            ClassificationStatus::TransportFailed,
            "transport error".into(),
        ),
    };
    Ok(finish(record, config, document.exemplar_ids, parts))
}

fn seeded_jitter(seed: u64, stage: &str, video_id: &str) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(hashing::derive_seed(
        seed,
        &format!("{stage}:{video_id}"),
    ))
}

/// Classify a batch with a bounded worker pool. One result per record, in
/// input order; per-record failures never abort the batch.
pub fn classify_batch(
    records: &[VideoRecord],
    config: &RunConfig,
    deps: &ClassifyDeps<'_>,
) -> Result<Vec<ClassificationResult>, ClassifyError> {
    if config.strategy == PromptStrategy::DynamicFewShot && deps.exemplar_index.is_none() {
        return Err(ClassifyError::MissingExemplarIndex);
    }
    let total = records.len();
    let slots: Mutex<Vec<Option<ClassificationResult>>> = Mutex::new(vec![None; total]);
    let next = AtomicUsize::new(0);
    let workers = config.concurrency_limit.clamp(1, total.max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= total {
                    break;
                }
                let record = &records[i];
                let result = match classify_one(record, config, deps) {
                    Ok(result) => result,
                    Err(err) => finish(
                        record,
                        config,
                        Vec::new(),
                        failure(ClassificationStatus::TransportFailed, err.to_string()),
                    ),
                };
                slots.lock().expect("result slots poisoned")[i] = Some(result);
            });
        }
    });
    Ok(slots
        .into_inner()
        .expect("result slots poisoned")
        .into_iter()
        .map(|slot| slot.expect("every slot is filled"))
        .collect())
}

/// Everything needed to trace a results file back to its configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub backend: String,
    pub model_id: String,
    pub strategy: PromptStrategy,
    pub ablation: AblationMask,
    pub seed: u64,
    pub concurrency_limit: usize,
    pub temperature: Option<f64>,
    pub max_output_tokens: Option<u32>,
    pub pool: PoolFilter,
    pub manifest_digest: String,
    pub template_checksums: BTreeMap<String, String>,
    pub code_version: String,
    pub warnings: Vec<String>,
}

impl RunManifest {
    pub fn for_run(config: &RunConfig, manifest_digest: &str, warnings: Vec<String>) -> Self {
        let mut manifest = RunManifest {
            run_id: String::new(),
            backend: config.backend_name.clone(),
            model_id: config.model_id.clone(),
            strategy: config.strategy,
            ablation: config.ablation,
            seed: config.seed,
            concurrency_limit: config.concurrency_limit,
            temperature: config.temperature,
            max_output_tokens: config.max_output_tokens,
            pool: config.pool.clone(),
            manifest_digest: manifest_digest.to_string(),
            template_checksums: prompts::template_checksums().into_iter().collect(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            warnings,
        };
        let canonical =
            serde_json::to_string(&manifest).expect("run manifest serialization cannot fail");
        manifest.run_id = hashing::short(&hashing::sha256_hex(canonical.as_bytes()), 12).to_string();
        manifest
    }

    pub fn results_file_name(&self) -> String {
        format!(
            "{}__{}__{}__{}.jsonl",
            self.backend,
            self.strategy.name(),
            self.ablation.name(),
            self.run_id
        )
    }

    /// Key used in comparison tables.
    pub fn run_key(&self) -> String {
        format!("{}/{}/{}", self.backend, self.strategy.name(), self.ablation.name())
    }
}

/// Write one run's results file: a run-manifest header line followed by one
/// result per line, in input order.
pub fn write_results_file(
    dir: &Path,
    manifest: &RunManifest,
    results: &[ClassificationResult],
) -> Result<PathBuf, ClassifyError> {
    fs::create_dir_all(dir).map_err(|source| ClassifyError::Io { path: dir.into(), source })?;
    let path = dir.join(manifest.results_file_name());
    let mut out = String::new();
    out.push_str(&serde_json::to_string(manifest).expect("manifest serialization cannot fail"));
    out.push('\n');
    for result in results {
        out.push_str(&serde_json::to_string(result).expect("result serialization cannot fail"));
        out.push('\n');
    }
    fs::write(&path, out).map_err(|source| ClassifyError::Io { path: path.clone(), source })?;
    Ok(path)
}

/// Read one results file written by [`write_results_file`].
pub fn read_results_file(
    path: &Path,
) -> Result<(RunManifest, Vec<ClassificationResult>), ClassifyError> {
    let text =
        fs::read_to_string(path).map_err(|source| ClassifyError::Io { path: path.into(), source })?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| ClassifyError::Format {
        path: path.into(),
        message: "empty results file".into(),
    })?;
    let manifest: RunManifest = serde_json::from_str(header).map_err(|e| ClassifyError::Format {
        path: path.into(),
        message: format!("bad run-manifest header: {e}"),
    })?;
    let mut results = Vec::new();
    for (i, line) in lines.enumerate() {
        results.push(serde_json::from_str(line).map_err(|e| ClassifyError::Format {
            path: path.into(),
            message: format!("result line {}: {e}", i + 2),
        })?);
    }
    Ok((manifest, results))
}

/// Load every results file (`*.jsonl`) in a directory, sorted by file name.
pub fn load_results_dir(
    dir: &Path,
) -> Result<Vec<(RunManifest, Vec<ClassificationResult>)>, ClassifyError> {
    let entries =
        fs::read_dir(dir).map_err(|source| ClassifyError::Io { path: dir.into(), source })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "jsonl").unwrap_or(false))
        .collect();
    paths.sort();
    paths.iter().map(|p| read_results_file(p)).collect()
}

/// A completed, persisted run.
#[derive(Debug)]
pub struct ClassificationRun {
    pub manifest: RunManifest,
    pub results: Vec<ClassificationResult>,
    pub path: PathBuf,
}

/// Run a full classification batch and persist it under `out_dir`.
///
/// Ablating inputs outside the zero-shot strategy is allowed but off the
/// paper's ablation protocol; the run manifest records a warning when that
/// pairing is requested.
pub fn run_classification(
    records: &[VideoRecord],
    config: &RunConfig,
    deps: &ClassifyDeps<'_>,
    out_dir: &Path,
    manifest_digest: &str,
) -> Result<ClassificationRun, ClassifyError> {
    let mut warnings = Vec::new();
    if config.strategy != PromptStrategy::ZeroShot && config.ablation != AblationMask::FULL {
        warnings.push(format!(
            "ablation {} combined with strategy {}: ablation is calibrated for zero-shot only",
            config.ablation, config.strategy
        ));
    }
    let manifest = RunManifest::for_run(config, manifest_digest, warnings);
    let results = classify_batch(records, config, deps)?;
    let path = write_results_file(out_dir, &manifest, &results)?;
    Ok(ClassificationRun { manifest, results, path })
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Verdict::Misleading => "misleading",
            Verdict::NotMisleading => "not_misleading",
            Verdict::Unclassifiable => "unclassifiable",
        };
        f.write_str(name)
    }
}
