//! Uniform gateway to classification/description backends.
//!
//! Backends expose one operation: send a [`ChatRequest`], get a
//! [`ChatOutcome`]. Transport failures and rate limits are retried with
//! exponential backoff and full jitter; safety blocks and refusals are
//! terminal outcomes, never retried. The [`MockBackend`] replays scripted
//! outcomes deterministically so the whole pipeline runs offline; the
//! [`HttpBackend`] speaks a declarative chat-over-HTTP wire format whose
//! field names come from configuration.

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evidence::ImageRef;
use crate::exemplars::{CardGenerator, ExemplarError};
use crate::hashing;
use crate::prompts::PromptPart;

/// Token- and media-level usage reported by a backend for one call.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TokenUsage {
    #[serde(default)]
    pub input_tokens: u64,
    #[serde(default)]
    pub output_tokens: u64,
    #[serde(default)]
    pub image_count: u64,
    #[serde(default)]
    pub media_seconds: f64,
}

impl std::ops::Add for TokenUsage {
    type Output = TokenUsage;
    fn add(self, rhs: TokenUsage) -> TokenUsage {
        TokenUsage {
            input_tokens: self.input_tokens + rhs.input_tokens,
            output_tokens: self.output_tokens + rhs.output_tokens,
            image_count: self.image_count + rhs.image_count,
            media_seconds: self.media_seconds + rhs.media_seconds,
        }
    }
}

/// Provider-side reason for refusing to process content.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BlockReason {
    ProhibitedContent,
    Safety,
    Recitation,
    Other,
}

impl BlockReason {
    pub fn code(self) -> &'static str {
        match self {
            BlockReason::ProhibitedContent => "PROHIBITED_CONTENT",
            BlockReason::Safety => "SAFETY",
            BlockReason::Recitation => "RECITATION",
            BlockReason::Other => "OTHER",
        }
    }
}

impl fmt::Display for BlockReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl std::str::FromStr for BlockReason {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "PROHIBITED_CONTENT" => Ok(BlockReason::ProhibitedContent),
            "SAFETY" => Ok(BlockReason::Safety),
            "RECITATION" => Ok(BlockReason::Recitation),
            _ => Ok(BlockReason::Other),
        }
    }
}

/// Terminal state of one backend call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "reason", rename_all = "snake_case")]
pub enum OutcomeStatus {
    Ok,
    Blocked(BlockReason),
    Refused,
    TransportError,
}

/// What one backend call produced. Text is empty unless the call succeeded
/// or the model refused in prose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatOutcome {
    pub status: OutcomeStatus,
    pub text: String,
    pub usage: TokenUsage,
    pub latency_ms: u64,
}

impl ChatOutcome {
    pub fn ok(text: impl Into<String>, usage: TokenUsage, latency_ms: u64) -> Self {
        ChatOutcome { status: OutcomeStatus::Ok, text: text.into(), usage, latency_ms }
    }

    pub fn blocked(reason: BlockReason, latency_ms: u64) -> Self {
        ChatOutcome {
            status: OutcomeStatus::Blocked(reason),
            text: String::new(),
            usage: TokenUsage::default(),
            latency_ms,
        }
    }

    pub fn refused(text: impl Into<String>, usage: TokenUsage, latency_ms: u64) -> Self {
        ChatOutcome { status: OutcomeStatus::Refused, text: text.into(), usage, latency_ms }
    }

    pub fn transport_error(latency_ms: u64) -> Self {
        ChatOutcome {
            status: OutcomeStatus::TransportError,
            text: String::new(),
            usage: TokenUsage::default(),
            latency_ms,
        }
    }
}

/// One request to a chat backend. An absent temperature is transmitted as
/// absent (the provider's default applies), never as a numeric stand-in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub parts: Vec<PromptPart>,
    pub temperature: Option<f64>,
    pub max_output_tokens: Option<u32>,
}

impl ChatRequest {
    pub fn from_parts(model_id: &str, parts: Vec<PromptPart>) -> Self {
        ChatRequest {
            model_id: model_id.to_string(),
            parts,
            temperature: None,
            max_output_tokens: None,
        }
    }

    /// Concatenated text parts, in order.
    pub fn text(&self) -> String {
        self.parts
            .iter()
            .filter_map(|p| match p {
                PromptPart::Text(t) => Some(t.as_str()),
                PromptPart::Image(_) => None,
            })
            .collect()
    }

    /// SHA-256 of the concatenated text parts; equals the checksum of the
    /// prompt document the request was built from.
    pub fn checksum(&self) -> String {
        hashing::sha256_hex(self.text().as_bytes())
    }

    pub fn image_count(&self) -> u64 {
        self.parts.iter().filter(|p| matches!(p, PromptPart::Image(_))).count() as u64
    }
}

#[derive(Debug, Clone, Error)]
pub enum ProviderError {
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited (retry after {retry_after_ms:?} ms)")]
    RateLimited { retry_after_ms: Option<u64> },
    #[error("no script entry matched request {checksum}; nearest matcher: {nearest}")]
    UnmatchedRequest { checksum: String, nearest: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
}

/// Classifies errors for the retry loop.
pub trait RetryClass {
    fn is_retryable(&self) -> bool;
    fn retry_after_ms(&self) -> Option<u64> {
        None
    }
}

impl RetryClass for ProviderError {
    fn is_retryable(&self) -> bool {
        matches!(self, ProviderError::Transport(_) | ProviderError::RateLimited { .. })
    }

    fn retry_after_ms(&self) -> Option<u64> {
        match self {
            ProviderError::RateLimited { retry_after_ms } => *retry_after_ms,
            _ => None,
        }
    }
}

impl RetryClass for crate::evidence::EvidenceError {
    fn is_retryable(&self) -> bool {
        crate::evidence::EvidenceError::is_retryable(self)
    }
}

/// A configured classification or description backend.
pub trait ChatBackend: Send + Sync {
    fn name(&self) -> &str;
    fn send(&self, request: &ChatRequest) -> Result<ChatOutcome, ProviderError>;
}

/// Exponential backoff with full jitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 3, base_delay_ms: 500, max_delay_ms: 30_000 }
    }
}

/// All attempts failed; carries the last error.
#[derive(Debug, Clone, Error)]
#[error("retries exhausted after {attempts} attempt(s): {last}")]
pub struct Exhausted<E: fmt::Display + fmt::Debug> {
    pub attempts: u32,
    pub last: E,
}

/// Successful retry-loop result with the attempt count.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryOutcome<T> {
    pub value: T,
    pub attempts: u32,
}

/// Run `op` under the policy. Only retryable errors are retried; the delay
/// honors a provider-advertised retry-after when present, otherwise it is
/// drawn uniformly from `[0, min(max_delay, base * 2^attempt)]` (full
/// jitter). Deterministic for a seeded jitter source.
pub fn with_retry<T, E>(
    policy: &RetryPolicy,
    jitter: &mut dyn RngCore,
    sleep: &mut dyn FnMut(Duration),
    mut op: impl FnMut() -> Result<T, E>,
) -> Result<RetryOutcome<T>, Exhausted<E>>
where
    E: RetryClass + fmt::Display + fmt::Debug,
{
    let max_attempts = policy.max_attempts.max(1);
    let mut attempt = 0;
    loop {
        attempt += 1;
        match op() {
            Ok(value) => return Ok(RetryOutcome { value, attempts: attempt }),
            Err(err) => {
                if !err.is_retryable() || attempt >= max_attempts {
                    return Err(Exhausted { attempts: attempt, last: err });
                }
                let delay_ms = match err.retry_after_ms() {
                    Some(ms) => ms,
                    None => {
                        let cap = policy
                            .base_delay_ms
                            .saturating_mul(1u64 << (attempt - 1).min(20))
                            .min(policy.max_delay_ms)
                            .max(1);
                        jitter.gen_range(0..=cap)
                    }
                };
                sleep(Duration::from_millis(delay_ms));
            }
        }
    }
}

/// Send a request through the retry loop, sleeping for real. The seed makes
/// the jitter sequence reproducible.
pub fn send_with_retry(
    backend: &dyn ChatBackend,
    request: &ChatRequest,
    policy: &RetryPolicy,
    seed: u64,
) -> Result<RetryOutcome<ChatOutcome>, Exhausted<ProviderError>> {
    let mut jitter = ChaCha8Rng::seed_from_u64(seed);
    with_retry(policy, &mut jitter, &mut |d| std::thread::sleep(d), || backend.send(request))
}

/// How a script entry decides whether it answers a request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum RequestMatcher {
    Any,
    Substring(String),
    Checksum(String),
}

impl RequestMatcher {
    fn matches(&self, text: &str, checksum: &str) -> bool {
        match self {
            RequestMatcher::Any => true,
            RequestMatcher::Substring(s) => text.contains(s.as_str()),
            RequestMatcher::Checksum(c) => checksum == c,
        }
    }

    /// Crude closeness score against a request, for unmatched-request
    /// diagnostics.
    fn closeness(&self, text: &str, checksum: &str) -> usize {
        match self {
            RequestMatcher::Any => 0,
            RequestMatcher::Substring(s) => {
                let mut best = 0;
                for len in (1..=s.len()).rev() {
                    if text.contains(&s[..len]) {
                        best = len;
                        break;
                    }
                }
                best
            }
            RequestMatcher::Checksum(c) => {
                c.bytes().zip(checksum.bytes()).take_while(|(a, b)| a == b).count()
            }
        }
    }
}

impl fmt::Display for RequestMatcher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RequestMatcher::Any => write!(f, "any"),
            RequestMatcher::Substring(s) => write!(f, "substring({s:?})"),
            RequestMatcher::Checksum(c) => write!(f, "checksum({c})"),
        }
    }
}

/// A scripted reply: either a full outcome or a provider error (for
/// exercising retry paths).
pub type ScriptedReply = Result<ChatOutcome, ProviderError>;

struct ScriptEntry {
    matcher: RequestMatcher,
    replies: VecDeque<ScriptedReply>,
}

/// Deterministic replay backend. Each entry holds a queue of replies:
/// replies pop in order and the last one repeats, so the same prompt always
/// gets the same answer once the queue settles.
pub struct MockBackend {
    name: String,
    script: Mutex<Vec<ScriptEntry>>,
    calls: AtomicUsize,
}

impl MockBackend {
    pub fn new(name: &str) -> Self {
        MockBackend { name: name.to_string(), script: Mutex::new(Vec::new()), calls: AtomicUsize::new(0) }
    }

    pub fn push(&self, matcher: RequestMatcher, reply: ScriptedReply) {
        self.push_sequence(matcher, vec![reply]);
    }

    pub fn push_sequence(&self, matcher: RequestMatcher, replies: Vec<ScriptedReply>) {
        assert!(!replies.is_empty(), "script entry needs at least one reply");
        self.script
            .lock()
            .expect("mock script poisoned")
            .push(ScriptEntry { matcher, replies: replies.into() });
    }

    /// Total send() invocations, for cache-contract assertions.
    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Load a script from a line-delimited JSON file.
    pub fn from_script_file(name: &str, path: &Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProviderError::Configuration(format!("cannot read script {path:?}: {e}")))?;
        let mock = MockBackend::new(name);
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptFileEntry = serde_json::from_str(line).map_err(|e| {
                ProviderError::Configuration(format!("script {path:?} line {}: {e}", i + 1))
            })?;
            mock.push_sequence(entry.matcher, entry.replies.into_iter().map(|r| r.into_reply()).collect());
        }
        Ok(mock)
    }
}

impl ChatBackend for MockBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn send(&self, request: &ChatRequest) -> Result<ChatOutcome, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let text = request.text();
        let checksum = request.checksum();
        let mut script = self.script.lock().expect("mock script poisoned");
        for entry in script.iter_mut() {
            if entry.matcher.matches(&text, &checksum) {
                let reply = if entry.replies.len() > 1 {
                    entry.replies.pop_front().expect("non-empty reply queue")
                } else {
                    entry.replies.front().expect("non-empty reply queue").clone()
                };
                return reply;
            }
        }
        let nearest = script
            .iter()
            .max_by_key(|e| e.matcher.closeness(&text, &checksum))
            .map(|e| e.matcher.to_string())
            .unwrap_or_else(|| "<empty script>".to_string());
        Err(ProviderError::UnmatchedRequest { checksum, nearest })
    }
}

/// On-disk form of one script entry.
#[derive(Debug, Serialize, Deserialize)]
struct ScriptFileEntry {
    #[serde(rename = "match")]
    matcher: RequestMatcher,
    replies: Vec<ReplySpec>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
enum ReplySpec {
    Ok {
        text: String,
        #[serde(default)]
        usage: TokenUsage,
        #[serde(default)]
        latency_ms: u64,
    },
    Blocked {
        reason: BlockReason,
        #[serde(default)]
        latency_ms: u64,
    },
    Refused {
        #[serde(default)]
        text: String,
        #[serde(default)]
        usage: TokenUsage,
        #[serde(default)]
        latency_ms: u64,
    },
    TransportError {
        #[serde(default)]
        message: String,
    },
}

impl ReplySpec {
    fn into_reply(self) -> ScriptedReply {
        match self {
            ReplySpec::Ok { text, usage, latency_ms } => Ok(ChatOutcome::ok(text, usage, latency_ms)),
            ReplySpec::Blocked { reason, latency_ms } => Ok(ChatOutcome::blocked(reason, latency_ms)),
            ReplySpec::Refused { text, usage, latency_ms } => {
                Ok(ChatOutcome::refused(text, usage, latency_ms))
            }
            ReplySpec::TransportError { message } => Err(ProviderError::Transport(message)),
        }
    }
}

/// Environment variable holding the credential for a named backend.
pub fn credential_env_var(backend_name: &str) -> String {
    let sanitized: String = backend_name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_uppercase() } else { '_' })
        .collect();
    format!("THUMBTRUTH_API_KEY_{sanitized}")
}

/// Declarative request/response field mapping for a chat-over-HTTP backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMapping {
    /// Key of the request field holding the model identifier.
    #[serde(default = "default_model_field")]
    pub model_field: String,
    /// Key of the request array carrying the prompt parts.
    #[serde(default = "default_parts_field")]
    pub parts_field: String,
    /// Key for text inside one part object.
    #[serde(default = "default_text_part_field")]
    pub text_part_field: String,
    /// Key for an image URI inside one part object.
    #[serde(default = "default_image_part_field")]
    pub image_part_field: String,
    #[serde(default = "default_temperature_field")]
    pub temperature_field: String,
    #[serde(default = "default_max_tokens_field")]
    pub max_tokens_field: String,
    /// JSON pointer to the response text.
    pub response_text_pointer: String,
    /// JSON pointers to usage counters (missing counters read as 0).
    #[serde(default)]
    pub input_tokens_pointer: Option<String>,
    #[serde(default)]
    pub output_tokens_pointer: Option<String>,
    /// JSON pointer that, when present and non-null, marks a safety block;
    /// its string value is the reason code.
    #[serde(default)]
    pub block_reason_pointer: Option<String>,
    /// JSON pointer that, when present and non-null, marks a refusal; its
    /// string value is the refusal text.
    #[serde(default)]
    pub refusal_pointer: Option<String>,
    #[serde(default = "default_auth_header")]
    pub auth_header: String,
    #[serde(default = "default_auth_prefix")]
    pub auth_prefix: String,
}

fn default_model_field() -> String {
    "model".into()
}
fn default_parts_field() -> String {
    "parts".into()
}
fn default_text_part_field() -> String {
    "text".into()
}
fn default_image_part_field() -> String {
    "image_url".into()
}
fn default_temperature_field() -> String {
    "temperature".into()
}
fn default_max_tokens_field() -> String {
    "max_output_tokens".into()
}
fn default_auth_header() -> String {
    "authorization".into()
}
fn default_auth_prefix() -> String {
    "Bearer ".into()
}

/// Build the wire request body for a mapping. Pure, so the mapping logic is
/// testable without a server.
pub fn build_wire_request(mapping: &WireMapping, request: &ChatRequest) -> serde_json::Value {
    let parts: Vec<serde_json::Value> = request
        .parts
        .iter()
        .map(|p| match p {
            PromptPart::Text(t) => serde_json::json!({ mapping.text_part_field.clone(): t }),
            PromptPart::Image(img) => {
                serde_json::json!({ mapping.image_part_field.clone(): img.0 })
            }
        })
        .collect();
    let mut body = serde_json::json!({
        mapping.model_field.clone(): request.model_id,
        mapping.parts_field.clone(): parts,
    });
    let obj = body.as_object_mut().expect("body is an object");
    if let Some(t) = request.temperature {
        obj.insert(mapping.temperature_field.clone(), serde_json::json!(t));
    }
    if let Some(m) = request.max_output_tokens {
        obj.insert(mapping.max_tokens_field.clone(), serde_json::json!(m));
    }
    body
}

fn pointer_u64(value: &serde_json::Value, pointer: &Option<String>) -> u64 {
    pointer
        .as_deref()
        .and_then(|p| value.pointer(p))
        .and_then(serde_json::Value::as_u64)
        .unwrap_or(0)
}

/// Interpret a wire response body. Pure counterpart of [`build_wire_request`].
pub fn parse_wire_response(
    mapping: &WireMapping,
    body: &serde_json::Value,
    image_count: u64,
    latency_ms: u64,
) -> Result<ChatOutcome, ProviderError> {
    let usage = TokenUsage {
        input_tokens: pointer_u64(body, &mapping.input_tokens_pointer),
        output_tokens: pointer_u64(body, &mapping.output_tokens_pointer),
        image_count,
        media_seconds: 0.0,
    };
    if let Some(pointer) = &mapping.block_reason_pointer {
        if let Some(value) = body.pointer(pointer).filter(|v| !v.is_null()) {
            let reason: BlockReason =
                value.as_str().unwrap_or("OTHER").parse().unwrap_or(BlockReason::Other);
            return Ok(ChatOutcome::blocked(reason, latency_ms));
        }
    }
    if let Some(pointer) = &mapping.refusal_pointer {
        if let Some(value) = body.pointer(pointer).filter(|v| !v.is_null()) {
            let text = value.as_str().unwrap_or_default().to_string();
            return Ok(ChatOutcome::refused(text, usage, latency_ms));
        }
    }
    let text = body
        .pointer(&mapping.response_text_pointer)
        .and_then(serde_json::Value::as_str)
        .ok_or_else(|| {
            ProviderError::MalformedResponse(format!(
                "no text at pointer {}",
                mapping.response_text_pointer
            ))
        })?;
    // Trailing whitespace aside, the backend's text is passed through
    // verbatim.
    Ok(ChatOutcome::ok(text.trim_end(), usage, latency_ms))
}

/// Chat backend speaking the declarative wire format over HTTP. Credentials
/// come from `THUMBTRUTH_API_KEY_<NAME>`; a missing credential fails before
/// any network activity.
pub struct HttpBackend {
    name: String,
    endpoint: String,
    mapping: WireMapping,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(name: &str, endpoint: &str, mapping: WireMapping) -> Self {
        HttpBackend {
            name: name.to_string(),
            endpoint: endpoint.to_string(),
            mapping,
            client: reqwest::blocking::Client::new(),
        }
    }
}

impl ChatBackend for HttpBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn send(&self, request: &ChatRequest) -> Result<ChatOutcome, ProviderError> {
        let env_var = credential_env_var(&self.name);
        let credential = std::env::var(&env_var).map_err(|_| {
            ProviderError::Configuration(format!("missing credential: set {env_var}"))
        })?;
        let body = build_wire_request(&self.mapping, request);
        let started = std::time::Instant::now();
        let response = self
            .client
            .post(&self.endpoint)
            .header(&self.mapping.auth_header, format!("{}{credential}", self.mapping.auth_prefix))
            .json(&body)
            .send()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let latency_ms = started.elapsed().as_millis() as u64;
        let status = response.status();
        if status.as_u16() == 429 {
            let retry_after_ms = response
                .headers()
                .get("retry-after")
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.parse::<u64>().ok())
                .map(|secs| secs * 1000);
            return Err(ProviderError::RateLimited { retry_after_ms });
        }
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(ProviderError::Configuration(format!(
                "backend {} rejected credentials ({status})",
                self.name
            )));
        }
        if !status.is_success() {
            return Err(ProviderError::Transport(format!("http status {status}")));
        }
        let body: serde_json::Value =
            response.json().map_err(|e| ProviderError::MalformedResponse(e.to_string()))?;
        parse_wire_response(&self.mapping, &body, request.image_count(), latency_ms)
    }
}

/// Usage captured by [`BackendCardGenerator`] for one generation call.
#[derive(Debug, Clone, PartialEq)]
pub struct UsageEvent {
    /// Thumbnail URI for image-bearing calls, empty for text-only calls.
    pub context: String,
    pub usage: TokenUsage,
}

/// Adapts a chat backend to the narrow card-generation interface used by the
/// exemplars module, with retries and usage capture.
pub struct BackendCardGenerator<'a> {
    backend: &'a dyn ChatBackend,
    model_id: String,
    policy: RetryPolicy,
    seed: u64,
    usage_events: Mutex<Vec<UsageEvent>>,
}

impl<'a> BackendCardGenerator<'a> {
    pub fn new(backend: &'a dyn ChatBackend, model_id: &str, policy: RetryPolicy, seed: u64) -> Self {
        BackendCardGenerator {
            backend,
            model_id: model_id.to_string(),
            policy,
            seed,
            usage_events: Mutex::new(Vec::new()),
        }
    }

    /// Drain the usage recorded so far (for cost accounting).
    pub fn take_usage_events(&self) -> Vec<UsageEvent> {
        std::mem::take(&mut *self.usage_events.lock().expect("usage events poisoned"))
    }
}

impl CardGenerator for BackendCardGenerator<'_> {
    fn generate(&self, prompt: &str, image: Option<&ImageRef>) -> Result<String, ExemplarError> {
        let mut parts = vec![PromptPart::Text(prompt.to_string())];
        if let Some(img) = image {
            parts.push(PromptPart::Image(img.clone()));
        }
        let request = ChatRequest::from_parts(&self.model_id, parts);
        let seed = hashing::derive_seed(self.seed, &request.checksum());
        let outcome = send_with_retry(self.backend, &request, &self.policy, seed)
            .map_err(|e| ExemplarError::ProviderUnavailable(e.to_string()))?
            .value;
        match outcome.status {
            OutcomeStatus::Ok => {
                self.usage_events.lock().expect("usage events poisoned").push(UsageEvent {
                    context: image.map(|i| i.0.clone()).unwrap_or_default(),
                    usage: outcome.usage,
                });
                Ok(outcome.text)
            }
            OutcomeStatus::Blocked(reason) => {
                Err(ExemplarError::GenerationFailed(format!("provider blocked request: {reason}")))
            }
            OutcomeStatus::Refused => {
                Err(ExemplarError::GenerationFailed("provider refused request".into()))
            }
            OutcomeStatus::TransportError => {
                Err(ExemplarError::ProviderUnavailable("transport error".into()))
            }
        }
    }
}
