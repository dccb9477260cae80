//! Dynamic few-shot exemplar store: embed video descriptions, retrieve the
//! most similar misleading and non-misleading neighbors, and build the
//! standardized exemplar cards (one-sentence thumbnail description, 200-word
//! excerpts, ground-truth categorization, generated rationale).

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{truncate_words, Label};
use crate::evidence::ImageRef;

/// Word cap applied to subtitle and description excerpts in exemplar cards.
pub const EXCERPT_WORD_CAP: usize = 200;

/// A fixed-dimension embedding with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    values: Vec<f32>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Result<Self, ExemplarError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ExemplarError::NonFiniteValue);
        }
        Ok(EmbeddingVector { values })
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }
}

/// Text-embedding interface; the built-in [`HashEmbedder`] keeps everything
/// deterministic and offline, real sentence-embedding services plug in the
/// same way.
pub trait Embedder: Send + Sync {
    fn id(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, ExemplarError>;
}

/// Deterministic character-3-gram hashing embedder.
///
/// Grams are hashed (FNV-1a) into a fixed number of buckets, counted, and
/// L2-normalized. Empty text maps to the all-zeros vector. Texts shorter than
/// three characters contribute a single whole-text gram.
pub struct HashEmbedder {
    id: String,
    dimension: usize,
}

impl HashEmbedder {
    pub const DEFAULT_DIMENSION: usize = 256;

    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedder dimension must be positive");
        HashEmbedder { id: format!("hash-3gram-{dimension}"), dimension }
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder::new(Self::DEFAULT_DIMENSION)
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for byte in bytes {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

impl Embedder for HashEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, ExemplarError> {
        let chars: Vec<char> = text.chars().collect();
        let mut counts = vec![0f32; self.dimension];
        if chars.is_empty() {
            return EmbeddingVector::new(counts);
        }
        let mut add = |gram: &[char]| {
            let gram: String = gram.iter().collect();
            let bucket = (fnv1a64(gram.as_bytes()) % self.dimension as u64) as usize;
            counts[bucket] += 1.0;
        };
        if chars.len() < 3 {
            add(&chars);
        } else {
            for window in chars.windows(3) {
                add(window);
            }
        }
        let norm = counts.iter().map(|v| f64::from(*v) * f64::from(*v)).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut counts {
                *v = (f64::from(*v) / norm) as f32;
            }
        }
        EmbeddingVector::new(counts)
    }
}

/// Embed text after checking the embedder produces its declared dimension.
pub fn embed(text: &str, embedder: &dyn Embedder) -> Result<EmbeddingVector, ExemplarError> {
    let vector = embedder.embed(text)?;
    if vector.dimension() != embedder.dimension() {
        return Err(ExemplarError::DimensionMismatch {
            expected: embedder.dimension(),
            got: vector.dimension(),
        });
    }
    Ok(vector)
}

/// Cosine similarity in `[-1, 1]`; by convention 0 when either norm is 0.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, ExemplarError> {
    if a.dimension() != b.dimension() {
        return Err(ExemplarError::DimensionMismatch {
            expected: a.dimension(),
            got: b.dimension(),
        });
    }
    let mut dot = 0f64;
    let mut norm_a = 0f64;
    let mut norm_b = 0f64;
    for (x, y) in a.values().iter().zip(b.values()) {
        let x = f64::from(*x);
        let y = f64::from(*y);
        dot += x * y;
        norm_a += x * x;
        norm_b += y * y;
    }
    if norm_a == 0.0 || norm_b == 0.0 {
        return Ok(0.0);
    }
    Ok(dot / (norm_a.sqrt() * norm_b.sqrt()))
}

/// One stored exemplar: the embedded retrieval description plus everything
/// needed to render its card.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExemplarEntry {
    pub video_id: String,
    pub label: Label,
    pub vector: EmbeddingVector,
    pub description_text: String,
    pub subtitles_text: String,
    pub thumbnail_description: String,
    pub explanation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub country: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
}

/// A rendered few-shot example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExemplarCard {
    pub source_video_id: String,
    pub thumbnail_description: String,
    pub subtitles_excerpt: String,
    pub description_excerpt: String,
    pub categorization: Label,
    pub explanation: String,
}

/// Optional restriction of the retrieval pool; the default is the global
/// pool.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum PoolFilter {
    #[default]
    Global,
    Country(String),
    Language(String),
}

impl PoolFilter {
    fn admits(&self, entry: &ExemplarEntry) -> bool {
        match self {
            PoolFilter::Global => true,
            PoolFilter::Country(c) => entry.country.as_deref() == Some(c.as_str()),
            PoolFilter::Language(l) => entry.language.as_deref() == Some(l.as_str()),
        }
    }
}

#[derive(Debug, Error)]
pub enum ExemplarError {
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding contains a non-finite value")]
    NonFiniteValue,
    #[error("no {0} exemplar available in the pool")]
    ClassExhausted(Label),
    #[error("generation failed: {0}")]
    GenerationFailed(String),
    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("entry {video_id} incomplete: missing {missing}")]
    IncompleteEntry { video_id: String, missing: &'static str },
    #[error("duplicate exemplar entry {0}")]
    DuplicateEntry(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

/// Sidecar metadata persisted next to the entry file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexMeta {
    pub embedder_id: String,
    pub dimension: usize,
    pub entry_count: usize,
}

/// In-memory exemplar store. Queries are exhaustive scans: at corpus scale
/// (thousands of entries) brute force is exact and fast, so no approximate
/// index is kept.
#[derive(Debug, Clone, PartialEq)]
pub struct ExemplarIndex {
    embedder_id: String,
    dimension: usize,
    entries: Vec<ExemplarEntry>,
}

impl ExemplarIndex {
    pub fn new(embedder_id: &str, dimension: usize) -> Self {
        ExemplarIndex { embedder_id: embedder_id.to_string(), dimension, entries: Vec::new() }
    }

    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn entries(&self) -> &[ExemplarEntry] {
        &self.entries
    }

    pub fn get(&self, video_id: &str) -> Option<&ExemplarEntry> {
        self.entries.iter().find(|e| e.video_id == video_id)
    }

    pub fn insert(&mut self, entry: ExemplarEntry) -> Result<(), ExemplarError> {
        if entry.vector.dimension() != self.dimension {
            return Err(ExemplarError::DimensionMismatch {
                expected: self.dimension,
                got: entry.vector.dimension(),
            });
        }
        if self.get(&entry.video_id).is_some() {
            return Err(ExemplarError::DuplicateEntry(entry.video_id));
        }
        self.entries.push(entry);
        Ok(())
    }

    /// Most similar entry of each class, excluding the query video itself.
    ///
    /// Ties on similarity break toward the lexicographically smallest video
    /// id so retrieval is deterministic across runs and platforms.
    pub fn nearest_per_class(
        &self,
        query_id: &str,
        query_vector: &EmbeddingVector,
    ) -> Result<(&ExemplarEntry, &ExemplarEntry), ExemplarError> {
        self.nearest_per_class_in_pool(query_id, query_vector, &PoolFilter::Global)
    }

    /// [`Self::nearest_per_class`] restricted to a retrieval pool.
    pub fn nearest_per_class_in_pool(
        &self,
        query_id: &str,
        query_vector: &EmbeddingVector,
        pool: &PoolFilter,
    ) -> Result<(&ExemplarEntry, &ExemplarEntry), ExemplarError> {
        let mut best_misleading: Option<(f64, &ExemplarEntry)> = None;
        let mut best_not: Option<(f64, &ExemplarEntry)> = None;
        for entry in &self.entries {
            if entry.video_id == query_id || !pool.admits(entry) {
                continue;
            }
            let similarity = cosine_similarity(query_vector, &entry.vector)?;
            let slot = match entry.label {
                Label::Misleading => &mut best_misleading,
                Label::NotMisleading => &mut best_not,
            };
            let replace = match slot {
                None => true,
                Some((best_sim, best_entry)) => {
                    similarity > *best_sim
                        || (similarity == *best_sim && entry.video_id < best_entry.video_id)
                }
            };
            if replace {
                *slot = Some((similarity, entry));
            }
        }
        let misleading = best_misleading
            .map(|(_, e)| e)
            .ok_or(ExemplarError::ClassExhausted(Label::Misleading))?;
        let not_misleading =
            best_not.map(|(_, e)| e).ok_or(ExemplarError::ClassExhausted(Label::NotMisleading))?;
        Ok((misleading, not_misleading))
    }

    /// Persist as a line-delimited entry file plus a `.meta.json` sidecar.
    pub fn save(&self, path: &Path) -> Result<(), ExemplarError> {
        let mut out = String::new();
        for entry in &self.entries {
            out.push_str(
                &serde_json::to_string(entry).expect("exemplar entry serialization cannot fail"),
            );
            out.push('\n');
        }
        fs::write(path, out).map_err(|source| ExemplarError::Io { path: path.into(), source })?;
        let meta = IndexMeta {
            embedder_id: self.embedder_id.clone(),
            dimension: self.dimension,
            entry_count: self.entries.len(),
        };
        let meta_path = sidecar_path(path);
        fs::write(
            &meta_path,
            serde_json::to_string_pretty(&meta).expect("meta serialization cannot fail"),
        )
        .map_err(|source| ExemplarError::Io { path: meta_path, source })?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ExemplarError> {
        let meta_path = sidecar_path(path);
        let meta_text = fs::read_to_string(&meta_path)
            .map_err(|source| ExemplarError::Io { path: meta_path.clone(), source })?;
        let meta: IndexMeta = serde_json::from_str(&meta_text)
            .map_err(|e| ExemplarError::Format { path: meta_path, message: e.to_string() })?;
        let text = fs::read_to_string(path)
            .map_err(|source| ExemplarError::Io { path: path.into(), source })?;
        let mut index = ExemplarIndex::new(&meta.embedder_id, meta.dimension);
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ExemplarEntry = serde_json::from_str(line).map_err(|e| {
                ExemplarError::Format {
                    path: path.into(),
                    message: format!("line {}: {e}", i + 1),
                }
            })?;
            index.insert(entry)?;
        }
        if index.entries.len() != meta.entry_count {
            return Err(ExemplarError::Format {
                path: path.into(),
                message: format!(
                    "entry count mismatch: meta says {}, file has {}",
                    meta.entry_count,
                    index.entries.len()
                ),
            });
        }
        Ok(index)
    }
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".meta.json");
    path.with_file_name(name)
}

/// Minimal generation interface for exemplar-card content (one text prompt,
/// optionally one image). Backed by a chat backend in production and by
/// closures in tests.
pub trait CardGenerator: Send + Sync {
    fn generate(&self, prompt: &str, image: Option<&ImageRef>) -> Result<String, ExemplarError>;
}

impl<F> CardGenerator for F
where
    F: Fn(&str, Option<&ImageRef>) -> Result<String, ExemplarError> + Send + Sync,
{
    fn generate(&self, prompt: &str, image: Option<&ImageRef>) -> Result<String, ExemplarError> {
        self(prompt, image)
    }
}

/// Prompt used to precompute one-sentence thumbnail descriptions.
pub const THUMBNAIL_DESCRIPTION_PROMPT: &str =
    "Provide a concise, one-sentence description of this thumbnail image.";

/// Truncate generated text to its first sentence (through the first `.`,
/// `!`, or `?`), collapsing internal whitespace.
pub fn first_sentence(text: &str) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ");
    match collapsed.find(['.', '!', '?']) {
        Some(idx) => collapsed[..=idx].to_string(),
        None => collapsed,
    }
}

/// Generates and caches one-sentence thumbnail descriptions keyed by
/// thumbnail URI, so each thumbnail costs at most one provider call.
pub struct ThumbnailDescriber<'a> {
    generator: &'a dyn CardGenerator,
    cache: Mutex<HashMap<String, String>>,
}

impl<'a> ThumbnailDescriber<'a> {
    pub fn new(generator: &'a dyn CardGenerator) -> Self {
        ThumbnailDescriber { generator, cache: Mutex::new(HashMap::new()) }
    }

    pub fn describe(&self, thumbnail: &ImageRef) -> Result<String, ExemplarError> {
        if let Some(hit) = self.cache.lock().expect("describer cache poisoned").get(&thumbnail.0) {
            return Ok(hit.clone());
        }
        let raw = self.generator.generate(THUMBNAIL_DESCRIPTION_PROMPT, Some(thumbnail))?;
        if raw.trim().is_empty() {
            return Err(ExemplarError::GenerationFailed(
                "provider returned empty thumbnail description".into(),
            ));
        }
        let sentence = first_sentence(&raw);
        self.cache
            .lock()
            .expect("describer cache poisoned")
            .insert(thumbnail.0.clone(), sentence.clone());
        Ok(sentence)
    }
}

/// Generate the rationale for one exemplar. The prompt carries the
/// ground-truth label so the rationale justifies that label; excerpts are
/// capped at 200 words before they reach the provider.
pub fn generate_explanation(
    thumbnail_description: &str,
    label: Label,
    description_excerpt: &str,
    subtitles_excerpt: &str,
    generator: &dyn CardGenerator,
) -> Result<String, ExemplarError> {
    let prompt = format!(
        "Thumbnail description: {}\n\
         Video description (excerpt): {}\n\
         Video subtitles (excerpt): {}\n\
         Ground-truth categorization: {}\n\
         In one or two sentences, explain why this thumbnail is categorized as {}.",
        thumbnail_description,
        truncate_words(description_excerpt, EXCERPT_WORD_CAP),
        truncate_words(subtitles_excerpt, EXCERPT_WORD_CAP),
        label.display_name(),
        label.display_name(),
    );
    let text = generator.generate(&prompt, None)?;
    if text.trim().is_empty() {
        return Err(ExemplarError::GenerationFailed("provider returned empty explanation".into()));
    }
    Ok(text.trim().to_string())
}

/// Render a stored entry into its card, applying the word cap to both
/// excerpts.
pub fn build_card(entry: &ExemplarEntry) -> Result<ExemplarCard, ExemplarError> {
    if entry.thumbnail_description.trim().is_empty() {
        return Err(ExemplarError::IncompleteEntry {
            video_id: entry.video_id.clone(),
            missing: "thumbnail_description",
        });
    }
    if entry.explanation.trim().is_empty() {
        return Err(ExemplarError::IncompleteEntry {
            video_id: entry.video_id.clone(),
            missing: "explanation",
        });
    }
    Ok(ExemplarCard {
        source_video_id: entry.video_id.clone(),
        thumbnail_description: entry.thumbnail_description.clone(),
        subtitles_excerpt: truncate_words(&entry.subtitles_text, EXCERPT_WORD_CAP),
        description_excerpt: truncate_words(&entry.description_text, EXCERPT_WORD_CAP),
        categorization: entry.label,
        explanation: entry.explanation.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::atomic::{AtomicUsize, Ordering};

    pub(crate) fn entry(video_id: &str, label: Label, values: Vec<f32>) -> ExemplarEntry {
        ExemplarEntry {
            video_id: video_id.to_string(),
            label,
            vector: EmbeddingVector::new(values).unwrap(),
            description_text: format!("description for {video_id}"),
            subtitles_text: format!("subtitles for {video_id}"),
            thumbnail_description: format!("A thumbnail for {video_id}."),
            explanation: format!("Because {video_id}."),
            country: None,
            language: None,
        }
    }

    #[test]
    fn hash_embedder_is_deterministic() {
        let embedder = HashEmbedder::default();
        let a = embedder.embed("the same text").unwrap();
        let b = embedder.embed("the same text").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dimension(), 256);
    }

    #[test]
    fn hash_embedder_empty_text_is_zero_vector() {
        let embedder = HashEmbedder::default();
        let v = embedder.embed("").unwrap();
        assert!(v.values().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn hash_embedder_separates_unrelated_texts() {
        // Independent oracle: recompute the 3-gram bucket counts by hand for
        // both texts and check the cosine of the hand-built vectors matches.
        let text_a: String =
            (0..100).map(|i| format!("alpha{i}")).collect::<Vec<_>>().join(" ");
        let text_b: String =
            (0..100).map(|i| format!("ursa{}", i * 7 + 3)).collect::<Vec<_>>().join(" ");
        let embedder = HashEmbedder::default();
        let va = embedder.embed(&text_a).unwrap();
        let vb = embedder.embed(&text_b).unwrap();

        let hand = |text: &str| -> Vec<f64> {
            let chars: Vec<char> = text.chars().collect();
            let mut counts = vec![0f64; 256];
            for w in chars.windows(3) {
                let gram: String = w.iter().collect();
                counts[(fnv1a64(gram.as_bytes()) % 256) as usize] += 1.0;
            }
            counts
        };
        let ha = hand(&text_a);
        let hb = hand(&text_b);
        let dot: f64 = ha.iter().zip(&hb).map(|(x, y)| x * y).sum();
        let na: f64 = ha.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = hb.iter().map(|x| x * x).sum::<f64>().sqrt();
        let expected = dot / (na * nb);

        let got = cosine_similarity(&va, &vb).unwrap();
        assert!((got - expected).abs() < 1e-6, "got {got}, expected {expected}");
        assert!(got < 0.9, "unrelated texts too similar: {got}");
    }

    #[test]
    fn cosine_hand_worked() {
        let a = EmbeddingVector::new(vec![1.0, 2.0, 2.0]).unwrap();
        let b = EmbeddingVector::new(vec![2.0, 1.0, 2.0]).unwrap();
        let got = cosine_similarity(&a, &b).unwrap();
        assert!((got - 8.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_identity_and_orthogonal() {
        let v = EmbeddingVector::new(vec![0.3, -0.4, 0.5]).unwrap();
        assert!((cosine_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        let x = EmbeddingVector::new(vec![1.0, 0.0]).unwrap();
        let y = EmbeddingVector::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(cosine_similarity(&x, &y).unwrap(), 0.0);
    }

    #[test]
    fn cosine_zero_norm_convention() {
        let z = EmbeddingVector::new(vec![0.0, 0.0]).unwrap();
        let v = EmbeddingVector::new(vec![1.0, 1.0]).unwrap();
        assert_eq!(cosine_similarity(&z, &v).unwrap(), 0.0);
    }

    #[test]
    fn cosine_dimension_mismatch() {
        let a = EmbeddingVector::new(vec![1.0]).unwrap();
        let b = EmbeddingVector::new(vec![1.0, 0.0]).unwrap();
        assert!(matches!(
            cosine_similarity(&a, &b),
            Err(ExemplarError::DimensionMismatch { .. })
        ));
    }

    fn small_index() -> ExemplarIndex {
        let mut index = ExemplarIndex::new("test", 2);
        index.insert(entry("m1", Label::Misleading, vec![1.0, 0.0])).unwrap();
        index.insert(entry("m2", Label::Misleading, vec![0.0, 1.0])).unwrap();
        index.insert(entry("n1", Label::NotMisleading, vec![0.7, 0.7])).unwrap();
        index.insert(entry("n2", Label::NotMisleading, vec![-1.0, 0.0])).unwrap();
        index
    }

    #[test]
    fn nearest_matches_exhaustive_scan() {
        let index = small_index();
        let query = EmbeddingVector::new(vec![1.0, 0.2]).unwrap();
        let (m, n) = index.nearest_per_class("query", &query).unwrap();
        // Exhaustive check by hand: m1 has cos ~0.98, m2 ~0.196; n1 ~0.83,
        // n2 ~ -0.98.
        assert_eq!(m.video_id, "m1");
        assert_eq!(n.video_id, "n1");
    }

    #[test]
    fn nearest_excludes_query_itself() {
        let index = small_index();
        // Query is m1 with its own vector: the global best misleading match
        // is itself, so the runner-up must win.
        let query = EmbeddingVector::new(vec![1.0, 0.0]).unwrap();
        let (m, _) = index.nearest_per_class("m1", &query).unwrap();
        assert_eq!(m.video_id, "m2");
    }

    #[test]
    fn nearest_reports_exhausted_class() {
        let mut index = ExemplarIndex::new("test", 2);
        index.insert(entry("m1", Label::Misleading, vec![1.0, 0.0])).unwrap();
        let query = EmbeddingVector::new(vec![1.0, 0.0]).unwrap();
        match index.nearest_per_class("query", &query) {
            Err(ExemplarError::ClassExhausted(Label::NotMisleading)) => {}
            other => panic!("expected ClassExhausted(NotMisleading), got {other:?}"),
        }
    }

    #[test]
    fn nearest_breaks_ties_by_smallest_id() {
        let mut index = ExemplarIndex::new("test", 2);
        index.insert(entry("zzz", Label::Misleading, vec![1.0, 0.0])).unwrap();
        index.insert(entry("aaa", Label::Misleading, vec![1.0, 0.0])).unwrap();
        index.insert(entry("bbb", Label::NotMisleading, vec![0.0, 1.0])).unwrap();
        let query = EmbeddingVector::new(vec![1.0, 0.0]).unwrap();
        let (m, _) = index.nearest_per_class("query", &query).unwrap();
        assert_eq!(m.video_id, "aaa");
    }

    #[test]
    fn nearest_respects_pool_filter() {
        let mut index = ExemplarIndex::new("test", 2);
        let mut a = entry("m-us", Label::Misleading, vec![1.0, 0.0]);
        a.country = Some("USA".into());
        let mut b = entry("m-uk", Label::Misleading, vec![0.9, 0.1]);
        b.country = Some("UK".into());
        let mut c = entry("n-uk", Label::NotMisleading, vec![0.0, 1.0]);
        c.country = Some("UK".into());
        index.insert(a).unwrap();
        index.insert(b).unwrap();
        index.insert(c).unwrap();
        let query = EmbeddingVector::new(vec![1.0, 0.0]).unwrap();
        let pool = PoolFilter::Country("UK".into());
        let (m, n) = index.nearest_per_class_in_pool("query", &query, &pool).unwrap();
        assert_eq!(m.video_id, "m-uk");
        assert_eq!(n.video_id, "n-uk");
    }

    struct CountingGenerator {
        reply: String,
        calls: AtomicUsize,
    }

    impl CardGenerator for CountingGenerator {
        fn generate(&self, _prompt: &str, _image: Option<&ImageRef>) -> Result<String, ExemplarError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(self.reply.clone())
        }
    }

    #[test]
    fn thumbnail_description_is_first_sentence() {
        let generator =
            CountingGenerator { reply: "A chef holds pasta. Extra.".into(), calls: AtomicUsize::new(0) };
        let describer = ThumbnailDescriber::new(&generator);
        let text = describer.describe(&ImageRef("uri-1".into())).unwrap();
        assert_eq!(text, "A chef holds pasta.");
    }

    #[test]
    fn thumbnail_description_cached_by_uri() {
        let generator =
            CountingGenerator { reply: "One sentence.".into(), calls: AtomicUsize::new(0) };
        let describer = ThumbnailDescriber::new(&generator);
        describer.describe(&ImageRef("uri-1".into())).unwrap();
        describer.describe(&ImageRef("uri-1".into())).unwrap();
        assert_eq!(generator.calls.load(Ordering::SeqCst), 1);
        describer.describe(&ImageRef("uri-2".into())).unwrap();
        assert_eq!(generator.calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn thumbnail_description_empty_reply_fails() {
        let generator = CountingGenerator { reply: "  ".into(), calls: AtomicUsize::new(0) };
        let describer = ThumbnailDescriber::new(&generator);
        assert!(matches!(
            describer.describe(&ImageRef("uri-1".into())),
            Err(ExemplarError::GenerationFailed(_))
        ));
    }

    #[test]
    fn explanation_prompt_carries_label_and_cap() {
        // Echo generator: the output is the prompt itself, so we can inspect
        // what was sent.
        let echo = |prompt: &str, _image: Option<&ImageRef>| Ok(prompt.to_string());
        let long_description: String =
            (0..250).map(|i| format!("word{i}")).collect::<Vec<_>>().join(" ");
        let out = generate_explanation(
            "A thumbnail.",
            Label::Misleading,
            &long_description,
            "short subs",
            &echo,
        )
        .unwrap();
        assert!(out.contains("Misleading"));
        assert!(out.contains("word199"));
        assert!(!out.contains("word200"), "251st word leaked through the cap");
    }

    #[test]
    fn explanation_provider_failure_propagates() {
        let failing = |_: &str, _: Option<&ImageRef>| {
            Err(ExemplarError::ProviderUnavailable("down".into()))
        };
        assert!(matches!(
            generate_explanation("t", Label::Misleading, "d", "s", &failing),
            Err(ExemplarError::ProviderUnavailable(_))
        ));
    }

    #[test]
    fn build_card_applies_word_cap() {
        let mut e = entry("v1", Label::Misleading, vec![1.0, 0.0]);
        e.subtitles_text = (0..300).map(|i| format!("s{i}")).collect::<Vec<_>>().join(" ");
        let card = build_card(&e).unwrap();
        assert_eq!(card.subtitles_excerpt.split_whitespace().count(), 200);
        assert_eq!(card.description_excerpt, e.description_text);
        assert_eq!(card.categorization, Label::Misleading);
        assert_eq!(card.categorization.display_name(), "Misleading");
    }

    #[test]
    fn build_card_short_texts_pass_through() {
        let e = entry("v1", Label::NotMisleading, vec![1.0, 0.0]);
        let card = build_card(&e).unwrap();
        assert_eq!(card.subtitles_excerpt, e.subtitles_text);
        assert_eq!(card.categorization.display_name(), "Not Misleading");
    }

    #[test]
    fn build_card_rejects_incomplete_entry() {
        let mut e = entry("v1", Label::Misleading, vec![1.0, 0.0]);
        e.explanation = String::new();
        assert!(matches!(build_card(&e), Err(ExemplarError::IncompleteEntry { .. })));
    }

    #[test]
    fn index_save_load_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        let mut index = ExemplarIndex::new("hash-3gram-256", 3);
        let embedder = HashEmbedder::new(3);
        for (i, label) in
            [Label::Misleading, Label::NotMisleading, Label::Misleading].iter().enumerate()
        {
            let text = format!("entry number {i} with some text");
            let vector = embedder.embed(&text).unwrap();
            let mut e = entry(&format!("v{i}"), *label, vec![0.0; 3]);
            e.vector = vector;
            index.insert(e).unwrap();
        }
        index.save(&path).unwrap();
        let loaded = ExemplarIndex::load(&path).unwrap();
        assert_eq!(index, loaded);
        for (a, b) in index.entries().iter().zip(loaded.entries()) {
            for (x, y) in a.vector.values().iter().zip(b.vector.values()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn index_rejects_duplicates_and_wrong_dimension() {
        let mut index = ExemplarIndex::new("test", 2);
        index.insert(entry("v1", Label::Misleading, vec![1.0, 0.0])).unwrap();
        assert!(matches!(
            index.insert(entry("v1", Label::Misleading, vec![0.0, 1.0])),
            Err(ExemplarError::DuplicateEntry(_))
        ));
        assert!(matches!(
            index.insert(entry("v2", Label::Misleading, vec![1.0])),
            Err(ExemplarError::DimensionMismatch { .. })
        ));
    }

    /// Brute-force oracle used by the property test below: an independent
    /// pass over all entries.
    fn oracle_nearest<'a>(
        index: &'a ExemplarIndex,
        query_id: &str,
        query: &EmbeddingVector,
        label: Label,
    ) -> Option<&'a ExemplarEntry> {
        let mut best: Option<(f64, &ExemplarEntry)> = None;
        for e in index.entries() {
            if e.video_id == query_id || e.label != label {
                continue;
            }
            let sim = cosine_similarity(query, &e.vector).unwrap();
            best = match best {
                None => Some((sim, e)),
                Some((bs, be)) => {
                    if sim > bs || (sim == bs && e.video_id < be.video_id) {
                        Some((sim, e))
                    } else {
                        Some((bs, be))
                    }
                }
            };
        }
        best.map(|(_, e)| e)
    }

    #[test]
    fn nearest_matches_oracle_on_random_corpora() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..25 {
            let dim = rng.gen_range(2..32);
            let count = rng.gen_range(4..80);
            let mut index = ExemplarIndex::new("rand", dim);
            for i in 0..count {
                let label =
                    if rng.gen_bool(0.5) { Label::Misleading } else { Label::NotMisleading };
                let values: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                index.insert(entry(&format!("v{i:03}"), label, values)).unwrap();
            }
            let query =
                EmbeddingVector::new((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
                    .unwrap();
            let result = index.nearest_per_class("v000", &query);
            let om = oracle_nearest(&index, "v000", &query, Label::Misleading);
            let on = oracle_nearest(&index, "v000", &query, Label::NotMisleading);
            match (result, om, on) {
                (Ok((m, n)), Some(em), Some(en)) => {
                    assert_eq!(m.video_id, em.video_id);
                    assert_eq!(n.video_id, en.video_id);
                    assert_ne!(m.video_id, "v000");
                    assert_ne!(n.video_id, "v000");
                    assert_ne!(m.label, n.label);
                }
                (Err(ExemplarError::ClassExhausted(_)), om, on) => {
                    assert!(om.is_none() || on.is_none());
                }
                (result, om, on) => panic!("mismatch: {result:?} vs ({om:?}, {on:?})"),
            }
        }
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_scale_invariant(
            a in proptest::collection::vec(-100f32..100.0, 4),
            b in proptest::collection::vec(-100f32..100.0, 4),
            scale in 0.01f64..100.0
        ) {
            let va = EmbeddingVector::new(a.clone()).unwrap();
            let vb = EmbeddingVector::new(b).unwrap();
            let ab = cosine_similarity(&va, &vb).unwrap();
            let ba = cosine_similarity(&vb, &va).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&ab));
            let scaled = EmbeddingVector::new(
                a.iter().map(|x| (f64::from(*x) * scale) as f32).collect()
            ).unwrap();
            let s = cosine_similarity(&scaled, &vb).unwrap();
            prop_assert!((ab - s).abs() < 1e-5);
        }
    }
}
