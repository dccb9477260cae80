//! Per-video evidence preparation: duration clipping, frame timestamps,
//! description-generation requests, subtitle retrieval, and bundle assembly
//! under ablation masks.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{normalize_language, SubtitleStatus, VideoRecord};
use crate::hashing;

/// Videos longer than this (seconds) are clipped.
pub const CLIP_THRESHOLD_SECONDS: f64 = 1800.0;
/// Clipped length: 29 minutes 55 seconds.
pub const CLIPPED_SECONDS: f64 = 1795.0;
/// Number of evenly spaced frames sampled from a video.
pub const FRAME_COUNT: usize = 20;

/// Prompt sent to backends that accept full video input.
pub fn full_video_prompt() -> &'static str {
    include_str!("../templates/describe_full_video.txt").trim_end()
}

/// Prompt sent to backends that accept a set of still frames.
pub fn frame_set_prompt() -> &'static str {
    include_str!("../templates/describe_frame_set.txt").trim_end()
}

/// Reference to an image attachment (thumbnail URI or local path).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageRef(pub String);

impl fmt::Display for ImageRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Which text modalities are included in the classifier input.
///
/// The four combinations correspond to the named configurations `Full`
/// (everything), `ABL-NS` (no subtitles), `ABL-ND` (no description), and
/// `ABL-NDS` (thumbnail only).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AblationMask {
    pub include_description: bool,
    pub include_subtitles: bool,
}

impl AblationMask {
    pub const FULL: AblationMask =
        AblationMask { include_description: true, include_subtitles: true };
    pub const NO_SUBTITLES: AblationMask =
        AblationMask { include_description: true, include_subtitles: false };
    pub const NO_DESCRIPTION: AblationMask =
        AblationMask { include_description: false, include_subtitles: true };
    pub const THUMBNAIL_ONLY: AblationMask =
        AblationMask { include_description: false, include_subtitles: false };

    /// All masks in the ablation-table column order (NDS, ND, NS, Full).
    pub fn all() -> [AblationMask; 4] {
        [Self::THUMBNAIL_ONLY, Self::NO_DESCRIPTION, Self::NO_SUBTITLES, Self::FULL]
    }

    /// Stable lowercase name used in file names and CLI flags.
    pub fn name(self) -> &'static str {
        match (self.include_description, self.include_subtitles) {
            (true, true) => "full",
            (true, false) => "abl-ns",
            (false, true) => "abl-nd",
            (false, false) => "abl-nds",
        }
    }

    /// Uppercase label used in rendered tables.
    pub fn table_label(self) -> &'static str {
        match (self.include_description, self.include_subtitles) {
            (true, true) => "Full",
            (true, false) => "ABL-NS",
            (false, true) => "ABL-ND",
            (false, false) => "ABL-NDS",
        }
    }
}

impl std::str::FromStr for AblationMask {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(Self::FULL),
            "abl-ns" | "ns" => Ok(Self::NO_SUBTITLES),
            "abl-nd" | "nd" => Ok(Self::NO_DESCRIPTION),
            "abl-nds" | "nds" => Ok(Self::THUMBNAIL_ONLY),
            other => Err(format!("unknown ablation mask: {other} (expected full|abl-ns|abl-nd|abl-nds)")),
        }
    }
}

impl fmt::Display for AblationMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The classifier input for one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceBundle {
    pub video_id: String,
    pub thumbnail: ImageRef,
    pub subtitles: String,
    pub description: String,
    pub ablation: AblationMask,
}

/// How a description backend consumes video content.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescriptionKind {
    FullVideo,
    FrameSet,
}

/// Media payload of a description request.
#[derive(Debug, Clone, PartialEq)]
pub enum DescriptionMedia {
    FullVideo { video_path: PathBuf },
    FrameSet { timestamps: Vec<f64> },
}

/// A fully specified request for generating a video description.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptionRequest {
    pub video_id: String,
    pub media: DescriptionMedia,
    pub prompt_text: String,
}

#[derive(Debug, Error)]
pub enum EvidenceError {
    #[error("duration must be non-negative, got {0}")]
    NegativeDuration(f64),
    #[error("duration must be positive, got {0}")]
    NonPositiveDuration(f64),
    #[error("video {video_id}: missing {what}")]
    MissingMedia { video_id: String, what: String },
    #[error("video {video_id}: missing thumbnail reference")]
    MissingThumbnail { video_id: String },
    #[error("transcript source unavailable: {0}")]
    SourceUnavailable(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl EvidenceError {
    /// Transport-class failures worth retrying.
    pub fn is_retryable(&self) -> bool {
        matches!(self, EvidenceError::SourceUnavailable(_))
    }
}

/// Analysis length for a video: untouched up to 30 minutes, otherwise capped
/// at 29 minutes 55 seconds.
pub fn clip_duration(duration_seconds: f64) -> Result<f64, EvidenceError> {
    if !duration_seconds.is_finite() || duration_seconds < 0.0 {
        return Err(EvidenceError::NegativeDuration(duration_seconds));
    }
    if duration_seconds <= CLIP_THRESHOLD_SECONDS {
        Ok(duration_seconds)
    } else {
        Ok(CLIPPED_SECONDS)
    }
}

/// Twenty midpoint-sampled timestamps: `(i + 0.5) * D / 20` over the clipped
/// duration `D`. Always strictly increasing and inside `(0, D)`.
pub fn frame_timestamps(duration_seconds: f64) -> Result<Vec<f64>, EvidenceError> {
    if !duration_seconds.is_finite() || duration_seconds <= 0.0 {
        return Err(EvidenceError::NonPositiveDuration(duration_seconds));
    }
    let clipped = clip_duration(duration_seconds)?;
    Ok((0..FRAME_COUNT).map(|i| (i as f64 + 0.5) * clipped / FRAME_COUNT as f64).collect())
}

/// Build the description request for a record under the given input kind.
pub fn build_description_request(
    record: &VideoRecord,
    kind: DescriptionKind,
) -> Result<DescriptionRequest, EvidenceError> {
    match kind {
        DescriptionKind::FullVideo => {
            let video_path = record.media.video_path.clone().ok_or_else(|| {
                EvidenceError::MissingMedia {
                    video_id: record.video_id.clone(),
                    what: "video path for full-video description".into(),
                }
            })?;
            Ok(DescriptionRequest {
                video_id: record.video_id.clone(),
                media: DescriptionMedia::FullVideo { video_path },
                prompt_text: full_video_prompt().to_string(),
            })
        }
        DescriptionKind::FrameSet => {
            let timestamps = frame_timestamps(record.duration_seconds).map_err(|_| {
                EvidenceError::MissingMedia {
                    video_id: record.video_id.clone(),
                    what: "positive duration for frame sampling".into(),
                }
            })?;
            Ok(DescriptionRequest {
                video_id: record.video_id.clone(),
                media: DescriptionMedia::FrameSet { timestamps },
                prompt_text: frame_set_prompt().to_string(),
            })
        }
    }
}

/// A transcript as returned by a transcript source.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub text: String,
    /// Language code as reported by the source (e.g. `en`, `es-419`).
    pub language: String,
}

/// Narrow interface over transcript retrieval so HTTP implementations and
/// test doubles are interchangeable.
pub trait TranscriptSource: Send + Sync {
    fn get_transcript(&self, video_id: &str) -> Result<Transcript, EvidenceError>;
}

/// Narrow interface over machine translation.
pub trait Translator: Send + Sync {
    fn translate(&self, text: &str, from: &str, to: &str) -> Result<String, EvidenceError>;
}

/// Translator that returns its input unchanged.
pub struct IdentityTranslator;

impl Translator for IdentityTranslator {
    fn translate(&self, text: &str, _from: &str, _to: &str) -> Result<String, EvidenceError> {
        Ok(text.to_string())
    }
}

/// In-memory transcript table keyed by video id.
#[derive(Default)]
pub struct StaticTranscripts {
    transcripts: HashMap<String, Transcript>,
}

impl StaticTranscripts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, video_id: &str, text: &str, language: &str) {
        self.transcripts.insert(
            video_id.to_string(),
            Transcript { text: text.to_string(), language: language.to_string() },
        );
    }
}

impl TranscriptSource for StaticTranscripts {
    fn get_transcript(&self, video_id: &str) -> Result<Transcript, EvidenceError> {
        self.transcripts.get(video_id).cloned().ok_or_else(|| {
            EvidenceError::SourceUnavailable(format!("no transcript for {video_id}"))
        })
    }
}

/// Transcript source backed by the manifest's `subtitle_path` files.
///
/// Files are assumed to already be in English (the dataset preparation
/// translates them before they land on disk).
pub struct FileTranscriptSource {
    paths: HashMap<String, PathBuf>,
}

impl FileTranscriptSource {
    pub fn from_records(records: &[VideoRecord]) -> Self {
        let paths = records
            .iter()
            .filter_map(|r| {
                r.media.subtitle_path.as_ref().map(|p| (r.video_id.clone(), p.clone()))
            })
            .collect();
        FileTranscriptSource { paths }
    }
}

impl TranscriptSource for FileTranscriptSource {
    fn get_transcript(&self, video_id: &str) -> Result<Transcript, EvidenceError> {
        let path = self
            .paths
            .get(video_id)
            .ok_or_else(|| EvidenceError::SourceUnavailable(format!("no subtitle file for {video_id}")))?;
        let text = fs::read_to_string(path)
            .map_err(|source| EvidenceError::Io { path: path.clone(), source })?;
        Ok(Transcript { text, language: "en".to_string() })
    }
}

/// Retrieve subtitles for a record, translating to English when needed.
///
/// Records marked subtitle-absent yield an empty string without touching the
/// source.
pub fn fetch_subtitles(
    record: &VideoRecord,
    source: &dyn TranscriptSource,
    translator: &dyn Translator,
) -> Result<String, EvidenceError> {
    if record.subtitle_status == SubtitleStatus::Absent {
        return Ok(String::new());
    }
    let transcript = source.get_transcript(&record.video_id)?;
    if normalize_language(&transcript.language) == "English" {
        Ok(transcript.text)
    } else {
        translator.translate(&transcript.text, &transcript.language, "en")
    }
}

/// Combine the prepared evidence into the classifier input, blanking the
/// modalities the mask suppresses.
pub fn assemble_bundle(
    record: &VideoRecord,
    subtitles: &str,
    description: &str,
    mask: AblationMask,
) -> Result<EvidenceBundle, EvidenceError> {
    if record.media.thumbnail_uri.is_empty() {
        return Err(EvidenceError::MissingThumbnail { video_id: record.video_id.clone() });
    }
    Ok(EvidenceBundle {
        video_id: record.video_id.clone(),
        thumbnail: ImageRef(record.media.thumbnail_uri.clone()),
        subtitles: if mask.include_subtitles { subtitles.to_string() } else { String::new() },
        description: if mask.include_description { description.to_string() } else { String::new() },
        ablation: mask,
    })
}

/// File-backed description cache: one UTF-8 text file per cache key.
///
/// Keys combine the video id, the describing provider's id, and the prompt
/// hash, so re-running with a different prompt or provider never reuses stale
/// text. Writes go through a temp file and rename, so readers only ever see
/// complete entries.
pub struct DescriptionCache {
    dir: PathBuf,
}

impl DescriptionCache {
    pub fn open(dir: &Path) -> Result<Self, EvidenceError> {
        fs::create_dir_all(dir)
            .map_err(|source| EvidenceError::Io { path: dir.to_path_buf(), source })?;
        Ok(DescriptionCache { dir: dir.to_path_buf() })
    }

    fn file_for(&self, video_id: &str, provider_id: &str, prompt_text: &str) -> PathBuf {
        let digest = hashing::sha256_hex_parts([video_id, provider_id, prompt_text]);
        let sanitized: String = video_id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        self.dir.join(format!("{sanitized}__{}.txt", hashing::short(&digest, 16)))
    }

    pub fn get(&self, video_id: &str, provider_id: &str, prompt_text: &str) -> Option<String> {
        fs::read_to_string(self.file_for(video_id, provider_id, prompt_text)).ok()
    }

    pub fn put(
        &self,
        video_id: &str,
        provider_id: &str,
        prompt_text: &str,
        description: &str,
    ) -> Result<(), EvidenceError> {
        let target = self.file_for(video_id, provider_id, prompt_text);
        let tmp = target.with_extension("txt.tmp");
        fs::write(&tmp, description)
            .map_err(|source| EvidenceError::Io { path: tmp.clone(), source })?;
        fs::rename(&tmp, &target)
            .map_err(|source| EvidenceError::Io { path: target.clone(), source })?;
        Ok(())
    }
}
