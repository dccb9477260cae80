//! Manifest ingestion and corpus-level utilities.
//!
//! The manifest is a UTF-8, line-delimited file: one JSON record per line
//! with the fields of [`VideoRecord`]. Ingestion validates the schema,
//! rejects duplicate ids, and constructs the thumbnail URL when the manifest
//! omits it. The module also hosts the small text/locale helpers used across
//! the pipeline (word truncation, language-code merging) and Cohen's kappa
//! for annotator agreement.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Ground-truth class of a thumbnail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Misleading,
    NotMisleading,
}

impl Label {
    /// Human-readable form used in prompts and rendered cards.
    pub fn display_name(self) -> &'static str {
        match self {
            Label::Misleading => "Misleading",
            Label::NotMisleading => "Not Misleading",
        }
    }

    pub fn opposite(self) -> Label {
        match self {
            Label::Misleading => Label::NotMisleading,
            Label::NotMisleading => Label::Misleading,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

/// Whether the platform reported subtitles for the video.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubtitleStatus {
    Present,
    Absent,
}

/// References to the media artifacts backing one video.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MediaRefs {
    pub thumbnail_uri: String,
    pub subtitle_path: Option<PathBuf>,
    pub video_path: Option<PathBuf>,
    /// Base key for the description cache; composed with the provider id and
    /// prompt hash when a description is stored.
    pub description_cache_key: String,
}

/// One validated manifest row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub video_id: String,
    pub country: String,
    pub category: String,
    pub label: Label,
    pub duration_seconds: f64,
    pub default_audio_language: Option<String>,
    pub subtitle_status: SubtitleStatus,
    pub view_count: Option<u64>,
    pub media: MediaRefs,
}

/// One line of a two-annotator agreement file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationPair {
    pub video_id: String,
    pub annotator_a: Label,
    pub annotator_b: Label,
}

/// A single invalid manifest line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ManifestViolation {
    Schema {
        line: usize,
        field: String,
        message: String,
    },
    DuplicateId {
        line: usize,
        video_id: String,
    },
}

impl fmt::Display for ManifestViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ManifestViolation::Schema { line, field, message } => {
                write!(f, "line {line}: field `{field}`: {message}")
            }
            ManifestViolation::DuplicateId { line, video_id } => {
                write!(f, "line {line}: duplicate video_id \"{video_id}\"")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("invalid manifest ({} violation(s)):\n{}", .0.len(), format_violations(.0))]
    InvalidManifest(Vec<ManifestViolation>),
    #[error("video id is empty")]
    EmptyId,
    #[error("no annotation pairs")]
    EmptyInput,
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn format_violations(violations: &[ManifestViolation]) -> String {
    violations
        .iter()
        .map(|v| format!("  {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Flat on-disk schema for one manifest line.
#[derive(Debug, Serialize, Deserialize)]
struct ManifestRow {
    video_id: String,
    country: String,
    category: String,
    label: Label,
    duration_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    default_audio_language: Option<String>,
    subtitle_status: SubtitleStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    view_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    thumbnail_uri: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    subtitle_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    video_path: Option<PathBuf>,
}

impl ManifestRow {
    fn from_record(record: &VideoRecord) -> Self {
        ManifestRow {
            video_id: record.video_id.clone(),
            country: record.country.clone(),
            category: record.category.clone(),
            label: record.label,
            duration_seconds: record.duration_seconds,
            default_audio_language: record.default_audio_language.clone(),
            subtitle_status: record.subtitle_status,
            view_count: record.view_count,
            thumbnail_uri: Some(record.media.thumbnail_uri.clone()),
            subtitle_path: record.media.subtitle_path.clone(),
            video_path: record.media.video_path.clone(),
        }
    }

    fn into_record(self) -> Result<VideoRecord, (String, String)> {
        if self.video_id.is_empty() {
            return Err(("video_id".into(), "must be non-empty".into()));
        }
        if !self.duration_seconds.is_finite() || self.duration_seconds < 0.0 {
            return Err((
                "duration_seconds".into(),
                format!("must be a non-negative number, got {}", self.duration_seconds),
            ));
        }
        let thumbnail_uri = match self.thumbnail_uri.filter(|u| !u.is_empty()) {
            Some(uri) => uri,
            None => thumbnail_url(&self.video_id).expect("video_id checked non-empty"),
        };
        Ok(VideoRecord {
            media: MediaRefs {
                thumbnail_uri,
                subtitle_path: self.subtitle_path,
                video_path: self.video_path,
                description_cache_key: self.video_id.clone(),
            },
            video_id: self.video_id,
            country: self.country,
            category: self.category,
            label: self.label,
            duration_seconds: self.duration_seconds,
            default_audio_language: self.default_audio_language,
            subtitle_status: self.subtitle_status,
            view_count: self.view_count,
        })
    }
}

/// Load and validate a manifest. All offending lines are reported at once.
pub fn ingest_manifest(path: &Path) -> Result<Vec<VideoRecord>, CorpusError> {
    let text = read_text(path)?;
    let mut records = Vec::new();
    let mut violations = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut de = serde_json::Deserializer::from_str(line);
        let row: ManifestRow = match serde_path_to_error::deserialize(&mut de) {
            Ok(row) => row,
            Err(err) => {
                violations.push(ManifestViolation::Schema {
                    line: line_no,
                    field: violation_field(&err),
                    message: err.inner().to_string(),
                });
                continue;
            }
        };
        match row.into_record() {
            Ok(record) => {
                if !seen.insert(record.video_id.clone()) {
                    violations.push(ManifestViolation::DuplicateId {
                        line: line_no,
                        video_id: record.video_id.clone(),
                    });
                } else {
                    records.push(record);
                }
            }
            Err((field, message)) => {
                violations.push(ManifestViolation::Schema { line: line_no, field, message });
            }
        }
    }

    if violations.is_empty() {
        Ok(records)
    } else {
        Err(CorpusError::InvalidManifest(violations))
    }
}

/// Load a two-annotator agreement file (same line-delimited JSON layout).
pub fn ingest_annotations(path: &Path) -> Result<Vec<AnnotationPair>, CorpusError> {
    let text = read_text(path)?;
    let mut pairs = Vec::new();
    let mut violations = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut de = serde_json::Deserializer::from_str(line);
        match serde_path_to_error::deserialize(&mut de) {
            Ok(pair) => pairs.push(pair),
            Err(err) => violations.push(ManifestViolation::Schema {
                line: idx + 1,
                field: violation_field(&err),
                message: err.inner().to_string(),
            }),
        }
    }
    if violations.is_empty() {
        Ok(pairs)
    } else {
        Err(CorpusError::InvalidManifest(violations))
    }
}

fn read_text(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|err| {
        if err.kind() == std::io::ErrorKind::NotFound {
            CorpusError::FileNotFound(path.to_path_buf())
        } else {
            CorpusError::Io { path: path.to_path_buf(), source: err }
        }
    })
}

fn violation_field(err: &serde_path_to_error::Error<serde_json::Error>) -> String {
    let path = err.path().to_string();
    if path != "." {
        return path;
    }
    // Missing-field errors surface at the root; pull the name out of the
    // message ("missing field `label`").
    let message = err.inner().to_string();
    if let Some(rest) = message.strip_prefix("missing field `") {
        if let Some(end) = rest.find('`') {
            return rest[..end].to_string();
        }
    }
    "record".to_string()
}

/// Serialize one record back to its manifest line.
pub fn manifest_line(record: &VideoRecord) -> String {
    serde_json::to_string(&ManifestRow::from_record(record))
        .expect("manifest row serialization cannot fail")
}

/// Write records as a line-delimited manifest.
pub fn write_manifest(path: &Path, records: &[VideoRecord]) -> Result<(), CorpusError> {
    let mut out = String::new();
    for record in records {
        out.push_str(&manifest_line(record));
        out.push('\n');
    }
    fs::write(path, out).map_err(|err| CorpusError::Io { path: path.to_path_buf(), source: err })
}

/// Default high-quality thumbnail URL for a video id.
pub fn thumbnail_url(video_id: &str) -> Result<String, CorpusError> {
    if video_id.is_empty() {
        return Err(CorpusError::EmptyId);
    }
    Ok(format!("https://img.youtube.com/vi/{video_id}/hqdefault.jpg"))
}

/// First `cap` whitespace-separated words, joined by single spaces.
///
/// A word is a maximal run of non-whitespace characters. Empty input yields
/// an empty string.
pub fn truncate_words(text: &str, cap: usize) -> String {
    text.split_whitespace().take(cap).collect::<Vec<_>>().join(" ")
}

/// A canonical language name plus the code prefixes merged into it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LanguageFamily {
    pub name: String,
    pub prefixes: Vec<String>,
}

/// Configured language-code merge table.
///
/// Matching is a case-insensitive prefix merge on code segments: `en`,
/// `en-US`, and `en-GB` all collapse to the family named for prefix `en`.
/// Unconfigured codes pass through unchanged; a missing code is `Unknown`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LanguageFamilies {
    pub families: Vec<LanguageFamily>,
}

impl Default for LanguageFamilies {
    fn default() -> Self {
        LanguageFamilies {
            families: vec![
                LanguageFamily { name: "English".into(), prefixes: vec!["en".into()] },
                LanguageFamily { name: "Spanish".into(), prefixes: vec!["es".into()] },
                LanguageFamily {
                    name: "zxx (No linguistic content)".into(),
                    prefixes: vec!["zxx".into()],
                },
            ],
        }
    }
}

impl LanguageFamilies {
    pub fn normalize(&self, code: Option<&str>) -> String {
        let code = match code {
            Some(c) if !c.trim().is_empty() => c.trim(),
            _ => return "Unknown".to_string(),
        };
        let lower = code.to_ascii_lowercase();
        for family in &self.families {
            for prefix in &family.prefixes {
                let prefix = prefix.to_ascii_lowercase();
                if lower == prefix || lower.starts_with(&format!("{prefix}-")) {
                    return family.name.clone();
                }
            }
        }
        code.to_string()
    }
}

/// Merge a language code under the default family table.
pub fn normalize_language(code: &str) -> String {
    LanguageFamilies::default().normalize(Some(code))
}

/// Cohen's kappa over paired annotations.
///
/// Returns `(p_o - p_e) / (1 - p_e)`; when both annotators are constant and
/// identical (`p_e = 1`), agreement is total and kappa is 1.
pub fn cohens_kappa(pairs: &[AnnotationPair]) -> Result<f64, CorpusError> {
    if pairs.is_empty() {
        return Err(CorpusError::EmptyInput);
    }
    let n = pairs.len() as f64;
    let mut agree = 0usize;
    let mut a_misleading = 0usize;
    let mut b_misleading = 0usize;
    for pair in pairs {
        if pair.annotator_a == pair.annotator_b {
            agree += 1;
        }
        if pair.annotator_a == Label::Misleading {
            a_misleading += 1;
        }
        if pair.annotator_b == Label::Misleading {
            b_misleading += 1;
        }
    }
    let p_o = agree as f64 / n;
    let a_m = a_misleading as f64 / n;
    let b_m = b_misleading as f64 / n;
    let p_e = a_m * b_m + (1.0 - a_m) * (1.0 - b_m);
    if (1.0 - p_e).abs() < 1e-12 {
        return Ok(1.0);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Grouping axis for per-group analyses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKey {
    Country,
    Category,
    Language,
}

impl std::str::FromStr for GroupKey {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "country" => Ok(GroupKey::Country),
            "category" => Ok(GroupKey::Category),
            "language" => Ok(GroupKey::Language),
            other => Err(format!("unknown group key: {other}")),
        }
    }
}

/// Partition records by the chosen key. The `Language` key merges codes
/// through the provided family table first.
pub fn split_groups_with<'a>(
    records: &'a [VideoRecord],
    key: GroupKey,
    families: &LanguageFamilies,
) -> BTreeMap<String, Vec<&'a VideoRecord>> {
    let mut groups: BTreeMap<String, Vec<&VideoRecord>> = BTreeMap::new();
    for record in records {
        let group = match key {
            GroupKey::Country => record.country.clone(),
            GroupKey::Category => record.category.clone(),
            GroupKey::Language => families.normalize(record.default_audio_language.as_deref()),
        };
        groups.entry(group).or_default().push(record);
    }
    groups
}

/// [`split_groups_with`] under the default language families.
pub fn split_groups<'a>(
    records: &'a [VideoRecord],
    key: GroupKey,
) -> BTreeMap<String, Vec<&'a VideoRecord>> {
    split_groups_with(records, key, &LanguageFamilies::default())
}

/// Truth lookup used throughout evaluation.
pub fn truth_map(records: &[VideoRecord]) -> HashMap<String, Label> {
    records.iter().map(|r| (r.video_id.clone(), r.label)).collect()
}
