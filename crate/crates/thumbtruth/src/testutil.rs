//! Shared builders for unit tests.

use crate::corpus::{Label, MediaRefs, SubtitleStatus, VideoRecord};

pub(crate) fn record(video_id: &str, label: Label) -> VideoRecord {
    VideoRecord {
        video_id: video_id.to_string(),
        country: "USA".to_string(),
        category: "Entertainment".to_string(),
        label,
        duration_seconds: 600.0,
        default_audio_language: Some("en".to_string()),
        subtitle_status: SubtitleStatus::Present,
        view_count: Some(1000),
        media: MediaRefs {
            thumbnail_uri: format!("https://img.youtube.com/vi/{video_id}/hqdefault.jpg"),
            subtitle_path: None,
            video_path: None,
            description_cache_key: video_id.to_string(),
        },
    }
}
