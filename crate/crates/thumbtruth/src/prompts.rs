//! Prompt document rendering for the three strategies.
//!
//! The zero-shot template ships as a golden file in `templates/`; few-shot
//! strategies splice example blocks in front of the query inputs. Exemplar
//! thumbnails are represented only by their one-sentence textual
//! descriptions; the sole image attachment in every document is the query
//! thumbnail, placed after all text.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Label;
use crate::evidence::{EvidenceBundle, ImageRef};
use crate::exemplars::ExemplarCard;
use crate::hashing;

/// Golden zero-shot template, with `{video_description}` and
/// `{video_subtitles}` substitution slots.
pub const ZERO_SHOT_TEMPLATE: &str = include_str!("../templates/zero_shot.txt");

/// The two fixed examples, misleading first.
pub const FIXED_EXAMPLES: &str = include_str!("../templates/fixed_examples.txt");

/// Prompting strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptStrategy {
    ZeroShot,
    FixedFewShot,
    DynamicFewShot,
}

impl PromptStrategy {
    /// Stable name used in file names and CLI flags.
    pub fn name(self) -> &'static str {
        match self {
            PromptStrategy::ZeroShot => "zero-shot",
            PromptStrategy::FixedFewShot => "fixed-few-shot",
            PromptStrategy::DynamicFewShot => "dynamic-few-shot",
        }
    }
}

impl fmt::Display for PromptStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PromptStrategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "zero" | "zero-shot" => Ok(PromptStrategy::ZeroShot),
            "fixed" | "fixed-few-shot" => Ok(PromptStrategy::FixedFewShot),
            "dynamic" | "dynamic-few-shot" => Ok(PromptStrategy::DynamicFewShot),
            other => Err(format!("unknown strategy: {other} (expected zero|fixed|dynamic)")),
        }
    }
}

/// One ordered piece of a prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptPart {
    Text(String),
    Image(ImageRef),
}

/// A rendered prompt: ordered parts, exemplar provenance, and a SHA-256
/// checksum of the concatenated text parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptDocument {
    pub strategy: PromptStrategy,
    pub parts: Vec<PromptPart>,
    pub exemplar_ids: Vec<String>,
    pub checksum: String,
}

impl PromptDocument {
    fn assemble(
        strategy: PromptStrategy,
        text: String,
        thumbnail: &ImageRef,
        exemplar_ids: Vec<String>,
    ) -> Self {
        let checksum = hashing::sha256_hex(text.as_bytes());
        PromptDocument {
            strategy,
            parts: vec![PromptPart::Text(text), PromptPart::Image(thumbnail.clone())],
            exemplar_ids,
            checksum,
        }
    }

    /// All text parts concatenated in order.
    pub fn text(&self) -> String {
        self.parts
            .iter()
            .filter_map(|p| match p {
                PromptPart::Text(t) => Some(t.as_str()),
                PromptPart::Image(_) => None,
            })
            .collect()
    }

    /// The single image attachment (the query thumbnail).
    pub fn image(&self) -> Option<&ImageRef> {
        self.parts.iter().find_map(|p| match p {
            PromptPart::Image(img) => Some(img),
            PromptPart::Text(_) => None,
        })
    }
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("dynamic few-shot requires one card per class, got two {0} cards")]
    MismatchedCards(Label),
}

fn substitute(template: &str, bundle: &EvidenceBundle) -> String {
    template
        .replace("{video_description}", &bundle.description)
        .replace("{video_subtitles}", &bundle.subtitles)
}

/// Splice an examples block in front of the query-inputs section of the raw
/// template, then fill the substitution slots.
fn with_examples(examples_block: &str, bundle: &EvidenceBundle) -> String {
    let anchor = ZERO_SHOT_TEMPLATE
        .find("Inputs:")
        .expect("zero-shot template has an Inputs section");
    let mut text = String::with_capacity(ZERO_SHOT_TEMPLATE.len() + examples_block.len() + 1);
    text.push_str(&ZERO_SHOT_TEMPLATE[..anchor]);
    text.push_str(examples_block);
    text.push('\n');
    text.push_str(&ZERO_SHOT_TEMPLATE[anchor..]);
    substitute(&text, bundle)
}

/// Render the zero-shot document: the template with the bundle's description
/// and subtitles substituted (empty when ablated) and the thumbnail attached.
pub fn render_zero_shot(bundle: &EvidenceBundle) -> PromptDocument {
    let text = substitute(ZERO_SHOT_TEMPLATE, bundle);
    PromptDocument::assemble(PromptStrategy::ZeroShot, text, &bundle.thumbnail, Vec::new())
}

/// Render the fixed few-shot document: the zero-shot template with the two
/// fixed examples (misleading first) inserted before the query inputs.
pub fn render_fixed_few_shot(bundle: &EvidenceBundle) -> PromptDocument {
    let text = with_examples(FIXED_EXAMPLES, bundle);
    PromptDocument::assemble(PromptStrategy::FixedFewShot, text, &bundle.thumbnail, Vec::new())
}

/// Render one exemplar card in the standardized block format.
fn render_card(card: &ExemplarCard, index: usize) -> String {
    format!(
        "Example {index}:\n\
         Thumbnail: {}\n\
         Subtitles: {}\n\
         Video Description: {}\n\
         Categorization: {}\n\
         Explanation: {}\n",
        card.thumbnail_description,
        card.subtitles_excerpt,
        card.description_excerpt,
        card.categorization.display_name(),
        card.explanation,
    )
}

/// Render the dynamic few-shot document from a retrieved card pair.
///
/// Cards must carry opposite categorizations; the misleading card renders
/// first. The retrieved video ids are recorded on the document.
pub fn render_dynamic_few_shot(
    bundle: &EvidenceBundle,
    cards: (&ExemplarCard, &ExemplarCard),
) -> Result<PromptDocument, PromptError> {
    let (a, b) = cards;
    if a.categorization == b.categorization {
        return Err(PromptError::MismatchedCards(a.categorization));
    }
    let (misleading, not_misleading) =
        if a.categorization == Label::Misleading { (a, b) } else { (b, a) };
    let block = format!("{}\n{}", render_card(misleading, 1), render_card(not_misleading, 2));
    let text = with_examples(&block, bundle);
    let exemplar_ids =
        vec![misleading.source_video_id.clone(), not_misleading.source_video_id.clone()];
    Ok(PromptDocument::assemble(
        PromptStrategy::DynamicFewShot,
        text,
        &bundle.thumbnail,
        exemplar_ids,
    ))
}

/// Render a bundle under the given strategy. Dynamic few-shot needs cards.
pub fn render(
    bundle: &EvidenceBundle,
    strategy: PromptStrategy,
    cards: Option<(&ExemplarCard, &ExemplarCard)>,
) -> Result<PromptDocument, PromptError> {
    match strategy {
        PromptStrategy::ZeroShot => Ok(render_zero_shot(bundle)),
        PromptStrategy::FixedFewShot => Ok(render_fixed_few_shot(bundle)),
        PromptStrategy::DynamicFewShot => {
            let cards = cards.expect("dynamic few-shot rendering requires cards");
            render_dynamic_few_shot(bundle, cards)
        }
    }
}

/// Checksums of every shipped template file, recorded in run manifests.
pub fn template_checksums() -> Vec<(String, String)> {
    vec![
        ("zero_shot".into(), hashing::sha256_hex(ZERO_SHOT_TEMPLATE.as_bytes())),
        ("fixed_examples".into(), hashing::sha256_hex(FIXED_EXAMPLES.as_bytes())),
        (
            "describe_full_video".into(),
            hashing::sha256_hex(include_str!("../templates/describe_full_video.txt").as_bytes()),
        ),
        (
            "describe_frame_set".into(),
            hashing::sha256_hex(include_str!("../templates/describe_frame_set.txt").as_bytes()),
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;
    use crate::evidence::{assemble_bundle, AblationMask};
    use crate::testutil::record;

    fn bundle(mask: AblationMask) -> EvidenceBundle {
        let r = record("vid1", Label::Misleading);
        assemble_bundle(&r, "some subtitles here", "a scene by scene description", mask).unwrap()
    }

    fn card(id: &str, label: Label) -> ExemplarCard {
        ExemplarCard {
            source_video_id: id.to_string(),
            thumbnail_description: format!("A thumbnail for {id}."),
            subtitles_excerpt: "sub words".into(),
            description_excerpt: "desc words".into(),
            categorization: label,
            explanation: format!("Because of {id}."),
        }
    }

    #[test]
    fn zero_shot_contains_step_five_verbatim() {
        let doc = render_zero_shot(&bundle(AblationMask::FULL));
        assert!(doc.text().contains(
            "Assess whether the thumbnail uses exaggeration, false promises, or clickbait tactics."
        ));
    }

    #[test]
    fn zero_shot_ablated_slots_are_empty() {
        let doc = render_zero_shot(&bundle(AblationMask::THUMBNAIL_ONLY));
        let text = doc.text();
        assert!(text.contains("Video Description: \n"));
        assert!(text.ends_with("Video Subtitles: \n"));
        assert!(text.contains("Steps to Follow:"));
    }

    #[test]
    fn zero_shot_checksum_is_deterministic() {
        let a = render_zero_shot(&bundle(AblationMask::FULL));
        let b = render_zero_shot(&bundle(AblationMask::FULL));
        assert_eq!(a.checksum, b.checksum);
        let c = render_zero_shot(&bundle(AblationMask::NO_SUBTITLES));
        assert_ne!(a.checksum, c.checksum);
    }

    #[test]
    fn zero_shot_matches_golden_template() {
        // Rendering with empty slots must reproduce the golden file with the
        // slots removed, byte for byte.
        let r = record("vid1", Label::Misleading);
        let empty = assemble_bundle(&r, "", "", AblationMask::FULL).unwrap();
        let rendered = render_zero_shot(&empty).text();
        let golden =
            ZERO_SHOT_TEMPLATE.replace("{video_description}", "").replace("{video_subtitles}", "");
        assert_eq!(rendered, golden);
    }

    #[test]
    fn fixed_few_shot_contains_paper_examples() {
        let doc = render_fixed_few_shot(&bundle(AblationMask::FULL));
        let text = doc.text();
        assert!(text.contains("I made $10,000 in one day!"));
        assert!(text.contains("Easy 15-minute pasta recipe."));
        assert!(text.contains("The thumbnail exaggerates the earnings (i.e., $10,000 in a day)"));
    }

    #[test]
    fn fixed_few_shot_has_one_not_misleading_categorization() {
        let text = render_fixed_few_shot(&bundle(AblationMask::FULL)).text();
        assert_eq!(text.matches("Categorization: Not Misleading").count(), 1);
        assert_eq!(text.matches("Categorization: Misleading").count(), 1);
    }

    #[test]
    fn fixed_few_shot_is_strict_superset_of_zero_shot() {
        let b = bundle(AblationMask::FULL);
        let fixed = render_fixed_few_shot(&b).text();
        let zero = render_zero_shot(&b).text();
        assert!(fixed.len() > zero.len());
        assert!(fixed.ends_with(&zero[zero.find("Inputs:").unwrap()..]));
    }

    #[test]
    fn dynamic_renders_both_cards_misleading_first() {
        let m = card("m1", Label::Misleading);
        let n = card("n1", Label::NotMisleading);
        // Pass in the "wrong" order; rendering still puts misleading first.
        let doc = render_dynamic_few_shot(&bundle(AblationMask::FULL), (&n, &m)).unwrap();
        let text = doc.text();
        let mi = text.find("Categorization: Misleading").unwrap();
        let ni = text.find("Categorization: Not Misleading").unwrap();
        assert!(mi < ni);
        assert_eq!(doc.exemplar_ids, vec!["m1".to_string(), "n1".to_string()]);
    }

    #[test]
    fn dynamic_rejects_same_label_cards() {
        let a = card("m1", Label::Misleading);
        let b = card("m2", Label::Misleading);
        assert!(matches!(
            render_dynamic_few_shot(&bundle(AblationMask::FULL), (&a, &b)),
            Err(PromptError::MismatchedCards(Label::Misleading))
        ));
    }

    #[test]
    fn dynamic_excerpts_respect_word_cap() {
        let mut m = card("m1", Label::Misleading);
        m.subtitles_excerpt = (0..200).map(|i| format!("s{i}")).collect::<Vec<_>>().join(" ");
        m.description_excerpt = (0..200).map(|i| format!("d{i}")).collect::<Vec<_>>().join(" ");
        let n = card("n1", Label::NotMisleading);
        let doc = render_dynamic_few_shot(&bundle(AblationMask::FULL), (&m, &n)).unwrap();
        for line in doc.text().lines() {
            if let Some(rest) = line.strip_prefix("Subtitles: ") {
                assert!(rest.split_whitespace().count() <= 200);
            }
            if let Some(rest) = line.strip_prefix("Video Description: ") {
                assert!(rest.split_whitespace().count() <= 200);
            }
        }
    }

    #[test]
    fn every_document_has_one_trailing_image() {
        let b = bundle(AblationMask::FULL);
        let m = card("m1", Label::Misleading);
        let n = card("n1", Label::NotMisleading);
        let docs = vec![
            render_zero_shot(&b),
            render_fixed_few_shot(&b),
            render_dynamic_few_shot(&b, (&m, &n)).unwrap(),
        ];
        for doc in docs {
            let images: Vec<_> = doc
                .parts
                .iter()
                .enumerate()
                .filter(|(_, p)| matches!(p, PromptPart::Image(_)))
                .collect();
            assert_eq!(images.len(), 1);
            assert_eq!(images[0].0, doc.parts.len() - 1, "image must come after all text");
            assert_eq!(doc.image().unwrap().0, b.thumbnail.0);
        }
    }

    #[test]
    fn template_checksums_cover_all_templates() {
        let sums = template_checksums();
        assert_eq!(sums.len(), 4);
        assert!(sums.iter().all(|(_, digest)| digest.len() == 64));
    }
}
