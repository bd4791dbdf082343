//! Deterministic offline backends.
//!
//! Chat replies are pure functions of (system prompt, user message, follow-up
//! turns, mock seed, request seed) and are produced with the core
//! serializers, so they always parse. Images are pure functions of (prompt,
//! seed, width, height).

use std::time::Duration;

use async_trait::async_trait;
use image::{Rgb, RgbImage};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use storyboard_core::{
    split_narrative, FramePrompt, FrameSlot, StyleField, StyleParameters, STORY_STYLE_DELIMITER,
};

use super::{
    BackendError, ChatBackend, ChatRequest, Health, ImageBackend, ImageRequest, ImageResult,
};
use crate::raster;

const AGES: &[&str] = &["5-7", "8-10", "teen", "20s", "30s", "40s", "elderly"];
const GENDERS: &[&str] = &["female", "male"];
const HAIR: &[&str] = &[
    "brown curl",
    "black bob",
    "blond ponytail",
    "short grey",
    "red braid",
];
const CLOTHING: &[&str] = &[
    "pink dress",
    "school uniform",
    "denim jacket",
    "yellow raincoat",
    "grey hoodie",
];
const SCENES: &[&str] = &["indoor", "outdoor"];
const LOCATIONS: &[&str] = &[
    "bedroom",
    "classroom",
    "park",
    "kitchen",
    "city street",
    "library",
];
const COLORS: &[&str] = &["warm", "pastel", "muted", "vivid", "monochrome"];
const ART_TYPES: &[&str] = &[
    "realistic",
    "watercolor",
    "comic",
    "anime",
    "oil painting",
    "pencil sketch",
];
const LENSES: &[&str] = &["Medium Shot", "Close-up", "Wide Shot", "Long Shot"];

const OBJECTS: &[&str] = &[
    "desk lamp",
    "notebook",
    "computer",
    "phone",
    "backpack",
    "cup of tea",
];
const ACTIONS: &[&str] = &[
    "writing",
    "looking out the window",
    "walking",
    "reading",
    "smiling at the camera",
];
const EMOTIONS: &[&str] = &["focused", "happy", "tired", "curious", "calm"];
const BACKGROUNDS: &[&str] = &[
    "night sky through window",
    "bookshelves",
    "blurred street lights",
    "green trees",
];
const SHOTS: &[&str] = &["close-up", "medium shot", "wide shot", "over-the-shoulder"];

fn digest(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        // length prefix keeps ("ab","c") and ("a","bc") apart
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

fn pick(rng: &mut ChaCha8Rng, list: &[&str]) -> String {
    list.choose(rng).copied().unwrap_or_default().to_string()
}

/// The N in "generate N prompts", if the system prompt asks for frames.
fn requested_frame_count(system_prompt: &str) -> Option<usize> {
    let words: Vec<&str> = system_prompt.split_whitespace().collect();
    words.windows(3).find_map(|w| {
        let prompts = w[2].trim_end_matches(|c: char| !c.is_alphanumeric());
        if w[0].eq_ignore_ascii_case("generate") && prompts.eq_ignore_ascii_case("prompts") {
            w[1].parse().ok().filter(|&n| n > 0)
        } else {
            None
        }
    })
}

fn clean(text: &str) -> String {
    let no_braces: String = text.chars().filter(|c| !matches!(c, '{' | '}')).collect();
    no_braces.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Offline chat model.
#[derive(Debug, Clone, Default)]
pub struct MockChat {
    pub mock_seed: u64,
    pub latency: Duration,
}

impl MockChat {
    pub fn new(mock_seed: u64) -> Self {
        MockChat {
            mock_seed,
            latency: Duration::ZERO,
        }
    }

    /// The reply the mock gives to `request`; a pure function.
    pub fn reply(&self, request: &ChatRequest) -> String {
        let mut parts: Vec<&[u8]> = vec![
            request.system_prompt.as_bytes(),
            request.user_message.as_bytes(),
        ];
        for t in &request.followups {
            parts.push(t.assistant.as_bytes());
            parts.push(t.user.as_bytes());
        }
        let seeds = [
            self.mock_seed.to_le_bytes(),
            request.seed.unwrap_or(0).to_le_bytes(),
        ]
        .concat();
        parts.push(&seeds);
        let mut rng = ChaCha8Rng::from_seed(digest(&parts));
        match requested_frame_count(&request.system_prompt) {
            Some(n) => frame_reply(&mut rng, &request.user_message, n),
            None => style_reply(&mut rng),
        }
    }
}

fn random_style(rng: &mut ChaCha8Rng) -> StyleParameters {
    let mut s = StyleParameters::default();
    for field in StyleField::ALL {
        let list = match field {
            StyleField::Age => AGES,
            StyleField::Gender => GENDERS,
            StyleField::Hair => HAIR,
            StyleField::Clothing => CLOTHING,
            StyleField::Scene => SCENES,
            StyleField::Location => LOCATIONS,
            StyleField::Color => COLORS,
            StyleField::ArtType => ART_TYPES,
            StyleField::LensAndShot => LENSES,
        };
        *s.get_mut(field) = pick(rng, list);
    }
    s
}

fn style_reply(rng: &mut ChaCha8Rng) -> String {
    format!("```\n{}\n```", random_style(rng).serialize())
}

fn frame_reply(rng: &mut ChaCha8Rng, user_message: &str, n: usize) -> String {
    let (story, style_text) = match user_message.rsplit_once(STORY_STYLE_DELIMITER) {
        Some((s, t)) => (s, t),
        None => (user_message, ""),
    };
    let style = storyboard_core::parse_style_reply(style_text).unwrap_or_default();
    let story = if story.trim().is_empty() {
        "A scene"
    } else {
        story
    };
    let mut blocks = Vec::with_capacity(n);
    for (i, passage) in split_narrative(story, n).iter().enumerate() {
        let mut gd = clean(passage);
        if gd.is_empty() {
            gd = "A scene".into();
        }
        let mut f = FramePrompt::new(gd);
        let person: Vec<&str> = [
            style.gender.as_str(),
            style.hair.as_str(),
            style.clothing.as_str(),
        ]
        .into_iter()
        .filter(|v| !v.is_empty())
        .collect();
        if !person.is_empty() {
            f.set(FrameSlot::Person, Some(clean(&person.join(", "))));
        }
        for (slot, list) in [
            (FrameSlot::Object, OBJECTS),
            (FrameSlot::Action, ACTIONS),
            (FrameSlot::Emotion, EMOTIONS),
            (FrameSlot::Background, BACKGROUNDS),
            (FrameSlot::Shot, SHOTS),
        ] {
            if rng.random_bool(0.75) {
                f.set(slot, Some(pick(rng, list)));
            }
        }
        if !style.art_type.is_empty() {
            f.set(FrameSlot::Style, Some(clean(&style.art_type)));
        }
        blocks.push(format!("{}. {}", i + 1, f.serialize()));
    }
    format!("```\n{}\n```", blocks.join("\n\n"))
}

#[async_trait]
impl ChatBackend for MockChat {
    fn name(&self) -> &str {
        "mock"
    }

    async fn chat(&self, request: &ChatRequest) -> Result<String, BackendError> {
        request.validate()?;
        if !self.latency.is_zero() {
            tokio::time::sleep(self.latency).await;
        }
        Ok(self.reply(request))
    }

    async fn health_check(&self) -> Health {
        Health::Ok
    }
}

/// Offline txt2img: a solid color from the request hash with the start of
/// the prompt written on it.
#[derive(Debug, Clone, Default)]
pub struct MockImage {
    pub latency: Duration,
}

impl MockImage {
    pub fn new() -> Self {
        MockImage::default()
    }

    /// Resolves a `-1` seed the way a real backend would, but
    /// deterministically.
    pub fn effective_seed(request: &ImageRequest) -> i64 {
        if request.seed >= 0 {
            return request.seed;
        }
        let d = digest(&[b"seed", request.prompt.as_bytes()]);
        (u32::from_le_bytes([d[0], d[1], d[2], d[3]]) & 0x7fff_ffff) as i64
    }

    pub fn render(request: &ImageRequest) -> Vec<u8> {
        let seed = Self::effective_seed(request);
        let d = digest(&[
            request.prompt.as_bytes(),
            &seed.to_le_bytes(),
            &request.width.to_le_bytes(),
            &request.height.to_le_bytes(),
        ]);
        let bg = Rgb([d[0], d[1], d[2]]);
        let mut img = RgbImage::from_pixel(request.width, request.height, bg);
        let label: String = request.prompt.chars().take(40).collect();
        let scale = (request.width / (40 * raster::GLYPH)).clamp(1, 4);
        let lines = raster::wrap(
            &label,
            (request.width / (raster::GLYPH * scale)).max(1) as usize,
        );
        for (i, line) in lines.iter().enumerate() {
            let y = 8 + i as u32 * (raster::GLYPH + 2) * scale;
            raster::draw_text(&mut img, 8, y, line, scale, raster::contrast(bg));
        }
        raster::encode_png(&img)
    }
}

#[async_trait]
impl ImageBackend for MockImage {
    fn name(&self) -> &str {
        "mock"
    }

    async fn txt2img(&self, request: &ImageRequest) -> Result<ImageResult, BackendError> {
        request.validate()?;
        if !self.latency.is_zero() {
            tokio::time::sleep(self.latency).await;
        }
        Ok(ImageResult {
            image_bytes: Self::render(request),
            seed_used: Self::effective_seed(request),
            backend_latency: self.latency,
        })
    }

    async fn health_check(&self) -> Health {
        Health::Ok
    }
}
