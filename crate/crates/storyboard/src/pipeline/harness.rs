//! Side-by-side comparison of prose prompts against parameterized prompts,
//! across one or more image backends.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use storyboard_core::{split_narrative, GenerationConfig};

use super::{Engine, PipelineError, ProjectState};
use crate::backends::{ImageRequest, SharedChat, SharedImage};
use crate::raster;
use crate::store::export::{contact_sheet, SheetLayout, Tile};
use crate::store::{content_hash, MemImageStore, StoreError};

/// Per-image attempt cap.
pub const MAX_ATTEMPTS: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Each passage of the story goes to the image model as-is.
    NaturalLanguage,
    /// Full pipeline: style, frame parameters, flattened prompt.
    Parameterized,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::NaturalLanguage => "natural-language",
            Mode::Parameterized => "parameterized",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nl" | "natural-language" | "natural" => Ok(Mode::NaturalLanguage),
            "param" | "parameterized" | "params" => Ok(Mode::Parameterized),
            other => Err(format!("unknown mode {other:?} (expected nl or param)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessImage {
    pub index: usize,
    pub prompt: String,
    pub seed: i64,
    pub attempts: u32,
    pub latency_ms: u64,
    pub image_sha256: Option<String>,
    pub error: Option<String>,
    #[serde(skip)]
    pub image: Option<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessCell {
    pub mode: Mode,
    pub backend: String,
    /// Set when the cell could not run at all (e.g. the prompt stage failed).
    pub error: Option<String>,
    pub images: Vec<HarnessImage>,
}

impl HarnessCell {
    pub fn attempts(&self) -> u32 {
        self.images.iter().map(|i| i.attempts).sum()
    }

    pub fn mean_latency_ms(&self) -> Option<f64> {
        let ok: Vec<u64> = self
            .images
            .iter()
            .filter(|i| i.image.is_some() || i.image_sha256.is_some())
            .map(|i| i.latency_ms)
            .collect();
        (!ok.is_empty()).then(|| ok.iter().sum::<u64>() as f64 / ok.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub narrative: String,
    pub frame_count: usize,
    pub cells: Vec<HarnessCell>,
}

impl ComparisonReport {
    pub fn manifest_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per cell, one column per frame.
    pub fn contact_sheet_png(&self, tile: u32) -> Result<Vec<u8>, StoreError> {
        let n = self.frame_count.max(1);
        let layout = SheetLayout::new(n * self.cells.len().max(1), n, tile, tile);
        let tiles: Vec<Tile<'_>> = self
            .cells
            .iter()
            .flat_map(|c| {
                (0..n).map(move |i| {
                    let img = c.images.get(i);
                    Tile {
                        image: img.and_then(|x| x.image.as_deref()),
                        caption: format!("{} {} #{}", c.mode, c.backend, i + 1),
                    }
                })
            })
            .collect();
        Ok(raster::encode_png(&contact_sheet(&layout, &tiles)?))
    }
}

/// Runs every (mode, backend) cell over the same narrative and seeds. Cell
/// failures are recorded, not returned.
pub async fn run_comparison_harness(
    chat: SharedChat,
    backends: &[SharedImage],
    narrative: &str,
    config: GenerationConfig,
    modes: &[Mode],
    seed: u64,
) -> Result<ComparisonReport, PipelineError> {
    if backends.is_empty() {
        return Err(PipelineError::Backend(
            crate::backends::BackendError::InvalidParameters(
                "at least one image backend is required".into(),
            ),
        ));
    }
    let n = config.frame_count;
    if n < 1 {
        return Err(PipelineError::InvalidFrameCount);
    }
    let engine =
        Engine::new(chat, backends[0].clone(), Arc::new(MemImageStore::new())).with_rng_seed(seed);
    let seeds: Vec<i64> = (0..n).map(|_| engine.draw()).collect();

    let mut cells = Vec::new();
    for &mode in modes {
        let prompts: Result<Vec<String>, PipelineError> = match mode {
            Mode::NaturalLanguage => {
                if narrative.trim().is_empty() {
                    Err(PipelineError::EmptyNarrative)
                } else {
                    Ok(split_narrative(narrative, n))
                }
            }
            Mode::Parameterized => parameterized_prompts(&engine, narrative, config.clone()).await,
        };
        for backend in backends {
            let mut cell = HarnessCell {
                mode,
                backend: backend.name().to_string(),
                error: None,
                images: Vec::new(),
            };
            match &prompts {
                Err(e) => cell.error = Some(e.to_string()),
                Ok(ps) => {
                    for (i, p) in ps.iter().enumerate() {
                        let req = ImageRequest {
                            prompt: p.clone(),
                            negative_prompt: config.negative_prompt.clone(),
                            seed: seeds[i],
                            width: config.image_width,
                            height: config.image_height,
                            steps: config.steps,
                        };
                        cell.images.push(render_with_cap(backend, i, req).await);
                    }
                }
            }
            cells.push(cell);
        }
    }
    Ok(ComparisonReport {
        narrative: narrative.to_string(),
        frame_count: n,
        cells,
    })
}

async fn parameterized_prompts(
    engine: &Engine,
    narrative: &str,
    config: GenerationConfig,
) -> Result<Vec<String>, PipelineError> {
    let mut state = engine.create_project(narrative, config)?;
    engine.generate_style(&mut state).await?;
    engine.generate_prompts(&mut state).await?;
    let ProjectState { project, .. } = state;
    let style = project.style.clone().unwrap_or_default();
    Ok(project
        .frames
        .iter()
        .map(|f| {
            storyboard_core::render_image_prompt(&f.prompt, &style, &project.config)
                .unwrap_or_default()
        })
        .collect())
}

async fn render_with_cap(backend: &SharedImage, index: usize, req: ImageRequest) -> HarnessImage {
    let mut out = HarnessImage {
        index,
        prompt: req.prompt.clone(),
        seed: req.seed,
        attempts: 0,
        latency_ms: 0,
        image_sha256: None,
        error: None,
        image: None,
    };
    while out.attempts < MAX_ATTEMPTS {
        out.attempts += 1;
        let started = Instant::now();
        match backend.txt2img(&req).await {
            Ok(r) => {
                out.latency_ms = started.elapsed().as_millis() as u64;
                out.seed = r.seed_used;
                out.image_sha256 = Some(content_hash(&r.image_bytes));
                out.image = Some(r.image_bytes);
                out.error = None;
                break;
            }
            Err(e) => out.error = Some(e.to_string()),
        }
    }
    out
}
