//! Project aggregate, per-frame records and invariant checking.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::config::{is_valid_dimension, GenerationConfig};
use crate::frame::FramePrompt;
use crate::style::StyleParameters;

/// Milliseconds since the Unix epoch.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

impl Timestamp {
    /// The next timestamp strictly after `self`, but no earlier than `now`.
    pub fn next_after(self, now: Timestamp) -> Timestamp {
        if now > self {
            now
        } else {
            Timestamp(self.0 + 1)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProjectId(pub String);

impl fmt::Display for ProjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Content address of a stored image (lowercase hex SHA-256 of the PNG bytes).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ImageRef(pub String);

impl ImageRef {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ImageRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameStatus {
    Empty,
    PromptReady,
    Rendered,
    Stale,
}

/// What caused a render.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RenderTrigger {
    Resubmit,
    FramePromptEdit,
    FrameNlEdit,
    Regenerate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineageEntry {
    pub timestamp: Timestamp,
    pub trigger: RenderTrigger,
    pub image_ref: ImageRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub index: usize,
    pub prompt: FramePrompt,
    pub seed: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<ImageRef>,
    pub status: FrameStatus,
    #[serde(default)]
    pub lineage: Vec<LineageEntry>,
    /// Detail of the last failed operation on this frame, cleared on success.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub updated_at: Timestamp,
}

impl FrameRecord {
    pub fn empty(index: usize, at: Timestamp) -> Self {
        FrameRecord {
            index,
            prompt: FramePrompt::default(),
            seed: 0,
            image_ref: None,
            status: FrameStatus::Empty,
            lineage: Vec::new(),
            error: None,
            updated_at: at,
        }
    }

    /// Status a frame falls back to when its inputs change without a render.
    pub(crate) fn mark_stale(&mut self, at: Timestamp) {
        if self.status != FrameStatus::Empty {
            self.status = FrameStatus::Stale;
            self.updated_at = at;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoryboardProject {
    pub id: ProjectId,
    pub narrative: String,
    #[serde(default)]
    pub style: Option<StyleParameters>,
    /// Set when the narrative changed after the style was produced.
    #[serde(default)]
    pub style_stale: bool,
    pub frames: Vec<FrameRecord>,
    pub config: GenerationConfig,
    pub created: Timestamp,
    pub updated: Timestamp,
}

impl StoryboardProject {
    /// A fresh project: no style, `config.frame_count` empty frames.
    pub fn new(
        id: ProjectId,
        narrative: impl Into<String>,
        config: GenerationConfig,
        at: Timestamp,
    ) -> Self {
        let frames = (0..config.frame_count)
            .map(|i| FrameRecord::empty(i, at))
            .collect();
        StoryboardProject {
            id,
            narrative: narrative.into(),
            style: None,
            style_stale: false,
            frames,
            config,
            created: at,
            updated: at,
        }
    }

    /// Truncates from the end or appends empty records; existing records
    /// before the cut are left untouched.
    pub fn resize(&mut self, n: usize, at: Timestamp) {
        if n < self.frames.len() {
            self.frames.truncate(n);
        } else {
            for i in self.frames.len()..n {
                self.frames.push(FrameRecord::empty(i, at));
            }
        }
        self.config.frame_count = n;
    }

    pub fn frame(&self, index: usize) -> Option<&FrameRecord> {
        self.frames.get(index)
    }

    /// Style with all slots blank counts as missing.
    pub fn has_usable_style(&self) -> bool {
        self.style.as_ref().is_some_and(|s| !s.is_blank())
    }

    pub fn rendered_count(&self) -> usize {
        self.frames
            .iter()
            .filter(|f| f.status == FrameStatus::Rendered)
            .count()
    }
}

/// A broken invariant: the offending field path and the rule it breaks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl Violation {
    fn new(field: impl Into<String>, rule: impl Into<String>) -> Self {
        Violation {
            field: field.into(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

/// Checks every project invariant. Empty result means the project is valid.
pub fn validate_project(p: &StoryboardProject) -> Vec<Violation> {
    let mut out = Vec::new();
    let cfg = &p.config;

    if p.id.0.is_empty() {
        out.push(Violation::new("id", "must be non-empty"));
    }
    if cfg.frame_count < 1 {
        out.push(Violation::new("config.frame_count", "must be at least 1"));
    }
    if !is_valid_dimension(cfg.image_width) {
        out.push(Violation::new(
            "config.image_width",
            "must be a positive multiple of 8",
        ));
    }
    if !is_valid_dimension(cfg.image_height) {
        out.push(Violation::new(
            "config.image_height",
            "must be a positive multiple of 8",
        ));
    }
    if p.frames.len() != cfg.frame_count {
        out.push(Violation::new(
            "frames.length",
            format!(
                "must equal config.frame_count ({} != {})",
                p.frames.len(),
                cfg.frame_count
            ),
        ));
    }
    if p.updated < p.created {
        out.push(Violation::new("updated", "must not precede created"));
    }

    for (i, f) in p.frames.iter().enumerate() {
        let at = |field: &str| format!("frames[{i}].{field}");
        if f.index != i {
            out.push(Violation::new(
                at("index"),
                "must equal the frame's position",
            ));
        }
        match (f.status, &f.image_ref) {
            (FrameStatus::Rendered, None) => out.push(Violation::new(
                at("status/image_ref"),
                "rendered frame must have an image",
            )),
            (FrameStatus::Empty | FrameStatus::PromptReady, Some(_)) => out.push(Violation::new(
                at("status/image_ref"),
                "empty or prompt-ready frame must not have an image",
            )),
            _ => {}
        }
        if matches!(f.status, FrameStatus::PromptReady | FrameStatus::Rendered)
            && !f.prompt.is_renderable()
        {
            out.push(Violation::new(
                at("prompt.general_description"),
                "must be non-empty for a ready or rendered frame",
            ));
        }
        if f.status != FrameStatus::Empty {
            for (slot, rule) in f.prompt.violations() {
                if slot != "general_description" {
                    out.push(Violation::new(at(&format!("prompt.{slot}")), rule));
                }
            }
        }
        if f.lineage
            .windows(2)
            .any(|w| w[0].timestamp >= w[1].timestamp)
        {
            out.push(Violation::new(
                at("lineage"),
                "must be strictly time-ordered",
            ));
        }
        if p.style.is_none() && f.status != FrameStatus::Empty {
            out.push(Violation::new(
                at("status/style"),
                "frames must be empty while the project has no style",
            ));
        }
    }
    out
}
