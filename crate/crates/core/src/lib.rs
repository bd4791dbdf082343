//! Domain model and text grammar for turning a free-form narrative into a
//! parameterized, N-frame storyboard.
//!
//! This crate is `no_std` (it needs `alloc`) and performs no I/O. It owns:
//!
//! - the storyboard data model ([`StyleParameters`], [`FramePrompt`],
//!   [`FrameRecord`], [`StoryboardProject`]) and its invariants,
//! - the append-only [`PipelineEvent`] log and the fold that replays it,
//! - the two system prompt templates and the user-message composer,
//! - the `Name:{value}` reply grammar and the parsers built on it,
//! - deterministic renderers from a frame to a flat image prompt and to prose.
//!
//! Everything that talks to a model, a disk or a socket lives in the
//! `storyboard` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod config;
pub mod event;
pub mod frame;
pub mod grammar;
pub mod parse;
pub mod project;
pub mod render;
pub mod segment;
pub mod style;
pub mod template;

pub use config::{GenerationConfig, SeedPolicy};
pub use event::{replay, EventKind, EventPayload, PipelineEvent, RenderOutcome};
pub use frame::{FramePrompt, FrameSlot};
pub use grammar::{ParsedBlock, ParsedPair};
pub use parse::{
    parse_frame_reply, parse_style_reply, parse_style_reply_with_warnings, ParseError,
    ParseWarning, ParsedFrames,
};
pub use project::{
    validate_project, FrameRecord, FrameStatus, ImageRef, LineageEntry, ProjectId, RenderTrigger,
    StoryboardProject, Timestamp, Violation,
};
pub use render::{frame_to_natural_language, render_image_prompt};
pub use segment::split_narrative;
pub use style::{StyleField, StyleParameters};
pub use template::{
    build_frame_system_prompt, build_style_system_prompt, compose_frame_user_message,
    PromptTemplate, TemplateError, TemplateId, PLACEHOLDER, STORY_STYLE_DELIMITER,
};
