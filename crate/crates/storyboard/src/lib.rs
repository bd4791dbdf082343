//! Storyboard engine: narrative to style parameters, style to frame prompts,
//! frame prompts to images, plus the edit loop around them.
//!
//! The pure data model and grammar live in `storyboard-core`; this crate adds
//! model backends, the async pipeline, persistence, export, the HTTP service
//! and the command-line front end.

#![forbid(unsafe_code)]

pub mod backends;
pub mod cli;
pub mod config;
pub mod pipeline;
pub mod raster;
pub mod service;
pub mod store;

pub use storyboard_core as core;
