#![allow(dead_code)]

use std::sync::Arc;

use storyboard::backends::{MockChat, MockImage, SharedChat, SharedImage};
use storyboard::core::{FrameRecord, GenerationConfig, StoryboardProject};
use storyboard::pipeline::{Engine, ManualClock, ProjectState};
use storyboard::store::{ImageStore, MemImageStore};

pub const CINDY: &str = "Cindy, a little girl, does homework at night.";

pub const STORY6: &str = "Cindy, a little girl, does homework at night. \
She gets tired and looks out the window. Her mother brings a cup of tea. \
Cindy finishes her math and smiles. She packs her backpack for school. \
She falls asleep with the lamp still on.";

pub fn engine_with(chat: SharedChat, images: SharedImage) -> (Engine, Arc<MemImageStore>) {
    let store = Arc::new(MemImageStore::new());
    let engine = Engine::new(chat, images, store.clone())
        .with_rng_seed(11)
        .with_clock(Arc::new(ManualClock::new(1_000)));
    (engine, store)
}

pub fn mock_engine() -> (Engine, Arc<MemImageStore>) {
    engine_with(Arc::new(MockChat::new(0)), Arc::new(MockImage::new()))
}

/// Same store and generator state, different backends.
pub fn rewire(engine: &Engine, chat: SharedChat, images: SharedImage) -> Engine {
    Engine::new(chat, images, engine.store.clone())
        .with_rng_seed(99)
        .with_clock(engine.clock.clone())
}

pub fn config(frames: usize) -> GenerationConfig {
    GenerationConfig {
        frame_count: frames,
        ..GenerationConfig::default()
    }
}

pub fn new_project(engine: &Engine, story: &str, frames: usize) -> ProjectState {
    engine.create_project(story, config(frames)).unwrap()
}

/// Every frame record with its image bytes.
pub fn snapshot(
    store: &dyn ImageStore,
    p: &StoryboardProject,
) -> Vec<(FrameRecord, Option<Vec<u8>>)> {
    p.frames
        .iter()
        .map(|f| {
            (
                f.clone(),
                f.image_ref.as_ref().map(|r| store.get(r).unwrap()),
            )
        })
        .collect()
}
