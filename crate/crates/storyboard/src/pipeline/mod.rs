//! The three-step generation pipeline and the edit state machine.
//!
//! Every operation takes a [`ProjectState`] by exclusive reference, computes
//! its result against the backends, and only then commits events. State
//! never changes except through [`ProjectState::commit`], so the log always
//! folds back to the current project.

pub mod harness;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use futures::stream::{self, StreamExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use storyboard_core::config::SeedPolicy;
use storyboard_core::{
    build_frame_system_prompt, build_style_system_prompt, compose_frame_user_message,
    frame_to_natural_language, parse_frame_reply, parse_style_reply, render_image_prompt,
    EventPayload, FramePrompt, FrameRecord, FrameStatus, GenerationConfig, ImageRef, LineageEntry,
    ParseError, PipelineEvent, ProjectId, RenderOutcome, RenderTrigger, StoryboardProject,
    StyleParameters, Timestamp,
};
use thiserror::Error;

use crate::backends::{BackendError, ChatRequest, ChatTurn, ImageRequest, SharedChat, SharedImage};
use crate::store::{ImageStore, StoreError};

pub use harness::{run_comparison_harness, ComparisonReport, HarnessCell, HarnessImage, Mode};

pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        let ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as u64);
        Timestamp(ms)
    }
}

/// A clock that only moves when told to. Useful for reproducible logs.
#[derive(Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(start: u64) -> Self {
        ManualClock(AtomicU64::new(start))
    }

    pub fn advance(&self, ms: u64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Timestamp {
        Timestamp(self.0.load(Ordering::SeqCst))
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("narrative must not be empty")]
    EmptyNarrative,
    #[error("frame count must be at least 1")]
    InvalidFrameCount,
    #[error("frame index {index} is out of range (board has {len} frames)")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("frame {index} has no prompt yet")]
    FrameNotReady { index: usize },
    #[error("project has no style yet; generate one first")]
    StyleMissing,
    #[error("invalid frame prompt: {0}")]
    InvalidFrame(String),
    #[error("text must not be empty")]
    EmptyText,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("model reply still malformed after {attempts} attempts: {last}")]
    ParseExhausted { attempts: u32, last: ParseError },
    #[error(transparent)]
    Storage(#[from] StoreError),
}

/// A project plus its event log. The log is append-only and `project` always
/// equals `replay(&events)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectState {
    pub project: StoryboardProject,
    pub events: Vec<PipelineEvent>,
}

impl ProjectState {
    /// Starts a log with a `project-created` snapshot of `project`.
    pub fn new(project: StoryboardProject) -> Self {
        let created = PipelineEvent {
            project_id: project.id.clone(),
            seq: 0,
            timestamp: project.created,
            payload: EventPayload::ProjectCreated {
                project: Box::new(project.clone()),
            },
        };
        ProjectState {
            project,
            events: vec![created],
        }
    }

    /// A timestamp strictly after everything logged so far.
    pub fn next_timestamp(&self, clock: &dyn Clock) -> Timestamp {
        self.project.updated.next_after(clock.now())
    }

    /// Appends an event and applies it. The only mutation path.
    pub fn commit(&mut self, payload: EventPayload, at: Timestamp) -> &PipelineEvent {
        let event = PipelineEvent {
            project_id: self.project.id.clone(),
            seq: self.events.len() as u64,
            timestamp: at,
            payload,
        };
        self.project.apply(&event);
        self.events.push(event);
        self.events.last().expect("just pushed")
    }

    fn frame_checked(&self, index: usize) -> Result<&FrameRecord, PipelineError> {
        self.project
            .frames
            .get(index)
            .ok_or(PipelineError::IndexOutOfRange {
                index,
                len: self.project.frames.len(),
            })
    }
}

/// Result of a full Resubmit. Frame-level render failures do not fail the
/// whole operation; they are listed in `failures` and noted on the records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResubmitOutcome {
    pub frames: Vec<FrameRecord>,
    pub failures: Vec<FrameFailure>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameFailure {
    pub index: usize,
    pub detail: String,
}

/// When a seed is being drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SeedUse {
    /// Resubmit or an explicit regenerate.
    Fresh,
    /// Rendering after a prompt edit.
    Edit,
}

struct Rendered {
    image_ref: ImageRef,
    seed: i64,
    latency: Duration,
}

pub struct Engine {
    pub chat: SharedChat,
    pub images: SharedImage,
    pub store: Arc<dyn ImageStore>,
    pub clock: Arc<dyn Clock>,
    rng: Mutex<ChaCha8Rng>,
}

impl Engine {
    pub fn new(chat: SharedChat, images: SharedImage, store: Arc<dyn ImageStore>) -> Self {
        Engine {
            chat,
            images,
            store,
            clock: Arc::new(SystemClock),
            rng: Mutex::new(ChaCha8Rng::from_os_rng()),
        }
    }

    /// Seeds the generator used for image seeds, style nonces and ids.
    pub fn with_rng_seed(self, seed: u64) -> Self {
        Engine {
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
            ..self
        }
    }

    pub fn with_clock(self, clock: Arc<dyn Clock>) -> Self {
        Engine { clock, ..self }
    }

    fn draw(&self) -> i64 {
        self.rng.lock().unwrap().random_range(0..=i32::MAX as i64)
    }

    fn seed_for(&self, policy: SeedPolicy, frame: &FrameRecord, usage: SeedUse) -> i64 {
        match policy {
            SeedPolicy::Fixed(s) => s,
            SeedPolicy::RandomPerFrame if usage == SeedUse::Edit && !frame.lineage.is_empty() => {
                frame.seed
            }
            _ => self.draw(),
        }
    }

    /// A fresh project id from the engine's generator.
    pub fn new_project_id(&self) -> ProjectId {
        let mut bytes = [0u8; 16];
        self.rng.lock().unwrap().fill(&mut bytes);
        ProjectId(
            uuid::Builder::from_random_bytes(bytes)
                .into_uuid()
                .to_string(),
        )
    }

    pub fn create_project(
        &self,
        narrative: &str,
        config: GenerationConfig,
    ) -> Result<ProjectState, PipelineError> {
        if narrative.trim().is_empty() {
            return Err(PipelineError::EmptyNarrative);
        }
        if config.frame_count < 1 {
            return Err(PipelineError::InvalidFrameCount);
        }
        let project =
            StoryboardProject::new(self.new_project_id(), narrative, config, self.clock.now());
        Ok(ProjectState::new(project))
    }

    /// Sends `request`, parsing each reply with `parse`. A reply that fails
    /// to parse is answered with a corrective user turn naming the broken
    /// rule, up to `max_retries` times. Returns the value and the number of
    /// retries used.
    async fn chat_parsed<T>(
        &self,
        mut request: ChatRequest,
        max_retries: u32,
        parse: impl Fn(&str) -> Result<T, ParseError>,
    ) -> Result<(T, u32), PipelineError> {
        let mut retries = 0;
        loop {
            let reply = self.chat.chat(&request).await?;
            match parse(&reply) {
                Ok(v) => return Ok((v, retries)),
                Err(e) if retries < max_retries => {
                    retries += 1;
                    request.followups.push(ChatTurn {
                        assistant: reply,
                        user: e.corrective_hint(),
                    });
                }
                Err(e) => {
                    return Err(PipelineError::ParseExhausted {
                        attempts: retries + 1,
                        last: e,
                    })
                }
            }
        }
    }

    fn chat_request(&self, cfg: &GenerationConfig, system: String, user: String) -> ChatRequest {
        let mut r = ChatRequest::new(system, user);
        r.model_id = cfg.text_model_id.clone();
        r.temperature = cfg.temperature;
        r
    }

    async fn fetch_style(
        &self,
        state: &ProjectState,
        nonce: Option<i64>,
    ) -> Result<(StyleParameters, u32), PipelineError> {
        let p = &state.project;
        if p.narrative.trim().is_empty() {
            return Err(PipelineError::EmptyNarrative);
        }
        let mut req =
            self.chat_request(&p.config, build_style_system_prompt(), p.narrative.clone());
        req.seed = nonce;
        self.chat_parsed(req, p.config.max_parse_retries, parse_style_reply)
            .await
    }

    /// Step 1: story to style.
    pub async fn generate_style(
        &self,
        state: &mut ProjectState,
    ) -> Result<StyleParameters, PipelineError> {
        let (style, retry_count) = self.fetch_style(state, None).await?;
        let at = state.next_timestamp(&*self.clock);
        state.commit(
            EventPayload::StyleGenerated {
                style: style.clone(),
                retry_count,
            },
            at,
        );
        Ok(style)
    }

    /// Like [`Engine::generate_style`] but with a fresh sampling nonce, so a
    /// different style comes back.
    pub async fn regenerate_style(
        &self,
        state: &mut ProjectState,
    ) -> Result<StyleParameters, PipelineError> {
        let nonce = self.draw();
        let (style, retry_count) = self.fetch_style(state, Some(nonce)).await?;
        let at = state.next_timestamp(&*self.clock);
        state.commit(
            EventPayload::StyleRegenerated {
                previous: state.project.style.clone(),
                style: style.clone(),
                retry_count,
            },
            at,
        );
        Ok(style)
    }

    pub fn reset_style(&self, state: &mut ProjectState) {
        let at = state.next_timestamp(&*self.clock);
        let previous = state.project.style.clone();
        state.commit(EventPayload::StyleReset { previous }, at);
    }

    pub fn edit_style(&self, state: &mut ProjectState, style: StyleParameters) {
        let at = state.next_timestamp(&*self.clock);
        let previous = state.project.style.clone();
        state.commit(EventPayload::StyleEdited { previous, style }, at);
    }

    /// Step 2: story and style to one prompt per frame. Existing images are
    /// kept but their frames become stale.
    pub async fn generate_prompts(
        &self,
        state: &mut ProjectState,
    ) -> Result<Vec<FrameRecord>, PipelineError> {
        let p = &state.project;
        let style = p.style.clone().ok_or(PipelineError::StyleMissing)?;
        let n = p.config.frame_count;
        let system = build_frame_system_prompt(n).map_err(|_| PipelineError::InvalidFrameCount)?;
        let user = compose_frame_user_message(&p.narrative, &style)
            .map_err(|_| PipelineError::EmptyNarrative)?;
        let req = self.chat_request(&p.config, system, user);
        let (parsed, retry_count) = self
            .chat_parsed(req, p.config.max_parse_retries, |raw| {
                parse_frame_reply(raw, n)
            })
            .await?;
        let at = state.next_timestamp(&*self.clock);
        let frames: Vec<FrameRecord> = parsed
            .prompts
            .into_iter()
            .zip(&state.project.frames)
            .map(|(mut prompt, old)| {
                prompt.natural_language = frame_to_natural_language(&prompt);
                (prompt, old)
            })
            .map(|(prompt, old)| FrameRecord {
                index: old.index,
                prompt,
                status: if old.image_ref.is_some() {
                    FrameStatus::Stale
                } else {
                    FrameStatus::PromptReady
                },
                error: None,
                updated_at: at,
                ..old.clone()
            })
            .collect();
        state.commit(
            EventPayload::PromptsGenerated {
                retry_count,
                frames: frames.clone(),
            },
            at,
        );
        Ok(frames)
    }

    fn image_request(
        &self,
        state: &ProjectState,
        frame: &FramePrompt,
        seed: i64,
    ) -> Option<ImageRequest> {
        let p = &state.project;
        let style = p.style.clone().unwrap_or_default();
        let prompt = render_image_prompt(frame, &style, &p.config)?;
        Some(ImageRequest {
            prompt,
            negative_prompt: p.config.negative_prompt.clone(),
            seed,
            width: p.config.image_width,
            height: p.config.image_height,
            steps: p.config.steps,
        })
    }

    async fn render_request(
        &self,
        request: Option<ImageRequest>,
    ) -> Result<Rendered, PipelineError> {
        let request = request.ok_or_else(|| {
            PipelineError::InvalidFrame("general description must be non-empty".into())
        })?;
        let result = self.images.txt2img(&request).await?;
        let image_ref = self.store.put(&result.image_bytes)?;
        Ok(Rendered {
            image_ref,
            seed: result.seed_used,
            latency: result.backend_latency,
        })
    }

    /// Renders `indices` concurrently (bounded by the backend cap) and
    /// commits one `frame-rendered` event per frame, in index order.
    async fn render_frames(
        &self,
        state: &mut ProjectState,
        indices: &[usize],
        trigger: RenderTrigger,
        usage: SeedUse,
    ) -> Vec<(usize, PipelineError)> {
        let policy = state.project.config.seed_policy;
        let jobs: Vec<(usize, Option<ImageRequest>)> = indices
            .iter()
            .map(|&i| {
                let f = &state.project.frames[i];
                let seed = self.seed_for(policy, f, usage);
                (i, self.image_request(state, &f.prompt, seed))
            })
            .collect();
        let cap = self.images.max_concurrency().max(1);
        let results: Vec<_> = stream::iter(jobs)
            .map(|(i, req)| async move { (i, self.render_request(req).await) })
            .buffered(cap)
            .collect()
            .await;
        let mut failures = Vec::new();
        for (i, result) in results {
            let at = state.next_timestamp(&*self.clock);
            let old = &state.project.frames[i];
            let (record, outcome) = match result {
                Ok(r) => rendered_record(old, r, trigger, at),
                Err(e) => {
                    let detail = e.to_string();
                    failures.push((i, e));
                    (
                        failed_record(old, &detail, at),
                        RenderOutcome::Failed { detail },
                    )
                }
            };
            state.commit(
                EventPayload::FrameRendered {
                    trigger,
                    outcome,
                    record,
                },
                at,
            );
        }
        failures
    }

    /// Style (if missing), then prompts, then every frame's image.
    pub async fn resubmit(
        &self,
        state: &mut ProjectState,
    ) -> Result<ResubmitOutcome, PipelineError> {
        if state.project.narrative.trim().is_empty() {
            return Err(PipelineError::EmptyNarrative);
        }
        if !state.project.has_usable_style() {
            self.generate_style(state).await?;
        }
        self.generate_prompts(state).await?;
        let failures = self.render_all(state).await;
        Ok(ResubmitOutcome {
            frames: state.project.frames.clone(),
            failures,
        })
    }

    /// Step 3: renders every frame that has a prompt, whatever its status.
    pub async fn render_all(&self, state: &mut ProjectState) -> Vec<FrameFailure> {
        let all: Vec<usize> = state
            .project
            .frames
            .iter()
            .filter(|f| f.status != FrameStatus::Empty)
            .map(|f| f.index)
            .collect();
        let failures = self
            .render_frames(state, &all, RenderTrigger::Resubmit, SeedUse::Fresh)
            .await;
        to_failures(failures)
    }

    /// Renders only frames that are stale or prompt-ready. Not part of the
    /// Resubmit semantics, which always re-renders everything.
    pub async fn refresh_stale(&self, state: &mut ProjectState) -> Vec<FrameFailure> {
        let todo: Vec<usize> = state
            .project
            .frames
            .iter()
            .filter(|f| {
                matches!(f.status, FrameStatus::Stale | FrameStatus::PromptReady)
                    && f.prompt.is_renderable()
            })
            .map(|f| f.index)
            .collect();
        let failures = self
            .render_frames(state, &todo, RenderTrigger::Resubmit, SeedUse::Fresh)
            .await;
        to_failures(failures)
    }

    /// Re-renders one frame with a new seed (per the seed policy). On failure
    /// nothing changes.
    pub async fn regenerate_frame(
        &self,
        state: &mut ProjectState,
        index: usize,
    ) -> Result<FrameRecord, PipelineError> {
        let frame = state.frame_checked(index)?;
        if frame.status == FrameStatus::Empty || !frame.prompt.is_renderable() {
            return Err(PipelineError::FrameNotReady { index });
        }
        let seed = self.seed_for(state.project.config.seed_policy, frame, SeedUse::Fresh);
        let req = self.image_request(state, &frame.prompt, seed);
        let rendered = self.render_request(req).await?;
        let at = state.next_timestamp(&*self.clock);
        let (record, outcome) = rendered_record(
            &state.project.frames[index],
            rendered,
            RenderTrigger::Regenerate,
            at,
        );
        state.commit(
            EventPayload::FrameRegenerated {
                outcome,
                record: record.clone(),
            },
            at,
        );
        Ok(record)
    }

    fn check_editable(&self, state: &ProjectState, index: usize) -> Result<(), PipelineError> {
        state.frame_checked(index)?;
        if state.project.style.is_none() {
            return Err(PipelineError::StyleMissing);
        }
        Ok(())
    }

    /// Commits an edited prompt as stale, then renders it if asked.
    async fn store_edit(
        &self,
        state: &mut ProjectState,
        index: usize,
        prompt: FramePrompt,
        from_nl: bool,
        render: bool,
    ) -> Result<FrameRecord, PipelineError> {
        let at = state.next_timestamp(&*self.clock);
        let record = FrameRecord {
            prompt,
            status: FrameStatus::Stale,
            error: None,
            updated_at: at,
            ..state.project.frames[index].clone()
        };
        let payload = if from_nl {
            EventPayload::FrameNlEdited { record }
        } else {
            EventPayload::FramePromptEdited { record }
        };
        state.commit(payload, at);
        if render {
            let trigger = if from_nl {
                RenderTrigger::FrameNlEdit
            } else {
                RenderTrigger::FramePromptEdit
            };
            let failures = self
                .render_frames(state, &[index], trigger, SeedUse::Edit)
                .await;
            if let Some((_, e)) = failures.into_iter().next() {
                return Err(e);
            }
        }
        Ok(state.project.frames[index].clone())
    }

    /// Replaces a frame's parameters. The prose view is re-derived.
    pub async fn update_frame_from_parameters(
        &self,
        state: &mut ProjectState,
        index: usize,
        mut prompt: FramePrompt,
        render: bool,
    ) -> Result<FrameRecord, PipelineError> {
        self.check_editable(state, index)?;
        let violations = prompt.violations();
        if !violations.is_empty() {
            let msg: Vec<String> = violations
                .iter()
                .map(|(slot, rule)| format!("{slot}: {rule}"))
                .collect();
            return Err(PipelineError::InvalidFrame(msg.join("; ")));
        }
        prompt.natural_language = frame_to_natural_language(&prompt);
        self.store_edit(state, index, prompt, false, render).await
    }

    /// Re-parameterizes a frame from free text via a one-frame chat request.
    /// The text is kept verbatim as the prose view.
    pub async fn update_frame_from_natural_language(
        &self,
        state: &mut ProjectState,
        index: usize,
        text: &str,
        render: bool,
    ) -> Result<FrameRecord, PipelineError> {
        self.check_editable(state, index)?;
        if text.trim().is_empty() {
            return Err(PipelineError::EmptyText);
        }
        let p = &state.project;
        let style = p.style.clone().unwrap_or_default();
        let system = build_frame_system_prompt(1).map_err(|_| PipelineError::InvalidFrameCount)?;
        let user =
            compose_frame_user_message(text, &style).map_err(|_| PipelineError::EmptyText)?;
        let req = self.chat_request(&p.config, system, user);
        let (parsed, _) = self
            .chat_parsed(req, p.config.max_parse_retries, |raw| {
                parse_frame_reply(raw, 1)
            })
            .await?;
        let mut prompt = parsed
            .prompts
            .into_iter()
            .next()
            .expect("parse_frame_reply(_, 1) yields one prompt");
        prompt.natural_language = text.to_string();
        self.store_edit(state, index, prompt, true, render).await
    }

    /// Replaces the narrative; style and frames go stale. Same text is a
    /// no-op.
    pub fn update_story(
        &self,
        state: &mut ProjectState,
        narrative: &str,
    ) -> Result<(), PipelineError> {
        if narrative.trim().is_empty() {
            return Err(PipelineError::EmptyNarrative);
        }
        if state.project.narrative == narrative {
            return Ok(());
        }
        let at = state.next_timestamp(&*self.clock);
        let previous = state.project.narrative.clone();
        state.commit(
            EventPayload::StoryEdited {
                previous,
                narrative: narrative.to_string(),
            },
            at,
        );
        Ok(())
    }

    pub fn set_frame_count(&self, state: &mut ProjectState, n: usize) -> Result<(), PipelineError> {
        if n < 1 {
            return Err(PipelineError::InvalidFrameCount);
        }
        let at = state.next_timestamp(&*self.clock);
        let from = state.project.frames.len();
        state.commit(EventPayload::FrameCountChanged { from, to: n }, at);
        Ok(())
    }
}

fn to_failures(errors: Vec<(usize, PipelineError)>) -> Vec<FrameFailure> {
    errors
        .into_iter()
        .map(|(index, e)| FrameFailure {
            index,
            detail: e.to_string(),
        })
        .collect()
}

fn rendered_record(
    old: &FrameRecord,
    r: Rendered,
    trigger: RenderTrigger,
    at: Timestamp,
) -> (FrameRecord, RenderOutcome) {
    let mut record = old.clone();
    record.seed = r.seed;
    record.image_ref = Some(r.image_ref.clone());
    record.status = FrameStatus::Rendered;
    record.error = None;
    record.updated_at = at;
    record.lineage.push(LineageEntry {
        timestamp: at,
        trigger,
        image_ref: r.image_ref,
    });
    let outcome = RenderOutcome::Rendered {
        latency_ms: r.latency.as_millis() as u64,
    };
    (record, outcome)
}

/// The prompt stays, any earlier image stays (as stale), the error is noted.
fn failed_record(old: &FrameRecord, detail: &str, at: Timestamp) -> FrameRecord {
    let mut record = old.clone();
    record.status = if old.image_ref.is_some() {
        FrameStatus::Stale
    } else {
        FrameStatus::PromptReady
    };
    record.error = Some(detail.to_string());
    record.updated_at = at;
    record
}
