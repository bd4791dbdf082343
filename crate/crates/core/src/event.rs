//! Append-only pipeline event log.
//!
//! Every project mutation is expressed as an [`EventPayload`] and applied
//! with [`StoryboardProject::apply`]; folding a project's log with
//! [`replay`] therefore reproduces its current state exactly. Payloads carry
//! complete replacement records rather than deltas so the fold needs no
//! access to models or image storage.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::project::{FrameRecord, ProjectId, RenderTrigger, StoryboardProject, Timestamp};
use crate::style::StyleParameters;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    ProjectCreated,
    StyleGenerated,
    StyleRegenerated,
    StyleReset,
    StyleEdited,
    PromptsGenerated,
    FrameRendered,
    FrameRegenerated,
    FramePromptEdited,
    FrameNlEdited,
    StoryEdited,
    FrameCountChanged,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::ProjectCreated => "project-created",
            EventKind::StyleGenerated => "style-generated",
            EventKind::StyleRegenerated => "style-regenerated",
            EventKind::StyleReset => "style-reset",
            EventKind::StyleEdited => "style-edited",
            EventKind::PromptsGenerated => "prompts-generated",
            EventKind::FrameRendered => "frame-rendered",
            EventKind::FrameRegenerated => "frame-regenerated",
            EventKind::FramePromptEdited => "frame-prompt-edited",
            EventKind::FrameNlEdited => "frame-nl-edited",
            EventKind::StoryEdited => "story-edited",
            EventKind::FrameCountChanged => "frame-count-changed",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "kebab-case")]
pub enum RenderOutcome {
    Rendered { latency_ms: u64 },
    Failed { detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "kebab-case")]
pub enum EventPayload {
    ProjectCreated {
        project: Box<StoryboardProject>,
    },
    StyleGenerated {
        style: StyleParameters,
        retry_count: u32,
    },
    StyleRegenerated {
        previous: Option<StyleParameters>,
        style: StyleParameters,
        retry_count: u32,
    },
    StyleReset {
        previous: Option<StyleParameters>,
    },
    StyleEdited {
        previous: Option<StyleParameters>,
        style: StyleParameters,
    },
    PromptsGenerated {
        retry_count: u32,
        frames: Vec<FrameRecord>,
    },
    FrameRendered {
        trigger: RenderTrigger,
        outcome: RenderOutcome,
        record: FrameRecord,
    },
    FrameRegenerated {
        outcome: RenderOutcome,
        record: FrameRecord,
    },
    FramePromptEdited {
        record: FrameRecord,
    },
    FrameNlEdited {
        record: FrameRecord,
    },
    StoryEdited {
        previous: String,
        narrative: String,
    },
    FrameCountChanged {
        from: usize,
        to: usize,
    },
}

impl EventPayload {
    pub fn kind(&self) -> EventKind {
        match self {
            EventPayload::ProjectCreated { .. } => EventKind::ProjectCreated,
            EventPayload::StyleGenerated { .. } => EventKind::StyleGenerated,
            EventPayload::StyleRegenerated { .. } => EventKind::StyleRegenerated,
            EventPayload::StyleReset { .. } => EventKind::StyleReset,
            EventPayload::StyleEdited { .. } => EventKind::StyleEdited,
            EventPayload::PromptsGenerated { .. } => EventKind::PromptsGenerated,
            EventPayload::FrameRendered { .. } => EventKind::FrameRendered,
            EventPayload::FrameRegenerated { .. } => EventKind::FrameRegenerated,
            EventPayload::FramePromptEdited { .. } => EventKind::FramePromptEdited,
            EventPayload::FrameNlEdited { .. } => EventKind::FrameNlEdited,
            EventPayload::StoryEdited { .. } => EventKind::StoryEdited,
            EventPayload::FrameCountChanged { .. } => EventKind::FrameCountChanged,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineEvent {
    pub project_id: ProjectId,
    /// Position in the project's log, starting at 0.
    pub seq: u64,
    pub timestamp: Timestamp,
    #[serde(flatten)]
    pub payload: EventPayload,
}

impl PipelineEvent {
    pub fn kind(&self) -> EventKind {
        self.payload.kind()
    }
}

impl StoryboardProject {
    /// Applies one event. This is the only place project state transitions
    /// are defined.
    pub fn apply(&mut self, event: &PipelineEvent) {
        let at = event.timestamp;
        match &event.payload {
            EventPayload::ProjectCreated { project } => {
                *self = (**project).clone();
            }
            EventPayload::StyleGenerated { style, .. }
            | EventPayload::StyleRegenerated { style, .. }
            | EventPayload::StyleEdited { style, .. } => {
                self.style = Some(style.clone());
                self.style_stale = false;
                self.frames.iter_mut().for_each(|f| f.mark_stale(at));
            }
            EventPayload::StyleReset { .. } => {
                if self.style.is_some() {
                    self.style = Some(StyleParameters::default());
                    self.frames.iter_mut().for_each(|f| f.mark_stale(at));
                }
                self.style_stale = false;
            }
            EventPayload::PromptsGenerated { frames, .. } => {
                for r in frames {
                    self.replace_frame(r);
                }
            }
            EventPayload::FrameRendered { record, .. }
            | EventPayload::FrameRegenerated { record, .. }
            | EventPayload::FramePromptEdited { record }
            | EventPayload::FrameNlEdited { record } => self.replace_frame(record),
            EventPayload::StoryEdited { narrative, .. } => {
                self.narrative = narrative.clone();
                if self.style.is_some() {
                    self.style_stale = true;
                }
                self.frames.iter_mut().for_each(|f| f.mark_stale(at));
            }
            EventPayload::FrameCountChanged { to, .. } => self.resize(*to, at),
        }
        if at > self.updated {
            self.updated = at;
        }
    }

    fn replace_frame(&mut self, record: &FrameRecord) {
        if let Some(slot) = self.frames.get_mut(record.index) {
            *slot = record.clone();
        }
    }
}

/// Folds a log from nothing. The first event must be `project-created`;
/// returns `None` for an empty log or one that starts otherwise.
pub fn replay<'a, I>(events: I) -> Option<StoryboardProject>
where
    I: IntoIterator<Item = &'a PipelineEvent>,
{
    let mut iter = events.into_iter();
    let first = iter.next()?;
    let EventPayload::ProjectCreated { project } = &first.payload else {
        return None;
    };
    let mut state = (**project).clone();
    for e in iter {
        state.apply(e);
    }
    Some(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::GenerationConfig;
    use crate::frame::FramePrompt;
    use crate::project::{FrameStatus, ImageRef};

    fn ev(seq: u64, ts: u64, payload: EventPayload) -> PipelineEvent {
        PipelineEvent {
            project_id: ProjectId("p".into()),
            seq,
            timestamp: Timestamp(ts),
            payload,
        }
    }

    fn base() -> StoryboardProject {
        let cfg = GenerationConfig {
            frame_count: 2,
            ..GenerationConfig::default()
        };
        StoryboardProject::new(ProjectId("p".into()), "story", cfg, Timestamp(1))
    }

    #[test]
    fn style_change_marks_non_empty_frames_stale() {
        let mut p = base();
        p.style = Some(StyleParameters::default());
        p.frames[0].status = FrameStatus::Rendered;
        p.frames[0].prompt = FramePrompt::new("x");
        p.frames[0].image_ref = Some(ImageRef("h".into()));
        p.apply(&ev(
            1,
            5,
            EventPayload::StyleEdited {
                previous: None,
                style: StyleParameters::default(),
            },
        ));
        assert_eq!(p.frames[0].status, FrameStatus::Stale);
        assert_eq!(p.frames[0].updated_at, Timestamp(5));
        assert_eq!(p.frames[1].status, FrameStatus::Empty);
        assert_eq!(p.frames[1].updated_at, Timestamp(1));
        assert_eq!(p.updated, Timestamp(5));
    }

    #[test]
    fn reset_without_style_is_a_no_op() {
        let mut p = base();
        let before = p.clone();
        p.apply(&ev(1, 1, EventPayload::StyleReset { previous: None }));
        assert_eq!(p, before);
    }

    #[test]
    fn replay_requires_creation_event() {
        assert!(replay(&[]).is_none());
        let e = ev(0, 1, EventPayload::StyleReset { previous: None });
        assert!(replay(&[e]).is_none());
    }

    #[test]
    fn replay_folds_in_order() {
        let p = base();
        let log = [
            ev(
                0,
                1,
                EventPayload::ProjectCreated {
                    project: Box::new(p.clone()),
                },
            ),
            ev(
                1,
                2,
                EventPayload::StoryEdited {
                    previous: "story".into(),
                    narrative: "new".into(),
                },
            ),
            ev(2, 3, EventPayload::FrameCountChanged { from: 2, to: 3 }),
        ];
        let r = replay(&log).unwrap();
        assert_eq!(r.narrative, "new");
        assert_eq!(r.frames.len(), 3);
        assert!(!r.style_stale);
        assert_eq!(r.updated, Timestamp(3));
    }

    #[test]
    fn event_json_shape() {
        let e = ev(3, 9, EventPayload::FrameCountChanged { from: 6, to: 4 });
        let v: serde_json::Value = serde_json::to_value(&e).unwrap();
        assert_eq!(v["kind"], "frame-count-changed");
        assert_eq!(v["payload"]["to"], 4);
        assert_eq!(v["seq"], 3);
        let back: PipelineEvent = serde_json::from_value(v).unwrap();
        assert_eq!(back, e);
    }
}
