//! Per-frame parameterized prompt.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

/// The eight frame-level slots, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FrameSlot {
    GeneralDescription,
    Object,
    Person,
    Action,
    Emotion,
    Background,
    Style,
    Shot,
}

impl FrameSlot {
    pub const ALL: [FrameSlot; 8] = [
        FrameSlot::GeneralDescription,
        FrameSlot::Object,
        FrameSlot::Person,
        FrameSlot::Action,
        FrameSlot::Emotion,
        FrameSlot::Background,
        FrameSlot::Style,
        FrameSlot::Shot,
    ];

    pub fn label(self) -> &'static str {
        match self {
            FrameSlot::GeneralDescription => "General description",
            FrameSlot::Object => "Object",
            FrameSlot::Person => "Person",
            FrameSlot::Action => "Action",
            FrameSlot::Emotion => "Emotion",
            FrameSlot::Background => "Background",
            FrameSlot::Style => "Style",
            FrameSlot::Shot => "Shot",
        }
    }

    pub(crate) fn aliases(self) -> &'static [&'static str] {
        match self {
            FrameSlot::GeneralDescription => &["general description"],
            FrameSlot::Object => &["object", "objects"],
            // the template's own parameter description says "People"
            FrameSlot::Person => &["person", "people", "persons"],
            FrameSlot::Action => &["action", "actions"],
            FrameSlot::Emotion => &["emotion", "emotions"],
            FrameSlot::Background => &["background"],
            FrameSlot::Style => &["style"],
            FrameSlot::Shot => &["shot"],
        }
    }

    /// Snake-case key used in JSON bodies.
    pub fn key(self) -> &'static str {
        match self {
            FrameSlot::GeneralDescription => "general_description",
            FrameSlot::Object => "object",
            FrameSlot::Person => "person",
            FrameSlot::Action => "action",
            FrameSlot::Emotion => "emotion",
            FrameSlot::Background => "background",
            FrameSlot::Style => "style",
            FrameSlot::Shot => "shot",
        }
    }
}

impl fmt::Display for FrameSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One frame's prompt: up to eight named slots plus its prose form.
///
/// `general_description` is required for a frame to be rendered; the other
/// seven slots are `None` when unpopulated and never `Some("")`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FramePrompt {
    pub general_description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub person: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emotion: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shot: Option<String>,
    #[serde(default)]
    pub natural_language: String,
}

impl FramePrompt {
    pub fn new(general_description: impl Into<String>) -> Self {
        let general_description = general_description.into();
        FramePrompt {
            natural_language: general_description.clone(),
            general_description,
            ..FramePrompt::default()
        }
    }

    /// The slot value, or `None` when unpopulated. An empty general
    /// description counts as unpopulated.
    pub fn get(&self, slot: FrameSlot) -> Option<&str> {
        let v = match slot {
            FrameSlot::GeneralDescription => Some(self.general_description.as_str()),
            FrameSlot::Object => self.object.as_deref(),
            FrameSlot::Person => self.person.as_deref(),
            FrameSlot::Action => self.action.as_deref(),
            FrameSlot::Emotion => self.emotion.as_deref(),
            FrameSlot::Background => self.background.as_deref(),
            FrameSlot::Style => self.style.as_deref(),
            FrameSlot::Shot => self.shot.as_deref(),
        };
        v.filter(|s| !s.is_empty())
    }

    /// Sets a slot. Empty (or whitespace-only) values clear optional slots.
    pub fn set(&mut self, slot: FrameSlot, value: Option<String>) {
        let value = value.filter(|v| !v.trim().is_empty());
        let target = match slot {
            FrameSlot::GeneralDescription => {
                self.general_description = value.unwrap_or_default();
                return;
            }
            FrameSlot::Object => &mut self.object,
            FrameSlot::Person => &mut self.person,
            FrameSlot::Action => &mut self.action,
            FrameSlot::Emotion => &mut self.emotion,
            FrameSlot::Background => &mut self.background,
            FrameSlot::Style => &mut self.style,
            FrameSlot::Shot => &mut self.shot,
        };
        *target = value;
    }

    /// Populated slots in canonical order.
    pub fn populated(&self) -> impl Iterator<Item = (FrameSlot, &str)> + '_ {
        FrameSlot::ALL
            .iter()
            .filter_map(move |&s| self.get(s).map(|v| (s, v)))
    }

    pub fn populated_count(&self) -> usize {
        self.populated().count()
    }

    /// True when the prompt can be sent to an image model.
    pub fn is_renderable(&self) -> bool {
        !self.general_description.trim().is_empty()
    }

    /// Rule violations of the frame-prompt invariants, as `(slot key, rule)`.
    pub fn violations(&self) -> Vec<(&'static str, &'static str)> {
        let mut out = Vec::new();
        if !self.is_renderable() {
            out.push(("general_description", "must be non-empty"));
        }
        for slot in &FrameSlot::ALL[1..] {
            let raw = match slot {
                FrameSlot::Object => &self.object,
                FrameSlot::Person => &self.person,
                FrameSlot::Action => &self.action,
                FrameSlot::Emotion => &self.emotion,
                FrameSlot::Background => &self.background,
                FrameSlot::Style => &self.style,
                FrameSlot::Shot => &self.shot,
                FrameSlot::GeneralDescription => unreachable!(),
            };
            if matches!(raw, Some(v) if v.trim().is_empty()) {
                out.push((slot.key(), "populated slots must be non-empty"));
            }
        }
        out
    }

    /// Renders populated slots as `General description: {..}, Person: {..}`.
    pub fn serialize(&self) -> String {
        let parts: Vec<String> = self
            .populated()
            .map(|(s, v)| alloc::format!("{}: {{{}}}", s.label(), v))
            .collect();
        parts.join(", ")
    }
}
