//! Deterministic renderings of a frame: the flat image-model prompt and the
//! prose description.

use alloc::string::String;
use alloc::vec::Vec;

use crate::config::GenerationConfig;
use crate::frame::{FramePrompt, FrameSlot};
use crate::style::{StyleField, StyleParameters};

/// Labels that must never reach the image model followed by a colon.
fn parameter_labels() -> impl Iterator<Item = &'static str> {
    FrameSlot::ALL
        .iter()
        .map(|s| s.label())
        .chain(StyleField::ALL.iter().map(|f| f.label()))
        .chain(["People"])
}

/// Drops braces, and drops a colon that directly follows a parameter label.
fn sanitize(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    for c in value.chars() {
        match c {
            '{' | '}' => {}
            ':' => {
                let tail = out.trim_end().to_lowercase();
                let labelled = parameter_labels().any(|l| tail.ends_with(&l.to_lowercase()));
                if !labelled {
                    out.push(':');
                }
            }
            _ => out.push(c),
        }
    }
    out.trim().into()
}

/// Frame slot values in canonical order, then style phrases: character
/// descriptors (only when the frame names no person), art type, color and
/// lens/shot. Phrases are comma-separated; case-insensitive duplicates are
/// dropped. Returns `None` when the frame has no general description.
pub fn render_image_prompt(
    frame: &FramePrompt,
    style: &StyleParameters,
    _config: &GenerationConfig,
) -> Option<String> {
    if !frame.is_renderable() {
        return None;
    }
    let mut phrases: Vec<String> = Vec::new();
    let mut push = |raw: &str| {
        let p = sanitize(raw);
        if !p.is_empty() && !phrases.iter().any(|q| q.eq_ignore_ascii_case(&p)) {
            phrases.push(p);
        }
    };
    for (_, value) in frame.populated() {
        push(value);
    }
    if frame.get(FrameSlot::Person).is_none() {
        for f in [
            StyleField::Age,
            StyleField::Gender,
            StyleField::Hair,
            StyleField::Clothing,
        ] {
            push(style.get(f));
        }
    }
    for f in [
        StyleField::ArtType,
        StyleField::Color,
        StyleField::LensAndShot,
    ] {
        push(style.get(f));
    }
    Some(phrases.join(", "))
}

/// One sentence: the general description, then `showing <object>`,
/// `featuring <person>`, `who is <action>`, `feeling <emotion>`,
/// `in <background>` and a parenthesized `(<style>, <shot>)`, each only when
/// populated.
pub fn frame_to_natural_language(frame: &FramePrompt) -> String {
    let mut out = String::from(frame.general_description.trim());
    let clauses = [
        (FrameSlot::Object, "showing "),
        (FrameSlot::Person, "featuring "),
        (FrameSlot::Action, "who is "),
        (FrameSlot::Emotion, "feeling "),
        (FrameSlot::Background, "in "),
    ];
    for (slot, lead) in clauses {
        if let Some(v) = frame.get(slot) {
            if !out.is_empty() {
                out.push_str(", ");
            }
            out.push_str(lead);
            out.push_str(v.trim());
        }
    }
    let tail: Vec<&str> = [FrameSlot::Style, FrameSlot::Shot]
        .iter()
        .filter_map(|&s| frame.get(s).map(str::trim))
        .collect();
    if !tail.is_empty() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push('(');
        out.push_str(&tail.join(", "));
        out.push(')');
    }
    out
}
