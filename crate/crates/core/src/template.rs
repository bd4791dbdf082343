//! The two system prompts and the frame-request user message.

use alloc::string::{String, ToString};

use thiserror::Error;

use crate::style::StyleParameters;

/// Literal token replaced by the requested frame count.
pub const PLACEHOLDER: &str = "PIC-NUM-NEEDED";

/// Separates the narrative from the serialized style in the frame request.
pub const STORY_STYLE_DELIMITER: &str = "//";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TemplateId {
    StoryToStyle,
    StoryToPrompt,
}

impl TemplateId {
    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::StoryToStyle => "story-to-style",
            TemplateId::StoryToPrompt => "story-to-prompt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub version: u32,
    pub body: &'static str,
}

impl PromptTemplate {
    pub const STORY_TO_STYLE: PromptTemplate = PromptTemplate {
        id: TemplateId::StoryToStyle,
        version: 1,
        body: include_str!("../templates/v1/story_to_style.txt"),
    };

    pub const STORY_TO_PROMPT: PromptTemplate = PromptTemplate {
        id: TemplateId::StoryToPrompt,
        version: 1,
        body: include_str!("../templates/v1/story_to_prompt.txt"),
    };

    pub fn get(id: TemplateId) -> PromptTemplate {
        match id {
            TemplateId::StoryToStyle => Self::STORY_TO_STYLE,
            TemplateId::StoryToPrompt => Self::STORY_TO_PROMPT,
        }
    }

    pub fn placeholder_count(&self) -> usize {
        self.body.matches(PLACEHOLDER).count()
    }

    /// Body with every placeholder replaced by `n`, trailing whitespace
    /// trimmed from every line.
    pub fn render(&self, n: usize) -> String {
        normalize(&self.body.replace(PLACEHOLDER, &n.to_string()))
    }
}

fn normalize(body: &str) -> String {
    let mut out = String::with_capacity(body.len());
    for line in body.trim_end().lines() {
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("prompt count must be at least 1")]
    InvalidCount,
    #[error("narrative must not be empty")]
    EmptyNarrative,
}

pub fn build_style_system_prompt() -> String {
    normalize(PromptTemplate::STORY_TO_STYLE.body)
}

pub fn build_frame_system_prompt(n: usize) -> Result<String, TemplateError> {
    if n < 1 {
        return Err(TemplateError::InvalidCount);
    }
    Ok(PromptTemplate::STORY_TO_PROMPT.render(n))
}

/// `narrative//Age:{..}, ..., Lens and Shot:{..}`. The narrative is passed
/// through as-is, including any `//` it contains.
pub fn compose_frame_user_message(
    narrative: &str,
    style: &StyleParameters,
) -> Result<String, TemplateError> {
    if narrative.trim().is_empty() {
        return Err(TemplateError::EmptyNarrative);
    }
    let mut out = String::from(narrative);
    out.push_str(STORY_STYLE_DELIMITER);
    out.push_str(&style.serialize());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn placeholder_counts() {
        assert_eq!(PromptTemplate::STORY_TO_STYLE.placeholder_count(), 0);
        assert!(PromptTemplate::STORY_TO_PROMPT.placeholder_count() >= 1);
    }

    #[test]
    fn style_prompt_is_stable_and_carries_example() {
        let a = build_style_system_prompt();
        assert_eq!(a, build_style_system_prompt());
        assert!(a.contains("never output any stories"));
        assert!(a.contains("Age:{5-7}, Gender:{female}, Hair:{brown curl}"));
        assert!(a.contains("Lens and Shot:{Medium Shot}"));
    }

    #[test]
    fn frame_prompt_substitutes_literally() {
        let six = build_frame_system_prompt(6).unwrap();
        assert!(six.contains("generate 6 prompts"));
        assert!(!six.contains(PLACEHOLDER));
        let one = build_frame_system_prompt(1).unwrap();
        assert!(one.contains("generate 1 prompts"));
        assert_eq!(
            build_frame_system_prompt(0),
            Err(TemplateError::InvalidCount)
        );
    }

    #[test]
    fn user_message_shape() {
        let msg = compose_frame_user_message("A boy walks his dog.", &StyleParameters::default())
            .unwrap();
        assert!(msg.starts_with("A boy walks his dog.//Age:{}, Gender:{}"));
        assert_eq!(msg.matches(":{}").count(), 9);
        let msg = compose_frame_user_message("a//b", &StyleParameters::default()).unwrap();
        assert!(msg.starts_with("a//b//Age:{}"));
        assert_eq!(
            compose_frame_user_message("  ", &StyleParameters::default()),
            Err(TemplateError::EmptyNarrative)
        );
    }

    #[test]
    fn normalization_only_touches_trailing_whitespace() {
        assert_eq!(normalize("a  \nb\t\n\n"), "a\nb\n");
    }
}
