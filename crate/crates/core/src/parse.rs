//! Parsers for the model's structured replies.

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::frame::{FramePrompt, FrameSlot};
use crate::grammar::{payload_pairs, resolve_key, split_blocks};
use crate::style::{StyleField, StyleParameters};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no Name:{{value}} block found")]
    NoBlockFound,
    #[error("parameter {name:?} appears twice with conflicting values")]
    DuplicateParameter { name: String },
    #[error("expected {expected} prompt blocks, found {found}")]
    BlockCountMismatch { found: usize, expected: usize },
    #[error("prompt block {index} has no General description")]
    MissingGeneralDescription { index: usize },
    #[error("prompt count must be at least 1")]
    InvalidCount,
}

impl ParseError {
    /// A short instruction naming the grammar rule the reply broke, suitable
    /// for a corrective follow-up turn.
    pub fn corrective_hint(&self) -> String {
        use alloc::format;
        match self {
            ParseError::NoBlockFound => {
                "Your reply did not contain any parameters in the form Name:{value}.".into()
            }
            ParseError::DuplicateParameter { name } => format!(
                "Your reply gave the parameter \"{name}\" more than once with different values; give each parameter exactly once."
            ),
            ParseError::BlockCountMismatch { found, expected } => format!(
                "Your reply contained {found} prompts but exactly {expected} are required, one per part, separated by blank lines."
            ),
            ParseError::MissingGeneralDescription { index } => format!(
                "Prompt {} is missing the required General description: {{}} parameter.",
                index + 1
            ),
            ParseError::InvalidCount => "At least one prompt is required.".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseWarning {
    /// A parameter name that maps to no known slot; its value was dropped.
    UnknownParameter { block: usize, name: String },
    /// Two spellings of one slot in the same block; the first was kept.
    ConflictingAlias { block: usize, slot: &'static str },
    /// A block whose names all were unknown; it was not counted.
    DroppedBlock { names: Vec<String> },
}

fn style_table() -> Vec<(&'static str, StyleField)> {
    StyleField::ALL
        .iter()
        .flat_map(|&f| f.aliases().iter().map(move |&a| (a, f)))
        .collect()
}

fn frame_table() -> Vec<(&'static str, FrameSlot)> {
    FrameSlot::ALL
        .iter()
        .flat_map(|&s| s.aliases().iter().map(move |&a| (a, s)))
        .collect()
}

/// Extracts the nine style slots from a reply. Prose and code fences around
/// the block are tolerated; slots may appear in any order; missing slots are
/// left empty.
pub fn parse_style_reply(raw: &str) -> Result<StyleParameters, ParseError> {
    parse_style_reply_with_warnings(raw).map(|(s, _)| s)
}

pub fn parse_style_reply_with_warnings(
    raw: &str,
) -> Result<(StyleParameters, Vec<ParseWarning>), ParseError> {
    let table = style_table();
    let mut style = StyleParameters::default();
    let mut seen: Vec<StyleField> = Vec::new();
    let mut warnings = Vec::new();
    for (_, pair) in payload_pairs(raw) {
        let Some(field) = resolve_key(&pair.key, &table) else {
            warnings.push(ParseWarning::UnknownParameter {
                block: 0,
                name: pair.name,
            });
            continue;
        };
        if seen.contains(&field) {
            if style.get(field) != pair.value {
                return Err(ParseError::DuplicateParameter {
                    name: field.label().into(),
                });
            }
            continue;
        }
        seen.push(field);
        *style.get_mut(field) = pair.value;
    }
    if seen.is_empty() {
        return Err(ParseError::NoBlockFound);
    }
    Ok((style, warnings))
}

/// Frame prompts parsed from one reply, plus non-fatal findings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedFrames {
    pub prompts: Vec<FramePrompt>,
    pub warnings: Vec<ParseWarning>,
}

/// Splits a reply into exactly `n` frame prompts. Each prompt's
/// `natural_language` is set to its general description.
pub fn parse_frame_reply(raw: &str, n: usize) -> Result<ParsedFrames, ParseError> {
    if n == 0 {
        return Err(ParseError::InvalidCount);
    }
    let table = frame_table();
    let mut warnings = Vec::new();
    let mut blocks = Vec::new();
    for block in split_blocks(raw) {
        let known = block
            .pairs
            .iter()
            .any(|p| resolve_key(&p.key, &table).is_some());
        if known {
            blocks.push(block);
        } else {
            warnings.push(ParseWarning::DroppedBlock {
                names: block.pairs.into_iter().map(|p| p.name).collect(),
            });
        }
    }
    if blocks.len() != n {
        return Err(ParseError::BlockCountMismatch {
            found: blocks.len(),
            expected: n,
        });
    }

    let mut prompts = Vec::with_capacity(n);
    for (index, block) in blocks.into_iter().enumerate() {
        let mut prompt = FramePrompt::default();
        let mut seen: Vec<FrameSlot> = Vec::new();
        for pair in block.pairs {
            match resolve_key(&pair.key, &table) {
                None => warnings.push(ParseWarning::UnknownParameter {
                    block: index,
                    name: pair.name,
                }),
                Some(slot) if seen.contains(&slot) => {
                    warnings.push(ParseWarning::ConflictingAlias {
                        block: index,
                        slot: slot.label(),
                    })
                }
                Some(slot) => {
                    seen.push(slot);
                    prompt.set(slot, Some(pair.value));
                }
            }
        }
        if !prompt.is_renderable() {
            return Err(ParseError::MissingGeneralDescription { index });
        }
        prompt.natural_language = prompt.general_description.clone();
        prompts.push(prompt);
    }
    Ok(ParsedFrames { prompts, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::string::ToString;

    const STYLE_EXAMPLE: &str = "Age:{5-7}, Gender:{female}, Hair:{brown curl}, Clothing:{blue dress}, Scene:{under the soft glow of her desk lamp}, Location:{Indoor, in Cindy's warm and comfortable bedroom}, Color:{warm tones}, Art type:{realistic}, Lens and Shot:{Medium Shot}";

    #[test]
    fn style_example_parses_every_slot() {
        let s = parse_style_reply(STYLE_EXAMPLE).unwrap();
        assert_eq!(s.age, "5-7");
        assert_eq!(
            s.location,
            "Indoor, in Cindy's warm and comfortable bedroom"
        );
        assert_eq!(s.lens_and_shot, "Medium Shot");
        assert_eq!(s.serialize(), STYLE_EXAMPLE);
    }

    #[test]
    fn style_reordered_and_partial() {
        let s = parse_style_reply("Color:{red}\nAge:{40}").unwrap();
        assert_eq!((s.age.as_str(), s.color.as_str()), ("40", "red"));
        assert!(s.hair.is_empty());
    }

    #[test]
    fn style_no_block() {
        assert_eq!(
            parse_style_reply("hello world"),
            Err(ParseError::NoBlockFound)
        );
        assert_eq!(
            parse_style_reply("Mood:{calm}"),
            Err(ParseError::NoBlockFound)
        );
    }

    #[test]
    fn style_duplicates() {
        assert_eq!(parse_style_reply("Age:{1}, Age:{1}").unwrap().age, "1");
        assert_eq!(
            parse_style_reply("Age:{1}, Age:{2}"),
            Err(ParseError::DuplicateParameter {
                name: "Age".to_string()
            })
        );
    }

    #[test]
    fn style_unknown_names_are_warnings() {
        let (s, w) = parse_style_reply_with_warnings("Age:{1}, Mood:{calm}").unwrap();
        assert_eq!(s.age, "1");
        assert_eq!(
            w,
            [ParseWarning::UnknownParameter {
                block: 0,
                name: "Mood".into()
            }]
        );
    }

    #[test]
    fn frame_missing_general_description() {
        let raw = "General description: {a}\n\nPerson: {b}";
        assert_eq!(
            parse_frame_reply(raw, 2),
            Err(ParseError::MissingGeneralDescription { index: 1 })
        );
    }

    #[test]
    fn frame_count_mismatch() {
        let raw = "General description: {a}\n\nGeneral description: {b}";
        assert_eq!(
            parse_frame_reply(raw, 3),
            Err(ParseError::BlockCountMismatch {
                found: 2,
                expected: 3
            })
        );
        assert_eq!(
            parse_frame_reply("", 1),
            Err(ParseError::BlockCountMismatch {
                found: 0,
                expected: 1
            })
        );
        assert_eq!(parse_frame_reply(raw, 0), Err(ParseError::InvalidCount));
    }

    #[test]
    fn frame_unknown_parameter_is_dropped_with_warning() {
        let p = parse_frame_reply("General description: {a}, Lighting: {dim}", 1).unwrap();
        assert_eq!(p.prompts[0].populated_count(), 1);
        assert_eq!(p.warnings.len(), 1);
    }

    #[test]
    fn frame_people_alias_maps_to_person() {
        let p = parse_frame_reply("General description: {a}, People: {two kids}", 1).unwrap();
        assert_eq!(p.prompts[0].person.as_deref(), Some("two kids"));
    }

    #[test]
    fn frame_prose_only_block_is_dropped() {
        let raw = "Sure! Note: {these follow}\n\nGeneral description: {a}";
        let p = parse_frame_reply(raw, 1).unwrap();
        assert!(matches!(p.warnings[0], ParseWarning::DroppedBlock { .. }));
    }

    #[test]
    fn corrective_hints_name_the_rule() {
        let h = ParseError::BlockCountMismatch {
            found: 5,
            expected: 6,
        }
        .corrective_hint();
        assert!(h.contains('5') && h.contains('6'), "{h}");
        let h = ParseError::MissingGeneralDescription { index: 0 }.corrective_hint();
        assert!(h.contains("General description"), "{}", format!("{h}"));
    }
}
