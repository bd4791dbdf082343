//! Generation settings carried by every project.

use alloc::string::String;

use serde::{Deserialize, Serialize};

/// How image seeds are assigned.
///
/// - `Fixed`: every render uses the same seed.
/// - `RandomPerFrame`: each frame draws a seed on Resubmit and on an explicit
///   regenerate; prompt edits that render keep the frame's seed.
/// - `RandomPerRegeneration`: every render draws a fresh seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SeedPolicy {
    Fixed(i64),
    RandomPerFrame,
    #[default]
    RandomPerRegeneration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub frame_count: usize,
    pub image_width: u32,
    pub image_height: u32,
    pub seed_policy: SeedPolicy,
    pub text_model_id: String,
    pub image_model_id: String,
    pub negative_prompt: String,
    pub max_parse_retries: u32,
    pub steps: u32,
    pub temperature: f32,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            frame_count: 6,
            image_width: 512,
            image_height: 512,
            seed_policy: SeedPolicy::default(),
            text_model_id: "gpt-4".into(),
            image_model_id: "deliberate_v2".into(),
            negative_prompt: String::new(),
            max_parse_retries: 2,
            steps: 20,
            temperature: 1.0,
        }
    }
}

/// txt2img backends work on latent tiles of 8 pixels.
pub fn is_valid_dimension(px: u32) -> bool {
    px > 0 && px.is_multiple_of(8)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = GenerationConfig::default();
        assert_eq!(
            (c.frame_count, c.image_width, c.image_height),
            (6, 512, 512)
        );
        assert_eq!(c.max_parse_retries, 2);
        assert!(c.negative_prompt.is_empty());
    }

    #[test]
    fn dimension_rule() {
        assert!(is_valid_dimension(512));
        assert!(!is_valid_dimension(511));
        assert!(!is_valid_dimension(0));
    }

    #[test]
    fn seed_policy_wire_shape() {
        let s = serde_json::to_string(&SeedPolicy::Fixed(7)).unwrap();
        assert_eq!(s, r#"{"fixed":7}"#);
        let s = serde_json::to_string(&SeedPolicy::RandomPerFrame).unwrap();
        assert_eq!(s, r#""random-per-frame""#);
    }
}
