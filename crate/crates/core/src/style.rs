//! Storyboard-level style: nine free-text slots shared by every frame.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

/// One of the nine style slots, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StyleField {
    Age,
    Gender,
    Hair,
    Clothing,
    Scene,
    Location,
    Color,
    ArtType,
    LensAndShot,
}

impl StyleField {
    pub const ALL: [StyleField; 9] = [
        StyleField::Age,
        StyleField::Gender,
        StyleField::Hair,
        StyleField::Clothing,
        StyleField::Scene,
        StyleField::Location,
        StyleField::Color,
        StyleField::ArtType,
        StyleField::LensAndShot,
    ];

    /// The label used in the `Label:{value}` grammar.
    pub fn label(self) -> &'static str {
        match self {
            StyleField::Age => "Age",
            StyleField::Gender => "Gender",
            StyleField::Hair => "Hair",
            StyleField::Clothing => "Clothing",
            StyleField::Scene => "Scene",
            StyleField::Location => "Location",
            StyleField::Color => "Color",
            StyleField::ArtType => "Art type",
            StyleField::LensAndShot => "Lens and Shot",
        }
    }

    /// Canonical (lowercase, single-spaced) spellings accepted for this slot.
    pub(crate) fn aliases(self) -> &'static [&'static str] {
        match self {
            StyleField::Age => &["age"],
            StyleField::Gender => &["gender"],
            StyleField::Hair => &["hair"],
            StyleField::Clothing => &["clothing", "clothes"],
            StyleField::Scene => &["scene"],
            StyleField::Location => &["location"],
            StyleField::Color => &["color", "colour", "colors", "colours"],
            StyleField::ArtType => &["art type", "art style"],
            StyleField::LensAndShot => &["lens and shot", "lens & shot", "lens and shots"],
        }
    }
}

impl fmt::Display for StyleField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// The nine style slots. Empty slots are empty strings, never absent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StyleParameters {
    pub age: String,
    pub gender: String,
    pub hair: String,
    pub clothing: String,
    pub scene: String,
    pub location: String,
    pub color: String,
    pub art_type: String,
    pub lens_and_shot: String,
}

impl StyleParameters {
    pub fn get(&self, field: StyleField) -> &str {
        match field {
            StyleField::Age => &self.age,
            StyleField::Gender => &self.gender,
            StyleField::Hair => &self.hair,
            StyleField::Clothing => &self.clothing,
            StyleField::Scene => &self.scene,
            StyleField::Location => &self.location,
            StyleField::Color => &self.color,
            StyleField::ArtType => &self.art_type,
            StyleField::LensAndShot => &self.lens_and_shot,
        }
    }

    pub fn get_mut(&mut self, field: StyleField) -> &mut String {
        match field {
            StyleField::Age => &mut self.age,
            StyleField::Gender => &mut self.gender,
            StyleField::Hair => &mut self.hair,
            StyleField::Clothing => &mut self.clothing,
            StyleField::Scene => &mut self.scene,
            StyleField::Location => &mut self.location,
            StyleField::Color => &mut self.color,
            StyleField::ArtType => &mut self.art_type,
            StyleField::LensAndShot => &mut self.lens_and_shot,
        }
    }

    /// `(field, value)` pairs in canonical order.
    pub fn entries(&self) -> impl Iterator<Item = (StyleField, &str)> + '_ {
        StyleField::ALL.iter().map(move |&f| (f, self.get(f)))
    }

    pub fn is_blank(&self) -> bool {
        self.entries().all(|(_, v)| v.trim().is_empty())
    }

    /// Renders all nine slots as `Age:{..}, Gender:{..}, ...`, empty slots included.
    pub fn serialize(&self) -> String {
        let parts: Vec<String> = self
            .entries()
            .map(|(f, v)| alloc::format!("{}:{{{}}}", f.label(), v))
            .collect();
        parts.join(", ")
    }
}

impl fmt::Display for StyleParameters {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serialize_keeps_canonical_order_and_empty_slots() {
        let s = StyleParameters::default();
        assert_eq!(
            s.serialize(),
            "Age:{}, Gender:{}, Hair:{}, Clothing:{}, Scene:{}, Location:{}, Color:{}, Art type:{}, Lens and Shot:{}"
        );
        assert!(s.is_blank());
    }

    #[test]
    fn get_mut_targets_the_named_slot() {
        let mut s = StyleParameters::default();
        *s.get_mut(StyleField::ArtType) = "sketch".into();
        assert_eq!(s.art_type, "sketch");
        assert_eq!(s.get(StyleField::ArtType), "sketch");
        assert!(!s.is_blank());
    }
}
