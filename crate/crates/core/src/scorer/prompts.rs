//! Dimension-conditioned query templates.

use serde::{Deserialize, Serialize};

use crate::model::{Dimension, RatingLevel};

pub const IMAGE_TOKEN: &str = "<image>";
pub const RATING_SLOT: &str = "{rating_word}";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PromptType {
    /// Single short sentence.
    #[serde(alias = "type1", alias = "1")]
    Type1,
    /// Short sentence with a dimension tag token.
    #[serde(alias = "type2", alias = "2")]
    Type2,
    /// Multi-sentence general description.
    #[serde(alias = "type3", alias = "3")]
    Type3,
    /// Multi-sentence description with domain terminology.
    #[default]
    #[serde(alias = "type4", alias = "4")]
    Type4,
}

impl PromptType {
    pub const ALL: [PromptType; 4] = [
        PromptType::Type1,
        PromptType::Type2,
        PromptType::Type3,
        PromptType::Type4,
    ];

    pub fn number(self) -> u8 {
        self as u8 + 1
    }
}

impl std::str::FromStr for PromptType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s.trim().trim_start_matches(|c: char| c.is_ascii_alphabetic());
        match digits {
            "1" => Ok(PromptType::Type1),
            "2" => Ok(PromptType::Type2),
            "3" => Ok(PromptType::Type3),
            "4" => Ok(PromptType::Type4),
            _ => Err(format!("unknown prompt type {s:?} (expected 1-4 or type1-type4)")),
        }
    }
}

impl std::fmt::Display for PromptType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "type{}", self.number())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub prompt_type: PromptType,
    pub dimension: Dimension,
    pub query_text: String,
    pub response_stub: String,
}

impl PromptTemplate {
    /// `<layout>`-style tag for the dimension.
    pub fn tag_token(dimension: Dimension) -> String {
        format!("<{}>", dimension.as_str())
    }

    /// The response with the rating slot filled.
    pub fn response_for(&self, level: RatingLevel) -> String {
        self.response_stub.replace(RATING_SLOT, level.word())
    }
}

fn general_description(dimension: Dimension) -> &'static str {
    match dimension {
        Dimension::Layout => "The layout dimension describes the spatial distribution and positional relationships of major elements within a composition. Assess how the layout contributes to the overall organization, structure, and balance of the image.",
        Dimension::Harmony => "The harmony dimension emphasizes stylistic consistency, color matching, and overall visual coordination. Consider how well the elements come together to create a unified and pleasing appearance.",
        Dimension::Lighting => "The lighting dimension focuses on the interaction between light and shadow, including the quality of lighting effects and the sense of three-dimensionality. Assess how lighting enhances or affects the depth and overall atmosphere of an image.",
        Dimension::Distortion => "The distortion dimension describes the degree of distortion in shapes or the fidelity of background details. Assess how the distortion impacts the perceived realism and visual quality of the image.",
    }
}

fn expert_description(dimension: Dimension) -> &'static str {
    match dimension {
        Dimension::Layout => "The layout dimension describes the spatial distribution, positional relationships, and quantity of major elements within the space. Consider how the layout supports the overall visual order, maintains balance, and enhances the functional aesthetics of the image.",
        Dimension::Harmony => "The harmony dimension focuses on stylistic consistency, color coordination, and overall visual cohesion. Examine how well the combination of elements creates a balanced and visually pleasant composition, avoiding clashes or imbalances in style and color.",
        Dimension::Lighting => "The lighting dimension examines the quality of light effects, shadow interactions, and the realism of light sources. Assess how well lighting contributes to the overall depth, mood, and authenticity of the image, emphasizing both natural and artificial lighting scenarios.",
        Dimension::Distortion => "The distortion dimension assesses whether soft furnishings (e.g., cabinets, carpets) or fixed structures (e.g., floors, walls) appear deformed or misaligned. Additionally, evaluate the realism and material accuracy of textures, and judge whether any distortion negatively impacts the overall aesthetic quality of the image.",
    }
}

pub fn build_query(dimension: Dimension, prompt_type: PromptType) -> PromptTemplate {
    let name = dimension.as_str();
    let instruction =
        format!("Please evaluate the spatial aesthetic {name} quality level of this image.");
    let tag = PromptTemplate::tag_token(dimension);
    let query_text = match prompt_type {
        PromptType::Type1 => format!("{IMAGE_TOKEN}{instruction}"),
        PromptType::Type2 => format!("{IMAGE_TOKEN}{tag}{instruction}"),
        PromptType::Type3 => {
            format!("{IMAGE_TOKEN}{tag}{instruction} {}", general_description(dimension))
        }
        PromptType::Type4 => {
            format!("{IMAGE_TOKEN}{tag}{instruction} {}", expert_description(dimension))
        }
    };
    PromptTemplate {
        prompt_type,
        dimension,
        query_text,
        response_stub: format!(
            "The spatial aesthetic {name} quality level of this image is {RATING_SLOT}."
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concise_layout_query() {
        let t = build_query(Dimension::Layout, PromptType::Type1);
        assert_eq!(
            t.query_text,
            "<image>Please evaluate the spatial aesthetic layout quality level of this image."
        );
        assert!(t.query_text.contains("evaluate the spatial aesthetic layout quality level"));
        assert!(!t.query_text.contains("<layout>"));
    }

    #[test]
    fn tagged_harmony_query() {
        let t = build_query(Dimension::Harmony, PromptType::Type2);
        assert!(t.query_text.starts_with("<image><harmony>Please evaluate"));
    }

    #[test]
    fn expert_distortion_query() {
        let t = build_query(Dimension::Distortion, PromptType::Type4);
        assert!(t.query_text.contains("soft furnishings (e.g., cabinets, carpets)"));
        assert!(t.query_text.starts_with("<image><distortion>"));
    }

    #[test]
    fn every_template_carries_placeholders() {
        for p in PromptType::ALL {
            for d in Dimension::ALL {
                let t = build_query(d, p);
                assert!(t.query_text.contains(IMAGE_TOKEN));
                assert!(t.response_stub.contains(RATING_SLOT));
                if p != PromptType::Type1 {
                    assert!(t.query_text.contains(&PromptTemplate::tag_token(d)));
                }
                assert_eq!(t, build_query(d, p));
            }
        }
    }

    #[test]
    fn response_fill() {
        let t = build_query(Dimension::Lighting, PromptType::Type3);
        assert_eq!(
            t.response_for(RatingLevel::Good),
            "The spatial aesthetic lighting quality level of this image is good."
        );
    }

    #[test]
    fn parse_prompt_type() {
        assert_eq!("4".parse::<PromptType>().unwrap(), PromptType::Type4);
        assert_eq!("type2".parse::<PromptType>().unwrap(), PromptType::Type2);
        assert!("5".parse::<PromptType>().is_err());
        assert_eq!(PromptType::default(), PromptType::Type4);
    }
}
