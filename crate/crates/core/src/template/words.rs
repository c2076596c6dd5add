//! Surface vocabulary: canonical words used when rendering and the
//! synonyms and inflections accepted when parsing.

use crate::scene::{Color, Direction, Material, Property, Shape, Size};

use super::SlotValue;

/// The head noun of a referring expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Noun {
    Thing,
    Object,
    Shape(Shape),
}

impl Noun {
    pub const ALL: [Noun; 5] =
        [Noun::Thing, Noun::Object, Noun::Shape(Shape::Cube), Noun::Shape(Shape::Sphere), Noun::Shape(Shape::Cylinder)];

    pub fn word(self) -> &'static str {
        match self {
            Noun::Thing => "thing",
            Noun::Object => "object",
            Noun::Shape(s) => s.word(),
        }
    }

    /// Plural form; every noun in the closed vocabulary inflects regularly.
    pub fn plural(self) -> String {
        format!("{}s", self.word())
    }

    pub fn shape(self) -> Option<Shape> {
        match self {
            Noun::Shape(s) => Some(s),
            _ => None,
        }
    }

    pub fn from_word(word: &str) -> Result<Noun, String> {
        match word {
            "thing" => Ok(Noun::Thing),
            "object" => Ok(Noun::Object),
            other => other.parse::<Shape>().map(Noun::Shape).map_err(|_| other.to_string()),
        }
    }
}

const SIZE_WORDS: &[(&str, Size)] =
    &[("small", Size::Small), ("tiny", Size::Small), ("large", Size::Large), ("big", Size::Large)];
const MATERIAL_WORDS: &[(&str, Material)] = &[
    ("rubber", Material::Rubber),
    ("matte", Material::Rubber),
    ("metal", Material::Metal),
    ("metallic", Material::Metal),
    ("shiny", Material::Metal),
];
const NOUN_WORDS: &[(&str, Noun)] = &[
    ("thing", Noun::Thing),
    ("object", Noun::Object),
    ("cube", Noun::Shape(Shape::Cube)),
    ("block", Noun::Shape(Shape::Cube)),
    ("sphere", Noun::Shape(Shape::Sphere)),
    ("ball", Noun::Shape(Shape::Sphere)),
    ("cylinder", Noun::Shape(Shape::Cylinder)),
];
const RELATION_PHRASES: &[(&[&str], Direction)] = &[
    (&["left", "of"], Direction::Left),
    (&["to", "the", "left", "of"], Direction::Left),
    (&["on", "the", "left", "side", "of"], Direction::Left),
    (&["right", "of"], Direction::Right),
    (&["to", "the", "right", "of"], Direction::Right),
    (&["on", "the", "right", "side", "of"], Direction::Right),
    (&["in", "front", "of"], Direction::Front),
    (&["behind"], Direction::Behind),
];

pub(crate) fn size_word(w: &str) -> Option<Size> {
    SIZE_WORDS.iter().find(|(s, _)| *s == w).map(|&(_, v)| v)
}

pub(crate) fn color_word(w: &str) -> Option<Color> {
    w.parse().ok()
}

pub(crate) fn material_word(w: &str) -> Option<Material> {
    MATERIAL_WORDS.iter().find(|(s, _)| *s == w).map(|&(_, v)| v)
}

pub(crate) fn property_word(w: &str) -> Option<Property> {
    w.parse().ok()
}

/// A noun in singular or plural form.
pub(crate) fn noun_word(w: &str) -> Option<Noun> {
    let singular = |s: &str| NOUN_WORDS.iter().find(|(n, _)| *n == s).map(|&(_, v)| v);
    singular(w).or_else(|| w.strip_suffix('s').and_then(singular))
}

/// Relation phrases that `tokens` starts with, with their lengths.
pub(crate) fn relation_prefixes(tokens: &[String]) -> Vec<(usize, Direction)> {
    RELATION_PHRASES
        .iter()
        .filter(|(phrase, _)| phrase.len() <= tokens.len() && phrase.iter().zip(tokens).all(|(p, t)| p == t))
        .map(|&(phrase, d)| (phrase.len(), d))
        .collect()
}

/// Canonical surface words for a bound slot (possibly none).
pub(crate) fn render_value(value: SlotValue, plural: bool) -> Vec<String> {
    match value {
        SlotValue::Size(v) => v.map(|v| v.word().to_string()).into_iter().collect(),
        SlotValue::Color(v) => v.map(|v| v.word().to_string()).into_iter().collect(),
        SlotValue::Material(v) => v.map(|v| v.word().to_string()).into_iter().collect(),
        SlotValue::Noun(n) => vec![if plural { n.plural() } else { n.word().to_string() }],
        SlotValue::Relation(d) => d.phrase().split(' ').map(str::to_string).collect(),
        SlotValue::Property(p) => vec![p.word().to_string()],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nouns_inflect() {
        assert_eq!(Noun::Shape(Shape::Cube).plural(), "cubes");
        assert_eq!(noun_word("balls"), Some(Noun::Shape(Shape::Sphere)));
        assert_eq!(noun_word("things"), Some(Noun::Thing));
        assert_eq!(noun_word("block"), Some(Noun::Shape(Shape::Cube)));
        assert_eq!(noun_word("flavor"), None);
    }

    #[test]
    fn relation_phrases_match_prefixes() {
        let toks: Vec<String> = "to the left of the cube".split(' ').map(String::from).collect();
        assert_eq!(relation_prefixes(&toks), vec![(4, Direction::Left)]);
        let toks: Vec<String> = "in front of it".split(' ').map(String::from).collect();
        assert_eq!(relation_prefixes(&toks), vec![(3, Direction::Front)]);
        for d in Direction::ALL {
            let toks: Vec<String> = d.phrase().split(' ').map(String::from).collect();
            assert!(relation_prefixes(&toks).contains(&(toks.len(), *d)));
        }
    }

    #[test]
    fn synonyms_resolve() {
        assert_eq!(size_word("tiny"), Some(Size::Small));
        assert_eq!(material_word("shiny"), Some(Material::Metal));
        assert_eq!(color_word("gray"), Some(Color::Gray));
        assert_eq!(property_word("flavor"), None);
    }
}
