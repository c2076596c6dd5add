//! Rule-based inverse of the template grammar: question text to
//! `(family, binding, program)`.
//!
//! Each template is expanded into its optional-segment variants and matched
//! token by token with backtracking. Matching is case-insensitive, ignores
//! the terminal `?`/`.`, treats `a`/`an` alike, accepts singular or plural
//! nouns and a few synonyms (`tiny`, `shiny`, `block`, `to the left of`, ...).

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dsl::Program;
use crate::template::{
    builtin_templates, color_word, material_word, noun_word, property_word, relation_prefixes, size_word, PatternItem,
    SlotBinding, SlotKind, SlotValue, Template, TemplateError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("no template matches {text:?}; longest match ends after {matched:?}")]
    NoParse { text: String, matched: String },
    #[error("{text:?} has several readings: {families:?}")]
    AmbiguousParse { text: String, families: Vec<String> },
    #[error(transparent)]
    Template(#[from] TemplateError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParseResult {
    pub family: String,
    /// Other families deriving the same text with the same program.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub equivalent_families: Vec<String>,
    pub binding: SlotBinding,
    pub program: Program,
}

/// Splits into lowercase word and punctuation tokens, dropping terminal
/// punctuation.
fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for raw in text.split_whitespace() {
        let mut word = String::new();
        for c in raw.chars() {
            if matches!(c, ';' | ',' | '?' | '.' | '!') {
                if !word.is_empty() {
                    tokens.push(normalize(&word));
                    word.clear();
                }
                tokens.push(c.to_string());
            } else {
                word.extend(c.to_lowercase());
            }
        }
        if !word.is_empty() {
            tokens.push(normalize(&word));
        }
    }
    while tokens.last().is_some_and(|t| matches!(t.as_str(), "?" | "." | "!")) {
        tokens.pop();
    }
    tokens
}

fn normalize(word: &str) -> String {
    let lower = word.to_lowercase();
    if lower == "an" {
        "a".to_string()
    } else {
        lower
    }
}

/// One flattened optional-segment variant of a template, pre-tokenized.
#[derive(Debug, Clone)]
enum Step {
    Word(String),
    Slot(crate::template::SlotId),
}

struct Variant {
    template: usize,
    steps: Vec<Step>,
}

fn variant_steps(items: &[PatternItem]) -> Vec<Step> {
    let mut steps: Vec<Step> = items
        .iter()
        .map(|item| match item {
            PatternItem::Word(w) => Step::Word(normalize(w)),
            PatternItem::Punct(c) => Step::Word(c.to_string()),
            PatternItem::Slot { slot, .. } => Step::Slot(*slot),
            PatternItem::Optional(_) => unreachable!("flattened"),
        })
        .collect();
    while matches!(steps.last(), Some(Step::Word(w)) if matches!(w.as_str(), "?" | "." | "!")) {
        steps.pop();
    }
    steps
}

pub struct QuestionParser {
    templates: Vec<Template>,
    variants: Vec<Variant>,
}

impl Default for QuestionParser {
    fn default() -> Self {
        QuestionParser::new(builtin_templates())
    }
}

struct Search<'a> {
    tokens: &'a [String],
    furthest: usize,
    found: Vec<SlotBinding>,
}

impl Search<'_> {
    fn run(&mut self, steps: &[Step], at: usize, binding: &mut SlotBinding) {
        self.furthest = self.furthest.max(at);
        let Some((step, rest)) = steps.split_first() else {
            if at == self.tokens.len() {
                self.found.push(binding.clone());
            }
            return;
        };
        let token = self.tokens.get(at).map(String::as_str);
        match step {
            Step::Word(w) => {
                if token == Some(w.as_str()) {
                    self.run(rest, at + 1, binding);
                }
            }
            Step::Slot(slot) => {
                let mut options: Vec<(usize, SlotValue)> = Vec::new();
                match slot.kind {
                    SlotKind::Z => {
                        options.push((0, SlotValue::Size(None)));
                        options.extend(token.and_then(size_word).map(|v| (1, SlotValue::Size(Some(v)))));
                    }
                    SlotKind::C => {
                        options.push((0, SlotValue::Color(None)));
                        options.extend(token.and_then(color_word).map(|v| (1, SlotValue::Color(Some(v)))));
                    }
                    SlotKind::M => {
                        options.push((0, SlotValue::Material(None)));
                        options.extend(token.and_then(material_word).map(|v| (1, SlotValue::Material(Some(v)))));
                    }
                    SlotKind::S => options.extend(token.and_then(noun_word).map(|n| (1, SlotValue::Noun(n)))),
                    SlotKind::R => options.extend(
                        relation_prefixes(&self.tokens[at..]).into_iter().map(|(n, d)| (n, SlotValue::Relation(d))),
                    ),
                    SlotKind::A | SlotKind::Q => {
                        options.extend(token.and_then(property_word).map(|p| (1, SlotValue::Property(p))))
                    }
                }
                for (consumed, value) in options {
                    let previous = binding.get(*slot);
                    if previous.is_some_and(|p| p != value) {
                        continue;
                    }
                    binding.set(*slot, value).expect("value matches slot kind");
                    self.run(rest, at + consumed, binding);
                    match previous {
                        Some(p) => binding.set(*slot, p).expect("restoring"),
                        None => {
                            binding.remove(*slot);
                        }
                    }
                }
            }
        }
    }
}

impl QuestionParser {
    pub fn new(templates: Vec<Template>) -> QuestionParser {
        let variants = templates
            .iter()
            .enumerate()
            .flat_map(|(index, t)| {
                t.bracket_outcomes()
                    .into_iter()
                    .map(move |keep| Variant { template: index, steps: variant_steps(&t.pattern().flatten(&keep)) })
            })
            .collect();
        QuestionParser { templates, variants }
    }

    /// Builtin templates plus `extra`.
    pub fn with_extra(extra: Vec<Template>) -> QuestionParser {
        let mut all = builtin_templates();
        all.extend(extra);
        QuestionParser::new(all)
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    pub fn parse(&self, text: &str) -> Result<ParseResult, ParseError> {
        let tokens = tokenize(text);
        let mut furthest = 0;
        // (template, binding, program) for each distinct derivation.
        let mut readings: Vec<(usize, SlotBinding, Program)> = Vec::new();
        for variant in &self.variants {
            let mut search = Search { tokens: &tokens, furthest: 0, found: Vec::new() };
            search.run(&variant.steps, 0, &mut SlotBinding::new());
            furthest = furthest.max(search.furthest);
            for binding in search.found {
                if readings.iter().any(|(t, b, _)| *t == variant.template && *b == binding) {
                    continue;
                }
                let template = &self.templates[variant.template];
                if template.check_binding(&binding).is_err() {
                    continue;
                }
                let program = template.instantiate_program(&binding)?;
                readings.push((variant.template, binding, program));
            }
        }
        let Some((first, rest)) = readings.split_first() else {
            return Err(ParseError::NoParse { text: text.to_string(), matched: tokens[..furthest].join(" ") });
        };
        if rest.iter().any(|(_, _, p)| !p.tree_eq(&first.2)) {
            let mut families: Vec<String> =
                readings.iter().map(|(t, _, _)| self.templates[*t].family().to_string()).collect();
            families.dedup();
            return Err(ParseError::AmbiguousParse { text: text.to_string(), families });
        }
        let family = self.templates[first.0].family().to_string();
        let mut equivalent_families: Vec<String> =
            rest.iter().map(|(t, _, _)| self.templates[*t].family().to_string()).filter(|f| *f != family).collect();
        equivalent_families.dedup();
        Ok(ParseResult { family, equivalent_families, binding: first.1.clone(), program: first.2.clone() })
    }

    /// Element-wise [`QuestionParser::parse`], in input order.
    pub fn batch_parse<S: AsRef<str> + Sync>(&self, texts: &[S]) -> Vec<Result<ParseResult, ParseError>> {
        texts.par_iter().map(|t| self.parse(t.as_ref())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::template::find_template;

    #[test]
    fn tokenizer_normalizes_case_and_punctuation() {
        assert_eq!(tokenize("There is AN  object; is it big?"), ["there", "is", "a", "object", ";", "is", "it", "big"]);
        assert_eq!(tokenize("How many?."), ["how", "many"]);
    }

    #[test]
    fn round_trips_every_builtin_family() {
        let parser = QuestionParser::default();
        for t in builtin_templates() {
            for seed in 0..50 {
                let mut rng = stream(seed, 3, 0);
                let b = t.random_binding(&mut rng);
                let text = t.render_text(&b, &mut rng).unwrap();
                let r = parser.parse(&text).unwrap_or_else(|e| panic!("{e}"));
                let expected = t.instantiate_program(&b).unwrap();
                assert!(r.program.tree_eq(&expected), "{text}");
                assert!(r.family == t.family() || r.equivalent_families.iter().any(|f| f == t.family()));
                if r.family == t.family() {
                    assert_eq!(r.binding, b, "{text}");
                }
            }
        }
    }

    #[test]
    fn synonyms_and_inflection_are_tolerated() {
        let parser = QuestionParser::default();
        let canonical = parser
            .parse("There is another rubber object that is the same size as the gray cylinder; does it have the same color as the small metal cube?")
            .unwrap();
        let variant = parser
            .parse("there is another rubber object that is the same size as the gray cylinder; does it have the same color as the tiny shiny block")
            .unwrap();
        assert_eq!(canonical, variant);
        assert_eq!(canonical.family, "compare_mat");
        let plural = parser
            .parse("How many things are either big spheres or cubes that are the same color as the red ball?")
            .unwrap();
        let singular = parser
            .parse("How many things are either big sphere or cube that are the same color as the red ball?")
            .unwrap();
        assert_eq!(plural.program, singular.program);
        assert_eq!(plural.family, "or_mat");
    }

    #[test]
    fn relation_phrasings() {
        let parser = QuestionParser::default();
        let a = parser.parse("Is there a cube that is the same color as the sphere left of the cylinder?").unwrap();
        let b =
            parser.parse("Is there a cube that is the same color as the sphere to the left of the cylinder?").unwrap();
        assert_eq!(a.program, b.program);
        assert_eq!(a.family, "embed_spa_mat");
    }

    #[test]
    fn out_of_vocabulary_is_no_parse() {
        let parser = QuestionParser::default();
        match parser.parse("What is the flavor of the cube?") {
            Err(ParseError::NoParse { matched, .. }) => assert_eq!(matched, "what is the"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parser.parse(""), Err(ParseError::NoParse { .. })));
    }

    #[test]
    fn inadmissible_binding_is_rejected() {
        // The matched object may not state the matched property.
        let parser = QuestionParser::default();
        let text = "Is there a red cube that is the same color as the sphere left of the cylinder?";
        assert!(matches!(parser.parse(text), Err(ParseError::NoParse { .. })));
    }

    #[test]
    fn identical_baseline_texts_report_equivalence() {
        let parser = QuestionParser::default();
        let t = find_template("embed_spa_mat_baseline").unwrap();
        let b = t.random_binding(&mut stream(5, 0, 0));
        let text = t.render_text_with(&b, &[true, false]).unwrap();
        let r = parser.parse(&text).unwrap();
        assert_eq!(r.family, "embed_spa_mat_baseline");
        assert_eq!(r.equivalent_families, ["embed_mat_spa_baseline"]);
    }

    #[test]
    fn batch_keeps_order_and_inline_errors() {
        let parser = QuestionParser::default();
        let texts = [
            "How many things are cubes or spheres that are the same size as the cylinder?",
            "What is the flavor of the cube?",
            "How many things are spheres or cubes that are the same size as the cylinder?",
        ];
        let out = parser.batch_parse(&texts);
        assert_eq!(out.len(), 3);
        assert!(out[0].is_ok() && out[2].is_ok());
        assert!(matches!(out[1], Err(ParseError::NoParse { .. })));
        assert_ne!(out[0].as_ref().unwrap().program, out[2].as_ref().unwrap().program);
        assert!(parser.batch_parse::<&str>(&[]).is_empty());
    }
}
