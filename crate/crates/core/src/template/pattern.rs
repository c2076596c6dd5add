//! Question text patterns: literal words, typed slots (`<Z2>`, plural
//! `<S>s`) and optional bracketed segments (`[that is]`).

use std::fmt;

use super::{SlotBinding, SlotId, SlotKind, TemplateError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PatternItem {
    Word(String),
    Punct(char),
    Slot { slot: SlotId, plural: bool },
    Optional(Vec<PatternItem>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextPattern {
    items: Vec<PatternItem>,
}

const PUNCT: &[char] = &[';', '?', ',', '.', '!'];

impl TextPattern {
    pub fn parse(text: &str) -> Result<TextPattern, TemplateError> {
        let err = |msg: &str| TemplateError::PatternSyntax { pattern: text.to_string(), message: msg.to_string() };
        let mut items = Vec::new();
        let mut optional: Option<Vec<PatternItem>> = None;
        let chars: Vec<char> = text.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let target = optional.as_mut().unwrap_or(&mut items);
            match c {
                ' ' | '\t' | '\n' => i += 1,
                '[' => {
                    if optional.is_some() {
                        return Err(err("nested optional segment"));
                    }
                    optional = Some(Vec::new());
                    i += 1;
                }
                ']' => {
                    let segment = optional.take().ok_or_else(|| err("unbalanced ']'"))?;
                    if segment.is_empty() {
                        return Err(err("empty optional segment"));
                    }
                    items.push(PatternItem::Optional(segment));
                    i += 1;
                }
                '<' => {
                    let close = chars[i..].iter().position(|&c| c == '>').ok_or_else(|| err("unterminated slot"))? + i;
                    let name: String = chars[i + 1..close].iter().collect();
                    let slot: SlotId = name.parse()?;
                    i = close + 1;
                    let plural = chars.get(i) == Some(&'s') && chars.get(i + 1).is_none_or(|c| !c.is_alphanumeric());
                    if plural {
                        if slot.kind != SlotKind::S {
                            return Err(err("only shape slots take a plural suffix"));
                        }
                        i += 1;
                    }
                    target.push(PatternItem::Slot { slot, plural });
                }
                c if PUNCT.contains(&c) => {
                    target.push(PatternItem::Punct(c));
                    i += 1;
                }
                _ => {
                    let start = i;
                    while i < chars.len() && !" \t\n[]<".contains(chars[i]) && !PUNCT.contains(&chars[i]) {
                        i += 1;
                    }
                    target.push(PatternItem::Word(chars[start..i].iter().collect()));
                }
            }
        }
        if optional.is_some() {
            return Err(err("unbalanced '['"));
        }
        Ok(TextPattern { items })
    }

    pub fn items(&self) -> &[PatternItem] {
        &self.items
    }

    pub fn optional_count(&self) -> usize {
        self.items.iter().filter(|i| matches!(i, PatternItem::Optional(_))).count()
    }

    /// Every slot mentioned, in order of appearance.
    pub fn slots(&self) -> Vec<SlotId> {
        fn walk(items: &[PatternItem], out: &mut Vec<SlotId>) {
            for item in items {
                match item {
                    PatternItem::Slot { slot, .. } => out.push(*slot),
                    PatternItem::Optional(inner) => walk(inner, out),
                    _ => {}
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.items, &mut out);
        out
    }

    /// The flat item sequence for one choice of kept (`true`) / dropped
    /// optional segments.
    pub fn flatten(&self, keep: &[bool]) -> Vec<PatternItem> {
        let mut k = 0;
        let mut out = Vec::new();
        for item in &self.items {
            match item {
                PatternItem::Optional(inner) => {
                    if keep.get(k).copied().unwrap_or(false) {
                        out.extend(inner.iter().cloned());
                    }
                    k += 1;
                }
                other => out.push(other.clone()),
            }
        }
        out
    }

    /// Renders with the given bracket outcomes. Empty slots vanish without
    /// leaving double spaces; punctuation attaches to the preceding word.
    pub fn render(&self, binding: &SlotBinding, keep: &[bool]) -> Result<String, TemplateError> {
        let mut out = String::new();
        let push_word = |out: &mut String, w: &str| {
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(w);
        };
        for item in self.flatten(keep) {
            match item {
                PatternItem::Word(w) => push_word(&mut out, &w),
                PatternItem::Punct(c) => out.push(c),
                PatternItem::Slot { slot, plural } => {
                    let value = binding.get(slot).ok_or(TemplateError::MissingSlot(slot))?;
                    for w in super::words::render_value(value, plural) {
                        push_word(&mut out, &w);
                    }
                }
                PatternItem::Optional(_) => unreachable!("flattened"),
            }
        }
        Ok(out)
    }
}

impl fmt::Display for TextPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn write_items(items: &[PatternItem], f: &mut fmt::Formatter<'_>, first: &mut bool) -> fmt::Result {
            for item in items {
                match item {
                    PatternItem::Punct(c) => write!(f, "{c}")?,
                    PatternItem::Word(w) => {
                        if !*first {
                            f.write_str(" ")?;
                        }
                        f.write_str(w)?;
                    }
                    PatternItem::Slot { slot, plural } => {
                        if !*first {
                            f.write_str(" ")?;
                        }
                        write!(f, "<{slot}>{}", if *plural { "s" } else { "" })?;
                    }
                    PatternItem::Optional(inner) => {
                        if !*first {
                            f.write_str(" ")?;
                        }
                        f.write_str("[")?;
                        let mut inner_first = true;
                        write_items(inner, f, &mut inner_first)?;
                        f.write_str("]")?;
                    }
                }
                *first = false;
            }
            Ok(())
        }
        let mut first = true;
        write_items(&self.items, f, &mut first)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_slots_brackets_and_plurals() {
        let p =
            TextPattern::parse("How many things are [either] <Z> <S>s or <C2> <S2>s [that are] <R> the <S3>?").unwrap();
        assert_eq!(p.optional_count(), 2);
        assert_eq!(p.slots().len(), 6);
        assert!(p.items().contains(&PatternItem::Slot { slot: "S".parse().unwrap(), plural: true }));
        assert_eq!(p.items().last(), Some(&PatternItem::Punct('?')));
    }

    #[test]
    fn display_round_trips() {
        let text = "There is a <Z> <S> [that is] <R> the <S2>; does it have the same <Q> as the <S3>?";
        let p = TextPattern::parse(text).unwrap();
        assert_eq!(p.to_string(), text);
        assert_eq!(TextPattern::parse(&p.to_string()).unwrap(), p);
    }

    #[test]
    fn syntax_errors() {
        for bad in ["a [b [c]]", "a ]", "a [b", "<Z", "<X>", "<Z>s", "a []"] {
            assert!(TextPattern::parse(bad).is_err(), "{bad}");
        }
    }
}
