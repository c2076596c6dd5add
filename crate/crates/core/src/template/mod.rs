//! Question templates: text patterns with typed slots, program skeletons,
//! two-stage slot filling, rendering and program instantiation.

mod builtin;
mod pattern;
mod words;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{validate, Function, Node, Program, ValidationError, ValueKind};
use crate::scene::{AttributeValue, Color, Direction, Material, Property, Size};

pub use builtin::{builtin_templates, find_template, BASELINE_SUFFIX, CLOSURE_FAMILIES};
pub use pattern::{PatternItem, TextPattern};
pub use words::Noun;
pub(crate) use words::{color_word, material_word, noun_word, property_word, relation_prefixes, size_word};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TemplateError {
    #[error("bad pattern {pattern:?}: {message}")]
    PatternSyntax { pattern: String, message: String },
    #[error("bad slot name {0:?}")]
    BadSlotName(String),
    #[error("slot {0} is not bound")]
    MissingSlot(SlotId),
    #[error("slot {slot} cannot hold {value}")]
    WrongValueKind { slot: SlotId, value: String },
    #[error("slot {0} is used by the program but not the text, or vice versa")]
    SlotMismatch(SlotId),
    #[error("bad skeleton node {index}: {message}")]
    Skeleton { index: usize, message: String },
    #[error("skeleton does not type-check: {0}")]
    Invalid(#[from] ValidationError),
    #[error("binding violates constraint: {0}")]
    Constraint(String),
    #[error("declared answer kind {declared:?} but program answers {actual:?}")]
    AnswerKindMismatch { declared: AnswerKind, actual: AnswerKind },
    #[error("template json: {0}")]
    Json(String),
}

/// The seven slot kinds of the template language.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SlotKind {
    Z,
    C,
    M,
    S,
    R,
    A,
    Q,
}

impl SlotKind {
    fn letter(self) -> char {
        match self {
            SlotKind::Z => 'Z',
            SlotKind::C => 'C',
            SlotKind::M => 'M',
            SlotKind::S => 'S',
            SlotKind::R => 'R',
            SlotKind::A => 'A',
            SlotKind::Q => 'Q',
        }
    }

    /// The object property an adjective or noun slot describes.
    pub fn described_property(self) -> Option<Property> {
        match self {
            SlotKind::Z => Some(Property::Size),
            SlotKind::C => Some(Property::Color),
            SlotKind::M => Some(Property::Material),
            SlotKind::S => Some(Property::Shape),
            _ => None,
        }
    }

    pub fn is_property_name(self) -> bool {
        matches!(self, SlotKind::A | SlotKind::Q)
    }
}

/// A slot occurrence such as `Z`, `C2` or `R2`. Index 1 prints bare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SlotId {
    pub kind: SlotKind,
    pub index: u8,
}

impl SlotId {
    pub const fn new(kind: SlotKind, index: u8) -> SlotId {
        SlotId { kind, index }
    }

    /// The slot describing `property` in referring-expression group `group`.
    pub fn for_property(property: Property, group: u8) -> SlotId {
        let kind = match property {
            Property::Size => SlotKind::Z,
            Property::Color => SlotKind::C,
            Property::Material => SlotKind::M,
            Property::Shape => SlotKind::S,
        };
        SlotId::new(kind, group)
    }
}

impl fmt::Display for SlotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.index == 1 {
            write!(f, "{}", self.kind.letter())
        } else {
            write!(f, "{}{}", self.kind.letter(), self.index)
        }
    }
}

impl FromStr for SlotId {
    type Err = TemplateError;

    fn from_str(s: &str) -> Result<SlotId, TemplateError> {
        let bad = || TemplateError::BadSlotName(s.to_string());
        let mut chars = s.chars();
        let kind = match chars.next().ok_or_else(bad)? {
            'Z' => SlotKind::Z,
            'C' => SlotKind::C,
            'M' => SlotKind::M,
            'S' => SlotKind::S,
            'R' => SlotKind::R,
            'A' => SlotKind::A,
            'Q' => SlotKind::Q,
            _ => return Err(bad()),
        };
        let rest = chars.as_str();
        let index = if rest.is_empty() { 1 } else { rest.parse::<u8>().map_err(|_| bad())? };
        if index == 0 || rest.starts_with('0') {
            return Err(bad());
        }
        Ok(SlotId::new(kind, index))
    }
}

/// What a slot is bound to. Adjective slots may be empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SlotValue {
    Size(Option<Size>),
    Color(Option<Color>),
    Material(Option<Material>),
    Noun(Noun),
    Relation(Direction),
    Property(Property),
}

impl SlotValue {
    pub fn fits(self, kind: SlotKind) -> bool {
        matches!(
            (self, kind),
            (SlotValue::Size(_), SlotKind::Z)
                | (SlotValue::Color(_), SlotKind::C)
                | (SlotValue::Material(_), SlotKind::M)
                | (SlotValue::Noun(_), SlotKind::S)
                | (SlotValue::Relation(_), SlotKind::R)
                | (SlotValue::Property(_), SlotKind::A | SlotKind::Q)
        )
    }

    /// The filter this value contributes to a referring expression, if any.
    pub fn filter_value(self) -> Option<AttributeValue> {
        match self {
            SlotValue::Size(v) => v.map(AttributeValue::Size),
            SlotValue::Color(v) => v.map(AttributeValue::Color),
            SlotValue::Material(v) => v.map(AttributeValue::Material),
            SlotValue::Noun(n) => n.shape().map(AttributeValue::Shape),
            _ => None,
        }
    }

    /// Canonical word; empty for an unbound adjective.
    pub fn word(self) -> &'static str {
        match self {
            SlotValue::Size(v) => v.map_or("", Size::word),
            SlotValue::Color(v) => v.map_or("", Color::word),
            SlotValue::Material(v) => v.map_or("", Material::word),
            SlotValue::Noun(n) => n.word(),
            SlotValue::Relation(d) => d.word(),
            SlotValue::Property(p) => p.word(),
        }
    }

    /// Inverse of [`SlotValue::word`] for a slot of `kind`.
    pub fn from_word(kind: SlotKind, word: &str) -> Option<SlotValue> {
        fn optional<T: FromStr>(word: &str) -> Option<Option<T>> {
            if word.is_empty() {
                Some(None)
            } else {
                word.parse().ok().map(Some)
            }
        }
        Some(match kind {
            SlotKind::Z => SlotValue::Size(optional(word)?),
            SlotKind::C => SlotValue::Color(optional(word)?),
            SlotKind::M => SlotValue::Material(optional(word)?),
            SlotKind::S => SlotValue::Noun(Noun::from_word(word).ok()?),
            SlotKind::R => SlotValue::Relation(word.parse().ok()?),
            SlotKind::A | SlotKind::Q => SlotValue::Property(word.parse().ok()?),
        })
    }
}

impl fmt::Display for SlotValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.word() {
            "" => f.write_str("(empty)"),
            w => f.write_str(w),
        }
    }
}

/// A (possibly partial) assignment of slot values.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SlotBinding {
    values: BTreeMap<SlotId, SlotValue>,
}

impl SlotBinding {
    pub fn new() -> SlotBinding {
        SlotBinding::default()
    }

    pub fn get(&self, slot: SlotId) -> Option<SlotValue> {
        self.values.get(&slot).copied()
    }

    pub fn set(&mut self, slot: SlotId, value: SlotValue) -> Result<(), TemplateError> {
        if !value.fits(slot.kind) {
            return Err(TemplateError::WrongValueKind { slot, value: value.to_string() });
        }
        self.values.insert(slot, value);
        Ok(())
    }

    pub fn remove(&mut self, slot: SlotId) -> Option<SlotValue> {
        self.values.remove(&slot)
    }

    pub fn property(&self, slot: SlotId) -> Result<Property, TemplateError> {
        match self.get(slot) {
            Some(SlotValue::Property(p)) => Ok(p),
            Some(v) => Err(TemplateError::WrongValueKind { slot, value: v.to_string() }),
            None => Err(TemplateError::MissingSlot(slot)),
        }
    }

    pub fn direction(&self, slot: SlotId) -> Result<Direction, TemplateError> {
        match self.get(slot) {
            Some(SlotValue::Relation(d)) => Ok(d),
            Some(v) => Err(TemplateError::WrongValueKind { slot, value: v.to_string() }),
            None => Err(TemplateError::MissingSlot(slot)),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (SlotId, SlotValue)> + '_ {
        self.values.iter().map(|(&k, &v)| (k, v))
    }
}

impl fmt::Display for SlotBinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.iter().map(|(k, v)| format!("{k}={v}")).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

impl Serialize for SlotBinding {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let map: BTreeMap<String, &str> = self.iter().map(|(k, v)| (k.to_string(), v.word())).collect();
        map.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SlotBinding {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let map = BTreeMap::<String, String>::deserialize(deserializer)?;
        let mut binding = SlotBinding::new();
        for (k, v) in map {
            let slot: SlotId = k.parse().map_err(D::Error::custom)?;
            let value = SlotValue::from_word(slot.kind, &v)
                .ok_or_else(|| D::Error::custom(format!("slot {slot} cannot hold {v:?}")))?;
            binding.values.insert(slot, value);
        }
        Ok(binding)
    }
}

/// One step of a program skeleton.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SkeletonOp {
    /// A fixed, slot-free function such as `scene`, `unique` or `union`.
    Fixed(Function),
    /// Chain of `filter_*` nodes, one per non-empty adjective/noun slot.
    Filter(Vec<SlotId>),
    Relate(SlotId),
    Same(SlotId),
    Query(SlotId),
    Equal(SlotId),
}

impl SkeletonOp {
    pub fn slots(&self) -> Vec<SlotId> {
        match self {
            SkeletonOp::Fixed(_) => vec![],
            SkeletonOp::Filter(slots) => slots.clone(),
            SkeletonOp::Relate(s) | SkeletonOp::Same(s) | SkeletonOp::Query(s) | SkeletonOp::Equal(s) => vec![*s],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkeletonNode {
    pub op: SkeletonOp,
    pub inputs: Vec<usize>,
}

/// Admissibility rules a binding must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    /// Group `group` must not state the property named by `property_slot`.
    NullForProperty { property_slot: SlotId, group: u8 },
    /// Two property-name slots must differ.
    Distinct(SlotId, SlotId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerKind {
    Boolean,
    Integer,
    Attribute,
}

impl AnswerKind {
    fn of(kind: ValueKind) -> Option<AnswerKind> {
        match kind {
            ValueKind::Boolean => Some(AnswerKind::Boolean),
            ValueKind::Integer => Some(AnswerKind::Integer),
            ValueKind::Attribute(_) => Some(AnswerKind::Attribute),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateGroup {
    Closure,
    Baseline,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    family: String,
    group: TemplateGroup,
    pattern: TextPattern,
    nodes: Vec<SkeletonNode>,
    constraints: Vec<Constraint>,
    answer_kind: AnswerKind,
    slots: Vec<SlotId>,
}

impl Template {
    /// Builds and checks a template: pattern and skeleton must mention the
    /// same slots, and the skeleton must type-check under every choice of
    /// property names with both empty and fully specified adjectives.
    pub fn new(
        family: impl Into<String>,
        group: TemplateGroup,
        text: &str,
        nodes: Vec<SkeletonNode>,
        constraints: Vec<Constraint>,
        answer_kind: Option<AnswerKind>,
    ) -> Result<Template, TemplateError> {
        let pattern = TextPattern::parse(text)?;
        let text_slots: BTreeSet<SlotId> = pattern.slots().into_iter().collect();
        let mut program_slots = BTreeSet::new();
        for (index, node) in nodes.iter().enumerate() {
            let bad = |message: String| TemplateError::Skeleton { index, message };
            if let Some(&i) = node.inputs.iter().find(|&&i| i >= index) {
                return Err(bad(format!("input {i} does not precede the node")));
            }
            let expected = match &node.op {
                SkeletonOp::Fixed(f) => {
                    if matches!(f, Function::Filter(_) | Function::Relate(_) | Function::Same(_)) {
                        return Err(bad(format!("{f} must be written with a slot")));
                    }
                    vec![]
                }
                SkeletonOp::Filter(slots) => {
                    if slots.is_empty() {
                        return Err(bad("filter without slots".into()));
                    }
                    slots.iter().map(|s| (s, s.kind.described_property().is_some())).collect()
                }
                SkeletonOp::Relate(s) => vec![(s, s.kind == SlotKind::R)],
                SkeletonOp::Same(s) | SkeletonOp::Query(s) | SkeletonOp::Equal(s) => {
                    vec![(s, s.kind.is_property_name())]
                }
            };
            for (slot, ok) in expected {
                if !ok {
                    return Err(bad(format!("slot {slot} has the wrong kind")));
                }
                program_slots.insert(*slot);
            }
        }
        if let Some(&s) = text_slots.symmetric_difference(&program_slots).next() {
            return Err(TemplateError::SlotMismatch(s));
        }
        for c in &constraints {
            let referenced = match *c {
                Constraint::NullForProperty { property_slot, .. } => vec![property_slot],
                Constraint::Distinct(a, b) => vec![a, b],
            };
            for s in referenced {
                if !s.kind.is_property_name() || !text_slots.contains(&s) {
                    return Err(TemplateError::Constraint(format!("constraint names unusable slot {s}")));
                }
            }
        }
        let mut template = Template {
            family: family.into(),
            group,
            pattern,
            nodes,
            constraints,
            answer_kind: AnswerKind::Boolean,
            slots: text_slots.into_iter().collect(),
        };
        let actual = template.check_skeleton()?;
        if let Some(declared) = answer_kind {
            if declared != actual {
                return Err(TemplateError::AnswerKindMismatch { declared, actual });
            }
        }
        template.answer_kind = actual;
        Ok(template)
    }

    fn check_skeleton(&self) -> Result<AnswerKind, TemplateError> {
        let property_slots: Vec<SlotId> = self.slots.iter().copied().filter(|s| s.kind.is_property_name()).collect();
        let combos = 4usize.pow(property_slots.len() as u32);
        let mut answer = None;
        for combo in 0..combos {
            for filled in [false, true] {
                let mut binding = SlotBinding::new();
                for (k, &slot) in property_slots.iter().enumerate() {
                    let p = Property::ALL[(combo >> (2 * k)) & 3];
                    binding.set(slot, SlotValue::Property(p))?;
                }
                for &slot in &self.slots {
                    let value = match slot.kind {
                        SlotKind::Z => SlotValue::Size(filled.then_some(Size::Large)),
                        SlotKind::C => SlotValue::Color(filled.then_some(Color::Red)),
                        SlotKind::M => SlotValue::Material(filled.then_some(Material::Metal)),
                        SlotKind::S => {
                            SlotValue::Noun(if filled { Noun::Shape(crate::scene::Shape::Cube) } else { Noun::Thing })
                        }
                        SlotKind::R => SlotValue::Relation(Direction::Left),
                        SlotKind::A | SlotKind::Q => continue,
                    };
                    binding.set(slot, value)?;
                }
                let typed = validate(&self.instantiate_program(&binding)?)?;
                let kind = AnswerKind::of(typed.answer_kind()).expect("validated root is an answer");
                answer = Some(kind);
            }
        }
        Ok(answer.expect("at least one combination"))
    }

    pub fn family(&self) -> &str {
        &self.family
    }

    pub fn group(&self) -> TemplateGroup {
        self.group
    }

    pub fn pattern(&self) -> &TextPattern {
        &self.pattern
    }

    pub fn nodes(&self) -> &[SkeletonNode] {
        &self.nodes
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn answer_kind(&self) -> AnswerKind {
        self.answer_kind
    }

    /// All slots, sorted.
    pub fn slots(&self) -> &[SlotId] {
        &self.slots
    }

    /// Whether this family's answers are counts (restricted and balanced
    /// over the allowed counting answers).
    pub fn is_counting(&self) -> bool {
        self.answer_kind == AnswerKind::Integer
    }

    /// Checks the binding is total, well-kinded and admissible.
    pub fn check_binding(&self, binding: &SlotBinding) -> Result<(), TemplateError> {
        for &slot in &self.slots {
            let value = binding.get(slot).ok_or(TemplateError::MissingSlot(slot))?;
            if !value.fits(slot.kind) {
                return Err(TemplateError::WrongValueKind { slot, value: value.to_string() });
            }
            if slot.kind.described_property().is_some()
                && self.must_be_empty(binding, slot)
                && value.filter_value().is_some()
            {
                return Err(TemplateError::Constraint(format!("{slot} must not name the matched or queried property")));
            }
        }
        for c in &self.constraints {
            if let Constraint::Distinct(a, b) = *c {
                if binding.get(a) == binding.get(b) {
                    return Err(TemplateError::Constraint(format!("{a} and {b} must differ")));
                }
            }
        }
        Ok(())
    }

    /// Whether the constraints force adjective/noun `slot` to stay unspecific
    /// given the property names already in `binding`.
    pub fn must_be_empty(&self, binding: &SlotBinding, slot: SlotId) -> bool {
        let Some(described) = slot.kind.described_property() else {
            return false;
        };
        self.constraints.iter().any(|c| match *c {
            Constraint::NullForProperty { property_slot, group } => {
                group == slot.index && binding.get(property_slot) == Some(SlotValue::Property(described))
            }
            Constraint::Distinct(..) => false,
        })
    }

    /// First filling stage: binds every `A`/`Q` slot uniformly, resampling
    /// until the distinctness constraints hold.
    pub fn fill_properties<R: Rng + ?Sized>(&self, rng: &mut R) -> SlotBinding {
        loop {
            let mut binding = SlotBinding::new();
            for &slot in self.slots.iter().filter(|s| s.kind.is_property_name()) {
                let p = *Property::ALL.choose(rng).expect("non-empty");
                binding.values.insert(slot, SlotValue::Property(p));
            }
            let ok = self.constraints.iter().all(|c| match *c {
                Constraint::Distinct(a, b) => binding.get(a) != binding.get(b),
                Constraint::NullForProperty { .. } => true,
            });
            if ok {
                return binding;
            }
        }
    }

    /// A random admissible value for one non-property slot.
    pub fn random_value<R: Rng + ?Sized>(&self, binding: &SlotBinding, slot: SlotId, rng: &mut R) -> SlotValue {
        let empty = self.must_be_empty(binding, slot);
        let pick_opt = |rng: &mut R, n: usize| -> Option<usize> {
            (!empty && rng.random_bool(0.5)).then(|| rng.random_range(0..n))
        };
        match slot.kind {
            SlotKind::Z => SlotValue::Size(pick_opt(rng, Size::ALL.len()).map(|i| Size::ALL[i])),
            SlotKind::C => SlotValue::Color(pick_opt(rng, Color::ALL.len()).map(|i| Color::ALL[i])),
            SlotKind::M => SlotValue::Material(pick_opt(rng, Material::ALL.len()).map(|i| Material::ALL[i])),
            SlotKind::S => {
                let options: &[Noun] = if empty { &Noun::ALL[..2] } else { &Noun::ALL };
                SlotValue::Noun(*options.choose(rng).expect("non-empty"))
            }
            SlotKind::R => SlotValue::Relation(*Direction::ALL.choose(rng).expect("non-empty")),
            SlotKind::A | SlotKind::Q => SlotValue::Property(*Property::ALL.choose(rng).expect("non-empty")),
        }
    }

    /// Both filling stages without looking at any scene.
    pub fn random_binding<R: Rng + ?Sized>(&self, rng: &mut R) -> SlotBinding {
        let mut binding = self.fill_properties(rng);
        for &slot in self.slots.iter().filter(|s| !s.kind.is_property_name()) {
            let value = self.random_value(&binding, slot, rng);
            binding.values.insert(slot, value);
        }
        binding
    }

    /// Renders with each optional segment kept with probability 1/2.
    pub fn render_text<R: Rng + ?Sized>(&self, binding: &SlotBinding, rng: &mut R) -> Result<String, TemplateError> {
        let keep: Vec<bool> = (0..self.pattern.optional_count()).map(|_| rng.random_bool(0.5)).collect();
        self.render_text_with(binding, &keep)
    }

    /// Renders with explicit optional-segment outcomes.
    pub fn render_text_with(&self, binding: &SlotBinding, keep: &[bool]) -> Result<String, TemplateError> {
        for &slot in &self.slots {
            binding.get(slot).ok_or(TemplateError::MissingSlot(slot))?;
        }
        self.pattern.render(binding, keep)
    }

    /// Every optional-segment outcome, in a fixed order.
    pub fn bracket_outcomes(&self) -> Vec<Vec<bool>> {
        let k = self.pattern.optional_count();
        (0..1usize << k).map(|mask| (0..k).map(|i| mask >> i & 1 == 1).collect()).collect()
    }

    /// Resolves the skeleton under `binding`. Empty adjective slots and
    /// `thing`/`object` nouns emit no filter node.
    pub fn instantiate_program(&self, binding: &SlotBinding) -> Result<Program, TemplateError> {
        let mut out: Vec<Node> = Vec::new();
        let mut position: Vec<usize> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let inputs: Vec<usize> = node.inputs.iter().map(|&i| position[i]).collect();
            let function = match &node.op {
                SkeletonOp::Filter(slots) => {
                    let mut current = inputs[0];
                    for &slot in slots {
                        let value = binding.get(slot).ok_or(TemplateError::MissingSlot(slot))?;
                        if !value.fits(slot.kind) {
                            return Err(TemplateError::WrongValueKind { slot, value: value.to_string() });
                        }
                        if let Some(v) = value.filter_value() {
                            out.push(Node::new(Function::Filter(v), [current]));
                            current = out.len() - 1;
                        }
                    }
                    position.push(current);
                    continue;
                }
                SkeletonOp::Fixed(f) => *f,
                SkeletonOp::Relate(s) => Function::Relate(binding.direction(*s)?),
                SkeletonOp::Same(s) => Function::Same(binding.property(*s)?),
                SkeletonOp::Query(s) => Function::Query(binding.property(*s)?),
                SkeletonOp::Equal(s) => Function::Equal(binding.property(*s)?),
            };
            out.push(Node::new(function, inputs));
            position.push(out.len() - 1);
        }
        Ok(Program::new(out))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(TemplateSpec::from(self)).expect("serializable")
    }
}

#[derive(Serialize, Deserialize)]
struct NodeSpec {
    function: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    slots: Vec<String>,
    #[serde(default)]
    inputs: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum ConstraintSpec {
    NullForProperty { property_slot: String, group: u8 },
    Distinct { slots: [String; 2] },
}

#[derive(Serialize, Deserialize)]
struct TemplateSpec {
    family: String,
    #[serde(default = "custom_group")]
    group: TemplateGroup,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    answer_kind: Option<AnswerKind>,
    nodes: Vec<NodeSpec>,
    #[serde(default)]
    constraints: Vec<ConstraintSpec>,
}

fn custom_group() -> TemplateGroup {
    TemplateGroup::Custom
}

impl From<&Template> for TemplateSpec {
    fn from(t: &Template) -> TemplateSpec {
        let nodes = t
            .nodes
            .iter()
            .map(|n| {
                let function = match &n.op {
                    SkeletonOp::Fixed(f) => f.name(),
                    SkeletonOp::Filter(_) => "filter".into(),
                    SkeletonOp::Relate(_) => "relate".into(),
                    SkeletonOp::Same(_) => "same".into(),
                    SkeletonOp::Query(_) => "query".into(),
                    SkeletonOp::Equal(_) => "equal".into(),
                };
                NodeSpec {
                    function,
                    slots: n.op.slots().iter().map(SlotId::to_string).collect(),
                    inputs: n.inputs.clone(),
                }
            })
            .collect();
        let constraints = t
            .constraints
            .iter()
            .map(|c| match *c {
                Constraint::NullForProperty { property_slot, group } => {
                    ConstraintSpec::NullForProperty { property_slot: property_slot.to_string(), group }
                }
                Constraint::Distinct(a, b) => ConstraintSpec::Distinct { slots: [a.to_string(), b.to_string()] },
            })
            .collect();
        TemplateSpec {
            family: t.family.clone(),
            group: t.group,
            text: t.pattern.to_string(),
            answer_kind: Some(t.answer_kind),
            nodes,
            constraints,
        }
    }
}

impl TryFrom<TemplateSpec> for Template {
    type Error = TemplateError;

    fn try_from(spec: TemplateSpec) -> Result<Template, TemplateError> {
        let mut nodes = Vec::with_capacity(spec.nodes.len());
        for (index, n) in spec.nodes.into_iter().enumerate() {
            let bad = |message: String| TemplateError::Skeleton { index, message };
            let slots = n.slots.iter().map(|s| s.parse()).collect::<Result<Vec<SlotId>, _>>()?;
            let single = || match slots.as_slice() {
                [s] => Ok(*s),
                _ => Err(bad(format!("{} takes exactly one slot", n.function))),
            };
            let op = match n.function.as_str() {
                "filter" => SkeletonOp::Filter(slots.clone()),
                "relate" => SkeletonOp::Relate(single()?),
                "same" => SkeletonOp::Same(single()?),
                "query" => SkeletonOp::Query(single()?),
                "equal" => SkeletonOp::Equal(single()?),
                other => {
                    if !slots.is_empty() {
                        return Err(bad(format!("{other} takes no slots")));
                    }
                    SkeletonOp::Fixed(other.parse().map_err(|e| bad(format!("{e}")))?)
                }
            };
            nodes.push(SkeletonNode { op, inputs: n.inputs });
        }
        let constraints = spec
            .constraints
            .into_iter()
            .map(|c| {
                Ok(match c {
                    ConstraintSpec::NullForProperty { property_slot, group } => {
                        Constraint::NullForProperty { property_slot: property_slot.parse()?, group }
                    }
                    ConstraintSpec::Distinct { slots: [a, b] } => Constraint::Distinct(a.parse()?, b.parse()?),
                })
            })
            .collect::<Result<Vec<_>, TemplateError>>()?;
        Template::new(spec.family, spec.group, &spec.text, nodes, constraints, spec.answer_kind)
    }
}

/// Reads templates from JSON: one object or an array of objects.
pub fn templates_from_json(text: &str) -> Result<Vec<Template>, TemplateError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| TemplateError::Json(e.to_string()))?;
    let items = match value {
        serde_json::Value::Array(items) => items,
        single => vec![single],
    };
    items
        .into_iter()
        .map(|item| {
            let spec: TemplateSpec = serde_json::from_value(item).map_err(|e| TemplateError::Json(e.to_string()))?;
            Template::try_from(spec)
        })
        .collect()
}

pub fn templates_to_json(templates: &[Template]) -> String {
    let specs: Vec<TemplateSpec> = templates.iter().map(TemplateSpec::from).collect();
    serde_json::to_string_pretty(&specs).expect("serializable")
}
