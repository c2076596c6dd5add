use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::scene::{AttributeValue, Direction, Property};

/// Kind of value flowing along a program edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ValueKind {
    ObjectSet,
    ObjectRef,
    Attribute(Property),
    Integer,
    Boolean,
}

impl ValueKind {
    /// Kinds a program may return at its root.
    pub fn is_answer(self) -> bool {
        matches!(self, ValueKind::Attribute(_) | ValueKind::Integer | ValueKind::Boolean)
    }
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueKind::ObjectSet => f.write_str("object set"),
            ValueKind::ObjectRef => f.write_str("object"),
            ValueKind::Attribute(p) => write!(f, "{p}"),
            ValueKind::Integer => f.write_str("integer"),
            ValueKind::Boolean => f.write_str("boolean"),
        }
    }
}

/// One DSL function. Composite functions such as `filter_color[brown]` are
/// distinct tokens, not a function applied to a parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Function {
    Scene,
    Filter(AttributeValue),
    Unique,
    Relate(Direction),
    Same(Property),
    Union,
    Intersect,
    Count,
    Exist,
    Query(Property),
    Equal(Property),
    EqualInteger,
    GreaterThan,
    LessThan,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown function token {0:?}")]
pub struct UnknownFunction(pub String);

impl Function {
    pub fn name(self) -> String {
        match self {
            Function::Scene => "scene".into(),
            Function::Filter(v) => format!("filter_{}[{}]", v.property(), v.word()),
            Function::Unique => "unique".into(),
            Function::Relate(d) => format!("relate[{d}]"),
            Function::Same(p) => format!("same_{p}"),
            Function::Union => "union".into(),
            Function::Intersect => "intersect".into(),
            Function::Count => "count".into(),
            Function::Exist => "exist".into(),
            Function::Query(p) => format!("query_{p}"),
            Function::Equal(p) => format!("equal_{p}"),
            Function::EqualInteger => "equal_integer".into(),
            Function::GreaterThan => "greater_than".into(),
            Function::LessThan => "less_than".into(),
        }
    }

    pub fn input_kinds(self) -> Vec<ValueKind> {
        use ValueKind::*;
        match self {
            Function::Scene => vec![],
            Function::Filter(_) | Function::Unique | Function::Count | Function::Exist => vec![ObjectSet],
            Function::Relate(_) | Function::Same(_) | Function::Query(_) => vec![ObjectRef],
            Function::Union | Function::Intersect => vec![ObjectSet, ObjectSet],
            Function::Equal(_) => vec![ObjectRef, ObjectRef],
            Function::EqualInteger | Function::GreaterThan | Function::LessThan => vec![Integer, Integer],
        }
    }

    pub fn output_kind(self) -> ValueKind {
        match self {
            Function::Scene
            | Function::Filter(_)
            | Function::Relate(_)
            | Function::Same(_)
            | Function::Union
            | Function::Intersect => ValueKind::ObjectSet,
            Function::Unique => ValueKind::ObjectRef,
            Function::Count => ValueKind::Integer,
            Function::Query(p) => ValueKind::Attribute(p),
            Function::Exist
            | Function::Equal(_)
            | Function::EqualInteger
            | Function::GreaterThan
            | Function::LessThan => ValueKind::Boolean,
        }
    }

    pub fn arity(self) -> usize {
        self.input_kinds().len()
    }

    /// Spatial or matching relation.
    pub fn is_relation(self) -> bool {
        matches!(self, Function::Relate(_) | Function::Same(_))
    }

    pub fn token(self) -> FunctionToken {
        FunctionToken {
            function: self,
            name: self.name(),
            arity: self.arity(),
            input_kinds: self.input_kinds(),
            output_kind: self.output_kind(),
        }
    }
}

impl fmt::Display for Function {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

fn property_suffix(name: &str, prefix: &str) -> Option<Property> {
    name.strip_prefix(prefix)?.parse().ok()
}

impl FromStr for Function {
    type Err = UnknownFunction;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || UnknownFunction(s.to_string());
        let simple = match s {
            "scene" => Some(Function::Scene),
            "unique" => Some(Function::Unique),
            "union" => Some(Function::Union),
            "intersect" => Some(Function::Intersect),
            "count" => Some(Function::Count),
            "exist" => Some(Function::Exist),
            "equal_integer" => Some(Function::EqualInteger),
            "greater_than" => Some(Function::GreaterThan),
            "less_than" => Some(Function::LessThan),
            _ => None,
        };
        if let Some(f) = simple {
            return Ok(f);
        }
        if let Some((head, rest)) = s.split_once('[') {
            let arg = rest.strip_suffix(']').ok_or_else(unknown)?;
            if head == "relate" {
                return arg.parse().map(Function::Relate).map_err(|_| unknown());
            }
            let property = property_suffix(head, "filter_").ok_or_else(unknown)?;
            return AttributeValue::parse(property, arg).map(Function::Filter).map_err(|_| unknown());
        }
        if let Some(p) = property_suffix(s, "same_") {
            return Ok(Function::Same(p));
        }
        if let Some(p) = property_suffix(s, "query_") {
            return Ok(Function::Query(p));
        }
        if let Some(p) = property_suffix(s, "equal_") {
            return Ok(Function::Equal(p));
        }
        Err(unknown())
    }
}

impl Serialize for Function {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for Function {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Catalog entry: a function together with its signature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionToken {
    pub function: Function,
    pub name: String,
    pub arity: usize,
    pub input_kinds: Vec<ValueKind>,
    pub output_kind: ValueKind,
}

/// The closed function catalog.
///
/// `equal_integer`, `greater_than` and `less_than` follow upstream CLEVR
/// naming; no builtin template uses them.
pub fn catalog() -> Vec<FunctionToken> {
    let mut fs = vec![Function::Scene];
    fs.extend(AttributeValue::all().into_iter().map(Function::Filter));
    fs.push(Function::Unique);
    fs.extend(Direction::ALL.iter().map(|&d| Function::Relate(d)));
    fs.extend(Property::ALL.iter().map(|&p| Function::Same(p)));
    fs.extend([Function::Union, Function::Intersect, Function::Count, Function::Exist]);
    fs.extend(Property::ALL.iter().map(|&p| Function::Query(p)));
    fs.extend(Property::ALL.iter().map(|&p| Function::Equal(p)));
    fs.extend([Function::EqualInteger, Function::GreaterThan, Function::LessThan]);
    fs.into_iter().map(Function::token).collect()
}
