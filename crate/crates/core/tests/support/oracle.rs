//! Brute-force reference evaluator. Walks the program tree recursively and
//! materializes every set by scanning the object list, sharing nothing with
//! the library executor beyond the data types.
#![allow(dead_code)]

use closure_core::dsl::{Function, Program};
use closure_core::scene::{AttributeValue, Direction, Property, Scene, SceneObject};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Set(Vec<usize>),
    Object(usize),
    Word(String),
    Number(usize),
    Truth(bool),
}

/// The oracle's only failure: `unique` on a non-singleton set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NotUnique;

fn value_of(object: &SceneObject, property: Property) -> String {
    let attrs = &object.attrs;
    match property {
        Property::Size => attrs.size.word(),
        Property::Color => attrs.color.word(),
        Property::Material => attrs.material.word(),
        Property::Shape => attrs.shape.word(),
    }
    .to_string()
}

fn carries(object: &SceneObject, value: AttributeValue) -> bool {
    value_of(object, value.property()) == value.word()
}

fn beside(object: &SceneObject, anchor: &SceneObject, direction: Direction) -> bool {
    let (x, y) = (object.position[0], object.position[1]);
    let (ax, ay) = (anchor.position[0], anchor.position[1]);
    match direction {
        Direction::Left => x < ax,
        Direction::Right => x > ax,
        Direction::Front => y < ay,
        Direction::Behind => y > ay,
    }
}

struct Walker<'a> {
    program: &'a Program,
    scene: &'a Scene,
    bypass: Option<usize>,
}

impl Walker<'_> {
    fn everything(&self) -> Vec<usize> {
        self.scene.objects().iter().map(|o| o.id).collect()
    }

    fn set(&self, node: usize) -> Result<Vec<usize>, NotUnique> {
        match self.eval(node)? {
            Value::Set(s) => Ok(s),
            other => panic!("expected a set, got {other:?}"),
        }
    }

    fn object(&self, node: usize) -> Result<&SceneObject, NotUnique> {
        match self.eval(node)? {
            Value::Object(id) => Ok(&self.scene.objects()[id]),
            other => panic!("expected an object, got {other:?}"),
        }
    }

    fn number(&self, node: usize) -> Result<usize, NotUnique> {
        match self.eval(node)? {
            Value::Number(n) => Ok(n),
            other => panic!("expected a number, got {other:?}"),
        }
    }

    fn eval(&self, node: usize) -> Result<Value, NotUnique> {
        if self.bypass == Some(node) {
            return Ok(Value::Set(self.everything()));
        }
        let spec = &self.program.nodes()[node];
        let arg = |k: usize| spec.inputs[k];
        Ok(match spec.function {
            Function::Scene => Value::Set(self.everything()),
            Function::Filter(v) => {
                let within = self.set(arg(0))?;
                Value::Set(within.into_iter().filter(|&i| carries(&self.scene.objects()[i], v)).collect())
            }
            Function::Unique => {
                let s = self.set(arg(0))?;
                if s.len() != 1 {
                    return Err(NotUnique);
                }
                Value::Object(s[0])
            }
            Function::Relate(d) => {
                let anchor = self.object(arg(0))?;
                Value::Set(
                    self.scene
                        .objects()
                        .iter()
                        .filter(|o| o.id != anchor.id && beside(o, anchor, d))
                        .map(|o| o.id)
                        .collect(),
                )
            }
            Function::Same(p) => {
                let anchor = self.object(arg(0))?;
                let want = value_of(anchor, p);
                Value::Set(
                    self.scene
                        .objects()
                        .iter()
                        .filter(|o| o.id != anchor.id && value_of(o, p) == want)
                        .map(|o| o.id)
                        .collect(),
                )
            }
            Function::Union => {
                let (a, b) = (self.set(arg(0))?, self.set(arg(1))?);
                Value::Set(self.everything().into_iter().filter(|i| a.contains(i) || b.contains(i)).collect())
            }
            Function::Intersect => {
                let (a, b) = (self.set(arg(0))?, self.set(arg(1))?);
                Value::Set(a.into_iter().filter(|i| b.contains(i)).collect())
            }
            Function::Count => Value::Number(self.set(arg(0))?.len()),
            Function::Exist => Value::Truth(!self.set(arg(0))?.is_empty()),
            Function::Query(p) => Value::Word(value_of(self.object(arg(0))?, p)),
            Function::Equal(p) => {
                let (a, b) = (self.object(arg(0))?, self.object(arg(1))?);
                Value::Truth(value_of(a, p) == value_of(b, p))
            }
            Function::EqualInteger => Value::Truth(self.number(arg(0))? == self.number(arg(1))?),
            Function::GreaterThan => Value::Truth(self.number(arg(0))? > self.number(arg(1))?),
            Function::LessThan => Value::Truth(self.number(arg(0))? < self.number(arg(1))?),
        })
    }
}

fn render(value: Value) -> String {
    match value {
        Value::Word(w) => w,
        Value::Number(n) => n.to_string(),
        Value::Truth(true) => "yes".into(),
        Value::Truth(false) => "no".into(),
        other => panic!("{other:?} is not an answer"),
    }
}

fn root(program: &Program) -> usize {
    program.len() - 1
}

/// Value of node `node`, with `bypass` (if any) replaced by every object.
pub fn value(program: &Program, scene: &Scene, node: usize, bypass: Option<usize>) -> Result<Value, NotUnique> {
    Walker { program, scene, bypass }.eval(node)
}

/// The answer string, or `NotUnique`.
pub fn answer(program: &Program, scene: &Scene) -> Result<String, NotUnique> {
    value(program, scene, root(program), None).map(render)
}

fn parent(program: &Program, node: usize) -> Option<usize> {
    program.nodes().iter().position(|n| n.inputs.contains(&node))
}

fn is_set_valued(function: Function) -> bool {
    matches!(
        function,
        Function::Scene
            | Function::Filter(_)
            | Function::Relate(_)
            | Function::Same(_)
            | Function::Union
            | Function::Intersect
    )
}

/// Relation nodes whose bypass leaves unchanged the set handed to the first
/// non-set operation above them.
pub fn redundant_relations(program: &Program, scene: &Scene) -> Vec<usize> {
    let mut found = Vec::new();
    for (node, spec) in program.nodes().iter().enumerate() {
        if !matches!(spec.function, Function::Relate(_) | Function::Same(_)) {
            continue;
        }
        let mut sink = node;
        while let Some(up) = parent(program, sink) {
            if !is_set_valued(program.nodes()[up].function) {
                break;
            }
            sink = up;
        }
        let plain = value(program, scene, sink, None);
        let bypassed = value(program, scene, sink, Some(node));
        if plain.is_ok() && plain == bypassed {
            found.push(node);
        }
    }
    found
}

/// Relation nodes whose bypass keeps the final answer without a `unique` failure.
pub fn answer_preserving_relations(program: &Program, scene: &Scene) -> Vec<usize> {
    let Ok(original) = answer(program, scene) else {
        return Vec::new();
    };
    program
        .nodes()
        .iter()
        .enumerate()
        .filter(|(_, n)| matches!(n.function, Function::Relate(_) | Function::Same(_)))
        .map(|(i, _)| i)
        .filter(|&i| value(program, scene, root(program), Some(i)).map(render).as_ref() == Ok(&original))
        .collect()
}
