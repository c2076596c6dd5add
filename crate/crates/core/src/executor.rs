//! Symbolic execution of typed programs against scenes.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{Function, TypedProgram, ValueKind};
use crate::scene::{AttributeValue, ObjectSet, Scene, SceneError, MAX_OBJECTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Value {
    ObjectSet(ObjectSet),
    ObjectRef(usize),
    Attribute(AttributeValue),
    Integer(usize),
    Boolean(bool),
}

impl Value {
    fn kind_name(self) -> &'static str {
        match self {
            Value::ObjectSet(_) => "object set",
            Value::ObjectRef(_) => "object",
            Value::Attribute(_) => "attribute",
            Value::Integer(_) => "integer",
            Value::Boolean(_) => "boolean",
        }
    }
}

/// Canonical answer text: `yes`/`no`, a decimal integer, or an attribute word.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Answer(String);

impl Answer {
    /// Canonicalizes free text (trim, lower-case). Unknown words are kept and
    /// simply never match a ground-truth answer.
    pub fn from_text(text: &str) -> Answer {
        Answer(text.trim().to_lowercase())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_in_vocabulary(&self) -> bool {
        answer_vocabulary().contains(self)
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// yes/no, 0..=10 and the 15 attribute words.
pub fn answer_vocabulary() -> Vec<Answer> {
    let mut v = vec![Answer("yes".into()), Answer("no".into())];
    v.extend((0..=MAX_OBJECTS).map(|n| Answer(n.to_string())));
    v.extend(AttributeValue::all().into_iter().map(|a| Answer(a.word().into())));
    v
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecError {
    #[error("node {position}: unique received a set of {size} objects")]
    UniqueViolation { position: usize, size: usize },
    #[error("node {position}: {source}")]
    Scene { position: usize, source: SceneError },
    #[error("node {position}: {function} received an ill-kinded {found} input")]
    IllKinded { position: usize, function: Function, found: &'static str },
    #[error("{0} value cannot be rendered as an answer")]
    NotAnAnswer(&'static str),
}

pub fn render_answer(value: Value) -> Result<Answer, ExecError> {
    match value {
        Value::Boolean(b) => Ok(Answer(if b { "yes" } else { "no" }.into())),
        Value::Integer(n) => Ok(Answer(n.to_string())),
        Value::Attribute(a) => Ok(Answer(a.word().into())),
        other => Err(ExecError::NotAnAnswer(other.kind_name())),
    }
}

fn apply(position: usize, function: Function, args: &[Value], scene: &Scene) -> Result<Value, ExecError> {
    let ill = |v: &Value| ExecError::IllKinded { position, function, found: v.kind_name() };
    let set = |v: &Value| match *v {
        Value::ObjectSet(s) => Ok(s),
        ref other => Err(ill(other)),
    };
    let obj = |v: &Value| match *v {
        Value::ObjectRef(id) => Ok(id),
        ref other => Err(ill(other)),
    };
    let int = |v: &Value| match *v {
        Value::Integer(n) => Ok(n),
        ref other => Err(ill(other)),
    };
    let scene_err = |source| ExecError::Scene { position, source };
    Ok(match function {
        Function::Scene => Value::ObjectSet(scene.all_objects()),
        Function::Filter(v) => Value::ObjectSet(scene.filter(set(&args[0])?, v)),
        Function::Unique => {
            let s = set(&args[0])?;
            Value::ObjectRef(s.only().ok_or(ExecError::UniqueViolation { position, size: s.len() })?)
        }
        Function::Relate(d) => Value::ObjectSet(scene.spatial_set(obj(&args[0])?, d).map_err(scene_err)?),
        Function::Same(p) => Value::ObjectSet(scene.match_set(obj(&args[0])?, p).map_err(scene_err)?),
        Function::Union => Value::ObjectSet(set(&args[0])?.union(set(&args[1])?)),
        Function::Intersect => Value::ObjectSet(set(&args[0])?.intersect(set(&args[1])?)),
        Function::Count => Value::Integer(set(&args[0])?.len()),
        Function::Exist => Value::Boolean(!set(&args[0])?.is_empty()),
        Function::Query(p) => Value::Attribute(scene.object(obj(&args[0])?).map_err(scene_err)?.attrs.get(p)),
        Function::Equal(p) => {
            let a = scene.object(obj(&args[0])?).map_err(scene_err)?;
            let b = scene.object(obj(&args[1])?).map_err(scene_err)?;
            Value::Boolean(a.attrs.get(p) == b.attrs.get(p))
        }
        Function::EqualInteger => Value::Boolean(int(&args[0])? == int(&args[1])?),
        Function::GreaterThan => Value::Boolean(int(&args[0])? > int(&args[1])?),
        Function::LessThan => Value::Boolean(int(&args[0])? < int(&args[1])?),
    })
}

/// Evaluates nodes `0..=last` in order; node `bypass`, if given, outputs the
/// full object set instead of its own result.
fn evaluate_prefix(
    program: &TypedProgram,
    scene: &Scene,
    bypass: Option<usize>,
    last: usize,
) -> Result<Vec<Value>, ExecError> {
    let mut values: Vec<Value> = Vec::with_capacity(last + 1);
    let mut args: Vec<Value> = Vec::with_capacity(2);
    for (position, node) in program.nodes()[..=last].iter().enumerate() {
        let value = if bypass == Some(position) {
            Value::ObjectSet(scene.all_objects())
        } else {
            args.clear();
            args.extend(node.inputs.iter().map(|&c| values[c]));
            apply(position, node.function, &args, scene)?
        };
        values.push(value);
    }
    Ok(values)
}

/// Values of every node, in program order.
pub fn evaluate(program: &TypedProgram, scene: &Scene) -> Result<Vec<Value>, ExecError> {
    evaluate_prefix(program, scene, None, program.root())
}

pub fn execute(program: &TypedProgram, scene: &Scene) -> Result<Answer, ExecError> {
    let values = evaluate(program, scene)?;
    render_answer(values[program.root()])
}

/// The last object-set node on the path from `node` towards the root: the
/// set that the first non-set consumer (`unique`, `count`, `exist`) sees.
fn set_region_end(program: &TypedProgram, node: usize) -> usize {
    let mut m = node;
    while let Some(c) = program.consumer(m) {
        if program.kinds()[c] != ValueKind::ObjectSet {
            break;
        }
        m = c;
    }
    m
}

/// Whether relation node `node` is redundant for this scene: replacing its
/// output with every object leaves unchanged the object set that reaches the
/// next non-set operation downstream.
///
/// Filters, unions and intersections are monotone, so the bypassed set is a
/// superset of the original; equality means the relation removed nothing
/// that mattered. When the sets agree, the answer is unchanged and no
/// downstream `unique` can newly fail.
pub fn relation_is_redundant(program: &TypedProgram, scene: &Scene, node: usize) -> Result<bool, ExecError> {
    let end = set_region_end(program, node);
    let original = evaluate_prefix(program, scene, None, end)?;
    let bypassed = evaluate_prefix(program, scene, Some(node), end)?;
    Ok(original[end] == bypassed[end])
}

/// True iff some relation node (`relate[*]` or `same_*`) is redundant in
/// the sense of [`relation_is_redundant`]. Programs without relations are
/// never degenerate.
pub fn is_degenerate(program: &TypedProgram, scene: &Scene) -> Result<bool, ExecError> {
    for (i, node) in program.nodes().iter().enumerate() {
        if node.function.is_relation() && relation_is_redundant(program, scene, i)? {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Whether bypassing relation `node` keeps the final answer and raises no
/// `unique` failure. Agrees with [`relation_is_redundant`] except where the
/// bypassed set only feeds `exist`, which answers "yes" for any non-empty
/// superset.
pub fn bypass_preserves_answer(program: &TypedProgram, scene: &Scene, node: usize) -> Result<bool, ExecError> {
    let original = execute(program, scene)?;
    match evaluate_prefix(program, scene, Some(node), program.root()) {
        Ok(values) => Ok(render_answer(values[program.root()])? == original),
        Err(ExecError::UniqueViolation { .. }) => Ok(false),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{validate, Node, Program};
    use crate::scene::*;

    fn obj(id: usize, x: f64, y: f64, size: Size, color: Color, shape: Shape) -> SceneObject {
        SceneObject {
            id,
            attrs: ObjectAttributes { size, color, material: Material::Rubber, shape },
            position: [x, y, 0.35],
        }
    }

    fn typed(nodes: Vec<Node>) -> TypedProgram {
        validate(&Program::new(nodes)).unwrap()
    }

    fn filter_shape(s: Shape) -> Function {
        Function::Filter(AttributeValue::Shape(s))
    }

    /// brown cube, gray cube (same size as the brown one), small red sphere, large cyan cylinder.
    fn p1_scene() -> Scene {
        Scene::new(
            0,
            Split::Val,
            vec![
                obj(0, 0.0, 0.0, Size::Large, Color::Brown, Shape::Cube),
                obj(1, 1.0, 1.0, Size::Large, Color::Gray, Shape::Cube),
                obj(2, -1.0, 2.0, Size::Small, Color::Red, Shape::Sphere),
                obj(3, 2.0, -1.0, Size::Large, Color::Cyan, Shape::Cylinder),
            ],
        )
        .unwrap()
    }

    fn p1() -> TypedProgram {
        typed(vec![
            Node::new(Function::Scene, []),
            Node::new(Function::Filter(AttributeValue::Color(Color::Brown)), [0]),
            Node::new(filter_shape(Shape::Cube), [1]),
            Node::new(Function::Unique, [2]),
            Node::new(Function::Same(Property::Size), [3]),
            Node::new(filter_shape(Shape::Cube), [4]),
            Node::new(Function::Unique, [5]),
            Node::new(Function::Query(Property::Color), [6]),
        ])
    }

    #[test]
    fn exist_on_empty_filter_is_no() {
        let p = typed(vec![
            Node::new(Function::Scene, []),
            Node::new(Function::Filter(AttributeValue::Color(Color::Purple)), [0]),
            Node::new(Function::Exist, [1]),
        ]);
        assert_eq!(execute(&p, &p1_scene()).unwrap().as_str(), "no");
    }

    #[test]
    fn count_scene_is_object_count() {
        let p = typed(vec![Node::new(Function::Scene, []), Node::new(Function::Count, [0])]);
        assert_eq!(execute(&p, &p1_scene()).unwrap().as_str(), "4");
    }

    #[test]
    fn p1_answers_other_cube_color() {
        // Enumerating by hand: the brown cube is object 0; objects with its size
        // other than itself are {1, 3}; of those only 1 is a cube, and it is gray.
        assert_eq!(execute(&p1(), &p1_scene()).unwrap().as_str(), "gray");
    }

    #[test]
    fn unique_violation_is_an_error() {
        let p = typed(vec![
            Node::new(Function::Scene, []),
            Node::new(filter_shape(Shape::Cube), [0]),
            Node::new(Function::Unique, [1]),
            Node::new(Function::Query(Property::Color), [2]),
        ]);
        assert_eq!(execute(&p, &p1_scene()), Err(ExecError::UniqueViolation { position: 2, size: 2 }));
    }

    #[test]
    fn render_answer_cases() {
        assert_eq!(render_answer(Value::Boolean(true)).unwrap().as_str(), "yes");
        assert_eq!(render_answer(Value::Integer(3)).unwrap().as_str(), "3");
        assert_eq!(render_answer(Value::Attribute(AttributeValue::Color(Color::Cyan))).unwrap().as_str(), "cyan");
        assert!(matches!(render_answer(Value::ObjectSet(ObjectSet::EMPTY)), Err(ExecError::NotAnAnswer(_))));
        assert!(matches!(render_answer(Value::ObjectRef(0)), Err(ExecError::NotAnAnswer(_))));
    }

    #[test]
    fn vocabulary_is_closed() {
        assert_eq!(answer_vocabulary().len(), 2 + 11 + 15);
        assert!(Answer::from_text(" Yes ").is_in_vocabulary());
        assert!(!Answer::from_text("maybe").is_in_vocabulary());
    }

    #[test]
    fn no_relations_never_degenerate() {
        let p = typed(vec![
            Node::new(Function::Scene, []),
            Node::new(filter_shape(Shape::Cube), [0]),
            Node::new(Function::Count, [1]),
        ]);
        assert!(!is_degenerate(&p, &p1_scene()).unwrap());
    }

    /// "the cube left of the sphere": with one cube that is already left of
    /// the sphere, the relation is redundant.
    #[test]
    fn redundant_spatial_relation_is_degenerate() {
        let scene = Scene::new(
            0,
            Split::Val,
            vec![
                obj(0, -1.0, 0.0, Size::Small, Color::Red, Shape::Cube),
                obj(1, 1.0, 1.0, Size::Small, Color::Blue, Shape::Sphere),
                obj(2, -2.0, 2.0, Size::Large, Color::Gray, Shape::Cylinder),
            ],
        )
        .unwrap();
        let p = typed(vec![
            Node::new(Function::Scene, []),
            Node::new(filter_shape(Shape::Sphere), [0]),
            Node::new(Function::Unique, [1]),
            Node::new(Function::Relate(Direction::Left), [2]),
            Node::new(filter_shape(Shape::Cube), [3]),
            Node::new(Function::Unique, [4]),
            Node::new(Function::Query(Property::Color), [5]),
        ]);
        assert_eq!(execute(&p, &scene).unwrap().as_str(), "red");
        // Re-run with the relation bypassed: the cube filter still sees {0}.
        assert!(relation_is_redundant(&p, &scene, 3).unwrap());
        assert!(bypass_preserves_answer(&p, &scene, 3).unwrap());
        assert!(is_degenerate(&p, &scene).unwrap());
    }

    /// "another cube same size as the brown cube": bypassing same_size lets
    /// the brown cube itself through, so unique would see two cubes.
    #[test]
    fn necessary_matching_relation_is_not_degenerate() {
        let p = p1();
        assert!(!relation_is_redundant(&p, &p1_scene(), 4).unwrap());
        assert!(!bypass_preserves_answer(&p, &p1_scene(), 4).unwrap());
        assert!(!is_degenerate(&p, &p1_scene()).unwrap());
    }

    fn exist_program(anchor: Shape, property: Property, target: Option<Shape>) -> TypedProgram {
        let mut nodes = vec![
            Node::new(Function::Scene, []),
            Node::new(filter_shape(anchor), [0]),
            Node::new(Function::Unique, [1]),
            Node::new(Function::Same(property), [2]),
        ];
        if let Some(t) = target {
            nodes.push(Node::new(filter_shape(t), [3]));
        }
        nodes.push(Node::new(Function::Exist, [nodes.len() - 1]));
        typed(nodes)
    }

    #[test]
    fn exist_sink_compares_sets_not_answers() {
        let scene = p1_scene();

        // "Is there a cube that is the same color as the sphere?" Nothing else
        // is red, so "no"; bypassed, the cube filter finds two cubes.
        let p = exist_program(Shape::Sphere, Property::Color, Some(Shape::Cube));
        assert_eq!(execute(&p, &scene).unwrap().as_str(), "no");
        assert!(!is_degenerate(&p, &scene).unwrap());

        // "Is there a cube that is the same size as the cylinder?" Both cubes
        // are large like the cylinder: the relation filters out nothing.
        let p = exist_program(Shape::Cylinder, Property::Size, Some(Shape::Cube));
        assert_eq!(execute(&p, &scene).unwrap().as_str(), "yes");
        assert!(is_degenerate(&p, &scene).unwrap());

        // "Is there a thing that is the same size as the cylinder?" The
        // relation keeps {0, 1} out of four objects, so it is informative even
        // though exist over the bypassed set would also say "yes".
        let p = exist_program(Shape::Cylinder, Property::Size, None);
        assert_eq!(execute(&p, &scene).unwrap().as_str(), "yes");
        assert!(!is_degenerate(&p, &scene).unwrap());
        assert!(bypass_preserves_answer(&p, &scene, 3).unwrap());
    }
}
