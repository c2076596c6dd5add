use rand::Rng;

use super::function::{Function, ValueKind};
use super::program::{Node, Program};
use crate::scene::{AttributeValue, Direction, Property};

// Shallowest subtree producing each kind.
fn min_depth(kind: ValueKind) -> usize {
    match kind {
        ValueKind::ObjectSet => 1,
        ValueKind::ObjectRef | ValueKind::Integer | ValueKind::Boolean => 2,
        ValueKind::Attribute(_) => 3,
    }
}

fn pick<T: Copy, R: Rng + ?Sized>(rng: &mut R, items: &[T]) -> T {
    items[rng.random_range(0..items.len())]
}

fn grow<R: Rng + ?Sized>(rng: &mut R, kind: ValueKind, depth: usize, nodes: &mut Vec<Node>) -> usize {
    use ValueKind::*;
    let below = depth - 1;
    let (function, children): (Function, Vec<ValueKind>) = match kind {
        ObjectSet => {
            let mut options: Vec<u8> = vec![0];
            if below >= 1 {
                options.extend([1, 1, 1, 4, 5]);
            }
            if below >= 2 {
                options.extend([2, 3]);
            }
            match pick(rng, &options) {
                0 => (Function::Scene, vec![]),
                1 => (Function::Filter(pick(rng, &AttributeValue::all())), vec![ObjectSet]),
                2 => (Function::Relate(pick(rng, Direction::ALL)), vec![ObjectRef]),
                3 => (Function::Same(pick(rng, Property::ALL)), vec![ObjectRef]),
                4 => (Function::Union, vec![ObjectSet, ObjectSet]),
                _ => (Function::Intersect, vec![ObjectSet, ObjectSet]),
            }
        }
        ObjectRef => (Function::Unique, vec![ObjectSet]),
        Integer => (Function::Count, vec![ObjectSet]),
        Attribute(p) => (Function::Query(p), vec![ObjectRef]),
        Boolean => {
            let mut options: Vec<u8> = vec![0];
            if below >= 2 {
                options.extend([1, 2]);
            }
            match pick(rng, &options) {
                0 => (Function::Exist, vec![ObjectSet]),
                1 => (Function::Equal(pick(rng, Property::ALL)), vec![ObjectRef, ObjectRef]),
                _ => (
                    pick(rng, &[Function::EqualInteger, Function::GreaterThan, Function::LessThan]),
                    vec![Integer, Integer],
                ),
            }
        }
    };
    let inputs: Vec<usize> = children
        .into_iter()
        .map(|k| {
            debug_assert!(min_depth(k) <= below);
            let d = rng.random_range(min_depth(k)..=below);
            grow(rng, k, d, nodes)
        })
        .collect();
    nodes.push(Node::new(function, inputs));
    nodes.len() - 1
}

/// A random valid program of depth at most `max_depth` (clamped to at least 3).
///
/// Depth counts nodes on the longest root-to-leaf path. Nodes are emitted in
/// post-order, so the result is already topologically sorted.
pub fn sample_program<R: Rng + ?Sized>(rng: &mut R, max_depth: usize) -> Program {
    let max_depth = max_depth.max(3);
    let root_kinds = [ValueKind::Integer, ValueKind::Boolean, ValueKind::Attribute(pick(rng, Property::ALL))];
    let kind = pick(rng, &root_kinds);
    let depth = rng.random_range(min_depth(kind)..=max_depth);
    let mut nodes = Vec::new();
    grow(rng, kind, depth, &mut nodes);
    Program::new(nodes)
}

/// Length of the longest root-to-leaf path.
pub fn depth(program: &Program) -> usize {
    let mut d = vec![0usize; program.len()];
    for (i, node) in program.nodes().iter().enumerate() {
        d[i] = 1 + node.inputs.iter().map(|&c| d[c]).max().unwrap_or(0);
    }
    d.last().copied().unwrap_or(0)
}
