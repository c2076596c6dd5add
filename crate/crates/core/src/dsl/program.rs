use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::function::{Function, ValueKind};

/// One function call; `inputs` index earlier nodes (left argument first).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Node {
    pub function: Function,
    pub inputs: Vec<usize>,
}

impl Node {
    pub fn new(function: Function, inputs: impl Into<Vec<usize>>) -> Node {
        Node { function, inputs: inputs.into() }
    }
}

/// A program as a token sequence with per-position argument indices.
///
/// The root is the last node. Construction does not check anything; use
/// [`validate`] to obtain a [`TypedProgram`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Program {
    nodes: Vec<Node>,
}

/// The `(P, L, R)` view of a program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plr {
    pub tokens: Vec<Function>,
    pub left: Vec<Option<usize>>,
    pub right: Vec<Option<usize>>,
}

impl Program {
    pub fn new(nodes: Vec<Node>) -> Program {
        Program { nodes }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> Option<usize> {
        self.nodes.len().checked_sub(1)
    }

    pub fn left(&self, i: usize) -> Option<usize> {
        self.nodes.get(i)?.inputs.first().copied()
    }

    pub fn right(&self, i: usize) -> Option<usize> {
        self.nodes.get(i)?.inputs.get(1).copied()
    }

    pub fn to_plr(&self) -> Plr {
        Plr {
            tokens: self.nodes.iter().map(|n| n.function).collect(),
            left: (0..self.len()).map(|i| self.left(i)).collect(),
            right: (0..self.len()).map(|i| self.right(i)).collect(),
        }
    }

    pub fn from_plr(plr: &Plr) -> Program {
        let nodes = plr
            .tokens
            .iter()
            .enumerate()
            .map(|(i, &f)| Node::new(f, plr.left[i].into_iter().chain(plr.right[i]).collect::<Vec<_>>()))
            .collect();
        Program { nodes }
    }

    /// Nested-call rendering of the tree, e.g. `count(filter_shape[cube](scene))`.
    ///
    /// Two programs denote the same ordered tree iff their tree strings agree,
    /// whatever topological order their nodes are listed in.
    pub fn tree_string(&self) -> String {
        fn go(p: &Program, i: usize, out: &mut String) {
            let node = &p.nodes[i];
            out.push_str(&node.function.name());
            if !node.inputs.is_empty() {
                out.push('(');
                for (k, &c) in node.inputs.iter().enumerate() {
                    if k > 0 {
                        out.push_str(", ");
                    }
                    if c < i {
                        go(p, c, out);
                    } else {
                        out.push('?');
                    }
                }
                out.push(')');
            }
        }
        let mut out = String::new();
        if let Some(root) = self.root() {
            go(self, root, &mut out);
        }
        out
    }

    pub fn tree_eq(&self, other: &Program) -> bool {
        self.tree_string() == other.tree_string()
    }

    /// Lists the same nodes in a different order; `order[new] = old`.
    pub fn reordered(&self, order: &[usize]) -> Result<Program, ValidationError> {
        let n = self.len();
        let mut new_index = vec![usize::MAX; n];
        for (new, &old) in order.iter().enumerate() {
            if old >= n || new_index[old] != usize::MAX {
                return Err(ValidationError::BadOrder);
            }
            new_index[old] = new;
        }
        if order.len() != n {
            return Err(ValidationError::BadOrder);
        }
        let nodes = order
            .iter()
            .map(|&old| {
                let node = &self.nodes[old];
                Node::new(node.function, node.inputs.iter().map(|&c| new_index[c]).collect::<Vec<_>>())
            })
            .collect();
        Ok(Program { nodes })
    }

    /// A uniformly shuffled topological order ending at the root.
    pub fn shuffled_topological_order<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let n = self.len();
        let mut pending: Vec<usize> = self.nodes.iter().map(|node| node.inputs.len()).collect();
        let mut consumers = vec![Vec::new(); n];
        for (i, node) in self.nodes.iter().enumerate() {
            for &c in &node.inputs {
                consumers[c].push(i);
            }
        }
        let mut ready: Vec<usize> = (0..n).filter(|&i| pending[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while !ready.is_empty() {
            ready.shuffle(rng);
            let next = ready.pop().unwrap();
            order.push(next);
            for &c in &consumers[next] {
                pending[c] -= 1;
                if pending[c] == 0 {
                    ready.push(c);
                }
            }
        }
        order
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tree_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("empty program")]
    Empty,
    #[error("node {position}: {function} takes {expected} argument(s), got {found}")]
    Arity { position: usize, function: Function, expected: usize, found: usize },
    #[error("node {position}: argument {argument} does not precede it")]
    ForwardReference { position: usize, argument: usize },
    #[error("node {position}: input {slot} of {function} expects {expected}, node {argument} produces {found}")]
    KindMismatch {
        position: usize,
        function: Function,
        slot: usize,
        argument: usize,
        expected: ValueKind,
        found: ValueKind,
    },
    #[error("node {position} is consumed {consumers} time(s); every non-root node must feed exactly one later node")]
    NotTree { position: usize, consumers: usize },
    #[error("root node {position} produces {kind}, not an answer")]
    RootKind { position: usize, kind: ValueKind },
    #[error("node order is not a permutation of the program's nodes")]
    BadOrder,
}

/// A program that passed [`validate`], with the kind of every node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypedProgram {
    program: Program,
    kinds: Vec<ValueKind>,
}

impl TypedProgram {
    pub fn program(&self) -> &Program {
        &self.program
    }

    pub fn kinds(&self) -> &[ValueKind] {
        &self.kinds
    }

    pub fn nodes(&self) -> &[Node] {
        self.program.nodes()
    }

    pub fn len(&self) -> usize {
        self.program.len()
    }

    pub fn is_empty(&self) -> bool {
        self.program.is_empty()
    }

    pub fn root(&self) -> usize {
        self.program.len() - 1
    }

    pub fn answer_kind(&self) -> ValueKind {
        self.kinds[self.root()]
    }

    /// Index of the single node consuming `i`, or `None` for the root.
    pub fn consumer(&self, i: usize) -> Option<usize> {
        self.program.nodes[i + 1..].iter().position(|n| n.inputs.contains(&i)).map(|k| k + i + 1)
    }

    pub fn into_program(self) -> Program {
        self.program
    }
}

pub fn validate(program: &Program) -> Result<TypedProgram, ValidationError> {
    let nodes = program.nodes();
    if nodes.is_empty() {
        return Err(ValidationError::Empty);
    }
    let mut kinds = Vec::with_capacity(nodes.len());
    let mut consumers = vec![0usize; nodes.len()];
    for (position, node) in nodes.iter().enumerate() {
        let expected = node.function.input_kinds();
        if expected.len() != node.inputs.len() {
            return Err(ValidationError::Arity {
                position,
                function: node.function,
                expected: expected.len(),
                found: node.inputs.len(),
            });
        }
        for (slot, (&argument, &want)) in node.inputs.iter().zip(&expected).enumerate() {
            if argument >= position {
                return Err(ValidationError::ForwardReference { position, argument });
            }
            let found: ValueKind = kinds[argument];
            if found != want {
                return Err(ValidationError::KindMismatch {
                    position,
                    function: node.function,
                    slot,
                    argument,
                    expected: want,
                    found,
                });
            }
            consumers[argument] += 1;
        }
        kinds.push(node.function.output_kind());
    }
    let root = nodes.len() - 1;
    if let Some((position, &n)) = consumers[..root].iter().enumerate().find(|(_, &c)| c != 1) {
        return Err(ValidationError::NotTree { position, consumers: n });
    }
    if consumers[root] != 0 {
        return Err(ValidationError::NotTree { position: root, consumers: consumers[root] });
    }
    if !kinds[root].is_answer() {
        return Err(ValidationError::RootKind { position: root, kind: kinds[root] });
    }
    Ok(TypedProgram { program: program.clone(), kinds })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("program JSON, line {line} column {column}: {message}")]
pub struct ProgramParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl From<serde_json::Error> for ProgramParseError {
    fn from(e: serde_json::Error) -> Self {
        ProgramParseError { line: e.line(), column: e.column(), message: e.to_string() }
    }
}

/// Compact JSON: `[{"function": "scene", "inputs": []}, ...]`.
pub fn serialize(program: &Program) -> String {
    serde_json::to_string(program).expect("program serialization is infallible")
}

pub fn deserialize(text: &str) -> Result<Program, ProgramParseError> {
    Ok(serde_json::from_str(text)?)
}
