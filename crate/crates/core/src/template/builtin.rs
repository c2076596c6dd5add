//! The seven CLOSURE families and their closest CLEVR baselines.

use std::sync::OnceLock;

use super::{Constraint, SkeletonNode, SkeletonOp, SlotId, SlotKind, Template, TemplateGroup};
use crate::dsl::Function;

pub const CLOSURE_FAMILIES: [&str; 7] =
    ["embed_spa_mat", "embed_mat_spa", "compare_mat", "compare_mat_spa", "and_mat_spa", "or_mat", "or_mat_spa"];

/// Appended to a CLOSURE family name to name its baseline.
pub const BASELINE_SUFFIX: &str = "_baseline";

fn slot(kind: SlotKind, index: u8) -> SlotId {
    SlotId::new(kind, index)
}

const A: SlotId = SlotId::new(SlotKind::A, 1);
const Q: SlotId = SlotId::new(SlotKind::Q, 1);

/// Appends skeleton nodes and returns their indices.
#[derive(Default)]
struct Skeleton {
    nodes: Vec<SkeletonNode>,
}

impl Skeleton {
    fn push(&mut self, op: SkeletonOp, inputs: &[usize]) -> usize {
        self.nodes.push(SkeletonNode { op, inputs: inputs.to_vec() });
        self.nodes.len() - 1
    }

    fn fixed(&mut self, f: Function, inputs: &[usize]) -> usize {
        self.push(SkeletonOp::Fixed(f), inputs)
    }

    fn filter(&mut self, group: u8, input: usize) -> usize {
        let slots = [SlotKind::Z, SlotKind::C, SlotKind::M, SlotKind::S].map(|k| slot(k, group)).to_vec();
        self.push(SkeletonOp::Filter(slots), &[input])
    }

    /// `scene -> filter(group) -> unique`
    fn unique_object(&mut self, group: u8) -> usize {
        let scene = self.fixed(Function::Scene, &[]);
        let set = self.filter(group, scene);
        self.fixed(Function::Unique, &[set])
    }

    /// `filter(group) -> unique` applied to `set`.
    fn unique_in(&mut self, group: u8, set: usize) -> usize {
        let filtered = self.filter(group, set);
        self.fixed(Function::Unique, &[filtered])
    }

    /// Objects standing in relation `relation` (a spatial `R` slot, or the
    /// matched property `A`) to object `anchor`.
    fn relate(&mut self, relation: SlotId, anchor: usize) -> usize {
        let op = if relation.kind == SlotKind::R { SkeletonOp::Relate(relation) } else { SkeletonOp::Same(relation) };
        self.push(op, &[anchor])
    }
}

fn null(property_slot: SlotId, group: u8) -> Constraint {
    Constraint::NullForProperty { property_slot, group }
}

struct Family {
    name: &'static str,
    closure_text: &'static str,
    baseline_text: &'static str,
}

const FAMILIES: [Family; 7] = [
    Family {
        name: "embed_spa_mat",
        closure_text: "Is there a <Z> <C> <M> <S> that is the same <A> as the <Z2> <C2> <M2> <S2> <R> the <Z3> <C3> <M3> <S3>?",
        baseline_text: "Is there a <Z> <C> <M> <S> [that is] <R> the <Z2> <C2> <M2> <S2> [that is] <R2> the <Z3> <C3> <M3> <S3>?",
    },
    Family {
        name: "embed_mat_spa",
        closure_text: "Is there a <Z> <C> <M> <S> <R> the <Z2> <C2> <M2> <S2> that is the same <A> as <Z3> <C3> <M3> <S3>?",
        baseline_text: "Is there a <Z> <C> <M> <S> [that is] <R> the <Z2> <C2> <M2> <S2> [that is] <R2> the <Z3> <C3> <M3> <S3>?",
    },
    Family {
        name: "compare_mat",
        closure_text: "There is another <Z> <C> <M> <S> that is the same <A> as the <Z2> <C2> <M2> <S2>; does it have the same <Q> as the <Z3> <C3> <M3> <S3>?",
        baseline_text: "There is a <Z> <C> <M> <S> [that is] <R> the <Z2> <C2> <M2> <S2>; does it have the same <Q> as the <Z3> <C3> <M3> <S3>?",
    },
    Family {
        name: "compare_mat_spa",
        closure_text: "There is another <Z> <C> <M> <S> that is the same <A> as the <Z2> <C2> <M2> <S2>; does it have the same <Q> as the <Z3> <C3> <M3> <S3> [that is] <R2> the <Z4> <C4> <M4> <S4>?",
        baseline_text: "There is a <Z> <C> <M> <S> [that is] <R> the <Z2> <C2> <M2> <S2>; does it have the same <Q> as the <Z3> <C3> <M3> <S3> [that is] <R2> the <Z4> <C4> <M4> <S4>?",
    },
    Family {
        name: "and_mat_spa",
        closure_text: "What is the <Q> of the <Z> <C> <M> <S> that is <R2> the <Z2> <C2> <M2> <S2> and is the same <A> as the <Z3> <C3> <M3> <S3>?",
        baseline_text: "What is the <Q> of the <Z> <C> <M> <S> that is [both] <R> the <Z2> <C2> <M2> <S2> and <R2> the <Z3> <C3> <M3> <S3>?",
    },
    Family {
        name: "or_mat",
        closure_text: "How many things are [either] <Z> <C> <M> <S>s or <Z2> <C2> <M2> <S2>s that are the same <A> as the <Z3> <C3> <M3> <S3>?",
        baseline_text: "How many things are [either] <Z> <C> <M> <S>s or <Z2> <C2> <M2> <S2>s [that are] <R> the <Z3> <C3> <M3> <S3>?",
    },
    Family {
        name: "or_mat_spa",
        closure_text: "How many things are [either] <Z> <C> <M> <S>s [that are] <R> the <Z2> <C2> <M2> <S2> or <Z3> <C3> <M3> <S3>s that are the same <A> as the <Z4> <C4> <M4> <S4>?",
        baseline_text: "How many things are [either] <Z> <C> <M> <S>s [that are] <R> the <Z2> <C2> <M2> <S2> or <Z3> <C3> <M3> <S3>s [that are] <R2> the <Z4> <C4> <M4> <S4>?",
    },
];

/// Builds one family's skeleton. `first`/`second` are the two relation
/// slots in textual order: `A` for a matching relation or an `R` slot.
fn skeleton(name: &str, first: SlotId, second: SlotId) -> Vec<SkeletonNode> {
    let mut sk = Skeleton::default();
    match name {
        // X1 <first> (X2 <second> X3)
        "embed_spa_mat" | "embed_mat_spa" => {
            let inner = sk.unique_object(3);
            let related = sk.relate(second, inner);
            let middle = sk.unique_in(2, related);
            let outer = sk.relate(first, middle);
            let target = sk.filter(1, outer);
            sk.fixed(Function::Exist, &[target]);
        }
        // it = X1 <first> X2; compare Q of it with X3 (optionally X3 <second> X4)
        "compare_mat" | "compare_mat_spa" => {
            let anchor = sk.unique_object(2);
            let related = sk.relate(first, anchor);
            let it = sk.unique_in(1, related);
            let other = if name == "compare_mat" {
                sk.unique_object(3)
            } else {
                let far = sk.unique_object(4);
                let near = sk.relate(second, far);
                sk.unique_in(3, near)
            };
            sk.push(SkeletonOp::Equal(Q), &[it, other]);
        }
        // Q of the X1 that is <first> X2 and <second> X3
        "and_mat_spa" => {
            let left_anchor = sk.unique_object(2);
            let left = sk.relate(first, left_anchor);
            let right_anchor = sk.unique_object(3);
            let right = sk.relate(second, right_anchor);
            let both = sk.fixed(Function::Intersect, &[left, right]);
            let it = sk.unique_in(1, both);
            sk.push(SkeletonOp::Query(Q), &[it]);
        }
        // count(X1s or X2s <second> X3)
        "or_mat" => {
            let scene = sk.fixed(Function::Scene, &[]);
            let left = sk.filter(1, scene);
            let anchor = sk.unique_object(3);
            let related = sk.relate(second, anchor);
            let right = sk.filter(2, related);
            let either = sk.fixed(Function::Union, &[left, right]);
            sk.fixed(Function::Count, &[either]);
        }
        // count(X1s <first> X2 or X3s <second> X4)
        "or_mat_spa" => {
            let left_anchor = sk.unique_object(2);
            let left_related = sk.relate(first, left_anchor);
            let left = sk.filter(1, left_related);
            let right_anchor = sk.unique_object(4);
            let right_related = sk.relate(second, right_anchor);
            let right = sk.filter(3, right_related);
            let either = sk.fixed(Function::Union, &[left, right]);
            sk.fixed(Function::Count, &[either]);
        }
        other => unreachable!("unknown family {other}"),
    }
    sk.nodes
}

fn closure_template(family: &Family) -> Template {
    let (r, r2) = (slot(SlotKind::R, 1), slot(SlotKind::R, 2));
    let (first, second, constraints) = match family.name {
        "embed_spa_mat" => (A, r, vec![null(A, 1)]),
        "embed_mat_spa" => (r, A, vec![null(A, 2)]),
        "compare_mat" | "compare_mat_spa" => {
            (A, r2, vec![null(A, 1), Constraint::Distinct(A, Q), null(Q, 1), null(Q, 3)])
        }
        "and_mat_spa" => (r2, A, vec![null(A, 1), Constraint::Distinct(A, Q), null(Q, 1)]),
        "or_mat" => (r, A, vec![null(A, 2)]),
        "or_mat_spa" => (r, A, vec![null(A, 3)]),
        other => unreachable!("unknown family {other}"),
    };
    let nodes = skeleton(family.name, first, second);
    Template::new(family.name, TemplateGroup::Closure, family.closure_text, nodes, constraints, None)
        .unwrap_or_else(|e| panic!("builtin {}: {e}", family.name))
}

fn baseline_template(family: &Family) -> Template {
    let (r, r2) = (slot(SlotKind::R, 1), slot(SlotKind::R, 2));
    let constraints = match family.name {
        "compare_mat" | "compare_mat_spa" => vec![null(Q, 1), null(Q, 3)],
        "and_mat_spa" => vec![null(Q, 1)],
        _ => vec![],
    };
    // In the embed baselines the text's first relation is the outer one.
    let (first, second) = match family.name {
        "or_mat" => (r2, r),
        _ => (r, r2),
    };
    let nodes = skeleton(family.name, first, second);
    let name = format!("{}{BASELINE_SUFFIX}", family.name);
    Template::new(&name, TemplateGroup::Baseline, family.baseline_text, nodes, constraints, None)
        .unwrap_or_else(|e| panic!("builtin {name}: {e}"))
}

/// The 14 builtin templates: the CLOSURE families followed by their
/// baselines, each list in the order the families are usually presented.
pub fn builtin_templates() -> Vec<Template> {
    static BUILTIN: OnceLock<Vec<Template>> = OnceLock::new();
    BUILTIN
        .get_or_init(|| {
            let closure = FAMILIES.iter().map(closure_template);
            let baseline = FAMILIES.iter().map(baseline_template);
            closure.chain(baseline).collect()
        })
        .clone()
}

pub fn find_template(family: &str) -> Option<Template> {
    builtin_templates().into_iter().find(|t| t.family() == family)
}
