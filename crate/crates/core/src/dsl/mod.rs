//! The CLEVR functional DSL: catalog, `(P, L, R)` programs, type checking
//! and JSON serialization.

mod function;
mod program;
mod sample;

pub use function::{catalog, Function, FunctionToken, UnknownFunction, ValueKind};
pub use program::{
    deserialize, serialize, validate, Node, Plr, Program, ProgramParseError, TypedProgram, ValidationError,
};
pub use sample::{depth, sample_program};
