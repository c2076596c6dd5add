//! Symbolic CLEVR/CLOSURE engine: scenes, the functional program DSL, an
//! exact executor, question templates, dataset generation, a rule-based
//! question parser and small numeric kernels for neural module networks.

pub mod dsl;
pub mod eval;
pub mod executor;
pub mod generator;
pub mod io;
pub mod module_net;
pub mod parser;
pub mod rng;
pub mod scene;
pub mod template;

pub use dsl::{Function, Node, Program, TypedProgram, ValueKind};
pub use eval::{run_symbolic_pipeline, score, AccuracyReport};
pub use executor::{execute, is_degenerate, Answer, ExecError};
pub use generator::{DatasetConfig, Reject};
pub use io::{PredictionSet, QAInstance};
pub use module_net::{FeatureMap, ModuleParams};
pub use parser::{ParseError, ParseResult, QuestionParser};
pub use scene::{
    AttributeValue, Color, Direction, Material, ObjectSet, Property, Scene, SceneObject, Shape, Size, Split,
};
pub use template::{builtin_templates, SlotBinding, Template};
