//! Assembles per-token modules along a program and evaluates them.

use serde::{Deserialize, Serialize};

use super::params::{embedding_name, tensor_name, ModuleParams, SHORTCUT_PREFIX, TENSOR_PREFIX};
use super::tensor::FeatureMap;
use super::tensor_nmn::{tensor_nmn_forward, TensorVariant};
use super::vector::vector_nmn_forward;
use super::ModuleError;
use crate::dsl::Program;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModuleKind {
    Vector { blocks: usize },
    Tensor(TensorVariant),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModuleOutput {
    Vector(Vec<f64>),
    Tensor(FeatureMap),
}

impl ModuleOutput {
    pub fn as_vector(&self) -> Option<&[f64]> {
        match self {
            ModuleOutput::Vector(v) => Some(v),
            ModuleOutput::Tensor(_) => None,
        }
    }

    pub fn as_tensor(&self) -> Option<&FeatureMap> {
        match self {
            ModuleOutput::Tensor(t) => Some(t),
            ModuleOutput::Vector(_) => None,
        }
    }
}

/// Parameter arrays that a module of `kind` needs for `token`.
fn required(token: &str, kind: ModuleKind) -> String {
    match kind {
        ModuleKind::Vector { .. } | ModuleKind::Tensor(TensorVariant::Film) => embedding_name(token),
        ModuleKind::Tensor(TensorVariant::Plain) => tensor_name(TENSOR_PREFIX, token, "w1"),
        ModuleKind::Tensor(TensorVariant::Shortcut) => tensor_name(SHORTCUT_PREFIX, token, "w1"),
    }
}

fn mismatch() -> ModuleError {
    ModuleError::Shape("module output kind does not match the module architecture".into())
}

fn vector_arg(arg: Option<&ModuleOutput>) -> Result<Option<&[f64]>, ModuleError> {
    arg.map(|o| o.as_vector().ok_or_else(mismatch)).transpose()
}

fn tensor_arg(arg: Option<&ModuleOutput>) -> Result<Option<&FeatureMap>, ModuleError> {
    arg.map(|o| o.as_tensor().ok_or_else(mismatch)).transpose()
}

/// One module application with already computed argument outputs.
pub fn apply_module(
    params: &ModuleParams,
    token: &str,
    h_x: &FeatureMap,
    left: Option<&ModuleOutput>,
    right: Option<&ModuleOutput>,
    kind: ModuleKind,
) -> Result<ModuleOutput, ModuleError> {
    match kind {
        ModuleKind::Vector { blocks } => {
            let out = vector_nmn_forward(params, token, h_x, vector_arg(left)?, vector_arg(right)?, blocks)?;
            Ok(ModuleOutput::Vector(out))
        }
        ModuleKind::Tensor(variant) => {
            let out = tensor_nmn_forward(params, token, tensor_arg(left)?, tensor_arg(right)?, h_x, variant)?;
            Ok(ModuleOutput::Tensor(out))
        }
    }
}

/// Module assembly only needs arities and backward references; answer
/// kinds do not matter, so a bare `scene` program is runnable.
fn check_layout(program: &Program) -> Result<(), ModuleError> {
    if program.is_empty() {
        return Err(ModuleError::Config("empty program".into()));
    }
    for (position, node) in program.nodes().iter().enumerate() {
        if node.inputs.len() != node.function.arity() {
            return Err(ModuleError::Config(format!(
                "node {position}: {} takes {} argument(s), got {}",
                node.function,
                node.function.arity(),
                node.inputs.len()
            )));
        }
        if let Some(&bad) = node.inputs.iter().find(|&&i| i >= position) {
            return Err(ModuleError::Config(format!("node {position}: argument {bad} does not precede it")));
        }
    }
    Ok(())
}

/// Every module output, in program order.
pub fn run_program_traced(
    program: &Program,
    h_x: &FeatureMap,
    params: &ModuleParams,
    kind: ModuleKind,
) -> Result<Vec<ModuleOutput>, ModuleError> {
    check_layout(program)?;
    let missing: Vec<String> = program
        .nodes()
        .iter()
        .map(|node| node.function.name())
        .filter(|token| !params.contains(&required(token, kind)))
        .collect();
    if !missing.is_empty() {
        return Err(ModuleError::Config(format!("no module parameters for {}", missing.join(", "))));
    }
    let mut outputs: Vec<ModuleOutput> = Vec::with_capacity(program.len());
    for node in program.nodes() {
        let left = node.inputs.first().map(|&i| &outputs[i]);
        let right = node.inputs.get(1).map(|&i| &outputs[i]);
        let out = apply_module(params, &node.function.name(), h_x, left, right, kind)?;
        outputs.push(out);
    }
    Ok(outputs)
}

/// The output of the root module.
pub fn run_program(
    program: &Program,
    h_x: &FeatureMap,
    params: &ModuleParams,
    kind: ModuleKind,
) -> Result<ModuleOutput, ModuleError> {
    Ok(run_program_traced(program, h_x, params, kind)?.pop().expect("checked non-empty"))
}
