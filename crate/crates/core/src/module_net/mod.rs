//! Toy-scale neural module network kernels in double precision: the
//! Vector-NMN, the Tensor-NMN variants, program assembly and gradient checks.
//!
//! Forward and backward passes only; there is no training loop.

mod film;
mod gradcheck;
mod params;
mod program;
mod tensor;
mod tensor_nmn;
mod vector;

use std::collections::BTreeMap;

use thiserror::Error;

pub use film::{film_coeffs, film_input, FilmCoeffs};
pub use gradcheck::{
    grad_check, gradient_suite, gradients, loss, GradInputs, GradOp, GradReport, Operand, SuiteResult, RELATIVE_FLOOR,
};
pub use params::{BiasPlacement, ModuleConfig, ModuleParams, ParamArray};
pub use program::{apply_module, run_program, run_program_traced, ModuleKind, ModuleOutput};
pub use tensor::{affine, affine_transpose, conv3x3, conv3x3_backward, kernel_len, outer, FeatureMap};
pub use tensor_nmn::{tensor_nmn_backward, tensor_nmn_forward, TensorVariant};
pub use vector::{vector_nmn_backward, vector_nmn_forward};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModuleError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing parameter array {0}")]
    MissingParams(String),
    #[error("parameter file error: {0}")]
    Io(String),
}

/// Gradients keyed by parameter array name and by input name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    pub params: BTreeMap<String, Vec<f64>>,
    pub inputs: BTreeMap<String, Vec<f64>>,
}

fn accumulate(map: &mut BTreeMap<String, Vec<f64>>, name: &str, values: &[f64]) {
    let entry = map.entry(name.to_string()).or_insert_with(|| vec![0.0; values.len()]);
    for (acc, v) in entry.iter_mut().zip(values) {
        *acc += v;
    }
}

impl Gradients {
    pub fn add_param(&mut self, name: &str, values: &[f64]) {
        accumulate(&mut self.params, name, values);
    }

    pub fn add_input(&mut self, name: &str, values: &[f64]) {
        accumulate(&mut self.inputs, name, values);
    }
}
