//! Central finite-difference checks of the analytic backward passes.

use serde::{Deserialize, Serialize};

use super::film::{film_backward, film_forward, film_input, film_prefix, FilmCoeffs};
use super::params::ModuleConfig;
use super::params::{block_name, embedding_name, ModuleParams};
use super::tensor::{conv3x3, conv3x3_backward, FeatureMap};
use super::tensor_nmn::{self, tensor_nmn_backward, TensorVariant};
use super::vector::{self, vector_nmn_backward};
use super::{Gradients, ModuleError};
use crate::dsl::catalog;
use crate::rng::StreamRng;
use rand::SeedableRng;

/// Relative errors divide by at least this much, so that coordinates whose
/// true gradient is zero compare in absolute terms.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// An operation with an analytic backward pass. Every check uses the loss
/// `sum(outputs)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum GradOp {
    /// All four coefficient vectors of one block.
    FilmCoeffs {
        token: String,
        block: usize,
    },
    /// `U1 * (h + beta)`: the beta path with gamma fixed at one. `h` is the
    /// image input and `beta` the left input.
    FilmLinear {
        block: usize,
    },
    VectorNmn {
        token: String,
        blocks: usize,
    },
    TensorNmn {
        token: String,
        variant: TensorVariant,
    },
}

/// A module argument: pooled vector or feature map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operand {
    Vector(Vec<f64>),
    Map(FeatureMap),
}

impl Operand {
    fn vector(&self) -> Result<&[f64], ModuleError> {
        match self {
            Operand::Vector(v) => Ok(v),
            Operand::Map(_) => Err(ModuleError::Shape("expected a vector operand".into())),
        }
    }

    fn map(&self) -> Result<&FeatureMap, ModuleError> {
        match self {
            Operand::Map(m) => Ok(m),
            Operand::Vector(_) => Err(ModuleError::Shape("expected a feature map operand".into())),
        }
    }

    fn values_mut(&mut self) -> &mut [f64] {
        match self {
            Operand::Vector(v) => v,
            Operand::Map(m) => m.data_mut(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradInputs {
    pub h_x: FeatureMap,
    pub left: Option<Operand>,
    pub right: Option<Operand>,
}

impl GradInputs {
    fn slot_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        match name {
            "h_x" => Some(self.h_x.data_mut()),
            "left" => self.left.as_mut().map(Operand::values_mut),
            "right" => self.right.as_mut().map(Operand::values_mut),
            _ => None,
        }
    }

    fn left_vector(&self) -> Result<Option<&[f64]>, ModuleError> {
        self.left.as_ref().map(Operand::vector).transpose()
    }

    fn right_vector(&self) -> Result<Option<&[f64]>, ModuleError> {
        self.right.as_ref().map(Operand::vector).transpose()
    }

    fn left_map(&self) -> Result<Option<&FeatureMap>, ModuleError> {
        self.left.as_ref().map(Operand::map).transpose()
    }

    fn right_map(&self) -> Result<Option<&FeatureMap>, ModuleError> {
        self.right.as_ref().map(Operand::map).transpose()
    }
}

/// Outcome of a check.
///
/// A coordinate is a kink when nudging it by `epsilon` in either direction
/// flips a ReLU or moves a pooling maximum. The central difference then
/// straddles a non-differentiable point and says nothing about the
/// analytic gradient, so kinks are tallied apart from the smooth maxima.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradReport {
    /// Over coordinates that are not kinks.
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
    pub coordinates: usize,
    pub kinks: usize,
    /// Largest relative error at a kink, 0 when there are none.
    pub max_kink_relative_error: f64,
    /// Smooth coordinate with the largest relative error, as `name[index]`.
    pub worst: String,
}

impl GradReport {
    /// Max relative error over every coordinate, kinks included.
    pub fn max_relative_error_all(&self) -> f64 {
        self.max_relative_error.max(self.max_kink_relative_error)
    }
}

fn coeff_prefixes(block: usize) -> [String; 2] {
    [film_prefix(block, 1), film_prefix(block, 2)]
}

fn linear_input(params: &ModuleParams, inputs: &GradInputs) -> Result<FeatureMap, ModuleError> {
    let beta = inputs.left_vector()?.ok_or_else(|| ModuleError::Shape("the linear check needs a beta input".into()))?;
    if beta.len() != params.channels() || inputs.h_x.channels() != params.channels() {
        return Err(ModuleError::Shape("beta and image must have one entry per channel".into()));
    }
    Ok(inputs.h_x.add_channel_bias(beta))
}

/// `sum(op(params, inputs))` with the op's activation pattern.
fn evaluate(op: &GradOp, params: &ModuleParams, inputs: &GradInputs) -> Result<(f64, Vec<usize>), ModuleError> {
    let mut pattern = Vec::new();
    let value: f64 = match op {
        GradOp::FilmCoeffs { token, block } => {
            let h_c = film_input(params, token, inputs.left_vector()?, inputs.right_vector()?)?;
            let c = params.channels();
            let trace = film_forward(params, &coeff_prefixes(*block), &h_c, [c, c])?;
            trace.pattern(&mut pattern);
            let coeffs = trace.coeffs;
            coeffs.gammas().sum::<f64>() + coeffs.beta1.iter().chain(&coeffs.beta2).sum::<f64>()
        }
        GradOp::FilmLinear { block } => {
            let x = linear_input(params, inputs)?;
            conv3x3(params.get(&block_name(*block, "u1"))?, params.channels(), &x)?.data().iter().sum()
        }
        GradOp::VectorNmn { token, blocks } => {
            let (out, p) =
                vector::evaluate(params, token, &inputs.h_x, inputs.left_vector()?, inputs.right_vector()?, *blocks)?;
            pattern = p;
            out.iter().sum()
        }
        GradOp::TensorNmn { token, variant } => {
            let (out, p) =
                tensor_nmn::evaluate(params, token, inputs.left_map()?, inputs.right_map()?, &inputs.h_x, *variant)?;
            pattern = p;
            out.data().iter().sum()
        }
    };
    if value.is_finite() {
        Ok((value, pattern))
    } else {
        Err(ModuleError::Numeric(format!("non-finite loss for {op:?}")))
    }
}

/// `sum(op(params, inputs))`.
pub fn loss(op: &GradOp, params: &ModuleParams, inputs: &GradInputs) -> Result<f64, ModuleError> {
    Ok(evaluate(op, params, inputs)?.0)
}

/// Analytic gradients of [`loss`].
pub fn gradients(op: &GradOp, params: &ModuleParams, inputs: &GradInputs) -> Result<Gradients, ModuleError> {
    let c = params.channels();
    match op {
        GradOp::FilmCoeffs { token, block } => {
            let (left, right) = (inputs.left_vector()?, inputs.right_vector()?);
            let h_c = film_input(params, token, left, right)?;
            let prefixes = coeff_prefixes(*block);
            let trace = film_forward(params, &prefixes, &h_c, [c, c])?;
            let ones =
                FilmCoeffs { gamma1: vec![1.0; c], beta1: vec![1.0; c], gamma2: vec![1.0; c], beta2: vec![1.0; c] };
            let mut grads = Gradients::default();
            let grad_hc = film_backward(params, &prefixes, &trace, &ones, &mut grads)?;
            let e = params.config().embedding_dim;
            grads.add_param(&embedding_name(token), &grad_hc[..e]);
            if left.is_some() {
                grads.add_input("left", &grad_hc[e..e + c]);
            }
            if right.is_some() {
                grads.add_input("right", &grad_hc[e + c..]);
            }
            Ok(grads)
        }
        GradOp::FilmLinear { block } => {
            let x = linear_input(params, inputs)?;
            let name = block_name(*block, "u1");
            let ones = FeatureMap::from_vec(c, x.height(), x.width(), vec![1.0; x.data().len()])?;
            let (grad_u, grad_x) = conv3x3_backward(params.get(&name)?, c, &x, &ones)?;
            let mut grads = Gradients::default();
            grads.add_param(&name, &grad_u);
            grads.add_input("h_x", grad_x.data());
            grads.add_input("left", &grad_x.channel_sums());
            Ok(grads)
        }
        GradOp::VectorNmn { token, blocks } => vector_nmn_backward(
            params,
            token,
            &inputs.h_x,
            inputs.left_vector()?,
            inputs.right_vector()?,
            *blocks,
            &vec![1.0; c],
        ),
        GradOp::TensorNmn { token, variant } => {
            let h_x = &inputs.h_x;
            let ones = FeatureMap::from_vec(c, h_x.height(), h_x.width(), vec![1.0; c * h_x.plane()])?;
            tensor_nmn_backward(params, token, inputs.left_map()?, inputs.right_map()?, h_x, *variant, &ones)
        }
    }
}

/// Returns the previous value of an input coordinate, overwriting it when `value` is given.
fn set_input(inputs: &mut GradInputs, name: &str, index: usize, value: Option<f64>) -> Result<f64, ModuleError> {
    let slot = inputs
        .slot_mut(name)
        .and_then(|values| values.get_mut(index))
        .ok_or_else(|| ModuleError::Config(format!("no input coordinate {name}[{index}]")))?;
    let previous = *slot;
    if let Some(v) = value {
        *slot = v;
    }
    Ok(previous)
}

struct Tally {
    base: Vec<usize>,
    epsilon: f64,
    report: GradReport,
}

impl Tally {
    fn record(&mut self, name: &str, index: usize, analytic: f64, plus: (f64, Vec<usize>), minus: (f64, Vec<usize>)) {
        let numeric = (plus.0 - minus.0) / (2.0 * self.epsilon);
        let abs = (analytic - numeric).abs();
        let rel = abs / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
        let report = &mut self.report;
        report.coordinates += 1;
        if plus.1 != self.base || minus.1 != self.base {
            report.kinks += 1;
            report.max_kink_relative_error = report.max_kink_relative_error.max(rel);
            return;
        }
        report.max_absolute_error = report.max_absolute_error.max(abs);
        if rel > report.max_relative_error {
            report.max_relative_error = rel;
            report.worst = format!("{name}[{index}]");
        }
    }
}

/// Compares [`gradients`] with central differences of [`loss`] over every
/// parameter and input coordinate the op touches.
pub fn grad_check(
    op: &GradOp,
    params: &ModuleParams,
    inputs: &GradInputs,
    epsilon: f64,
) -> Result<GradReport, ModuleError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(ModuleError::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    let analytic = gradients(op, params, inputs)?;
    let mut tally = Tally {
        base: evaluate(op, params, inputs)?.1,
        epsilon,
        report: GradReport {
            max_relative_error: 0.0,
            max_absolute_error: 0.0,
            coordinates: 0,
            kinks: 0,
            max_kink_relative_error: 0.0,
            worst: String::new(),
        },
    };
    let mut perturbed = params.clone();
    for (name, grad) in &analytic.params {
        for (index, &a) in grad.iter().enumerate() {
            let original = perturbed.get(name)?[index];
            perturbed.get_mut(name)?[index] = original + epsilon;
            let plus = evaluate(op, &perturbed, inputs)?;
            perturbed.get_mut(name)?[index] = original - epsilon;
            let minus = evaluate(op, &perturbed, inputs)?;
            perturbed.get_mut(name)?[index] = original;
            tally.record(name, index, a, plus, minus);
        }
    }
    let mut shifted = inputs.clone();
    for (name, grad) in &analytic.inputs {
        for (index, &a) in grad.iter().enumerate() {
            let original = set_input(&mut shifted, name, index, None)?;
            set_input(&mut shifted, name, index, Some(original + epsilon))?;
            let plus = evaluate(op, params, &shifted)?;
            set_input(&mut shifted, name, index, Some(original - epsilon))?;
            let minus = evaluate(op, params, &shifted)?;
            set_input(&mut shifted, name, index, Some(original))?;
            tally.record(name, index, a, plus, minus);
        }
    }
    Ok(tally.report)
}

/// One entry of [`gradient_suite`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    #[serde(flatten)]
    pub op: GradOp,
    pub report: GradReport,
}

/// Checks every kernel once on a 3-channel 4x4 image with two blocks:
/// FiLM coefficients, Vector-NMN at each arity and the three Tensor-NMN
/// variants.
pub fn gradient_suite(config: ModuleConfig, seed: u64, epsilon: f64) -> Result<Vec<SuiteResult>, ModuleError> {
    let blocks = config.blocks;
    let params = ModuleParams::random(config, &catalog(), seed, 0.1)?;
    let c = params.channels();
    let mut rng = StreamRng::seed_from_u64(seed);
    let h_x = FeatureMap::random(c, 4, 4, 1.0, &mut rng);
    let vector = |rng: &mut StreamRng| Operand::Vector(FeatureMap::random(c, 1, 1, 1.0, rng).data().to_vec());
    let (left, right) = (vector(&mut rng), vector(&mut rng));
    let map_left = Operand::Map(FeatureMap::random(c, 4, 4, 1.0, &mut rng));
    let map_right = Operand::Map(FeatureMap::random(c, 4, 4, 1.0, &mut rng));
    let with = |left: Option<&Operand>, right: Option<&Operand>| GradInputs {
        h_x: h_x.clone(),
        left: left.cloned(),
        right: right.cloned(),
    };
    let mut cases = vec![
        ("film_coeffs", GradOp::FilmCoeffs { token: "union".into(), block: 0 }, with(Some(&left), Some(&right))),
        ("vector_scene", GradOp::VectorNmn { token: "scene".into(), blocks }, with(None, None)),
        ("vector_unary", GradOp::VectorNmn { token: "unique".into(), blocks }, with(Some(&left), None)),
        ("vector_binary", GradOp::VectorNmn { token: "union".into(), blocks }, with(Some(&left), Some(&right))),
    ];
    for variant in TensorVariant::ALL {
        cases.push((
            "tensor_binary",
            GradOp::TensorNmn { token: "intersect".into(), variant },
            with(Some(&map_left), Some(&map_right)),
        ));
    }
    cases
        .into_iter()
        .map(|(name, op, inputs)| {
            let report = grad_check(&op, &params, &inputs, epsilon)?;
            let name = match &op {
                GradOp::TensorNmn { variant, .. } => format!("{name}_{variant}"),
                _ => name.to_string(),
            };
            Ok(SuiteResult { name, op, report })
        })
        .collect()
}
