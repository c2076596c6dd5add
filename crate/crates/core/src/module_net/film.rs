//! FiLM coefficient MLPs and the FiLM-ed residual block shared by the
//! Vector-NMN and the FiLM Tensor-NMN variant.

use serde::{Deserialize, Serialize};

use super::params::{embedding_name, expect_kernel, expect_len, BiasPlacement, ModuleParams};
use super::tensor::{affine, affine_transpose, conv3x3, conv3x3_backward, outer, FeatureMap};
use super::{Gradients, ModuleError};

/// Per-channel modulation for one residual block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilmCoeffs {
    pub gamma1: Vec<f64>,
    pub beta1: Vec<f64>,
    pub gamma2: Vec<f64>,
    pub beta2: Vec<f64>,
}

impl FilmCoeffs {
    /// The identity modulation: gamma 1, beta 0.
    pub fn identity(first: usize, second: usize) -> FilmCoeffs {
        FilmCoeffs {
            gamma1: vec![1.0; first],
            beta1: vec![0.0; first],
            gamma2: vec![1.0; second],
            beta2: vec![0.0; second],
        }
    }

    pub fn gammas(&self) -> impl Iterator<Item = f64> + '_ {
        self.gamma1.iter().chain(&self.gamma2).copied()
    }
}

pub(crate) fn film_prefix(block: usize, k: usize) -> String {
    format!("block{block}/film{k}")
}

pub(crate) struct MlpTrace {
    input: Vec<f64>,
    pre: Vec<f64>,
    act: Vec<f64>,
    raw: Vec<f64>,
}

fn mlp_forward(params: &ModuleParams, prefix: &str, input: &[f64], out_len: usize) -> Result<MlpTrace, ModuleError> {
    let hidden = params.config().hidden_dim;
    let w1 = params.get(&format!("{prefix}/w1"))?;
    let b1 = params.get(&format!("{prefix}/b1"))?;
    let w2 = params.get(&format!("{prefix}/w2"))?;
    let b2 = params.get(&format!("{prefix}/b2"))?;
    expect_len(&format!("{prefix}/w1"), w1, hidden * input.len())?;
    expect_len(&format!("{prefix}/w2"), w2, out_len * hidden)?;
    let pre = affine(w1, hidden, input, Some(b1))?;
    let act: Vec<f64> = pre.iter().map(|v| v.max(0.0)).collect();
    let raw = match params.config().bias_placement {
        BiasPlacement::Outer => affine(w2, out_len, &act, Some(b2))?,
        BiasPlacement::Inner => {
            expect_len(&format!("{prefix}/b2"), b2, hidden)?;
            let shifted: Vec<f64> = act.iter().zip(b2).map(|(a, b)| a + b).collect();
            affine(w2, out_len, &shifted, None)?
        }
    };
    Ok(MlpTrace { input: input.to_vec(), pre, act, raw })
}

/// Accumulates parameter gradients and returns the gradient for the MLP input.
fn mlp_backward(
    params: &ModuleParams,
    prefix: &str,
    trace: &MlpTrace,
    grad_raw: &[f64],
    grads: &mut Gradients,
) -> Result<Vec<f64>, ModuleError> {
    let hidden = params.config().hidden_dim;
    let w1 = params.get(&format!("{prefix}/w1"))?;
    let w2 = params.get(&format!("{prefix}/w2"))?;
    let b2 = params.get(&format!("{prefix}/b2"))?;
    let grad_act = affine_transpose(w2, hidden, grad_raw);
    match params.config().bias_placement {
        BiasPlacement::Outer => {
            grads.add_param(&format!("{prefix}/w2"), &outer(grad_raw, &trace.act));
            grads.add_param(&format!("{prefix}/b2"), grad_raw);
        }
        BiasPlacement::Inner => {
            let shifted: Vec<f64> = trace.act.iter().zip(b2).map(|(a, b)| a + b).collect();
            grads.add_param(&format!("{prefix}/w2"), &outer(grad_raw, &shifted));
            grads.add_param(&format!("{prefix}/b2"), &grad_act);
        }
    }
    let grad_pre: Vec<f64> = grad_act.iter().zip(&trace.pre).map(|(&g, &z)| if z > 0.0 { g } else { 0.0 }).collect();
    grads.add_param(&format!("{prefix}/w1"), &outer(&grad_pre, &trace.input));
    grads.add_param(&format!("{prefix}/b1"), &grad_pre);
    Ok(affine_transpose(w1, trace.input.len(), &grad_pre))
}

impl MlpTrace {
    fn pattern(&self, out: &mut Vec<usize>) {
        out.extend(self.pre.iter().map(|&v| usize::from(v > 0.0)));
    }
}

/// `tanh` rounds to exactly +-1 beyond |x| ~ 19; keeping one ulp away
/// preserves the open interval (-1, 3) for gamma.
const TANH_LIMIT: f64 = 1.0 - f64::EPSILON;

/// Splits a raw MLP output `[beta; gamma~]` into `(gamma, beta)`.
fn squash(raw: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = raw.len() / 2;
    let beta = raw[..n].to_vec();
    let gamma = raw[n..].iter().map(|v| 2.0 * v.tanh().clamp(-TANH_LIMIT, TANH_LIMIT) + 1.0).collect();
    (gamma, beta)
}

fn squash_backward(raw: &[f64], grad_gamma: &[f64], grad_beta: &[f64]) -> Vec<f64> {
    let n = raw.len() / 2;
    let mut out = grad_beta.to_vec();
    out.extend(raw[n..].iter().zip(grad_gamma).map(|(v, g)| {
        let t = v.tanh();
        g * 2.0 * (1.0 - t * t)
    }));
    out
}

/// Both MLPs of one block.
pub(crate) struct FilmTrace {
    mlps: [MlpTrace; 2],
    pub(crate) coeffs: FilmCoeffs,
}

impl FilmTrace {
    /// Signs of every hidden pre-activation.
    pub(crate) fn pattern(&self, out: &mut Vec<usize>) {
        self.mlps.iter().for_each(|m| m.pattern(out));
    }
}

/// Runs the MLPs under `prefixes` on `input`; `widths` are the modulated channel counts.
pub(crate) fn film_forward(
    params: &ModuleParams,
    prefixes: &[String; 2],
    input: &[f64],
    widths: [usize; 2],
) -> Result<FilmTrace, ModuleError> {
    let first = mlp_forward(params, &prefixes[0], input, 2 * widths[0])?;
    let second = mlp_forward(params, &prefixes[1], input, 2 * widths[1])?;
    let (gamma1, beta1) = squash(&first.raw);
    let (gamma2, beta2) = squash(&second.raw);
    Ok(FilmTrace { mlps: [first, second], coeffs: FilmCoeffs { gamma1, beta1, gamma2, beta2 } })
}

pub(crate) fn film_backward(
    params: &ModuleParams,
    prefixes: &[String; 2],
    trace: &FilmTrace,
    grad: &FilmCoeffs,
    grads: &mut Gradients,
) -> Result<Vec<f64>, ModuleError> {
    let g1 = squash_backward(&trace.mlps[0].raw, &grad.gamma1, &grad.beta1);
    let g2 = squash_backward(&trace.mlps[1].raw, &grad.gamma2, &grad.beta2);
    let mut input = mlp_backward(params, &prefixes[0], &trace.mlps[0], &g1, grads)?;
    for (acc, g) in input.iter_mut().zip(mlp_backward(params, &prefixes[1], &trace.mlps[1], &g2, grads)?) {
        *acc += g;
    }
    Ok(input)
}

/// `h_c = [e(p); left; right]` with absent arguments replaced by zeros.
pub fn film_input(
    params: &ModuleParams,
    token: &str,
    left: Option<&[f64]>,
    right: Option<&[f64]>,
) -> Result<Vec<f64>, ModuleError> {
    let c = params.channels();
    let mut input = params.get(&embedding_name(token))?.to_vec();
    for (name, arg) in [("left", left), ("right", right)] {
        match arg {
            Some(v) => {
                expect_len(name, v, c)?;
                input.extend_from_slice(v);
            }
            None => input.extend(std::iter::repeat_n(0.0, c)),
        }
    }
    Ok(input)
}

/// FiLM coefficients of `block` for `token` applied to `left` and `right`.
pub fn film_coeffs(
    params: &ModuleParams,
    token: &str,
    left: Option<&[f64]>,
    right: Option<&[f64]>,
    block: usize,
) -> Result<FilmCoeffs, ModuleError> {
    let input = film_input(params, token, left, right)?;
    let c = params.channels();
    Ok(film_forward(params, &[film_prefix(block, 1), film_prefix(block, 2)], &input, [c, c])?.coeffs)
}

pub(crate) struct BlockTrace {
    input: FeatureMap,
    x1: FeatureMap,
    c1: FeatureMap,
    h1: FeatureMap,
    x2: FeatureMap,
    c2: FeatureMap,
    pub(crate) out: FeatureMap,
}

impl BlockTrace {
    pub(crate) fn pattern(&self, out: &mut Vec<usize>) {
        for map in [&self.c1, &self.c2] {
            out.extend(map.data().iter().map(|&v| usize::from(v > 0.0)));
        }
    }
}

pub(crate) struct BlockGrads {
    pub(crate) u1: Vec<f64>,
    pub(crate) u2: Vec<f64>,
    pub(crate) input: FeatureMap,
    pub(crate) h_x: FeatureMap,
    pub(crate) coeffs: FilmCoeffs,
}

/// `h1 = ReLU(U1 * (g1 h + b1))`, `h2 = ReLU(U2 * (g2 h1 + b2) + h_x)`.
pub(crate) fn block_forward(
    u1: &[f64],
    u2: &[f64],
    input: &FeatureMap,
    h_x: &FeatureMap,
    coeffs: &FilmCoeffs,
) -> Result<BlockTrace, ModuleError> {
    let c = h_x.channels();
    input.check_spatial(h_x)?;
    expect_kernel("u1", u1, c, input.channels())?;
    expect_kernel("u2", u2, c, c)?;
    expect_len("gamma1", &coeffs.gamma1, input.channels())?;
    let x1 = input.modulate(&coeffs.gamma1, &coeffs.beta1);
    let c1 = conv3x3(u1, c, &x1)?;
    let h1 = c1.relu();
    let x2 = h1.modulate(&coeffs.gamma2, &coeffs.beta2);
    let c2 = conv3x3(u2, c, &x2)?.add(h_x);
    let out = c2.relu();
    out.ensure_finite("residual block output")?;
    Ok(BlockTrace { input: input.clone(), x1, c1, h1, x2, c2, out })
}

fn channel_dots(a: &FeatureMap, b: &FeatureMap) -> Vec<f64> {
    (0..a.channels()).map(|c| a.channel(c).iter().zip(b.channel(c)).map(|(x, y)| x * y).sum()).collect()
}

pub(crate) fn block_backward(
    u1: &[f64],
    u2: &[f64],
    trace: &BlockTrace,
    coeffs: &FilmCoeffs,
    grad_out: &FeatureMap,
) -> Result<BlockGrads, ModuleError> {
    let c = trace.out.channels();
    let grad_c2 = grad_out.gate(&trace.c2);
    let (grad_u2, grad_x2) = conv3x3_backward(u2, c, &trace.x2, &grad_c2)?;
    let grad_h1 = grad_x2.modulate(&coeffs.gamma2, &vec![0.0; c]);
    let grad_c1 = grad_h1.gate(&trace.c1);
    let (grad_u1, grad_x1) = conv3x3_backward(u1, c, &trace.x1, &grad_c1)?;
    let grad_input = grad_x1.modulate(&coeffs.gamma1, &vec![0.0; trace.input.channels()]);
    Ok(BlockGrads {
        u1: grad_u1,
        u2: grad_u2,
        input: grad_input,
        h_x: grad_c2,
        coeffs: FilmCoeffs {
            gamma1: channel_dots(&grad_x1, &trace.input),
            beta1: grad_x1.channel_sums(),
            gamma2: channel_dots(&grad_x2, &trace.h1),
            beta2: grad_x2.channel_sums(),
        },
    })
}
