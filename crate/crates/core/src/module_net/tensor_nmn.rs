//! Tensor-NMN residual modules: plain, with an image shortcut, and FiLM-ed.

use serde::{Deserialize, Serialize};

use super::film::{block_backward, block_forward, film_backward, film_forward, BlockTrace, FilmTrace};
use super::params::{
    embedding_name, expect_len, tensor_name, ModuleParams, FILM_TENSOR_PREFIX, SHORTCUT_PREFIX, TENSOR_PREFIX,
};
use super::tensor::{conv3x3, conv3x3_backward, FeatureMap};
use super::{Gradients, ModuleError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorVariant {
    /// Modules see only their arguments.
    Plain,
    /// The image tensor is stacked onto the arguments.
    Shortcut,
    /// Shared FiLM-ed residual block over `[h_x; left; right]`, no pooling.
    Film,
}

impl TensorVariant {
    pub const ALL: [TensorVariant; 3] = [TensorVariant::Plain, TensorVariant::Shortcut, TensorVariant::Film];
}

impl std::fmt::Display for TensorVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TensorVariant::Plain => "plain",
            TensorVariant::Shortcut => "shortcut",
            TensorVariant::Film => "film",
        })
    }
}

impl std::str::FromStr for TensorVariant {
    type Err = ModuleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plain" => Ok(TensorVariant::Plain),
            "shortcut" => Ok(TensorVariant::Shortcut),
            "film" => Ok(TensorVariant::Film),
            other => Err(ModuleError::Config(format!("unknown tensor variant {other:?}"))),
        }
    }
}

/// Which operand each stacked input slot came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Source {
    Image,
    Left,
    Right,
}

fn input_sources(
    left: Option<&FeatureMap>,
    right: Option<&FeatureMap>,
    variant: TensorVariant,
) -> Result<Vec<Source>, ModuleError> {
    if left.is_none() && right.is_some() {
        return Err(ModuleError::Shape("right argument given without a left argument".into()));
    }
    let mut sources = Vec::new();
    match left {
        None => sources.push(Source::Image),
        Some(_) => {
            sources.push(Source::Left);
            if right.is_some() {
                sources.push(Source::Right);
            }
            if variant == TensorVariant::Shortcut {
                sources.push(Source::Image);
            }
        }
    }
    Ok(sources)
}

fn check_operands(params: &ModuleParams, maps: &[&FeatureMap]) -> Result<(), ModuleError> {
    let c = params.channels();
    for map in maps {
        if map.channels() != c {
            return Err(ModuleError::Shape(format!("operand has {} channels, modules expect {c}", map.channels())));
        }
        maps[0].check_spatial(map)?;
    }
    Ok(())
}

struct ResidualTrace {
    input: FeatureMap,
    pre: FeatureMap,
    hidden: FeatureMap,
    inner: FeatureMap,
    rectified: FeatureMap,
    outer: FeatureMap,
    out: FeatureMap,
}

struct Names {
    w1: String,
    w2: String,
    b2: String,
    w3: String,
    b3: String,
}

fn names(prefix: &str, token: &str) -> Names {
    Names {
        w1: tensor_name(prefix, token, "w1"),
        w2: tensor_name(prefix, token, "w2"),
        b2: tensor_name(prefix, token, "b2"),
        w3: tensor_name(prefix, token, "w3"),
        b3: tensor_name(prefix, token, "b3"),
    }
}

/// `h = ReLU(W1 * x)`, `out = ReLU(W3 * ReLU(W2 * h + b2) + b3 + h)`.
fn residual_forward(params: &ModuleParams, names: &Names, input: FeatureMap) -> Result<ResidualTrace, ModuleError> {
    let c = params.channels();
    let b2 = params.get(&names.b2)?;
    let b3 = params.get(&names.b3)?;
    expect_len(&names.b2, b2, c)?;
    expect_len(&names.b3, b3, c)?;
    let pre = conv3x3(params.get(&names.w1)?, c, &input)?;
    let hidden = pre.relu();
    let inner = conv3x3(params.get(&names.w2)?, c, &hidden)?.add_channel_bias(b2);
    let rectified = inner.relu();
    let outer = conv3x3(params.get(&names.w3)?, c, &rectified)?.add_channel_bias(b3).add(&hidden);
    let out = outer.relu();
    out.ensure_finite("tensor module output")?;
    Ok(ResidualTrace { input, pre, hidden, inner, rectified, outer, out })
}

/// Returns the gradient for the stacked input.
fn residual_backward(
    params: &ModuleParams,
    names: &Names,
    trace: &ResidualTrace,
    grad_out: &FeatureMap,
    grads: &mut Gradients,
) -> Result<FeatureMap, ModuleError> {
    let c = params.channels();
    let grad_outer = grad_out.gate(&trace.outer);
    grads.add_param(&names.b3, &grad_outer.channel_sums());
    let (grad_w3, grad_rectified) = conv3x3_backward(params.get(&names.w3)?, c, &trace.rectified, &grad_outer)?;
    grads.add_param(&names.w3, &grad_w3);
    let grad_inner = grad_rectified.gate(&trace.inner);
    grads.add_param(&names.b2, &grad_inner.channel_sums());
    let (grad_w2, grad_hidden) = conv3x3_backward(params.get(&names.w2)?, c, &trace.hidden, &grad_inner)?;
    grads.add_param(&names.w2, &grad_w2);
    let grad_pre = grad_hidden.add(&grad_outer).gate(&trace.pre);
    let (grad_w1, grad_input) = conv3x3_backward(params.get(&names.w1)?, c, &trace.input, &grad_pre)?;
    grads.add_param(&names.w1, &grad_w1);
    Ok(grad_input)
}

fn film_prefixes() -> [String; 2] {
    [format!("{FILM_TENSOR_PREFIX}/film1"), format!("{FILM_TENSOR_PREFIX}/film2")]
}

fn film_kernel(part: &str) -> String {
    format!("{FILM_TENSOR_PREFIX}/{part}")
}

enum Trace {
    Residual { sources: Vec<Source>, names: Names, trace: ResidualTrace },
    Film { film: FilmTrace, block: BlockTrace },
}

impl Trace {
    fn output(&self) -> &FeatureMap {
        match self {
            Trace::Residual { trace, .. } => &trace.out,
            Trace::Film { block, .. } => &block.out,
        }
    }
}

fn trace(
    params: &ModuleParams,
    token: &str,
    left: Option<&FeatureMap>,
    right: Option<&FeatureMap>,
    h_x: &FeatureMap,
    variant: TensorVariant,
) -> Result<Trace, ModuleError> {
    let operands: Vec<&FeatureMap> = std::iter::once(h_x).chain(left).chain(right).collect();
    check_operands(params, &operands)?;
    let sources = input_sources(left, right, variant)?;
    if variant == TensorVariant::Film {
        let c = params.channels();
        let embedding = params.get(&embedding_name(token))?;
        let film = film_forward(params, &film_prefixes(), embedding, [3 * c, c])?;
        let zeros = FeatureMap::zeros(c, h_x.height(), h_x.width());
        let input = FeatureMap::concat(&[h_x, left.unwrap_or(&zeros), right.unwrap_or(&zeros)])?;
        let block =
            block_forward(params.get(&film_kernel("u1"))?, params.get(&film_kernel("u2"))?, &input, h_x, &film.coeffs)?;
        return Ok(Trace::Film { film, block });
    }
    let prefix = if variant == TensorVariant::Shortcut { SHORTCUT_PREFIX } else { TENSOR_PREFIX };
    let names = names(prefix, token);
    let stacked: Vec<&FeatureMap> = sources
        .iter()
        .map(|s| match s {
            Source::Image => h_x,
            Source::Left => left.expect("left source"),
            Source::Right => right.expect("right source"),
        })
        .collect();
    let trace = residual_forward(params, &names, FeatureMap::concat(&stacked)?)?;
    Ok(Trace::Residual { sources, names, trace })
}

/// Output plus the sign pattern of every ReLU pre-activation.
pub(crate) fn evaluate(
    params: &ModuleParams,
    token: &str,
    left: Option<&FeatureMap>,
    right: Option<&FeatureMap>,
    h_x: &FeatureMap,
    variant: TensorVariant,
) -> Result<(FeatureMap, Vec<usize>), ModuleError> {
    let trace = trace(params, token, left, right, h_x, variant)?;
    let mut pattern = Vec::new();
    match &trace {
        Trace::Residual { trace, .. } => {
            for map in [&trace.pre, &trace.inner, &trace.outer] {
                pattern.extend(map.data().iter().map(|&v| usize::from(v > 0.0)));
            }
        }
        Trace::Film { film, block } => {
            film.pattern(&mut pattern);
            block.pattern(&mut pattern);
        }
    }
    Ok((trace.output().clone(), pattern))
}

/// One Tensor-NMN module application. A missing `left` means the token has
/// no arguments and reads the image directly.
pub fn tensor_nmn_forward(
    params: &ModuleParams,
    token: &str,
    left: Option<&FeatureMap>,
    right: Option<&FeatureMap>,
    h_x: &FeatureMap,
    variant: TensorVariant,
) -> Result<FeatureMap, ModuleError> {
    Ok(trace(params, token, left, right, h_x, variant)?.output().clone())
}

/// Gradients of `sum(grad_out * tensor_nmn_forward(..))`, with input
/// gradients keyed `h_x`, `left` and `right`.
pub fn tensor_nmn_backward(
    params: &ModuleParams,
    token: &str,
    left: Option<&FeatureMap>,
    right: Option<&FeatureMap>,
    h_x: &FeatureMap,
    variant: TensorVariant,
    grad_out: &FeatureMap,
) -> Result<Gradients, ModuleError> {
    let trace = trace(params, token, left, right, h_x, variant)?;
    trace.output().check_spatial(grad_out)?;
    let c = params.channels();
    let mut grads = Gradients::default();
    grads.add_input("h_x", &vec![0.0; h_x.data().len()]);
    match &trace {
        Trace::Residual { sources, names, trace } => {
            let grad_input = residual_backward(params, names, trace, grad_out, &mut grads)?;
            for (source, grad) in sources.iter().zip(grad_input.split_channels(&vec![c; sources.len()])) {
                let key = match source {
                    Source::Image => "h_x",
                    Source::Left => "left",
                    Source::Right => "right",
                };
                grads.add_input(key, grad.data());
            }
        }
        Trace::Film { film, block } => {
            let step = block_backward(
                params.get(&film_kernel("u1"))?,
                params.get(&film_kernel("u2"))?,
                block,
                &film.coeffs,
                grad_out,
            )?;
            grads.add_param(&film_kernel("u1"), &step.u1);
            grads.add_param(&film_kernel("u2"), &step.u2);
            grads.add_input("h_x", step.h_x.data());
            let parts = step.input.split_channels(&[c, c, c]);
            grads.add_input("h_x", parts[0].data());
            if left.is_some() {
                grads.add_input("left", parts[1].data());
            }
            if right.is_some() {
                grads.add_input("right", parts[2].data());
            }
            let grad_embedding = film_backward(params, &film_prefixes(), film, &step.coeffs, &mut grads)?;
            grads.add_param(&embedding_name(token), &grad_embedding);
        }
    }
    Ok(grads)
}
