//! Vector-NMN: FiLM-ed residual blocks on the image tensor, max-pooled to a vector.

use super::film::{block_backward, block_forward, film_backward, film_forward, film_input, film_prefix};
use super::film::{BlockTrace, FilmTrace};
use super::params::{block_name, embedding_name, ModuleParams};
use super::tensor::FeatureMap;
use super::{Gradients, ModuleError};

struct VectorTrace {
    films: Vec<FilmTrace>,
    blocks: Vec<BlockTrace>,
    argmax: Vec<usize>,
    output: Vec<f64>,
}

fn prefixes(block: usize) -> [String; 2] {
    [film_prefix(block, 1), film_prefix(block, 2)]
}

fn check_blocks(params: &ModuleParams, blocks: usize) -> Result<(), ModuleError> {
    if blocks == 0 || blocks > params.config().blocks {
        return Err(ModuleError::Config(format!(
            "{blocks} blocks requested, parameters hold {}",
            params.config().blocks
        )));
    }
    Ok(())
}

fn check_image(params: &ModuleParams, h_x: &FeatureMap) -> Result<(), ModuleError> {
    if h_x.channels() != params.channels() {
        return Err(ModuleError::Shape(format!(
            "image has {} channels, modules expect {}",
            h_x.channels(),
            params.channels()
        )));
    }
    Ok(())
}

fn trace(
    params: &ModuleParams,
    token: &str,
    h_x: &FeatureMap,
    left: Option<&[f64]>,
    right: Option<&[f64]>,
    blocks: usize,
) -> Result<VectorTrace, ModuleError> {
    check_blocks(params, blocks)?;
    check_image(params, h_x)?;
    let c = params.channels();
    let h_c = film_input(params, token, left, right)?;
    let mut films = Vec::with_capacity(blocks);
    let mut traces: Vec<BlockTrace> = Vec::with_capacity(blocks);
    for block in 0..blocks {
        let film = film_forward(params, &prefixes(block), &h_c, [c, c])?;
        let input = traces.last().map_or(h_x, |t| &t.out);
        let step = block_forward(
            params.get(&block_name(block, "u1"))?,
            params.get(&block_name(block, "u2"))?,
            input,
            h_x,
            &film.coeffs,
        )?;
        films.push(film);
        traces.push(step);
    }
    let (output, argmax) = traces.last().expect("at least one block").out.max_pool();
    Ok(VectorTrace { films, blocks: traces, argmax, output })
}

/// Output plus the activation pattern: ReLU signs and pooling positions.
pub(crate) fn evaluate(
    params: &ModuleParams,
    token: &str,
    h_x: &FeatureMap,
    left: Option<&[f64]>,
    right: Option<&[f64]>,
    blocks: usize,
) -> Result<(Vec<f64>, Vec<usize>), ModuleError> {
    let trace = trace(params, token, h_x, left, right, blocks)?;
    let mut pattern = Vec::new();
    for (film, block) in trace.films.iter().zip(&trace.blocks) {
        film.pattern(&mut pattern);
        block.pattern(&mut pattern);
    }
    pattern.extend_from_slice(&trace.argmax);
    Ok((trace.output, pattern))
}

/// One Vector-NMN module application; the result has one entry per channel.
pub fn vector_nmn_forward(
    params: &ModuleParams,
    token: &str,
    h_x: &FeatureMap,
    left: Option<&[f64]>,
    right: Option<&[f64]>,
    blocks: usize,
) -> Result<Vec<f64>, ModuleError> {
    Ok(trace(params, token, h_x, left, right, blocks)?.output)
}

/// Gradients of `sum(grad_out * vector_nmn_forward(..))`.
///
/// Input gradients are keyed `h_x`, `left` and `right`; absent arguments get no entry.
pub fn vector_nmn_backward(
    params: &ModuleParams,
    token: &str,
    h_x: &FeatureMap,
    left: Option<&[f64]>,
    right: Option<&[f64]>,
    blocks: usize,
    grad_out: &[f64],
) -> Result<Gradients, ModuleError> {
    let trace = trace(params, token, h_x, left, right, blocks)?;
    let c = params.channels();
    if grad_out.len() != c {
        return Err(ModuleError::Shape(format!("output gradient of length {}, expected {c}", grad_out.len())));
    }
    let mut grads = Gradients::default();
    let mut grad_h = FeatureMap::zeros(c, h_x.height(), h_x.width());
    for (&index, &g) in trace.argmax.iter().zip(grad_out) {
        grad_h.data_mut()[index] += g;
    }
    let mut grad_image = FeatureMap::zeros(c, h_x.height(), h_x.width());
    let mut grad_hc = vec![0.0; params.config().film_input_dim()];
    for block in (0..blocks).rev() {
        let u1 = params.get(&block_name(block, "u1"))?;
        let u2 = params.get(&block_name(block, "u2"))?;
        let film = &trace.films[block];
        let step = block_backward(u1, u2, &trace.blocks[block], &film.coeffs, &grad_h)?;
        grads.add_param(&block_name(block, "u1"), &step.u1);
        grads.add_param(&block_name(block, "u2"), &step.u2);
        grad_image = grad_image.add(&step.h_x);
        for (acc, g) in grad_hc.iter_mut().zip(film_backward(params, &prefixes(block), film, &step.coeffs, &mut grads)?)
        {
            *acc += g;
        }
        grad_h = step.input;
    }
    grad_image = grad_image.add(&grad_h);
    let e = params.config().embedding_dim;
    grads.add_param(&embedding_name(token), &grad_hc[..e]);
    grads.add_input("h_x", grad_image.data());
    if left.is_some() {
        grads.add_input("left", &grad_hc[e..e + c]);
    }
    if right.is_some() {
        grads.add_input("right", &grad_hc[e + c..]);
    }
    Ok(grads)
}
