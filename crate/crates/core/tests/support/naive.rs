//! Loop-nest reference for the module kernels. Maps are `[channel][row][col]`
//! nested vectors; parameter arrays are read by name and indexed by hand.
#![allow(dead_code)]

use closure_core::module_net::{BiasPlacement, FeatureMap, ModuleParams};

pub type Map = Vec<Vec<Vec<f64>>>;

pub fn to_map(features: &FeatureMap) -> Map {
    (0..features.channels())
        .map(|c| {
            (0..features.height()).map(|y| (0..features.width()).map(|x| features.get(c, y, x)).collect()).collect()
        })
        .collect()
}

pub fn flatten(map: &Map) -> Vec<f64> {
    map.iter().flatten().flatten().copied().collect()
}

fn zeros_like(channels: usize, map: &Map) -> Map {
    vec![vec![vec![0.0; map[0][0].len()]; map[0].len()]; channels]
}

fn array<'a>(params: &'a ModuleParams, name: &str) -> &'a [f64] {
    params.get(name).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Zero-padded 3x3 cross-correlation, `weights[o][i][ky][kx]`.
pub fn conv(weights: &[f64], out_channels: usize, input: &Map) -> Map {
    let in_channels = input.len();
    let (height, width) = (input[0].len() as isize, input[0][0].len() as isize);
    let mut out = zeros_like(out_channels, input);
    for o in 0..out_channels {
        for y in 0..height {
            for x in 0..width {
                let mut total = 0.0;
                for i in 0..in_channels {
                    for ky in 0..3isize {
                        for kx in 0..3isize {
                            let (sy, sx) = (y + ky - 1, x + kx - 1);
                            if sy < 0 || sy >= height || sx < 0 || sx >= width {
                                continue;
                            }
                            let w = weights[((o * in_channels + i) * 3 + ky as usize) * 3 + kx as usize];
                            total += w * input[i][sy as usize][sx as usize];
                        }
                    }
                }
                out[o][y as usize][x as usize] = total;
            }
        }
    }
    out
}

fn relu(map: &Map) -> Map {
    map.iter().map(|c| c.iter().map(|r| r.iter().map(|v| v.max(0.0)).collect()).collect()).collect()
}

fn plus(a: &Map, b: &Map) -> Map {
    a.iter()
        .zip(b)
        .map(|(ca, cb)| ca.iter().zip(cb).map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x + y).collect()).collect())
        .collect()
}

fn shift(map: &Map, bias: &[f64]) -> Map {
    map.iter().zip(bias).map(|(c, b)| c.iter().map(|r| r.iter().map(|v| v + b).collect()).collect()).collect()
}

fn modulate(map: &Map, gamma: &[f64], beta: &[f64]) -> Map {
    (0..map.len())
        .map(|c| map[c].iter().map(|r| r.iter().map(|v| gamma[c] * v + beta[c]).collect()).collect())
        .collect()
}

/// Two-layer MLP `w2 relu(w1 x + b1) + b2`, or `w2 (relu(w1 x + b1) + b2)`.
pub fn mlp(params: &ModuleParams, prefix: &str, input: &[f64], out_len: usize) -> Vec<f64> {
    let hidden = params.config().hidden_dim;
    let (w1, b1) = (array(params, &format!("{prefix}/w1")), array(params, &format!("{prefix}/b1")));
    let (w2, b2) = (array(params, &format!("{prefix}/w2")), array(params, &format!("{prefix}/b2")));
    let mut act = vec![0.0; hidden];
    for h in 0..hidden {
        let mut total = b1[h];
        for (j, x) in input.iter().enumerate() {
            total += w1[h * input.len() + j] * x;
        }
        act[h] = total.max(0.0);
    }
    let inner = params.config().bias_placement == BiasPlacement::Inner;
    if inner {
        for h in 0..hidden {
            act[h] += b2[h];
        }
    }
    (0..out_len)
        .map(|o| {
            let total: f64 = (0..hidden).map(|h| w2[o * hidden + h] * act[h]).sum();
            if inner {
                total
            } else {
                total + b2[o]
            }
        })
        .collect()
}

/// `(gamma, beta)` from an MLP whose output is `[beta; gamma~]`.
pub fn coefficients(params: &ModuleParams, prefix: &str, input: &[f64], width: usize) -> (Vec<f64>, Vec<f64>) {
    let raw = mlp(params, prefix, input, 2 * width);
    let beta = raw[..width].to_vec();
    let gamma = raw[width..].iter().map(|v| 2.0 * v.tanh() + 1.0).collect();
    (gamma, beta)
}

pub struct Coefficients {
    pub gamma1: Vec<f64>,
    pub beta1: Vec<f64>,
    pub gamma2: Vec<f64>,
    pub beta2: Vec<f64>,
}

pub fn film(params: &ModuleParams, prefix: &str, input: &[f64], widths: [usize; 2]) -> Coefficients {
    let (gamma1, beta1) = coefficients(params, &format!("{prefix}/film1"), input, widths[0]);
    let (gamma2, beta2) = coefficients(params, &format!("{prefix}/film2"), input, widths[1]);
    Coefficients { gamma1, beta1, gamma2, beta2 }
}

/// `relu(U2 * (g2 relu(U1 * (g1 x + b1)) + b2) + h_x)`.
pub fn residual_block(u1: &[f64], u2: &[f64], input: &Map, h_x: &Map, k: &Coefficients) -> Map {
    let channels = h_x.len();
    let first = relu(&conv(u1, channels, &modulate(input, &k.gamma1, &k.beta1)));
    let second = conv(u2, channels, &modulate(&first, &k.gamma2, &k.beta2));
    relu(&plus(&second, h_x))
}

pub fn film_input(params: &ModuleParams, token: &str, left: Option<&[f64]>, right: Option<&[f64]>) -> Vec<f64> {
    let channels = params.channels();
    let mut input = array(params, &format!("embedding/{token}")).to_vec();
    for arg in [left, right] {
        match arg {
            Some(v) => input.extend_from_slice(v),
            None => input.extend(vec![0.0; channels]),
        }
    }
    input
}

pub fn vector_module(
    params: &ModuleParams,
    token: &str,
    h_x: &Map,
    left: Option<&[f64]>,
    right: Option<&[f64]>,
    blocks: usize,
) -> Vec<f64> {
    let channels = params.channels();
    let conditioning = film_input(params, token, left, right);
    let mut state = h_x.clone();
    for block in 0..blocks {
        let k = film(params, &format!("block{block}"), &conditioning, [channels, channels]);
        let u1 = array(params, &format!("block{block}/u1"));
        let u2 = array(params, &format!("block{block}/u2"));
        state = residual_block(u1, u2, &state, h_x, &k);
    }
    state.iter().map(|plane| plane.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max)).collect()
}

fn stack(maps: &[&Map]) -> Map {
    maps.iter().flat_map(|m| m.iter().cloned()).collect()
}

/// `relu(W3 * relu(W2 * h + b2) + b3 + h)` with `h = relu(W1 * x)`.
fn residual(params: &ModuleParams, prefix: &str, token: &str, input: &Map) -> Map {
    let channels = params.channels();
    let part = |p: &str| array(params, &format!("{prefix}/{token}/{p}"));
    let hidden = relu(&conv(part("w1"), channels, input));
    let inner = relu(&shift(&conv(part("w2"), channels, &hidden), part("b2")));
    relu(&plus(&shift(&conv(part("w3"), channels, &inner), part("b3")), &hidden))
}

pub fn plain_module(params: &ModuleParams, token: &str, h_x: &Map, left: Option<&Map>, right: Option<&Map>) -> Map {
    let input = match (left, right) {
        (None, _) => h_x.clone(),
        (Some(l), None) => l.clone(),
        (Some(l), Some(r)) => stack(&[l, r]),
    };
    residual(params, "tensor", token, &input)
}

pub fn shortcut_module(params: &ModuleParams, token: &str, h_x: &Map, left: Option<&Map>, right: Option<&Map>) -> Map {
    let input = match (left, right) {
        (None, _) => h_x.clone(),
        (Some(l), None) => stack(&[l, h_x]),
        (Some(l), Some(r)) => stack(&[l, r, h_x]),
    };
    residual(params, "shortcut", token, &input)
}

pub fn film_module(params: &ModuleParams, token: &str, h_x: &Map, left: Option<&Map>, right: Option<&Map>) -> Map {
    let channels = params.channels();
    let embedding = array(params, &format!("embedding/{token}"));
    let k = film(params, "film_tensor", embedding, [3 * channels, channels]);
    let blank = zeros_like(channels, h_x);
    let input = stack(&[h_x, left.unwrap_or(&blank), right.unwrap_or(&blank)]);
    residual_block(array(params, "film_tensor/u1"), array(params, "film_tensor/u2"), &input, h_x, &k)
}
