//! Dense f64 feature maps and the 3x3 same-padding convolution.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ModuleError;

/// A `(channels, height, width)` tensor stored channel-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, height: usize, width: usize) -> FeatureMap {
        FeatureMap { channels, height, width, data: vec![0.0; channels * height * width] }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<FeatureMap, ModuleError> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(ModuleError::Shape(format!("empty feature map {channels}x{height}x{width}")));
        }
        if data.len() != channels * height * width {
            return Err(ModuleError::Shape(format!(
                "{} values for a {channels}x{height}x{width} feature map",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(ModuleError::Numeric("non-finite feature map entry".into()));
        }
        Ok(FeatureMap { channels, height, width, data })
    }

    /// Entries uniform in `[-scale, scale]`.
    pub fn random<R: Rng + ?Sized>(
        channels: usize,
        height: usize,
        width: usize,
        scale: f64,
        rng: &mut R,
    ) -> FeatureMap {
        let data = (0..channels * height * width).map(|_| rng.random_range(-scale..=scale)).collect();
        FeatureMap { channels, height, width, data }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let plane = self.plane();
        &self.data[c * plane..(c + 1) * plane]
    }

    pub fn same_spatial(&self, other: &FeatureMap) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub(crate) fn check_spatial(&self, other: &FeatureMap) -> Result<(), ModuleError> {
        if self.same_spatial(other) {
            Ok(())
        } else {
            Err(ModuleError::Shape(format!(
                "spatial size {}x{} does not match {}x{}",
                other.height, other.width, self.height, self.width
            )))
        }
    }

    /// Stacks maps along the channel axis.
    pub fn concat(maps: &[&FeatureMap]) -> Result<FeatureMap, ModuleError> {
        let first = maps.first().ok_or_else(|| ModuleError::Shape("nothing to concatenate".into()))?;
        let mut data = Vec::new();
        for map in maps {
            first.check_spatial(map)?;
            data.extend_from_slice(&map.data);
        }
        let channels = maps.iter().map(|m| m.channels).sum();
        Ok(FeatureMap { channels, height: first.height, width: first.width, data })
    }

    /// Inverse of [`FeatureMap::concat`].
    pub fn split_channels(&self, sizes: &[usize]) -> Vec<FeatureMap> {
        let plane = self.plane();
        let mut start = 0;
        sizes
            .iter()
            .map(|&c| {
                let data = self.data[start * plane..(start + c) * plane].to_vec();
                start += c;
                FeatureMap { channels: c, height: self.height, width: self.width, data }
            })
            .collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> FeatureMap {
        FeatureMap { data: self.data.iter().map(|&v| f(v)).collect(), ..self.clone() }
    }

    pub fn relu(&self) -> FeatureMap {
        self.map(|v| v.max(0.0))
    }

    pub fn add(&self, other: &FeatureMap) -> FeatureMap {
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        FeatureMap { data, ..self.clone() }
    }

    /// `gamma[c] * h + beta[c]` per channel.
    pub fn modulate(&self, gamma: &[f64], beta: &[f64]) -> FeatureMap {
        let plane = self.plane();
        let data = self.data.iter().enumerate().map(|(i, &v)| gamma[i / plane] * v + beta[i / plane]).collect();
        FeatureMap { data, ..self.clone() }
    }

    /// Adds `bias[c]` to every location of channel `c`.
    pub fn add_channel_bias(&self, bias: &[f64]) -> FeatureMap {
        let plane = self.plane();
        let data = self.data.iter().enumerate().map(|(i, &v)| v + bias[i / plane]).collect();
        FeatureMap { data, ..self.clone() }
    }

    /// Per-channel sum over locations.
    pub fn channel_sums(&self) -> Vec<f64> {
        (0..self.channels).map(|c| self.channel(c).iter().sum()).collect()
    }

    /// Per-channel maximum with the flat index of the first maximising entry.
    pub fn max_pool(&self) -> (Vec<f64>, Vec<usize>) {
        let plane = self.plane();
        (0..self.channels)
            .map(|c| {
                let (best, value) = self.channel(c).iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, &v)| {
                    if v > acc.1 {
                        (i, v)
                    } else {
                        acc
                    }
                });
                (value, c * plane + best)
            })
            .unzip()
    }

    /// Zeroes entries where `mask` is not positive (ReLU backward).
    pub(crate) fn gate(&self, mask: &FeatureMap) -> FeatureMap {
        let data = self.data.iter().zip(&mask.data).map(|(&g, &m)| if m > 0.0 { g } else { 0.0 }).collect();
        FeatureMap { data, ..self.clone() }
    }

    pub(crate) fn ensure_finite(&self, what: &str) -> Result<(), ModuleError> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(ModuleError::Numeric(format!("non-finite values in {what}")))
        }
    }
}

/// Number of weights in a `out_channels x in_channels x 3 x 3` kernel.
pub fn kernel_len(out_channels: usize, in_channels: usize) -> usize {
    out_channels * in_channels * 9
}

fn check_kernel(weights: &[f64], out_channels: usize, in_channels: usize) -> Result<(), ModuleError> {
    if weights.len() == kernel_len(out_channels, in_channels) {
        Ok(())
    } else {
        Err(ModuleError::Shape(format!(
            "kernel has {} weights, expected {out_channels}x{in_channels}x3x3",
            weights.len()
        )))
    }
}

/// Valid output range `[lo, hi)` for a kernel tap at offset `d - 1` along an axis of length `n`.
fn tap_range(d: usize, n: usize) -> (usize, usize) {
    match d {
        0 => (1, n),
        1 => (0, n),
        _ => (0, n - 1),
    }
}

/// Stride-1 3x3 cross-correlation with zero same-padding.
///
/// `weights` is laid out `[out][in][ky][kx]`.
pub fn conv3x3(weights: &[f64], out_channels: usize, input: &FeatureMap) -> Result<FeatureMap, ModuleError> {
    let (ci, h, w) = (input.channels, input.height, input.width);
    check_kernel(weights, out_channels, ci)?;
    let mut out = FeatureMap::zeros(out_channels, h, w);
    let plane = h * w;
    for o in 0..out_channels {
        let dst = &mut out.data[o * plane..(o + 1) * plane];
        for i in 0..ci {
            let src = input.channel(i);
            for ky in 0..3 {
                let (y0, y1) = tap_range(ky, h);
                for kx in 0..3 {
                    let weight = weights[((o * ci + i) * 3 + ky) * 3 + kx];
                    if weight == 0.0 {
                        continue;
                    }
                    let (x0, x1) = tap_range(kx, w);
                    for y in y0..y1 {
                        let sy = y + ky - 1;
                        let row = &src[sy * w..(sy + 1) * w];
                        let out_row = &mut dst[y * w..(y + 1) * w];
                        for x in x0..x1 {
                            out_row[x] += weight * row[x + kx - 1];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of `sum(grad_out * conv3x3(weights, input))` with respect to
/// the weights and the input.
pub fn conv3x3_backward(
    weights: &[f64],
    out_channels: usize,
    input: &FeatureMap,
    grad_out: &FeatureMap,
) -> Result<(Vec<f64>, FeatureMap), ModuleError> {
    let (ci, h, w) = (input.channels, input.height, input.width);
    check_kernel(weights, out_channels, ci)?;
    input.check_spatial(grad_out)?;
    let mut grad_weights = vec![0.0; weights.len()];
    let mut grad_input = FeatureMap::zeros(ci, h, w);
    let plane = h * w;
    for o in 0..out_channels {
        let g = grad_out.channel(o);
        for i in 0..ci {
            let src = input.channel(i);
            let dst = &mut grad_input.data[i * plane..(i + 1) * plane];
            for ky in 0..3 {
                let (y0, y1) = tap_range(ky, h);
                for kx in 0..3 {
                    let index = ((o * ci + i) * 3 + ky) * 3 + kx;
                    let weight = weights[index];
                    let (x0, x1) = tap_range(kx, w);
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let sy = y + ky - 1;
                        for x in x0..x1 {
                            let sx = x + kx - 1;
                            acc += g[y * w + x] * src[sy * w + sx];
                            dst[sy * w + sx] += weight * g[y * w + x];
                        }
                    }
                    grad_weights[index] += acc;
                }
            }
        }
    }
    Ok((grad_weights, grad_input))
}

/// `matrix * x (+ bias)` for a row-major `rows x x.len()` matrix.
pub fn affine(matrix: &[f64], rows: usize, x: &[f64], bias: Option<&[f64]>) -> Result<Vec<f64>, ModuleError> {
    let cols = x.len();
    if matrix.len() != rows * cols {
        return Err(ModuleError::Shape(format!("matrix has {} entries, expected {rows}x{cols}", matrix.len())));
    }
    if let Some(b) = bias {
        if b.len() != rows {
            return Err(ModuleError::Shape(format!("bias of length {} for {rows} rows", b.len())));
        }
    }
    Ok((0..rows)
        .map(|r| {
            let dot: f64 = matrix[r * cols..(r + 1) * cols].iter().zip(x).map(|(m, v)| m * v).sum();
            dot + bias.map_or(0.0, |b| b[r])
        })
        .collect())
}

/// `matrix^T * g` for a row-major `g.len() x cols` matrix.
pub fn affine_transpose(matrix: &[f64], cols: usize, g: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for (r, &gr) in g.iter().enumerate() {
        for (o, m) in out.iter_mut().zip(&matrix[r * cols..(r + 1) * cols]) {
            *o += m * gr;
        }
    }
    out
}

/// Outer product `g x^T`, row-major.
pub fn outer(g: &[f64], x: &[f64]) -> Vec<f64> {
    g.iter().flat_map(|&a| x.iter().map(move |&b| a * b)).collect()
}
