//! Named parameter arrays for every module architecture, plus the binary
//! container format.
//!
//! The container is two files: a flat little-endian f64 blob and a JSON
//! manifest listing `{name, shape, offset}` per array, with `offset` counted
//! in f64 elements from the start of the blob. Arrays appear in name order.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::tensor::kernel_len;
use super::ModuleError;
use crate::dsl::{catalog, FunctionToken};
use crate::io::{read_json, write_json};
use crate::rng::StreamRng;

/// Where the second FiLM MLP bias enters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasPlacement {
    /// `W2 * ReLU(W1 h + b1) + b2`
    #[default]
    Outer,
    /// `W2 * (ReLU(W1 h + b1) + b2)`
    Inner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModuleConfig {
    pub channels: usize,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub blocks: usize,
    pub bias_placement: BiasPlacement,
}

impl Default for ModuleConfig {
    fn default() -> Self {
        ModuleConfig { channels: 8, embedding_dim: 8, hidden_dim: 16, blocks: 2, bias_placement: BiasPlacement::Outer }
    }
}

impl ModuleConfig {
    pub fn validate(&self) -> Result<(), ModuleError> {
        if self.channels == 0 || self.embedding_dim == 0 || self.hidden_dim == 0 || self.blocks == 0 {
            return Err(ModuleError::Config(format!("all module dimensions must be positive: {self:?}")));
        }
        Ok(())
    }

    /// Length of `h_c = [e(p); left; right]`.
    pub fn film_input_dim(&self) -> usize {
        self.embedding_dim + 2 * self.channels
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamArray {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl ParamArray {
    fn zeros(shape: Vec<usize>) -> ParamArray {
        let len = shape.iter().product();
        ParamArray { shape, data: vec![0.0; len] }
    }
}

pub(crate) fn embedding_name(token: &str) -> String {
    format!("embedding/{token}")
}

pub(crate) fn block_name(block: usize, part: &str) -> String {
    format!("block{block}/{part}")
}

pub(crate) fn film_name(block: usize, k: usize, part: &str) -> String {
    format!("block{block}/film{k}/{part}")
}

pub(crate) fn tensor_name(prefix: &str, token: &str, part: &str) -> String {
    format!("{prefix}/{token}/{part}")
}

pub(crate) const TENSOR_PREFIX: &str = "tensor";
pub(crate) const SHORTCUT_PREFIX: &str = "shortcut";
pub(crate) const FILM_TENSOR_PREFIX: &str = "film_tensor";

/// All weights for the Vector-NMN and the three Tensor-NMN variants.
#[derive(Debug, Clone, PartialEq)]
pub struct ModuleParams {
    config: ModuleConfig,
    arrays: BTreeMap<String, ParamArray>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    config: ModuleConfig,
    arrays: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

const FORMAT: &str = "f64-le";

impl ModuleParams {
    /// All-zero parameters for the given tokens.
    pub fn zeros(config: ModuleConfig, tokens: &[FunctionToken]) -> Result<ModuleParams, ModuleError> {
        config.validate()?;
        let (c, e, hid) = (config.channels, config.embedding_dim, config.hidden_dim);
        let mut arrays = BTreeMap::new();
        let mut add = |name: String, shape: Vec<usize>| {
            arrays.insert(name, ParamArray::zeros(shape));
        };
        let b2_len = |out: usize| match config.bias_placement {
            BiasPlacement::Outer => out,
            BiasPlacement::Inner => hid,
        };
        for block in 0..config.blocks {
            for k in 1..=2 {
                add(film_name(block, k, "w1"), vec![hid, config.film_input_dim()]);
                add(film_name(block, k, "b1"), vec![hid]);
                add(film_name(block, k, "w2"), vec![2 * c, hid]);
                add(film_name(block, k, "b2"), vec![b2_len(2 * c)]);
            }
            add(block_name(block, "u1"), vec![c, c, 3, 3]);
            add(block_name(block, "u2"), vec![c, c, 3, 3]);
        }
        let film_tensor = |part: &str| format!("{FILM_TENSOR_PREFIX}/{part}");
        for (k, modulated) in [(1, 3 * c), (2, c)] {
            add(film_tensor(&format!("film{k}/w1")), vec![hid, e]);
            add(film_tensor(&format!("film{k}/b1")), vec![hid]);
            add(film_tensor(&format!("film{k}/w2")), vec![2 * modulated, hid]);
            add(film_tensor(&format!("film{k}/b2")), vec![b2_len(2 * modulated)]);
        }
        add(film_tensor("u1"), vec![c, 3 * c, 3, 3]);
        add(film_tensor("u2"), vec![c, c, 3, 3]);
        for token in tokens {
            add(embedding_name(&token.name), vec![e]);
            let inputs = token.arity.max(1);
            for (prefix, in_maps) in [(TENSOR_PREFIX, inputs), (SHORTCUT_PREFIX, token.arity + 1)] {
                add(tensor_name(prefix, &token.name, "w1"), vec![c, in_maps * c, 3, 3]);
                add(tensor_name(prefix, &token.name, "w2"), vec![c, c, 3, 3]);
                add(tensor_name(prefix, &token.name, "b2"), vec![c]);
                add(tensor_name(prefix, &token.name, "w3"), vec![c, c, 3, 3]);
                add(tensor_name(prefix, &token.name, "b3"), vec![c]);
            }
        }
        Ok(ModuleParams { config, arrays })
    }

    /// Every entry uniform in `[-scale, scale]`, drawn in name order.
    pub fn random(
        config: ModuleConfig,
        tokens: &[FunctionToken],
        seed: u64,
        scale: f64,
    ) -> Result<ModuleParams, ModuleError> {
        let mut params = ModuleParams::zeros(config, tokens)?;
        let mut rng = StreamRng::seed_from_u64(seed);
        for array in params.arrays.values_mut() {
            for v in &mut array.data {
                *v = rng.random_range(-scale..=scale);
            }
        }
        Ok(params)
    }

    /// Seeded uniform `[-0.1, 0.1]` parameters covering the whole catalog.
    pub fn for_catalog(config: ModuleConfig, seed: u64) -> Result<ModuleParams, ModuleError> {
        ModuleParams::random(config, &catalog(), seed, 0.1)
    }

    pub fn config(&self) -> &ModuleConfig {
        &self.config
    }

    pub fn channels(&self) -> usize {
        self.config.channels
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.arrays.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.arrays.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<&[f64], ModuleError> {
        self.arrays.get(name).map(|a| a.data.as_slice()).ok_or_else(|| ModuleError::MissingParams(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut [f64], ModuleError> {
        self.arrays
            .get_mut(name)
            .map(|a| a.data.as_mut_slice())
            .ok_or_else(|| ModuleError::MissingParams(name.to_string()))
    }

    pub fn shape(&self, name: &str) -> Result<&[usize], ModuleError> {
        self.arrays.get(name).map(|a| a.shape.as_slice()).ok_or_else(|| ModuleError::MissingParams(name.to_string()))
    }

    /// Sets every entry of the arrays whose name starts with `prefix`.
    pub fn fill(&mut self, prefix: &str, value: f64) {
        for (_, array) in self.arrays.iter_mut().filter(|(name, _)| name.starts_with(prefix)) {
            array.data.fill(value);
        }
    }

    /// Overwrites an array, keeping its shape.
    pub fn set(&mut self, name: &str, values: &[f64]) -> Result<(), ModuleError> {
        let slot = self.get_mut(name)?;
        if slot.len() != values.len() {
            return Err(ModuleError::Shape(format!("{name} holds {} values, got {}", slot.len(), values.len())));
        }
        slot.copy_from_slice(values);
        Ok(())
    }

    /// Whether per-token weights exist for `token`.
    pub fn has_token(&self, token: &str) -> bool {
        self.contains(&embedding_name(token))
    }

    pub fn write(&self, blob: &Path, manifest: &Path) -> Result<(), ModuleError> {
        let mut bytes = Vec::new();
        let mut entries = Vec::new();
        let mut offset = 0;
        for (name, array) in &self.arrays {
            entries.push(ManifestEntry { name: name.clone(), shape: array.shape.clone(), offset });
            offset += array.data.len();
            for v in &array.data {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        if let Some(parent) = blob.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| ModuleError::Io(format!("{}: {e}", parent.display())))?;
        }
        std::fs::write(blob, bytes).map_err(|e| ModuleError::Io(format!("{}: {e}", blob.display())))?;
        let manifest_value = Manifest { format: FORMAT.into(), config: self.config.clone(), arrays: entries };
        write_json(manifest, &manifest_value).map_err(|e| ModuleError::Io(e.to_string()))
    }

    pub fn read(blob: &Path, manifest: &Path) -> Result<ModuleParams, ModuleError> {
        let manifest: Manifest = read_json(manifest).map_err(|e| ModuleError::Io(e.to_string()))?;
        if manifest.format != FORMAT {
            return Err(ModuleError::Io(format!("unsupported parameter format {:?}", manifest.format)));
        }
        manifest.config.validate()?;
        let bytes = std::fs::read(blob).map_err(|e| ModuleError::Io(format!("{}: {e}", blob.display())))?;
        if bytes.len() % 8 != 0 {
            return Err(ModuleError::Io(format!("{}: length {} is not a multiple of 8", blob.display(), bytes.len())));
        }
        let values: Vec<f64> =
            bytes.chunks_exact(8).map(|chunk| f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"))).collect();
        let mut arrays = BTreeMap::new();
        for entry in manifest.arrays {
            let len: usize = entry.shape.iter().product();
            let data = values
                .get(entry.offset..entry.offset + len)
                .ok_or_else(|| ModuleError::Io(format!("array {} runs past the end of the blob", entry.name)))?
                .to_vec();
            arrays.insert(entry.name, ParamArray { shape: entry.shape, data });
        }
        Ok(ModuleParams { config: manifest.config, arrays })
    }
}

/// Shape sanity used by the forward passes.
pub(crate) fn expect_len(name: &str, values: &[f64], len: usize) -> Result<(), ModuleError> {
    if values.len() == len {
        Ok(())
    } else {
        Err(ModuleError::Shape(format!("{name} has {} values, expected {len}", values.len())))
    }
}

pub(crate) fn expect_kernel(name: &str, values: &[f64], out: usize, inp: usize) -> Result<(), ModuleError> {
    expect_len(name, values, kernel_len(out, inp))
}
