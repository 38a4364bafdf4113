//! Named parameter tensors with matching gradient buffers.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KernelError, Result};
use crate::tensor::Tensor;

/// Version stamped into every serialized parameter manifest.
pub const PARAM_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
}

/// Parameters keyed by name. Iteration is in sorted name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    params: BTreeMap<String, Param>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the blob, counted in `f64` values.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamManifest {
    pub version: u32,
    pub entries: Vec<ParamEntry>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        let grad = Tensor::zeros(value.shape());
        self.params.insert(name.into(), Param { value, grad });
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .map(|p| &p.value)
            .ok_or_else(|| KernelError::UnknownParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.params
            .get_mut(name)
            .map(|p| &mut p.value)
            .ok_or_else(|| KernelError::UnknownParam(name.to_string()))
    }

    pub fn grad(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .map(|p| &p.grad)
            .ok_or_else(|| KernelError::UnknownParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in self.params.values_mut() {
            p.grad.data_mut().fill(0.0);
        }
    }

    /// Replaces every gradient buffer with the supplied gradient, or zero for
    /// parameters absent from `grads`.
    pub fn set_grads(&mut self, grads: &BTreeMap<String, Tensor>) -> Result<()> {
        for (name, p) in self.params.iter_mut() {
            match grads.get(name) {
                Some(g) => {
                    if g.len() != p.value.len() {
                        return Err(KernelError::Shape(format!(
                            "gradient for `{name}` has {} values, parameter has {}",
                            g.len(),
                            p.value.len()
                        )));
                    }
                    p.grad.data_mut().copy_from_slice(g.data());
                }
                None => p.grad.data_mut().fill(0.0),
            }
        }
        Ok(())
    }

    pub fn grad_norm(&self) -> f64 {
        self.params
            .values()
            .map(|p| p.grad.sq_norm())
            .sum::<f64>()
            .sqrt()
    }

    /// Glorot-uniform weight `[fan_in × fan_out]` plus a zero bias.
    pub fn add_affine<R: Rng + ?Sized>(
        &mut self,
        prefix: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) {
        self.insert(
            format!("{prefix}.w"),
            glorot_uniform(fan_in, fan_out, fan_in, fan_out, rng),
        );
        self.insert(format!("{prefix}.b"), Tensor::zeros(&[fan_out]));
    }

    /// Serializes all values (not gradients) as a manifest plus a
    /// little-endian `f64` blob.
    pub fn to_manifest_blob(&self) -> (ParamManifest, Vec<u8>) {
        let mut entries = Vec::with_capacity(self.params.len());
        let mut blob = Vec::with_capacity(self.num_values() * 8);
        let mut offset = 0;
        for (name, p) in &self.params {
            entries.push(ParamEntry {
                name: name.clone(),
                shape: p.value.shape().to_vec(),
                offset,
            });
            for v in p.value.data() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
            offset += p.value.len();
        }
        (
            ParamManifest {
                version: PARAM_FORMAT_VERSION,
                entries,
            },
            blob,
        )
    }

    pub fn from_manifest_blob(manifest: &ParamManifest, blob: &[u8]) -> Result<Self> {
        if manifest.version != PARAM_FORMAT_VERSION {
            return Err(KernelError::Format(format!(
                "parameter format version {} (expected {PARAM_FORMAT_VERSION})",
                manifest.version
            )));
        }
        if blob.len() % 8 != 0 {
            return Err(KernelError::Format(format!(
                "blob length {} is not a multiple of 8",
                blob.len()
            )));
        }
        let values: Vec<f64> = blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let mut set = ParamSet::new();
        for e in &manifest.entries {
            let n: usize = e.shape.iter().product();
            let end = e.offset + n;
            if end > values.len() {
                return Err(KernelError::Format(format!(
                    "entry `{}` spans [{}, {}) beyond blob of {} values",
                    e.name,
                    e.offset,
                    end,
                    values.len()
                )));
            }
            set.insert(
                e.name.clone(),
                Tensor::new(e.shape.clone(), values[e.offset..end].to_vec())?,
            );
        }
        Ok(set)
    }
}

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-limit..=limit))
        .collect();
    Tensor::new(vec![rows, cols], data).expect("shape matches data")
}
