use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a trainable parameter inside a [`LayerParams`] store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub(crate) usize);

/// Handle to a non-trainable buffer (batch-norm running statistics).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BufferId(pub(crate) usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
}

/// Named parameters of a model plus its running-statistics buffers.
///
/// Names are unique across both collections. Buffers never receive
/// gradients and are skipped by the optimizer.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    params: Vec<NamedTensor>,
    buffers: Vec<NamedTensor>,
}

impl LayerParams {
    pub fn new() -> Self {
        Self::default()
    }

    fn name_taken(&self, name: &str) -> bool {
        self.params.iter().chain(&self.buffers).any(|p| p.name == name)
    }

    pub fn register(&mut self, name: &str, tensor: Tensor) -> Result<ParamId> {
        if self.name_taken(name) {
            return Err(Error::invalid(format!("parameter {name} registered twice")));
        }
        self.params.push(NamedTensor {
            name: name.to_string(),
            tensor: tensor.trainable(),
        });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn register_buffer(&mut self, name: &str, mut tensor: Tensor) -> Result<BufferId> {
        if self.name_taken(name) {
            return Err(Error::invalid(format!("buffer {name} registered twice")));
        }
        tensor.requires_grad = false;
        self.buffers.push(NamedTensor {
            name: name.to_string(),
            tensor,
        });
        Ok(BufferId(self.buffers.len() - 1))
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].tensor
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].tensor
    }

    pub fn buffer(&self, id: BufferId) -> &Tensor {
        &self.buffers[id.0].tensor
    }

    pub fn buffer_mut(&mut self, id: BufferId) -> &mut Tensor {
        &mut self.buffers[id.0].tensor
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn named(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|p| (p.name.as_str(), &p.tensor))
    }

    pub fn named_buffers(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.buffers.iter().map(|p| (p.name.as_str(), &p.tensor))
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.params.iter_mut().map(|p| &mut p.tensor)
    }

    pub fn zero_grad(&mut self) {
        self.tensors_mut().for_each(Tensor::zero_grad);
    }

    pub fn total_values(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    /// Copies values (parameters and buffers) from a store of identical layout.
    pub fn copy_values_from(&mut self, other: &LayerParams) -> Result<()> {
        if self.params.len() != other.params.len() || self.buffers.len() != other.buffers.len() {
            return Err(Error::Checkpoint("parameter layouts differ".into()));
        }
        let pairs = self
            .params
            .iter_mut()
            .zip(&other.params)
            .chain(self.buffers.iter_mut().zip(&other.buffers));
        for (dst, src) in pairs {
            if dst.name != src.name || dst.tensor.shape() != src.tensor.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {} does not match {}",
                    dst.name, src.name
                )));
            }
            dst.tensor.data_mut().copy_from_slice(src.tensor.data());
        }
        Ok(())
    }
}
