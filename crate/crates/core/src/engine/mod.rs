//! Dense tensors, reverse-mode differentiation, layers, losses and the
//! optimiser used by the neural estimators.

pub mod checkpoint;
pub mod graph;
pub mod layers;
pub mod linalg;
pub mod loss;
pub mod optim;
pub mod params;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use graph::{Gradients, Graph, Var};
pub use layers::{BatchNorm, Embedding, Linear, Lstm, Mode};
pub use optim::{AdamState, CyclicalSchedule};
pub use params::{BufferId, LayerParams, ParamId};
pub use tensor::Tensor;
