//! Masked autoregressive normalizing flow: four coupling layers (masked
//! autoregressive transform with a residual conditioner, flow batch
//! normalization, fixed random permutation) over a standard Gaussian base,
//! trained by Adam with early stopping and restarts.

mod made;
mod model;
mod tape;
mod train;

pub use made::{Conditioner, MaskedDense, ResidualBlock};
pub use model::{
    BatchStats, CouplingLayer, DropoutPlan, FlowBatchNorm, FlowModel, MafTransform, ALPHA_CLAMP,
    LAYER_PARAMS,
};
pub use tape::Tape;
pub use train::{train_flow, train_flow_with_split, Adam, RestartReport, TrainConfig, TrainReport};
