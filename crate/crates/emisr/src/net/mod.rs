//! The SR network `N`: tensors, layer ops with exact gradients, the model,
//! and checkpoint serialization.

pub mod checkpoint;
pub mod model;
pub mod ops;
pub mod tensor;

pub use checkpoint::{Checkpoint, Provenance};
pub use model::{ForwardTrace, NetworkConfig, SrNetwork};
pub use tensor::{Scalar, Tensor};

#[cfg(test)]
pub(crate) use model::dirac_identity_net;
