//! Minimal reverse-mode tensor engine: exactly the layers, losses,
//! samplers and optimizer the model architectures need.

pub mod adam;
pub mod checkpoint;
pub mod gumbel;
pub mod layers;
pub mod loss;
pub mod net;
pub mod rng;
pub mod tensor;

pub use adam::{adam_step, AdamState};
pub use gumbel::{gumbel_max_sample, gumbel_softmax, gumbel_softmax_with_noise};
pub use layers::{Activation, ForwardCtx, LayerSpec, Mode};
pub use loss::{bce_loss, bce_loss_grad, gs_variational_loss};
pub use net::{NetBuilder, Network, Tape};
pub use rng::RngStream;
pub use tensor::Tensor;
