//! Action symbol grounding: the action autoencoder that names transitions
//! with discrete labels, positive/unlabeled discriminator training for
//! state and transition validity, and the mixed-example generators that
//! feed it.

pub mod aae;
pub mod mixed;
pub mod pu;

pub use aae::{train_aae, AaeConfig, AaeModel, AaeTrainReport};
pub use mixed::{gen_mixed_ad, gen_mixed_sd};
pub use pu::{pu_train, DiscArch, DiscriminatorConfig, DiscriminatorModel, PuDataset};
