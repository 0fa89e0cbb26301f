//! Learn propositional state symbols from puzzle images, ground action
//! symbols and action models without supervision, and plan in the learned
//! latent space.

pub mod ama1;
pub mod ama2;
pub mod bits;
pub mod dataset;
pub mod domains;
pub mod error;
pub mod ndcore;
pub mod pipeline;
pub mod planner;
pub mod sae;

pub use bits::LatentBitVector;
pub use error::{Error, Result};
