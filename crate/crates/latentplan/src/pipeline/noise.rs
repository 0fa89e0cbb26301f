//! Input corruption for robustness experiments.

use crate::ndcore::{RngStream, Tensor};
use crate::pipeline::config::NoiseKind;

pub const GAUSSIAN_SIGMA: f32 = 0.3;
pub const SALT_PEPPER_P: f32 = 0.06;

/// Corrupts an image. Gaussian noise adds sigma-scaled draws and clamps to
/// [0,1]; salt/pepper independently forces each pixel to 0 or 1 with
/// probability p/2 each.
pub fn corrupt_image(img: &Tensor, kind: NoiseKind, rng: &mut RngStream) -> Tensor {
    match kind {
        NoiseKind::None => img.clone(),
        NoiseKind::Gaussian => {
            let mut out = img.clone();
            for v in out.data_mut() {
                *v = (*v + GAUSSIAN_SIGMA * rng.normal()).clamp(0.0, 1.0);
            }
            out
        }
        NoiseKind::SaltPepper => {
            let mut out = img.clone();
            for v in out.data_mut() {
                let u = rng.uniform();
                if u < SALT_PEPPER_P / 2.0 {
                    *v = 0.0;
                } else if u < SALT_PEPPER_P {
                    *v = 1.0;
                }
            }
            out
        }
    }
}
