//! Swirl distortion about the image center with bilinear sampling.

use crate::ndcore::tensor::Tensor;

/// Inverse-mapped swirl: the output pixel at polar (rho, phi) around the
/// center samples the input at angle phi + strength * exp(-rho / (radius/5)).
/// Out-of-bounds reads clamp to the edge. strength = 0 is the identity.
pub fn swirl(img: &Tensor, strength: f32, radius: f32) -> Tensor {
    assert!(radius > 0.0, "swirl radius must be positive");
    let (h, w) = (img.shape()[0], img.shape()[1]);
    let cy = (h as f32 - 1.0) / 2.0;
    let cx = (w as f32 - 1.0) / 2.0;
    let decay = radius / 5.0;
    let mut out = vec![0.0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            let dy = y as f32 - cy;
            let dx = x as f32 - cx;
            let rho = (dx * dx + dy * dy).sqrt();
            let theta = strength * (-rho / decay).exp();
            let (sin_t, cos_t) = theta.sin_cos();
            let sx = cx + dx * cos_t - dy * sin_t;
            let sy = cy + dx * sin_t + dy * cos_t;
            out[y * w + x] = bilinear_clamped(img, sy, sx);
        }
    }
    Tensor::new(vec![h, w], out)
}

/// Default parameters: strength 3, radius 0.75 times the smaller dimension.
pub fn swirl_default(img: &Tensor) -> Tensor {
    let (h, w) = (img.shape()[0], img.shape()[1]);
    swirl(img, 3.0, 0.75 * h.min(w) as f32)
}

/// Approximate inverse: the swirl preserves the radius, so rotating by the
/// negated angle undoes it up to resampling error.
pub fn unswirl(img: &Tensor, strength: f32, radius: f32) -> Tensor {
    swirl(img, -strength, radius)
}

fn bilinear_clamped(img: &Tensor, y: f32, x: f32) -> f32 {
    let (h, w) = (img.shape()[0], img.shape()[1]);
    let xc = x.clamp(0.0, (w - 1) as f32);
    let yc = y.clamp(0.0, (h - 1) as f32);
    let x0 = xc.floor() as usize;
    let y0 = yc.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = xc - x0 as f32;
    let fy = yc - y0 as f32;
    let d = img.data();
    let top = d[y0 * w + x0] * (1.0 - fx) + d[y0 * w + x1] * fx;
    let bot = d[y1 * w + x0] * (1.0 - fx) + d[y1 * w + x1] * fx;
    top * (1.0 - fy) + bot * fy
}
