//! Categorical sampling: the exact argmax sampler and its differentiable
//! softmax relaxation.

use crate::error::{Error, Result};
use crate::ndcore::layers::{argmax, softmax_scaled};
use crate::ndcore::rng::RngStream;
use crate::ndcore::tensor::Tensor;

/// Draws one categorical sample as `argmax_j(g_j + logpi_j)` with g_j
/// i.i.d. Gumbel(0,1). `logpi` may contain -inf for zero-probability
/// classes; NaN is rejected.
pub fn gumbel_max_sample(logpi: &Tensor, rng: &mut RngStream) -> Result<usize> {
    if logpi.data().iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("gumbel_max_sample logits".into()));
    }
    let noisy: Vec<f32> = logpi.data().iter().map(|l| l + rng.gumbel()).collect();
    Ok(argmax(&noisy))
}

/// Softmax relaxation over an `[vars, cats]` logit matrix: each row becomes
/// `softmax((logpi + g) / tau)`. Returns rows that sum to one.
pub fn gumbel_softmax(logpi: &Tensor, tau: f32, rng: &mut RngStream) -> Result<Tensor> {
    if !(tau > 0.0) {
        return Err(Error::Temperature(tau));
    }
    let noise: Vec<f32> = (0..logpi.len()).map(|_| rng.gumbel()).collect();
    let g = Tensor::new(logpi.shape().to_vec(), noise);
    gumbel_softmax_with_noise(logpi, &g, tau)
}

/// Same as `gumbel_softmax` but with the noise supplied explicitly, so the
/// relaxation can be evaluated with forced noise (e.g. all zeros).
pub fn gumbel_softmax_with_noise(logpi: &Tensor, noise: &Tensor, tau: f32) -> Result<Tensor> {
    if !(tau > 0.0) {
        return Err(Error::Temperature(tau));
    }
    if logpi.shape() != noise.shape() {
        return Err(Error::Shape {
            expected: logpi.shape_string(),
            actual: noise.shape_string(),
        });
    }
    let cats = *logpi.shape().last().ok_or_else(|| Error::Shape {
        expected: "rank >= 1".into(),
        actual: "rank 0".into(),
    })?;
    let mut out = vec![0.0f32; logpi.len()];
    for (row_i, row) in logpi.data().chunks(cats).enumerate() {
        let off = row_i * cats;
        let noisy: Vec<f32> = row
            .iter()
            .zip(&noise.data()[off..off + cats])
            .map(|(l, g)| l + g)
            .collect();
        softmax_scaled(&noisy, tau, &mut out[off..off + cats]);
    }
    Ok(Tensor::new(logpi.shape().to_vec(), out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_probs(pi: &[f32]) -> Tensor {
        Tensor::from_vec(pi.iter().map(|p| p.ln()).collect())
    }

    #[test]
    fn degenerate_distribution_always_picks_its_class() {
        let logpi = log_probs(&[1.0, 0.0, 0.0]);
        let mut rng = RngStream::new(1);
        for _ in 0..100 {
            assert_eq!(gumbel_max_sample(&logpi, &mut rng).unwrap(), 0);
        }
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let logpi = log_probs(&[0.3, 0.3, 0.4]);
        let a = gumbel_max_sample(&logpi, &mut RngStream::new(9)).unwrap();
        let b = gumbel_max_sample(&logpi, &mut RngStream::new(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn nan_logits_are_rejected() {
        let logpi = Tensor::from_vec(vec![0.0, f32::NAN]);
        assert!(gumbel_max_sample(&logpi, &mut RngStream::new(0)).is_err());
    }

    #[test]
    fn empirical_frequencies_follow_the_distribution() {
        // The argmax sampler is exact, so frequencies converge to pi.
        let pi = [0.1f32, 0.1, 0.8];
        let logpi = log_probs(&pi);
        let mut rng = RngStream::new(20240);
        let n = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[gumbel_max_sample(&logpi, &mut rng).unwrap()] += 1;
        }
        for (c, p) in counts.iter().zip(&pi) {
            let freq = *c as f32 / n as f32;
            assert!((freq - p).abs() < 0.01, "freq {freq} vs p {p}");
        }
        let f2 = counts[2] as f32 / n as f32;
        assert!((0.79..=0.81).contains(&f2), "index-2 frequency {f2}");
    }

    #[test]
    fn zero_noise_low_tau_recovers_argmax() {
        let logpi = log_probs(&[0.1, 0.1, 0.8]);
        let z = gumbel_softmax_with_noise(
            &logpi.clone().reshaped(vec![1, 3]).unwrap(),
            &Tensor::zeros(vec![1, 3]),
            0.01,
        )
        .unwrap();
        assert!((z.data()[2] - 1.0).abs() < 1e-6);
        assert!(z.data()[0].abs() < 1e-6 && z.data()[1].abs() < 1e-6);
    }

    #[test]
    fn zero_noise_uniform_logits_stay_uniform() {
        for tau in [0.1f32, 1.0, 5.0] {
            let logpi = Tensor::zeros(vec![2, 4]);
            let z = gumbel_softmax_with_noise(&logpi, &Tensor::zeros(vec![2, 4]), tau).unwrap();
            for v in z.data() {
                assert!((v - 0.25).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn rows_sum_to_one() {
        let logpi = Tensor::new(vec![3, 4], (0..12).map(|i| (i as f32) * 0.3 - 1.0).collect());
        let z = gumbel_softmax(&logpi, 0.7, &mut RngStream::new(5)).unwrap();
        for row in z.data().chunks(4) {
            let s: f32 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|v| *v > 0.0 && *v < 1.0));
        }
    }

    #[test]
    fn non_positive_temperature_is_an_error() {
        let logpi = Tensor::zeros(vec![1, 2]);
        assert!(gumbel_softmax(&logpi, 0.0, &mut RngStream::new(0)).is_err());
        assert!(gumbel_softmax(&logpi, -1.0, &mut RngStream::new(0)).is_err());
    }
}
