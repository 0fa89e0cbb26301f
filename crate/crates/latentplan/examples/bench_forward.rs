use latentplan::ndcore::{ForwardCtx, Mode, Network, RngStream, Tensor};
use std::time::Instant;

fn main() {
    let mut net = Network::builder(vec![27, 27], RngStream::new(1))
        .gaussian_noise(0.4)
        .conv2d(3, 3, 8)
        .tanh()
        .batchnorm()
        .dropout(0.4)
        .conv2d(3, 3, 8)
        .tanh()
        .batchnorm()
        .dropout(0.4)
        .dense(72)
        .reshape(&[36, 2])
        .gumbel_softmax(36, 2, 1.0)
        .dense(400)
        .relu()
        .batchnorm()
        .dropout(0.4)
        .dense(400)
        .relu()
        .batchnorm()
        .dropout(0.4)
        .dense(729)
        .sigmoid()
        .build();
    let b = 128;
    let x = Tensor::full(vec![b, 27, 27], 0.5);
    let mut rng = RngStream::new(2);
    let t0 = Instant::now();
    let mut iters = 0;
    while t0.elapsed().as_secs_f64() < 3.0 {
        let mut ctx = ForwardCtx { mode: Mode::Train, tau: 1.0, aux: None, rng: &mut rng };
        let (y, mut tape) = net.forward_train(&x, &mut ctx).unwrap();
        let dy = Tensor::full(y.shape().to_vec(), 1.0 / y.len() as f32);
        net.backward(&mut tape, &dy).unwrap();
        iters += 1;
    }
    let dt = t0.elapsed().as_secs_f64();
    println!(
        "train step batch {}: {:.1} ms/step  ({:.1} samples/s)",
        b,
        dt / iters as f64 * 1000.0,
        iters as f64 * b as f64 / dt
    );
}
