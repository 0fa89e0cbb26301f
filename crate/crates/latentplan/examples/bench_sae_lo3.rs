use latentplan::domains::{Domain, DomainSpec};
use latentplan::ndcore::{RngStream, Tensor};
use latentplan::sae::{train_sae, SaeConfig};
use std::collections::HashSet;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let channels: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(8);
    let fc: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(400);
    let batch: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(128);
    let seed: u64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(7);

    let domain = Domain::new(DomainSpec::LightsOut { n: 3 });
    let states = domain.reachable_states().unwrap();
    let (h, w) = domain.image_dims();
    let mut data = Vec::with_capacity(states.len() * h * w);
    for s in &states {
        data.extend_from_slice(domain.render(s).data());
    }
    let images = Tensor::new(vec![states.len(), h, w], data);

    let cfg = SaeConfig {
        latent_bits: 36,
        input_dims: (h, w),
        epochs,
        batch_size: batch,
        conv_channels: channels,
        fc_width: fc,
        kl_weight: std::env::var("KLW").ok().and_then(|v| v.parse().ok()).unwrap_or(1.0),
        ..SaeConfig::default()
    };
    let t0 = Instant::now();
    let (model, report) = train_sae(&images, &cfg, &mut RngStream::new(seed)).unwrap();
    let train_time = t0.elapsed().as_secs_f32();
    if std::env::var("SHOW_HISTORY").is_ok() {
        for (e, l) in report.recon_history.iter().enumerate() {
            if e % 10 == 0 || e + 1 == report.recon_history.len() {
                println!("  epoch {e}: recon {l:.4}");
            }
        }
    }

    // injectivity + stability + decode-classify fidelity
    let codes: Vec<_> = (0..states.len())
        .map(|i| model.encode(&Tensor::new(vec![h, w], images.row(i).to_vec())).unwrap())
        .collect();
    let distinct: HashSet<_> = codes.iter().cloned().collect();
    let back = model.autoencode_bits(&codes).unwrap();
    let stable = codes.iter().zip(&back).filter(|(a, b)| a == b).count();
    let mut classify_ok = 0;
    let mut recon_err_total = 0.0f32;
    for (i, c) in codes.iter().enumerate() {
        let dec = model.decode(c).unwrap();
        let err: f32 = dec.data().iter().zip(images.row(i)).map(|(a, b)| (a - b).abs()).sum::<f32>() / dec.len() as f32;
        recon_err_total += err;
        if domain.classify(&dec) == Some(states[i].clone()) {
            classify_ok += 1;
        }
    }
    println!(
        "epochs {epochs} ch {channels} fc {fc} batch {batch} seed {seed}: {:.0}s loss {:.4} | distinct {}/512 stable {}/512 classify {}/512 mean-abs {:.4}",
        train_time, report.final_recon_loss,
        distinct.len(), stable, classify_ok, recon_err_total / 512.0
    );
}
// (history printed via env var)
