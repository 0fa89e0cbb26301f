use latentplan::ama2::{train_aae, AaeConfig};
use latentplan::bits::LatentBitVector;
use latentplan::domains::{Domain, DomainSpec};
use latentplan::ndcore::RngStream;
use latentplan::sae::SaeModel;

fn bits_of(v: u32, n: usize) -> LatentBitVector {
    LatentBitVector::from_bools(&(0..n).map(|j| (v >> j) & 1 == 1).collect::<Vec<_>>())
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let data_kind = args.get(1).map(|s| s.as_str()).unwrap_or("gt");
    let labels: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(128);
    let epochs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(150);
    let width: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(200);
    let batch: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(256);
    let klw: f32 = std::env::var("KLW").ok().and_then(|v| v.parse().ok()).unwrap_or(1.0);

    let domain = Domain::new(DomainSpec::LightsOut { n: 3 });
    let (transitions, n): (Vec<(LatentBitVector, LatentBitVector)>, usize) = match data_kind {
        // ground-truth 9-bit grids, xor-structured actions
        "gt" => {
            let mut out = Vec::new();
            for s in domain.reachable_states().unwrap() {
                let sb = domain.gt_encode(&s);
                for t in domain.gt_successors(&s).unwrap() {
                    out.push((sb.clone(), domain.gt_encode(&t)));
                }
            }
            (out, 9)
        }
        // learned 36-bit codes from the cached sae
        "latent" => {
            let sae = SaeModel::load("/tmp/lo3_cache/sae.ckpt").unwrap();
            let states = domain.reachable_states().unwrap();
            let codes: Vec<LatentBitVector> = states
                .iter()
                .map(|s| sae.encode(&domain.render(s)).unwrap())
                .collect();
            let index: std::collections::HashMap<_, usize> =
                states.iter().cloned().zip(0..).collect();
            let mut out = Vec::new();
            for (si, s) in states.iter().enumerate() {
                for t in domain.gt_successors(s).unwrap() {
                    out.push((codes[si].clone(), codes[index[&t]].clone()));
                }
            }
            (out, 36)
        }
        // 8-bit toy xor system
        _ => {
            let masks = [0b11u32, 0b1100, 0b110000];
            let mut out = Vec::new();
            for v in 0..256u32 {
                for m in masks {
                    out.push((bits_of(v, 8), bits_of(v ^ m, 8)));
                }
            }
            (out, 8)
        }
    };

    let cfg = AaeConfig {
        latent_bits: n,
        labels,
        epochs,
        batch_size: batch,
        fc_width: width,
        kl_weight: klw,
        ..AaeConfig::default()
    };
    let t0 = std::time::Instant::now();
    let (_, r) = train_aae(&transitions, &cfg, &mut RngStream::new(7)).unwrap();
    println!(
        "{data_kind} K{labels} e{epochs} w{width} b{batch} klw{klw}: loss {:.4} roundtrip {:.4} used {} ({:.0}s, {} transitions)",
        r.final_loss, r.roundtrip_accuracy, r.used_label_count, t0.elapsed().as_secs_f32(), transitions.len()
    );
}
