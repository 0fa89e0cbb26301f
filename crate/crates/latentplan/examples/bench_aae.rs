use latentplan::ama2::{train_aae, AaeConfig};
use latentplan::bits::LatentBitVector;
use latentplan::ndcore::RngStream;

fn main() {
    let masks = [0b0000_0011u8, 0b0001_1000, 0b1100_0000];
    let mut data = Vec::new();
    for state in 0..32u8 {
        let s_bits: Vec<bool> = (0..8).map(|j| (state >> j) & 1 == 1).collect();
        let s = LatentBitVector::from_bools(&s_bits);
        for m in masks {
            let t_val = state ^ m;
            let t_bits: Vec<bool> = (0..8).map(|j| (t_val >> j) & 1 == 1).collect();
            data.push((s.clone(), LatentBitVector::from_bools(&t_bits)));
        }
    }
    for (epochs, width, tau_min, lr) in [(150usize, 64usize, 0.1f32, 0.001f32), (400, 64, 0.1, 0.001), (400, 128, 0.2, 0.001), (800, 64, 0.1, 0.001)] {
        let cfg = AaeConfig {
            latent_bits: 8,
            labels: 16,
            epochs,
            batch_size: 32,
            fc_width: width,
            tau_min,
            lr,
            ..AaeConfig::default()
        };
        let t0 = std::time::Instant::now();
        let (_, report) = train_aae(&data, &cfg, &mut RngStream::new(11)).unwrap();
        println!(
            "epochs {epochs} width {width} tau_min {tau_min}: loss {:.4} roundtrip {:.3} used {} ({:.1}s)",
            report.final_loss, report.roundtrip_accuracy, report.used_label_count,
            t0.elapsed().as_secs_f32()
        );
    }
}
