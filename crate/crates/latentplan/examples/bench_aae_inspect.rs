use latentplan::ama2::AaeConfig;
use latentplan::bits::LatentBitVector;
use latentplan::domains::{Domain, DomainSpec};
use latentplan::ndcore::{
    adam_step, bce_loss_grad, AdamState, ForwardCtx, LayerSpec, Mode, Network, RngStream, Tensor,
};
use latentplan::sae::AnnealSchedule;

fn build_aae(cfg: &AaeConfig, rng: RngStream) -> Network {
    let n = cfg.latent_bits;
    Network::builder(vec![n], rng)
        .with_aux(n)
        .concat_aux()
        .dense(cfg.fc_width).relu().batchnorm().dropout(cfg.dropout)
        .concat_aux()
        .dense(cfg.fc_width).relu().batchnorm().dropout(cfg.dropout)
        .concat_aux()
        .dense(cfg.labels)
        .gumbel_softmax(1, cfg.labels, cfg.kl_weight)
        .concat_aux()
        .dense(cfg.fc_width).relu().batchnorm().dropout(cfg.dropout)
        .concat_aux()
        .dense(cfg.fc_width).relu().batchnorm().dropout(cfg.dropout)
        .dense(n).sigmoid()
        .build()
}

fn main() {
    let domain = Domain::new(DomainSpec::LightsOut { n: 3 });
    let mut transitions: Vec<(LatentBitVector, LatentBitVector)> = Vec::new();
    for s in domain.reachable_states().unwrap() {
        let sb = domain.gt_encode(&s);
        for t in domain.gt_successors(&s).unwrap() {
            transitions.push((sb.clone(), domain.gt_encode(&t)));
        }
    }
    let n = 9usize;
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let klw: f32 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let cfg = AaeConfig {
        latent_bits: n,
        labels: 128,
        epochs,
        batch_size: 256,
        fc_width: 200,
        kl_weight: klw,
        ..AaeConfig::default()
    };

    let count = transitions.len();
    let mut pre = Vec::new();
    let mut suc = Vec::new();
    for (s, t) in &transitions {
        pre.extend(s.to_f32_vec());
        suc.extend(t.to_f32_vec());
    }
    let pre = Tensor::new(vec![count, n], pre);
    let suc = Tensor::new(vec![count, n], suc);

    let mut rng = RngStream::new(7).substream(0xaae_1217);
    let mut net = build_aae(&cfg, rng.substream(1));
    let gs_index = net.gumbel_layer_index().unwrap();
    let mut adam = AdamState::for_network(&net);
    let anneal = AnnealSchedule::calibrated(cfg.tau0, cfg.tau_min, cfg.epochs);
    let mut order: Vec<usize> = (0..count).collect();

    // probe: first 256 transitions
    let probe_x = Tensor::new(vec![256, n], suc.data()[..256 * n].to_vec());
    let probe_aux = Tensor::new(vec![256, n], pre.data()[..256 * n].to_vec());

    for epoch in 0..cfg.epochs {
        let tau = anneal.tau(epoch);
        rng.shuffle(&mut order);
        let mut el = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let idx: Vec<usize> = chunk.to_vec();
            let gather = |t: &Tensor| {
                let mut d = Vec::with_capacity(idx.len() * n);
                for &i in &idx {
                    d.extend_from_slice(t.row(i));
                }
                Tensor::new(vec![idx.len(), n], d)
            };
            let x = gather(&suc);
            let aux = gather(&pre);
            let mut params_ok = true;
            net.visit_params(|p| {
                if !p.data().iter().all(|v| v.is_finite()) {
                    params_ok = false;
                }
            });
            let mut ctx = ForwardCtx { mode: Mode::Train, tau, aux: Some(&aux), rng: &mut rng };
            let (recon, mut tape) = net.forward_train(&x, &mut ctx).unwrap();
            let (loss, mut grad) = bce_loss_grad(&recon, &x).unwrap();
            if !params_ok || !loss.is_finite() || !recon.all_finite() {
                println!(
                    "epoch {epoch} batch {batches}: params_ok={params_ok} loss={loss} recon_finite={} tau={tau:.3}",
                    recon.all_finite()
                );
                if !params_ok {
                    let mut li = 0;
                    net.visit_params(|p| {
                        let nan = p.data().iter().any(|v| !v.is_finite());
                        if nan {
                            println!("  param {li} shape {:?} NON-FINITE", p.shape());
                        }
                        li += 1;
                    });
                    std::process::exit(0);
                }
            }
            for g in grad.data_mut() {
                *g *= n as f32;
            }
            net.backward(&mut tape, &grad).unwrap();
            // tripwire: find the first non-finite gradient or parameter
            let mut gmax = 0.0f32;
            let mut bad = false;
            net.visit_params(|p| {
                if let Some(g) = p.grad() {
                    for v in g {
                        if !v.is_finite() {
                            bad = true;
                        }
                        gmax = gmax.max(v.abs());
                    }
                }
            });
            if bad || gmax > 1e6 {
                println!("epoch {epoch} batch {batches}: grad max {gmax:.3e} bad={bad} tau={tau:.3}");
                let mut li = 0;
                net.visit_params(|p| {
                    let g = p.grad().unwrap();
                    let m = g.iter().cloned().fold(0.0f32, |a, b| a.max(b.abs()));
                    let nan = g.iter().any(|v| !v.is_finite());
                    println!("  param {li} shape {:?}: grad max {m:.3e} nan {nan}", p.shape());
                    li += 1;
                });
                std::process::exit(0);
            }
            adam_step(&mut net, &mut adam, cfg.lr);
            net.zero_grads();
            el += loss;
            batches += 1;
        }
        if epoch % 10 == 0 || epoch + 1 == cfg.epochs {
            // inference labels on the probe
            let mut r0 = RngStream::new(0);
            let mut ctx = ForwardCtx { mode: Mode::Infer, tau: 1.0, aux: Some(&probe_aux), rng: &mut r0 };
            let z = net.forward_until(gs_index + 1, &probe_x, &mut ctx).unwrap();
            let mut labels = std::collections::HashSet::new();
            for bi in 0..z.batch() {
                let row = z.row(bi);
                let arg = row.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap().0;
                labels.insert(arg);
            }
            // logits spread: run up to the dense before GS
            let mut ctx2 = ForwardCtx { mode: Mode::Infer, tau: 1.0, aux: Some(&probe_aux), rng: &mut r0 };
            let logits = net.forward_until(gs_index, &probe_x, &mut ctx2).unwrap();
            let spread: f32 = (0..logits.batch())
                .map(|bi| {
                    let r = logits.row(bi);
                    r.iter().cloned().fold(f32::MIN, f32::max) - r.iter().cloned().fold(f32::MAX, f32::min)
                })
                .sum::<f32>() / logits.batch() as f32;
            // weight norm of decoder's first dense z-columns vs s-columns
            let mut znorm = 0.0f32;
            let mut snorm = 0.0f32;
            if let LayerSpec::Dense { weight, .. } = &net.layers[gs_index + 2] {
                let (out, inw) = (weight.shape()[0], weight.shape()[1]);
                for o in 0..out {
                    for i in 0..inw {
                        let v = weight.data()[o * inw + i];
                        if i < 128 { znorm += v * v } else { snorm += v * v }
                    }
                }
            }
            // batchnorm health and weight magnitudes per layer
            let mut bn_report = String::new();
            for (li, layer) in net.layers.iter().enumerate() {
                match layer {
                    LayerSpec::BatchNorm { running_mean, running_var, .. } => {
                        let rm = running_mean.data().iter().cloned().fold(0.0f32, |a, b| a.max(b.abs()));
                        let rv = running_var.data().iter().cloned().fold(0.0f32, |a, b| a.max(b.abs()));
                        let rv_min = running_var.data().iter().cloned().fold(f32::MAX, f32::min);
                        bn_report.push_str(&format!(" bn{li}[rm {rm:.1e} rv {rv:.1e}/{rv_min:.1e}]"));
                    }
                    LayerSpec::Dense { weight, .. } => {
                        let wmax = weight.data().iter().cloned().fold(0.0f32, |a, b| a.max(b.abs()));
                        let finite = weight.data().iter().all(|v| v.is_finite());
                        bn_report.push_str(&format!(" d{li}[w {wmax:.1e}{}]", if finite { "" } else { " NAN" }));
                    }
                    _ => {}
                }
            }
            println!(
                "epoch {epoch}: tau {tau:.2} loss {:.4} probe-labels {} logit-spread {spread:.3} z-col-norm {:.3} s-col-norm {:.3}\n  {bn_report}",
                el / batches as f64, labels.len(), znorm.sqrt(), snorm.sqrt()
            );
        }
    }
}
