//! Minimal trainability probe for the pair pipeline: can
//! relu(fuse) -> v1/v2 -> relu(v3) -> head learn a contact threshold from
//! scalar coordinates with the real optimizer?

use hln_core::hypergraph::{spatial_feature, BoxF};
use hln_core::nn::Linear;
use hln_core::rng::{stream_rng, DOMAIN_MODEL_INIT};
use hln_core::tensor::{Graph, Tensor};
use hln_core::train::SgdMomentum;
use rand::Rng;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let lr: f64 = args.next().map(|s| s.parse().unwrap()).unwrap_or(0.01);
    let steps: usize = args.next().map(|s| s.parse().unwrap()).unwrap_or(3000);
    let mode = std::env::var("MINLAB_MODE").unwrap_or_else(|_| "scalar".into());
    let d = 48usize;
    // scalar: 1 input dim; noisy: 1 + 32 noise dims; full: 9-dim spatial + 32 noise
    let in_dim = match mode.as_str() {
        "scalar" => 1,
        "noisy" => 33,
        "full" => 41,
        other => panic!("bad mode {other}"),
    };

    let mut init = stream_rng(5, DOMAIN_MODEL_INIT, 0);
    let fuse = Linear::new("fuse", in_dim, d, &mut init)?;
    let v1 = Linear::new("v1", d, d, &mut init)?;
    let v2 = Linear::new("v2", d, d, &mut init)?;
    let v3 = Linear::new("v3", 2 * d, d, &mut init)?;
    let head = Linear::new("head", d, 1, &mut init)?;
    let mut params = Vec::new();
    for l in [&fuse, &v1, &v2, &v3, &head] {
        l.collect_params(&mut params);
    }
    let mut opt = SgdMomentum::new(0.9);

    let mut rng = stream_rng(6, DOMAIN_MODEL_INIT, 1);
    let mut make_batch = |m: usize| -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut xa = Vec::new();
        let mut xb = Vec::new();
        let mut t = Vec::new();
        for _ in 0..m {
            let a: f64 = rng.random_range(0.3..0.7);
            let contact = rng.random_bool(0.5);
            let b = if contact {
                a + rng.random_range(-0.002..0.002)
            } else {
                let off: f64 = rng.random_range(0.08..0.3);
                if rng.random_bool(0.5) {
                    a + off
                } else {
                    a - off
                }
            };
            let mut push_obj = |v: &mut Vec<f64>, bottom: f64, is_a: bool| match mode.as_str() {
                "scalar" => v.push(bottom),
                "noisy" => {
                    v.push(bottom);
                    for _ in 0..32 {
                        let noise: f64 = rng.random_range(-1.0..1.0);
                        v.push(if is_a { 0.7 } else { -0.4 } + 0.3 * noise);
                    }
                }
                _ => {
                    let x1 = rng.random_range(0.2..0.5);
                    let bx = BoxF {
                        x1: x1 * 1000.0,
                        y1: (bottom - rng.random_range(0.02..0.08)) * 1000.0,
                        x2: (x1 + rng.random_range(0.1..0.3)) * 1000.0,
                        y2: bottom * 1000.0,
                    };
                    v.extend_from_slice(&spatial_feature(&bx, 1000.0, 1000.0));
                    for _ in 0..32 {
                        let noise: f64 = rng.random_range(-1.0..1.0);
                        v.push(if is_a { 0.7 } else { -0.4 } + 0.3 * noise);
                    }
                }
            };
            push_obj(&mut xa, a, true);
            // For "full", contact compares a's bottom (y2) with b's top (y1):
            // shift b so its *top* sits at the comparison coordinate.
            push_obj(&mut xb, if mode == "full" { b + 0.05 } else { b }, false);
            t.push(if contact { 1.0 } else { 0.0 });
        }
        (xa, xb, t)
    };

    let m = 64usize;
    for step in 0..steps {
        let (xa, xb, t) = make_batch(m);
        let g = Graph::recording();
        let ta = Tensor::from_vec(&[m, in_dim], xa)?;
        let tb = Tensor::from_vec(&[m, in_dim], xb)?;
        let tt = Tensor::from_vec(&[m, 1], t)?;
        let ya = fuse.apply(&g, &ta)?.relu()?;
        let yb = fuse.apply(&g, &tb)?.relu()?;
        let z_in = Tensor::concat_cols(&[&v1.apply(&g, &ya)?, &v2.apply(&g, &yb)?])?;
        let z = v3.apply(&g, &z_in)?.relu()?;
        let logits = head.apply(&g, &z)?;
        let loss = logits.sigmoid_bce(&tt)?;
        let grads = g.backward(&loss)?;
        opt.step(&params, &grads, lr)?;
        if step % 500 == 0 || step + 1 == steps {
            println!("step {} loss {:.5}", step, loss.item()?);
        }
    }
    Ok(())
}
