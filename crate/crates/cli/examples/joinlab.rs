//! Controlled probe: can a preset learn the part-mediated support join?
//!
//! Builds minimal scenes — floor, two stacked slabs with different tops, and
//! one or two hosts bound to slabs through touching parts (plus decoy parts
//! hovering near the crossed slab) — trains a preset on them, and reports the
//! score separation between the true (host, own slab) and false (host, other
//! slab) resting_on candidates on held-out scenes.
//!
//! Modes: `pure` (one host, touching part only), `decoy` (one host, plus a
//! hovering decoy part), `mix` (decoy touches 45% of the time), `dual` (two
//! hosts at separated elevations sharing both slabs, independent grounding
//! and decoy coins — slab-side "some part touches me" shortcuts stop working
//! and the model must bind parts to their owners).
//!
//! Usage: joinlab <pure|decoy|mix|dual> <preset> [jitter_frac] [total_steps]

use hln_core::hypergraph::{pair_index, BoxF, SceneGraph};
use hln_core::model::{HlnConfig, HlnModel, Preset, SceneInputs, TaskMode};
use hln_core::rng::{stream_rng, DOMAIN_SCENE};
use hln_core::scenes::{
    derive_triplets, simulate_detector, DatasetConfig, CAT_CART, CAT_CRATE, CAT_LEG, CAT_ROBOT,
    CAT_TABLE, CAT_WHEEL, PRED_ON, PRED_RESTING_ON,
};
use hln_core::tensor::Graph;
use hln_core::train::{OptimizerConfig, TrainScene, Trainer};
use rand::Rng;

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    Pure,
    Decoy,
    Mix,
    Dual,
    Hard,
}

/// One (host, main part, own slab, other slab) readout entry.
#[derive(Clone, Copy)]
struct CandKey {
    host: usize,
    main_part: usize,
    own: usize,
    other: usize,
}

struct LabScene {
    graph: SceneGraph,
    keys: Vec<CandKey>,
}

fn make_scene(seed: u64, id: u64, mode: Mode) -> LabScene {
    let mut rng = stream_rng(seed, DOMAIN_SCENE, id);
    let (w, h) = (1000.0, 1000.0);
    let mut boxes = Vec::new();
    let mut cats = Vec::new();

    // 0: floor
    boxes.push(BoxF {
        x1: 0.0,
        y1: 920.0,
        x2: w,
        y2: h,
    });
    cats.push(hln_core::scenes::CAT_FLOOR);

    let x0 = rng.random_range(150.0..350.0);
    let bw = rng.random_range(380.0..480.0);
    // Two slab tops separated at a scale the network can resolve; which slab
    // carries which host is an independent coin, so the (host, slab) pair
    // geometry carries no information about the label.
    let t1 = rng.random_range(450.0..550.0);
    let dt = rng.random_range(80.0..130.0);
    let t2 = t1 + dt;

    // 1, 2: slabs spanning the full block width
    for &t in &[t1, t2] {
        let sh = rng.random_range(18.0..24.0);
        boxes.push(BoxF {
            x1: x0,
            y1: t,
            x2: x0 + bw,
            y2: t + sh,
        });
        cats.push(if rng.random_bool(0.5) {
            CAT_CRATE
        } else {
            CAT_TABLE
        });
    }

    let mut part_of = Vec::new();
    let mut keys = Vec::new();

    if mode == Mode::Dual || mode == Mode::Hard {
        // 3, 4: two hosts over the same slabs. `dual` separates them
        // vertically (ownership readable from the tuck height); `hard` puts
        // them side by side in one elevation band, so ownership is readable
        // only from horizontal containment.
        let mut host_info = Vec::new();
        if mode == Mode::Hard {
            let wa = bw * rng.random_range(0.28..0.38);
            let wb = bw * rng.random_range(0.28..0.38);
            let xa = x0 + bw * rng.random_range(0.01..0.04);
            let xb = x0 + bw - bw * rng.random_range(0.01..0.04) - wb;
            for &(hx, hw) in &[(xa, wa), (xb, wb)] {
                let bottom = t1 - rng.random_range(110.0..180.0);
                let host_cat = if rng.random_bool(0.5) {
                    CAT_CART
                } else {
                    CAT_ROBOT
                };
                boxes.push(BoxF {
                    x1: hx,
                    y1: bottom - rng.random_range(40.0..90.0),
                    x2: hx + hw,
                    y2: bottom,
                });
                cats.push(host_cat);
                host_info.push((boxes.len() - 1, hx, hw, bottom, host_cat));
            }
        } else {
            let bottom_a = t1 - rng.random_range(110.0..180.0);
            let bottom_b = bottom_a - rng.random_range(70.0..120.0);
            for &bottom in &[bottom_a, bottom_b] {
                let hw = bw * rng.random_range(0.75..0.90);
                let hx = x0 + rng.random_range(0.0..(bw - hw));
                let host_cat = if rng.random_bool(0.5) {
                    CAT_CART
                } else {
                    CAT_ROBOT
                };
                boxes.push(BoxF {
                    x1: hx,
                    y1: bottom - rng.random_range(40.0..90.0),
                    x2: hx + hw,
                    y2: bottom,
                });
                cats.push(host_cat);
                host_info.push((boxes.len() - 1, hx, hw, bottom, host_cat));
            }
        }
        // 5..9: two parts per host, interleaved over both slabs.
        for &(host_idx, hx, hw, bottom, host_cat) in &host_info {
            let part_cat = if host_cat == CAT_CART {
                CAT_WHEEL
            } else {
                CAT_LEG
            };
            let own = 1 + rng.random_range(0..2usize);
            let other = 3 - own;
            let t_own = if own == 1 { t1 } else { t2 };
            let t_oth = if own == 1 { t2 } else { t1 };
            let grounded = rng.random_bool(0.75);
            let decoy_touches = rng.random_bool(0.3);
            let main_part = boxes.len();
            for (target_top, touches) in [(t_own, grounded), (t_oth, decoy_touches)] {
                let pw = rng.random_range(22.0..40.0);
                let px = hx + rng.random_range(0.02..0.98) * (hw - pw);
                let attach = rng.random_range(7.0..16.0);
                let y2 = if touches {
                    target_top + rng.random_range(-2.0..2.0)
                } else {
                    (target_top - rng.random_range(55.0..95.0)).max(bottom + 4.0)
                };
                part_of.push((boxes.len(), host_idx));
                boxes.push(BoxF {
                    x1: px,
                    y1: bottom - attach,
                    x2: px + pw,
                    y2,
                });
                cats.push(part_cat);
            }
            keys.push(CandKey {
                host: host_idx,
                main_part,
                own,
                other,
            });
        }
        // 9: loose distractor part in hard mode — same category family, lies
        // on or hovers near a slab, belongs to no host. Breaks "some part
        // touches this slab" as a resting signal.
        if mode == Mode::Hard {
            let pw = rng.random_range(22.0..40.0);
            let px = x0 + rng.random_range(0.0..(bw - pw));
            let t_target = if rng.random_bool(0.5) { t1 } else { t2 };
            let y2 = if rng.random_bool(0.5) {
                t_target + rng.random_range(-2.0..2.0)
            } else {
                t_target - rng.random_range(55.0..95.0)
            };
            boxes.push(BoxF {
                x1: px,
                y1: y2 - rng.random_range(25.0..45.0),
                x2: px + pw,
                y2,
            });
            cats.push(if rng.random_bool(0.5) {
                CAT_WHEEL
            } else {
                CAT_LEG
            });
        }
    } else {
        // 3: single host
        let hw = bw * rng.random_range(0.75..0.90);
        let hx = x0 + rng.random_range(0.0..(bw - hw));
        let own = 1 + rng.random_range(0..2usize);
        let other = 3 - own;
        let t_own = if own == 1 { t1 } else { t2 };
        let t_oth = if own == 1 { t2 } else { t1 };
        // drop to the upper slab in [80, 270 - dt] => both drops in [80, 270].
        let drop_upper = rng.random_range(80.0..(270.0 - dt));
        let hy2 = t1 - drop_upper;
        let hy1 = hy2 - rng.random_range(40.0..90.0);
        boxes.push(BoxF {
            x1: hx,
            y1: hy1,
            x2: hx + hw,
            y2: hy2,
        });
        let host_cat = if rng.random_bool(0.5) {
            CAT_CART
        } else {
            CAT_ROBOT
        };
        cats.push(host_cat);
        let part_cat = if host_cat == CAT_CART {
            CAT_WHEEL
        } else {
            CAT_LEG
        };

        // 4: main part, touching the host's own slab
        {
            let pw = rng.random_range(22.0..40.0);
            let px = hx + rng.random_range(0.05..0.40) * (hw - pw);
            let attach = rng.random_range(7.0..16.0);
            let y2 = t_own + rng.random_range(-2.0..2.0);
            boxes.push(BoxF {
                x1: px,
                y1: hy2 - attach,
                x2: px + pw,
                y2,
            });
            cats.push(part_cat);
            part_of.push((4, 3));
        }
        // 5: decoy part near the other slab
        if mode != Mode::Pure {
            let pw = rng.random_range(22.0..40.0);
            let px = hx + rng.random_range(0.55..0.90) * (hw - pw);
            let attach = rng.random_range(7.0..16.0);
            let touches = mode == Mode::Mix && rng.random_bool(0.45);
            let y2 = if touches {
                t_oth + rng.random_range(-2.0..2.0)
            } else {
                // Keep the hovering decoy a valid box below the host bottom.
                (t_oth - rng.random_range(60.0..100.0)).max(hy2 + 4.0)
            };
            boxes.push(BoxF {
                x1: px,
                y1: hy2 - attach,
                x2: px + pw,
                y2,
            });
            cats.push(part_cat);
            part_of.push((5, 3));
        }
        keys.push(CandKey {
            host: 3,
            main_part: 4,
            own,
            other,
        });
    }

    let triplets = derive_triplets(&boxes, &part_of);
    LabScene {
        graph: SceneGraph {
            width: w,
            height: h,
            boxes,
            categories: cats,
            triplets,
        },
        keys,
    }
}

struct ProbeStats {
    true_mean: f64,
    false_mean: f64,
    acc: f64,
    entries: usize,
    on_true: f64,
    on_false: f64,
}

fn probe(
    model: &HlnModel,
    test: &[TrainScene],
    test_keys: &[Vec<CandKey>],
    c_p: usize,
    limit: usize,
) -> anyhow::Result<ProbeStats> {
    let g = Graph::inference();
    let (mut true_scores, mut false_scores) = (Vec::new(), Vec::new());
    let (mut on_true, mut on_false) = (Vec::new(), Vec::new());
    let mut auc_wins = 0usize;
    let mut auc_total = 0usize;
    for (scene, keys) in test.iter().zip(test_keys.iter()).take(limit) {
        let n = scene.graph.num_objects();
        let pred = model.predict(&g, &scene.inputs, TaskMode::PredCls, Some(&scene.graph.categories))?;
        let slot = |s: usize, o: usize, p: usize| -> f64 {
            let q = pair_index(n, s, o);
            let row = pred.pair_queries.iter().position(|&pq| pq == q).unwrap();
            pred.pair_scores.data()[row * c_p + p]
        };
        let has = |s: usize, p: usize, o: usize| {
            scene
                .graph
                .triplets
                .iter()
                .any(|t| t.subject == s && t.predicate == p && t.object == o)
        };
        for key in keys {
            if has(key.main_part, PRED_ON, key.own) {
                on_true.push(slot(key.main_part, key.own, PRED_ON));
            }
            on_false.push(slot(key.main_part, key.other, PRED_ON));
            if !has(key.host, PRED_RESTING_ON, key.own) || has(key.host, PRED_RESTING_ON, key.other)
            {
                continue;
            }
            let s_true = slot(key.host, key.own, PRED_RESTING_ON);
            let s_false = slot(key.host, key.other, PRED_RESTING_ON);
            true_scores.push(s_true);
            false_scores.push(s_false);
            auc_total += 1;
            if s_true > s_false {
                auc_wins += 1;
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    Ok(ProbeStats {
        true_mean: mean(&true_scores),
        false_mean: mean(&false_scores),
        acc: auc_wins as f64 / auc_total.max(1) as f64,
        entries: auc_total,
        on_true: mean(&on_true),
        on_false: mean(&on_false),
    })
}

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let mode = match args.next().as_deref() {
        Some("pure") => Mode::Pure,
        Some("decoy") => Mode::Decoy,
        Some("mix") => Mode::Mix,
        Some("dual") => Mode::Dual,
        Some("hard") => Mode::Hard,
        other => panic!("mode must be pure|decoy|mix|dual|hard, got {other:?}"),
    };
    let preset = Preset::from_name(&args.next().expect("preset")).expect("valid preset");
    let jitter: f64 = args.next().map(|s| s.parse().unwrap()).unwrap_or(0.0);
    let steps: usize = args.next().map(|s| s.parse().unwrap()).unwrap_or(3000);

    let mut dcfg = DatasetConfig::default();
    dcfg.visual_dim = 32;
    dcfg.jitter_frac = jitter;

    let build = |lo: u64, hi: u64| -> anyhow::Result<(Vec<TrainScene>, Vec<Vec<CandKey>>)> {
        let mut scenes = Vec::new();
        let mut keys = Vec::new();
        for id in lo..hi {
            let lab = make_scene(900, id, mode);
            let det = simulate_detector(&lab.graph, id, &dcfg);
            let inputs = SceneInputs::from_detection(&det, lab.graph.width, lab.graph.height)?;
            scenes.push(TrainScene {
                graph: lab.graph,
                inputs,
            });
            keys.push(lab.keys);
        }
        Ok((scenes, keys))
    };
    let (train, _train_keys) = build(0, 700)?;
    let (test, test_keys) = build(10_000, 10_300)?;

    let mut mcfg = HlnConfig {
        num_categories: dcfg.num_categories(),
        num_predicates: dcfg.num_predicates(),
        visual_dim: dcfg.visual_dim,
        d_emb: 16,
        d_model: 48,
        heads: 4,
        ..HlnConfig::default()
    };
    preset.apply(&mut mcfg);
    let model = HlnModel::new(&mcfg, 11)?;

    let base_lr: f64 = std::env::var("JOINLAB_LR")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(0.01);
    let batch: usize = std::env::var("JOINLAB_BATCH")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(4);
    let opt = OptimizerConfig {
        base_lr,
        momentum: 0.9,
        warmup_steps: 90,
        decay_milestones: vec![steps * 4 / 5, steps * 9 / 10],
        decay_factor: 0.1,
        total_steps: steps,
        batch_size: batch,
    };
    let train_mode = if std::env::var("JOINLAB_SGDET").is_ok() {
        TaskMode::SgDet
    } else {
        TaskMode::PredCls
    };
    let mut trainer = Trainer::new(&model, opt, 202, train_mode)?;
    let c_p = mcfg.num_predicates;
    let chunk = 1500usize;
    let mut done = 0usize;
    while done < steps {
        let run = chunk.min(steps - done);
        let mut last_loss = 0.0;
        trainer.run_steps(&train, run, |log| {
            last_loss = log.relationship_loss;
        })?;
        done += run;
        let s = probe(&model, &test, &test_keys, c_p, 80)?;
        println!(
            "step {done} rel_loss {last_loss:.5} sep {:+.4} acc {:.3} canary {:.3}/{:.3}",
            s.true_mean - s.false_mean,
            s.acc,
            s.on_true,
            s.on_false
        );
    }

    let s = probe(&model, &test, &test_keys, c_p, test.len())?;
    println!(
        "mode={} preset={} jitter={} steps={}",
        match mode {
            Mode::Pure => "pure",
            Mode::Decoy => "decoy",
            Mode::Mix => "mix",
            Mode::Dual => "dual",
            Mode::Hard => "hard",
        },
        preset.name(),
        jitter,
        steps
    );
    println!(
        "true mean={:.4}  false mean={:.4}  separation={:.4}  pairwise-acc={:.3} ({} entries)",
        s.true_mean,
        s.false_mean,
        s.true_mean - s.false_mean,
        s.acc,
        s.entries
    );
    println!(
        "canary on(main,own)={:.4}  on(main,other)={:.4}",
        s.on_true, s.on_false
    );
    Ok(())
}
