//! Ad-hoc score-landscape probe for a trained run directory.
//!
//! Usage: diag <run_dir> [max_scenes]

use std::collections::BTreeSet;
use std::path::PathBuf;

use hln_cli::commands::{dataset_dir, load_model, prepare_scenes};
use hln_cli::dataset_io::read_dataset;
use hln_cli::RunConfig;
use hln_core::eval::rank_triplets;
use hln_core::scenes::{
    CAT_CART, CAT_CRATE, CAT_FLOOR, CAT_ROAD, CAT_ROBOT, CAT_TABLE, PRED_RESTING_ON,
};
use hln_core::tensor::Graph;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let run_dir = PathBuf::from(args.next().expect("run dir"));
    let max_scenes: usize = args.next().map(|s| s.parse().unwrap()).unwrap_or(12);

    let config = RunConfig::load(&run_dir.join("config.resolved.toml"))?;
    let dcfg = config.dataset_config();
    let model = load_model(&config, &run_dir)?;
    let records = read_dataset(
        &dataset_dir(&config, &run_dir).join("dataset.test"),
        dcfg.num_categories(),
        dcfg.num_predicates(),
    )?;
    let scenes = prepare_scenes(records, &dcfg)?;
    let c_p = model.config().num_predicates;
    let g = Graph::inference();

    let support_cats = [CAT_FLOOR, CAT_ROAD, CAT_TABLE, CAT_CRATE];
    let mut shown = 0usize;
    let mut true_ranks: Vec<usize> = Vec::new();
    let mut true_scores: Vec<f64> = Vec::new();
    let mut cross_scores: Vec<f64> = Vec::new();
    let mut floors: Vec<f64> = Vec::new();
    let mut gt_counts: Vec<usize> = Vec::new();
    for scene in &scenes {
        let gt_rest: Vec<(usize, usize)> = scene
            .graph
            .triplets
            .iter()
            .filter(|t| t.predicate == PRED_RESTING_ON)
            .map(|t| (t.subject, t.object))
            .collect();
        if gt_rest.is_empty() {
            continue;
        }
        let n = scene.graph.num_objects();
        let pred = model.predict(
            &g,
            &scene.inputs,
            config.task_mode()?,
            Some(&scene.graph.categories),
        )?;
        let ranked = rank_triplets(
            n,
            &pred.pair_queries,
            pred.pair_scores.data(),
            c_p,
            &pred.labels,
            &scene.inputs.boxes,
            false,
        );
        let gt_total = scene.graph.triplets.len();
        gt_counts.push(gt_total);
        let floor = if ranked.len() > 100 {
            ranked[99].score
        } else {
            0.0
        };
        floors.push(floor);
        let verbose = shown < max_scenes;
        if verbose {
            println!(
                "scene n={} gt={} slots={} floor@100={:.4}",
                n,
                gt_total,
                ranked.len(),
                floor
            );
        }
        let gt_set: BTreeSet<(usize, usize)> = gt_rest.iter().copied().collect();
        for &(s, o) in &gt_rest {
            let pos = ranked
                .iter()
                .position(|r| r.subject == s && r.object == o && r.predicate == PRED_RESTING_ON)
                .unwrap();
            true_ranks.push(pos + 1);
            true_scores.push(ranked[pos].score);
            if verbose {
                println!(
                    "  TRUE  rest({},{}) cats=({},{}) rank={} score={:.4}",
                    s,
                    o,
                    scene.graph.categories[s],
                    scene.graph.categories[o],
                    pos + 1,
                    ranked[pos].score
                );
            }
        }
        // Crossed candidates: host x support-category pairs without GT.
        for s in 0..n {
            if scene.graph.categories[s] != CAT_CART && scene.graph.categories[s] != CAT_ROBOT {
                continue;
            }
            for o in 0..n {
                if o == s
                    || !support_cats.contains(&scene.graph.categories[o])
                    || gt_set.contains(&(s, o))
                {
                    continue;
                }
                let pos = ranked
                    .iter()
                    .position(|r| {
                        r.subject == s && r.object == o && r.predicate == PRED_RESTING_ON
                    })
                    .unwrap();
                cross_scores.push(ranked[pos].score);
                if verbose {
                    let drop = scene.graph.boxes[o].y1 - scene.graph.boxes[s].y2;
                    println!(
                        "  false rest({},{}) cats=({},{}) drop={:.0} rank={} score={:.4}",
                        s,
                        o,
                        scene.graph.categories[s],
                        scene.graph.categories[o],
                        drop,
                        pos + 1,
                        ranked[pos].score
                    );
                }
            }
        }
        shown += 1;
    }
    let q = |v: &mut Vec<f64>, f: f64| -> f64 {
        v.sort_by(|a, b| a.total_cmp(b));
        if v.is_empty() {
            f64::NAN
        } else {
            v[((v.len() - 1) as f64 * f) as usize]
        }
    };
    let mut tr: Vec<f64> = true_ranks.iter().map(|&r| r as f64).collect();
    println!("\nscenes with resting_on: {}", gt_counts.len());
    println!(
        "gt-per-scene: p10={} p50={} p90={}",
        {
            let mut v: Vec<f64> = gt_counts.iter().map(|&x| x as f64).collect();
            q(&mut v, 0.1)
        },
        {
            let mut v: Vec<f64> = gt_counts.iter().map(|&x| x as f64).collect();
            q(&mut v, 0.5)
        },
        {
            let mut v: Vec<f64> = gt_counts.iter().map(|&x| x as f64).collect();
            q(&mut v, 0.9)
        }
    );
    println!(
        "true rank: p50={} p90={} p99={} max={}",
        q(&mut tr, 0.5),
        q(&mut tr, 0.9),
        q(&mut tr, 0.99),
        true_ranks.iter().max().unwrap()
    );
    println!(
        "true score: p10={:.4} p50={:.4}",
        q(&mut true_scores, 0.1),
        q(&mut true_scores, 0.5)
    );
    println!(
        "cross score: p50={:.4} p90={:.4} p99={:.4} n={}",
        q(&mut cross_scores, 0.5),
        q(&mut cross_scores, 0.9),
        q(&mut cross_scores, 0.99),
        cross_scores.len()
    );
    println!(
        "floor@100: p50={:.4} p90={:.4}",
        q(&mut floors, 0.5),
        q(&mut floors, 0.9)
    );
    Ok(())
}
