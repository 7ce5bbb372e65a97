//! Throwaway probe: ground-truth density and composition of the benchmark.

use hln_core::scenes::{generate_dataset, DatasetConfig, PRED_RESTING_ON};

fn quantile(v: &mut Vec<usize>, q: f64) -> usize {
    v.sort_unstable();
    v[(((v.len() - 1) as f64) * q) as usize]
}

fn main() {
    let cfg = DatasetConfig {
        num_scenes: 2858,
        ..DatasetConfig::default()
    };
    let scenes = generate_dataset(&cfg).unwrap();
    let mut host_totals: Vec<usize> = Vec::new();
    let mut other_totals: Vec<usize> = Vec::new();
    let mut resting_total = 0usize;
    let mut triplet_total = 0usize;
    let mut resting_scene_count = 0usize;
    for rec in &scenes {
        let t = rec.graph.triplets.len();
        let r = rec
            .graph
            .triplets
            .iter()
            .filter(|t| t.predicate == PRED_RESTING_ON)
            .count();
        triplet_total += t;
        resting_total += r;
        let has_host = rec
            .graph
            .categories
            .iter()
            .any(|&c| c == hln_core::scenes::CAT_CART || c == hln_core::scenes::CAT_ROBOT);
        if has_host {
            host_totals.push(t);
        } else {
            other_totals.push(t);
        }
        if r > 0 {
            resting_scene_count += 1;
        }
    }
    println!(
        "scenes={} host-scenes={} resting-scenes={} resting-rate={:.4}",
        scenes.len(),
        host_totals.len(),
        resting_scene_count,
        resting_total as f64 / triplet_total as f64
    );
    println!(
        "host-scene GT: p10={} p50={} p90={} max={}",
        quantile(&mut host_totals, 0.10),
        quantile(&mut host_totals, 0.50),
        quantile(&mut host_totals, 0.90),
        host_totals.last().copied().unwrap_or(0)
    );
    println!(
        "other-scene GT: p10={} p50={} p90={}",
        quantile(&mut other_totals, 0.10),
        quantile(&mut other_totals, 0.50),
        quantile(&mut other_totals, 0.90),
    );
    println!(
        "avg GT/scene={:.1} resting/scene={:.2}",
        triplet_total as f64 / scenes.len() as f64,
        resting_total as f64 / scenes.len() as f64
    );
}
