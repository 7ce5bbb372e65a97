//! Recall metric suite for scene-graph prediction.
//!
//! Evaluation turns each scene's pairwise predicate scores into a ranked
//! triplet list, matches it greedily against ground truth, and aggregates
//! recall over the split:
//!
//! - **Graph constraint**: with the constraint on, only the best-scoring
//!   predicate of each ordered pair competes; off, every `(pair, predicate)`
//!   cell does. Ties are broken by ascending `(pair flat index, predicate)`
//!   so rankings are deterministic.
//! - **Matching**: a prediction matches a ground-truth triplet when the
//!   predicate and both endpoint categories agree, and — in detection mode —
//!   both boxes overlap their ground-truth boxes at IoU ≥ 0.5, or — in
//!   predicate-classification mode — the endpoint indices are identical.
//!   Each ground-truth triplet is consumed at most once, in rank order.
//! - **R@K** is the per-image recall of the top-K list, averaged over images
//!   with at least one ground-truth triplet. **mR@K** computes the same
//!   number per predicate category (over images containing that predicate)
//!   and averages over the categories present in the split. The headline
//!   mean averages `{mR@50, mR@100, R@50, R@100}`.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::hypergraph::{pair_from_index, BoxF, SceneGraph, Triplet};
use crate::model::TaskMode;

/// Ks reported by the suite.
pub const K_GRID: [usize; 3] = [20, 50, 100];

/// IoU threshold for detection-mode matching.
pub const IOU_THRESHOLD: f64 = 0.5;

/// One ranked relationship candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletPrediction {
    pub subject: usize,
    pub object: usize,
    pub predicate: usize,
    pub score: f64,
    pub subject_category: usize,
    pub object_category: usize,
    pub subject_box: BoxF,
    pub object_box: BoxF,
}

/// Ranks a scene's predicate scores into a candidate triplet list.
///
/// `pair_queries[r]` is the flat pair id of score row `r`; `scores` is row
/// major `[len(pair_queries), num_predicates]`; `labels` and `boxes` are the
/// predicted per-object categories and boxes.
pub fn rank_triplets(
    n: usize,
    pair_queries: &[usize],
    scores: &[f64],
    num_predicates: usize,
    labels: &[usize],
    boxes: &[BoxF],
    constraint: bool,
) -> Vec<TripletPrediction> {
    debug_assert_eq!(scores.len(), pair_queries.len() * num_predicates);
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new(); // (score, pair, predicate)
    for (row, &q) in pair_queries.iter().enumerate() {
        let row_scores = &scores[row * num_predicates..(row + 1) * num_predicates];
        if constraint {
            let mut best = 0usize;
            for (p, &s) in row_scores.iter().enumerate() {
                if s > row_scores[best] {
                    best = p;
                }
            }
            candidates.push((row_scores[best], q, best));
        } else {
            for (p, &s) in row_scores.iter().enumerate() {
                candidates.push((s, q, p));
            }
        }
    }
    candidates.sort_unstable_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| a.1.cmp(&b.1))
            .then_with(|| a.2.cmp(&b.2))
    });
    candidates
        .into_iter()
        .map(|(score, q, p)| {
            let (i, j) = pair_from_index(n, q);
            TripletPrediction {
                subject: i,
                object: j,
                predicate: p,
                score,
                subject_category: labels[i],
                object_category: labels[j],
                subject_box: boxes[i],
                object_box: boxes[j],
            }
        })
        .collect()
}

/// Whether `pred` matches ground-truth triplet `t` of `graph`.
pub fn match_triplet(
    pred: &TripletPrediction,
    graph: &SceneGraph,
    t: &Triplet,
    mode: TaskMode,
    iou_thresh: f64,
) -> bool {
    if pred.predicate != t.predicate
        || pred.subject_category != graph.categories[t.subject]
        || pred.object_category != graph.categories[t.object]
    {
        return false;
    }
    match mode {
        TaskMode::PredCls => pred.subject == t.subject && pred.object == t.object,
        TaskMode::SgDet => {
            pred.subject_box.iou(&graph.boxes[t.subject]) >= iou_thresh
                && pred.object_box.iou(&graph.boxes[t.object]) >= iou_thresh
        }
    }
}

/// Greedily matches the ranked list against ground truth. Returns, for each
/// ground-truth triplet, the rank (0-based) at which it was matched, if any.
/// Each prediction consumes at most one ground-truth triplet and vice versa.
pub fn greedy_match(
    ranked: &[TripletPrediction],
    graph: &SceneGraph,
    mode: TaskMode,
    iou_thresh: f64,
) -> Vec<Option<usize>> {
    let mut matched: Vec<Option<usize>> = alloc::vec![None; graph.triplets.len()];
    for (rank, pred) in ranked.iter().enumerate() {
        for (g, t) in graph.triplets.iter().enumerate() {
            if matched[g].is_none() && match_triplet(pred, graph, t, mode, iou_thresh) {
                matched[g] = Some(rank);
                break;
            }
        }
    }
    matched
}

/// Per-scene matching outcome, sufficient to derive every recall metric.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneEvaluation {
    /// Predicate id of each ground-truth triplet.
    pub gt_predicates: Vec<usize>,
    /// Matching rank of each ground-truth triplet, if matched.
    pub matched_rank: Vec<Option<usize>>,
}

impl SceneEvaluation {
    pub fn from_ranked(
        ranked: &[TripletPrediction],
        graph: &SceneGraph,
        mode: TaskMode,
        iou_thresh: f64,
    ) -> Self {
        Self {
            gt_predicates: graph.triplets.iter().map(|t| t.predicate).collect(),
            matched_rank: greedy_match(ranked, graph, mode, iou_thresh),
        }
    }

    fn recall_within(&self, k: usize, predicate: Option<usize>) -> Option<f64> {
        let mut total = 0usize;
        let mut hit = 0usize;
        for (p, rank) in self.gt_predicates.iter().zip(self.matched_rank.iter()) {
            if predicate.is_some_and(|want| want != *p) {
                continue;
            }
            total += 1;
            if rank.is_some_and(|r| r < k) {
                hit += 1;
            }
        }
        (total > 0).then(|| hit as f64 / total as f64)
    }
}

/// Aggregated recall numbers for one constraint mode.
#[derive(Debug, Clone, PartialEq)]
pub struct RecallSummary {
    /// K → R@K (mean per-image recall over images with ground truth).
    pub recall: BTreeMap<usize, f64>,
    /// K → mR@K (mean over predicate categories present in the split).
    pub mean_recall: BTreeMap<usize, f64>,
    /// Per-predicate R@100; `None` when the predicate has no ground truth
    /// in the split.
    pub per_predicate_at_100: Vec<Option<f64>>,
}

impl RecallSummary {
    /// Headline mean: arithmetic mean of mR@50, mR@100, R@50, R@100.
    pub fn headline_mean(&self) -> f64 {
        (self.mean_recall[&50] + self.mean_recall[&100] + self.recall[&50] + self.recall[&100])
            / 4.0
    }
}

/// Reduces per-scene outcomes into the recall suite for one constraint
/// mode. Images without ground truth are excluded from every average.
pub fn summarize(scenes: &[SceneEvaluation], num_predicates: usize, ks: &[usize]) -> RecallSummary {
    let mut recall = BTreeMap::new();
    let mut mean_recall = BTreeMap::new();
    for &k in ks {
        let per_image: Vec<f64> = scenes
            .iter()
            .filter_map(|s| s.recall_within(k, None))
            .collect();
        let r = if per_image.is_empty() {
            0.0
        } else {
            per_image.iter().sum::<f64>() / per_image.len() as f64
        };
        recall.insert(k, r);

        let mut present = 0usize;
        let mut acc = 0.0;
        for p in 0..num_predicates {
            let per_image: Vec<f64> = scenes
                .iter()
                .filter_map(|s| s.recall_within(k, Some(p)))
                .collect();
            if !per_image.is_empty() {
                present += 1;
                acc += per_image.iter().sum::<f64>() / per_image.len() as f64;
            }
        }
        mean_recall.insert(k, if present == 0 { 0.0 } else { acc / present as f64 });
    }
    let per_predicate_at_100 = (0..num_predicates)
        .map(|p| {
            let per_image: Vec<f64> = scenes
                .iter()
                .filter_map(|s| s.recall_within(100, Some(p)))
                .collect();
            (!per_image.is_empty())
                .then(|| per_image.iter().sum::<f64>() / per_image.len() as f64)
        })
        .collect();
    RecallSummary {
        recall,
        mean_recall,
        per_predicate_at_100,
    }
}

/// The full metric suite over a split: both constraint modes plus the
/// per-predicate view ordered by training-split predicate frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub with_constraint: RecallSummary,
    pub without_constraint: RecallSummary,
    /// Predicate ids sorted by descending training-split frequency (ties by
    /// ascending id), the display order of the per-predicate vector.
    pub predicate_frequency_order: Vec<usize>,
}

impl MetricsReport {
    pub fn build(
        with_constraint: RecallSummary,
        without_constraint: RecallSummary,
        train_predicate_counts: &[u64],
    ) -> Self {
        let mut order: Vec<usize> = (0..train_predicate_counts.len()).collect();
        order.sort_by_key(|&p| (core::cmp::Reverse(train_predicate_counts[p]), p));
        Self {
            with_constraint,
            without_constraint,
            predicate_frequency_order: order,
        }
    }
}

/// Ground-truth predicate counts over a collection of scenes (the training
/// split), used for the frequency ordering of per-predicate reports.
pub fn predicate_counts<'a, I>(scenes: I, num_predicates: usize) -> Vec<u64>
where
    I: IntoIterator<Item = &'a SceneGraph>,
{
    let mut counts = alloc::vec![0u64; num_predicates];
    for graph in scenes {
        for t in &graph.triplets {
            counts[t.predicate] += 1;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;
    use alloc::vec;

    fn unit_box(k: usize) -> BoxF {
        let off = 10.0 * k as f64;
        BoxF {
            x1: off,
            y1: off,
            x2: off + 5.0,
            y2: off + 5.0,
        }
    }

    fn simple_graph(n: usize, categories: Vec<usize>, triplets: Vec<Triplet>) -> SceneGraph {
        SceneGraph {
            width: 100.0,
            height: 100.0,
            boxes: (0..n).map(unit_box).collect(),
            categories,
            triplets,
        }
    }

    #[test]
    fn constraint_keeps_top_predicate_per_pair() {
        let labels = vec![1, 2];
        let boxes = vec![unit_box(0), unit_box(1)];
        let scores = vec![0.2, 0.9, 0.4]; // one pair, three predicates
        let on = rank_triplets(2, &[1], &scores, 3, &labels, &boxes, true);
        assert_eq!(on.len(), 1);
        assert_eq!((on[0].predicate, on[0].score), (1, 0.9));
        let off = rank_triplets(2, &[1], &scores, 3, &labels, &boxes, false);
        assert_eq!(off.len(), 3);
        assert_eq!(
            off.iter().map(|t| t.predicate).collect::<Vec<_>>(),
            vec![1, 2, 0]
        );
    }

    #[test]
    fn ranking_breaks_ties_by_pair_then_predicate() {
        let labels = vec![1, 2, 3];
        let boxes = vec![unit_box(0), unit_box(1), unit_box(2)];
        // Two pairs, two predicates, all scores equal.
        let scores = vec![0.5; 4];
        let ranked = rank_triplets(3, &[5, 1], &scores, 2, &labels, &boxes, false);
        let order: Vec<(usize, usize, usize)> = ranked
            .iter()
            .map(|t| (t.subject, t.object, t.predicate))
            .collect();
        // Flat pair 1 = (0,1) precedes flat pair 5 = (1,2).
        assert_eq!(
            order,
            vec![(0, 1, 0), (0, 1, 1), (1, 2, 0), (1, 2, 1)]
        );
    }

    #[test]
    fn hand_scores_sort_descending() {
        let labels = vec![1, 2, 3];
        let boxes = vec![unit_box(0), unit_box(1), unit_box(2)];
        let scores = vec![0.1, 0.8, 0.95, 0.3];
        let ranked = rank_triplets(3, &[1, 5], &scores, 2, &labels, &boxes, false);
        let got: Vec<f64> = ranked.iter().map(|t| t.score).collect();
        assert_eq!(got, vec![0.95, 0.8, 0.3, 0.1]);
    }

    #[test]
    fn constrained_list_is_subset_of_unconstrained() {
        let labels = vec![1, 2, 3, 4];
        let boxes = (0..4).map(unit_box).collect::<Vec<_>>();
        let queries = vec![1, 2, 6, 11];
        let scores: Vec<f64> = (0..queries.len() * 3)
            .map(|i| (i as f64 * 0.37).sin().abs())
            .collect();
        let on = rank_triplets(4, &queries, &scores, 3, &labels, &boxes, true);
        let off = rank_triplets(4, &queries, &scores, 3, &labels, &boxes, false);
        let off_set: BTreeSet<(usize, usize, usize)> = off
            .iter()
            .map(|t| (t.subject, t.object, t.predicate))
            .collect();
        for t in &on {
            assert!(off_set.contains(&(t.subject, t.object, t.predicate)));
        }
    }

    #[test]
    fn precls_matching_requires_index_equality() {
        let graph = simple_graph(3, vec![1, 2, 3], vec![Triplet::new(0, 1, 2)]);
        let mut pred = TripletPrediction {
            subject: 0,
            object: 2,
            predicate: 1,
            score: 0.9,
            subject_category: 1,
            object_category: 3,
            subject_box: unit_box(0),
            object_box: unit_box(2),
        };
        assert!(match_triplet(&pred, &graph, &graph.triplets[0], TaskMode::PredCls, 0.5));
        pred.subject = 1;
        pred.subject_category = 2;
        assert!(!match_triplet(&pred, &graph, &graph.triplets[0], TaskMode::PredCls, 0.5));
    }

    #[test]
    fn sgdet_matching_requires_iou() {
        let mut graph = simple_graph(2, vec![1, 2], vec![Triplet::new(0, 0, 1)]);
        graph.boxes = vec![
            BoxF { x1: 0.0, y1: 0.0, x2: 2.0, y2: 2.0 },
            BoxF { x1: 10.0, y1: 10.0, x2: 12.0, y2: 12.0 },
        ];
        let pred = |sb: BoxF| TripletPrediction {
            subject: 0,
            object: 1,
            predicate: 0,
            score: 0.5,
            subject_category: 1,
            object_category: 2,
            subject_box: sb,
            object_box: graph.boxes[1],
        };
        // Identical boxes pass.
        assert!(match_triplet(
            &pred(graph.boxes[0]),
            &graph,
            &graph.triplets[0],
            TaskMode::SgDet,
            0.5
        ));
        // Shifted box with IoU 1/7 fails.
        let shifted = BoxF { x1: 1.0, y1: 1.0, x2: 3.0, y2: 3.0 };
        assert!((graph.boxes[0].iou(&shifted) - 1.0 / 7.0).abs() < 1e-12);
        assert!(!match_triplet(
            &pred(shifted),
            &graph,
            &graph.triplets[0],
            TaskMode::SgDet,
            0.5
        ));
    }

    #[test]
    fn greedy_matching_consumes_each_gt_once() {
        // Two identical gt triplets; two identical predictions: both gts
        // must be matched, at ranks 0 and 1.
        let graph = simple_graph(
            2,
            vec![1, 1],
            vec![Triplet::new(0, 0, 1), Triplet::new(1, 0, 0)],
        );
        // Make both objects share category and box so predictions are
        // interchangeable under sgdet.
        let mut graph = graph;
        graph.boxes[1] = graph.boxes[0];
        let p = TripletPrediction {
            subject: 0,
            object: 1,
            predicate: 0,
            score: 0.9,
            subject_category: 1,
            object_category: 1,
            subject_box: graph.boxes[0],
            object_box: graph.boxes[0],
        };
        let ranked = vec![p.clone(), p];
        let matched = greedy_match(&ranked, &graph, TaskMode::SgDet, 0.5);
        assert_eq!(matched, vec![Some(0), Some(1)]);
    }

    #[test]
    fn recall_per_image_and_k_monotonicity() {
        let graph = simple_graph(
            3,
            vec![1, 2, 3],
            vec![Triplet::new(0, 0, 1), Triplet::new(1, 1, 2)],
        );
        // Rank 0 matches gt 0; nothing else matches.
        let ranked = vec![TripletPrediction {
            subject: 0,
            object: 1,
            predicate: 0,
            score: 1.0,
            subject_category: 1,
            object_category: 2,
            subject_box: graph.boxes[0],
            object_box: graph.boxes[1],
        }];
        let eval = SceneEvaluation::from_ranked(&ranked, &graph, TaskMode::PredCls, 0.5);
        let summary = summarize(&[eval.clone()], 3, &[1, 20, 50, 100]);
        assert_eq!(summary.recall[&1], 0.5);
        assert_eq!(summary.recall[&100], 0.5);
        for (k1, k2) in [(1, 20), (20, 50), (50, 100)] {
            assert!(summary.recall[&k1] <= summary.recall[&k2]);
            assert!(summary.mean_recall[&k1] <= summary.mean_recall[&k2]);
        }
        // Per-predicate: predicate 0 matched (1.0), predicate 1 missed
        // (0.0), predicate 2 absent.
        assert_eq!(summary.per_predicate_at_100, vec![Some(1.0), Some(0.0), None]);
        assert_eq!(summary.mean_recall[&100], 0.5);
    }

    #[test]
    fn zero_gt_images_are_skipped() {
        let empty = SceneEvaluation {
            gt_predicates: vec![],
            matched_rank: vec![],
        };
        let full = SceneEvaluation {
            gt_predicates: vec![0],
            matched_rank: vec![Some(0)],
        };
        let summary = summarize(&[empty, full], 2, &[50]);
        assert_eq!(summary.recall[&50], 1.0);
    }

    #[test]
    fn empty_prediction_list_scores_zero() {
        let graph = simple_graph(2, vec![1, 2], vec![Triplet::new(0, 0, 1)]);
        let eval = SceneEvaluation::from_ranked(&[], &graph, TaskMode::PredCls, 0.5);
        let summary = summarize(&[eval], 2, &[50]);
        assert_eq!(summary.recall[&50], 0.0);
    }

    #[test]
    fn metrics_are_invariant_under_object_reindexing() {
        // Relabel objects with a permutation applied to both predictions
        // and ground truth; every metric must be unchanged.
        let graph = simple_graph(
            4,
            vec![2, 1, 3, 1],
            vec![Triplet::new(0, 0, 1), Triplet::new(2, 1, 3), Triplet::new(1, 2, 0)],
        );
        let labels = graph.categories.clone();
        let boxes = graph.boxes.clone();
        let queries: Vec<usize> = crate::hypergraph::ordered_pairs(4)
            .into_iter()
            .map(|(i, j)| crate::hypergraph::pair_index(4, i, j))
            .collect();
        let scores: Vec<f64> = (0..queries.len() * 3)
            .map(|i| ((i * 7 % 13) as f64) / 13.0)
            .collect();

        let perm = [2usize, 0, 3, 1]; // new position r holds old object perm[r]
        let mut inv = [0usize; 4];
        for (r, &o) in perm.iter().enumerate() {
            inv[o] = r;
        }
        let permuted_graph = SceneGraph {
            width: graph.width,
            height: graph.height,
            boxes: perm.iter().map(|&o| graph.boxes[o]).collect(),
            categories: perm.iter().map(|&o| graph.categories[o]).collect(),
            triplets: graph
                .triplets
                .iter()
                .map(|t| Triplet::new(inv[t.subject], t.predicate, inv[t.object]))
                .collect(),
        };
        let permuted_labels: Vec<usize> = perm.iter().map(|&o| labels[o]).collect();
        let permuted_boxes: Vec<BoxF> = perm.iter().map(|&o| boxes[o]).collect();
        // Scores for the permuted scene: look up the original pair.
        let lookup: BTreeMap<usize, usize> =
            queries.iter().enumerate().map(|(r, &q)| (q, r)).collect();
        let permuted_scores: Vec<f64> = queries
            .iter()
            .flat_map(|&q| {
                let (i, j) = pair_from_index(4, q);
                let orig = lookup[&crate::hypergraph::pair_index(4, perm[i], perm[j])];
                scores[orig * 3..(orig + 1) * 3].to_vec()
            })
            .collect();

        for mode in [TaskMode::SgDet, TaskMode::PredCls] {
            for constraint in [true, false] {
                let a = SceneEvaluation::from_ranked(
                    &rank_triplets(4, &queries, &scores, 3, &labels, &boxes, constraint),
                    &graph,
                    mode,
                    0.5,
                );
                let b = SceneEvaluation::from_ranked(
                    &rank_triplets(
                        4,
                        &queries,
                        &permuted_scores,
                        3,
                        &permuted_labels,
                        &permuted_boxes,
                        constraint,
                    ),
                    &permuted_graph,
                    mode,
                    0.5,
                );
                let sa = summarize(&[a], 3, &K_GRID);
                let sb = summarize(&[b], 3, &K_GRID);
                assert_eq!(sa.recall, sb.recall);
                assert_eq!(sa.mean_recall, sb.mean_recall);
                assert_eq!(sa.per_predicate_at_100, sb.per_predicate_at_100);
            }
        }
    }

    #[test]
    fn report_orders_predicates_by_training_frequency() {
        let summary = RecallSummary {
            recall: BTreeMap::from([(20, 0.2), (50, 0.4), (100, 0.6)]),
            mean_recall: BTreeMap::from([(20, 0.1), (50, 0.2), (100, 0.3)]),
            per_predicate_at_100: vec![Some(0.5), None, Some(0.25)],
        };
        let report = MetricsReport::build(summary.clone(), summary.clone(), &[5, 9, 5]);
        assert_eq!(report.predicate_frequency_order, vec![1, 0, 2]);
        assert!((report.with_constraint.headline_mean() - (0.2 + 0.3 + 0.4 + 0.6) / 4.0).abs() < 1e-15);
    }

    #[test]
    fn predicate_counts_accumulate_over_scenes() {
        let g1 = simple_graph(2, vec![1, 2], vec![Triplet::new(0, 0, 1)]);
        let g2 = simple_graph(
            2,
            vec![1, 2],
            vec![Triplet::new(0, 0, 1), Triplet::new(1, 2, 0)],
        );
        assert_eq!(predicate_counts([&g1, &g2], 3), vec![2, 0, 1]);
    }
}
