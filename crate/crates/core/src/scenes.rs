//! Deterministic synthetic scene benchmark.
//!
//! Scenes are built on a 2-D canvas with image-style coordinates (`y` grows
//! downward). Each scene has a full-width ground surface and free objects;
//! the largest scenes carry a *support group*: two full-width slabs standing
//! on the surface with clearly different tops, two hosts (carts or robots)
//! hanging side by side high above both slabs, two attached parts per host
//! (wheels or legs), and one loose part that belongs to no host.
//!
//! Each host's parts reach down toward the slabs: the main part touches the
//! host's own slab (or hovers well short of it), the decoy part reaches
//! toward the other slab and sometimes touches that one too. Which slab is
//! "own" is an independent coin flip, so the (host, slab) pair geometry
//! carries no information about the `resting_on` label: both candidate drops
//! are drawn from one distribution and the decision lives entirely in the
//! parts. Because both hosts share both slabs and a loose part may also
//! touch either slab, "some part touches this slab" is not a resting signal
//! either — a model must bind each touching part to its owner (parts tuck
//! into their host's bottom edge and sit inside its horizontal span) and
//! join that with the part-slab contact. That is exactly the transitive
//! inference `resting_on(A, C) ⟺ ∃B: part_of(B, A) ∧ on(B, C)` the
//! hyper-relationship attention stage is designed to capture.
//!
//! Every discriminative contrast is placed at a scale a small network can
//! resolve (tens of pixels, never single digits), and ground-truth density
//! in support scenes is tuned (via the left/right beside-band) so that a
//! model which merely broadcasts a plausible `resting_on` score over all
//! (host, slab) candidates cannot keep them inside the 100-rank budget.
//!
//! Geometric predicates are a pure function of the boxes, so ground truth is
//! re-derivable; `part_of` is structural (decided at generation time) and is
//! stored in the triplet list. The simulated detector replaces an object
//! detection network: it emits exactly one proposal per ground-truth object,
//! with jittered boxes, noisy label distributions `softmax(onehot/τ + ε)`,
//! and visual features that are a fixed random projection of the category
//! one-hot plus Gaussian noise. Everything is reproducible from seeds alone;
//! the embedding table and the detector outputs are regenerated on demand
//! and never stored.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::hypergraph::{pair_index, BoxF, SceneGraph, Triplet};
use crate::rng::{stream_rng, DOMAIN_DETECTOR, DOMAIN_EMBEDDING_TABLE, DOMAIN_SCENE};

/// Object category vocabulary (ids are 1-based; 0 is the background column).
pub const CATEGORY_NAMES: [&str; 10] = [
    "floor", "road", "table", "cart", "robot", "wheel", "leg", "crate", "ball", "lamp",
];

/// Predicate vocabulary (ids are 1-based).
pub const PREDICATE_NAMES: [&str; 8] = [
    "on", "above", "left_of", "right_of", "inside", "part_of", "supports", "resting_on",
];

pub const CAT_FLOOR: usize = 1;
pub const CAT_ROAD: usize = 2;
pub const CAT_TABLE: usize = 3;
pub const CAT_CART: usize = 4;
pub const CAT_ROBOT: usize = 5;
pub const CAT_WHEEL: usize = 6;
pub const CAT_LEG: usize = 7;
pub const CAT_CRATE: usize = 8;
pub const CAT_BALL: usize = 9;
pub const CAT_LAMP: usize = 10;

pub const PRED_ON: usize = 0;
pub const PRED_ABOVE: usize = 1;
pub const PRED_LEFT_OF: usize = 2;
pub const PRED_RIGHT_OF: usize = 3;
pub const PRED_INSIDE: usize = 4;
pub const PRED_PART_OF: usize = 5;
pub const PRED_SUPPORTS: usize = 6;
pub const PRED_RESTING_ON: usize = 7;

/// Vertical tolerance (in canvas units) for the `on` contact rule.
pub const ON_TOLERANCE: f64 = 6.0;

/// Horizontal margin for `left_of`/`right_of`: box centers must differ by
/// more than this many pixels before either label fires.
pub const LR_MARGIN: f64 = 12.0;

/// Vertical band for `left_of`/`right_of`: the labels only relate objects at
/// comparable heights (centers within this many pixels), i.e. genuinely
/// "beside" each other rather than stacked.
pub const LR_BAND: f64 = 320.0;

/// Hovering objects stop this far short of the surface they fail to touch —
/// far outside `ON_TOLERANCE`, so contact versus hover is resolvable.
const HOVER_LO: f64 = 55.0;
const HOVER_HI: f64 = 95.0;

/// Minimum horizontal footprint an object needs for placement; bounds how
/// many objects a canvas row can hold.
const MIN_SLOT_WIDTH: f64 = 80.0;

/// Errors raised by dataset configuration or generation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SceneError {
    #[error("invalid dataset config: {details}")]
    InvalidConfig { details: String },
}

/// Generation parameters for the synthetic benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub seed: u64,
    pub num_scenes: usize,
    pub objects_min: usize,
    pub objects_max: usize,
    pub canvas_width: f64,
    pub canvas_height: f64,
    /// Detector visual-noise standard deviation.
    pub sigma_v: f64,
    /// Detector label-probability temperature; smaller is sharper.
    pub tau: f64,
    /// Detector box jitter as a fraction of the canvas side (≤ 0.02 so that
    /// IoU-0.5 matching stays unambiguous).
    pub jitter_frac: f64,
    /// Detector visual feature dimension.
    pub visual_dim: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            num_scenes: 2000,
            objects_min: 4,
            objects_max: 10,
            canvas_width: 1000.0,
            canvas_height: 1000.0,
            sigma_v: 0.3,
            tau: 0.25,
            jitter_frac: 0.0035,
            visual_dim: 64,
        }
    }
}

impl DatasetConfig {
    pub fn num_categories(&self) -> usize {
        CATEGORY_NAMES.len()
    }

    pub fn num_predicates(&self) -> usize {
        PREDICATE_NAMES.len()
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let fail = |details: String| Err(SceneError::InvalidConfig { details });
        if self.num_scenes == 0 {
            return fail(String::from("num_scenes must be at least 1"));
        }
        if self.objects_min < 2 {
            return fail(String::from("objects_min must be at least 2"));
        }
        if self.objects_max < self.objects_min {
            return fail(alloc::format!(
                "objects_max {} is below objects_min {}",
                self.objects_max,
                self.objects_min
            ));
        }
        if !(self.canvas_width.is_finite() && self.canvas_height.is_finite())
            || self.canvas_width < 200.0
            || self.canvas_height < 200.0
        {
            return fail(String::from("canvas must be at least 200x200"));
        }
        let capacity = (self.canvas_width / MIN_SLOT_WIDTH) as usize;
        if self.objects_max > capacity {
            return fail(alloc::format!(
                "objects_max {} exceeds canvas capacity {} (width {} / slot {})",
                self.objects_max,
                capacity,
                self.canvas_width,
                MIN_SLOT_WIDTH
            ));
        }
        if !(self.sigma_v.is_finite() && self.sigma_v >= 0.0) {
            return fail(String::from("sigma_v must be finite and non-negative"));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return fail(String::from("tau must be finite and positive"));
        }
        if !(self.jitter_frac.is_finite() && (0.0..=0.02).contains(&self.jitter_frac)) {
            return fail(String::from("jitter_frac must lie in [0, 0.02]"));
        }
        if self.visual_dim == 0 {
            return fail(String::from("visual_dim must be at least 1"));
        }
        Ok(())
    }
}

/// A generated scene with its stable global index. The index keys the
/// per-scene detector noise stream, so detections are identical no matter
/// which split the scene lands in or how often it is reloaded.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneRecord {
    pub id: u64,
    pub graph: SceneGraph,
}

/// Train/val/test partition sizes: 70% / 5% / remainder by scene index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

pub fn split_sizes(total: usize) -> SplitSizes {
    let train = total * 70 / 100;
    let val = total * 5 / 100;
    SplitSizes {
        train,
        val,
        test: total - train - val,
    }
}

/// Simulated detector output for one scene: one proposal per object.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    /// Jittered boxes, one per object.
    pub boxes: Vec<BoxF>,
    /// Row-major `[n, num_categories + 1]` label distributions.
    pub label_probs: Vec<f64>,
    /// Row-major `[n, visual_dim]` visual features.
    pub visual: Vec<f64>,
}

// ---------------------------------------------------------------------------
// Geometric labeling rules
// ---------------------------------------------------------------------------

fn overlap_1d(a_lo: f64, a_hi: f64, b_lo: f64, b_hi: f64) -> f64 {
    (a_hi.min(b_hi) - a_lo.max(b_lo)).max(0.0)
}

fn on_rule(a: &BoxF, b: &BoxF) -> bool {
    let contact = (a.y2 - b.y1).abs() <= ON_TOLERANCE;
    let overlap = overlap_1d(a.x1, a.x2, b.x1, b.x2);
    contact && overlap >= 0.5 * a.width().min(b.width())
}

fn above_rule(a: &BoxF, b: &BoxF) -> bool {
    a.y2 < b.y1 && overlap_1d(a.x1, a.x2, b.x1, b.x2) > 0.0
}

fn left_of_rule(a: &BoxF, b: &BoxF) -> bool {
    let beside = (0.5 * (a.y1 + a.y2) - 0.5 * (b.y1 + b.y2)).abs() <= LR_BAND;
    beside && 0.5 * (a.x1 + a.x2) + LR_MARGIN < 0.5 * (b.x1 + b.x2)
}

fn inside_rule(a: &BoxF, b: &BoxF) -> bool {
    a.x1 > b.x1 && a.y1 > b.y1 && a.x2 < b.x2 && a.y2 < b.y2
}

/// Derives the full triplet set from boxes plus the structural `part_of`
/// links, in canonical order (ascending pair flat index, then predicate id).
/// Geometric predicates come from the box rules; `supports` inverts `on`;
/// `resting_on(host, c)` fires iff one of the host's parts is `on` c.
pub fn derive_triplets(boxes: &[BoxF], part_of: &[(usize, usize)]) -> Vec<Triplet> {
    let n = boxes.len();
    let mut triplets: Vec<Triplet> = Vec::new();
    let mut push = |s: usize, p: usize, o: usize| {
        triplets.push(Triplet {
            subject: s,
            predicate: p,
            object: o,
        });
    };
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (a, b) = (&boxes[i], &boxes[j]);
            if on_rule(a, b) {
                push(i, PRED_ON, j);
                push(j, PRED_SUPPORTS, i);
            }
            if above_rule(a, b) {
                push(i, PRED_ABOVE, j);
            }
            if left_of_rule(a, b) {
                push(i, PRED_LEFT_OF, j);
            }
            if left_of_rule(b, a) {
                push(i, PRED_RIGHT_OF, j);
            }
            if inside_rule(a, b) {
                push(i, PRED_INSIDE, j);
            }
        }
    }
    for &(part, host) in part_of {
        push(part, PRED_PART_OF, host);
        for c in 0..n {
            if c != part && c != host && on_rule(&boxes[part], &boxes[c]) {
                push(host, PRED_RESTING_ON, c);
            }
        }
    }
    triplets.sort_unstable_by_key(|t| (pair_index(n, t.subject, t.object), t.predicate));
    triplets.dedup();
    triplets
}

// ---------------------------------------------------------------------------
// Scene generation
// ---------------------------------------------------------------------------

struct Placed {
    cat: usize,
    b: BoxF,
}

fn clamp_box(b: BoxF, w: f64, h: f64) -> BoxF {
    let x1 = b.x1.clamp(0.0, w - 2.0);
    let y1 = b.y1.clamp(0.0, h - 2.0);
    BoxF {
        x1,
        y1,
        x2: b.x2.clamp(x1 + 1.0, w),
        y2: b.y2.clamp(y1 + 1.0, h),
    }
}

/// Generates one scene. `rng` must be the stream for this scene's id.
pub fn generate_scene(rng: &mut ChaCha12Rng, config: &DatasetConfig) -> SceneGraph {
    let (w, h) = (config.canvas_width, config.canvas_height);
    // Objects per scene: a bit over half the scenes are crowded to the
    // configured maximum (support groups need the full budget); the rest
    // take the larger of two uniform draws, covering the whole range.
    let n = if rng.random_bool(0.55) {
        config.objects_max
    } else {
        rng.random_range(config.objects_min..=config.objects_max)
            .max(rng.random_range(config.objects_min..=config.objects_max))
    };

    let mut objects: Vec<Placed> = Vec::with_capacity(n);
    let mut part_of: Vec<(usize, usize)> = Vec::new();

    // Ground surface: full width, near the bottom of the canvas. Its top
    // varies scene to scene so absolute heights carry little information.
    let surface_cat = if rng.random_bool(0.5) {
        CAT_FLOOR
    } else {
        CAT_ROAD
    };
    let surface_top = rng.random_range(0.78..0.92) * h;
    objects.push(Placed {
        cat: surface_cat,
        b: BoxF {
            x1: 0.0,
            y1: surface_top,
            x2: w,
            y2: h,
        },
    });
    let mut budget = n - 1;

    // Support group: two full-width slabs standing on the surface with tops
    // far enough apart to resolve, two hosts hanging side by side above both
    // slabs, two parts per host, and one loose part. Which slab carries a
    // host is an independent coin, so (host, slab) pair geometry is
    // uninformative; both hosts and the loose part share the slabs, so slab
    // -side "some part touches me" summaries are uninformative too. Only
    // binding a touching part to its owner (tuck + horizontal containment)
    // resolves the resting_on label.
    if budget >= 9 && rng.random_bool(0.95) {
        let block_w = rng.random_range(0.40..0.55) * w;
        let block_x = rng.random_range(0.02..0.40) * (w - block_w);

        // Slab tops, 80-130 px apart, both well below the hosts.
        let depth_hi = rng.random_range(190.0..320.0);
        let dt = rng.random_range(80.0..130.0);
        let tops = [surface_top - depth_hi, surface_top - depth_hi + dt];
        for &top in &tops {
            let cat = if rng.random_bool(0.5) {
                CAT_CRATE
            } else {
                CAT_TABLE
            };
            objects.push(Placed {
                cat,
                b: clamp_box(
                    BoxF {
                        x1: block_x - rng.random_range(0.0..0.02) * block_w,
                        y1: top,
                        x2: block_x + block_w + rng.random_range(0.0..0.02) * block_w,
                        y2: surface_top + rng.random_range(0.0..3.0),
                    },
                    w,
                    h,
                ),
            });
        }

        // Hosts: one elevation band, separated horizontal spans.
        let wa = rng.random_range(0.28..0.38) * block_w;
        let wb = rng.random_range(0.28..0.38) * block_w;
        let xa = block_x + rng.random_range(0.01..0.04) * block_w;
        let xb = block_x + block_w - rng.random_range(0.01..0.04) * block_w - wb;
        for &(host_x, host_w) in &[(xa, wa), (xb, wb)] {
            let host_cat = if rng.random_bool(0.5) {
                CAT_CART
            } else {
                CAT_ROBOT
            };
            let part_cat = if host_cat == CAT_CART {
                CAT_WHEEL
            } else {
                CAT_LEG
            };
            let host_y2 = tops[0] - rng.random_range(110.0..180.0);
            let host_index = objects.len();
            objects.push(Placed {
                cat: host_cat,
                b: clamp_box(
                    BoxF {
                        x1: host_x,
                        y1: host_y2 - rng.random_range(40.0..90.0),
                        x2: host_x + host_w,
                        y2: host_y2,
                    },
                    w,
                    h,
                ),
            });

            let own = rng.random_range(0..2usize);
            let grounded = rng.random_bool(0.8);
            let decoy_touches = rng.random_bool(0.45);
            for (target_top, touches) in [
                (tops[own], grounded),
                (tops[1 - own], decoy_touches),
            ] {
                let part_w = rng.random_range(22.0..40.0);
                let x1 = host_x + rng.random_range(0.05..0.95) * (host_w - part_w);
                // Parts tuck into the host body from below, strictly past
                // the contact tolerance so host and part are never `on`
                // each other.
                let attach = rng.random_range(7.0..16.0);
                let bottom = if touches {
                    target_top + rng.random_range(-2.0..2.0)
                } else {
                    target_top - rng.random_range(HOVER_LO..HOVER_HI)
                };
                part_of.push((objects.len(), host_index));
                objects.push(Placed {
                    cat: part_cat,
                    b: clamp_box(
                        BoxF {
                            x1,
                            y1: host_y2 - attach,
                            x2: x1 + part_w,
                            y2: bottom,
                        },
                        w,
                        h,
                    ),
                });
            }
        }

        // Loose part: same category family, lies on or hovers over a slab,
        // belongs to no host.
        {
            let part_w = rng.random_range(22.0..40.0);
            let x1 = block_x + rng.random_range(0.0..(block_w - part_w));
            let target_top = tops[rng.random_range(0..2usize)];
            let bottom = if rng.random_bool(0.5) {
                target_top + rng.random_range(-2.0..2.0)
            } else {
                target_top - rng.random_range(HOVER_LO..HOVER_HI)
            };
            objects.push(Placed {
                cat: if rng.random_bool(0.5) {
                    CAT_WHEEL
                } else {
                    CAT_LEG
                },
                b: clamp_box(
                    BoxF {
                        x1,
                        y1: bottom - rng.random_range(25.0..45.0),
                        x2: x1 + part_w,
                        y2: bottom,
                    },
                    w,
                    h,
                ),
            });
        }
        budget -= 9;
    }

    // Free objects: crates, balls and lamps resting on, hovering over, or
    // floating high above the surface; an occasional large crate gets a
    // ball inside it. Hover offsets are far outside the contact tolerance,
    // so every placement is resolvable.
    while budget > 0 {
        if budget >= 2 && rng.random_bool(0.2) {
            let cw = rng.random_range(130.0..190.0);
            let ch = rng.random_range(130.0..190.0);
            let x1 = rng.random_range(0.0..(w - cw));
            let bottom = surface_top + rng.random_range(-3.0..3.0);
            let cb = clamp_box(
                BoxF {
                    x1,
                    y1: bottom - ch,
                    x2: x1 + cw,
                    y2: bottom,
                },
                w,
                h,
            );
            objects.push(Placed {
                cat: CAT_CRATE,
                b: cb,
            });
            let margin = 18.0;
            let bw = rng.random_range(30.0..(cw - 2.0 * margin - 10.0).max(31.0));
            let bh = rng.random_range(30.0..(ch - 2.0 * margin - 10.0).max(31.0));
            let bx = cb.x1 + rng.random_range(margin..(cw - bw - margin).max(margin + 1.0));
            let by = cb.y1 + rng.random_range(margin..(ch - bh - margin).max(margin + 1.0));
            objects.push(Placed {
                cat: CAT_BALL,
                b: BoxF {
                    x1: bx,
                    y1: by,
                    x2: bx + bw,
                    y2: by + bh,
                },
            });
            budget -= 2;
            continue;
        }
        let cat = match rng.random_range(0..3u32) {
            0 => CAT_CRATE,
            1 => CAT_BALL,
            _ => CAT_LAMP,
        };
        let ow = rng.random_range(40.0..110.0);
        let oh = rng.random_range(40.0..110.0);
        let mode = rng.random_range(0..100u32);
        let (x1, bottom) = if mode < 50 {
            // Resting on the surface.
            (
                rng.random_range(0.0..(w - ow)),
                surface_top + rng.random_range(-3.0..3.0),
            )
        } else if mode < 75 {
            // Hovering just short of contact, at a resolvable offset.
            (
                rng.random_range(0.0..(w - ow)),
                surface_top - rng.random_range(HOVER_LO..HOVER_HI),
            )
        } else {
            // Airborne.
            (
                rng.random_range(0.0..(w - ow)),
                surface_top - rng.random_range(150.0..450.0),
            )
        };
        objects.push(Placed {
            cat,
            b: clamp_box(
                BoxF {
                    x1,
                    y1: bottom - oh,
                    x2: x1 + ow,
                    y2: bottom,
                },
                w,
                h,
            ),
        });
        budget -= 1;
    }

    let boxes: Vec<BoxF> = objects.iter().map(|p| p.b).collect();
    let categories: Vec<usize> = objects.iter().map(|p| p.cat).collect();
    let triplets = derive_triplets(&boxes, &part_of);
    SceneGraph {
        width: w,
        height: h,
        boxes,
        categories,
        triplets,
    }
}

/// Generates the whole dataset; scene `i` uses its own rng stream, so
/// generation is order-independent and reproducible per scene.
pub fn generate_dataset(config: &DatasetConfig) -> Result<Vec<SceneRecord>, SceneError> {
    config.validate()?;
    let mut scenes = Vec::with_capacity(config.num_scenes);
    for id in 0..config.num_scenes as u64 {
        let mut rng = stream_rng(config.seed, DOMAIN_SCENE, id);
        scenes.push(SceneRecord {
            id,
            graph: generate_scene(&mut rng, config),
        });
    }
    Ok(scenes)
}

// ---------------------------------------------------------------------------
// Simulated detector
// ---------------------------------------------------------------------------

/// Fixed random projection of category one-hots used for visual prototypes:
/// `[visual_dim, num_categories + 1]` column-major by category, each column
/// unit-norm. Regenerated from the dataset seed (detector stream 0).
pub fn detector_projection(dataset_seed: u64, visual_dim: usize) -> Vec<f64> {
    let mut rng = stream_rng(dataset_seed, DOMAIN_DETECTOR, 0);
    let cols = CATEGORY_NAMES.len() + 1;
    let mut proj = vec![0.0; visual_dim * cols];
    for c in 0..cols {
        let mut norm_sq = 0.0;
        for r in 0..visual_dim {
            let z: f64 = rng.sample(StandardNormal);
            proj[r * cols + c] = z;
            norm_sq += z * z;
        }
        let norm = libm::sqrt(norm_sq).max(1e-12);
        for r in 0..visual_dim {
            proj[r * cols + c] /= norm;
        }
    }
    proj
}

/// Runs the simulated detector on one scene. Deterministic in
/// `(config.seed, scene_id)`; scene streams start at 1 because stream 0
/// holds the projection matrix.
pub fn simulate_detector(
    graph: &SceneGraph,
    scene_id: u64,
    config: &DatasetConfig,
) -> Detection {
    let mut rng = stream_rng(config.seed, DOMAIN_DETECTOR, scene_id + 1);
    let proj = detector_projection(config.seed, config.visual_dim);
    let cols = CATEGORY_NAMES.len() + 1;
    let n = graph.boxes.len();
    let (jw, jh) = (
        config.jitter_frac * graph.width,
        config.jitter_frac * graph.height,
    );

    let mut boxes = Vec::with_capacity(n);
    let mut label_probs = Vec::with_capacity(n * cols);
    let mut visual = Vec::with_capacity(n * config.visual_dim);
    for (b, &cat) in graph.boxes.iter().zip(graph.categories.iter()) {
        let jb = BoxF {
            x1: b.x1 + rng.random_range(-jw..=jw),
            y1: b.y1 + rng.random_range(-jh..=jh),
            x2: b.x2 + rng.random_range(-jw..=jw),
            y2: b.y2 + rng.random_range(-jh..=jh),
        };
        boxes.push(clamp_box(jb, graph.width, graph.height));

        let mut logits = Vec::with_capacity(cols);
        for c in 0..cols {
            let noise: f64 = rng.sample(StandardNormal);
            let signal = if c == cat { 1.0 / config.tau } else { 0.0 };
            logits.push(signal + noise);
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        let exps: Vec<f64> = logits
            .iter()
            .map(|&l| {
                let e = libm::exp(l - max);
                denom += e;
                e
            })
            .collect();
        label_probs.extend(exps.into_iter().map(|e| e / denom));

        for r in 0..config.visual_dim {
            let noise: f64 = rng.sample(StandardNormal);
            visual.push(proj[r * cols + cat] + config.sigma_v * noise);
        }
    }
    Detection {
        boxes,
        label_probs,
        visual,
    }
}

// ---------------------------------------------------------------------------
// Embedding table asset
// ---------------------------------------------------------------------------

/// Deterministic stand-in for pretrained word embeddings: `rows` unit-norm
/// pseudo-random vectors of dimension `dim`. `table_index` separates
/// distinct tables derived from the same seed.
pub fn embedding_table(seed: u64, table_index: u64, rows: usize, dim: usize) -> Vec<f64> {
    let mut rng = stream_rng(seed, DOMAIN_EMBEDDING_TABLE, table_index);
    let mut values = vec![0.0; rows * dim];
    for r in 0..rows {
        let mut norm_sq = 0.0;
        for d in 0..dim {
            let z: f64 = rng.sample(StandardNormal);
            values[r * dim + d] = z;
            norm_sq += z * z;
        }
        let norm = libm::sqrt(norm_sq).max(1e-12);
        for d in 0..dim {
            values[r * dim + d] /= norm;
        }
    }
    values
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;

    fn small_config(num_scenes: usize) -> DatasetConfig {
        DatasetConfig {
            num_scenes,
            ..DatasetConfig::default()
        }
    }

    #[test]
    fn default_config_is_valid() {
        DatasetConfig::default().validate().unwrap();
    }

    #[test]
    fn config_validation_catches_bad_fields() {
        let mut c = DatasetConfig::default();
        c.objects_min = 1;
        assert!(c.validate().is_err());

        let mut c = DatasetConfig::default();
        c.canvas_width = 300.0; // capacity 3 < objects_max
        assert!(matches!(
            c.validate(),
            Err(SceneError::InvalidConfig { .. })
        ));

        let mut c = DatasetConfig::default();
        c.jitter_frac = 0.05; // above the 2% bound
        assert!(c.validate().is_err());

        let mut c = DatasetConfig::default();
        c.tau = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = small_config(40);
        let a = generate_dataset(&cfg).unwrap();
        let b = generate_dataset(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scenes_validate_against_vocabulary() {
        let cfg = small_config(200);
        for record in generate_dataset(&cfg).unwrap() {
            record
                .graph
                .validate(CATEGORY_NAMES.len(), PREDICATE_NAMES.len())
                .unwrap_or_else(|e| panic!("scene {} invalid: {e}", record.id));
            let n = record.graph.boxes.len();
            assert!(n >= cfg.objects_min && n <= cfg.objects_max);
        }
    }

    #[test]
    fn two_object_scenes_never_have_resting_on() {
        let cfg = DatasetConfig {
            num_scenes: 100,
            objects_min: 2,
            objects_max: 2,
            ..DatasetConfig::default()
        };
        for record in generate_dataset(&cfg).unwrap() {
            assert!(record
                .graph
                .triplets
                .iter()
                .all(|t| t.predicate != PRED_RESTING_ON));
        }
    }

    #[test]
    fn ground_truth_is_rederivable_from_boxes_and_part_links() {
        let cfg = small_config(120);
        for record in generate_dataset(&cfg).unwrap() {
            let part_of: Vec<(usize, usize)> = record
                .graph
                .triplets
                .iter()
                .filter(|t| t.predicate == PRED_PART_OF)
                .map(|t| (t.subject, t.object))
                .collect();
            let rederived = derive_triplets(&record.graph.boxes, &part_of);
            assert_eq!(record.graph.triplets, rederived, "scene {}", record.id);
        }
    }

    #[test]
    fn every_resting_on_has_a_witnessing_mediator() {
        let cfg = small_config(200);
        for record in generate_dataset(&cfg).unwrap() {
            let triplets: BTreeSet<(usize, usize, usize)> = record
                .graph
                .triplets
                .iter()
                .map(|t| (t.subject, t.predicate, t.object))
                .collect();
            for t in &record.graph.triplets {
                if t.predicate != PRED_RESTING_ON {
                    continue;
                }
                let witnessed = (0..record.graph.boxes.len()).any(|b| {
                    triplets.contains(&(b, PRED_PART_OF, t.subject))
                        && triplets.contains(&(b, PRED_ON, t.object))
                });
                assert!(witnessed, "scene {}: {:?} has no mediator", record.id, t);
                // The host itself must not be geometrically on the surface.
                assert!(
                    !triplets.contains(&(t.subject, PRED_ON, t.object)),
                    "scene {}: host {} rests directly on {}",
                    record.id,
                    t.subject,
                    t.object
                );
            }
        }
    }

    #[test]
    fn part_on_surface_yields_resting_on() {
        // Hand-built: road (0), cart (1), wheel (2); the wheel touches the
        // road and belongs to the cart, so the cart rests on the road.
        let boxes = [
            BoxF { x1: 0.0, y1: 900.0, x2: 1000.0, y2: 1000.0 },
            BoxF { x1: 100.0, y1: 760.0, x2: 300.0, y2: 860.0 },
            BoxF { x1: 120.0, y1: 852.0, x2: 170.0, y2: 902.0 },
        ];
        let triplets = derive_triplets(&boxes, &[(2, 1)]);
        let as_tuples: BTreeSet<(usize, usize, usize)> = triplets
            .iter()
            .map(|t| (t.subject, t.predicate, t.object))
            .collect();
        assert!(as_tuples.contains(&(2, PRED_ON, 0)));
        assert!(as_tuples.contains(&(2, PRED_PART_OF, 1)));
        assert!(as_tuples.contains(&(1, PRED_RESTING_ON, 0)));
        assert!(as_tuples.contains(&(0, PRED_SUPPORTS, 2)));
        assert!(!as_tuples.contains(&(1, PRED_ON, 0)));
    }

    #[test]
    fn resting_on_base_rate_is_in_regression_band() {
        let cfg = DatasetConfig {
            num_scenes: 10_000,
            ..DatasetConfig::default()
        };
        let mut total = 0usize;
        let mut resting = 0usize;
        for record in generate_dataset(&cfg).unwrap() {
            total += record.graph.triplets.len();
            resting += record
                .graph
                .triplets
                .iter()
                .filter(|t| t.predicate == PRED_RESTING_ON)
                .count();
        }
        let rate = resting as f64 / total as f64;
        assert!(
            (0.02..=0.15).contains(&rate),
            "resting_on base rate {rate:.4} outside [0.02, 0.15] ({resting}/{total})"
        );
    }

    #[test]
    fn detector_is_deterministic_and_probabilities_normalize() {
        let cfg = small_config(10);
        let scenes = generate_dataset(&cfg).unwrap();
        for record in &scenes {
            let a = simulate_detector(&record.graph, record.id, &cfg);
            let b = simulate_detector(&record.graph, record.id, &cfg);
            assert_eq!(a, b);
            let cols = CATEGORY_NAMES.len() + 1;
            for row in a.label_probs.chunks(cols) {
                let sum: f64 = row.iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
                assert!(row.iter().all(|&p| p >= 0.0));
            }
            assert_eq!(a.boxes.len(), record.graph.boxes.len());
            assert_eq!(a.visual.len(), record.graph.boxes.len() * cfg.visual_dim);
        }
    }

    #[test]
    fn noiseless_detector_recovers_categories_exactly() {
        let cfg = DatasetConfig {
            num_scenes: 20,
            tau: 1e-6,
            sigma_v: 0.0,
            jitter_frac: 0.0,
            ..DatasetConfig::default()
        };
        let cols = CATEGORY_NAMES.len() + 1;
        let mut by_category: alloc::collections::BTreeMap<usize, Vec<f64>> =
            alloc::collections::BTreeMap::new();
        for record in generate_dataset(&cfg).unwrap() {
            let det = simulate_detector(&record.graph, record.id, &cfg);
            assert_eq!(det.boxes, record.graph.boxes);
            for (i, &cat) in record.graph.categories.iter().enumerate() {
                let row = &det.label_probs[i * cols..(i + 1) * cols];
                let argmax = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0;
                assert_eq!(argmax, cat);
                // σ_v = 0: same category ⇒ identical visual features.
                let vis = det.visual[i * cfg.visual_dim..(i + 1) * cfg.visual_dim].to_vec();
                if let Some(prev) = by_category.get(&cat) {
                    assert_eq!(prev, &vis);
                } else {
                    by_category.insert(cat, vis);
                }
            }
        }
    }

    #[test]
    fn default_noise_keeps_label_accuracy_above_bound() {
        let cfg = small_config(400);
        let cols = CATEGORY_NAMES.len() + 1;
        let mut correct = 0usize;
        let mut total = 0usize;
        for record in generate_dataset(&cfg).unwrap() {
            let det = simulate_detector(&record.graph, record.id, &cfg);
            for (i, &cat) in record.graph.categories.iter().enumerate() {
                let row = &det.label_probs[i * cols..(i + 1) * cols];
                let argmax = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0;
                correct += usize::from(argmax == cat);
                total += 1;
            }
        }
        let acc = correct as f64 / total as f64;
        assert!(acc >= 0.9, "detector label accuracy {acc:.4} below 0.9");
    }

    #[test]
    fn split_sizes_follow_70_5_25() {
        assert_eq!(
            split_sizes(2000),
            SplitSizes {
                train: 1400,
                val: 100,
                test: 500
            }
        );
        let s = split_sizes(10);
        assert_eq!((s.train, s.val, s.test), (7, 0, 3));
        let s = split_sizes(0);
        assert_eq!((s.train, s.val, s.test), (0, 0, 0));
    }

    #[test]
    fn embedding_rows_are_unit_norm_distinct_and_deterministic() {
        let rows = 11;
        let dim = 16;
        let a = embedding_table(3, 0, rows, dim);
        let b = embedding_table(3, 0, rows, dim);
        assert_eq!(a, b);
        let other = embedding_table(3, 1, rows, dim);
        assert_ne!(a, other);
        for r in 0..rows {
            let norm_sq: f64 = a[r * dim..(r + 1) * dim].iter().map(|v| v * v).sum();
            assert!((norm_sq - 1.0).abs() < 1e-12);
            for s in 0..r {
                assert_ne!(
                    a[r * dim..(r + 1) * dim],
                    a[s * dim..(s + 1) * dim],
                    "rows {r} and {s} identical"
                );
            }
        }
    }

    #[test]
    fn host_scenes_contain_the_intended_ambiguity() {
        // Hosts hang well above both slabs, so `resting_on` can never be
        // read off the (host, slab) pair geometry: the host body is always
        // far outside the contact tolerance, and every resting host sees
        // the other slab overlapping its span as a distractor. Both hosts
        // and a loose part share the slabs, so "some part touches this
        // slab" does not identify the carrier either — only binding parts
        // to their owners does.
        let cfg = DatasetConfig {
            num_scenes: 300,
            objects_min: 8,
            objects_max: 10,
            ..DatasetConfig::default()
        };
        let slab_cats = [CAT_TABLE, CAT_CRATE];
        let mut scenes_with_hosts = 0usize;
        let mut total_hosts = 0usize;
        let mut touching_hosts = 0usize;
        let mut resting_hosts = 0usize;
        let mut resting_with_distractor = 0usize;
        let mut resting_pairs = 0usize;
        let mut scenes_with_loose_part = 0usize;
        for record in generate_dataset(&cfg).unwrap() {
            let g = &record.graph;
            let hosts: Vec<usize> = (0..g.categories.len())
                .filter(|&i| g.categories[i] == CAT_CART || g.categories[i] == CAT_ROBOT)
                .collect();
            if hosts.is_empty() {
                continue;
            }
            scenes_with_hosts += 1;
            assert_eq!(hosts.len(), 2, "scene {}: support groups carry two hosts", record.id);
            total_hosts += hosts.len();
            let attached: BTreeSet<usize> = g
                .triplets
                .iter()
                .filter(|t| t.predicate == PRED_PART_OF)
                .map(|t| t.subject)
                .collect();
            let loose_exists = (0..g.categories.len()).any(|i| {
                (g.categories[i] == CAT_WHEEL || g.categories[i] == CAT_LEG)
                    && !attached.contains(&i)
            });
            if loose_exists {
                scenes_with_loose_part += 1;
            }
            for &hi in &hosts {
                let hb = &g.boxes[hi];
                if g
                    .triplets
                    .iter()
                    .any(|t| t.predicate == PRED_ON && t.subject == hi)
                {
                    touching_hosts += 1;
                }
                let targets: BTreeSet<usize> = g
                    .triplets
                    .iter()
                    .filter(|t| t.predicate == PRED_RESTING_ON && t.subject == hi)
                    .map(|t| t.object)
                    .collect();
                if targets.is_empty() {
                    continue;
                }
                resting_hosts += 1;
                for &ti in &targets {
                    resting_pairs += 1;
                    // The host body floats far above whatever carries it:
                    // contact never shortcuts the mediator.
                    let drop = g.boxes[ti].y1 - hb.y2;
                    assert!(
                        drop > 2.0 * ON_TOLERANCE,
                        "scene {}: host {} too close to its support {} ({drop} px)",
                        record.id,
                        hi,
                        ti
                    );
                }
                // A distractor slab overlaps the host horizontally but
                // does not carry it (unless the decoy part touches too,
                // in which case the host genuinely rests on both).
                let has_distractor = (0..g.categories.len()).any(|ci| {
                    slab_cats.contains(&g.categories[ci])
                        && !targets.contains(&ci)
                        && g.boxes[ci].x2 > hb.x1
                        && hb.x2 > g.boxes[ci].x1
                });
                if has_distractor || targets.len() > 1 {
                    resting_with_distractor += 1;
                }
            }
        }
        assert!(
            scenes_with_hosts > 180,
            "hosts appear in most large scenes ({scenes_with_hosts}/300)"
        );
        assert_eq!(
            scenes_with_loose_part, scenes_with_hosts,
            "every support group carries a loose part"
        );
        assert!(
            resting_hosts * 10 >= total_hosts * 6,
            "a majority of hosts rest on something ({resting_hosts}/{total_hosts})"
        );
        assert!(
            resting_hosts < total_hosts,
            "some hosts hover free ({resting_hosts}/{total_hosts})"
        );
        assert!(
            touching_hosts == 0,
            "host bodies never touch anything directly ({touching_hosts}/{total_hosts})"
        );
        assert!(resting_pairs >= resting_hosts);
        assert!(
            resting_with_distractor == resting_hosts,
            "every resting host sees a distractor slab \
             ({resting_with_distractor}/{resting_hosts})"
        );
    }
}
