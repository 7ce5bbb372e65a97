//! Typed scene-graph data model.
//!
//! A scene is annotated as a hypergraph over its objects: axis-aligned boxes,
//! per-object category labels, and directed relationship triplets
//! `(subject, predicate, object)`. Higher-order relations are not stored
//! explicitly; they are expressible because any third object `k` can act as a
//! *mediator* between an ordered pair `(i, j)`, and the decoder reasons over
//! the full set of mediator candidates.
//!
//! This module also fixes the two pieces of index algebra the rest of the
//! crate relies on:
//!
//! * the flat ordered-pair index `pair_index(n, i, j) = i * n + j`, which is
//!   the canonical ordering for every pairwise tensor and for ranking
//!   tie-breaks, and
//! * mediator enumeration for a pair, with an option to include the pair's
//!   endpoints themselves.

use alloc::vec::Vec;

/// Axis-aligned box in pixel coordinates, `(x1, y1)` top-left inclusive,
/// `(x2, y2)` bottom-right exclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxF {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BoxF {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self { x1, y1, x2, y2 }
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))
    }

    /// A box is well-formed when all coordinates are finite and it has
    /// strictly positive extent on both axes.
    pub fn is_well_formed(&self) -> bool {
        self.x1.is_finite()
            && self.y1.is_finite()
            && self.x2.is_finite()
            && self.y2.is_finite()
            && self.x2 > self.x1
            && self.y2 > self.y1
    }

    /// Intersection-over-union of two boxes. Degenerate boxes yield 0.
    pub fn iou(&self, other: &BoxF) -> f64 {
        let ix = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let iy = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        let inter = ix * iy;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

/// Nine-component spatial feature of a box, normalized by the image size:
/// corner coordinates, center, width, height, and relative area.
pub fn spatial_feature(b: &BoxF, img_w: f64, img_h: f64) -> [f64; 9] {
    let (cx, cy) = b.center();
    [
        b.x1 / img_w,
        b.y1 / img_h,
        b.x2 / img_w,
        b.y2 / img_h,
        cx / img_w,
        cy / img_h,
        b.width() / img_w,
        b.height() / img_h,
        b.area() / (img_w * img_h),
    ]
}

/// Width of [`spatial_feature`].
pub const SPATIAL_FEATURE_DIM: usize = 9;

/// Directed relationship triplet; all fields are indices (`subject`/`object`
/// into the scene's object list, `predicate` into the predicate vocabulary).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Triplet {
    pub subject: usize,
    pub predicate: usize,
    pub object: usize,
}

impl Triplet {
    pub fn new(subject: usize, predicate: usize, object: usize) -> Self {
        Self {
            subject,
            predicate,
            object,
        }
    }
}

/// Ground-truth annotation of one scene: boxes, foreground category labels
/// (1-based; 0 is reserved for background in classifier space), and the
/// relationship triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGraph {
    pub width: f64,
    pub height: f64,
    pub boxes: Vec<BoxF>,
    /// Category of each object, in `1..=num_categories`.
    pub categories: Vec<usize>,
    pub triplets: Vec<Triplet>,
}

/// Structural violation found by [`SceneGraph::validate`].
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("scene has {boxes} boxes but {categories} category labels")]
    LengthMismatch { boxes: usize, categories: usize },
    #[error("box {index} is malformed (non-finite or non-positive extent)")]
    MalformedBox { index: usize },
    #[error("category {value} of object {index} outside 1..={max}")]
    CategoryOutOfRange {
        index: usize,
        value: usize,
        max: usize,
    },
    #[error("triplet {index} references object {object} but scene has {count} objects")]
    ObjectOutOfRange {
        index: usize,
        object: usize,
        count: usize,
    },
    #[error("triplet {index} has predicate {value} outside 0..{max}")]
    PredicateOutOfRange {
        index: usize,
        value: usize,
        max: usize,
    },
    #[error("triplet {index} relates object {object} to itself")]
    SelfRelation { index: usize, object: usize },
    #[error("duplicate triplet at {index}")]
    DuplicateTriplet { index: usize },
    #[error("image size {width}x{height} is not strictly positive and finite")]
    BadImageSize { width: f64, height: f64 },
}

impl SceneGraph {
    pub fn num_objects(&self) -> usize {
        self.boxes.len()
    }

    /// Checks every structural invariant: box/category lengths match, boxes
    /// are well-formed, ids are in range, no self-relations, no duplicate
    /// triplets.
    pub fn validate(&self, num_categories: usize, num_predicates: usize) -> Result<(), GraphError> {
        if !(self.width.is_finite() && self.height.is_finite() && self.width > 0.0 && self.height > 0.0)
        {
            return Err(GraphError::BadImageSize {
                width: self.width,
                height: self.height,
            });
        }
        if self.boxes.len() != self.categories.len() {
            return Err(GraphError::LengthMismatch {
                boxes: self.boxes.len(),
                categories: self.categories.len(),
            });
        }
        for (index, b) in self.boxes.iter().enumerate() {
            if !b.is_well_formed() {
                return Err(GraphError::MalformedBox { index });
            }
        }
        for (index, &value) in self.categories.iter().enumerate() {
            if value == 0 || value > num_categories {
                return Err(GraphError::CategoryOutOfRange {
                    index,
                    value,
                    max: num_categories,
                });
            }
        }
        let n = self.boxes.len();
        let mut seen: Vec<Triplet> = Vec::with_capacity(self.triplets.len());
        for (index, t) in self.triplets.iter().enumerate() {
            if t.subject >= n {
                return Err(GraphError::ObjectOutOfRange {
                    index,
                    object: t.subject,
                    count: n,
                });
            }
            if t.object >= n {
                return Err(GraphError::ObjectOutOfRange {
                    index,
                    object: t.object,
                    count: n,
                });
            }
            if t.predicate >= num_predicates {
                return Err(GraphError::PredicateOutOfRange {
                    index,
                    value: t.predicate,
                    max: num_predicates,
                });
            }
            if t.subject == t.object {
                return Err(GraphError::SelfRelation {
                    index,
                    object: t.subject,
                });
            }
            if seen.contains(t) {
                return Err(GraphError::DuplicateTriplet { index });
            }
            seen.push(*t);
        }
        Ok(())
    }
}

/// Flat index of the ordered pair `(i, j)` among the `n * n` ordered pairs of
/// a scene with `n` objects. Self-pairs occupy the diagonal slots; pairwise
/// tensors keep those rows and mask them where required, so this index is
/// valid for every `(i, j)` with `i, j < n`.
#[inline]
pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < n && j < n);
    i * n + j
}

/// Inverse of [`pair_index`].
#[inline]
pub fn pair_from_index(n: usize, p: usize) -> (usize, usize) {
    debug_assert!(p < n * n);
    (p / n, p % n)
}

/// All ordered pairs `(i, j)` with `i != j`, in ascending flat-index order.
/// This is the canonical enumeration of relationship proposals for a scene.
pub fn ordered_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(n.saturating_sub(1) * n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// Mediator candidates for the pair `(i, j)` in a scene of `n` objects:
/// every object that can carry evidence about the pair. By default the
/// endpoints themselves are excluded; with `include_endpoints` they take
/// part as their own mediators.
pub fn mediator_candidates(n: usize, i: usize, j: usize, include_endpoints: bool) -> Vec<usize> {
    (0..n)
        .filter(|&k| include_endpoints || (k != i && k != j))
        .collect()
}
