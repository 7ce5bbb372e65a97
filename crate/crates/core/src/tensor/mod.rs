//! Dense `f64` tensors with reverse-mode automatic differentiation.
//!
//! The engine is tape-based. A [`Graph`] created with [`Graph::recording`]
//! owns a gradient tape; tensors produced from its leaves carry a reference
//! to that tape and record, for every operation, the node ids of their inputs
//! together with vector-Jacobian-product closures. [`Graph::backward`] walks
//! the tape once in reverse and accumulates gradients for every bound
//! parameter; parameters that never influenced the loss receive zero
//! gradients of the right shape. A graph created with [`Graph::inference`]
//! records nothing and runs the same model code with no tape overhead.
//!
//! Invariants enforced throughout:
//!
//! * every operation validates its operand shapes and returns
//!   [`TensorError::ShapeMismatch`] rather than panicking;
//! * every operation checks its output for NaN/∞ and fails with
//!   [`TensorError::NonFinite`], so poisoned values are caught at the op that
//!   produced them, not ten layers downstream;
//! * mixing tensors from two different recording graphs is an error;
//! * gradient accumulation order is fixed by construction order, so repeated
//!   runs produce bit-identical gradients.
//!
//! Tensors are immutable; cloning is cheap (the buffer is reference-counted).
//! The operation set itself lives in [`ops`]; central-difference gradient
//! checking lives in [`check`].

mod check;
mod ops;

pub use check::{grad_check, GradCheckReport};

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::rc::Rc;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;

/// Error type for tensor construction, operations, and backpropagation.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TensorError {
    #[error("shape mismatch in `{op}`: {details}")]
    ShapeMismatch { op: &'static str, details: String },
    #[error("`{op}` produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("operands of `{op}` belong to different graphs")]
    MixedGraphs { op: &'static str },
    #[error("backward requires a scalar loss, got {numel} elements")]
    NonScalarLoss { numel: usize },
    #[error("backward called on a graph that is not recording")]
    NotRecording,
    #[error("backward called on a loss that is not connected to the graph")]
    UntracedLoss,
    #[error("gradient of parameter `{name}` is non-finite")]
    NonFiniteGrad { name: String },
    #[error("name `{name}` is bound to two different parameters in one graph")]
    DuplicateName { name: String },
    #[error("row {row} of `{op}` sums to zero; normalization is degenerate")]
    DegenerateRow { op: &'static str, row: usize },
    #[error("index {index} out of bounds in `{op}` (limit {bound})")]
    IndexOutOfBounds {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("`{op}` received an invalid value: {details}")]
    InvalidValue { op: &'static str, details: String },
}

fn numel_of(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn check_finite(op: &'static str, data: &[f64]) -> Result<(), TensorError> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(TensorError::NonFinite { op })
    }
}

/// Vector-Jacobian product: maps the output gradient to one input's gradient
/// contribution, both as flat buffers.
type Vjp = Box<dyn Fn(&[f64]) -> Vec<f64>>;

struct Edge {
    src: usize,
    vjp: Vjp,
}

struct Node {
    edges: Vec<Edge>,
}

/// Append-only record of operations; node ids are topologically ordered
/// because inputs always exist before the outputs they produce.
struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Tape {
    fn push(&self, edges: Vec<Edge>) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { edges });
        nodes.len() - 1
    }
}

#[derive(Clone)]
struct Trace {
    tape: Rc<Tape>,
    node: usize,
}

/// Immutable dense tensor of `f64` values in row-major layout.
#[derive(Clone)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Rc<Vec<f64>>,
    trace: Option<Trace>,
}

impl core::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .field("traced", &self.trace.is_some())
            .finish()
    }
}

impl Tensor {
    /// Builds a tensor from a flat row-major buffer. Fails when the element
    /// count does not match the shape or any value is non-finite.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self, TensorError> {
        if numel_of(shape) != data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "from_vec",
                details: alloc::format!(
                    "shape {:?} implies {} elements, buffer has {}",
                    shape,
                    numel_of(shape),
                    data.len()
                ),
            });
        }
        check_finite("from_vec", &data)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: Rc::new(data),
            trace: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: Rc::new(vec![0.0; numel_of(shape)]),
            trace: None,
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Result<Self, TensorError> {
        Self::from_vec(shape, vec![value; numel_of(shape)])
    }

    /// Rank-0 tensor holding one value.
    pub fn scalar(value: f64) -> Result<Self, TensorError> {
        Self::from_vec(&[], vec![value])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<f64, TensorError> {
        if self.numel() == 1 {
            Ok(self.data[0])
        } else {
            Err(TensorError::NonScalarLoss {
                numel: self.numel(),
            })
        }
    }

    fn data_rc(&self) -> Rc<Vec<f64>> {
        Rc::clone(&self.data)
    }

    fn require_rank(&self, op: &'static str, rank: usize) -> Result<(), TensorError> {
        if self.rank() == rank {
            Ok(())
        } else {
            Err(TensorError::ShapeMismatch {
                op,
                details: alloc::format!("expected rank {rank}, got shape {:?}", self.shape),
            })
        }
    }
}

/// Collects tape edges for one operation's traced inputs and finalizes the
/// output tensor. VJP closures are boxed only when the input actually records
/// onto a tape, so inference-mode forwards pay no closure-allocation cost.
struct EdgeBuilder {
    op: &'static str,
    tape: Option<Rc<Tape>>,
    edges: Vec<Edge>,
}

impl EdgeBuilder {
    fn new(op: &'static str) -> Self {
        Self {
            op,
            tape: None,
            edges: Vec::new(),
        }
    }

    fn input<F>(&mut self, t: &Tensor, vjp: F) -> Result<(), TensorError>
    where
        F: Fn(&[f64]) -> Vec<f64> + 'static,
    {
        if let Some(trace) = &t.trace {
            match &self.tape {
                None => self.tape = Some(Rc::clone(&trace.tape)),
                Some(tape) => {
                    if !Rc::ptr_eq(tape, &trace.tape) {
                        return Err(TensorError::MixedGraphs { op: self.op });
                    }
                }
            }
            self.edges.push(Edge {
                src: trace.node,
                vjp: Box::new(vjp),
            });
        }
        Ok(())
    }

    fn finish(self, shape: Vec<usize>, data: Rc<Vec<f64>>) -> Result<Tensor, TensorError> {
        debug_assert_eq!(numel_of(&shape), data.len());
        check_finite(self.op, &data)?;
        let trace = self.tape.map(|tape| {
            let node = tape.push(self.edges);
            Trace { tape, node }
        });
        Ok(Tensor { shape, data, trace })
    }
}

struct ParamInner {
    name: String,
    shape: Vec<usize>,
    value: Rc<Vec<f64>>,
    trainable: bool,
}

/// Named, mutable model parameter. Cloning shares the underlying storage, so
/// a model can hand out parameter handles while the optimizer updates them
/// in place.
#[derive(Clone)]
pub struct Parameter {
    inner: Rc<RefCell<ParamInner>>,
}

impl core::fmt::Debug for Parameter {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let inner = self.inner.borrow();
        f.debug_struct("Parameter")
            .field("name", &inner.name)
            .field("shape", &inner.shape)
            .field("trainable", &inner.trainable)
            .finish()
    }
}

impl Parameter {
    pub fn new(name: &str, shape: &[usize], value: Vec<f64>) -> Result<Self, TensorError> {
        Self::with_trainable(name, shape, value, true)
    }

    /// A parameter that is persisted with the model but never updated by the
    /// optimizer (for example a precomputed bias table).
    pub fn frozen(name: &str, shape: &[usize], value: Vec<f64>) -> Result<Self, TensorError> {
        Self::with_trainable(name, shape, value, false)
    }

    fn with_trainable(
        name: &str,
        shape: &[usize],
        value: Vec<f64>,
        trainable: bool,
    ) -> Result<Self, TensorError> {
        if numel_of(shape) != value.len() {
            return Err(TensorError::ShapeMismatch {
                op: "parameter",
                details: alloc::format!(
                    "`{name}`: shape {:?} implies {} elements, buffer has {}",
                    shape,
                    numel_of(shape),
                    value.len()
                ),
            });
        }
        check_finite("parameter", &value)?;
        Ok(Self {
            inner: Rc::new(RefCell::new(ParamInner {
                name: name.to_string(),
                shape: shape.to_vec(),
                value: Rc::new(value),
                trainable,
            })),
        })
    }

    pub fn name(&self) -> String {
        self.inner.borrow().name.clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.borrow().shape.clone()
    }

    pub fn numel(&self) -> usize {
        self.inner.borrow().value.len()
    }

    pub fn is_trainable(&self) -> bool {
        self.inner.borrow().trainable
    }

    /// Snapshot of the current value as a plain (untraced) tensor.
    pub fn to_tensor(&self) -> Tensor {
        let inner = self.inner.borrow();
        Tensor {
            shape: inner.shape.clone(),
            data: Rc::clone(&inner.value),
            trace: None,
        }
    }

    /// Replaces the value; the new buffer must match the parameter's element
    /// count and be finite.
    pub fn set_value(&self, value: Vec<f64>) -> Result<(), TensorError> {
        let mut inner = self.inner.borrow_mut();
        if value.len() != inner.value.len() {
            return Err(TensorError::ShapeMismatch {
                op: "set_value",
                details: alloc::format!(
                    "`{}`: expected {} elements, got {}",
                    inner.name,
                    inner.value.len(),
                    value.len()
                ),
            });
        }
        check_finite("set_value", &value)?;
        inner.value = Rc::new(value);
        Ok(())
    }

    /// In-place update `w += c * d`, failing if the result is non-finite.
    pub fn add_scaled(&self, d: &[f64], c: f64) -> Result<(), TensorError> {
        let mut inner = self.inner.borrow_mut();
        if d.len() != inner.value.len() {
            return Err(TensorError::ShapeMismatch {
                op: "add_scaled",
                details: alloc::format!(
                    "`{}`: expected {} elements, got {}",
                    inner.name,
                    inner.value.len(),
                    d.len()
                ),
            });
        }
        let value = Rc::make_mut(&mut inner.value);
        for (w, g) in value.iter_mut().zip(d.iter()) {
            *w += c * g;
        }
        if value.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(TensorError::NonFinite { op: "add_scaled" })
        }
    }

    /// Reads one component (used by the gradient checker).
    pub fn component(&self, index: usize) -> f64 {
        self.inner.borrow().value[index]
    }

    /// Overwrites one component without finiteness bookkeeping (used by the
    /// gradient checker to perturb and exactly restore values).
    pub fn set_component(&self, index: usize, value: f64) {
        let mut inner = self.inner.borrow_mut();
        Rc::make_mut(&mut inner.value)[index] = value;
    }

    fn ptr_eq(&self, other: &Parameter) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }
}

/// Gradients of one backward pass, keyed by parameter name.
pub struct Gradients {
    entries: BTreeMap<String, (Vec<usize>, Vec<f64>)>,
}

impl Gradients {
    /// Builds a gradient set from explicit `(shape, data)` entries.
    pub fn from_entries(entries: BTreeMap<String, (Vec<usize>, Vec<f64>)>) -> Self {
        Self { entries }
    }

    /// Gradient buffer (with its shape) for a parameter name; `None` for
    /// parameters that were never bound to the graph.
    pub fn get(&self, name: &str) -> Option<(&[usize], &[f64])> {
        self.entries
            .get(name)
            .map(|(shape, data)| (shape.as_slice(), data.as_slice()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Euclidean norm over every stored gradient component.
    pub fn global_norm(&self) -> f64 {
        let sq: f64 = self
            .entries
            .values()
            .flat_map(|(_, data)| data.iter())
            .map(|g| g * g)
            .sum();
        libm::sqrt(sq)
    }
}

/// Execution context for model forwards. A recording graph owns the gradient
/// tape and the parameter bindings of one forward/backward cycle; an
/// inference graph runs the identical code without recording anything.
pub struct Graph {
    tape: Option<Rc<Tape>>,
    bindings: RefCell<BTreeMap<String, (Parameter, usize)>>,
}

impl Graph {
    pub fn recording() -> Self {
        Self {
            tape: Some(Rc::new(Tape {
                nodes: RefCell::new(Vec::new()),
            })),
            bindings: RefCell::new(BTreeMap::new()),
        }
    }

    pub fn inference() -> Self {
        Self {
            tape: None,
            bindings: RefCell::new(BTreeMap::new()),
        }
    }

    pub fn is_recording(&self) -> bool {
        self.tape.is_some()
    }

    /// Introduces a parameter into the graph. On a recording graph a
    /// trainable parameter becomes a tape leaf — bound once per name, so
    /// repeated uses share one gradient accumulator. Frozen parameters and
    /// inference graphs yield plain constant tensors.
    pub fn leaf(&self, p: &Parameter) -> Result<Tensor, TensorError> {
        let Some(tape) = &self.tape else {
            return Ok(p.to_tensor());
        };
        if !p.is_trainable() {
            return Ok(p.to_tensor());
        }
        let name = p.name();
        let mut bindings = self.bindings.borrow_mut();
        if let Some((bound, node)) = bindings.get(&name) {
            if !bound.ptr_eq(p) {
                return Err(TensorError::DuplicateName { name });
            }
            let mut t = p.to_tensor();
            t.trace = Some(Trace {
                tape: Rc::clone(tape),
                node: *node,
            });
            return Ok(t);
        }
        let node = tape.push(Vec::new());
        bindings.insert(name, (p.clone(), node));
        let mut t = p.to_tensor();
        t.trace = Some(Trace {
            tape: Rc::clone(tape),
            node,
        });
        Ok(t)
    }

    /// Reverse pass from a scalar loss. Returns one gradient per parameter
    /// bound via [`Graph::leaf`]; bound parameters that did not influence the
    /// loss get zero gradients.
    pub fn backward(&self, loss: &Tensor) -> Result<Gradients, TensorError> {
        let tape = self.tape.as_ref().ok_or(TensorError::NotRecording)?;
        let trace = loss.trace.as_ref().ok_or(TensorError::UntracedLoss)?;
        if !Rc::ptr_eq(tape, &trace.tape) {
            return Err(TensorError::MixedGraphs { op: "backward" });
        }
        if loss.numel() != 1 {
            return Err(TensorError::NonScalarLoss {
                numel: loss.numel(),
            });
        }

        let nodes = tape.nodes.borrow();
        let mut grads: Vec<Option<Vec<f64>>> = (0..nodes.len()).map(|_| None).collect();
        grads[trace.node] = Some(vec![1.0]);
        for id in (0..=trace.node).rev() {
            // Leaves have no incoming edges; their accumulated gradients must
            // survive for the collection pass below.
            if nodes[id].edges.is_empty() {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            for edge in &nodes[id].edges {
                debug_assert!(edge.src < id, "tape must be topologically ordered");
                let contribution = (edge.vjp)(&g);
                match &mut grads[edge.src] {
                    Some(acc) => {
                        debug_assert_eq!(acc.len(), contribution.len());
                        for (a, c) in acc.iter_mut().zip(contribution.iter()) {
                            *a += c;
                        }
                    }
                    slot @ None => *slot = Some(contribution),
                }
            }
        }

        let mut entries = BTreeMap::new();
        for (name, (param, node)) in self.bindings.borrow().iter() {
            let grad = grads[*node]
                .take()
                .unwrap_or_else(|| vec![0.0; param.numel()]);
            if !grad.iter().all(|v| v.is_finite()) {
                return Err(TensorError::NonFiniteGrad { name: name.clone() });
            }
            entries.insert(name.clone(), (param.shape(), grad));
        }
        Ok(Gradients { entries })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_validates_shape_and_finiteness() {
        assert!(Tensor::from_vec(&[2, 2], vec![1.0; 4]).is_ok());
        assert!(matches!(
            Tensor::from_vec(&[2, 2], vec![1.0; 3]),
            Err(TensorError::ShapeMismatch { .. })
        ));
        assert!(matches!(
            Tensor::from_vec(&[2], vec![1.0, f64::NAN]),
            Err(TensorError::NonFinite { .. })
        ));
        assert!(matches!(
            Tensor::from_vec(&[2], vec![1.0, f64::INFINITY]),
            Err(TensorError::NonFinite { .. })
        ));
    }

    #[test]
    fn scalar_shape_is_rank_zero() {
        let s = Tensor::scalar(3.5).unwrap();
        assert_eq!(s.rank(), 0);
        assert_eq!(s.numel(), 1);
        assert_eq!(s.item().unwrap(), 3.5);
    }

    #[test]
    fn leaf_binds_once_per_name() {
        let g = Graph::recording();
        let p = Parameter::new("w", &[2], vec![1.0, 2.0]).unwrap();
        let a = g.leaf(&p).unwrap();
        let b = g.leaf(&p).unwrap();
        assert_eq!(a.trace.as_ref().unwrap().node, b.trace.as_ref().unwrap().node);

        // A different parameter under the same name is rejected.
        let imposter = Parameter::new("w", &[2], vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            g.leaf(&imposter),
            Err(TensorError::DuplicateName { .. })
        ));
    }

    #[test]
    fn frozen_parameters_stay_constant() {
        let g = Graph::recording();
        let p = Parameter::frozen("table", &[2], vec![1.0, 2.0]).unwrap();
        let t = g.leaf(&p).unwrap();
        assert!(t.trace.is_none());
    }

    #[test]
    fn backward_rejects_inference_graphs_and_constants() {
        let g = Graph::inference();
        let c = Tensor::scalar(1.0).unwrap();
        assert!(matches!(g.backward(&c), Err(TensorError::NotRecording)));

        let g = Graph::recording();
        assert!(matches!(g.backward(&c), Err(TensorError::UntracedLoss)));
    }

    #[test]
    fn unused_bound_parameter_gets_zero_gradient() {
        let g = Graph::recording();
        let used = Parameter::new("used", &[2], vec![1.0, 2.0]).unwrap();
        let unused = Parameter::new("unused", &[3], vec![5.0, 6.0, 7.0]).unwrap();
        let x = g.leaf(&used).unwrap();
        let _ = g.leaf(&unused).unwrap();
        let loss = x.sum_all().unwrap();
        let grads = g.backward(&loss).unwrap();
        assert_eq!(grads.get("used").unwrap().1, &[1.0, 1.0]);
        assert_eq!(grads.get("unused").unwrap().1, &[0.0, 0.0, 0.0]);
        assert_eq!(grads.get("never-bound"), None);
    }

    #[test]
    fn add_scaled_updates_and_guards() {
        let p = Parameter::new("w", &[2], vec![1.0, 2.0]).unwrap();
        p.add_scaled(&[10.0, 20.0], -0.1).unwrap();
        assert_eq!(p.to_tensor().data(), &[0.0, 0.0]);
        assert!(matches!(
            p.add_scaled(&[f64::MAX, f64::MAX], f64::MAX),
            Err(TensorError::NonFinite { .. })
        ));
    }

    #[test]
    fn parameter_update_does_not_disturb_existing_snapshots() {
        let p = Parameter::new("w", &[1], vec![1.0]).unwrap();
        let before = p.to_tensor();
        p.add_scaled(&[1.0], 1.0).unwrap();
        assert_eq!(before.data(), &[1.0], "snapshot must be copy-on-write");
        assert_eq!(p.to_tensor().data(), &[2.0]);
    }
}
