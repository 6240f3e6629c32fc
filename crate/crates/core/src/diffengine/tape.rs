//! Reverse-mode tape over scalar operations.
//!
//! Every arithmetic operation on a tape-bound [`Var`] appends a node holding
//! the operation kind, up to two operand indices, and the local partial
//! derivatives evaluated at record time. [`Tape::gradient`] replays the nodes
//! backward once and returns the adjoint of every registered parameter slot.

use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::real::{hard_tanh, hard_tanh_slope, sigmoid, sign0, Real};
use super::DiffError;

/// Denominators (and square-root arguments) smaller than this are rejected.
pub const SINGULAR_TOLERANCE: f64 = 1e-12;

const NONE: usize = usize::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Affine,
    Tanh,
    Sigmoid,
    Sin,
    Cos,
    Sqrt,
    Abs,
    Clamp,
    Unsupported(&'static str),
}

#[derive(Clone, Copy, Debug)]
struct Node {
    op: OpKind,
    args: [usize; 2],
    partials: [f64; 2],
}

#[derive(Default)]
struct TapeState {
    nodes: Vec<Node>,
    params: Vec<usize>,
    fault: Option<DiffError>,
}

/// Append-only operation record; single-threaded and single-use per step.
#[derive(Default)]
pub struct Tape {
    state: RefCell<TapeState>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self.state.borrow();
        f.debug_struct("Tape")
            .field("nodes", &s.nodes.len())
            .field("params", &s.params.len())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a differentiable parameter; gradients come back in
    /// registration order.
    pub fn parameter(&self, value: f64) -> Var<'_> {
        let idx = self.push(OpKind::Leaf, [NONE, NONE], [0.0, 0.0]);
        self.state.borrow_mut().params.push(idx);
        Var {
            tape: Some(self),
            idx,
            val: value,
        }
    }

    /// An input that participates in the graph but is not a parameter slot.
    pub fn input(&self, value: f64) -> Var<'_> {
        let idx = self.push(OpKind::Leaf, [NONE, NONE], [0.0, 0.0]);
        Var {
            tape: Some(self),
            idx,
            val: value,
        }
    }

    pub fn len(&self) -> usize {
        self.state.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn parameter_count(&self) -> usize {
        self.state.borrow().params.len()
    }

    /// Drops all nodes and parameter slots.
    pub fn clear(&self) {
        let mut s = self.state.borrow_mut();
        s.nodes.clear();
        s.params.clear();
        s.fault = None;
    }

    fn push(&self, op: OpKind, args: [usize; 2], partials: [f64; 2]) -> usize {
        let mut s = self.state.borrow_mut();
        s.nodes.push(Node { op, args, partials });
        s.nodes.len() - 1
    }

    fn fault(&self, err: DiffError) {
        let mut s = self.state.borrow_mut();
        if s.fault.is_none() {
            s.fault = Some(err);
        }
    }

    /// Reverse sweep from `output`; one entry per registered parameter.
    pub fn gradient(&self, output: Var<'_>) -> Result<Vec<f64>, DiffError> {
        let s = self.state.borrow();
        if let Some(err) = &s.fault {
            return Err(err.clone());
        }
        let Some(tape) = output.tape else {
            return Ok(vec![0.0; s.params.len()]);
        };
        debug_assert!(std::ptr::eq(tape, self), "output recorded on another tape");

        let mut adjoint = vec![0.0; output.idx + 1];
        let mut reached = vec![false; output.idx + 1];
        adjoint[output.idx] = 1.0;
        reached[output.idx] = true;
        for i in (0..=output.idx).rev() {
            if !reached[i] {
                continue;
            }
            let node = s.nodes[i];
            if let OpKind::Unsupported(name) = node.op {
                return Err(DiffError::UnsupportedPrimitive(name));
            }
            let a = adjoint[i];
            for k in 0..2 {
                let arg = node.args[k];
                if arg != NONE {
                    adjoint[arg] += a * node.partials[k];
                    reached[arg] = true;
                }
            }
        }
        Ok(s
            .params
            .iter()
            .map(|&p| if p <= output.idx { adjoint[p] } else { 0.0 })
            .collect())
    }
}

/// Scalar bound to a [`Tape`], or a free constant when `tape` is `None`.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: Option<&'t Tape>,
    idx: usize,
    val: f64,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.tape {
            Some(_) => write!(f, "Var(#{} = {})", self.idx, self.val),
            None => write!(f, "Var(const {})", self.val),
        }
    }
}

impl<'t> Var<'t> {
    pub fn constant(val: f64) -> Self {
        Var {
            tape: None,
            idx: NONE,
            val,
        }
    }

    fn unary(self, op: OpKind, val: f64, partial: f64) -> Self {
        match self.tape {
            None => Var::constant(val),
            Some(tape) => Var {
                tape: Some(tape),
                idx: tape.push(op, [self.idx, NONE], [partial, 0.0]),
                val,
            },
        }
    }

    fn binary(self, rhs: Self, op: OpKind, val: f64, pa: f64, pb: f64) -> Self {
        match (self.tape, rhs.tape) {
            (None, None) => Var::constant(val),
            (Some(tape), None) => Var {
                tape: Some(tape),
                idx: tape.push(op, [self.idx, NONE], [pa, 0.0]),
                val,
            },
            (None, Some(tape)) => Var {
                tape: Some(tape),
                idx: tape.push(op, [rhs.idx, NONE], [pb, 0.0]),
                val,
            },
            (Some(tape), Some(_)) => Var {
                tape: Some(tape),
                idx: tape.push(op, [self.idx, rhs.idx], [pa, pb]),
                val,
            },
        }
    }

    fn tape(&self) -> Option<&'t Tape> {
        self.tape
    }

    /// Records a primitive outside the supported set; differentiating
    /// through it fails with [`DiffError::UnsupportedPrimitive`].
    fn unsupported(self, name: &'static str, val: f64) -> Self {
        self.unary(OpKind::Unsupported(name), val, 0.0)
    }
}

impl Add for Var<'_> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.binary(rhs, OpKind::Add, self.val + rhs.val, 1.0, 1.0)
    }
}

impl Sub for Var<'_> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.binary(rhs, OpKind::Sub, self.val - rhs.val, 1.0, -1.0)
    }
}

impl Mul for Var<'_> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        self.binary(rhs, OpKind::Mul, self.val * rhs.val, rhs.val, self.val)
    }
}

impl Div for Var<'_> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        if rhs.val.abs() < SINGULAR_TOLERANCE {
            if let Some(tape) = self.tape().or(rhs.tape()) {
                tape.fault(DiffError::SingularDivision { denominator: rhs.val });
            }
        }
        let q = self.val / rhs.val;
        self.binary(rhs, OpKind::Div, q, 1.0 / rhs.val, -q / rhs.val)
    }
}

impl Neg for Var<'_> {
    type Output = Self;
    fn neg(self) -> Self {
        self.unary(OpKind::Neg, -self.val, -1.0)
    }
}

impl Add<f64> for Var<'_> {
    type Output = Self;
    fn add(self, rhs: f64) -> Self {
        self.unary(OpKind::Affine, self.val + rhs, 1.0)
    }
}

impl Sub<f64> for Var<'_> {
    type Output = Self;
    fn sub(self, rhs: f64) -> Self {
        self.unary(OpKind::Affine, self.val - rhs, 1.0)
    }
}

impl Mul<f64> for Var<'_> {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        self.unary(OpKind::Affine, self.val * rhs, rhs)
    }
}

impl Div<f64> for Var<'_> {
    type Output = Self;
    fn div(self, rhs: f64) -> Self {
        self / Var::constant(rhs)
    }
}

impl Real for Var<'_> {
    fn cst(v: f64) -> Self {
        Var::constant(v)
    }

    fn value(&self) -> f64 {
        self.val
    }

    fn tanh(&self) -> Self {
        let y = self.val.tanh();
        self.unary(OpKind::Tanh, y, 1.0 - y * y)
    }

    fn sigmoid(&self) -> Self {
        let y = sigmoid(self.val);
        self.unary(OpKind::Sigmoid, y, y * (1.0 - y))
    }

    fn sin(&self) -> Self {
        self.unary(OpKind::Sin, self.val.sin(), self.val.cos())
    }

    fn cos(&self) -> Self {
        self.unary(OpKind::Cos, self.val.cos(), -self.val.sin())
    }

    fn sqrt(&self) -> Self {
        let y = self.val.sqrt();
        if y < SINGULAR_TOLERANCE {
            if let Some(tape) = self.tape {
                tape.fault(DiffError::SingularDivision { denominator: y });
            }
        }
        self.unary(OpKind::Sqrt, y, 0.5 / y)
    }

    fn abs(&self) -> Self {
        self.unary(OpKind::Abs, self.val.abs(), sign0(self.val))
    }

    fn exp(&self) -> Self {
        self.unsupported("exp", self.val.exp())
    }

    fn ln(&self) -> Self {
        self.unsupported("ln", self.val.ln())
    }

    fn clamp(&self, lo: f64, hi: f64) -> Self {
        self.unary(
            OpKind::Clamp,
            hard_tanh(self.val, lo, hi),
            hard_tanh_slope(self.val, lo, hi),
        )
    }
}
