//! Reverse-mode differentiation on a thread-local tape.
//!
//! Each recorded node stores its parents together with the local partial
//! derivative, so backpropagation is a single reverse sweep. Constants are
//! never recorded. Only one [`Tape`] may be live per thread.

use std::cell::RefCell;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use crate::scalar::{dot_f64, sigmoid_f64, softplus_f64, Scalar};

const CONST: u32 = u32::MAX;

#[derive(Default)]
struct TapeData {
    active: bool,
    // (first edge, edge count) per node
    nodes: Vec<(u32, u32)>,
    edges: Vec<(u32, f64)>,
}

thread_local! {
    static TAPE: RefCell<TapeData> = RefCell::new(TapeData::default());
}

/// A tracked scalar. Copyable; the tape lives in thread-local storage.
#[derive(Clone, Copy, Debug, Default)]
pub struct Var {
    val: f64,
    idx: u32,
}

/// Guard for the thread's recording session.
pub struct Tape {
    _not_send: std::marker::PhantomData<*const ()>,
}

impl Tape {
    /// Starts a fresh recording session on this thread.
    ///
    /// Panics if another session is already live on the thread.
    pub fn new() -> Self {
        TAPE.with(|t| {
            let mut t = t.borrow_mut();
            assert!(!t.active, "a tape is already recording on this thread");
            t.active = true;
            t.nodes.clear();
            t.edges.clear();
        });
        Tape {
            _not_send: std::marker::PhantomData,
        }
    }

    /// Registers an independent input.
    pub fn var(&self, value: f64) -> Var {
        let idx = push_node(&[]);
        Var { val: value, idx }
    }

    pub fn vars(&self, values: &[f64]) -> Vec<Var> {
        values.iter().map(|&v| self.var(v)).collect()
    }

    pub fn len(&self) -> usize {
        TAPE.with(|t| t.borrow().nodes.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Adjoints of `output` with respect to every recorded node, indexed by
    /// node id. Inputs created first occupy the leading ids.
    pub fn adjoints(&self, output: Var) -> Vec<f64> {
        TAPE.with(|t| {
            let t = t.borrow();
            let mut adj = vec![0.0; t.nodes.len()];
            if output.idx == CONST {
                return adj;
            }
            adj[output.idx as usize] = 1.0;
            for n in (0..=output.idx as usize).rev() {
                let a = adj[n];
                if a == 0.0 {
                    continue;
                }
                let (start, len) = t.nodes[n];
                for &(p, w) in &t.edges[start as usize..(start + len) as usize] {
                    adj[p as usize] += a * w;
                }
            }
            adj
        })
    }

    /// Gradient of `output` with respect to `inputs`.
    pub fn gradient(&self, output: Var, inputs: &[Var]) -> Vec<f64> {
        let adj = self.adjoints(output);
        inputs
            .iter()
            .map(|v| if v.idx == CONST { 0.0 } else { adj[v.idx as usize] })
            .collect()
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Drop for Tape {
    fn drop(&mut self) {
        TAPE.with(|t| {
            let mut t = t.borrow_mut();
            t.active = false;
            t.nodes.clear();
            t.edges.clear();
            t.nodes.shrink_to(1 << 16);
            t.edges.shrink_to(1 << 16);
        });
    }
}

fn push_node(parents: &[(u32, f64)]) -> u32 {
    TAPE.with(|t| {
        let mut t = t.borrow_mut();
        assert!(t.active, "tracked operation without a live tape");
        let start = t.edges.len() as u32;
        let mut len = 0;
        for &(p, w) in parents {
            if p != CONST {
                t.edges.push((p, w));
                len += 1;
            }
        }
        let idx = t.nodes.len() as u32;
        t.nodes.push((start, len));
        idx
    })
}

#[inline]
fn record(val: f64, parents: &[(u32, f64)]) -> Var {
    if parents.iter().all(|p| p.0 == CONST) {
        return Var { val, idx: CONST };
    }
    Var {
        val,
        idx: push_node(parents),
    }
}

impl Var {
    pub fn val(self) -> f64 {
        self.val
    }

    pub fn is_constant(self) -> bool {
        self.idx == CONST
    }

    fn unary(self, val: f64, d: f64) -> Var {
        record(val, &[(self.idx, d)])
    }
}

impl Add for Var {
    type Output = Var;
    fn add(self, o: Var) -> Var {
        record(self.val + o.val, &[(self.idx, 1.0), (o.idx, 1.0)])
    }
}

impl Sub for Var {
    type Output = Var;
    fn sub(self, o: Var) -> Var {
        record(self.val - o.val, &[(self.idx, 1.0), (o.idx, -1.0)])
    }
}

impl Mul for Var {
    type Output = Var;
    fn mul(self, o: Var) -> Var {
        record(self.val * o.val, &[(self.idx, o.val), (o.idx, self.val)])
    }
}

impl Div for Var {
    type Output = Var;
    fn div(self, o: Var) -> Var {
        let q = self.val / o.val;
        record(q, &[(self.idx, 1.0 / o.val), (o.idx, -q / o.val)])
    }
}

impl Neg for Var {
    type Output = Var;
    fn neg(self) -> Var {
        self.unary(-self.val, -1.0)
    }
}

impl AddAssign for Var {
    fn add_assign(&mut self, o: Var) {
        *self = *self + o;
    }
}

impl SubAssign for Var {
    fn sub_assign(&mut self, o: Var) {
        *self = *self - o;
    }
}

impl MulAssign for Var {
    fn mul_assign(&mut self, o: Var) {
        *self = *self * o;
    }
}

impl Scalar for Var {
    const TRACKED: bool = true;

    fn constant(v: f64) -> Self {
        Var { val: v, idx: CONST }
    }

    fn value(self) -> f64 {
        self.val
    }

    fn exp(self) -> Self {
        let e = self.val.exp();
        self.unary(e, e)
    }

    fn ln(self) -> Self {
        self.unary(self.val.ln(), 1.0 / self.val)
    }

    fn sqrt(self) -> Self {
        let s = self.val.sqrt();
        self.unary(s, 0.5 / s)
    }

    fn sin(self) -> Self {
        self.unary(self.val.sin(), self.val.cos())
    }

    fn cos(self) -> Self {
        self.unary(self.val.cos(), -self.val.sin())
    }

    fn abs(self) -> Self {
        let d = if self.val > 0.0 {
            1.0
        } else if self.val < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.unary(self.val.abs(), d)
    }

    fn sigmoid(self) -> Self {
        let s = sigmoid_f64(self.val);
        self.unary(s, s * (1.0 - s))
    }

    fn softplus(self) -> Self {
        self.unary(softplus_f64(self.val), sigmoid_f64(self.val))
    }

    fn silu(self) -> Self {
        let s = sigmoid_f64(self.val);
        self.unary(self.val * s, s + self.val * s * (1.0 - s))
    }

    fn sqrt_relu(self) -> Self {
        if self.val > 0.0 {
            let r = self.val.sqrt();
            self.unary(r, 0.5 / r)
        } else {
            Var::constant(0.0)
        }
    }

    fn dot(a: &[Self], b: &[Self]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        let av: Vec<f64> = a.iter().map(|v| v.val).collect();
        let bv: Vec<f64> = b.iter().map(|v| v.val).collect();
        let val = dot_f64(&av, &bv);
        let mut parents = Vec::with_capacity(2 * a.len());
        for (x, y) in a.iter().zip(b) {
            parents.push((x.idx, y.val));
            parents.push((y.idx, x.val));
        }
        record(val, &parents)
    }

    fn dot_const(a: &[Self], b: &[f64]) -> Self {
        let av: Vec<f64> = a.iter().map(|v| v.val).collect();
        let val = dot_f64(&av, b);
        let parents: Vec<(u32, f64)> = a.iter().zip(b).map(|(x, &w)| (x.idx, w)).collect();
        record(val, &parents)
    }

    fn sum(xs: &[Self]) -> Self {
        let val = xs.iter().map(|v| v.val).sum();
        let parents: Vec<(u32, f64)> = xs.iter().map(|v| (v.idx, 1.0)).collect();
        record(val, &parents)
    }

    fn from_op(value: f64, parents: &[(Self, f64)]) -> Self {
        let p: Vec<(u32, f64)> = parents.iter().map(|(v, d)| (v.idx, *d)).collect();
        record(value, &p)
    }
}
