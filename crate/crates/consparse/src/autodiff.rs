//! Scalar reverse-mode automatic differentiation on a replayable tape.
//!
//! The tape records forward operations in topological order. A backward
//! sweep can either produce plain `f64` derivatives ([`Tape::grad`]) or be
//! itself recorded as new tape operations ([`Tape::grad_vars`]). The second
//! form makes input-gradients (stresses derived from a potential) ordinary
//! differentiable quantities, which is what training losses defined on
//! stresses need: a later plain sweep from the loss reaches the parameters
//! through the recorded backward pass.
//!
//! Depth is capped at two in practice (gradient of a gradient); nothing in
//! the representation forbids deeper nesting.

use std::cell::RefCell;
use std::ops::{Add, Mul, Neg, Sub};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
enum Op {
    Const,
    Input,
    Add(usize, usize),
    Mul(usize, usize),
    Neg(usize),
    Recip(usize),
    Exp(usize),
    Ln(usize),
    PowConst(usize, f64),
    Sigmoid(usize),
    Softplus(usize),
    MaxConst(usize, f64),
    MinConst(usize, f64),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Const => "const",
            Op::Input => "input",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::Neg(..) => "neg",
            Op::Recip(..) => "recip",
            Op::Exp(..) => "exp",
            Op::Ln(..) => "ln",
            Op::PowConst(..) => "pow-const",
            Op::Sigmoid(..) => "sigmoid",
            Op::Softplus(..) => "softplus",
            Op::MaxConst(..) => "max-const",
            Op::MinConst(..) => "min-const",
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    op: Op,
    value: f64,
}

/// Recording tape. Single-threaded; independent tapes may live on
/// separate threads with no shared state.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a scalar on a tape. Copyable; combining variables from
/// different tapes is a programming error and panics.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: usize,
    value: f64,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var(#{} = {})", self.idx, self.value)
    }
}

/// Numerically stable ln(1 + e^x).
pub fn softplus_f(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Numerically stable logistic function.
pub fn sigmoid_f(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    /// Drop all nodes but keep the allocation, for reuse across epochs.
    pub fn clear(&self) {
        self.nodes.borrow_mut().clear();
    }

    fn push(&self, op: Op, value: f64) -> Result<Var<'_>> {
        if !value.is_finite() {
            return Err(Error::NonFiniteValue { op: op.name() });
        }
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.len();
        nodes.push(Node { op, value });
        Ok(Var {
            tape: self,
            idx,
            value,
        })
    }

    /// A differentiable leaf (parameter or input of interest).
    pub fn input(&self, value: f64) -> Var<'_> {
        assert!(value.is_finite(), "tape input must be finite, got {value}");
        self.push(Op::Input, value).expect("finite checked")
    }

    /// A constant leaf. Constants can still be differentiated against.
    pub fn constant(&self, value: f64) -> Var<'_> {
        assert!(
            value.is_finite(),
            "tape constant must be finite, got {value}"
        );
        self.push(Op::Const, value).expect("finite checked")
    }

    fn value_of(&self, idx: usize) -> f64 {
        self.nodes.borrow()[idx].value
    }

    fn var_at(&self, idx: usize) -> Var<'_> {
        Var {
            tape: self,
            idx,
            value: self.value_of(idx),
        }
    }

    /// Plain reverse sweep: d(output)/d(wrt_i) as numbers.
    ///
    /// Non-finite adjoints propagate; callers that care (the optimizer)
    /// check the returned values.
    pub fn grad(&self, output: Var<'_>, wrt: &[Var<'_>]) -> Vec<f64> {
        for v in wrt {
            assert!(std::ptr::eq(v.tape, self), "wrt var from another tape");
        }
        assert!(
            std::ptr::eq(output.tape, self),
            "output var from another tape"
        );
        let nodes = self.nodes.borrow();
        let lo = wrt.iter().map(|v| v.idx).min().unwrap_or(output.idx);
        let lo = lo.min(output.idx);
        let mut adj = vec![0.0f64; output.idx - lo + 1];
        adj[output.idx - lo] = 1.0;
        let send = |adj: &mut Vec<f64>, parent: usize, contrib: f64| {
            if parent >= lo {
                adj[parent - lo] += contrib;
            }
        };
        for i in (lo..=output.idx).rev() {
            let a = adj[i - lo];
            if a == 0.0 {
                continue;
            }
            match nodes[i].op {
                Op::Const | Op::Input => {}
                Op::Add(p, q) => {
                    send(&mut adj, p, a);
                    send(&mut adj, q, a);
                }
                Op::Mul(p, q) => {
                    send(&mut adj, p, a * nodes[q].value);
                    send(&mut adj, q, a * nodes[p].value);
                }
                Op::Neg(p) => send(&mut adj, p, -a),
                Op::Recip(p) => {
                    let y = nodes[i].value;
                    send(&mut adj, p, -a * y * y);
                }
                Op::Exp(p) => send(&mut adj, p, a * nodes[i].value),
                Op::Ln(p) => send(&mut adj, p, a / nodes[p].value),
                Op::PowConst(p, c) => {
                    send(&mut adj, p, a * c * nodes[p].value.powf(c - 1.0));
                }
                Op::Sigmoid(p) => {
                    let y = nodes[i].value;
                    send(&mut adj, p, a * y * (1.0 - y));
                }
                Op::Softplus(p) => send(&mut adj, p, a * sigmoid_f(nodes[p].value)),
                Op::MaxConst(p, c) => {
                    if nodes[p].value > c {
                        send(&mut adj, p, a);
                    }
                }
                Op::MinConst(p, c) => {
                    if nodes[p].value < c {
                        send(&mut adj, p, a);
                    }
                }
            }
        }
        wrt.iter().map(|v| adj[v.idx - lo]).collect()
    }

    /// Recording reverse sweep: d(output)/d(wrt_i) as new tape variables.
    ///
    /// Only nodes on paths from `wrt` to `output` are processed, so the
    /// cost is bounded by the segment created after the first `wrt` leaf.
    /// The returned variables can themselves be differentiated, which is
    /// how second derivatives (parameter gradients of stresses) arise.
    pub fn grad_vars<'t>(&'t self, output: Var<'t>, wrt: &[Var<'t>]) -> Result<Vec<Var<'t>>> {
        assert!(
            std::ptr::eq(output.tape, self),
            "output var from another tape"
        );
        for v in wrt {
            assert!(std::ptr::eq(v.tape, self), "wrt var from another tape");
        }
        if wrt.is_empty() {
            return Ok(Vec::new());
        }
        let lo = wrt.iter().map(|v| v.idx).min().unwrap().min(output.idx);
        let hi = output.idx;
        let width = hi - lo + 1;

        // Nodes that depend on some wrt leaf.
        let mut from_wrt = vec![false; width];
        for v in wrt {
            from_wrt[v.idx - lo] = true;
        }
        {
            let nodes = self.nodes.borrow();
            for i in lo..=hi {
                if from_wrt[i - lo] {
                    continue;
                }
                let dep = |p: usize| p >= lo && from_wrt[p - lo];
                from_wrt[i - lo] = match nodes[i].op {
                    Op::Const | Op::Input => false,
                    Op::Add(p, q) | Op::Mul(p, q) => dep(p) || dep(q),
                    Op::Neg(p)
                    | Op::Recip(p)
                    | Op::Exp(p)
                    | Op::Ln(p)
                    | Op::PowConst(p, _)
                    | Op::Sigmoid(p)
                    | Op::Softplus(p)
                    | Op::MaxConst(p, _)
                    | Op::MinConst(p, _) => dep(p),
                };
            }
        }

        // Nodes the output depends on.
        let mut to_out = vec![false; width];
        to_out[hi - lo] = true;
        {
            let nodes = self.nodes.borrow();
            for i in (lo..=hi).rev() {
                if !to_out[i - lo] {
                    continue;
                }
                let mut mark = |p: usize| {
                    if p >= lo {
                        to_out[p - lo] = true;
                    }
                };
                match nodes[i].op {
                    Op::Const | Op::Input => {}
                    Op::Add(p, q) | Op::Mul(p, q) => {
                        mark(p);
                        mark(q);
                    }
                    Op::Neg(p)
                    | Op::Recip(p)
                    | Op::Exp(p)
                    | Op::Ln(p)
                    | Op::PowConst(p, _)
                    | Op::Sigmoid(p)
                    | Op::Softplus(p)
                    | Op::MaxConst(p, _)
                    | Op::MinConst(p, _) => mark(p),
                }
            }
        }

        let mut adj: Vec<Option<Var<'t>>> = vec![None; width];
        adj[hi - lo] = Some(self.constant(1.0));
        let accumulate = |slot: &mut Option<Var<'t>>, contrib: Var<'t>| -> Result<()> {
            *slot = Some(match slot.take() {
                None => contrib,
                Some(prev) => prev.add_checked(contrib)?,
            });
            Ok(())
        };

        for i in (lo..=hi).rev() {
            if !to_out[i - lo] || !from_wrt[i - lo] {
                continue;
            }
            let a = match adj[i - lo] {
                Some(a) => a,
                None => continue,
            };
            // Reads of node metadata are done before recording new nodes.
            let (op, value) = {
                let nodes = self.nodes.borrow();
                (nodes[i].op, nodes[i].value)
            };
            let active = |p: usize| p >= lo && from_wrt[p - lo];
            match op {
                Op::Const | Op::Input => {}
                Op::Add(p, q) => {
                    if active(p) {
                        accumulate(&mut adj[p - lo], a)?;
                    }
                    if active(q) {
                        accumulate(&mut adj[q - lo], a)?;
                    }
                }
                Op::Mul(p, q) => {
                    if active(p) {
                        let c = a.mul_checked(self.var_at(q))?;
                        accumulate(&mut adj[p - lo], c)?;
                    }
                    if active(q) {
                        let c = a.mul_checked(self.var_at(p))?;
                        accumulate(&mut adj[q - lo], c)?;
                    }
                }
                Op::Neg(p) => {
                    if active(p) {
                        accumulate(&mut adj[p - lo], a.neg_checked()?)?;
                    }
                }
                Op::Recip(p) => {
                    if active(p) {
                        let y = self.var_at(i);
                        let c = a.mul_checked(y)?.mul_checked(y)?.neg_checked()?;
                        accumulate(&mut adj[p - lo], c)?;
                    }
                }
                Op::Exp(p) => {
                    if active(p) {
                        let c = a.mul_checked(self.var_at(i))?;
                        accumulate(&mut adj[p - lo], c)?;
                    }
                }
                Op::Ln(p) => {
                    if active(p) {
                        let c = a.mul_checked(self.var_at(p).recip()?)?;
                        accumulate(&mut adj[p - lo], c)?;
                    }
                }
                Op::PowConst(p, c) => {
                    if active(p) {
                        let contrib = if c == 1.0 {
                            a
                        } else {
                            let d = self.var_at(p).pow_const(c - 1.0)?.scale(c)?;
                            a.mul_checked(d)?
                        };
                        accumulate(&mut adj[p - lo], contrib)?;
                    }
                }
                Op::Sigmoid(p) => {
                    if active(p) {
                        let y = self.var_at(i);
                        let one_minus = y.neg_checked()?.offset(1.0)?;
                        let c = a.mul_checked(y)?.mul_checked(one_minus)?;
                        accumulate(&mut adj[p - lo], c)?;
                    }
                }
                Op::Softplus(p) => {
                    if active(p) {
                        let c = a.mul_checked(self.var_at(p).sigmoid()?)?;
                        accumulate(&mut adj[p - lo], c)?;
                    }
                }
                Op::MaxConst(p, c) => {
                    if active(p) && value > c && self.value_of(p) > c {
                        accumulate(&mut adj[p - lo], a)?;
                    }
                }
                Op::MinConst(p, c) => {
                    if active(p) && self.value_of(p) < c {
                        accumulate(&mut adj[p - lo], a)?;
                    }
                }
            }
        }

        let mut out = Vec::with_capacity(wrt.len());
        for v in wrt {
            out.push(match adj[v.idx - lo] {
                Some(a) => a,
                None => self.constant(0.0),
            });
        }
        Ok(out)
    }

    /// d(d output / d inner) / d(outer_i): record the inner gradient, then
    /// run a plain sweep over it.
    pub fn grad_of_grad<'t>(
        &'t self,
        output: Var<'t>,
        inner: Var<'t>,
        outer: &[Var<'t>],
    ) -> Result<Vec<f64>> {
        let g = self.grad_vars(output, &[inner])?[0];
        Ok(self.grad(g, outer))
    }
}

impl<'t> Var<'t> {
    pub fn value(self) -> f64 {
        self.value
    }

    pub fn tape(self) -> &'t Tape {
        self.tape
    }

    fn same_tape(self, other: Var<'t>) {
        assert!(
            std::ptr::eq(self.tape, other.tape),
            "vars from different tapes combined"
        );
    }

    pub fn add_checked(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(rhs);
        self.tape
            .push(Op::Add(self.idx, rhs.idx), self.value + rhs.value)
    }

    pub fn mul_checked(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(rhs);
        self.tape
            .push(Op::Mul(self.idx, rhs.idx), self.value * rhs.value)
    }

    pub fn neg_checked(self) -> Result<Var<'t>> {
        self.tape.push(Op::Neg(self.idx), -self.value)
    }

    pub fn recip(self) -> Result<Var<'t>> {
        self.tape.push(Op::Recip(self.idx), self.value.recip())
    }

    pub fn exp(self) -> Result<Var<'t>> {
        self.tape.push(Op::Exp(self.idx), self.value.exp())
    }

    pub fn ln(self) -> Result<Var<'t>> {
        self.tape.push(Op::Ln(self.idx), self.value.ln())
    }

    pub fn pow_const(self, c: f64) -> Result<Var<'t>> {
        self.tape
            .push(Op::PowConst(self.idx, c), self.value.powf(c))
    }

    pub fn sigmoid(self) -> Result<Var<'t>> {
        self.tape.push(Op::Sigmoid(self.idx), sigmoid_f(self.value))
    }

    pub fn softplus(self) -> Result<Var<'t>> {
        self.tape
            .push(Op::Softplus(self.idx), softplus_f(self.value))
    }

    /// max(self, c). Subgradient is 1 strictly above c, 0 otherwise.
    pub fn max_const(self, c: f64) -> Result<Var<'t>> {
        self.tape.push(Op::MaxConst(self.idx, c), self.value.max(c))
    }

    /// min(self, c). Subgradient is 1 strictly below c, 0 otherwise.
    pub fn min_const(self, c: f64) -> Result<Var<'t>> {
        self.tape.push(Op::MinConst(self.idx, c), self.value.min(c))
    }

    /// Clamp to [0, 1]; gradient is 1 strictly inside, 0 at and beyond
    /// the kinks.
    pub fn clamp01(self) -> Result<Var<'t>> {
        self.max_const(0.0)?.min_const(1.0)
    }

    pub fn div_checked(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.mul_checked(rhs.recip()?)
    }

    /// Multiply by a plain constant.
    pub fn scale(self, k: f64) -> Result<Var<'t>> {
        self.mul_checked(self.tape.constant(k))
    }

    /// Add a plain constant.
    pub fn offset(self, k: f64) -> Result<Var<'t>> {
        self.add_checked(self.tape.constant(k))
    }
}

// Operator sugar for the pure-arithmetic ops. These can only go non-finite
// by overflowing past 1e308, which for the problem scales here indicates a
// bug rather than a data condition, so they panic instead of returning
// Result. Domain-sensitive ops (exp, ln, recip, pow) stay fallible.
impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.add_checked(rhs).expect("add overflow")
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        let n = rhs.neg_checked().expect("neg overflow");
        self.add_checked(n).expect("sub overflow")
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.mul_checked(rhs).expect("mul overflow")
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.neg_checked().expect("neg overflow")
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Var<'t> {
        self.offset(rhs).expect("add overflow")
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Var<'t> {
        self.offset(-rhs).expect("sub overflow")
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Var<'t> {
        self.scale(rhs).expect("mul overflow")
    }
}

impl<'t> Sub<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        let n = rhs.neg_checked().expect("neg overflow");
        n.offset(self).expect("sub overflow")
    }
}

impl<'t> Mul<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        rhs.scale(self).expect("mul overflow")
    }
}
