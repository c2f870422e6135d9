//! Gated constrained networks: input-convex, positive-monotone, and an
//! unconstrained MLP baseline.
//!
//! Input convexity comes from nonnegative inner weights plus a convex
//! nondecreasing activation (softplus); the input also feeds every layer
//! past the first through unconstrained passthrough weights. The monotone
//! network keeps every trainable parameter nonnegative and uses a sigmoid
//! activation, giving outputs that are nonnegative and nondecreasing in
//! each input. Nonnegativity is enforced by projection (clamp after the
//! optimizer step), so magnitudes stay in the units of the exported
//! expression and can hit exact zeros.

use serde::{Deserialize, Serialize};

use crate::autodiff::{sigmoid_f, softplus_f, Tape, Var};
use crate::gates::{self, GateConstants, GatedParam};
use crate::random::Stream;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Softplus,
    Sigmoid,
}

impl Activation {
    fn apply_var<'t>(&self, x: Var<'t>) -> Result<Var<'t>> {
        match self {
            Activation::Softplus => x.softplus(),
            Activation::Sigmoid => x.sigmoid(),
        }
    }

    fn apply_f(&self, x: f64) -> f64 {
        match self {
            Activation::Softplus => softplus_f(x),
            Activation::Sigmoid => sigmoid_f(x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Input-convex network; weights of layer 2 onward are nonnegative.
    Icnn,
    /// Positive monotone network; all parameters nonnegative.
    Monotone,
    /// Unconstrained baseline.
    Mlp,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<GatedParam>, // row-major
}

impl ParamMatrix {
    fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![GatedParam::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn get(&self, r: usize, c: usize) -> &GatedParam {
        &self.data[r * self.cols + c]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseLayer {
    pub w: ParamMatrix,
    pub b: Vec<GatedParam>,
    /// Passthrough weights from the network input (input-convex nets only,
    /// layers 2..L). Never constrained.
    pub pass: Option<ParamMatrix>,
    pub w_constrained: bool,
    pub b_constrained: bool,
}

/// A gated network. Layer l computes act(x W_l^T + x0 P_l^T + b_l); the
/// final layer is linear.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Model {
    pub kind: ModelKind,
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub gate_constants: GateConstants,
    /// Per-input positive scale applied as x/scale before the first
    /// layer. Conditions problems whose natural input units are far from
    /// O(1) (π-plane stresses, plastic strains); folded into the first
    /// layer on symbolic export, so expressions stay in original units.
    #[serde(default)]
    pub input_scale: Vec<f64>,
    pub layers: Vec<DenseLayer>,
}

impl Model {
    /// Zero-initialized model of the given widths (input first, output last).
    pub fn new(kind: ModelKind, widths: &[usize]) -> Self {
        assert!(widths.len() >= 2, "need at least input and output widths");
        let activation = match kind {
            ModelKind::Icnn | ModelKind::Mlp => Activation::Softplus,
            ModelKind::Monotone => Activation::Sigmoid,
        };
        let n0 = widths[0];
        let mut layers = Vec::new();
        for l in 0..widths.len() - 1 {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let pass = if kind == ModelKind::Icnn && l > 0 {
                Some(ParamMatrix::zeros(fan_out, n0))
            } else {
                None
            };
            layers.push(DenseLayer {
                w: ParamMatrix::zeros(fan_out, fan_in),
                b: vec![GatedParam::new(0.0, 0.0); fan_out],
                pass,
                w_constrained: match kind {
                    ModelKind::Icnn => l > 0,
                    ModelKind::Monotone => true,
                    ModelKind::Mlp => false,
                },
                b_constrained: kind == ModelKind::Monotone,
            });
        }
        Model {
            kind,
            widths: widths.to_vec(),
            activation,
            gate_constants: GateConstants::default(),
            input_scale: Vec::new(),
            layers,
        }
    }

    /// Set per-input scales; entries must be positive and finite.
    pub fn set_input_scale(&mut self, scale: &[f64]) {
        assert_eq!(scale.len(), self.input_width());
        assert!(scale.iter().all(|s| s.is_finite() && *s > 0.0));
        self.input_scale = scale.to_vec();
    }

    fn scale_of(&self, k: usize) -> f64 {
        self.input_scale.get(k).copied().unwrap_or(1.0)
    }

    /// Random initialization: weights ~ N(0, 1/√fan-in), constrained weights
    /// folded to their absolute value, biases zero, gate logits ~ N(0, 0.01).
    pub fn init(kind: ModelKind, widths: &[usize], rng: &mut Stream) -> Self {
        let mut m = Self::new(kind, widths);
        for layer in &mut m.layers {
            let std_w = 1.0 / (layer.w.cols as f64).sqrt();
            let constrained = layer.w_constrained;
            for p in &mut layer.w.data {
                let mut v = rng.normal_scaled(std_w);
                if constrained {
                    v = v.abs();
                }
                p.theta_bar = v;
                p.log_alpha = rng.normal_scaled(0.01);
            }
            for p in &mut layer.b {
                p.theta_bar = 0.0;
                p.log_alpha = rng.normal_scaled(0.01);
            }
            if let Some(pass) = &mut layer.pass {
                let std_p = 1.0 / (pass.cols as f64).sqrt();
                for p in &mut pass.data {
                    p.theta_bar = rng.normal_scaled(std_p);
                    p.log_alpha = rng.normal_scaled(0.01);
                }
            }
        }
        m
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.w.data.len() + l.b.len() + l.pass.as_ref().map_or(0, |p| p.data.len()))
            .sum()
    }

    /// Flat parameter order: per layer, W row-major, then biases, then
    /// passthrough row-major. This order is the contract for optimizer
    /// state and gradients.
    pub fn for_each_param(&self, mut f: impl FnMut(&GatedParam, bool)) {
        for l in &self.layers {
            for p in &l.w.data {
                f(p, l.w_constrained);
            }
            for p in &l.b {
                f(p, l.b_constrained);
            }
            if let Some(pass) = &l.pass {
                for p in &pass.data {
                    f(p, false);
                }
            }
        }
    }

    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(&mut GatedParam, bool)) {
        for l in &mut self.layers {
            let wc = l.w_constrained;
            let bc = l.b_constrained;
            for p in &mut l.w.data {
                f(p, wc);
            }
            for p in &mut l.b {
                f(p, bc);
            }
            if let Some(pass) = &mut l.pass {
                for p in &mut pass.data {
                    f(p, false);
                }
            }
        }
    }

    pub fn params_flat(&self) -> Vec<GatedParam> {
        let mut v = Vec::with_capacity(self.n_params());
        self.for_each_param(|p, _| v.push(*p));
        v
    }

    /// Clamp constrained magnitudes to be nonnegative. Call after every
    /// optimizer step.
    pub fn project_constraints(&mut self) {
        self.for_each_param_mut(|p, constrained| {
            if constrained && p.theta_bar < 0.0 {
                p.theta_bar = 0.0;
            }
        });
    }

    /// Parameters that survive test-time gating with nonzero value.
    pub fn active_params(&self) -> usize {
        gates::active_count(&self.params_flat(), &self.gate_constants)
    }

    /// Lift θ̄ and log α as differentiable tape inputs and build the
    /// expected-L0 penalty. Gate noise is drawn per [`TrainParams::sample_gates`]
    /// call, so one lift supports several Monte Carlo samples per step.
    pub fn lift_params<'m, 't>(&'m self, tape: &'t Tape) -> Result<TrainParams<'m, 't>> {
        let c = self.gate_constants;
        let n = self.n_params();
        let mut theta = Vec::with_capacity(n);
        let mut alpha = Vec::with_capacity(n);
        let mut penalty: Option<Var<'t>> = None;
        let mut res = Ok(());
        self.for_each_param(|p, _| {
            if res.is_err() {
                return;
            }
            res = (|| -> Result<()> {
                let th = tape.input(p.theta_bar);
                let la = tape.input(p.log_alpha);
                let pen = gates::expected_l0_penalty(la, &c)?;
                penalty = Some(match penalty {
                    None => pen,
                    Some(acc) => acc + pen,
                });
                theta.push(th);
                alpha.push(la);
                Ok(())
            })();
        });
        res?;
        Ok(TrainParams {
            model: self,
            theta,
            alpha,
            penalty: penalty.expect("nonempty model"),
        })
    }

    /// Lift with deterministic test gates; parameters enter as constants.
    pub fn lift_test<'m, 't>(&'m self, tape: &'t Tape) -> Lifted<'m, 't> {
        let c = self.gate_constants;
        let mut effective = Vec::with_capacity(self.n_params());
        self.for_each_param(|p, _| effective.push(tape.constant(p.effective(&c))));
        Lifted {
            model: self,
            effective,
        }
    }

    /// Lift with gates forced open and no penalty: a plain network in θ̄.
    /// Returns the θ̄ input handles for gradient access.
    pub fn lift_open<'m, 't>(&'m self, tape: &'t Tape) -> (Lifted<'m, 't>, Vec<Var<'t>>) {
        let mut effective = Vec::with_capacity(self.n_params());
        let mut theta = Vec::with_capacity(self.n_params());
        self.for_each_param(|p, _| {
            let th = tape.input(p.theta_bar);
            effective.push(th);
            theta.push(th);
        });
        (
            Lifted {
                model: self,
                effective,
            },
            theta,
        )
    }

    /// Plain forward pass with test-time effective parameters.
    pub fn eval_test(&self, x0: &[f64]) -> Result<Vec<f64>> {
        let c = self.gate_constants;
        let mut eff = Vec::with_capacity(self.n_params());
        self.for_each_param(|p, _| eff.push(p.effective(&c)));
        self.eval_with(&eff, x0)
    }

    /// Plain forward pass ignoring gates (raw θ̄).
    pub fn eval_raw(&self, x0: &[f64]) -> Result<Vec<f64>> {
        let mut eff = Vec::with_capacity(self.n_params());
        self.for_each_param(|p, _| eff.push(p.theta_bar));
        self.eval_with(&eff, x0)
    }

    fn eval_with(&self, eff: &[f64], x0_raw: &[f64]) -> Result<Vec<f64>> {
        if x0_raw.len() != self.input_width() {
            return Err(Error::ShapeError {
                expected: self.input_width(),
                got: x0_raw.len(),
            });
        }
        let x0: Vec<f64> = x0_raw
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let s = self.scale_of(k);
                if s == 1.0 {
                    *v
                } else {
                    v / s
                }
            })
            .collect();
        let mut cursor = 0usize;
        let mut x: Vec<f64> = x0.to_vec();
        let n_layers = self.layers.len();
        for (li, layer) in self.layers.iter().enumerate() {
            let (rows, cols) = (layer.w.rows, layer.w.cols);
            let w = &eff[cursor..cursor + rows * cols];
            cursor += rows * cols;
            let b = &eff[cursor..cursor + rows];
            cursor += rows;
            let pass = layer.pass.as_ref().map(|p| {
                let s = &eff[cursor..cursor + p.rows * p.cols];
                cursor += p.rows * p.cols;
                (s, p.cols)
            });
            let mut next = Vec::with_capacity(rows);
            for r in 0..rows {
                let mut acc = 0.0;
                for k in 0..cols {
                    acc += w[r * cols + k] * x[k];
                }
                if let Some((ps, pc)) = pass {
                    for k in 0..pc {
                        acc += ps[r * pc + k] * x0[k];
                    }
                }
                acc += b[r];
                next.push(if li + 1 == n_layers {
                    acc
                } else {
                    self.activation.apply_f(acc)
                });
            }
            x = next;
        }
        for v in &x {
            if !v.is_finite() {
                return Err(Error::NonFiniteValue { op: "forward" });
            }
        }
        Ok(x)
    }
}

/// Trainable parameters lifted as tape inputs, before gate sampling.
pub struct TrainParams<'m, 't> {
    model: &'m Model,
    pub theta: Vec<Var<'t>>,
    pub alpha: Vec<Var<'t>>,
    pub penalty: Var<'t>,
}

impl<'m, 't> TrainParams<'m, 't> {
    /// Draw fresh hard-concrete gates (one uniform per parameter) and
    /// return the gated forward-pass carrier for this Monte Carlo sample.
    pub fn sample_gates(&self, rng: &mut Stream) -> Result<Lifted<'m, 't>> {
        let draws: Vec<f64> = self.theta.iter().map(|_| rng.uniform_open()).collect();
        self.gates_from_noise(&draws)
    }

    /// Antithetic pair of gate samples sharing one noise draw: (u, 1−u).
    /// Averaging the pair cancels the odd component of the pathwise
    /// gradient noise, which the L0 gates otherwise feed into Adam's
    /// second moment.
    pub fn sample_gates_antithetic(
        &self,
        rng: &mut Stream,
    ) -> Result<(Lifted<'m, 't>, Lifted<'m, 't>)> {
        let draws: Vec<f64> = self.theta.iter().map(|_| rng.uniform_open()).collect();
        let mirrored: Vec<f64> = draws.iter().map(|u| 1.0 - u).collect();
        Ok((
            self.gates_from_noise(&draws)?,
            self.gates_from_noise(&mirrored)?,
        ))
    }

    fn gates_from_noise(&self, draws: &[f64]) -> Result<Lifted<'m, 't>> {
        let c = self.model.gate_constants;
        let mut effective = Vec::with_capacity(self.theta.len());
        for ((&th, &la), &u) in self.theta.iter().zip(&self.alpha).zip(draws) {
            let z = gates::sample_gate(la, u, &c)?;
            effective.push(th * z);
        }
        Ok(Lifted {
            model: self.model,
            effective,
        })
    }

    /// Flat gradient layout: all θ̄ inputs then all log α inputs.
    pub fn wrt(&self) -> Vec<Var<'t>> {
        let mut v = Vec::with_capacity(self.theta.len() * 2);
        v.extend_from_slice(&self.theta);
        v.extend_from_slice(&self.alpha);
        v
    }
}

/// A model's effective parameters materialized on a tape.
pub struct Lifted<'m, 't> {
    model: &'m Model,
    pub effective: Vec<Var<'t>>,
}

impl<'m, 't> Lifted<'m, 't> {
    pub fn model(&self) -> &'m Model {
        self.model
    }

    /// Forward pass over tape variables. The accumulation order matches
    /// the plain `f64` evaluators exactly.
    pub fn forward(&self, x0_raw: &[Var<'t>]) -> Result<Vec<Var<'t>>> {
        let m = self.model;
        if x0_raw.len() != m.input_width() {
            return Err(Error::ShapeError {
                expected: m.input_width(),
                got: x0_raw.len(),
            });
        }
        let mut x0: Vec<Var<'t>> = Vec::with_capacity(x0_raw.len());
        for (k, v) in x0_raw.iter().enumerate() {
            let s = m.scale_of(k);
            x0.push(if s == 1.0 { *v } else { v.scale(1.0 / s)? });
        }
        let eff = &self.effective;
        let mut cursor = 0usize;
        let mut x: Vec<Var<'t>> = x0.to_vec();
        let n_layers = m.layers.len();
        for (li, layer) in m.layers.iter().enumerate() {
            let (rows, cols) = (layer.w.rows, layer.w.cols);
            let w = &eff[cursor..cursor + rows * cols];
            cursor += rows * cols;
            let b = &eff[cursor..cursor + rows];
            cursor += rows;
            let pass = layer.pass.as_ref().map(|p| {
                let s = &eff[cursor..cursor + p.rows * p.cols];
                cursor += p.rows * p.cols;
                (s, p.cols)
            });
            let mut next = Vec::with_capacity(rows);
            for r in 0..rows {
                let mut acc = w[r * cols] * x[0];
                for k in 1..cols {
                    acc = acc + w[r * cols + k] * x[k];
                }
                if let Some((ps, pc)) = pass {
                    for k in 0..pc {
                        acc = acc + ps[r * pc + k] * x0[k];
                    }
                }
                acc = acc + b[r];
                next.push(if li + 1 == n_layers {
                    acc
                } else {
                    m.activation.apply_var(acc)?
                });
            }
            x = next;
        }
        Ok(x)
    }

    /// Scalar convenience for potential-style networks.
    pub fn forward_scalar(&self, x0: &[Var<'t>]) -> Result<Var<'t>> {
        Ok(self.forward(x0)?[0])
    }
}
