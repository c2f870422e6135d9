//! Closed-form export of trained gated networks.
//!
//! A test-gated network is a composition of affine maps, softplus, and
//! sigmoid, so it converts exactly into an expression tree. Simplification
//! removes gated-away branches and folds weighted softplus sums into
//! single logarithms of products of (1 + e^(·))^w factors, the
//! presentation used throughout the discovered-model literature.
//! Expression equality is decided numerically (random-point evaluation),
//! not by canonical-form algebra.

use serde::{Deserialize, Serialize};

use crate::autodiff::sigmoid_f;
use crate::nets::{Activation, Model};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Expr {
    Const {
        value: f64,
    },
    Symbol {
        name: String,
    },
    Add {
        terms: Vec<Expr>,
    },
    Mul {
        factors: Vec<Expr>,
    },
    Pow {
        base: Box<Expr>,
        exponent: Box<Expr>,
    },
    Exp {
        arg: Box<Expr>,
    },
    Log {
        arg: Box<Expr>,
    },
    Sigmoid {
        arg: Box<Expr>,
    },
}

pub fn constant(v: f64) -> Expr {
    Expr::Const { value: v }
}

pub fn symbol(name: &str) -> Expr {
    Expr::Symbol { name: name.into() }
}

pub fn add(terms: Vec<Expr>) -> Expr {
    Expr::Add { terms }
}

pub fn mul(factors: Vec<Expr>) -> Expr {
    Expr::Mul { factors }
}

pub fn pow(base: Expr, exponent: Expr) -> Expr {
    Expr::Pow {
        base: Box::new(base),
        exponent: Box::new(exponent),
    }
}

pub fn exp(arg: Expr) -> Expr {
    Expr::Exp { arg: Box::new(arg) }
}

pub fn log(arg: Expr) -> Expr {
    Expr::Log { arg: Box::new(arg) }
}

pub fn sigmoid(arg: Expr) -> Expr {
    Expr::Sigmoid { arg: Box::new(arg) }
}

impl Expr {
    /// Evaluate with a symbol environment. Returns None for an unbound
    /// symbol; domain violations surface as non-finite values.
    pub fn eval(&self, env: &dyn Fn(&str) -> Option<f64>) -> Option<f64> {
        Some(match self {
            Expr::Const { value } => *value,
            Expr::Symbol { name } => env(name)?,
            Expr::Add { terms } => {
                let mut acc = 0.0;
                for t in terms {
                    acc += t.eval(env)?;
                }
                acc
            }
            Expr::Mul { factors } => {
                let mut acc = 1.0;
                for f in factors {
                    acc *= f.eval(env)?;
                }
                acc
            }
            Expr::Pow { base, exponent } => base.eval(env)?.powf(exponent.eval(env)?),
            Expr::Exp { arg } => arg.eval(env)?.exp(),
            Expr::Log { arg } => arg.eval(env)?.ln(),
            Expr::Sigmoid { arg } => sigmoid_f(arg.eval(env)?),
        })
    }

    /// Evaluate against named values.
    pub fn eval_with(&self, bindings: &[(&str, f64)]) -> Option<f64> {
        self.eval(&|name| bindings.iter().find(|(n, _)| *n == name).map(|(_, v)| *v))
    }

    pub fn contains(&self, pred: &dyn Fn(&Expr) -> bool) -> bool {
        if pred(self) {
            return true;
        }
        match self {
            Expr::Const { .. } | Expr::Symbol { .. } => false,
            Expr::Add { terms } => terms.iter().any(|t| t.contains(pred)),
            Expr::Mul { factors } => factors.iter().any(|f| f.contains(pred)),
            Expr::Pow { base, exponent } => base.contains(pred) || exponent.contains(pred),
            Expr::Exp { arg } | Expr::Log { arg } | Expr::Sigmoid { arg } => arg.contains(pred),
        }
    }
}

/// Physics wrapper applied around the bare network expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wrapper {
    /// The network itself (yield functions, hardening curves).
    Raw,
    /// Compressible potential: subtract the reference value and the
    /// stress-normalization slope times (J − 1).
    Compressible,
    /// Incompressible potential: subtract the reference value and
    /// (p + n)(J − 1) with p kept as a free symbol.
    Incompressible,
}

/// Exact expression of the test-gated forward pass.
pub fn extract_expression(model: &Model, wrapper: Wrapper, symbols: &[&str]) -> Result<Expr> {
    if symbols.len() != model.input_width() {
        return Err(Error::ShapeError {
            expected: model.input_width(),
            got: symbols.len(),
        });
    }
    let net = network_expression(model, symbols)?;
    Ok(match wrapper {
        Wrapper::Raw => net,
        Wrapper::Compressible => {
            let (psi_ref, slope) = compressible_reference(model)?;
            // Ψ̂ = Ψ_nn − Ψ_nn(3,3,1) − n(J−1)
            add(vec![
                net,
                constant(-psi_ref),
                mul(vec![
                    constant(-slope),
                    add(vec![symbol(symbols[2]), constant(-1.0)]),
                ]),
            ])
        }
        Wrapper::Incompressible => {
            let (psi_ref, slope) = incompressible_reference(model)?;
            // Ψ̂ = Ψ_nn − Ψ_nn(3,3) − n(J−1) − p(J−1)
            let j_minus_1 = add(vec![symbol("J"), constant(-1.0)]);
            add(vec![
                net,
                constant(-psi_ref),
                mul(vec![constant(-slope), j_minus_1.clone()]),
                mul(vec![constant(-1.0), symbol("p"), j_minus_1]),
            ])
        }
    })
}

fn network_expression(model: &Model, symbols: &[&str]) -> Result<Expr> {
    let c = model.gate_constants;
    let mut eff = Vec::with_capacity(model.n_params());
    model.for_each_param(|p, _| eff.push(p.effective(&c)));

    let x0: Vec<Expr> = symbols
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let scale = model.input_scale.get(k).copied().unwrap_or(1.0);
            if scale == 1.0 {
                symbol(s)
            } else {
                mul(vec![constant(1.0 / scale), symbol(s)])
            }
        })
        .collect();
    let mut x = x0.clone();
    let mut cursor = 0usize;
    let n_layers = model.layers.len();
    for (li, layer) in model.layers.iter().enumerate() {
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
            let mut terms = Vec::new();
            for k in 0..cols {
                terms.push(mul(vec![constant(w[r * cols + k]), x[k].clone()]));
            }
            if let Some((ps, pc)) = pass {
                for k in 0..pc {
                    terms.push(mul(vec![constant(ps[r * pc + k]), x0[k].clone()]));
                }
            }
            terms.push(constant(b[r]));
            let pre = add(terms);
            next.push(if li + 1 == n_layers {
                pre
            } else {
                match model.activation {
                    Activation::Softplus => log(add(vec![constant(1.0), exp(pre)])),
                    Activation::Sigmoid => sigmoid(pre),
                }
            });
        }
        x = next;
    }
    Ok(x.swap_remove(0))
}

/// Reference value and normalization slope of a compressible model.
pub fn compressible_reference(model: &Model) -> Result<(f64, f64)> {
    let tape = crate::autodiff::Tape::new();
    let lifted = model.lift_test(&tape);
    let pot = crate::hyper::CompressiblePotential::new(&tape, |a, b, c| {
        lifted.forward_scalar(&[a, b, c])
    })?;
    Ok((pot.reference().value(), pot.slope().value()))
}

/// Reference value and normalization slope of an incompressible model.
pub fn incompressible_reference(model: &Model) -> Result<(f64, f64)> {
    let tape = crate::autodiff::Tape::new();
    let lifted = model.lift_test(&tape);
    let pot =
        crate::hyper::IncompressiblePotential::new(&tape, |a, b| lifted.forward_scalar(&[a, b]))?;
    Ok((pot.reference().value(), pot.slope().value()))
}

// ---------------------------------------------------------------------
// Simplification
// ---------------------------------------------------------------------

fn provably_positive(e: &Expr) -> bool {
    match e {
        Expr::Const { value } => *value > 0.0,
        Expr::Exp { .. } | Expr::Sigmoid { .. } => true,
        Expr::Pow { base, .. } => provably_positive(base),
        Expr::Mul { factors } => factors.iter().all(provably_positive),
        Expr::Add { terms } => {
            terms.iter().all(|t| {
                provably_positive(t) || matches!(t, Expr::Const { value } if *value >= 0.0)
            }) && terms.iter().any(provably_positive)
        }
        _ => false,
    }
}

fn is_const(e: &Expr) -> Option<f64> {
    match e {
        Expr::Const { value } => Some(*value),
        _ => None,
    }
}

fn atomic_linear(e: &Expr) -> bool {
    match e {
        Expr::Const { .. } | Expr::Symbol { .. } => true,
        Expr::Mul { factors } => {
            factors.len() == 2
                && matches!(factors[0], Expr::Const { .. })
                && matches!(factors[1], Expr::Symbol { .. })
        }
        _ => false,
    }
}

fn simplify_once(e: Expr) -> Expr {
    match e {
        Expr::Const { .. } | Expr::Symbol { .. } => e,
        Expr::Add { terms } => {
            let mut flat = Vec::new();
            let mut const_sum = 0.0;
            let mut saw_term = false;
            let mut const_leads = false;
            for t in terms.into_iter().map(simplify_once) {
                match t {
                    Expr::Add { terms } => {
                        for s in terms {
                            match is_const(&s) {
                                Some(c) => {
                                    const_leads |= !saw_term;
                                    const_sum += c;
                                }
                                None => {
                                    saw_term = true;
                                    flat.push(s);
                                }
                            }
                        }
                    }
                    Expr::Const { value } => {
                        const_leads |= !saw_term;
                        const_sum += value;
                    }
                    other => {
                        saw_term = true;
                        flat.push(other);
                    }
                }
            }
            // Merge logarithms of certified-positive arguments.
            let mut logs: Vec<Expr> = Vec::new();
            let mut rest: Vec<Expr> = Vec::new();
            for t in flat {
                match t {
                    Expr::Log { arg } if provably_positive(&arg) => logs.push(*arg),
                    other => rest.push(other),
                }
            }
            if logs.len() > 1 {
                rest.push(log(mul(logs)));
            } else {
                rest.extend(logs.into_iter().map(log));
            }
            let mut out = rest;
            if const_sum != 0.0 || out.is_empty() {
                // A sum that began with its constant keeps it in front
                // (the canonical 1 + e^x shape); otherwise it trails.
                if const_leads && !out.is_empty() {
                    out.insert(0, constant(const_sum));
                } else {
                    out.push(constant(const_sum));
                }
            }
            if out.len() == 1 {
                out.pop().unwrap()
            } else {
                Expr::Add { terms: out }
            }
        }
        Expr::Mul { factors } => {
            let mut flat = Vec::new();
            let mut const_prod = 1.0;
            for f in factors.into_iter().map(simplify_once) {
                match f {
                    Expr::Mul { factors } => {
                        for s in factors {
                            match is_const(&s) {
                                Some(c) => const_prod *= c,
                                None => flat.push(s),
                            }
                        }
                    }
                    Expr::Const { value } => const_prod *= value,
                    other => flat.push(other),
                }
            }
            if const_prod == 0.0 {
                return constant(0.0);
            }
            // Merge exponential factors: e^a · e^b = e^(a+b).
            let mut exps: Vec<Expr> = Vec::new();
            let mut rest: Vec<Expr> = Vec::new();
            for f in flat {
                match f {
                    Expr::Exp { arg } => exps.push(*arg),
                    other => rest.push(other),
                }
            }
            if exps.len() > 1 {
                rest.push(exp(add(exps)));
            } else {
                rest.extend(exps.into_iter().map(exp));
            }
            let mut out = rest;
            // Weighted logarithm: c · log(X) = log(X^c) for positive X.
            if out.len() == 1 && const_prod != 1.0 {
                if let Expr::Log { arg } = &out[0] {
                    if provably_positive(arg) {
                        let base = (*arg.clone()).clone();
                        return simplify_once(log(pow(base, constant(const_prod))));
                    }
                }
            }
            // Distribute a bare constant over a short linear sum.
            if out.len() == 1 && const_prod != 1.0 {
                if let Expr::Add { terms } = &out[0] {
                    if terms.len() <= 3 && terms.iter().all(atomic_linear) {
                        let distributed: Vec<Expr> = terms
                            .iter()
                            .map(|t| mul(vec![constant(const_prod), t.clone()]))
                            .collect();
                        return simplify_once(add(distributed));
                    }
                }
            }
            if out.is_empty() {
                return constant(const_prod);
            }
            if const_prod != 1.0 {
                out.insert(0, constant(const_prod));
            }
            if out.len() == 1 {
                out.pop().unwrap()
            } else {
                Expr::Mul { factors: out }
            }
        }
        Expr::Pow { base, exponent } => {
            let base = simplify_once(*base);
            let exponent = simplify_once(*exponent);
            if let (Some(b), Some(x)) = (is_const(&base), is_const(&exponent)) {
                let v = b.powf(x);
                if v.is_finite() {
                    return constant(v);
                }
            }
            if is_const(&exponent) == Some(1.0) {
                return base;
            }
            // (X^a)^b = X^(a·b) for constant exponents.
            if let Expr::Pow {
                base: inner,
                exponent: a,
            } = &base
            {
                if let (Some(a), Some(b)) = (is_const(a), is_const(&exponent)) {
                    return simplify_once(pow((**inner).clone(), constant(a * b)));
                }
            }
            // (e^a)^b = e^(a·b).
            if let Expr::Exp { arg } = &base {
                return simplify_once(exp(mul(vec![exponent, (**arg).clone()])));
            }
            pow(base, exponent)
        }
        Expr::Exp { arg } => {
            let arg = simplify_once(*arg);
            if let Some(c) = is_const(&arg) {
                let v = c.exp();
                if v.is_finite() {
                    return constant(v);
                }
            }
            if let Expr::Log { arg: inner } = arg {
                return *inner;
            }
            // e^(Σ with log terms) = (Π args) · e^(rest).
            if let Expr::Add { terms } = &arg {
                let has_log = terms.iter().any(|t| matches!(t, Expr::Log { .. }));
                if has_log {
                    let mut factors = Vec::new();
                    let mut rest = Vec::new();
                    for t in terms.clone() {
                        match t {
                            Expr::Log { arg } => factors.push(*arg),
                            other => rest.push(other),
                        }
                    }
                    if !rest.is_empty() {
                        factors.push(exp(add(rest)));
                    }
                    return simplify_once(mul(factors));
                }
            }
            exp(arg)
        }
        Expr::Log { arg } => {
            let arg = simplify_once(*arg);
            if let Some(c) = is_const(&arg) {
                if c > 0.0 {
                    return constant(c.ln());
                }
            }
            if let Expr::Exp { arg: inner } = arg {
                return *inner;
            }
            log(arg)
        }
        Expr::Sigmoid { arg } => {
            let arg = simplify_once(*arg);
            if let Some(c) = is_const(&arg) {
                return constant(sigmoid_f(c));
            }
            sigmoid(arg)
        }
    }
}

/// Value-preserving simplification to a fixpoint: constant folding, dead
/// branch removal, log/exp identities, and the weighted-softplus folding
/// that yields the log-of-products presentation.
pub fn simplify(e: &Expr) -> Expr {
    let mut cur = e.clone();
    for _ in 0..12 {
        let next = simplify_once(cur.clone());
        if next == cur {
            return next;
        }
        cur = next;
    }
    cur
}

// ---------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Plain,
    Latex,
}

/// Deterministic string form. `decimals` rounds constants for display
/// only (evaluation always uses full precision); `None` renders full
/// shortest-roundtrip precision, which the plain parser reads back
/// exactly.
pub fn render(e: &Expr, format: Format, decimals: Option<usize>) -> String {
    let mut s = String::new();
    write_expr(e, format, decimals, 0, &mut s);
    s
}

fn fmt_const(v: f64, decimals: Option<usize>, format: Format) -> String {
    match decimals {
        Some(d) => {
            // Small magnitudes switch to scientific notation so the
            // displayed form keeps its leading digits (coefficients like
            // 6.3e-3 appear in these fits and would otherwise round to
            // nothing); larger values use plain fixed-point rounding.
            if v != 0.0 && v.abs() < 0.1 {
                let s = format!("{v:.d$e}", d = d);
                match format {
                    Format::Plain => s,
                    Format::Latex => match s.split_once('e') {
                        Some((mantissa, exp)) => {
                            format!(r"{mantissa} \cdot 10^{{{exp}}}")
                        }
                        None => s,
                    },
                }
            } else {
                let s = format!("{v:.d$}", d = d);
                if s.starts_with("-0.") && s[1..].parse::<f64>() == Ok(0.0) {
                    s[1..].to_string()
                } else {
                    s
                }
            }
        }
        None => format!("{v}"),
    }
}

fn symbol_latex(name: &str) -> String {
    let split = name.find(|c: char| c.is_ascii_digit());
    let (stem, digits) = match split {
        Some(i) => (&name[..i], &name[i..]),
        None => (name, ""),
    };
    let stem = if stem == "pi" {
        r"\pi".to_string()
    } else {
        stem.to_string()
    };
    if digits.is_empty() {
        stem
    } else {
        format!("{stem}_{{{digits}}}")
    }
}

// Precedence: 0 sum, 1 product, 2 power/prefix.
fn write_expr(e: &Expr, f: Format, d: Option<usize>, prec: u8, out: &mut String) {
    match e {
        Expr::Const { value } => {
            let s = fmt_const(*value, d, f);
            if s.starts_with('-') && prec >= 1 {
                out.push('(');
                out.push_str(&s);
                out.push(')');
            } else {
                out.push_str(&s);
            }
        }
        Expr::Symbol { name } => match f {
            Format::Plain => out.push_str(name),
            Format::Latex => out.push_str(&symbol_latex(name)),
        },
        Expr::Add { terms } => {
            let parens = prec >= 1;
            if parens {
                out.push_str(if f == Format::Latex { r"\left(" } else { "(" });
            }
            for (i, t) in terms.iter().enumerate() {
                // Fold a leading negative constant into a minus sign.
                let (sign, inner) = negative_split(t);
                if i == 0 {
                    if sign {
                        out.push('-');
                    }
                } else {
                    out.push_str(if sign { " - " } else { " + " });
                }
                match &inner {
                    Some(expr) => write_expr(expr, f, d, 1, out),
                    None => write_expr(t, f, d, 1, out),
                }
            }
            if parens {
                out.push_str(if f == Format::Latex { r"\right)" } else { ")" });
            }
        }
        Expr::Mul { factors } => {
            let parens = prec >= 2;
            if parens {
                out.push('(');
            }
            for (i, x) in factors.iter().enumerate() {
                if i > 0 {
                    out.push_str(if f == Format::Latex { r" \, " } else { "*" });
                }
                write_expr(x, f, d, 1, out);
            }
            if parens {
                out.push(')');
            }
        }
        Expr::Pow { base, exponent } => match f {
            Format::Plain => {
                out.push('(');
                write_expr(base, f, d, 0, out);
                out.push_str(")^");
                let simple = matches!(**exponent, Expr::Const { value } if value >= 0.0);
                if simple {
                    write_expr(exponent, f, d, 2, out);
                } else {
                    out.push('(');
                    write_expr(exponent, f, d, 0, out);
                    out.push(')');
                }
            }
            Format::Latex => {
                out.push_str(r"\left(");
                write_expr(base, f, d, 0, out);
                out.push_str(r"\right)^{");
                write_expr(exponent, f, d, 0, out);
                out.push('}');
            }
        },
        Expr::Exp { arg } => match f {
            Format::Plain => {
                out.push_str("exp(");
                write_expr(arg, f, d, 0, out);
                out.push(')');
            }
            Format::Latex => {
                out.push_str("e^{");
                write_expr(arg, f, d, 0, out);
                out.push('}');
            }
        },
        Expr::Log { arg } => {
            out.push_str(if f == Format::Latex {
                r"\log\left("
            } else {
                "log("
            });
            write_expr(arg, f, d, 0, out);
            out.push_str(if f == Format::Latex { r"\right)" } else { ")" });
        }
        Expr::Sigmoid { arg } => match f {
            Format::Plain => {
                out.push_str("sigmoid(");
                write_expr(arg, f, d, 0, out);
                out.push(')');
            }
            Format::Latex => {
                out.push_str(r"\frac{1}{1 + e^{-");
                write_expr(arg, f, d, 0, out);
                out.push_str("}}");
            }
        },
    }
}

/// Split a term whose leading constant is negative into (true, |term|).
fn negative_split(e: &Expr) -> (bool, Option<Expr>) {
    match e {
        Expr::Const { value } if *value < 0.0 => (true, Some(constant(-value))),
        Expr::Mul { factors } => {
            if let Some(Expr::Const { value }) = factors.first() {
                if *value < 0.0 {
                    let mut rest = factors.clone();
                    if *value == -1.0 && rest.len() > 1 {
                        rest.remove(0);
                    } else {
                        rest[0] = constant(-value);
                    }
                    return (
                        true,
                        Some(if rest.len() == 1 {
                            rest.pop().unwrap()
                        } else {
                            mul(rest)
                        }),
                    );
                }
            }
            (false, None)
        }
        _ => (false, None),
    }
}

// ---------------------------------------------------------------------
// Plain-format parser (round-trip support)
// ---------------------------------------------------------------------

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

/// Parse the plain rendering back into a tree.
pub fn parse(text: &str) -> Result<Expr> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
    };
    let e = p.parse_sum()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(Error::Io(format!("trailing input at byte {}", p.pos)));
    }
    Ok(e)
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && (self.src[self.pos] as char).is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src.get(self.pos).map(|&b| b as char)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        Some(c)
    }

    fn parse_sum(&mut self) -> Result<Expr> {
        let mut terms = Vec::new();
        let mut negate = false;
        if self.peek() == Some('-') {
            self.bump();
            negate = true;
        }
        let first = self.parse_product()?;
        terms.push(if negate {
            mul(vec![constant(-1.0), first])
        } else {
            first
        });
        while let Some(c) = self.peek() {
            if c == '+' || c == '-' {
                self.bump();
                let t = self.parse_product()?;
                terms.push(if c == '-' {
                    mul(vec![constant(-1.0), t])
                } else {
                    t
                });
            } else {
                break;
            }
        }
        Ok(if terms.len() == 1 {
            terms.pop().unwrap()
        } else {
            add(terms)
        })
    }

    fn parse_product(&mut self) -> Result<Expr> {
        let mut factors = vec![self.parse_power()?];
        while self.peek() == Some('*') {
            self.bump();
            factors.push(self.parse_power()?);
        }
        Ok(if factors.len() == 1 {
            factors.pop().unwrap()
        } else {
            mul(factors)
        })
    }

    fn parse_power(&mut self) -> Result<Expr> {
        let base = self.parse_atom()?;
        if self.peek() == Some('^') {
            self.bump();
            let exponent = if self.peek() == Some('(') {
                self.bump();
                let e = self.parse_sum()?;
                self.expect(')')?;
                e
            } else {
                self.parse_atom()?
            };
            return Ok(pow(base, exponent));
        }
        Ok(base)
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.bump() == Some(c) {
            Ok(())
        } else {
            Err(Error::Io(format!("expected '{c}' at byte {}", self.pos)))
        }
    }

    fn parse_atom(&mut self) -> Result<Expr> {
        match self.peek() {
            Some('(') => {
                self.bump();
                let e = self.parse_sum()?;
                self.expect(')')?;
                Ok(e)
            }
            Some('-') => {
                self.bump();
                Ok(mul(vec![constant(-1.0), self.parse_atom()?]))
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.parse_number(),
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {
                let name = self.parse_ident();
                if self.peek() == Some('(') {
                    self.bump();
                    let arg = self.parse_sum()?;
                    self.expect(')')?;
                    match name.as_str() {
                        "exp" => Ok(exp(arg)),
                        "log" => Ok(log(arg)),
                        "sigmoid" => Ok(sigmoid(arg)),
                        other => Err(Error::Io(format!("unknown function '{other}'"))),
                    }
                } else {
                    Ok(symbol(&name))
                }
            }
            other => Err(Error::Io(format!(
                "unexpected token {other:?} at byte {}",
                self.pos
            ))),
        }
    }

    fn parse_ident(&mut self) -> String {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() {
            let c = self.src[self.pos] as char;
            if c.is_ascii_alphanumeric() || c == '_' {
                self.pos += 1;
            } else {
                break;
            }
        }
        String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()
    }

    fn parse_number(&mut self) -> Result<Expr> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() {
            let c = self.src[self.pos] as char;
            if c.is_ascii_digit() || c == '.' {
                self.pos += 1;
            } else if (c == 'e' || c == 'E')
                && self
                    .src
                    .get(self.pos + 1)
                    .map(|&b| {
                        let n = b as char;
                        n.is_ascii_digit() || n == '+' || n == '-'
                    })
                    .unwrap_or(false)
            {
                self.pos += 2;
            } else {
                break;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos])
            .map_err(|_| Error::Io("bad utf8 in number".into()))?;
        text.parse::<f64>()
            .map(constant)
            .map_err(|_| Error::Io(format!("bad number '{text}'")))
    }
}

// ---------------------------------------------------------------------
// Structural family checks
// ---------------------------------------------------------------------

/// Input-convex softplus family: a logarithm whose argument contains an
/// exponential (log of products of (1 + e^(·))^w factors).
pub fn matches_log_exp_family(e: &Expr) -> bool {
    e.contains(&|n| match n {
        Expr::Log { arg } => arg.contains(&|m| matches!(m, Expr::Exp { .. })),
        _ => false,
    })
}

/// Monotone sigmoid family (rational-in-exponential hardening curves).
pub fn matches_sigmoid_family(e: &Expr) -> bool {
    e.contains(&|n| matches!(n, Expr::Sigmoid { .. }))
}
