//! Elastoplasticity kernels: π-plane transform, yield-surface ground
//! truths and fitting losses, isotropic elasticity, and the uniaxial
//! monotonic response with a neural isotropic hardening function R(r).
//!
//! Pressure-independent yielding lives in the deviatoric π-plane; the
//! hydrostatic axis maps to the origin. Hardening scales the yield
//! surface homothetically, which under monotonic uniaxial loading reduces
//! to σ = σ_y R(r) on the plastic branch with r the accumulated plastic
//! strain ε − σ/E.

use crate::autodiff::{Tape, Var};
use crate::nets::Model;
use crate::{Error, Result};

const SQRT_2_3: f64 = 0.816_496_580_927_726; // sqrt(2/3)
const SQRT_1_6: f64 = 0.408_248_290_463_863; // sqrt(1/6)
const SQRT_1_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const SQRT_1_3: f64 = 0.577_350_269_189_625_7; // sqrt(1/3)

/// Orthonormal map from principal stresses to π-plane coordinates;
/// the third row spans the hydrostatic axis.
pub const PI_TRANSFORM: [[f64; 3]; 3] = [
    [SQRT_2_3, -SQRT_1_6, -SQRT_1_6],
    [0.0, SQRT_1_2, -SQRT_1_2],
    [SQRT_1_3, SQRT_1_3, SQRT_1_3],
];

/// (π1, π2, π3) of a principal stress triple.
pub fn principal_to_pi(sigma: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (i, row) in PI_TRANSFORM.iter().enumerate() {
        out[i] = row[0] * sigma[0] + row[1] * sigma[1] + row[2] * sigma[2];
    }
    out
}

/// Principal deviatoric stresses of a point in the π-plane (π3 = 0).
pub fn pi_to_principal_dev(pi1: f64, pi2: f64) -> [f64; 3] {
    [
        SQRT_2_3 * pi1,
        -SQRT_1_6 * pi1 + SQRT_1_2 * pi2,
        -SQRT_1_6 * pi1 - SQRT_1_2 * pi2,
    ]
}

/// Ground-truth yield functions, zero on their limit surface and negative
/// inside.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum YieldLaw {
    Drucker,
    Cazacu,
    Tresca,
}

impl YieldLaw {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "drucker" => Some(YieldLaw::Drucker),
            "cazacu" => Some(YieldLaw::Cazacu),
            "tresca" => Some(YieldLaw::Tresca),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            YieldLaw::Drucker => "drucker",
            YieldLaw::Cazacu => "cazacu",
            YieldLaw::Tresca => "tresca",
        }
    }

    /// Signed yield value at a principal stress triple. The hydrostatic
    /// part is removed first, so any pressure shift is ignored.
    pub fn value_principal(&self, sigma: [f64; 3]) -> f64 {
        let mean = (sigma[0] + sigma[1] + sigma[2]) / 3.0;
        let s = [sigma[0] - mean, sigma[1] - mean, sigma[2] - mean];
        match self {
            YieldLaw::Drucker => {
                let j2 = 0.5 * (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]);
                let j3 = (s[0].powi(3) + s[1].powi(3) + s[2].powi(3)) / 3.0;
                j2.powi(3) + 1.5 * j3 * j3 - 0.24
            }
            YieldLaw::Cazacu => {
                s.iter()
                    .map(|&si| (si.abs() + 0.5 * si).powi(2))
                    .sum::<f64>()
                    - 0.24
            }
            YieldLaw::Tresca => {
                let d01 = (sigma[0] - sigma[1]).abs();
                let d02 = (sigma[0] - sigma[2]).abs();
                let d12 = (sigma[2] - sigma[1]).abs();
                d01.max(d02).max(d12) - 0.24
            }
        }
    }

    /// Yield value at a π-plane point (deviatoric section).
    pub fn value_pi(&self, pi1: f64, pi2: f64) -> f64 {
        self.value_principal(pi_to_principal_dev(pi1, pi2))
    }
}

/// Points on the zero level set of `f`, one per ray from the origin.
///
/// Angles run from 180° around the full circle in n−1 uniform steps, so
/// the first and last point coincide (the closure convention of the
/// embedded yield tables). `f` must be negative at the origin.
pub fn trace_yield_surface(f: impl Fn(f64, f64) -> f64, n: usize) -> Result<Vec<[f64; 2]>> {
    if n < 3 {
        return Err(Error::SamplingError("need at least 3 rays".into()));
    }
    let mut out = Vec::with_capacity(n);
    if f(0.0, 0.0) >= 0.0 {
        return Err(Error::SamplingError(
            "yield function not negative at origin".into(),
        ));
    }
    for k in 0..n {
        let theta = std::f64::consts::PI + 2.0 * std::f64::consts::PI * k as f64 / (n - 1) as f64;
        let (dy, dx) = theta.sin_cos();
        let mut hi = 0.1;
        let mut guard = 0;
        while f(hi * dx, hi * dy) < 0.0 {
            hi *= 2.0;
            guard += 1;
            if guard > 60 {
                return Err(Error::SamplingError(format!(
                    "ray at angle {theta} never exits the surface"
                )));
            }
        }
        let mut lo = 0.0;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if f(mid * dx, mid * dy) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-14 * hi.max(1.0) {
                break;
            }
        }
        let r = 0.5 * (lo + hi);
        out.push([r * dx, r * dy]);
    }
    Ok(out)
}

/// Radius at which a fitted yield function crosses zero along a π-plane
/// direction. The model must be negative at the origin.
pub fn model_surface_radius(model: &Model, direction: [f64; 2], hint: f64) -> Result<f64> {
    let norm = (direction[0] * direction[0] + direction[1] * direction[1]).sqrt();
    if norm == 0.0 {
        return Err(Error::SamplingError("zero direction".into()));
    }
    let (dx, dy) = (direction[0] / norm, direction[1] / norm);
    let f = |r: f64| -> Result<f64> { Ok(model.eval_test(&[r * dx, r * dy])?[0]) };
    if f(0.0)? >= 0.0 {
        return Err(Error::SamplingError(
            "fitted surface not negative at origin".into(),
        ));
    }
    let mut hi = hint.abs().max(1e-3);
    let mut guard = 0;
    while f(hi)? < 0.0 {
        hi *= 2.0;
        guard += 1;
        if guard > 60 {
            return Err(Error::SamplingError(format!(
                "fitted surface never crosses zero along ({dx:.3}, {dy:.3})"
            )));
        }
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 * hi.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Isotropic elastic constants with the uniaxial yield stress.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ElasticConstants {
    /// Young's modulus (MPa).
    pub e: f64,
    /// Poisson's ratio.
    pub nu: f64,
    /// Initial uniaxial yield stress (MPa).
    pub sigma_y: f64,
}

impl ElasticConstants {
    pub fn new(e: f64, nu: f64, sigma_y: f64) -> Result<Self> {
        if e <= 0.0 || !(-1.0..0.5).contains(&nu) || sigma_y <= 0.0 {
            return Err(Error::InvalidDeformation(format!(
                "inadmissible elastic constants E={e}, nu={nu}, sigma_y={sigma_y}"
            )));
        }
        Ok(Self { e, nu, sigma_y })
    }

    pub fn lame(&self) -> (f64, f64) {
        let lambda = self.e * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu));
        let mu = self.e / (2.0 * (1.0 + self.nu));
        (lambda, mu)
    }

    /// Isotropic stiffness in Voigt order (11, 22, 33, 23, 13, 12) with
    /// engineering shear strains.
    pub fn stiffness_voigt(&self) -> [[f64; 6]; 6] {
        let (lambda, mu) = self.lame();
        let mut c = [[0.0; 6]; 6];
        for i in 0..3 {
            for entry in c[i].iter_mut().take(3) {
                *entry = lambda;
            }
            c[i][i] = lambda + 2.0 * mu;
            c[i + 3][i + 3] = mu;
        }
        c
    }
}

/// Scaled von Mises yield value: equivalent stress of the homothetically
/// expanded surface minus the initial yield stress. R = 1 recovers the
/// initial surface; under uniaxial stress the yield condition reduces to
/// σ = σ_y R.
pub fn von_mises_scaled(pi1: f64, pi2: f64, big_r: f64, sigma_y: f64) -> f64 {
    (1.5 * (pi1 * pi1 + pi2 * pi2)).sqrt() / big_r - sigma_y
}

/// An isotropic hardening curve R(r) with its derivative.
pub trait Hardening {
    fn value(&self, r: f64) -> Result<f64>;
    fn derivative(&self, r: f64) -> Result<f64>;
}

/// A trained monotone network as R(r).
pub struct NetHardening<'m>(pub &'m Model);

impl Hardening for NetHardening<'_> {
    fn value(&self, r: f64) -> Result<f64> {
        Ok(self.0.eval_test(&[r])?[0])
    }

    fn derivative(&self, r: f64) -> Result<f64> {
        let tape = Tape::new();
        let lifted = self.0.lift_test(&tape);
        let x = tape.input(r);
        let y = lifted.forward_scalar(&[x])?;
        Ok(tape.grad(y, &[x])[0])
    }
}

/// Closed-form hardening (fixtures and exported expressions).
pub struct AnalyticHardening<F: Fn(f64) -> (f64, f64)>(pub F);

impl<F: Fn(f64) -> (f64, f64)> Hardening for AnalyticHardening<F> {
    fn value(&self, r: f64) -> Result<f64> {
        Ok((self.0)(r).0)
    }

    fn derivative(&self, r: f64) -> Result<f64> {
        Ok((self.0)(r).1)
    }
}

/// Uniaxial monotonic elastoplastic response over a strain grid
/// (absolute strain, not percent). Elastic while E(ε−r) ≤ σ_y R(r);
/// otherwise r advances to restore consistency σ = σ_y R(r), found by
/// bisection on [r_prev, ε] (the residual is strictly increasing in r)
/// and polished with Newton steps.
pub fn uniaxial_curve(
    hardening: &impl Hardening,
    ec: &ElasticConstants,
    strain_grid: &[f64],
) -> Result<Vec<f64>> {
    if let Some(&first) = strain_grid.first() {
        if first < 0.0 {
            return Err(Error::NonMonotoneStrain { row: 1 });
        }
    }
    for (i, w) in strain_grid.windows(2).enumerate() {
        if w[1] < w[0] {
            return Err(Error::NonMonotoneStrain { row: i + 2 });
        }
    }
    let mut r = 0.0f64;
    let mut out = Vec::with_capacity(strain_grid.len());
    for &eps in strain_grid {
        let trial = ec.e * (eps - r);
        let yield_stress = ec.sigma_y * hardening.value(r)?;
        if trial > yield_stress {
            r = solve_consistency(hardening, ec, eps, r)?;
        }
        out.push(ec.e * (eps - r));
    }
    Ok(out)
}

fn solve_consistency(
    hardening: &impl Hardening,
    ec: &ElasticConstants,
    eps: f64,
    r_prev: f64,
) -> Result<f64> {
    let g = |r: f64| -> Result<f64> { Ok(ec.sigma_y * hardening.value(r)? - ec.e * (eps - r)) };
    let (mut lo, mut hi) = (r_prev, eps);
    let g_lo = g(lo)?;
    let g_hi = g(hi)?;
    if g_lo > 0.0 || g_hi < 0.0 {
        return Err(Error::ConvergenceError(format!(
            "consistency residual does not bracket at eps={eps}: g({lo})={g_lo}, g({hi})={g_hi}"
        )));
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if g(mid)? <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 * (1.0 + eps) {
            break;
        }
    }
    let mut root = 0.5 * (lo + hi);
    for _ in 0..3 {
        let slope = ec.sigma_y * hardening.derivative(root)? + ec.e;
        if slope <= 0.0 {
            break;
        }
        let next = root - g(root)? / slope;
        if next.is_finite() && next >= r_prev && next <= eps {
            root = next;
        } else {
            break;
        }
    }
    Ok(root)
}

/// Plastic-branch supervision pairs (r_i, R_i) from a measured uniaxial
/// table with strain in percent and stress in MPa. Rows at or below the
/// initial yield stress carry no hardening information and are dropped.
pub fn plastic_pairs(rows: &[[f64; 2]], ec: &ElasticConstants) -> Vec<[f64; 2]> {
    rows.iter()
        .filter_map(|row| {
            let (eps, sigma) = (row[0] / 100.0, row[1]);
            let r = eps - sigma / ec.e;
            if sigma > ec.sigma_y && r > 0.0 {
                Some([r, sigma / ec.sigma_y])
            } else {
                None
            }
        })
        .collect()
}

/// Mean squared yield residual over on-surface points plus the anchor
/// penalty pinning f(0,0) = −1 against the trivial zero solution.
pub fn yield_fit_loss<'t, F>(
    net: F,
    tape: &'t Tape,
    points: &[[f64; 2]],
    anchor_weight: f64,
) -> Result<Var<'t>>
where
    F: Fn(Var<'t>, Var<'t>) -> Result<Var<'t>>,
{
    if points.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut acc: Option<Var<'t>> = None;
    for p in points {
        let f = net(tape.constant(p[0]), tape.constant(p[1]))?;
        let sq = f * f;
        acc = Some(match acc {
            None => sq,
            Some(a) => a + sq,
        });
    }
    let mean = acc.unwrap() * (1.0 / points.len() as f64);
    let origin = net(tape.constant(0.0), tape.constant(0.0))?;
    let anchor = origin + 1.0;
    Ok(mean + anchor * anchor * anchor_weight)
}

/// Mean squared normalized-stress residual over plastic-branch pairs plus
/// the penalty holding R(0) = 1.
pub fn hardening_fit_loss<'t, F>(
    net: F,
    tape: &'t Tape,
    pairs: &[[f64; 2]],
    r0_weight: f64,
) -> Result<Var<'t>>
where
    F: Fn(Var<'t>) -> Result<Var<'t>>,
{
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut acc: Option<Var<'t>> = None;
    for p in pairs {
        let pred = net(tape.constant(p[0]))?;
        let resid = pred - p[1];
        let sq = resid * resid;
        acc = Some(match acc {
            None => sq,
            Some(a) => a + sq,
        });
    }
    let mean = acc.unwrap() * (1.0 / pairs.len() as f64);
    let at_zero = net(tape.constant(0.0))?;
    let dev = at_zero - 1.0;
    Ok(mean + dev * dev * r0_weight)
}
