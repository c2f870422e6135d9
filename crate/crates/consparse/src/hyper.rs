//! Hyperelastic kernels: invariants, stress normalization, second
//! Piola-Kirchhoff stress, incompressible deformation modes, and the
//! closed-form ground-truth laws used as synthetic-data oracles.
//!
//! Potentials are isotropic functions of (I1, I2, J). The network output
//! is corrected so the energy and the stress both vanish in the
//! undeformed configuration; the correction slope is recomputed from the
//! current parameters at every evaluation so training differentiates
//! through it. Coercivity as J → 0⁺ is deliberately not enforced.

// Index loops mirror the tensor algebra they implement.
#![allow(clippy::needless_range_loop)]

use crate::autodiff::{Tape, Var};
use crate::nets::Model;
use crate::{Error, Result};

/// Minimal 3×3 matrix for deformation kinematics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub fn identity() -> Self {
        Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    }

    pub fn diag(a: f64, b: f64, c: f64) -> Self {
        Mat3([[a, 0.0, 0.0], [0.0, b, 0.0], [0.0, 0.0, c]])
    }

    pub fn transpose(&self) -> Self {
        let m = &self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn matmul(&self, rhs: &Mat3) -> Self {
        let (a, b) = (&self.0, &rhs.0);
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
            }
        }
        Mat3(out)
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    /// Matrix of cofactors (explicit 3×3 minors, no general inversion).
    pub fn cofactor(&self) -> Self {
        let m = &self.0;
        let minor = |r0: usize, r1: usize, c0: usize, c1: usize| {
            m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]
        };
        Mat3([
            [minor(1, 2, 1, 2), -minor(1, 2, 0, 2), minor(1, 2, 0, 1)],
            [-minor(0, 2, 1, 2), minor(0, 2, 0, 2), -minor(0, 2, 0, 1)],
            [minor(0, 1, 1, 2), -minor(0, 1, 0, 2), minor(0, 1, 0, 1)],
        ])
    }

    /// Inverse via the adjugate; caller guarantees a nonzero determinant.
    pub fn inverse(&self) -> Self {
        let d = self.det();
        let cof = self.cofactor();
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = cof.0[j][i] / d;
            }
        }
        Mat3(out)
    }

    pub fn scale(&self, k: f64) -> Self {
        let mut out = self.0;
        for row in &mut out {
            for v in row {
                *v *= k;
            }
        }
        Mat3(out)
    }

    pub fn sub(&self, rhs: &Mat3) -> Self {
        let mut out = self.0;
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] -= rhs.0[i][j];
            }
        }
        Mat3(out)
    }

    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
    }
}

/// Deformation gradient with its derived measures.
#[derive(Debug, Clone, Copy)]
pub struct DeformationState {
    pub f: Mat3,
    pub c: Mat3,
    pub c_inv: Mat3,
    pub i1: f64,
    pub i2: f64,
    pub j: f64,
}

/// Isotropic invariants I1 = tr C, I2 = tr(cof C), J = det F.
pub fn invariants(f: &Mat3) -> Result<(f64, f64, f64)> {
    let j = f.det();
    if j <= 0.0 {
        return Err(Error::InvalidDeformation(format!(
            "det F = {j} must be positive"
        )));
    }
    let c = f.transpose().matmul(f);
    Ok((c.trace(), c.cofactor().trace(), j))
}

pub fn deformation_state(f: &Mat3) -> Result<DeformationState> {
    let j = f.det();
    if j <= 0.0 {
        return Err(Error::InvalidDeformation(format!(
            "det F = {j} must be positive"
        )));
    }
    let c = f.transpose().matmul(f);
    Ok(DeformationState {
        f: *f,
        c,
        c_inv: c.inverse(),
        i1: c.trace(),
        i2: c.cofactor().trace(),
        j,
    })
}

/// Symmetric stress component order (11, 22, 33, 12, 13, 23).
pub const SYM_INDICES: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

/// Compressible potential wrapper around a scalar function of (I1, I2, J).
///
/// Builds the reference value and the stress-normalization slope
/// n = (2 ∂Ψ/∂I1 + 4 ∂Ψ/∂I2 + ∂Ψ/∂J)|(3,3,1) once; both are tape
/// variables, so parameter gradients flow through the correction.
pub struct CompressiblePotential<'t, F> {
    nn: F,
    psi_ref: Var<'t>,
    slope: Var<'t>,
}

impl<'t, F> CompressiblePotential<'t, F>
where
    F: Fn(Var<'t>, Var<'t>, Var<'t>) -> Result<Var<'t>>,
{
    pub fn new(tape: &'t Tape, nn: F) -> Result<Self> {
        let r1 = tape.constant(3.0);
        let r2 = tape.constant(3.0);
        let rj = tape.constant(1.0);
        let psi_ref = nn(r1, r2, rj)?;
        let g = tape.grad_vars(psi_ref, &[r1, r2, rj])?;
        let slope = g[0] * 2.0 + g[1] * 4.0 + g[2];
        Ok(Self { nn, psi_ref, slope })
    }

    /// Normalization slope n as a tape variable.
    pub fn slope(&self) -> Var<'t> {
        self.slope
    }

    /// Reference network value Ψ_nn(3, 3, 1).
    pub fn reference(&self) -> Var<'t> {
        self.psi_ref
    }

    /// Normalized energy Ψ̂ = Ψ_nn(I1,I2,J) − Ψ_nn(3,3,1) − n(J−1).
    pub fn energy(&self, i1: Var<'t>, i2: Var<'t>, j: Var<'t>) -> Result<Var<'t>> {
        let psi = (self.nn)(i1, i2, j)?;
        Ok(psi - self.psi_ref - self.slope * (j - 1.0))
    }

    /// Second Piola-Kirchhoff stress components at a deformation state,
    /// with ∂Ψ̂/∂(I1,I2,J) recorded so the result stays differentiable.
    /// Order follows [`SYM_INDICES`].
    pub fn stress_vars(&self, tape: &'t Tape, st: &DeformationState) -> Result<[Var<'t>; 6]> {
        let i1 = tape.constant(st.i1);
        let i2 = tape.constant(st.i2);
        let j = tape.constant(st.j);
        let psi = self.energy(i1, i2, j)?;
        let g = tape.grad_vars(psi, &[i1, i2, j])?;
        let (g1, g2, gj) = (g[0], g[1], g[2]);
        let vol = (g1 + g2 * st.i1) * 2.0;
        let mut out = [psi; 6];
        for (k, (a, b)) in SYM_INDICES.iter().enumerate() {
            let mut s = g2 * (-2.0 * st.c.0[*a][*b]) + gj * (st.j * st.c_inv.0[*a][*b]);
            if a == b {
                s = s + vol;
            }
            out[k] = s;
        }
        Ok(out)
    }
}

/// Test-mode second Piola-Kirchhoff stress of a trained model.
pub fn model_second_pk(model: &Model, f: &Mat3) -> Result<Mat3> {
    let st = deformation_state(f)?;
    let tape = Tape::new();
    let lifted = model.lift_test(&tape);
    let pot = CompressiblePotential::new(&tape, |i1, i2, j| lifted.forward_scalar(&[i1, i2, j]))?;
    let s6 = pot.stress_vars(&tape, &st)?;
    let mut out = [[0.0; 3]; 3];
    for (k, (a, b)) in SYM_INDICES.iter().enumerate() {
        out[*a][*b] = s6[k].value();
        out[*b][*a] = s6[k].value();
    }
    Ok(Mat3(out))
}

/// Test-mode normalized energy value of a trained model.
pub fn model_energy_value(model: &Model, i1: f64, i2: f64, j: f64) -> Result<f64> {
    let tape = Tape::new();
    let lifted = model.lift_test(&tape);
    let pot = CompressiblePotential::new(&tape, |a, b, c| lifted.forward_scalar(&[a, b, c]))?;
    Ok(pot
        .energy(tape.constant(i1), tape.constant(i2), tape.constant(j))?
        .value())
}

/// Incompressible deformation modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Mode {
    /// Uniaxial tension/compression, stretch λ.
    Ut,
    /// Equibiaxial tension, stretch λ.
    Et,
    /// Pure shear stress, stretch λ.
    Ps,
    /// Simple shear, amount γ.
    Ss,
    /// Simple torsion, normalized twist φ.
    St,
}

impl Mode {
    pub fn parse(s: &str) -> Option<Mode> {
        match s.to_ascii_uppercase().as_str() {
            "UT" | "UC" => Some(Mode::Ut),
            "ET" => Some(Mode::Et),
            "PS" => Some(Mode::Ps),
            "SS" => Some(Mode::Ss),
            "ST" => Some(Mode::St),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Mode::Ut => "UT",
            Mode::Et => "ET",
            Mode::Ps => "PS",
            Mode::Ss => "SS",
            Mode::St => "ST",
        }
    }
}

/// Invariants of the homogeneous modes (UT/ET/PS take λ, SS takes γ).
pub fn mode_invariants(mode: Mode, x: f64) -> Result<(f64, f64)> {
    match mode {
        Mode::Ut => {
            check_stretch(x)?;
            Ok((x * x + 2.0 / x, 2.0 * x + 1.0 / (x * x)))
        }
        Mode::Et => {
            check_stretch(x)?;
            Ok((2.0 * x * x + x.powi(-4), x.powi(4) + 2.0 / (x * x)))
        }
        Mode::Ps => {
            check_stretch(x)?;
            let v = x * x + 1.0 + 1.0 / (x * x);
            Ok((v, v))
        }
        Mode::Ss => {
            let v = 3.0 + x * x;
            Ok((v, v))
        }
        Mode::St => Err(Error::InvalidDeformation(
            "torsion has no single invariant pair; integrate over the radius".into(),
        )),
    }
}

fn check_stretch(l: f64) -> Result<()> {
    if l <= 0.0 {
        Err(Error::InvalidDeformation(format!(
            "stretch {l} must be positive"
        )))
    } else {
        Ok(())
    }
}

/// First Piola-Kirchhoff response of a homogeneous mode.
pub struct ModeStress<'t> {
    pub p1: Var<'t>,
    pub p2: Option<Var<'t>>,
}

/// Incompressible potential wrapper around a scalar function of (I1, I2).
///
/// The pressure is eliminated analytically per deformation mode, so the
/// mode responses only need ∂Ψ/∂I1 and ∂Ψ/∂I2; the normalization slope
/// n = 2(∂Ψ/∂I1 + 2 ∂Ψ/∂I2)|(3,3) enters the exported expression.
pub struct IncompressiblePotential<'t, F> {
    nn: F,
    tape: &'t Tape,
    psi_ref: Var<'t>,
    slope: Var<'t>,
}

impl<'t, F> IncompressiblePotential<'t, F>
where
    F: Fn(Var<'t>, Var<'t>) -> Result<Var<'t>>,
{
    pub fn new(tape: &'t Tape, nn: F) -> Result<Self> {
        let r1 = tape.constant(3.0);
        let r2 = tape.constant(3.0);
        let psi_ref = nn(r1, r2)?;
        let g = tape.grad_vars(psi_ref, &[r1, r2])?;
        let slope = (g[0] + g[1] * 2.0) * 2.0;
        Ok(Self {
            nn,
            tape,
            psi_ref,
            slope,
        })
    }

    pub fn slope(&self) -> Var<'t> {
        self.slope
    }

    pub fn reference(&self) -> Var<'t> {
        self.psi_ref
    }

    /// Energy relative to the reference state (the pressure term vanishes
    /// identically at J = 1).
    pub fn energy(&self, i1: Var<'t>, i2: Var<'t>) -> Result<Var<'t>> {
        Ok((self.nn)(i1, i2)? - self.psi_ref)
    }

    /// ∂Ψ/∂I1 and ∂Ψ/∂I2 at a point, recorded.
    pub fn input_grads(&self, i1: f64, i2: f64) -> Result<(Var<'t>, Var<'t>)> {
        let a = self.tape.constant(i1);
        let b = self.tape.constant(i2);
        let psi = (self.nn)(a, b)?;
        let g = self.tape.grad_vars(psi, &[a, b])?;
        Ok((g[0], g[1]))
    }

    /// Mode response with the pressure eliminated by the traction-free
    /// condition. UT/ET return P1; PS returns (P1, P2); SS returns P12.
    pub fn mode_stress(&self, mode: Mode, x: f64) -> Result<ModeStress<'t>> {
        let (i1, i2) = mode_invariants(mode, x)?;
        let (g1, g2) = self.input_grads(i1, i2)?;
        match mode {
            Mode::Ut => {
                let factor = 2.0 * (x - 1.0 / (x * x));
                let p1 = (g1 + g2 * (1.0 / x)) * factor;
                Ok(ModeStress { p1, p2: None })
            }
            Mode::Et => {
                let factor = 2.0 * (x - x.powi(-5));
                let p1 = (g1 + g2 * (x * x)) * factor;
                Ok(ModeStress { p1, p2: None })
            }
            Mode::Ps => {
                let f1 = 2.0 * (x - x.powi(-3));
                let f2 = 2.0 * (1.0 - 1.0 / (x * x));
                let p1 = (g1 + g2) * f1;
                let p2 = (g1 + g2 * (x * x)) * f2;
                Ok(ModeStress { p1, p2: Some(p2) })
            }
            Mode::Ss => {
                let p12 = (g1 + g2) * (2.0 * x);
                Ok(ModeStress { p1: p12, p2: None })
            }
            Mode::St => Err(Error::InvalidDeformation(
                "use torsion_torque for simple torsion".into(),
            )),
        }
    }

    /// Normalized torque of simple torsion: composite trapezoid rule for
    /// ∫₀¹ 4πρ³φ (∂Ψ/∂I1 + ∂Ψ/∂I2) dρ with I1 = I2 = 3 + (ρφ)², on a
    /// uniform grid with `n_quad` panels.
    pub fn torsion_torque(&self, phi: f64, n_quad: usize) -> Result<Var<'t>> {
        assert!(n_quad >= 2, "need at least two quadrature panels");
        let h = 1.0 / n_quad as f64;
        let mut acc: Option<Var<'t>> = None;
        // The ρ = 0 endpoint contributes nothing (ρ³ factor).
        for k in 1..=n_quad {
            let rho = k as f64 * h;
            let inv = 3.0 + (rho * phi) * (rho * phi);
            let (g1, g2) = self.input_grads(inv, inv)?;
            let weight = if k == n_quad { 0.5 } else { 1.0 };
            let coeff = 4.0 * std::f64::consts::PI * rho.powi(3) * phi * weight * h;
            let term = (g1 + g2) * coeff;
            acc = Some(match acc {
                None => term,
                Some(a) => a + term,
            });
        }
        Ok(acc.expect("n_quad >= 2"))
    }
}

/// Test-mode mode response of a trained model.
pub fn model_mode_stress(model: &Model, mode: Mode, x: f64) -> Result<(f64, Option<f64>)> {
    let tape = Tape::new();
    let lifted = model.lift_test(&tape);
    let pot = IncompressiblePotential::new(&tape, |a, b| lifted.forward_scalar(&[a, b]))?;
    let ms = pot.mode_stress(mode, x)?;
    Ok((ms.p1.value(), ms.p2.map(|v| v.value())))
}

/// Test-mode torsion torque of a trained model.
pub fn model_torsion_torque(model: &Model, phi: f64, n_quad: usize) -> Result<f64> {
    let tape = Tape::new();
    let lifted = model.lift_test(&tape);
    let pot = IncompressiblePotential::new(&tape, |a, b| lifted.forward_scalar(&[a, b]))?;
    Ok(pot.torsion_torque(phi, n_quad)?.value())
}

/// Closed-form hyperelastic laws used to generate synthetic data, with
/// hand-derived invariant gradients as the independent oracle route.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HyperLaw {
    GentGent,
    MooneyRivlin,
    Polynomial,
}

impl HyperLaw {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gent-gent" | "gentgent" | "gent" => Some(HyperLaw::GentGent),
            "mooney-rivlin" | "mooneyrivlin" | "mooney" => Some(HyperLaw::MooneyRivlin),
            "polynomial" | "poly" => Some(HyperLaw::Polynomial),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            HyperLaw::GentGent => "gent-gent",
            HyperLaw::MooneyRivlin => "mooney-rivlin",
            HyperLaw::Polynomial => "polynomial",
        }
    }

    /// Raw closed-form energy.
    pub fn energy(&self, i1: f64, i2: f64, j: f64) -> Result<f64> {
        self.check_domain(i1, i2, j)?;
        Ok(match self {
            HyperLaw::GentGent => {
                let (t1, jm, t2, t3) = gent_params();
                -0.5 * t1 * jm * (1.0 - (i1 - 3.0) / jm).ln() - t2 * (i2 / j).ln()
                    + t3 * (0.5 * (j * j - 1.0) - j.ln())
            }
            HyperLaw::MooneyRivlin => {
                let (t1, t2, t3) = mooney_params();
                t1 * (i1 * j.powf(-2.0 / 3.0) - 3.0)
                    + t2 * (i2 * j.powf(-4.0 / 3.0) - 3.0)
                    + t3 * (j - 1.0) * (j - 1.0)
            }
            HyperLaw::Polynomial => {
                let (t1, t2, t3, t4, t5) = poly_params();
                let (a, b, i3) = (i1 - 3.0, i2 - 3.0, j * j);
                t1 * a.powi(2)
                    + t2 * a.powi(4)
                    + t3 * b.powi(2)
                    + t4 * b.powi(4)
                    + t5 * (i3 - 1.0).powi(2)
            }
        })
    }

    /// Hand-derived (∂Ψ/∂I1, ∂Ψ/∂I2, ∂Ψ/∂J) of the raw energy.
    pub fn gradients(&self, i1: f64, i2: f64, j: f64) -> Result<[f64; 3]> {
        self.check_domain(i1, i2, j)?;
        Ok(match self {
            HyperLaw::GentGent => {
                let (t1, jm, t2, t3) = gent_params();
                [
                    0.5 * t1 / (1.0 - (i1 - 3.0) / jm),
                    -t2 / i2,
                    t2 / j + t3 * (j - 1.0 / j),
                ]
            }
            HyperLaw::MooneyRivlin => {
                let (t1, t2, t3) = mooney_params();
                [
                    t1 * j.powf(-2.0 / 3.0),
                    t2 * j.powf(-4.0 / 3.0),
                    -(2.0 / 3.0) * t1 * i1 * j.powf(-5.0 / 3.0)
                        - (4.0 / 3.0) * t2 * i2 * j.powf(-7.0 / 3.0)
                        + 2.0 * t3 * (j - 1.0),
                ]
            }
            HyperLaw::Polynomial => {
                let (t1, t2, t3, t4, t5) = poly_params();
                let (a, b, i3) = (i1 - 3.0, i2 - 3.0, j * j);
                [
                    2.0 * t1 * a + 4.0 * t2 * a.powi(3),
                    2.0 * t3 * b + 4.0 * t4 * b.powi(3),
                    4.0 * t5 * j * (i3 - 1.0),
                ]
            }
        })
    }

    fn check_domain(&self, i1: f64, i2: f64, j: f64) -> Result<()> {
        if j <= 0.0 {
            return Err(Error::InvalidDeformation(format!(
                "J = {j} must be positive"
            )));
        }
        if i2 <= 0.0 {
            return Err(Error::InvalidDeformation(format!(
                "I2 = {i2} must be positive"
            )));
        }
        if *self == HyperLaw::GentGent {
            let jm = gent_params().1;
            if i1 - 3.0 >= jm {
                return Err(Error::InvalidDeformation(format!(
                    "I1 - 3 = {} at or beyond the Gent limit {jm}",
                    i1 - 3.0
                )));
            }
        }
        Ok(())
    }

    /// Stress-normalization slope of the raw law at the reference state.
    /// Nonzero for laws that are not stress-free at C = I as printed.
    pub fn normalization_slope(&self) -> f64 {
        let g = self
            .gradients(3.0, 3.0, 1.0)
            .expect("reference state is admissible");
        2.0 * g[0] + 4.0 * g[1] + g[2]
    }

    /// Second Piola-Kirchhoff stress of the normalized law (Ψ minus its
    /// reference value and the n(J−1) correction), which is stress-free at
    /// C = I. Synthetic training data uses this.
    pub fn second_pk(&self, f: &Mat3) -> Result<Mat3> {
        let st = deformation_state(f)?;
        let g = self.gradients(st.i1, st.i2, st.j)?;
        let gj = g[2] - self.normalization_slope();
        let vol = 2.0 * (g[0] + st.i1 * g[1]);
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for k in 0..3 {
                out[i][k] = -2.0 * g[1] * st.c.0[i][k] + st.j * gj * st.c_inv.0[i][k];
                if i == k {
                    out[i][k] += vol;
                }
            }
        }
        Ok(Mat3(out))
    }

    /// Normalized energy (zero and stress-free at the reference state).
    pub fn normalized_energy(&self, i1: f64, i2: f64, j: f64) -> Result<f64> {
        let raw = self.energy(i1, i2, j)?;
        let reference = self.energy(3.0, 3.0, 1.0)?;
        Ok(raw - reference - self.normalization_slope() * (j - 1.0))
    }
}

fn gent_params() -> (f64, f64, f64, f64) {
    (2.4195, 77.931, -0.75, 1.20975)
}

fn mooney_params() -> (f64, f64, f64) {
    (9.2e-4, 2.37e-3, 10.0010)
}

fn poly_params() -> (f64, f64, f64, f64, f64) {
    (0.1, 0.15, 2e-4, 1e-4, 0.125)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::ModelKind;
    use crate::random::Stream;

    fn random_rotation(rng: &mut Stream) -> Mat3 {
        // Rodrigues formula around a random axis.
        let mut axis = [rng.normal(), rng.normal(), rng.normal()];
        let norm = (axis[0].powi(2) + axis[1].powi(2) + axis[2].powi(2)).sqrt();
        for a in &mut axis {
            *a /= norm;
        }
        let theta = rng.uniform() * std::f64::consts::PI;
        let (s, c) = theta.sin_cos();
        let (x, y, z) = (axis[0], axis[1], axis[2]);
        let k = Mat3([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]]);
        let kk = k.matmul(&k);
        let mut out = Mat3::identity().0;
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] += s * k.0[i][j] + (1.0 - c) * kk.0[i][j];
            }
        }
        Mat3(out)
    }

    fn random_box_f(rng: &mut Stream, delta: f64) -> Mat3 {
        loop {
            let mut f = [[0.0; 3]; 3];
            for (i, row) in f.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = if i == j {
                        1.0 + delta * (2.0 * rng.uniform() - 1.0)
                    } else {
                        delta * (2.0 * rng.uniform() - 1.0)
                    };
                }
            }
            let m = Mat3(f);
            if m.det() > 0.05 {
                return m;
            }
        }
    }

    #[test]
    fn invariants_cases() {
        let (i1, i2, j) = invariants(&Mat3::identity()).unwrap();
        assert_eq!((i1, i2, j), (3.0, 3.0, 1.0));
        let (i1, i2, j) = invariants(&Mat3::diag(2.0, 1.0, 1.0)).unwrap();
        assert_eq!((i1, i2, j), (6.0, 9.0, 2.0));
        assert!(matches!(
            invariants(&Mat3::diag(1.0, 1.0, 0.0)),
            Err(Error::InvalidDeformation(_))
        ));
    }

    #[test]
    fn linear_energy_normalization_algebra() {
        // Ψ_nn = a·I1 + b·I2 + c·J gives
        // Ψ̂ = a(I1−3) + b(I2−3) + c(J−1) − (2a+4b+c)(J−1).
        let (a, b, c) = (1.3, -0.4, 0.9);
        let tape = Tape::new();
        let pot =
            CompressiblePotential::new(&tape, |i1, i2, j| Ok(i1 * a + i2 * b + j * c)).unwrap();
        assert!((pot.slope().value() - (2.0 * a + 4.0 * b + c)).abs() < 1e-14);
        let e = pot
            .energy(tape.constant(3.1), tape.constant(3.2), tape.constant(1.05))
            .unwrap()
            .value();
        let expect = a * 0.1 + b * 0.2 + c * 0.05 - (2.0 * a + 4.0 * b + c) * 0.05;
        assert!((e - expect).abs() < 1e-14);

        // The worked case a=1, b=0, c=0 at (3.1, 3.2, 1.05) cancels exactly.
        let pot = CompressiblePotential::new(&tape, |i1, _, _| Ok(i1 * 1.0)).unwrap();
        let e = pot
            .energy(tape.constant(3.1), tape.constant(3.2), tape.constant(1.05))
            .unwrap()
            .value();
        assert!(e.abs() < 1e-14);
    }

    #[test]
    fn normalization_exact_for_random_networks() {
        let mut rng = Stream::new(17);
        for _ in 0..100 {
            let mut m = Model::init(ModelKind::Icnn, &[3, 8, 1], &mut rng);
            m.project_constraints();
            let e = model_energy_value(&m, 3.0, 3.0, 1.0).unwrap();
            assert_eq!(e, 0.0, "reference energy must vanish exactly");
            let s = model_second_pk(&m, &Mat3::identity()).unwrap();
            assert!(s.max_abs() < 1e-8, "reference stress {}", s.max_abs());
        }
    }

    #[test]
    fn stress_symmetric_and_objective() {
        let mut rng = Stream::new(23);
        let mut m = Model::init(ModelKind::Icnn, &[3, 8, 1], &mut rng);
        m.project_constraints();
        for _ in 0..25 {
            let f = random_box_f(&mut rng, 0.3);
            let s = model_second_pk(&m, &f).unwrap();
            for (a, b) in [(0, 1), (0, 2), (1, 2)] {
                assert!((s.0[a][b] - s.0[b][a]).abs() < 1e-12);
            }
            // Left rotation leaves C, hence S, unchanged.
            let r = random_rotation(&mut rng);
            let s_rot = model_second_pk(&m, &r.matmul(&f)).unwrap();
            assert!(s.sub(&s_rot).max_abs() < 1e-10);
            // Right rotation conjugates S and preserves the energy.
            let fr = f.matmul(&r);
            let s_fr = model_second_pk(&m, &fr).unwrap();
            let conj = r.transpose().matmul(&s).matmul(&r);
            assert!(s_fr.sub(&conj).max_abs() < 1e-9);
        }
    }

    #[test]
    fn autodiff_grads_match_finite_differences() {
        let mut rng = Stream::new(31);
        let mut m = Model::init(ModelKind::Icnn, &[3, 10, 1], &mut rng);
        m.project_constraints();
        let eval = |i1: f64, i2: f64, j: f64| model_energy_value(&m, i1, i2, j).unwrap();
        let (i1, i2, j) = (3.2, 3.4, 1.1);
        let tape = Tape::new();
        let lifted = m.lift_test(&tape);
        let pot =
            CompressiblePotential::new(&tape, |a, b, c| lifted.forward_scalar(&[a, b, c])).unwrap();
        let iv = tape.constant(i1);
        let i2v = tape.constant(i2);
        let jv = tape.constant(j);
        let e = pot.energy(iv, i2v, jv).unwrap();
        let g = tape.grad(e, &[iv, i2v, jv]);
        let h = 1e-5;
        let fd = [
            (eval(i1 + h, i2, j) - eval(i1 - h, i2, j)) / (2.0 * h),
            (eval(i1, i2 + h, j) - eval(i1, i2 - h, j)) / (2.0 * h),
            (eval(i1, i2, j + h) - eval(i1, i2, j - h)) / (2.0 * h),
        ];
        for k in 0..3 {
            let denom = fd[k].abs().max(1e-8);
            assert!(
                (g[k] - fd[k]).abs() / denom < 1e-6,
                "component {k}: ad {} vs fd {}",
                g[k],
                fd[k]
            );
        }
    }

    #[test]
    fn ground_truth_values() {
        // Mooney-Rivlin and polynomial vanish at the reference state.
        assert_eq!(HyperLaw::MooneyRivlin.energy(3.0, 3.0, 1.0).unwrap(), 0.0);
        assert_eq!(HyperLaw::Polynomial.energy(3.0, 3.0, 1.0).unwrap(), 0.0);
        // Gent-Gent keeps a constant offset −θ2·ln 3 at the reference.
        let e = HyperLaw::GentGent.energy(3.0, 3.0, 1.0).unwrap();
        assert!((e - 0.75 * 3.0f64.ln()).abs() < 1e-12);
        assert!((e - 0.8240).abs() < 1e-4);
        // Domain guard.
        assert!(HyperLaw::GentGent.energy(3.0 + 78.0, 3.0, 1.0).is_err());
    }

    #[test]
    fn ground_truth_gradients_match_finite_differences() {
        let h = 1e-6;
        for law in [
            HyperLaw::GentGent,
            HyperLaw::MooneyRivlin,
            HyperLaw::Polynomial,
        ] {
            for (i1, i2, j) in [(3.0, 3.0, 1.0), (3.4, 3.7, 1.15), (2.6, 2.2, 0.8)] {
                let g = law.gradients(i1, i2, j).unwrap();
                let e = |a: f64, b: f64, c: f64| law.energy(a, b, c).unwrap();
                let fd = [
                    (e(i1 + h, i2, j) - e(i1 - h, i2, j)) / (2.0 * h),
                    (e(i1, i2 + h, j) - e(i1, i2 - h, j)) / (2.0 * h),
                    (e(i1, i2, j + h) - e(i1, i2, j - h)) / (2.0 * h),
                ];
                for k in 0..3 {
                    let denom = fd[k].abs().max(1e-6);
                    assert!((g[k] - fd[k]).abs() / denom < 1e-6, "{law:?} component {k}");
                }
            }
        }
    }

    #[test]
    fn law_stress_free_reference_and_fd_oracle() {
        for law in [
            HyperLaw::GentGent,
            HyperLaw::MooneyRivlin,
            HyperLaw::Polynomial,
        ] {
            let s = law.second_pk(&Mat3::identity()).unwrap();
            assert!(
                s.max_abs() < 1e-10,
                "{law:?} not stress-free: {}",
                s.max_abs()
            );
        }

        // Independent route: S = 2 dΨ̂/dC by central differences on the
        // entries of C, evaluated through the invariant formulas.
        let law = HyperLaw::GentGent;
        let f = Mat3::diag(1.2, 1.0 / 1.2f64.sqrt(), 1.0 / 1.2f64.sqrt());
        let s = law.second_pk(&f).unwrap();
        let c0 = f.transpose().matmul(&f);
        let psi_of_c = |c: &Mat3| {
            let i1 = c.trace();
            let i2 = c.cofactor().trace();
            let j = c.det().sqrt();
            law.normalized_energy(i1, i2, j).unwrap()
        };
        let h = 1e-6;
        for (a, b) in [(0, 0), (1, 1), (2, 2), (0, 1), (1, 2)] {
            let mut cp = c0;
            cp.0[a][b] += h;
            let mut cm = c0;
            cm.0[a][b] -= h;
            let fd = 2.0 * (psi_of_c(&cp) - psi_of_c(&cm)) / (2.0 * h);
            assert!(
                (s.0[a][b] - fd).abs() < 1e-6,
                "S[{a}][{b}] = {} vs fd {}",
                s.0[a][b],
                fd
            );
        }
    }

    #[test]
    fn mode_stress_reference_zeros() {
        let mut rng = Stream::new(41);
        for _ in 0..20 {
            let mut m = Model::init(ModelKind::Icnn, &[2, 6, 1], &mut rng);
            m.project_constraints();
            let (p1, _) = model_mode_stress(&m, Mode::Ut, 1.0).unwrap();
            assert!(p1.abs() < 1e-10);
            let (p12, _) = model_mode_stress(&m, Mode::Ss, 0.0).unwrap();
            assert_eq!(p12, 0.0);
            let e = {
                let tape = Tape::new();
                let lifted = m.lift_test(&tape);
                let pot =
                    IncompressiblePotential::new(&tape, |a, b| lifted.forward_scalar(&[a, b]))
                        .unwrap();
                pot.energy(tape.constant(3.0), tape.constant(3.0))
                    .unwrap()
                    .value()
            };
            assert_eq!(e, 0.0);
        }
        assert!(
            model_mode_stress(&Model::new(ModelKind::Icnn, &[2, 2, 1]), Mode::Ut, -0.5).is_err()
        );
    }

    #[test]
    fn torsion_quadrature() {
        // φ = 0 annihilates the integrand.
        let mut rng = Stream::new(47);
        let mut m = Model::init(ModelKind::Icnn, &[2, 6, 1], &mut rng);
        m.project_constraints();
        assert_eq!(model_torsion_torque(&m, 0.0, 100).unwrap(), 0.0);

        // Constant integrand fixture: ∂Ψ/∂I1 + ∂Ψ/∂I2 ≡ c gives τ = πφc.
        let tape = Tape::new();
        let c = 0.37;
        let pot = IncompressiblePotential::new(&tape, |i1, i2| Ok(i1 * c + i2 * 0.0)).unwrap();
        let phi = 0.8;
        let tau = pot.torsion_torque(phi, 1000).unwrap().value();
        let exact = std::f64::consts::PI * phi * c;
        assert!(
            ((tau - exact) / exact).abs() < 1e-5,
            "trapezoid {tau} vs exact {exact}"
        );

        // Self-consistency on a generic network: n=100 against n=10000.
        let t100 = model_torsion_torque(&m, 0.6, 100).unwrap();
        let t10k = model_torsion_torque(&m, 0.6, 10_000).unwrap();
        assert!(((t100 - t10k) / t10k).abs() < 1e-3);
    }

    #[test]
    fn torsion_is_odd_in_phi() {
        let mut rng = Stream::new(53);
        let mut m = Model::init(ModelKind::Icnn, &[2, 6, 1], &mut rng);
        m.project_constraints();
        let plus = model_torsion_torque(&m, 0.4, 64).unwrap();
        let minus = model_torsion_torque(&m, -0.4, 64).unwrap();
        assert!((plus + minus).abs() < 1e-12);
    }
}
