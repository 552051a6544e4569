//! Closed-form results for skew polygons and linear-Schrödinger sums.
//!
//! A length-2π rhombus with four tangent jumps is fixed, up to rigid motion,
//! by two rotations `(rho_0, theta_0)` and `(rho_1, theta_1)` acting on an
//! orthonormal frame. This module builds the tangent set from those angles,
//! evaluates the closure trace identity and the impulse-modulus identities
//! that the time evolution must conserve, and provides the lattice sums
//! (theta series, square-frequency series) whose quarter-period revival
//! underlies the polygon dynamics.

use crate::error::{Error, Result};
use crate::vec3::Vec3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI, TAU};

/// Dense 3x3 real matrix, row-major. Just enough linear algebra for frame
/// rotations and their cross-checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn mul(&self, rhs: &Mat3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.0[i][k] * rhs.0[k][j]).sum();
            }
        }
        Mat3(out)
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Act on a frame (T, e1, e2) stacked as rows: each output vector is the
    /// row-weighted combination of the input vectors.
    pub fn apply_frame(&self, frame: &[Vec3; 3]) -> [Vec3; 3] {
        let comb = |row: &[f64; 3]| frame[0] * row[0] + frame[1] * row[1] + frame[2] * row[2];
        [comb(&self.0[0]), comb(&self.0[1]), comb(&self.0[2])]
    }
}

/// Frame rotation with polar angle `rho` about an axis at azimuth `theta` in
/// the (e1, e2) plane: the new tangent tilts by `rho` towards
/// `cos(theta) e1 + sin(theta) e2`.
pub fn rotation_matrix(rho: f64, theta: f64) -> Mat3 {
    let (sr, cr) = rho.sin_cos();
    let (st, ct) = theta.sin_cos();
    Mat3([
        [cr, sr * ct, sr * st],
        [-sr * ct, cr * ct * ct + st * st, (cr - 1.0) * ct * st],
        [-sr * st, (cr - 1.0) * ct * st, cr * st * st + ct * ct],
    ])
}

/// Jump angles of the two independent corners of the rhombus.
///
/// A closed rhombus must satisfy `cos(theta0 - theta1) =
/// cot(rho0/2) cot(rho1/2)`: the product of the two corner rotations is then
/// a half-turn and the four sides close up.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RhombusAngles {
    pub rho0: f64,
    pub theta0: f64,
    pub rho1: f64,
    pub theta1: f64,
}

/// Tolerance on the closure constraint residual.
pub const CLOSURE_TOL: f64 = 1e-10;

impl RhombusAngles {
    /// `|cos(theta0 - theta1) - cot(rho0/2) cot(rho1/2)|`; zero exactly on
    /// closed rhombi.
    pub fn closure_residual(&self) -> f64 {
        let cot = |r: f64| (r / 2.0).cos() / (r / 2.0).sin();
        ((self.theta0 - self.theta1).cos() - cot(self.rho0) * cot(self.rho1)).abs()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, rho) in [("rho0", self.rho0), ("rho1", self.rho1)] {
            if !(rho > 0.0 && rho <= PI) {
                return Err(Error::Config(format!(
                    "{name} must lie in (0, pi], got {rho}"
                )));
            }
        }
        if !(self.theta0.is_finite() && self.theta1.is_finite()) {
            return Err(Error::Config("rhombus azimuths must be finite".into()));
        }
        Ok(())
    }
}

/// Unit tangents of a closed four-sided skew polygon, each side of length
/// `side_length` (pi/2 on the canonical length-2pi curve).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SkewPolygon {
    pub tangents: [Vec3; 4],
    pub side_length: f64,
}

impl SkewPolygon {
    pub fn tangent_sum(&self) -> Vec3 {
        self.tangents.iter().copied().fold(Vec3::ZERO, |a, t| a + t)
    }
}

/// Propagate the canonical frame T=(1,0,0), e1=(0,1,0), e2=(0,0,1) through
/// the alternating corner rotations and collect the four side tangents.
///
/// The input must satisfy the closure constraint; the residual is reported
/// back on rejection. The global orientation is a free choice, so results
/// are meaningful up to rigid motion.
pub fn build_rhombus(a: &RhombusAngles) -> Result<SkewPolygon> {
    a.validate()?;
    let residual = a.closure_residual();
    if residual > CLOSURE_TOL {
        return Err(Error::Config(format!(
            "rhombus angles do not close: constraint residual {residual:.3e}"
        )));
    }
    let m0 = rotation_matrix(a.rho0, a.theta0);
    let m1 = rotation_matrix(a.rho1, a.theta1);
    let mut frame = [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0)];
    let mut tangents = [Vec3::ZERO; 4];
    for (k, slot) in tangents.iter_mut().enumerate() {
        *slot = frame[0];
        frame = if k % 2 == 0 { m0.apply_frame(&frame) } else { m1.apply_frame(&frame) };
    }
    let polygon = SkewPolygon { tangents, side_length: FRAC_PI_2 };
    let gap = polygon.tangent_sum().norm();
    if gap > 1e-9 {
        return Err(Error::Numerical(format!(
            "propagated tangents fail to close: |sum| = {gap:.3e}"
        )));
    }
    Ok(polygon)
}

/// Closed form for `trace(M1 M0)`:
/// `-1 + 4 sin^2(rho0/2) sin^2(rho1/2) (cos(theta0-theta1) -
/// cot(rho0/2) cot(rho1/2))^2`. Total in the angles; equals the trace of the
/// explicit product everywhere, and -1 exactly on closed rhombi (a half-turn
/// has trace 1 + 2cos(pi)).
pub fn trace_closed_form(a: &RhombusAngles) -> f64 {
    let s0 = (a.rho0 / 2.0).sin();
    let s1 = (a.rho1 / 2.0).sin();
    let c0 = (a.rho0 / 2.0).cos();
    let c1 = (a.rho1 / 2.0).cos();
    // written with the cotangents cleared so rho -> 0 stays finite
    let inner = (a.theta0 - a.theta1).cos() * s0 * s1 - c0 * c1;
    -1.0 + 4.0 * inner * inner
}

/// Impulse of a closed skew polygon and the redundant modulus evaluations
/// used to cross-check conservation.
#[derive(Debug, Clone, Copy)]
pub struct RhombusImpulse {
    /// `(pi^2/8) (T0 x T1 + T2 x T3)` by direct vector algebra.
    pub impulse: Vec3,
    /// `|T0 x T1 + T2 x T3|^2` from the tangents.
    pub f_modulus_sq: f64,
    /// `4 (1 + cos rho0)(1 + cos rho1)`, the closed form of the same
    /// quantity; present when angles are supplied.
    pub f_modulus_sq_closed: Option<f64>,
    /// `(pi^4/16) sin^2(rho0) (1 - sin^2(rho1/2) sin^2(theta0 - theta1))`,
    /// the impulse modulus without using the closure constraint; present
    /// when angles are supplied.
    pub impulse_modulus_sq_open: Option<f64>,
}

/// Fluid impulse of a four-sided polygon: `F = (pi^2/8)(T0 x T1 + T2 x T3)`.
///
/// When `angles` are given, the two closed-form moduli are evaluated as
/// well, so a caller can confirm all three routes agree. For reference, the
/// scalar products expand without the closure constraint as
/// `T1 . T2 = cos(rho1)` and
/// `T0 . T3 = -1 + cos^2(rho0)(cos(rho1) + 1)
///            - 2 cos(theta0 - theta1) cos(rho0) sin(rho0) sin(rho1)
///            - cos^2(theta0 - theta1) sin^2(rho0) (cos(rho1) - 1)`.
pub fn rhombus_impulse(
    p: &SkewPolygon,
    angles: Option<&RhombusAngles>,
) -> Result<RhombusImpulse> {
    let gap = p.tangent_sum().norm();
    if gap > 1e-9 {
        return Err(Error::Config(format!(
            "impulse needs a closed polygon; tangent sum has norm {gap:.3e}"
        )));
    }
    for t in &p.tangents {
        if (t.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "impulse needs unit tangents, got |T| = {}",
                t.norm()
            )));
        }
    }
    let f = p.tangents[0].cross(p.tangents[1]) + p.tangents[2].cross(p.tangents[3]);
    let (closed, open) = match angles {
        Some(a) => {
            let closed = 4.0 * (1.0 + a.rho0.cos()) * (1.0 + a.rho1.cos());
            let s1h = (a.rho1 / 2.0).sin();
            let sd = (a.theta0 - a.theta1).sin();
            let open = PI.powi(4) / 16.0
                * a.rho0.sin().powi(2)
                * (1.0 - s1h * s1h * sd * sd);
            (Some(closed), Some(open))
        }
        None => (None, None),
    };
    Ok(RhombusImpulse {
        impulse: f * (PI * PI / 8.0),
        f_modulus_sq: f.norm_sq(),
        f_modulus_sq_closed: closed,
        impulse_modulus_sq_open: open,
    })
}

/// Frequency lattice of a theta sum: modes `n = K q + r` for integer `q`,
/// truncated to `|q| <= truncation`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaSeriesParams {
    pub k: u32,
    pub r: u32,
    pub truncation: u32,
}

impl ThetaSeriesParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("lattice stride k must be positive".into()));
        }
        if self.r >= self.k {
            return Err(Error::Config(format!(
                "residue r = {} must lie below the stride k = {}",
                self.r, self.k
            )));
        }
        if self.truncation == 0 {
            return Err(Error::Config("truncation must be at least 1".into()));
        }
        Ok(())
    }
}

/// Split a time into `t = (pi/2) m + rem` with integer `m` and |rem| <= pi/4.
///
/// The quadratic phases below pick up exactly `2 pi n^2 m` across a quarter
/// period, an invisible full turn; dropping it keeps the phase argument
/// small, so the quarter-period revival holds to machine precision instead
/// of drowning in `n^2`-amplified rounding.
fn quarter_period_split(t: f64) -> f64 {
    let m = (t / FRAC_PI_2).round();
    t - m * FRAC_PI_2
}

/// Partial theta sum `sum_q exp(-4i (Kq+r)^2 t + 2i (Kq+r) s)` over
/// `q in [-Q, Q]`.
///
/// The time phase is evaluated modulo the quarter period: `(Kq+r)^2 - r^2`
/// is a multiple of `K`, and over `t = pi/2` each term's phase relative to
/// the `exp(4 i r^2 t)` carrier advances by an exact full turn, so the sum
/// at `t = pi/2` reproduces the sum at `t = 0` term by term.
pub fn theta_series(p: &ThetaSeriesParams, s: f64, t: f64) -> Result<Complex64> {
    p.validate()?;
    let rem = quarter_period_split(t);
    let q_max = p.truncation as i64;
    let mut acc = Complex64::new(0.0, 0.0);
    for q in -q_max..=q_max {
        let n = p.k as i64 * q + p.r as i64;
        let nf = n as f64;
        let phase = -4.0 * nf * nf * rem + 2.0 * nf * s;
        acc += Complex64::from_polar(1.0, phase);
    }
    Ok(acc)
}

/// Partial sum of `sum_{k >= 1} exp(i t k^2) / k^2` up to the given
/// truncation; the dropped tail is bounded by `1/truncation`.
///
/// The phase is reduced modulo 2 pi in `t` first (`k^2` full turns are
/// invisible), which keeps the sum exactly 2 pi-periodic in floating point.
pub fn riemann_function(t: f64, truncation: u32) -> Result<Complex64> {
    if truncation == 0 {
        return Err(Error::Config("truncation must be at least 1".into()));
    }
    let m = (t / TAU).round();
    let rem = t - m * TAU;
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 1..=truncation as i64 {
        let kf = k as f64;
        acc += Complex64::from_polar(1.0 / (kf * kf), rem * kf * kf);
    }
    Ok(acc)
}
