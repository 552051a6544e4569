//! Time integration of the filament flow.
//!
//! The velocity law is the binormal flow `X_t = (X_s ^ X_ss)/|X_s|^3`,
//! optionally augmented with the mirror-vortex interaction
//! `-(eps * x1/(x1^2 + r_c^2)) * (X_s ^ e1)/|X_s|`, which models the image
//! strand of an antiparallel pair without materializing it. Steps are taken
//! with the Dormand-Prince 5(4) embedded pair; the fourth-order companion
//! drives a standard accept/reject controller, and the 5th-order dense
//! interpolant lets observers sample the solution at exact uniform times
//! without constraining the step sequence.

use crate::error::{Error, Result};
use crate::geometry::{
    extend_field_into, first_derivative_into, second_derivative_into, BoundaryMap, Filament,
    GHOST_WIDTH,
};
use crate::vec3::Vec3;
use serde::{Deserialize, Serialize};

/// Velocity-law parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RhsConfig {
    /// Interaction strength; zero recovers the plain binormal flow.
    #[serde(default)]
    pub epsilon: f64,
    /// Regularization radius keeping the interaction finite at x1 = 0.
    #[serde(default = "default_r_c")]
    pub r_c: f64,
    #[serde(default)]
    pub interaction_enabled: bool,
}

fn default_r_c() -> f64 {
    1e-2
}

impl Default for RhsConfig {
    fn default() -> Self {
        RhsConfig {
            epsilon: 0.0,
            r_c: default_r_c(),
            interaction_enabled: false,
        }
    }
}

impl RhsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "interaction strength {} must be finite and >= 0",
                self.epsilon
            )));
        }
        if self.interaction_enabled && !(self.r_c > 0.0 && self.r_c.is_finite()) {
            return Err(Error::Config(format!(
                "regularization radius {} must be positive",
                self.r_c
            )));
        }
        Ok(())
    }

    /// Copy with the interaction switched off; the post-reconnection law.
    pub fn without_interaction(&self) -> RhsConfig {
        RhsConfig {
            epsilon: 0.0,
            r_c: self.r_c,
            interaction_enabled: false,
        }
    }
}

/// Accept/reject step-size control for the embedded pair.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepController {
    #[serde(default = "default_tol")]
    pub abs_tol: f64,
    #[serde(default = "default_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_safety")]
    pub safety: f64,
    /// Accepted steps may not shrink below this; falling under it aborts the
    /// run as a stiffness signal.
    #[serde(default = "default_tau_min")]
    pub tau_min: f64,
    #[serde(default = "default_tau_max")]
    pub tau_max_user: f64,
    /// Cap accepted steps at [`stability_bound`] of the grid spacing.
    #[serde(default = "default_true")]
    pub stability_cap_enabled: bool,
}

fn default_tol() -> f64 {
    1e-7
}
fn default_safety() -> f64 {
    0.9
}
fn default_tau_min() -> f64 {
    1e-12
}
fn default_tau_max() -> f64 {
    0.1
}
fn default_true() -> bool {
    true
}

impl Default for StepController {
    fn default() -> Self {
        StepController {
            abs_tol: default_tol(),
            rel_tol: default_tol(),
            safety: default_safety(),
            tau_min: default_tau_min(),
            tau_max_user: default_tau_max(),
            stability_cap_enabled: true,
        }
    }
}

impl StepController {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if !(self.safety > 0.0 && self.safety < 1.0) {
            return Err(Error::Config(format!(
                "safety factor {} must lie in (0, 1)",
                self.safety
            )));
        }
        if !(self.tau_min > 0.0 && self.tau_min < self.tau_max_user) {
            return Err(Error::Config(format!(
                "need 0 < tau_min ({}) < tau_max_user ({})",
                self.tau_min, self.tau_max_user
            )));
        }
        Ok(())
    }
}

/// The time-invariant factor `c(s)` of the tangent-length law
/// `|X_s| = c(s) * (x1^2 + r_c^2)^(-eps/2)`.
#[derive(Debug, Clone)]
pub struct SpeedProfile {
    pub c_of_s: Vec<f64>,
}

/// Largest stable step for grid spacing `h`:
/// `h^2 / sqrt(S^2 + eps * h^2 / r_c^2)`, where `S = 2048/315` is the peak of
/// the 9-point second-difference symbol. The fastest resolved mode rotates at
/// `S/h^2`, and the embedded pair's stability region meets the imaginary axis
/// at `|tau * omega| ~ 1`, so the cap keeps that product at one; the image
/// term adds its rate in quadrature. For the classical 3-point stencil `S`
/// would be 4 and the `eps = 0` limit the familiar `h^2/2` ceiling; the wide
/// stencil's stiffer top mode pushes it down to `h^2/S`.
pub fn stability_bound(h: f64, cfg: &RhsConfig) -> f64 {
    let s = crate::geometry::D2_SYMBOL_PEAK;
    let eps = if cfg.interaction_enabled { cfg.epsilon } else { 0.0 };
    h * h / (s * s + eps * h * h / (cfg.r_c * cfg.r_c)).sqrt()
}

/// Scratch buffers for repeated velocity evaluations.
#[derive(Debug, Default)]
struct RhsBuffers {
    ext: Vec<Vec3>,
    xs: Vec<Vec3>,
    xss: Vec<Vec3>,
}

/// Tangents with squared length below this count as vanished. Genuinely
/// degenerate data does not produce an exact zero here: the stencil applied
/// to (near-)constant nodes leaves a rounding residue of order 1e-16/h that
/// would otherwise pass a `> 0` test and turn into enormous velocities.
const TANGENT_FLOOR_SQ: f64 = 1e-24;

/// Velocity of every node for the state `nodes` under `boundary`; the
/// workhorse behind [`vfe_rhs`] and the stepper, allocation-free once the
/// buffers are warm.
fn rhs_into(
    nodes: &[Vec3],
    boundary: BoundaryMap,
    h: f64,
    cfg: &RhsConfig,
    bufs: &mut RhsBuffers,
    out: &mut [Vec3],
) -> Result<()> {
    let n = nodes.len();
    bufs.xs.resize(n, Vec3::ZERO);
    bufs.xss.resize(n, Vec3::ZERO);
    extend_field_into(nodes, boundary, GHOST_WIDTH, true, &mut bufs.ext);
    first_derivative_into(&bufs.ext, h, &mut bufs.xs);
    second_derivative_into(&bufs.ext, h, &mut bufs.xss);
    let interacting = cfg.interaction_enabled && cfg.epsilon != 0.0;
    let rc_sq = cfg.r_c * cfg.r_c;
    for j in 0..n {
        let xs = bufs.xs[j];
        let speed_sq = xs.norm_sq();
        if !(speed_sq > TANGENT_FLOOR_SQ && speed_sq.is_finite()) {
            return Err(Error::Numerical(format!(
                "tangent vector vanished or went non-finite at node {j}"
            )));
        }
        let speed = speed_sq.sqrt();
        let mut v = xs.cross(bufs.xss[j]) * (1.0 / (speed_sq * speed));
        if interacting {
            let x1 = nodes[j].x;
            v -= xs.cross(Vec3::E1) * (cfg.epsilon * x1 / ((x1 * x1 + rc_sq) * speed));
        }
        out[j] = v;
    }
    Ok(())
}

/// Node velocities of the filament under the configured law.
pub fn vfe_rhs(f: &Filament, cfg: &RhsConfig) -> Result<Vec<Vec3>> {
    cfg.validate()?;
    let mut bufs = RhsBuffers::default();
    let mut out = vec![Vec3::ZERO; f.grid().n()];
    rhs_into(f.nodes(), f.boundary(), f.grid().h(), cfg, &mut bufs, &mut out)?;
    Ok(out)
}

/// Per-node `c(s) = |X_s| * (x1^2 + r_c^2)^(eps/2)`. Under the interacting
/// flow this profile is a constant of the motion, so comparing it across
/// times measures how faithfully the integration tracks the tangent-length
/// law.
pub fn speed_profile(f: &Filament, cfg: &RhsConfig) -> Result<SpeedProfile> {
    cfg.validate()?;
    let n = f.grid().n();
    let h = f.grid().h();
    let mut bufs = RhsBuffers::default();
    bufs.xs.resize(n, Vec3::ZERO);
    extend_field_into(f.nodes(), f.boundary(), GHOST_WIDTH, true, &mut bufs.ext);
    first_derivative_into(&bufs.ext, h, &mut bufs.xs);
    let rc_sq = cfg.r_c * cfg.r_c;
    let half_eps = 0.5 * cfg.epsilon;
    let c_of_s = (0..n)
        .map(|j| {
            let x1 = f.node(j).x;
            bufs.xs[j].norm() * (x1 * x1 + rc_sq).powf(half_eps)
        })
        .collect();
    Ok(SpeedProfile { c_of_s })
}

// Dormand-Prince 5(4) tableau. Seven stages with the first-same-as-last
// property: stage 7 doubles as stage 1 of the next step.

const STAGES: usize = 7;

const A: [[f64; 6]; STAGES] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];

// 5th-order weights coincide with the last tableau row (FSAL).
const B: [f64; STAGES] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];

// Difference between the 5th- and 4th-order weights.
const E: [f64; STAGES] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

// Weights of the 5th dense-output coefficient.
const D: [f64; STAGES] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

// Growth/shrink clamps on the step-size update.
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;

/// One accepted step's dense interpolant: a quintic in the step fraction
/// `theta`, exact at both endpoints.
struct DenseSegment {
    t0: f64,
    tau: f64,
    cont: [Vec<Vec3>; 5],
}

impl DenseSegment {
    fn eval_into(&self, theta: f64, out: &mut [Vec3]) {
        let th1 = 1.0 - theta;
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.cont[0][j]
                + (self.cont[1][j]
                    + (self.cont[2][j] + (self.cont[3][j] + self.cont[4][j] * th1) * theta) * th1)
                    * theta;
        }
    }
}

/// Stepping engine: owns the stage storage and the scratch buffers, and
/// advances a raw node vector so that a transient blow-up never has to pass
/// through filament validation.
struct Stepper {
    boundary: BoundaryMap,
    h: f64,
    cfg: RhsConfig,
    ctrl: StepController,
    cap: f64,
    k: [Vec<Vec3>; STAGES],
    stage: Vec<Vec3>,
    bufs: RhsBuffers,
    /// k[0] already holds the velocity at the current state (FSAL).
    fresh_k0: bool,
}

/// What one attempted step produced.
struct TryStep {
    accepted: bool,
    err: f64,
    tau_next: f64,
}

impl Stepper {
    fn new(f: &Filament, cfg: &RhsConfig, ctrl: &StepController) -> Result<Stepper> {
        cfg.validate()?;
        ctrl.validate()?;
        let n = f.grid().n();
        let h = f.grid().h();
        Ok(Stepper {
            boundary: f.boundary(),
            h,
            cfg: *cfg,
            ctrl: *ctrl,
            cap: stability_bound(h, cfg),
            k: std::array::from_fn(|_| vec![Vec3::ZERO; n]),
            stage: vec![Vec3::ZERO; n],
            bufs: RhsBuffers::default(),
            fresh_k0: false,
        })
    }

    /// Largest step the configuration permits.
    fn tau_cap(&self) -> f64 {
        if self.ctrl.stability_cap_enabled {
            self.cap.min(self.ctrl.tau_max_user)
        } else {
            self.ctrl.tau_max_user
        }
    }

    fn eval_k0(&mut self, y: &[Vec3]) -> Result<()> {
        if !self.fresh_k0 {
            let (k0, rest) = self.k.split_at_mut(1);
            let _ = rest;
            rhs_into(y, self.boundary, self.h, &self.cfg, &mut self.bufs, &mut k0[0])?;
            self.fresh_k0 = true;
        }
        Ok(())
    }

    /// Evaluate stages 2..7 and write the 5th-order update into `y_new`;
    /// returns the weighted error norm of the embedded difference.
    fn stages(&mut self, y: &[Vec3], tau: f64, y_new: &mut [Vec3]) -> Result<f64> {
        let n = y.len();
        for i in 1..STAGES {
            for j in 0..n {
                let mut acc = Vec3::ZERO;
                for (l, k_l) in self.k[..i].iter().enumerate() {
                    let a = A[i][l];
                    if a != 0.0 {
                        acc += k_l[j] * a;
                    }
                }
                self.stage[j] = y[j] + acc * tau;
            }
            let (done, rest) = self.k.split_at_mut(i);
            let _ = done;
            rhs_into(
                &self.stage,
                self.boundary,
                self.h,
                &self.cfg,
                &mut self.bufs,
                &mut rest[0],
            )?;
        }
        let mut err = 0.0f64;
        for j in 0..n {
            let mut acc = Vec3::ZERO;
            let mut e = Vec3::ZERO;
            for (l, k_l) in self.k.iter().enumerate() {
                if B[l] != 0.0 {
                    acc += k_l[j] * B[l];
                }
                e += k_l[j] * E[l];
            }
            let ynj = y[j] + acc * tau;
            y_new[j] = ynj;
            for c in 0..3 {
                let (yc, nc, ec) = match c {
                    0 => (y[j].x, ynj.x, e.x),
                    1 => (y[j].y, ynj.y, e.y),
                    _ => (y[j].z, ynj.z, e.z),
                };
                let scale = self.ctrl.abs_tol + self.ctrl.rel_tol * yc.abs().max(nc.abs());
                err = err.max((ec * tau).abs() / scale);
            }
        }
        Ok(err)
    }

    /// Attempt one step of size `tau` from `y`; on acceptance `y_new` holds
    /// the advanced state and the caller must rotate k[6] into k[0] via
    /// [`Stepper::advance_fsal`].
    fn try_step(&mut self, y: &[Vec3], tau: f64, y_new: &mut [Vec3]) -> Result<TryStep> {
        self.eval_k0(y)?;
        let err = self.stages(y, tau, y_new)?;
        if !err.is_finite() {
            // a stage blew up; retreat hard
            return Ok(TryStep {
                accepted: false,
                err,
                tau_next: tau * FAC_MIN,
            });
        }
        let fac = if err == 0.0 {
            FAC_MAX
        } else {
            (self.ctrl.safety * err.powf(-0.2)).clamp(FAC_MIN, FAC_MAX)
        };
        let accepted = err <= 1.0;
        let tau_next = if accepted {
            (tau * fac).min(self.tau_cap())
        } else {
            tau * fac.min(1.0)
        };
        Ok(TryStep {
            accepted,
            err,
            tau_next,
        })
    }

    /// After an accepted FSAL step the last stage velocity belongs to the
    /// new state.
    fn advance_fsal(&mut self) {
        self.k.swap(0, STAGES - 1);
        self.fresh_k0 = true;
    }

    /// Dense-output coefficients for the step `y -> y_new` of size `tau`
    /// that the stage storage currently describes.
    fn dense_segment(&self, t0: f64, tau: f64, y: &[Vec3], y_new: &[Vec3]) -> DenseSegment {
        let n = y.len();
        let mut cont: [Vec<Vec3>; 5] = std::array::from_fn(|_| vec![Vec3::ZERO; n]);
        for j in 0..n {
            let ydiff = y_new[j] - y[j];
            let bspl = self.k[0][j] * tau - ydiff;
            let mut dsum = Vec3::ZERO;
            for (l, k_l) in self.k.iter().enumerate() {
                if D[l] != 0.0 {
                    dsum += k_l[j] * D[l];
                }
            }
            cont[0][j] = y[j];
            cont[1][j] = ydiff;
            cont[2][j] = bspl;
            cont[3][j] = ydiff - self.k[STAGES - 1][j] * tau - bspl;
            cont[4][j] = dsum * tau;
        }
        DenseSegment { t0, tau, cont }
    }
}

/// Result of [`adaptive_step`].
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub filament: Filament,
    pub tau_used: f64,
    pub tau_next: f64,
    pub error_estimate: f64,
}

/// One accepted embedded step starting from `tau_try`, shrinking on
/// rejection until the controller accepts; shrinking past `tau_min` aborts
/// with a stiffness diagnostic.
pub fn adaptive_step(
    f: &Filament,
    cfg: &RhsConfig,
    ctrl: &StepController,
    tau_try: f64,
) -> Result<StepOutcome> {
    if !(tau_try > 0.0 && tau_try.is_finite()) {
        return Err(Error::Config(format!("trial step {tau_try} must be positive")));
    }
    let mut stepper = Stepper::new(f, cfg, ctrl)?;
    let mut tau = tau_try.min(stepper.tau_cap());
    let y = f.nodes().to_vec();
    let mut y_new = vec![Vec3::ZERO; y.len()];
    loop {
        if tau < ctrl.tau_min {
            return Err(Error::Numerical(format!(
                "step size {tau:.3e} fell below tau_min {:.3e} at t = {}; \
                 the configuration is too stiff for the controller",
                ctrl.tau_min,
                f.time()
            )));
        }
        let r = stepper.try_step(&y, tau, &mut y_new)?;
        if r.accepted {
            let filament = f.replace_nodes(y_new, f.time() + tau)?;
            return Ok(StepOutcome {
                filament,
                tau_used: tau,
                tau_next: r.tau_next,
                error_estimate: r.err,
            });
        }
        tau = r.tau_next;
    }
}

/// Outcome of a fixed-step run; `filament` is absent when the run left the
/// coordinate bound (or lost finiteness) before completing.
#[derive(Debug, Clone)]
pub struct FixedRunReport {
    pub filament: Option<Filament>,
    pub steps_done: usize,
    pub max_coord: f64,
    pub diverged: bool,
}

/// March `max_steps` fixed 5th-order steps of size `tau`, stopping early if
/// any node coordinate exceeds `coord_bound` in magnitude. Divergence is an
/// observable outcome here, not an error: the stability-limit experiments
/// drive the scheme past its bound on purpose.
pub fn fixed_step_run(
    f: &Filament,
    cfg: &RhsConfig,
    tau: f64,
    max_steps: usize,
    coord_bound: Option<f64>,
) -> Result<FixedRunReport> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Config(format!("fixed step {tau} must be positive")));
    }
    let ctrl = StepController::default();
    let mut stepper = Stepper::new(f, cfg, &ctrl)?;
    let mut y = f.nodes().to_vec();
    let mut y_new = vec![Vec3::ZERO; y.len()];
    let mut max_coord = peak_coord(&y);
    for step in 0..max_steps {
        stepper.fresh_k0 = false;
        let r = match stepper.try_step(&y, tau, &mut y_new) {
            Ok(r) => r,
            // the velocity itself degenerating counts as divergence
            Err(Error::Numerical(_)) => {
                return Ok(FixedRunReport {
                    filament: None,
                    steps_done: step,
                    max_coord,
                    diverged: true,
                })
            }
            Err(e) => return Err(e),
        };
        // fixed stepping ignores the controller verdict in r.accepted
        let _ = r;
        std::mem::swap(&mut y, &mut y_new);
        let peak = peak_coord(&y);
        max_coord = max_coord.max(peak);
        if !peak.is_finite() || coord_bound.is_some_and(|b| peak > b) {
            return Ok(FixedRunReport {
                filament: None,
                steps_done: step + 1,
                max_coord,
                diverged: true,
            });
        }
    }
    let filament = f.replace_nodes(y, f.time() + max_steps as f64 * tau)?;
    Ok(FixedRunReport {
        filament: Some(filament),
        steps_done: max_steps,
        max_coord,
        diverged: false,
    })
}

fn peak_coord(nodes: &[Vec3]) -> f64 {
    nodes.iter().fold(0.0f64, |m, p| m.max(p.max_abs()))
}

/// Observer verdict: keep going or end the run at the sampled time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Signal {
    Continue,
    Stop,
}

/// How [`evolve`] runs and what it reports back.
#[derive(Debug, Clone, Copy)]
pub struct EvolveOptions {
    pub t_end: f64,
    /// Uniform observer sampling interval; `None` invokes the observer on
    /// every accepted step instead.
    pub sample_dt: Option<f64>,
    /// Abort (as an error) when any coordinate magnitude exceeds this.
    pub divergence_bound: Option<f64>,
}

impl EvolveOptions {
    pub fn to_time(t_end: f64) -> EvolveOptions {
        EvolveOptions {
            t_end,
            sample_dt: None,
            divergence_bound: None,
        }
    }
}

/// Where and why [`evolve`] returned.
#[derive(Debug, Clone)]
pub struct EvolveReport {
    pub filament: Filament,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    /// An observer ended the run before `t_end`.
    pub stopped_early: bool,
}

/// Advance the filament to `opts.t_end` under adaptive stepping, feeding the
/// observer along the way.
///
/// With `sample_dt` set, the observer sees 5th-order dense interpolants at
/// the exact times `t0 + m*sample_dt` (m = 1, 2, ...) regardless of where
/// the steps land, and nothing else -- an off-cadence `t_end` is reported in
/// the returned state but not observed, so a sampled series stays uniform.
/// The step sequence -- and hence the computed trajectory -- is bitwise
/// independent of the observer.
/// Returning [`Signal::Stop`] ends the run at the sampled time with the
/// interpolated state.
pub fn evolve<F>(
    f: &Filament,
    cfg: &RhsConfig,
    ctrl: &StepController,
    opts: &EvolveOptions,
    mut observer: F,
) -> Result<EvolveReport>
where
    F: FnMut(f64, &Filament) -> Result<Signal>,
{
    let t0 = f.time();
    if !(opts.t_end > t0) {
        return Err(Error::Config(format!(
            "t_end {} must exceed the filament time {t0}",
            opts.t_end
        )));
    }
    if let Some(dt) = opts.sample_dt {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("sample_dt {dt} must be positive")));
        }
    }
    let mut stepper = Stepper::new(f, cfg, ctrl)?;
    let mut y = f.nodes().to_vec();
    let mut y_new = vec![Vec3::ZERO; y.len()];
    let mut sample = vec![Vec3::ZERO; y.len()];
    let mut t = t0;
    let mut tau = stepper.tau_cap().min(opts.t_end - t0);
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    // index of the next dense sample to deliver
    let mut m = 1u64;
    loop {
        if tau < ctrl.tau_min {
            return Err(Error::Numerical(format!(
                "step size {tau:.3e} fell below tau_min {:.3e} at t = {t}; \
                 the configuration is too stiff for the controller",
                ctrl.tau_min
            )));
        }
        let snap = tau >= opts.t_end - t;
        let tau_eff = if snap { opts.t_end - t } else { tau };
        let r = stepper.try_step(&y, tau_eff, &mut y_new)?;
        if !r.accepted {
            rejected += 1;
            tau = r.tau_next;
            continue;
        }
        accepted += 1;
        let t_new = if snap { opts.t_end } else { t + tau_eff };
        if let Some(bound) = opts.divergence_bound {
            let peak = peak_coord(&y_new);
            if !peak.is_finite() || peak > bound {
                return Err(Error::Numerical(format!(
                    "coordinate magnitude {peak} left the divergence bound {bound} at t = {t_new}"
                )));
            }
        }
        match opts.sample_dt {
            Some(dt) => {
                // deliver every dense sample the step swept over
                let mut seg: Option<DenseSegment> = None;
                while (m as f64) * dt + t0 <= t_new + dt * 1e-9 {
                    let ts = t0 + (m as f64) * dt;
                    let ts = ts.min(t_new);
                    let seg = seg.get_or_insert_with(|| {
                        stepper.dense_segment(t, tau_eff, &y, &y_new)
                    });
                    let theta = ((ts - seg.t0) / seg.tau).clamp(0.0, 1.0);
                    seg.eval_into(theta, &mut sample);
                    let view = f.replace_nodes(sample.clone(), ts)?;
                    if observer(ts, &view)? == Signal::Stop {
                        return Ok(EvolveReport {
                            filament: view,
                            steps_accepted: accepted,
                            steps_rejected: rejected,
                            stopped_early: true,
                        });
                    }
                    m += 1;
                }
            }
            None => {
                let view = f.replace_nodes(y_new.clone(), t_new)?;
                if observer(t_new, &view)? == Signal::Stop {
                    return Ok(EvolveReport {
                        filament: view,
                        steps_accepted: accepted,
                        steps_rejected: rejected,
                        stopped_early: true,
                    });
                }
            }
        }
        stepper.advance_fsal();
        std::mem::swap(&mut y, &mut y_new);
        t = t_new;
        if snap {
            let filament = f.replace_nodes(y, t)?;
            return Ok(EvolveReport {
                filament,
                steps_accepted: accepted,
                steps_rejected: rejected,
                stopped_early: false,
            });
        }
        tau = r.tau_next.min(stepper.tau_cap());
    }
}
