//! Initial conditions: eye-shaped vortices, their polygonal cousins,
//! perturbed antiparallel pairs, and exact reference curves.

use crate::error::{Error, Result};
use crate::geometry::{BoundaryMap, Filament, ParamGrid, MIN_NODES};
use crate::vec3::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI, TAU};

/// Eye-shaped vortex: two symmetric arcs meeting at two corners.
///
/// `b` is half the maximum width, `b_tilde` the out-of-plane deviation;
/// `b_tilde = 0` gives the planar eye.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EyeParams {
    pub b: f64,
    #[serde(default)]
    pub b_tilde: f64,
    pub n_nodes: usize,
}

impl EyeParams {
    fn validate(&self) -> Result<()> {
        if !(self.b.is_finite() && self.b > 0.0) {
            return Err(Error::Config(format!("eye width b must be > 0, got {}", self.b)));
        }
        if !(self.b_tilde.is_finite() && self.b_tilde >= 0.0) {
            return Err(Error::Config(format!(
                "eye deviation b_tilde must be >= 0, got {}",
                self.b_tilde
            )));
        }
        if self.n_nodes < MIN_NODES || self.n_nodes % 2 != 0 {
            return Err(Error::Config(format!(
                "eye needs an even node count of at least {MIN_NODES}, got {}",
                self.n_nodes
            )));
        }
        Ok(())
    }
}

/// Point of the unscaled eye curve at parameter `s` in [0, 2*pi).
///
/// The first branch runs from the corner at (0, -pi/2, 0) up to the one at
/// (0, pi/2, 0); the second returns mirrored in x2 with the out-of-plane
/// deviation flipped. Exposed so oracles can quadrature the raw curve.
pub fn eye_point(b: f64, b_tilde: f64, s: f64) -> Vec3 {
    let s = s.rem_euclid(TAU);
    if s <= PI {
        Vec3::new(b * s.sin(), s - FRAC_PI_2, -b_tilde * s.sin())
    } else {
        Vec3::new(b * s.sin(), 3.0 * FRAC_PI_2 - s, b_tilde * s.sin())
    }
}

/// Corner angle of the eye with half-width `b` and deviation `b_tilde`.
pub fn eye_corner_angle(b: f64, b_tilde: f64) -> Result<f64> {
    if !(b.is_finite() && b > 0.0) {
        return Err(Error::Config(format!("corner angle needs b > 0, got {b}")));
    }
    let q = 1.0 + b_tilde * b_tilde;
    let cos_theta = ((q - b * b) / (q + b * b)).clamp(-1.0, 1.0);
    Ok(cos_theta.acos())
}

/// Equal-arc parameter stations on one eye branch.
///
/// Both branches share the speed profile `sqrt(1 + (b^2 + b_tilde^2) cos^2 s)`
/// relative to their own corner, so the stations of the second branch are
/// these shifted by pi. Returns the `half_n` stations in [0, pi) and the
/// branch arc length. Solving on the analytic speed keeps resampled nodes
/// exactly on the curve; interpolating across the corners instead would
/// ring at the 1e-3 level and spoil the total length.
fn eye_branch_stations(c_sq: f64, half_n: usize) -> (Vec<f64>, f64) {
    const SUB: usize = 32;
    let cells = half_n * SUB;
    let ds = PI / cells as f64;
    let speed = |s: f64| (1.0 + c_sq * s.cos() * s.cos()).sqrt();
    let mut arc = Vec::with_capacity(cells + 1);
    let mut left = Vec::with_capacity(cells);
    let mut mid = Vec::with_capacity(cells);
    let mut right = Vec::with_capacity(cells);
    arc.push(0.0);
    let mut total = 0.0;
    let mut prev = speed(0.0);
    for i in 1..=cells {
        let fm = speed((i as f64 - 0.5) * ds);
        let f1 = speed(i as f64 * ds);
        total += ds / 6.0 * (prev + 4.0 * fm + f1);
        arc.push(total);
        left.push(prev);
        mid.push(fm);
        right.push(f1);
        prev = f1;
    }
    let mut stations = Vec::with_capacity(half_n);
    let mut cursor = 0usize;
    for k in 0..half_n {
        let target = total * k as f64 / half_n as f64;
        while cursor + 1 < arc.len() && arc[cursor + 1] < target {
            cursor += 1;
        }
        let span = arc[cursor + 1] - arc[cursor];
        let mut theta = if span > 0.0 {
            ((target - arc[cursor]) / span).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let (f0, fm, f1) = (left[cursor], mid[cursor], right[cursor]);
        let (a, b, c) = (f0, -3.0 * f0 + 4.0 * fm - f1, 2.0 * f0 - 4.0 * fm + 2.0 * f1);
        let rem = (target - arc[cursor]) / ds;
        for _ in 0..3 {
            let g = a * theta + 0.5 * b * theta * theta + c * theta * theta * theta / 3.0 - rem;
            let dg = a + b * theta + c * theta * theta;
            if dg <= 0.0 {
                break;
            }
            theta = (theta - g / dg).clamp(0.0, 1.0);
        }
        stations.push((cursor as f64 + theta) * ds);
    }
    (stations, total)
}

/// Closed eye-shaped filament of total length 2*pi, corners at nodes 0 and
/// `n_nodes/2`.
pub fn make_eye(p: &EyeParams) -> Result<Filament> {
    p.validate()?;
    let half_n = p.n_nodes / 2;
    let (stations, branch_len) = eye_branch_stations(p.b * p.b + p.b_tilde * p.b_tilde, half_n);
    let scale = PI / branch_len;
    let mut nodes = Vec::with_capacity(p.n_nodes);
    for &s in &stations {
        nodes.push(eye_point(p.b, p.b_tilde, s) * scale);
    }
    for &s in &stations {
        nodes.push(eye_point(p.b, p.b_tilde, PI + s) * scale);
    }
    Filament::new(nodes, BoundaryMap::PeriodicShift(Vec3::ZERO))
}

/// Polygonal eye: the first `k` sides of each half of a regular `m`-gon,
/// joined into a closed curve.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyEyeParams {
    /// Sides of the underlying regular polygon; must be even.
    pub m: usize,
    /// Sides kept per half; must divide `m` with `m/k >= 2`.
    pub k: usize,
}

impl PolyEyeParams {
    fn validate(&self) -> Result<()> {
        if self.m < 4 || self.m % 2 != 0 {
            return Err(Error::Config(format!(
                "polygon side count m must be even and at least 4, got {}",
                self.m
            )));
        }
        if self.k == 0 || self.m % self.k != 0 {
            return Err(Error::Config(format!(
                "kept side count k must divide m (m={}, k={})",
                self.m, self.k
            )));
        }
        if self.m / self.k < 2 {
            return Err(Error::Config(format!(
                "need m/k of at least 2, got m={} k={}",
                self.m, self.k
            )));
        }
        Ok(())
    }
}

/// Corner angle of the polygonal eye: `2*pi*(m - l)/(l*m)` with `l = m/k`.
pub fn polygonal_corner_angle(m: usize, k: usize) -> f64 {
    let l = m as f64 / k as f64;
    TAU * (m as f64 - l) / (l * m as f64)
}

/// Closed polygonal eye with `nodes_per_side` nodes on each of the `2k`
/// sides, total length exactly 2*pi, and the returned corner angle.
///
/// The circumradius is chosen as pi/(2*k*sin(pi/m)) so each side has length
/// pi/k; no resampling is needed and `|X_s|` is uniform by construction.
pub fn make_polygonal_eye(p: &PolyEyeParams, nodes_per_side: usize) -> Result<(Filament, f64)> {
    p.validate()?;
    let (m, k) = (p.m, p.k);
    let n = 2 * k * nodes_per_side;
    if nodes_per_side == 0 || n < MIN_NODES {
        return Err(Error::Config(format!(
            "{nodes_per_side} nodes per side gives {n} total, need at least {MIN_NODES}"
        )));
    }
    let radius = PI / (2.0 * k as f64 * (PI / m as f64).sin());
    let vertex = |i: usize| {
        let ang = TAU * (i % m) as f64 / m as f64;
        Vec3::new(radius * ang.sin(), radius * ang.cos(), 0.0)
    };
    // First piece: vertices 0..k. Second piece: the antipodal arc m/2..m/2+k
    // translated so it continues from vertex k; antipodal symmetry makes it
    // land back on vertex 0.
    let t = vertex(k) - vertex(m / 2);
    let mut corners = Vec::with_capacity(2 * k + 1);
    corners.extend((0..=k).map(vertex));
    corners.extend((1..=k).map(|j| vertex(m / 2 + j) + t));
    debug_assert!((corners[2 * k] - corners[0]).norm() < 1e-12 * radius);

    let mut nodes = Vec::with_capacity(n);
    for side in 0..2 * k {
        let (a, b) = (corners[side], corners[side + 1]);
        for q in 0..nodes_per_side {
            let frac = q as f64 / nodes_per_side as f64;
            nodes.push(a + (b - a) * frac);
        }
    }
    let f = Filament::new(nodes, BoundaryMap::PeriodicShift(Vec3::ZERO))?;
    Ok((f, polygonal_corner_angle(m, k)))
}

/// Band-limited perturbation applied to an antiparallel pair.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    pub mode_count: usize,
    pub amplitude: f64,
    pub seed: u64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Perturbation {
            mode_count: 0,
            amplitude: 0.0,
            seed: 0,
        }
    }
}

/// One vortex of an antiparallel pair running along x3; its partner is the
/// mirror image in x1 and x3 and never materializes as nodes.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairParams {
    /// Half-separation: the unperturbed line sits at x1 = b.
    pub b: f64,
    #[serde(default)]
    pub perturbation: Perturbation,
    pub n_nodes: usize,
    /// Spatial period L along the line direction; the parameter window
    /// [0, 2*pi) maps onto one period.
    #[serde(default = "default_axis_period")]
    pub axis_period: f64,
}

fn default_axis_period() -> f64 {
    TAU
}

impl PairParams {
    fn validate(&self) -> Result<()> {
        if !(self.b.is_finite() && self.b > 0.0) {
            return Err(Error::Config(format!(
                "pair half-separation b must be > 0, got {}",
                self.b
            )));
        }
        if !(self.axis_period.is_finite() && self.axis_period > 0.0) {
            return Err(Error::Config(format!(
                "axis period must be > 0, got {}",
                self.axis_period
            )));
        }
        let a = self.perturbation.amplitude;
        if !(a.is_finite() && a >= 0.0) {
            return Err(Error::Config(format!("perturbation amplitude {a} invalid")));
        }
        if a >= self.b {
            return Err(Error::Config(format!(
                "perturbation amplitude {a} must stay below the half-separation {}",
                self.b
            )));
        }
        if a > 0.0 && self.perturbation.mode_count == 0 {
            return Err(Error::Config(
                "nonzero amplitude needs at least one perturbation mode".into(),
            ));
        }
        if self.n_nodes < MIN_NODES {
            return Err(Error::Config(format!(
                "pair needs at least {MIN_NODES} nodes, got {}",
                self.n_nodes
            )));
        }
        Ok(())
    }
}

/// Sum of cosine modes with 1/m^2 weights and seeded phases, rescaled so
/// its maximum over the grid is exactly `amplitude`.
fn perturbation_profile(
    pert: &Perturbation,
    phases: &[f64],
    grid: ParamGrid,
) -> Vec<f64> {
    let n = grid.n();
    if phases.is_empty() {
        // summing no modes must give exact +0.0, not the -0.0 of an empty sum
        return vec![0.0; n];
    }
    let mut raw: Vec<f64> = (0..n)
        .map(|j| {
            let s = grid.s(j);
            phases
                .iter()
                .enumerate()
                .map(|(i, phi)| {
                    let m = (i + 1) as f64;
                    (m * s + phi).cos() / (m * m)
                })
                .sum()
        })
        .collect();
    let max = raw.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if max > 0.0 {
        let gain = pert.amplitude / max;
        for v in &mut raw {
            *v *= gain;
        }
    }
    raw
}

/// Periodic strand `(b + d1(s), d2(s), L*s/(2*pi))` with boundary shift
/// `(0, 0, L)`. Deterministic for a fixed seed.
pub fn make_antiparallel_pair(p: &PairParams) -> Result<Filament> {
    p.validate()?;
    let grid = ParamGrid::new(p.n_nodes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.perturbation.seed);
    let mut draw_phases = || -> Vec<f64> {
        (0..p.perturbation.mode_count)
            .map(|_| rng.gen_range(0.0..TAU))
            .collect()
    };
    let phases1 = draw_phases();
    let phases2 = draw_phases();
    let d1 = perturbation_profile(&p.perturbation, &phases1, grid);
    let d2 = perturbation_profile(&p.perturbation, &phases2, grid);
    let nodes = (0..p.n_nodes)
        .map(|j| {
            // axis_period/TAU is exactly 1.0 at the default period, keeping
            // the unperturbed strand bit-identical to the line reference
            Vec3::new(p.b + d1[j], d2[j], p.axis_period / TAU * grid.s(j))
        })
        .collect();
    Filament::new(nodes, BoundaryMap::PeriodicShift(Vec3::new(0.0, 0.0, p.axis_period)))
}

/// Self-similar corner strength for a corner of angle `theta`:
/// `sin(theta/2) = exp(-pi c0^2 / 2)`.
pub fn corner_c0(theta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta <= PI) {
        return Err(Error::Config(format!(
            "corner angle must lie in (0, pi], got {theta}"
        )));
    }
    Ok((-2.0 * (theta / 2.0).sin().ln() / PI).sqrt())
}

/// Analytic reference curves for oracles and convergence studies.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum ReferenceKind {
    Circle { radius: f64 },
    /// Straight strand at x1 = offset along x3 with period 2*pi: the
    /// zero-amplitude antiparallel pair.
    Line { offset: f64 },
    Helix { radius: f64, pitch: f64 },
}

/// Exactly sampled reference curve with the matching boundary map.
pub fn make_reference(kind: ReferenceKind, n_nodes: usize) -> Result<Filament> {
    let grid = ParamGrid::new(n_nodes)?;
    match kind {
        ReferenceKind::Circle { radius } => {
            if !(radius.is_finite() && radius > 0.0) {
                return Err(Error::Config(format!("circle radius {radius} invalid")));
            }
            Filament::new(
                (0..n_nodes)
                    .map(|j| Vec3::new(radius * grid.s(j).cos(), radius * grid.s(j).sin(), 0.0))
                    .collect(),
                BoundaryMap::PeriodicShift(Vec3::ZERO),
            )
        }
        ReferenceKind::Line { offset } => {
            if !offset.is_finite() {
                return Err(Error::Config(format!("line offset {offset} invalid")));
            }
            Filament::new(
                (0..n_nodes)
                    .map(|j| Vec3::new(offset, 0.0, grid.s(j)))
                    .collect(),
                BoundaryMap::PeriodicShift(Vec3::new(0.0, 0.0, TAU)),
            )
        }
        ReferenceKind::Helix { radius, pitch } => {
            if !(radius.is_finite() && radius > 0.0 && pitch.is_finite()) {
                return Err(Error::Config(format!(
                    "helix parameters radius={radius} pitch={pitch} invalid"
                )));
            }
            Filament::new(
                (0..n_nodes)
                    .map(|j| {
                        let s = grid.s(j);
                        Vec3::new(radius * s.cos(), radius * s.sin(), pitch * s)
                    })
                    .collect(),
                BoundaryMap::PeriodicShift(Vec3::new(0.0, 0.0, pitch * TAU)),
            )
        }
    }
}
