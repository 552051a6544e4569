//! Discrete space curves on a uniform parameter grid.
//!
//! A filament is a sampled curve `X(s)` on `s_j = 2*pi*j/n` together with a
//! boundary map that says how the curve continues past the ends of the
//! parameter window. All derivatives are taken with centered 8th-order
//! stencils on a ghost-extended copy of the nodes, so the two supported
//! continuations are exact wherever the underlying curve really has the
//! claimed symmetry:
//!
//! * [`BoundaryMap::PeriodicShift`]: `X(s + 2*pi) = X(s) + shift`. A closed
//!   loop is the `shift = 0` case; an open strand that repeats along an axis
//!   (e.g. one filament of a translationally symmetric pair) uses the axis
//!   period.
//! * [`BoundaryMap::MirrorAntisymmetric`]: `X(s + 2*pi) = D X(s)` with
//!   `D = diag(-1, 1, -1)`. The physical curve closes after two parameter
//!   windows; [`closed_curve_assemble`] reconstructs that double cover.

use crate::error::{Error, Result};
use crate::vec3::Vec3;
use num_complex::Complex64;
use std::f64::consts::TAU;

mod reparam;
mod stencil;

pub use reparam::arclength_reparametrize;
pub(crate) use stencil::{first_derivative_into, second_derivative_into, D2_SYMBOL_PEAK};

/// Ghost nodes added per side; fixed by the 9-point stencils.
pub const GHOST_WIDTH: usize = 4;

/// Fewest nodes a filament may carry. Below this the ghost regions of the
/// two ends overlap and the stencils read wrapped-around data twice.
pub const MIN_NODES: usize = 16;

/// Curvatures below this are treated as zero when forming torsion, which
/// divides by `kappa^2`.
pub const CURVATURE_FLOOR: f64 = 1e-8;

/// Uniform grid `s_j = j * h`, `h = 2*pi/n`, covering one parameter window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamGrid {
    n: usize,
}

impl ParamGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < MIN_NODES {
            return Err(Error::Geometry(format!(
                "grid needs at least {MIN_NODES} nodes, got {n}"
            )));
        }
        Ok(ParamGrid { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Parameter spacing `2*pi/n`.
    pub fn h(&self) -> f64 {
        TAU / self.n as f64
    }

    /// Parameter value of node `j`.
    pub fn s(&self, j: usize) -> f64 {
        self.h() * j as f64
    }
}

/// How the curve continues outside `[0, 2*pi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryMap {
    /// `X(s + 2*pi) = X(s) + shift`; pass `Vec3::ZERO` for a closed loop.
    PeriodicShift(Vec3),
    /// `X(s + 2*pi) = D X(s)` with `D = diag(-1, 1, -1)`.
    MirrorAntisymmetric,
}

/// A sampled curve: nodes on a [`ParamGrid`] plus a [`BoundaryMap`] and the
/// simulation time the sample was taken at.
#[derive(Debug, Clone, PartialEq)]
pub struct Filament {
    grid: ParamGrid,
    nodes: Vec<Vec3>,
    boundary: BoundaryMap,
    time: f64,
}

impl Filament {
    pub fn new(nodes: Vec<Vec3>, boundary: BoundaryMap) -> Result<Self> {
        Self::with_time(nodes, boundary, 0.0)
    }

    pub fn with_time(nodes: Vec<Vec3>, boundary: BoundaryMap, time: f64) -> Result<Self> {
        let grid = ParamGrid::new(nodes.len())?;
        if let Some(j) = nodes.iter().position(|p| !p.is_finite()) {
            return Err(Error::Geometry(format!("node {j} is not finite")));
        }
        if !time.is_finite() {
            return Err(Error::Geometry("time is not finite".into()));
        }
        Ok(Filament {
            grid,
            nodes,
            boundary,
            time,
        })
    }

    pub fn grid(&self) -> ParamGrid {
        self.grid
    }

    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    pub fn node(&self, j: usize) -> Vec3 {
        self.nodes[j]
    }

    pub fn boundary(&self) -> BoundaryMap {
        self.boundary
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Same grid and boundary, new node positions and time.
    pub fn replace_nodes(&self, nodes: Vec<Vec3>, time: f64) -> Result<Filament> {
        if nodes.len() != self.grid.n() {
            return Err(Error::Geometry(format!(
                "expected {} nodes, got {}",
                self.grid.n(),
                nodes.len()
            )));
        }
        Filament::with_time(nodes, self.boundary, time)
    }
}

/// Fill `out` with `values` plus `width` ghost nodes per side.
///
/// `with_shift` selects between the two kinds of field living on the curve:
/// positions themselves pick up the translation of a `PeriodicShift`
/// boundary, while derived fields (tangents, velocities, ...) are invariant
/// under it and must be extended with the shift suppressed. The mirror map
/// is linear, so it applies to both kinds unchanged.
pub(crate) fn extend_field_into(
    values: &[Vec3],
    boundary: BoundaryMap,
    width: usize,
    with_shift: bool,
    out: &mut Vec<Vec3>,
) {
    let n = values.len();
    debug_assert!(width <= n / 2);
    out.clear();
    out.reserve(n + 2 * width);
    match boundary {
        BoundaryMap::PeriodicShift(shift) => {
            let shift = if with_shift { shift } else { Vec3::ZERO };
            for m in (1..=width).rev() {
                out.push(values[n - m] - shift);
            }
            out.extend_from_slice(values);
            for m in 0..width {
                out.push(values[m] + shift);
            }
        }
        BoundaryMap::MirrorAntisymmetric => {
            for m in (1..=width).rev() {
                out.push(values[n - m].mirror());
            }
            out.extend_from_slice(values);
            for m in 0..width {
                out.push(values[m].mirror());
            }
        }
    }
}

/// Ghost-extended copy of the filament's nodes (positions, so a
/// `PeriodicShift` boundary contributes its translation).
///
/// `width` may not exceed half the node count; past that the two ghost
/// regions would sample overlapping wrapped data.
pub fn ghost_extend(f: &Filament, width: usize) -> Result<Vec<Vec3>> {
    let n = f.grid().n();
    if width > n / 2 {
        return Err(Error::Geometry(format!(
            "ghost width {width} exceeds half the node count {n}"
        )));
    }
    let mut out = Vec::new();
    extend_field_into(f.nodes(), f.boundary(), width, true, &mut out);
    Ok(out)
}

/// First and second parameter derivatives `X_s`, `X_ss` at every node.
pub fn derivative_fields(f: &Filament) -> (Vec<Vec3>, Vec<Vec3>) {
    let n = f.grid().n();
    let h = f.grid().h();
    let mut ext = Vec::new();
    extend_field_into(f.nodes(), f.boundary(), GHOST_WIDTH, true, &mut ext);
    let mut xs = vec![Vec3::ZERO; n];
    let mut xss = vec![Vec3::ZERO; n];
    first_derivative_into(&ext, h, &mut xs);
    second_derivative_into(&ext, h, &mut xss);
    (xs, xss)
}

/// Pointwise Frenet data along a filament.
#[derive(Debug, Clone)]
pub struct FrenetData {
    /// Unit tangents `X_s / |X_s|`.
    pub tangent: Vec<Vec3>,
    /// Curvature `|X_s x X_ss| / |X_s|^3`.
    pub curvature: Vec<f64>,
    /// Torsion `((X_s x X_ss) . X_sss) / |X_s x X_ss|^2`; zero where the
    /// curvature is below [`CURVATURE_FLOOR`].
    pub torsion: Vec<f64>,
    /// True where torsion was zeroed because the curve is locally straight.
    pub torsion_degenerate: Vec<bool>,
}

/// Tangent, curvature and torsion at every node.
///
/// The third derivative is formed by differencing the second-derivative
/// field (re-ghosted with the boundary's translation suppressed), which
/// keeps all stencil applications on uniformly sampled data.
pub fn frenet_curvature_torsion(f: &Filament) -> Result<FrenetData> {
    let n = f.grid().n();
    let h = f.grid().h();
    let (xs, xss) = derivative_fields(f);
    let mut ext = Vec::new();
    extend_field_into(&xss, f.boundary(), GHOST_WIDTH, false, &mut ext);
    let mut xsss = vec![Vec3::ZERO; n];
    first_derivative_into(&ext, h, &mut xsss);

    let mut tangent = Vec::with_capacity(n);
    let mut curvature = Vec::with_capacity(n);
    let mut torsion = Vec::with_capacity(n);
    let mut torsion_degenerate = Vec::with_capacity(n);
    for j in 0..n {
        let speed = xs[j].norm();
        if speed == 0.0 {
            return Err(Error::Geometry(format!(
                "zero tangent at node {j}; curve is degenerate there"
            )));
        }
        tangent.push(xs[j] / speed);
        let cr = xs[j].cross(xss[j]);
        let cr_norm = cr.norm();
        let kappa = cr_norm / (speed * speed * speed);
        curvature.push(kappa);
        if kappa < CURVATURE_FLOOR {
            torsion.push(0.0);
            torsion_degenerate.push(true);
        } else {
            torsion.push(cr.dot(xsss[j]) / (cr_norm * cr_norm));
            torsion_degenerate.push(false);
        }
    }
    Ok(FrenetData {
        tangent,
        curvature,
        torsion,
        torsion_degenerate,
    })
}

/// Filtered curve function `psi_j = kappa_j * exp(i * Phi_j)` with `Phi` the
/// cumulative trapezoid integral of torsion from node 0.
pub fn hasimoto_psi(f: &Filament) -> Result<Vec<Complex64>> {
    let frenet = frenet_curvature_torsion(f)?;
    let h = f.grid().h();
    let n = f.grid().n();
    let mut psi = Vec::with_capacity(n);
    let mut phase = 0.0;
    psi.push(Complex64::from_polar(frenet.curvature[0], 0.0));
    for j in 1..n {
        phase += 0.5 * h * (frenet.torsion[j - 1] + frenet.torsion[j]);
        psi.push(Complex64::from_polar(frenet.curvature[j], phase));
    }
    Ok(psi)
}

/// Arc length of one parameter window, by the trapezoid rule on `|X_s|`.
///
/// The integrand repeats across the window under both boundary maps (the
/// mirror map is a rotation), so the periodic trapezoid rule — a plain sum
/// over the `n` nodes — applies.
pub fn total_length(f: &Filament) -> f64 {
    let (xs, _) = derivative_fields(f);
    let h = f.grid().h();
    xs.iter().map(|v| v.norm()).sum::<f64>() * h
}

/// The double cover of a mirror-antisymmetric filament, stitched into a
/// single closed polyline.
#[derive(Debug, Clone)]
pub struct AssembledLoop {
    /// `2n` vertices: the filament's nodes followed by their images under
    /// `D = diag(-1, 1, -1)`.
    pub nodes: Vec<Vec3>,
    /// Distance between the last copied node and the first mirrored one
    /// (and, by symmetry, between the last mirrored node and node 0).
    pub junction_gap: f64,
    /// Largest node-to-node spacing of the input half.
    pub max_input_spacing: f64,
    /// True when the junction gap is at most twice the input spacing, i.e.
    /// the two halves really meet instead of leaving a seam.
    pub junction_ok: bool,
}

/// Stitch a mirror-antisymmetric filament and its `D`-image into the closed
/// loop they jointly sample. Errors on any other boundary map.
pub fn closed_curve_assemble(f: &Filament) -> Result<AssembledLoop> {
    if f.boundary() != BoundaryMap::MirrorAntisymmetric {
        return Err(Error::Geometry(
            "only mirror-antisymmetric filaments assemble into a double cover".into(),
        ));
    }
    let n = f.grid().n();
    let mut nodes = Vec::with_capacity(2 * n);
    nodes.extend_from_slice(f.nodes());
    nodes.extend(f.nodes().iter().map(|p| p.mirror()));

    let mut max_input_spacing = 0.0f64;
    for j in 0..n {
        let d = (f.node((j + 1) % n) - f.node(j)).norm();
        // The wrap distance n-1 -> 0 crosses the junction; measure it on the
        // assembled loop below instead.
        if j + 1 < n {
            max_input_spacing = max_input_spacing.max(d);
        }
    }
    let junction_gap = (nodes[n] - nodes[n - 1]).norm();
    let junction_ok = junction_gap <= 2.0 * max_input_spacing;
    Ok(AssembledLoop {
        nodes,
        junction_gap,
        max_input_spacing,
        junction_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn closed(nodes: Vec<Vec3>) -> Filament {
        Filament::new(nodes, BoundaryMap::PeriodicShift(Vec3::ZERO)).unwrap()
    }

    fn trig_curve(n: usize) -> Filament {
        let grid = ParamGrid::new(n).unwrap();
        closed(
            (0..n)
                .map(|j| {
                    let s = grid.s(j);
                    Vec3::new((3.0 * s).cos(), (3.0 * s).sin(), (2.0 * s).cos())
                })
                .collect(),
        )
    }

    fn max_err(got: &[Vec3], want: impl Fn(usize) -> Vec3) -> f64 {
        got.iter()
            .enumerate()
            .map(|(j, v)| (*v - want(j)).max_abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn grid_rejects_tiny_n() {
        assert!(ParamGrid::new(8).is_err());
        assert!(ParamGrid::new(16).is_ok());
    }

    #[test]
    fn derivative_convergence_is_eighth_order() {
        // Grids coarse enough that truncation, not rounding, dominates: the
        // second-derivative stencil amplifies rounding by 1/h^2, which
        // floors the error near 1e-11 on fine grids.
        let mut errs = Vec::new();
        for n in [64usize, 128] {
            let f = trig_curve(n);
            let grid = f.grid();
            let (xs, xss) = derivative_fields(&f);
            let e1 = max_err(&xs, |j| {
                let s = grid.s(j);
                Vec3::new(
                    -3.0 * (3.0 * s).sin(),
                    3.0 * (3.0 * s).cos(),
                    -2.0 * (2.0 * s).sin(),
                )
            });
            let e2 = max_err(&xss, |j| {
                let s = grid.s(j);
                Vec3::new(
                    -9.0 * (3.0 * s).cos(),
                    -9.0 * (3.0 * s).sin(),
                    -4.0 * (2.0 * s).cos(),
                )
            });
            errs.push((e1, e2));
        }
        let order1 = (errs[0].0 / errs[1].0).log2();
        let order2 = (errs[0].1 / errs[1].1).log2();
        assert!((7.5..8.5).contains(&order1), "first-derivative order {order1}");
        assert!((7.5..8.5).contains(&order2), "second-derivative order {order2}");
    }

    #[test]
    fn circle_derivatives_are_near_exact() {
        let n = 256;
        let grid = ParamGrid::new(n).unwrap();
        let f = closed(
            (0..n)
                .map(|j| Vec3::new(grid.s(j).cos(), grid.s(j).sin(), 0.0))
                .collect(),
        );
        let (xs, xss) = derivative_fields(&f);
        let e1 = max_err(&xs, |j| Vec3::new(-grid.s(j).sin(), grid.s(j).cos(), 0.0));
        let e2 = max_err(&xss, |j| Vec3::new(-grid.s(j).cos(), -grid.s(j).sin(), 0.0));
        assert!(e1 < 1e-12, "X_s error {e1}");
        assert!(e2 < 1e-11, "X_ss error {e2}");
    }

    #[test]
    fn shifted_boundary_wraps_open_strands() {
        // A helix sampled over one turn with the pitch declared as the
        // boundary shift; the stencils must stay accurate across the wrap.
        let n = 256;
        let pitch = 0.7;
        let grid = ParamGrid::new(n).unwrap();
        let f = Filament::new(
            (0..n)
                .map(|j| {
                    let s = grid.s(j);
                    Vec3::new(s.cos(), s.sin(), pitch * s)
                })
                .collect(),
            BoundaryMap::PeriodicShift(Vec3::new(0.0, 0.0, pitch * TAU)),
        )
        .unwrap();
        let (xs, _) = derivative_fields(&f);
        let e1 = max_err(&xs, |j| Vec3::new(-grid.s(j).sin(), grid.s(j).cos(), pitch));
        assert!(e1 < 1e-12, "X_s error across shifted wrap {e1}");
    }

    /// A smooth closed loop with exact half-turn mirror symmetry:
    /// `L(s + 2*pi) = D L(s)`, so one parameter window with the mirror
    /// boundary samples it exactly.
    fn mirror_fixture(n: usize, a: f64, b: f64, c: f64) -> Filament {
        let grid = ParamGrid::new(n).unwrap();
        Filament::new(
            (0..n)
                .map(|j| {
                    let s = grid.s(j);
                    Vec3::new(a * (0.5 * s).sin(), b * s.cos(), c * (0.5 * s).cos())
                })
                .collect(),
            BoundaryMap::MirrorAntisymmetric,
        )
        .unwrap()
    }

    #[test]
    fn mirror_ghosts_follow_the_reflection_rule() {
        let n = 64;
        let f = mirror_fixture(n, 1.0, 0.8, 0.5);
        let ext = ghost_extend(&f, GHOST_WIDTH).unwrap();
        assert_eq!(ext.len(), n + 2 * GHOST_WIDTH);
        for m in 1..=GHOST_WIDTH {
            assert_eq!(ext[GHOST_WIDTH - m], f.node(n - m).mirror());
            assert_eq!(ext[GHOST_WIDTH + n + m - 1], f.node(m - 1).mirror());
        }
    }

    #[test]
    fn ghost_width_is_bounded_and_interior_is_unchanged() {
        let n = 32;
        let grid = ParamGrid::new(n).unwrap();
        let f = closed(
            (0..n)
                .map(|j| Vec3::new(grid.s(j).cos(), grid.s(j).sin(), 0.0))
                .collect(),
        );
        assert!(ghost_extend(&f, n / 2 + 1).is_err());
        let w = 3;
        let ext = ghost_extend(&f, w).unwrap();
        assert_eq!(&ext[w..w + n], f.nodes());
        // Closed loop: right ghosts wrap to the first nodes verbatim.
        for m in 0..w {
            assert_eq!(ext[w + n + m], f.node(m));
        }
    }

    #[test]
    fn mirror_boundary_keeps_stencil_accuracy() {
        let n = 256;
        let (a, b, c) = (1.0, 0.8, 0.5);
        let f = mirror_fixture(n, a, b, c);
        let grid = f.grid();
        let (xs, _) = derivative_fields(&f);
        let e1 = max_err(&xs, |j| {
            let s = grid.s(j);
            Vec3::new(0.5 * a * (0.5 * s).cos(), -b * s.sin(), -0.5 * c * (0.5 * s).sin())
        });
        assert!(e1 < 1e-12, "X_s error across mirror boundary {e1}");
    }

    #[test]
    fn helix_curvature_and_torsion() {
        // Unit-radius, unit-pitch helix: curvature and torsion both 1/2.
        let n = 256;
        let grid = ParamGrid::new(n).unwrap();
        let f = Filament::new(
            (0..n)
                .map(|j| {
                    let s = grid.s(j);
                    Vec3::new(s.cos(), s.sin(), s)
                })
                .collect(),
            BoundaryMap::PeriodicShift(Vec3::new(0.0, 0.0, TAU)),
        )
        .unwrap();
        let frenet = frenet_curvature_torsion(&f).unwrap();
        for j in 0..n {
            assert_abs_diff_eq!(frenet.curvature[j], 0.5, epsilon = 1e-10);
            assert_abs_diff_eq!(frenet.torsion[j], 0.5, epsilon = 1e-10);
            assert!(!frenet.torsion_degenerate[j]);
            let s = grid.s(j);
            let want = Vec3::new(-s.sin(), s.cos(), 1.0) / 2.0f64.sqrt();
            assert!((frenet.tangent[j] - want).max_abs() < 1e-10);
        }
    }

    #[test]
    fn straight_line_is_torsion_degenerate() {
        let n = 64;
        let grid = ParamGrid::new(n).unwrap();
        let f = Filament::new(
            (0..n).map(|j| Vec3::new(0.0, 0.0, grid.s(j))).collect(),
            BoundaryMap::PeriodicShift(Vec3::new(0.0, 0.0, TAU)),
        )
        .unwrap();
        let frenet = frenet_curvature_torsion(&f).unwrap();
        for j in 0..n {
            assert!(frenet.curvature[j] < CURVATURE_FLOOR);
            assert_eq!(frenet.torsion[j], 0.0);
            assert!(frenet.torsion_degenerate[j]);
        }
    }

    #[test]
    fn planar_circle_has_zero_torsion_without_degeneracy() {
        let n = 128;
        let grid = ParamGrid::new(n).unwrap();
        let f = closed(
            (0..n)
                .map(|j| Vec3::new(2.0 * grid.s(j).cos(), 2.0 * grid.s(j).sin(), 0.0))
                .collect(),
        );
        let frenet = frenet_curvature_torsion(&f).unwrap();
        for j in 0..n {
            assert_abs_diff_eq!(frenet.curvature[j], 0.5, epsilon = 1e-12);
            assert_abs_diff_eq!(frenet.torsion[j], 0.0, epsilon = 1e-10);
            assert!(!frenet.torsion_degenerate[j]);
        }
    }

    #[test]
    fn hasimoto_of_helix_winds_at_the_torsion_rate() {
        let n = 256;
        let grid = ParamGrid::new(n).unwrap();
        let f = Filament::new(
            (0..n)
                .map(|j| {
                    let s = grid.s(j);
                    Vec3::new(s.cos(), s.sin(), s)
                })
                .collect(),
            BoundaryMap::PeriodicShift(Vec3::new(0.0, 0.0, TAU)),
        )
        .unwrap();
        let psi = hasimoto_psi(&f).unwrap();
        for (j, p) in psi.iter().enumerate() {
            let want = Complex64::from_polar(0.5, 0.5 * grid.s(j));
            assert!((p - want).norm() < 1e-9, "node {j}: {p} vs {want}");
        }
    }

    #[test]
    fn total_length_of_scaled_circle() {
        let n = 200;
        let grid = ParamGrid::new(n).unwrap();
        let f = closed(
            (0..n)
                .map(|j| Vec3::new(3.0 * grid.s(j).cos(), 3.0 * grid.s(j).sin(), 0.0))
                .collect(),
        );
        assert_abs_diff_eq!(total_length(&f), 3.0 * TAU, epsilon = 1e-10);
    }

    #[test]
    fn assemble_doubles_the_mirror_half() {
        let n = 128;
        let f = mirror_fixture(n, 1.0, 0.8, 0.5);
        let loop_ = closed_curve_assemble(&f).unwrap();
        assert_eq!(loop_.nodes.len(), 2 * n);
        assert!(loop_.junction_ok, "junction gap {}", loop_.junction_gap);
        // The assembled vertex set is invariant under D as a set: node j+n is
        // exactly the mirror image of node j.
        for j in 0..n {
            assert_eq!(loop_.nodes[j + n], loop_.nodes[j].mirror());
        }
        // And it closes: the wrap 2n-1 -> 0 is also a short edge.
        let wrap = (loop_.nodes[0] - loop_.nodes[2 * n - 1]).norm();
        assert!(wrap <= 2.0 * loop_.max_input_spacing);
        // Sanity: the half-window length is half the double cover's length.
        let half_len = total_length(&f);
        let poly_len: f64 = (0..2 * n)
            .map(|j| (loop_.nodes[(j + 1) % (2 * n)] - loop_.nodes[j]).norm())
            .sum();
        assert_abs_diff_eq!(poly_len, 2.0 * half_len, epsilon = 2.0 * half_len * 1e-3);
    }

    #[test]
    fn assemble_rejects_plain_loops() {
        let n = 64;
        let grid = ParamGrid::new(n).unwrap();
        let f = closed(
            (0..n)
                .map(|j| Vec3::new(grid.s(j).cos(), grid.s(j).sin(), 0.0))
                .collect(),
        );
        assert!(closed_curve_assemble(&f).is_err());
    }

    #[test]
    fn seam_is_flagged_when_halves_do_not_meet() {
        // Shift the fixture along x1 so the mirror image no longer lines up.
        let n = 64;
        let f = mirror_fixture(n, 1.0, 0.8, 0.5);
        let moved: Vec<Vec3> = f
            .nodes()
            .iter()
            .map(|p| *p + Vec3::new(2.0, 0.0, 0.0))
            .collect();
        let g = Filament::new(moved, BoundaryMap::MirrorAntisymmetric).unwrap();
        let loop_ = closed_curve_assemble(&g).unwrap();
        assert!(!loop_.junction_ok);
    }
}
