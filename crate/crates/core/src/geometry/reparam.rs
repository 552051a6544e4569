//! Resampling a filament at equal increments of arc length.

use super::{extend_field_into, BoundaryMap, Filament};
use crate::error::{Error, Result};
use crate::vec3::Vec3;

/// Subsamples per node interval when tabulating cumulative arc length.
const SUBSAMPLES: usize = 32;

/// Quintic Lagrange basis through offsets -2..=3, as monomial coefficients
/// in ascending powers of `v`. The middle interval `v` in [0, 1] is the one
/// evaluated; two sliding interpolants of the same smooth curve then agree
/// on arc length to O(h^6), which is what makes resampling idempotent at
/// practical resolutions (a cubic's O(h^4) disagreement is visible).
const BASIS: [[f64; 6]; 6] = [
    [0.0, 1.0 / 20.0, -1.0 / 24.0, -1.0 / 24.0, 1.0 / 24.0, -1.0 / 120.0],
    [0.0, -1.0 / 2.0, 2.0 / 3.0, -1.0 / 24.0, -1.0 / 6.0, 1.0 / 24.0],
    [1.0, -1.0 / 3.0, -5.0 / 4.0, 5.0 / 12.0, 1.0 / 4.0, -1.0 / 12.0],
    [0.0, 1.0, 2.0 / 3.0, -7.0 / 12.0, -1.0 / 6.0, 1.0 / 12.0],
    [0.0, -1.0 / 4.0, -1.0 / 24.0, 7.0 / 24.0, 1.0 / 24.0, -1.0 / 24.0],
    [0.0, 1.0 / 30.0, 0.0, -1.0 / 24.0, 0.0, 1.0 / 120.0],
];

/// Interpolation through six consecutive nodes, evaluated on the middle
/// interval: `v` runs over [0, 1] between `pts[2]` and `pts[3]`.
struct Segment {
    pts: [Vec3; 6],
}

impl Segment {
    fn position(&self, v: f64) -> Vec3 {
        let mut acc = Vec3::ZERO;
        for (p, b) in self.pts.iter().zip(BASIS.iter()) {
            let mut val = b[5];
            for k in (0..5).rev() {
                val = val * v + b[k];
            }
            acc += *p * val;
        }
        acc
    }

    /// Derivative with respect to `v` (i.e. per node interval, not per
    /// parameter unit).
    fn velocity(&self, v: f64) -> Vec3 {
        let mut acc = Vec3::ZERO;
        for (p, b) in self.pts.iter().zip(BASIS.iter()) {
            let mut val = 5.0 * b[5];
            for k in (1..5).rev() {
                val = val * v + k as f64 * b[k];
            }
            acc += *p * val;
        }
        acc
    }
}

/// Resample the curve at `n` stations of equal arc length and rescale it
/// about the origin so its total length over one parameter window becomes
/// `target_total_length`. Node 0 stays at the start of the parameter window,
/// so distinguished points pinned there (corners, junction nodes) survive.
///
/// A `PeriodicShift` boundary has its shift scaled by the same factor; the
/// mirror map commutes with uniform scaling and is kept as is.
pub fn arclength_reparametrize(f: &Filament, target_total_length: f64) -> Result<Filament> {
    if !(target_total_length.is_finite() && target_total_length > 0.0) {
        return Err(Error::Geometry(format!(
            "target length must be positive and finite, got {target_total_length}"
        )));
    }
    let n = f.grid().n();
    // Three ghost nodes per side cover the six-point window from both end
    // intervals.
    let mut ext = Vec::new();
    extend_field_into(f.nodes(), f.boundary(), 3, true, &mut ext);
    let segment = |j: usize| Segment {
        pts: [
            ext[j + 1],
            ext[j + 2],
            ext[j + 3],
            ext[j + 4],
            ext[j + 5],
            ext[j + 6],
        ],
    };

    // Cumulative arc length on a fine grid, Simpson's rule per cell, with
    // boundary and midpoint speeds kept for the inversion. Index i
    // corresponds to curve position u = i/SUBSAMPLES in node units.
    let cells = n * SUBSAMPLES;
    let mut arc = Vec::with_capacity(cells + 1);
    let mut left = Vec::with_capacity(cells);
    let mut mid = Vec::with_capacity(cells);
    let mut right = Vec::with_capacity(cells);
    arc.push(0.0);
    let mut total = 0.0;
    let dv = 1.0 / SUBSAMPLES as f64;
    for j in 0..n {
        let seg = segment(j);
        let mut prev_speed = seg.velocity(0.0).norm();
        for i in 1..=SUBSAMPLES {
            let mid_speed = seg.velocity((i as f64 - 0.5) * dv).norm();
            let speed = seg.velocity(i as f64 * dv).norm();
            total += dv / 6.0 * (prev_speed + 4.0 * mid_speed + speed);
            arc.push(total);
            left.push(prev_speed);
            mid.push(mid_speed);
            right.push(speed);
            prev_speed = speed;
        }
    }
    if !(total.is_finite() && total > 1e-12) {
        return Err(Error::Geometry(format!(
            "curve is degenerate: total length {total}"
        )));
    }

    // Walk the monotone table once to invert it at the n uniform stations.
    // Within a cell the arc integrand is the quadratic through the stored
    // speeds — the model Simpson's rule integrates exactly — so the local
    // inverse is solved from that cubic by Newton from the secant guess.
    // Linear interpolation here would undo the quadrature's care: its
    // O(1/SUBSAMPLES^2) station bias is what second applications correct,
    // i.e. resampling would stop being idempotent.
    let mut nodes = Vec::with_capacity(n);
    let mut cursor = 0usize;
    for k in 0..n {
        let station = total * k as f64 / n as f64;
        while cursor + 1 < arc.len() && arc[cursor + 1] < station {
            cursor += 1;
        }
        let span = arc[cursor + 1] - arc[cursor];
        let mut theta = if span > 0.0 {
            ((station - arc[cursor]) / span).clamp(0.0, 1.0)
        } else {
            0.0
        };
        if span > 0.0 {
            let (a, b, c) = {
                let (f0, fm, f1) = (left[cursor], mid[cursor], right[cursor]);
                (f0, -3.0 * f0 + 4.0 * fm - f1, 2.0 * f0 - 4.0 * fm + 2.0 * f1)
            };
            let rem = (station - arc[cursor]) / dv;
            for _ in 0..3 {
                let g = a * theta + 0.5 * b * theta * theta
                    + c * theta * theta * theta / 3.0
                    - rem;
                let dg = a + b * theta + c * theta * theta;
                if dg <= 0.0 {
                    break;
                }
                theta = (theta - g / dg).clamp(0.0, 1.0);
            }
        }
        let u = (cursor as f64 + theta) * dv;
        let j = (u.floor() as usize).min(n - 1);
        nodes.push(segment(j).position(u - j as f64));
    }

    // The cubic table fixes where the stations fall, but its total length
    // carries the interpolant's O(h^4) bias. Rescale against the stencil
    // length measure instead: on smooth periodic data it is accurate to
    // rounding, so resampling already-uniform nodes leaves them in place.
    let resampled = f.replace_nodes(nodes.clone(), f.time())?;
    let measured = super::total_length(&resampled);
    if !(measured.is_finite() && measured > 1e-12) {
        return Err(Error::Geometry(format!(
            "curve is degenerate: measured length {measured}"
        )));
    }
    let scale = target_total_length / measured;
    for p in &mut nodes {
        *p = *p * scale;
    }
    let boundary = match f.boundary() {
        BoundaryMap::PeriodicShift(shift) => BoundaryMap::PeriodicShift(shift * scale),
        BoundaryMap::MirrorAntisymmetric => BoundaryMap::MirrorAntisymmetric,
    };
    Filament::with_time(nodes, boundary, f.time())
}
