//! Centered 8th-order finite-difference stencils on uniform grids.
//!
//! Both stencils span nine points, so every field they are applied to
//! must be ghost-extended by [`super::GHOST_WIDTH`] nodes per side.

use crate::vec3::Vec3;
use rayon::prelude::*;

/// Nodes below this count are differentiated serially; the per-call
/// overhead of the thread pool dominates for short filaments.
const PAR_MIN_NODES: usize = 4096;

/// First-derivative weights for offsets -4..=4, to be scaled by 1/h.
const D1: [f64; 9] = [
    1.0 / 280.0,
    -4.0 / 105.0,
    1.0 / 5.0,
    -4.0 / 5.0,
    0.0,
    4.0 / 5.0,
    -1.0 / 5.0,
    4.0 / 105.0,
    -1.0 / 280.0,
];

/// Second-derivative weights for offsets -4..=4, to be scaled by 1/h^2.
const D2: [f64; 9] = [
    -1.0 / 560.0,
    8.0 / 315.0,
    -1.0 / 5.0,
    8.0 / 5.0,
    -205.0 / 72.0,
    8.0 / 5.0,
    -1.0 / 5.0,
    8.0 / 315.0,
    -1.0 / 560.0,
];

/// Peak of the second-difference symbol over resolved modes (times 1/h^2),
/// attained at the alternating mode: `sum_m |D2[m]|` with the signs the mode
/// `(-1)^j` produces. The classical 3-point stencil has 4 here; the wider
/// stencil pays for its accuracy with a stiffer top mode.
pub(crate) const D2_SYMBOL_PEAK: f64 = 2048.0 / 315.0;

#[inline]
fn stencil_at(ext: &[Vec3], j: usize, w: &[f64; 9], scale: f64) -> Vec3 {
    let mut acc = Vec3::ZERO;
    for (k, &c) in w.iter().enumerate() {
        if c != 0.0 {
            acc += ext[j + k] * c;
        }
    }
    acc * scale
}

fn apply(ext: &[Vec3], w: &'static [f64; 9], scale: f64, out: &mut [Vec3]) {
    debug_assert_eq!(ext.len(), out.len() + 8);
    if out.len() >= PAR_MIN_NODES {
        out.par_iter_mut()
            .enumerate()
            .for_each(|(j, o)| *o = stencil_at(ext, j, w, scale));
    } else {
        for (j, o) in out.iter_mut().enumerate() {
            *o = stencil_at(ext, j, w, scale);
        }
    }
}

/// d/ds of a ghost-extended field; `h` is the parameter spacing.
pub(crate) fn first_derivative_into(ext: &[Vec3], h: f64, out: &mut [Vec3]) {
    apply(ext, &D1, 1.0 / h, out);
}

/// d^2/ds^2 of a ghost-extended field.
pub(crate) fn second_derivative_into(ext: &[Vec3], h: f64, out: &mut [Vec3]) {
    apply(ext, &D2, 1.0 / (h * h), out);
}
