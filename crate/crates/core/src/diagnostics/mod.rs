//! Observables of a filament run: fluid impulse (full, windowed, and sliced
//! into profiles), corner trajectories, square-frequency spectra, power-law
//! fits of separation curves, and impulse profiles of externally supplied
//! vorticity grids.
//!
//! Everything here is pure: diagnostics read immutable snapshots and never
//! touch the evolution state.

mod grid;
mod spectrum;

pub use grid::{grid_impulse, VorticityGrid};
pub use spectrum::{
    dft_coefficients, is_square, spectrum_with_square_dominance, DominanceCheck, DominanceReport,
    Spectrum,
};

use crate::error::{Error, Result};
use crate::geometry::{derivative_fields, Filament};
use crate::vec3::Vec3;
use std::f64::consts::{PI, TAU};
use std::io::Write;

/// Fluid impulse sampled along a run.
#[derive(Debug, Clone, Default)]
pub struct ImpulseSeries {
    pub times: Vec<f64>,
    pub values: Vec<Vec3>,
    pub moduli: Vec<f64>,
}

impl ImpulseSeries {
    pub fn push(&mut self, t: f64, value: Vec3) {
        self.times.push(t);
        self.values.push(value);
        self.moduli.push(value.norm());
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "t,F1,F2,F3,modulus")?;
        for i in 0..self.times.len() {
            let v = self.values[i];
            writeln!(w, "{},{},{},{},{}", self.times[i], v.x, v.y, v.z, self.moduli[i])?;
        }
        Ok(())
    }
}

/// Position of the parameter origin over time; after a reconnection this is
/// the corner trajectory.
#[derive(Debug, Clone, Default)]
pub struct CornerTrack {
    pub times: Vec<f64>,
    pub positions: Vec<Vec3>,
    pub moduli: Vec<f64>,
}

impl CornerTrack {
    pub fn push(&mut self, t: f64, position: Vec3) {
        self.times.push(t);
        self.positions.push(position);
        self.moduli.push(position.norm());
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "t,x1,x2,x3,modulus")?;
        for i in 0..self.times.len() {
            let p = self.positions[i];
            writeln!(w, "{},{},{},{},{}", self.times[i], p.x, p.y, p.z, self.moduli[i])?;
        }
        Ok(())
    }
}

/// Binned impulse profile over a coordinate, a parameter, or a grid axis.
/// `q` holds the left edge of each bin.
#[derive(Debug, Clone)]
pub struct ImpulseProfile {
    pub q: Vec<f64>,
    pub vectors: Vec<Vec3>,
    pub moduli: Vec<f64>,
}

impl ImpulseProfile {
    fn from_bins(q: Vec<f64>, vectors: Vec<Vec3>) -> Self {
        let moduli = vectors.iter().map(|v| v.norm()).collect();
        ImpulseProfile { q, vectors, moduli }
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "q,F1,F2,F3,modulus")?;
        for i in 0..self.q.len() {
            let v = self.vectors[i];
            writeln!(w, "{},{},{},{},{}", self.q[i], v.x, v.y, v.z, self.moduli[i])?;
        }
        Ok(())
    }
}

/// `X ^ X_s` at every node: the impulse integrand in the curve parameter,
/// which absorbs the speed factor so arclength and stretched filaments are
/// handled identically.
fn impulse_integrand(f: &Filament) -> Vec<Vec3> {
    let (xs, _) = derivative_fields(f);
    (0..f.grid().n()).map(|j| f.node(j).cross(xs[j])).collect()
}

/// Fluid impulse `(1/2) int X ^ X_s` over a parameter window of width `l`
/// centered on the parameter origin.
///
/// The full window (`l = 2 pi`) uses the periodic trapezoid rule, which is
/// spectrally accurate for smooth data. A partial window assigns every node
/// the part of its parameter cell inside the window, so the result shrinks
/// exactly linearly as `l` drops below one cell.
pub fn fluid_impulse(f: &Filament, l: f64) -> Result<Vec3> {
    if !(l > 0.0 && l <= TAU + 1e-12) {
        return Err(Error::Config(format!(
            "impulse window length {l} must lie in (0, 2*pi]"
        )));
    }
    let h = f.grid().h();
    let integrand = impulse_integrand(f);
    if l >= TAU - 1e-9 {
        let sum = integrand.iter().copied().fold(Vec3::ZERO, |a, v| a + v);
        return Ok(sum * (0.5 * h));
    }
    let half = l / 2.0;
    let mut acc = Vec3::ZERO;
    for (j, g) in integrand.iter().enumerate() {
        let mut s = f.grid().s(j);
        if s > PI {
            s -= TAU;
        }
        let lo = (s - h / 2.0).max(-half);
        let hi = (s + h / 2.0).min(half);
        if hi > lo {
            acc += *g * (hi - lo);
        }
    }
    Ok(acc * 0.5)
}

/// Impulse profile binned by the third coordinate: for each slab
/// `[q, q + dq)` in `x3`, the modulus of `(1/2) sum X ^ X_s h` over the
/// nodes inside. Bins cover the occupied range; the trailing bin may be
/// partial, and a node sitting exactly on the top edge is kept in the last
/// bin.
pub fn sliced_impulse_by_coordinate(f: &Filament, dq: f64) -> Result<ImpulseProfile> {
    if !(dq > 0.0 && dq.is_finite()) {
        return Err(Error::Config(format!("slab width {dq} must be positive")));
    }
    let n = f.grid().n();
    let h = f.grid().h();
    let integrand = impulse_integrand(f);
    let z_min = (0..n).map(|j| f.node(j).z).fold(f64::INFINITY, f64::min);
    let z_max = (0..n).map(|j| f.node(j).z).fold(f64::NEG_INFINITY, f64::max);
    let bins = (((z_max - z_min) / dq).ceil() as usize).max(1);
    let mut vectors = vec![Vec3::ZERO; bins];
    for (j, g) in integrand.iter().enumerate() {
        let idx = (((f.node(j).z - z_min) / dq) as usize).min(bins - 1);
        vectors[idx] += *g * (0.5 * h);
    }
    let q = (0..bins).map(|i| z_min + i as f64 * dq).collect();
    Ok(ImpulseProfile::from_bins(q, vectors))
}

/// Impulse profile binned by the curve parameter: per bin `[q, q + dq)` in
/// `s`, the vector `(1/2) sum X ^ X_s h` and its modulus. The bin vectors
/// add up exactly to the full fluid impulse.
///
/// Unlike the full impulse, a single bin depends on where the coordinate
/// origin sits: shifting the curve by `c` adds `c ^ (chord of the bin)/2`.
pub fn sliced_impulse_by_parameter(f: &Filament, dq: f64) -> Result<ImpulseProfile> {
    if !(dq > 0.0 && dq <= TAU) {
        return Err(Error::Config(format!(
            "parameter bin width {dq} must lie in (0, 2*pi]"
        )));
    }
    let h = f.grid().h();
    let integrand = impulse_integrand(f);
    let bins = ((TAU / dq).ceil() as usize).max(1);
    let mut vectors = vec![Vec3::ZERO; bins];
    for (j, g) in integrand.iter().enumerate() {
        let idx = ((f.grid().s(j) / dq) as usize).min(bins - 1);
        vectors[idx] += *g * (0.5 * h);
    }
    let q = (0..bins).map(|i| i as f64 * dq).collect();
    Ok(ImpulseProfile::from_bins(q, vectors))
}

/// Outermost bins whose value exceeds `threshold`: returns the left edges
/// of the first and last such bin, or None when nothing does.
pub fn support_interval(q: &[f64], values: &[f64], threshold: f64) -> Option<(f64, f64)> {
    let first = values.iter().position(|v| *v > threshold)?;
    let last = values.iter().rposition(|v| *v > threshold)?;
    Some((q[first], q[last]))
}

/// Least-squares exponent of `z ~ (t - t_ref)^alpha`: the slope of
/// `log z` against `log(t - t_ref)`, with its standard error.
pub fn separation_exponent_fit(points: &[(f64, f64)], t_ref: f64) -> Result<(f64, f64)> {
    if points.len() < 10 {
        return Err(Error::Config(format!(
            "exponent fit needs at least 10 points, got {}",
            points.len()
        )));
    }
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    for &(t, z) in points {
        if !(t > t_ref) {
            return Err(Error::Config(format!(
                "fit time {t} does not lie after the reference time {t_ref}"
            )));
        }
        if !(z > 0.0) {
            return Err(Error::Config(format!("fit ordinate {z} must be positive")));
        }
        xs.push((t - t_ref).ln());
        ys.push(z.ln());
    }
    let m = xs.len() as f64;
    let x_mean = xs.iter().sum::<f64>() / m;
    let y_mean = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - x_mean) * (x - x_mean)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - x_mean) * (y - y_mean)).sum();
    if sxx <= 0.0 {
        return Err(Error::Config("fit abscissas are all identical".into()));
    }
    let slope = sxy / sxx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = (y - y_mean) - slope * (x - x_mean);
            r * r
        })
        .sum();
    let stderr = (ss_res / (m - 2.0) / sxx).sqrt();
    Ok((slope, stderr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundaryMap;
    use crate::scenarios::{
        eye_point, make_eye, make_reference, EyeParams, ReferenceKind,
    };
    use approx::assert_abs_diff_eq;

    fn circle(radius: f64, n: usize) -> Filament {
        make_reference(ReferenceKind::Circle { radius }, n).unwrap()
    }

    #[test]
    fn circle_impulse_is_the_enclosed_area_times_the_normal() {
        let f = circle(1.3, 256);
        let imp = fluid_impulse(&f, TAU).unwrap();
        assert_abs_diff_eq!(imp.z, PI * 1.3 * 1.3, epsilon = 1e-10);
        assert!(imp.x.abs() < 1e-12 && imp.y.abs() < 1e-12);
    }

    #[test]
    fn planar_eye_impulse_is_the_enclosed_area() {
        // The flat eye, taken as written without rescaling, encloses area 4.
        let n = 4096;
        let grid = crate::geometry::ParamGrid::new(n).unwrap();
        let nodes = (0..n).map(|j| eye_point(1.0, 0.0, grid.s(j))).collect();
        let f = Filament::new(nodes, BoundaryMap::PeriodicShift(Vec3::ZERO)).unwrap();
        let imp = fluid_impulse(&f, TAU).unwrap();
        assert_abs_diff_eq!(imp.norm(), 4.0, epsilon = 1e-5);
    }

    #[test]
    fn impulse_window_shrinks_linearly() {
        // On a circle the integrand is constant, so the windowed impulse is
        // exactly half the window length times R^2 - even below one cell.
        let f = circle(2.0, 128);
        let h = f.grid().h();
        for l in [1.0, 0.1, h / 3.0] {
            let imp = fluid_impulse(&f, l).unwrap();
            assert_abs_diff_eq!(imp.z, 0.5 * l * 4.0, epsilon = 1e-12);
        }
        assert!(fluid_impulse(&f, 0.0).is_err());
        assert!(fluid_impulse(&f, 7.0).is_err());
    }

    #[test]
    fn line_coordinate_slabs_carry_half_offset_times_width() {
        let f = make_reference(ReferenceKind::Line { offset: 0.22 }, 512).unwrap();
        let h = f.grid().h();
        let dq = 8.0 * h;
        let profile = sliced_impulse_by_coordinate(&f, dq).unwrap();
        // occupied range is [0, 2*pi - h], so 64 slabs of eight nodes each;
        // a node whose coordinate rounds half an ulp below a slab boundary
        // migrates one slab down, so allow each slab one node of slack
        assert_eq!(profile.q.len(), 64);
        let quantum = 0.22 * h / 2.0;
        let mut total = 0.0;
        for m in &profile.moduli {
            let dev = (m - 0.22 * dq / 2.0).abs();
            assert!(dev < 1.5 * quantum, "slab modulus {m} off by {dev}");
            total += m;
        }
        assert_abs_diff_eq!(total, 512.0 * quantum, epsilon = 1e-12);
    }

    #[test]
    fn flat_curve_lands_in_a_single_slab() {
        let f = circle(1.0, 128);
        let profile = sliced_impulse_by_coordinate(&f, 0.5).unwrap();
        assert_eq!(profile.q.len(), 1);
        assert_abs_diff_eq!(profile.moduli[0], PI, epsilon = 1e-10);
    }

    #[test]
    fn parameter_slices_add_up_to_the_full_impulse() {
        let f = make_eye(&EyeParams { b: 1.0, b_tilde: 2.0, n_nodes: 1024 }).unwrap();
        let profile = sliced_impulse_by_parameter(&f, TAU / 16.0).unwrap();
        let total = profile.vectors.iter().copied().fold(Vec3::ZERO, |a, v| a + v);
        let full = fluid_impulse(&f, TAU).unwrap();
        assert!((total - full).norm() < 1e-10, "gap {}", (total - full).norm());
    }

    #[test]
    fn circle_parameter_slices_are_all_equal() {
        let f = circle(1.0, 256);
        let profile = sliced_impulse_by_parameter(&f, TAU / 8.0).unwrap();
        for m in &profile.moduli {
            assert_abs_diff_eq!(*m, PI / 8.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn eye_parameter_profile_is_mirror_symmetric() {
        // The eye maps onto itself under s -> 2*pi - s combined with x1
        // negation, so bin i and bin B-1-i hold mirror-image node sets - up
        // to the self-paired node at s = 0, which can sit on either side of
        // a bin edge. Allow that single node's worth of slack.
        let f = make_eye(&EyeParams { b: 1.0, b_tilde: 2.0, n_nodes: 1024 }).unwrap();
        let n = f.grid().n();
        let (xs, _) = derivative_fields(&f);
        let g_max =
            (0..n).map(|j| f.node(j).cross(xs[j]).norm()).fold(0.0, f64::max);
        let slack = f.grid().h() * g_max;
        let bins = 32usize;
        let profile = sliced_impulse_by_parameter(&f, TAU / bins as f64).unwrap();
        for i in 0..bins {
            let j = bins - 1 - i;
            assert!(
                (profile.moduli[i] - profile.moduli[j]).abs() <= slack,
                "bins {i}/{j}: {} vs {}",
                profile.moduli[i],
                profile.moduli[j]
            );
        }
    }

    #[test]
    fn support_interval_brackets_the_loud_bins() {
        let q = [0.0, 1.0, 2.0, 3.0, 4.0];
        let v = [0.0, 0.5, 2.0, 0.7, 0.0];
        assert_eq!(support_interval(&q, &v, 0.4), Some((1.0, 3.0)));
        assert_eq!(support_interval(&q, &v, 5.0), None);
    }

    #[test]
    fn exponent_fit_recovers_exact_power_laws() {
        let sqrt_pts: Vec<(f64, f64)> =
            (1..=40).map(|i| (i as f64 * 0.05, 3.0 * (i as f64 * 0.05).sqrt())).collect();
        let (alpha, err) = separation_exponent_fit(&sqrt_pts, 0.0).unwrap();
        assert_abs_diff_eq!(alpha, 0.5, epsilon = 1e-6);
        assert!(err < 1e-6);

        let lin_pts: Vec<(f64, f64)> =
            (1..=40).map(|i| (2.0 + i as f64 * 0.05, 2.0 * (i as f64 * 0.05))).collect();
        let (alpha, err) = separation_exponent_fit(&lin_pts, 2.0).unwrap();
        assert_abs_diff_eq!(alpha, 1.0, epsilon = 1e-6);
        assert!(err < 1e-6);
    }

    #[test]
    fn exponent_fit_rejects_bad_inputs() {
        let few: Vec<(f64, f64)> = (1..5).map(|i| (i as f64, i as f64)).collect();
        assert!(separation_exponent_fit(&few, 0.0).is_err());
        let neg: Vec<(f64, f64)> = (1..=12).map(|i| (i as f64, -1.0)).collect();
        assert!(separation_exponent_fit(&neg, 0.0).is_err());
        let before: Vec<(f64, f64)> = (0..12).map(|i| (i as f64, 1.0)).collect();
        assert!(separation_exponent_fit(&before, 5.0).is_err());
    }

    #[test]
    fn csv_output_is_stable() {
        let mut series = ImpulseSeries::default();
        series.push(0.0, Vec3::new(1.0, 0.5, 0.0));
        series.push(0.25, Vec3::new(0.0, -2.0, 0.0));
        let mut buf = Vec::new();
        series.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "t,F1,F2,F3,modulus\n0,1,0.5,0,1.118033988749895\n0.25,0,-2,0,2\n"
        );

        let mut track = CornerTrack::default();
        track.push(1.5, Vec3::new(0.1, 0.2, 0.3));
        let mut buf = Vec::new();
        track.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t,x1,x2,x3,modulus\n1.5,0.1,0.2,0.3,"));
    }
}
