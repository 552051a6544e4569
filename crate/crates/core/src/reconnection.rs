//! Reconnection detection and the surgery that rewires a strand pair into a
//! single loop.
//!
//! Detection offers two criteria: the primary distance threshold on the
//! strand's wall coordinate, and a fallback that watches the fluid-impulse
//! magnitude for the end of its monotone phase. Surgery re-anchors the
//! parametrization at the touching node, switches the boundary map to the
//! mirror form, turns the image interaction off, and restores an arc-length
//! parametrization.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::diagnostics::ImpulseSeries;
use crate::error::{Error, Result};
use crate::evolution::RhsConfig;
use crate::geometry::{arclength_reparametrize, BoundaryMap, Filament};

/// Which detector produced an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReconnectionCriterion {
    DistanceThreshold,
    ImpulseFlip,
}

/// Record of a detected reconnection, written into run manifests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconnectionEvent {
    pub t_rec: f64,
    pub node_index: usize,
    pub x1_min: f64,
    pub criterion: ReconnectionCriterion,
}

/// Node index attaining the smallest wall coordinate, with its value.
/// Ties go to the smallest index.
pub fn min_separation(f: &Filament) -> (usize, f64) {
    let mut best = 0usize;
    let mut val = f.node(0).x;
    for (j, p) in f.nodes().iter().enumerate().skip(1) {
        if p.x < val {
            best = j;
            val = p.x;
        }
    }
    (best, val)
}

/// Distance-threshold detector: an event as soon as the strand's smallest
/// wall coordinate reaches `th_x1`.
pub fn detect_distance_threshold(f: &Filament, th_x1: f64) -> Option<ReconnectionEvent> {
    let (node_index, x1_min) = min_separation(f);
    (x1_min <= th_x1).then_some(ReconnectionEvent {
        t_rec: f.time(),
        node_index,
        x1_min,
        criterion: ReconnectionCriterion::DistanceThreshold,
    })
}

/// Earliest time the sampled impulse magnitude stops being monotone:
/// the first sample whose backward-difference derivative multiplied with
/// its predecessor's is at or below `-th_f`. The threshold suppresses
/// flips driven by sampling noise. A series still too short to form two
/// derivatives reports no flip; the series must be uniformly sampled.
pub fn impulse_flip_detect(series: &ImpulseSeries, th_f: f64) -> Result<Option<f64>> {
    if !(th_f >= 0.0 && th_f.is_finite()) {
        return Err(Error::Config(format!(
            "flip threshold must be non-negative, got {th_f}"
        )));
    }
    let t = &series.times;
    let m = &series.moduli;
    if t.len() < 3 {
        return Ok(None);
    }
    let stride = t[1] - t[0];
    if !(stride > 0.0 && stride.is_finite()) {
        return Err(Error::Config(format!(
            "sampling stride must be positive, got {stride}"
        )));
    }
    for w in t.windows(2) {
        if ((w[1] - w[0]) - stride).abs() > 1e-6 * stride {
            return Err(Error::Config(format!(
                "flip detection needs uniform sampling, got strides {stride} and {}",
                w[1] - w[0]
            )));
        }
    }
    let mut prev = (m[1] - m[0]) / stride;
    for i in 2..m.len() {
        let cur = (m[i] - m[i - 1]) / stride;
        if cur * prev <= -th_f {
            return Ok(Some(t[i]));
        }
        prev = cur;
    }
    Ok(None)
}

/// Rewire a periodic strand into a mirror-mapped half-loop at the moment of
/// contact.
///
/// The nodes are cyclically reindexed so the touching node becomes node 0,
/// its wall coordinate is projected to exactly zero, and the window is
/// recentered along the axis so the end of the parameter interval is the
/// mirror image of its start. The returned configuration has the image
/// interaction off so the fresh seam cannot trigger a second event, and the
/// curve is resampled by arc length with the parameter window's total length
/// restored to `2*pi`.
pub fn perform_reconnection(
    f: &Filament,
    event: &ReconnectionEvent,
    cfg: &RhsConfig,
) -> Result<(Filament, RhsConfig)> {
    if f.time() != event.t_rec {
        return Err(Error::Config(format!(
            "stale event: filament at t={}, event recorded at t={}",
            f.time(),
            event.t_rec
        )));
    }
    let shift = match f.boundary() {
        BoundaryMap::PeriodicShift(v) => v,
        BoundaryMap::MirrorAntisymmetric => {
            return Err(Error::Config(
                "filament is already mirror-mapped; surgery applies to periodic strands".into(),
            ))
        }
    };
    if shift.x != 0.0 || shift.y != 0.0 {
        return Err(Error::Config(format!(
            "surgery expects an axis-aligned period, got shift ({}, {}, {})",
            shift.x, shift.y, shift.z
        )));
    }
    let n = f.grid().n();
    let k = event.node_index;
    if k >= n {
        return Err(Error::Config(format!(
            "touching node {k} out of range for {n} nodes"
        )));
    }

    let mut nodes: Vec<_> = (0..n)
        .map(|i| {
            let m = k + i;
            if m < n {
                f.node(m)
            } else {
                f.node(m - n) + shift
            }
        })
        .collect();
    // Pin the touch point onto the wall and centre the span so the window's
    // far end lands exactly on the mirror image of node 0. A leftover wall
    // offset would seed an asymmetry that perturbs the evolved loop.
    nodes[0].x = 0.0;
    let dz = nodes[0].z + shift.z / 2.0;
    for p in &mut nodes {
        p.z -= dz;
    }

    let half = Filament::with_time(nodes, BoundaryMap::MirrorAntisymmetric, f.time())?;
    let fixed = arclength_reparametrize(&half, TAU)?;
    Ok((fixed, cfg.without_interaction()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{closed_curve_assemble, derivative_fields, total_length};
    use crate::scenarios::{
        make_antiparallel_pair, make_eye, EyeParams, PairParams, Perturbation,
    };
    use crate::Vec3;
    use approx::assert_abs_diff_eq;

    fn desk_pair(n: usize) -> Filament {
        make_antiparallel_pair(&PairParams {
            b: 0.22,
            perturbation: Perturbation {
                mode_count: 4,
                amplitude: 5e-3,
                seed: 11,
            },
            n_nodes: n,
            axis_period: TAU,
        })
        .unwrap()
    }

    #[test]
    fn unperturbed_pair_ties_to_the_first_node() {
        let f = make_antiparallel_pair(&PairParams {
            b: 0.22,
            perturbation: Perturbation::default(),
            n_nodes: 64,
            axis_period: TAU,
        })
        .unwrap();
        let (j, x1) = min_separation(&f);
        assert_eq!(j, 0);
        assert_abs_diff_eq!(x1, 0.22, epsilon = 0.0);
    }

    #[test]
    fn eye_minimum_sits_at_the_far_bulge() {
        // The closed eye straddles the wall: corners are on it, but the
        // signed minimum is the second branch's bulge at s = 3*pi/2.
        let f = make_eye(&EyeParams {
            b: 1.0,
            b_tilde: 0.0,
            n_nodes: 128,
        })
        .unwrap();
        assert_abs_diff_eq!(f.node(0).x, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(f.node(64).x, 0.0, epsilon = 1e-14);
        let (j, x1) = min_separation(&f);
        assert_eq!(j, 96);
        let max = f.nodes().iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
        assert_abs_diff_eq!(x1, -max, epsilon = 1e-12);
        assert!(x1 < -0.8 && x1 > -0.85, "bulge at {x1}");
    }

    #[test]
    fn threshold_detector_fires_only_once_close_enough() {
        let mut f = desk_pair(64);
        assert!(detect_distance_threshold(&f, 1e-6).is_none());
        let mut nodes = f.nodes().to_vec();
        nodes[40].x = 5e-7;
        f = Filament::with_time(nodes, f.boundary(), 1.25).unwrap();
        let e = detect_distance_threshold(&f, 1e-6).unwrap();
        assert_eq!(e.node_index, 40);
        assert_abs_diff_eq!(e.x1_min, 5e-7, epsilon = 0.0);
        assert_abs_diff_eq!(e.t_rec, 1.25, epsilon = 0.0);
        assert_eq!(e.criterion, ReconnectionCriterion::DistanceThreshold);
    }

    fn sampled(stride: f64, moduli: impl IntoIterator<Item = f64>) -> ImpulseSeries {
        let mut s = ImpulseSeries::default();
        for (i, m) in moduli.into_iter().enumerate() {
            s.push(i as f64 * stride, Vec3::new(m, 0.0, 0.0));
        }
        s
    }

    #[test]
    fn monotone_series_never_flips() {
        let series = sampled(0.1, (0..30).map(|i| i as f64 * 0.1));
        assert_eq!(impulse_flip_detect(&series, 1e-12).unwrap(), None);
    }

    #[test]
    fn kink_series_flips_next_to_the_kink() {
        let series = sampled(0.1, (0..=20).map(|i| (i as f64 * 0.1 - 1.0).abs()));
        let t = impulse_flip_detect(&series, 0.5).unwrap().unwrap();
        assert!((t - 1.0).abs() <= 0.1 + 1e-12, "flip at {t}");
    }

    #[test]
    fn threshold_suppresses_small_oscillations() {
        let series = sampled(0.01, (0..200).map(|i| 1.0 + 1e-3 * (50.0 * i as f64 * 0.01).sin()));
        // derivative amplitude 5e-2, product magnitude at most 2.5e-3
        assert_eq!(impulse_flip_detect(&series, 1e-2).unwrap(), None);
        assert!(impulse_flip_detect(&series, 1e-6).unwrap().is_some());
    }

    #[test]
    fn too_short_a_series_reports_no_flip() {
        let series = sampled(0.1, [1.0, 2.0]);
        assert_eq!(impulse_flip_detect(&series, 0.0).unwrap(), None);
    }

    #[test]
    fn irregular_series_is_rejected() {
        let mut series = sampled(0.1, [1.0, 2.0, 3.0, 4.0]);
        series.times[2] += 0.05;
        assert!(impulse_flip_detect(&series, 0.0).is_err());

        let stalled = ImpulseSeries {
            times: vec![0.0; 3],
            values: vec![Vec3::ZERO; 3],
            moduli: vec![0.0; 3],
        };
        assert!(impulse_flip_detect(&stalled, 0.0).is_err());

        let fine = sampled(0.1, [1.0, 2.0, 3.0]);
        assert!(impulse_flip_detect(&fine, -1.0).is_err());
    }

    fn touch_event(f: &Filament) -> ReconnectionEvent {
        let (node_index, x1_min) = min_separation(f);
        ReconnectionEvent {
            t_rec: f.time(),
            node_index,
            x1_min,
            criterion: ReconnectionCriterion::DistanceThreshold,
        }
    }

    /// A pair whose node `k` has been pinched onto the wall, standing in for
    /// the state the detector fires on.
    fn pinched_pair(n: usize, k: usize) -> Filament {
        let f = desk_pair(n);
        let mut nodes = f.nodes().to_vec();
        let width = n as f64 / 16.0;
        for (j, p) in nodes.iter_mut().enumerate() {
            let d = (j as i64 - k as i64).abs() as f64;
            let squeeze = (-(d / width) * (d / width)).exp();
            p.x *= 1.0 - squeeze;
        }
        nodes[k].x = 3e-7;
        Filament::with_time(nodes, f.boundary(), 1.4).unwrap()
    }

    #[test]
    fn surgery_moves_the_touching_node_to_the_origin() {
        let f = pinched_pair(256, 170);
        let cfg = RhsConfig {
            epsilon: 0.03,
            r_c: 1e-2,
            interaction_enabled: true,
        };
        let event = touch_event(&f);
        assert_eq!(event.node_index, 170);
        let (out, quiet) = perform_reconnection(&f, &event, &cfg).unwrap();

        assert_eq!(out.boundary(), BoundaryMap::MirrorAntisymmetric);
        assert_eq!(quiet.epsilon, 0.0);
        assert!(!quiet.interaction_enabled);
        assert_abs_diff_eq!(quiet.r_c, cfg.r_c, epsilon = 0.0);
        assert_eq!(out.time(), f.time());

        // node 0 is the former touching node: on the wall exactly, at the
        // bottom of a span centred on the axis, with its transverse position
        // kept up to the arc-length rescale. The pre-surgery strand has the
        // same geometry per period, so its length gives the rescale factor.
        let lam = TAU / total_length(&f);
        let p0 = out.node(0);
        assert_abs_diff_eq!(p0.x, 0.0, epsilon = 0.0);
        assert!(p0.z < -3.0, "touch node at z = {}", p0.z);
        let z_max = out.nodes().iter().map(|p| p.z).fold(f64::NEG_INFINITY, f64::max);
        assert!((z_max + p0.z).abs() < 3.0 * f.grid().h(), "span off centre");
        assert_abs_diff_eq!(p0.y, f.node(170).y * lam, epsilon = 5e-5);
    }

    #[test]
    fn surgery_restores_an_even_arclength_sampling() {
        let f = pinched_pair(256, 101);
        let cfg = RhsConfig {
            epsilon: 0.03,
            r_c: 1e-2,
            interaction_enabled: true,
        };
        let (out, _) = perform_reconnection(&f, &touch_event(&f), &cfg).unwrap();
        assert_abs_diff_eq!(total_length(&out), TAU, epsilon = 1e-5);
        // The touch point and its map image are genuine corners. The smooth
        // interpolant undercuts their arc by a fraction of a spacing, and the
        // equal-arc stations spread that deficit uniformly, so the bulk speed
        // sits slightly above one — but it must be *even*.
        let (xs, _) = derivative_fields(&out);
        let n = xs.len();
        let bulk: Vec<f64> = xs[8..n - 8].iter().map(|v| v.norm()).collect();
        let mean = bulk.iter().sum::<f64>() / bulk.len() as f64;
        assert!((mean - 1.0).abs() < 5e-3, "bulk speed {mean}");
        for (j, v) in bulk.iter().enumerate() {
            assert!((v - mean).abs() < 1e-4, "node {}: |X_s| = {v} vs mean {mean}", j + 8);
        }
        let loop_ = closed_curve_assemble(&out).unwrap();
        assert!(loop_.junction_ok, "junction gap {}", loop_.junction_gap);
        let mut len = 0.0;
        let m = loop_.nodes.len();
        for j in 0..m {
            len += (loop_.nodes[(j + 1) % m] - loop_.nodes[j]).norm();
        }
        assert_abs_diff_eq!(len, 2.0 * TAU, epsilon = 0.05);
    }

    #[test]
    fn surgery_keeps_the_curve_where_it_was() {
        let n = 256;
        let k = 33;
        let f = pinched_pair(n, k);
        let cfg = RhsConfig::default();
        let (out, _) = perform_reconnection(&f, &touch_event(&f), &cfg).unwrap();
        // compare against the pre-surgery strand re-anchored the same way
        let dz = f.node(k).z + TAU / 2.0;
        let pre: Vec<Vec3> = (0..n)
            .map(|i| {
                let m = k + i;
                let p = if m < n {
                    f.node(m)
                } else {
                    f.node(m - n) + Vec3::new(0.0, 0.0, TAU)
                };
                p - Vec3::new(0.0, 0.0, dz)
            })
            .collect();
        let h = f.grid().h();
        let mut worst = 0.0f64;
        for p in out.nodes() {
            let near = pre
                .iter()
                .map(|q| (*p - *q).norm())
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(near);
        }
        for q in &pre {
            let near = out
                .nodes()
                .iter()
                .map(|p| (*p - *q).norm())
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(near);
        }
        assert!(worst < 10.0 * h, "surgery displaced the curve by {worst}");
    }

    #[test]
    fn stale_or_malformed_events_are_rejected() {
        let f = pinched_pair(64, 20);
        let cfg = RhsConfig::default();
        let mut event = touch_event(&f);
        event.t_rec += 1e-9;
        assert!(perform_reconnection(&f, &event, &cfg).is_err());

        let mut out_of_range = touch_event(&f);
        out_of_range.node_index = 64;
        assert!(perform_reconnection(&f, &out_of_range, &cfg).is_err());

        let (mirrored, _) = perform_reconnection(&f, &touch_event(&f), &cfg).unwrap();
        let again = ReconnectionEvent {
            t_rec: mirrored.time(),
            node_index: 0,
            x1_min: 0.0,
            criterion: ReconnectionCriterion::DistanceThreshold,
        };
        assert!(perform_reconnection(&mirrored, &again, &cfg).is_err());
    }

    #[test]
    fn surgery_is_deterministic() {
        let f = pinched_pair(128, 77);
        let cfg = RhsConfig::default();
        let (a, _) = perform_reconnection(&f, &touch_event(&f), &cfg).unwrap();
        let (b, _) = perform_reconnection(&f, &touch_event(&f), &cfg).unwrap();
        assert_eq!(a.nodes(), b.nodes());
    }

    #[test]
    fn event_serializes_with_its_field_names() {
        let e = ReconnectionEvent {
            t_rec: 1.397,
            node_index: 12,
            x1_min: 9.5e-7,
            criterion: ReconnectionCriterion::DistanceThreshold,
        };
        let json = serde_json::to_string(&e).unwrap();
        assert!(json.contains("\"t_rec\""));
        assert!(json.contains("\"node_index\""));
        assert!(json.contains("\"x1_min\""));
        assert!(json.contains("\"DistanceThreshold\""));
        let back: ReconnectionEvent = serde_json::from_str(&json).unwrap();
        assert_eq!(back, e);
    }
}
