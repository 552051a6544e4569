//! Discrete spectra of scalar time series, and the square-frequency
//! dominance fingerprint.
//!
//! The series a run produces (corner-position modulus, impulse modulus over
//! a quasi-period) are short, so a direct DFT with an exact twiddle table is
//! plenty fast and keeps every angle exact to one rounding.

use crate::error::{Error, Result};
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::TAU;
use std::io::Write;

/// One-sided spectrum: `|c(k)|` and the weighted line `k * |c(k)|` for
/// `k = 0 ..= N/2`.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub k: Vec<usize>,
    pub coeff_modulus: Vec<f64>,
    pub weighted: Vec<f64>,
}

impl Spectrum {
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "k,coeff_modulus,weighted,is_square")?;
        for i in 0..self.k.len() {
            writeln!(
                w,
                "{},{},{},{}",
                self.k[i],
                self.coeff_modulus[i],
                self.weighted[i],
                is_square(self.k[i])
            )?;
        }
        Ok(())
    }
}

/// Whether `k` is a perfect square (0 and 1 included).
pub fn is_square(k: usize) -> bool {
    let r = (k as f64).sqrt().round() as usize;
    r * r == k
}

/// Whether `k = n^2` carries the largest weighted coefficient strictly
/// between the neighbouring squares.
#[derive(Debug, Clone, Copy)]
pub struct DominanceCheck {
    pub n: usize,
    pub dominant: bool,
}

#[derive(Debug, Clone)]
pub struct DominanceReport {
    pub checks: Vec<DominanceCheck>,
    /// Share of checks that passed; 1.0 when every square wins its window.
    pub fraction: f64,
}

/// Full set of DFT coefficients `c(k) = (1/N) sum_j f_j e^{-2 pi i j k / N}`
/// of the de-meaned series, for `k = 0 .. N-1`.
///
/// Twiddles come from an exact angle table indexed by `(j*k) mod N`, so no
/// recurrence error accumulates.
pub fn dft_coefficients(samples: &[f64]) -> Vec<Complex64> {
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = samples.iter().map(|v| v - mean).collect();
    let table: Vec<Complex64> = (0..n)
        .map(|m| Complex64::from_polar(1.0, -TAU * m as f64 / n as f64))
        .collect();
    let one = |k: usize| {
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, &v) in centered.iter().enumerate() {
            acc += v * table[(j * k) % n];
        }
        acc / n as f64
    };
    if n >= 2048 {
        (0..n).into_par_iter().map(one).collect()
    } else {
        (0..n).map(one).collect()
    }
}

/// One-sided spectrum of a uniformly sampled series plus the
/// square-dominance report: for every `n >= 2` with `n^2` inside the band,
/// check that the weighted line `k |c(k)|` peaks at `k = n^2` within the
/// open window `((n-1)^2, (n+1)^2)`, other squares excluded.
pub fn spectrum_with_square_dominance(samples: &[f64]) -> Result<(Spectrum, DominanceReport)> {
    if samples.len() < 64 {
        return Err(Error::Config(format!(
            "spectrum needs at least 64 samples, got {}",
            samples.len()
        )));
    }
    let coeffs = dft_coefficients(samples);
    let k_max = samples.len() / 2;
    let coeff_modulus: Vec<f64> = (0..=k_max).map(|k| coeffs[k].norm()).collect();
    let weighted: Vec<f64> = coeff_modulus
        .iter()
        .enumerate()
        .map(|(k, m)| k as f64 * m)
        .collect();
    let spectrum = Spectrum { k: (0..=k_max).collect(), coeff_modulus, weighted };

    let mut checks = Vec::new();
    let mut n_sq = 2usize;
    while n_sq * n_sq <= k_max {
        let lo = (n_sq - 1) * (n_sq - 1);
        let hi = (n_sq + 1) * (n_sq + 1);
        let peak = spectrum.weighted[n_sq * n_sq];
        let dominant = (lo + 1..hi.min(k_max + 1))
            .filter(|&k| !is_square(k))
            .all(|k| spectrum.weighted[k] <= peak);
        checks.push(DominanceCheck { n: n_sq, dominant });
        n_sq += 1;
    }
    let fraction = if checks.is_empty() {
        1.0
    } else {
        checks.iter().filter(|c| c.dominant).count() as f64 / checks.len() as f64
    };
    Ok((spectrum, DominanceReport { checks, fraction }))
}
