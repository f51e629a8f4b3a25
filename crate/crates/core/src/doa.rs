//! Beamforming spectra, peak picking and permutation-matched DOA errors.

use std::fmt::Write as _;

use itertools::Itertools;

use crate::array::{steering_vector, ArrayConfig, Snapshot, FOV_DEG};
use crate::error::{check_len, Error, Result};

pub const DEFAULT_GRID_STEP_DEG: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub grid_deg: Vec<f64>,
    pub power: Vec<f64>,
}

/// Uniform grid over the field of view. Points are computed as
/// `lo + i·step` so the grid is exact at multiples of the step.
pub fn fov_grid(step_deg: f64) -> Result<Vec<f64>> {
    if !(step_deg > 0.0 && step_deg.is_finite()) {
        return Err(Error::config(format!("grid step must be positive, got {step_deg}")));
    }
    let (lo, hi) = FOV_DEG;
    let n = ((hi - lo) / step_deg + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| lo + i as f64 * step_deg).collect())
}

/// `power(θ) = |a(θ)ᴴ x|² / m²` over the field of view.
pub fn beamform(x: &Snapshot, config: &ArrayConfig, grid_step_deg: f64) -> Result<Spectrum> {
    check_len(config.m(), x.len())?;
    let grid_deg = fov_grid(grid_step_deg)?;
    let m2 = (config.m() * config.m()) as f64;
    let power = grid_deg
        .iter()
        .map(|&t| {
            let a = steering_vector(config, t);
            let s: crate::Complex64 = a.iter().zip(&x.values).map(|(a, x)| a.conj() * x).sum();
            s.norm_sqr() / m2
        })
        .collect();
    Ok(Spectrum { grid_deg, power })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Peaks {
    pub angles_deg: Vec<f64>,
    /// Fewer than `p` strict local maxima were found and the global maximum
    /// padded the list.
    pub fallback: bool,
}

/// The `p` largest strict interior local maxima, by descending power.
pub fn find_peaks(s: &Spectrum, p: usize) -> Result<Peaks> {
    if s.power.is_empty() {
        return Err(Error::config("empty spectrum"));
    }
    if p == 0 {
        return Err(Error::config("peak count must be at least 1"));
    }
    let w = &s.power;
    let mut maxima: Vec<usize> = (1..w.len().saturating_sub(1))
        .filter(|&i| w[i] > w[i - 1] && w[i] > w[i + 1])
        .collect();
    maxima.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
    maxima.truncate(p);
    let fallback = maxima.len() < p;
    if fallback {
        let global = (0..w.len()).max_by(|&a, &b| w[a].total_cmp(&w[b]).then(b.cmp(&a))).unwrap();
        maxima.resize(p, global);
    }
    Ok(Peaks {
        angles_deg: maxima.iter().map(|&i| s.grid_deg[i]).collect(),
        fallback,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DoaResult {
    /// Estimates reordered to match `truth`.
    pub estimates_deg: Vec<f64>,
    pub matched_errors_deg: Vec<f64>,
    pub mse_deg2: f64,
}

/// Minimum-MSE assignment of estimates to true angles over all permutations.
pub fn doa_error(estimates: &[f64], truth: &[f64]) -> Result<DoaResult> {
    check_len(truth.len(), estimates.len())?;
    if truth.is_empty() {
        return Err(Error::config("no angles to match"));
    }
    let n = truth.len();
    let best = (0..n)
        .permutations(n)
        .map(|perm| {
            let sq: f64 = perm.iter().zip(truth).map(|(&i, t)| (estimates[i] - t).powi(2)).sum();
            (sq, perm)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap();
    let estimates_deg: Vec<f64> = best.1.iter().map(|&i| estimates[i]).collect();
    let matched_errors_deg = estimates_deg.iter().zip(truth).map(|(e, t)| (e - t).abs()).collect();
    Ok(DoaResult {
        estimates_deg,
        matched_errors_deg,
        mse_deg2: best.0 / n as f64,
    })
}

pub const SPECTRUM_HEADER: &str = "run_id,curve,angle_deg,power";

/// Appends one spectrum to a CSV with [`SPECTRUM_HEADER`] columns.
pub fn spectrum_rows(out: &mut String, run_id: &str, curve: &str, s: &Spectrum) {
    for (a, p) in s.grid_deg.iter().zip(&s.power) {
        let _ = writeln!(out, "{run_id},{curve},{a:.1},{p:e}");
    }
}
