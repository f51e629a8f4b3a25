//! Model-based Hankel completion: iterative hard thresholding (IHT) and its
//! tangent-space accelerated form (FIHT).
//!
//! One IHT iteration is
//!
//! ```text
//! X_i     = H(x_i + β·res(x_i))
//! x_{i+1} = H†(T_r(X_i))
//! ```
//!
//! where `res` is `mask ⊙ (x_s − x_i)` ([`ResidualMode::Masked`], the gradient
//! of `½‖mask ⊙ x − x_s‖²`) or the literal `x_s − x_i`. FIHT inserts the
//! projection onto the tangent space at the previous rank-`r` iterate before
//! truncating.

use std::fmt::Write as _;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array::{Snapshot, SnapshotKind};
use crate::error::{check_len, Error, Result};
use crate::hankel::{inverse, lift, HankelIndexMap};
use crate::lowrank::{tangent_project, truncate_tangent, truncated_svd, RankFactorization};

/// How the data-fit residual treats unobserved elements.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResidualMode {
    /// `mask ⊙ (x_s − x)`: unobserved elements are left alone.
    #[default]
    Masked,
    /// `x_s − x`: unobserved elements are pulled towards zero.
    Literal,
}

impl FromStr for ResidualMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "masked" => Ok(Self::Masked),
            "literal" => Ok(Self::Literal),
            other => Err(Error::config(format!("unknown residual mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for ResidualMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Masked => "masked",
            Self::Literal => "literal",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Iht,
    Fiht,
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iht" => Ok(Self::Iht),
            "fiht" => Ok(Self::Fiht),
            other => Err(Error::config(format!("unknown algorithm `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub rank: usize,
    pub step_beta: f64,
    pub max_iters: usize,
    /// Stop once `‖x_{i+1} − x_i‖ / ‖x_i‖` drops below this.
    pub rel_tol: f64,
    pub residual_mode: ResidualMode,
    /// FIHT truncates on the factored `2r × 2r` tangent core instead of a
    /// dense SVD.
    #[serde(default = "default_true")]
    pub structured: bool,
}

fn default_true() -> bool {
    true
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rank: 2,
            step_beta: 1.0,
            max_iters: 500,
            rel_tol: 1e-8,
            residual_mode: ResidualMode::Masked,
            structured: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::config("solver rank must be at least 1"));
        }
        if !(self.step_beta > 0.0 && self.step_beta.is_finite()) {
            return Err(Error::config("solver step must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::config("max_iters must be at least 1"));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::config("rel_tol must be positive"));
        }
        Ok(())
    }
}

/// Per-iteration diagnostics of a solve.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverTrace {
    /// Relative residual on observed elements after each iteration.
    pub residuals: Vec<f64>,
    /// Relative iterate change of each iteration.
    pub changes: Vec<f64>,
    pub estimate: Snapshot,
    pub iterations: usize,
    pub converged: bool,
}

impl SolverTrace {
    /// `iteration,residual,change` rows, 1-based iterations.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,residual,change\n");
        for (i, (r, c)) in self.residuals.iter().zip(&self.changes).enumerate() {
            let _ = writeln!(out, "{},{:e},{:e}", i + 1, r, c);
        }
        out
    }
}

fn l2(x: &[Complex64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn observed_residual(x: &[Complex64], x_s: &[Complex64], mask: &[bool]) -> f64 {
    let num = x
        .iter()
        .zip(x_s)
        .zip(mask)
        .filter(|(_, &keep)| keep)
        .map(|((a, b), _)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let den = l2(x_s);
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

fn relative_change(new: &[Complex64], old: &[Complex64]) -> f64 {
    let num = new
        .iter()
        .zip(old)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let den = l2(old);
    if den > 0.0 {
        num / den
    } else if num == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// `x + β·res(x)`.
fn descend(x: &[Complex64], x_s: &[Complex64], cfg: &SolverConfig, mask: &[bool]) -> Vec<Complex64> {
    x.iter()
        .zip(x_s)
        .zip(mask)
        .map(|((&xi, &si), &keep)| match cfg.residual_mode {
            ResidualMode::Masked if !keep => xi,
            _ => xi + (si - xi) * cfg.step_beta,
        })
        .collect()
}

fn check_inputs(x_s: &Snapshot, map: &HankelIndexMap) -> Result<()> {
    check_len(map.m(), x_s.len())
}

/// One IHT iteration from `x_i`.
pub fn iht_step(x_i: &[Complex64], x_s: &Snapshot, cfg: &SolverConfig, map: &HankelIndexMap) -> Result<Vec<Complex64>> {
    check_inputs(x_s, map)?;
    check_len(map.m(), x_i.len())?;
    let d = descend(x_i, &x_s.values, cfg, map.mask());
    let low = truncated_svd(&lift(&d, map)?, cfg.rank)?;
    inverse(&low.reconstruct(), map)
}

fn spectral_factor(x_s: &Snapshot, cfg: &SolverConfig, map: &HankelIndexMap) -> Result<(Vec<Complex64>, RankFactorization)> {
    check_inputs(x_s, map)?;
    let f = truncated_svd(&lift(&x_s.values, map)?, cfg.rank)?;
    Ok((inverse(&f.reconstruct(), map)?, f))
}

/// `H†(T_r(H(x_s)))`.
pub fn spectral_init(x_s: &Snapshot, cfg: &SolverConfig, map: &HankelIndexMap) -> Result<Vec<Complex64>> {
    Ok(spectral_factor(x_s, cfg, map)?.0)
}

fn run<F>(x_s: &Snapshot, cfg: &SolverConfig, map: &HankelIndexMap, mut step: F) -> Result<SolverTrace>
where
    F: FnMut(&[Complex64]) -> Result<Vec<Complex64>>,
{
    let (mut x, _) = spectral_factor(x_s, cfg, map)?;
    let mut residuals = Vec::new();
    let mut changes = Vec::new();
    let mut converged = false;
    for _ in 0..cfg.max_iters {
        let next = step(&x)?;
        let change = relative_change(&next, &x);
        x = next;
        residuals.push(observed_residual(&x, &x_s.values, map.mask()));
        changes.push(change);
        if change < cfg.rel_tol {
            converged = true;
            break;
        }
    }
    Ok(SolverTrace {
        iterations: residuals.len(),
        residuals,
        changes,
        estimate: Snapshot::new(x, SnapshotKind::Reconstructed),
        converged,
    })
}

/// Iterates [`iht_step`] from the spectral initialization. Hitting
/// `max_iters` is reported in the trace, not as an error.
pub fn iht_solve(x_s: &Snapshot, cfg: &SolverConfig, map: &HankelIndexMap) -> Result<SolverTrace> {
    cfg.validate()?;
    run(x_s, cfg, map, |x| iht_step(x, x_s, cfg, map))
}

/// FIHT: the lifted update is projected onto the tangent space at the
/// previous rank-`r` iterate before truncation.
pub fn fiht_solve(x_s: &Snapshot, cfg: &SolverConfig, map: &HankelIndexMap) -> Result<SolverTrace> {
    cfg.validate()?;
    let (_, mut basis) = spectral_factor(x_s, cfg, map)?;
    run(x_s, cfg, map, |x| {
        let g = lift(&descend(x, &x_s.values, cfg, map.mask()), map)?;
        let f = if cfg.structured {
            truncate_tangent(&g, &basis, cfg.rank)?
        } else {
            truncated_svd(&tangent_project(&g, &basis)?, cfg.rank)?
        };
        let next = inverse(&f.reconstruct(), map)?;
        basis = f;
        Ok(next)
    })
}

pub fn solve(algo: Algorithm, x_s: &Snapshot, cfg: &SolverConfig, map: &HankelIndexMap) -> Result<SolverTrace> {
    match algo {
        Algorithm::Iht => iht_solve(x_s, cfg, map),
        Algorithm::Fiht => fiht_solve(x_s, cfg, map),
    }
}
