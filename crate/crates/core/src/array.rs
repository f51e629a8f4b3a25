//! Single-snapshot ULA signal model, SLA masking and seeded dataset generation.
//!
//! Randomness comes from ChaCha20 (`rand_chacha::ChaCha20Rng`). Every sample
//! of a dataset draws from its own stream: the generator is keyed by the
//! master seed and the stream id is the sample index, so the output does not
//! depend on how many threads produce it.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Field of view used for source draws and beamforming grids, in degrees.
pub const FOV_DEG: (f64, f64) = (-60.0, 60.0);

/// ULA geometry plus the SLA observation set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ArrayConfigRepr")]
pub struct ArrayConfig {
    m: usize,
    spacing_ratio: f64,
    /// 1-based, strictly increasing element indices.
    omega: Vec<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ArrayConfigRepr {
    m: usize,
    spacing_ratio: f64,
    omega: Vec<usize>,
}

impl TryFrom<ArrayConfigRepr> for ArrayConfig {
    type Error = Error;

    fn try_from(r: ArrayConfigRepr) -> Result<Self> {
        Self::new(r.m, r.spacing_ratio, r.omega)
    }
}

impl ArrayConfig {
    pub fn new(m: usize, spacing_ratio: f64, omega: Vec<usize>) -> Result<Self> {
        if m == 0 {
            return Err(Error::config("array size must be positive"));
        }
        if !(spacing_ratio > 0.0 && spacing_ratio.is_finite()) {
            return Err(Error::config(format!(
                "spacing ratio must be positive, got {spacing_ratio}"
            )));
        }
        if omega.is_empty() {
            return Err(Error::config("observation set is empty"));
        }
        if omega.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("observation set must be strictly increasing"));
        }
        if omega[0] < 1 || *omega.last().unwrap() > m {
            return Err(Error::config(format!(
                "observation indices must lie in 1..={m}"
            )));
        }
        Ok(Self {
            m,
            spacing_ratio,
            omega,
        })
    }

    /// Fully observed ULA with half-wavelength spacing.
    pub fn ula(m: usize) -> Result<Self> {
        Self::new(m, 0.5, (1..=m).collect())
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn spacing_ratio(&self) -> f64 {
        self.spacing_ratio
    }

    pub fn omega(&self) -> &[usize] {
        &self.omega
    }

    /// 0-based observation flags of length `m`.
    pub fn mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.m];
        for &i in &self.omega {
            mask[i - 1] = true;
        }
        mask
    }

    pub fn is_full(&self) -> bool {
        self.omega.len() == self.m
    }
}

/// Draws a random SLA of `size` elements that keeps the first and last ULA
/// element, so the aperture is unchanged.
pub fn random_sla(m: usize, size: usize, spacing_ratio: f64, seed: u64) -> Result<ArrayConfig> {
    if size < 2 || size > m {
        return Err(Error::config(format!(
            "SLA size {size} must lie in 2..={m}"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let interior: Vec<usize> = (2..m).collect();
    let mut chosen = rand::seq::index::sample(&mut rng, interior.len(), size - 2)
        .into_iter()
        .map(|i| interior[i])
        .collect::<Vec<_>>();
    chosen.push(1);
    chosen.push(m);
    chosen.sort_unstable();
    ArrayConfig::new(m, spacing_ratio, chosen)
}

/// Far-field point sources: angles, amplitudes and phases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceSet {
    pub angles_deg: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub phases_rad: Vec<f64>,
}

impl SourceSet {
    pub fn new(angles_deg: Vec<f64>, amplitudes: Vec<f64>, phases_rad: Vec<f64>) -> Result<Self> {
        let set = Self {
            angles_deg,
            amplitudes,
            phases_rad,
        };
        set.validate()?;
        Ok(set)
    }

    fn validate(&self) -> Result<()> {
        let p = self.angles_deg.len();
        if p == 0 {
            return Err(Error::config("source set is empty"));
        }
        if self.amplitudes.len() != p || self.phases_rad.len() != p {
            return Err(Error::config("source lists must share one length"));
        }
        if self
            .angles_deg
            .iter()
            .any(|a| !(a.abs() < 90.0))
        {
            return Err(Error::config("source angles must lie in (-90, 90) degrees"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.angles_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles_deg.is_empty()
    }

    /// Complex source amplitudes `|s| e^{j arg s}`.
    pub fn complex_amplitudes(&self) -> Vec<Complex64> {
        self.amplitudes
            .iter()
            .zip(&self.phases_rad)
            .map(|(&a, &ph)| Complex64::from_polar(a, ph))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotKind {
    FullClean,
    FullNoisy,
    Masked,
    Reconstructed,
}

/// One complex array snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub values: Vec<Complex64>,
    pub kind: SnapshotKind,
}

impl Snapshot {
    pub fn new(values: Vec<Complex64>, kind: SnapshotKind) -> Self {
        Self { values, kind }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Mean per-element power `(1/m) Σ |x_i|²`.
    pub fn power(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() / self.values.len() as f64
    }
}

/// `a(θ)_k = exp(j 2π (d/λ) k sin θ)`, `k = 0..m`.
pub fn steering_vector(config: &ArrayConfig, theta_deg: f64) -> Vec<Complex64> {
    let phase = 2.0 * PI * config.spacing_ratio * theta_deg.to_radians().sin();
    (0..config.m)
        .map(|k| Complex64::from_polar(1.0, phase * k as f64))
        .collect()
}

/// Noiseless snapshot `x = Σ_k s_k a(θ_k)`.
pub fn synthesize(config: &ArrayConfig, sources: &SourceSet) -> Result<Snapshot> {
    sources.validate()?;
    let mut x = vec![Complex64::new(0.0, 0.0); config.m];
    for (&theta, s) in sources.angles_deg.iter().zip(sources.complex_amplitudes()) {
        for (xi, ai) in x.iter_mut().zip(steering_vector(config, theta)) {
            *xi += s * ai;
        }
    }
    Ok(Snapshot::new(x, SnapshotKind::FullClean))
}

/// Adds circular complex Gaussian noise at `snr_db` relative to the
/// snapshot's own mean power. `snr_db = +inf` returns the input unchanged.
pub fn add_noise(x: &Snapshot, snr_db: f64, seed: u64) -> Result<Snapshot> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    add_noise_with(x, snr_db, &mut rng)
}

/// [`add_noise`] drawing from a caller-supplied generator.
pub fn add_noise_with<R: Rng + ?Sized>(x: &Snapshot, snr_db: f64, rng: &mut R) -> Result<Snapshot> {
    let power = x.power();
    if power == 0.0 {
        return Err(Error::config("cannot set an SNR for an all-zero snapshot"));
    }
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::config(format!("invalid SNR {snr_db} dB")));
    }
    if snr_db == f64::INFINITY {
        return Ok(Snapshot::new(x.values.clone(), SnapshotKind::FullNoisy));
    }
    let sigma2 = power / 10f64.powf(snr_db / 10.0);
    let scale = (sigma2 / 2.0).sqrt();
    let values = x
        .values
        .iter()
        .map(|&v| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            v + Complex64::new(re, im) * scale
        })
        .collect();
    Ok(Snapshot::new(values, SnapshotKind::FullNoisy))
}

/// Zeroes every element outside the observation set.
pub fn apply_mask(x: &Snapshot, config: &ArrayConfig) -> Result<Snapshot> {
    check_len(config.m, x.len())?;
    let mask = config.mask();
    let values = x
        .values
        .iter()
        .zip(&mask)
        .map(|(&v, &keep)| if keep { v } else { Complex64::new(0.0, 0.0) })
        .collect();
    Ok(Snapshot::new(values, SnapshotKind::Masked))
}

/// Parameters of a synthetic dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub count: usize,
    pub p: usize,
    /// Inclusive SNR range in dB; `[inf, inf]` yields noiseless inputs.
    pub snr_range_db: [f64; 2],
    pub seed: u64,
    #[serde(default)]
    pub min_separation_deg: f64,
}

/// One training/testing pair plus the ground truth that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub label: Snapshot,
    pub input: Snapshot,
    /// Noisy full-array snapshot before masking.
    pub noisy: Snapshot,
    pub sources: SourceSet,
    pub snr_db: f64,
}

/// Generator for sample `index` of a dataset with master seed `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

const MAX_SEPARATION_ATTEMPTS: usize = 10_000;

fn draw_angles<R: Rng + ?Sized>(rng: &mut R, p: usize, min_sep: f64) -> Result<Vec<f64>> {
    let (lo, hi) = FOV_DEG;
    for _ in 0..MAX_SEPARATION_ATTEMPTS {
        let angles: Vec<f64> = (0..p).map(|_| rng.random_range(lo..=hi)).collect();
        let separated = min_sep <= 0.0
            || angles.iter().enumerate().all(|(i, a)| {
                angles[i + 1..].iter().all(|b| (a - b).abs() >= min_sep)
            });
        if separated {
            return Ok(angles);
        }
    }
    Err(Error::config(format!(
        "could not place {p} sources {min_sep} degrees apart"
    )))
}

/// Draws sample `index`: P sources with angles in the FoV, amplitudes in
/// [0.5, 1] and phases in [0, 2π); the label is the clean ULA snapshot and the
/// input is the noisy snapshot masked to the SLA.
///
/// Draw order per sample: angles, amplitudes, phases, SNR, then one
/// (re, im) normal pair per element.
pub fn generate_sample(config: &ArrayConfig, spec: &DatasetSpec, index: u64) -> Result<Sample> {
    let mut rng = sample_rng(spec.seed, index);
    let p = spec.p;
    let angles = draw_angles(&mut rng, p, spec.min_separation_deg)?;
    let amplitudes: Vec<f64> = (0..p).map(|_| rng.random_range(0.5..=1.0)).collect();
    let phases: Vec<f64> = (0..p).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    let [lo, hi] = spec.snr_range_db;
    let snr_db = if lo == hi { lo } else { rng.random_range(lo..=hi) };
    let sources = SourceSet::new(angles, amplitudes, phases)?;
    let label = synthesize(config, &sources)?;
    let noisy = add_noise_with(&label, snr_db, &mut rng)?;
    let input = apply_mask(&noisy, config)?;
    Ok(Sample {
        label,
        input,
        noisy,
        sources,
        snr_db,
    })
}

/// Generates `spec.count` samples; identical for a given `(config, spec)`
/// regardless of the rayon pool size.
pub fn generate_dataset(config: &ArrayConfig, spec: &DatasetSpec) -> Result<Vec<Sample>> {
    if spec.count == 0 {
        return Err(Error::config("dataset count must be at least 1"));
    }
    if spec.p == 0 {
        return Err(Error::config("source count must be at least 1"));
    }
    let [lo, hi] = spec.snr_range_db;
    if lo.is_nan() || hi.is_nan() || lo > hi {
        return Err(Error::config(format!("invalid SNR range [{lo}, {hi}]")));
    }
    (0..spec.count as u64)
        .into_par_iter()
        .map(|i| generate_sample(config, spec, i))
        .collect()
}
