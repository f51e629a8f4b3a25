//! The unrolled IHT network.
//!
//! Phase 0 (initialization layer) encodes the observed Hankel entries, embeds
//! the code back into a full Hankel vector, decodes it and averages back to a
//! signal scaled by the learnable `β₀`. Each of the `K` unrolled phases then
//! takes one gradient step with a learnable step size `βₖ`, replaces the rank
//! truncation by the same encoder/decoder pair, and mixes input and output
//! through a learnable skip weight `γₖ`:
//!
//! ```text
//! X̂ₖ    = H(x̂ + βₖ·res(x̂))
//! x̃ₖ    = H†(F_dec(embed(F_enc(extract(X̂ₖ)))))
//! x̂'    = x̃ₖ + γₖ (x̃ₖ − x̂)
//! ```
//!
//! All tensors act on real/imag-stacked vectors. Every batched array here
//! stores one sample per column.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::array::{ArrayConfig, Snapshot, SnapshotKind};
use crate::error::{check_len, Error, Result};
use crate::hankel::{
    complex_to_stacked, embed_batch, extract_batch, inverse_batch, lift_batch, stacked_to_complex,
    HankelIndexMap,
};
pub use crate::solvers::ResidualMode;

/// Default number of unrolled phases.
pub const DEFAULT_PHASES: usize = 8;

/// Dense layer `y = W x + b`, `W` stored row-major as `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn zeros(width: usize) -> Self {
        Self {
            weight: Array2::zeros((width, width)),
            bias: Array1::zeros(width),
        }
    }

    pub fn identity(width: usize) -> Self {
        Self {
            weight: Array2::eye(width),
            bias: Array1::zeros(width),
        }
    }

    fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut y = self.weight.dot(&x);
        y += &self.bias.view().insert_axis(Axis(1));
        y
    }
}

/// Linear → ReLU → Linear → ReLU → Linear, square layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp3 {
    pub layers: [Linear; 3],
}

/// Activations an [`Mlp3`] keeps for its backward pass.
#[derive(Clone, Debug)]
pub struct MlpCache {
    pub input: Array2<f64>,
    pub pre: [Array2<f64>; 2],
    pub hidden: [Array2<f64>; 2],
}

fn relu(a: &Array2<f64>) -> Array2<f64> {
    a.mapv(|v| if v > 0.0 { v } else { 0.0 })
}

impl Mlp3 {
    pub fn zeros(width: usize) -> Self {
        Self {
            layers: [Linear::zeros(width), Linear::zeros(width), Linear::zeros(width)],
        }
    }

    pub fn identity(width: usize) -> Self {
        Self {
            layers: [
                Linear::identity(width),
                Linear::identity(width),
                Linear::identity(width),
            ],
        }
    }

    pub fn width(&self) -> usize {
        self.layers[0].bias.len()
    }

    pub fn forward(&self, x: Array2<f64>) -> (Array2<f64>, MlpCache) {
        let a1 = self.layers[0].apply(x.view());
        let h1 = relu(&a1);
        let a2 = self.layers[1].apply(h1.view());
        let h2 = relu(&a2);
        let out = self.layers[2].apply(h2.view());
        (
            out,
            MlpCache {
                input: x,
                pre: [a1, a2],
                hidden: [h1, h2],
            },
        )
    }

    /// Accumulates parameter gradients into `grad`; returns the input
    /// gradient when `need_input` is set. ReLU′(0) is taken as 0.
    pub fn backward(
        &self,
        cache: &MlpCache,
        d_out: &Array2<f64>,
        grad: &mut Mlp3,
        need_input: bool,
    ) -> Option<Array2<f64>> {
        let inputs = [&cache.input, &cache.hidden[0], &cache.hidden[1]];
        let mut delta = d_out.clone();
        for l in (0..3).rev() {
            grad.layers[l].weight += &delta.dot(&inputs[l].t());
            grad.layers[l].bias += &delta.sum_axis(Axis(1));
            if l == 0 && !need_input {
                return None;
            }
            let mut d_in = self.layers[l].weight.t().dot(&delta);
            if l > 0 {
                ndarray::Zip::from(&mut d_in)
                    .and(&cache.pre[l - 1])
                    .for_each(|d, &a| {
                        if a <= 0.0 {
                            *d = 0.0
                        }
                    });
            }
            delta = d_in;
        }
        Some(delta)
    }
}

/// Learnable tensors of one phase. In phase 0 `beta` holds `β₀` and `gamma`
/// is unused.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseParams {
    pub encoder: Mlp3,
    pub decoder: Mlp3,
    pub beta: f64,
    pub gamma: f64,
}

impl PhaseParams {
    pub fn zeros(enc_width: usize, dec_width: usize) -> Self {
        Self {
            encoder: Mlp3::zeros(enc_width),
            decoder: Mlp3::zeros(dec_width),
            beta: 0.0,
            gamma: 0.0,
        }
    }

    /// Tensors in checkpoint order: encoder `W₁ b₁ W₂ b₂ W₃ b₃`, decoder
    /// likewise, then `beta`, `gamma`.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(14);
        for mlp in [&self.encoder, &self.decoder] {
            for l in &mlp.layers {
                out.push(l.weight.as_slice().expect("standard layout"));
                out.push(l.bias.as_slice().expect("standard layout"));
            }
        }
        out.push(std::slice::from_ref(&self.beta));
        out.push(std::slice::from_ref(&self.gamma));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(14);
        for mlp in [&mut self.encoder, &mut self.decoder] {
            for l in &mut mlp.layers {
                out.push(l.weight.as_slice_mut().expect("standard layout"));
                out.push(l.bias.as_slice_mut().expect("standard layout"));
            }
        }
        out.push(std::slice::from_mut(&mut self.beta));
        out.push(std::slice::from_mut(&mut self.gamma));
        out
    }
}

/// A trained or freshly initialized network, bound to one array layout.
#[derive(Clone, Debug, PartialEq)]
pub struct NetParams {
    pub config: ArrayConfig,
    pub residual_mode: ResidualMode,
    /// `K + 1` entries; index 0 is the initialization layer.
    pub phases: Vec<PhaseParams>,
}

/// Scale of the uniform perturbation added to identity weights at init.
pub const INIT_NOISE: f64 = 1e-2;

impl NetParams {
    /// Identity weights plus `U(−1e-2, 1e-2)` noise, zero biases, `β₀ = 1`,
    /// `βₖ = 0.5`, `γₖ = 0`.
    pub fn init(config: &ArrayConfig, k_phases: usize, residual_mode: ResidualMode, seed: u64) -> Self {
        let map = HankelIndexMap::new(config);
        let (enc, dec) = (map.observed_len(), map.hankel_len());
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut noisy_identity = |width: usize| {
            let mut mlp = Mlp3::identity(width);
            for l in &mut mlp.layers {
                l.weight.mapv_inplace(|w| w + rng.random_range(-INIT_NOISE..INIT_NOISE));
            }
            mlp
        };
        let phases = (0..=k_phases)
            .map(|k| PhaseParams {
                encoder: noisy_identity(enc),
                decoder: noisy_identity(dec),
                beta: if k == 0 { 1.0 } else { 0.5 },
                gamma: 0.0,
            })
            .collect();
        Self {
            config: config.clone(),
            residual_mode,
            phases,
        }
    }

    pub fn k_phases(&self) -> usize {
        self.phases.len() - 1
    }

    pub fn beta0(&self) -> f64 {
        self.phases[0].beta
    }

    pub fn index_map(&self) -> HankelIndexMap {
        HankelIndexMap::new(&self.config)
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> GradientSet {
        let map = self.index_map();
        GradientSet {
            phases: (0..self.phases.len())
                .map(|_| PhaseParams::zeros(map.observed_len(), map.hankel_len()))
                .collect(),
        }
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        self.phases.iter().flat_map(|p| p.tensors()).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.phases.iter_mut().flat_map(|p| p.tensors_mut()).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Checks layer widths against the array layout and that every entry is
    /// finite.
    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() {
            return Err(Error::config("network needs at least the initialization layer"));
        }
        let map = self.index_map();
        for p in &self.phases {
            for (mlp, width) in [(&p.encoder, map.observed_len()), (&p.decoder, map.hankel_len())] {
                for l in &mlp.layers {
                    if l.weight.dim() != (width, width) || l.bias.len() != width {
                        return Err(Error::Shape {
                            expected: width,
                            got: l.bias.len(),
                        });
                    }
                }
            }
        }
        if self.tensors().iter().any(|t| t.iter().any(|v| !v.is_finite())) {
            return Err(Error::Numeric("non-finite network parameter".into()));
        }
        Ok(())
    }
}

/// Gradients, shaped like [`NetParams::phases`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub phases: Vec<PhaseParams>,
}

impl GradientSet {
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.phases.iter().flat_map(|p| p.tensors()).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.phases.iter_mut().flat_map(|p| p.tensors_mut()).collect()
    }
}

/// Everything one phase computed on a batch.
#[derive(Clone, Debug)]
pub struct PhaseTrace {
    /// Phase input `x̂`; `None` for the initialization layer.
    pub state_in: Option<Array2<f64>>,
    /// `res(x̂)` used by the gradient step; `None` for the initialization layer.
    pub residual: Option<Array2<f64>>,
    pub encoder: MlpCache,
    pub decoder: MlpCache,
    /// `H†` of the decoder output (before `β₀` in phase 0).
    pub x_tilde: Array2<f64>,
    /// Target of this phase's autoencoder-consistency term.
    pub reference: Array2<f64>,
    pub state_out: Array2<f64>,
}

#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub x_s: Array2<f64>,
    pub phases: Vec<PhaseTrace>,
}

impl ForwardTrace {
    /// Final reconstruction `x̂_K`, stacked.
    pub fn output(&self) -> &Array2<f64> {
        &self.phases.last().expect("at least one phase").state_out
    }

    pub fn batch_size(&self) -> usize {
        self.x_s.ncols()
    }
}

fn autoencode(
    hankel: ArrayView2<f64>,
    params: &PhaseParams,
    map: &HankelIndexMap,
) -> (MlpCache, MlpCache, Array2<f64>) {
    let observed = extract_batch(hankel, map);
    let (code, enc) = params.encoder.forward(observed);
    let (decoded, dec) = params.decoder.forward(embed_batch(code.view(), map));
    (enc, dec, inverse_batch(decoded.view(), map))
}

/// Initialization layer: `x̂₀ = H†(β₀ F_dec(embed(F_enc(extract(H(x_s))))))`.
pub fn init_layer(x_s: ArrayView2<f64>, params: &PhaseParams, map: &HankelIndexMap) -> PhaseTrace {
    let lifted = lift_batch(x_s, map);
    let (encoder, decoder, x_tilde) = autoencode(lifted.view(), params, map);
    let reference = inverse_batch(embed_batch(extract_batch(lifted.view(), map).view(), map).view(), map);
    let state_out = &x_tilde * params.beta;
    PhaseTrace {
        state_in: None,
        residual: None,
        encoder,
        decoder,
        x_tilde,
        reference,
        state_out,
    }
}

/// `res(x̂)` on stacked batches.
pub fn residual(state: ArrayView2<f64>, x_s: ArrayView2<f64>, mode: ResidualMode, map: &HankelIndexMap) -> Array2<f64> {
    let mut r = &x_s - &state;
    if mode == ResidualMode::Masked {
        let mask = Array1::from(map.stacked_mask());
        r *= &mask.view().insert_axis(Axis(1));
    }
    r
}

/// Gradient step followed by the stacked lift; returns `(X̂ₖ, res)`.
pub fn gradient_module(
    state: ArrayView2<f64>,
    x_s: ArrayView2<f64>,
    beta: f64,
    mode: ResidualMode,
    map: &HankelIndexMap,
) -> (Array2<f64>, Array2<f64>) {
    let res = residual(state, x_s, mode, map);
    let stepped = &state + &(&res * beta);
    (lift_batch(stepped.view(), map), res)
}

/// Autoencoder replacing the rank truncation, plus the skip connection.
/// Returns the trace with `state_in` and `residual` left unset.
pub fn lowrank_module(
    hankel: ArrayView2<f64>,
    state_in: ArrayView2<f64>,
    params: &PhaseParams,
    map: &HankelIndexMap,
) -> PhaseTrace {
    let (encoder, decoder, x_tilde) = autoencode(hankel, params, map);
    let state_out = &x_tilde * (1.0 + params.gamma) - &state_in * params.gamma;
    PhaseTrace {
        state_in: None,
        residual: None,
        encoder,
        decoder,
        x_tilde,
        reference: state_in.to_owned(),
        state_out,
    }
}

/// Full forward pass on a `2m × B` batch of stacked masked snapshots.
pub fn forward_batch(x_s: ArrayView2<f64>, params: &NetParams, map: &HankelIndexMap) -> ForwardTrace {
    let mut phases = Vec::with_capacity(params.phases.len());
    phases.push(init_layer(x_s, &params.phases[0], map));
    for p in &params.phases[1..] {
        let state = phases.last().unwrap().state_out.clone();
        let (hankel, res) = gradient_module(state.view(), x_s, p.beta, params.residual_mode, map);
        let mut t = lowrank_module(hankel.view(), state.view(), p, map);
        t.state_in = Some(state);
        t.residual = Some(res);
        phases.push(t);
    }
    ForwardTrace {
        x_s: x_s.to_owned(),
        phases,
    }
}

/// Stacks snapshots column-wise into a `2m × B` batch.
pub fn stack_batch(snapshots: &[&Snapshot], m: usize) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((2 * m, snapshots.len()));
    for (j, s) in snapshots.iter().enumerate() {
        check_len(m, s.len())?;
        for (i, v) in complex_to_stacked(&s.values).into_iter().enumerate() {
            out[[i, j]] = v;
        }
    }
    Ok(out)
}

pub fn forward(x_s: &Snapshot, params: &NetParams, map: &HankelIndexMap) -> Result<ForwardTrace> {
    let batch = stack_batch(&[x_s], map.m())?;
    Ok(forward_batch(batch.view(), params, map))
}

/// Reconstructs full-array snapshots, `chunk` samples per forward pass.
pub fn reconstruct_all(inputs: &[&Snapshot], params: &NetParams, map: &HankelIndexMap, chunk: usize) -> Result<Vec<Snapshot>> {
    let mut out = Vec::with_capacity(inputs.len());
    for block in inputs.chunks(chunk.max(1)) {
        let batch = stack_batch(block, map.m())?;
        let trace = forward_batch(batch.view(), params, map);
        for col in trace.output().columns() {
            let values = stacked_to_complex(&col.to_vec())?;
            out.push(Snapshot::new(values, SnapshotKind::Reconstructed));
        }
    }
    Ok(out)
}
