//! Loss, hand-derived reverse-mode gradients, Adam and the training loop.
//!
//! Losses are normalized by `(batch size × 2m)`:
//!
//! ```text
//! loss1 = Σ_q ‖x̂_K − x_label‖²           / (B·2m)
//! loss2 = Σ_q Σ_{k=0..K} ‖x̃ₖ − refₖ‖²     / (B·2m)
//! total = loss1 + α·loss2
//! ```
//!
//! where `refₖ` is the phase input for `k ≥ 1` and the re-averaged observed
//! input for the initialization layer.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::array::{sample_rng, Sample};
use crate::checkpoint::{self, read_container, write_atomic, write_container, STATE_MAGIC};
use crate::error::{Error, Result};
use crate::hankel::{embed_batch, extract_batch, inverse_adjoint_batch, lift_adjoint_batch, HankelIndexMap};
use crate::net::{forward_batch, stack_batch, ForwardTrace, GradientSet, NetParams, ResidualMode};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    /// Multiplier applied every `decay_every` epochs.
    pub lr_decay: f64,
    #[serde(default = "default_decay_every")]
    pub decay_every: usize,
    pub alpha: f64,
    pub seed: u64,
    pub k_phases: usize,
}

fn default_decay_every() -> usize {
    10
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 256,
            lr0: 1e-4,
            lr_decay: 0.5,
            decay_every: 10,
            alpha: 0.01,
            seed: 0,
            k_phases: crate::net::DEFAULT_PHASES,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.decay_every == 0 {
            return Err(Error::config("epochs, batch_size and decay_every must be positive"));
        }
        if !(self.lr0 >= 0.0 && self.lr0.is_finite()) || !(self.lr_decay > 0.0) {
            return Err(Error::config("learning rate and decay must be non-negative and finite"));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::config("alpha must be non-negative"));
        }
        Ok(())
    }

    /// Learning rate for 1-based `epoch`.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        let drops = (epoch.saturating_sub(1) / self.decay_every) as i32;
        self.lr0 * self.lr_decay.powi(drops)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub loss1: f64,
    pub loss2: f64,
}

fn sq_dist(a: &Array2<f64>, b: ArrayView2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn norm_factor(trace: &ForwardTrace) -> f64 {
    1.0 / (trace.batch_size() * trace.x_s.nrows()) as f64
}

/// Batch loss of a forward trace against stacked clean labels.
pub fn loss(trace: &ForwardTrace, labels: ArrayView2<f64>, alpha: f64) -> LossValue {
    let c = norm_factor(trace);
    let loss1 = c * sq_dist(trace.output(), labels);
    let loss2 = c * trace
        .phases
        .iter()
        .map(|p| sq_dist(&p.x_tilde, p.reference.view()))
        .sum::<f64>();
    LossValue {
        total: loss1 + alpha * loss2,
        loss1,
        loss2,
    }
}

fn dot(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Exact gradient of [`loss`]`.total` with respect to every parameter.
pub fn backward(
    trace: &ForwardTrace,
    labels: ArrayView2<f64>,
    params: &NetParams,
    alpha: f64,
    map: &HankelIndexMap,
) -> GradientSet {
    let c = norm_factor(trace);
    let mut grads = params.zeros_like();
    let mut g_state = (trace.output() - &labels) * (2.0 * c);
    let keep = match params.residual_mode {
        ResidualMode::Masked => map.stacked_mask(),
        ResidualMode::Literal => vec![1.0; 2 * map.m()],
    };

    for k in (0..trace.phases.len()).rev() {
        let pt = &trace.phases[k];
        let p = &params.phases[k];
        let gp = &mut grads.phases[k];
        let consistency = (&pt.x_tilde - &pt.reference) * (2.0 * alpha * c);

        let g_tilde = if k == 0 {
            gp.beta = dot(&g_state, &pt.x_tilde);
            &g_state * p.beta + &consistency
        } else {
            let state_in = pt.state_in.as_ref().expect("unrolled phase keeps its input");
            gp.gamma = g_state
                .iter()
                .zip(pt.x_tilde.iter().zip(state_in.iter()))
                .map(|(g, (t, s))| g * (t - s))
                .sum();
            &g_state * (1.0 + p.gamma) + &consistency
        };

        let g_decoded = inverse_adjoint_batch(g_tilde.view(), map);
        let g_embedded = p
            .decoder
            .backward(&pt.decoder, &g_decoded, &mut gp.decoder, true)
            .expect("input gradient requested");
        let g_code = extract_batch(g_embedded.view(), map);
        let g_observed = p.encoder.backward(&pt.encoder, &g_code, &mut gp.encoder, k > 0);
        if k == 0 {
            break;
        }

        let g_lifted = embed_batch(g_observed.expect("input gradient requested").view(), map);
        let g_stepped = lift_adjoint_batch(g_lifted.view(), map);
        let res = pt.residual.as_ref().expect("unrolled phase keeps its residual");
        gp.beta = dot(&g_stepped, res);
        // d(stepped)/d(state) = 1 − β·keep, elementwise per row
        let mut g_prev = &g_state * (-p.gamma) - &consistency;
        for (i, (mut row, srow)) in g_prev
            .rows_mut()
            .into_iter()
            .zip(g_stepped.rows())
            .enumerate()
        {
            let f = 1.0 - p.beta * keep[i];
            row.zip_mut_with(&srow, |a, &b| *a += f * b);
        }
        g_state = g_prev;
    }
    grads
}

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn with_shapes(lens: &[usize]) -> Self {
        Self {
            m: lens.iter().map(|&n| vec![0.0; n]).collect(),
            v: lens.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn new(params: &NetParams) -> Self {
        let lens: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
        Self::with_shapes(&lens)
    }

    /// One update of `params` in place.
    pub fn update(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

pub fn adam_step(params: &mut NetParams, grads: &GradientSet, state: &mut AdamState, lr: f64) {
    state.update(params.tensors_mut(), grads.tensors(), lr);
}

/// Stacked inputs and labels, one sample per column.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainData {
    pub inputs: Array2<f64>,
    pub labels: Array2<f64>,
}

impl TrainData {
    pub fn from_samples(samples: &[Sample], m: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::config("dataset is empty"));
        }
        let inputs = stack_batch(&samples.iter().map(|s| &s.input).collect::<Vec<_>>(), m)?;
        let labels = stack_batch(&samples.iter().map(|s| &s.label).collect::<Vec<_>>(), m)?;
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub loss_total: f64,
    pub loss1: f64,
    pub loss2: f64,
    /// Not part of `history.csv`; kept for run manifests.
    pub wall_seconds: f64,
}

pub const HISTORY_HEADER: &str = "run_id,epoch,lr,loss_total,loss1,loss2";

pub fn history_csv(run_id: &str, history: &[EpochRecord]) -> String {
    let mut out = format!("{HISTORY_HEADER}\n");
    for r in history {
        let _ = writeln!(out, "{run_id},{},{},{},{},{}", r.epoch, r.lr, r.loss_total, r.loss1, r.loss2);
    }
    out
}

#[derive(Default)]
pub struct TrainOptions<'a> {
    /// Checkpoint, optimizer state and `history.csv` are written here after
    /// every epoch.
    pub out_dir: Option<&'a Path>,
    /// Continue from the state in `out_dir` if one exists.
    pub resume: bool,
    pub run_id: &'a str,
    pub on_epoch: Option<&'a dyn Fn(&EpochRecord)>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: NetParams,
    pub history: Vec<EpochRecord>,
}

pub const CHECKPOINT_FILE: &str = "checkpoint.ihtn";
pub const STATE_FILE: &str = "train_state.bin";
pub const DIAGNOSTIC_FILE: &str = "diagnostic.ihtn";

#[derive(Serialize, Deserialize)]
struct StateHeader {
    epoch: usize,
    step: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    history: Vec<EpochRecord>,
}

fn save_state(dir: &Path, epoch: usize, adam: &AdamState, history: &[EpochRecord]) -> Result<()> {
    let header = StateHeader {
        epoch,
        step: adam.step,
        beta1: adam.beta1,
        beta2: adam.beta2,
        eps: adam.eps,
        history: history.to_vec(),
    };
    let text = toml::to_string(&header).expect("state header serializes");
    let floats = adam.m.iter().chain(adam.v.iter()).flatten().copied().collect::<Vec<_>>();
    write_atomic(&dir.join(STATE_FILE), &write_container(STATE_MAGIC, &text, floats))
}

fn load_state(dir: &Path, params: &NetParams) -> Result<(usize, AdamState, Vec<EpochRecord>)> {
    let path = dir.join(STATE_FILE);
    let (text, floats) = read_container(STATE_MAGIC, &fs::read(&path)?, &path)?;
    let h: StateHeader = toml::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
    let mut adam = AdamState::new(params);
    let total: usize = adam.m.iter().map(|t| t.len()).sum();
    if floats.len() != 2 * total {
        return Err(Error::format(&path, "optimizer state does not match the network"));
    }
    let mut rest = floats.as_slice();
    for t in adam.m.iter_mut().chain(adam.v.iter_mut()) {
        let (head, tail) = rest.split_at(t.len());
        t.copy_from_slice(head);
        rest = tail;
    }
    adam.step = h.step;
    adam.beta1 = h.beta1;
    adam.beta2 = h.beta2;
    adam.eps = h.eps;
    Ok((h.epoch, adam, h.history))
}

/// Number of epochs recorded in the training state of `dir`.
pub fn completed_epochs(dir: &Path) -> Result<usize> {
    let path = dir.join(STATE_FILE);
    let (text, _) = read_container(STATE_MAGIC, &fs::read(&path)?, &path)?;
    let h: StateHeader = toml::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
    Ok(h.epoch)
}

/// Mini-batch Adam training. Epoch `e` shuffles with the ChaCha20 stream
/// `(seed, e)`, so a resumed run replays the uninterrupted one exactly.
pub fn train(data: &TrainData, init: NetParams, cfg: &TrainConfig, opts: TrainOptions<'_>) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::config("dataset is empty"));
    }
    init.validate()?;
    let map = init.index_map();
    if data.inputs.nrows() != 2 * map.m() || data.labels.dim() != data.inputs.dim() {
        return Err(Error::Shape {
            expected: 2 * map.m(),
            got: data.inputs.nrows(),
        });
    }

    let mut params = init;
    let mut adam = AdamState::new(&params);
    let mut history = Vec::new();
    let mut start = 1;
    if let (true, Some(dir)) = (opts.resume, opts.out_dir) {
        if dir.join(STATE_FILE).exists() {
            let saved = checkpoint::load(&dir.join(CHECKPOINT_FILE))?;
            if saved.config != params.config || saved.k_phases() != params.k_phases() {
                return Err(Error::config("checkpoint does not match the requested network"));
            }
            let (epoch, state, hist) = load_state(dir, &saved)?;
            params = saved;
            adam = state;
            history = hist;
            start = epoch + 1;
        }
    }

    let n = data.len();
    for epoch in start..=cfg.epochs {
        let clock = Instant::now();
        let lr = cfg.learning_rate(epoch);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut sample_rng(cfg.seed, epoch as u64));
        let (mut s_total, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for idx in order.chunks(cfg.batch_size) {
            let x = data.inputs.select(Axis(1), idx);
            let y = data.labels.select(Axis(1), idx);
            let trace = forward_batch(x.view(), &params, &map);
            let l = loss(&trace, y.view(), cfg.alpha);
            if !l.total.is_finite() {
                if let Some(dir) = opts.out_dir {
                    checkpoint::save(&dir.join(DIAGNOSTIC_FILE), &params)?;
                }
                return Err(Error::Numeric(format!("non-finite loss in epoch {epoch}")));
            }
            let w = idx.len() as f64;
            s_total += w * l.total;
            s1 += w * l.loss1;
            s2 += w * l.loss2;
            let grads = backward(&trace, y.view(), &params, cfg.alpha, &map);
            adam_step(&mut params, &grads, &mut adam, lr);
        }
        let record = EpochRecord {
            epoch,
            lr,
            loss_total: s_total / n as f64,
            loss1: s1 / n as f64,
            loss2: s2 / n as f64,
            wall_seconds: clock.elapsed().as_secs_f64(),
        };
        if let Some(cb) = opts.on_epoch {
            cb(&record);
        }
        history.push(record);
        if let Some(dir) = opts.out_dir {
            checkpoint::save(&dir.join(CHECKPOINT_FILE), &params)?;
            save_state(dir, epoch, &adam, &history)?;
            write_atomic(&dir.join("history.csv"), history_csv(opts.run_id, &history).as_bytes())?;
        }
    }
    Ok(TrainOutcome { params, history })
}

/// Mean `loss1` of `params` over a dataset, evaluated in fixed-size chunks.
pub fn evaluate_loss1(params: &NetParams, data: &TrainData) -> f64 {
    let map = params.index_map();
    let n = data.len();
    let mut acc = 0.0;
    let mut start = 0;
    while start < n {
        let end = (start + 256).min(n);
        let x = data.inputs.slice(ndarray::s![.., start..end]);
        let y = data.labels.slice(ndarray::s![.., start..end]);
        let trace = forward_batch(x, params, &map);
        acc += sq_dist(trace.output(), y);
        start = end;
    }
    acc / (n * data.inputs.nrows()) as f64
}
