//! Config-driven experiments: dataset generation, training, phase and SNR
//! sweeps, beamforming spectra and DOA error tables.
//!
//! Every command resolves the config (filling derived seeds and the SLA
//! geometry), writes CSVs whose rows start with the run id, and records a
//! JSON manifest under `<out>/manifests/`. Wall-clock fields appear only in
//! manifests, so re-running a config reproduces every CSV byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::array::{generate_dataset, generate_sample, random_sla, ArrayConfig, DatasetSpec, Sample, Snapshot};
use crate::checkpoint::{self, content_hash, write_atomic};
use crate::dataset;
use crate::doa::{beamform, doa_error, find_peaks, spectrum_rows, SPECTRUM_HEADER};
use crate::error::{Error, Result};
use crate::hankel::HankelIndexMap;
use crate::net::{reconstruct_all, NetParams, ResidualMode};
use crate::solvers::{solve, Algorithm, SolverConfig};
use crate::train::{self, EpochRecord, TrainConfig, TrainData, TrainOptions, CHECKPOINT_FILE, STATE_FILE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArraySection {
    pub m: usize,
    pub spacing_ratio: f64,
    /// Number of observed elements when `omega` is not given; defaults to
    /// `m − 3`.
    pub sla_size: Option<usize>,
    pub sla_seed: Option<u64>,
    /// Explicit 1-based observation set.
    pub omega: Option<Vec<usize>>,
}

impl Default for ArraySection {
    fn default() -> Self {
        Self {
            m: 21,
            spacing_ratio: 0.5,
            sla_size: None,
            sla_seed: None,
            omega: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub train_count: usize,
    pub p: usize,
    pub snr_range_db: [f64; 2],
    pub min_separation_deg: f64,
    pub seed: Option<u64>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            train_count: 20_000,
            p: 2,
            snr_range_db: [10.0, 30.0],
            min_separation_deg: 0.0,
            seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetSection {
    pub k_phases: usize,
    pub residual_mode: ResidualMode,
    pub init_seed: Option<u64>,
}

impl Default for NetSection {
    fn default() -> Self {
        Self {
            k_phases: crate::net::DEFAULT_PHASES,
            residual_mode: ResidualMode::Masked,
            init_seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub lr_decay: f64,
    pub decay_every: usize,
    pub alpha: f64,
    /// Shuffle seed.
    pub seed: Option<u64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr0: t.lr0,
            lr_decay: t.lr_decay,
            decay_every: t.decay_every,
            alpha: t.alpha,
            seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Held-out samples per SNR point.
    pub test_count: usize,
    pub seed: Option<u64>,
    pub snr_list_db: Vec<f64>,
    pub phase_list: Vec<usize>,
    pub phase_snr_db: f64,
    pub grid_step_deg: f64,
    pub spectrum_snr_db: f64,
    pub spectrum_index: u64,
    /// Samples per network forward pass.
    pub chunk: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            test_count: 500,
            seed: None,
            snr_list_db: vec![10.0, 20.0, 30.0],
            phase_list: vec![1, 2, 4, 8],
            phase_snr_db: 20.0,
            grid_step_deg: crate::doa::DEFAULT_GRID_STEP_DEG,
            spectrum_snr_db: 30.0,
            spectrum_index: 0,
            chunk: 256,
        }
    }
}

/// The full experiment config. Missing sections and fields take defaults;
/// unset seeds derive from `seed`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub array: ArraySection,
    pub data: DataSection,
    pub net: NetSection,
    pub train: TrainSection,
    pub solver: SolverConfig,
    pub eval: EvalSection,
}

/// Deterministic child seed: the first 8 bytes of `sha256(seed ‖ label)`.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("invalid config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Fills every derived field and validates the result. Idempotent.
    pub fn resolve(mut self) -> Result<(Self, ArrayConfig)> {
        let seed = self.seed;
        let a = &mut self.array;
        a.sla_seed.get_or_insert(derive_seed(seed, "sla"));
        let array = match &a.omega {
            Some(omega) => ArrayConfig::new(a.m, a.spacing_ratio, omega.clone())?,
            None => random_sla(a.m, a.sla_size.unwrap_or(a.m.saturating_sub(3).max(2)), a.spacing_ratio, a.sla_seed.unwrap())?,
        };
        if a.sla_size.is_some_and(|s| s != array.omega().len()) {
            return Err(Error::config("array.sla_size disagrees with array.omega"));
        }
        a.sla_size = Some(array.omega().len());
        a.omega = Some(array.omega().to_vec());
        self.data.seed.get_or_insert(derive_seed(seed, "train-data"));
        self.net.init_seed.get_or_insert(derive_seed(seed, "init"));
        self.train.seed.get_or_insert(derive_seed(seed, "shuffle"));
        self.eval.seed.get_or_insert(derive_seed(seed, "eval"));
        self.validate()?;
        Ok((self, array))
    }

    fn validate(&self) -> Result<()> {
        self.train_config(self.net.k_phases).validate()?;
        self.solver.validate()?;
        let e = &self.eval;
        if self.data.train_count == 0 || self.data.p == 0 {
            return Err(Error::config("data.train_count and data.p must be at least 1"));
        }
        if e.test_count == 0 || e.chunk == 0 {
            return Err(Error::config("eval.test_count and eval.chunk must be at least 1"));
        }
        if e.phase_list.is_empty() {
            return Err(Error::config("eval.phase_list is empty"));
        }
        if e.snr_list_db.is_empty() || e.snr_list_db.iter().any(|s| s.is_nan()) {
            return Err(Error::config("eval.snr_list_db must be a non-empty list of numbers"));
        }
        if !(e.grid_step_deg > 0.0) {
            return Err(Error::config("eval.grid_step_deg must be positive"));
        }
        Ok(())
    }

    pub fn train_config(&self, k_phases: usize) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr0: t.lr0,
            lr_decay: t.lr_decay,
            decay_every: t.decay_every,
            alpha: t.alpha,
            seed: t.seed.unwrap_or(0),
            k_phases,
        }
    }
}

/// A resolved config bound to an output directory.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub array: ArrayConfig,
    pub out: PathBuf,
    /// Progress messages go to stderr when set.
    pub verbose: bool,
}

/// What a command produced.
#[derive(Clone, Debug, PartialEq)]
pub struct CommandReport {
    pub command: &'static str,
    pub run_id: String,
    pub outputs: Vec<PathBuf>,
    pub manifest: PathBuf,
}

pub const MANIFEST_DIR: &str = "manifests";
pub const DATASET_DIR: &str = "dataset";
pub const TRAIN_DIR: &str = "train";
pub const PHASES_DIR: &str = "phases";
const RUN_CONFIG_FILE: &str = "run_config.toml";

/// Reconstruction methods compared in the sweeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// The noisy full-array snapshot itself (reference, no completion).
    Full,
    IhtNet,
    Fiht,
    Iht,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::IhtNet => "ihtnet",
            Self::Fiht => "fiht",
            Self::Iht => "iht",
        }
    }
}

fn fmt_snr(snr: f64) -> String {
    if snr.is_infinite() {
        "inf".into()
    } else {
        format!("{snr}")
    }
}

fn sq_err(a: &Snapshot, b: &Snapshot) -> f64 {
    a.values.iter().zip(&b.values).map(|(x, y)| (x - y).norm_sqr()).sum()
}

/// Mean of `‖x̂ − x‖² / 2m` over samples, summed in sample order.
pub fn recon_loss(estimates: &[Snapshot], labels: &[&Snapshot]) -> f64 {
    let m = labels[0].len() as f64;
    let total: f64 = estimates.iter().zip(labels).map(|(e, l)| sq_err(e, l) / (2.0 * m)).sum();
    total / labels.len() as f64
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl Experiment {
    pub fn new(config: ExperimentConfig, out: impl Into<PathBuf>) -> Result<Self> {
        let (config, array) = config.resolve()?;
        Ok(Self {
            config,
            array,
            out: out.into(),
            verbose: false,
        })
    }

    pub fn from_file(path: &Path, seed: Option<u64>, out: impl Into<PathBuf>) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = ExperimentConfig::from_toml(&text)?;
        if let Some(s) = seed {
            cfg.seed = s;
        }
        Self::new(cfg, out)
    }

    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }

    pub fn config_hash(&self) -> String {
        content_hash(self.config.to_toml().as_bytes())
    }

    /// `sha256(command ‖ resolved config)`, first 16 hex digits.
    pub fn run_id(&self, command: &str) -> String {
        let text = format!("{command}\n{}", self.config.to_toml());
        content_hash(text.as_bytes())[..16].to_string()
    }

    pub fn map(&self) -> HankelIndexMap {
        HankelIndexMap::new(&self.array)
    }

    pub fn train_spec(&self) -> DatasetSpec {
        let d = &self.config.data;
        DatasetSpec {
            count: d.train_count,
            p: d.p,
            snr_range_db: d.snr_range_db,
            seed: d.seed.unwrap_or(0),
            min_separation_deg: d.min_separation_deg,
        }
    }

    /// Held-out spec at a single SNR.
    pub fn test_spec(&self, snr_db: f64) -> DatasetSpec {
        DatasetSpec {
            count: self.config.eval.test_count,
            p: self.config.data.p,
            snr_range_db: [snr_db; 2],
            seed: derive_seed(self.config.eval.seed.unwrap_or(0), &format!("snr={}", fmt_snr(snr_db))),
            min_separation_deg: self.config.data.min_separation_deg,
        }
    }

    pub fn test_set(&self, snr_db: f64) -> Result<Vec<Sample>> {
        generate_dataset(&self.array, &self.test_spec(snr_db))
    }

    fn write_manifest(
        &self,
        command: &'static str,
        started: SystemTime,
        clock: Instant,
        outputs: &[PathBuf],
        extra: serde_json::Value,
    ) -> Result<CommandReport> {
        let run_id = self.run_id(command);
        let mut files = Vec::new();
        for p in outputs {
            let hash = if p.is_file() { Some(content_hash(&fs::read(p)?)) } else { None };
            files.push(serde_json::json!({ "path": p, "sha256": hash }));
        }
        let manifest = serde_json::json!({
            "run_id": run_id,
            "command": command,
            "config_hash": self.config_hash(),
            "config": serde_json::to_value(&self.config).expect("config serializes"),
            "omega": self.array.omega(),
            "outputs": files,
            "started_unix": started.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0),
            "wall_seconds": clock.elapsed().as_secs_f64(),
            "version": env!("CARGO_PKG_VERSION"),
            "details": extra,
        });
        let path = self.out.join(MANIFEST_DIR).join(format!("{command}.json"));
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        write_atomic(&path, text.as_bytes())?;
        Ok(CommandReport {
            command,
            run_id,
            outputs: outputs.to_vec(),
            manifest: path,
        })
    }

    /// Writes the training set to `<out>/dataset`.
    pub fn cmd_generate(&self) -> Result<CommandReport> {
        let (started, clock) = (SystemTime::now(), Instant::now());
        let spec = self.train_spec();
        self.log(format!("generating {} samples", spec.count));
        let samples = generate_dataset(&self.array, &spec)?;
        let dir = self.out.join(DATASET_DIR);
        let m = dataset::save(&dir, &self.array, &spec, &samples)?;
        let outputs = vec![dir.join(dataset::MANIFEST_FILE), dir.join(dataset::DATA_FILE)];
        self.write_manifest(
            "generate",
            started,
            clock,
            &outputs,
            serde_json::json!({ "data_sha256": m.data_sha256 }),
        )
    }

    /// The training set: loaded from `<out>/dataset` when it matches the
    /// config, generated in memory otherwise.
    pub fn training_data(&self) -> Result<TrainData> {
        let dir = self.out.join(DATASET_DIR);
        let spec = self.train_spec();
        if dir.join(dataset::MANIFEST_FILE).exists() {
            let ds = dataset::load(&dir)?;
            if ds.manifest.array == self.array && ds.manifest.spec == spec {
                self.log(format!("using dataset in {}", dir.display()));
                return Ok(ds.train_data());
            }
        }
        TrainData::from_samples(&generate_dataset(&self.array, &spec)?, self.array.m())
    }

    fn run_config_text(&self, k_phases: usize) -> String {
        let c = &self.config;
        #[derive(Serialize)]
        struct RunKey<'a> {
            k_phases: usize,
            array: &'a ArraySection,
            data: &'a DataSection,
            net: &'a NetSection,
            train: &'a TrainSection,
        }
        let key = RunKey {
            k_phases,
            array: &c.array,
            data: &c.data,
            net: &c.net,
            train: &c.train,
        };
        toml::to_string(&key).expect("run key serializes")
    }

    /// Trains (or resumes) a `k_phases` network in `dir`. A directory that
    /// holds a run for a different config is refused.
    pub fn train_network(&self, k_phases: usize, dir: &Path) -> Result<(NetParams, Vec<EpochRecord>)> {
        let key = self.run_config_text(k_phases);
        let key_path = dir.join(RUN_CONFIG_FILE);
        if key_path.exists() {
            if fs::read_to_string(&key_path)? != key {
                return Err(Error::config(format!(
                    "{} holds a run for a different config; use another --out",
                    dir.display()
                )));
            }
        } else {
            for stale in [CHECKPOINT_FILE, STATE_FILE] {
                if dir.join(stale).exists() {
                    return Err(Error::config(format!(
                        "{} holds an unidentified run; use another --out",
                        dir.display()
                    )));
                }
            }
            write_atomic(&key_path, key.as_bytes())?;
        }
        let tc = self.config.train_config(k_phases);
        let init = NetParams::init(
            &self.array,
            k_phases,
            self.config.net.residual_mode,
            self.config.net.init_seed.unwrap_or(0),
        );
        let done = dir.join(STATE_FILE).exists()
            && train::completed_epochs(dir).is_ok_and(|e| e >= tc.epochs);
        let data = if done {
            // resume returns immediately; a one-sample set passes validation
            TrainData {
                inputs: ndarray::Array2::zeros((2 * self.array.m(), 1)),
                labels: ndarray::Array2::zeros((2 * self.array.m(), 1)),
            }
        } else {
            self.training_data()?
        };
        let run_id = self.run_id(&format!("train-k{k_phases}"));
        let log = |r: &EpochRecord| {
            self.log(format!(
                "K={k_phases} epoch {:>3}  lr {:.3e}  loss1 {:.6e}  loss2 {:.6e}  ({:.1}s)",
                r.epoch, r.lr, r.loss1, r.loss2, r.wall_seconds
            ))
        };
        let outcome = train::train(
            &data,
            init,
            &tc,
            TrainOptions {
                out_dir: Some(dir),
                resume: true,
                run_id: &run_id,
                on_epoch: Some(&log),
            },
        )?;
        Ok((outcome.params, outcome.history))
    }

    /// Trains the configured network into `<out>/train`.
    pub fn cmd_train(&self) -> Result<CommandReport> {
        let (started, clock) = (SystemTime::now(), Instant::now());
        let dir = self.out.join(TRAIN_DIR);
        let k = self.config.net.k_phases;
        let (params, history) = self.train_network(k, &dir)?;
        let outputs = vec![dir.join(CHECKPOINT_FILE), dir.join("history.csv")];
        self.write_manifest(
            "train",
            started,
            clock,
            &outputs,
            serde_json::json!({
                "k_phases": k,
                "history_run_id": self.run_id(&format!("train-k{k}")),
                "parameter_count": params.parameter_count(),
                "epoch_wall_seconds": history.iter().map(|r| r.wall_seconds).collect::<Vec<_>>(),
            }),
        )
    }

    /// The trained network from `<out>/train`, training it first if absent.
    pub fn trained_network(&self) -> Result<NetParams> {
        let dir = self.out.join(TRAIN_DIR);
        Ok(self.train_network(self.config.net.k_phases, &dir)?.0)
    }

    /// Test loss at `eval.phase_snr_db` for each `K` in `k_list`. Networks
    /// train in `<out>/phases/k<K>`, except the configured `K`, which shares
    /// `<out>/train`.
    pub fn cmd_sweep_phases(&self, k_list: &[usize]) -> Result<CommandReport> {
        if k_list.is_empty() {
            return Err(Error::config("phase list is empty"));
        }
        let (started, clock) = (SystemTime::now(), Instant::now());
        let run_id = self.run_id("sweep-phases");
        let snr = self.config.eval.phase_snr_db;
        let test = TrainData::from_samples(&self.test_set(snr)?, self.array.m())?;
        let mut csv = String::from("run_id,k,test_loss,n_samples\n");
        for &k in k_list {
            let dir = if k == self.config.net.k_phases {
                self.out.join(TRAIN_DIR)
            } else {
                self.out.join(PHASES_DIR).join(format!("k{k}"))
            };
            let (net, _) = self.train_network(k, &dir)?;
            let loss = train::evaluate_loss1(&net, &test);
            self.log(format!("K={k} test loss {loss:.6e}"));
            let _ = writeln!(csv, "{run_id},{k},{loss},{}", test.len());
        }
        let path = self.out.join("sweep_phases.csv");
        write_atomic(&path, csv.as_bytes())?;
        self.write_manifest(
            "sweep-phases",
            started,
            clock,
            &[path],
            serde_json::json!({ "k_list": k_list, "snr_db": snr }),
        )
    }

    /// Completes every input of `samples` with `method`.
    pub fn reconstruct(&self, samples: &[Sample], method: Method, net: Option<&NetParams>) -> Result<Vec<Snapshot>> {
        let map = self.map();
        match method {
            Method::Full => Ok(samples.iter().map(|s| s.noisy.clone()).collect()),
            Method::IhtNet => {
                let net = net.ok_or_else(|| Error::config("IHT-Net reconstruction needs a checkpoint"))?;
                let inputs: Vec<&Snapshot> = samples.iter().map(|s| &s.input).collect();
                reconstruct_all(&inputs, net, &map, self.config.eval.chunk)
            }
            Method::Fiht | Method::Iht => {
                let algo = if method == Method::Fiht { Algorithm::Fiht } else { Algorithm::Iht };
                samples
                    .par_iter()
                    .map(|s| solve(algo, &s.input, &self.config.solver, &map).map(|t| t.estimate))
                    .collect()
            }
        }
    }

    /// Mean reconstruction loss per SNR for IHT-Net, FIHT and IHT.
    pub fn cmd_sweep_snr(&self, snr_list: &[f64]) -> Result<CommandReport> {
        if snr_list.is_empty() {
            return Err(Error::config("SNR list is empty"));
        }
        let (started, clock) = (SystemTime::now(), Instant::now());
        let net = self.trained_network()?;
        let run_id = self.run_id("sweep-snr");
        let mut csv = String::from("run_id,snr_db,method,recon_loss,n_samples\n");
        for &snr in snr_list {
            let samples = self.test_set(snr)?;
            let labels: Vec<&Snapshot> = samples.iter().map(|s| &s.label).collect();
            for method in [Method::IhtNet, Method::Fiht, Method::Iht] {
                let est = self.reconstruct(&samples, method, Some(&net))?;
                let loss = recon_loss(&est, &labels);
                self.log(format!("SNR {} {:>6} loss {loss:.6e}", fmt_snr(snr), method.name()));
                let _ = writeln!(csv, "{run_id},{},{},{loss},{}", fmt_snr(snr), method.name(), samples.len());
            }
        }
        let path = self.out.join("sweep_snr.csv");
        write_atomic(&path, csv.as_bytes())?;
        self.write_manifest(
            "sweep-snr",
            started,
            clock,
            &[path],
            serde_json::json!({
                "snr_list_db": snr_list.iter().map(|&s| fmt_snr(s)).collect::<Vec<_>>(),
                "checkpoint_sha256": self.checkpoint_hash()?,
            }),
        )
    }

    fn checkpoint_hash(&self) -> Result<String> {
        Ok(content_hash(&fs::read(self.out.join(TRAIN_DIR).join(CHECKPOINT_FILE))?))
    }

    /// Clean, noisy, FIHT-completed and IHT-Net-completed spectra of one
    /// sample at `eval.spectrum_snr_db`.
    pub fn cmd_spectrum(&self) -> Result<CommandReport> {
        let (started, clock) = (SystemTime::now(), Instant::now());
        let net = self.trained_network()?;
        let e = &self.config.eval;
        let spec = DatasetSpec {
            count: 1,
            seed: derive_seed(e.seed.unwrap_or(0), "spectrum"),
            ..self.test_spec(e.spectrum_snr_db)
        };
        let sample = generate_sample(&self.array, &spec, e.spectrum_index)?;
        let one = std::slice::from_ref(&sample);
        let curves = [
            ("clean", sample.label.clone()),
            ("noisy", sample.noisy.clone()),
            ("fiht", self.reconstruct(one, Method::Fiht, None)?.remove(0)),
            ("ihtnet", self.reconstruct(one, Method::IhtNet, Some(&net))?.remove(0)),
        ];
        let run_id = self.run_id("spectrum");
        let mut csv = format!("{SPECTRUM_HEADER}\n");
        let mut peaks = serde_json::Map::new();
        for (name, x) in &curves {
            let s = beamform(x, &self.array, e.grid_step_deg)?;
            let p = find_peaks(&s, self.config.data.p)?;
            peaks.insert(name.to_string(), serde_json::json!({ "angles_deg": p.angles_deg, "fallback": p.fallback }));
            spectrum_rows(&mut csv, &run_id, name, &s);
        }
        let path = self.out.join("spectrum.csv");
        write_atomic(&path, csv.as_bytes())?;
        self.write_manifest(
            "spectrum",
            started,
            clock,
            &[path],
            serde_json::json!({
                "snr_db": fmt_snr(e.spectrum_snr_db),
                "sample_index": e.spectrum_index,
                "truth_deg": sample.sources.angles_deg,
                "peaks": peaks,
                "checkpoint_sha256": self.checkpoint_hash()?,
            }),
        )
    }

    /// Per-sample matched DOA errors of one method on one sample set.
    pub fn doa_errors(&self, samples: &[Sample], estimates: &[Snapshot]) -> Result<(Vec<f64>, Vec<f64>, usize)> {
        let step = self.config.eval.grid_step_deg;
        let p = self.config.data.p;
        let per: Vec<(f64, Vec<f64>, bool)> = samples
            .par_iter()
            .zip(estimates)
            .map(|(s, x)| {
                let peaks = find_peaks(&beamform(x, &self.array, step)?, p)?;
                let r = doa_error(&peaks.angles_deg, &s.sources.angles_deg)?;
                Ok((r.mse_deg2, r.matched_errors_deg, peaks.fallback))
            })
            .collect::<Result<_>>()?;
        let fallbacks = per.iter().filter(|r| r.2).count();
        let mse = per.iter().map(|r| r.0).collect();
        let abs = per.into_iter().flat_map(|r| r.1).collect();
        Ok((mse, abs, fallbacks))
    }

    /// Beamforming DOA error per SNR for the full noisy array, IHT-Net and
    /// FIHT completions.
    pub fn cmd_doa(&self, snr_list: &[f64]) -> Result<CommandReport> {
        if snr_list.is_empty() {
            return Err(Error::config("SNR list is empty"));
        }
        let (started, clock) = (SystemTime::now(), Instant::now());
        let net = self.trained_network()?;
        let run_id = self.run_id("doa");
        let mut csv = String::from("run_id,snr_db,method,mse_deg2,median_abs_err_deg,n_samples,fallbacks\n");
        for &snr in snr_list {
            let samples = self.test_set(snr)?;
            for method in [Method::Full, Method::IhtNet, Method::Fiht] {
                let est = self.reconstruct(&samples, method, Some(&net))?;
                let (mse, mut abs, fallbacks) = self.doa_errors(&samples, &est)?;
                let mean = mse.iter().sum::<f64>() / mse.len() as f64;
                let med = median(&mut abs);
                self.log(format!("SNR {} {:>6} DOA MSE {mean:.4e}", fmt_snr(snr), method.name()));
                let _ = writeln!(
                    csv,
                    "{run_id},{},{},{mean},{med},{},{fallbacks}",
                    fmt_snr(snr),
                    method.name(),
                    samples.len()
                );
            }
        }
        let path = self.out.join("doa_mse.csv");
        write_atomic(&path, csv.as_bytes())?;
        self.write_manifest(
            "doa",
            started,
            clock,
            &[path],
            serde_json::json!({
                "snr_list_db": snr_list.iter().map(|&s| fmt_snr(s)).collect::<Vec<_>>(),
                "checkpoint_sha256": self.checkpoint_hash()?,
            }),
        )
    }

    /// Runs one solver on test sample `index` at `snr_db` and writes its
    /// iteration trace and estimate.
    pub fn cmd_solve(&self, algo: Algorithm, solver: &SolverConfig, index: u64, snr_db: f64) -> Result<CommandReport> {
        let (started, clock) = (SystemTime::now(), Instant::now());
        let sample = generate_sample(&self.array, &self.test_spec(snr_db), index)?;
        let trace = solve(algo, &sample.input, solver, &self.map())?;
        let run_id = self.run_id("solve");
        let mut csv = String::from("run_id,iteration,residual,change\n");
        for (i, (r, c)) in trace.residuals.iter().zip(&trace.changes).enumerate() {
            let _ = writeln!(csv, "{run_id},{},{r:e},{c:e}", i + 1);
        }
        let mut est = String::from("run_id,element,re,im,label_re,label_im\n");
        for (k, (x, l)) in trace.estimate.values.iter().zip(&sample.label.values).enumerate() {
            let _ = writeln!(est, "{run_id},{},{},{},{},{}", k + 1, x.re, x.im, l.re, l.im);
        }
        let (tp, ep) = (self.out.join("solve_trace.csv"), self.out.join("solve_estimate.csv"));
        write_atomic(&tp, csv.as_bytes())?;
        write_atomic(&ep, est.as_bytes())?;
        let rel = (sq_err(&trace.estimate, &sample.label) / sample.label.values.iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt();
        self.log(format!(
            "{algo:?}: {} iterations, converged {}, relative error {rel:.3e}",
            trace.iterations, trace.converged
        ));
        self.write_manifest(
            "solve",
            started,
            clock,
            &[tp, ep],
            serde_json::json!({
                "algorithm": algo,
                "solver": solver,
                "sample_index": index,
                "snr_db": fmt_snr(snr_db),
                "iterations": trace.iterations,
                "converged": trace.converged,
                "relative_error": rel,
            }),
        )
    }

    /// generate → train → sweep-phases → sweep-snr → spectrum → doa.
    pub fn cmd_all(&self) -> Result<Vec<CommandReport>> {
        let e = &self.config.eval;
        Ok(vec![
            self.cmd_generate()?,
            self.cmd_train()?,
            self.cmd_sweep_phases(&e.phase_list)?,
            self.cmd_sweep_snr(&e.snr_list_db)?,
            self.cmd_spectrum()?,
            self.cmd_doa(&e.snr_list_db)?,
        ])
    }
}

/// Loads a network checkpoint written by [`Experiment::cmd_train`].
pub fn load_checkpoint(out: &Path) -> Result<NetParams> {
    checkpoint::load(&out.join(TRAIN_DIR).join(CHECKPOINT_FILE))
}
