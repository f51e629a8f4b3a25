//! `hankel-doa`: sparse-array completion and DOA experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hankel_doa::experiments::{CommandReport, Experiment, ExperimentConfig};
use hankel_doa::solvers::Algorithm;
use hankel_doa::{Error, ResidualMode};

#[derive(Parser)]
#[command(name = "hankel-doa", version, about = "Low-rank Hankel completion of sparse-array snapshots and single-snapshot DOA")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the master seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "runs/default")]
    out: PathBuf,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Suppress progress messages.
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write the training set to <out>/dataset.
    Generate,
    /// Train the configured network into <out>/train (resumes if interrupted).
    Train,
    /// Test loss versus number of unrolled phases.
    SweepPhases {
        /// Comma-separated phase counts; defaults to eval.phase_list.
        #[arg(long, value_delimiter = ',')]
        k: Vec<usize>,
    },
    /// Reconstruction loss versus SNR for IHT-Net, FIHT and IHT.
    SweepSnr {
        /// Comma-separated SNRs in dB (`inf` for noiseless); defaults to eval.snr_list_db.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        snr: Vec<f64>,
    },
    /// Beamforming spectra of one sample: clean, noisy, FIHT and IHT-Net.
    Spectrum {
        #[arg(long)]
        index: Option<u64>,
        #[arg(long, allow_hyphen_values = true)]
        snr: Option<f64>,
    },
    /// DOA MSE versus SNR.
    Doa {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        snr: Vec<f64>,
    },
    /// Run IHT or FIHT on one test sample and export the iteration trace.
    Solve {
        #[arg(long, default_value = "fiht")]
        algo: Algorithm,
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        mode: Option<ResidualMode>,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long, default_value_t = 0)]
        index: u64,
        #[arg(long, default_value_t = f64::INFINITY, allow_hyphen_values = true)]
        snr: f64,
    },
    /// generate, train, sweep-phases, sweep-snr, spectrum and doa in order.
    All,
    /// Print the fully resolved config.
    ShowConfig,
}

fn experiment(g: &Global) -> hankel_doa::Result<Experiment> {
    let mut exp = match &g.config {
        Some(path) => Experiment::from_file(path, g.seed, &g.out)?,
        None => {
            let mut cfg = ExperimentConfig::default();
            if let Some(s) = g.seed {
                cfg.seed = s;
            }
            Experiment::new(cfg, &g.out)?
        }
    };
    exp.verbose = !g.quiet;
    Ok(exp)
}

fn or_default<T: Clone>(given: &[T], default: &[T]) -> Vec<T> {
    if given.is_empty() { default.to_vec() } else { given.to_vec() }
}

fn run(cli: &Cli) -> hankel_doa::Result<Vec<CommandReport>> {
    let mut exp = experiment(&cli.global)?;
    let eval = exp.config.eval.clone();
    let one = |r: hankel_doa::Result<CommandReport>| r.map(|r| vec![r]);
    match &cli.command {
        Command::Generate => one(exp.cmd_generate()),
        Command::Train => one(exp.cmd_train()),
        Command::SweepPhases { k } => one(exp.cmd_sweep_phases(&or_default(k, &eval.phase_list))),
        Command::SweepSnr { snr } => one(exp.cmd_sweep_snr(&or_default(snr, &eval.snr_list_db))),
        Command::Spectrum { index, snr } => {
            if let Some(i) = index {
                exp.config.eval.spectrum_index = *i;
            }
            if let Some(s) = snr {
                exp.config.eval.spectrum_snr_db = *s;
            }
            one(exp.cmd_spectrum())
        }
        Command::Doa { snr } => one(exp.cmd_doa(&or_default(snr, &eval.snr_list_db))),
        Command::Solve { algo, rank, beta, mode, max_iters, index, snr } => {
            let mut solver = exp.config.solver.clone();
            if let Some(r) = rank {
                solver.rank = *r;
            }
            if let Some(b) = beta {
                solver.step_beta = *b;
            }
            if let Some(m) = mode {
                solver.residual_mode = *m;
            }
            if let Some(n) = max_iters {
                solver.max_iters = *n;
            }
            solver.validate()?;
            one(exp.cmd_solve(*algo, &solver, *index, *snr))
        }
        Command::All => exp.cmd_all(),
        Command::ShowConfig => {
            print!("{}", exp.config.to_toml());
            Ok(vec![])
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        e if e.is_numeric() => 3,
        Error::Io(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.global.threads).build_global() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match run(&cli) {
        Ok(reports) => {
            for r in reports {
                println!("{} run {} -> {}", r.command, r.run_id, r.manifest.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
