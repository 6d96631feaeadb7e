mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rmdereverb::Error;

use crate::config::RunConfig;

/// Model-based speech dereverberation tools.
#[derive(Debug, Parser)]
#[command(name = "rmdereverb", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Global seed; every random draw derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// key=value config file; repeat to layer files.
    #[arg(long, global = true)]
    config: Vec<PathBuf>,
    /// Override one config key, as key=value.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true, value_name = "B|full")]
    band_radius: Option<String>,
    #[arg(long, global = true, value_name = "single|average|best")]
    variant: Option<String>,
    #[arg(long, global = true)]
    draws: Option<usize>,
    #[arg(long, global = true, value_name = "gaussian|half-normal")]
    noise_mode: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a Polack RIR (float32 WAV, or text for a .txt path).
    SampleRir {
        #[arg(long, allow_negative_numbers = true)]
        rt60: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        drr: Option<f64>,
        /// Length in samples (default: 60 dB of tail decay).
        #[arg(long)]
        len: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate RT60 and DRR from a measured RIR.
    AnalyzeRir {
        input: PathBuf,
        /// Direct-path delay in samples.
        #[arg(long)]
        n_d: Option<usize>,
    },
    /// Fit the raw-decay to RT60 calibration map.
    Calibrate {
        /// Lines of `path rt60`, paths relative to the manifest.
        #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
        manifest: Option<PathBuf>,
        /// Generate this many speech-shaped-noise training pairs instead.
        #[arg(long)]
        synthetic: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Blind RT60 and DRR estimates for reverberant recordings.
    AnalyzeBlind {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
    /// Convolve a dry signal with an RIR.
    Reverberate {
        input: PathBuf,
        /// RIR file; without it one is sampled from rt60/drr_db.
        #[arg(long)]
        rir: Option<PathBuf>,
        #[arg(long, allow_negative_numbers = true)]
        rt60: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        drr: Option<f64>,
        #[arg(long, value_enum, default_value_t = ConvPath::Time)]
        path: ConvPath,
        #[arg(long)]
        out: PathBuf,
    },
    /// Training-less dereverberation.
    Dereverb {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Output file (single input only).
        #[arg(long, conflicts_with = "out_dir")]
        out: Option<PathBuf>,
        #[arg(long, required_unless_present = "out")]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        calibration: Option<PathBuf>,
        /// Solve with this exact RIR instead of a sampled one.
        #[arg(long, conflicts_with_all = ["rt60", "drr"])]
        oracle_rir: Option<PathBuf>,
        /// With --drr, skip blind analysis and use these parameters.
        #[arg(long, allow_negative_numbers = true, requires = "drr")]
        rt60: Option<f64>,
        #[arg(long, allow_negative_numbers = true, requires = "rt60")]
        drr: Option<f64>,
        /// Write per-iteration loss records (single input only).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// SI-SDR and parameter errors.
    Eval {
        estimate: PathBuf,
        reference: PathBuf,
        /// key=value file with the true rt60 and drr_db.
        #[arg(long, requires = "estimated")]
        truth: Option<PathBuf>,
        /// key=value file with estimated rt60 and drr_db.
        #[arg(long, requires = "truth")]
        estimated: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Kv)]
        format: Format,
    },
    /// Accuracy of the banded STFT-domain operator against time convolution.
    Bench {
        #[arg(long, default_value_t = 4)]
        instances: usize,
        /// Signal length in samples.
        #[arg(long, default_value_t = 16_000)]
        len: usize,
        #[arg(long, default_value_t = 2000)]
        taps: usize,
        /// Add a wall-clock column (not reproducible).
        #[arg(long)]
        timing: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConvPath {
    Time,
    Stft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Kv,
    Csv,
}

/// Exit status 2 for bad inputs or configuration, 1 for failures during
/// computation.
#[derive(Debug)]
pub enum Failure {
    Validation(Error),
    Runtime(Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Validation(_) => 2,
            Self::Runtime(_) => 1,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::EmptyInput(_)
            | Error::InvalidConfig(_)
            | Error::InvalidParam(_)
            | Error::MonoRequired(_)
            | Error::UnsupportedSampleRate { .. }
            | Error::UnsupportedFormat(_)
            | Error::RirTooShort { .. }
            | Error::InsufficientCalibration(_)
            | Error::Parse(_)
            | Error::Wav(_) => Self::Validation(e),
            _ => Self::Runtime(e),
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Validation(e) | Self::Runtime(e) => e.fmt(f),
        }
    }
}

/// Marks errors from reading user-supplied files as validation failures.
pub fn input<T>(r: rmdereverb::Result<T>, what: &std::path::Path) -> Result<T, Failure> {
    r.map_err(|e| Failure::Validation(Error::InvalidParam(format!("{}: {e}", what.display()))))
}

fn run_config(g: &GlobalArgs) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::load(&g.config, &g.overrides, g.seed)?;
    let flags = [
        ("band_radius", g.band_radius.clone()),
        ("variant", g.variant.clone()),
        ("draws", g.draws.map(|d| d.to_string())),
        ("noise_mode", g.noise_mode.clone()),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v);
        }
    }
    // Surface malformed values before any work starts.
    cfg.loss()?;
    cfg.blind()?;
    cfg.solver()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<String, Failure> {
    if let Some(w) = cli.global.workers {
        if w == 0 {
            return Err(Error::InvalidParam("--workers must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| Failure::Runtime(Error::InvalidConfig(e.to_string())))?;
    }
    let mut cfg = run_config(&cli.global)?;
    match cli.command {
        Command::SampleRir { rt60, drr, len, out } => {
            set_params(&mut cfg, rt60, drr);
            commands::sample_rir(&cfg, len, &out)
        }
        Command::AnalyzeRir { input, n_d } => commands::analyze_rir(&cfg, &input, n_d),
        Command::Calibrate { manifest, synthetic, out } => {
            commands::calibrate(&cfg, manifest.as_deref(), synthetic, &out)
        }
        Command::AnalyzeBlind { inputs, calibration } => {
            commands::analyze_blind(&cfg, &inputs, calibration.as_deref())
        }
        Command::Reverberate { input, rir, rt60, drr, path, out } => {
            set_params(&mut cfg, rt60, drr);
            commands::reverberate(&cfg, &input, rir.as_deref(), path, &out)
        }
        Command::Dereverb { inputs, out, out_dir, calibration, oracle_rir, rt60, drr, trace } => {
            set_params(&mut cfg, rt60, drr);
            let target = match (out, out_dir) {
                (Some(out), _) => commands::Target::File(out),
                (None, Some(dir)) => commands::Target::Dir(dir),
                (None, None) => unreachable!("clap requires one of --out / --out-dir"),
            };
            let model = match (oracle_rir, rt60.is_some()) {
                (Some(path), _) => commands::ModelChoice::Oracle(path),
                (None, true) => commands::ModelChoice::Params,
                (None, false) => commands::ModelChoice::Blind(calibration),
            };
            commands::dereverb(&cfg, &inputs, &target, &model, trace.as_deref())
        }
        Command::Eval { estimate, reference, truth, estimated, format } => {
            commands::eval(&estimate, &reference, truth.as_deref().zip(estimated.as_deref()), format)
        }
        Command::Bench { instances, len, taps, timing } => commands::bench(&cfg, instances, len, taps, timing),
    }
}

fn set_params(cfg: &mut RunConfig, rt60: Option<f64>, drr: Option<f64>) {
    if let Some(v) = rt60 {
        cfg.set("rt60", v);
    }
    if let Some(v) = drr {
        cfg.set("drr_db", v);
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
