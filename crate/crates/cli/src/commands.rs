use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use rmdereverb::blind::{
    analyze_blind as blind_estimate, calibrate_from_raw, raw_decay_estimate, Rt60Calibration,
};
use rmdereverb::dereverb::{dereverb_pipeline, trainingless_dereverb, PipelineOutcome, RirModel, SolveTrace};
use rmdereverb::kv::KvRecord;
use rmdereverb::metrics::{param_errors, sisdr_signals, MetricReport};
use rmdereverb::rir::{self, analyze_rir as edc_analysis, AcousticParams, DEFAULT_DIRECT_DELAY};
use rmdereverb::seed::{self, derive_seed, domain};
use rmdereverb::signal::{convolve, istft, stft, Signal, Spectrogram, StftConfig, DEFAULT_SAMPLE_RATE};
use rmdereverb::synth::{decaying_noise, random_reverberant_set};
use rmdereverb::tfconv::{BandRadius, KernelBuilder};
use rmdereverb::{Error, Result};

use crate::config::RunConfig;
use crate::io::{read_rir, read_signal, write_rir, write_signal, write_text_atomic};
use crate::{input, ConvPath, Failure, Format};

type CmdResult = std::result::Result<String, Failure>;

fn speech_stft() -> Arc<StftConfig> {
    Arc::new(StftConfig::default_speech())
}

pub fn sample_rir(cfg: &RunConfig, len: Option<usize>, out: &Path) -> CmdResult {
    let params = cfg.acoustic_params()?;
    let len = len.unwrap_or_else(|| params.default_rir_len());
    let rir = rir::sample_rir(&params, len, cfg.seed)?;
    write_rir(out, &rir)?;
    let rec = params.to_kv().with("len", len).with("seed", cfg.seed);
    Ok(rec.to_string())
}

pub fn analyze_rir(cfg: &RunConfig, path: &Path, n_d: Option<usize>) -> CmdResult {
    let rir = input(read_rir(path), path)?;
    let n_d = match n_d {
        Some(v) => v,
        None => cfg.get("n_d")?.unwrap_or(DEFAULT_DIRECT_DELAY),
    };
    let a = edc_analysis(&rir, n_d)?;
    let rec = KvRecord::new()
        .with("rt60", format!("{:.6}", a.rt60_est))
        .with("drr_db", format!("{:.6}", a.drr_est_db))
        .with("sigma", format!("{:e}", a.sigma_est))
        .with("t5", a.t5)
        .with("t25", a.t25)
        .with("n_d", n_d);
    Ok(rec.to_string())
}

fn read_manifest(path: &Path) -> Result<Vec<(PathBuf, f64)>> {
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    text.lines()
        .enumerate()
        .map(|(i, l)| (i, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(i, l)| {
            let bad = || Error::Parse(format!("manifest line {}: expected `path rt60`", i + 1));
            let (file, rt60) = l.rsplit_once(char::is_whitespace).ok_or_else(bad)?;
            let rt60: f64 = rt60.parse().map_err(|_| bad())?;
            Ok((base.join(file.trim()), rt60))
        })
        .collect()
}

pub fn calibrate(cfg: &RunConfig, manifest: Option<&Path>, synthetic: Option<usize>, out: &Path) -> CmdResult {
    let decay = cfg.decay()?;
    let stft_cfg = speech_stft();
    let signals: Vec<(Signal, f64)> = match (manifest, synthetic) {
        (Some(m), _) => {
            let entries = input(read_manifest(m), m)?;
            entries
                .into_par_iter()
                .map(|(p, rt60)| input(read_signal(&p), &p).map(|s| (s, rt60)))
                .collect::<std::result::Result<_, _>>()?
        }
        (None, Some(n)) => {
            let secs: f64 = cfg.get("synthetic_len_s")?.unwrap_or(2.0);
            if !(secs > 0.0) {
                return Err(Error::InvalidParam("synthetic_len_s must be positive".into()).into());
            }
            let len = (secs * DEFAULT_SAMPLE_RATE as f64).round() as usize;
            random_reverberant_set(n, len, 0.2..1.0, -6.0..10.0, DEFAULT_SAMPLE_RATE, cfg.seed)?
                .into_iter()
                .map(|e| (e.wet, e.params.rt60))
                .collect()
        }
        (None, None) => return Err(Error::InvalidParam("need --manifest or --synthetic".into()).into()),
    };
    let raw: Vec<Option<(f64, f64)>> = signals
        .par_iter()
        .map(|(s, rt60)| match raw_decay_estimate(&stft(s, &stft_cfg)?, &decay) {
            Ok(r) => Ok(Some((r, *rt60))),
            Err(Error::InsufficientDecay) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    let pairs: Vec<(f64, f64)> = raw.iter().flatten().copied().collect();
    let cal = calibrate_from_raw(&pairs)?;
    write_text_atomic(out, &cal.to_kv().to_string())?;
    Ok(cal.to_kv().with("skipped", raw.len() - pairs.len()).to_string())
}

fn load_calibration(path: Option<&Path>) -> std::result::Result<Rt60Calibration, Failure> {
    match path {
        Some(p) => input(Rt60Calibration::read(p), p),
        None => Ok(Rt60Calibration::identity()),
    }
}

pub fn analyze_blind(cfg: &RunConfig, inputs: &[PathBuf], calibration: Option<&Path>) -> CmdResult {
    let cal = load_calibration(calibration)?;
    let blind = cfg.blind()?;
    let stft_cfg = speech_stft();
    let signals: Vec<Signal> =
        inputs.iter().map(|p| input(read_signal(p), p)).collect::<std::result::Result<_, _>>()?;
    let lines: Vec<String> = inputs
        .par_iter()
        .zip(&signals)
        .map(|(p, s)| {
            let head = KvRecord::new().with("file", p.display());
            match blind_estimate(&stft(s, &stft_cfg)?, &cal, &blind) {
                Ok(est) => {
                    let mut rec = head;
                    rec.merge(&est.to_kv());
                    Ok(rec.to_line())
                }
                Err(Error::InsufficientDecay) => Ok(head.with("status", "insufficient-decay").to_line()),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    Ok(lines.iter().map(|l| format!("{l}\n")).collect())
}

/// Full linear convolution, in the time domain or through the banded
/// STFT-domain operator.
pub fn convolve_with(s: &Signal, rir: &rir::Rir, path: ConvPath, band: BandRadius) -> Result<Signal> {
    let full_len = s.len() + rir.len() - 1;
    match path {
        ConvPath::Time => Signal::new(convolve(s.samples(), rir.taps()), s.sample_rate()),
        ConvPath::Stft => {
            let stft_cfg = speech_stft();
            let kernel = KernelBuilder::new(stft_cfg.clone()).build(rir, band);
            let mut y = kernel.apply(&stft(s, &stft_cfg)?)?;
            y.set_signal_len(full_len);
            istft(&y)
        }
    }
}

pub fn reverberate(cfg: &RunConfig, path: &Path, rir: Option<&Path>, conv: ConvPath, out: &Path) -> CmdResult {
    let s = input(read_signal(path), path)?;
    let (rir, mut rec) = match rir {
        Some(p) => (input(read_rir(p), p)?, KvRecord::new().with("rir", p.display())),
        None => {
            let params = cfg.acoustic_params()?;
            let h = rir::sample_rir(&params, params.default_rir_len(), cfg.seed)?;
            (h, params.to_kv().with("seed", cfg.seed))
        }
    };
    if rir.sample_rate() != s.sample_rate() {
        return Err(Error::UnsupportedSampleRate { got: rir.sample_rate(), expected: s.sample_rate() }.into());
    }
    let band = cfg.band()?;
    let y = convolve_with(&s, &rir, conv, band)?;
    write_signal(out, &y)?;
    rec.set("path", format!("{conv:?}").to_lowercase());
    if conv == ConvPath::Stft {
        rec.set("band_radius", band);
    }
    rec.set("len", y.len());
    Ok(rec.to_string())
}

pub enum Target {
    File(PathBuf),
    Dir(PathBuf),
}

pub enum ModelChoice {
    Oracle(PathBuf),
    Params,
    Blind(Option<PathBuf>),
}

struct Dereverbed {
    output: Signal,
    record: KvRecord,
    trace: Option<SolveTrace>,
}

fn solve_known(y: &Signal, model: &RirModel, cfg: &RunConfig) -> Result<(Signal, SolveTrace)> {
    let spec: Spectrogram = stft(y, &speech_stft())?;
    let (shat, trace) = trainingless_dereverb(&spec, model, &cfg.solver()?)?;
    Ok((istft(&shat)?.resized(y.len()), trace))
}

fn trace_fields(rec: &mut KvRecord, trace: &SolveTrace) {
    rec.set("iterations", trace.iterations_used());
    rec.set("initial_loss", format!("{:e}", trace.initial_loss()));
    rec.set("best_loss", format!("{:e}", trace.best_loss()));
    rec.set("best_iter", trace.best_iter);
}

pub fn dereverb(
    cfg: &RunConfig,
    inputs: &[PathBuf],
    target: &Target,
    model: &ModelChoice,
    trace_path: Option<&Path>,
) -> CmdResult {
    if inputs.len() > 1 && (matches!(target, Target::File(_)) || trace_path.is_some()) {
        return Err(Error::InvalidParam("--out and --trace take a single input; use --out-dir".into()).into());
    }
    let outputs: Vec<PathBuf> = match target {
        Target::File(p) => vec![p.clone()],
        Target::Dir(dir) => inputs
            .iter()
            .map(|p| {
                p.file_name()
                    .map(|n| dir.join(n))
                    .ok_or_else(|| Failure::Validation(Error::InvalidParam(format!("{} has no file name", p.display()))))
            })
            .collect::<std::result::Result<_, _>>()?,
    };
    let signals: Vec<Signal> =
        inputs.iter().map(|p| input(read_signal(p), p)).collect::<std::result::Result<_, _>>()?;

    enum Prepared {
        Known(RirModel, &'static str),
        Blind(Rt60Calibration, rmdereverb::dereverb::PipelineConfig),
    }
    let prepared = match model {
        ModelChoice::Oracle(p) => Prepared::Known(RirModel::Dirac(input(read_rir(p), p)?), "oracle"),
        ModelChoice::Params => Prepared::Known(RirModel::Params(cfg.acoustic_params()?), "params"),
        ModelChoice::Blind(cal) => Prepared::Blind(load_calibration(cal.as_deref())?, cfg.pipeline()?),
    };
    cfg.solver()?;

    let results: Vec<Dereverbed> = inputs
        .par_iter()
        .zip(&signals)
        .map(|(p, y)| {
            let mut record = KvRecord::new().with("file", p.display());
            match &prepared {
                Prepared::Known(m, mode) => {
                    let (output, trace) = solve_known(y, m, cfg)?;
                    record.set("mode", mode);
                    record.set("outcome", "dereverberated");
                    trace_fields(&mut record, &trace);
                    Ok(Dereverbed { output, record, trace: Some(trace) })
                }
                Prepared::Blind(cal, pipeline) => {
                    let (output, outcome) = dereverb_pipeline(y, cal, pipeline)?;
                    record.set("mode", "blind");
                    match outcome {
                        PipelineOutcome::Dereverberated { estimate, trace } => {
                            record.set("outcome", "dereverberated");
                            record.set("rt60", format!("{:.6}", estimate.rt60));
                            record.set("drr_db", estimate.drr_db);
                            trace_fields(&mut record, &trace);
                            Ok(Dereverbed { output, record, trace: Some(trace) })
                        }
                        PipelineOutcome::PassThrough { .. } => {
                            record.set("outcome", "pass-through");
                            Ok(Dereverbed { output, record, trace: None })
                        }
                    }
                }
            }
        })
        .collect::<Result<_>>()?;

    if let Target::Dir(dir) = target {
        std::fs::create_dir_all(dir).map_err(Error::from)?;
    }
    let mut report = String::new();
    for (res, out) in results.iter().zip(&outputs) {
        write_signal(out, &res.output)?;
        writeln!(report, "{}", res.record.to_line()).expect("writing to a String");
    }
    if let (Some(path), Some(trace)) = (trace_path, results.first().and_then(|r| r.trace.as_ref())) {
        let mut buf = Vec::new();
        trace.write_records(&mut buf)?;
        write_text_atomic(path, &String::from_utf8(buf).expect("ascii records"))?;
    }
    Ok(report)
}

/// Accepts one pair per line or space-separated pairs on one line, so
/// `analyze-blind` output can be passed straight back in.
fn read_params(path: &Path) -> Result<KvRecord> {
    let text = std::fs::read_to_string(path)?;
    let mut rec = KvRecord::new();
    for token in text.split_whitespace().filter(|t| !t.starts_with('#')) {
        let (k, v) = token.split_once('=').ok_or_else(|| Error::Parse(format!("`{token}` is not key=value")))?;
        rec.set(k, v);
    }
    Ok(rec)
}

pub fn eval(
    estimate: &Path,
    reference: &Path,
    params: Option<(&Path, &Path)>,
    format: Format,
) -> CmdResult {
    let est = input(read_signal(estimate), estimate)?;
    let reference_signal = input(read_signal(reference), reference)?;
    if est.len() != reference_signal.len() {
        return Err(Failure::Validation(Error::ShapeMismatch(format!(
            "estimate has {} samples, reference {}",
            est.len(),
            reference_signal.len()
        ))));
    }
    let params = match params {
        Some((truth, estimated)) => {
            let truth_params = input(read_params(truth).and_then(|r| AcousticParams::from_kv(&r)), truth)?;
            let est_rec = input(read_params(estimated), estimated)?;
            let est_params = AcousticParams {
                rt60: input(est_rec.require("rt60"), estimated)?,
                drr_db: input(est_rec.require("drr_db"), estimated)?,
                ..truth_params
            };
            Some(param_errors(&est_params, &truth_params))
        }
        None => None,
    };
    let report = MetricReport { sisdr: sisdr_signals(&est, &reference_signal)?, params };
    let rec = report.to_kv();
    Ok(match format {
        Format::Kv => rec.to_string(),
        Format::Csv => {
            let keys: Vec<&str> = rec.keys().collect();
            let values: Vec<&str> = rec.iter().map(|(_, v)| v).collect();
            format!("{}\n{}\n", keys.join(","), values.join(","))
        }
    })
}

pub const BENCH_BANDS: [BandRadius; 6] = [
    BandRadius::Limited(1),
    BandRadius::Limited(2),
    BandRadius::Limited(4),
    BandRadius::Limited(8),
    BandRadius::Limited(16),
    BandRadius::Full,
];

fn rel_error(got: &Spectrogram, want: &Spectrogram) -> f64 {
    let frames = got.num_frames().max(want.num_frames());
    let (a, b) = (got.with_frames(frames), want.with_frames(frames));
    let diff: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).norm_sqr()).sum();
    (diff / b.norm_sqr()).sqrt()
}

pub fn bench(cfg: &RunConfig, instances: usize, len: usize, taps: usize, timing: bool) -> CmdResult {
    if instances == 0 || len == 0 || taps == 0 {
        return Err(Error::InvalidParam("instances, len and taps must be positive".into()).into());
    }
    let stft_cfg = speech_stft();
    let builder = KernelBuilder::new(stft_cfg.clone());
    let fs = DEFAULT_SAMPLE_RATE;
    let cases: Vec<(Spectrogram, Spectrogram, rir::Rir)> = (0..instances as u64)
        .into_par_iter()
        .map(|i| {
            let base = derive_seed(cfg.seed, domain::DATASET, i);
            let mut rng = seed::rng(base);
            let s = Signal::new((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(), fs)?;
            let h = decaying_noise(taps, taps as f64 / 7.0, fs, base);
            let rir = rir::Rir::new(h.into_samples(), fs)?;
            let wet = Signal::new(convolve(s.samples(), rir.taps()), fs)?;
            Ok((stft(&s, &stft_cfg)?, stft(&wet, &stft_cfg)?, rir))
        })
        .collect::<Result<_>>()?;

    let mut out = String::from(if timing {
        "band_radius,max_rel_error,mean_rel_error,seconds\n"
    } else {
        "band_radius,max_rel_error,mean_rel_error\n"
    });
    for band in BENCH_BANDS {
        let start = Instant::now();
        let errors: Vec<f64> = cases
            .par_iter()
            .map(|(s, want, rir)| Ok(rel_error(&builder.build(rir, band).apply(s)?, want)))
            .collect::<Result<_>>()?;
        let secs = start.elapsed().as_secs_f64();
        let max = errors.iter().copied().fold(0.0, f64::max);
        let mean = errors.iter().sum::<f64>() / errors.len() as f64;
        write!(out, "{band},{max:.6e},{mean:.6e}").expect("writing to a String");
        if timing {
            write!(out, ",{secs:.3}").expect("writing to a String");
        }
        out.push('\n');
    }
    Ok(out)
}
