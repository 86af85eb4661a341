//! The `stressnet` command line.
//!
//! Exit codes: 0 on success, 1 for usage and validation errors, 2 when the
//! filesystem fails. Every subcommand reads the layered configuration
//! (`STRESSNET_CONFIG`, then `--config`).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::emission::{preprocess, EmissionConfig, FeatureClip};
use crate::error::{Error, Result};
use crate::io::{self, Config};
use crate::isti::{
    breathing_signal, compute_hr, compute_hrv_rmssd, compute_isti_knots, frame_grid, isti_continuous, normalize_isti,
    roi_signal, CardiacPair, IstiConfig, RecordSpan, DEFAULT_ISTI_MAX_MS,
};
use crate::metrics::{average_precision, mse, pearson, Scored};
use crate::neural::gradcheck::{full_suite, GradcheckConfig};
use crate::neural::{predict_isti, train, ArchDescriptor, TrainConfig, TrainingClip};
use crate::signal::{PeakDetector, Signal};
use crate::stress::{
    breathing_train, featurize_signal, fuse_breathing, stress_forward, stress_train, Label, StressTrainConfig,
    TrialRecord,
};
use crate::synth::{gen_dataset, DatasetConfig, TrialLayout};

/// Default divisor for breathing rates in bpm.
pub const DEFAULT_BREATHING_SCALE: f64 = 60.0;

/// Gradient-check pass threshold on the maximum relative error.
pub const GRADCHECK_TOL: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "stressnet", version, about = "ISTI estimation and stress detection from thermal video")]
struct Cli {
    /// Configuration file layered over $STRESSNET_CONFIG.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset (TVF clips, cardiac CSVs, manifest).
    Synth(SynthArgs),
    /// Convert a TVF clip into network input frames (FVF).
    Preprocess(PreprocessArgs),
    /// Ground-truth ISTI from ECG and dZ/dt recordings.
    Gt(GtArgs),
    /// Train the ISTI network on a manifest of clips.
    Train(TrainArgs),
    /// Predict per-frame ISTI for one clip.
    Predict(PredictArgs),
    /// Train the stress classifier on a manifest of ISTI traces.
    StressTrain(StressTrainArgs),
    /// Score the trials of a manifest with a trained stress classifier.
    StressPredict(StressPredictArgs),
    /// HR, HRV, ROI or breathing signals.
    Features(FeaturesArgs),
    /// MSE and Pearson for two signals, or AP for scored labels.
    Eval(EvalArgs),
    /// Finite-difference check of every layer and the toy model.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    clips: usize,
    #[arg(long, default_value_t = 0.5)]
    stress_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 15.0)]
    fps: f64,
    /// Frame size as WxH.
    #[arg(long, default_value = "32x32", value_parser = parse_size)]
    size: (usize, usize),
    /// Trial length in seconds; the four phases keep their 1:1:2:1 proportions.
    #[arg(long, default_value_t = 50.0)]
    duration: f64,
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GtArgs {
    #[arg(long)]
    ecg: PathBuf,
    #[arg(long)]
    dzdt: PathBuf,
    /// Frame rate of the output grid.
    #[arg(long)]
    fps: f64,
    /// Length of the output grid in seconds.
    #[arg(long)]
    duration: f64,
    #[arg(long, default_value_t = 0.0)]
    t0: f64,
    /// ISTI in ms on the frame grid.
    #[arg(long)]
    out: PathBuf,
    /// Normalized ISTI; defaults to `<out stem>_normalized.csv`.
    #[arg(long)]
    normalized_out: Option<PathBuf>,
    /// Beat-wise knots (R-peak time, ISTI ms).
    #[arg(long)]
    knots_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Manifest with `tvf_path` and `isti_csv_path` columns.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    model_out: PathBuf,
    #[arg(long)]
    history_out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Overrides `train.epochs`.
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// TVF clip (preprocessed on the fly) or FVF frames.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct StressTrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    model_out: PathBuf,
    /// Also train a breathing classifier for fusion.
    #[arg(long)]
    breathing_model_out: Option<PathBuf>,
    #[arg(long)]
    history_out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct StressPredictArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Multiply in a breathing classifier's probability.
    #[arg(long)]
    breathing_model: Option<PathBuf>,
    /// `trial_id,score,label` CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FeatureKind {
    Hr,
    Hrv,
    Roi,
    Breathing,
}

#[derive(Debug, Args)]
struct FeaturesArgs {
    #[arg(long, value_enum)]
    kind: FeatureKind,
    /// ECG CSV, for `hr` and `hrv`.
    #[arg(long)]
    ecg: Option<PathBuf>,
    /// TVF clip, for `roi` and `breathing`.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Rectangle `x0,y0,w,h`, for `roi` and `breathing`.
    #[arg(long, value_parser = parse_rect)]
    roi: Option<[usize; 4]>,
    #[arg(long, default_value_t = 15.0)]
    window: f64,
    #[arg(long, default_value_t = 1.0)]
    stride: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long, requires = "gt", conflicts_with = "scores")]
    pred: Option<PathBuf>,
    #[arg(long, requires = "pred")]
    gt: Option<PathBuf>,
    /// `score,label` CSV.
    #[arg(long)]
    scores: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    #[arg(long, default_value_t = 20)]
    coords: usize,
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let w = w.trim().parse().map_err(|_| format!("bad width in {s:?}"))?;
    let h = h.trim().parse().map_err(|_| format!("bad height in {s:?}"))?;
    Ok((w, h))
}

fn parse_rect(s: &str) -> std::result::Result<[usize; 4], String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| format!("expected x0,y0,w,h, got {s:?}"))?;
    v.try_into().map_err(|_| format!("expected four values, got {s:?}"))
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io() {
                2
            } else {
                1
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    let config = Config::resolve(cli.config.as_deref())?;
    match cli.command {
        Command::Synth(a) => synth(a).map(|_| 0),
        Command::Preprocess(a) => run_preprocess(a, &config).map(|_| 0),
        Command::Gt(a) => gt(a, &config).map(|_| 0),
        Command::Train(a) => run_train(a, &config).map(|_| 0),
        Command::Predict(a) => predict(a, &config).map(|_| 0),
        Command::StressTrain(a) => run_stress_train(a, &config).map(|_| 0),
        Command::StressPredict(a) => stress_predict(a, &config).map(|_| 0),
        Command::Features(a) => features(a).map(|_| 0),
        Command::Eval(a) => eval(a).map(|_| 0),
        Command::Gradcheck(a) => gradcheck(a),
    }
}

fn emission_config(config: &Config) -> EmissionConfig {
    let mut e = EmissionConfig::default();
    config.apply_emission(&mut e);
    e
}

fn isti_max(config: &Config) -> f64 {
    config.isti_max_ms().unwrap_or(DEFAULT_ISTI_MAX_MS)
}

fn synth(a: SynthArgs) -> Result<()> {
    if !(a.duration > 0.0) {
        return Err(Error::InvalidArgument(format!("duration must be positive, got {}", a.duration)));
    }
    let base = TrialLayout::default();
    let k = a.duration / base.duration_s();
    let layout = TrialLayout {
        base_s: base.base_s * k,
        prep_s: base.prep_s * k,
        immersion_s: base.immersion_s * k,
        recovery_s: base.recovery_s * k,
    };
    let cfg = DatasetConfig {
        n_clips: a.clips,
        stress_fraction: a.stress_fraction,
        seed: a.seed,
        fps: a.fps,
        width: a.size.0,
        height: a.size.1,
        layout,
    };
    let rows = gen_dataset(&a.out, &cfg)?;
    let n_stress = rows.iter().filter(|r| r.label == Label::Stress).count();
    println!("wrote {} trials ({n_stress} stress) to {}", rows.len(), a.out.display());
    Ok(())
}

fn run_preprocess(a: PreprocessArgs, config: &Config) -> Result<()> {
    let clip = io::read_tvf(&a.input)?;
    let fc = preprocess(&clip, &emission_config(config))?;
    io::write_fvf(&a.out, &fc)?;
    println!("{} frames of {}x{} -> {}", fc.num_frames(), fc.width(), fc.height(), a.out.display());
    Ok(())
}

fn default_normalized_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "isti".into());
    out.with_file_name(format!("{stem}_normalized.csv"))
}

fn gt(a: GtArgs, config: &Config) -> Result<()> {
    if !(a.fps > 0.0) || !(a.duration > 0.0) {
        return Err(Error::InvalidArgument("fps and duration must be positive".into()));
    }
    let pair = CardiacPair::new(io::read_signal_csv(&a.ecg)?, io::read_signal_csv(&a.dzdt)?)?;
    let k = compute_isti_knots(&pair, &IstiConfig::default())?;
    let times = frame_grid(a.fps, a.duration, a.t0);
    let ms = isti_continuous(&k.knots, &times)?;
    let unit = ms.with_samples(normalize_isti(ms.samples(), isti_max(config))?)?;
    io::write_signal_csv(&a.out, &ms)?;
    io::write_signal_csv(&a.normalized_out.unwrap_or_else(|| default_normalized_path(&a.out)), &unit)?;
    if let Some(p) = &a.knots_out {
        io::write_knots_csv(p, &k.knots)?;
    }
    eprintln!("skipped beats: {}", k.skipped_beats);
    println!("{} beats, {} frames -> {}", k.knots.len(), ms.len(), a.out.display());
    Ok(())
}

fn load_features(path: &Path, config: &Config) -> Result<FeatureClip> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"FVF1") {
        io::decode_fvf(&bytes)
    } else {
        preprocess(&io::decode_tvf(&bytes)?, &emission_config(config))
    }
}

fn run_train(a: TrainArgs, config: &Config) -> Result<()> {
    let rows = io::read_manifest(&a.manifest)?;
    let max = isti_max(config);
    let mut data = Vec::with_capacity(rows.len());
    for r in &rows {
        let tvf = r
            .tvf
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("trial {} has no tvf_path", r.trial_id)))?;
        let fc = load_features(tvf, config)?;
        data.push(TrainingClip::from_isti_ms(fc, &io::read_signal_csv(&r.isti_csv)?, max)?);
    }
    let mut tc = TrainConfig { seed: a.seed, ..Default::default() };
    config.apply_train(&mut tc);
    if let Some(e) = a.epochs {
        tc.epochs = e;
    }
    let mut arch = ArchDescriptor::default();
    config.apply_arch(&mut arch);
    let (model, history) = train(&data, &arch, &tc)?;
    io::save_model(&a.model_out, &model)?;
    if let Some(p) = &a.history_out {
        io::csv::write_text(p, &history.to_csv())?;
    }
    if let Some(last) = history.epochs.last() {
        println!("epoch {} loss {:.6} ce {:.6} mse {:.6}", last.epoch, last.loss, last.ce, last.mse);
    }
    println!("model -> {}", a.model_out.display());
    Ok(())
}

fn predict(a: PredictArgs, config: &Config) -> Result<()> {
    let model = io::load_model(&a.model)?;
    let fc = load_features(&a.input, config)?;
    let mut tc = TrainConfig::default();
    config.apply_train(&mut tc);
    let pred = predict_isti(&model, &fc, isti_max(config), tc.seq_seconds)?;
    io::write_signal_csv(&a.out, &pred)?;
    println!("{} frames -> {}", pred.len(), a.out.display());
    Ok(())
}

fn load_trials(manifest: &Path, need_breathing: bool) -> Result<Vec<TrialRecord>> {
    io::read_manifest(manifest)?
        .into_iter()
        .map(|r| {
            let isti = io::read_signal_csv(&r.isti_csv)?;
            let phases = match &r.phases_csv {
                Some(p) => io::read_phases_csv(p)?,
                None => Vec::new(),
            };
            let breathing = match (&r.breathing_csv, need_breathing) {
                (Some(p), _) => Some(io::read_signal_csv(p)?),
                (None, true) => {
                    return Err(Error::InvalidArgument(format!("trial {} has no breathing_csv_path", r.trial_id)))
                }
                (None, false) => None,
            };
            TrialRecord::new(r.trial_id, isti, phases, r.label, breathing)
        })
        .collect()
}

fn stress_config(config: &Config, seed: u64) -> StressTrainConfig {
    let mut sc = StressTrainConfig { seed, ..Default::default() };
    config.apply_stress(&mut sc);
    sc
}

fn breathing_config(sc: &StressTrainConfig, config: &Config) -> StressTrainConfig {
    StressTrainConfig { scale: config.breathing_scale().unwrap_or(DEFAULT_BREATHING_SCALE), ..sc.clone() }
}

fn bce_history_csv(h: &[f64]) -> String {
    let mut s = String::from("epoch,bce\n");
    for (i, v) in h.iter().enumerate() {
        s.push_str(&format!("{i},{v}\n"));
    }
    s
}

fn run_stress_train(a: StressTrainArgs, config: &Config) -> Result<()> {
    let trials = load_trials(&a.manifest, a.breathing_model_out.is_some())?;
    let sc = stress_config(config, a.seed);
    let (model, history) = stress_train(&trials, &sc)?;
    io::save_stress_model(&a.model_out, &model)?;
    if let Some(p) = &a.history_out {
        io::csv::write_text(p, &bce_history_csv(&history))?;
    }
    println!("final bce {:.6}, model -> {}", history.last().copied().unwrap_or(f64::NAN), a.model_out.display());
    if let Some(p) = &a.breathing_model_out {
        let (bm, bh) = breathing_train(&trials, &breathing_config(&sc, config))?;
        io::save_stress_model(p, &bm)?;
        println!("breathing bce {:.6}, model -> {}", bh.last().copied().unwrap_or(f64::NAN), p.display());
    }
    Ok(())
}

fn stress_predict(a: StressPredictArgs, config: &Config) -> Result<()> {
    let trials = load_trials(&a.manifest, a.breathing_model.is_some())?;
    let model = io::load_stress_model(&a.model)?;
    let breathing = a.breathing_model.as_deref().map(io::load_stress_model).transpose()?;
    let sc = stress_config(config, 0);
    let b_scale = breathing_config(&sc, config).scale;
    let mut rows = Vec::with_capacity(trials.len());
    for t in &trials {
        let mut score = stress_forward(&model, &featurize_signal(&t.isti, model.arch().n_in(), sc.scale)?)?;
        if let (Some(bm), Some(b)) = (&breathing, &t.breathing) {
            let pb = stress_forward(bm, &featurize_signal(b, bm.arch().n_in(), b_scale)?)?;
            score = fuse_breathing(score, pb)?;
        }
        rows.push((t.id.clone(), score, t.label.map(|l| l == Label::Stress)));
    }
    io::write_trial_scores_csv(&a.out, &rows)?;
    println!("{} trials -> {}", rows.len(), a.out.display());
    Ok(())
}

fn features(a: FeaturesArgs) -> Result<()> {
    let sig: Signal = match a.kind {
        FeatureKind::Hr | FeatureKind::Hrv => {
            let path = a.ecg.as_ref().ok_or_else(|| Error::InvalidArgument("--ecg is required for hr/hrv".into()))?;
            let ecg = io::read_signal_csv(path)?;
            let peaks = PeakDetector::default().detect(&ecg)?;
            let span = RecordSpan::of(&ecg);
            if a.kind == FeatureKind::Hr {
                compute_hr(&peaks, span, a.window, a.stride)?
            } else {
                compute_hrv_rmssd(&peaks, span, a.window, a.stride)?
            }
        }
        FeatureKind::Roi | FeatureKind::Breathing => {
            let path =
                a.input.as_ref().ok_or_else(|| Error::InvalidArgument("--input is required for roi/breathing".into()))?;
            let roi = a.roi.ok_or_else(|| Error::InvalidArgument("--roi is required for roi/breathing".into()))?;
            let clip = io::read_tvf(path)?;
            if a.kind == FeatureKind::Roi {
                roi_signal(&clip, roi)?
            } else {
                breathing_signal(&clip, roi)?
            }
        }
    };
    io::write_signal_csv(&a.out, &sig)?;
    println!("{} samples -> {}", sig.len(), a.out.display());
    Ok(())
}

/// Up to ten decimals, trailing zeros removed.
pub fn format_metric(v: f64) -> String {
    let s = format!("{v:.10}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn same_length(pred: &Signal, gt: &Signal) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch(pred.len(), gt.len()));
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    match (a.pred, a.gt, a.scores) {
        (Some(p), Some(g), None) => {
            let (pred, gt) = (io::read_signal_csv(&p)?, io::read_signal_csv(&g)?);
            same_length(&pred, &gt)?;
            let (x, y) = (pred.samples(), gt.samples());
            println!("mse={}, pearson={}", format_metric(mse(x, y)?), format_metric(pearson(x, y)?));
        }
        (None, None, Some(s)) => {
            let items: Vec<Scored> =
                io::read_scores_csv(&s)?.into_iter().map(|(score, positive)| Scored { score, positive }).collect();
            println!("ap={}", format_metric(average_precision(&items)?));
        }
        _ => return Err(Error::InvalidArgument("eval needs --pred and --gt, or --scores".into())),
    }
    Ok(())
}

fn gradcheck(a: GradcheckArgs) -> Result<i32> {
    if !(a.eps > 0.0) || a.coords == 0 {
        return Err(Error::InvalidArgument("eps and coords must be positive".into()));
    }
    let cfg = GradcheckConfig { eps: a.eps, coords_per_tensor: a.coords, seed: a.seed };
    let mut worst: f64 = 0.0;
    for (name, report) in full_suite(&cfg)? {
        let e = report.max_rel_error();
        worst = worst.max(e);
        let status = if e < GRADCHECK_TOL { "ok" } else { "FAIL" };
        println!("{name:<18} {e:.3e} {status}");
    }
    println!("max relative error {worst:.3e}");
    Ok(if worst < GRADCHECK_TOL { 0 } else { 1 })
}
