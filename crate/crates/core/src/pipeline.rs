//! End-to-end orchestration shared by the command-line tool and the
//! acceptance suite: configuration profiles, training runs with per-epoch
//! checkpoints, node analysis, separation and evaluation.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{si_sdr, EvalReport, EvalRow};
use crate::nodes::{
    density_grid, density_grid_csv, estimate_nodes, frame_features, likelihood_curve, LikelihoodCurve,
    NodeEstimate,
};
use crate::numerics::Matrix;
use crate::rpca::{apply_mask, rpca, soft_mask, MaskConfig, RpcaConfig, RpcaDecomposition};
use crate::signal::{istft, read_wav, stft, write_wav, AudioBuffer, Spectrogram, StftConfig, INGEST_PEAK};
use crate::train::{
    load_checkpoint, save_checkpoint, train_with, write_atomic, LossTrace, TrainConfig,
};
use crate::vae::{reconstruct, ModelConfig, VaeModel};
use crate::window::{detect_window, window_report_csv, SeparationWindow, WindowConfig};

/// Input dimension at which the reference window thresholds are defined.
pub const REFERENCE_BINS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Paper,
    Desk,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Profile::Paper),
            "desk" => Ok(Profile::Desk),
            other => Err(Error::InvalidConfig(format!("unknown profile `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyzeConfig {
    pub k_min: usize,
    pub k_max: usize,
    pub gain_ratio: f64,
    /// Frames beyond this are subsampled with a uniform stride before fitting.
    pub max_frames: usize,
    pub grid_bins: usize,
    pub seed: u64,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            k_min: 1,
            k_max: 6,
            gain_ratio: crate::nodes::DEFAULT_GAIN_RATIO,
            max_frames: 4000,
            grid_bins: 40,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub profile: Profile,
    pub stft: StftConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub window: WindowConfig,
    pub rpca: RpcaConfig,
    pub mask: MaskConfig,
    pub analyze: AnalyzeConfig,
    /// Seed of the model initialization.
    pub model_seed: u64,
}

impl PipelineConfig {
    pub fn for_profile(profile: Profile) -> Self {
        match profile {
            Profile::Paper => Self {
                profile,
                stft: StftConfig::default(),
                model: ModelConfig::default(),
                train: TrainConfig::default(),
                window: WindowConfig::default(),
                rpca: RpcaConfig::default(),
                mask: MaskConfig::default(),
                analyze: AnalyzeConfig::default(),
                model_seed: 0,
            },
            Profile::Desk => {
                let stft = StftConfig {
                    fft_size: 128,
                    hop: 32,
                    ..StftConfig::default()
                };
                let bins = stft.bins();
                Self {
                    profile,
                    stft,
                    model: ModelConfig {
                        input_dim: bins,
                        enc_hidden: 64,
                        dec_hidden: 64,
                        latent_dim: 16,
                        num_nodes: 1,
                        context_dim: 16,
                    },
                    train: TrainConfig::default(),
                    window: WindowConfig::default().scaled_for_bins(bins, REFERENCE_BINS),
                    rpca: RpcaConfig::default(),
                    mask: MaskConfig::default(),
                    analyze: AnalyzeConfig::default(),
                    model_seed: 0,
                }
            }
        }
    }

    /// Parses a JSON config. Fields that are absent take the defaults of the
    /// profile named in the file (`paper` when none is named).
    pub fn from_json(text: &str) -> Result<Self> {
        let user: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("config json: {e}")))?;
        let profile = match user.get("profile") {
            Some(p) => serde_json::from_value(p.clone())
                .map_err(|e| Error::InvalidConfig(format!("profile: {e}")))?,
            None => Profile::Paper,
        };
        let mut base = serde_json::to_value(Self::for_profile(profile)).expect("config serializes");
        merge_json(&mut base, user);
        let cfg: Self =
            serde_json::from_value(base).map_err(|e| Error::InvalidConfig(format!("config json: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.window.validate()?;
        self.rpca.validate()?;
        self.mask.validate()?;
        if self.model.input_dim != self.stft.bins() {
            return Err(Error::InvalidConfig(format!(
                "model input_dim {} does not match {} stft bins",
                self.model.input_dim,
                self.stft.bins()
            )));
        }
        let a = &self.analyze;
        if a.k_min == 0 || a.k_max <= a.k_min || a.max_frames < 2 || a.grid_bins == 0 {
            return Err(Error::InvalidConfig(format!("invalid analyze settings {a:?}")));
        }
        Ok(())
    }

    /// Human-readable note on how the window thresholds relate to the
    /// reference 512-bin values.
    pub fn threshold_note(&self) -> String {
        format!(
            "profile={:?} bins={} (mse threshold scaled by bins/{REFERENCE_BINS}; kl threshold per node, unscaled)",
            self.profile,
            self.model.input_dim
        )
        .to_lowercase()
    }
}

fn merge_json(base: &mut serde_json::Value, over: serde_json::Value) {
    match (base, over) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge_json(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Frames needed to cover every sample of the input.
fn padding(cfg: &StftConfig, samples: usize) -> (usize, usize) {
    let front = cfg.fft_size - cfg.hop;
    let padded = front + samples + front;
    let frames = padded.saturating_sub(cfg.fft_size).div_ceil(cfg.hop) + 1;
    let back = (frames - 1) * cfg.hop + cfg.fft_size - front - samples;
    (front, back)
}

/// STFT of the input padded with `fft_size − hop` zeros on each side, so
/// that every input sample lies under a full set of overlapping frames.
pub fn analyze_audio(buf: &AudioBuffer, cfg: &StftConfig) -> Result<Spectrogram> {
    cfg.validate()?;
    if buf.is_empty() {
        return Err(Error::EmptyAudio);
    }
    let (front, back) = padding(cfg, buf.len());
    let mut padded = vec![0.0; front];
    padded.extend_from_slice(buf.samples());
    padded.resize(front + buf.len() + back, 0.0);
    stft(&AudioBuffer::new(padded, buf.sample_rate())?, cfg)
}

/// Inverse of [`analyze_audio`] for an input of `samples` samples.
pub fn synthesize_audio(spec: &Spectrogram, samples: usize) -> Result<AudioBuffer> {
    let (front, _) = padding(&spec.config, samples);
    let full = istft(spec)?;
    let body: Vec<f64> = full.samples().iter().skip(front).take(samples).copied().collect();
    Ok(AudioBuffer::new(body, full.sample_rate())?.fit_to_len(samples))
}

/// Reads a WAV file and applies the ingestion peak normalization.
pub fn ingest(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let buf = read_wav(path)?;
    if buf.is_empty() {
        return Err(Error::EmptyAudio);
    }
    Ok(buf.peak_normalized(INGEST_PEAK))
}

pub fn wav_files(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn magnitudes(paths: &[PathBuf], cfg: &StftConfig) -> Result<Vec<Matrix>> {
    if paths.is_empty() {
        return Err(Error::InsufficientData("no input wav files".into()));
    }
    paths
        .iter()
        .map(|p| Ok(analyze_audio(&ingest(p)?, cfg)?.mag))
        .collect()
}

pub fn checkpoint_name(epoch: usize) -> String {
    format!("epoch_{epoch:03}.ckpt")
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub trace: LossTrace,
    pub window: SeparationWindow,
    pub checkpoint_dir: PathBuf,
}

impl TrainSummary {
    pub fn selected_checkpoint(&self) -> Option<PathBuf> {
        self.window
            .selected_epoch
            .map(|e| self.checkpoint_dir.join(checkpoint_name(e)))
    }
}

/// Trains on magnitude matrices, writing `checkpoints/epoch_NNN.ckpt`,
/// `losses.csv`, `window.csv` and `config.json` under `out_dir`.
pub fn train_on(cfg: &PipelineConfig, data: &[Matrix], out_dir: &Path) -> Result<TrainSummary> {
    cfg.validate()?;
    let ckpt_dir = out_dir.join("checkpoints");
    fs::create_dir_all(&ckpt_dir).map_err(|e| Error::io(&ckpt_dir, e))?;
    write_atomic(&out_dir.join("config.json"), cfg.to_json().as_bytes())?;
    let model = VaeModel::new(cfg.model, cfg.model_seed)?;
    let (_, _, trace) = train_with(model, data, &cfg.train, |end| {
        let last = end.record.epoch + 1 == cfg.train.epochs;
        let state = if last { Some(end.optimizer) } else { None };
        save_checkpoint(end.model, state, ckpt_dir.join(checkpoint_name(end.record.epoch)))
    })?;
    trace.write_csv(out_dir.join("losses.csv"))?;
    let window = detect_window(&trace, &cfg.window)?;
    let report = window_report_csv(&window, &cfg.window, Some(&cfg.threshold_note()));
    write_atomic(&out_dir.join("window.csv"), report.as_bytes())?;
    Ok(TrainSummary {
        trace,
        window,
        checkpoint_dir: ckpt_dir,
    })
}

pub fn cmd_train(cfg: &PipelineConfig, data_dir: &Path, out_dir: &Path) -> Result<TrainSummary> {
    let files = wav_files(data_dir)?;
    let data = magnitudes(&files, &cfg.stft)?;
    log::info!("training on {} files", files.len());
    train_on(cfg, &data, out_dir)
}

#[derive(Debug, Clone)]
pub struct AnalyzeReport {
    pub curve: LikelihoodCurve,
    pub estimate: NodeEstimate,
    pub frames_used: usize,
}

/// Node analysis of magnitude matrices.
pub fn analyze_magnitudes(cfg: &AnalyzeConfig, mags: &[Matrix]) -> Result<(AnalyzeReport, Matrix)> {
    let refs: Vec<&Matrix> = mags.iter().collect();
    let mut features = frame_features(&refs)?;
    let n = features.rows();
    if n > cfg.max_frames {
        let stride = n.div_ceil(cfg.max_frames);
        let rows: Vec<Vec<f64>> = (0..n).step_by(stride).map(|i| features.row(i).to_vec()).collect();
        features = Matrix::from_rows(&rows)?;
    }
    let ks: Vec<usize> = (cfg.k_min..=cfg.k_max).collect();
    let curve = likelihood_curve(&features, &ks, cfg.seed)?;
    let estimate = estimate_nodes(&curve, cfg.gain_ratio)?;
    Ok((
        AnalyzeReport {
            curve,
            estimate,
            frames_used: features.rows(),
        },
        features,
    ))
}

/// Writes `curve.csv`, `density.csv` and `nodes.txt` under `out_dir`.
pub fn cmd_analyze(cfg: &PipelineConfig, data_dir: &Path, out_dir: &Path) -> Result<AnalyzeReport> {
    let files = wav_files(data_dir)?;
    let mags = magnitudes(&files, &cfg.stft)?;
    let (report, features) = analyze_magnitudes(&cfg.analyze, &mags)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_atomic(&out_dir.join("curve.csv"), report.curve.to_csv().as_bytes())?;
    let grid = density_grid(&features, cfg.analyze.grid_bins)?;
    write_atomic(&out_dir.join("density.csv"), density_grid_csv(&grid).as_bytes())?;
    let summary = format!(
        "clusters={}\nk={}\nk_safe={}\nframes={}\n",
        report.estimate.clusters, report.estimate.k, report.estimate.k_safe, report.frames_used
    );
    write_atomic(&out_dir.join("nodes.txt"), summary.as_bytes())?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SeparateOptions {
    /// Skip the model: the mixture magnitude goes straight to enhancement.
    pub bypass_vae: bool,
    /// Replace the soft mask by all ones.
    pub mask_ones: bool,
    /// Skip RPCA and masking: output the model reconstruction directly.
    pub skip_rpca: bool,
}

#[derive(Debug, Clone)]
pub struct Separation {
    pub audio: AudioBuffer,
    pub mixture: Matrix,
    pub model_output: Matrix,
    pub mask: Matrix,
    pub enhanced: Matrix,
    pub rpca: Option<RpcaDecomposition>,
}

/// Separates speech from a (peak-normalized) mixture.
pub fn separate(
    cfg: &PipelineConfig,
    model: Option<&VaeModel>,
    input: &AudioBuffer,
    opts: SeparateOptions,
) -> Result<Separation> {
    let spec = analyze_audio(input, &cfg.stft)?;
    let mixture = spec.mag.clone();
    let model_output = match (opts.bypass_vae, model) {
        (true, _) => mixture.clone(),
        (false, Some(m)) => {
            if m.config().input_dim != mixture.cols() {
                return Err(Error::ShapeMismatch(format!(
                    "model expects {} bins, spectrogram has {}",
                    m.config().input_dim,
                    mixture.cols()
                )));
            }
            // The output head is affine; magnitudes cannot be negative.
            reconstruct(m, &mixture)?.map(|v| v.max(0.0))
        }
        (false, None) => {
            return Err(Error::InvalidArgument("a model is required unless the VAE is bypassed".into()))
        }
    };
    let (mask, enhanced, dec) = if opts.skip_rpca {
        let ones = Matrix::from_fn(mixture.rows(), mixture.cols(), |_, _| 1.0);
        (ones, model_output.clone(), None)
    } else if opts.mask_ones {
        let ones = Matrix::from_fn(mixture.rows(), mixture.cols(), |_, _| 1.0);
        let enhanced = apply_mask(&ones, &model_output)?;
        (ones, enhanced, None)
    } else {
        let dec = rpca(&model_output, &cfg.rpca)?;
        let w = soft_mask(&dec.s, &model_output, &cfg.mask)?;
        let enhanced = apply_mask(&w, &model_output)?;
        (w, enhanced, Some(dec))
    };
    let out_spec = spec.with_magnitude(enhanced.clone())?;
    let audio = synthesize_audio(&out_spec, input.len())?;
    let clipped = audio.samples().iter().map(|s| s.clamp(-1.0, 1.0)).collect();
    Ok(Separation {
        audio: AudioBuffer::new(clipped, input.sample_rate())?,
        mixture,
        model_output,
        mask,
        enhanced,
        rpca: dec,
    })
}

pub fn load_model(cfg: &PipelineConfig, checkpoint: &Path) -> Result<VaeModel> {
    Ok(load_checkpoint(checkpoint, Some(&cfg.model))?.0)
}

/// Separates `input` into `output`; with `dump_dir`, also writes the
/// intermediate spectrograms as `.spec` files.
pub fn cmd_separate(
    cfg: &PipelineConfig,
    checkpoint: Option<&Path>,
    input: &Path,
    output: &Path,
    opts: SeparateOptions,
    dump_dir: Option<&Path>,
) -> Result<Separation> {
    let model = match checkpoint {
        Some(p) => Some(load_model(cfg, p)?),
        None => None,
    };
    let audio = ingest(input)?;
    let sep = separate(cfg, model.as_ref(), &audio, opts)?;
    write_wav(&sep.audio, output)?;
    if let Some(dir) = dump_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_spectrogram(&sep.mixture, dir.join("mixture.spec"))?;
        write_spectrogram(&sep.model_output, dir.join("model_output.spec"))?;
        write_spectrogram(&sep.mask, dir.join("mask.spec"))?;
        write_spectrogram(&sep.enhanced, dir.join("enhanced.spec"))?;
        if let Some(dec) = &sep.rpca {
            write_spectrogram(&dec.l, dir.join("low_rank.spec"))?;
            write_spectrogram(&dec.s, dir.join("sparse.spec"))?;
        }
    }
    Ok(sep)
}

/// A mixture file and its clean speech reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalPair {
    pub name: String,
    pub mixture: PathBuf,
    pub reference: PathBuf,
}

/// Pairs `<name>_mix.wav` with `<name>_speech.wav` in a directory.
pub fn eval_pairs(dir: &Path) -> Result<Vec<EvalPair>> {
    let mut pairs = Vec::new();
    for path in wav_files(dir)? {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        if let Some(name) = stem.strip_suffix("_mix") {
            let reference = dir.join(format!("{name}_speech.wav"));
            if !reference.exists() {
                return Err(Error::InvalidArgument(format!(
                    "no reference {} for {}",
                    reference.display(),
                    path.display()
                )));
            }
            pairs.push(EvalPair {
                name: name.to_string(),
                mixture: path,
                reference,
            });
        }
    }
    if pairs.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no *_mix.wav files in {}",
            dir.display()
        )));
    }
    Ok(pairs)
}

pub fn evaluate(
    cfg: &PipelineConfig,
    model: Option<&VaeModel>,
    pairs: &[EvalPair],
    opts: SeparateOptions,
) -> Result<EvalReport> {
    let mut report = EvalReport::default();
    for pair in pairs {
        let mix = ingest(&pair.mixture)?;
        let reference = read_wav(&pair.reference)?;
        if reference.len() != mix.len() {
            return Err(Error::ShapeMismatch(format!(
                "{}: mixture has {} samples, reference {}",
                pair.name,
                mix.len(),
                reference.len()
            )));
        }
        let sep = separate(cfg, model, &mix, opts)?;
        let row = EvalRow {
            file: pair.name.clone(),
            mixture_db: si_sdr(reference.samples(), mix.samples())?,
            separated_db: si_sdr(reference.samples(), sep.audio.samples())?,
        };
        log::info!(
            "{}: mixture {:.2} dB, separated {:.2} dB",
            row.file,
            row.mixture_db,
            row.separated_db
        );
        report.rows.push(row);
    }
    Ok(report)
}

pub fn cmd_evaluate(
    cfg: &PipelineConfig,
    checkpoint: Option<&Path>,
    test_dir: &Path,
    out_csv: &Path,
    opts: SeparateOptions,
) -> Result<EvalReport> {
    let model = match checkpoint {
        Some(p) => Some(load_model(cfg, p)?),
        None => None,
    };
    let pairs = eval_pairs(test_dir)?;
    let report = evaluate(cfg, model.as_ref(), &pairs, opts)?;
    write_atomic(out_csv, report.to_csv().as_bytes())?;
    Ok(report)
}

pub const SPEC_MAGIC: &[u8; 8] = b"SPEC0001";

/// Binary dump: magic, u32 rows, u32 cols, then row-major f32 values, all
/// little-endian.
pub fn encode_spectrogram(m: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * m.as_slice().len());
    out.extend_from_slice(SPEC_MAGIC);
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for &v in m.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_spectrogram(bytes: &[u8]) -> Result<Matrix> {
    let bad = |why: &str| Error::InvalidArgument(format!("spectrogram dump: {why}"));
    if bytes.len() < 16 || &bytes[..8] != SPEC_MAGIC {
        return Err(bad("bad header"));
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if bytes.len() != 16 + 4 * rows * cols {
        return Err(bad("size does not match dimensions"));
    }
    let data = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Matrix::from_vec(rows, cols, data)
}

pub fn write_spectrogram(m: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_spectrogram(m))
}

pub fn read_spectrogram(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_spectrogram(&bytes)
}

/// Layout of a synthetic corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub sample_rate: u32,
    pub clip_seconds: f64,
    /// Training clips of clean speech.
    pub train_speech: usize,
    /// Training clips of speech mixed with music.
    pub train_mixed: usize,
    pub test_clips: usize,
    /// Speech-to-music ratio of the test mixtures.
    pub snr_db: f64,
    /// Speech-to-music ratio of the mixed training clips.
    pub train_snr_db: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            clip_seconds: 1.0,
            train_speech: 10,
            train_mixed: 10,
            test_clips: 10,
            snr_db: 0.0,
            train_snr_db: 10.0,
            seed: 0,
        }
    }
}

/// Writes `train/` and `test/` under `out_dir`.
///
/// `train/` holds `speech_NN.wav` and `mix_NN.wav`; `test/` holds
/// `clip_NN_mix.wav`, `clip_NN_speech.wav` and `clip_NN_music.wav` with
/// `mix = speech + music` sample for sample before quantization.
pub fn cmd_synth_data(cfg: &SynthConfig, out_dir: &Path) -> Result<()> {
    use crate::synth::{joint_peak_gain, mix_at_snr, music, speech, MusicStyle, SpeechStyle};
    let n = (cfg.clip_seconds * cfg.sample_rate as f64).round() as usize;
    if n == 0 {
        return Err(Error::InvalidConfig("clip_seconds too short".into()));
    }
    let train = out_dir.join("train");
    let test = out_dir.join("test");
    for d in [&train, &test] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let mut g = crate::numerics::rng(cfg.seed);
    let sr = cfg.sample_rate;
    let voice = SpeechStyle::default();
    let band = MusicStyle::default();
    let save = |samples: Vec<f64>, path: PathBuf| write_wav(&AudioBuffer::new(samples, sr)?, path);
    for i in 0..cfg.train_speech {
        let s = speech(n, sr, &voice, &mut g);
        let gain = joint_peak_gain(&[&s], INGEST_PEAK);
        save(s.iter().map(|v| v * gain).collect(), train.join(format!("speech_{i:02}.wav")))?;
    }
    for i in 0..cfg.train_mixed {
        let s = speech(n, sr, &voice, &mut g);
        let m = music(n, sr, &band, &mut g);
        let (mix, _) = mix_at_snr(&s, &m, cfg.train_snr_db);
        let gain = joint_peak_gain(&[&mix], INGEST_PEAK);
        save(mix.iter().map(|v| v * gain).collect(), train.join(format!("mix_{i:02}.wav")))?;
    }
    for i in 0..cfg.test_clips {
        let s = speech(n, sr, &voice, &mut g);
        let m = music(n, sr, &band, &mut g);
        let (mix, bg) = mix_at_snr(&s, &m, cfg.snr_db);
        let gain = joint_peak_gain(&[&mix, &s, &bg], INGEST_PEAK);
        let scaled = |x: &[f64]| x.iter().map(|v| v * gain).collect::<Vec<_>>();
        save(scaled(&mix), test.join(format!("clip_{i:02}_mix.wav")))?;
        save(scaled(&s), test.join(format!("clip_{i:02}_speech.wav")))?;
        save(scaled(&bg), test.join(format!("clip_{i:02}_music.wav")))?;
    }
    let mut manifest = String::new();
    let _ = writeln!(manifest, "{}", serde_json::to_string_pretty(cfg).expect("serializes"));
    write_atomic(&out_dir.join("synth.json"), manifest.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::randn;
    use tempfile::tempdir;

    #[test]
    fn profiles_and_json_merge() {
        let desk = PipelineConfig::for_profile(Profile::Desk);
        desk.validate().unwrap();
        assert_eq!(desk.model.input_dim, 64);
        assert_eq!(desk.window.mse_threshold, 31.25);
        let paper = PipelineConfig::for_profile(Profile::Paper);
        paper.validate().unwrap();
        assert_eq!(paper.stft.bins(), 512);

        let cfg = PipelineConfig::from_json(
            r#"{"profile": "desk", "model": {"num_nodes": 3}, "train": {"epochs": 7}}"#,
        )
        .unwrap();
        assert_eq!(cfg.model.num_nodes, 3);
        assert_eq!(cfg.model.enc_hidden, 64);
        assert_eq!(cfg.train.epochs, 7);
        assert_eq!(cfg.train.learning_rate, 1e-3);
        assert_eq!(PipelineConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        assert!(PipelineConfig::from_json(r#"{"profile": "desk", "model": {"input_dim": 65}}"#).is_err());
        assert!(PipelineConfig::from_json("{").is_err());
    }

    #[test]
    fn padded_analysis_is_an_identity() {
        let cfg = PipelineConfig::for_profile(Profile::Desk);
        for len in [128, 129, 1000, 4097] {
            let x = randn(len, 1, len as u64).into_vec();
            let buf = AudioBuffer::new(x.clone(), 16_000).unwrap();
            let spec = analyze_audio(&buf, &cfg.stft).unwrap();
            let y = synthesize_audio(&spec, len).unwrap();
            assert_eq!(y.len(), len);
            let err: f64 = x.iter().zip(y.samples()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let norm: f64 = x.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!(err / norm < 1e-10, "len {len}: {}", err / norm);
        }
    }

    #[test]
    fn bypass_with_unit_mask_returns_the_input() {
        let cfg = PipelineConfig::for_profile(Profile::Desk);
        let x: Vec<f64> = randn(3000, 1, 4).into_vec().iter().map(|v| 0.2 * v).collect();
        let buf = AudioBuffer::new(x.clone(), 16_000).unwrap();
        let opts = SeparateOptions {
            bypass_vae: true,
            mask_ones: true,
            skip_rpca: false,
        };
        let sep = separate(&cfg, None, &buf, opts).unwrap();
        let err = x.iter().zip(sep.audio.samples()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
        assert!(separate(&cfg, None, &buf, SeparateOptions::default()).is_err());
    }

    #[test]
    fn separated_audio_stays_in_range() {
        let cfg = PipelineConfig::for_profile(Profile::Desk);
        let x: Vec<f64> = randn(2000, 1, 5).into_vec().iter().map(|v| (0.9 * v).clamp(-0.95, 0.95)).collect();
        let buf = AudioBuffer::new(x, 16_000).unwrap();
        let model = VaeModel::new(cfg.model, 1).unwrap();
        let sep = separate(&cfg, Some(&model), &buf, SeparateOptions::default()).unwrap();
        assert_eq!(sep.audio.len(), 2000);
        assert!(sep.audio.samples().iter().all(|s| (-1.0..=1.0).contains(s)));
        assert!(sep.enhanced.as_slice().iter().zip(sep.model_output.as_slice()).all(|(e, m)| *e >= 0.0 && e <= m));
    }

    #[test]
    fn spectrogram_dump_round_trip() {
        let dir = tempdir().unwrap();
        let m = randn(7, 5, 2).map(|v| (v as f32) as f64);
        let p = dir.path().join("a.spec");
        write_spectrogram(&m, &p).unwrap();
        assert_eq!(read_spectrogram(&p).unwrap(), m);
        let bytes = fs::read(&p).unwrap();
        assert_eq!(&bytes[..8], b"SPEC0001");
        assert!(decode_spectrogram(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn synthetic_corpus_layout() {
        let dir = tempdir().unwrap();
        let cfg = SynthConfig {
            clip_seconds: 0.3,
            train_speech: 2,
            train_mixed: 1,
            test_clips: 2,
            ..SynthConfig::default()
        };
        cmd_synth_data(&cfg, dir.path()).unwrap();
        assert_eq!(wav_files(dir.path().join("train")).unwrap().len(), 3);
        let pairs = eval_pairs(&dir.path().join("test")).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].name, "clip_00");
        let mix = read_wav(&pairs[0].mixture).unwrap();
        let sp = read_wav(&pairs[0].reference).unwrap();
        let mu = read_wav(dir.path().join("test/clip_00_music.wav")).unwrap();
        for i in 0..mix.len() {
            assert!((mix.samples()[i] - sp.samples()[i] - mu.samples()[i]).abs() < 2.0 / 32768.0);
        }
        assert!(eval_pairs(&dir.path().join("train")).is_err());
    }
}
