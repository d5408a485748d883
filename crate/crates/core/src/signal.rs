//! WAV ingestion/emission and short-time Fourier analysis.
//!
//! The default analysis uses a 1024-point periodic Hann window with a hop of
//! 256 samples at 16 kHz. The one-sided spectrum has 513 bins; the Nyquist
//! bin is kept out of the magnitude matrix so that it has exactly 512 columns
//! and travels alongside as a real-valued per-frame side channel, which keeps
//! the transform exactly invertible.

use std::f64::consts::PI;
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Mono audio with samples nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("audio samples"));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    /// Rescales so that `max |sample| = target`. Silent buffers are returned as-is.
    pub fn peak_normalized(&self, target: f64) -> AudioBuffer {
        let peak = self.peak();
        if peak == 0.0 {
            return self.clone();
        }
        let gain = target / peak;
        AudioBuffer {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Zero-pads or truncates to exactly `len` samples.
    pub fn fit_to_len(mut self, len: usize) -> AudioBuffer {
        self.samples.resize(len, 0.0);
        self
    }
}

/// Peak level applied to audio on ingestion into the pipeline.
pub const INGEST_PEAK: f64 = 0.95;

/// Reads a PCM WAV file, averaging channels down to mono.
///
/// Integer samples of bit depth `b` are scaled by `1 / 2^(b-1)`, so 16-bit
/// audio is scaled by `1/32768`.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        hound::Error::Unsupported => {
            Error::UnsupportedEncoding(format!("{}: not integer PCM", path.display()))
        }
        other => Error::Wav {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::UnsupportedEncoding(format!(
            "{}: floating-point samples, expected integer PCM",
            path.display()
        )));
    }
    let channels = spec.channels as usize;
    let scale = 1.0 / f64::from(1u32 << (spec.bits_per_sample - 1));
    let raw: Vec<i32> = reader
        .into_samples::<i32>()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Wav {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    if raw.is_empty() || channels == 0 {
        return Err(Error::EmptyAudio);
    }
    let samples = raw
        .chunks(channels)
        .map(|frame| frame.iter().map(|&s| s as f64 * scale).sum::<f64>() / channels as f64)
        .collect();
    AudioBuffer::new(samples, spec.sample_rate)
}

/// Writes 16-bit PCM mono, clamping samples to `[-1, 1]` first.
pub fn write_wav(buf: &AudioBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if buf.is_empty() {
        return Err(Error::EmptyAudio);
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: buf.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let wav_err = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Wav {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for &s in &buf.samples {
        writer.write_sample(quantize(s)).map_err(wav_err)?;
    }
    writer.finalize().map_err(wav_err)
}

fn quantize(s: f64) -> i16 {
    (s.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    /// Periodic Hann, `0.5 − 0.5 cos(2πn/N)`.
    Hann,
    Rectangular,
}

impl Window {
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
                .collect(),
            Window::Rectangular => vec![1.0; n],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub fft_size: usize,
    pub hop: usize,
    pub window: Window,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            fft_size: 1024,
            hop: 256,
            window: Window::Hann,
        }
    }
}

impl StftConfig {
    /// Number of magnitude bins (the Nyquist bin is carried separately).
    pub fn bins(&self) -> usize {
        self.fft_size / 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.fft_size < 4 || !self.fft_size.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "fft_size must be a power of two >= 4, got {}",
                self.fft_size
            )));
        }
        if self.hop == 0 || self.hop > self.fft_size {
            return Err(Error::InvalidConfig(format!(
                "hop must be in 1..={}, got {}",
                self.fft_size, self.hop
            )));
        }
        if !self.satisfies_overlap_add() {
            return Err(Error::InvalidConfig(format!(
                "{:?} window with fft_size {} is not overlap-add constant at hop {}",
                self.window, self.fft_size, self.hop
            )));
        }
        Ok(())
    }

    /// Whether the squared window sums to a constant under shifts by `hop`,
    /// which is what weighted overlap-add synthesis relies on.
    pub fn satisfies_overlap_add(&self) -> bool {
        if self.fft_size % self.hop != 0 {
            return false;
        }
        let w = self.window.coefficients(self.fft_size);
        let sums: Vec<f64> = (0..self.hop)
            .map(|r| (r..self.fft_size).step_by(self.hop).map(|n| w[n] * w[n]).sum())
            .collect();
        let max = sums.iter().cloned().fold(f64::MIN, f64::max);
        let min = sums.iter().cloned().fold(f64::MAX, f64::min);
        max > 0.0 && (max - min) <= 1e-9 * max
    }

    pub fn frames_for(&self, samples: usize) -> usize {
        if samples < self.fft_size {
            0
        } else {
            1 + (samples - self.fft_size) / self.hop
        }
    }
}

/// Magnitude/phase spectrogram, `frames × bins`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub mag: Matrix,
    pub phase: Matrix,
    /// Real-valued Nyquist coefficient of each frame.
    pub nyquist: Vec<f64>,
    pub config: StftConfig,
    pub sample_rate: u32,
}

impl Spectrogram {
    pub fn frames(&self) -> usize {
        self.mag.rows()
    }

    pub fn bins(&self) -> usize {
        self.mag.cols()
    }

    fn check(&self) -> Result<()> {
        let bins = self.config.bins();
        if self.mag.cols() != bins || self.mag.shape() != self.phase.shape() {
            return Err(Error::ShapeMismatch(format!(
                "spectrogram mag {:?} / phase {:?} inconsistent with {} bins",
                self.mag.shape(),
                self.phase.shape(),
                bins
            )));
        }
        if self.nyquist.len() != self.mag.rows() {
            return Err(Error::ShapeMismatch("nyquist column length".into()));
        }
        Ok(())
    }

    /// Replaces the magnitudes, keeping the phase. The Nyquist coefficient of
    /// each frame is scaled by the gain applied to that frame's top bin.
    pub fn with_magnitude(&self, mag: Matrix) -> Result<Spectrogram> {
        self.mag.check_same_shape(&mag)?;
        if mag.as_slice().iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument(
                "magnitudes must be finite and nonnegative".into(),
            ));
        }
        let top = self.bins() - 1;
        let nyquist = (0..self.frames())
            .map(|t| {
                let before = self.mag[(t, top)];
                if before > 0.0 {
                    self.nyquist[t] * (mag[(t, top)] / before)
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Spectrogram {
            mag,
            phase: self.phase.clone(),
            nyquist,
            config: self.config,
            sample_rate: self.sample_rate,
        })
    }
}

/// Windowed DFT of each frame `[t·hop, t·hop + fft_size)`.
pub fn stft(buf: &AudioBuffer, cfg: &StftConfig) -> Result<Spectrogram> {
    cfg.validate()?;
    let n = cfg.fft_size;
    let frames = cfg.frames_for(buf.len());
    if frames == 0 {
        return Err(Error::AudioTooShort {
            samples: buf.len(),
            frame: n,
        });
    }
    let bins = cfg.bins();
    let window = cfg.window.coefficients(n);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut mag = Matrix::zeros(frames, bins);
    let mut phase = Matrix::zeros(frames, bins);
    let mut nyquist = Vec::with_capacity(frames);
    let mut scratch = vec![Complex::new(0.0, 0.0); n];
    for t in 0..frames {
        let start = t * cfg.hop;
        for (k, slot) in scratch.iter_mut().enumerate() {
            *slot = Complex::new(buf.samples[start + k] * window[k], 0.0);
        }
        fft.process(&mut scratch);
        for k in 0..bins {
            mag[(t, k)] = scratch[k].norm();
            phase[(t, k)] = scratch[k].arg();
        }
        nyquist.push(scratch[bins].re);
    }
    Ok(Spectrogram {
        mag,
        phase,
        nyquist,
        config: *cfg,
        sample_rate: buf.sample_rate,
    })
}

/// Weighted overlap-add resynthesis, normalized by the summed squared window.
///
/// Output length is `(frames − 1)·hop + fft_size`.
pub fn istft(spec: &Spectrogram) -> Result<AudioBuffer> {
    let cfg = spec.config;
    cfg.validate()?;
    spec.check()?;
    let n = cfg.fft_size;
    let bins = cfg.bins();
    let frames = spec.frames();
    if frames == 0 {
        return Err(Error::EmptyAudio);
    }
    let len = (frames - 1) * cfg.hop + n;
    let window = cfg.window.coefficients(n);
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n);
    let mut out = vec![0.0; len];
    let mut norm = vec![0.0; len];
    let mut scratch = vec![Complex::new(0.0, 0.0); n];
    for t in 0..frames {
        for k in 0..bins {
            scratch[k] = Complex::from_polar(spec.mag[(t, k)], spec.phase[(t, k)]);
        }
        scratch[0].im = 0.0;
        scratch[bins] = Complex::new(spec.nyquist[t], 0.0);
        for k in 1..bins {
            scratch[n - k] = scratch[k].conj();
        }
        ifft.process(&mut scratch);
        let start = t * cfg.hop;
        for k in 0..n {
            out[start + k] += scratch[k].re / n as f64 * window[k];
            norm[start + k] += window[k] * window[k];
        }
    }
    let floor = 1e-10 * norm.iter().cloned().fold(0.0, f64::max);
    for (o, w) in out.iter_mut().zip(&norm) {
        *o = if *w > floor { *o / w } else { 0.0 };
    }
    AudioBuffer::new(out, spec.sample_rate)
}
