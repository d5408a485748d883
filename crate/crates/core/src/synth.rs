//! Synthetic corpora: harmonic "speech", looped "music", their mixtures, and
//! stationary multi-mode signals for node-count analysis.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::numerics::Rng;

/// Vowel-like formant triples in Hz.
const VOWELS: [[f64; 3]; 5] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [530.0, 1840.0, 2480.0],
    [570.0, 840.0, 2410.0],
    [300.0, 870.0, 2240.0],
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeechStyle {
    pub f0_min: f64,
    pub f0_max: f64,
    /// Multiplies every formant frequency (timbre).
    pub formant_scale: f64,
}

impl Default for SpeechStyle {
    fn default() -> Self {
        Self {
            f0_min: 220.0,
            f0_max: 420.0,
            formant_scale: 1.0,
        }
    }
}

/// Voiced syllables with gliding pitch and formant envelopes, separated by
/// short silences.
pub fn speech(samples: usize, sample_rate: u32, style: &SpeechStyle, g: &mut Rng) -> Vec<f64> {
    let sr = sample_rate as f64;
    let mut out = vec![0.0; samples];
    let mut pos = (g.random_range(0.02..0.15) * sr) as usize;
    while pos < samples {
        let len = (g.random_range(0.12..0.35) * sr) as usize;
        let f_start = g.random_range(style.f0_min..style.f0_max);
        let f_end = (f_start * g.random_range(0.8..1.2)).clamp(style.f0_min * 0.8, style.f0_max * 1.2);
        let vowel = VOWELS[g.random_range(0..VOWELS.len())];
        let level = g.random_range(0.6..1.0);
        let ramp = (0.02 * sr) as usize;
        let max_h = ((0.45 * sr) / f_start.max(f_end)) as usize;
        let mut phases = vec![0.0; max_h + 1];
        for (phase, slot) in phases.iter_mut().enumerate() {
            *slot = if phase == 0 { 0.0 } else { g.random_range(0.0..2.0 * PI) };
        }
        for i in 0..len.min(samples - pos) {
            let frac = i as f64 / len as f64;
            let f0 = f_start + (f_end - f_start) * frac;
            let env = (i.min(len - i) as f64 / ramp as f64).min(1.0);
            let mut v = 0.0;
            for h in 1..=max_h {
                let f = h as f64 * f0;
                phases[h] += 2.0 * PI * f / sr;
                let mut a = 0.0;
                for (k, &fm) in vowel.iter().enumerate() {
                    let centre = fm * style.formant_scale;
                    a += (-(f - centre).powi(2) / (2.0 * 120.0f64.powi(2))).exp() / (k + 1) as f64;
                }
                v += (a + 0.03 / h as f64) * phases[h].sin();
            }
            out[pos + i] += level * env * v;
        }
        pos += len + (g.random_range(0.05..0.25) * sr) as usize;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MusicStyle {
    /// Loop period in samples. A multiple of the STFT hop makes the
    /// magnitude frames exactly periodic.
    pub loop_samples: usize,
    pub beats_per_loop: usize,
}

impl Default for MusicStyle {
    fn default() -> Self {
        Self {
            loop_samples: 8192,
            beats_per_loop: 4,
        }
    }
}

/// A sustained chord with decaying percussive bursts, repeated verbatim.
pub fn music(samples: usize, sample_rate: u32, style: &MusicStyle, g: &mut Rng) -> Vec<f64> {
    let sr = sample_rate as f64;
    let n = style.loop_samples.max(1);
    let mut pattern = vec![0.0; n];
    let root = g.random_range(100.0..180.0);
    let ratios: [f64; 3] = [1.0, [1.25, 1.2][g.random_range(0..2)], 1.5];
    for r in ratios {
        let f = root * r;
        for h in 1..=6 {
            let amp = 0.4 / h as f64;
            let phase = g.random_range(0.0..2.0 * PI);
            for (i, p) in pattern.iter_mut().enumerate() {
                *p += amp * (2.0 * PI * f * h as f64 * i as f64 / sr + phase).sin();
            }
        }
    }
    let beat = n / style.beats_per_loop.max(1);
    let decay = 0.03 * sr;
    let mut prev = 0.0;
    for b in 0..style.beats_per_loop {
        let level = if b % 2 == 0 { 1.2 } else { 0.7 };
        for i in 0..beat.min(n - b * beat) {
            let w: f64 = g.random_range(-1.0..1.0);
            // First difference tilts the burst towards high frequencies.
            let hp = w - 0.6 * prev;
            prev = w;
            pattern[b * beat + i] += level * (-(i as f64) / decay).exp() * hp;
        }
    }
    (0..samples).map(|i| pattern[i % n]).collect()
}

pub fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Scales `background` so that `foreground` exceeds it by `snr_db`, then
/// sums. Returns the mixture and the scaled background.
pub fn mix_at_snr(foreground: &[f64], background: &[f64], snr_db: f64) -> (Vec<f64>, Vec<f64>) {
    let ef = energy(foreground);
    let eb = energy(background);
    let gain = if eb > 0.0 {
        (ef / eb / 10f64.powf(snr_db / 10.0)).sqrt()
    } else {
        0.0
    };
    let bg: Vec<f64> = background.iter().map(|v| gain * v).collect();
    let mix = foreground.iter().zip(&bg).map(|(a, b)| a + b).collect();
    (mix, bg)
}

/// Factor that brings the peak of all given signals to `peak`.
pub fn joint_peak_gain(signals: &[&[f64]], peak: f64) -> f64 {
    let m = signals
        .iter()
        .flat_map(|s| s.iter())
        .fold(0.0f64, |a, v| a.max(v.abs()));
    if m > 0.0 {
        peak / m
    } else {
        1.0
    }
}

/// Band edges in Hz of the two noise sources behind [`mode_signal`].
const MODE_BANDS: [(f64, f64); 2] = [(200.0, 2000.0), (3000.0, 7000.0)];
/// Source levels of each mode: corners of a square in (low band, high band).
const MODE_LEVELS: [(f64, f64); 4] = [(1.0, 0.25), (0.25, 1.0), (1.0, 1.0), (0.25, 0.25)];

/// White Gaussian noise restricted to `[lo, hi)` Hz by zeroing FFT bins.
fn band_noise(samples: usize, sample_rate: u32, lo: f64, hi: f64, g: &mut Rng) -> Vec<f64> {
    use rustfft::{num_complex::Complex, FftPlanner};
    let mut buf: Vec<Complex<f64>> = crate::numerics::fill_normal(g, samples)
        .into_iter()
        .map(|v| Complex::new(v, 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(samples).process(&mut buf);
    let df = sample_rate as f64 / samples as f64;
    for (i, c) in buf.iter_mut().enumerate() {
        let f = i.min(samples - i) as f64 * df;
        if f < lo || f >= hi {
            *c = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(samples).process(&mut buf);
    let band = (hi - lo) / (sample_rate as f64 / 2.0);
    let scale = 1.0 / (samples as f64 * band.sqrt());
    buf.iter().map(|c| c.re * scale).collect()
}

/// One clip from a set of up to four stationary spectral modes.
///
/// Two noise sources in disjoint bands play throughout; each block of
/// `block` samples takes the next mode of a shuffled cycle through all modes
/// and sets the two source levels to that mode's corner of a square, with
/// ±10% jitter. Frame features of the
/// clip therefore form `modes` clusters in a plane.
pub fn mode_signal(samples: usize, sample_rate: u32, modes: usize, block: usize, g: &mut Rng) -> Vec<f64> {
    assert!((1..=MODE_LEVELS.len()).contains(&modes), "1 to 4 modes");
    let [low, high] = MODE_BANDS.map(|(lo, hi)| band_noise(samples, sample_rate, lo, hi, g));
    let mut out = vec![0.0; samples];
    let mut cycle: Vec<usize> = Vec::new();
    let mut start = 0;
    while start < samples {
        if cycle.is_empty() {
            cycle = (0..modes).collect();
            cycle.shuffle(g);
        }
        let (a, b) = MODE_LEVELS[cycle.pop().expect("refilled")];
        let ja = 0.1 * g.random_range(0.9..1.1) * a;
        let jb = 0.1 * g.random_range(0.9..1.1) * b;
        let end = (start + block.max(1)).min(samples);
        for i in start..end {
            out[i] = ja * low[i] + jb * high[i];
        }
        start = end;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng;

    #[test]
    fn music_is_exactly_periodic() {
        let style = MusicStyle::default();
        let m = music(3 * style.loop_samples + 10, 16_000, &style, &mut rng(1));
        for i in 0..2 * style.loop_samples {
            assert_eq!(m[i], m[i + style.loop_samples]);
        }
    }

    #[test]
    fn speech_has_silences_and_is_deterministic() {
        let a = speech(32_000, 16_000, &SpeechStyle::default(), &mut rng(2));
        let b = speech(32_000, 16_000, &SpeechStyle::default(), &mut rng(2));
        assert_eq!(a, b);
        let silent = a.iter().filter(|v| **v == 0.0).count();
        assert!(silent > 1000 && silent < 24_000, "{silent}");
        assert!(a.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn mixing_hits_the_requested_ratio() {
        let s = speech(16_000, 16_000, &SpeechStyle::default(), &mut rng(3));
        let m = music(16_000, 16_000, &MusicStyle::default(), &mut rng(4));
        for snr in [0.0, 6.0, -3.0] {
            let (mix, bg) = mix_at_snr(&s, &m, snr);
            let got = 10.0 * (energy(&s) / energy(&bg)).log10();
            assert!((got - snr).abs() < 1e-9);
            assert_eq!(mix.len(), s.len());
        }
        let g = joint_peak_gain(&[&s, &m], 0.5);
        let peak = s.iter().chain(&m).fold(0.0f64, |a, v| a.max(v.abs()));
        assert!((g * peak - 0.5).abs() < 1e-12);
    }
}
