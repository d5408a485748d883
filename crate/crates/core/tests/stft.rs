//! STFT checked against a direct DFT, plus resynthesis round trips.

use std::f64::consts::PI;

use proptest::prelude::*;
use unmix::numerics::randn;
use unmix::pipeline::{analyze_audio, synthesize_audio};
use unmix::signal::{istft, stft, AudioBuffer, StftConfig, Window};

fn direct_dft(frame: &[f64]) -> Vec<(f64, f64)> {
    let n = frame.len();
    (0..=n / 2)
        .map(|k| {
            frame.iter().enumerate().fold((0.0, 0.0), |(re, im), (t, x)| {
                let a = -2.0 * PI * (k * t) as f64 / n as f64;
                (re + x * a.cos(), im + x * a.sin())
            })
        })
        .collect()
}

#[test]
fn frames_match_direct_dft() {
    let cfg = StftConfig { fft_size: 64, hop: 16, window: Window::Hann };
    let x = randn(1, 400, 3).into_vec();
    let spec = stft(&AudioBuffer::new(x.clone(), 8000).unwrap(), &cfg).unwrap();
    assert_eq!(spec.frames(), 1 + (400 - 64) / 16);
    for t in [0, 5, spec.frames() - 1] {
        let frame: Vec<f64> = (0..64)
            .map(|i| x[t * 16 + i] * (0.5 - 0.5 * (2.0 * PI * i as f64 / 64.0).cos()))
            .collect();
        let oracle = direct_dft(&frame);
        for k in 0..32 {
            let (re, im) = oracle[k];
            let mag = re.hypot(im);
            assert!((spec.mag[(t, k)] - mag).abs() < 1e-10, "frame {t} bin {k}");
            if mag > 1e-6 {
                let dphi = (spec.phase[(t, k)] - im.atan2(re)).rem_euclid(2.0 * PI);
                assert!(dphi.min(2.0 * PI - dphi) < 1e-8);
            }
        }
        assert!((spec.nyquist[t] - oracle[32].0).abs() < 1e-10);
        assert!(oracle[32].1.abs() < 1e-9);

        // Parseval over the full spectrum rebuilt from the half spectrum.
        let time: f64 = frame.iter().map(|v| v * v).sum();
        let half: f64 = (1..32).map(|k| spec.mag[(t, k)].powi(2)).sum();
        let freq = (spec.mag[(t, 0)].powi(2) + 2.0 * half + spec.nyquist[t].powi(2)) / 64.0;
        assert!((time - freq).abs() < 1e-9 * time.max(1.0));
    }
}

#[test]
fn istft_of_interior_is_exact() {
    let cfg = StftConfig::default();
    let x = randn(1, 8192, 9).into_vec();
    let y = istft(&stft(&AudioBuffer::new(x.clone(), 16_000).unwrap(), &cfg).unwrap()).unwrap();
    // Samples covered by the full overlap of fft_size/hop frames.
    for i in 1024..y.len() - 1024 {
        assert!((x[i] - y.samples()[i]).abs() < 1e-12, "sample {i}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn padded_round_trip_restores_every_sample(
        len in 130usize..3000,
        seed in 0u64..1000,
        cfg_index in 0usize..3,
    ) {
        let cfg = [
            StftConfig { fft_size: 128, hop: 32, window: Window::Hann },
            StftConfig { fft_size: 256, hop: 64, window: Window::Hann },
            StftConfig { fft_size: 64, hop: 64, window: Window::Rectangular },
        ][cfg_index];
        let x = randn(1, len, seed).into_vec();
        let buf = AudioBuffer::new(x.clone(), 16_000).unwrap();
        let y = synthesize_audio(&analyze_audio(&buf, &cfg).unwrap(), len).unwrap();
        prop_assert_eq!(y.len(), len);
        let err: f64 = x.iter().zip(y.samples()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        prop_assert!(err <= 1e-10 * norm, "relative error {}", err / norm);
    }
}
