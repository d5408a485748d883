//! Node-count analysis of synthetic audio built from stationary spectral modes.

use unmix::numerics::rng;
use unmix::pipeline::{analyze_audio, analyze_magnitudes, AnalyzeConfig, AnalyzeReport, PipelineConfig, Profile};
use unmix::signal::AudioBuffer;
use unmix::synth::mode_signal;

fn analyze(modes: usize, seed: u64) -> AnalyzeReport {
    let cfg = PipelineConfig::for_profile(Profile::Desk);
    let mut g = rng(seed);
    let mags: Vec<_> = (0..8)
        .map(|_| {
            let s = mode_signal(16_000, 16_000, modes, 4096, &mut g);
            let buf = AudioBuffer::new(s, 16_000).unwrap();
            analyze_audio(&buf, &cfg.stft).unwrap().mag
        })
        .collect();
    analyze_magnitudes(&AnalyzeConfig { seed, ..cfg.analyze }, &mags).unwrap().0
}

#[test]
fn cluster_count_follows_mode_count() {
    for seed in 0..3 {
        for (modes, k) in [(2, 1), (3, 2), (4, 3)] {
            let est = analyze(modes, seed).estimate;
            assert_eq!((est.clusters, est.k, est.k_safe), (modes, k, k + 2), "seed {seed}, {modes} modes");
        }
    }
}

#[test]
fn analysis_is_deterministic() {
    let a = analyze(4, 9);
    let b = analyze(4, 9);
    assert_eq!(a.curve, b.curve);
    assert_eq!(a.frames_used, b.frames_used);
}
