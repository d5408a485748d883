//! Separation-window detection on a loss trace.
//!
//! An epoch is inside the window when its reconstruction loss and its KL
//! loss are both at or below their thresholds. Qualifying epochs are grouped
//! into contiguous spans; the deployed checkpoint is the midpoint of the
//! widest span.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::train::LossTrace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    pub mse_threshold: f64,
    pub kl_threshold: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            mse_threshold: 250.0,
            kl_threshold: 60.0,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mse_threshold > 0.0) || !(self.kl_threshold > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "window thresholds must be positive, got mse {} kl {}",
                self.mse_threshold, self.kl_threshold
            )));
        }
        Ok(())
    }

    /// Rescales the MSE threshold for a model with `bins` input bins. The
    /// reconstruction loss sums over bins, so the reference threshold is
    /// defined for `reference_bins`. The KL threshold is per node and stays.
    pub fn scaled_for_bins(&self, bins: usize, reference_bins: usize) -> Self {
        Self {
            mse_threshold: self.mse_threshold * bins as f64 / reference_bins as f64,
            kl_threshold: self.kl_threshold,
        }
    }
}

/// Inclusive epoch range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn width(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn contains(&self, epoch: usize) -> bool {
        (self.start..=self.end).contains(&epoch)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SeparationWindow {
    pub spans: Vec<Span>,
    pub selected_epoch: Option<usize>,
}

impl SeparationWindow {
    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn contains(&self, epoch: usize) -> bool {
        self.spans.iter().any(|s| s.contains(epoch))
    }
}

pub fn detect_window(trace: &LossTrace, cfg: &WindowConfig) -> Result<SeparationWindow> {
    cfg.validate()?;
    if trace.is_empty() {
        return Err(Error::InvalidArgument("loss trace is empty".into()));
    }
    let mut spans: Vec<Span> = Vec::new();
    for r in &trace.records {
        if !(r.mse <= cfg.mse_threshold && r.kl <= cfg.kl_threshold) {
            continue;
        }
        match spans.last_mut() {
            Some(s) if s.end + 1 == r.epoch => s.end = r.epoch,
            _ => spans.push(Span {
                start: r.epoch,
                end: r.epoch,
            }),
        }
    }
    // Strictly wider spans only replace the current best, so ties keep the earliest.
    let best = spans
        .iter()
        .fold(None::<&Span>, |best, s| match best {
            Some(b) if b.width() >= s.width() => Some(b),
            _ => Some(s),
        });
    let selected_epoch = best.map(|s| (s.start + s.end) / 2);
    Ok(SeparationWindow {
        spans,
        selected_epoch,
    })
}

pub fn window_width(win: &SeparationWindow) -> usize {
    win.spans.iter().map(Span::width).sum()
}

/// Window report: comment lines with the thresholds, then one row per span.
pub fn window_report_csv(win: &SeparationWindow, cfg: &WindowConfig, note: Option<&str>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# mse_threshold={}", cfg.mse_threshold);
    let _ = writeln!(s, "# kl_threshold={}", cfg.kl_threshold);
    if let Some(note) = note {
        for line in note.lines() {
            let _ = writeln!(s, "# {line}");
        }
    }
    let _ = writeln!(s, "# total_width={}", window_width(win));
    s.push_str("start,end,width,selected_epoch\n");
    for span in &win.spans {
        let sel = win
            .selected_epoch
            .filter(|&e| span.contains(e))
            .map(|e| e.to_string())
            .unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{}", span.start, span.end, span.width(), sel);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::{EpochRecord, LossTrace};
    use proptest::prelude::*;

    fn trace(points: &[(f64, f64)]) -> LossTrace {
        LossTrace {
            records: points
                .iter()
                .enumerate()
                .map(|(epoch, &(mse, kl))| EpochRecord {
                    epoch,
                    mse,
                    kl,
                    kl_weight: 0.0,
                })
                .collect(),
        }
    }

    #[test]
    fn analytic_trace() {
        let t = LossTrace::from_fn(50, |e| (300.0 - 10.0 * e as f64, 200.0 * 0.9f64.powi(e as i32)));
        // Independent evaluation of the rule: first epoch satisfying both.
        let first = (0..50)
            .find(|&e| 300.0 - 10.0 * e as f64 <= 250.0 && 200.0 * 0.9f64.powi(e) <= 60.0)
            .unwrap();
        assert_eq!(first, 12);
        let w = detect_window(&t, &WindowConfig::default()).unwrap();
        assert_eq!(w.spans, vec![Span { start: 12, end: 49 }]);
        assert_eq!(w.selected_epoch, Some(30));
        assert_eq!(window_width(&w), 38);
    }

    #[test]
    fn empty_and_degenerate_windows() {
        let t = trace(&[(300.0, 10.0), (260.0, 5.0), (251.0, 1.0)]);
        let w = detect_window(&t, &WindowConfig::default()).unwrap();
        assert!(w.is_empty());
        assert_eq!(w.selected_epoch, None);
        assert_eq!(window_width(&w), 0);

        let t = trace(&[(300.0, 10.0), (100.0, 5.0), (251.0, 1.0)]);
        let w = detect_window(&t, &WindowConfig::default()).unwrap();
        assert_eq!(w.spans, vec![Span { start: 1, end: 1 }]);
        assert_eq!(w.selected_epoch, Some(1));

        assert!(detect_window(&LossTrace::default(), &WindowConfig::default()).is_err());
        let bad = WindowConfig { mse_threshold: 0.0, kl_threshold: 1.0 };
        assert!(detect_window(&t, &bad).is_err());
    }

    #[test]
    fn widths_and_tie_breaking() {
        let ok = (1.0, 1.0);
        let no = (1e9, 1.0);
        let t = trace(&[no, no, no, ok, ok, ok, no, no, no, no, ok, no, ok, ok, ok]);
        let w = detect_window(&t, &WindowConfig::default()).unwrap();
        assert_eq!(
            w.spans,
            vec![Span { start: 3, end: 5 }, Span { start: 10, end: 10 }, Span { start: 12, end: 14 }]
        );
        assert_eq!(window_width(&w), 7);
        assert_eq!(w.selected_epoch, Some(4));
        let two = SeparationWindow {
            spans: vec![Span { start: 3, end: 5 }, Span { start: 10, end: 10 }],
            selected_epoch: Some(4),
        };
        assert_eq!(window_width(&two), 4);
    }

    #[test]
    fn report_lists_spans() {
        let t = LossTrace::from_fn(50, |e| (300.0 - 10.0 * e as f64, 200.0 * 0.9f64.powi(e as i32)));
        let cfg = WindowConfig::default();
        let w = detect_window(&t, &cfg).unwrap();
        let csv = window_report_csv(&w, &cfg, Some("desk profile"));
        assert!(csv.contains("# mse_threshold=250\n"));
        assert!(csv.contains("# desk profile\n"));
        assert!(csv.ends_with("start,end,width,selected_epoch\n12,49,38,30\n"));
    }

    #[test]
    fn desk_scaling() {
        let c = WindowConfig::default().scaled_for_bins(64, 512);
        assert_eq!(c.mse_threshold, 31.25);
        assert_eq!(c.kl_threshold, 60.0);
    }

    proptest! {
        #[test]
        fn relaxing_thresholds_never_shrinks(
            points in prop::collection::vec((0.0..500.0f64, 0.0..120.0f64), 1..60),
            m1 in 1.0..400.0f64, k1 in 1.0..100.0f64,
            dm in 0.0..100.0f64, dk in 0.0..50.0f64,
        ) {
            let t = trace(&points);
            let tight = WindowConfig { mse_threshold: m1, kl_threshold: k1 };
            let loose = WindowConfig { mse_threshold: m1 + dm, kl_threshold: k1 + dk };
            let a = detect_window(&t, &tight).unwrap();
            let b = detect_window(&t, &loose).unwrap();
            for e in 0..points.len() {
                prop_assert!(!a.contains(e) || b.contains(e));
            }
            prop_assert!(window_width(&a) <= window_width(&b));
            // Spans are sorted, disjoint and the selection lies inside one.
            for s in a.spans.windows(2) {
                prop_assert!(s[0].end + 1 < s[1].start);
            }
            if let Some(e) = a.selected_epoch {
                prop_assert!(a.contains(e));
            } else {
                prop_assert!(a.is_empty());
            }
        }
    }
}
