//! Scale-invariant signal-to-distortion ratio and the evaluation report.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SISDR_CAP_DB: f64 = 60.0;

/// `10 log10(‖αs‖² / ‖αs − ŝ‖²)` with `α = ⟨ŝ, s⟩ / ‖s‖²`, clamped to ±60 dB.
pub fn si_sdr(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(Error::ShapeMismatch(format!(
            "reference has {} samples, estimate {}",
            reference.len(),
            estimate.len()
        )));
    }
    let energy: f64 = reference.iter().map(|s| s * s).sum();
    if energy == 0.0 {
        return Err(Error::InvalidArgument("reference signal is silent".into()));
    }
    let dot: f64 = reference.iter().zip(estimate).map(|(s, e)| s * e).sum();
    let alpha = dot / energy;
    let target = alpha * alpha * energy;
    let distortion: f64 = reference
        .iter()
        .zip(estimate)
        .map(|(s, e)| (alpha * s - e).powi(2))
        .sum();
    if !target.is_finite() || !distortion.is_finite() {
        return Err(Error::NonFinite("si-sdr inputs"));
    }
    let db = if distortion == 0.0 {
        SISDR_CAP_DB
    } else if target == 0.0 {
        -SISDR_CAP_DB
    } else {
        10.0 * (target / distortion).log10()
    };
    Ok(db.clamp(-SISDR_CAP_DB, SISDR_CAP_DB))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub file: String,
    pub mixture_db: f64,
    pub separated_db: f64,
}

impl EvalRow {
    pub fn improvement(&self) -> f64 {
        self.separated_db - self.mixture_db
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn mean_mixture(&self) -> f64 {
        self.mean(|r| r.mixture_db)
    }

    pub fn mean_separated(&self) -> f64 {
        self.mean(|r| r.separated_db)
    }

    pub fn mean_improvement(&self) -> f64 {
        self.mean(EvalRow::improvement)
    }

    fn mean(&self, f: impl Fn(&EvalRow) -> f64) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().map(f).sum::<f64>() / self.rows.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("file,sisdr_mixture_db,sisdr_separated_db,improvement_db\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{:.4},{:.4},{:.4}",
                r.file,
                r.mixture_db,
                r.separated_db,
                r.improvement()
            );
        }
        let _ = writeln!(
            s,
            "mean,{:.4},{:.4},{:.4}",
            self.mean_mixture(),
            self.mean_separated(),
            self.mean_improvement()
        );
        s
    }
}
