use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Losses recorded at the end of one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mse: f64,
    pub kl: f64,
    pub kl_weight: f64,
}

impl EpochRecord {
    pub fn total(&self) -> f64 {
        self.mse + self.kl_weight * self.kl
    }
}

/// Per-epoch reconstruction and KL losses of a training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    pub records: Vec<EpochRecord>,
}

pub const LOSS_CSV_HEADER: &str = "epoch,mse,kl,kl_weight";

impl LossTrace {
    pub fn from_fn(epochs: usize, f: impl Fn(usize) -> (f64, f64)) -> Self {
        LossTrace {
            records: (0..epochs)
                .map(|e| {
                    let (mse, kl) = f(e);
                    EpochRecord {
                        epoch: e,
                        mse,
                        kl,
                        kl_weight: 0.0,
                    }
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(LOSS_CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            let _ = writeln!(s, "{},{},{},{}", r.epoch, r.mse, r.kl, r.kl_weight);
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next().map(str::trim) != Some(LOSS_CSV_HEADER) {
            return Err(Error::InvalidArgument(format!(
                "loss csv must start with `{LOSS_CSV_HEADER}`"
            )));
        }
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let parse_err = || Error::InvalidArgument(format!("bad loss csv row {}: {line}", i + 2));
            if fields.len() != 4 {
                return Err(parse_err());
            }
            records.push(EpochRecord {
                epoch: fields[0].parse().map_err(|_| parse_err())?,
                mse: fields[1].parse().map_err(|_| parse_err())?,
                kl: fields[2].parse().map_err(|_| parse_err())?,
                kl_weight: fields[3].parse().map_err(|_| parse_err())?,
            });
        }
        Ok(LossTrace { records })
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}
