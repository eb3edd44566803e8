//! Sliding-window throughput estimate shared by the prediction-driven algorithms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    /// Seconds of history averaged.
    pub window: f64,
    /// Estimate (Mbit/s) used before any download overlaps the window.
    pub bootstrap: f64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            window: 5.0,
            bootstrap: 1.0,
        }
    }
}

impl PredictorConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.window > 0.0) || !(self.bootstrap > 0.0) {
            return Err(Error::validation("predictor window and bootstrap must be > 0"));
        }
        Ok(())
    }
}

/// A completed transfer of `size` Mbit over `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transfer {
    pub start: f64,
    pub end: f64,
    pub size: f64,
}

/// Mbit delivered inside `[now - window, now]` divided by the time spent
/// transferring inside that window. Transfers are assumed to run at a
/// uniform rate when prorated.
pub fn predict_bandwidth(history: &[Transfer], now: f64, config: &PredictorConfig) -> f64 {
    let from = now - config.window;
    let mut bits = 0.0;
    let mut busy = 0.0;
    for t in history {
        let dur = t.end - t.start;
        if dur <= 0.0 {
            continue;
        }
        let overlap = t.end.min(now) - t.start.max(from);
        if overlap > 0.0 {
            bits += t.size * overlap / dur;
            busy += overlap;
        }
    }
    if busy > 0.0 && bits > 0.0 {
        bits / busy
    } else {
        config.bootstrap
    }
}
