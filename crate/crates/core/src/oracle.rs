//! Dynamic-programming upper bound on the QoE of an offline scheduler that
//! knows the whole bandwidth trace in advance (but only the view
//! probabilities, not the realized view).
//!
//! The state after `k` chunks is the wall time `t` and the buffered video
//! `b` in seconds, both quantized to multiples of `t0`. Download times are
//! rounded down, which can only overstate the achievable reward.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::head::HeadModel;
use crate::media::VideoSpec;
use crate::trace::BandwidthTrace;

/// Largest number of per-chunk actions `(M + 1)^D` accepted.
pub const MAX_ACTIONS: u64 = 4096;
/// Largest number of states kept for one chunk index.
pub const MAX_STATES: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Time quantum, seconds.
    pub t0: f64,
    pub gamma: f64,
    /// Buffer capacity in segments; `Q_max * delta` seconds of video.
    pub q_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// Upper bound on the time-average QoE.
    pub bound: f64,
    /// States expanded over all chunks.
    pub states_visited: usize,
    /// Largest state frontier of a single chunk.
    pub peak_states: usize,
}

/// Outcome of one action from a quantized state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Step {
    /// Time advance, already quantized.
    pub dt: f64,
    pub b: f64,
    pub reward: f64,
}

/// Every non-empty level vector, as 1-based levels with 0 for skipped tiles.
pub(crate) fn actions(num_tiles: usize, num_levels: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx = vec![0usize; num_tiles];
    loop {
        let mut pos = num_tiles;
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            if idx[pos] < num_levels {
                idx[pos] += 1;
                break;
            }
            idx[pos] = 0;
        }
        out.push(idx.clone());
    }
}

/// Applies one action at time `t` with `b` seconds buffered.
pub(crate) fn step(
    action: &[usize],
    t: f64,
    b: f64,
    probs: &[f64],
    video: &VideoSpec,
    trace: &BandwidthTrace,
    cfg: &OracleConfig,
) -> Result<Step> {
    let delta = video.chunk_duration;
    let ladder = &video.ladder;
    let n = action.iter().filter(|&&m| m > 0).count() as f64;
    let size: f64 = action.iter().filter(|&&m| m > 0).map(|&m| ladder.level(m).size).sum();
    let download = trace.download_finish(t, size)? - t;
    let t_wait = download.max(b + n * delta - cfg.q_max * delta).max(0.0);
    let quantized = (t_wait / cfg.t0).floor() * cfg.t0;
    // A download shorter than one quantum keeps the clock and divides by its
    // unrounded length.
    let divisor = if quantized > 0.0 { quantized } else { t_wait };
    let rebuffer = (quantized - b).max(0.0);
    let next_b = b - quantized + rebuffer + n * delta;
    let level_sum: usize = action.iter().sum();
    let mut reward = 0.0;
    for (&m, &p) in action.iter().zip(probs) {
        if m > 0 {
            let v = ladder.level(m).utility;
            reward += (v * p + cfg.gamma * delta) * level_sum as f64 / (m as f64 * divisor);
        }
    }
    Ok(Step { dt: quantized, b: next_b, reward })
}

fn slot(x: f64, t0: f64) -> i64 {
    (x / t0).round() as i64
}

/// Runs the recursion and returns `max r(K, t, b) / K`.
pub fn dp_off(
    video: &VideoSpec,
    trace: &BandwidthTrace,
    head: &HeadModel,
    cfg: &OracleConfig,
) -> Result<OracleResult> {
    if !(cfg.t0 > 0.0) || !(cfg.gamma >= 0.0) || !(cfg.q_max >= video.num_tiles as f64) {
        return Err(Error::validation("oracle needs t0 > 0, gamma ≥ 0 and Q_max ≥ D"));
    }
    if head.num_chunks() != video.num_chunks || head.num_tiles() != video.num_tiles {
        return Err(Error::validation("head model does not match the video"));
    }
    let per_chunk = (video.ladder.len() as u64 + 1).checked_pow(video.num_tiles as u32);
    if per_chunk.is_none_or(|a| a > MAX_ACTIONS) {
        return Err(Error::OracleCap(format!(
            "(M+1)^D exceeds {MAX_ACTIONS} for M={}, D={}",
            video.ladder.len(),
            video.num_tiles
        )));
    }
    let acts = actions(video.num_tiles, video.ladder.len());
    let t0 = cfg.t0;

    let mut layer: BTreeMap<(i64, i64), f64> = BTreeMap::new();
    layer.insert((0, 0), 0.0);
    let mut visited = 0usize;
    let mut peak = 1usize;
    for k in 0..video.num_chunks {
        let probs = head.row(k);
        let mut next: BTreeMap<(i64, i64), f64> = BTreeMap::new();
        for (&(ts, bs), &r) in &layer {
            visited += 1;
            let (t, b) = (ts as f64 * t0, bs as f64 * t0);
            for a in &acts {
                let s = step(a, t, b, probs, video, trace, cfg)?;
                let key = (ts + slot(s.dt, t0), slot(s.b, t0));
                let value = r + s.reward;
                next.entry(key)
                    .and_modify(|e| {
                        if value > *e {
                            *e = value
                        }
                    })
                    .or_insert(value);
            }
            if next.len() > MAX_STATES {
                return Err(Error::OracleCap(format!("more than {MAX_STATES} states at chunk {k}")));
            }
        }
        peak = peak.max(next.len());
        log::debug!("oracle chunk {k}: {} states", next.len());
        layer = next;
    }
    let best = layer.values().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(OracleResult {
        bound: best / video.num_chunks as f64,
        states_visited: visited,
        peak_states: peak,
    })
}

/// Whether an online result respects the bound.
pub fn dominance_check(bound: f64, online_qoe: f64) -> bool {
    bound >= online_qoe - 1e-9
}
