//! Buffer-driven per-chunk bitrate selection for tiled video.
//!
//! At every decision instant the buffer level `Q` (in segments) and the
//! per-tile view probabilities of the next chunk are known. Each tile is
//! scored independently:
//!
//! ```text
//! score(m) = (V * (v_m * p + gamma * delta) - Q) / S_m
//! ```
//!
//! and gets the level with the largest positive score, or nothing when no
//! score is positive. A chunk where every tile gets nothing means the
//! player idles and retries later.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::media::{BitrateLadder, BitrateLevel};

/// How long to idle when the decision downloads nothing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaitPolicy {
    /// Wait this many seconds, then decide again.
    Fixed(f64),
    /// Wait exactly until the draining buffer makes some tile worth downloading.
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BolaParams {
    /// Control parameter trading QoE against buffer occupancy.
    pub v: f64,
    /// Weight of playback smoothness, utility per second.
    pub gamma: f64,
    pub wait: WaitPolicy,
}

impl BolaParams {
    pub fn new(v: f64, gamma: f64) -> Self {
        BolaParams {
            v,
            gamma,
            wait: WaitPolicy::Dynamic,
        }
    }

    pub fn with_wait(mut self, wait: WaitPolicy) -> Self {
        self.wait = wait;
        self
    }

    /// Checks `0 < V < (Q_max - D) / (v_M + gamma * delta)` and `gamma > 0`.
    pub fn check(
        &self,
        q_max: f64,
        num_tiles: usize,
        ladder: &BitrateLadder,
        chunk_duration: f64,
    ) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::validation("gamma must be > 0"));
        }
        let bound = v_upper_bound(
            q_max,
            num_tiles,
            ladder.top().utility,
            self.gamma,
            chunk_duration,
        );
        if !(self.v > 0.0 && self.v < bound) {
            return Err(Error::validation(format!(
                "V={} outside (0, {bound}) for Q_max={q_max}",
                self.v
            )));
        }
        if let WaitPolicy::Fixed(d) = self.wait {
            if !(d > 0.0) {
                return Err(Error::validation("fixed wait must be > 0"));
            }
        }
        Ok(())
    }
}

/// Per-tile level choice for one chunk; `None` means the tile is skipped.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DecisionVector(pub Vec<Option<usize>>);

impl DecisionVector {
    pub fn empty(num_tiles: usize) -> Self {
        DecisionVector(vec![None; num_tiles])
    }

    pub fn uniform(num_tiles: usize, level: usize) -> Self {
        DecisionVector(vec![Some(level); num_tiles])
    }

    pub fn tiles(&self) -> &[Option<usize>] {
        &self.0
    }

    pub fn get(&self, tile: usize) -> Option<usize> {
        self.0[tile]
    }

    /// True when no tile is downloaded.
    pub fn is_idle(&self) -> bool {
        self.0.iter().all(Option::is_none)
    }

    /// Number of downloaded segments.
    pub fn count(&self) -> usize {
        self.0.iter().filter(|c| c.is_some()).count()
    }

    /// Total Mbit of the selected segments.
    pub fn aggregate_size(&self, ladder: &BitrateLadder) -> f64 {
        self.0
            .iter()
            .flatten()
            .map(|&m| ladder.level(m).size)
            .sum()
    }

    /// Level indices with 0 for skipped tiles.
    pub fn as_indices(&self) -> Vec<usize> {
        self.0.iter().map(|c| c.unwrap_or(0)).collect()
    }
}

/// Drift-plus-penalty score of downloading `level` for a tile viewed with
/// probability `p` while `q` segments are buffered.
pub fn score(level: &BitrateLevel, p: f64, q: f64, params: &BolaParams, chunk_duration: f64) -> f64 {
    (numerator(level.utility, p, params, chunk_duration) - q) / level.size
}

fn numerator(utility: f64, p: f64, params: &BolaParams, chunk_duration: f64) -> f64 {
    params.v * (utility * p + params.gamma * chunk_duration)
}

/// Best level for a single tile, `None` if every score is ≤ 0.
/// Ties keep the smaller level.
pub fn decide_tile(
    q: f64,
    p: f64,
    ladder: &BitrateLadder,
    params: &BolaParams,
    chunk_duration: f64,
) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for level in ladder.levels() {
        let s = score(level, p, q, params, chunk_duration);
        if s > 0.0 && best.is_none_or(|(_, b)| s > b) {
            best = Some((level.index, s));
        }
    }
    best.map(|(m, _)| m)
}

pub(crate) fn check_probs(probs: &[f64]) -> Result<()> {
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::validation(format!("probability {p} outside [0, 1]")));
    }
    Ok(())
}

/// Maximiser of the per-chunk objective. The objective is a sum of
/// independent per-tile terms under the one-level-per-tile constraint, so
/// the per-tile argmax is the joint argmax.
pub fn decide_chunk(
    q: f64,
    probs: &[f64],
    ladder: &BitrateLadder,
    params: &BolaParams,
    chunk_duration: f64,
) -> Result<DecisionVector> {
    check_probs(probs)?;
    Ok(DecisionVector(
        probs
            .iter()
            .map(|&p| decide_tile(q, p, ladder, params, chunk_duration))
            .collect(),
    ))
}

/// Sum of per-tile scores of a decision (the quantity `decide_chunk` maximises).
pub fn objective(
    decision: &DecisionVector,
    q: f64,
    probs: &[f64],
    ladder: &BitrateLadder,
    params: &BolaParams,
    chunk_duration: f64,
) -> f64 {
    decision
        .tiles()
        .iter()
        .zip(probs)
        .filter_map(|(c, &p)| c.map(|m| score(ladder.level(m), p, q, params, chunk_duration)))
        .sum()
}

/// Largest buffer level (segments) reachable at a decision instant:
/// `V (v_M + gamma delta) + D`.
pub fn max_buffer_bound(params: &BolaParams, ladder: &BitrateLadder, num_tiles: usize, chunk_duration: f64) -> f64 {
    idle_threshold(params, ladder, chunk_duration) + num_tiles as f64
}

/// Supremum of admissible `V` for a buffer of `q_max` segments.
pub fn v_upper_bound(q_max: f64, num_tiles: usize, top_utility: f64, gamma: f64, chunk_duration: f64) -> f64 {
    (q_max - num_tiles as f64) / (top_utility + gamma * chunk_duration)
}

/// Buffer level above which every tile is skipped: `V (v_M + gamma delta)`.
pub fn idle_threshold(params: &BolaParams, ladder: &BitrateLadder, chunk_duration: f64) -> f64 {
    numerator(ladder.top().utility, 1.0, params, chunk_duration)
}

/// Buffer level above which a tile viewed with probability `p` is skipped.
pub fn tile_cutoff(p: f64, params: &BolaParams, ladder: &BitrateLadder, chunk_duration: f64) -> f64 {
    ladder
        .levels()
        .iter()
        .map(|l| numerator(l.utility, p, params, chunk_duration))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// One constant piece of the level-versus-buffer staircase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    /// Buffer level (segments) where this piece starts.
    pub from_q: f64,
    pub level: Option<usize>,
}

/// Exact piecewise-constant map from buffer level to the chosen level of a
/// tile with probability `p`, for `Q >= 0`. Each step holds on the open
/// interval up to the next step's `from_q`.
pub fn threshold_table(
    p: f64,
    ladder: &BitrateLadder,
    params: &BolaParams,
    chunk_duration: f64,
) -> Vec<Step> {
    // Every score is a line in Q; choices can only change where two lines
    // cross or a line crosses zero.
    let lines: Vec<(f64, f64)> = ladder
        .levels()
        .iter()
        .map(|l| (numerator(l.utility, p, params, chunk_duration), l.size))
        .collect();
    let mut cuts: Vec<f64> = vec![0.0];
    for (i, &(na, sa)) in lines.iter().enumerate() {
        cuts.push(na);
        for &(nb, sb) in &lines[i + 1..] {
            if sa != sb {
                cuts.push((na * sb - nb * sa) / (sb - sa));
            }
        }
    }
    cuts.retain(|c| c.is_finite() && *c >= 0.0);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut steps: Vec<Step> = Vec::new();
    for (i, &c) in cuts.iter().enumerate() {
        let probe = match cuts.get(i + 1) {
            Some(&next) => 0.5 * (c + next),
            None => c + 1.0,
        };
        let level = decide_tile(probe, p, ladder, params, chunk_duration);
        if steps.last().is_none_or(|s| s.level != level) {
            steps.push(Step { from_q: c, level });
        }
    }
    steps
}
