//! Practical variants of the buffer-driven algorithm: placeholder start-up
//! (PL), segment replacement (REP) and probability amplification (PA).

use serde::{Deserialize, Serialize};

use crate::algorithm::{bola_idle, AbrAlgorithm, Action, DecisionContext, UnplayedChunk};
use crate::bola::{decide_chunk, decide_tile, idle_threshold, BolaParams, DecisionVector};
use crate::error::Result;
use crate::media::BitrateLadder;

/// Step of the upward scan over virtual buffer levels, in segments.
pub const PL_SCAN_STEP: f64 = 0.1;
/// Unchanged picks for the most likely tile that end the start phase.
pub const STABLE_PICKS: usize = 3;

/// How the PL size limit is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlCapMode {
    /// Whole chunk must fit in `Q_avl * w_p / 2`.
    Aggregate,
    /// Every segment must fit in `Q_avl * w_p / (2D)`.
    PerTile,
}

fn pl_admissible(
    d: &DecisionVector,
    base: &DecisionVector,
    ladder: &BitrateLadder,
    cap: f64,
    mode: PlCapMode,
) -> bool {
    // A virtual level must not drop a tile the true buffer would fetch.
    let keeps_tiles = d.tiles().iter().zip(base.tiles()).all(|(v, b)| v.is_some() || b.is_none());
    let fits = match mode {
        PlCapMode::Aggregate => d.aggregate_size(ladder) <= cap,
        PlCapMode::PerTile => d.tiles().iter().flatten().all(|&m| ladder.level(m).size <= cap),
    };
    keeps_tiles && fits
}

/// Virtual buffer level used for level selection during start-up.
///
/// Scans `Q' = Q, Q + 0.1, ...` and returns the last level whose decision
/// still respects the size cap and fetches every tile the true level would.
/// Returns `q` unchanged when the decision at `q` already breaks the cap.
#[allow(clippy::too_many_arguments)]
pub fn pl_virtual_buffer(
    q: f64,
    q_avl: f64,
    w_p: f64,
    probs: &[f64],
    ladder: &BitrateLadder,
    params: &BolaParams,
    chunk_duration: f64,
    mode: PlCapMode,
) -> Result<f64> {
    let base = decide_chunk(q, probs, ladder, params, chunk_duration)?;
    let total = q_avl * w_p / 2.0;
    let cap = match mode {
        PlCapMode::Aggregate => total,
        PlCapMode::PerTile => total / probs.len().max(1) as f64,
    };
    if !pl_admissible(&base, &base, ladder, cap, mode) {
        return Ok(q);
    }
    // Past the idle threshold every tile is skipped, so the scan is finite.
    let limit = idle_threshold(params, ladder, chunk_duration);
    let mut best = q;
    let mut i = 1u64;
    loop {
        let candidate = q + i as f64 * PL_SCAN_STEP;
        if candidate >= limit {
            break;
        }
        let d = decide_chunk(candidate, probs, ladder, params, chunk_duration)?;
        if !pl_admissible(&d, &base, ladder, cap, mode) {
            break;
        }
        best = candidate;
        i += 1;
    }
    Ok(best)
}

/// PL wrapper. Idling is always decided at the true buffer level.
#[derive(Debug, Clone)]
pub struct PlBola {
    params: BolaParams,
    mode: PlCapMode,
    in_start: bool,
    last_top: Option<Option<usize>>,
    streak: usize,
}

impl PlBola {
    pub fn new(params: BolaParams, mode: PlCapMode) -> Self {
        PlBola {
            params,
            mode,
            in_start: true,
            last_top: None,
            streak: 0,
        }
    }

    pub fn in_start_phase(&self) -> bool {
        self.in_start
    }
}

fn top_tile(probs: &[f64]) -> usize {
    // First of the most likely tiles.
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

impl AbrAlgorithm for PlBola {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Action> {
        let v = ctx.video;
        let delta = v.chunk_duration;
        let d = decide_chunk(ctx.buffer, ctx.probs, &v.ladder, &self.params, delta)?;
        if d.is_idle() {
            return Ok(bola_idle(&self.params, ctx.probs, v));
        }
        let steady = idle_threshold(&self.params, &v.ladder, delta) * delta / v.num_tiles as f64;
        if ctx.buffered_seconds >= steady {
            self.in_start = false;
        }
        if !self.in_start {
            return Ok(Action::Download(d));
        }
        let q_virtual = pl_virtual_buffer(
            ctx.buffer,
            ctx.buffered_seconds,
            ctx.bandwidth_estimate,
            ctx.probs,
            &v.ladder,
            &self.params,
            delta,
            self.mode,
        )?;
        let chosen = decide_chunk(q_virtual, ctx.probs, &v.ladder, &self.params, delta)?;
        let top = chosen.get(top_tile(ctx.probs));
        if self.last_top == Some(top) {
            self.streak += 1;
        } else {
            self.streak = 1;
            self.last_top = Some(top);
        }
        if self.streak >= STABLE_PICKS {
            self.in_start = false;
        }
        log::trace!("pl chunk {} virtual Q {q_virtual:.3} (true {:.3})", ctx.chunk, ctx.buffer);
        Ok(Action::Download(chosen))
    }
}

/// Upgrade of a buffered, not yet played segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplacementPlan {
    /// 0-based chunk.
    pub chunk: usize,
    /// 0-based tile.
    pub tile: usize,
    pub new_level: usize,
    /// Levels gained, at least 2.
    pub gap: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RepChoice {
    DownloadNext(DecisionVector),
    Replace(ReplacementPlan),
}

/// Minimum level gap that justifies a replacement.
pub const REP_MIN_GAP: usize = 2;

/// First stored segment, in playback order, that sits at least two levels
/// below what the buffer-driven rule would pick for it now. Only tiles that
/// hold a segment are candidates.
pub fn find_replacement(
    q: f64,
    unplayed: &[UnplayedChunk],
    ladder: &BitrateLadder,
    params: &BolaParams,
    chunk_duration: f64,
) -> Option<ReplacementPlan> {
    for c in unplayed {
        for (tile, (&stored, &p)) in c.levels.iter().zip(&c.probs).enumerate() {
            let (Some(stored), Some(pick)) = (stored, decide_tile(q, p, ladder, params, chunk_duration)) else {
                continue;
            };
            if pick >= stored + REP_MIN_GAP {
                return Some(ReplacementPlan {
                    chunk: c.chunk,
                    tile,
                    new_level: pick,
                    gap: pick - stored,
                });
            }
        }
    }
    None
}

/// One REP decision. Below `danger` seconds of buffered video the next chunk
/// is always fetched.
#[allow(clippy::too_many_arguments)]
pub fn rep_decide(
    q: f64,
    q_avl: f64,
    danger: f64,
    probs: &[f64],
    unplayed: &[UnplayedChunk],
    ladder: &BitrateLadder,
    params: &BolaParams,
    chunk_duration: f64,
) -> Result<RepChoice> {
    if q_avl >= danger {
        if let Some(plan) = find_replacement(q, unplayed, ladder, params, chunk_duration) {
            return Ok(RepChoice::Replace(plan));
        }
    }
    Ok(RepChoice::DownloadNext(decide_chunk(q, probs, ladder, params, chunk_duration)?))
}

/// REP wrapper: at most one replacement between two other actions.
#[derive(Debug, Clone)]
pub struct RepBola {
    params: BolaParams,
    danger: f64,
    replaced: bool,
}

impl RepBola {
    /// `danger` is in seconds of buffered video.
    pub fn new(params: BolaParams, danger: f64) -> Self {
        RepBola {
            params,
            danger,
            replaced: false,
        }
    }
}

impl AbrAlgorithm for RepBola {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Action> {
        let v = ctx.video;
        let delta = v.chunk_duration;
        let unplayed = if self.replaced { &[][..] } else { ctx.unplayed };
        let choice = rep_decide(
            ctx.buffer,
            ctx.buffered_seconds,
            self.danger,
            ctx.probs,
            unplayed,
            &v.ladder,
            &self.params,
            delta,
        )?;
        Ok(match choice {
            RepChoice::Replace(plan) => {
                self.replaced = true;
                Action::Replace(plan)
            }
            RepChoice::DownloadNext(d) => {
                self.replaced = false;
                if d.is_idle() {
                    bola_idle(&self.params, ctx.probs, v)
                } else {
                    Action::Download(d)
                }
            }
        })
    }

    fn wants_unplayed(&self) -> bool {
        true
    }
}

fn amplified(probs: &[f64], f: f64) -> Vec<f64> {
    probs.iter().map(|&p| (p * f).min(1.0)).collect()
}

/// Amplification factors tried by PA: `1, 1 + step, ...` up to `D`.
pub fn pa_grid(num_tiles: usize, step: f64) -> Vec<f64> {
    let top = num_tiles.max(1) as f64;
    let mut out = vec![1.0];
    let mut i = 1u64;
    loop {
        let f = 1.0 + i as f64 * step;
        if f > top + 1e-12 {
            break;
        }
        out.push(f);
        i += 1;
    }
    out
}

/// One PA decision and the factor used. Picks the largest factor whose
/// decision fits in `0.5 * w_p * Q_avl` Mbit, falling back to factor 1.
#[allow(clippy::too_many_arguments)]
pub fn pa_decide(
    q: f64,
    q_avl: f64,
    probs: &[f64],
    w_p: f64,
    ladder: &BitrateLadder,
    params: &BolaParams,
    chunk_duration: f64,
    step: f64,
) -> Result<(DecisionVector, f64)> {
    let cap = 0.5 * w_p * q_avl;
    let plain = decide_chunk(q, probs, ladder, params, chunk_duration)?;
    let mut best = (plain, 1.0);
    for f in pa_grid(probs.len(), step).into_iter().skip(1) {
        let d = decide_chunk(q, &amplified(probs, f), ladder, params, chunk_duration)?;
        if d.aggregate_size(ladder) <= cap {
            best = (d, f);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone)]
pub struct PaBola {
    params: BolaParams,
    step: f64,
}

impl PaBola {
    pub fn new(params: BolaParams, step: f64) -> Self {
        PaBola { params, step }
    }
}

impl AbrAlgorithm for PaBola {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Action> {
        let v = ctx.video;
        let (d, f) = pa_decide(
            ctx.buffer,
            ctx.buffered_seconds,
            ctx.probs,
            ctx.bandwidth_estimate,
            &v.ladder,
            &self.params,
            v.chunk_duration,
            self.step,
        )?;
        log::trace!("pa chunk {} factor {f}", ctx.chunk);
        // An idle amplified decision implies an idle plain one.
        if d.is_idle() {
            Ok(bola_idle(&self.params, ctx.probs, v))
        } else {
            Ok(Action::Download(d))
        }
    }
}
