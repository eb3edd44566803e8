//! Event-driven streaming session.
//!
//! Segments are fetched one at a time in ascending tile order. The decision
//! for chunk `k + 1` is taken when the last segment of chunk `k` arrives.
//! Playback starts when chunk 1 is complete; chunk `k` starts rendering at
//! `max(end of chunk k-1, arrival of its viewed segment)`. A chunk whose
//! viewed tile was never fetched renders blank for a full chunk duration.

use serde::{Deserialize, Serialize};

use crate::algorithm::{AbrAlgorithm, Action, AlgorithmSpec, DecisionContext, UnplayedChunk, Wait};
use crate::bola::DecisionVector;
use crate::error::{Error, Result};
use crate::head::{noisy_probs, HeadModel};
use crate::heuristics::ReplacementPlan;
use crate::media::{validate_video, VideoSpec};
use crate::predictor::{predict_bandwidth, PredictorConfig, Transfer};
use crate::trace::BandwidthTrace;

/// Idle actions in a row that may fail to advance the clock before the
/// session is declared stuck.
const MAX_STALLED_IDLES: usize = 1000;
/// Upper bound on decide calls per chunk.
const MAX_CALLS_PER_CHUNK: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub video: VideoSpec,
    pub algorithm: AlgorithmSpec,
    pub trace: BandwidthTrace,
    pub head: HeadModel,
    /// Buffer capacity in segments.
    pub q_max: f64,
    pub predictor: PredictorConfig,
    /// Seeds the viewed-tile draw when the head model has no fixed sequence.
    pub rng_seed: u64,
    /// Smoothness weight used when scoring the session.
    pub qoe_gamma: f64,
    /// Prediction error added per chunk of look-ahead; 0 gives exact probabilities.
    pub noise_rate: f64,
}

impl SessionConfig {
    pub fn check(&self) -> Result<()> {
        let problems = validate_video(&self.video);
        if !problems.is_empty() {
            return Err(Error::validation(problems.join("; ")));
        }
        let v = &self.video;
        if self.head.num_chunks() != v.num_chunks || self.head.num_tiles() != v.num_tiles {
            return Err(Error::validation(format!(
                "head model is {}x{}, video is {}x{}",
                self.head.num_chunks(),
                self.head.num_tiles(),
                v.num_chunks,
                v.num_tiles
            )));
        }
        if !(self.q_max >= v.num_tiles as f64) {
            return Err(Error::validation(format!(
                "Q_max={} must hold one full chunk ({} segments)",
                self.q_max, v.num_tiles
            )));
        }
        if !(self.qoe_gamma >= 0.0) || !(self.noise_rate >= 0.0) {
            return Err(Error::validation("qoe_gamma and noise_rate must be ≥ 0"));
        }
        self.predictor.check()?;
        self.algorithm.check(v, self.q_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentLog {
    pub tile: usize,
    pub level: usize,
    pub start: f64,
    pub finish: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkLog {
    pub chunk: usize,
    /// Time of the decide call that produced the download (or skip).
    pub decision_time: f64,
    pub buffer_at_decision: f64,
    pub decision: DecisionVector,
    /// Start of the first segment, after any wait for buffer space.
    pub download_start: f64,
    pub download_end: f64,
    pub segments: Vec<SegmentLog>,
    pub idle_waits: Vec<(f64, f64)>,
    pub viewed_tile: usize,
    /// Level of the viewed tile when rendering starts; `None` renders blank.
    pub rendered_level: Option<usize>,
    /// Arrival of the segment that is rendered, or chunk completion if blank.
    pub ready: f64,
    pub render_start: f64,
    /// Stall right before this chunk (zero for the first chunk).
    pub stall: f64,
}

impl ChunkLog {
    pub fn is_blank(&self) -> bool {
        self.rendered_level.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplacementLog {
    pub chunk: usize,
    pub tile: usize,
    pub old_level: usize,
    pub new_level: usize,
    pub start: f64,
    pub finish: f64,
    /// Whether the new segment arrived before the chunk started rendering.
    pub effective: bool,
}

/// Buffer state seen by one decide call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionPoint {
    pub time: f64,
    pub chunk: usize,
    pub buffer: f64,
    pub buffered_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub chunk_duration: f64,
    pub chunks: Vec<ChunkLog>,
    pub replacements: Vec<ReplacementLog>,
    pub decision_points: Vec<DecisionPoint>,
    pub playback_start: f64,
    pub rebuffers: Vec<(f64, f64)>,
    pub t_end: f64,
}

impl SessionLog {
    /// Buffer level in segments at time `t`, counting only chunks committed by then.
    pub fn buffer_at(&self, t: f64) -> f64 {
        self.chunks
            .iter()
            .filter(|c| c.download_end <= t)
            .map(|c| c.segments.len() as f64 * drain_fraction(t, c.render_start, self.chunk_duration))
            .sum()
    }

    /// `(t, Q(t))` on a regular grid from 0 to the end of playback.
    pub fn buffer_series(&self, step: f64) -> Vec<(f64, f64)> {
        let n = (self.t_end / step).floor() as usize;
        (0..=n).map(|i| {
            let t = i as f64 * step;
            (t, self.buffer_at(t))
        }).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Share of a chunk still unplayed at `t` if it starts rendering at `start`.
fn drain_fraction(t: f64, start: f64, chunk_duration: f64) -> f64 {
    if t <= start {
        1.0
    } else if t >= start + chunk_duration {
        0.0
    } else {
        1.0 - (t - start) / chunk_duration
    }
}

struct Committed {
    render_start: f64,
    segments: usize,
    levels: Vec<Option<usize>>,
}

struct Buffer {
    delta: f64,
    chunks: Vec<Committed>,
}

impl Buffer {
    fn level(&self, t: f64) -> f64 {
        self.chunks
            .iter()
            .map(|c| c.segments as f64 * drain_fraction(t, c.render_start, self.delta))
            .sum()
    }

    fn seconds(&self, t: f64) -> f64 {
        self.chunks
            .iter()
            .filter(|c| c.segments > 0)
            .map(|c| self.delta * drain_fraction(t, c.render_start, self.delta))
            .sum()
    }

    /// Earliest time `>= from` with level `<= target`. The level is piecewise
    /// linear between render starts and ends, so the crossing is exact.
    fn time_level_at_most(&self, target: f64, from: f64) -> Option<f64> {
        let mut prev = (from, self.level(from));
        if prev.1 <= target {
            return Some(from);
        }
        let mut marks: Vec<f64> = self
            .chunks
            .iter()
            .flat_map(|c| [c.render_start, c.render_start + self.delta])
            .filter(|&m| m > from)
            .collect();
        marks.sort_by(f64::total_cmp);
        for m in marks {
            let q = self.level(m);
            if q <= target {
                let t = prev.0 + (prev.1 - target) / (prev.1 - q) * (m - prev.0);
                return Some(t.clamp(prev.0, m));
            }
            prev = (m, q);
        }
        None
    }

    /// Index of the chunk playing (or next to play) at `t`.
    fn playhead_chunk(&self, t: f64) -> usize {
        self.chunks
            .iter()
            .take_while(|c| c.render_start + self.delta <= t)
            .count()
    }
}

/// Runs a session with the configured algorithm and a viewed-tile sequence
/// drawn from the head model.
pub fn run_session(config: &SessionConfig) -> Result<SessionLog> {
    config.check()?;
    let viewed = config.head.realize(config.rng_seed);
    let mut algo = config.algorithm.build(&config.video);
    simulate(config, algo.as_mut(), &viewed)
}

fn check_decision(d: &DecisionVector, video: &VideoSpec) -> Result<()> {
    if d.tiles().len() != video.num_tiles {
        return Err(Error::validation(format!(
            "decision has {} tiles, video {}",
            d.tiles().len(),
            video.num_tiles
        )));
    }
    if let Some(m) = d.tiles().iter().flatten().find(|&&m| m == 0 || m > video.ladder.len()) {
        return Err(Error::validation(format!("level {m} outside the ladder")));
    }
    Ok(())
}

/// Runs a session with an explicit algorithm and viewed-tile sequence.
/// Only `head` rows, not its stored sequence, are used here.
#[allow(clippy::needless_range_loop)]
pub fn simulate(config: &SessionConfig, algo: &mut dyn AbrAlgorithm, viewed: &[usize]) -> Result<SessionLog> {
    let video = &config.video;
    let k_total = video.num_chunks;
    let delta = video.chunk_duration;
    if viewed.len() != k_total || viewed.iter().any(|&d| d >= video.num_tiles) {
        return Err(Error::validation("viewed sequence does not match the video"));
    }

    let mut buf = Buffer { delta, chunks: Vec::with_capacity(k_total) };
    let mut history: Vec<Transfer> = Vec::new();
    let mut chunks: Vec<ChunkLog> = Vec::with_capacity(k_total);
    let mut replacements: Vec<ReplacementLog> = Vec::new();
    let mut points: Vec<DecisionPoint> = Vec::new();
    let mut t = 0.0f64;
    let mut playback_start = 0.0;
    let mut prev_end = 0.0f64;

    for k in 0..k_total {
        let mut idle_waits = Vec::new();
        let mut stalled_idles = 0usize;
        let mut calls = 0usize;
        loop {
            calls += 1;
            if calls > MAX_CALLS_PER_CHUNK {
                return Err(Error::Stuck(format!("chunk {k}: too many decisions")));
            }
            let current = buf.playhead_chunk(t);
            let probs = noisy_probs(&config.head, current, k, config.noise_rate);
            let unplayed: Vec<UnplayedChunk> = if algo.wants_unplayed() {
                buf.chunks
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| c.render_start > t)
                    .map(|(j, c)| UnplayedChunk {
                        chunk: j,
                        levels: c.levels.clone(),
                        probs: noisy_probs(&config.head, current, j, config.noise_rate),
                    })
                    .collect()
            } else {
                Vec::new()
            };
            let q = buf.level(t);
            let q_avl = buf.seconds(t);
            points.push(DecisionPoint { time: t, chunk: k, buffer: q, buffered_seconds: q_avl });
            let ctx = DecisionContext {
                chunk: k,
                now: t,
                buffer: q,
                buffered_seconds: q_avl,
                probs: &probs,
                bandwidth_estimate: predict_bandwidth(&history, t, &config.predictor),
                video,
                q_max: config.q_max,
                unplayed: &unplayed,
            };
            let action = algo.decide(&ctx)?;
            log::trace!("t={t:.4} chunk {k} Q={q:.4}: {action:?}");
            let decision = match action {
                Action::Download(d) => {
                    check_decision(&d, video)?;
                    if d.is_idle() {
                        return Err(Error::validation("download action with no segments"));
                    }
                    d
                }
                Action::Skip => DecisionVector::empty(video.num_tiles),
                Action::Idle(wait) => {
                    let until = match wait {
                        Wait::Seconds(s) if s > 0.0 && s.is_finite() => t + s,
                        Wait::Seconds(s) => return Err(Error::validation(format!("idle of {s} s"))),
                        Wait::UntilBufferBelow(x) => buf
                            .time_level_at_most(x - 1e-9, t)
                            .ok_or_else(|| Error::Stuck(format!("chunk {k}: buffer never drains below {x}")))?,
                    };
                    if until > t {
                        idle_waits.push((t, until));
                        t = until;
                        stalled_idles = 0;
                    } else {
                        stalled_idles += 1;
                        if stalled_idles > MAX_STALLED_IDLES {
                            return Err(Error::Stuck(format!("chunk {k}: idling without progress at t={t}")));
                        }
                    }
                    continue;
                }
                Action::Replace(plan) => {
                    let log = replace(plan, &mut buf, &mut history, &config.trace, video, t)?;
                    t = log.finish;
                    replacements.push(log);
                    continue;
                }
            };

            // Wait for room in the buffer, then fetch tiles in order.
            let n = decision.count();
            let decision_time = t;
            let start = buf
                .time_level_at_most(config.q_max - n as f64, t)
                .ok_or_else(|| Error::Stuck(format!("chunk {k}: no buffer space for {n} segments")))?;
            let mut cur = start;
            let mut segments = Vec::with_capacity(n);
            for (tile, m) in decision.tiles().iter().enumerate() {
                let Some(m) = *m else { continue };
                let size = video.ladder.level(m).size;
                let finish = config.trace.download_finish(cur, size)?;
                history.push(Transfer { start: cur, end: finish, size });
                segments.push(SegmentLog { tile, level: m, start: cur, finish });
                cur = finish;
            }
            let end = cur;
            let view = viewed[k];
            let viewed_seg = segments.iter().find(|s| s.tile == view).copied();
            let ready = viewed_seg.map_or(end, |s| s.finish);
            let (render_start, stall) = if k == 0 {
                playback_start = end;
                (end, 0.0)
            } else {
                let s = prev_end.max(ready);
                (s, s - prev_end)
            };
            prev_end = render_start + delta;
            buf.chunks.push(Committed {
                render_start,
                segments: n,
                levels: decision.tiles().to_vec(),
            });
            chunks.push(ChunkLog {
                chunk: k,
                decision_time,
                buffer_at_decision: q,
                decision,
                download_start: start,
                download_end: end,
                segments,
                idle_waits,
                viewed_tile: view,
                rendered_level: viewed_seg.map(|s| s.level),
                ready,
                render_start,
                stall,
            });
            t = end;
            break;
        }
    }

    // Upgrades that landed before rendering change what the user sees.
    for r in replacements.iter().filter(|r| r.effective) {
        let c = &mut chunks[r.chunk];
        if c.viewed_tile == r.tile {
            c.rendered_level = Some(r.new_level);
        }
    }
    let rebuffers = chunks
        .iter()
        .filter(|c| c.stall > 0.0)
        .map(|c| (c.render_start - c.stall, c.render_start))
        .collect();
    Ok(SessionLog {
        chunk_duration: delta,
        chunks,
        replacements,
        decision_points: points,
        playback_start,
        rebuffers,
        t_end: prev_end,
    })
}

fn replace(
    plan: ReplacementPlan,
    buf: &mut Buffer,
    history: &mut Vec<Transfer>,
    trace: &BandwidthTrace,
    video: &VideoSpec,
    t: f64,
) -> Result<ReplacementLog> {
    let invalid = |why: &str| Err(Error::validation(format!("replacement {plan:?}: {why}")));
    let Some(c) = buf.chunks.get_mut(plan.chunk) else {
        return invalid("chunk not buffered");
    };
    if c.render_start <= t {
        return invalid("chunk already playing");
    }
    let Some(&Some(old)) = c.levels.get(plan.tile) else {
        return invalid("tile holds no segment");
    };
    if plan.new_level <= old || plan.new_level > video.ladder.len() {
        return invalid("level does not go up");
    }
    let size = video.ladder.level(plan.new_level).size;
    let finish = trace.download_finish(t, size)?;
    history.push(Transfer { start: t, end: finish, size });
    let effective = finish <= c.render_start;
    if effective {
        c.levels[plan.tile] = Some(plan.new_level);
    }
    Ok(ReplacementLog {
        chunk: plan.chunk,
        tile: plan.tile,
        old_level: old,
        new_level: plan.new_level,
        start: t,
        finish,
        effective,
    })
}

/// Aggregate quality measures of one session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    /// Expected viewed utility per second.
    pub utility: f64,
    /// Downloaded playback seconds per second.
    pub smoothness: f64,
    pub qoe: f64,
    pub rebuffer_ratio: f64,
    /// Mbit/s of the viewed tile, blank chunks counting as 0.
    pub avg_playing_bitrate: f64,
    pub playback_delay: f64,
    /// Mean absolute bitrate change between consecutive chunks, Mbit/s.
    pub oscillation: f64,
    pub reaction_time: f64,
    pub total_stall: f64,
    pub blank_chunks: usize,
    pub t_end: f64,
}

/// Consecutive chunks with the same pick for the most likely tile that
/// mark the end of the reaction period.
const REACTION_RUN: usize = 3;

pub fn compute_metrics(log: &SessionLog, video: &VideoSpec, head: &HeadModel, gamma: f64) -> SessionMetrics {
    let delta = video.chunk_duration;
    let ladder = &video.ladder;
    let t_end = log.t_end;
    let k_total = log.chunks.len();

    // Levels per tile as they stood at render time.
    let mut final_levels: Vec<Vec<Option<usize>>> =
        log.chunks.iter().map(|c| c.decision.tiles().to_vec()).collect();
    for r in log.replacements.iter().filter(|r| r.effective) {
        final_levels[r.chunk][r.tile] = Some(r.new_level);
    }
    let mut expected_utility = 0.0;
    for (k, levels) in final_levels.iter().enumerate() {
        for (d, m) in levels.iter().enumerate() {
            if let Some(m) = *m {
                expected_utility += head.row(k)[d] * ladder.level(m).utility;
            }
        }
    }
    let downloads = log.chunks.iter().map(|c| c.segments.len()).sum::<usize>() + log.replacements.len();
    let utility = expected_utility / t_end;
    let smoothness = downloads as f64 * delta / t_end;

    let bitrates: Vec<f64> = log
        .chunks
        .iter()
        .map(|c| c.rendered_level.map_or(0.0, |m| ladder.level(m).bitrate))
        .collect();
    let blank_chunks = log.chunks.iter().filter(|c| c.is_blank()).count();
    let total_stall: f64 = log.chunks.iter().map(|c| c.stall).sum();
    let rebuffer_ratio = ((total_stall + blank_chunks as f64 * delta) / (k_total as f64 * delta)).min(1.0);

    let delays: Vec<f64> = log
        .chunks
        .iter()
        .filter(|c| !c.is_blank())
        .map(|c| {
            let arrived = log
                .replacements
                .iter()
                .filter(|r| r.effective && r.chunk == c.chunk && r.tile == c.viewed_tile)
                .map(|r| r.finish)
                .fold(c.ready, f64::max);
            c.render_start - arrived
        })
        .collect();
    let playback_delay = mean(&delays);
    let oscillation = mean(&bitrates.windows(2).map(|w| (w[1] - w[0]).abs()).collect::<Vec<_>>());

    SessionMetrics {
        utility,
        smoothness,
        qoe: utility + gamma * smoothness,
        rebuffer_ratio,
        avg_playing_bitrate: mean(&bitrates),
        playback_delay,
        oscillation,
        reaction_time: reaction_time(log, head),
        total_stall,
        blank_chunks,
        t_end,
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn reaction_time(log: &SessionLog, head: &HeadModel) -> f64 {
    let Some(first) = log.chunks.first() else {
        return 0.0;
    };
    let picks: Vec<Option<usize>> = log
        .chunks
        .iter()
        .map(|c| {
            let row = head.row(c.chunk);
            let mut top = 0;
            for (d, &p) in row.iter().enumerate() {
                if p > row[top] {
                    top = d;
                }
            }
            c.decision.get(top)
        })
        .collect();
    let settled = (0..picks.len().saturating_sub(REACTION_RUN - 1))
        .find(|&i| picks[i..i + REACTION_RUN].iter().all(|p| *p == picks[i]))
        .unwrap_or(picks.len() - 1);
    log.chunks[settled].decision_time - first.decision_time
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithm::{AlgoParams, AlgorithmId};
    use crate::media::{small_ladder, BitrateLadder};

    fn config(video: VideoSpec, trace: BandwidthTrace, head: HeadModel, q_max: f64) -> SessionConfig {
        SessionConfig {
            video,
            algorithm: AlgorithmSpec::new(AlgorithmId::Bola360, AlgoParams::new(1.0, 0.1)),
            trace,
            head,
            q_max,
            predictor: PredictorConfig::default(),
            rng_seed: 1,
            qoe_gamma: 0.1,
            noise_rate: 0.0,
        }
    }

    struct Fixed(Vec<Action>);

    impl AbrAlgorithm for Fixed {
        fn decide(&mut self, _: &DecisionContext<'_>) -> Result<Action> {
            Ok(if self.0.len() > 1 { self.0.remove(0) } else { self.0[0].clone() })
        }
    }

    #[test]
    fn single_chunk_session() {
        let ladder = BitrateLadder::from_sizes(&[1.0], 5.0).unwrap();
        let video = VideoSpec::new(1, 1, 5.0, ladder).unwrap();
        let cfg = config(video.clone(), BandwidthTrace::constant(1.0).unwrap(), HeadModel::uniform(1, 1), 4.0);
        let mut algo = Fixed(vec![Action::Download(DecisionVector::uniform(1, 1))]);
        let log = simulate(&cfg, &mut algo, &[0]).unwrap();
        let c = &log.chunks[0];
        assert_eq!((c.download_start, c.download_end), (0.0, 1.0));
        assert_eq!(c.render_start, 1.0);
        assert_eq!(log.t_end, 6.0);
        assert!(log.rebuffers.is_empty());
        let m = compute_metrics(&log, &video, &cfg.head, 0.1);
        assert_eq!(m.utility, 0.0);
        assert!((m.smoothness - 5.0 / 6.0).abs() < 1e-12);
        assert!((m.qoe - 0.083333).abs() < 1e-6);
        assert_eq!(m.rebuffer_ratio, 0.0);
        assert_eq!(m.playback_delay, 0.0);
    }

    #[test]
    fn all_blank_session() {
        let video = VideoSpec::new(4, 2, 5.0, small_ladder()).unwrap();
        let cfg = config(video.clone(), BandwidthTrace::constant(5.0).unwrap(), HeadModel::uniform(4, 2), 10.0);
        let mut algo = Fixed(vec![Action::Skip]);
        let log = simulate(&cfg, &mut algo, &[0, 1, 0, 1]).unwrap();
        let m = compute_metrics(&log, &video, &cfg.head, 0.1);
        assert_eq!(m.rebuffer_ratio, 1.0);
        assert_eq!(m.avg_playing_bitrate, 0.0);
        assert_eq!(m.blank_chunks, 4);
        assert_eq!(m.qoe, 0.0);
        assert_eq!(log.t_end, 20.0);
    }

    // Three chunks, two tiles, 2 Mbit/s. Sizes 1 and 2 Mbit over 5 s chunks.
    // chunk 0: both tiles at level 1 -> [0,0.5] and [0.5,1]; plays [1,6]
    // chunk 1: tile 1 at level 2 -> [1,2]; viewed tile 0 missing -> blank, plays [6,11]
    // chunk 2: tile 0 at level 2 -> [2,3]; plays [11,16]
    #[test]
    fn three_chunk_fixture() {
        let ladder = BitrateLadder::from_sizes(&[1.0, 2.0], 5.0).unwrap();
        let video = VideoSpec::new(3, 2, 5.0, ladder).unwrap();
        let head = HeadModel::repeated(vec![0.75, 0.25], 3).unwrap();
        let cfg = config(video.clone(), BandwidthTrace::constant(2.0).unwrap(), head.clone(), 10.0);
        let mut algo = Fixed(vec![
            Action::Download(DecisionVector(vec![Some(1), Some(1)])),
            Action::Download(DecisionVector(vec![None, Some(2)])),
            Action::Download(DecisionVector(vec![Some(2), None])),
        ]);
        let log = simulate(&cfg, &mut algo, &[0, 0, 0]).unwrap();
        let starts: Vec<f64> = log.chunks.iter().map(|c| c.render_start).collect();
        assert_eq!(starts, vec![1.0, 6.0, 11.0]);
        assert_eq!(log.t_end, 16.0);
        assert_eq!(log.chunks[1].rendered_level, None);
        assert_eq!(log.chunks[2].download_start, 2.0);
        // Buffer after chunk 1 commits at t=2: chunk 0 is 1/5 played.
        assert!((log.decision_points[2].buffer - (2.0 * 0.8 + 1.0)).abs() < 1e-12);

        let m = compute_metrics(&log, &video, &head, 0.1);
        let ln2 = 2f64.ln();
        let u = (0.25 * ln2 + 0.75 * ln2) / 16.0;
        assert!((m.utility - u).abs() < 1e-12);
        assert!((m.smoothness - 4.0 * 5.0 / 16.0).abs() < 1e-12);
        assert!((m.qoe - (u + 0.1 * 1.25)).abs() < 1e-12);
        assert!((m.rebuffer_ratio - 1.0 / 3.0).abs() < 1e-12);
        // Bitrates 0.2, 0 (blank), 0.4 Mbit/s.
        assert!((m.avg_playing_bitrate - 0.2).abs() < 1e-12);
        assert!((m.oscillation - 0.3).abs() < 1e-12);
        // Delays: 1-0.5 and 11-3.
        assert!((m.playback_delay - (0.5 + 8.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_bandwidth_window_stalls() {
        let ladder = BitrateLadder::from_sizes(&[4.0], 5.0).unwrap();
        let video = VideoSpec::new(4, 1, 5.0, ladder).unwrap();
        let trace = BandwidthTrace::new(vec![(0.0, 4.0), (3.0, 0.0), (20.0, 4.0)]).unwrap();
        let cfg = config(video.clone(), trace, HeadModel::uniform(4, 1), 10.0);
        let mut algo = Fixed(vec![Action::Download(DecisionVector::uniform(1, 1))]);
        let log = simulate(&cfg, &mut algo, &[0; 4]).unwrap();
        // Chunks 0-2 arrive at 1, 2, 3 and play [1,16]. Chunk 3 starts at 3,
        // gets nothing until 20 and completes at 21: a 5 s stall.
        assert_eq!(log.chunks[3].download_end, 21.0);
        assert_eq!(log.chunks[3].render_start, 21.0);
        assert!((log.chunks[3].stall - 5.0).abs() < 1e-9);
        assert_eq!(log.rebuffers, vec![(16.0, 21.0)]);
        let m = compute_metrics(&log, &video, &cfg.head, 0.1);
        assert!((m.rebuffer_ratio - 5.0 / 20.0).abs() < 1e-9);
    }

    #[test]
    fn single_tile_drain_matches_plain_accounting() {
        let ladder = BitrateLadder::from_sizes(&[3.0, 6.0], 2.0).unwrap();
        let video = VideoSpec::new(30, 1, 2.0, ladder).unwrap();
        let trace = crate::trace::synth_trace(
            &crate::trace::TraceShape::Square { low: 1.0, high: 8.0, period: 7.0 },
            400.0,
        )
        .unwrap();
        let cfg = config(video.clone(), trace, HeadModel::uniform(30, 1), 1e6);
        let mut algo = Fixed(vec![Action::Download(DecisionVector::uniform(1, 2))]);
        let log = simulate(&cfg, &mut algo, &[0; 30]).unwrap();
        let dp = &log.decision_points;
        for k in 1..dp.len() - 1 {
            let q = dp[k].buffer;
            let elapsed = dp[k + 1].time - dp[k].time;
            let drained = q + 1.0 - dp[k + 1].buffer;
            assert!((drained - q.min(elapsed / 2.0)).abs() < 1e-9, "k={k}");
        }
    }

    #[test]
    fn conservation_and_determinism() {
        let video = VideoSpec::new(20, 4, 5.0, small_ladder()).unwrap();
        let trace = crate::trace::synth_trace(
            &crate::trace::TraceShape::Square { low: 2.0, high: 20.0, period: 30.0 },
            400.0,
        )
        .unwrap();
        let head = HeadModel::repeated(vec![0.4, 0.3, 0.2, 0.1], 20).unwrap();
        for id in AlgorithmId::ALL {
            let mut cfg = config(video.clone(), trace.clone(), head.clone(), 14.0);
            cfg.algorithm = AlgorithmSpec::new(id, AlgoParams::new(1.5, 0.1));
            let log = run_session(&cfg).unwrap();
            let stalls: f64 = log.chunks.iter().map(|c| c.stall).sum();
            let played = 20.0 * 5.0;
            assert!((stalls + played - (log.t_end - log.playback_start)).abs() < 1e-9, "{id}");
            assert_eq!(log.chunks.len(), 20);
            for p in &log.decision_points {
                assert!(p.buffer <= cfg.q_max + 1e-9, "{id}");
            }
            let again = run_session(&cfg).unwrap();
            assert_eq!(log.to_json().unwrap(), again.to_json().unwrap(), "{id}");
        }
    }

    #[test]
    fn rejects_bad_config() {
        let video = VideoSpec::new(3, 2, 5.0, small_ladder()).unwrap();
        let cfg = config(video.clone(), BandwidthTrace::constant(5.0).unwrap(), HeadModel::uniform(4, 2), 10.0);
        assert!(run_session(&cfg).unwrap_err().is_config_error());
        let mut cfg = config(video, BandwidthTrace::constant(5.0).unwrap(), HeadModel::uniform(3, 2), 10.0);
        cfg.algorithm.params.v = 100.0;
        assert!(run_session(&cfg).unwrap_err().is_config_error());
    }
}
