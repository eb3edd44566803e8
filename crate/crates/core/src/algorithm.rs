//! The interface between the session engine and the bitrate algorithms, and
//! the registry of shipped algorithms.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{
    dp_on_decide, probdash_decide, salient_vr_decide, top_x_decide, va360_decide, DpOnParams,
    ProbDashParams, SalientParams,
};
use crate::bola::{decide_chunk, tile_cutoff, BolaParams, DecisionVector, WaitPolicy};
use crate::error::{Error, Result};
use crate::heuristics::{PaBola, PlBola, PlCapMode, RepBola, ReplacementPlan};
use crate::media::VideoSpec;

/// A buffered chunk whose playback has not started.
#[derive(Debug, Clone, PartialEq)]
pub struct UnplayedChunk {
    pub chunk: usize,
    /// Level currently stored per tile.
    pub levels: Vec<Option<usize>>,
    /// View probabilities as currently predicted for this chunk.
    pub probs: Vec<f64>,
}

/// What the engine knows at a decision instant.
#[derive(Debug, Clone)]
pub struct DecisionContext<'a> {
    /// 0-based chunk awaiting a decision.
    pub chunk: usize,
    pub now: f64,
    /// Buffer level in segments.
    pub buffer: f64,
    /// Seconds of downloaded video ahead of the playhead.
    pub buffered_seconds: f64,
    /// Predicted view probabilities of `chunk`.
    pub probs: &'a [f64],
    /// Bandwidth estimate, Mbit/s.
    pub bandwidth_estimate: f64,
    pub video: &'a VideoSpec,
    pub q_max: f64,
    /// Filled only for algorithms that ask for it.
    pub unplayed: &'a [UnplayedChunk],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Wait {
    Seconds(f64),
    /// Until the buffer level drops strictly below this many segments.
    UntilBufferBelow(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    /// Download these segments for the pending chunk.
    Download(DecisionVector),
    /// Download nothing now and decide the same chunk again later.
    Idle(Wait),
    /// Commit the pending chunk with no segments at all.
    Skip,
    /// Upgrade an already buffered segment.
    Replace(ReplacementPlan),
}

pub trait AbrAlgorithm: Send {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Action>;

    /// Whether the engine should fill [`DecisionContext::unplayed`].
    fn wants_unplayed(&self) -> bool {
        false
    }
}

/// Shared idle handling of the buffer-driven family.
pub(crate) fn bola_idle(params: &BolaParams, probs: &[f64], video: &VideoSpec) -> Action {
    match params.wait {
        WaitPolicy::Fixed(d) => Action::Idle(Wait::Seconds(d)),
        WaitPolicy::Dynamic => {
            let p_max = probs.iter().copied().fold(0.0, f64::max);
            Action::Idle(Wait::UntilBufferBelow(tile_cutoff(
                p_max,
                params,
                &video.ladder,
                video.chunk_duration,
            )))
        }
    }
}

#[derive(Debug, Clone)]
pub struct Bola {
    pub params: BolaParams,
}

impl AbrAlgorithm for Bola {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Action> {
        let v = ctx.video;
        let d = decide_chunk(ctx.buffer, ctx.probs, &v.ladder, &self.params, v.chunk_duration)?;
        if d.is_idle() {
            Ok(bola_idle(&self.params, ctx.probs, v))
        } else {
            Ok(Action::Download(d))
        }
    }
}

struct DpOn(DpOnParams);

impl AbrAlgorithm for DpOn {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Action> {
        let v = ctx.video;
        Ok(Action::Download(dp_on_decide(
            ctx.bandwidth_estimate,
            ctx.probs,
            &v.ladder,
            v.chunk_duration,
            &self.0,
        )))
    }
}

struct TopX(usize);

impl AbrAlgorithm for TopX {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Action> {
        let v = ctx.video;
        Ok(Action::Download(top_x_decide(
            ctx.bandwidth_estimate,
            ctx.probs,
            &v.ladder,
            v.chunk_duration,
            self.0,
        )))
    }
}

struct Va360;

impl AbrAlgorithm for Va360 {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Action> {
        Ok(Action::Download(va360_decide(
            ctx.bandwidth_estimate,
            ctx.probs,
            &ctx.video.ladder,
        )))
    }
}

struct ProbDash(ProbDashParams);

impl AbrAlgorithm for ProbDash {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Action> {
        let v = ctx.video;
        Ok(Action::Download(probdash_decide(
            ctx.bandwidth_estimate,
            ctx.probs,
            &v.ladder,
            v.chunk_duration,
            ctx.buffered_seconds,
            &self.0,
        )))
    }
}

struct SalientVr(SalientParams);

impl AbrAlgorithm for SalientVr {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Action> {
        let v = ctx.video;
        Ok(Action::Download(salient_vr_decide(
            ctx.bandwidth_estimate,
            ctx.probs,
            &v.ladder,
            v.chunk_duration,
            ctx.buffered_seconds,
            &self.0,
        )))
    }
}

/// Identifiers accepted on the command line and in config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AlgorithmId {
    #[serde(rename = "bola360")]
    Bola360,
    #[serde(rename = "bola360-pl")]
    Bola360Pl,
    #[serde(rename = "bola360-rep")]
    Bola360Rep,
    #[serde(rename = "bola360-pa")]
    Bola360Pa,
    #[serde(rename = "dp-on")]
    DpOn,
    #[serde(rename = "top-x")]
    TopX,
    #[serde(rename = "va360")]
    Va360,
    #[serde(rename = "probdash")]
    ProbDash,
    #[serde(rename = "salient-vr")]
    SalientVr,
}

impl AlgorithmId {
    pub const ALL: [AlgorithmId; 9] = [
        AlgorithmId::Bola360,
        AlgorithmId::Bola360Pl,
        AlgorithmId::Bola360Rep,
        AlgorithmId::Bola360Pa,
        AlgorithmId::DpOn,
        AlgorithmId::TopX,
        AlgorithmId::Va360,
        AlgorithmId::ProbDash,
        AlgorithmId::SalientVr,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AlgorithmId::Bola360 => "bola360",
            AlgorithmId::Bola360Pl => "bola360-pl",
            AlgorithmId::Bola360Rep => "bola360-rep",
            AlgorithmId::Bola360Pa => "bola360-pa",
            AlgorithmId::DpOn => "dp-on",
            AlgorithmId::TopX => "top-x",
            AlgorithmId::Va360 => "va360",
            AlgorithmId::ProbDash => "probdash",
            AlgorithmId::SalientVr => "salient-vr",
        }
    }

    /// Members of the buffer-driven family, whose `V` is bounded by `Q_max`.
    pub fn is_bola_family(&self) -> bool {
        matches!(
            self,
            AlgorithmId::Bola360 | AlgorithmId::Bola360Pl | AlgorithmId::Bola360Rep | AlgorithmId::Bola360Pa
        )
    }
}

impl fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AlgorithmId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AlgorithmId::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm id `{s}`")))
    }
}

/// Tunables for every algorithm; each one reads the fields it needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlgoParams {
    pub v: f64,
    pub gamma: f64,
    pub wait: WaitPolicy,
    /// Top-X tile count; `None` means all tiles.
    pub x: Option<usize>,
    pub beta: f64,
    pub probdash: ProbDashParams,
    /// Salient-VR reserve seconds; `None` means one chunk duration.
    pub salient_reserve: Option<f64>,
    pub pl_cap: PlCapMode,
    pub pa_step: f64,
    /// REP danger threshold in chunk durations.
    pub rep_danger_chunks: f64,
}

impl AlgoParams {
    pub fn new(v: f64, gamma: f64) -> Self {
        AlgoParams {
            v,
            gamma,
            wait: WaitPolicy::Dynamic,
            x: None,
            beta: 0.0,
            probdash: ProbDashParams::default(),
            salient_reserve: None,
            pl_cap: PlCapMode::Aggregate,
            pa_step: 0.25,
            rep_danger_chunks: 2.0,
        }
    }

    pub fn bola(&self) -> BolaParams {
        BolaParams::new(self.v, self.gamma).with_wait(self.wait)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSpec {
    pub id: AlgorithmId,
    pub params: AlgoParams,
}

impl AlgorithmSpec {
    pub fn new(id: AlgorithmId, params: AlgoParams) -> Self {
        AlgorithmSpec { id, params }
    }

    pub fn check(&self, video: &VideoSpec, q_max: f64) -> Result<()> {
        let p = &self.params;
        if self.id.is_bola_family() {
            p.bola().check(q_max, video.num_tiles, &video.ladder, video.chunk_duration)?;
        } else if !(p.gamma > 0.0) && self.id == AlgorithmId::DpOn {
            return Err(Error::validation("gamma must be > 0"));
        }
        if let Some(x) = p.x {
            if x == 0 || x > video.num_tiles {
                return Err(Error::validation(format!("top-x x={x} outside 1..={}", video.num_tiles)));
            }
        }
        if !(p.probdash.target > 0.0) || !(p.probdash.min_ratio <= p.probdash.max_ratio) {
            return Err(Error::validation("probdash target must be > 0 and min_ratio ≤ max_ratio"));
        }
        if !(p.pa_step > 0.0) {
            return Err(Error::validation("pa_step must be > 0"));
        }
        Ok(())
    }

    pub fn build(&self, video: &VideoSpec) -> Box<dyn AbrAlgorithm> {
        let p = self.params;
        match self.id {
            AlgorithmId::Bola360 => Box::new(Bola { params: p.bola() }),
            AlgorithmId::Bola360Pl => Box::new(PlBola::new(p.bola(), p.pl_cap)),
            AlgorithmId::Bola360Rep => Box::new(RepBola::new(
                p.bola(),
                p.rep_danger_chunks * video.chunk_duration,
            )),
            AlgorithmId::Bola360Pa => Box::new(PaBola::new(p.bola(), p.pa_step)),
            AlgorithmId::DpOn => Box::new(DpOn(DpOnParams { gamma: p.gamma, beta: p.beta })),
            AlgorithmId::TopX => Box::new(TopX(p.x.unwrap_or(video.num_tiles))),
            AlgorithmId::Va360 => Box::new(Va360),
            AlgorithmId::ProbDash => Box::new(ProbDash(p.probdash)),
            AlgorithmId::SalientVr => Box::new(SalientVr(SalientParams {
                reserve: p.salient_reserve.unwrap_or(video.chunk_duration),
            })),
        }
    }
}
