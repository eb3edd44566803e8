//! Multi-trial experiments described by a TOML file.
//!
//! ```toml
//! [video]
//! num_chunks = 50
//! num_tiles = 6
//! chunk_duration = 5.0
//! preset = "small"
//!
//! [algo]
//! ids = ["bola360", "top-x"]
//! v = 1.66
//! gamma = 0.1
//!
//! [[trace]]
//! kind = "constant"
//! mbps = 10.0
//!
//! [head]
//! kind = "profile"
//! id = 2
//!
//! [run]
//! trials = 10
//! base_seed = 1
//! q_max = 14.0
//! ```

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithm::{AlgoParams, AlgorithmId, AlgorithmSpec};
use crate::baselines::ProbDashParams;
use crate::bola::{v_upper_bound, WaitPolicy};
use crate::error::{Error, Result};
use crate::head::{load_prob_matrix, load_viewed, reference_profile, HeadModel};
use crate::heuristics::PlCapMode;
use crate::media::{comparison_ladder, small_ladder, BitrateLadder, VideoSpec};
use crate::oracle::OracleConfig;
use crate::predictor::PredictorConfig;
use crate::sim::{compute_metrics, run_session, SessionConfig, SessionMetrics};
use crate::trace::{load_bandwidth_trace, synth_trace, BandwidthTrace, TraceShape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoConfig {
    pub num_chunks: usize,
    pub num_tiles: usize,
    #[serde(default = "default_chunk_duration")]
    pub chunk_duration: f64,
    /// `small` or `comparison`.
    pub preset: Option<String>,
    /// Segment sizes in Mbit.
    pub sizes: Option<Vec<f64>>,
    /// Bitrates in Mbit/s.
    pub bitrates: Option<Vec<f64>>,
    /// Overrides the logarithmic utilities.
    pub utilities: Option<Vec<f64>>,
}

fn default_chunk_duration() -> f64 {
    5.0
}

impl VideoConfig {
    pub fn build(&self) -> Result<VideoSpec> {
        let given = [self.preset.is_some(), self.sizes.is_some(), self.bitrates.is_some()];
        if given.iter().filter(|&&g| g).count() != 1 {
            return Err(Error::Config("video needs exactly one of preset, sizes, bitrates".into()));
        }
        let sizes: Vec<f64> = match (&self.preset, &self.sizes, &self.bitrates) {
            (Some(p), _, _) => match p.as_str() {
                "small" => small_ladder().sizes(),
                "comparison" => comparison_ladder().sizes(),
                other => return Err(Error::Config(format!("unknown ladder preset `{other}`"))),
            },
            (_, Some(s), _) => s.clone(),
            (_, _, Some(b)) => b.iter().map(|x| x * self.chunk_duration).collect(),
            _ => unreachable!(),
        };
        let ladder = match &self.utilities {
            Some(u) => BitrateLadder::from_sizes_and_utilities(&sizes, u, self.chunk_duration)?,
            None => BitrateLadder::from_sizes(&sizes, self.chunk_duration)?,
        };
        VideoSpec::new(self.num_chunks, self.num_tiles, self.chunk_duration, ladder)
    }
}

/// Idle policy as written in the config: `"dynamic"` or a number of seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WaitSetting {
    Seconds(f64),
    Named(NamedWait),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedWait {
    Dynamic,
    /// Half a chunk duration.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgoConfig {
    pub ids: Vec<AlgorithmId>,
    /// Defaults to 0.9 of the largest value the buffer capacity allows.
    pub v: Option<f64>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    pub wait: Option<WaitSetting>,
    pub x: Option<usize>,
    #[serde(default)]
    pub beta: f64,
    pub probdash: Option<ProbDashParams>,
    pub salient_reserve: Option<f64>,
    pub pl_cap: Option<PlCapMode>,
    pub pa_step: Option<f64>,
    pub rep_danger_chunks: Option<f64>,
}

fn default_gamma() -> f64 {
    0.1
}

/// Fraction of the largest admissible `V` used when none is configured.
pub const DEFAULT_V_FRACTION: f64 = 0.9;

impl AlgoConfig {
    pub fn params(&self, video: &VideoSpec, q_max: f64) -> AlgoParams {
        let v = self.v.unwrap_or_else(|| {
            DEFAULT_V_FRACTION
                * v_upper_bound(q_max, video.num_tiles, video.ladder.top().utility, self.gamma, video.chunk_duration)
        });
        let mut p = AlgoParams::new(v, self.gamma);
        p.wait = match self.wait {
            None | Some(WaitSetting::Named(NamedWait::Dynamic)) => WaitPolicy::Dynamic,
            Some(WaitSetting::Named(NamedWait::Fixed)) => WaitPolicy::Fixed(video.chunk_duration / 2.0),
            Some(WaitSetting::Seconds(s)) => WaitPolicy::Fixed(s),
        };
        p.x = self.x;
        p.beta = self.beta;
        if let Some(pd) = self.probdash {
            p.probdash = pd;
        }
        p.salient_reserve = self.salient_reserve;
        if let Some(c) = self.pl_cap {
            p.pl_cap = c;
        }
        if let Some(s) = self.pa_step {
            p.pa_step = s;
        }
        if let Some(r) = self.rep_danger_chunks {
            p.rep_danger_chunks = r;
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TraceSource {
    File { path: PathBuf, name: Option<String> },
    Constant { mbps: f64 },
    Square { low: f64, high: f64, period: f64 },
    Ramp { start: f64, slope: f64, step: f64 },
}

impl TraceSource {
    /// Short identifier written in result rows.
    pub fn id(&self) -> String {
        match self {
            TraceSource::File { path, name } => name.clone().unwrap_or_else(|| {
                path.file_stem().map_or_else(|| "file".into(), |s| s.to_string_lossy().into_owned())
            }),
            TraceSource::Constant { mbps } => format!("constant-{mbps}"),
            TraceSource::Square { low, high, period } => format!("square-{low}-{high}-{period}"),
            TraceSource::Ramp { start, slope, step } => format!("ramp-{start}-{slope}-{step}"),
        }
    }

    pub fn load(&self, base_dir: &Path, duration: f64) -> Result<BandwidthTrace> {
        match self {
            TraceSource::File { path, .. } => load_bandwidth_trace(&base_dir.join(path)),
            TraceSource::Constant { mbps } => synth_trace(&TraceShape::Constant { mbps: *mbps }, duration),
            TraceSource::Square { low, high, period } => synth_trace(
                &TraceShape::Square { low: *low, high: *high, period: *period },
                duration,
            ),
            TraceSource::Ramp { start, slope, step } => synth_trace(
                &TraceShape::Ramp { start: *start, slope: *slope, step: *step },
                duration,
            ),
        }
        .map_err(|e| match e {
            Error::Validation(msg) => Error::Config(format!("trace {}: {msg}", self.id())),
            other => other,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HeadConfig {
    /// One of the twelve reference profiles (1-based id).
    Profile {
        id: usize,
        /// Rotate the probabilities by a per-trial random offset each chunk.
        #[serde(default)]
        rotate: bool,
        #[serde(default)]
        noise_rate: f64,
    },
    Uniform {
        #[serde(default)]
        noise_rate: f64,
    },
    /// The same row for every chunk.
    Probs {
        row: Vec<f64>,
        #[serde(default)]
        noise_rate: f64,
    },
    /// Probability matrix CSV, optionally with a fixed viewed-tile CSV.
    Matrix {
        path: PathBuf,
        viewed: Option<PathBuf>,
        #[serde(default)]
        noise_rate: f64,
    },
}

impl HeadConfig {
    pub fn id(&self) -> String {
        match self {
            HeadConfig::Profile { id, .. } => id.to_string(),
            HeadConfig::Uniform { .. } => "uniform".into(),
            HeadConfig::Probs { .. } => "probs".into(),
            HeadConfig::Matrix { path, .. } => {
                path.file_stem().map_or_else(|| "matrix".into(), |s| s.to_string_lossy().into_owned())
            }
        }
    }

    pub fn noise_rate(&self) -> f64 {
        match *self {
            HeadConfig::Profile { noise_rate, .. }
            | HeadConfig::Uniform { noise_rate }
            | HeadConfig::Probs { noise_rate, .. }
            | HeadConfig::Matrix { noise_rate, .. } => noise_rate,
        }
    }

    pub fn build(&self, video: &VideoSpec, base_dir: &Path, seed: u64) -> Result<HeadModel> {
        let (k, d) = (video.num_chunks, video.num_tiles);
        match self {
            HeadConfig::Profile { id, rotate, .. } => {
                let spec = reference_profile(*id)?;
                HeadModel::from_profile(&spec, k, d, rotate.then_some(seed))
            }
            HeadConfig::Uniform { .. } => Ok(HeadModel::uniform(k, d)),
            HeadConfig::Probs { row, .. } => HeadModel::repeated(row.clone(), k),
            HeadConfig::Matrix { path, viewed, .. } => {
                let head = load_prob_matrix(&base_dir.join(path))?;
                match viewed {
                    Some(v) => head.with_viewed(load_viewed(&base_dir.join(v))?),
                    None => Ok(head),
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Buffer capacity in segments.
    pub q_max: f64,
    pub output: Option<PathBuf>,
    pub format: Option<OutputFormat>,
    /// Sample step (seconds) of the buffer-level series exported for trial 0.
    pub buffer_step: Option<f64>,
    #[serde(default)]
    pub predictor: PredictorConfig,
}

fn default_trials() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    #[serde(default = "default_t0")]
    pub t0: f64,
}

fn default_t0() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub video: VideoConfig,
    pub algo: AlgoConfig,
    /// Trial `i` uses trace `i mod len`.
    pub trace: Vec<TraceSource>,
    pub head: HeadConfig,
    pub run: RunConfig,
    pub oracle: Option<OracleSection>,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, dir)
    }

    /// Full validation, including that every referenced file loads.
    pub fn validate(&self) -> Result<()> {
        self.validate_inner().map_err(|e| match e {
            Error::Io(io) => Error::Config(format!("cannot read referenced file: {io}")),
            other => other,
        })
    }

    fn validate_inner(&self) -> Result<()> {
        let video = self.video.build()?;
        if self.run.trials == 0 {
            return Err(Error::Config("run.trials must be ≥ 1".into()));
        }
        if self.algo.ids.is_empty() {
            return Err(Error::Config("algo.ids is empty".into()));
        }
        if self.trace.is_empty() {
            return Err(Error::Config("at least one [[trace]] is required".into()));
        }
        if let Some(s) = self.run.buffer_step {
            if !(s > 0.0) {
                return Err(Error::Config("run.buffer_step must be > 0".into()));
            }
        }
        for t in &self.trace {
            t.load(&self.base_dir, self.trace_duration(&video))?;
        }
        let head = self.head.build(&video, &self.base_dir, self.run.base_seed)?;
        for id in &self.algo.ids {
            self.session(&video, *id, self.trace[0].load(&self.base_dir, 1.0)?, head.clone(), 0)?
                .check()?;
        }
        Ok(())
    }

    /// Length of synthetic traces: generous, since the last piece extends forever.
    fn trace_duration(&self, video: &VideoSpec) -> f64 {
        4.0 * video.duration()
    }

    fn session(
        &self,
        video: &VideoSpec,
        id: AlgorithmId,
        trace: BandwidthTrace,
        head: HeadModel,
        seed: u64,
    ) -> Result<SessionConfig> {
        Ok(SessionConfig {
            video: video.clone(),
            algorithm: AlgorithmSpec::new(id, self.algo.params(video, self.run.q_max)),
            trace,
            head,
            q_max: self.run.q_max,
            predictor: self.run.predictor,
            rng_seed: seed,
            qoe_gamma: self.algo.gamma,
            noise_rate: self.head.noise_rate(),
        })
    }

    pub fn oracle_config(&self) -> OracleConfig {
        OracleConfig {
            t0: self.oracle.map_or_else(default_t0, |o| o.t0),
            gamma: self.algo.gamma,
            q_max: self.run.q_max,
        }
    }
}

/// One algorithm in one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResultRow {
    pub algorithm: String,
    pub trace: String,
    pub profile: String,
    pub trial: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub metrics: SessionMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub algorithm: String,
    pub trials: usize,
    pub qoe_mean: f64,
    pub qoe_std: f64,
    pub bitrate_mean: f64,
    pub bitrate_std: f64,
    pub rebuffer_mean: f64,
    pub rebuffer_std: f64,
    pub delay_mean: f64,
    pub oscillation_mean: f64,
    pub reaction_mean: f64,
}

/// Percentile sample of one metric, for CDF plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub algorithm: String,
    pub metric: String,
    pub percentile: u32,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferSample {
    pub algorithm: String,
    pub time: f64,
    pub buffer: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub rows: Vec<TrialResultRow>,
    pub summary: Vec<AlgorithmSummary>,
    pub cdf: Vec<CdfPoint>,
    pub buffer_series: Vec<BufferSample>,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let video = cfg.video.build()?;
    let duration = cfg.trace_duration(&video);
    let traces: Vec<(String, BandwidthTrace)> = cfg
        .trace
        .iter()
        .map(|t| Ok((t.id(), t.load(&cfg.base_dir, duration)?)))
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, AlgorithmId)> = (0..cfg.run.trials)
        .flat_map(|trial| cfg.algo.ids.iter().map(move |&id| (trial, id)))
        .collect();
    let results: Vec<Result<(TrialResultRow, Vec<BufferSample>)>> = jobs
        .par_iter()
        .map(|&(trial, id)| {
            let seed = cfg.run.base_seed.wrapping_add(trial as u64);
            let wrap = |e: Error| Error::Trial { algorithm: id.to_string(), trial, source: Box::new(e) };
            let (trace_id, trace) = &traces[trial % traces.len()];
            let head = cfg.head.build(&video, &cfg.base_dir, seed).map_err(wrap)?;
            let session = cfg.session(&video, id, trace.clone(), head, seed).map_err(wrap)?;
            let log = run_session(&session).map_err(wrap)?;
            let metrics = compute_metrics(&log, &video, &session.head, cfg.algo.gamma);
            let series = match cfg.run.buffer_step {
                Some(step) if trial == 0 => log
                    .buffer_series(step)
                    .into_iter()
                    .map(|(time, buffer)| BufferSample { algorithm: id.to_string(), time, buffer })
                    .collect(),
                _ => Vec::new(),
            };
            let row = TrialResultRow {
                algorithm: id.to_string(),
                trace: trace_id.clone(),
                profile: cfg.head.id(),
                trial,
                seed,
                metrics,
            };
            Ok((row, series))
        })
        .collect();

    let mut rows = Vec::with_capacity(results.len());
    let mut buffer_series = Vec::new();
    for r in results {
        let (row, series) = r?;
        rows.push(row);
        buffer_series.extend(series);
    }
    rows.sort_by(|a, b| (&a.algorithm, a.trial).cmp(&(&b.algorithm, b.trial)));
    buffer_series.sort_by(|a, b| a.algorithm.cmp(&b.algorithm).then(a.time.total_cmp(&b.time)));
    let (summary, cdf) = summarize(&rows);
    Ok(ExperimentOutput { rows, summary, cdf, buffer_series })
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Linear-interpolated percentile of sorted data.
pub fn percentile(sorted: &[f64], pct: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Per-algorithm means and CDF samples, in algorithm order.
pub fn summarize(rows: &[TrialResultRow]) -> (Vec<AlgorithmSummary>, Vec<CdfPoint>) {
    let mut names: Vec<&str> = rows.iter().map(|r| r.algorithm.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    let mut summary = Vec::new();
    let mut cdf = Vec::new();
    for name in names {
        let mine: Vec<&SessionMetrics> = rows.iter().filter(|r| r.algorithm == name).map(|r| &r.metrics).collect();
        let pick = |f: fn(&SessionMetrics) -> f64| mine.iter().map(|m| f(m)).collect::<Vec<f64>>();
        let qoe = pick(|m| m.qoe);
        let bitrate = pick(|m| m.avg_playing_bitrate);
        let rebuffer = pick(|m| m.rebuffer_ratio);
        let (qoe_mean, qoe_std) = mean_std(&qoe);
        let (bitrate_mean, bitrate_std) = mean_std(&bitrate);
        let (rebuffer_mean, rebuffer_std) = mean_std(&rebuffer);
        summary.push(AlgorithmSummary {
            algorithm: name.to_string(),
            trials: mine.len(),
            qoe_mean,
            qoe_std,
            bitrate_mean,
            bitrate_std,
            rebuffer_mean,
            rebuffer_std,
            delay_mean: mean_std(&pick(|m| m.playback_delay)).0,
            oscillation_mean: mean_std(&pick(|m| m.oscillation)).0,
            reaction_mean: mean_std(&pick(|m| m.reaction_time)).0,
        });
        for (metric, mut values) in [("qoe", qoe), ("avg_playing_bitrate", bitrate), ("rebuffer_ratio", rebuffer)] {
            values.sort_by(f64::total_cmp);
            for p in 1..=99u32 {
                cdf.push(CdfPoint {
                    algorithm: name.to_string(),
                    metric: metric.to_string(),
                    percentile: p,
                    value: percentile(&values, p as f64),
                });
            }
        }
    }
    (summary, cdf)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
[video]
num_chunks = 10
num_tiles = 4
preset = "small"

[algo]
ids = ["bola360", "top-x"]
v = 1.0

[[trace]]
kind = "square"
low = 2.0
high = 12.0
period = 20.0

[head]
kind = "profile"
id = 7

[run]
trials = 3
base_seed = 5
q_max = 12.0
buffer_step = 1.0
"#;

    #[test]
    fn parses_and_runs() {
        let cfg = ExperimentConfig::from_toml_str(BASIC, Path::new(".")).unwrap();
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.rows.len(), 6);
        assert_eq!(out.rows[0].algorithm, "bola360");
        assert_eq!(out.rows[0].seed, 5);
        assert_eq!(out.rows[5].trial, 2);
        assert_eq!(out.summary.len(), 2);
        assert_eq!(out.cdf.len(), 2 * 3 * 99);
        assert!(out.buffer_series.iter().any(|s| s.buffer > 0.0));
        assert_eq!(run_experiment(&cfg).unwrap(), out);
    }

    #[test]
    fn config_errors() {
        let bad = BASIC.replace("trials = 3", "trials = 0");
        let cfg = ExperimentConfig::from_toml_str(&bad, Path::new(".")).unwrap();
        assert!(cfg.validate().unwrap_err().is_config_error());

        let bad = BASIC.replace("\"top-x\"", "\"nope\"");
        assert!(ExperimentConfig::from_toml_str(&bad, Path::new(".")).is_err());

        let bad = BASIC.replace("v = 1.0", "v = 50.0");
        let cfg = ExperimentConfig::from_toml_str(&bad, Path::new(".")).unwrap();
        assert!(cfg.validate().unwrap_err().is_config_error());

        let bad = BASIC.replace("kind = \"profile\"\nid = 7", "kind = \"matrix\"\npath = \"missing.csv\"");
        let cfg = ExperimentConfig::from_toml_str(&bad, Path::new(".")).unwrap();
        assert!(cfg.validate().unwrap_err().is_config_error());

        let bad = BASIC.replace("q_max = 12.0", "q_max = 12.0\ntypo = 1");
        assert!(ExperimentConfig::from_toml_str(&bad, Path::new(".")).is_err());
    }

    #[test]
    fn default_v_is_inside_bound() {
        let text = BASIC.replace("v = 1.0\n", "");
        let cfg = ExperimentConfig::from_toml_str(&text, Path::new(".")).unwrap();
        let video = cfg.video.build().unwrap();
        let p = cfg.algo.params(&video, 12.0);
        let bound = v_upper_bound(12.0, 4, video.ladder.top().utility, 0.1, 5.0);
        assert!((p.v - 0.9 * bound).abs() < 1e-12);
        cfg.validate().unwrap();
    }

    #[test]
    fn percentiles() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&xs, 50.0), 3.0);
        assert_eq!(percentile(&xs, 25.0), 2.0);
        assert!((percentile(&xs, 1.0) - 1.04).abs() < 1e-12);
        assert_eq!(percentile(&[7.0], 99.0), 7.0);
    }
}
