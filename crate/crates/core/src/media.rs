//! Video, tiling and bitrate ladder shared by every algorithm.
//!
//! Units are fixed across the crate: segment sizes in Mbit, bandwidth in
//! Mbit/s and time in seconds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One encoding of a `chunk_duration`-second segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BitrateLevel {
    /// 1-based level index.
    pub index: usize,
    /// Mbit/s.
    pub bitrate: f64,
    /// Mbit per segment.
    pub size: f64,
    pub utility: f64,
}

/// The ordered set of available encodings, lowest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitrateLadder {
    levels: Vec<BitrateLevel>,
}

impl BitrateLadder {
    /// Builds a ladder from segment sizes with logarithmic utilities.
    pub fn from_sizes(sizes: &[f64], chunk_duration: f64) -> Result<Self> {
        let utilities = log_utilities(sizes)?;
        Self::from_sizes_and_utilities(sizes, &utilities, chunk_duration)
    }

    /// Builds a ladder from bitrates; sizes are `bitrate * chunk_duration`.
    pub fn from_bitrates(bitrates: &[f64], chunk_duration: f64) -> Result<Self> {
        let sizes: Vec<f64> = bitrates.iter().map(|b| b * chunk_duration).collect();
        Self::from_sizes(&sizes, chunk_duration)
    }

    pub fn from_sizes_and_utilities(
        sizes: &[f64],
        utilities: &[f64],
        chunk_duration: f64,
    ) -> Result<Self> {
        if sizes.len() != utilities.len() {
            return Err(Error::validation(format!(
                "{} sizes but {} utilities",
                sizes.len(),
                utilities.len()
            )));
        }
        if !(chunk_duration > 0.0) {
            return Err(Error::validation("chunk_duration must be > 0"));
        }
        let levels = sizes
            .iter()
            .zip(utilities)
            .enumerate()
            .map(|(i, (&size, &utility))| BitrateLevel {
                index: i + 1,
                bitrate: size / chunk_duration,
                size,
                utility,
            })
            .collect();
        let ladder = BitrateLadder { levels };
        let violations = ladder.violations();
        if violations.is_empty() {
            Ok(ladder)
        } else {
            Err(Error::Validation(violations.join("; ")))
        }
    }

    /// Wraps levels without validation; use [`BitrateLadder::violations`] to check.
    pub fn from_levels_unchecked(levels: Vec<BitrateLevel>) -> Self {
        BitrateLadder { levels }
    }

    pub fn levels(&self) -> &[BitrateLevel] {
        &self.levels
    }

    /// Number of levels, M.
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Level by 1-based index.
    pub fn level(&self, m: usize) -> &BitrateLevel {
        &self.levels[m - 1]
    }

    pub fn top(&self) -> &BitrateLevel {
        self.levels.last().expect("ladder has at least one level")
    }

    pub fn bottom(&self) -> &BitrateLevel {
        &self.levels[0]
    }

    pub fn sizes(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.size).collect()
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.levels.is_empty() {
            out.push("ladder must have at least one level".to_string());
            return out;
        }
        for l in &self.levels {
            if !(l.size > 0.0) || !l.size.is_finite() {
                out.push(format!("level {} size must be positive and finite", l.index));
            }
            if !l.utility.is_finite() {
                out.push(format!("level {} utility must be finite", l.index));
            }
        }
        if self.levels.windows(2).any(|w| w[1].size < w[0].size) {
            out.push("sizes not nondecreasing".to_string());
        }
        if self.levels.windows(2).any(|w| w[1].utility < w[0].utility) {
            out.push("utilities not nondecreasing".to_string());
        }
        out
    }
}

/// K chunks of D tiles, each chunk `chunk_duration` seconds long.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoSpec {
    pub num_chunks: usize,
    pub num_tiles: usize,
    pub chunk_duration: f64,
    pub ladder: BitrateLadder,
}

impl VideoSpec {
    pub fn new(
        num_chunks: usize,
        num_tiles: usize,
        chunk_duration: f64,
        ladder: BitrateLadder,
    ) -> Result<Self> {
        let spec = VideoSpec {
            num_chunks,
            num_tiles,
            chunk_duration,
            ladder,
        };
        let violations = validate_video(&spec);
        if violations.is_empty() {
            Ok(spec)
        } else {
            Err(Error::Validation(violations.join("; ")))
        }
    }

    /// Seconds of content in the whole video.
    pub fn duration(&self) -> f64 {
        self.num_chunks as f64 * self.chunk_duration
    }
}

/// Every invariant violation of `spec`; empty iff valid.
pub fn validate_video(spec: &VideoSpec) -> Vec<String> {
    let mut out = Vec::new();
    if spec.num_chunks < 1 {
        out.push("num_chunks must be ≥ 1".to_string());
    }
    if spec.num_tiles < 1 {
        out.push("num_tiles must be ≥ 1".to_string());
    }
    if !(spec.chunk_duration > 0.0) || !spec.chunk_duration.is_finite() {
        out.push("chunk_duration must be > 0".to_string());
    }
    out.extend(spec.ladder.violations());
    out
}

/// `v_m = ln(S_m / S_1)`.
pub fn log_utilities(sizes: &[f64]) -> Result<Vec<f64>> {
    if sizes.is_empty() {
        return Err(Error::validation("sizes must be nonempty"));
    }
    if sizes.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(Error::validation("sizes must be strictly positive"));
    }
    if sizes.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::validation("sizes not nondecreasing"));
    }
    Ok(sizes.iter().map(|s| (s / sizes[0]).ln()).collect())
}

/// The six-level ladder used for the single-algorithm behaviour study
/// (sizes 1..7.5 Mbit, 5 s chunks).
pub fn small_ladder() -> BitrateLadder {
    BitrateLadder::from_sizes(&[1.0, 2.0, 3.0, 4.0, 5.0, 7.5], 5.0).expect("valid ladder")
}

/// The seven-level ladder used for the algorithm comparison
/// (0.44..16.5 Mbit/s, 5 s chunks).
pub fn comparison_ladder() -> BitrateLadder {
    BitrateLadder::from_sizes(&[2.2, 3.5, 6.75, 10.7, 20.5, 41.0, 82.5], 5.0)
        .expect("valid ladder")
}
