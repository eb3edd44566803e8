//! Piecewise-constant bandwidth traces.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TRACE_HEADER: [&str; 2] = ["time_s", "bandwidth_mbps"];

/// Bandwidth as a step function of time. Each breakpoint holds until the
/// next one; the last value extends forever.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthTrace {
    points: Vec<(f64, f64)>,
}

impl BandwidthTrace {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::validation("trace is empty"));
        }
        if points[0].0 != 0.0 {
            return Err(Error::validation("trace must start at t=0"));
        }
        if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::validation("trace times must be strictly increasing"));
        }
        if points.iter().any(|&(t, w)| !(w >= 0.0) || !w.is_finite() || !t.is_finite()) {
            return Err(Error::validation("trace bandwidths must be finite and ≥ 0"));
        }
        if points.iter().all(|&(_, w)| w == 0.0) {
            return Err(Error::validation("trace bandwidth is zero everywhere"));
        }
        Ok(BandwidthTrace { points })
    }

    pub fn constant(mbps: f64) -> Result<Self> {
        Self::new(vec![(0.0, mbps)])
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    fn piece_index(&self, t: f64) -> usize {
        self.points.partition_point(|&(pt, _)| pt <= t).saturating_sub(1)
    }

    pub fn bandwidth_at(&self, t: f64) -> f64 {
        self.points[self.piece_index(t)].1
    }

    /// Multiplies every bandwidth by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.points.iter().map(|&(t, w)| (t, w * factor)).collect())
    }

    /// Mbit deliverable over `[from, to]`.
    pub fn volume(&self, from: f64, to: f64) -> f64 {
        if to <= from {
            return 0.0;
        }
        let mut total = 0.0;
        let mut i = self.piece_index(from);
        let mut t = from;
        while t < to {
            let end = self.points.get(i + 1).map_or(f64::INFINITY, |p| p.0).min(to);
            total += self.points[i].1 * (end - t);
            t = end;
            i += 1;
        }
        total
    }

    /// Earliest time at which `size` Mbit started at `start` have arrived.
    pub fn download_finish(&self, start: f64, size: f64) -> Result<f64> {
        if !(size >= 0.0) {
            return Err(Error::validation(format!("download size {size} < 0")));
        }
        if size == 0.0 {
            return Ok(start);
        }
        let mut remaining = size;
        let mut t = start;
        let mut i = self.piece_index(start);
        loop {
            let rate = self.points[i].1;
            match self.points.get(i + 1) {
                Some(&(next, _)) => {
                    let capacity = rate * (next - t);
                    if rate > 0.0 && capacity >= remaining {
                        return Ok(t + remaining / rate);
                    }
                    remaining -= capacity;
                    t = next;
                    i += 1;
                }
                None => {
                    if rate > 0.0 {
                        return Ok(t + remaining / rate);
                    }
                    return Err(Error::StalledDownload { start, remaining });
                }
            }
        }
    }

    /// Reads `time_s,bandwidth_mbps` CSV.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != TRACE_HEADER {
            return Err(Error::TraceFormat {
                line: 1,
                msg: format!("expected header `{}`", TRACE_HEADER.join(",")),
            });
        }
        let mut points: Vec<(f64, f64)> = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec?;
            let parse = |idx: usize| -> Result<f64> {
                rec.get(idx)
                    .ok_or_else(|| Error::TraceFormat { line, msg: "missing column".into() })?
                    .parse::<f64>()
                    .map_err(|e| Error::TraceFormat { line, msg: e.to_string() })
            };
            let (t, w) = (parse(0)?, parse(1)?);
            if w < 0.0 || !w.is_finite() {
                return Err(Error::TraceFormat { line, msg: format!("bad bandwidth {w}") });
            }
            if let Some(&(prev, _)) = points.last() {
                if !(t > prev) {
                    return Err(Error::TraceFormat { line, msg: format!("time {t} not after {prev}") });
                }
            } else if t != 0.0 {
                return Err(Error::TraceFormat { line, msg: "first row must be at time 0".into() });
            }
            points.push((t, w));
        }
        if points.is_empty() {
            return Err(Error::TraceFormat { line: 1, msg: "no rows".into() });
        }
        Self::new(points).map_err(|e| Error::TraceFormat { line: 1, msg: e.to_string() })
    }

    pub fn to_csv_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(TRACE_HEADER)?;
        for &(t, w) in &self.points {
            wtr.write_record([format_num(t), format_num(w)])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn format_num(x: f64) -> String {
    // Shortest representation that round-trips.
    format!("{x}")
}

pub fn load_bandwidth_trace(path: &Path) -> Result<BandwidthTrace> {
    let file = std::fs::File::open(path)?;
    BandwidthTrace::from_csv_reader(file)
}

/// Shapes for synthetic traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceShape {
    Constant { mbps: f64 },
    /// Alternates `low`, `high` every half period, starting low.
    Square { low: f64, high: f64, period: f64 },
    /// `start + slope * t`, sampled on steps of `step` seconds.
    Ramp { start: f64, slope: f64, step: f64 },
}

/// Deterministic trace of the given shape covering `[0, duration)`.
pub fn synth_trace(shape: &TraceShape, duration: f64) -> Result<BandwidthTrace> {
    match *shape {
        TraceShape::Constant { mbps } => BandwidthTrace::constant(mbps),
        TraceShape::Square { low, high, period } => {
            if !(period > 0.0) {
                return Err(Error::validation("square period must be > 0"));
            }
            let half = period / 2.0;
            let n = (duration / half).ceil().max(1.0) as usize;
            let points = (0..n)
                .map(|i| (i as f64 * half, if i % 2 == 0 { low } else { high }))
                .collect();
            BandwidthTrace::new(points)
        }
        TraceShape::Ramp { start, slope, step } => {
            if !(step > 0.0) {
                return Err(Error::validation("ramp step must be > 0"));
            }
            let n = (duration / step).ceil().max(1.0) as usize;
            let points = (0..n)
                .map(|i| {
                    let t = i as f64 * step;
                    (t, (start + slope * t).max(0.0))
                })
                .collect();
            BandwidthTrace::new(points)
        }
    }
}
