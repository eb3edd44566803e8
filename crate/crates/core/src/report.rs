//! CSV and JSON emission of experiment results.
//!
//! Floats are written with 6 significant digits and rows keep the order
//! they are given in, so identical results always produce identical bytes.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{AlgorithmSummary, BufferSample, CdfPoint, ExperimentOutput, TrialResultRow};
use crate::sim::SessionMetrics;

pub const SCHEMA_VERSION: u32 = 1;

pub const ROW_COLUMNS: [&str; 16] = [
    "algorithm",
    "trace",
    "profile",
    "trial",
    "seed",
    "qoe",
    "utility",
    "smoothness",
    "rebuffer_ratio",
    "avg_playing_bitrate",
    "playback_delay",
    "oscillation",
    "reaction_time",
    "total_stall",
    "blank_chunks",
    "t_end",
];

pub const SUMMARY_COLUMNS: [&str; 11] = [
    "algorithm",
    "trials",
    "qoe_mean",
    "qoe_std",
    "bitrate_mean",
    "bitrate_std",
    "rebuffer_mean",
    "rebuffer_std",
    "delay_mean",
    "oscillation_mean",
    "reaction_mean",
];

/// Rounds to 6 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().unwrap_or(x)
}

/// Shortest text of `x` rounded to 6 significant digits.
pub fn fmt_sig(x: f64) -> String {
    let r = round_sig(x);
    if r == 0.0 {
        "0".to_string()
    } else {
        format!("{r}")
    }
}

impl SessionMetrics {
    /// Every float rounded as it is emitted.
    pub fn rounded(&self) -> Self {
        SessionMetrics {
            utility: round_sig(self.utility),
            smoothness: round_sig(self.smoothness),
            qoe: round_sig(self.qoe),
            rebuffer_ratio: round_sig(self.rebuffer_ratio),
            avg_playing_bitrate: round_sig(self.avg_playing_bitrate),
            playback_delay: round_sig(self.playback_delay),
            oscillation: round_sig(self.oscillation),
            reaction_time: round_sig(self.reaction_time),
            total_stall: round_sig(self.total_stall),
            blank_chunks: self.blank_chunks,
            t_end: round_sig(self.t_end),
        }
    }
}

impl TrialResultRow {
    pub fn rounded(&self) -> Self {
        TrialResultRow { metrics: self.metrics.rounded(), ..self.clone() }
    }

    fn record(&self) -> Vec<String> {
        let m = &self.metrics;
        vec![
            self.algorithm.clone(),
            self.trace.clone(),
            self.profile.clone(),
            self.trial.to_string(),
            self.seed.to_string(),
            fmt_sig(m.qoe),
            fmt_sig(m.utility),
            fmt_sig(m.smoothness),
            fmt_sig(m.rebuffer_ratio),
            fmt_sig(m.avg_playing_bitrate),
            fmt_sig(m.playback_delay),
            fmt_sig(m.oscillation),
            fmt_sig(m.reaction_time),
            fmt_sig(m.total_stall),
            m.blank_chunks.to_string(),
            fmt_sig(m.t_end),
        ]
    }
}

impl AlgorithmSummary {
    pub fn rounded(&self) -> Self {
        AlgorithmSummary {
            algorithm: self.algorithm.clone(),
            trials: self.trials,
            qoe_mean: round_sig(self.qoe_mean),
            qoe_std: round_sig(self.qoe_std),
            bitrate_mean: round_sig(self.bitrate_mean),
            bitrate_std: round_sig(self.bitrate_std),
            rebuffer_mean: round_sig(self.rebuffer_mean),
            rebuffer_std: round_sig(self.rebuffer_std),
            delay_mean: round_sig(self.delay_mean),
            oscillation_mean: round_sig(self.oscillation_mean),
            reaction_mean: round_sig(self.reaction_mean),
        }
    }
}

pub fn write_rows_csv<W: Write>(rows: &[TrialResultRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(ROW_COLUMNS)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows_csv<R: Read>(reader: R) -> Result<Vec<TrialResultRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    if rdr.headers()?.iter().collect::<Vec<_>>() != ROW_COLUMNS {
        return Err(Error::Config("unexpected result columns".into()));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let f = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|e| Error::Config(format!("column {}: {e}", ROW_COLUMNS[i])))
        };
        let u = |i: usize| -> Result<u64> {
            rec[i].parse().map_err(|e| Error::Config(format!("column {}: {e}", ROW_COLUMNS[i])))
        };
        rows.push(TrialResultRow {
            algorithm: rec[0].to_string(),
            trace: rec[1].to_string(),
            profile: rec[2].to_string(),
            trial: u(3)? as usize,
            seed: u(4)?,
            metrics: SessionMetrics {
                qoe: f(5)?,
                utility: f(6)?,
                smoothness: f(7)?,
                rebuffer_ratio: f(8)?,
                avg_playing_bitrate: f(9)?,
                playback_delay: f(10)?,
                oscillation: f(11)?,
                reaction_time: f(12)?,
                total_stall: f(13)?,
                blank_chunks: u(14)? as usize,
                t_end: f(15)?,
            },
        });
    }
    Ok(rows)
}

pub fn write_summary_csv<W: Write>(summary: &[AlgorithmSummary], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SUMMARY_COLUMNS)?;
    for s in summary {
        w.write_record([
            s.algorithm.clone(),
            s.trials.to_string(),
            fmt_sig(s.qoe_mean),
            fmt_sig(s.qoe_std),
            fmt_sig(s.bitrate_mean),
            fmt_sig(s.bitrate_std),
            fmt_sig(s.rebuffer_mean),
            fmt_sig(s.rebuffer_std),
            fmt_sig(s.delay_mean),
            fmt_sig(s.oscillation_mean),
            fmt_sig(s.reaction_mean),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_cdf_csv<W: Write>(cdf: &[CdfPoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["algorithm", "metric", "percentile", "value"])?;
    for p in cdf {
        w.write_record([p.algorithm.clone(), p.metric.clone(), p.percentile.to_string(), fmt_sig(p.value)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_buffer_csv<W: Write>(series: &[BufferSample], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["algorithm", "time_s", "buffer_segments"])?;
    for s in series {
        w.write_record([s.algorithm.clone(), fmt_sig(s.time), fmt_sig(s.buffer)])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonReport {
    pub schema_version: u32,
    pub rows: Vec<TrialResultRow>,
    pub summary: Vec<AlgorithmSummary>,
}

pub fn write_json<W: Write>(out: &ExperimentOutput, mut writer: W) -> Result<()> {
    let report = JsonReport {
        schema_version: SCHEMA_VERSION,
        rows: out.rows.iter().map(TrialResultRow::rounded).collect(),
        summary: out.summary.iter().map(AlgorithmSummary::rounded).collect(),
    };
    serde_json::to_writer_pretty(&mut writer, &report)?;
    writer.write_all(b"\n")?;
    Ok(())
}

pub fn read_json<R: Read>(reader: R) -> Result<JsonReport> {
    let report: JsonReport = serde_json::from_reader(reader)?;
    if report.schema_version != SCHEMA_VERSION {
        return Err(Error::Config(format!("unsupported schema_version {}", report.schema_version)));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(alg: &str, trial: usize, qoe: f64) -> TrialResultRow {
        TrialResultRow {
            algorithm: alg.into(),
            trace: "constant-10".into(),
            profile: "2".into(),
            trial,
            seed: 100 + trial as u64,
            metrics: SessionMetrics {
                utility: qoe * 0.7,
                smoothness: 1.0 / 3.0,
                qoe,
                rebuffer_ratio: 0.0,
                avg_playing_bitrate: 1.23456789,
                playback_delay: 12.5,
                oscillation: 0.1,
                reaction_time: 20.0,
                total_stall: 0.0,
                blank_chunks: 0,
                t_end: 251.000001,
            },
        }
    }

    #[test]
    fn sig_digits() {
        assert_eq!(fmt_sig(1.0 / 3.0), "0.333333");
        assert_eq!(fmt_sig(123456789.0), "123457000");
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(-2.5e-7), "-0.00000025");
        assert_eq!(fmt_sig(251.000001), "251");
    }

    #[test]
    fn empty_csv_is_header_only() {
        let mut buf = Vec::new();
        write_rows_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{}\n", ROW_COLUMNS.join(",")));
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![row("bola360", 0, 0.91234567), row("top-x", 0, 0.5)];
        let mut buf = Vec::new();
        write_rows_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8_lossy(&buf).lines().count(), 3);
        let back = read_rows_csv(buf.as_slice()).unwrap();
        let want: Vec<_> = rows.iter().map(TrialResultRow::rounded).collect();
        assert_eq!(back, want);
    }

    #[test]
    fn json_round_trip() {
        let rows = vec![row("bola360", 0, 0.91234567), row("bola360", 1, 0.8)];
        let (summary, _) = crate::experiment::summarize(&rows);
        let out = ExperimentOutput { rows: rows.clone(), summary, ..Default::default() };
        let mut buf = Vec::new();
        write_json(&out, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).contains("\"schema_version\": 1"));
        let back = read_json(buf.as_slice()).unwrap();
        assert_eq!(back.rows, rows.iter().map(TrialResultRow::rounded).collect::<Vec<_>>());
        assert_eq!(back.summary[0].trials, 2);
    }
}
