//! Per-iteration trace rows and the line-delimited trace file: one JSON
//! document per line, flushed per iteration, so the file stays valid
//! after a crash at any point and each row parses on its own.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::space::SystemConfig;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace io: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error("trace is empty")]
    Empty,
}

/// One row per optimizer iteration; the data behind a convergence plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u64,
    /// The iterate measured this iteration, normalized.
    pub theta: Vec<f64>,
    /// The same iterate in raw system units.
    pub system_config: SystemConfig,
    /// Base measurement at the iterate (mean over replicates).
    pub f_base: f64,
    /// Probe measurement per replicate.
    pub f_perturbed: Vec<f64>,
    pub grad_norm: f64,
    pub alpha: f64,
    pub eval_count_cumulative: u64,
    pub best_value_so_far: f64,
    /// Wall time of the iteration; excluded from determinism comparisons.
    pub wall_ms: u64,
}

/// Destination for trace rows.
pub trait TraceSink {
    fn record(&mut self, row: &IterationRecord) -> std::io::Result<()>;
}

/// In-memory sink.
impl TraceSink for Vec<IterationRecord> {
    fn record(&mut self, row: &IterationRecord) -> std::io::Result<()> {
        self.push(row.clone());
        Ok(())
    }
}

/// Sink that discards rows.
pub struct NullSink;

impl TraceSink for NullSink {
    fn record(&mut self, _row: &IterationRecord) -> std::io::Result<()> {
        Ok(())
    }
}

/// Line-delimited JSON writer, flushed after every row.
pub struct JsonlWriter<W: Write> {
    writer: W,
}

impl JsonlWriter<BufWriter<File>> {
    /// Open a trace file, truncating or appending.
    pub fn open(path: &Path, append: bool) -> std::io::Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .append(append)
            .truncate(!append)
            .open(path)?;
        Ok(JsonlWriter {
            writer: BufWriter::new(file),
        })
    }
}

impl<W: Write> JsonlWriter<W> {
    pub fn new(writer: W) -> Self {
        JsonlWriter { writer }
    }
}

impl<W: Write> TraceSink for JsonlWriter<W> {
    fn record(&mut self, row: &IterationRecord) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.writer, row)?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()
    }
}

/// Read a whole trace file; every line must parse independently.
pub fn read_trace(path: &Path) -> Result<Vec<IterationRecord>, TraceError> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(
            serde_json::from_str(&line).map_err(|source| TraceError::Parse {
                line: i + 1,
                source,
            })?,
        );
    }
    Ok(rows)
}

/// Headline numbers computed from a trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceSummary {
    pub iterations: usize,
    pub initial_f: f64,
    pub best_f: f64,
    /// `(1 - best/initial) * 100`, the improvement over the starting
    /// configuration; 0 when the initial value is not positive.
    pub improvement_pct: f64,
    pub eval_count: u64,
}

pub fn summarize(rows: &[IterationRecord]) -> Result<TraceSummary, TraceError> {
    let first = rows.first().ok_or(TraceError::Empty)?;
    let initial_f = first.f_base;
    let best_f = rows.iter().map(|r| r.f_base).fold(f64::INFINITY, f64::min);
    let improvement_pct = if initial_f > 0.0 {
        (1.0 - best_f / initial_f) * 100.0
    } else {
        0.0
    };
    Ok(TraceSummary {
        iterations: rows.len(),
        initial_f,
        best_f,
        improvement_pct,
        eval_count: rows.last().map(|r| r.eval_count_cumulative).unwrap_or(0),
    })
}

/// Plain-text sparkline of a value series, one glyph per sample.
pub fn sparkline(values: &[f64]) -> String {
    const GLYPHS: [char; 8] = ['\u{2581}', '\u{2582}', '\u{2583}', '\u{2584}', '\u{2585}', '\u{2586}', '\u{2587}', '\u{2588}'];
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return String::new();
    }
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|&v| {
            if !v.is_finite() {
                return ' ';
            }
            if hi == lo {
                return GLYPHS[0];
            }
            let bucket = ((v - lo) / (hi - lo) * 7.0).round() as usize;
            GLYPHS[bucket.min(7)]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::RawValue;

    fn row(iteration: u64, f_base: f64) -> IterationRecord {
        IterationRecord {
            iteration,
            theta: vec![0.5],
            system_config: SystemConfig::new(vec![RawValue::Int(50)]),
            f_base,
            f_perturbed: vec![f_base + 0.1],
            grad_norm: 1.0,
            alpha: 0.01,
            eval_count_cumulative: (iteration + 1) * 2,
            best_value_so_far: f_base,
            wall_ms: 3,
        }
    }

    #[test]
    fn improvement_is_one_minus_best_over_initial() {
        let rows = vec![row(0, 100.0), row(1, 80.0), row(2, 34.0), row(3, 60.0)];
        let s = summarize(&rows).unwrap();
        assert_eq!(s.initial_f, 100.0);
        assert_eq!(s.best_f, 34.0);
        assert!((s.improvement_pct - 66.0).abs() < 1e-12);
    }

    #[test]
    fn single_row_trace_has_zero_improvement() {
        let s = summarize(&[row(0, 42.0)]).unwrap();
        assert_eq!(s.improvement_pct, 0.0);
    }

    #[test]
    fn best_is_minimum_not_last() {
        let rows = vec![row(0, 10.0), row(1, 4.0), row(2, 7.0)];
        let s = summarize(&rows).unwrap();
        assert_eq!(s.best_f, 4.0);
    }

    #[test]
    fn empty_trace_is_an_error() {
        assert!(matches!(summarize(&[]), Err(TraceError::Empty)));
    }

    #[test]
    fn rows_survive_file_round_trip_line_by_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.jsonl");
        let rows = vec![row(0, 5.0), row(1, 3.0)];
        {
            let mut writer = JsonlWriter::open(&path, false).unwrap();
            for r in &rows {
                writer.record(r).unwrap();
            }
        }
        assert_eq!(read_trace(&path).unwrap(), rows);
        // Each line parses on its own.
        let text = std::fs::read_to_string(&path).unwrap();
        for line in text.lines() {
            let _: IterationRecord = serde_json::from_str(line).unwrap();
        }
    }

    #[test]
    fn truncated_last_line_is_reported_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.jsonl");
        let mut writer = JsonlWriter::open(&path, false).unwrap();
        writer.record(&row(0, 5.0)).unwrap();
        drop(writer);
        let mut text = std::fs::read_to_string(&path).unwrap();
        text.push_str("{\"iteration\": 1, \"theta\"");
        std::fs::write(&path, text).unwrap();
        match read_trace(&path) {
            Err(TraceError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn sparkline_spans_glyph_range() {
        let s = sparkline(&[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(s.chars().count(), 4);
        assert!(s.starts_with('\u{2581}'));
        assert!(s.ends_with('\u{2588}'));
    }
}
