//! Report files. JSON carries everything and reads back losslessly; CSV is
//! the tidy long form with columns `experiment,mode,metric,value`.

use std::io::{Read, Write};
use std::path::Path;

use daxsim_core::config::OutputFormat;
use daxsim_core::report::{metrics, SCHEMA_VERSION};
use daxsim_core::ExperimentReport;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::summary::{summarize, SummaryRow};

pub const CSV_HEADER: [&str; 4] = ["experiment", "mode", "metric", "value"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub schema_version: u32,
    pub reports: Vec<ExperimentReport>,
    pub summary: Vec<SummaryRow>,
}

impl RunOutput {
    pub fn new(reports: Vec<ExperimentReport>) -> Self {
        let summary = summarize(&reports);
        RunOutput { schema_version: SCHEMA_VERSION, reports, summary }
    }

    /// Per-seed rows (experiment `name/seed=N`) followed by summary rows
    /// (experiment `name`, metric suffixed `:mean` or `:rms_error`).
    pub fn tidy(&self) -> Vec<TidyRow> {
        let mut rows = Vec::new();
        for r in &self.reports {
            let experiment = format!("{}/seed={}", r.name, r.seed);
            for (m, v) in metrics(r) {
                rows.push(TidyRow { experiment: experiment.clone(), mode: r.mode.to_string(), metric: m.into(), value: v });
            }
        }
        for s in &self.summary {
            for (suffix, v) in [("mean", s.mean), ("rms_error", s.rms_error)] {
                rows.push(TidyRow {
                    experiment: s.experiment.clone(),
                    mode: s.mode.to_string(),
                    metric: format!("{}:{suffix}", s.metric),
                    value: v,
                });
            }
        }
        rows
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TidyRow {
    pub experiment: String,
    pub mode: String,
    pub metric: String,
    pub value: f64,
}

pub fn write_json<W: Write>(out: &RunOutput, mut w: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, out)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn read_json<R: Read>(r: R) -> Result<RunOutput> {
    Ok(serde_json::from_reader(r)?)
}

pub fn write_csv<W: Write>(rows: &[TidyRow], w: W) -> Result<()> {
    let mut c = csv::Writer::from_writer(w);
    c.write_record(CSV_HEADER)?;
    for r in rows {
        c.serialize((&r.experiment, &r.mode, &r.metric, r.value))?;
    }
    c.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<TidyRow>> {
    let mut c = csv::Reader::from_reader(r);
    let header: Vec<String> = c.headers()?.iter().map(String::from).collect();
    if header != CSV_HEADER {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("unexpected CSV header {header:?}"),
        )));
    }
    c.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn write<W: Write>(out: &RunOutput, format: OutputFormat, w: W) -> Result<()> {
    match format {
        OutputFormat::Json => write_json(out, w),
        OutputFormat::Csv => write_csv(&out.tidy(), w),
    }
}

/// Writes to `path`, or stdout when absent.
pub fn emit(out: &RunOutput, format: OutputFormat, path: Option<&Path>) -> Result<()> {
    match path {
        None => write(out, format, std::io::stdout().lock()),
        Some(p) => {
            let wrap = |source| Error::Write { path: p.into(), source };
            let f = std::fs::File::create(p).map_err(wrap)?;
            let mut w = std::io::BufWriter::new(f);
            write(out, format, &mut w).map_err(|e| match e {
                Error::Io(source) => wrap(source),
                e => e,
            })?;
            w.flush().map_err(wrap)
        }
    }
}
