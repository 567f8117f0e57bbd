//! CSV and JSON run reports with a fixed column order.

use super::{HarnessError, RunResult};
use crate::ledger::Category;
use serde::Serialize;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown report format `{other}` (expected csv or json)")),
        }
    }
}

/// One report line. Ratios are pre-formatted so output is byte-stable.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub run_id: usize,
    pub organization: String,
    pub flags: String,
    pub xpoint_read: u64,
    pub xpoint_write: u64,
    pub cache_hit_read: u64,
    pub cache_write: u64,
    pub install: u64,
    pub miss_probe: u64,
    pub toc_access: u64,
    pub toc_update: u64,
    pub dirty_bit_update: u64,
    pub rho: String,
    pub useful_fraction: String,
    pub makespan_ns: u64,
    pub verdict: String,
}

pub const COLUMNS: [&str; 16] = [
    "run_id",
    "organization",
    "flags",
    "xpoint_read",
    "xpoint_write",
    "cache_hit_read",
    "cache_write",
    "install",
    "miss_probe",
    "toc_access",
    "toc_update",
    "dirty_bit_update",
    "rho",
    "useful_fraction",
    "makespan_ns",
    "verdict",
];

impl ReportRow {
    pub fn from_result(r: &RunResult) -> Self {
        let c = |cat| r.count(cat);
        ReportRow {
            run_id: r.run_id,
            organization: r.config.organization.to_string(),
            flags: r.config.flags_label(),
            xpoint_read: c(Category::XpointRead),
            xpoint_write: c(Category::XpointWrite),
            cache_hit_read: c(Category::CacheHitRead),
            cache_write: c(Category::CacheWrite),
            install: c(Category::Install),
            miss_probe: c(Category::MissProbe),
            toc_access: c(Category::TocAccess),
            toc_update: c(Category::TocUpdate),
            dirty_bit_update: c(Category::DirtyBitUpdate),
            rho: r.rho.map_or_else(|| "-".to_string(), |x| format!("{x:.6}")),
            useful_fraction: format!("{:.6}", r.useful_fraction()),
            makespan_ns: r.channel.makespan_ns,
            verdict: r.verdict.to_string(),
        }
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.run_id.to_string(),
            self.organization.clone(),
            self.flags.clone(),
            self.xpoint_read.to_string(),
            self.xpoint_write.to_string(),
            self.cache_hit_read.to_string(),
            self.cache_write.to_string(),
            self.install.to_string(),
            self.miss_probe.to_string(),
            self.toc_access.to_string(),
            self.toc_update.to_string(),
            self.dirty_bit_update.to_string(),
            self.rho.clone(),
            self.useful_fraction.clone(),
            self.makespan_ns.to_string(),
            self.verdict.clone(),
        ]
    }
}

pub fn write_report<W: Write>(results: &[RunResult], format: ReportFormat, out: W) -> Result<(), HarnessError> {
    let rows: Vec<ReportRow> = results.iter().map(ReportRow::from_result).collect();
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(COLUMNS)?;
            for r in &rows {
                w.write_record(r.fields())?;
            }
            w.flush()?;
        }
        ReportFormat::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, &rows)?;
            writeln!(out)?;
            out.flush()?;
        }
    }
    Ok(())
}

/// Writes the report to `path`.
pub fn emit_report(results: &[RunResult], format: ReportFormat, path: &Path) -> Result<(), HarnessError> {
    let file = File::create(path)?;
    write_report(results, format, BufWriter::new(file))
}
