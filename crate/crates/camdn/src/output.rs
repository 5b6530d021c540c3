//! Output files: JSON reports and CSV tables with a header row.

use std::fs;
use std::path::Path;

use camdn_core::cachemem::TraceRecord;
use camdn_core::mapper::CandidateKind;
use camdn_core::scheduler::DecisionRecord;
use camdn_core::sim::{Comparison, MetricsReport};
use camdn_core::workload::{DistanceBucket, ReuseCountBucket, ReuseStats};
use serde::Serialize;

use crate::error::{CliError, Result};

/// Pretty JSON followed by a newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|source| CliError::Csv { path: path.to_path_buf(), source })
}

/// Writes a header row followed by `rows`.
pub fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let err = |source| CliError::Csv { path: path.to_path_buf(), source };
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub const METRICS_HEADER: [&str; 14] = [
    "cell",
    "scenario",
    "mode",
    "seed",
    "cache_bytes",
    "colocated",
    "model",
    "inferences",
    "latency",
    "dram_read",
    "dram_write",
    "intermediate_dram",
    "hit_rate",
    "speedup",
];

/// Rows of one report: one per model and an `all` row with the aggregate.
/// `speedup` is filled against `reference` when given; the aggregate row
/// carries the geometric mean.
pub fn metrics_rows(cell: usize, report: &MetricsReport, reference: Option<&Comparison>) -> Vec<Vec<String>> {
    let head = |model: &str| {
        vec![
            cell.to_string(),
            report.scenario.clone(),
            report.mode.name().to_string(),
            report.seed.to_string(),
            report.cache_bytes.to_string(),
            report.colocated.to_string(),
            model.to_string(),
        ]
    };
    let mut rows = Vec::with_capacity(report.models.len() + 1);
    for (i, m) in report.models.iter().enumerate() {
        let mut r = head(&m.model);
        r.extend([
            m.inferences.to_string(),
            format!("{:.3}", m.mean_latency),
            m.dram_read.to_string(),
            m.dram_write.to_string(),
            m.intermediate_dram.to_string(),
            format!("{:.6}", m.hit_rate),
            reference.map_or(String::new(), |c| format!("{:.6}", c.rows[i].speedup)),
        ]);
        rows.push(r);
    }
    let mut r = head("all");
    r.extend([
        report.inferences.to_string(),
        format!("{:.3}", report.mean_latency()),
        report.dram_read.to_string(),
        report.dram_write.to_string(),
        report.intermediate_dram.to_string(),
        format!("{:.6}", report.hit_rate),
        reference.map_or(String::new(), |c| format!("{:.6}", c.geomean_speedup)),
    ]);
    rows.push(r);
    rows
}

pub fn write_metrics_csv(path: &Path, rows: Vec<Vec<String>>) -> Result<()> {
    write_rows(path, &METRICS_HEADER, rows)
}

fn kind_name(kind: CandidateKind) -> &'static str {
    match kind {
        CandidateKind::Lwm => "LWM",
        CandidateKind::Lbm => "LBM",
    }
}

pub fn write_decisions_csv(path: &Path, decisions: &[DecisionRecord]) -> Result<()> {
    let rows = decisions.iter().map(|d| {
        vec![
            d.cycle.to_string(),
            d.task.to_string(),
            d.layer.to_string(),
            kind_name(d.kind).to_string(),
            d.p_need.to_string(),
            d.p_ahead.map_or(String::new(), |p| p.to_string()),
            d.downgrades.to_string(),
        ]
    });
    write_rows(path, &["cycle", "task", "layer", "kind", "p_need", "p_ahead", "downgrades"], rows)
}

pub fn write_trace_csv(path: &Path, trace: &[TraceRecord]) -> Result<()> {
    let rows = trace.iter().map(|t| {
        vec![t.cycle.to_string(), t.npu.to_string(), t.kind.name().to_string(), format!("{:#x}", t.address), t.bytes.to_string()]
    });
    write_rows(path, &["cycle", "npu", "kind", "address", "bytes"], rows)
}

pub fn write_reuse_csv(path: &Path, stats: &ReuseStats) -> Result<()> {
    let mut rows = Vec::new();
    for (i, label) in ReuseCountBucket::LABELS.iter().enumerate() {
        rows.push(vec![
            "reuse_count".into(),
            label.to_string(),
            stats.bytes_by_reuse_count[i].to_string(),
            format!("{:.4}", stats.pct_by_reuse_count[i]),
        ]);
    }
    for (i, label) in DistanceBucket::LABELS.iter().enumerate() {
        rows.push(vec![
            "intermediate_reuse_distance".into(),
            label.to_string(),
            stats.intermediate_bytes_by_reuse_distance[i].to_string(),
            format!("{:.4}", stats.pct_intermediate_by_reuse_distance[i]),
        ]);
    }
    write_rows(path, &["histogram", "bucket", "bytes", "pct"], rows)
}

pub fn write_comparison_csv(path: &Path, c: &Comparison) -> Result<()> {
    let mut rows: Vec<Vec<String>> = c
        .rows
        .iter()
        .map(|r| vec![r.model.clone(), format!("{:.6}", r.speedup), format!("{:.4}", r.dram_reduction_pct)])
        .collect();
    rows.push(vec!["geomean".into(), format!("{:.6}", c.geomean_speedup), format!("{:.4}", c.dram_reduction_pct)]);
    write_rows(path, &["model", "speedup", "dram_reduction_pct"], rows)
}

/// Human-readable comparison table.
pub fn comparison_table(c: &Comparison) -> String {
    let mut s = format!("{:<16} {:>10} {:>16}\n", "model", "speedup", "dram_reduction%");
    for r in &c.rows {
        s += &format!("{:<16} {:>10.4} {:>16.2}\n", r.model, r.speedup, r.dram_reduction_pct);
    }
    s += &format!("{:<16} {:>10.4} {:>16.2}\n", "geomean/total", c.geomean_speedup, c.dram_reduction_pct);
    s
}

/// Human-readable reuse histograms.
pub fn reuse_table(name: &str, stats: &ReuseStats) -> String {
    let mut s = format!("{name}\nreuse count      bytes%\n");
    for (i, label) in ReuseCountBucket::LABELS.iter().enumerate() {
        s += &format!("  {:<14} {:>6.2}\n", label, stats.pct_by_reuse_count[i]);
    }
    s += "intermediate reuse distance  bytes%\n";
    for (i, label) in DistanceBucket::LABELS.iter().enumerate() {
        s += &format!("  {:<14} {:>6.2}\n", label, stats.pct_intermediate_by_reuse_distance[i]);
    }
    s
}
