//! Rendering [`MetricsReport`]s as a table, CSV or JSON.

use std::io::Write;

use serde::Serialize;

use crate::{BenchError, MetricsReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Csv,
    Json,
}

/// Speed-up of `method` over `baseline` for a lower-is-better metric such as
/// latency. For throughput pass the arguments swapped.
pub fn scale_up(baseline: f64, method: f64) -> f64 {
    baseline / method
}

/// One decimal, halves rounded up: `304 / 21` renders as `14.5×`.
pub fn format_scale_up(factor: f64) -> String {
    // The epsilon absorbs representation error at exact halves like 1.25.
    let rounded = (factor * 10.0 + 0.5 + 1e-9).floor() / 10.0;
    format!("{rounded:.1}×")
}

#[derive(Serialize)]
struct CsvRow<'a> {
    mode: &'a str,
    workers: usize,
    batch: usize,
    k: usize,
    n: usize,
    d: usize,
    runs: usize,
    mean_latency_ms: f64,
    throughput_qps: f64,
    verified: &'a str,
}

fn verified_label(r: &MetricsReport) -> &'static str {
    match r.verified {
        Some(true) => "true",
        Some(false) => "false",
        None => "n/a",
    }
}

/// Writes `reports` to `out`. `baseline` indexes the row scale-ups are
/// computed against (table format only).
pub fn emit_report(
    reports: &[MetricsReport],
    baseline: Option<usize>,
    format: ReportFormat,
    out: &mut impl Write,
) -> Result<(), BenchError> {
    match format {
        ReportFormat::Table => write_table(reports, baseline, out)?,
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in reports {
                w.serialize(CsvRow {
                    mode: &r.mode,
                    workers: r.workers,
                    batch: r.batch,
                    k: r.k,
                    n: r.n,
                    d: r.d,
                    runs: r.runs,
                    mean_latency_ms: r.mean_latency_ms,
                    throughput_qps: r.throughput_qps,
                    verified: verified_label(r),
                })
                .map_err(|e| BenchError::Serialize(e.to_string()))?;
            }
            w.flush()?;
        }
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut *out, reports)
                .map_err(|e| BenchError::Serialize(e.to_string()))?;
            writeln!(out)?;
        }
    }
    Ok(())
}

const HEADERS: [&str; 9] = [
    "Method",
    "K",
    "Workers",
    "Batch Size",
    "Latency (msec/query)",
    "Latency scale-up",
    "Throughput (queries/sec)",
    "Throughput scale-up",
    "Energy (queries/J)",
];

fn write_table(
    reports: &[MetricsReport],
    baseline: Option<usize>,
    out: &mut impl Write,
) -> std::io::Result<()> {
    let base = baseline.and_then(|i| reports.get(i).map(|r| (i, r)));
    let rows: Vec<[String; 9]> = reports
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let (lat_up, thr_up) = match base {
                Some((bi, b)) if bi != i => (
                    format_scale_up(scale_up(b.mean_latency_ms, r.mean_latency_ms)),
                    format_scale_up(scale_up(r.throughput_qps, b.throughput_qps)),
                ),
                _ => ("--".to_string(), "--".to_string()),
            };
            [
                r.method_name().to_string(),
                r.k.to_string(),
                r.workers.to_string(),
                r.batch.to_string(),
                format!("{:.1}", r.mean_latency_ms),
                lat_up,
                format!("{:.1}", r.throughput_qps),
                thr_up,
                r.energy.clone(),
            ]
        })
        .collect();

    let mut widths = HEADERS.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| -> String {
        cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, w))| {
                let pad = w - cell.chars().count();
                if c == 0 {
                    format!("{cell}{}", " ".repeat(pad))
                } else {
                    format!("{}{cell}", " ".repeat(pad))
                }
            })
            .collect::<Vec<_>>()
            .join(" | ")
    };
    let header: Vec<String> = HEADERS.iter().map(|h| h.to_string()).collect();
    writeln!(out, "{}", line(&header))?;
    writeln!(
        out,
        "{}",
        widths
            .iter()
            .map(|w| "-".repeat(*w))
            .collect::<Vec<_>>()
            .join("-+-")
    )?;
    for row in &rows {
        writeln!(out, "{}", line(row))?;
    }
    Ok(())
}
