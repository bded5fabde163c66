//! CSV exports of metric series and batch summaries.

use std::io::Write;

use opinion_core::metrics::SeriesModel;
use opinion_core::MetricsSeries;
use serde::Serialize;

#[derive(Debug, Serialize)]
struct SeriesRow<'a> {
    run_id: &'a str,
    model: SeriesModel,
    condition: String,
    framing: String,
    iteration: u32,
    polarization: f64,
    /// Empty when undefined.
    nci: Option<f64>,
}

/// One row per (series, iteration).
pub fn write_series_csv<W: Write>(out: W, series: &[MetricsSeries]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in series {
        for r in &s.records {
            w.serialize(SeriesRow {
                run_id: s.run_id.as_deref().unwrap_or(""),
                model: s.model,
                condition: s
                    .condition
                    .map(|c| serde_json::to_value(c).unwrap().as_str().unwrap_or("").to_string())
                    .unwrap_or_default(),
                framing: s.framing.map(|f| f.to_string()).unwrap_or_default(),
                iteration: r.iteration,
                polarization: r.polarization,
                nci: r.nci,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub run_id: String,
    pub framing: String,
    pub rng_seed: u64,
    pub status: String,
    pub initial_polarization: Option<f64>,
    pub final_polarization: Option<f64>,
    pub final_nci: Option<f64>,
    pub error: String,
}

impl SummaryRow {
    pub fn from_series(run_id: &str, framing: &str, rng_seed: u64, s: &MetricsSeries) -> Self {
        SummaryRow {
            run_id: run_id.to_string(),
            framing: framing.to_string(),
            rng_seed,
            status: "complete".into(),
            initial_polarization: s.records.first().map(|r| r.polarization),
            final_polarization: s.records.last().map(|r| r.polarization),
            final_nci: s.records.last().and_then(|r| r.nci),
            error: String::new(),
        }
    }

    pub fn failed(run_id: &str, framing: &str, rng_seed: u64, error: String) -> Self {
        SummaryRow {
            run_id: run_id.to_string(),
            framing: framing.to_string(),
            rng_seed,
            status: "failed".into(),
            initial_polarization: None,
            final_polarization: None,
            final_nci: None,
            error,
        }
    }
}

pub fn write_summary_csv<W: Write>(out: W, rows: &[SummaryRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Fixed-width table for terminal output.
pub fn format_summary(rows: &[SummaryRow]) -> String {
    let f = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
    let mut out = format!(
        "{:<28} {:<10} {:>8} {:>9} {:>9} {:>9}  {}\n",
        "run", "framing", "seed", "P_z(0)", "P_z(T)", "NCI(T)", "status"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<28} {:<10} {:>8} {:>9} {:>9} {:>9}  {}{}\n",
            r.run_id,
            r.framing,
            r.rng_seed,
            f(r.initial_polarization),
            f(r.final_polarization),
            f(r.final_nci),
            r.status,
            if r.error.is_empty() { String::new() } else { format!(": {}", r.error) }
        ));
    }
    out
}
