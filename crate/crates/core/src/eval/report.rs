use std::path::Path;

use serde::Serialize;

use super::ensemble::{Ensemble, MacroReport};
use super::micro::MicroReport;
use crate::files::write_atomic;
use crate::Result;

fn write_rows<R: Serialize>(path: &Path, rows: impl IntoIterator<Item = R>) -> Result<usize> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut count = 0;
    for row in rows {
        w.serialize(row)?;
        count += 1;
    }
    let bytes = w.into_inner().map_err(|e| crate::Error::io(path, e.into_error()))?;
    write_atomic(path, &bytes)?;
    Ok(count)
}

/// One row per `(t, agent, feature)` cell, in table order.
pub fn write_micro_csv(path: &Path, report: &MicroReport) -> Result<usize> {
    write_rows(path, &report.entries)
}

#[derive(Serialize)]
struct MacroRow<'a> {
    series: &'a str,
    t: usize,
    truth_mean: f64,
    model_mean: f64,
}

/// Per-step ensemble means, series-major.
pub fn write_macro_csv(path: &Path, report: &MacroReport) -> Result<usize> {
    write_rows(
        path,
        report.series.iter().flat_map(|s| {
            s.truth_mean
                .iter()
                .zip(&s.model_mean)
                .enumerate()
                .map(|(t, (a, f))| MacroRow {
                    series: &s.name,
                    t,
                    truth_mean: *a,
                    model_mean: *f,
                })
        }),
    )
}

#[derive(Serialize)]
struct RunRow<'a> {
    run: usize,
    t: usize,
    series: &'a str,
    value: f64,
}

/// Every run's series, sorted by run, then step, then series.
pub fn write_ensemble_csv(path: &Path, ensemble: &Ensemble) -> Result<usize> {
    let rows = (0..ensemble.num_runs()).flat_map(|r| {
        (0..ensemble.len()).flat_map(move |t| {
            ensemble.names.iter().enumerate().map(move |(s, name)| RunRow {
                run: r,
                t,
                series: name,
                value: ensemble.runs[s][r][t],
            })
        })
    });
    write_rows(path, rows)
}
