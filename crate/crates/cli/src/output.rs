//! CSV and JSON artifacts. Numbers are written with 17 significant digits,
//! `.` as decimal separator and LF line endings.

use std::fs;
use std::path::Path;

use anyhow::{ensure, Context};
use mfgid_core::{Diagnostics, ForwardRecord, Grid, IterationRecord, LevelSummary, SpaceTimeField, SpatialField};
use sha2::{Digest, Sha256};

pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> anyhow::Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per node: `x` followed by the given columns.
pub fn write_spatial(path: &Path, grid: &Grid, columns: &[(&str, Option<&SpatialField>)]) -> anyhow::Result<()> {
    let mut header = vec!["x"];
    header.extend(columns.iter().map(|(name, _)| *name));
    let rows = (0..grid.n_x()).map(|i| {
        let mut row = vec![num(grid.x(i))];
        row.extend(columns.iter().map(|(_, f)| opt(f.map(|f| f.values()[i]))));
        row
    });
    write_csv(path, &header, rows)
}

/// Long format `t,x,value`, time-major.
pub fn write_space_time(path: &Path, field: &SpaceTimeField) -> anyhow::Result<()> {
    let g = *field.grid();
    let rows = (0..=g.n_t()).flat_map(move |n| {
        let slice = field.slice(n).to_vec();
        (0..g.n_x()).map(move |i| vec![num(g.t(n)), num(g.x(i)), num(slice[i])])
    });
    write_csv(path, &["t", "x", "value"], rows)
}

pub fn write_forward_history(path: &Path, history: &[ForwardRecord]) -> anyhow::Result<()> {
    let rows = history.iter().map(|r| {
        vec![
            r.iter.to_string(),
            num(r.residual),
            r.hjb_fp_solves.to_string(),
            num(r.elapsed_seconds),
        ]
    });
    write_csv(path, &["iter", "residual", "hjb_fp_solves", "elapsed_seconds"], rows)
}

pub fn write_inverse_history(path: &Path, history: &[IterationRecord]) -> anyhow::Result<()> {
    let rows = history.iter().map(|r| {
        vec![
            r.k.to_string(),
            num(r.meas_rel_err),
            opt(r.q_rel_err),
            num(r.forward_residual),
            r.hjb_fp_solves_cum.to_string(),
            num(r.elapsed_seconds),
            num(r.fine_equivalent_cost),
            r.level.to_string(),
        ]
    });
    let header = [
        "k",
        "meas_rel_err",
        "q_rel_err",
        "forward_residual",
        "hjb_fp_solves_cum",
        "elapsed_seconds",
        "fine_equivalent_cost",
        "level",
    ];
    write_csv(path, &header, rows)
}

pub fn write_levels(path: &Path, levels: &[LevelSummary]) -> anyhow::Result<()> {
    let rows = levels.iter().map(|l| {
        vec![
            l.level.to_string(),
            l.n_x.to_string(),
            l.n_t.to_string(),
            l.outer_iterations.to_string(),
            l.hjb_fp_solves.to_string(),
            num(l.fine_equivalent_cost),
            num(l.meas_rel_err),
            opt(l.q_rel_err),
            num(l.elapsed_seconds),
        ]
    });
    let header = [
        "level",
        "n_x",
        "n_t",
        "outer_iterations",
        "hjb_fp_solves",
        "fine_equivalent_cost",
        "meas_rel_err",
        "q_rel_err",
        "elapsed_seconds",
    ];
    write_csv(path, &header, rows)
}

pub fn write_diagnostics(path: &Path, grid: &Grid, d: &Diagnostics) -> anyhow::Result<()> {
    write_spatial(
        path,
        grid,
        &[
            ("q_minus_qhat", Some(&d.q_minus_qhat)),
            ("correction", Some(&d.correction)),
            ("error", Some(&d.error)),
            ("pec", Some(&d.pec)),
        ],
    )
}

/// Read a `x,phi0` measurement file onto `grid`.
pub fn read_measurement(path: &Path, grid: &Grid) -> anyhow::Result<SpatialField> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = r.headers()?.clone();
    let col = headers
        .iter()
        .position(|h| h == "phi0")
        .with_context(|| format!("{} has no phi0 column", path.display()))?;
    let mut values = Vec::with_capacity(grid.n_x());
    for rec in r.records() {
        let rec = rec?;
        let v: f64 = rec[col].trim().parse().with_context(|| format!("bad value {:?}", &rec[col]))?;
        values.push(v);
    }
    ensure!(
        values.len() == grid.n_x(),
        "{} has {} rows, grid has {} nodes",
        path.display(),
        values.len(),
        grid.n_x()
    );
    Ok(SpatialField::new(*grid, values)?)
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
