use crate::suites::{num, SuiteResult, Table};
use serde::Serialize;
use std::fs;
use std::io;
use std::path::Path;

pub const PLOT_SUITES: [&str; 2] = ["decay", "dtn"];

#[derive(Serialize)]
pub struct Provenance<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_path: String,
    pub config_sha256: String,
    pub seed: u64,
    pub mesh_ladder: &'a [usize],
    pub suites: Vec<&'a str>,
    pub started_unix: f64,
    pub finished_unix: f64,
}

fn write_table(path: &Path, t: &Table) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&t.header)?;
    for row in &t.rows {
        w.write_record(row)?;
    }
    w.flush()
}

pub fn write_summary(path: &Path, results: &[SuiteResult]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["suite", "check", "value", "threshold", "status"])?;
    for r in results {
        for c in &r.checks {
            w.write_record([r.name.as_str(), &c.name, &num(c.value), &c.threshold, c.status.as_str()])?;
        }
        w.write_record([r.name.as_str(), "verdict", "", "", if r.pass() { "PASS" } else { "FAIL" }])?;
    }
    w.flush()
}

/// Writes `<suite>.csv` for every result, the plot tables, and the summary.
/// The caller writes the provenance sidecar, which holds the only timestamps.
pub fn write_bundle(dir: &Path, results: &[SuiteResult]) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    for r in results {
        write_table(&dir.join(format!("{}.csv", r.name)), &r.table)?;
        if PLOT_SUITES.contains(&r.name.as_str()) {
            let plot = plot_table(dir, &r.name).map_err(io::Error::other)?;
            write_table(&dir.join(format!("{}_plot.csv", r.name)), &plot)?;
        }
    }
    write_summary(&dir.join("summary.csv"), results)
}

pub fn write_provenance(dir: &Path, p: &Provenance) -> io::Result<()> {
    fs::write(dir.join("provenance.json"), serde_json::to_string_pretty(p)? + "\n")
}

/// Tidy plot data for `suite`, read back from the bundle in `dir`.
/// A suite that was not executed yields a header-only table.
pub fn plot_table(dir: &Path, suite: &str) -> Result<Table, String> {
    let (header, keep): (Vec<&'static str>, fn(&csv::StringRecord, &csv::StringRecord, usize) -> bool) = match suite {
        "decay" => (vec!["quantity", "mu", "norm", "fit_residual"], |_, _, _| true),
        // finest rung only
        "dtn" => (vec!["k", "measured_symbol_re", "measured_symbol_im", "closed_form"], |h, r, finest| {
            field(h, r, "nt").and_then(|v| v.parse::<usize>().ok()) == Some(finest)
        }),
        other => return Err(format!("no plot data for suite `{other}` (available: {})", PLOT_SUITES.join(", "))),
    };
    let mut out = Table { header: header.clone(), rows: vec![] };
    let path = dir.join(format!("{suite}.csv"));
    if !path.exists() {
        return Ok(out);
    }
    let mut rd = csv::Reader::from_path(&path).map_err(|e| e.to_string())?;
    let h = rd.headers().map_err(|e| e.to_string())?.clone();
    let records: Vec<csv::StringRecord> = rd.records().collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let finest = records.iter().filter_map(|r| field(&h, r, "nt")?.parse::<usize>().ok()).max().unwrap_or(0);
    for r in records.iter().filter(|r| keep(&h, r, finest)) {
        let row: Option<Vec<String>> = header.iter().map(|c| field(&h, r, c).map(str::to_string)).collect();
        out.rows.push(row.ok_or_else(|| format!("{} lacks a plot column", path.display()))?);
    }
    Ok(out)
}

fn field<'a>(h: &csv::StringRecord, r: &'a csv::StringRecord, name: &str) -> Option<&'a str> {
    h.iter().position(|c| c == name).and_then(|i| r.get(i))
}

pub fn write_plot(out: &mut dyn io::Write, t: &Table) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&t.header)?;
    for row in &t.rows {
        w.write_record(row)?;
    }
    w.flush()
}
