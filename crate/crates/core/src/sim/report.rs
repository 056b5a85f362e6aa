use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Result, VneError};
use crate::metrics::{read_results, ResultRow};

/// Aligned curves of several runs on the union of their arrival times.
#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub header: Vec<String>,
    /// `time` followed by `long_term_rc` and `acceptance_rate` per run;
    /// `None` before a run's first value.
    pub rows: Vec<(f64, Vec<Option<f64>>)>,
}

/// Steps every run's curves forward to each time at which any run has an
/// arrival.
pub fn align(runs: &[(String, Vec<ResultRow>)]) -> Report {
    let mut header = vec!["time".to_string()];
    for (name, _) in runs {
        header.push(format!("{name}.long_term_rc"));
        header.push(format!("{name}.acceptance_rate"));
    }
    let mut times: Vec<f64> = runs.iter().flat_map(|(_, r)| r.iter().map(|row| row.time)).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut cursor = vec![0usize; runs.len()];
    let mut current: Vec<(Option<f64>, Option<f64>)> = vec![(None, None); runs.len()];
    let mut rows = Vec::with_capacity(times.len());
    for t in times {
        for (k, (_, rs)) in runs.iter().enumerate() {
            while cursor[k] < rs.len() && rs[cursor[k]].time <= t {
                let r = &rs[cursor[k]];
                current[k] = (r.long_term_rc, r.acceptance_rate);
                cursor[k] += 1;
            }
        }
        let values = current.iter().flat_map(|&(a, b)| [a, b]).collect();
        rows.push((t, values));
    }
    Report { header, rows }
}

/// Unique column prefix per input: the file stem, suffixed with its
/// position when stems collide.
fn run_names(inputs: &[PathBuf]) -> Vec<String> {
    let stems: Vec<String> = inputs
        .iter()
        .map(|p| {
            p.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "run".into())
        })
        .collect();
    stems
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if stems.iter().filter(|o| *o == s).count() > 1 {
                format!("{s}#{i}")
            } else {
                s.clone()
            }
        })
        .collect()
}

pub fn write_report<W: Write>(out: W, report: &Report) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&report.header)?;
    for (t, values) in &report.rows {
        let mut rec = vec![t.to_string()];
        rec.extend(values.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| VneError::io("<report>", e))?;
    Ok(())
}

/// Reads every results file and writes the aligned report to `out`.
pub fn report_files(inputs: &[PathBuf], out: &Path) -> Result<Report> {
    if inputs.is_empty() {
        return Err(VneError::Config("report needs at least one input".into()));
    }
    let names = run_names(inputs);
    let mut runs = Vec::with_capacity(inputs.len());
    for (name, path) in names.into_iter().zip(inputs) {
        runs.push((name, read_results(path)?));
    }
    let report = align(&runs);
    let file = std::fs::File::create(out).map_err(|e| VneError::io(out, e))?;
    write_report(std::io::BufWriter::new(file), &report)?;
    Ok(report)
}
