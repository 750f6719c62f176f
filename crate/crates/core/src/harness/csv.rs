use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::solver::Failure;

use super::aggregate::AggregateSeries;
use super::experiment::ExperimentResult;

/// Parsed form of an emitted file.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvDocument {
    /// `# key=value` lines in file order, excluding replica bookkeeping.
    pub header: Vec<(String, String)>,
    pub series: AggregateSeries,
}

/// Header entries of a result: the resolved config followed by the rate
/// report.
pub fn result_header(result: &ExperimentResult) -> Vec<(String, String)> {
    let mut h: Vec<(String, String)> = result
        .config
        .entries()
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    match (&result.rate, &result.rate_note) {
        (Some(r), _) => {
            h.push(("rate_metric".into(), r.metric.clone()));
            h.push(("rate_slope".into(), r.slope.to_string()));
            h.push(("rate_intercept".into(), r.intercept.to_string()));
            h.push(("rate_r_squared".into(), r.r_squared.to_string()));
            h.push(("rate_window".into(), r.window.to_string()));
            h.push(("rate_points".into(), r.points.to_string()));
            h.push(("rate_predicted".into(), r.predicted.to_string()));
        }
        (None, Some(note)) => h.push(("rate_note".into(), note.replace('\n', " "))),
        (None, None) => {}
    }
    h
}

/// Renders header comments, replica counts, then `k,<m>_mean,<m>_stderr,...`
/// rows. Floats use the shortest representation that parses back exactly.
pub fn render_csv(header: &[(String, String)], series: &AggregateSeries) -> String {
    let mut out = String::new();
    for (k, v) in header {
        let _ = writeln!(out, "# {k}={v}");
    }
    let _ = writeln!(out, "# runs_completed={}", series.completed);
    let _ = writeln!(out, "# runs_flagged={}", series.flagged.len());
    for (i, f) in &series.flagged {
        let _ = writeln!(out, "# flagged={i}:{}:{}", f.k, f.message.replace('\n', " "));
    }
    out.push('k');
    for m in &series.metrics {
        let _ = write!(out, ",{m}_mean,{m}_stderr");
    }
    out.push('\n');
    for ((k, mean), se) in series.ks.iter().zip(&series.mean).zip(&series.stderr) {
        let _ = write!(out, "{k}");
        for (m, s) in mean.iter().zip(se) {
            let _ = write!(out, ",{m},{s}");
        }
        out.push('\n');
    }
    out
}

pub fn write_csv(path: &Path, header: &[(String, String)], series: &AggregateSeries) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    fs::write(path, render_csv(header, series)).map_err(io)
}

pub fn read_csv(text: &str) -> Result<CsvDocument> {
    let bad = |m: String| Error::Parse(m);
    let mut header = Vec::new();
    let mut completed = None;
    let mut flagged = Vec::new();
    let mut lines = text.lines();
    let columns = loop {
        let line = lines.next().ok_or_else(|| bad("missing column header".into()))?;
        let Some(comment) = line.strip_prefix("# ") else {
            break line;
        };
        let (k, v) = comment
            .split_once('=')
            .ok_or_else(|| bad(format!("malformed header line `{line}`")))?;
        match k {
            "runs_completed" => completed = Some(v.parse::<usize>().map_err(|_| bad(format!("bad count `{v}`")))?),
            "runs_flagged" => {}
            "flagged" => {
                let mut parts = v.splitn(3, ':');
                let i = parts.next().and_then(|s| s.parse().ok());
                let fk = parts.next().and_then(|s| s.parse().ok());
                let msg = parts.next();
                match (i, fk, msg) {
                    (Some(i), Some(fk), Some(msg)) => flagged.push((i, Failure { k: fk, message: msg.to_string() })),
                    _ => return Err(bad(format!("malformed flagged line `{line}`"))),
                }
            }
            _ => header.push((k.to_string(), v.to_string())),
        }
    };
    let cols: Vec<&str> = columns.split(',').collect();
    if cols.first() != Some(&"k") || cols.len() % 2 != 1 {
        return Err(bad(format!("malformed column header `{columns}`")));
    }
    let mut metrics = Vec::new();
    for pair in cols[1..].chunks(2) {
        let m = pair[0]
            .strip_suffix("_mean")
            .filter(|m| pair[1].strip_suffix("_stderr") == Some(m))
            .ok_or_else(|| bad(format!("malformed column pair `{},{}`", pair[0], pair[1])))?;
        metrics.push(m.to_string());
    }
    let mut series = AggregateSeries::empty(metrics);
    series.completed = completed.ok_or_else(|| bad("missing runs_completed".into()))?;
    series.flagged = flagged;
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != cols.len() {
            return Err(bad(format!("row `{line}` has {} cells, expected {}", cells.len(), cols.len())));
        }
        series.ks.push(cells[0].parse().map_err(|_| bad(format!("bad k `{}`", cells[0])))?);
        let nums: Vec<f64> = cells[1..]
            .iter()
            .map(|c| c.parse::<f64>().map_err(|_| bad(format!("bad number `{c}`"))))
            .collect::<Result<_>>()?;
        series.mean.push(nums.iter().step_by(2).copied().collect());
        series.stderr.push(nums.iter().skip(1).step_by(2).copied().collect());
    }
    Ok(CsvDocument { header, series })
}
