//! CSV artifacts and plot scripts.
//!
//! Floats are written as `{:.16e}` (17 significant digits, `.` decimal point)
//! so that files are locale-independent and bit-stability can be checked
//! from the CSV alone. Records end with `\n` and every file has a header row.

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{ExperimentFile, RunConfig};
use crate::harness::{fit_loglog, linear_fit, run_experiment, ErrorCurve, RegressionFit};
use crate::{Error, Result};

pub const CURVE_HEADER: [&str; 5] = ["k", "mean_abs_error", "std_error", "n_paths_effective", "diverged"];
pub const SUMMARY_HEADER: [&str; 9] =
    ["experiment_id", "slope", "intercept", "r_squared", "fit_k_lo", "fit_k_hi", "theta_star", "diverged", "config"];
pub const SUMMARY_FILE: &str = "summary.csv";

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|source| Error::File { path: path.to_path_buf(), source })?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file))
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|source| Error::File { path: path.to_path_buf(), source })?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn check_header(rdr: &mut csv::Reader<fs::File>, want: &[&str], path: &Path) -> Result<()> {
    let got = rdr.headers().map_err(|e| Error::Malformed(format!("{}: {e}", path.display())))?;
    if got.iter().ne(want.iter().copied()) {
        return Err(Error::Malformed(format!(
            "{}: expected header {:?}, found {:?}",
            path.display(),
            want,
            got.iter().collect::<Vec<_>>()
        )));
    }
    Ok(())
}

pub fn write_curve_csv(path: &Path, curve: &ErrorCurve) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(CURVE_HEADER)?;
    for i in 0..curve.checkpoints.len() {
        w.write_record([
            curve.checkpoints[i].to_string(),
            fmt_f64(curve.mean_abs_error[i]),
            fmt_f64(curve.std_error[i]),
            curve.n_effective.to_string(),
            curve.diverged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_curve_csv(path: &Path) -> Result<ErrorCurve> {
    let mut rdr = reader(path)?;
    check_header(&mut rdr, &CURVE_HEADER, path)?;
    let bad = |line: usize, what: &str| Error::Malformed(format!("{}: record {line}: bad {what}", path.display()));
    let mut curve = ErrorCurve {
        checkpoints: Vec::new(),
        mean_abs_error: Vec::new(),
        std_error: Vec::new(),
        n_effective: 0,
        diverged: 0,
    };
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Malformed(format!("{}: {e}", path.display())))?;
        if rec.len() != CURVE_HEADER.len() {
            return Err(bad(i + 1, "field count"));
        }
        curve.checkpoints.push(rec[0].parse().map_err(|_| bad(i + 1, "k"))?);
        curve.mean_abs_error.push(rec[1].parse().map_err(|_| bad(i + 1, "mean_abs_error"))?);
        curve.std_error.push(rec[2].parse().map_err(|_| bad(i + 1, "std_error"))?);
        curve.n_effective = rec[3].parse().map_err(|_| bad(i + 1, "n_paths_effective"))?;
        curve.diverged = rec[4].parse().map_err(|_| bad(i + 1, "diverged"))?;
    }
    if curve.checkpoints.is_empty() {
        return Err(Error::Malformed(format!("{}: no data rows", path.display())));
    }
    Ok(curve)
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub id: String,
    pub fit: Option<RegressionFit>,
    pub window: Option<(u64, u64)>,
    pub theta_star: f64,
    pub diverged: usize,
    /// Compact JSON of the [`RunConfig`] that produced the row.
    pub config: String,
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        let (slope, intercept, r2) = match r.fit {
            Some(f) => (fmt_f64(f.slope), fmt_f64(f.intercept), fmt_f64(f.r_squared)),
            None => (String::new(), String::new(), String::new()),
        };
        let (lo, hi) = match r.window {
            Some((lo, hi)) => (lo.to_string(), hi.to_string()),
            None => (String::new(), String::new()),
        };
        w.write_record([
            r.id.clone(),
            slope,
            intercept,
            r2,
            lo,
            hi,
            fmt_f64(r.theta_star),
            r.diverged.to_string(),
            r.config.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut rdr = reader(path)?;
    check_header(&mut rdr, &SUMMARY_HEADER, path)?;
    let bad = |what: &str| Error::Malformed(format!("{}: bad {what}", path.display()));
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Malformed(format!("{}: {e}", path.display())))?;
        if rec.len() != SUMMARY_HEADER.len() {
            return Err(bad("field count"));
        }
        let fit = if rec[1].is_empty() {
            None
        } else {
            Some(RegressionFit {
                slope: rec[1].parse().map_err(|_| bad("slope"))?,
                intercept: rec[2].parse().map_err(|_| bad("intercept"))?,
                r_squared: rec[3].parse().map_err(|_| bad("r_squared"))?,
            })
        };
        let window = if rec[4].is_empty() {
            None
        } else {
            Some((rec[4].parse().map_err(|_| bad("fit_k_lo"))?, rec[5].parse().map_err(|_| bad("fit_k_hi"))?))
        };
        rows.push(SummaryRow {
            id: rec[0].to_string(),
            fit,
            window,
            theta_star: rec[6].parse().map_err(|_| bad("theta_star"))?,
            diverged: rec[7].parse().map_err(|_| bad("diverged"))?,
            config: rec[8].to_string(),
        });
    }
    Ok(rows)
}

pub fn curve_path(out_dir: &Path, id: &str) -> PathBuf {
    out_dir.join(format!("{id}.csv"))
}

/// Runs every experiment of `file`, writing `<id>.csv`, `summary.csv`, and
/// (when `file.plot`) the plot data and script for each experiment.
pub fn execute(file: &ExperimentFile, out_dir: &Path, workers: Option<usize>) -> Result<Vec<SummaryRow>> {
    for e in &file.experiments {
        e.validate()?;
    }
    fs::create_dir_all(out_dir).map_err(|source| Error::File { path: out_dir.to_path_buf(), source })?;
    let mut rows = Vec::with_capacity(file.experiments.len());
    for cfg in &file.experiments {
        let row = run_one(cfg, out_dir, workers)?;
        rows.push(row);
    }
    write_summary_csv(&out_dir.join(SUMMARY_FILE), &rows)?;
    if file.plot {
        for cfg in &file.experiments {
            write_plot_files(&curve_path(out_dir, &cfg.id))?;
        }
    }
    Ok(rows)
}

fn run_one(cfg: &RunConfig, out_dir: &Path, workers: Option<usize>) -> Result<SummaryRow> {
    let outcome = run_experiment(cfg, workers)?;
    write_curve_csv(&curve_path(out_dir, &cfg.id), &outcome.curve)?;
    let fit = cfg.fit_window.map(|w| fit_loglog(&outcome.curve, w)).transpose()?;
    Ok(SummaryRow {
        id: cfg.id.clone(),
        fit,
        window: cfg.fit_window,
        theta_star: outcome.theta_star,
        diverged: outcome.curve.diverged,
        config: cfg.to_json(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotFiles {
    pub data: PathBuf,
    pub script: PathBuf,
    pub fit: RegressionFit,
    pub window: (u64, u64),
}

/// Emits `<stem>.loglog.dat` (columns `ln k`, `ln E|θ_k − θ*|`) and a gnuplot
/// script `<stem>.gp` drawing the curve and its least-squares line.
///
/// The fit and window come from `summary.csv` next to the curve when it has
/// a row for this experiment; otherwise the fit spans all positive points.
pub fn write_plot_files(curve_csv: &Path) -> Result<PlotFiles> {
    let curve = read_curve_csv(curve_csv)?;
    let dir = curve_csv.parent().unwrap_or(Path::new("."));
    let stem = curve_csv
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Malformed(format!("{}: no file name", curve_csv.display())))?
        .to_string();

    let summary = dir.join(SUMMARY_FILE);
    let recorded = if summary.exists() {
        read_summary_csv(&summary)?.into_iter().find(|r| r.id == stem).and_then(|r| Some((r.fit?, r.window?)))
    } else {
        None
    };
    let (fit, window) = match recorded {
        Some(v) => v,
        None => {
            let pts: Vec<(u64, f64)> = curve
                .checkpoints
                .iter()
                .zip(&curve.mean_abs_error)
                .filter(|(k, e)| **k > 0 && **e > 0.0)
                .map(|(k, e)| (*k, *e))
                .collect();
            let xs: Vec<f64> = pts.iter().map(|p| (p.0 as f64).ln()).collect();
            let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
            let fit = linear_fit(&xs, &ys)?;
            let window = (pts.first().map_or(0, |p| p.0), pts.last().map_or(0, |p| p.0));
            (fit, window)
        }
    };

    let data = dir.join(format!("{stem}.loglog.dat"));
    let mut text = String::from("# ln(k) ln(mean_abs_error)\n");
    for (&k, &e) in curve.checkpoints.iter().zip(&curve.mean_abs_error) {
        if k > 0 && e > 0.0 {
            text.push_str(&format!("{} {}\n", fmt_f64((k as f64).ln()), fmt_f64(e.ln())));
        }
    }
    fs::write(&data, text).map_err(|source| Error::File { path: data.clone(), source })?;

    let script = dir.join(format!("{stem}.gp"));
    let data_name = data.file_name().and_then(|s| s.to_str()).unwrap_or_default();
    let (lo, hi) = window;
    let body = format!(
        "# fit window: k in [{lo}, {hi}]\n\
         set terminal pngcairo size 900,600\n\
         set output '{stem}.png'\n\
         set xlabel 'ln k'\n\
         set ylabel 'ln E|theta_k - theta*|'\n\
         set key top right\n\
         set title '{stem}: slope {slope:.4} (R^2 = {r2:.4}), fit on [{lo}, {hi}]'\n\
         slope = {s}\n\
         intercept = {i}\n\
         fit_lo = {flo}\n\
         fit_hi = {fhi}\n\
         fitted(x) = (x >= fit_lo && x <= fit_hi) ? intercept + slope * x : 1/0\n\
         set samples 400\n\
         plot '{data_name}' using 1:2 with linespoints pt 7 title 'mean |theta_k - theta*|', \\\n     \
         fitted(x) with lines lw 2 title 'least-squares fit'\n",
        slope = fit.slope,
        r2 = fit.r_squared,
        s = fmt_f64(fit.slope),
        i = fmt_f64(fit.intercept),
        flo = fmt_f64((lo.max(1) as f64).ln()),
        fhi = fmt_f64((hi.max(1) as f64).ln()),
    );
    fs::write(&script, body).map_err(|source| Error::File { path: script.clone(), source })?;
    Ok(PlotFiles { data, script, fit, window })
}
