//! Cross-seed aggregates of run files.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::record::{fmt_f64, RunTable};

/// Sample quantile with linear interpolation between order statistics (type 7). Sorts
/// `v` in place; NaN entries sort last. Returns NaN for an empty slice.
pub fn quantile(v: &mut [f64], p: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let h = (v.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Ordinary least squares `y ≈ slope·x + intercept`, with the coefficient of determination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least-squares line through the points; `None` with fewer than two distinct `x`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = xs[..n].iter().sum::<f64>() / nf;
    let my = ys[..n].iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LinearFit {
        slope,
        intercept: my - slope * mx,
        r2,
    })
}

/// Slope of `ln y` against `ln t` over the points with `lo ≤ t ≤ hi` and `y > 0`.
pub fn loglog_slope(ts: &[f64], ys: &[f64], lo: f64, hi: f64) -> Option<f64> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = ts
        .iter()
        .zip(ys)
        .filter(|(t, y)| **t >= lo && **t <= hi && **y > 0.0 && y.is_finite())
        .map(|(t, y)| (t.ln(), y.ln()))
        .unzip();
    linear_fit(&lx, &ly).map(|f| f.slope)
}

/// End-of-run scalars of one run file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinalStats {
    pub final_log_l2: f64,
    pub final_cum_risk: f64,
    /// Log-log slope of the l2 error on the second half of the run.
    pub l2_slope: f64,
    /// Log-log slope of the estimator's excess risk over `[T/10, T]`.
    pub risk_slope: f64,
}

fn column<'a>(t: &'a RunTable, name: &str) -> Result<&'a [f64]> {
    t.column(name)
        .ok_or_else(|| Error::invalid(format!("run file lacks column `{name}`")))
}

pub fn final_stats(table: &RunTable) -> Result<FinalStats> {
    let ts = column(table, "t")?;
    let l2 = column(table, "l2_error")?;
    let cum = column(table, "cum_risk")?;
    let risk = column(table, "risk_tilde")?;
    let n = table.len();
    if n == 0 {
        return Err(Error::invalid("empty run file"));
    }
    let horizon = ts[n - 1];
    Ok(FinalStats {
        final_log_l2: l2[n - 1].ln(),
        final_cum_risk: cum[n - 1],
        l2_slope: loglog_slope(ts, l2, horizon / 2.0, horizon).unwrap_or(f64::NAN),
        risk_slope: loglog_slope(ts, risk, horizon / 10.0, horizon).unwrap_or(f64::NAN),
    })
}

/// Run files `seed_<n>.csv` in `dir`, ordered by seed.
pub fn run_files(dir: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(seed) = name
            .strip_prefix("seed_")
            .and_then(|r| r.strip_suffix(".csv"))
            .and_then(|s| s.parse::<u64>().ok())
        {
            out.push((seed, path));
        }
    }
    out.sort();
    Ok(out)
}

/// Per-`t` aggregates across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub seeds: Vec<u64>,
    pub t: Vec<f64>,
    /// For each of `log_l2`, `cum_risk`, `risk_tilde`: rows of `[median, q1, q3, mean]`.
    pub series: Vec<(&'static str, Vec<[f64; 4]>)>,
    pub finals: Vec<FinalStats>,
}

const SERIES: [(&str, &str); 3] = [
    ("log_l2", "l2_error"),
    ("cum_risk", "cum_risk"),
    ("risk_tilde", "risk_tilde"),
];

fn aggregate(values: &mut [f64]) -> [f64; 4] {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    [
        quantile(values, 0.5),
        quantile(values, 0.25),
        quantile(values, 0.75),
        mean,
    ]
}

/// Aggregates in-memory tables; all must share header and length.
pub fn summarize_tables(seeds: Vec<u64>, tables: &[RunTable]) -> Result<Summary> {
    let first = tables
        .first()
        .ok_or_else(|| Error::invalid("no run files to summarize"))?;
    for t in tables {
        if t.header != first.header || t.len() != first.len() {
            return Err(Error::invalid(
                "run files disagree in columns or length; they come from different experiments",
            ));
        }
    }
    let n = first.len();
    let mut series = Vec::new();
    for (name, col) in SERIES {
        let cols: Vec<&[f64]> = tables.iter().map(|t| column(t, col)).collect::<Result<_>>()?;
        let rows = (0..n)
            .map(|i| {
                let mut v: Vec<f64> = cols
                    .iter()
                    .map(|c| if name == "log_l2" { c[i].ln() } else { c[i] })
                    .collect();
                aggregate(&mut v)
            })
            .collect();
        series.push((name, rows));
    }
    Ok(Summary {
        seeds,
        t: column(first, "t")?.to_vec(),
        series,
        finals: tables.iter().map(final_stats).collect::<Result<_>>()?,
    })
}

impl Summary {
    /// Writes `summary.csv` (per-`t` aggregates) and `summary_final.csv` (per-seed
    /// end-of-run scalars followed by a `median` row).
    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
        let mut header = vec!["t".to_string()];
        for (name, _) in &self.series {
            for stat in ["median", "q1", "q3", "mean"] {
                header.push(format!("{name}_{stat}"));
            }
        }
        w.write_record(&header)?;
        for (i, t) in self.t.iter().enumerate() {
            let mut rec = vec![fmt_f64(*t)];
            for (_, rows) in &self.series {
                rec.extend(rows[i].iter().map(|v| fmt_f64(*v)));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("summary_final.csv"))?;
        w.write_record(["seed", "final_log_l2", "final_cum_risk", "l2_slope", "risk_slope"])?;
        let cells = |f: &FinalStats| {
            [f.final_log_l2, f.final_cum_risk, f.l2_slope, f.risk_slope].map(fmt_f64)
        };
        for (seed, f) in self.seeds.iter().zip(&self.finals) {
            let mut rec = vec![seed.to_string()];
            rec.extend(cells(f));
            w.write_record(&rec)?;
        }
        let med = |g: fn(&FinalStats) -> f64| {
            let mut v: Vec<f64> = self.finals.iter().map(g).collect();
            quantile(&mut v, 0.5)
        };
        let m = FinalStats {
            final_log_l2: med(|f| f.final_log_l2),
            final_cum_risk: med(|f| f.final_cum_risk),
            l2_slope: med(|f| f.l2_slope),
            risk_slope: med(|f| f.risk_slope),
        };
        let mut rec = vec!["median".to_string()];
        rec.extend(cells(&m));
        w.write_record(&rec)?;
        w.flush()?;
        Ok(())
    }
}

/// Reads every run file in `dir`, writes the summary files next to them.
pub fn summarize(dir: &Path) -> Result<Summary> {
    let files = run_files(dir)?;
    if files.is_empty() {
        return Err(Error::invalid(format!("no seed_<n>.csv files in {}", dir.display())));
    }
    let tables = files
        .iter()
        .map(|(_, p)| RunTable::read(p))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize_tables(files.iter().map(|(s, _)| *s).collect(), &tables)?;
    summary.write(dir)?;
    Ok(summary)
}
