//! gnuplot scripts for a finished experiment directory. Scripts refer to files in the
//! same directory by bare name, so they run from inside it and can be moved with it.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use crate::error::Result;

use super::record::{fmt_f64, RunMeta};
use super::summary::{run_files, summarize};

const HEADER: &str = "set datafile separator ','\nset terminal pngcairo size 900,600\nset grid\n";

fn l2_script() -> String {
    format!(
        "{HEADER}set output 'l2.png'\nset logscale x\nset xlabel 't'\nset ylabel 'log l2 error'\n\
         plot 'summary.csv' skip 1 using 1:3:4 with filledcurves fs transparent solid 0.25 \
         title 'Q1-Q3', \\\n     'summary.csv' skip 1 using 1:2 with lines lw 2 title 'median', \\\n     \
         'summary.csv' skip 1 using 1:5 with lines dt 2 title 'mean'\n"
    )
}

fn cumrisk_script() -> String {
    format!(
        "{HEADER}set output 'cumrisk.png'\nset xlabel 't'\nset ylabel 'cumulative excess risk'\n\
         plot 'summary.csv' skip 1 using 1:7:8 with filledcurves fs transparent solid 0.25 \
         title 'Q1-Q3', \\\n     'summary.csv' skip 1 using 1:6 with lines lw 2 title 'median', \\\n     \
         'summary.csv' skip 1 using 1:9 with lines dt 2 title 'mean'\n"
    )
}

/// Staircase of session radii with one vertical marker per session start, over the
/// per-step confidence radius and the estimator's l2 error of one run.
fn sessions_script(meta: &RunMeta, run_csv: &str, dat: &str, bound_col: Option<usize>) -> String {
    let mut s = format!(
        "{HEADER}set output 'sessions_seed_{}.png'\nset logscale xy\nset xlabel 't'\n\
         set ylabel 'radius / error'\n",
        meta.seed
    );
    for (k, sess) in meta.sessions.iter().enumerate() {
        let _ = writeln!(
            s,
            "set arrow {} from {}, graph 0 to {}, graph 1 nohead dt 3 lc rgb 'gray'",
            k + 1,
            sess.start,
            sess.start
        );
    }
    let _ = write!(
        s,
        "plot '{dat}' using 1:2 with steps lw 2 title 'session radius U 2^{{-i/2}}', \\\n     \
         '{run_csv}' skip 1 using 1:6 with lines title 'epsilon', \\\n     \
         '{run_csv}' skip 1 using 1:2 with lines title 'l2 error'"
    );
    if let Some(c) = bound_col {
        let _ = write!(
            s,
            ", \\\n     '{run_csv}' skip 1 using 1:{c} with lines dt 2 title 'l2 bound'"
        );
    }
    s.push('\n');
    s
}

/// Writes `l2.gp`, `cumrisk.gp` and, for runs with sessions, `sessions_seed_<n>.gp` plus its
/// data file. Summarizes first when `summary.csv` is missing. Returns the scripts written.
pub fn emit_plots(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.join("summary.csv").exists() {
        summarize(dir)?;
    }
    let mut written = Vec::new();
    for (name, body) in [("l2.gp", l2_script()), ("cumrisk.gp", cumrisk_script())] {
        let p = dir.join(name);
        std::fs::write(&p, body)?;
        written.push(p);
    }
    for (seed, csv_path) in run_files(dir)? {
        let meta_path = dir.join(format!("seed_{seed}.meta.json"));
        if !meta_path.exists() {
            continue;
        }
        let meta: RunMeta = serde_json::from_str(&std::fs::read_to_string(&meta_path)?)?;
        if meta.sessions.is_empty() {
            continue;
        }
        let dat = format!("sessions_seed_{seed}.dat");
        let mut body = String::from("# t_i,radius\n");
        for s in &meta.sessions {
            let _ = writeln!(body, "{},{}", s.start, fmt_f64(s.radius));
        }
        let last = meta.sessions.last().expect("nonempty");
        let _ = writeln!(body, "{},{}", meta.horizon.max(last.start), fmt_f64(last.radius));
        std::fs::write(dir.join(&dat), body)?;
        let mut header = String::new();
        BufReader::new(File::open(&csv_path)?).read_line(&mut header)?;
        let bound_col = header.trim_end().split(',').position(|c| c == "bound_l2").map(|i| i + 1);
        let run_csv = format!("seed_{seed}.csv");
        let p = dir.join(format!("sessions_seed_{seed}.gp"));
        std::fs::write(&p, sessions_script(&meta, &run_csv, &dat, bound_col))?;
        written.push(p);
    }
    Ok(written)
}
