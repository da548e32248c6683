//! Calibration experiments: one session table per seed.

use std::path::Path;

use crate::calibration::{CalibrationConfig, Calibrator, ClosedSession, Predictor};
use crate::error::{Error, Result};
use crate::exec::try_map_indexed;
use crate::losses::{Environment, LossFamily};
use crate::primitives::{dot, DenseVector};

use super::config::ExperimentConfig;
use super::record::fmt_f64;
use super::summary::quantile;

/// Holdout covariates used to score calibration predictors, at most this many.
pub const CALIBRATION_HOLDOUT_CAP: usize = 10_000;

/// One finished doubling session of one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionScore {
    pub j: u32,
    pub grid_size: usize,
    /// Label of the single grid entry with the smallest excess risk.
    pub best_candidate: String,
    /// Excess risk of the session's averaged mixture.
    pub meta_risk: f64,
    pub best_risk: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRun {
    pub seed: u64,
    pub sessions: Vec<SessionScore>,
}

/// `E[(f(x) − xᵀθ*)²]` over fixed covariates: the excess square risk of `f` when the
/// noise is independent of `x`.
fn predictor_risk(f: &Predictor, xs: &[DenseVector], star: &DenseVector) -> f64 {
    let total: f64 = xs
        .iter()
        .map(|x| {
            let e = f.eval(x.as_slice()) - dot(x.as_slice(), star.as_slice());
            e * e
        })
        .sum();
    total / xs.len() as f64
}

fn score(s: &ClosedSession, xs: &[DenseVector], star: &DenseVector) -> SessionScore {
    let meta_risk = predictor_risk(&s.average, xs, star);
    let (best, best_risk) = (0..s.entries.len())
        .map(|p| (p, predictor_risk(&s.average.single(p), xs, star)))
        .fold((0, f64::INFINITY), |acc, c| if c.1 < acc.1 { c } else { acc });
    SessionScore {
        j: s.j,
        grid_size: s.entries.len(),
        best_candidate: s.entries[best].label(),
        meta_risk,
        best_risk,
    }
}

pub fn calibration_config(cfg: &ExperimentConfig) -> CalibrationConfig {
    CalibrationConfig {
        y: cfg.y,
        delta: cfg.delta,
        caps: cfg.caps,
        budget: cfg.budget,
        aggregator: cfg.aggregator,
        execution: cfg.execution,
    }
}

/// Runs the calibration procedure for one seed and scores every finished session.
pub fn run_calibration_seed(cfg: &ExperimentConfig, seed: u64) -> Result<CalibrationRun> {
    let mut env = Environment::new(cfg.env_config(seed))?;
    if env.config().loss != LossFamily::Square {
        return Err(Error::config("loss", "calibration supports the square loss only"));
    }
    let dim = env.dim();
    let mut cal = Calibrator::new(calibration_config(cfg), dim, cfg.horizon)?;
    let metrics = env.metrics();
    let star = metrics.theta_star().clone();
    let xs: Vec<DenseVector> = metrics
        .holdout(cfg.holdout.min(CALIBRATION_HOLDOUT_CAP))?
        .samples()
        .iter()
        .map(|s| s.x.clone())
        .collect();
    let mut sessions = Vec::new();
    for _ in 0..cfg.horizon {
        let s = env.sample();
        cal.step(&s.x, s.y)?;
        for closed in cal.take_closed() {
            sessions.push(score(&closed, &xs, &star));
        }
    }
    Ok(CalibrationRun { seed, sessions })
}

pub fn run_calibration(cfg: &ExperimentConfig) -> Result<Vec<CalibrationRun>> {
    try_map_indexed(cfg.execution, cfg.seeds.len(), |k| {
        run_calibration_seed(cfg, cfg.seeds[k])
    })
}

/// Per-`j` medians across seeds: `(j, grid_size, median meta risk, median best risk)`.
pub fn session_medians(runs: &[CalibrationRun]) -> Vec<(u32, usize, f64, f64)> {
    let n = runs.iter().map(|r| r.sessions.len()).min().unwrap_or(0);
    (0..n)
        .map(|k| {
            let mut meta: Vec<f64> = runs.iter().map(|r| r.sessions[k].meta_risk).collect();
            let mut best: Vec<f64> = runs.iter().map(|r| r.sessions[k].best_risk).collect();
            let s = &runs[0].sessions[k];
            (s.j, s.grid_size, quantile(&mut meta, 0.5), quantile(&mut best, 0.5))
        })
        .collect()
}

/// Writes `calibration_seed_<n>.csv` per seed and `calibration_summary.csv`.
pub fn write_calibration(cfg: &ExperimentConfig, dir: &Path, runs: &[CalibrationRun]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.ini"), cfg.to_ini_string())?;
    for r in runs {
        let mut w = csv::Writer::from_path(dir.join(format!("calibration_seed_{}.csv", r.seed)))?;
        w.write_record(["j", "grid_size", "best_candidate", "meta_risk", "best_risk"])?;
        for s in &r.sessions {
            w.write_record([
                s.j.to_string(),
                s.grid_size.to_string(),
                s.best_candidate.clone(),
                fmt_f64(s.meta_risk),
                fmt_f64(s.best_risk),
            ])?;
        }
        w.flush()?;
    }
    let mut w = csv::Writer::from_path(dir.join("calibration_summary.csv"))?;
    w.write_record(["j", "grid_size", "median_meta_risk", "median_best_risk"])?;
    for (j, g, m, b) in session_medians(runs) {
        w.write_record([j.to_string(), g.to_string(), fmt_f64(m), fmt_f64(b)])?;
    }
    w.flush()?;
    Ok(())
}
