//! Per-step run records and their CSV / JSON files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Columns present in every run file, in order.
pub const BASE_COLUMNS: [&str; 7] = [
    "t",
    "l2_error",
    "risk_hat",
    "risk_tilde",
    "cum_risk",
    "epsilon",
    "session",
];

/// Extra columns written for Monte-Carlo risk evaluation.
pub const SE_COLUMNS: [&str; 2] = ["risk_hat_se", "risk_tilde_se"];

/// Extra columns written with bound tracing.
pub const BOUND_COLUMNS: [&str; 3] = ["bound_risk", "bound_cum_risk", "bound_l2"];

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Row {
    pub t: u64,
    /// `‖θ̃_t − θ*‖₂`.
    pub l2_error: f64,
    /// Excess risk of the prediction `θ̂_{t−1}`.
    pub risk_hat: f64,
    /// Excess risk of the estimator `θ̃_t`.
    pub risk_tilde: f64,
    /// `Σ_{s≤t}` of `risk_hat`.
    pub cum_risk: f64,
    pub epsilon: Option<f64>,
    pub session: Option<u64>,
    pub risk_hat_se: Option<f64>,
    pub risk_tilde_se: Option<f64>,
    pub bound_risk: Option<f64>,
    pub bound_cum_risk: Option<f64>,
    pub bound_l2: Option<f64>,
}

/// One session of an accelerated run, as stored in the metadata file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub index: u64,
    pub start: u64,
    pub radius: f64,
    /// `‖center − θ*‖₁`.
    pub center_l1_error: f64,
    /// Steps spent in the session; `None` while it is still running.
    pub length: Option<u64>,
    /// Largest `‖∇ℓ‖∞` seen during the session.
    pub max_grad_sup: f64,
    /// Confidence constants `(a′, b′)` at the session's last step.
    pub final_a_prime: Option<f64>,
    pub final_b_prime: Option<f64>,
}

/// Run-level facts written next to the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub seed: u64,
    pub config_hash: String,
    pub algorithm: String,
    pub horizon: u64,
    pub dim: usize,
    pub sessions: Vec<SessionMeta>,
    /// Whether every session center lay within its radius of `θ*` (accelerated runs).
    pub induction_held: Option<bool>,
    /// Predictions outside their l1-ball, beyond the tolerance.
    pub ball_violations: u64,
    /// Largest `‖θ̂‖₁` over the run.
    pub max_prediction_l1: f64,
    pub max_grad_sup: f64,
    pub theta_tilde: Vec<f64>,
    pub theta_star: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub meta: RunMeta,
    pub rows: Vec<Row>,
    pub with_se: bool,
    pub with_bounds: bool,
}

/// Decimal text for a float: plain notation in the usual range, scientific outside it.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

impl RunRecord {
    pub fn header(&self) -> Vec<&'static str> {
        let mut h: Vec<&str> = BASE_COLUMNS.to_vec();
        if self.with_se {
            h.extend(SE_COLUMNS);
        }
        if self.with_bounds {
            h.extend(BOUND_COLUMNS);
        }
        h
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(self.header())?;
        for r in &self.rows {
            let mut rec = vec![
                r.t.to_string(),
                fmt_f64(r.l2_error),
                fmt_f64(r.risk_hat),
                fmt_f64(r.risk_tilde),
                fmt_f64(r.cum_risk),
                opt(r.epsilon),
                r.session.map(|s| s.to_string()).unwrap_or_default(),
            ];
            if self.with_se {
                rec.push(opt(r.risk_hat_se));
                rec.push(opt(r.risk_tilde_se));
            }
            if self.with_bounds {
                rec.push(opt(r.bound_risk));
                rec.push(opt(r.bound_cum_risk));
                rec.push(opt(r.bound_l2));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_meta(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.meta)?)?;
        Ok(())
    }
}

/// A run file read back: its header and numeric columns (empty cells become NaN).
#[derive(Debug, Clone, PartialEq)]
pub struct RunTable {
    pub header: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl RunTable {
    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header.len() < BASE_COLUMNS.len() || header[..BASE_COLUMNS.len()] != BASE_COLUMNS {
            return Err(Error::invalid(format!(
                "{} does not start with the run columns",
                path.display()
            )));
        }
        let mut columns = vec![Vec::new(); header.len()];
        for rec in r.records() {
            let rec = rec?;
            for (c, cell) in columns.iter_mut().zip(rec.iter()) {
                c.push(if cell.is_empty() {
                    f64::NAN
                } else {
                    cell.parse().map_err(|_| {
                        Error::invalid(format!("bad number `{cell}` in {}", path.display()))
                    })?
                });
            }
        }
        Ok(RunTable { header, columns })
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.header
            .iter()
            .position(|h| h == name)
            .map(|i| self.columns[i].as_slice())
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
