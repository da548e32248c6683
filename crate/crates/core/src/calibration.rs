//! Parameter-free operation for square-loss regression.
//!
//! Time is cut into doubling sessions `j` covering `t ∈ [2^j, 2^{j+1})`. During session
//! `j` the clipped predictions of a grid `𝒢_j` of frozen estimators are mixed online by an
//! [`Aggregator`]. Each estimator of `𝒢_j` comes from an accelerated run over the whole
//! stream `t = 1, …, 2^j − 1`, so the runs for every later grid are advanced from the
//! first sample on. The output predictor is the average of the session's mixtures.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{try_for_each_mut, Execution};
use crate::primitives::{dot, DenseVector, ProblemParams};
use crate::saew::Saew;
use crate::subroutine::EgFactory;

/// `max(−Y, min(x, Y))`.
pub fn clip(x: f64, y: f64) -> f64 {
    x.clamp(-y, y)
}

/// One grid entry; `d0 = 0` is the null predictor and carries no other parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub d0: usize,
    pub alpha: f64,
    pub u: f64,
    pub b: f64,
}

impl GridEntry {
    pub const NULL: GridEntry = GridEntry {
        d0: 0,
        alpha: 0.0,
        u: 0.0,
        b: 0.0,
    };

    pub fn is_null(&self) -> bool {
        self.d0 == 0
    }

    pub fn label(&self) -> String {
        if self.is_null() {
            "null".to_string()
        } else {
            format!("d0={};alpha={};U={};B={}", self.d0, self.alpha, self.u, self.b)
        }
    }
}

/// Optional inclusive bounds on the base-2 exponents of `α`, `U` and `B`, intersected
/// with the doubling ranges. `None` leaves an axis uncapped.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GridCaps {
    pub alpha: Option<(i32, i32)>,
    pub u: Option<(i32, i32)>,
    pub b: Option<(i32, i32)>,
}

fn capped(lo: i32, hi: i32, cap: Option<(i32, i32)>) -> std::ops::RangeInclusive<i32> {
    match cap {
        Some((clo, chi)) => lo.max(clo)..=hi.min(chi),
        None => lo..=hi,
    }
}

fn ceil_log2(x: f64) -> i32 {
    x.log2().ceil() as i32
}

/// The grid `𝒢_j` for dimension `d` and clipping range `Y`, entries ordered by
/// `(d0, B, U, α)` with the null entry first.
pub fn build_grid(j: u32, d: usize, y: f64, caps: &GridCaps) -> Result<Vec<GridEntry>> {
    if d < 1 || !(y > 0.0 && y.is_finite()) {
        return Err(Error::invalid("build_grid needs d >= 1 and Y > 0"));
    }
    let j = j as i32;
    let top = 2 * j + (2.0 * y.log2()).ceil() as i32;
    let mut out = vec![GridEntry::NULL];
    // 2^⌈log2 d⌉ may exceed d; runs clamp it to d (no truncation).
    let d0s: Vec<usize> = (0..=ceil_log2(d as f64).max(0)).map(|k| 1usize << k).collect();
    for &d0 in &d0s {
        for kb in capped(-2 * j, top, caps.b) {
            let b = (kb as f64).exp2();
            let lo = -2 * j + ceil_log2(b * d0 as f64 / (y * y));
            let hi = j + ceil_log2(d0 as f64);
            for ku in capped(-2 * j, top, caps.u) {
                for ka in capped(lo, hi, caps.alpha) {
                    out.push(GridEntry {
                        d0,
                        alpha: (ka as f64).exp2(),
                        u: (ku as f64).exp2(),
                        b,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Online mixing of expert predictions.
pub trait Aggregator: Send {
    /// Current weights, a point of the simplex.
    fn weights(&self) -> &[f64];

    /// Feeds the experts' (clipped) predictions and the label of the round just played.
    fn update(&mut self, predictions: &[f64], y: f64);
}

/// Which [`Aggregator`] mixes the candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AggregatorKind {
    /// [`ExpWeights`] at rate `1/(8Y²)`.
    #[default]
    ExpWeights,
    /// [`Boa`] on linearized square losses.
    Boa,
}

impl AggregatorKind {
    pub fn build(self, n: usize, y: f64) -> Box<dyn Aggregator> {
        match self {
            AggregatorKind::ExpWeights => Box::new(ExpWeights::for_square_loss(n, y)),
            AggregatorKind::Boa => Box::new(Boa::new(n)),
        }
    }
}

/// Exponential weights with a fixed learning rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpWeights {
    eta: f64,
    log_w: Vec<f64>,
    w: Vec<f64>,
}

impl ExpWeights {
    pub fn new(n: usize, eta: f64) -> Self {
        ExpWeights {
            eta,
            log_w: vec![0.0; n],
            w: vec![1.0 / n as f64; n],
        }
    }

    /// Rate `1/(8Y²)` for square losses of predictions and labels in `[−Y, Y]`.
    pub fn for_square_loss(n: usize, y: f64) -> Self {
        ExpWeights::new(n, 1.0 / (8.0 * y * y))
    }
}

impl Aggregator for ExpWeights {
    fn weights(&self) -> &[f64] {
        &self.w
    }

    fn update(&mut self, predictions: &[f64], y: f64) {
        for (lw, p) in self.log_w.iter_mut().zip(predictions) {
            *lw -= self.eta * (p - y) * (p - y);
        }
        normalize_log_weights(&self.log_w, &mut self.w);
    }
}

fn normalize_log_weights(log_w: &[f64], w: &mut [f64]) {
    let m = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (w, lw) in w.iter_mut().zip(log_w) {
        *w = (lw - m).exp();
        total += *w;
    }
    w.iter_mut().for_each(|w| *w /= total);
}

/// Bernstein online aggregation with one adaptive rate per expert, run on the linearized
/// square loss. With `r_p = 2(f̂ − y)(f̂ − f_p)` the instantaneous regret against expert
/// `p`, weights are `w_p ∝ η_p exp(η_p Σ_s (r_{p,s} − η_{p,s−1} r_{p,s}²))` under a uniform
/// prior, and `η_p = min(1/(2E), √(ln N / Σ_s r_{p,s}²))` with `E` the largest `|r|` so far.
#[derive(Debug, Clone, PartialEq)]
pub struct Boa {
    log_prior_inv: f64,
    eta: Vec<f64>,
    reg: Vec<f64>,
    var: Vec<f64>,
    range: f64,
    log_w: Vec<f64>,
    w: Vec<f64>,
}

impl Boa {
    pub fn new(n: usize) -> Self {
        Boa {
            log_prior_inv: (n.max(2) as f64).ln(),
            eta: vec![0.0; n],
            reg: vec![0.0; n],
            var: vec![0.0; n],
            range: 0.0,
            log_w: vec![0.0; n],
            w: vec![1.0 / n as f64; n],
        }
    }

    /// Current per-expert learning rates.
    pub fn rates(&self) -> &[f64] {
        &self.eta
    }
}

impl Aggregator for Boa {
    fn weights(&self) -> &[f64] {
        &self.w
    }

    fn update(&mut self, predictions: &[f64], y: f64) {
        let mix: f64 = self.w.iter().zip(predictions).map(|(w, p)| w * p).sum();
        let grad = 2.0 * (mix - y);
        let r: Vec<f64> = predictions.iter().map(|p| grad * (mix - p)).collect();
        self.range = r.iter().fold(self.range, |m, v| m.max(v.abs()));
        if self.range == 0.0 {
            return;
        }
        for (k, rk) in r.iter().enumerate() {
            self.reg[k] += rk - self.eta[k] * rk * rk;
            self.var[k] += rk * rk;
            let adaptive = if self.var[k] > 0.0 {
                (self.log_prior_inv / self.var[k]).sqrt()
            } else {
                f64::INFINITY
            };
            self.eta[k] = adaptive.min(0.5 / self.range);
            self.log_w[k] = self.eta[k].ln() + self.eta[k] * self.reg[k];
        }
        normalize_log_weights(&self.log_w, &mut self.w);
    }
}

/// `x ↦ Σ_p w_p·clip(xᵀθ_p, Y)`; the empty predictor is identically 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictor {
    pub y: f64,
    pub weights: Vec<f64>,
    pub thetas: Vec<DenseVector>,
}

impl Predictor {
    pub fn zero(y: f64) -> Self {
        Predictor {
            y,
            weights: Vec::new(),
            thetas: Vec::new(),
        }
    }

    /// The single expert `thetas[index]`.
    pub fn single(&self, index: usize) -> Predictor {
        Predictor {
            y: self.y,
            weights: vec![1.0],
            thetas: vec![self.thetas[index].clone()],
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(&self.thetas)
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, th)| w * clip(dot(x, th.as_slice()), self.y))
            .sum()
    }
}

/// Settings of the calibration procedure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationConfig {
    /// Clipping range; should exceed every `|y_t|`.
    pub y: f64,
    pub delta: f64,
    pub caps: GridCaps,
    /// Cap on the total number of candidate steps over the horizon.
    pub budget: Option<u64>,
    pub aggregator: AggregatorKind,
    pub execution: Execution,
}

/// A finished doubling session.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedSession {
    pub j: u32,
    pub entries: Vec<GridEntry>,
    /// Average of the session's mixtures: the estimator output from the next step on.
    pub average: Predictor,
}

enum Trainee {
    Null,
    Saew(Box<Saew<EgFactory>>),
}

impl Trainee {
    fn theta_tilde(&self, dim: usize) -> DenseVector {
        match self {
            Trainee::Null => DenseVector::zeros(dim),
            Trainee::Saew(s) => s.state().theta_tilde.clone(),
        }
    }
}

/// Failure probability `δ/(2(j+1)²)` given to the runs of session `j`.
pub fn session_delta(delta: f64, j: u32) -> f64 {
    let k = (j + 1) as f64;
    delta / (2.0 * k * k)
}

/// Grids `(j, 𝒢_j)` that start within `horizon`, for `j ≥ 1`.
fn future_grids(dim: usize, y: f64, caps: &GridCaps, horizon: u64) -> Result<Vec<(u32, Vec<GridEntry>)>> {
    let mut out = Vec::new();
    let mut j = 1u32;
    while j < 63 && (1u64 << j) <= horizon {
        out.push((j, build_grid(j, dim, y, caps)?));
        j += 1;
    }
    Ok(out)
}

/// Candidate steps needed to train every grid up to `horizon`: `Σ_j |𝒢_j|·(2^j − 1)`.
pub fn required_budget(dim: usize, y: f64, caps: &GridCaps, horizon: u64) -> Result<u64> {
    Ok(future_grids(dim, y, caps, horizon)?
        .iter()
        .map(|(j, g)| g.len() as u64 * ((1u64 << j) - 1))
        .sum())
}

/// The online calibration procedure over `R^dim`.
pub struct Calibrator {
    cfg: CalibrationConfig,
    dim: usize,
    t: u64,
    j: u32,
    entries: Vec<GridEntry>,
    experts: Vec<DenseVector>,
    aggregator: Box<dyn Aggregator>,
    weight_sum: Vec<f64>,
    /// Grids of later sessions, in order, whose runs are still training.
    pending: VecDeque<(u32, Vec<GridEntry>)>,
    /// Runs of all pending grids, concatenated in the same order.
    trainees: Vec<Trainee>,
    average: Predictor,
    closed: Vec<ClosedSession>,
    warned_range: bool,
}

impl Calibrator {
    /// Fails with [`Error::Budget`] when training every grid up to `horizon` exceeds the budget.
    pub fn new(cfg: CalibrationConfig, dim: usize, horizon: u64) -> Result<Self> {
        if !(cfg.delta > 0.0 && cfg.delta < 1.0) {
            return Err(Error::invalid("delta must lie in (0,1)"));
        }
        if let Some(budget) = cfg.budget {
            let required = required_budget(dim, cfg.y, &cfg.caps, horizon)?;
            if required > budget {
                return Err(Error::Budget { required, budget });
            }
        }
        let entries = build_grid(0, dim, cfg.y, &cfg.caps)?;
        let experts = vec![DenseVector::zeros(dim); entries.len()];
        let pending: VecDeque<_> = future_grids(dim, cfg.y, &cfg.caps, horizon)?.into();
        let mut trainees = Vec::new();
        for (j, grid) in &pending {
            let delta = session_delta(cfg.delta, *j);
            for e in grid {
                trainees.push(if e.is_null() {
                    Trainee::Null
                } else {
                    let p = ProblemParams::new(e.d0.min(dim), e.alpha, e.u, e.b, delta)?;
                    Trainee::Saew(Box::new(Saew::eg(p, dim)?))
                });
            }
        }
        Ok(Calibrator {
            cfg,
            dim,
            t: 0,
            j: 0,
            aggregator: cfg.aggregator.build(entries.len(), cfg.y),
            weight_sum: vec![0.0; entries.len()],
            entries,
            experts,
            pending,
            trainees,
            average: Predictor::zero(cfg.y),
            closed: Vec::new(),
            warned_range: false,
        })
    }

    /// Current doubling session.
    pub fn session(&self) -> u32 {
        self.j
    }

    /// Grid of the experts currently mixed.
    pub fn entries(&self) -> &[GridEntry] {
        &self.entries
    }

    pub fn weights(&self) -> &[f64] {
        self.aggregator.weights()
    }

    /// Estimator output at the current time: the average mixture of the last finished
    /// session, or the zero predictor during session 0.
    pub fn estimator(&self) -> &Predictor {
        &self.average
    }

    /// Finished sessions not yet collected.
    pub fn take_closed(&mut self) -> Vec<ClosedSession> {
        std::mem::take(&mut self.closed)
    }

    /// Predicts at `x`, then learns from `(x, y)`. Returns the mixed prediction.
    pub fn step(&mut self, x: &DenseVector, y: f64) -> Result<f64> {
        x.check_dim(self.dim)?;
        if !y.is_finite() {
            return Err(Error::invalid("non-finite label"));
        }
        if y.abs() > self.cfg.y && !self.warned_range {
            log::warn!("|y| = {} exceeds the clipping range {}", y.abs(), self.cfg.y);
            self.warned_range = true;
        }
        self.t += 1;
        let preds: Vec<f64> = self
            .experts
            .iter()
            .map(|th| clip(dot(x.as_slice(), th.as_slice()), self.cfg.y))
            .collect();
        let w = self.aggregator.weights();
        let prediction: f64 = w.iter().zip(&preds).map(|(a, b)| a * b).sum();
        for (s, wi) in self.weight_sum.iter_mut().zip(w) {
            *s += wi;
        }
        self.aggregator.update(&preds, y);

        let xs = x.as_slice();
        try_for_each_mut(self.cfg.execution, &mut self.trainees, |tr| match tr {
            Trainee::Null => Ok(()),
            Trainee::Saew(s) => s
                .step(|th| {
                    let c = 2.0 * (dot(xs, th.as_slice()) - y);
                    DenseVector::new(xs.iter().map(|v| c * v).collect())
                })
                .map(|_| ()),
        })?;

        if self.t + 1 == 1u64 << (self.j + 1) {
            self.close_session()?;
        }
        Ok(prediction)
    }

    fn close_session(&mut self) -> Result<()> {
        let len = (1u64 << self.j) as f64;
        let average = Predictor {
            y: self.cfg.y,
            weights: self.weight_sum.iter().map(|s| s / len).collect(),
            thetas: self.experts.clone(),
        };
        self.closed.push(ClosedSession {
            j: self.j,
            entries: self.entries.clone(),
            average: average.clone(),
        });
        self.average = average;
        self.j += 1;
        match self.pending.front() {
            Some((j, _)) if *j == self.j => {
                let (_, grid) = self.pending.pop_front().expect("front exists");
                self.experts = self
                    .trainees
                    .drain(..grid.len())
                    .map(|t| t.theta_tilde(self.dim))
                    .collect();
                self.entries = grid;
            }
            _ => {
                // Past the horizon: keep mixing the null predictor only.
                self.entries = vec![GridEntry::NULL];
                self.experts = vec![DenseVector::zeros(self.dim)];
            }
        }
        self.aggregator = self.cfg.aggregator.build(self.entries.len(), self.cfg.y);
        self.weight_sum = vec![0.0; self.entries.len()];
        Ok(())
    }
}
