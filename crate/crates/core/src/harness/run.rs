//! Per-seed experiment runs and their output files.

use std::path::Path;

use crate::baselines::{RdaParams, RdaState};
use crate::bounds::{theorem1_bound, theorem2_bound};
use crate::error::{Error, Result};
use crate::exec::try_map_indexed;
use crate::losses::{Environment, Holdout, LossFamily, RiskEstimate};
use crate::primitives::{ball_contains, l1_norm, DenseVector, L1Ball, ProblemParams};
use crate::saew::Saew;
use crate::subroutine::{EgState, Subroutine};

use super::config::{Algorithm, ExperimentConfig, RiskEval};
use super::record::{Row, RunMeta, RunRecord, SessionMeta};

/// Excess-risk oracle for one environment.
enum RiskEvaluator {
    Exact,
    Mc(Holdout),
}

impl RiskEvaluator {
    fn new(env: &Environment, mode: RiskEval, holdout: usize) -> Result<Self> {
        let probe = DenseVector::zeros(env.dim());
        if mode == RiskEval::Exact && env.metrics().exact_excess_risk(&probe).is_some() {
            Ok(RiskEvaluator::Exact)
        } else {
            Ok(RiskEvaluator::Mc(env.metrics().holdout(holdout)?))
        }
    }

    fn eval(&self, env: &Environment, theta: &DenseVector) -> Result<RiskEstimate> {
        match self {
            RiskEvaluator::Exact => {
                let value = env
                    .metrics()
                    .exact_excess_risk(theta)
                    .expect("exact risk checked at construction")?;
                Ok(RiskEstimate { value, se: 0.0 })
            }
            RiskEvaluator::Mc(h) => h.excess_risk(env, theta),
        }
    }
}

/// Risk of the estimator, recomputed only when it changes.
struct CachedRisk {
    theta: Vec<f64>,
    risk: Option<RiskEstimate>,
}

impl CachedRisk {
    fn get(
        &mut self,
        ev: &RiskEvaluator,
        env: &Environment,
        theta: &DenseVector,
    ) -> Result<RiskEstimate> {
        match self.risk {
            Some(r) if self.theta == theta.as_slice() => Ok(r),
            _ => {
                let r = ev.eval(env, theta)?;
                self.theta = theta.as_slice().to_vec();
                self.risk = Some(r);
                Ok(r)
            }
        }
    }
}

/// Shared per-step bookkeeping for all algorithms.
struct Tracker<'a> {
    env: &'a Environment,
    ev: RiskEvaluator,
    tilde: CachedRisk,
    rows: Vec<Row>,
    cum: f64,
    with_se: bool,
    ball_violations: u64,
    max_prediction_l1: f64,
    max_grad_sup: f64,
}

impl<'a> Tracker<'a> {
    fn new(env: &'a Environment, cfg: &ExperimentConfig) -> Result<Self> {
        let ev = RiskEvaluator::new(env, cfg.risk_eval, cfg.holdout)?;
        let with_se =
            matches!(env.config().loss, LossFamily::Quantile { .. }) || cfg.risk_eval == RiskEval::Mc;
        Ok(Tracker {
            env,
            ev,
            tilde: CachedRisk {
                theta: Vec::new(),
                risk: None,
            },
            rows: Vec::with_capacity(cfg.horizon as usize),
            cum: 0.0,
            with_se,
            ball_violations: 0,
            max_prediction_l1: 0.0,
            max_grad_sup: 0.0,
        })
    }

    fn check_ball(&mut self, ball: &L1Ball, prediction: &DenseVector) -> Result<()> {
        if !ball_contains(ball, prediction)? {
            self.ball_violations += 1;
        }
        Ok(())
    }

    fn record(
        &mut self,
        t: u64,
        prediction: &DenseVector,
        tilde: &DenseVector,
        grad_sup: f64,
    ) -> Result<&mut Row> {
        self.max_prediction_l1 = self.max_prediction_l1.max(l1_norm(prediction)?);
        self.max_grad_sup = self.max_grad_sup.max(grad_sup);
        let hat = self.ev.eval(self.env, prediction)?;
        let til = self.tilde.get(&self.ev, self.env, tilde)?;
        self.cum += hat.value;
        let with_se = self.with_se;
        self.rows.push(Row {
            t,
            l2_error: self.env.metrics().l2_error(tilde)?,
            risk_hat: hat.value,
            risk_tilde: til.value,
            cum_risk: self.cum,
            risk_hat_se: with_se.then_some(hat.se),
            risk_tilde_se: with_se.then_some(til.se),
            ..Row::default()
        });
        Ok(self.rows.last_mut().expect("row just pushed"))
    }

    fn finish(
        self,
        cfg: &ExperimentConfig,
        seed: u64,
        tilde: &DenseVector,
        sessions: Vec<SessionMeta>,
        induction_held: Option<bool>,
        with_bounds: bool,
    ) -> RunRecord {
        let dim = self.env.dim();
        RunRecord {
            meta: RunMeta {
                seed,
                config_hash: cfg.hash(),
                algorithm: cfg.algorithm_name().to_string(),
                horizon: cfg.horizon,
                dim,
                sessions,
                induction_held,
                ball_violations: self.ball_violations,
                max_prediction_l1: self.max_prediction_l1,
                max_grad_sup: self.max_grad_sup,
                theta_tilde: tilde.as_slice().to_vec(),
                theta_star: self.env.metrics().theta_star().as_slice().to_vec(),
            },
            rows: self.rows,
            with_se: self.with_se,
            with_bounds,
        }
    }
}

/// Runs one seed of a `saew`, `eg` or `rda` experiment in memory.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<RunRecord> {
    match cfg.algorithm {
        Algorithm::Saew => run_saew(cfg, seed),
        Algorithm::Eg => run_eg(cfg, seed),
        Algorithm::Rda => run_rda(cfg, seed),
        Algorithm::Calibrate => Err(Error::config(
            "algorithm",
            "calibration runs produce session tables; use the calibrate command",
        )),
    }
}

fn run_saew(cfg: &ExperimentConfig, seed: u64) -> Result<RunRecord> {
    let mut env = Environment::new(cfg.env_config(seed))?;
    let dim = env.dim();
    let params = ProblemParams::new(cfg.saew_d0.min(dim), cfg.alpha, cfg.u, cfg.b, cfg.delta)?;
    let mut saew = Saew::eg(params, dim)?;
    let cert = saew.state().certificate;
    let d0 = params.d0 as f64;
    let reader = env.clone();
    let mut tr = Tracker::new(&reader, cfg)?;

    // Per-session statistics: gradient bound and confidence constants at the last step.
    let mut session_grad = vec![0.0f64];
    let mut session_constants = vec![(f64::NAN, f64::NAN)];

    for _ in 0..cfg.horizon {
        let ball = saew.ball().clone();
        let s = env.sample();
        let rep = saew.step(|th| env.gradient(th, &s))?;
        tr.check_ball(&ball, &rep.prediction)?;
        let i = rep.session as usize;
        session_grad[i] = session_grad[i].max(rep.grad_sup);
        session_constants[i] = (rep.a_prime, rep.b_prime);
        for _ in 0..rep.sessions_closed {
            session_grad.push(0.0);
            session_constants.push((f64::NAN, f64::NAN));
        }
        let st = saew.state();
        let row = tr.record(rep.t, &rep.prediction, &st.theta_tilde, rep.grad_sup)?;
        row.epsilon = Some(rep.epsilon);
        row.session = Some(rep.session);
        if cfg.trace_bounds {
            row.bound_risk = Some(theorem1_bound(&params, cert, rep.t));
            row.bound_cum_risk = Some(theorem2_bound(&params, cert, rep.t));
            // Until some ε_t beats ε_0 = U, θ̃ is the origin and only ‖θ*‖₁ ≤ U applies.
            row.bound_l2 = Some(if st.eps_argmin == 0 {
                cfg.u
            } else {
                st.eps_min / (2.0 * (2.0 * d0).sqrt())
            });
        }
    }

    let star = reader.metrics().theta_star().clone();
    let recs = saew.sessions();
    let mut sessions = Vec::with_capacity(recs.len());
    let mut held = true;
    for (k, r) in recs.iter().enumerate() {
        let center_l1_error = l1_norm(&r.center.sub(&star)?)?;
        if r.index >= 1 && center_l1_error > r.radius {
            held = false;
        }
        let length = recs.get(k + 1).map(|n| n.start - r.start);
        let constants = Some(session_constants[k])
            .filter(|(a, _)| length != Some(0) && a.is_finite());
        sessions.push(SessionMeta {
            index: r.index,
            start: r.start,
            radius: r.radius,
            center_l1_error,
            length,
            max_grad_sup: session_grad[k],
            final_a_prime: constants.map(|c| c.0),
            final_b_prime: constants.map(|c| c.1),
        });
    }
    let tilde = saew.state().theta_tilde.clone();
    Ok(tr.finish(cfg, seed, &tilde, sessions, Some(held), cfg.trace_bounds))
}

fn run_eg(cfg: &ExperimentConfig, seed: u64) -> Result<RunRecord> {
    let mut env = Environment::new(cfg.env_config(seed))?;
    let dim = env.dim();
    let ball = L1Ball::centered(dim, cfg.u)?;
    let mut eg = EgState::new(ball.clone(), cfg.b)?;
    let reader = env.clone();
    let mut tr = Tracker::new(&reader, cfg)?;
    let mut avg = vec![0.0; dim];
    for t in 1..=cfg.horizon {
        let s = env.sample();
        let pred = eg.predict();
        tr.check_ball(&ball, &pred)?;
        let g = env.gradient(&pred, &s)?;
        eg.update(g.as_slice())?;
        for (a, p) in avg.iter_mut().zip(pred.iter()) {
            *a += (p - *a) / t as f64;
        }
        let tilde = DenseVector::new(avg.clone())?;
        tr.record(t, &pred, &tilde, g.sup_norm())?;
    }
    let tilde = DenseVector::new(avg)?;
    Ok(tr.finish(cfg, seed, &tilde, Vec::new(), None, false))
}

fn run_rda(cfg: &ExperimentConfig, seed: u64) -> Result<RunRecord> {
    let mut env = Environment::new(cfg.env_config(seed))?;
    let dim = env.dim();
    let mut rda = RdaState::new(RdaParams::new(cfg.gamma, cfg.rho, cfg.lambda)?, dim);
    let reader = env.clone();
    let mut tr = Tracker::new(&reader, cfg)?;
    for t in 1..=cfg.horizon {
        let s = env.sample();
        let pred = rda.theta();
        let g = env.gradient(&pred, &s)?;
        rda.step(&g)?;
        tr.record(t, &pred, &rda.theta(), g.sup_norm())?;
    }
    let tilde = rda.theta();
    Ok(tr.finish(cfg, seed, &tilde, Vec::new(), None, false))
}

/// Runs every seed, in parallel when the config allows it; results are ordered by seed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    try_map_indexed(cfg.execution, cfg.seeds.len(), |k| run_seed(cfg, cfg.seeds[k]))
}

/// Writes `config.ini` and `seed_<n>.csv` / `seed_<n>.meta.json` for every record.
pub fn write_runs(cfg: &ExperimentConfig, dir: &Path, records: &[RunRecord]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.ini"), cfg.to_ini_string())?;
    for r in records {
        r.write_csv(&dir.join(format!("seed_{}.csv", r.meta.seed)))?;
        r.write_meta(&dir.join(format!("seed_{}.meta.json", r.meta.seed)))?;
    }
    Ok(())
}
