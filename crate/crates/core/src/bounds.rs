//! Closed-form confidence constants and risk bounds.
//!
//! Everything here is a pure function of its arguments. Logarithms are natural unless a
//! name says `log2`. The accelerated procedure calls [`a_prime`], [`b_prime`],
//! [`err_bound`] and [`radius_bound`] on every step; the remaining evaluators turn run
//! outputs into checkable guarantees.

use std::f64::consts::{E, SQRT_2};

use crate::error::{Error, Result};
use crate::primitives::ProblemParams;
use crate::subroutine::RegretCertificate;

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("delta must lie in (0,1), got {delta}")))
    }
}

/// `log(1 + ½·log(window/2))` with the inner argument clipped at 1, so the term is 0 for
/// windows shorter than 2.
fn loglog_window(window: f64) -> f64 {
    (1.0 + 0.5 * (window / 2.0).ln()).max(1.0).ln()
}

/// Per-session failure probability `δ/(i+1)²`.
pub fn delta_i(delta: f64, i: u64) -> Result<f64> {
    check_delta(delta)?;
    if i < 1 {
        return Err(Error::invalid("session index for delta_i must be >= 1"));
    }
    let k = (i + 1) as f64;
    Ok(delta / (k * k))
}

/// Confidence coefficient multiplying `√(Σ‖∇ℓ‖∞²)` for a session of length `window`.
pub fn a_prime(a: f64, window: u64, delta_next: f64) -> Result<f64> {
    if window < 1 {
        return Err(Error::invalid("window must be >= 1"));
    }
    check_delta(delta_next)?;
    let inside = loglog_window(window as f64) - delta_next.ln();
    if inside <= 0.0 {
        return Err(Error::invalid("nonpositive value under square root in a_prime"));
    }
    Ok(a + SQRT_2 * inside.sqrt())
}

/// Confidence coefficient multiplying `B` for a session of length `window`.
pub fn b_prime(b: f64, window: u64, delta_next: f64) -> Result<f64> {
    if window < 1 {
        return Err(Error::invalid("window must be >= 1"));
    }
    check_delta(delta_next)?;
    Ok(b + 0.5 + loglog_window(window as f64) - delta_next.ln())
}

/// High-probability bound on the session's cumulative excess risk, in units of the radius.
pub fn err_bound(grad_sq_sum: f64, a_p: f64, b_p: f64, b: f64) -> Result<f64> {
    if !(grad_sq_sum.is_finite() && a_p.is_finite() && b_p.is_finite() && b.is_finite()) {
        return Err(Error::invalid("err_bound inputs must be finite"));
    }
    if grad_sq_sum < 0.0 {
        return Err(Error::invalid(format!(
            "squared-gradient sum must be >= 0, got {grad_sq_sum}"
        )));
    }
    Ok(a_p * grad_sq_sum.sqrt() + b_p * b)
}

/// l1 confidence radius `2√(2·d0·U·2^{−i/2}·err / (α·window))`. Negative `err` is clipped to 0.
pub fn radius_bound(d0: usize, u: f64, i: u64, alpha: f64, window: u64, err: f64) -> f64 {
    let err = if err < 0.0 {
        log::warn!("negative Err_t = {err} clipped to 0");
        0.0
    } else {
        err
    };
    let scale = (-(i as f64) / 2.0).exp2();
    2.0 * (2.0 * d0 as f64 * u * scale * err / (alpha * window as f64)).sqrt()
}

/// Aggregate constants `(a′, b′)` used by the risk theorems at horizon `t`.
pub fn theorem1_constants(a: f64, b: f64, t: u64, delta: f64) -> (f64, f64) {
    let ll = (1.0 + 3.0 * (t.max(1) as f64).ln()).ln();
    let a_p = a + (6.0 * ll - 2.0 * delta.ln()).sqrt();
    let b_p = b + 0.5 + 3.0 * ll - delta.ln();
    (a_p, b_p)
}

/// Excess-risk bound on the frozen estimator after `t` steps: the minimum of the slow
/// `1/√t` branch and the fast `d0 B²/(α t)` branch.
pub fn theorem1_bound(params: &ProblemParams, cert: RegretCertificate, t: u64) -> f64 {
    let (a_p, b_p) = theorem1_constants(cert.a, cert.b, t, params.delta);
    let (u, b, alpha, d0) = (params.u, params.b, params.alpha, params.d0 as f64);
    let tf = t.max(1) as f64;
    let slow = u * b * (a_p * (2.0 / tf).sqrt() + 4.0 * b_p / tf) + alpha * u * u / (8.0 * d0 * tf);
    let fast = d0 * b * b / alpha * (128.0 * a_p * a_p / tf + 2048.0 * b_p * b_p / (tf * tf))
        + 2.0 * alpha * u * u / (d0 * tf * tf);
    slow.min(fast)
}

/// Bound on the cumulative excess risk of the predictions over `t` steps.
pub fn theorem2_bound(params: &ProblemParams, cert: RegretCertificate, t: u64) -> f64 {
    let (a_p, b_p) = theorem1_constants(cert.a, cert.b, t, params.delta);
    let (u, b, alpha, d0) = (params.u, params.b, params.alpha, params.d0 as f64);
    let tf = t.max(1) as f64;
    let slow = 4.0 * u * b * (a_p * tf.sqrt() + b_p + 1.0);
    let fast = 32.0 * d0 * b * b / alpha * a_p * a_p * tf.log2()
        + 4.0 * u * b * (1.0 + b_p)
        + alpha * u * u / (8.0 * d0);
    slow.min(fast)
}

/// Square-loss tuning `B = 2X(Y + 2XU)`.
pub fn gradient_bound_square(x: f64, y: f64, u: f64) -> f64 {
    2.0 * x * (y + 2.0 * x * u)
}

/// Constants `(a′, c′)` of the square-loss bound. Only `δ > 0` is required here.
pub fn theorem3_constants(a: f64, b: f64, t: f64, delta: f64) -> (f64, f64) {
    let ll = (1.0 + 3.0 * t.max(1.0).ln()).ln();
    let l2d = (2.0 / delta).ln();
    let a_p = 2.0 * a + 2.0 * (6.0 * ll + 2.0 * l2d).sqrt();
    let c_p = 1.0 + 3.0 * b + 4.0 * a * a + 9.0 * ll + 3.0 * l2d;
    (a_p, c_p)
}

/// Inputs of [`theorem3_bound`].
#[derive(Debug, Clone, Copy)]
pub struct SquareLossBoundInputs {
    /// Sup-norm bound on covariates.
    pub x: f64,
    /// Bound on responses.
    pub y: f64,
    pub u: f64,
    pub d0: usize,
    pub alpha: f64,
    /// Noise standard deviation σ.
    pub sigma: f64,
    pub delta: f64,
}

/// Value of the square-loss bound. It holds up to a universal multiplicative constant,
/// which `up_to_constant` records; use it for shape and scaling checks only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem3Bound {
    pub value: f64,
    pub a_prime: f64,
    pub c_prime: f64,
    pub up_to_constant: bool,
}

pub fn theorem3_bound(
    inp: &SquareLossBoundInputs,
    cert: RegretCertificate,
    t: u64,
) -> Result<Theorem3Bound> {
    check_delta(inp.delta)?;
    for (name, v) in [("X", inp.x), ("Y", inp.y), ("U", inp.u), ("alpha", inp.alpha)] {
        if !(v > 0.0) {
            return Err(Error::invalid(format!("{name} must be > 0")));
        }
    }
    if inp.sigma < 0.0 || inp.d0 == 0 {
        return Err(Error::invalid("sigma must be >= 0 and d0 >= 1"));
    }
    let tf = t.max(1) as f64;
    let (a_p, c_p) = theorem3_constants(cert.a, cert.b, tf, inp.delta);
    let SquareLossBoundInputs {
        x,
        y,
        u,
        alpha,
        sigma,
        ..
    } = *inp;
    let d0 = inp.d0 as f64;
    let spread = y + x * u;
    let slow = u * x * (sigma * a_p / tf.sqrt() + spread * c_p / tf) + alpha * u * u / (d0 * tf);
    let fast = x * x * d0 / alpha
        * (sigma * sigma * a_p * a_p / tf + spread * spread * c_p * c_p / (tf * tf))
        + alpha * u * u / (d0 * tf * tf);
    Ok(Theorem3Bound {
        value: slow.min(fast),
        a_prime: a_p,
        c_prime: c_p,
        up_to_constant: true,
    })
}

/// Upper bound on the length of session `j`: `1 + 2^j γ² a′² + 2^{j/2} γ b′`.
pub fn session_length_bound(gamma: f64, a_p: f64, b_p: f64, j: u64) -> f64 {
    let j = j as f64;
    1.0 + j.exp2() * gamma * gamma * a_p * a_p + (j / 2.0).exp2() * gamma * b_p
}

/// Upper bound on `min_{s≤t} ε_s`: `U(√2 γ a′/√t + (2 + 4γ b′)/t)`.
pub fn lemma3_min_radius(u: f64, gamma: f64, a_p: f64, b_p: f64, t: u64) -> f64 {
    let tf = t.max(1) as f64;
    u * (SQRT_2 * gamma * a_p / tf.sqrt() + (2.0 + 4.0 * gamma * b_p) / tf)
}

/// Poisson-type deviation bound for nonnegative increments bounded by `b`:
/// `(e − 1)·Σ E_{t−1}[X_t] + b·log(1/δ)`.
pub fn poisson_bound(sum_conditional_means: f64, b: f64, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if !(b > 0.0) || sum_conditional_means < 0.0 {
        return Err(Error::invalid("poisson_bound needs B > 0 and a nonnegative mean sum"));
    }
    Ok((E - 1.0) * sum_conditional_means + b * (1.0 / delta).ln())
}

/// Bound on cumulative risk minus cumulative regret for any procedure confined to a ball
/// of radius `epsilon`.
pub fn regret_to_risk_bound(
    epsilon: f64,
    b: f64,
    grad_sq_sum: f64,
    t: u64,
    delta: f64,
) -> Result<f64> {
    check_delta(delta)?;
    if t < 1 {
        return Err(Error::invalid("T must be >= 1"));
    }
    if grad_sq_sum < 0.0 {
        return Err(Error::invalid("squared-gradient sum must be >= 0"));
    }
    let tf = t as f64;
    let half_log = (tf / 2.0).ln().max(0.0);
    let martingale = (2.0 * ((2.0 + half_log) / (2.0 * delta)).ln() * grad_sq_sum).sqrt();
    let additive = 0.5 + (1.0 + 0.5 * half_log).ln() - delta.ln();
    Ok(epsilon * martingale + additive * epsilon * b)
}

/// The per-session confidence schedule `δ_i = δ/(i+1)²` combined with a subroutine certificate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceSchedule {
    pub delta: f64,
    pub cert: RegretCertificate,
}

impl ConfidenceSchedule {
    pub fn new(delta: f64, cert: RegretCertificate) -> Result<Self> {
        check_delta(delta)?;
        Ok(ConfidenceSchedule { delta, cert })
    }

    /// Failure probability consumed by session `session` (0-based): `δ_{session+1}`.
    pub fn session_delta(&self, session: u64) -> f64 {
        let k = (session + 2) as f64;
        self.delta / (k * k)
    }

    /// `(a_i′, b_i′)` for session `session` after `window` steps.
    pub fn constants(&self, session: u64, window: u64) -> Result<(f64, f64)> {
        let dn = self.session_delta(session);
        Ok((
            a_prime(self.cert.a, window, dn)?,
            b_prime(self.cert.b, window, dn)?,
        ))
    }
}

/// Tuning of the regret-to-risk conversion: `η_t = ε⁻¹ min{1/B, cΓ/V_{t−1}}` with `c = √2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskConversionParams {
    /// `√(log(1 + log(√T/c)) − log δ)`.
    pub gamma: f64,
    pub c: f64,
}

impl RiskConversionParams {
    pub fn new(t: u64, delta: f64) -> Result<Self> {
        check_delta(delta)?;
        let c = SQRT_2;
        let inner = ((t.max(1) as f64).sqrt() / c).ln().max(0.0);
        Ok(RiskConversionParams {
            gamma: ((1.0 + inner).ln() - delta.ln()).sqrt(),
            c,
        })
    }

    pub fn learning_rate(&self, epsilon: f64, b: f64, v_prev: f64) -> f64 {
        let adaptive = if v_prev > 0.0 {
            self.c * self.gamma / v_prev
        } else {
            f64::INFINITY
        };
        (1.0 / b).min(adaptive) / epsilon
    }
}
