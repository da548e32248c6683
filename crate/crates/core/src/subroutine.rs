//! Online convex optimization inside an l1-ball, and the exponentiated-gradient optimizer
//! over the ball's corners.
//!
//! A [`Subroutine`] only sees gradients: losses are linearized at its own predictions, so a
//! regret bound against linear losses transfers to any convex loss.

use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::primitives::{DenseVector, L1Ball};

/// Constants `(a, b)` of a regret guarantee
/// `Σ⟨g_t, θ̂_{t−1} − θ⟩ ≤ radius · (a·√(Σ‖g_t‖∞²) + b·B)` over the ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretCertificate {
    pub a: f64,
    pub b: f64,
}

impl RegretCertificate {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a >= 0.0 && b >= 0.0) {
            return Err(Error::invalid(format!(
                "certificate constants must be finite and >= 0, got ({a}, {b})"
            )));
        }
        Ok(RegretCertificate { a, b })
    }

    /// Right side of the guarantee.
    pub fn regret_bound(&self, radius: f64, grad_sq_sum: f64, b: f64) -> f64 {
        radius * (self.a * grad_sq_sum.sqrt() + self.b * b)
    }
}

/// An online optimizer confined to one l1-ball.
pub trait Subroutine: Send {
    fn ball(&self) -> &L1Ball;

    /// Writes the current prediction into `out` (length = ball dimension).
    fn predict_into(&self, out: &mut [f64]);

    fn predict(&self) -> DenseVector {
        let mut out = vec![0.0; self.ball().dim()];
        self.predict_into(&mut out);
        DenseVector::new(out).expect("subroutine predictions are finite")
    }

    /// Feeds the gradient of the current loss at the last prediction.
    fn update(&mut self, gradient: &[f64]) -> Result<()>;
}

/// Builds fresh subroutine instances; the accelerated procedure starts one per session.
pub trait SubroutineFactory: Send + Sync {
    type Instance: Subroutine;

    fn start(&self, ball: L1Ball, b: f64) -> Result<Self::Instance>;

    fn certificate(&self, dim: usize) -> RegretCertificate;
}

static BOUND_WARNED: AtomicBool = AtomicBool::new(false);

/// Certificate of [`EgState`] in dimension `d`: `(2√(2 ln 2d), 2 + 2 ln 2d)`.
pub fn eg_certificate(d: usize) -> RegretCertificate {
    let ln_n = (2.0 * d.max(1) as f64).ln();
    RegretCertificate {
        a: 2.0 * (2.0 * ln_n).sqrt(),
        b: 2.0 + 2.0 * ln_n,
    }
}

/// Exponentiated gradient over the `2d` corners `center ± radius·e_j`.
///
/// The weight of corner `j±` is proportional to `exp(∓η·radius·S_j)` where `S` is the
/// running gradient sum, so a prediction costs `O(d)`. The rate is
/// `η = min{1/(radius·B̂), √ln(2d)/(radius·V)}` with `V² = Σ‖g‖∞²` and `B̂` the larger of
/// the declared bound and the largest sup-norm seen, both over the gradients seen so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgState {
    ball: L1Ball,
    b: f64,
    b_hat: f64,
    grad_sum: Vec<f64>,
    v2: f64,
    steps: u64,
}

impl EgState {
    pub fn new(ball: L1Ball, b: f64) -> Result<Self> {
        if !(b.is_finite() && b > 0.0) {
            return Err(Error::invalid(format!("gradient bound B must be > 0, got {b}")));
        }
        if ball.dim() == 0 {
            return Err(Error::invalid("ball dimension must be >= 1"));
        }
        let d = ball.dim();
        Ok(EgState {
            ball,
            b,
            b_hat: b,
            grad_sum: vec![0.0; d],
            v2: 0.0,
            steps: 0,
        })
    }

    pub fn grad_sq_sum(&self) -> f64 {
        self.v2
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn declared_bound(&self) -> f64 {
        self.b
    }

    /// Learning rate used for the next prediction; infinite before any nonzero gradient.
    pub fn eta(&self) -> f64 {
        let r = self.ball.radius();
        let n = 2.0 * self.ball.dim() as f64;
        let by_range = 1.0 / (r * self.b_hat);
        if self.v2 > 0.0 {
            by_range.min(n.ln().sqrt() / (r * self.v2.sqrt()))
        } else {
            by_range
        }
    }

    /// `(+, −)` unnormalized weight pairs per coordinate and their total.
    fn coordinate_weights(&self, mut visit: impl FnMut(usize, f64, f64)) -> f64 {
        let scale = self.eta() * self.ball.radius();
        let shift = self
            .grad_sum
            .iter()
            .fold(0.0f64, |m, s| m.max(if *s == 0.0 { 0.0 } else { (scale * s).abs() }));
        let mut total = 0.0;
        for (j, s) in self.grad_sum.iter().enumerate() {
            let e = if *s == 0.0 { 0.0 } else { scale * s };
            let plus = (-e - shift).exp();
            let minus = (e - shift).exp();
            total += plus + minus;
            visit(j, plus, minus);
        }
        total
    }

    /// Normalized corner weights, ordered `[0+, 0−, 1+, 1−, …]`.
    pub fn weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; 2 * self.ball.dim()];
        let total = self.coordinate_weights(|j, p, m| {
            w[2 * j] = p;
            w[2 * j + 1] = m;
        });
        w.iter_mut().for_each(|x| *x /= total);
        w
    }
}

impl Subroutine for EgState {
    fn ball(&self) -> &L1Ball {
        &self.ball
    }

    fn predict_into(&self, out: &mut [f64]) {
        out.copy_from_slice(self.ball.center().as_slice());
        let r = self.ball.radius();
        if r == 0.0 {
            return;
        }
        let mut diff = vec![0.0; out.len()];
        let total = self.coordinate_weights(|j, p, m| diff[j] = p - m);
        for (o, dj) in out.iter_mut().zip(diff) {
            *o += r * dj / total;
        }
    }

    fn update(&mut self, gradient: &[f64]) -> Result<()> {
        if gradient.len() != self.grad_sum.len() {
            return Err(Error::DimensionMismatch {
                expected: self.grad_sum.len(),
                got: gradient.len(),
            });
        }
        if gradient.iter().any(|g| !g.is_finite()) {
            return Err(Error::invalid("non-finite gradient"));
        }
        let sup = gradient.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if sup > self.b_hat {
            if self.b_hat == self.b && !BOUND_WARNED.swap(true, Ordering::Relaxed) {
                log::warn!(
                    "gradient sup-norm {sup} exceeds the declared bound {}; further cases are \
                     logged at debug level",
                    self.b
                );
            } else {
                log::debug!("gradient sup-norm {sup} exceeds the running bound {}", self.b_hat);
            }
            self.b_hat = sup;
        }
        for (s, g) in self.grad_sum.iter_mut().zip(gradient) {
            *s += g;
        }
        self.v2 += sup * sup;
        self.steps += 1;
        Ok(())
    }
}

/// Factory for [`EgState`] sessions.
#[derive(Debug, Clone, Copy, Default)]
pub struct EgFactory;

impl SubroutineFactory for EgFactory {
    type Instance = EgState;

    fn start(&self, ball: L1Ball, b: f64) -> Result<EgState> {
        EgState::new(ball, b)
    }

    fn certificate(&self, dim: usize) -> RegretCertificate {
        eg_certificate(dim)
    }
}

/// Convex combination of the ball's corners with weights ordered `[0+, 0−, 1+, 1−, …]`.
pub fn combine_corners(ball: &L1Ball, weights: &[f64]) -> Result<DenseVector> {
    let d = ball.dim();
    if weights.len() != 2 * d {
        return Err(Error::DimensionMismatch {
            expected: 2 * d,
            got: weights.len(),
        });
    }
    let total: f64 = weights.iter().sum();
    if weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-12 {
        return Err(Error::invalid("corner weights must form a simplex"));
    }
    let r = ball.radius();
    let out = ball
        .center()
        .iter()
        .enumerate()
        .map(|(j, c)| c + r * (weights[2 * j] - weights[2 * j + 1]))
        .collect();
    DenseVector::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::ball_contains;
    use crate::rng::{stream_rng, Stream};
    use proptest::prelude::*;
    use rand::Rng;

    fn ball(center: &[f64], r: f64) -> L1Ball {
        L1Ball::new(DenseVector::new(center.to_vec()).unwrap(), r).unwrap()
    }

    /// Regret against the best corner, with corners built explicitly.
    fn corner_regret(b: &L1Ball, preds: &[Vec<f64>], grads: &[Vec<f64>]) -> f64 {
        let d = b.dim();
        let mut corners = Vec::new();
        for j in 0..d {
            for sign in [1.0, -1.0] {
                let mut c = b.center().as_slice().to_vec();
                c[j] += sign * b.radius();
                corners.push(c);
            }
        }
        let lin = |p: &[f64], g: &[f64]| p.iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
        let learner: f64 = preds.iter().zip(grads).map(|(p, g)| lin(p, g)).sum();
        let best = corners
            .iter()
            .map(|c| grads.iter().map(|g| lin(c, g)).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        learner - best
    }

    fn play(b: &L1Ball, bound: f64, grads: &[Vec<f64>]) -> (Vec<Vec<f64>>, EgState) {
        let mut eg = EgState::new(b.clone(), bound).unwrap();
        let mut preds = Vec::new();
        for g in grads {
            let p = eg.predict();
            assert!(ball_contains(b, &p).unwrap());
            let w = eg.weights();
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(w.iter().all(|x| *x >= 0.0));
            preds.push(p.into_vec());
            eg.update(g).unwrap();
        }
        (preds, eg)
    }

    #[test]
    fn init_is_uniform() {
        let eg = EgState::new(ball(&[0.3, -0.1], 1.0), 1.0).unwrap();
        assert_eq!(eg.weights(), vec![0.25; 4]);
        assert_eq!(eg.predict().as_slice(), &[0.3, -0.1]);
        let one = EgState::new(ball(&[0.0], 1.0), 1.0).unwrap();
        assert_eq!(one.weights(), vec![0.5, 0.5]);
        assert!(EgState::new(ball(&[0.0], 1.0), 0.0).is_err());
    }

    #[test]
    fn zero_radius_predicts_center() {
        let mut eg = EgState::new(ball(&[1.0, 2.0], 0.0), 1.0).unwrap();
        eg.update(&[0.5, -0.5]).unwrap();
        assert_eq!(eg.predict().as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn corner_combination_examples() {
        let b = ball(&[0.0], 1.0);
        assert_eq!(combine_corners(&b, &[0.75, 0.25]).unwrap().as_slice(), &[0.5]);
        let b2 = ball(&[1.0, 1.0], 2.0);
        assert_eq!(
            combine_corners(&b2, &[0.0, 0.0, 1.0, 0.0]).unwrap().as_slice(),
            &[1.0, 3.0]
        );
        assert!(combine_corners(&b, &[0.5, 0.6]).is_err());
    }

    #[test]
    fn prediction_matches_weights() {
        let b = ball(&[0.2, 0.0, -0.4], 0.7);
        let mut eg = EgState::new(b.clone(), 2.0).unwrap();
        let mut rng = stream_rng(3, Stream::Auxiliary);
        for _ in 0..20 {
            let g: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            eg.update(&g).unwrap();
            let via = combine_corners(&b, &eg.weights()).unwrap();
            for (x, y) in via.iter().zip(eg.predict().iter()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_gradient_is_neutral() {
        let mut eg = EgState::new(ball(&[0.0, 0.0], 1.0), 1.0).unwrap();
        eg.update(&[0.0, 0.0]).unwrap();
        assert_eq!(eg.weights(), vec![0.25; 4]);
        assert_eq!(eg.grad_sq_sum(), 0.0);
    }

    #[test]
    fn positive_gradient_moves_weight_to_negative_corner() {
        let mut eg = EgState::new(ball(&[0.0], 1.0), 1.0).unwrap();
        eg.update(&[1.0]).unwrap();
        let w = eg.weights();
        assert!(w[1] > w[0]);
    }

    #[test]
    fn rejects_bad_gradients() {
        let mut eg = EgState::new(ball(&[0.0, 0.0], 1.0), 1.0).unwrap();
        assert!(eg.update(&[f64::NAN, 0.0]).is_err());
        assert!(eg.update(&[1.0]).is_err());
    }

    #[test]
    fn oversized_gradient_is_tolerated() {
        let mut eg = EgState::new(ball(&[0.0], 1.0), 1.0).unwrap();
        eg.update(&[5.0]).unwrap();
        assert!(eg.eta() <= 0.2 + 1e-15);
    }

    #[test]
    fn certificate_values() {
        let c = eg_certificate(1);
        assert!((c.a - 2.0 * (2.0 * 2f64.ln()).sqrt()).abs() < 1e-12);
        assert!((c.a - 2.355).abs() < 1e-3);
        let mut prev = 0.0;
        for d in 1..200 {
            let a = eg_certificate(d).a;
            assert!(a >= prev);
            prev = a;
        }
    }

    #[test]
    fn random_linear_losses_respect_certificate() {
        let b = ball(&[0.1, -0.2, 0.05], 1.5);
        let cert = eg_certificate(3);
        let mut rng = stream_rng(11, Stream::Auxiliary);
        let grads: Vec<Vec<f64>> = (0..100)
            .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let (preds, eg) = play(&b, 1.0, &grads);
        let regret = corner_regret(&b, &preds, &grads);
        assert!(regret <= cert.regret_bound(1.5, eg.grad_sq_sum(), 1.0));
    }

    #[test]
    fn flip_sequences_respect_certificate() {
        let b = ball(&[0.0, 0.0], 1.0);
        let cert = eg_certificate(2);
        let grads: Vec<Vec<f64>> = (0..200)
            .map(|t| {
                let s = if t % 2 == 0 { 1.0 } else { -1.0 };
                if t == 0 { vec![0.5, -0.5] } else { vec![s, -s] }
            })
            .collect();
        let (preds, eg) = play(&b, 1.0, &grads);
        let regret = corner_regret(&b, &preds, &grads);
        assert!(regret <= cert.regret_bound(1.0, eg.grad_sq_sum(), 1.0));
    }

    proptest! {
        #[test]
        fn regret_scales_with_radius(seed in 0u64..1000, c in 0.1f64..10.0) {
            let mut rng = stream_rng(seed, Stream::Auxiliary);
            let grads: Vec<Vec<f64>> = (0..30)
                .map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let (p1, _) = play(&ball(&[0.0, 0.0], 1.0), 1.0, &grads);
            let (pc, _) = play(&ball(&[0.0, 0.0], c), 1.0, &grads);
            let r1 = corner_regret(&ball(&[0.0, 0.0], 1.0), &p1, &grads);
            let rc = corner_regret(&ball(&[0.0, 0.0], c), &pc, &grads);
            // η scales as 1/radius, so the whole trajectory scales by c.
            prop_assert!((rc - c * r1).abs() <= 1e-9 * (1.0 + rc.abs()));
        }

        #[test]
        fn weights_stay_on_simplex(gs in proptest::collection::vec(proptest::collection::vec(-50.0f64..50.0, 3), 1..60)) {
            let mut eg = EgState::new(ball(&[0.0, 0.0, 0.0], 2.0), 1.0).unwrap();
            let mut prev = 0.0;
            for g in &gs {
                eg.update(g).unwrap();
                let w = eg.weights();
                prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(w.iter().all(|x| *x >= 0.0 && x.is_finite()));
                prop_assert!(eg.grad_sq_sum() >= prev);
                prev = eg.grad_sq_sum();
            }
        }
    }
}
