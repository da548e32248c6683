//! l1-regularized dual averaging.
//!
//! With `ḡ_t` the mean of the gradients seen so far and `λ_t = λ + γρ/√t`, each coordinate
//! of the next point is `0` when `|ḡ_{t,j}| ≤ λ_t` and `−(√t/γ)(ḡ_{t,j} − λ_t·sign ḡ_{t,j})`
//! otherwise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::primitives::DenseVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdaParams {
    /// Step-size scale, > 0.
    pub gamma: f64,
    /// Sparsity offset, >= 0.
    pub rho: f64,
    /// l1 weight, >= 0.
    pub lambda: f64,
}

impl RdaParams {
    pub fn new(gamma: f64, rho: f64, lambda: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::invalid(format!("gamma must be > 0, got {gamma}")));
        }
        if !(rho.is_finite() && rho >= 0.0 && lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::invalid("rho and lambda must be finite and >= 0"));
        }
        Ok(RdaParams { gamma, rho, lambda })
    }
}

/// The grid `{10⁻⁵, …, 10³}` swept for each hyperparameter.
pub fn rda_grid() -> Vec<f64> {
    (-5..=3).map(|k| 10f64.powi(k)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdaState {
    params: RdaParams,
    t: u64,
    gbar: Vec<f64>,
    theta: Vec<f64>,
}

impl RdaState {
    pub fn new(params: RdaParams, dim: usize) -> Self {
        RdaState {
            params,
            t: 0,
            gbar: vec![0.0; dim],
            theta: vec![0.0; dim],
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Current point, used as the next prediction.
    pub fn theta(&self) -> DenseVector {
        DenseVector::new(self.theta.clone()).expect("finite iterate")
    }

    pub fn gradient_mean(&self) -> &[f64] {
        &self.gbar
    }

    pub fn step(&mut self, gradient: &DenseVector) -> Result<()> {
        gradient.check_dim(self.gbar.len())?;
        self.t += 1;
        let t = self.t as f64;
        for (m, g) in self.gbar.iter_mut().zip(gradient.iter()) {
            *m += (g - *m) / t;
        }
        let RdaParams { gamma, rho, lambda } = self.params;
        let lam_t = lambda + gamma * rho / t.sqrt();
        let scale = t.sqrt() / gamma;
        for (th, m) in self.theta.iter_mut().zip(&self.gbar) {
            *th = if m.abs() <= lam_t {
                0.0
            } else {
                -scale * (m - lam_t * m.signum())
            };
        }
        if self.theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("RDA iterate overflowed"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use proptest::prelude::*;
    use rand::Rng;

    fn v(x: &[f64]) -> DenseVector {
        DenseVector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn zero_gradients_keep_origin() {
        let mut s = RdaState::new(RdaParams::new(1.0, 0.5, 0.1).unwrap(), 3);
        for _ in 0..10 {
            s.step(&DenseVector::zeros(3)).unwrap();
        }
        assert_eq!(s.theta(), DenseVector::zeros(3));
    }

    #[test]
    fn small_mean_is_thresholded() {
        let mut s = RdaState::new(RdaParams::new(1.0, 0.0, 0.5).unwrap(), 2);
        s.step(&v(&[0.4, -0.5])).unwrap();
        assert_eq!(s.theta(), DenseVector::zeros(2));
    }

    #[test]
    fn constant_gradient_recursion() {
        let mut s = RdaState::new(RdaParams::new(1.0, 0.0, 0.0).unwrap(), 1);
        for t in 1..=50u64 {
            s.step(&v(&[1.0])).unwrap();
            assert!((s.theta()[0] + (t as f64).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_is_exact() {
        let mut s = RdaState::new(RdaParams::new(2.0, 0.1, 0.01).unwrap(), 2);
        let mut rng = stream_rng(2, Stream::Auxiliary);
        let mut sum = [0.0; 2];
        for n in 1..=100 {
            let g = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            sum[0] += g[0];
            sum[1] += g[1];
            s.step(&v(&g)).unwrap();
            for j in 0..2 {
                assert!((s.gradient_mean()[j] - sum[j] / n as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn grid_spans_nine_decades() {
        let g = rda_grid();
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], 1e-5);
        assert_eq!(g[8], 1e3);
    }

    proptest! {
        #[test]
        fn larger_lambda_is_sparser(
            gs in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 5), 1..30),
            l1 in 0.0f64..0.5,
            dl in 0.0f64..0.5,
        ) {
            let mut a = RdaState::new(RdaParams::new(1.0, 0.2, l1).unwrap(), 5);
            let mut b = RdaState::new(RdaParams::new(1.0, 0.2, l1 + dl).unwrap(), 5);
            for g in &gs {
                a.step(&v(g)).unwrap();
                b.step(&v(g)).unwrap();
                prop_assert!(b.theta().nnz() <= a.theta().nnz());
                let lam_t = l1 + 0.2 / (a.steps() as f64).sqrt();
                for (m, th) in a.gradient_mean().iter().zip(a.theta().iter()) {
                    if m.abs() <= lam_t {
                        prop_assert_eq!(*th, 0.0);
                    }
                }
            }
        }
    }
}
