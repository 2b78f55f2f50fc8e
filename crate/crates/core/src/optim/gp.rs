//! Gaussian-process regression with a fixed Matérn-5/2 kernel and the UCB
//! acquisition step.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::optim::OptimError;
use crate::space::{Design, ParameterSpace};

/// Matérn-5/2 correlation at distance `r`.
pub fn matern52(r: f64, lengthscale: f64) -> f64 {
    let s = 5f64.sqrt() * r / lengthscale;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpUcbConfig {
    pub beta: f64,
    pub lengthscale: f64,
    pub signal_variance: f64,
    pub noise_jitter: f64,
    pub candidates_per_step: usize,
    pub seed_points: usize,
}

impl Default for GpUcbConfig {
    fn default() -> Self {
        Self {
            beta: 2.0,
            lengthscale: 1.0,
            signal_variance: 1.0,
            noise_jitter: 1e-6,
            candidates_per_step: 100,
            seed_points: 1,
        }
    }
}

impl GpUcbConfig {
    pub fn check(&self) -> Result<(), OptimError> {
        let ok = self.beta > 0.0
            && self.lengthscale > 0.0
            && self.signal_variance > 0.0
            && self.noise_jitter > 0.0
            && self.candidates_per_step >= 1
            && self.seed_points >= 1;
        if ok {
            Ok(())
        } else {
            Err(OptimError::InvalidConfig(format!("{self:?}")))
        }
    }
}

/// Number of times the jitter is multiplied by 10 after a failed
/// factorization.
pub const JITTER_ESCALATIONS: usize = 3;

/// A GP posterior conditioned on observations. Targets are standardized
/// internally; predictions are returned on the original target scale.
#[derive(Debug, Clone)]
pub struct GaussianProcess {
    points: Vec<Vec<f64>>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    y_mean: f64,
    y_scale: f64,
    lengthscale: f64,
    signal_variance: f64,
    pub jitter: f64,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

impl GaussianProcess {
    pub fn fit(points: &[Vec<f64>], y: &[f64], config: &GpUcbConfig) -> Result<Self, OptimError> {
        let n = points.len();
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum::<f64>() / n as f64;
        let y_scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        let kernel = DMatrix::from_fn(n, n, |i, j| {
            config.signal_variance * matern52(distance(&points[i], &points[j]), config.lengthscale)
        });
        let mut jitter = config.noise_jitter;
        for attempt in 0..=JITTER_ESCALATIONS {
            let mut k = kernel.clone();
            for i in 0..n {
                k[(i, i)] += jitter;
            }
            if let Some(chol) = k.cholesky() {
                let z = DVector::from_iterator(n, y.iter().map(|v| (v - y_mean) / y_scale));
                let alpha = chol.solve(&z);
                return Ok(Self {
                    points: points.to_vec(),
                    chol,
                    alpha,
                    y_mean,
                    y_scale,
                    lengthscale: config.lengthscale,
                    signal_variance: config.signal_variance,
                    jitter,
                });
            }
            if attempt < JITTER_ESCALATIONS {
                jitter *= 10.0;
            }
        }
        Err(OptimError::SingularGram { jitter })
    }

    /// Posterior mean and standard deviation at `x`.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let k = DVector::from_iterator(
            self.points.len(),
            self.points
                .iter()
                .map(|p| self.signal_variance * matern52(distance(p, x), self.lengthscale)),
        );
        let mean = k.dot(&self.alpha);
        let v = self
            .chol
            .l()
            .solve_lower_triangular(&k)
            .expect("cholesky factor is invertible");
        let var = (self.signal_variance - v.dot(&v)).max(0.0);
        (self.y_mean + self.y_scale * mean, self.y_scale * var.sqrt())
    }
}

/// Fits the GP to `history` (encoded designs with scores oriented so that
/// larger is better) and returns the best of `candidates_per_step` uniform
/// candidates under `mu + beta * sigma`. Ties keep the first candidate drawn.
pub fn gp_ucb_propose<R: Rng + ?Sized>(
    history: &[(Vec<f64>, f64)],
    space: &ParameterSpace,
    config: &GpUcbConfig,
    rng: &mut R,
) -> Result<Design, OptimError> {
    if history.is_empty() {
        return Err(OptimError::InvalidConfig(
            "GP-UCB needs at least one observation".into(),
        ));
    }
    let points: Vec<Vec<f64>> = history.iter().map(|(x, _)| x.clone()).collect();
    let y: Vec<f64> = history.iter().map(|(_, s)| *s).collect();
    let gp = GaussianProcess::fit(&points, &y, config)?;
    let mut best: Option<(f64, Design)> = None;
    for _ in 0..config.candidates_per_step {
        let candidate = space.sample_uniform(rng);
        let (mu, sigma) = gp.predict(&space.encode(&candidate).0);
        let ucb = mu + config.beta * sigma;
        if best.as_ref().is_none_or(|(b, _)| ucb > *b) {
            best = Some((ucb, candidate));
        }
    }
    Ok(best.expect("candidates_per_step >= 1").1)
}
