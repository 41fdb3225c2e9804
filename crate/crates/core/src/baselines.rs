//! Comparison optimizers: CMA-ES and uniform random search.
//!
//! CMA-ES uses the canonical parameterization: λ = 4 + ⌊3 ln d⌋,
//! μ = ⌊λ/2⌋, log-rank recombination weights, cumulative step-size
//! adaptation and rank-one plus rank-μ covariance updates. It minimizes;
//! maximization objectives are negated before `tell`. Only the ranking of
//! the values is used.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::derive_seed;
use crate::space::{Direction, ParamValue, ParameterKind, PointAssignment, SearchSpace};

/// Resampling attempts for out-of-box draws before clipping.
pub const MAX_RESAMPLES: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct CmaState {
    pub mean: DVector<f64>,
    pub sigma: f64,
    pub cov: DMatrix<f64>,
    pub p_sigma: DVector<f64>,
    pub p_c: DVector<f64>,
    pub weights: Vec<f64>,
    pub lambda: usize,
    pub mu: usize,
    pub generation: usize,
    pub seed: u64,
    mu_eff: f64,
    c_sigma: f64,
    d_sigma: f64,
    c_c: f64,
    c1: f64,
    c_mu: f64,
    chi_n: f64,
    basis: DMatrix<f64>,
    scales: DVector<f64>,
}

pub fn default_population(dim: usize) -> usize {
    4 + (3.0 * (dim as f64).ln()).floor() as usize
}

impl CmaState {
    pub fn new(mean: &[f64], sigma: f64, seed: u64) -> Result<Self> {
        let lambda = default_population(mean.len());
        Self::with_population(mean, sigma, lambda, lambda / 2, seed)
    }

    pub fn with_population(mean: &[f64], sigma: f64, lambda: usize, mu: usize, seed: u64) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::Config("CMA-ES needs at least one dimension".into()));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Config("CMA-ES step size must be positive".into()));
        }
        if mu == 0 || mu > lambda {
            return Err(Error::Config(format!("need 1 <= mu <= lambda, got mu={mu} lambda={lambda}")));
        }
        let raw: Vec<f64> = (1..=mu)
            .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - (i as f64).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let n = d as f64;
        let c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (n + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
        let c1 = 2.0 / ((n + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0).powi(2) + mu_eff));
        let chi_n = n.sqrt() * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));
        Ok(CmaState {
            mean: DVector::from_column_slice(mean),
            sigma,
            cov: DMatrix::identity(d, d),
            p_sigma: DVector::zeros(d),
            p_c: DVector::zeros(d),
            weights,
            lambda,
            mu,
            generation: 0,
            seed,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c1,
            c_mu,
            chi_n,
            basis: DMatrix::identity(d, d),
            scales: DVector::from_element(d, 1.0),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(derive_seed(self.seed, self.generation as u64))
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = &self.basis * z.component_mul(&self.scales);
        &self.mean + y * self.sigma
    }

    /// λ draws from N(m, σ²C). Repeated calls on one state return the same
    /// population.
    pub fn ask(&self) -> Vec<Vec<f64>> {
        let mut rng = self.rng();
        (0..self.lambda)
            .map(|_| self.draw(&mut rng).iter().copied().collect())
            .collect()
    }

    /// Like [`Self::ask`] but keeps each draw inside `[lo, hi]` per
    /// coordinate by resampling, then clipping.
    pub fn ask_boxed(&self, lo: f64, hi: f64) -> Vec<Vec<f64>> {
        let mut rng = self.rng();
        (0..self.lambda)
            .map(|_| {
                let mut x = self.draw(&mut rng);
                let mut tries = 1;
                while tries < MAX_RESAMPLES && x.iter().any(|v| *v < lo || *v > hi) {
                    x = self.draw(&mut rng);
                    tries += 1;
                }
                x.iter().map(|v| v.clamp(lo, hi)).collect()
            })
            .collect()
    }

    /// Updates the state from one evaluated population (minimization).
    /// Non-finite values rank last; ties keep population order.
    pub fn tell(&self, points: &[Vec<f64>], values: &[f64]) -> Result<CmaState> {
        if points.len() != self.lambda || values.len() != self.lambda {
            return Err(Error::Dimension {
                expected: self.lambda,
                actual: points.len().min(values.len()),
            });
        }
        let d = self.dim();
        if let Some(p) = points.iter().find(|p| p.len() != d) {
            return Err(Error::Dimension {
                expected: d,
                actual: p.len(),
            });
        }
        let mut order: Vec<usize> = (0..self.lambda).collect();
        let key = |v: f64| if v.is_finite() { v } else { f64::INFINITY };
        order.sort_by(|&a, &b| key(values[a]).total_cmp(&key(values[b])).then(a.cmp(&b)));

        let xs: Vec<DVector<f64>> = order[..self.mu]
            .iter()
            .map(|&i| DVector::from_column_slice(&points[i]))
            .collect();
        let mut mean = DVector::zeros(d);
        for (w, x) in self.weights.iter().zip(&xs) {
            mean += x * *w;
        }
        let ys: Vec<DVector<f64>> = xs.iter().map(|x| (x - &self.mean) / self.sigma).collect();
        let y_w = (&mean - &self.mean) / self.sigma;

        let inv_sqrt = &self.basis * DMatrix::from_diagonal(&self.scales.map(|s| 1.0 / s)) * self.basis.transpose();
        let p_sigma = &self.p_sigma * (1.0 - self.c_sigma)
            + &inv_sqrt * &y_w * (self.c_sigma * (2.0 - self.c_sigma) * self.mu_eff).sqrt();
        let n = d as f64;
        let ps_norm = p_sigma.norm();
        let decay = 1.0 - (1.0 - self.c_sigma).powi(2 * (self.generation as i32 + 1));
        let h_sigma = if ps_norm / decay.sqrt() < (1.4 + 2.0 / (n + 1.0)) * self.chi_n {
            1.0
        } else {
            0.0
        };
        let p_c = &self.p_c * (1.0 - self.c_c) + &y_w * (h_sigma * (self.c_c * (2.0 - self.c_c) * self.mu_eff).sqrt());

        let mut rank_mu = DMatrix::zeros(d, d);
        for (w, y) in self.weights.iter().zip(&ys) {
            rank_mu += y * y.transpose() * *w;
        }
        let rank_one = &p_c * p_c.transpose() + &self.cov * ((1.0 - h_sigma) * self.c_c * (2.0 - self.c_c));
        let mut cov = &self.cov * (1.0 - self.c1 - self.c_mu) + rank_one * self.c1 + rank_mu * self.c_mu;
        cov = (&cov + cov.transpose()) * 0.5;

        let sigma = self.sigma * ((self.c_sigma / self.d_sigma) * (ps_norm / self.chi_n - 1.0)).exp();
        let eig = SymmetricEigen::new(cov.clone());
        if eig.eigenvalues.iter().any(|e| !(e.is_finite() && *e > 0.0)) || !sigma.is_finite() {
            return Err(Error::StateCorruption("CMA-ES covariance lost positive definiteness".into()));
        }
        Ok(CmaState {
            mean,
            sigma,
            cov,
            p_sigma,
            p_c,
            generation: self.generation + 1,
            basis: eig.eigenvectors,
            scales: eig.eigenvalues.map(f64::sqrt),
            weights: self.weights.clone(),
            lambda: self.lambda,
            mu: self.mu,
            seed: self.seed,
            mu_eff: self.mu_eff,
            c_sigma: self.c_sigma,
            d_sigma: self.d_sigma,
            c_c: self.c_c,
            c1: self.c1,
            c_mu: self.c_mu,
            chi_n: self.chi_n,
        })
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.scales.iter().map(|s| s * s).fold(f64::INFINITY, f64::min)
    }
}

/// CMA-ES over a search space's encoding in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct CmaOptimizer {
    pub state: CmaState,
    pub direction: Direction,
}

impl CmaOptimizer {
    pub const INITIAL_SIGMA: f64 = 0.3;

    pub fn new(space: &SearchSpace, seed: u64) -> Result<Self> {
        let mean = vec![0.5; space.encoded_width()];
        Ok(CmaOptimizer {
            state: CmaState::new(&mean, Self::INITIAL_SIGMA, seed)?,
            direction: space.direction,
        })
    }

    /// One population: encoded vectors and the points they decode to.
    pub fn ask(&self, space: &SearchSpace) -> Result<Vec<(Vec<f64>, PointAssignment)>> {
        self.state
            .ask_boxed(0.0, 1.0)
            .into_iter()
            .map(|x| space.decode(&x).map(|p| (x, p)))
            .collect()
    }

    pub fn tell(&mut self, encoded: &[Vec<f64>], values: &[f64]) -> Result<()> {
        let sign = -self.direction.sign();
        let internal: Vec<f64> = values.iter().map(|v| sign * v).collect();
        self.state = self.state.tell(encoded, &internal)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomSearchState {
    pub seed: u64,
    pub draws_made: u64,
}

impl RandomSearchState {
    pub fn new(seed: u64) -> Self {
        RandomSearchState { seed, draws_made: 0 }
    }

    /// `n` independent uniform points; draw `k` depends only on
    /// `(seed, k)`.
    pub fn ask(&mut self, space: &SearchSpace, n: usize) -> Vec<PointAssignment> {
        (0..n)
            .map(|_| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, self.draws_made));
                self.draws_made += 1;
                uniform_point(space, &mut rng)
            })
            .collect()
    }
}

pub fn uniform_point<R: Rng>(space: &SearchSpace, rng: &mut R) -> PointAssignment {
    let mut point = PointAssignment::new();
    for p in &space.parameters {
        let value = match &p.kind {
            ParameterKind::Continuous { bounds: [low, high] } => {
                ParamValue::Real((low + rng.random::<f64>() * (high - low)).min(*high))
            }
            _ => {
                let n = p.cardinality().expect("discrete parameter");
                p.level(rng.random_range(0..n)).expect("index in range")
            }
        };
        point = point.with(&p.name, value);
    }
    point
}
