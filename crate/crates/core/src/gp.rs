//! Exact Gaussian-process surrogate with a Matérn-5/2 ARD kernel.
//!
//! Targets are standardized internally (zero mean, unit std with a floor);
//! every public prediction is reported back in original objective units.
//! Hyperparameters are fitted by multi-start L-BFGS on the log marginal
//! likelihood in log-hyperparameter space, inside a fixed box.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const SQRT5: f64 = 2.236_067_977_499_79;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub const STD_FLOOR: f64 = 1e-8;
pub const JITTER_START: f64 = 1e-10;
pub const JITTER_MAX: f64 = 1e-4;

pub const LENGTHSCALE_BOUNDS: (f64, f64) = (1e-3, 1e3);
pub const SIGNAL_BOUNDS: (f64, f64) = (1e-4, 1e3);
pub const NOISE_BOUNDS: (f64, f64) = (1e-8, 1e1);

#[derive(Debug, Clone, PartialEq)]
pub struct KernelConfig {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
    pub jitter: f64,
}

impl KernelConfig {
    pub fn isotropic(dim: usize, lengthscale: f64, signal_variance: f64, noise_variance: f64) -> Self {
        KernelConfig {
            lengthscales: vec![lengthscale; dim],
            signal_variance,
            noise_variance,
            jitter: JITTER_START,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.lengthscales.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            out.push("lengthscales must be positive".to_string());
        }
        if !(self.signal_variance.is_finite() && self.signal_variance > 0.0) {
            out.push("signal_variance must be positive".to_string());
        }
        if !(self.noise_variance.is_finite() && self.noise_variance >= 0.0) {
            out.push("noise_variance must be nonnegative".to_string());
        }
        if !(1e-12..=1e-4).contains(&self.jitter) {
            out.push("jitter outside [1e-12, 1e-4]".to_string());
        }
        out
    }

    /// `[log ℓ_1, …, log ℓ_d, log s², log σ_n²]`
    fn to_log_params(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.lengthscales.iter().map(|l| l.ln()).collect();
        out.push(self.signal_variance.ln());
        out.push(self.noise_variance.max(NOISE_BOUNDS.0).ln());
        out
    }

    fn from_log_params(theta: &[f64], jitter: f64) -> Self {
        let d = theta.len() - 2;
        KernelConfig {
            lengthscales: theta[..d].iter().map(|t| t.exp()).collect(),
            signal_variance: theta[d].exp(),
            noise_variance: theta[d + 1].exp(),
            jitter,
        }
    }

    fn correlation(&self, a: &[f64], b: &[f64]) -> f64 {
        let r2: f64 = a
            .iter()
            .zip(b)
            .zip(&self.lengthscales)
            .map(|((x, y), l)| {
                let t = (x - y) / l;
                t * t
            })
            .sum();
        matern52(r2.sqrt())
    }

    /// Signal part of the kernel, without noise.
    pub fn covariance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.signal_variance * self.correlation(a, b)
    }
}

fn matern52(r: f64) -> f64 {
    let s = SQRT5 * r;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorPrediction {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone)]
pub struct GpModel {
    inputs: Vec<Vec<f64>>,
    targets: DVector<f64>,
    y_mean: f64,
    y_std: f64,
    kernel: KernelConfig,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

fn standardize(targets: &[f64]) -> (DVector<f64>, f64, f64) {
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let var = if targets.len() > 1 {
        targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let std = var.sqrt().max(STD_FLOOR);
    let z = DVector::from_iterator(targets.len(), targets.iter().map(|y| (y - mean) / std));
    (z, mean, std)
}

fn check_inputs(points: &[Vec<f64>], targets: &[f64]) -> Result<usize> {
    if points.is_empty() {
        return Err(Error::EmptyData("GP needs at least one point".into()));
    }
    if points.len() != targets.len() {
        return Err(Error::Dimension {
            expected: points.len(),
            actual: targets.len(),
        });
    }
    let d = points[0].len();
    for p in points {
        if p.len() != d {
            return Err(Error::Dimension {
                expected: d,
                actual: p.len(),
            });
        }
    }
    if targets.iter().any(|y| !y.is_finite()) {
        return Err(Error::Domain("targets must be finite".into()));
    }
    Ok(d)
}

fn gram(points: &[Vec<f64>], kernel: &KernelConfig) -> DMatrix<f64> {
    let n = points.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = kernel.signal_variance;
        for j in 0..i {
            let v = kernel.covariance(&points[i], &points[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Cholesky of `matrix + (base + jitter)·I`, escalating jitter by 10× from
/// `jitter` up to [`JITTER_MAX`].
fn cholesky_with_jitter(matrix: &DMatrix<f64>, base: f64, jitter: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let mut j = jitter.max(1e-12);
    loop {
        let mut m = matrix.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += base + j;
        }
        if let Some(c) = Cholesky::new(m) {
            if c.l_dirty().diagonal().iter().all(|d| *d > 0.0 && d.is_finite()) {
                return Ok((c, j));
            }
        }
        if j >= JITTER_MAX {
            return Err(Error::Conditioning { jitter: j });
        }
        j = (j * 10.0).min(JITTER_MAX);
    }
}

impl GpModel {
    /// Conditions a GP with fixed hyperparameters on the data.
    pub fn with_kernel(points: &[Vec<f64>], targets: &[f64], kernel: KernelConfig) -> Result<GpModel> {
        let d = check_inputs(points, targets)?;
        if kernel.lengthscales.len() != d {
            return Err(Error::Dimension {
                expected: d,
                actual: kernel.lengthscales.len(),
            });
        }
        let problems = kernel.violations();
        if !problems.is_empty() {
            return Err(Error::Config(problems.join("; ")));
        }
        let (z, mean, std) = standardize(targets);
        Self::condition(points.to_vec(), z, mean, std, kernel)
    }

    fn condition(
        inputs: Vec<Vec<f64>>,
        targets: DVector<f64>,
        y_mean: f64,
        y_std: f64,
        mut kernel: KernelConfig,
    ) -> Result<GpModel> {
        let k = gram(&inputs, &kernel);
        let (chol, jitter) = cholesky_with_jitter(&k, kernel.noise_variance, kernel.jitter)?;
        kernel.jitter = jitter;
        let alpha = chol.solve(&targets);
        Ok(GpModel {
            inputs,
            targets,
            y_mean,
            y_std,
            kernel,
            chol,
            alpha,
        })
    }

    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }

    pub fn dim(&self) -> usize {
        self.kernel.lengthscales.len()
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn standardized_targets(&self) -> &DVector<f64> {
        &self.targets
    }

    pub fn target_mean(&self) -> f64 {
        self.y_mean
    }

    pub fn target_std(&self) -> f64 {
        self.y_std
    }

    /// Lower-triangular factor of `K + (noise + jitter)·I`.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn standardize_value(&self, y: f64) -> f64 {
        (y - self.y_mean) / self.y_std
    }

    pub fn unstandardize_value(&self, z: f64) -> f64 {
        self.y_mean + z * self.y_std
    }

    fn check_width(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    fn cross(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.inputs.len(),
            self.inputs.iter().map(|p| self.kernel.covariance(p, x)),
        )
    }

    /// Posterior of the latent function in standardized units.
    pub fn predict_standardized(&self, x: &[f64]) -> Result<PosteriorPrediction> {
        self.check_width(x)?;
        let ks = self.cross(x);
        let mean = ks.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&ks)
            .expect("factor has positive diagonal");
        let var = (self.kernel.signal_variance - v.norm_squared()).max(0.0);
        Ok(PosteriorPrediction {
            mean,
            std: var.sqrt(),
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<PosteriorPrediction> {
        let p = self.predict_standardized(x)?;
        Ok(PosteriorPrediction {
            mean: self.unstandardize_value(p.mean),
            std: p.std * self.y_std,
        })
    }

    /// Joint posterior mean and covariance at `points`, standardized units.
    pub fn joint_posterior_standardized(&self, points: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        for p in points {
            self.check_width(p)?;
        }
        let n = self.inputs.len();
        let q = points.len();
        let mut ks = DMatrix::zeros(n, q);
        for (j, x) in points.iter().enumerate() {
            ks.set_column(j, &self.cross(x));
        }
        let mean = ks.transpose() * &self.alpha;
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&ks)
            .expect("factor has positive diagonal");
        let mut cov = DMatrix::zeros(q, q);
        for a in 0..q {
            for b in 0..=a {
                let prior = self.kernel.covariance(&points[a], &points[b]);
                let c = prior - v.column(a).dot(&v.column(b));
                cov[(a, b)] = c;
                cov[(b, a)] = c;
            }
        }
        Ok((mean, cov))
    }

    /// Posterior draws at `points` driven by the standard-normal matrix
    /// `base` (one row per draw, at least `points.len()` columns).
    /// Identical points share one column so their draws coincide exactly.
    /// Output is `base.nrows() × points.len()` in standardized units.
    pub fn draws_standardized(&self, points: &[Vec<f64>], base: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut unique: Vec<Vec<f64>> = Vec::new();
        let mut slot = Vec::with_capacity(points.len());
        for p in points {
            match unique.iter().position(|u| u == p) {
                Some(i) => slot.push(i),
                None => {
                    slot.push(unique.len());
                    unique.push(p.clone());
                }
            }
        }
        let u = unique.len();
        if base.ncols() < u {
            return Err(Error::Dimension {
                expected: u,
                actual: base.ncols(),
            });
        }
        let (mean, cov) = self.joint_posterior_standardized(&unique)?;
        let (chol, _) = cholesky_with_jitter(&cov, 0.0, JITTER_START)?;
        let l = chol.l();
        let z = base.columns(0, u);
        // each row: mean + L z
        let correlated = z * l.transpose();
        let s = base.nrows();
        let mut out = DMatrix::zeros(s, points.len());
        for (j, &k) in slot.iter().enumerate() {
            for i in 0..s {
                out[(i, j)] = mean[k] + correlated[(i, k)];
            }
        }
        Ok(out)
    }

    /// `n_samples × points.len()` joint posterior draws in original units.
    pub fn sample_posterior(&self, points: &[Vec<f64>], n_samples: usize, seed: u64) -> Result<DMatrix<f64>> {
        if points.is_empty() || n_samples == 0 {
            return Err(Error::Config("sample_posterior needs q >= 1 and n_samples >= 1".into()));
        }
        let base = standard_normal_matrix(n_samples, points.len(), seed);
        let draws = self.draws_standardized(points, &base)?;
        Ok(draws.map(|z| self.unstandardize_value(z)))
    }

    /// Log marginal likelihood of the standardized targets.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.targets.len() as f64;
        let logdet: f64 = self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
        -0.5 * self.targets.dot(&self.alpha) - logdet - 0.5 * n * LN_2PI
    }

    /// Gradient of [`Self::log_marginal_likelihood`] with respect to
    /// `[log ℓ_1, …, log ℓ_d, log s², log σ_n²]`.
    pub fn lml_gradient(&self) -> Vec<f64> {
        let n = self.inputs.len();
        let d = self.dim();
        let kinv = self.chol.inverse();
        // W = αα' - K⁻¹
        let w = &self.alpha * self.alpha.transpose() - kinv;
        let s2 = self.kernel.signal_variance;
        let mut grad = vec![0.0; d + 2];
        for i in 0..n {
            grad[d] += 0.5 * w[(i, i)] * s2;
            for j in 0..i {
                let a = &self.inputs[i];
                let b = &self.inputs[j];
                let mut r2 = 0.0;
                for k in 0..d {
                    let t = (a[k] - b[k]) / self.kernel.lengthscales[k];
                    r2 += t * t;
                }
                let r = r2.sqrt();
                let e = (-SQRT5 * r).exp();
                let kij = s2 * (1.0 + SQRT5 * r + 5.0 * r2 / 3.0) * e;
                let common = s2 * (5.0 / 3.0) * (1.0 + SQRT5 * r) * e;
                let wij = w[(i, j)];
                // off-diagonal terms count twice in the trace
                grad[d] += wij * kij;
                for k in 0..d {
                    let t = (a[k] - b[k]) / self.kernel.lengthscales[k];
                    grad[k] += wij * common * t * t;
                }
            }
        }
        let noise = self.kernel.noise_variance;
        grad[d + 1] = 0.5 * noise * w.diagonal().sum();
        grad
    }
}

/// Seeded i.i.d. standard-normal matrix.
pub fn standard_normal_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub restarts: usize,
    pub seed: u64,
    pub max_iters: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            restarts: 8,
            seed: 0,
            max_iters: 200,
        }
    }
}

/// Result of one restart, kept for diagnostics.
#[derive(Debug, Clone)]
pub struct RestartTrace {
    pub initial_lml: f64,
    pub final_lml: f64,
}

fn log_bounds(d: usize) -> Vec<(f64, f64)> {
    let mut b = vec![(LENGTHSCALE_BOUNDS.0.ln(), LENGTHSCALE_BOUNDS.1.ln()); d];
    b.push((SIGNAL_BOUNDS.0.ln(), SIGNAL_BOUNDS.1.ln()));
    b.push((NOISE_BOUNDS.0.ln(), NOISE_BOUNDS.1.ln()));
    b
}

fn initial_points(d: usize, restarts: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6a09_e667_f3bc_c908);
    let mut out = Vec::with_capacity(restarts);
    let default = KernelConfig::isotropic(d, 0.5, 1.0, 1e-3).to_log_params();
    out.push(default);
    while out.len() < restarts {
        let mut theta: Vec<f64> = (0..d).map(|_| rng.random_range(0.05f64.ln()..2f64.ln())).collect();
        theta.push(rng.random_range(0.3f64.ln()..3f64.ln()));
        theta.push(rng.random_range(1e-6f64.ln()..0.1f64.ln()));
        out.push(theta);
    }
    out
}

/// Fits hyperparameters by maximizing the log marginal likelihood from
/// `options.restarts` starting points and returns the best model.
pub fn fit(points: &[Vec<f64>], targets: &[f64], options: &FitOptions) -> Result<GpModel> {
    fit_traced(points, targets, options).map(|(m, _)| m)
}

pub fn fit_traced(
    points: &[Vec<f64>],
    targets: &[f64],
    options: &FitOptions,
) -> Result<(GpModel, Vec<RestartTrace>)> {
    let d = check_inputs(points, targets)?;
    if points.len() < 2 {
        return Err(Error::EmptyData("fit needs at least 2 points".into()));
    }
    let (z, mean, std) = standardize(targets);
    let bounds = log_bounds(d);
    let objective = |theta: &[f64]| -> Option<(f64, Vec<f64>)> {
        let kernel = KernelConfig::from_log_params(theta, JITTER_START);
        let model = GpModel::condition(points.to_vec(), z.clone(), mean, std, kernel).ok()?;
        let f = model.log_marginal_likelihood();
        if !f.is_finite() {
            return None;
        }
        Some((f, model.lml_gradient()))
    };

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut traces = Vec::new();
    let mut last_err = None;
    for start in initial_points(d, options.restarts.max(1), options.seed) {
        let start = project(&start, &bounds);
        let Some(initial) = objective(&start) else {
            last_err = Some(Error::Conditioning { jitter: JITTER_MAX });
            continue;
        };
        let initial_lml = initial.0;
        let (theta, value) = lbfgs_maximize(&objective, start, initial, &bounds, options.max_iters);
        traces.push(RestartTrace {
            initial_lml,
            final_lml: value,
        });
        if best.as_ref().is_none_or(|(b, _)| value > *b) {
            best = Some((value, theta));
        }
    }
    let Some((_, theta)) = best else {
        return Err(last_err.unwrap_or(Error::Conditioning { jitter: JITTER_MAX }));
    };
    let kernel = KernelConfig::from_log_params(&theta, JITTER_START);
    let model = GpModel::condition(points.to_vec(), z, mean, std, kernel)?;
    Ok((model, traces))
}

fn project(x: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    x.iter().zip(bounds).map(|(v, (lo, hi))| v.clamp(*lo, *hi)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Box-projected L-BFGS ascent with Armijo backtracking. Only ever accepts
/// improving steps, so the returned value is at least the initial one.
fn lbfgs_maximize<F>(
    objective: &F,
    mut x: Vec<f64>,
    initial: (f64, Vec<f64>),
    bounds: &[(f64, f64)],
    max_iters: usize,
) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    const MEMORY: usize = 6;
    let (mut f, mut g) = initial;
    let mut history: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for _ in 0..max_iters {
        // two-loop recursion on the ascent problem (curvature of -f)
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y) in history.iter().rev() {
            let rho = 1.0 / dot(y, s);
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push((a, rho));
        }
        if let Some((s, y)) = history.last() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y), (a, rho)) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        let mut direction = q;
        if dot(&direction, &g) <= 0.0 {
            direction = g.clone();
            history.clear();
        }

        let mut step = 1.0;
        if history.is_empty() {
            let norm = dot(&direction, &direction).sqrt();
            if norm > 1.0 {
                step = 1.0 / norm;
            }
        }
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = project(
                &x.iter().zip(&direction).map(|(xi, di)| xi + step * di).collect::<Vec<_>>(),
                bounds,
            );
            let moved: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            if dot(&moved, &moved) == 0.0 {
                break;
            }
            if let Some((ft, gt)) = objective(&trial) {
                if ft >= f + 1e-4 * dot(&g, &moved) && ft > f {
                    accepted = Some((trial, ft, gt, moved));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((trial, ft, gt, moved)) = accepted else {
            break;
        };
        // store pairs for minimizing -f: s, y = -(g_new - g_old)
        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| -(a - b)).collect();
        if dot(&moved, &y) > 1e-12 {
            history.push((moved, y));
            if history.len() > MEMORY {
                history.remove(0);
            }
        }
        let improvement = ft - f;
        x = trial;
        f = ft;
        g = gt;
        if improvement < 1e-9 * (1.0 + f.abs()) {
            break;
        }
    }
    (x, f)
}
