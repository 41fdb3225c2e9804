//! LogEI acquisition family and the candidate-pool optimizer.
//!
//! All values live in the surrogate's standardized target space and assume
//! maximization; callers flip the sign of minimization objectives before
//! fitting.
//!
//! The pool optimizer works on a compact per-parameter representation: a
//! unit coordinate for each continuous parameter and a level index for each
//! discrete one. Fully discrete spaces of at most [`ENUMERATION_LIMIT`]
//! points are searched exhaustively. Everything else gets random multi-start
//! followed by compass search on continuous coordinates interleaved with
//! single-coordinate level swaps.

use std::cmp::Ordering;
use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{standard_normal_matrix, GpModel, PosteriorPrediction};
use crate::space::{ParamValue, ParameterKind, PointAssignment, SearchSpace};
use crate::special::{erfcx, erfcx_cf_tail, log1mexp_unchecked, logsoftplus, logsumexp, norm_cdf, norm_pdf};

/// `log(2π)/2`
pub const C1: f64 = 0.918_938_533_204_672_8;
/// `log(π/2)/2`
pub const C2: f64 = 0.225_791_352_644_727_43;
/// Machine epsilon used for the asymptotic branch threshold.
pub const EPSILON_BRANCH: f64 = f64::EPSILON;

pub const ENUMERATION_LIMIT: usize = 10_000;

/// Where `erfcx` hands over to its continued fraction; reused here so the
/// second branch can skip the `log(u/(u + r))` cancellation.
const STABLE_TAIL_FROM: f64 = 5.0;

/// `log h(z)` with `h(z) = φ(z) + zΦ(z)`.
pub fn log_h(z: f64) -> Result<f64> {
    if z.is_nan() {
        return Err(Error::Domain("log_h of NaN".into()));
    }
    Ok(log_h_unchecked(z))
}

fn log_h_unchecked(z: f64) -> f64 {
    if z > -1.0 {
        return (norm_pdf(z) + z * norm_cdf(z)).ln();
    }
    let head = -0.5 * z * z - C1;
    if !head.is_finite() {
        return f64::MIN;
    }
    if z > -1.0 / EPSILON_BRANCH.sqrt() {
        let u = -z * FRAC_1_SQRT_2;
        // log(erfcx(u)·|z|) + c2 = log(u / (u + r)) once erfcx is the
        // continued fraction 1 / (√π (u + r))
        let inner = if u >= STABLE_TAIL_FROM {
            -(erfcx_cf_tail(u) / u).ln_1p()
        } else {
            (erfcx(u) * z.abs()).ln() + C2
        };
        head + log1mexp_unchecked(inner)
    } else {
        let v = head - 2.0 * z.abs().ln();
        if v.is_finite() {
            v
        } else {
            f64::MIN
        }
    }
}

/// `log_h((μ − y*)/σ) + log σ`. Errors on a degenerate posterior (σ ≤ 0),
/// see [`analytic_logei_or_limit`].
pub fn analytic_logei(prediction: PosteriorPrediction, incumbent: f64) -> Result<f64> {
    if !(prediction.std > 0.0) {
        return Err(Error::Domain(format!(
            "degenerate posterior std {}",
            prediction.std
        )));
    }
    let z = (prediction.mean - incumbent) / prediction.std;
    Ok(log_h(z)? + prediction.std.ln())
}

/// Like [`analytic_logei`] but substitutes the σ → 0 limit
/// `log(max(μ − y*, 0))`.
pub fn analytic_logei_or_limit(prediction: PosteriorPrediction, incumbent: f64) -> f64 {
    if prediction.std > 0.0 {
        let z = (prediction.mean - incumbent) / prediction.std;
        log_h_unchecked(z) + prediction.std.ln()
    } else {
        let gap = prediction.mean - incumbent;
        if gap > 0.0 {
            gap.ln()
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// Monte Carlo batch LogEI over a `draws × q` sample matrix: a smooth max
/// over the q candidates of each draw, then a log-mean over draws.
pub fn qlogei(samples: &DMatrix<f64>, incumbent: f64, tau0: f64, tau_max: f64) -> f64 {
    let n = samples.nrows();
    if n == 0 || samples.ncols() == 0 {
        return f64::NEG_INFINITY;
    }
    let mut per_draw = Vec::with_capacity(n);
    let mut row = Vec::with_capacity(samples.ncols());
    for i in 0..n {
        row.clear();
        row.extend(
            samples
                .row(i)
                .iter()
                .map(|xi| logsoftplus(xi - incumbent, tau0) / tau_max),
        );
        per_draw.push(tau_max * logsumexp(&row));
    }
    logsumexp(&per_draw) - (n as f64).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AcquisitionKind {
    AnalyticLogei,
    Qlogei,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionConfig {
    pub kind: AcquisitionKind,
    pub tau0: f64,
    pub tau_max: f64,
    pub mc_samples: usize,
    /// Random points scored before local search.
    pub raw_samples: usize,
    /// Local searches started from the best raw points.
    pub restarts: usize,
    /// Evaluation cap per local search.
    pub local_evals: usize,
    /// Standardized incumbent; `None` takes the best standardized target.
    pub incumbent: Option<f64>,
}

impl AcquisitionConfig {
    pub fn qlogei() -> Self {
        AcquisitionConfig {
            kind: AcquisitionKind::Qlogei,
            tau0: 1e-6,
            tau_max: 1e-2,
            mc_samples: 256,
            raw_samples: 256,
            restarts: 6,
            local_evals: 300,
            incumbent: None,
        }
    }

    pub fn analytic() -> Self {
        AcquisitionConfig {
            kind: AcquisitionKind::AnalyticLogei,
            ..Self::qlogei()
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.tau0 > 0.0) {
            out.push("tau0 must be positive".to_string());
        }
        if !(self.tau_max > 0.0) {
            out.push("tau_max must be positive".to_string());
        }
        if self.mc_samples == 0 {
            out.push("mc_samples must be at least 1".to_string());
        }
        if self.raw_samples == 0 {
            out.push("raw_samples must be at least 1".to_string());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub round: usize,
    pub points: Vec<PointAssignment>,
    /// Analytic pools: LogEI per point. Monte Carlo pools: log of each
    /// point's marginal gain in the greedy batch, so the first entry is the
    /// single-point qLogEI.
    pub acquisition_values: Vec<f64>,
    /// Set when the space had fewer admissible points than requested.
    #[serde(default)]
    pub short: bool,
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    Continuous { low: f64, high: f64 },
    Ordinal,
    Categorical,
}

/// Compact optimizer coordinates for a search space.
struct Layout<'a> {
    space: &'a SearchSpace,
    slots: Vec<Slot>,
    levels: Vec<usize>,
}

type Genome = Vec<f64>;

impl<'a> Layout<'a> {
    fn new(space: &'a SearchSpace) -> Self {
        let mut slots = Vec::new();
        let mut levels = Vec::new();
        for p in &space.parameters {
            match &p.kind {
                ParameterKind::Continuous { bounds: [low, high] } => {
                    slots.push(Slot::Continuous { low: *low, high: *high });
                    levels.push(0);
                }
                ParameterKind::Ordinal { choices } => {
                    slots.push(Slot::Ordinal);
                    levels.push(choices.len());
                }
                ParameterKind::Categorical { choices } => {
                    slots.push(Slot::Categorical);
                    levels.push(choices.len());
                }
            }
        }
        Layout { space, slots, levels }
    }

    fn encode(&self, g: &Genome) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.space.encoded_width());
        for ((p, slot), &x) in self.space.parameters.iter().zip(&self.slots).zip(g) {
            match (slot, &p.kind) {
                (Slot::Continuous { .. }, _) => out.push(x),
                (Slot::Ordinal, ParameterKind::Ordinal { choices }) => {
                    let (low, high) = (choices[0], choices[choices.len() - 1]);
                    out.push((choices[x as usize] - low) / (high - low));
                }
                (Slot::Categorical, ParameterKind::Categorical { choices }) => {
                    let k = x as usize;
                    out.extend((0..choices.len()).map(|i| if i == k { 1.0 } else { 0.0 }));
                }
                _ => unreachable!("slots mirror parameters"),
            }
        }
        out
    }

    fn to_point(&self, g: &Genome) -> PointAssignment {
        let mut point = PointAssignment::new();
        for ((p, slot), &x) in self.space.parameters.iter().zip(&self.slots).zip(g) {
            let value = match slot {
                Slot::Continuous { low, high } => ParamValue::Real((low + x * (high - low)).clamp(*low, *high)),
                _ => p.level(x as usize).expect("level index in range"),
            };
            point = point.with(&p.name, value);
        }
        point
    }

    fn from_point(&self, point: &PointAssignment) -> Option<Genome> {
        let mut g = Vec::with_capacity(self.slots.len());
        for (p, slot) in self.space.parameters.iter().zip(&self.slots) {
            let value = point.get(&p.name)?;
            match (slot, value) {
                (Slot::Continuous { low, high }, ParamValue::Real(v)) => g.push((v - low) / (high - low)),
                _ => {
                    let count = p.cardinality()?;
                    let i = (0..count).find(|&i| p.level(i).as_ref() == Some(value))?;
                    g.push(i as f64);
                }
            }
        }
        Some(g)
    }

    fn random(&self, rng: &mut ChaCha8Rng) -> Genome {
        self.slots
            .iter()
            .zip(&self.levels)
            .map(|(slot, &n)| match slot {
                Slot::Continuous { .. } => rng.random::<f64>(),
                _ => rng.random_range(0..n) as f64,
            })
            .collect()
    }

    fn enumerate(&self) -> Vec<Genome> {
        let total: usize = self.levels.iter().product();
        let mut out = Vec::with_capacity(total);
        let mut idx = vec![0usize; self.levels.len()];
        for _ in 0..total {
            out.push(idx.iter().map(|&i| i as f64).collect());
            for k in (0..idx.len()).rev() {
                idx[k] += 1;
                if idx[k] < self.levels[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        out
    }

    fn fully_discrete(&self) -> bool {
        !self.slots.iter().any(|s| matches!(s, Slot::Continuous { .. }))
    }
}

fn genome_cmp(a: &Genome, b: &Genome) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    Ordering::Equal
}

/// Descending by value, then lexicographic by genome.
fn rank(a: &(f64, Genome), b: &(f64, Genome)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| genome_cmp(&a.1, &b.1))
}

/// Two genomes closer than this in every coordinate count as one point.
const DISTINCT_TOL: f64 = 1e-6;

fn same(a: &Genome, b: &Genome) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= DISTINCT_TOL)
}

/// Log-acquisition gains below this count as ties in local search.
const MIN_GAIN: f64 = 1e-6;

/// Compass search on continuous coordinates plus level swaps on discrete
/// ones, maximizing `f`. `allowed` rejects excluded discrete points.
fn local_search<F, A>(layout: &Layout, f: &F, allowed: &A, start: (f64, Genome), max_evals: usize) -> (f64, Genome)
where
    F: Fn(&Genome) -> f64,
    A: Fn(&Genome) -> bool,
{
    let (mut best, mut g) = start;
    let mut step = 0.1;
    let mut evals = 0;
    let has_continuous = !layout.fully_discrete();
    while evals < max_evals {
        let mut improved = false;
        for (d, slot) in layout.slots.iter().enumerate() {
            if !matches!(slot, Slot::Continuous { .. }) {
                continue;
            }
            for sign in [1.0, -1.0] {
                let x = (g[d] + sign * step).clamp(0.0, 1.0);
                if x == g[d] {
                    continue;
                }
                let mut trial = g.clone();
                trial[d] = x;
                let v = f(&trial);
                evals += 1;
                if v > best + MIN_GAIN {
                    best = v;
                    g = trial;
                    improved = true;
                    break;
                }
            }
        }
        for (d, slot) in layout.slots.iter().enumerate() {
            if matches!(slot, Slot::Continuous { .. }) {
                continue;
            }
            let mut local: Option<(f64, Genome)> = None;
            for level in 0..layout.levels[d] {
                if level as f64 == g[d] {
                    continue;
                }
                let mut trial = g.clone();
                trial[d] = level as f64;
                if !allowed(&trial) {
                    continue;
                }
                let v = f(&trial);
                evals += 1;
                if v > best + MIN_GAIN && local.as_ref().is_none_or(|(lv, _)| v > *lv) {
                    local = Some((v, trial));
                }
            }
            if let Some((v, trial)) = local {
                best = v;
                g = trial;
                improved = true;
            }
        }
        if !improved {
            if !has_continuous || step <= 1e-6 {
                break;
            }
            step *= 0.5;
        }
    }
    (best, g)
}

/// Search outcome: every scored candidate worth keeping, ranked.
struct Search {
    ranked: Vec<(f64, Genome)>,
}

fn search<F, A>(layout: &Layout, f: &F, allowed: &A, config: &AcquisitionConfig, rng: &mut ChaCha8Rng) -> Search
where
    F: Fn(&Genome) -> f64,
    A: Fn(&Genome) -> bool,
{
    let enumerable = layout.fully_discrete()
        && layout
            .levels
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n))
            .is_some_and(|n| n <= ENUMERATION_LIMIT);
    if enumerable {
        let mut ranked: Vec<(f64, Genome)> = layout
            .enumerate()
            .into_iter()
            .filter(|g| allowed(g))
            .map(|g| (f(&g), g))
            .collect();
        ranked.sort_by(rank);
        return Search { ranked };
    }
    let mut raw: Vec<(f64, Genome)> = Vec::with_capacity(config.raw_samples);
    let mut attempts = 0;
    while raw.len() < config.raw_samples && attempts < config.raw_samples * 20 {
        attempts += 1;
        let g = layout.random(rng);
        if allowed(&g) {
            raw.push((f(&g), g));
        }
    }
    raw.sort_by(rank);
    let mut starts: Vec<(f64, Genome)> = Vec::new();
    for cand in &raw {
        if starts.len() >= config.restarts.max(1) {
            break;
        }
        if !starts.iter().any(|s| same(&s.1, &cand.1)) {
            starts.push(cand.clone());
        }
    }
    let mut ranked: Vec<(f64, Genome)> = starts
        .into_iter()
        .map(|s| local_search(layout, f, allowed, s, config.local_evals))
        .collect();
    ranked.extend(raw);
    ranked.sort_by(rank);
    Search { ranked }
}

fn push_distinct(chosen: &mut Vec<(f64, Genome)>, ranked: &[(f64, Genome)], n: usize) {
    for cand in ranked {
        if chosen.len() >= n {
            break;
        }
        if !chosen.iter().any(|c| same(&c.1, &cand.1)) {
            chosen.push(cand.clone());
        }
    }
}

/// Proposes `pool_size` distinct points sorted by acquisition value.
///
/// `exclude` lists points that must not be proposed again; it is honored in
/// fully discrete spaces, where re-proposing an observed point is never
/// useful. Monte Carlo pools are built greedily: each point maximizes the
/// joint qLogEI of itself together with the points already chosen, on one
/// fixed set of base samples.
pub fn optimize_acquisition(
    model: &GpModel,
    space: &SearchSpace,
    config: &AcquisitionConfig,
    pool_size: usize,
    round: usize,
    seed: u64,
    exclude: &[PointAssignment],
) -> Result<CandidatePool> {
    let problems = config.violations();
    if !problems.is_empty() {
        return Err(Error::Config(problems.join("; ")));
    }
    if pool_size == 0 {
        return Err(Error::Config("pool_size must be at least 1".into()));
    }
    if model.dim() != space.encoded_width() {
        return Err(Error::Dimension {
            expected: space.encoded_width(),
            actual: model.dim(),
        });
    }
    let layout = Layout::new(space);
    let incumbent = config.incumbent.unwrap_or_else(|| {
        model
            .standardized_targets()
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    });
    let excluded: Vec<Genome> = if layout.fully_discrete() {
        exclude.iter().filter_map(|p| layout.from_point(p)).collect()
    } else {
        Vec::new()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let chosen = match config.kind {
        AcquisitionKind::AnalyticLogei => {
            let f = |g: &Genome| -> f64 {
                let x = layout.encode(g);
                let p = model.predict_standardized(&x).expect("width checked");
                analytic_logei_or_limit(p, incumbent)
            };
            let allowed = |g: &Genome| !excluded.iter().any(|e| e == g);
            let found = search(&layout, &f, &allowed, config, &mut rng);
            let mut chosen = Vec::new();
            push_distinct(&mut chosen, &found.ranked, pool_size);
            chosen
        }
        AcquisitionKind::Qlogei => {
            let base = standard_normal_matrix(config.mc_samples, pool_size, rng.random());
            let mut chosen: Vec<(f64, Genome)> = Vec::new();
            let mut encoded: Vec<Vec<f64>> = Vec::new();
            let mut previous = f64::NEG_INFINITY;
            for _ in 0..pool_size {
                let f = |g: &Genome| -> f64 {
                    let mut batch = encoded.clone();
                    batch.push(layout.encode(g));
                    match model.draws_standardized(&batch, &base) {
                        Ok(draws) => qlogei(&draws, incumbent, config.tau0, config.tau_max),
                        Err(_) => f64::NEG_INFINITY,
                    }
                };
                let allowed = |g: &Genome| {
                    !excluded.iter().any(|e| e == g) && !chosen.iter().any(|c| same(&c.1, g))
                };
                let found = search(&layout, &f, &allowed, config, &mut rng);
                let Some((joint, g)) = found.ranked.into_iter().find(|c| allowed(&c.1)) else {
                    break;
                };
                let gain = if previous == f64::NEG_INFINITY {
                    joint
                } else {
                    joint + log1mexp_unchecked((previous - joint).min(-f64::MIN_POSITIVE))
                };
                previous = previous.max(joint);
                encoded.push(layout.encode(&g));
                chosen.push((gain, g));
            }
            chosen.sort_by(rank);
            chosen
        }
    };

    let short = chosen.len() < pool_size;
    Ok(CandidatePool {
        round,
        points: chosen.iter().map(|(_, g)| layout.to_point(g)).collect(),
        acquisition_values: chosen
            .iter()
            .map(|(v, _)| if v.is_finite() { *v } else { f64::MIN })
            .collect(),
        short,
    })
}
