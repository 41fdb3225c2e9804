//! Batch BO driver shared by every method: the initial design, one round of
//! surrogate fit plus pool proposal, and plain evaluation loops for the
//! comparison methods.

use serde::{Deserialize, Serialize};

use crate::acquisition::{optimize_acquisition, AcquisitionConfig, CandidatePool};
use crate::baselines::{CmaOptimizer, RandomSearchState};
use crate::benchmarks::Objective;
use crate::error::{Error, Result};
use crate::gp::{fit, FitOptions, GpModel};
use crate::seeds::derive_seed;
use crate::space::{ParamValue, ParameterKind, PointAssignment, SearchSpace};

/// Stream indices for [`derive_seed`], one per consumer.
pub mod streams {
    pub const INITIAL_DESIGN: u64 = 1;
    pub const GP_FIT: u64 = 2;
    pub const ACQUISITION: u64 = 3;
    pub const RANDOM_SEARCH: u64 = 4;
    pub const CMA_ES: u64 = 5;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ReasoningBo,
    VanillaBo,
    AnalyticEi,
    CmaEs,
    Random,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::ReasoningBo,
        Method::VanillaBo,
        Method::AnalyticEi,
        Method::CmaEs,
        Method::Random,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::ReasoningBo => "reasoning-bo",
            Method::VanillaBo => "vanilla-bo",
            Method::AnalyticEi => "analytic-ei",
            Method::CmaEs => "cma-es",
            Method::Random => "random",
        }
    }

    pub fn parse(text: &str) -> Result<Method> {
        Method::ALL
            .into_iter()
            .find(|m| m.label() == text)
            .ok_or_else(|| Error::Config(format!("unknown method {text}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    /// Round 0 is the initial design.
    pub round: usize,
    pub point: PointAssignment,
    pub value: f64,
}

/// Owen-scrambled Sobol initial design, one Sobol dimension per parameter.
/// Discrete parameters take level `floor(u * levels)`. Spaces wider than
/// the Sobol tables fall back to uniform random points.
pub fn initial_design(space: &SearchSpace, n: usize, seed: u64) -> Vec<PointAssignment> {
    let seed = derive_seed(seed, streams::INITIAL_DESIGN);
    if space.parameters.len() > sobol_burley::NUM_DIMENSIONS as usize {
        return RandomSearchState::new(seed).ask(space, n);
    }
    let scramble = (seed ^ (seed >> 32)) as u32;
    (0..n as u32)
        .map(|i| {
            let mut point = PointAssignment::new();
            for (d, p) in space.parameters.iter().enumerate() {
                let u = sobol_burley::sample(i, d as u32, scramble) as f64;
                let value = match &p.kind {
                    ParameterKind::Continuous { bounds: [low, high] } => ParamValue::Real((low + u * (high - low)).min(*high)),
                    _ => {
                        let k = p.cardinality().expect("discrete parameter");
                        p.level(((u * k as f64) as usize).min(k - 1)).expect("index in range")
                    }
                };
                point = point.with(&p.name, value);
            }
            point
        })
        .collect()
}

/// Fits the surrogate on `observed` (objective units, any direction); the
/// model's targets are sign-flipped so that larger is always better.
pub fn fit_surrogate(space: &SearchSpace, observed: &[(PointAssignment, f64)], round: usize, seed: u64) -> Result<GpModel> {
    if observed.len() < 2 {
        return Err(Error::EmptyData("surrogate needs at least 2 observations".into()));
    }
    let xs = observed
        .iter()
        .map(|(p, _)| space.encode(p))
        .collect::<Result<Vec<_>>>()?;
    let sign = space.direction.sign();
    let ys: Vec<f64> = observed.iter().map(|(_, v)| sign * v).collect();
    fit(
        &xs,
        &ys,
        &FitOptions {
            seed: derive_seed(seed, streams::GP_FIT * 1_000_003 + round as u64),
            ..FitOptions::default()
        },
    )
}

/// One round of surrogate fit plus acquisition optimization.
pub fn propose_pool(
    space: &SearchSpace,
    observed: &[(PointAssignment, f64)],
    pool_size: usize,
    round: usize,
    seed: u64,
    config: &AcquisitionConfig,
) -> Result<CandidatePool> {
    let model = fit_surrogate(space, observed, round, seed)?;
    let exclude: Vec<PointAssignment> = observed.iter().map(|(p, _)| p.clone()).collect();
    optimize_acquisition(
        &model,
        space,
        config,
        pool_size,
        round,
        derive_seed(seed, streams::ACQUISITION * 1_000_003 + round as u64),
        &exclude,
    )
}

fn evaluate(objective: &dyn Objective, round: usize, point: PointAssignment) -> Result<EvalRecord> {
    let value = objective.evaluate(&point)?;
    Ok(EvalRecord { round, point, value })
}

/// Sobol initial design of `batch` points, then rounds that evaluate the
/// top `batch` points of each pool until `total` evaluations are spent.
pub fn run_bo(
    space: &SearchSpace,
    objective: &dyn Objective,
    total: usize,
    batch: usize,
    pool_size: usize,
    seed: u64,
    config: &AcquisitionConfig,
) -> Result<Vec<EvalRecord>> {
    let batch = batch.max(1);
    let mut records = Vec::with_capacity(total);
    for point in initial_design(space, batch.min(total), seed) {
        records.push(evaluate(objective, 0, point)?);
    }
    let mut round = 1;
    while records.len() < total {
        let observed: Vec<(PointAssignment, f64)> = records.iter().map(|r| (r.point.clone(), r.value)).collect();
        let n = batch.min(total - records.len());
        let pool = propose_pool(space, &observed, pool_size.max(n), round, seed, config)?;
        if pool.points.is_empty() {
            break;
        }
        for point in pool.points.into_iter().take(n) {
            records.push(evaluate(objective, round, point)?);
        }
        round += 1;
    }
    Ok(records)
}

pub fn run_random(space: &SearchSpace, objective: &dyn Objective, total: usize, batch: usize, seed: u64) -> Result<Vec<EvalRecord>> {
    let mut state = RandomSearchState::new(derive_seed(seed, streams::RANDOM_SEARCH));
    let batch = batch.max(1);
    let mut records = Vec::with_capacity(total);
    while records.len() < total {
        let round = records.len() / batch;
        let n = batch.min(total - records.len());
        for point in state.ask(space, n) {
            records.push(evaluate(objective, round, point)?);
        }
    }
    Ok(records)
}

/// Runs whole generations and keeps the first `total` evaluations; the
/// `round` of a record is its batch index at `batch` evaluations per batch.
pub fn run_cmaes(space: &SearchSpace, objective: &dyn Objective, total: usize, batch: usize, seed: u64) -> Result<Vec<EvalRecord>> {
    let mut cma = CmaOptimizer::new(space, derive_seed(seed, streams::CMA_ES))?;
    let batch = batch.max(1);
    let mut records = Vec::with_capacity(total);
    while records.len() < total {
        let population = cma.ask(space)?;
        let mut encoded = Vec::with_capacity(population.len());
        let mut values = Vec::with_capacity(population.len());
        for (x, point) in population {
            let value = objective.evaluate(&point)?;
            if records.len() < total {
                records.push(EvalRecord {
                    round: records.len() / batch,
                    point,
                    value,
                });
            }
            encoded.push(x);
            values.push(value);
        }
        cma.tell(&encoded, &values)?;
    }
    Ok(records)
}

/// Runs a comparison method that needs no language model.
pub fn run_method(
    method: Method,
    space: &SearchSpace,
    objective: &dyn Objective,
    total: usize,
    batch: usize,
    pool_size: usize,
    seed: u64,
) -> Result<Vec<EvalRecord>> {
    match method {
        Method::VanillaBo => run_bo(space, objective, total, batch, pool_size, seed, &AcquisitionConfig::qlogei()),
        Method::AnalyticEi => run_bo(space, objective, total, batch, pool_size, seed, &AcquisitionConfig::analytic()),
        Method::CmaEs => run_cmaes(space, objective, total, batch, seed),
        Method::Random => run_random(space, objective, total, batch, seed),
        Method::ReasoningBo => Err(Error::Config("reasoning-bo needs the reasoning loop".into())),
    }
}
