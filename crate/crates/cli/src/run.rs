//! `lodestar run`: one campaign per seed, each leaving a trajectory CSV and
//! an event log.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use lodestar_agent::{Campaign, CampaignConfig, Clock, JsonlSink, Llm, PromptBundle};
use lodestar_core::acquisition::AcquisitionConfig;
use lodestar_core::benchmarks::{CompassFile, Objective};
use lodestar_core::bo::{run_method, Method};
use lodestar_core::campaign::TrialOrigin;
use lodestar_core::compass::{validate_compass, ExperimentCompass};
use lodestar_core::space::PointAssignment;

use crate::options::BackendOptions;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub compass: PathBuf,
    pub method: Method,
    pub seeds: Vec<u64>,
    /// Total evaluations; defaults to the compass budget.
    pub budget: Option<usize>,
    pub backend: BackendOptions,
    pub out: PathBuf,
}

/// One row of a trajectory CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub seed: u64,
    pub round: usize,
    pub trial: String,
    pub value: f64,
    pub best_so_far: f64,
}

#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    pub trajectory: PathBuf,
    pub events: PathBuf,
    pub rows: usize,
    pub flags: Vec<String>,
}

pub fn trajectory_path(out: &Path, method: Method, seed: u64) -> PathBuf {
    out.join(format!("{}_seed{seed}.csv", method.label()))
}

pub fn events_path(out: &Path, method: Method, seed: u64) -> PathBuf {
    out.join(format!("{}_seed{seed}.events.jsonl", method.label()))
}

/// A loaded, validated compass with its objective.
pub struct Problem {
    pub file: CompassFile,
    pub objective: Box<dyn Objective>,
}

impl Problem {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let file = CompassFile::load(path).with_context(|| format!("loading compass {}", path.display()))?;
        let problems = validate_compass(&file.compass);
        if !problems.is_empty() {
            anyhow::bail!("compass {}: {}", path.display(), problems.join("; "));
        }
        let objective = file.objective().with_context(|| format!("building the evaluator of {}", path.display()))?;
        Ok(Problem { file, objective })
    }
}

pub fn cmd_run(config: &RunConfig) -> anyhow::Result<Vec<SeedOutcome>> {
    if config.seeds.is_empty() {
        anyhow::bail!("at least one seed required");
    }
    let problem = Problem::load(&config.compass)?;
    let budget = config.budget.unwrap_or(problem.file.compass.budget.total_evaluations());
    fs::create_dir_all(&config.out).with_context(|| format!("creating {}", config.out.display()))?;
    config
        .seeds
        .iter()
        .map(|&seed| run_seed(&problem, config.method, seed, budget, &config.backend, &config.out))
        .collect()
}

/// Records every evaluation, including failed ones, in call order.
struct Recorder<'a> {
    inner: &'a dyn Objective,
    log: Mutex<Vec<(PointAssignment, Result<f64, String>)>>,
}

impl Objective for Recorder<'_> {
    fn evaluate(&self, point: &PointAssignment) -> lodestar_core::Result<f64> {
        let result = self.inner.evaluate(point);
        let entry = match &result {
            Ok(v) => Ok(*v),
            Err(e) => Err(e.to_string()),
        };
        self.log.lock().expect("recorder lock").push((point.clone(), entry));
        result
    }
}

pub fn run_seed(
    problem: &Problem,
    method: Method,
    seed: u64,
    budget: usize,
    backend: &BackendOptions,
    out: &Path,
) -> anyhow::Result<SeedOutcome> {
    let compass = &problem.file.compass;
    let events = events_path(out, method, seed);
    if events.exists() {
        fs::remove_file(&events).with_context(|| format!("replacing {}", events.display()))?;
    }
    let sink = JsonlSink::open(&events).with_context(|| format!("opening {}", events.display()))?;
    let mut config = CampaignConfig::for_compass(compass, seed);
    config.budget = budget;
    if method == Method::AnalyticEi {
        config.acquisition = AcquisitionConfig::analytic();
    }
    let id = format!("{}-seed{seed}", method.label());
    let mut campaign = Campaign::create(&id, compass.clone(), config, Box::new(sink), Clock::logical())?;

    match method {
        Method::ReasoningBo | Method::VanillaBo | Method::AnalyticEi => {
            let chat = if method == Method::ReasoningBo { backend.build()? } else { None };
            let prompts = PromptBundle::default();
            let llm = chat.as_deref().map(|backend| Llm {
                backend,
                prompts: &prompts,
            });
            campaign.run_to_completion(llm, problem.objective.as_ref())?;
        }
        Method::CmaEs | Method::Random => {
            replay_baseline(&mut campaign, compass, method, seed, budget, problem.objective.as_ref())?;
        }
    }

    let rows: Vec<TrajectoryRow> = campaign
        .trajectory()
        .into_iter()
        .map(|p| TrajectoryRow {
            seed,
            round: p.round,
            trial: p.trial_id,
            value: p.value,
            best_so_far: p.best_so_far,
        })
        .collect();
    let path = trajectory_path(out, method, seed);
    write_trajectory(&path, &rows)?;
    Ok(SeedOutcome {
        seed,
        trajectory: path,
        events,
        rows: rows.len(),
        flags: campaign.flags(),
    })
}

/// Runs a baseline that picks its own points and records its evaluations
/// as campaign rounds. An evaluator failure ends the run at that point.
fn replay_baseline(
    campaign: &mut Campaign,
    compass: &ExperimentCompass,
    method: Method,
    seed: u64,
    budget: usize,
    objective: &dyn Objective,
) -> anyhow::Result<()> {
    let batch = compass.budget.candidates_per_round.max(1);
    let recorder = Recorder {
        inner: objective,
        log: Mutex::new(Vec::new()),
    };
    let result = run_method(method, &compass.space, &recorder, budget, batch, compass.budget.bo_pool_size, seed);
    let log = recorder.log.into_inner().expect("recorder lock");
    let failed = matches!(log.last(), Some((_, Err(_))));
    if let Err(e) = result {
        if !failed {
            return Err(e.into());
        }
    }
    // CMA-ES evaluates whole generations; keep the budgeted prefix
    let log: Vec<_> = log.into_iter().take(budget).collect();
    for chunk in log.chunks(batch) {
        let points = chunk.iter().map(|(p, _)| p.clone()).collect();
        let s = campaign.propose_points(points, TrialOrigin::Manual)?;
        for (trial, (_, outcome)) in s.trials.iter().zip(chunk) {
            match outcome {
                Ok(v) if v.is_finite() => {
                    campaign.observe(&trial.id, *v)?;
                }
                Ok(v) => campaign.fail(&trial.id, &format!("non-finite value {v}"))?,
                Err(e) => campaign.fail(&trial.id, e)?,
            }
        }
    }
    campaign.finalize(None)?;
    Ok(())
}

pub fn write_trajectory(path: &Path, rows: &[TrajectoryRow]) -> anyhow::Result<()> {
    let mut writer = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for row in rows {
        writer.serialize(row)?;
    }
    if rows.is_empty() {
        writer.write_record(["seed", "round", "trial", "value", "best_so_far"])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_trajectory(path: &Path) -> anyhow::Result<Vec<TrajectoryRow>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    reader
        .deserialize()
        .collect::<Result<Vec<TrajectoryRow>, _>>()
        .with_context(|| format!("parsing {}", path.display()))
}
