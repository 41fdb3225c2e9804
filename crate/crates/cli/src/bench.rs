//! `lodestar bench`: methods × benchmarks × seeds, then one metrics report
//! per benchmark.
//!
//! The suite is a TOML file:
//!
//! ```toml
//! methods = ["vanilla-bo", "random"]
//! seeds = "0..9"
//! budget = 30            # optional, defaults to each compass budget
//!
//! [[benchmarks]]
//! name = "hartmann6"
//! compass = "fixtures/benchmarks/hartmann6.json"
//!
//! [backend]              # optional, used by reasoning-bo
//! scripted = "transcript.json"
//! ```
//!
//! Relative paths resolve against the suite file. Output goes to
//! `<out>/<benchmark>/<method>/` plus `<out>/<benchmark>/report.{md,csv}`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Deserialize;

use lodestar_core::bo::Method;
use lodestar_core::metrics::{compute_comparison, render_report, ReportFormat, TrajectorySet, DEFAULT_CVAR_LEVELS, DEFAULT_IMP_HORIZONS};

use crate::options::{parse_seeds, BackendOptions};
use crate::run::{read_trajectory, run_seed, trajectory_path, Problem};

/// Written into a cell directory once all of its seeds finished.
pub const COMPLETE_MARKER: &str = "complete";

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Seeds {
    List(Vec<u64>),
    Text(String),
}

#[derive(Debug, Clone, Deserialize)]
pub struct BenchmarkEntry {
    pub name: String,
    pub compass: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
struct SuiteFile {
    methods: Vec<String>,
    seeds: Seeds,
    #[serde(default)]
    budget: Option<usize>,
    benchmarks: Vec<BenchmarkEntry>,
    #[serde(default)]
    backend: BackendOptions,
}

#[derive(Debug, Clone)]
pub struct Suite {
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub budget: Option<usize>,
    pub benchmarks: Vec<BenchmarkEntry>,
    pub backend: BackendOptions,
}

impl Suite {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading suite {}", path.display()))?;
        let raw: SuiteFile = toml::from_str(&text).with_context(|| format!("parsing suite {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let methods = raw
            .methods
            .iter()
            .map(|m| Method::parse(m))
            .collect::<Result<Vec<_>, _>>()?;
        let seeds = match raw.seeds {
            Seeds::List(s) => s,
            Seeds::Text(t) => parse_seeds(&t).map_err(anyhow::Error::msg)?,
        };
        let mut backend = raw.backend;
        backend.scripted = backend.scripted.map(|p| base.join(p));
        let benchmarks = raw
            .benchmarks
            .into_iter()
            .map(|b| BenchmarkEntry {
                compass: base.join(&b.compass),
                name: b.name,
            })
            .collect();
        Ok(Suite {
            methods,
            seeds,
            budget: raw.budget,
            benchmarks,
            backend,
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct BenchSummary {
    pub cells_run: usize,
    pub cells_skipped: usize,
    pub reports: Vec<PathBuf>,
}

/// Validates every member before running anything; then runs each
/// (benchmark, method) cell and writes the reports.
pub fn cmd_bench(suite: &Suite, out: &Path, resume: bool) -> anyhow::Result<BenchSummary> {
    if suite.methods.is_empty() || suite.seeds.is_empty() || suite.benchmarks.is_empty() {
        anyhow::bail!("suite needs at least one method, seed and benchmark");
    }
    let problems = suite
        .benchmarks
        .iter()
        .map(|b| Problem::load(&b.compass).with_context(|| format!("benchmark {}", b.name)))
        .collect::<anyhow::Result<Vec<_>>>()?;
    if suite.methods.contains(&Method::ReasoningBo) {
        suite.backend.build().context("reasoning-bo backend")?;
    }

    let mut summary = BenchSummary::default();
    for (entry, problem) in suite.benchmarks.iter().zip(&problems) {
        let budget = suite.budget.unwrap_or(problem.file.compass.budget.total_evaluations());
        for &method in &suite.methods {
            let cell = out.join(&entry.name).join(method.label());
            let marker = cell.join(COMPLETE_MARKER);
            if resume && marker.exists() {
                summary.cells_skipped += 1;
                continue;
            }
            fs::create_dir_all(&cell).with_context(|| format!("creating {}", cell.display()))?;
            if marker.exists() {
                fs::remove_file(&marker)?;
            }
            for &seed in &suite.seeds {
                eprintln!("{} / {} / seed {seed}", entry.name, method.label());
                run_seed(problem, method, seed, budget, &suite.backend, &cell)?;
            }
            fs::write(&marker, "")?;
            summary.cells_run += 1;
        }
        summary.reports.extend(write_reports(suite, entry, problem, out)?);
    }
    Ok(summary)
}

fn write_reports(suite: &Suite, entry: &BenchmarkEntry, problem: &Problem, out: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let compass = &problem.file.compass;
    let optimum = problem.file.known_optimum();
    let mut sets = Vec::new();
    for &method in &suite.methods {
        let cell = out.join(&entry.name).join(method.label());
        let values = suite
            .seeds
            .iter()
            .map(|&seed| {
                read_trajectory(&trajectory_path(&cell, method, seed)).map(|rows| rows.into_iter().map(|r| r.value).collect())
            })
            .collect::<anyhow::Result<Vec<Vec<f64>>>>()?;
        let mut set = TrajectorySet::new(values, compass.space.direction, compass.budget.candidates_per_round.max(1));
        if let Some(f) = optimum {
            set = set.with_optimum(f);
        }
        sets.push((method.label().to_string(), set));
    }
    let reports = compute_comparison(&sets, &DEFAULT_CVAR_LEVELS, &DEFAULT_IMP_HORIZONS)
        .with_context(|| format!("metrics for {}", entry.name))?;
    let dir = out.join(&entry.name);
    let md = dir.join("report.md");
    let csv = dir.join("report.csv");
    fs::write(&md, render_report(&reports, ReportFormat::Markdown)?)?;
    fs::write(&csv, render_report(&reports, ReportFormat::Csv)?)?;
    Ok(vec![md, csv])
}
