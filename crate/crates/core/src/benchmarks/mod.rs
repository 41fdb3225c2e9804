//! Objective functions: synthetic test functions, tabular lookups and
//! external evaluators, behind one [`Objective`] trait.

mod external;
mod synthetic;
mod tabular;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use external::{external_eval, ExternalEvaluatorSpec, PROTOCOL_VERSION};
pub use synthetic::{
    ackley_raw, eval_ackley, eval_hartmann6, eval_levy, eval_rosenbrock, hartmann6_raw, levy_raw, rosenbrock_raw,
    SyntheticFunction, SyntheticKind, ACKLEY_BOUND, HARTMANN6_MINIMIZER, HARTMANN6_MINIMUM,
};
pub use tabular::{load_tabular, TabularBenchmark};

use crate::compass::ExperimentCompass;
use crate::error::{Error, Result};
use crate::space::{ParameterKind, PointAssignment, SearchSpace};

pub trait Objective: Send + Sync {
    fn evaluate(&self, point: &PointAssignment) -> Result<f64>;
}

impl Objective for SyntheticFunction {
    fn evaluate(&self, point: &PointAssignment) -> Result<f64> {
        self.evaluate_point(point)
    }
}

impl Objective for TabularBenchmark {
    fn evaluate(&self, point: &PointAssignment) -> Result<f64> {
        self.lookup(point)
    }
}

impl Objective for ExternalEvaluatorSpec {
    fn evaluate(&self, point: &PointAssignment) -> Result<f64> {
        external_eval(self, point)
    }
}

/// How a campaign's objective is computed, as written under the compass's
/// optional `evaluator` key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EvaluatorSpec {
    Synthetic {
        function: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dim: Option<usize>,
    },
    /// CSV lookup; relative paths resolve against the compass file.
    Table { path: PathBuf },
    Command {
        program: String,
        #[serde(default)]
        args: Vec<String>,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
    Http {
        url: String,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
}

/// A compass read from disk together with its evaluator entry.
#[derive(Debug, Clone, PartialEq)]
pub struct CompassFile {
    pub compass: ExperimentCompass,
    pub evaluator: Option<EvaluatorSpec>,
    /// Directory of the file; relative evaluator paths resolve here.
    pub base_dir: PathBuf,
}

impl CompassFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let compass = ExperimentCompass::from_json(&text)?;
        let raw: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let evaluator = match raw.get("evaluator") {
            Some(v) => Some(
                serde_json::from_value(v.clone()).map_err(|e| Error::Config(format!("evaluator entry: {e}")))?,
            ),
            None => None,
        };
        Ok(CompassFile {
            compass,
            evaluator,
            base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        })
    }

    /// Best achievable value when the evaluator knows it: the global
    /// optimum of a synthetic function or the best row of a table.
    pub fn known_optimum(&self) -> Option<f64> {
        match self.evaluator.as_ref()? {
            EvaluatorSpec::Synthetic { function, dim } => SyntheticFunction::by_name(function, *dim).ok().map(|f| f.optimum_value),
            EvaluatorSpec::Table { path } => {
                let full = if path.is_absolute() { path.clone() } else { self.base_dir.join(path) };
                TabularBenchmark::from_path(&full, &self.compass.space).ok()?.optimum()
            }
            _ => None,
        }
    }

    pub fn objective(&self) -> Result<Box<dyn Objective>> {
        match &self.evaluator {
            Some(spec) => spec.build(&self.compass.space, &self.base_dir),
            None => Err(Error::Config("compass has no evaluator entry".into())),
        }
    }
}

fn default_timeout_ms() -> u64 {
    60_000
}

impl EvaluatorSpec {
    pub fn build(&self, space: &SearchSpace, base_dir: &Path) -> Result<Box<dyn Objective>> {
        match self {
            EvaluatorSpec::Synthetic { function, dim } => {
                let f = SyntheticFunction::by_name(function, *dim)?;
                let bounds = space
                    .parameters
                    .iter()
                    .map(|p| match p.kind {
                        ParameterKind::Continuous { bounds: [lo, hi] } => Ok((lo, hi)),
                        _ => Err(Error::Config(format!("{} must be continuous for {function}", p.name))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Box::new(f.with_bounds(bounds)?))
            }
            EvaluatorSpec::Table { path } => {
                let full = if path.is_absolute() { path.clone() } else { base_dir.join(path) };
                Ok(Box::new(TabularBenchmark::from_path(&full, space)?))
            }
            EvaluatorSpec::Command {
                program,
                args,
                timeout_ms,
            } => Ok(Box::new(ExternalEvaluatorSpec::Command {
                program: program.clone(),
                args: args.clone(),
                timeout_ms: *timeout_ms,
            })),
            EvaluatorSpec::Http { url, timeout_ms } => Ok(Box::new(ExternalEvaluatorSpec::Http {
                url: url.clone(),
                timeout_ms: *timeout_ms,
            })),
        }
    }
}
