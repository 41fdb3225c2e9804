//! Multi-seed trajectory metrics and the comparison table.
//!
//! With `b[s][t]` the best-so-far of seed `s` after batch `t` (T batches,
//! S seeds), for a maximized objective:
//!
//! - Std: population standard deviation of the final bests `b[s][T]`
//! - CV: Std / mean of the final bests, undefined unless the mean is positive
//! - Log Regret: `ln(mean_s Σ_t (f* − b[s][t]))`, needs the optimum `f*`
//! - Log AUC: `ln(mean_s Σ_t (b[s][t] − L))`, `L` a lower reference
//! - CVaR@n: mean of the worst `⌈n·S⌉` final bests
//! - IMP@α: mean best-so-far after batch α
//!
//! For minimization the differences in Log Regret and Log AUC flip sign, the
//! reference `L` becomes an upper one and "worst" means largest.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::campaign::best_so_far;
use crate::error::{Error, Result};
use crate::space::Direction;

pub const DEFAULT_CVAR_LEVELS: [f64; 3] = [0.1, 0.3, 0.5];
pub const DEFAULT_IMP_HORIZONS: [usize; 3] = [1, 3, 5];
/// Offset applied to the default Log AUC reference.
pub const AUC_REFERENCE_OFFSET: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricValue {
    Value(f64),
    /// A required input (optimum, horizon) is missing.
    Unavailable,
    /// The formula has no finite value for this data.
    Undefined,
}

impl MetricValue {
    pub fn value(self) -> Option<f64> {
        match self {
            MetricValue::Value(v) => Some(v),
            _ => None,
        }
    }

    fn log_of(x: f64) -> Self {
        if x > 0.0 && x.is_finite() {
            MetricValue::Value(x.ln())
        } else {
            MetricValue::Undefined
        }
    }
}

impl fmt::Display for MetricValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricValue::Value(v) => write!(f, "{v}"),
            _ => write!(f, "—"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySet {
    /// Raw per-evaluation values, one ordered list per seed.
    pub values: Vec<Vec<f64>>,
    pub direction: Direction,
    /// Evaluations per batch; a shorter final batch takes the remainder.
    pub batch_size: usize,
    pub optimum: Option<f64>,
    pub reference: Option<f64>,
}

impl TrajectorySet {
    pub fn new(values: Vec<Vec<f64>>, direction: Direction, batch_size: usize) -> Self {
        TrajectorySet {
            values,
            direction,
            batch_size,
            optimum: None,
            reference: None,
        }
    }

    pub fn with_optimum(mut self, optimum: f64) -> Self {
        self.optimum = Some(optimum);
        self
    }

    pub fn with_reference(mut self, reference: f64) -> Self {
        self.reference = Some(reference);
        self
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.values.is_empty() {
            out.push("at least one seed required".to_string());
        }
        if self.values.iter().any(Vec::is_empty) {
            out.push("empty trajectory".to_string());
        }
        if self.values.windows(2).any(|w| w[0].len() != w[1].len()) {
            out.push("ragged trajectories".to_string());
        }
        if self.values.iter().flatten().any(|v| !v.is_finite()) {
            out.push("non-finite value".to_string());
        }
        if self.batch_size == 0 {
            out.push("batch_size must be positive".to_string());
        }
        out
    }

    /// `b[s][t]`: best-so-far at the end of each batch.
    pub fn batch_bests(&self) -> Result<Vec<Vec<f64>>> {
        let problems = self.violations();
        if !problems.is_empty() {
            return Err(Error::Config(problems.join("; ")));
        }
        self.values
            .iter()
            .map(|seed| {
                let running = best_so_far(seed, self.direction)?;
                let mut out: Vec<f64> = running
                    .iter()
                    .skip(self.batch_size - 1)
                    .step_by(self.batch_size)
                    .copied()
                    .collect();
                if running.len() % self.batch_size != 0 {
                    out.push(*running.last().expect("nonempty"));
                }
                Ok(out)
            })
            .collect()
    }

    fn extreme(&self) -> f64 {
        let all = self.values.iter().flatten().copied();
        match self.direction {
            Direction::Maximize => all.fold(f64::INFINITY, f64::min),
            Direction::Minimize => all.fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Default Log AUC reference: just past the worst value observed.
    pub fn default_reference(&self) -> f64 {
        let worst = self.extreme();
        match self.direction {
            Direction::Maximize => worst - AUC_REFERENCE_OFFSET,
            Direction::Minimize => worst + AUC_REFERENCE_OFFSET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub direction: Direction,
    pub cv: MetricValue,
    pub std: MetricValue,
    pub log_regret: MetricValue,
    pub log_auc: MetricValue,
    pub cvar: Vec<(f64, MetricValue)>,
    pub imp: Vec<(usize, MetricValue)>,
}

/// Arithmetic mean, summed in sorted order so it does not depend on the
/// order of `xs`.
pub fn mean(xs: &[f64]) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.iter().sum::<f64>() / xs.len() as f64
}

/// Coefficient of variation of `values`; errors unless the mean is positive.
pub fn coefficient_of_variation(values: &[f64]) -> Result<f64> {
    let m = mean(values);
    if !(m > 0.0) {
        return Err(Error::UndefinedMetric(format!("CV needs a positive mean, got {m}")));
    }
    Ok(population_std(values) / m)
}

pub fn population_std(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Mean of the worst `⌈level·n⌉` values under `direction`.
pub fn cvar(values: &[f64], level: f64, direction: Direction) -> Result<f64> {
    if values.is_empty() || !(level > 0.0 && level <= 1.0) {
        return Err(Error::Config(format!("cvar needs values and level in (0, 1], got {level}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if direction == Direction::Minimize {
        sorted.reverse();
    }
    let k = ((level * values.len() as f64).ceil() as usize).clamp(1, values.len());
    Ok(mean(&sorted[..k]))
}

pub fn compute_metrics(set: &TrajectorySet, cvar_levels: &[f64], imp_horizons: &[usize]) -> Result<MetricReport> {
    let bests = set.batch_bests()?;
    let finals: Vec<f64> = bests.iter().map(|b| *b.last().expect("nonempty")).collect();
    let sign = set.direction.sign();
    let std = population_std(&finals);
    let cv = match coefficient_of_variation(&finals) {
        Ok(v) => MetricValue::Value(v),
        Err(_) => MetricValue::Undefined,
    };
    let per_seed_sum = |f: &dyn Fn(f64) -> f64| mean(&bests.iter().map(|b| b.iter().map(|v| f(*v)).sum()).collect::<Vec<f64>>());
    let log_regret = match set.optimum {
        Some(opt) => MetricValue::log_of(per_seed_sum(&|b| sign * (opt - b))),
        None => MetricValue::Unavailable,
    };
    let reference = set.reference.unwrap_or_else(|| set.default_reference());
    let log_auc = MetricValue::log_of(per_seed_sum(&|b| sign * (b - reference)));
    let cvar = cvar_levels
        .iter()
        .map(|&level| {
            let v = cvar(&finals, level, set.direction)
                .map(MetricValue::Value)
                .unwrap_or(MetricValue::Undefined);
            (level, v)
        })
        .collect();
    let batches = bests[0].len();
    let imp = imp_horizons
        .iter()
        .map(|&h| {
            let v = if h >= 1 && h <= batches {
                MetricValue::Value(mean(&bests.iter().map(|b| b[h - 1]).collect::<Vec<f64>>()))
            } else {
                MetricValue::Unavailable
            };
            (h, v)
        })
        .collect();
    Ok(MetricReport {
        direction: set.direction,
        cv,
        std: MetricValue::Value(std),
        log_regret,
        log_auc,
        cvar,
        imp,
    })
}

/// Computes reports for several methods on one problem. Sets without an
/// explicit reference share the most extreme reference among them, so Log
/// AUC is comparable across methods.
pub fn compute_comparison(
    sets: &[(String, TrajectorySet)],
    cvar_levels: &[f64],
    imp_horizons: &[usize],
) -> Result<Vec<(String, MetricReport)>> {
    let shared = sets
        .iter()
        .map(|(_, s)| (s.direction, s.default_reference()))
        .reduce(|a, b| match a.0 {
            Direction::Maximize => (a.0, a.1.min(b.1)),
            Direction::Minimize => (a.0, a.1.max(b.1)),
        });
    sets.iter()
        .map(|(name, set)| {
            let mut set = set.clone();
            if set.reference.is_none() {
                set.reference = shared.map(|s| s.1);
            }
            compute_metrics(&set, cvar_levels, imp_horizons).map(|r| (name.clone(), r))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

/// Whether a larger value is better in each column.
fn higher_is_better(column: usize, direction: Direction) -> bool {
    match column {
        0..=2 => false,
        3 => true,
        _ => direction == Direction::Maximize,
    }
}

impl MetricReport {
    pub fn column_names(&self) -> Vec<String> {
        let mut out = vec!["CV".into(), "Std".into(), "Log Regret".into(), "Log AUC".into()];
        out.extend(self.cvar.iter().map(|(l, _)| format!("CVaR@{l}")));
        out.extend(self.imp.iter().map(|(h, _)| format!("IMP@{h}")));
        out
    }

    pub fn columns(&self) -> Vec<MetricValue> {
        let mut out = vec![self.cv, self.std, self.log_regret, self.log_auc];
        out.extend(self.cvar.iter().map(|(_, v)| *v));
        out.extend(self.imp.iter().map(|(_, v)| *v));
        out
    }
}

fn best_rows(reports: &[(String, MetricReport)], column: usize) -> Vec<bool> {
    let direction = reports[0].1.direction;
    let values: Vec<Option<f64>> = reports.iter().map(|(_, r)| r.columns()[column].value()).collect();
    let best = values.iter().flatten().copied().reduce(|a, b| {
        if higher_is_better(column, direction) {
            a.max(b)
        } else {
            a.min(b)
        }
    });
    values.iter().map(|v| v.is_some() && *v == best).collect()
}

fn csv_field(text: &str) -> String {
    if text.contains([',', '"', '\n']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

/// One row per method, in the given order. Markdown marks the best value in
/// each column in bold; missing values render as "—".
pub fn render_report(reports: &[(String, MetricReport)], format: ReportFormat) -> Result<String> {
    let Some((_, first)) = reports.first() else {
        return Err(Error::Config("report needs at least one method".into()));
    };
    let names = first.column_names();
    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            out.push_str("method,");
            out.push_str(&names.join(","));
            out.push('\n');
            for (method, report) in reports {
                let cells: Vec<String> = report.columns().iter().map(|v| v.to_string()).collect();
                out.push_str(&csv_field(method));
                out.push(',');
                out.push_str(&cells.join(","));
                out.push('\n');
            }
        }
        ReportFormat::Markdown => {
            let marks: Vec<Vec<bool>> = (0..names.len()).map(|c| best_rows(reports, c)).collect();
            out.push_str(&format!("| Method | {} |\n", names.join(" | ")));
            out.push_str(&format!("|---|{}\n", "---|".repeat(names.len())));
            for (row, (method, report)) in reports.iter().enumerate() {
                let cells: Vec<String> = report
                    .columns()
                    .iter()
                    .enumerate()
                    .map(|(c, v)| match v {
                        MetricValue::Value(x) if marks[c][row] => format!("**{x:.4}**"),
                        MetricValue::Value(x) => format!("{x:.4}"),
                        other => other.to_string(),
                    })
                    .collect();
                out.push_str(&format!("| {} | {} |\n", method, cells.join(" | ")));
            }
        }
    }
    Ok(out)
}

/// Reads a CSV produced by [`render_report`] back into per-method values.
pub fn parse_report_csv(text: &str) -> Result<Vec<(String, Vec<Option<f64>>)>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Config(format!("report csv: {e}")))?;
        let method = record.get(0).unwrap_or_default().to_string();
        let values = record
            .iter()
            .skip(1)
            .map(|cell| if cell == "—" { Ok(None) } else { cell.parse().map(Some) })
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Config(format!("report csv: {e}")))?;
        out.push((method, values));
    }
    Ok(out)
}
