use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::space::{ParamValue, ParameterKind, PointAssignment, SearchSpace};

/// An exhaustive lookup table over a discrete space. Lookup is exact and
/// case-sensitive; there is no interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularBenchmark {
    pub space: SearchSpace,
    pub objective_name: String,
    rows: BTreeMap<String, (PointAssignment, f64)>,
}

impl TabularBenchmark {
    pub fn from_path(path: &Path, space: &SearchSpace) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::TableLoad(format!("{}: {e}", path.display())))?;
        load_tabular(file, space)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = (&PointAssignment, f64)> {
        self.rows.values().map(|(p, v)| (p, *v))
    }

    pub fn lookup(&self, point: &PointAssignment) -> Result<f64> {
        self.space.validate(point)?;
        self.rows
            .get(&point.key())
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::MissingCombination(point.to_string()))
    }

    /// Best value in the table under the space's direction.
    pub fn optimum(&self) -> Option<f64> {
        let dir = self.space.direction;
        self.rows
            .values()
            .map(|(_, v)| *v)
            .reduce(|a, b| if dir.better(b, a) { b } else { a })
    }
}

/// Reads a CSV whose header names every parameter of `space` plus its
/// objective column, in any order.
pub fn load_tabular<R: Read>(source: R, space: &SearchSpace) -> Result<TabularBenchmark> {
    if space.has_continuous() {
        return Err(Error::TableLoad("tabular benchmarks need a fully discrete space".into()));
    }
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let header = reader
        .headers()
        .map_err(|e| Error::TableLoad(format!("header: {e}")))?
        .clone();
    let objective = &space.objective_name;
    for column in header.iter() {
        if column != objective && space.parameter(column).is_none() {
            return Err(Error::TableLoad(format!("unknown column {column}")));
        }
    }
    let position = |name: &str| {
        header
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::TableLoad(format!("missing column {name}")))
    };
    let objective_at = position(objective)?;
    let columns = space
        .parameters
        .iter()
        .map(|p| position(&p.name).map(|i| (p, i)))
        .collect::<Result<Vec<_>>>()?;

    let mut rows: BTreeMap<String, (PointAssignment, f64)> = BTreeMap::new();
    let mut conflicts = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let row = line + 2;
        let record = record.map_err(|e| Error::TableLoad(format!("row {row}: {e}")))?;
        let mut point = PointAssignment::new();
        for (p, i) in &columns {
            let raw = record.get(*i).unwrap_or("");
            let value = match &p.kind {
                ParameterKind::Ordinal { .. } => ParamValue::Real(raw.parse().map_err(|_| {
                    Error::TableLoad(format!("row {row}: {} value '{raw}' is not a number", p.name))
                })?),
                _ => ParamValue::Choice(raw.to_string()),
            };
            point = point.with(&p.name, value);
        }
        space
            .validate(&point)
            .map_err(|e| Error::TableLoad(format!("row {row}: {e}")))?;
        let raw = record.get(objective_at).unwrap_or("");
        let value: f64 = raw
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| Error::TableLoad(format!("row {row}: objective '{raw}' is not a finite number")))?;
        let key = point.key();
        match rows.get(&key) {
            Some((_, existing)) if *existing != value => conflicts.push(key),
            Some(_) => {}
            None => {
                rows.insert(key, (point, value));
            }
        }
    }
    if !conflicts.is_empty() {
        conflicts.dedup();
        return Err(Error::TableLoad(format!(
            "conflicting duplicate rows: {}",
            conflicts.join("; ")
        )));
    }
    if rows.is_empty() {
        return Err(Error::TableLoad("table has no rows".into()));
    }
    Ok(TabularBenchmark {
        space: space.clone(),
        objective_name: objective.clone(),
        rows,
    })
}
