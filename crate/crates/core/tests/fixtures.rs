use std::path::PathBuf;

use lodestar_core::benchmarks::{CompassFile, EvaluatorSpec, TabularBenchmark};
use lodestar_core::compass::validate_compass;
use lodestar_core::space::{Direction, ParameterKind, ParameterSpec, PointAssignment, SearchSpace};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

#[test]
fn small_table_lookup() {
    let space = SearchSpace::new(
        vec![
            ParameterSpec::categorical("electrophile", &["Sulfone", "Iodine", "Bromine"]),
            ParameterSpec::categorical("base", &["CsF", "KOH"]),
        ],
        "yield",
        Direction::Maximize,
    );
    let table = TabularBenchmark::from_path(&fixtures().join("suzuki/suzuki_small.csv"), &space).unwrap();
    assert_eq!(table.len(), 6);
    let p = PointAssignment::new().choice("electrophile", "Iodine").choice("base", "CsF");
    assert_eq!(table.lookup(&p).unwrap(), 66.0);
    assert_eq!(table.optimum(), Some(71.5));
}

#[test]
fn suzuki_compass_builds_its_table() {
    let file = CompassFile::load(&fixtures().join("suzuki/compass.json")).unwrap();
    assert!(validate_compass(&file.compass).is_empty());
    assert!(matches!(file.evaluator, Some(EvaluatorSpec::Table { .. })));
    let table = TabularBenchmark::from_path(&file.base_dir.join("suzuki_grid.csv"), &file.compass.space).unwrap();
    assert_eq!(table.len(), 72);
    assert_eq!(table.optimum(), Some(88.0));
    assert_eq!(file.known_optimum(), Some(88.0));
    let objective = file.objective().unwrap();
    let (p, v) = table.rows().next().map(|(p, v)| (p.clone(), v)).unwrap();
    assert_eq!(objective.evaluate(&p).unwrap(), v);
}

#[test]
fn benchmark_compasses_are_anonymous_and_valid() {
    let names = ["levy", "hartmann", "ackley", "rosenbrock"];
    for entry in std::fs::read_dir(fixtures().join("benchmarks")).unwrap() {
        let path = entry.unwrap().path();
        let file = CompassFile::load(&path).unwrap();
        assert!(validate_compass(&file.compass).is_empty(), "{}", path.display());
        assert_eq!(file.compass.space.direction, Direction::Minimize);
        // what a language model would see
        let shown = file.compass.to_json_pretty().to_lowercase();
        for n in names {
            assert!(!shown.contains(n), "{} reveals {n}", path.display());
        }
        assert!(matches!(file.evaluator, Some(EvaluatorSpec::Synthetic { .. })));
        let objective = file.objective().unwrap();
        let centre: PointAssignment = file
            .compass
            .space
            .parameters
            .iter()
            .fold(PointAssignment::new(), |p, s| match s.kind {
                ParameterKind::Continuous { bounds: [lo, hi] } => p.real(&s.name, 0.5 * (lo + hi)),
                _ => panic!("benchmark parameters are continuous"),
            });
        assert!(objective.evaluate(&centre).unwrap().is_finite());
    }
}
