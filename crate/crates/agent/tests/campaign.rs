use std::path::PathBuf;

use lodestar_agent::backend::{Capabilities, ChatRequest};
use lodestar_agent::events::{parse_events, read_events, to_jsonl, EventPayload, Outcome};
use lodestar_agent::{
    AgentError, AgentResult, Campaign, CampaignConfig, ChatBackend, Clock, JsonlSink, Llm, NullSink, PromptBundle,
    ScriptedBackend,
};
use lodestar_core::acquisition::AcquisitionConfig;
use lodestar_core::benchmarks::{CompassFile, Objective, SyntheticFunction};
use lodestar_core::bo::run_bo;
use lodestar_core::campaign::TrialOrigin;
use lodestar_core::compass::{Budget, ExperimentCompass};
use lodestar_core::space::PointAssignment;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

struct Unreachable;

impl ChatBackend for Unreachable {
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            structured_output: false,
            model: "none".into(),
        }
    }

    fn complete(&self, _request: &ChatRequest) -> AgentResult<String> {
        Err(AgentError::Backend("connection refused".into()))
    }
}

struct Babbler;

impl ChatBackend for Babbler {
    fn capabilities(&self) -> Capabilities {
        Unreachable.capabilities()
    }

    fn complete(&self, _request: &ChatRequest) -> AgentResult<String> {
        Ok("I am not sure what you mean.".into())
    }
}

fn rosenbrock_compass(rounds: usize) -> (SyntheticFunction, ExperimentCompass) {
    let f = SyntheticFunction::rosenbrock3();
    let mut compass = f.compass();
    compass.budget = Budget {
        rounds,
        candidates_per_round: 3,
        bo_pool_size: 5,
    };
    (f, compass)
}

fn new_campaign(compass: &ExperimentCompass, budget: usize, seed: u64) -> Campaign {
    let mut config = CampaignConfig::for_compass(compass, seed);
    config.budget = budget;
    Campaign::create("c1", compass.clone(), config, Box::new(NullSink), Clock::logical()).unwrap()
}

fn values_and_points(c: &Campaign) -> Vec<(usize, PointAssignment, f64)> {
    c.state()
        .observed()
        .into_iter()
        .map(|(t, v)| (t.round, t.point.clone(), v))
        .collect()
}

#[test]
fn without_backend_matches_plain_bo() {
    let (f, compass) = rosenbrock_compass(3);
    let mut c = new_campaign(&compass, 7, 11);
    c.run_to_completion(None, &f).unwrap();
    let reference = run_bo(&compass.space, &f, 7, 3, 5, 11, &AcquisitionConfig::qlogei()).unwrap();
    let expected: Vec<_> = reference.into_iter().map(|r| (r.round, r.point, r.value)).collect();
    assert_eq!(values_and_points(&c), expected);
    let sizes: Vec<usize> = c.proposals().iter().map(|p| p.trials.len()).collect();
    assert_eq!(sizes, vec![3, 3, 1]);
    assert!(c.flags().is_empty());
}

#[test]
fn dead_or_confused_backend_degrades_to_plain_bo() {
    let (f, compass) = rosenbrock_compass(2);
    let mut plain = new_campaign(&compass, 6, 3);
    plain.run_to_completion(None, &f).unwrap();
    let prompts = PromptBundle::default();
    for backend in [&Unreachable as &dyn ChatBackend, &Babbler] {
        let mut c = new_campaign(&compass, 6, 3);
        let report = c.run_to_completion(Some(Llm { backend, prompts: &prompts }), &f).unwrap();
        assert_eq!(values_and_points(&c), values_and_points(&plain));
        let flags = c.flags();
        assert!(flags.contains(&"init-insights-fallback".to_string()), "{flags:?}");
        assert!(flags.contains(&"selection-fallback".to_string()), "{flags:?}");
        assert!(flags.contains(&"loop-insights-failed".to_string()), "{flags:?}");
        assert!(report.conclusion.contains("1. Key outcomes"));
        assert!(report.conclusion.contains("4. Findings\nNone recorded."));
        assert!(c.state().trials.iter().all(|t| t.origin == TrialOrigin::BoProposed));
    }
}

fn run_suzuki(dir: &std::path::Path) -> (Campaign, usize) {
    let file = CompassFile::load(&fixtures().join("suzuki/compass.json")).unwrap();
    let objective = file.objective().unwrap();
    let backend = ScriptedBackend::from_path(&fixtures().join("suzuki/transcript.json")).unwrap();
    let prompts = PromptBundle::default();
    let config = CampaignConfig::for_compass(&file.compass, 0);
    let sink = JsonlSink::open(&dir.join("events.jsonl")).unwrap();
    let mut c = Campaign::create("suzuki", file.compass.clone(), config, Box::new(sink), Clock::logical()).unwrap();
    c.run_to_completion(
        Some(Llm {
            backend: &backend,
            prompts: &prompts,
        }),
        objective.as_ref(),
    )
    .unwrap();
    (c, backend.consumed())
}

#[test]
fn scripted_suzuki_campaign_is_reproducible_and_replayable() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (first, consumed) = run_suzuki(a.path());
    let (_, _) = run_suzuki(b.path());
    let log_a = std::fs::read(a.path().join("events.jsonl")).unwrap();
    let log_b = std::fs::read(b.path().join("events.jsonl")).unwrap();
    assert_eq!(log_a, log_b);
    assert_eq!(consumed, 32);
    assert!(first.flags().is_empty(), "{:?}", first.flags());

    let state = first.state();
    assert_eq!(state.observations.len(), 30);
    assert!(state.trials[..3].iter().all(|t| t.origin == TrialOrigin::LlmInit));
    assert!(state.trials[3..].iter().all(|t| t.origin == TrialOrigin::LlmSelected));
    assert_eq!(state.insight_history.len(), 10);
    // one compass note plus one per digest
    assert_eq!(first.notes().len(), 10);
    assert!(first.report().unwrap().summary.contains("| h2: DMF beats acetone |"));

    let events = read_events(&a.path().join("events.jsonl")).unwrap();
    let replayed = Campaign::replay(events, Box::new(NullSink), Clock::logical()).unwrap();
    assert_eq!(replayed.snapshot(), first.snapshot());
    assert_eq!(to_jsonl(replayed.events()).into_bytes(), log_a);
}

#[test]
fn ask_tell_contract() {
    let (_, compass) = rosenbrock_compass(3);
    let mut c = new_campaign(&compass, 7, 5);
    let s = c.suggest(None).unwrap();
    assert_eq!(s.trials.len(), 3);
    let events = c.events().len();
    assert_eq!(c.suggest(None).unwrap(), s);
    assert_eq!(c.events().len(), events);

    let id = s.trials[0].id.clone();
    assert!(matches!(c.observe("t9999", 1.0), Err(AgentError::UnknownTrial(_))));
    assert!(matches!(c.observe(&id, f64::NAN), Err(AgentError::InvalidObservation(_))));
    c.observe(&id, 3.0).unwrap();
    assert!(matches!(c.observe(&id, 4.0), Err(AgentError::AlreadyObserved(_))));
    assert_eq!(c.suggest(None).unwrap().trials.len(), 2);

    c.fail(&s.trials[1].id, "instrument offline").unwrap();
    c.observe(&s.trials[2].id, 1.0).unwrap();
    // one failure leaves two observations, enough for the surrogate
    let s2 = c.suggest(None).unwrap();
    assert_eq!((s2.round, s2.trials.len()), (1, 3));
    assert_eq!(c.state().spent(), 3);
}

#[test]
fn empty_budget_is_rejected() {
    let (_, compass) = rosenbrock_compass(3);
    let mut config = CampaignConfig::for_compass(&compass, 0);
    config.budget = 0;
    let err = Campaign::create("c", compass, config, Box::new(NullSink), Clock::logical()).unwrap_err();
    assert!(matches!(err, AgentError::EmptyCampaign(_)));
}

struct FailFirst(SyntheticFunction, std::sync::Mutex<bool>);

impl Objective for FailFirst {
    fn evaluate(&self, point: &PointAssignment) -> lodestar_core::Result<f64> {
        let mut first = self.1.lock().unwrap();
        if !*first {
            *first = true;
            return Err(lodestar_core::Error::Evaluator("sensor fault".into()));
        }
        self.0.evaluate_point(point)
    }
}

#[test]
fn evaluator_failures_spend_budget_but_skip_the_surrogate() {
    let (f, compass) = rosenbrock_compass(3);
    let objective = FailFirst(f, std::sync::Mutex::new(false));
    let mut c = new_campaign(&compass, 9, 2);
    c.run_to_completion(None, &objective).unwrap();
    assert_eq!(c.state().failures.len(), 1);
    assert_eq!(c.state().observations.len(), 8);
    assert_eq!(c.state().spent(), 9);
    assert!(c.state().failures[0].reason.contains("sensor fault"));
}

#[test]
fn replay_rejects_inconsistent_logs() {
    let (f, compass) = rosenbrock_compass(2);
    let mut c = new_campaign(&compass, 3, 1);
    c.run_to_completion(None, &f).unwrap();
    let mut events = c.events().to_vec();
    let dup = events
        .iter()
        .find(|e| matches!(e.payload, EventPayload::ObservationRecorded(Outcome::Observed(_))))
        .cloned()
        .unwrap();
    let mut dup = dup;
    dup.seq = events.len() as u64;
    events.push(dup);
    assert!(Campaign::replay(events.clone(), Box::new(NullSink), Clock::logical()).is_err());
    events.remove(0);
    assert!(Campaign::replay(events, Box::new(NullSink), Clock::logical()).is_err());
}

#[test]
fn resumed_campaign_continues_identically() {
    let (f, compass) = rosenbrock_compass(3);
    let mut whole = new_campaign(&compass, 9, 4);
    whole.run_to_completion(None, &f).unwrap();

    let mut part = new_campaign(&compass, 9, 4);
    for _ in 0..2 {
        for t in part.suggest(None).unwrap().trials {
            let v = f.evaluate_point(&t.point).unwrap();
            part.observe(&t.id, v).unwrap();
        }
    }
    let text = to_jsonl(part.events());
    let mut resumed = Campaign::replay(parse_events(&text).unwrap(), Box::new(NullSink), Clock::logical()).unwrap();
    resumed.run_to_completion(None, &f).unwrap();
    assert_eq!(resumed.snapshot(), whole.snapshot());
    assert_eq!(to_jsonl(resumed.events()), to_jsonl(whole.events()));
}

#[test]
fn campaign_knowledge_comes_from_the_log() {
    let a = tempfile::tempdir().unwrap();
    let (c, _) = run_suzuki(a.path());
    let r = c.knowledge().query_keywords(&["Sulfone".to_string()], 3, 1).unwrap();
    assert!(!r.triples.is_empty());
    let rebuilt = Campaign::replay(c.events().to_vec(), Box::new(NullSink), Clock::logical()).unwrap();
    assert_eq!(
        rebuilt.knowledge().query_keywords(&["Sulfone".to_string()], 3, 2).unwrap(),
        c.knowledge().query_keywords(&["Sulfone".to_string()], 3, 2).unwrap()
    );
}

#[test]
fn externally_chosen_points_open_a_round() {
    let (f, compass) = rosenbrock_compass(2);
    let mut c = new_campaign(&compass, 4, 0);
    let p = PointAssignment::new().real("x1", 0.0).real("x2", 0.0).real("x3", 0.0);
    let s = c.propose_points(vec![p.clone(), p.clone()], TrialOrigin::Manual).unwrap();
    assert_eq!((s.round, s.trials.len()), (0, 2));
    assert!(c.propose_points(vec![p.clone()], TrialOrigin::Manual).is_err());
    for t in s.trials {
        c.observe(&t.id, f.evaluate_point(&t.point).unwrap()).unwrap();
    }
    let bad = PointAssignment::new().real("x1", 99.0).real("x2", 0.0).real("x3", 0.0);
    assert!(c.propose_points(vec![bad], TrialOrigin::Manual).is_err());
    assert!(c.propose_points(vec![p.clone(), p.clone(), p], TrialOrigin::Manual).is_err());
}
