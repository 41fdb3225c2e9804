use proptest::prelude::*;

use lodestar_agent::events::{parse_events, to_jsonl};
use lodestar_agent::{Campaign, CampaignConfig, Clock, NullSink};
use lodestar_core::compass::{Budget, ExperimentCompass};
use lodestar_core::space::{Direction, ParameterSpec, SearchSpace};

fn compass() -> ExperimentCompass {
    let space = SearchSpace::new(
        vec![
            ParameterSpec::categorical("catalyst", &["A1", "B2", "C3"]),
            ParameterSpec::ordinal("temperature", &[20.0, 40.0, 60.0, 80.0]),
            ParameterSpec::continuous("ratio", 0.0, 1.0),
        ],
        "yield",
        Direction::Maximize,
    );
    let mut c = ExperimentCompass::new("props", "", space);
    c.budget = Budget {
        rounds: 3,
        candidates_per_round: 2,
        bo_pool_size: 3,
    };
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn replay_rebuilds_any_ask_tell_history(
        seed in 0u64..1000,
        outcomes in proptest::collection::vec(prop_oneof![
            (-50.0f64..50.0).prop_map(Some),
            Just(None),
        ], 6),
        stop in 0usize..8,
    ) {
        let compass = compass();
        let config = CampaignConfig::for_compass(&compass, seed);
        let mut c = Campaign::create("p", compass, config, Box::new(NullSink), Clock::logical()).unwrap();
        let mut used = 0;
        'outer: loop {
            let s = c.suggest(None).unwrap();
            if s.trials.is_empty() {
                break;
            }
            for t in s.trials {
                if used == stop {
                    break 'outer;
                }
                match outcomes[used % outcomes.len()] {
                    Some(v) => { c.observe(&t.id, v).unwrap(); }
                    None => c.fail(&t.id, "failed").unwrap(),
                }
                used += 1;
            }
        }
        prop_assert!(c.state().violations().is_empty());
        prop_assert!(c.state().spent() <= c.config().budget);
        let text = to_jsonl(c.events());
        let replayed = Campaign::replay(parse_events(&text).unwrap(), Box::new(NullSink), Clock::logical()).unwrap();
        prop_assert_eq!(replayed.snapshot(), c.snapshot());
        prop_assert_eq!(to_jsonl(replayed.events()), text);
    }
}
