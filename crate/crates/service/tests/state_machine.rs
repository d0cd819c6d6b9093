//! Random operation sequences against the service never store an illegal record.

mod common;

use std::collections::HashMap;
use std::sync::Arc;

use common::*;
use greenrunner_core::{Reasoner, WeightProfile};
use greenrunner_service::testing::FaultyProvider;
use greenrunner_service::{ExperimentState, FileStore};
use greenrunner_service::record::TransitionEntry;
use proptest::prelude::*;

#[derive(Debug, Clone)]
enum Op {
    Create,
    Stage(usize),
    Edit(usize, f64),
    Run(usize),
    Wait(usize),
    Restart,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        1 => Just(Op::Create),
        3 => (0usize..8).prop_map(Op::Stage),
        3 => (0usize..8, -0.5f64..1.5).prop_map(|(i, w)| Op::Edit(i, w)),
        3 => (0usize..8).prop_map(Op::Run),
        1 => (0usize..8).prop_map(Op::Wait),
        1 => Just(Op::Restart),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn only_legal_transitions_persist(ops in prop::collection::vec(op(), 60)) {
        let dir = tempfile::tempdir().unwrap();
        let provider = Arc::new(FaultyProvider::default());
        let mut service = open(dir.path(), Reasoner::Fallback, provider.clone());
        let mut ids = Vec::new();
        let mut last_state: HashMap<_, Vec<TransitionEntry>> = HashMap::new();
        for op in ops {
            match op {
                Op::Create => ids.push(service.create(create_request(8)).unwrap().id),
                Op::Stage(i) if !ids.is_empty() => { let _ = service.stage(ids[i % ids.len()]); }
                Op::Edit(i, w) if !ids.is_empty() => {
                    let _ = service.update_weights(ids[i % ids.len()], WeightProfile::new(w, 0.1, 0.1));
                }
                Op::Run(i) if !ids.is_empty() => { let _ = service.start_run(ids[i % ids.len()]); }
                Op::Wait(i) if !ids.is_empty() => { wait_for(&service, ids[i % ids.len()], |r| r.state != ExperimentState::Running); }
                Op::Restart => {
                    service.shutdown();
                    service = open(dir.path(), Reasoner::Fallback, provider.clone());
                }
                _ => {}
            }
            for record in FileStore::open(dir.path()).unwrap().load_all().unwrap() {
                prop_assert!(record.check_invariants().is_ok(), "{:?}", record.check_invariants());
                let prev = last_state.get(&record.id).cloned().unwrap_or_default();
                prop_assert!(record.transitions.starts_with(&prev), "history of {} was rewritten", record.id);
                last_state.insert(record.id, record.transitions.clone());
            }
        }
        service.shutdown();
    }
}
