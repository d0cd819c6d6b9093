#![allow(dead_code)]

use std::sync::Arc;
use std::time::{Duration, Instant};

use greenrunner_core::{Reasoner, WeightProfile};
use greenrunner_service::{CreateRequest, ExperimentRecord, ExperimentService, ExperimentState, OracleProvider, ServiceOptions};
use serde_json::json;

pub fn create_request(budget: u64) -> CreateRequest {
    let models: Vec<_> = [
        ("tiny", 5.0, 60.0, 0.55, 0.2),
        ("small", 20.0, 300.0, 0.65, 0.3),
        ("mid", 90.0, 4000.0, 0.72, 0.4),
        ("large", 400.0, 30000.0, 0.78, 0.5),
        ("huge", 2000.0, 120000.0, 0.8, 0.55),
    ]
    .iter()
    .map(|&(id, s, c, b, _)| json!({"id": id, "size_mb": s, "complexity_mmac": c, "benchmark_accuracy": b}))
    .collect();
    let truth = json!({"tiny": 0.2, "small": 0.3, "mid": 0.4, "large": 0.5, "huge": 0.55});
    serde_json::from_value(json!({
        "repository": {"version": 1, "models": models},
        "manifest": {"version": 1, "name": "target", "n_samples": 40, "seed": 5},
        "synthetic_truth": truth,
        "use_case": "object detection on a delivery drone",
        "strategy": "thompson",
        "budget": budget,
        "seed": 11
    }))
    .unwrap()
}

pub fn open(dir: &std::path::Path, reasoner: Reasoner, provider: Arc<dyn OracleProvider>) -> ExperimentService {
    ExperimentService::open(dir, reasoner, provider, ServiceOptions::default()).unwrap()
}

pub fn staged(service: &ExperimentService, budget: u64) -> ExperimentRecord {
    let record = service.create(create_request(budget)).unwrap();
    service.stage(record.id).unwrap()
}

pub fn wait_for(service: &ExperimentService, id: uuid::Uuid, pred: impl Fn(&ExperimentRecord) -> bool) -> ExperimentRecord {
    let deadline = Instant::now() + Duration::from_secs(20);
    loop {
        let r = service.get(id).unwrap();
        if pred(&r) {
            return r;
        }
        assert!(Instant::now() < deadline, "timed out in state {}", r.state);
        std::thread::sleep(Duration::from_millis(2));
    }
}

pub fn is_terminal(r: &ExperimentRecord) -> bool {
    matches!(r.state, ExperimentState::Complete | ExperimentState::Failed)
}

pub fn drone() -> WeightProfile {
    WeightProfile::new(0.63, 0.25, 0.21)
}
