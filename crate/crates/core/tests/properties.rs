use greenrunner_core::bandit::{run_experiment, ExperimentConfig, Strategy};
use greenrunner_core::oracle::{make_synthetic_zoo, DatasetManifest, EvaluationBackend, SyntheticModelSpec};
use greenrunner_core::repository::{compute_extents, ModelCard, Repository};
use greenrunner_core::reward::{compute_reward, RewardExtents, WeightProfile};
use proptest::prelude::*;

fn card_strategy() -> impl proptest::strategy::Strategy<Value = (f64, f64, f64)> {
    (0.1f64..5000.0, 1.0f64..200_000.0, 0.0f64..=1.0)
}

fn cards(raw: &[(f64, f64, f64)]) -> Vec<ModelCard> {
    raw.iter()
        .enumerate()
        .map(|(i, &(s, c, b))| ModelCard::new(format!("m{i}"), s, c, b))
        .collect()
}

/// Straight transcription of the reward formula, independent of the crate's helpers.
fn direct_reward(acc: f64, size: f64, cplx: f64, w: [f64; 3], e: &RewardExtents) -> f64 {
    let size_term = if e.max_size == e.min_size {
        0.0
    } else {
        (size.ln() - e.min_size.ln()) / (e.max_size.ln() - e.min_size.ln())
    };
    let cplx_term = if e.max_complexity == e.min_complexity {
        0.0
    } else {
        (cplx.ln() - e.min_complexity.ln()) / (e.max_complexity.ln() - e.min_complexity.ln())
    };
    acc * w[0] - size_term * w[1] - cplx_term * w[2]
}

proptest! {
    #[test]
    fn extents_match_linear_scan(raw in prop::collection::vec(card_strategy(), 1..30)) {
        let cards = cards(&raw);
        let e = compute_extents(&cards).unwrap();
        let mut min_s = f64::MAX; let mut max_s = f64::MIN;
        let mut min_c = f64::MAX; let mut max_c = f64::MIN;
        for c in &cards {
            if c.size_mb < min_s { min_s = c.size_mb; }
            if c.size_mb > max_s { max_s = c.size_mb; }
            if c.complexity_mmac < min_c { min_c = c.complexity_mmac; }
            if c.complexity_mmac > max_c { max_c = c.complexity_mmac; }
        }
        prop_assert_eq!((e.min_size, e.max_size, e.min_complexity, e.max_complexity), (min_s, max_s, min_c, max_c));
    }

    #[test]
    fn reward_matches_direct_transcription_and_bounds(
        raw in prop::collection::vec(card_strategy(), 1..8),
        pick in any::<prop::sample::Index>(),
        acc in 0.0f64..=1.0,
        w in prop::array::uniform3(0.0f64..=1.0),
    ) {
        let cards = cards(&raw);
        let e = compute_extents(&cards).unwrap();
        let card = &cards[pick.index(cards.len())];
        let weights = WeightProfile::new(w[0], w[1], w[2]);
        let got = compute_reward(acc, card, &weights, &e).unwrap();
        let want = direct_reward(acc, card.size_mb, card.complexity_mmac, w, &e);
        prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1e-300) || got == want, "{} vs {}", got, want);
        prop_assert!(got <= w[0] + 1e-15);
        prop_assert!(got >= -(w[1] + w[2]) - 1e-15);
    }

    #[test]
    fn reward_is_monotone(
        raw in prop::collection::vec(card_strategy(), 2..8),
        acc in 0.0f64..0.9,
        bump in 0.0f64..0.1,
        w in prop::array::uniform3(0.0f64..=1.0),
    ) {
        let cards = cards(&raw);
        let e = compute_extents(&cards).unwrap();
        let weights = WeightProfile::new(w[0], w[1], w[2]);
        let base = &cards[0];
        let r = compute_reward(acc, base, &weights, &e).unwrap();
        prop_assert!(compute_reward(acc + bump, base, &weights, &e).unwrap() >= r);
        // Larger size or complexity within the extents never raises the reward.
        let bigger = ModelCard::new("x", e.max_size, e.max_complexity, 0.5);
        prop_assert!(compute_reward(acc, &bigger, &weights, &e).unwrap() <= r);
        let smallest = ModelCard::new("y", e.min_size, e.min_complexity, 0.5);
        prop_assert!(compute_reward(acc, &smallest, &weights, &e).unwrap() >= r);
    }

    #[test]
    fn scaling_weights_preserves_order(
        raw in prop::collection::vec(card_strategy(), 2..10),
        w in prop::array::uniform3(0.01f64..=1.0),
        c in prop::sample::select(vec![0.5, 2.0, 4.0]),
    ) {
        let cards = cards(&raw);
        let e = compute_extents(&cards).unwrap();
        let weights = WeightProfile::new(w[0], w[1], w[2]);
        let scaled = weights.scaled(c);
        for card in &cards {
            let r = compute_reward(card.benchmark_accuracy, card, &weights, &e).unwrap();
            let rs = compute_reward(card.benchmark_accuracy, card, &scaled, &e).unwrap();
            // Power-of-two factors scale exactly.
            prop_assert_eq!(rs, r * c);
        }
    }

    #[test]
    fn runs_respect_budget_exhaustion_and_conjugacy(
        ps in prop::collection::vec(0.0f64..=1.0, 1..6),
        n_samples in 1usize..30,
        extra in 0u64..80,
        seed in any::<u64>(),
        strategy in prop::sample::select(vec![Strategy::EpsilonGreedy, Strategy::Ucb, Strategy::Thompson, Strategy::Greedy]),
    ) {
        let specs: Vec<_> = ps.iter().enumerate()
            .map(|(i, &p)| SyntheticModelSpec::new(ModelCard::new(format!("m{i}"), 1.0 + i as f64, 10.0 * (i + 1) as f64, 0.5), p))
            .collect();
        let repo = Repository::new(specs.iter().map(|s| s.card.clone()).collect()).unwrap();
        let manifest = DatasetManifest::new("t", n_samples, seed ^ 0xabc);
        let oracle = make_synthetic_zoo(&specs, &manifest).unwrap();
        let budget = ps.len() as u64 + extra;
        let config = ExperimentConfig::new(strategy, budget, WeightProfile::new(0.7, 0.2, 0.1), seed, manifest);
        let out = run_experiment(&config, &repo, &oracle).unwrap();

        let meter = oracle.meter_read();
        prop_assert!(meter.calls <= budget);
        prop_assert_eq!(meter.calls, out.trace.len() as u64);
        let capacity = (ps.len() * n_samples) as u64;
        prop_assert_eq!(out.trace.len() as u64, budget.min(capacity));
        for s in &out.states {
            prop_assert!(s.pulls as usize <= n_samples);
            prop_assert_eq!(s.alpha - s.prior_alpha, s.successes as f64);
            prop_assert_eq!(s.beta - s.prior_beta, (s.pulls - s.successes) as f64);
            prop_assert_eq!(s.next_sample_cursor as u64, s.pulls);
        }
        let counted: u64 = out.report.selection_counts.values().sum();
        prop_assert_eq!(counted, out.report.eval_calls_used);
        prop_assert_eq!(out.report.top3.len(), ps.len().min(3));
        prop_assert!(out.report.mmac_savings >= 0.0);
    }

    #[test]
    fn synthetic_rate_tracks_latent_accuracy(p in 0.0f64..=1.0, seed in any::<u64>()) {
        let n = 10_000;
        let spec = SyntheticModelSpec::new(ModelCard::new("m", 1.0, 1.0, 0.5), p);
        let oracle = make_synthetic_zoo(&[spec], &DatasetManifest::new("t", n, seed)).unwrap();
        let hits = (0..n).filter(|&i| oracle.evaluate("m", i).unwrap().correct).count();
        let se = (p * (1.0 - p) / n as f64).sqrt();
        prop_assert!((hits as f64 / n as f64 - p).abs() <= 4.0 * se + 1e-12);
    }
}

#[test]
fn concurrent_evaluation_meters_each_pair_once() {
    let specs: Vec<_> = (0..4)
        .map(|i| SyntheticModelSpec::new(ModelCard::new(format!("m{i}"), 1.0, 124.5 + i as f64, 0.5), 0.4))
        .collect();
    let manifest = DatasetManifest::new("t", 200, 8);
    let sequential = make_synthetic_zoo(&specs, &manifest).unwrap();
    let concurrent = make_synthetic_zoo(&specs, &manifest).unwrap();
    let expected: Vec<bool> = specs
        .iter()
        .flat_map(|s| (0..200).map(|i| sequential.evaluate(&s.card.id, i).unwrap().correct).collect::<Vec<_>>())
        .collect();
    std::thread::scope(|scope| {
        for t in 0..8 {
            let concurrent = &concurrent;
            let specs = &specs;
            scope.spawn(move || {
                // Every thread hammers every pair, in a thread-specific order.
                for k in 0..800 {
                    let j = (k * 7 + t * 13) % 800;
                    concurrent.evaluate(&specs[j / 200].card.id, j % 200).unwrap();
                }
            });
        }
    });
    let got: Vec<bool> = specs
        .iter()
        .flat_map(|s| (0..200).map(|i| concurrent.evaluate(&s.card.id, i).unwrap().correct).collect::<Vec<_>>())
        .collect();
    assert_eq!(got, expected);
    assert_eq!(concurrent.meter_read(), sequential.meter_read());
    assert_eq!(concurrent.meter_read().calls, 800);
}
