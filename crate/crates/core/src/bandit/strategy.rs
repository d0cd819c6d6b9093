//! Arm selection rules. Every rule considers only arms that still have unseen
//! samples and breaks ties toward the lowest arm index.

use rand::Rng;
use rand_distr::{Beta, Distribution};

use super::{ArmState, BanditError, RewardModel};

fn open_arms(states: &[ArmState], n_samples: usize) -> impl Iterator<Item = usize> + '_ {
    states
        .iter()
        .enumerate()
        .filter(move |(_, s)| !s.is_exhausted(n_samples))
        .map(|(i, _)| i)
}

/// First index of the maximum score among `candidates`.
fn argmax(candidates: impl Iterator<Item = (usize, f64)>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (arm, score) in candidates {
        match best {
            Some((_, top)) if score <= top => {}
            _ => best = Some((arm, score)),
        }
    }
    best.map(|(arm, _)| arm)
}

/// Arm with the highest estimate.
pub fn select_arm_greedy(states: &[ArmState], estimates: &[f64], n_samples: usize) -> Result<usize, BanditError> {
    argmax(open_arms(states, n_samples).map(|i| (i, estimates[i]))).ok_or(BanditError::AllExhausted)
}

/// With probability `epsilon` a uniformly random open arm, otherwise the greedy choice.
///
/// Exactly one coin flip is drawn per call, plus one index draw when exploring.
pub fn select_arm_epsilon_greedy<R: Rng + ?Sized>(
    states: &[ArmState],
    estimates: &[f64],
    n_samples: usize,
    epsilon: f64,
    rng: &mut R,
) -> Result<usize, BanditError> {
    let open: Vec<usize> = open_arms(states, n_samples).collect();
    if open.is_empty() {
        return Err(BanditError::AllExhausted);
    }
    if rng.random::<f64>() < epsilon {
        return Ok(open[rng.random_range(0..open.len())]);
    }
    select_arm_greedy(states, estimates, n_samples)
}

/// UCB1: `estimate + c * sqrt(2 ln t / n)`. An open arm with no pulls scores +inf.
pub fn select_arm_ucb(
    states: &[ArmState],
    estimates: &[f64],
    n_samples: usize,
    total_pulls: u64,
    ucb_c: f64,
) -> Result<usize, BanditError> {
    let log_t = (total_pulls.max(1) as f64).ln();
    argmax(open_arms(states, n_samples).map(|i| {
        let pulls = states[i].pulls;
        let score = if pulls == 0 {
            f64::INFINITY
        } else {
            estimates[i] + ucb_c * (2.0 * log_t / pulls as f64).sqrt()
        };
        (i, score)
    }))
    .ok_or(BanditError::AllExhausted)
}

/// Draws an accuracy from each open arm's Beta posterior, maps it through the
/// reward function and returns the argmax.
pub fn select_arm_thompson<R: Rng + ?Sized>(
    states: &[ArmState],
    model: &RewardModel,
    n_samples: usize,
    rng: &mut R,
) -> Result<usize, BanditError> {
    let mut draws = Vec::with_capacity(states.len());
    for arm in open_arms(states, n_samples) {
        let state = &states[arm];
        let posterior = Beta::new(state.alpha, state.beta)
            .map_err(|e| BanditError::Config(format!("arm {}: {e}", state.model_id)))?;
        draws.push((arm, model.reward(arm, posterior.sample(rng))));
    }
    argmax(draws.into_iter()).ok_or(BanditError::AllExhausted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::repository::ModelCard;
    use crate::reward::{RewardExtents, WeightProfile};
    use crate::rng::stream_rng;

    fn states_with_means(means: &[(u64, u64)]) -> Vec<ArmState> {
        means
            .iter()
            .enumerate()
            .map(|(i, &(pulls, successes))| ArmState::with_counts(format!("m{i}"), 1.0, 1.0, pulls, successes))
            .collect()
    }

    fn flat_model(n: usize) -> RewardModel {
        let cards: Vec<_> = (0..n).map(|i| ModelCard::new(format!("m{i}"), 10.0, 100.0, 0.5)).collect();
        let extents = RewardExtents {
            min_size: 10.0,
            max_size: 10.0,
            min_complexity: 100.0,
            max_complexity: 100.0,
        };
        RewardModel::new(&cards, &WeightProfile::accuracy_only(), &extents).unwrap()
    }

    #[test]
    fn pure_exploitation_picks_best_estimate() {
        let states = states_with_means(&[(3, 1), (3, 1), (3, 1)]);
        let mut rng = stream_rng(1, 0);
        let arm = select_arm_epsilon_greedy(&states, &[0.2, 0.7, 0.5], 100, 0.0, &mut rng).unwrap();
        assert_eq!(arm, 1);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let states = states_with_means(&[(1, 0), (1, 0)]);
        let mut rng = stream_rng(1, 0);
        assert_eq!(select_arm_epsilon_greedy(&states, &[0.5, 0.5], 10, 0.0, &mut rng).unwrap(), 0);
        assert_eq!(select_arm_ucb(&states, &[0.5, 0.5], 10, 2, 1.0).unwrap(), 0);
    }

    #[test]
    fn full_exploration_is_uniform() {
        let states = states_with_means(&[(1, 0); 4]);
        let mut rng = stream_rng(3, 0);
        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            counts[select_arm_epsilon_greedy(&states, &[0.9, 0.1, 0.1, 0.1], 10, 1.0, &mut rng).unwrap()] += 1;
        }
        for c in counts {
            let freq = c as f64 / 10_000.0;
            assert!((0.22..=0.28).contains(&freq), "{counts:?}");
        }
    }

    #[test]
    fn exhausted_arms_are_skipped() {
        let states = states_with_means(&[(10, 9), (2, 0)]);
        assert_eq!(select_arm_greedy(&states, &[0.9, 0.1], 10).unwrap(), 1);
        let done = states_with_means(&[(10, 9), (10, 0)]);
        assert!(matches!(select_arm_greedy(&done, &[0.9, 0.1], 10), Err(BanditError::AllExhausted)));
        let mut rng = stream_rng(0, 0);
        assert!(select_arm_thompson(&done, &flat_model(2), 10, &mut rng).is_err());
        assert!(select_arm_ucb(&done, &[0.0, 0.0], 10, 20, 1.0).is_err());
    }

    #[test]
    fn ucb_bonus_favours_less_pulled_arm() {
        // Means (0+1)/(1+2) and (3+1)/(10+2) are both 1/3.
        let states = states_with_means(&[(1, 0), (10, 3)]);
        let estimates = flat_model(2).estimates(&states);
        assert_eq!(estimates[0], estimates[1]);
        assert_eq!(select_arm_ucb(&states, &estimates, 100, 11, 1.0).unwrap(), 0);
    }

    #[test]
    fn ucb_without_bonus_is_greedy() {
        let states = states_with_means(&[(4, 1), (9, 7), (2, 2)]);
        let estimates = [0.3, 0.8, 0.75];
        assert_eq!(
            select_arm_ucb(&states, &estimates, 50, 15, 0.0).unwrap(),
            select_arm_greedy(&states, &estimates, 50).unwrap()
        );
    }

    #[test]
    fn ucb_three_arm_fixture() {
        // Hand evaluation of est + sqrt(2 ln 10 / n): 1.9174, 1.4597, 1.6890.
        let states = states_with_means(&[(2, 1), (5, 2), (3, 1)]);
        let arm = select_arm_ucb(&states, &[0.4, 0.5, 0.45], 100, 10, 1.0).unwrap();
        assert_eq!(arm, 0);
    }

    #[test]
    fn thompson_single_arm() {
        let states = states_with_means(&[(5, 0)]);
        let mut rng = stream_rng(9, 0);
        assert_eq!(select_arm_thompson(&states, &flat_model(1), 10, &mut rng).unwrap(), 0);
    }

    #[test]
    fn thompson_separated_posteriors() {
        let states = vec![
            ArmState::with_counts("a", 1.0, 1.0, 999, 999),
            ArmState::with_counts("b", 1.0, 1.0, 999, 0),
        ];
        assert_eq!((states[0].alpha, states[0].beta), (1000.0, 1.0));
        let model = flat_model(2);
        let wins = (0..1000u64)
            .filter(|&seed| {
                let mut rng = stream_rng(seed, 0);
                select_arm_thompson(&states, &model, 5000, &mut rng).unwrap() == 0
            })
            .count();
        assert!(wins >= 999, "{wins}");
    }

    #[test]
    fn thompson_symmetric_posteriors() {
        let states = states_with_means(&[(4, 2), (4, 2)]);
        let model = flat_model(2);
        let mut rng = stream_rng(11, 0);
        let first = (0..10_000)
            .filter(|_| select_arm_thompson(&states, &model, 10, &mut rng).unwrap() == 0)
            .count();
        let freq = first as f64 / 10_000.0;
        assert!((freq - 0.5).abs() <= 0.02, "{freq}");
    }
}
