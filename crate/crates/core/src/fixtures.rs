//! Ready-made synthetic zoos.
//!
//! [`mirror_zoo`] holds six ImageNet-pretrained architectures with their
//! sizes, complexities and target accuracies. Benchmark accuracies are
//! placeholders under which the accuracy-only card pick is `maxvit_t` at
//! 0.80. [`ZooParams`] generates random zoos.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::oracle::SyntheticModelSpec;
use crate::repository::ModelCard;
use crate::reward::WeightProfile;
use crate::rng::stream_rng;

/// Averaged suggestion for the drone use case: accuracy 0.63, size 0.25, complexity 0.21.
pub fn drone_weights() -> WeightProfile {
    WeightProfile::new(0.63, 0.25, 0.21)
}

pub fn mirror_zoo() -> Vec<SyntheticModelSpec> {
    [
        ("maxvit_t", 124.5, 19_670.0, 0.80, 0.29),
        ("mobilenet_v3", 22.0, 229.0, 0.67, 0.17),
        ("regnet_y_128gf", 2581.0, 127_750.0, 0.78, 0.45),
        ("convnext_small", 114.0, 4470.0, 0.76, 0.29),
        ("regnet_y_32gf", 581.0, 32_380.0, 0.77, 0.32),
        ("swin_v2_s", 199.0, 5790.0, 0.79, 0.30),
    ]
    .into_iter()
    .map(|(id, size, cplx, bench, target)| SyntheticModelSpec::new(ModelCard::new(id, size, cplx, bench), target))
    .collect()
}

/// Parameters for random zoo generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZooParams {
    pub n_models: usize,
    /// Latent target accuracy, uniform.
    pub accuracy_range: (f64, f64),
    /// Megabytes, log-uniform.
    pub size_range: (f64, f64),
    /// MMACs, log-uniform.
    pub complexity_range: (f64, f64),
    /// Benchmark accuracy sits this far above target accuracy (uniform), capped at 1.
    pub benchmark_gap: (f64, f64),
}

impl Default for ZooParams {
    fn default() -> Self {
        Self {
            n_models: 10,
            accuracy_range: (0.15, 0.45),
            size_range: (22.0, 2581.0),
            complexity_range: (229.0, 127_750.0),
            benchmark_gap: (0.15, 0.5),
        }
    }
}

impl ZooParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_models == 0 {
            return Err("n_models must be at least 1".into());
        }
        let ordered = |name: &str, (lo, hi): (f64, f64)| {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                Err(format!("{name} range [{lo}, {hi}] is not ordered"))
            } else {
                Ok(())
            }
        };
        ordered("accuracy", self.accuracy_range)?;
        ordered("size", self.size_range)?;
        ordered("complexity", self.complexity_range)?;
        ordered("benchmark gap", self.benchmark_gap)?;
        if self.accuracy_range.0 < 0.0 || self.accuracy_range.1 > 1.0 {
            return Err("accuracy range must lie within [0, 1]".into());
        }
        if self.size_range.0 <= 0.0 || self.complexity_range.0 <= 0.0 {
            return Err("size and complexity ranges must be positive".into());
        }
        if self.benchmark_gap.0 < 0.0 {
            return Err("benchmark gap must be non-negative".into());
        }
        Ok(())
    }

    pub fn generate(&self, seed: u64) -> Result<Vec<SyntheticModelSpec>, String> {
        self.validate()?;
        let mut rng = stream_rng(seed, 0);
        let width = (self.n_models - 1).to_string().len().max(3);
        let specs = (0..self.n_models)
            .map(|i| {
                let target = uniform(&mut rng, self.accuracy_range);
                let size = log_uniform(&mut rng, self.size_range);
                let complexity = log_uniform(&mut rng, self.complexity_range);
                let bench = (target + uniform(&mut rng, self.benchmark_gap)).min(1.0);
                let card = ModelCard::new(
                    format!("model_{i:0width$}"),
                    round_within(size, 2, self.size_range),
                    round_within(complexity, 1, self.complexity_range),
                    round_within(bench, 3, (0.0, 1.0)),
                );
                SyntheticModelSpec::new(card, round_within(target, 3, self.accuracy_range))
            })
            .collect();
        Ok(specs)
    }
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

fn log_uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    uniform(rng, (lo.ln(), hi.ln())).exp()
}

fn round_within(value: f64, decimals: i32, (lo, hi): (f64, f64)) -> f64 {
    let scale = 10f64.powi(decimals);
    ((value * scale).round() / scale).clamp(lo, hi)
}
