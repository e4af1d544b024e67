use rand::Rng;
use serde::{Deserialize, Serialize};

/// Service-time law for one network station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ServiceDistribution {
    Deterministic { mean: f64 },
    Exponential { mean: f64 },
    /// Replays recorded durations, drawn uniformly with replacement.
    Empirical { samples: Vec<f64> },
}

impl ServiceDistribution {
    pub fn mean(&self) -> f64 {
        match self {
            Self::Deterministic { mean } | Self::Exponential { mean } => *mean,
            Self::Empirical { samples } => samples.iter().sum::<f64>() / samples.len() as f64,
        }
    }

    pub fn is_valid(&self) -> bool {
        match self {
            Self::Deterministic { mean } | Self::Exponential { mean } => *mean > 0.0 && mean.is_finite(),
            Self::Empirical { samples } => {
                !samples.is_empty() && samples.iter().all(|s| *s >= 0.0 && s.is_finite())
            }
        }
    }

    /// Maps a uniform draw `u` in `[0, 1)` to a duration.
    ///
    /// Exponential draws use the inverse transform `-mean * ln(1 - u)`.
    pub fn from_uniform(&self, u: f64) -> f64 {
        match self {
            Self::Deterministic { mean } => *mean,
            Self::Exponential { mean } => -mean * (1.0 - u).ln(),
            Self::Empirical { samples } => {
                let idx = ((u * samples.len() as f64) as usize).min(samples.len() - 1);
                samples[idx]
            }
        }
    }

    /// Draws one duration, advancing `rng` by exactly one `f64`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.from_uniform(u)
    }
}
