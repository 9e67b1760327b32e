//! Synthetic census-like data with the shape of the UCI Adult table:
//! fifteen attributes, skewed marginals, categorical and bucketed ordinal
//! columns.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AttributeSpec, Dataset};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub rows: usize,
    /// Exponent of the Zipf-like weights on categorical attributes.
    pub skew: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            rows: 10_000,
            skew: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy)]
enum Shape {
    /// Zipf-like weights over the domain in declaration order.
    Zipf,
    /// Bell around a fraction of the domain with a relative spread.
    Bell { center: f64, spread: f64 },
    /// Most mass on the first value, the rest decaying geometrically.
    Spike { head: f64 },
}

struct Column {
    name: &'static str,
    size: usize,
    shape: Shape,
}

const fn col(name: &'static str, size: usize, shape: Shape) -> Column {
    Column { name, size, shape }
}

const COLUMNS: [Column; 15] = [
    col(
        "age",
        74,
        Shape::Bell {
            center: 0.3,
            spread: 0.2,
        },
    ),
    col("workclass", 9, Shape::Zipf),
    col(
        "fnlwgt",
        100,
        Shape::Bell {
            center: 0.2,
            spread: 0.12,
        },
    ),
    col("education", 16, Shape::Zipf),
    col(
        "education_num",
        16,
        Shape::Bell {
            center: 0.6,
            spread: 0.15,
        },
    ),
    col("marital_status", 7, Shape::Zipf),
    col("occupation", 15, Shape::Zipf),
    col("relationship", 6, Shape::Zipf),
    col("race", 5, Shape::Zipf),
    col("sex", 2, Shape::Zipf),
    col("capital_gain", 100, Shape::Spike { head: 0.9 }),
    col("capital_loss", 100, Shape::Spike { head: 0.95 }),
    col(
        "hours_per_week",
        99,
        Shape::Bell {
            center: 0.4,
            spread: 0.1,
        },
    ),
    col("native_country", 42, Shape::Zipf),
    col("income", 2, Shape::Zipf),
];

fn weights(c: &Column, skew: f64) -> Vec<f64> {
    let n = c.size;
    match c.shape {
        Shape::Zipf => (0..n).map(|k| 1.0 / ((k + 1) as f64).powf(skew)).collect(),
        Shape::Bell { center, spread } => {
            let mu = center * n as f64;
            let sd = (spread * n as f64).max(0.5);
            (0..n)
                .map(|k| (-0.5 * ((k as f64 - mu) / sd).powi(2)).exp() + 1e-4)
                .collect()
        }
        Shape::Spike { head } => {
            let tail = 1.0 - head;
            (0..n)
                .map(|k| {
                    if k == 0 {
                        head
                    } else {
                        tail * 0.1 * 0.9f64.powi(k as i32 - 1)
                    }
                })
                .collect()
        }
    }
}

pub fn adult_like_schema() -> Vec<AttributeSpec> {
    COLUMNS
        .iter()
        .map(|c| AttributeSpec::integer_range(c.name, 0, c.size as i64 - 1).expect("static domain"))
        .collect()
}

pub fn adult_like(config: &SyntheticConfig) -> Result<Dataset> {
    if !(config.skew.is_finite() && config.skew >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "skew must be non-negative, got {}",
            config.skew
        )));
    }
    let samplers = COLUMNS
        .iter()
        .map(|c| {
            WeightedIndex::new(weights(c, config.skew))
                .map_err(|e| Error::InvalidParameter(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut cells = Vec::with_capacity(config.rows * COLUMNS.len());
    for _ in 0..config.rows {
        for s in &samplers {
            cells.push(s.sample(&mut rng) as u32);
        }
    }
    Dataset::from_indices(adult_like_schema(), cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_view, ViewSpec};

    #[test]
    fn shape_and_determinism() {
        let cfg = SyntheticConfig {
            rows: 2_000,
            ..SyntheticConfig::default()
        };
        let a = adult_like(&cfg).unwrap();
        assert_eq!(a.len(), 2_000);
        assert_eq!(a.schema().len(), 15);
        assert_eq!(a, adult_like(&cfg).unwrap());
        let other = adult_like(&SyntheticConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn marginals_are_skewed() {
        let d = adult_like(&SyntheticConfig::default()).unwrap();
        let sex = build_view(&d, &ViewSpec::over(&["sex"])).unwrap();
        assert!(sex.true_counts[0] > sex.true_counts[1]);
        let gain = build_view(&d, &ViewSpec::over(&["capital_gain"])).unwrap();
        assert!(gain.true_counts[0] as f64 > 0.8 * d.len() as f64);
        assert!(gain.true_counts.iter().filter(|&&c| c == 0).count() > 10);
    }
}
