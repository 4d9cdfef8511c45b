//! Seeded random instances.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::Instance;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueDistribution {
    /// i.i.d. Uniform[0, 1).
    Uniform01,
    /// i.i.d. integers in `1..=max`.
    Integer { max: u32 },
    /// One Uniform[0, 1) column copied to every agent.
    IdenticalAgents,
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed for start `index` of a multi-start run, so that each start owns an
/// independent generator derived from one configured seed.
pub fn start_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn random_instance(
    agents: usize,
    items: usize,
    dist: ValueDistribution,
    seed: u64,
) -> Result<Instance> {
    if agents < 2 || items < 1 {
        return Err(Error::TooSmall { items, agents });
    }
    let mut rng = rng_from_seed(seed);
    let values = match dist {
        ValueDistribution::Uniform01 => {
            Array2::from_shape_fn((items, agents), |_| rng.gen::<f64>())
        }
        ValueDistribution::Integer { max } => {
            if max == 0 {
                return Err(Error::parameter("max", "integer values need max >= 1"));
            }
            Array2::from_shape_fn((items, agents), |_| rng.gen_range(1..=max) as f64)
        }
        ValueDistribution::IdenticalAgents => {
            let column: Vec<f64> = (0..items).map(|_| rng.gen::<f64>()).collect();
            Array2::from_shape_fn((items, agents), |(k, _)| column[k])
        }
    };
    Instance::new(values)
}
