//! Seed derivation.
//!
//! Every random stream in the toolkit is a [`ChaCha8Rng`] seeded from the
//! master seed, a [`Purpose`] tag and a short index path. Derivation folds
//! each word through SplitMix64, so a stream depends only on its own
//! coordinates and never on how many draws other streams made:
//!
//! | purpose      | index path                       |
//! |--------------|----------------------------------|
//! | `Suite`      | `[role, instance]` (role 0 train, 1 test) |
//! | `Init`       | `[]` (controller weights)        |
//! | `Population` | `[epoch]` (shared P⁰ per epoch)   |
//! | `Trajectory` | `[epoch, function, rollout]`     |
//! | `Run`        | `[function, run]` (shared by all algorithms) |
//! | `Test`       | free-form, for checks and demos  |

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Purpose {
    Suite = 1,
    Init = 2,
    Population = 3,
    Trajectory = 4,
    Run = 5,
    Test = 6,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a 64-bit seed for `(master, purpose, path)`.
pub fn derive_seed(master: u64, purpose: Purpose, path: &[u64]) -> u64 {
    let mut acc = splitmix64(master ^ splitmix64(purpose as u64));
    for (depth, &ix) in path.iter().enumerate() {
        acc = splitmix64(acc ^ splitmix64(ix.wrapping_add((depth as u64 + 1) << 56)));
    }
    acc
}

pub fn stream(master: u64, purpose: Purpose, path: &[u64]) -> Stream {
    ChaCha8Rng::seed_from_u64(derive_seed(master, purpose, path))
}
