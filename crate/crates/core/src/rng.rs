//! Seeded random streams.
//!
//! Every stochastic quantity is drawn from a stream addressed by
//! `(seed, domain, index)`, so results never depend on evaluation order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub(crate) mod domain {
    pub const PLL_EDGE: u64 = 0x5011_ed6e;
    pub const CHAIN_RISE: u64 = 0xc4a1_0001;
    pub const CHAIN_FALL: u64 = 0xc4a1_0002;
    pub const REG_SKEW: u64 = 0x5e6_0001;
    pub const REG_CLOCK: u64 = 0x5e6_0002;
    pub const SWEEP_JITTER: u64 = 0x5eef_0001;
    pub const SWEEP_DEAD: u64 = 0x5eef_0002;
    pub const RING_DELAY: u64 = 0x0516_0001;
    pub const RING_RELEASE: u64 = 0x0516_0002;
    pub const CHECK: u64 = 0xc8ec_0001;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn stream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(domain)));
    rng.set_stream(index);
    rng
}

/// Draws from `N(mean, sd)` until `accept` holds. Falls back to `mean` after
/// a bounded number of rejections.
pub(crate) fn normal_where<R: Rng>(rng: &mut R, mean: f64, sd: f64, accept: impl Fn(f64) -> bool) -> f64 {
    if sd <= 0.0 {
        return mean;
    }
    let dist = Normal::new(mean, sd).expect("finite normal parameters");
    for _ in 0..10_000 {
        let x = dist.sample(rng);
        if accept(x) {
            return x;
        }
    }
    mean
}

pub(crate) fn normal<R: Rng>(rng: &mut R, sd: f64) -> f64 {
    normal_where(rng, 0.0, sd, |_| true)
}
