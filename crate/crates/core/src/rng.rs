//! Seeded randomness shared by the Monte Carlo routines.
//!
//! Every trial draws from its own ChaCha8 stream: the key comes from the run
//! seed (`seed_from_u64`) and the stream id is the trial index. Trials are
//! therefore independent of scheduling order and thread count.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type TrialRng = ChaCha8Rng;

pub fn trial_rng(seed: u64, index: u64) -> TrialRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniform `t`-subset of `0..n` by partial Fisher–Yates, returned sorted.
pub fn sample_subset<R: Rng>(n: usize, t: usize, rng: &mut R) -> Vec<usize> {
    assert!(t <= n, "cannot draw {t} of {n}");
    // sparse permutation: only displaced positions are stored
    let mut swapped: HashMap<usize, usize> = HashMap::with_capacity(2 * t);
    let mut out = Vec::with_capacity(t);
    for i in 0..t {
        let j = rng.gen_range(i..n);
        let at_j = *swapped.get(&j).unwrap_or(&j);
        let at_i = *swapped.get(&i).unwrap_or(&i);
        swapped.insert(j, at_i);
        out.push(at_j);
    }
    out.sort_unstable();
    out
}

const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval at 95% for `failures` out of `trials`.
pub fn wilson_95(failures: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = failures as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if failures == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if failures == trials { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}
