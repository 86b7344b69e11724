//! Fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wmsurface_core::{StimulusParams, TrialOutcome};

/// `n` outcomes on feasible points from a smooth surface with its 50%
/// contour near `L = 11 - 0.8 K`.
pub fn synthetic_outcomes(n: usize, seed: u64) -> Vec<TrialOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let l = rng.random_range(1..=16u32);
            let k = rng.random_range(1..=l.min(8));
            let margin = 11.0 - 0.8 * k as f64 - l as f64;
            let p = 1.0 / (1.0 + (-margin).exp());
            TrialOutcome::trial(StimulusParams::new(l, k).expect("feasible"), rng.random::<f64>() < p, i as u32 + 1)
        })
        .collect()
}
