use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::agents::config::NoiseSchedule;

/// Zero-mean Gaussian draw with the scheduled standard deviation.
pub fn exploration_noise<R: Rng + ?Sized>(schedule: &NoiseSchedule, episode: usize, rng: &mut R) -> f64 {
    let scale = schedule.scale_at(episode);
    if scale == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, scale).expect("scale is finite and non-negative").sample(rng)
}

/// `action + noise` clamped to `[lo, hi]`.
pub fn perturb(action: f64, noise: f64, [lo, hi]: [f64; 2]) -> f64 {
    (action + noise).clamp(lo, hi)
}
