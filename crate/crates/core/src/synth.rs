//! Seeded synthetic measurement data for closed-loop calibration checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::Trajectory;
use crate::io::{dataset_from_trajectory, Dataset};

/// Converts a simulated trajectory into a dataset with i.i.d. Gaussian
/// position jitter of standard deviation `sigma` (meters). Deterministic
/// for a fixed seed.
pub fn jittered_dataset(traj: &Trajectory, sigma: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clean = dataset_from_trajectory(traj);
    if sigma == 0.0 {
        return clean;
    }
    let mut out = Dataset::default();
    out.dt_seconds = clean.dt_seconds;
    for (&id, obs) in clean.tracks() {
        let mut obs = obs.clone();
        for o in obs.iter_mut() {
            o.x += sigma * standard_normal(&mut rng);
        }
        out.insert_track(id, obs);
    }
    out
}

/// Box-Muller standard normal draw.
fn standard_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
