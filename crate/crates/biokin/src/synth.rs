//! Seeded synthetic data: random poses and scales, sine-driven joint
//! trajectories, and marker noise/occlusion injection. Everything here is a
//! pure function of its seed.

use nalgebra::{DVector, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::skeleton::{Pose, SkeletonModel};

pub fn seeded_rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha20Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Per-segment scale with components in [0.7, 1.3].
pub fn random_scale(rng: &mut ChaCha20Rng) -> Vector3<f64> {
    Vector3::new(
        uniform(rng, 0.7, 1.3),
        uniform(rng, 0.7, 1.3),
        uniform(rng, 0.7, 1.3),
    )
}

/// Uniform pose inside the joint ranges, shrunk toward the range center by
/// `margin` (0 samples the full range, 0.5 only the middle half).
pub fn random_pose(model: &SkeletonModel, rng: &mut ChaCha20Rng, margin: f64) -> Pose {
    let coords = DVector::from_fn(model.total_dof(), |i, _| {
        let (lo, hi) = model.coord_range(i);
        let half = 0.5 * (hi - lo) * (1.0 - margin);
        let mid = 0.5 * (lo + hi);
        uniform(rng, mid - half, mid + half)
    });
    let root = Vector3::new(
        uniform(rng, -0.5, 0.5),
        uniform(rng, -0.5, 0.5),
        uniform(rng, -0.5, 0.5),
    );
    Pose::new(coords, root)
}

/// Adds a uniform perturbation of at most `max_rad` per joint coordinate,
/// clamped back into the limits; the root translation stays put.
pub fn perturb_coords(
    model: &SkeletonModel,
    pose: &Pose,
    rng: &mut ChaCha20Rng,
    max_rad: f64,
) -> Pose {
    let coords = DVector::from_fn(model.total_dof(), |i, _| {
        pose.coords[i] + uniform(rng, -max_rad, max_rad)
    });
    model
        .clamp_pose(&Pose::new(coords, pose.root_translation))
        .expect("pose length matches model")
}

/// Adds a uniform perturbation of at most `max_rad` per coordinate (and
/// `max_rad` meters per translation axis), clamped back into the limits.
pub fn perturb_pose(
    model: &SkeletonModel,
    pose: &Pose,
    rng: &mut ChaCha20Rng,
    max_rad: f64,
) -> Pose {
    let coords = DVector::from_fn(model.total_dof(), |i, _| {
        pose.coords[i] + uniform(rng, -max_rad, max_rad)
    });
    let root = pose.root_translation
        + Vector3::new(
            uniform(rng, -max_rad, max_rad),
            uniform(rng, -max_rad, max_rad),
            uniform(rng, -max_rad, max_rad),
        );
    model
        .clamp_pose(&Pose::new(coords, root))
        .expect("pose length matches model")
}

/// Smooth in-range joint trajectories: every coordinate follows
/// `mid + amp * sin(2π f t/n + φ)` with seeded amplitude, integer frequency,
/// and phase; amplitudes never exceed `amplitude_frac` of the half-range.
pub fn sine_motion(
    model: &SkeletonModel,
    frames: usize,
    seed: u64,
    amplitude_frac: f64,
) -> Vec<Pose> {
    let mut rng = seeded_rng(seed);
    let dof = model.total_dof();
    let params: Vec<(f64, f64, f64, f64)> = (0..dof)
        .map(|i| {
            let (lo, hi) = model.coord_range(i);
            let mid = 0.5 * (lo + hi);
            let amp = 0.5 * (hi - lo) * amplitude_frac * uniform(&mut rng, 0.3, 1.0);
            let freq = rng.random_range(1..=3) as f64;
            let phase = uniform(&mut rng, 0.0, std::f64::consts::TAU);
            (mid, amp, freq, phase)
        })
        .collect();
    let trans_amp = Vector3::new(
        uniform(&mut rng, 0.05, 0.25),
        uniform(&mut rng, 0.05, 0.25),
        uniform(&mut rng, 0.05, 0.25),
    );
    let trans_phase = Vector3::new(
        uniform(&mut rng, 0.0, std::f64::consts::TAU),
        uniform(&mut rng, 0.0, std::f64::consts::TAU),
        uniform(&mut rng, 0.0, std::f64::consts::TAU),
    );

    (0..frames)
        .map(|t| {
            let s = t as f64 / frames.max(1) as f64;
            let coords = DVector::from_fn(dof, |i, _| {
                let (mid, amp, freq, phase) = params[i];
                mid + amp * (std::f64::consts::TAU * freq * s + phase).sin()
            });
            let root = Vector3::new(
                trans_amp.x * (std::f64::consts::TAU * s + trans_phase.x).sin(),
                trans_amp.y * (std::f64::consts::TAU * s + trans_phase.y).sin(),
                trans_amp.z * (std::f64::consts::TAU * s + trans_phase.z).sin(),
            );
            Pose::new(coords, root)
        })
        .collect()
}

/// Isotropic Gaussian position noise, standard deviation `sigma` per axis.
pub fn gaussian_noise(rng: &mut ChaCha20Rng, sigma: f64) -> Vector3<f64> {
    if sigma == 0.0 {
        return Vector3::zeros();
    }
    let normal = Normal::new(0.0, sigma).expect("sigma >= 0");
    Vector3::new(
        normal.sample(rng),
        normal.sample(rng),
        normal.sample(rng),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::load_skeleton;

    #[test]
    fn sine_motion_stays_within_limits() {
        let model = load_skeleton(crate::assets::FULL_BODY_24).unwrap();
        for pose in sine_motion(&model, 40, 123, 0.8) {
            let clamped = model.clamp_pose(&pose).unwrap();
            assert_eq!(clamped, pose, "trajectory left the joint ranges");
        }
    }

    #[test]
    fn same_seed_same_motion() {
        let model = load_skeleton(crate::assets::CHAIN_3).unwrap();
        let a = sine_motion(&model, 10, 42, 0.8);
        let b = sine_motion(&model, 10, 42, 0.8);
        assert_eq!(a, b);
    }
}
