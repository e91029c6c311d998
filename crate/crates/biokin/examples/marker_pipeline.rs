//! The whole marker pipeline in process: synthesize a motion, corrupt the
//! markers, solve scales and IK, then score the result.

use biokin::ik::{markers_from_pose, solve_ik_sequence, solve_scales, IkSettings, MarkerFrameSequence};
use biokin::metrics::mae_angle;
use biokin::skeleton::{load_skeleton, Pose};
use biokin::synth;
use nalgebra::Vector3;

fn main() -> biokin::Result<()> {
    let base = load_skeleton(biokin::assets::FULL_BODY_24)?;
    let subject = base.apply_scales(&vec![Vector3::new(1.05, 1.1, 0.97); 24])?;

    let frames = 24;
    let truth = synth::sine_motion(&subject, frames, 77, 0.75);
    let mut rng = synth::seeded_rng(78);
    let mut seq = MarkerFrameSequence::default();
    for pose in &truth {
        let mut frame = markers_from_pose(&subject, pose)?;
        for p in frame.positions.values_mut() {
            *p += synth::gaussian_noise(&mut rng, 5e-4); // half-millimeter noise
        }
        seq.frames.push(frame);
    }

    let zero = Pose::zero(base.total_dof());
    let calibration = markers_from_pose(&subject, &zero)?;
    let scales = solve_scales(&base, &calibration, &zero)?;
    let scaled = base.apply_scales(&scales.scales)?;
    println!(
        "scale stage: rms {:.2e} m, {} issues",
        scales.rms_residual,
        scales.issues.len()
    );

    let settings = IkSettings {
        residual_tol: 1e-8,
        ..IkSettings::default()
    };
    let solutions = solve_ik_sequence(&scaled, &seq, None, &settings);

    let mut total_mae = 0.0;
    let mut worst_rms: f64 = 0.0;
    for (sol, gt) in solutions.iter().zip(&truth) {
        let sol = sol.as_ref().expect("all frames solvable");
        total_mae += mae_angle(sol.pose.coords.as_slice(), gt.coords.as_slice())?;
        worst_rms = worst_rms.max(sol.rms_residual);
    }
    println!(
        "ik stage: mean angle error {:.4} deg over {frames} frames, worst marker rms {:.2e} m",
        total_mae / frames as f64,
        worst_rms
    );
    Ok(())
}
