//! 2D pose-informed refinement: project a ground-truth pose to synthetic
//! keypoints, start from a perturbed pose, and run the iteration grid.

use biokin::refine::{
    project, refine, reprojection_rms, Camera, FixedTranslationPath, PoseToJoints,
    RefineSettings, ITERATION_PRESETS,
};
use biokin::skeleton::load_skeleton;
use biokin::synth;
use nalgebra::{Vector2, Vector3};

fn main() -> biokin::Result<()> {
    let model = load_skeleton(biokin::assets::FULL_BODY_24)?;
    let cam = Camera {
        focal: 5000.0,
        principal_point: Vector2::new(500.0, 500.0),
        translation: Vector3::new(0.0, 0.0, 4.0),
    };

    let mut rng = synth::seeded_rng(3);
    let truth = synth::random_pose(&model, &mut rng, 0.3);
    let path = FixedTranslationPath {
        model: &model,
        translation: truth.root_translation * 0.2,
    };
    let joints_2d = project(&path.joint_positions(&truth.coords)?, &cam)?;
    let start = synth::perturb_coords(&model, &truth, &mut rng, 5f64.to_radians());
    let before = reprojection_rms(&start.coords, &joints_2d, &path, &cam)?;
    println!("initial reprojection error: {before:.3} px rms over {} joints", joints_2d.len());

    for iters in ITERATION_PRESETS {
        let settings = RefineSettings {
            iterations: iters,
            ..RefineSettings::default()
        };
        let state = refine(start.coords.clone(), &joints_2d, &path, &cam, &settings)?;
        let after = reprojection_rms(&state.theta_prime, &joints_2d, &path, &cam)?;
        println!(
            "T = {iters:>2}: {before:8.3} px -> {after:8.4} px   trace {}",
            state
                .loss_trace
                .iter()
                .map(|l| format!("{l:.1}"))
                .collect::<Vec<_>>()
                .join(" > ")
        );
    }
    Ok(())
}
