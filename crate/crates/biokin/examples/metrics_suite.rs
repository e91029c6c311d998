//! The evaluation metric suite on a perturbed full-body pose.

use biokin::kinematics::forward_kinematics;
use biokin::metrics::{
    mae_angle, mae_body, mpblpe, mpjpe, pa_mpjpe, pa_mpjpe_with_mode, time_run, AlignMode,
    PointSetPair, SegmentAxisRule,
};
use biokin::skeleton::load_skeleton;
use biokin::synth;
use nalgebra::Vector3;
use std::collections::BTreeMap;

fn main() -> biokin::Result<()> {
    let model = load_skeleton(biokin::assets::FULL_BODY_24)?;
    let mut rng = synth::seeded_rng(8);
    let truth = synth::random_pose(&model, &mut rng, 0.2);
    let guess = synth::perturb_pose(&model, &truth, &mut rng, 3f64.to_radians());

    let run = time_run(1, || {});
    let fk_truth = forward_kinematics(&model, &truth)?;
    let fk_guess = forward_kinematics(&model, &guess)?;

    let pair = PointSetPair::new(fk_guess.joint_world.clone(), fk_truth.joint_world.clone());
    println!("mpjpe      {:8.3} mm", mpjpe(&pair)?);
    println!("pa-mpjpe   {:8.3} mm (similarity)", pa_mpjpe(&pair)?);
    println!(
        "pa-mpjpe   {:8.3} mm (rigid only)",
        pa_mpjpe_with_mode(&pair, AlignMode::Rigid)?
    );
    println!("mpblpe     {:8.3} mm (root-aligned)", mpblpe(&pair.clone().with_root(0))?);

    let vertices = PointSetPair::new(fk_guess.marker_world.clone(), fk_truth.marker_world.clone());
    println!("mve        {:8.3} mm (marker set)", mpjpe(&vertices)?);

    println!(
        "mae_angle  {:8.4} deg",
        mae_angle(guess.coords.as_slice(), truth.coords.as_slice())?
    );

    // Body-dimension error from slightly wrong scales.
    let mut pred_scales = BTreeMap::new();
    let mut target_scales = BTreeMap::new();
    let mut dims = BTreeMap::new();
    for joint in model.joints() {
        let wobble = Vector3::new(
            1.0 + synth::uniform(&mut rng, -0.02, 0.02),
            1.0 + synth::uniform(&mut rng, -0.02, 0.02),
            1.0 + synth::uniform(&mut rng, -0.02, 0.02),
        );
        pred_scales.insert(joint.name.clone(), wobble);
        target_scales.insert(joint.name.clone(), Vector3::repeat(1.0));
        dims.insert(joint.name.clone(), Vector3::new(120.0, 320.0, 90.0));
    }
    let rules = SegmentAxisRule::full_body();
    println!(
        "mae_body   {:8.3} mm",
        mae_body(&pred_scales, &target_scales, &dims, &rules)?
    );
    println!("aiti       {:8.2e} s/frame (trivial run)", run.aiti()?);
    Ok(())
}
