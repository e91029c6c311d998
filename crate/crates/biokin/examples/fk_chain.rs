//! Forward kinematics on the 3-segment test chain: evaluate joint and marker
//! positions at a bent pose and cross-check the analytic Jacobian against
//! central finite differences.

use biokin::kinematics::{fk_jacobian, forward_kinematics};
use biokin::skeleton::{load_skeleton, Pose};

fn main() -> biokin::Result<()> {
    let model = load_skeleton(biokin::assets::CHAIN_3)?;
    println!(
        "loaded '{}': {} segments, {} DOF, {} markers",
        model.name(),
        model.joints().len(),
        model.total_dof(),
        model.markers().len()
    );

    let mut pose = Pose::zero(model.total_dof());
    pose.coords[3] = 45f64.to_radians(); // bend the middle hinge
    pose.coords[4] = -30f64.to_radians(); // and the distal one

    let fk = forward_kinematics(&model, &pose)?;
    for (joint, p) in model.joints().iter().zip(&fk.joint_world) {
        println!("joint  {:8} at [{:+.4}, {:+.4}, {:+.4}] m", joint.name, p.x, p.y, p.z);
    }
    for (marker, p) in model.markers().iter().zip(&fk.marker_world) {
        println!("marker {:8} at [{:+.4}, {:+.4}, {:+.4}] m", marker.name, p.x, p.y, p.z);
    }

    // Analytic Jacobian vs central differences on one coordinate.
    let jac = fk_jacobian(&model, &pose)?;
    let h = 1e-6;
    let coord = 3;
    let mut plus = pose.clone();
    plus.coords[coord] += h;
    let mut minus = pose.clone();
    minus.coords[coord] -= h;
    let fp = forward_kinematics(&model, &plus)?;
    let fm = forward_kinematics(&model, &minus)?;
    let mut worst: f64 = 0.0;
    for (m, (a, b)) in fp.marker_world.iter().zip(&fm.marker_world).enumerate() {
        let fd = (a - b) / (2.0 * h);
        for r in 0..3 {
            worst = worst.max((jac[(3 * m + r, coord)] - fd[r]).abs());
        }
    }
    println!("jacobian column {coord} vs finite differences: max abs error {worst:.2e}");
    Ok(())
}
