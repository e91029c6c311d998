//! The marker-to-pose network at demo scale: spatial convolution encoder,
//! temporal transformer, FK layer, four-term loss, and a finite-difference
//! check of the analytic loss gradient.

use biokin::kinematics::forward_kinematics;
use biokin::neurik::{
    fk_layer, frame_loss, loss_gradient, neurik_loss, spatial_encode, temporal_forward,
    GroundTruth, GroundTruthFrame, NeurikConfig, NeurikWeights,
};
use biokin::skeleton::{load_skeleton, Pose};
use biokin::synth;
use nalgebra::{DMatrix, Vector3};

fn main() -> biokin::Result<()> {
    let model = load_skeleton(biokin::assets::FULL_BODY_24)?;
    let config = NeurikConfig {
        marker_count: 24,
        spatial_channels: 8,
        frames: 12,
        ..NeurikConfig::default_for(&model)
    };
    let weights = NeurikWeights::seeded(&config, 42)?;
    println!(
        "config: {} markers x {} channels, {} frames, embed dim {}",
        config.marker_count,
        config.spatial_channels,
        config.frames,
        config.embed_dim()
    );

    let mut rng = synth::seeded_rng(1);
    let sequence: Vec<DMatrix<f64>> = (0..config.frames)
        .map(|_| {
            let markers = DMatrix::from_fn(config.marker_count, 3, |_, _| {
                synth::uniform(&mut rng, -0.8, 0.8)
            });
            spatial_encode(&markers, &weights, &config)
        })
        .collect::<biokin::Result<_>>()?;
    println!(
        "spatial embeddings: {} frames of {}x{}",
        sequence.len(),
        sequence[0].nrows(),
        sequence[0].ncols()
    );

    let output = fk_layer(&temporal_forward(&sequence, &weights, &config)?, &model)?;
    println!(
        "predictions: {} scale triples, {} pose vector(s) of {} coordinates",
        output.scales_hat.len(),
        output.q_r_hat.len(),
        output.q_r_hat[0].len()
    );

    // Ground truth from a random in-range pose at random scales.
    let gt_pose = synth::random_pose(&model, &mut rng, 0.2);
    let gt_scales: Vec<Vector3<f64>> = (0..24).map(|_| synth::random_scale(&mut rng)).collect();
    let gt_fk = forward_kinematics(
        &model.apply_scales(&gt_scales)?,
        &Pose::new(gt_pose.coords.clone(), Vector3::zeros()),
    )?;
    let frame = GroundTruthFrame {
        joints: gt_fk.joint_world,
        markers: gt_fk.marker_world,
        q_r: gt_pose.coords.clone(),
    };
    let gt = GroundTruth {
        frames: vec![frame.clone()],
        scales: gt_scales.clone(),
    };
    let loss = neurik_loss(&output, &gt, &config)?;
    println!(
        "loss: joints {:.4} + markers {:.4} + scales {:.4} + angles {:.4} -> total {:.4}",
        loss.joints, loss.markers, loss.scales, loss.angles, loss.total
    );

    // Gradient of the FK-path loss vs central differences on one coordinate.
    let g = loss_gradient(
        &model,
        &output.q_r_hat[0],
        &output.scales_hat,
        &frame,
        &gt_scales,
        &config.loss_weights,
    )?;
    let h = 1e-6;
    let c = 7;
    let mut qp = output.q_r_hat[0].clone();
    qp[c] += h;
    let mut qm = output.q_r_hat[0].clone();
    qm[c] -= h;
    let fd = (frame_loss(&model, &qp, &output.scales_hat, &frame, &gt_scales, &config.loss_weights)?
        .total
        - frame_loss(&model, &qm, &output.scales_hat, &frame, &gt_scales, &config.loss_weights)?
            .total)
        / (2.0 * h);
    println!(
        "loss gradient, coordinate {c}: analytic {:+.6e}, finite difference {:+.6e}",
        g.wrt_coords[c], fd
    );
    Ok(())
}
