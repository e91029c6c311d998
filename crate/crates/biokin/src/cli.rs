//! Batch front end behind the `biokin` binary: synthetic marker generation,
//! the scale/IK/refine/eval pipeline, and the attention and network demos.
//! Every command is deterministic given its seed and inputs, writes through
//! temp-file renames, and exits nonzero with a single `error:` line on any
//! failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use rand::Rng;

use crate::attention::{dam_forward, FeaturePyramid, QuerySet};
use crate::error::{Error, Result};
use crate::ik::{solve_ik_sequence, solve_scales, IkSettings, MarkerFrameSequence};
use crate::io;
use crate::kinematics::forward_kinematics;
use crate::metrics::{self, EvalReport, PointSetPair};
use crate::neurik::{
    fk_layer, neurik_loss, spatial_encode, temporal_forward, GroundTruth, GroundTruthFrame,
    NeurikConfig, NeurikWeights, OutputMode,
};
use crate::refine::{
    refine, Camera, FixedTranslationPath, RefineSettings,
};
use crate::skeleton::{load_skeleton, Pose, SkeletonModel};
use crate::synth;

#[derive(Parser)]
#[command(name = "biokin", version, about = "Biomechanical kinematics toolbox")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic marker data from sine-driven joint trajectories.
    Gen(GenArgs),
    /// Solve per-segment scales from a calibration frame.
    Scale(ScaleArgs),
    /// Solve inverse kinematics over a marker sequence.
    Ik(IkArgs),
    /// Refine poses against detected 2D keypoints.
    Refine(RefineArgs),
    /// Evaluate predicted poses against reference poses.
    Eval(EvalArgs),
    /// Run the multi-scale deformable-attention kernel on seeded data.
    AttnDemo(AttnArgs),
    /// Run the marker-to-pose network forward pass on seeded data.
    NeurikForward(NeurikArgs),
}

pub fn run() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Scale(a) => cmd_scale(&a),
        Command::Ik(a) => cmd_ik(&a),
        Command::Refine(a) => cmd_refine(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::AttnDemo(a) => cmd_attn_demo(&a),
        Command::NeurikForward(a) => cmd_neurik_forward(&a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn load_model(path: &Path) -> Result<SkeletonModel> {
    load_skeleton(&fs::read_to_string(path)?)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Args)]
struct GenArgs {
    /// Skeleton-definition file.
    #[arg(long)]
    skeleton: PathBuf,
    /// Seed for all stochastic generation.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Frame count.
    #[arg(long, default_value_t = 60)]
    frames: usize,
    /// Fraction of each joint's half-range available to the trajectory.
    #[arg(long, default_value_t = 0.8)]
    amplitude: f64,
    /// Isotropic Gaussian marker noise, meters.
    #[arg(long, default_value_t = 0.0)]
    noise_std: f64,
    /// Per-marker-per-frame probability of being occluded.
    #[arg(long, default_value_t = 0.0)]
    dropout: f64,
    /// Output directory (markers.csv, gt_poses.csv).
    #[arg(long)]
    out: PathBuf,
}

fn cmd_gen(args: &GenArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&args.dropout) || args.noise_std < 0.0 {
        return Err(Error::InvalidArgument(
            "dropout must be in [0,1] and noise nonnegative".into(),
        ));
    }
    if args.frames == 0 {
        return Err(Error::InvalidArgument("need at least one frame".into()));
    }
    let model = load_model(&args.skeleton)?;
    let poses = synth::sine_motion(&model, args.frames, args.seed, args.amplitude.clamp(0.0, 0.95));

    let mut corrupt = synth::seeded_rng(args.seed);
    // Separate stream so trajectory and corruption draws never interleave.
    corrupt.set_stream(1);
    let mut seq = MarkerFrameSequence::default();
    for pose in &poses {
        let mut frame = crate::ik::markers_from_pose(&model, pose)?;
        for p in frame.positions.values_mut() {
            *p += synth::gaussian_noise(&mut corrupt, args.noise_std);
        }
        if args.dropout > 0.0 {
            let names: Vec<String> = frame.positions.keys().cloned().collect();
            for name in names {
                if corrupt.random::<f64>() < args.dropout {
                    frame.visibility.insert(name, false);
                }
            }
        }
        seq.frames.push(frame);
    }

    // One calibration frame at the rest posture, for the scale step.
    let mut calibration = MarkerFrameSequence::default();
    let mut cal_rng = synth::seeded_rng(args.seed);
    cal_rng.set_stream(2);
    let mut cal = crate::ik::markers_from_pose(&model, &Pose::zero(model.total_dof()))?;
    for p in cal.positions.values_mut() {
        *p += synth::gaussian_noise(&mut cal_rng, args.noise_std);
    }
    calibration.frames.push(cal);

    ensure_dir(&args.out)?;
    io::write_atomic(&args.out.join("markers.csv"), &io::write_marker_csv(&seq))?;
    io::write_atomic(
        &args.out.join("gt_poses.csv"),
        &io::write_pose_csv(model.total_dof(), &poses),
    )?;
    io::write_atomic(
        &args.out.join("calibration.csv"),
        &io::write_marker_csv(&calibration),
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Args)]
struct ScaleArgs {
    #[arg(long)]
    skeleton: PathBuf,
    /// Marker CSV with the calibration capture.
    #[arg(long)]
    markers: PathBuf,
    /// Calibration frame index (the T-pose frame).
    #[arg(long, default_value_t = 0)]
    frame: usize,
    /// Output scales CSV.
    #[arg(long)]
    out: PathBuf,
}

fn cmd_scale(args: &ScaleArgs) -> Result<()> {
    let model = load_model(&args.skeleton)?;
    let seq = io::parse_marker_csv(&fs::read_to_string(&args.markers)?)?;
    let frame = seq.frames.get(args.frame).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "calibration frame {} out of range ({} frames)",
            args.frame,
            seq.frames.len()
        ))
    })?;
    let solve = solve_scales(&model, frame, &Pose::zero(model.total_dof()))?;
    for issue in &solve.issues {
        eprintln!(
            "note: segment '{}' kept default scale ({:?})",
            issue.name, issue.kind
        );
    }
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    io::write_atomic(&args.out, &io::write_scales_csv(&model, &solve.scales))?;
    eprintln!(
        "scale: rms residual {} m over the calibration frame",
        io::fmt_g9(solve.rms_residual)
    );
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Args)]
struct IkArgs {
    #[arg(long)]
    skeleton: PathBuf,
    #[arg(long)]
    markers: PathBuf,
    /// Optional scales CSV from the scale step.
    #[arg(long)]
    scales: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    max_iterations: usize,
    #[arg(long, default_value_t = 1e-6)]
    residual_tol: f64,
    #[arg(long, default_value_t = 1e-9)]
    step_tol: f64,
    /// Output pose CSV.
    #[arg(long)]
    out: PathBuf,
}

fn cmd_ik(args: &IkArgs) -> Result<()> {
    let mut model = load_model(&args.skeleton)?;
    if let Some(scales_path) = &args.scales {
        let scales = io::parse_scales_csv(&fs::read_to_string(scales_path)?, &model)?;
        model = model.apply_scales(&scales)?;
    }
    let seq = io::parse_marker_csv(&fs::read_to_string(&args.markers)?)?;
    if seq.frames.is_empty() {
        return Err(Error::InvalidArgument("marker file has no frames".into()));
    }
    let settings = IkSettings {
        max_iterations: args.max_iterations,
        residual_tol: args.residual_tol,
        step_tol: args.step_tol,
        ..IkSettings::default()
    };
    let solutions = solve_ik_sequence(&model, &seq, None, &settings);
    let mut poses = Vec::with_capacity(solutions.len());
    let mut failed = false;
    for sol in &solutions {
        match sol {
            Ok(s) => poses.push(s.pose.clone()),
            Err(e) => {
                eprintln!("error: {e}");
                failed = true;
            }
        }
    }
    if failed {
        return Err(Error::InvalidArgument(
            "one or more frames failed to solve; no output written".into(),
        ));
    }
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    io::write_atomic(&args.out, &io::write_pose_csv(model.total_dof(), &poses))?;
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Args)]
struct RefineArgs {
    #[arg(long)]
    skeleton: PathBuf,
    /// Initial poses CSV.
    #[arg(long)]
    poses: PathBuf,
    /// Detected 2D keypoints CSV (one row per joint per frame).
    #[arg(long)]
    keypoints: PathBuf,
    #[arg(long, default_value_t = 5000.0)]
    focal: f64,
    /// Principal point, pixels.
    #[arg(long, num_args = 2, value_names = ["PX", "PY"], default_values_t = [0.0, 0.0])]
    principal: Vec<f64>,
    /// Camera translation, meters.
    #[arg(long, num_args = 3, value_names = ["TX", "TY", "TZ"], default_values_t = [0.0, 0.0, 4.0])]
    cam_t: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    iters: usize,
    #[arg(long, default_value_t = 1e-2)]
    step_size: f64,
    #[arg(long, default_value_t = 1e-3)]
    lambda_theta: f64,
    /// Use the plain fixed-step update instead of backtracking.
    #[arg(long)]
    no_backtracking: bool,
    /// Hold each frame's root translation fixed and refine only the joint
    /// coordinates.
    #[arg(long)]
    fix_translation: bool,
    /// Output directory (refined.csv, trace.csv).
    #[arg(long)]
    out: PathBuf,
}

fn cmd_refine(args: &RefineArgs) -> Result<()> {
    let model = load_model(&args.skeleton)?;
    let poses = io::parse_pose_csv(&fs::read_to_string(&args.poses)?)?;
    let keypoints = io::parse_keypoint_csv(&fs::read_to_string(&args.keypoints)?)?;
    if poses.len() != keypoints.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} poses vs {} keypoint frames",
            poses.len(),
            keypoints.len()
        )));
    }
    let cam = Camera {
        focal: args.focal,
        principal_point: Vector2::new(args.principal[0], args.principal[1]),
        translation: Vector3::new(args.cam_t[0], args.cam_t[1], args.cam_t[2]),
    };
    let settings = RefineSettings {
        step_size: args.step_size,
        iterations: args.iters,
        lambda_theta: args.lambda_theta,
        keypoint_confidences: None,
        backtracking: !args.no_backtracking,
    };

    let dof = model.total_dof();
    let mut refined = Vec::with_capacity(poses.len());
    let mut trace_csv = String::from("frame,iter,loss\n");
    for (t, (pose, kps)) in poses.iter().zip(&keypoints).enumerate() {
        if pose.coords.len() != dof {
            return Err(Error::DimensionMismatch(format!(
                "frame {t}: pose has {} coordinates, skeleton has {dof}",
                pose.coords.len()
            ))
            .at_frame(t));
        }
        if kps.len() != model.joints().len() {
            return Err(Error::DimensionMismatch(format!(
                "{} keypoints for {} joints",
                kps.len(),
                model.joints().len()
            ))
            .at_frame(t));
        }
        let joints_2d: Vec<Vector2<f64>> = kps.iter().map(|(u, v, _)| Vector2::new(*u, *v)).collect();
        let conf: Vec<f64> = kps.iter().map(|(_, _, c)| *c).collect();
        let settings = RefineSettings {
            keypoint_confidences: Some(conf),
            ..settings.clone()
        };

        let state = if args.fix_translation {
            let path = FixedTranslationPath {
                model: &model,
                translation: pose.root_translation,
            };
            refine(pose.coords.clone(), &joints_2d, &path, &cam, &settings)
                .map_err(|e| e.at_frame(t))?
        } else {
            let theta0 = DVector::from_fn(dof + 3, |i, _| {
                if i < dof {
                    pose.coords[i]
                } else {
                    pose.root_translation[i - dof]
                }
            });
            refine(theta0, &joints_2d, &model, &cam, &settings).map_err(|e| e.at_frame(t))?
        };

        for (i, loss) in state.loss_trace.iter().enumerate() {
            trace_csv.push_str(&format!("{t},{i},{}\n", io::fmt_g9(*loss)));
        }
        let out_pose = if args.fix_translation {
            Pose::new(state.theta_prime.clone(), pose.root_translation)
        } else {
            Pose::new(
                state.theta_prime.rows(0, dof).into_owned(),
                Vector3::new(
                    state.theta_prime[dof],
                    state.theta_prime[dof + 1],
                    state.theta_prime[dof + 2],
                ),
            )
        };
        refined.push(out_pose);
    }

    ensure_dir(&args.out)?;
    io::write_atomic(&args.out.join("refined.csv"), &io::write_pose_csv(dof, &refined))?;
    io::write_atomic(&args.out.join("trace.csv"), &trace_csv)?;
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    skeleton: PathBuf,
    /// Predicted poses CSV.
    #[arg(long)]
    pred: PathBuf,
    /// Reference poses CSV.
    #[arg(long)]
    target: PathBuf,
    /// Output directory (report.txt, report.csv).
    #[arg(long)]
    out: PathBuf,
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let model = load_model(&args.skeleton)?;
    let pred = io::parse_pose_csv(&fs::read_to_string(&args.pred)?)?;
    let target = io::parse_pose_csv(&fs::read_to_string(&args.target)?)?;
    if pred.len() != target.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predicted frames vs {} reference frames",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InvalidArgument("no frames to evaluate".into()));
    }

    let mut report = EvalReport {
        columns: vec![
            "mae_angle_deg".into(),
            "mpjpe_mm".into(),
            "pa_mpjpe_mm".into(),
            "mpblpe_mm".into(),
        ],
        ..EvalReport::default()
    };
    let timed = metrics::time_run(pred.len(), || {
        for (t, (p, q)) in pred.iter().zip(&target).enumerate() {
            let row = (|| -> Result<Vec<f64>> {
                let fp = forward_kinematics(&model, p)?;
                let fq = forward_kinematics(&model, q)?;
                let pair = PointSetPair::new(fp.joint_world.clone(), fq.joint_world.clone());
                Ok(vec![
                    metrics::mae_angle(p.coords.as_slice(), q.coords.as_slice())?,
                    metrics::mpjpe(&pair)?,
                    metrics::pa_mpjpe(&pair)?,
                    metrics::mpblpe(&pair.clone().with_root(0))?,
                ])
            })();
            match row {
                Ok(r) => report.rows.push(r),
                Err(e) => {
                    report.rows.push(vec![f64::NAN; 4]);
                    eprintln!("error: {}", e.at_frame(t));
                }
            }
        }
    });
    for (c, name) in report.columns.clone().iter().enumerate() {
        let mean = report.rows.iter().map(|r| r[c]).sum::<f64>() / report.rows.len() as f64;
        report.aggregates.push((format!("{name}_mean"), mean));
    }

    ensure_dir(&args.out)?;
    io::write_atomic(&args.out.join("report.txt"), &report.to_text())?;
    io::write_atomic(&args.out.join("report.csv"), &report.to_csv())?;
    // Timing goes to stderr so the report files stay deterministic.
    eprintln!("aiti: {} s/frame", io::fmt_g9(timed.aiti()?));
    if report.rows.iter().any(|r| r.iter().any(|v| v.is_nan())) {
        return Err(Error::InvalidArgument("some frames failed to evaluate".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Args)]
struct AttnArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Pose-token query count.
    #[arg(long, default_value_t = 96)]
    queries: usize,
    /// Sampling points per scale.
    #[arg(long, default_value_t = 4)]
    points: usize,
    #[arg(long, default_value_t = 16)]
    channels: usize,
    /// Finest feature-map size; coarser levels follow the 1/4/8/16 strides.
    #[arg(long, default_value_t = 64)]
    base_size: usize,
    /// Output CSV of the K×C attention output.
    #[arg(long)]
    out: PathBuf,
}

fn cmd_attn_demo(args: &AttnArgs) -> Result<()> {
    let pyramid = FeaturePyramid::synthetic(args.seed, args.base_size, args.base_size, args.channels);
    let qs = QuerySet::synthetic(
        args.seed.wrapping_add(1),
        args.queries,
        pyramid.levels.len(),
        args.points,
        args.channels,
    );
    let out = dam_forward(&pyramid, &qs)?;

    let mut csv = String::from("query");
    for c in 0..args.channels {
        csv.push_str(&format!(",c{c}"));
    }
    csv.push('\n');
    for q in 0..args.queries {
        csv.push_str(&q.to_string());
        for c in 0..args.channels {
            csv.push(',');
            csv.push_str(&io::fmt_g9(out[(q, c)]));
        }
        csv.push('\n');
    }
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    io::write_atomic(&args.out, &csv)?;
    eprintln!(
        "attn-demo: {} queries x {} channels over {} levels",
        args.queries,
        args.channels,
        pyramid.levels.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Args)]
struct NeurikArgs {
    #[arg(long)]
    skeleton: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Virtual marker count (library default 142; demo default smaller).
    #[arg(long, default_value_t = 32)]
    markers: usize,
    #[arg(long, default_value_t = 8)]
    channels: usize,
    #[arg(long, default_value_t = 16)]
    frames: usize,
    #[arg(long, default_value_t = 2)]
    blocks: usize,
    #[arg(long, default_value_t = 4)]
    ffn_mult: usize,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    /// Emit every frame's pose instead of the last frame only.
    #[arg(long)]
    all_frames: bool,
    /// Also write the seeded weights as a named-array container.
    #[arg(long)]
    save_weights: bool,
    /// Output directory (scales.csv, poses.csv, loss.txt).
    #[arg(long)]
    out: PathBuf,
}

fn cmd_neurik_forward(args: &NeurikArgs) -> Result<()> {
    let model = load_model(&args.skeleton)?;
    let config = NeurikConfig {
        marker_count: args.markers,
        spatial_channels: args.channels,
        frames: args.frames,
        attention_heads: args.heads,
        attention_blocks: args.blocks,
        ffn_multiplier: args.ffn_mult,
        output_mode: if args.all_frames {
            OutputMode::AllFrames
        } else {
            OutputMode::SingleLastFrame
        },
        ..NeurikConfig::default_for(&model)
    };
    config.validate()?;
    let weights = NeurikWeights::seeded(&config, args.seed)?;

    // Smooth synthetic virtual-marker trajectories.
    let mut rng = synth::seeded_rng(args.seed.wrapping_add(7));
    let base: Vec<Vector3<f64>> = (0..config.marker_count)
        .map(|_| {
            Vector3::new(
                synth::uniform(&mut rng, -0.5, 0.5),
                synth::uniform(&mut rng, -0.8, 0.8),
                synth::uniform(&mut rng, -0.3, 0.3),
            )
        })
        .collect();
    let phases: Vec<f64> = (0..config.marker_count)
        .map(|_| synth::uniform(&mut rng, 0.0, std::f64::consts::TAU))
        .collect();
    let sequence: Vec<DMatrix<f64>> = (0..config.frames)
        .map(|t| {
            let s = t as f64 / config.frames as f64;
            let markers = DMatrix::from_fn(config.marker_count, 3, |m, a| {
                base[m][a] + 0.05 * (std::f64::consts::TAU * s + phases[m] + a as f64).sin()
            });
            spatial_encode(&markers, &weights, &config)
        })
        .collect::<Result<_>>()?;

    let output = temporal_forward(&sequence, &weights, &config)?;
    let output = fk_layer(&output, &model)?;

    // Seeded ground truth from the skeleton itself.
    let gt_pose = synth::random_pose(&model, &mut rng, 0.2);
    let gt_scales: Vec<Vector3<f64>> = (0..model.joints().len())
        .map(|_| synth::random_scale(&mut rng))
        .collect();
    let gt_fk = forward_kinematics(
        &model.apply_scales(&gt_scales)?,
        &Pose::new(gt_pose.coords.clone(), Vector3::zeros()),
    )?;
    let gt = GroundTruth {
        frames: output
            .q_r_hat
            .iter()
            .map(|_| GroundTruthFrame {
                joints: gt_fk.joint_world.clone(),
                markers: gt_fk.marker_world.clone(),
                q_r: gt_pose.coords.clone(),
            })
            .collect(),
        scales: gt_scales,
    };
    let loss = neurik_loss(&output, &gt, &config)?;

    ensure_dir(&args.out)?;
    io::write_atomic(
        &args.out.join("scales.csv"),
        &io::write_scales_csv(&model, &output.scales_hat),
    )?;
    let poses: Vec<Pose> = output
        .q_r_hat
        .iter()
        .map(|q| Pose::new(q.clone(), Vector3::zeros()))
        .collect();
    io::write_atomic(
        &args.out.join("poses.csv"),
        &io::write_pose_csv(model.total_dof(), &poses),
    )?;
    let loss_txt = format!(
        "loss_joints = {}\nloss_markers = {}\nloss_scales = {}\nloss_angles = {}\nloss_total = {}\n",
        io::fmt_g9(loss.joints),
        io::fmt_g9(loss.markers),
        io::fmt_g9(loss.scales),
        io::fmt_g9(loss.angles),
        io::fmt_g9(loss.total)
    );
    io::write_atomic(&args.out.join("loss.txt"), &loss_txt)?;
    if args.save_weights {
        weights.to_container(&config).save(&args.out.join("weights.json"))?;
    }
    Ok(())
}
