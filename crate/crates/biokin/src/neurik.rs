//! Spatio-temporal marker-to-pose network at toy scale: a spatial convolution
//! encoder over per-frame virtual markers, a temporal transformer over the
//! flattened frame sequence, heads predicting segment scales and joint
//! angles, a forward-kinematics layer enforcing the skeleton's constraints,
//! and the four-term loss with analytic gradients through the FK path.
//!
//! Weights are seeded pseudo-random (Xavier-uniform, one ChaCha stream
//! consumed in construction order); there is no training loop. The module
//! exists to verify dataflow, shapes, losses, and gradients.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::error::{Error, Result};
use crate::kinematics::{fk_jacobian, fk_joint_jacobian, fk_scale_jacobians, forward_kinematics};
use crate::skeleton::{Pose, SkeletonModel};
use crate::synth;

/// Loss term weights (defaults: joints 1.0, markers 2.0, scales 0.1,
/// angles 0.06).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub joints: f64,
    pub markers: f64,
    pub scales: f64,
    pub angles: f64,
}

impl Default for LossWeights {
    fn default() -> LossWeights {
        LossWeights {
            joints: 1.0,
            markers: 2.0,
            scales: 0.1,
            angles: 0.06,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputMode {
    /// One (scales, q_r) pair from the last frame.
    #[default]
    SingleLastFrame,
    /// Joint angles for every frame; scales still once, from the last frame.
    AllFrames,
}

#[derive(Debug, Clone)]
pub struct NeurikConfig {
    pub marker_count: usize,
    pub spatial_channels: usize,
    pub frames: usize,
    pub conv_layers: usize,
    pub conv_kernel: usize,
    pub attention_heads: usize,
    pub attention_blocks: usize,
    pub ffn_multiplier: usize,
    pub output_mode: OutputMode,
    pub loss_weights: LossWeights,
    /// Segment count of the driven skeleton (scale head width / 3).
    pub segment_count: usize,
    /// DOF count of the driven skeleton (angle head width).
    pub dof_count: usize,
}

impl NeurikConfig {
    /// Full-scale defaults (142 markers, 32 channels, 64 frames) sized to a
    /// skeleton.
    pub fn default_for(model: &SkeletonModel) -> NeurikConfig {
        NeurikConfig {
            marker_count: 142,
            spatial_channels: 32,
            frames: 64,
            conv_layers: 2,
            conv_kernel: 3,
            attention_heads: 4,
            attention_blocks: 2,
            ffn_multiplier: 4,
            output_mode: OutputMode::SingleLastFrame,
            loss_weights: LossWeights::default(),
            segment_count: model.joints().len(),
            dof_count: model.total_dof(),
        }
    }

    /// Flattened per-frame embedding width `M·c`.
    pub fn embed_dim(&self) -> usize {
        self.marker_count * self.spatial_channels
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim() / self.attention_heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.marker_count == 0 || self.spatial_channels == 0 || self.frames == 0 {
            return Err(Error::InvalidArgument(
                "marker count, channels, and frames must be positive".into(),
            ));
        }
        if !self.embed_dim().is_multiple_of(self.attention_heads) {
            return Err(Error::InvalidArgument(format!(
                "embedding width {} not divisible by {} heads",
                self.embed_dim(),
                self.attention_heads
            )));
        }
        if self.conv_kernel.is_multiple_of(2) {
            return Err(Error::InvalidArgument(
                "convolution kernel must be odd for same-padding".into(),
            ));
        }
        if self.segment_count == 0 || self.dof_count == 0 {
            return Err(Error::InvalidArgument(
                "config must be sized to a skeleton".into(),
            ));
        }
        Ok(())
    }
}

/// One 1-D convolution over the marker axis: `weight[out][in][tap]`.
#[derive(Debug, Clone)]
pub struct ConvLayer {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub channels: usize,
    pub kernel: usize,
}

impl ConvLayer {
    #[inline]
    fn w(&self, out: usize, inp: usize, tap: usize) -> f64 {
        self.weight[(out * self.channels + inp) * self.kernel + tap]
    }
}

/// One self-attention block. Matrices are stored in right-multiply layout
/// (input dim × output dim), so activations apply as `z * w`.
#[derive(Debug, Clone)]
pub struct AttentionBlock {
    pub wq: DMatrix<f64>,
    pub wk: DMatrix<f64>,
    pub wv: DMatrix<f64>,
    pub wo: DMatrix<f64>,
    pub ffn_w1: DMatrix<f64>,
    pub ffn_b1: DVector<f64>,
    pub ffn_w2: DMatrix<f64>,
    pub ffn_b2: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct NeurikWeights {
    pub input_proj: DMatrix<f64>, // 3×c, right-multiply
    pub input_bias: DVector<f64>, // c
    pub conv: Vec<ConvLayer>,
    pub pos_embedding: DMatrix<f64>, // n×(M·c)
    pub blocks: Vec<AttentionBlock>,
    pub scale_head: DMatrix<f64>, // d×3S; output is log-scale, exponentiated
    pub scale_bias: DVector<f64>,
    pub angle_head: DMatrix<f64>, // d×D
    pub angle_bias: DVector<f64>,
}

impl NeurikWeights {
    /// Xavier-uniform initialization from one seeded ChaCha stream, consumed
    /// in construction order (column-major within each matrix). Biases are
    /// zero.
    pub fn seeded(config: &NeurikConfig, seed: u64) -> Result<NeurikWeights> {
        config.validate()?;
        let mut rng = synth::seeded_rng(seed);
        fn xavier(rng: &mut rand_chacha::ChaCha20Rng, rows: usize, cols: usize) -> DMatrix<f64> {
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            DMatrix::from_fn(rows, cols, |_, _| synth::uniform(rng, -bound, bound))
        }
        let c = config.spatial_channels;
        let d = config.embed_dim();

        let input_proj = xavier(&mut rng, 3, c);
        let input_bias = DVector::zeros(c);
        let mut conv = Vec::with_capacity(config.conv_layers);
        for _ in 0..config.conv_layers {
            let fan = c * config.conv_kernel;
            let bound = (6.0 / (fan + fan) as f64).sqrt();
            let weight = (0..c * c * config.conv_kernel)
                .map(|_| synth::uniform(&mut rng, -bound, bound))
                .collect();
            conv.push(ConvLayer {
                weight,
                bias: vec![0.0; c],
                channels: c,
                kernel: config.conv_kernel,
            });
        }
        let pos_embedding =
            DMatrix::from_fn(config.frames, d, |_, _| synth::uniform(&mut rng, -0.02, 0.02));
        let mut blocks = Vec::with_capacity(config.attention_blocks);
        for _ in 0..config.attention_blocks {
            let f = d * config.ffn_multiplier;
            blocks.push(AttentionBlock {
                wq: xavier(&mut rng, d, d),
                wk: xavier(&mut rng, d, d),
                wv: xavier(&mut rng, d, d),
                wo: xavier(&mut rng, d, d),
                ffn_w1: xavier(&mut rng, d, f),
                ffn_b1: DVector::zeros(f),
                ffn_w2: xavier(&mut rng, f, d),
                ffn_b2: DVector::zeros(d),
            });
        }
        let scale_head = xavier(&mut rng, d, 3 * config.segment_count);
        let scale_bias = DVector::zeros(3 * config.segment_count);
        let angle_head = xavier(&mut rng, d, config.dof_count);
        let angle_bias = DVector::zeros(config.dof_count);
        Ok(NeurikWeights {
            input_proj,
            input_bias,
            conv,
            pos_embedding,
            blocks,
            scale_head,
            scale_bias,
            angle_head,
            angle_bias,
        })
    }
}

impl NeurikWeights {
    /// Serializes to the self-describing named-array container; `meta` holds
    /// the config dimensions the arrays were sized for.
    pub fn to_container(&self, config: &NeurikConfig) -> crate::io::ArrayContainer {
        let mut c = crate::io::ArrayContainer::default();
        let flat = |m: &DMatrix<f64>| -> Vec<f64> {
            let mut out = Vec::with_capacity(m.nrows() * m.ncols());
            for r in 0..m.nrows() {
                for col in 0..m.ncols() {
                    out.push(m[(r, col)]);
                }
            }
            out
        };
        let d = config.embed_dim();
        let meta = vec![
            config.marker_count as f64,
            config.spatial_channels as f64,
            config.frames as f64,
            config.attention_heads as f64,
            config.attention_blocks as f64,
            config.ffn_multiplier as f64,
            config.segment_count as f64,
            config.dof_count as f64,
        ];
        c.insert("meta", vec![meta.len()], meta).unwrap();
        c.insert("input_proj", vec![3, config.spatial_channels], flat(&self.input_proj))
            .unwrap();
        c.insert(
            "input_bias",
            vec![config.spatial_channels],
            self.input_bias.iter().copied().collect(),
        )
        .unwrap();
        for (i, layer) in self.conv.iter().enumerate() {
            c.insert(
                &format!("conv_{i}_weight"),
                vec![layer.channels, layer.channels, layer.kernel],
                layer.weight.clone(),
            )
            .unwrap();
            c.insert(&format!("conv_{i}_bias"), vec![layer.channels], layer.bias.clone())
                .unwrap();
        }
        c.insert("pos_embedding", vec![config.frames, d], flat(&self.pos_embedding))
            .unwrap();
        for (i, b) in self.blocks.iter().enumerate() {
            let f = d * config.ffn_multiplier;
            c.insert(&format!("block_{i}_wq"), vec![d, d], flat(&b.wq)).unwrap();
            c.insert(&format!("block_{i}_wk"), vec![d, d], flat(&b.wk)).unwrap();
            c.insert(&format!("block_{i}_wv"), vec![d, d], flat(&b.wv)).unwrap();
            c.insert(&format!("block_{i}_wo"), vec![d, d], flat(&b.wo)).unwrap();
            c.insert(&format!("block_{i}_ffn_w1"), vec![d, f], flat(&b.ffn_w1)).unwrap();
            c.insert(&format!("block_{i}_ffn_b1"), vec![f], b.ffn_b1.iter().copied().collect())
                .unwrap();
            c.insert(&format!("block_{i}_ffn_w2"), vec![f, d], flat(&b.ffn_w2)).unwrap();
            c.insert(&format!("block_{i}_ffn_b2"), vec![d], b.ffn_b2.iter().copied().collect())
                .unwrap();
        }
        c.insert(
            "scale_head",
            vec![d, 3 * config.segment_count],
            flat(&self.scale_head),
        )
        .unwrap();
        c.insert(
            "scale_bias",
            vec![3 * config.segment_count],
            self.scale_bias.iter().copied().collect(),
        )
        .unwrap();
        c.insert("angle_head", vec![d, config.dof_count], flat(&self.angle_head))
            .unwrap();
        c.insert(
            "angle_bias",
            vec![config.dof_count],
            self.angle_bias.iter().copied().collect(),
        )
        .unwrap();
        c
    }

    /// Rebuilds weights from a container, validating every shape against the
    /// config (and the config against the stored `meta`).
    pub fn from_container(
        c: &crate::io::ArrayContainer,
        config: &NeurikConfig,
    ) -> Result<NeurikWeights> {
        config.validate()?;
        let meta = c.get("meta")?;
        let expect = [
            config.marker_count,
            config.spatial_channels,
            config.frames,
            config.attention_heads,
            config.attention_blocks,
            config.ffn_multiplier,
            config.segment_count,
            config.dof_count,
        ];
        if meta.data.len() != expect.len()
            || meta.data.iter().zip(&expect).any(|(a, b)| *a != *b as f64)
        {
            return Err(Error::Validation(
                "weight container meta disagrees with the config".into(),
            ));
        }
        let grab = |name: &str, rows: usize, cols: usize| -> Result<DMatrix<f64>> {
            let a = c.get(name)?;
            if a.shape != vec![rows, cols] {
                return Err(Error::DimensionMismatch(format!(
                    "array '{name}' is {:?}, want [{rows}, {cols}]",
                    a.shape
                )));
            }
            Ok(DMatrix::from_fn(rows, cols, |r, col| a.data[r * cols + col]))
        };
        let vec1 = |name: &str, len: usize| -> Result<DVector<f64>> {
            let a = c.get(name)?;
            if a.shape != vec![len] {
                return Err(Error::DimensionMismatch(format!(
                    "array '{name}' is {:?}, want [{len}]",
                    a.shape
                )));
            }
            Ok(DVector::from_vec(a.data.clone()))
        };
        let d = config.embed_dim();
        let cch = config.spatial_channels;
        let mut conv = Vec::with_capacity(config.conv_layers);
        for i in 0..config.conv_layers {
            let w = c.get(&format!("conv_{i}_weight"))?;
            if w.shape != vec![cch, cch, config.conv_kernel] {
                return Err(Error::DimensionMismatch(format!(
                    "conv layer {i} weight shape {:?}",
                    w.shape
                )));
            }
            conv.push(ConvLayer {
                weight: w.data.clone(),
                bias: c.get(&format!("conv_{i}_bias"))?.data.clone(),
                channels: cch,
                kernel: config.conv_kernel,
            });
        }
        let mut blocks = Vec::with_capacity(config.attention_blocks);
        for i in 0..config.attention_blocks {
            let f = d * config.ffn_multiplier;
            blocks.push(AttentionBlock {
                wq: grab(&format!("block_{i}_wq"), d, d)?,
                wk: grab(&format!("block_{i}_wk"), d, d)?,
                wv: grab(&format!("block_{i}_wv"), d, d)?,
                wo: grab(&format!("block_{i}_wo"), d, d)?,
                ffn_w1: grab(&format!("block_{i}_ffn_w1"), d, f)?,
                ffn_b1: vec1(&format!("block_{i}_ffn_b1"), f)?,
                ffn_w2: grab(&format!("block_{i}_ffn_w2"), f, d)?,
                ffn_b2: vec1(&format!("block_{i}_ffn_b2"), d)?,
            });
        }
        Ok(NeurikWeights {
            input_proj: grab("input_proj", 3, cch)?,
            input_bias: vec1("input_bias", cch)?,
            conv,
            pos_embedding: grab("pos_embedding", config.frames, d)?,
            blocks,
            scale_head: grab("scale_head", d, 3 * config.segment_count)?,
            scale_bias: vec1("scale_bias", 3 * config.segment_count)?,
            angle_head: grab("angle_head", d, config.dof_count)?,
            angle_bias: vec1("angle_bias", config.dof_count)?,
        })
    }
}

/// Network predictions; `fk_markers`/`fk_joints` are filled by [`fk_layer`].
#[derive(Debug, Clone)]
pub struct NeurikOutput {
    pub scales_hat: Vec<Vector3<f64>>,
    pub q_r_hat: Vec<DVector<f64>>,
    pub fk_markers: Vec<Vec<Vector3<f64>>>,
    pub fk_joints: Vec<Vec<Vector3<f64>>>,
}

/// Supervision for one output frame.
#[derive(Debug, Clone)]
pub struct GroundTruthFrame {
    pub joints: Vec<Vector3<f64>>,
    pub markers: Vec<Vector3<f64>>,
    pub q_r: DVector<f64>,
}

/// Supervision for a whole output (frames plus the per-sequence scales).
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub frames: Vec<GroundTruthFrame>,
    pub scales: Vec<Vector3<f64>>,
}

/// Loss decomposition; `total` is exactly the weighted recomposition of the
/// four terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub joints: f64,
    pub markers: f64,
    pub scales: f64,
    pub angles: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn compose(weights: &LossWeights, joints: f64, markers: f64, scales: f64, angles: f64) -> LossBreakdown {
        LossBreakdown {
            joints,
            markers,
            scales,
            angles,
            total: weights.joints * joints
                + weights.markers * markers
                + weights.scales * scales
                + weights.angles * angles,
        }
    }
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Projects each marker position to `c` channels, then runs the stacked 1-D
/// convolutions along the marker axis (same-padding, rectified-linear between
/// layers).
pub fn spatial_encode(
    markers: &DMatrix<f64>,
    weights: &NeurikWeights,
    config: &NeurikConfig,
) -> Result<DMatrix<f64>> {
    let m = config.marker_count;
    let c = config.spatial_channels;
    if markers.shape() != (m, 3) {
        return Err(Error::DimensionMismatch(format!(
            "markers are {:?}, config wants ({m}, 3)",
            markers.shape()
        )));
    }
    if !markers.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("marker input".into()));
    }

    let mut z = markers * &weights.input_proj;
    for row in 0..m {
        for ch in 0..c {
            z[(row, ch)] += weights.input_bias[ch];
        }
    }
    debug_assert_eq!(z.shape(), (m, c));

    for (li, layer) in weights.conv.iter().enumerate() {
        let pad = layer.kernel / 2;
        let mut out = DMatrix::zeros(m, c);
        for row in 0..m {
            for o in 0..c {
                let mut acc = layer.bias[o];
                for tap in 0..layer.kernel {
                    let src = row as isize + tap as isize - pad as isize;
                    if src < 0 || src >= m as isize {
                        continue; // zero padding
                    }
                    for i in 0..c {
                        acc += layer.w(o, i, tap) * z[(src as usize, i)];
                    }
                }
                out[(row, o)] = acc;
            }
        }
        if li + 1 < weights.conv.len() {
            out.apply(|v| *v = relu(*v));
        }
        z = out;
        debug_assert_eq!(z.shape(), (m, c));
    }
    Ok(z)
}

/// Row-wise stabilized softmax; every output row sums to 1.
pub(crate) fn softmax_rows(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for r in 0..m.nrows() {
        let max = (0..m.ncols()).fold(f64::NEG_INFINITY, |a, c| a.max(m[(r, c)]));
        let mut sum = 0.0;
        for c in 0..m.ncols() {
            let e = (m[(r, c)] - max).exp();
            out[(r, c)] = e;
            sum += e;
        }
        for c in 0..m.ncols() {
            out[(r, c)] /= sum;
        }
        debug_assert!({
            let s: f64 = (0..m.ncols()).map(|c| out[(r, c)]).sum();
            (s - 1.0).abs() < 1e-8
        });
    }
    out
}

/// Multi-head self-attention; returns the mixed output (pre-residual) and the
/// per-head probability matrices.
pub(crate) fn multi_head_attention(
    z: &DMatrix<f64>,
    block: &AttentionBlock,
    heads: usize,
) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
    let n = z.nrows();
    let d = z.ncols();
    let hd = d / heads;
    let q = z * &block.wq;
    let k = z * &block.wk;
    let v = z * &block.wv;
    let mut mixed = DMatrix::zeros(n, d);
    let mut probs = Vec::with_capacity(heads);
    let scale = 1.0 / (hd as f64).sqrt();
    for h in 0..heads {
        let qh = q.columns(h * hd, hd);
        let kh = k.columns(h * hd, hd);
        let vh = v.columns(h * hd, hd);
        let scores = (qh * kh.transpose()) * scale;
        debug_assert_eq!(scores.shape(), (n, n));
        let p = softmax_rows(&scores);
        let oh = &p * vh;
        mixed.columns_mut(h * hd, hd).copy_from(&oh);
        probs.push(p);
    }
    (mixed * &block.wo, probs)
}

fn ffn(z: &DMatrix<f64>, block: &AttentionBlock) -> DMatrix<f64> {
    let mut hidden = z * &block.ffn_w1;
    for r in 0..hidden.nrows() {
        for c in 0..hidden.ncols() {
            hidden[(r, c)] = relu(hidden[(r, c)] + block.ffn_b1[c]);
        }
    }
    let mut out = &hidden * &block.ffn_w2;
    for r in 0..out.nrows() {
        for c in 0..out.ncols() {
            out[(r, c)] += block.ffn_b2[c];
        }
    }
    out
}

/// Flattens the per-frame spatial embeddings, adds the learned positional
/// embedding, runs the self-attention + feed-forward blocks (residual
/// connections, no normalization layers), and reads the heads out.
pub fn temporal_forward(
    sequence: &[DMatrix<f64>],
    weights: &NeurikWeights,
    config: &NeurikConfig,
) -> Result<NeurikOutput> {
    let n = config.frames;
    let m = config.marker_count;
    let c = config.spatial_channels;
    let d = config.embed_dim();
    if sequence.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "sequence has {} frames, config wants {n}",
            sequence.len()
        )));
    }
    for (t, f) in sequence.iter().enumerate() {
        if f.shape() != (m, c) {
            return Err(Error::DimensionMismatch(format!(
                "frame {t} embedding is {:?}, want ({m}, {c})",
                f.shape()
            )));
        }
    }

    // Row t is frame t flattened marker-major.
    let mut z = DMatrix::zeros(n, d);
    for (t, f) in sequence.iter().enumerate() {
        for row in 0..m {
            for ch in 0..c {
                z[(t, row * c + ch)] = f[(row, ch)];
            }
        }
    }
    debug_assert_eq!(z.shape(), (n, d));
    z += &weights.pos_embedding;

    for block in &weights.blocks {
        let (attn, _) = multi_head_attention(&z, block, config.attention_heads);
        z += attn;
        let f = ffn(&z, block);
        z += f;
        debug_assert_eq!(z.shape(), (n, d));
    }

    let read = |row: usize| -> (Vec<Vector3<f64>>, DVector<f64>) {
        let y = z.row(row);
        let log_scales = y * &weights.scale_head;
        let mut scales = Vec::with_capacity(config.segment_count);
        for s in 0..config.segment_count {
            scales.push(Vector3::new(
                (log_scales[3 * s] + weights.scale_bias[3 * s]).exp(),
                (log_scales[3 * s + 1] + weights.scale_bias[3 * s + 1]).exp(),
                (log_scales[3 * s + 2] + weights.scale_bias[3 * s + 2]).exp(),
            ));
        }
        let angles_row = y * &weights.angle_head;
        let q = DVector::from_fn(config.dof_count, |i, _| angles_row[i] + weights.angle_bias[i]);
        (scales, q)
    };

    let (scales_hat, q_r_hat) = match config.output_mode {
        OutputMode::SingleLastFrame => {
            let (s, q) = read(n - 1);
            (s, vec![q])
        }
        OutputMode::AllFrames => {
            let (s, _) = read(n - 1);
            (s, (0..n).map(|t| read(t).1).collect())
        }
    };
    Ok(NeurikOutput {
        scales_hat,
        q_r_hat,
        fk_markers: Vec::new(),
        fk_joints: Vec::new(),
    })
}

/// Applies the predicted scales to the skeleton, clamps every predicted pose
/// into the joint limits, and fills marker/joint world positions by forward
/// kinematics. The stored `q_r_hat` becomes the clamped coordinates.
pub fn fk_layer(output: &NeurikOutput, model: &SkeletonModel) -> Result<NeurikOutput> {
    let scaled = model.apply_scales(&output.scales_hat)?;
    let mut out = output.clone();
    out.fk_markers.clear();
    out.fk_joints.clear();
    for q in &mut out.q_r_hat {
        let pose = scaled.clamp_pose(&Pose::new(q.clone(), Vector3::zeros()))?;
        let fk = forward_kinematics(&scaled, &pose)?;
        *q = pose.coords.clone();
        out.fk_markers.push(fk.marker_world);
        out.fk_joints.push(fk.joint_world);
    }
    Ok(out)
}

/// Four-term loss: mean squared Euclidean error over post-FK joints and
/// markers, mean squared error over scales and (clamped) angles, weighted per
/// the configured coefficients.
pub fn neurik_loss(
    output: &NeurikOutput,
    gt: &GroundTruth,
    config: &NeurikConfig,
) -> Result<LossBreakdown> {
    let frames = output.q_r_hat.len();
    if output.fk_markers.len() != frames || output.fk_joints.len() != frames {
        return Err(Error::InvalidArgument(
            "output has no FK positions; run fk_layer first".into(),
        ));
    }
    if gt.frames.len() != frames {
        return Err(Error::DimensionMismatch(format!(
            "{} ground-truth frames for {frames} output frames",
            gt.frames.len()
        )));
    }
    if gt.scales.len() != output.scales_hat.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} ground-truth scales for {} predicted",
            gt.scales.len(),
            output.scales_hat.len()
        )));
    }

    let mut l_j = 0.0;
    let mut l_m = 0.0;
    let mut l_q = 0.0;
    for (t, gt_frame) in gt.frames.iter().enumerate() {
        if gt_frame.joints.len() != output.fk_joints[t].len()
            || gt_frame.markers.len() != output.fk_markers[t].len()
            || gt_frame.q_r.len() != output.q_r_hat[t].len()
        {
            return Err(Error::DimensionMismatch(format!(
                "ground-truth frame {t} shapes disagree with the output"
            )));
        }
        let k = gt_frame.joints.len() as f64;
        let m = gt_frame.markers.len() as f64;
        let d = gt_frame.q_r.len() as f64;
        l_j += output.fk_joints[t]
            .iter()
            .zip(&gt_frame.joints)
            .map(|(a, b)| (a - b).norm_squared())
            .sum::<f64>()
            / k;
        l_m += output.fk_markers[t]
            .iter()
            .zip(&gt_frame.markers)
            .map(|(a, b)| (a - b).norm_squared())
            .sum::<f64>()
            / m;
        l_q += (&output.q_r_hat[t] - &gt_frame.q_r).norm_squared() / d;
    }
    let f = frames as f64;
    let l_s = output
        .scales_hat
        .iter()
        .zip(&gt.scales)
        .map(|(a, b)| (a - b).norm_squared())
        .sum::<f64>()
        / (3.0 * output.scales_hat.len() as f64);

    Ok(LossBreakdown::compose(
        &config.loss_weights,
        l_j / f,
        l_m / f,
        l_s,
        l_q / f,
    ))
}

/// Gradient of the single-frame loss with respect to the raw joint angles and
/// segment scales.
#[derive(Debug, Clone)]
pub struct LossGradient {
    pub wrt_coords: DVector<f64>,
    pub wrt_scales: Vec<Vector3<f64>>,
}

/// Evaluates the single-frame loss at raw coordinates `q_r` and scales:
/// the FK path sees `clamp(q_r)` on the scaled skeleton.
pub fn frame_loss(
    model: &SkeletonModel,
    q_r: &DVector<f64>,
    scales: &[Vector3<f64>],
    gt: &GroundTruthFrame,
    gt_scales: &[Vector3<f64>],
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    let scaled = model.apply_scales(scales)?;
    let pose = scaled.clamp_pose(&Pose::new(q_r.clone(), Vector3::zeros()))?;
    let fk = forward_kinematics(&scaled, &pose)?;
    let k = fk.joint_world.len() as f64;
    let m = fk.marker_world.len() as f64;
    let d = q_r.len() as f64;
    let l_j = fk
        .joint_world
        .iter()
        .zip(&gt.joints)
        .map(|(a, b)| (a - b).norm_squared())
        .sum::<f64>()
        / k;
    let l_m = fk
        .marker_world
        .iter()
        .zip(&gt.markers)
        .map(|(a, b)| (a - b).norm_squared())
        .sum::<f64>()
        / m;
    let l_q = (&pose.coords - &gt.q_r).norm_squared() / d;
    let l_s = scales
        .iter()
        .zip(gt_scales)
        .map(|(a, b)| (a - b).norm_squared())
        .sum::<f64>()
        / (3.0 * scales.len() as f64);
    Ok(LossBreakdown::compose(weights, l_j, l_m, l_s, l_q))
}

/// Analytic gradient of [`frame_loss`] with respect to `(q_r, scales)`.
///
/// The clamp inside the FK layer is handled by a one-sided subgradient: a
/// coordinate strictly outside its range contributes zero (the clamp is
/// saturated); a coordinate inside or exactly at a bound uses the interior
/// derivative.
pub fn loss_gradient(
    model: &SkeletonModel,
    q_r: &DVector<f64>,
    scales: &[Vector3<f64>],
    gt: &GroundTruthFrame,
    gt_scales: &[Vector3<f64>],
    weights: &LossWeights,
) -> Result<LossGradient> {
    let dof = model.total_dof();
    if q_r.len() != dof {
        return Err(Error::DimensionMismatch(format!(
            "q_r has {} coordinates, skeleton has {dof} DOF",
            q_r.len()
        )));
    }
    let n_seg = model.joints().len();
    let scaled = model.apply_scales(scales)?;
    let pose = scaled.clamp_pose(&Pose::new(q_r.clone(), Vector3::zeros()))?;
    let fk = forward_kinematics(&scaled, &pose)?;

    let k = fk.joint_world.len();
    let m = fk.marker_world.len();
    if gt.joints.len() != k || gt.markers.len() != m || gt.q_r.len() != dof {
        return Err(Error::DimensionMismatch(
            "ground-truth frame shapes disagree with the model".into(),
        ));
    }

    let mut dj = DVector::zeros(3 * k);
    for (i, (a, b)) in fk.joint_world.iter().zip(&gt.joints).enumerate() {
        let diff = a - b;
        for r in 0..3 {
            dj[3 * i + r] = diff[r];
        }
    }
    let mut dm = DVector::zeros(3 * m);
    for (i, (a, b)) in fk.marker_world.iter().zip(&gt.markers).enumerate() {
        let diff = a - b;
        for r in 0..3 {
            dm[3 * i + r] = diff[r];
        }
    }

    let jq_m = fk_jacobian(&scaled, &pose)?;
    let jq_j = fk_joint_jacobian(&scaled, &pose)?;
    // Scale Jacobians hold for the scales applied on top of the *base*
    // geometry; positions are affine in the scales, so they are exact at any
    // scale value.
    let (js_m, js_j) = fk_scale_jacobians(model, &pose)?;

    let cj = 2.0 * weights.joints / k as f64;
    let cm = 2.0 * weights.markers / m as f64;
    let cq = 2.0 * weights.angles / dof as f64;
    let cs = 2.0 * weights.scales / (3.0 * n_seg as f64);

    let mut wrt_coords = DVector::zeros(dof);
    for c in 0..dof {
        let (lo, hi) = model.coord_range(c);
        if q_r[c] < lo || q_r[c] > hi {
            continue; // saturated clamp: declared zero subgradient
        }
        let mut g = 0.0;
        for r in 0..3 * k {
            g += cj * jq_j[(r, c)] * dj[r];
        }
        for r in 0..3 * m {
            g += cm * jq_m[(r, c)] * dm[r];
        }
        g += cq * (pose.coords[c] - gt.q_r[c]);
        wrt_coords[c] = g;
    }

    let mut wrt_scales = vec![Vector3::zeros(); n_seg];
    for seg in 0..n_seg {
        for a in 0..3 {
            let col = 3 * seg + a;
            let mut g = 0.0;
            for r in 0..3 * k {
                g += cj * js_j[(r, col)] * dj[r];
            }
            for r in 0..3 * m {
                g += cm * js_m[(r, col)] * dm[r];
            }
            g += cs * (scales[seg][a] - gt_scales[seg][a]);
            wrt_scales[seg][a] = g;
        }
    }
    Ok(LossGradient {
        wrt_coords,
        wrt_scales,
    })
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)] // oracles transcribe formulas with explicit indices
mod tests {
    use super::*;
    use crate::assets;
    use crate::skeleton::load_skeleton;

    fn tiny_config(model: &SkeletonModel) -> NeurikConfig {
        NeurikConfig {
            marker_count: 6,
            spatial_channels: 4,
            frames: 3,
            conv_layers: 2,
            conv_kernel: 3,
            attention_heads: 2,
            attention_blocks: 2,
            ffn_multiplier: 2,
            output_mode: OutputMode::SingleLastFrame,
            loss_weights: LossWeights::default(),
            segment_count: model.joints().len(),
            dof_count: model.total_dof(),
        }
    }

    fn random_markers(cfg: &NeurikConfig, seed: u64) -> DMatrix<f64> {
        let mut rng = synth::seeded_rng(seed);
        DMatrix::from_fn(cfg.marker_count, 3, |_, _| synth::uniform(&mut rng, -1.0, 1.0))
    }

    #[test]
    fn config_validates_divisibility() {
        let model = load_skeleton(assets::CHAIN_3).unwrap();
        let mut cfg = tiny_config(&model);
        cfg.attention_heads = 5; // 24 % 5 != 0
        assert!(cfg.validate().is_err());
        cfg.attention_heads = 2;
        cfg.conv_kernel = 4;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn spatial_embedding_has_full_scale_shape() {
        let model = load_skeleton(assets::CHAIN_3).unwrap();
        let mut cfg = tiny_config(&model);
        cfg.marker_count = 142;
        cfg.spatial_channels = 32;
        let w = NeurikWeights::seeded(&cfg, 1).unwrap();
        let z = spatial_encode(&random_markers(&cfg, 2), &w, &cfg).unwrap();
        assert_eq!(z.shape(), (142, 32));
    }

    #[test]
    fn zero_input_with_zero_biases_encodes_to_zero() {
        let model = load_skeleton(assets::CHAIN_3).unwrap();
        let cfg = tiny_config(&model);
        let w = NeurikWeights::seeded(&cfg, 3).unwrap();
        let z = spatial_encode(&DMatrix::zeros(6, 3), &w, &cfg).unwrap();
        assert!(z.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn spatial_encode_matches_naive_convolution() {
        let model = load_skeleton(assets::CHAIN_3).unwrap();
        let cfg = tiny_config(&model);
        let w = NeurikWeights::seeded(&cfg, 4).unwrap();
        let x = random_markers(&cfg, 5);
        let got = spatial_encode(&x, &w, &cfg).unwrap();

        // Independent sliding-window recomputation.
        let m = cfg.marker_count;
        let c = cfg.spatial_channels;
        let mut z = DMatrix::zeros(m, c);
        for row in 0..m {
            for ch in 0..c {
                let mut acc = w.input_bias[ch];
                for a in 0..3 {
                    acc += x[(row, a)] * w.input_proj[(a, ch)];
                }
                z[(row, ch)] = acc;
            }
        }
        for (li, layer) in w.conv.iter().enumerate() {
            let mut out = DMatrix::zeros(m, c);
            for row in 0..m {
                for o in 0..c {
                    let mut acc = layer.bias[o];
                    for (tap, dk) in (-1i64..=1).enumerate() {
                        let src = row as i64 + dk;
                        if src < 0 || src >= m as i64 {
                            continue;
                        }
                        for i in 0..c {
                            acc += layer.w(o, i, tap) * z[(src as usize, i)];
                        }
                    }
                    out[(row, o)] = acc;
                }
            }
            if li + 1 < w.conv.len() {
                out.apply(|v| *v = v.max(0.0));
            }
            z = out;
        }
        for row in 0..m {
            for ch in 0..c {
                assert!((got[(row, ch)] - z[(row, ch)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let model = load_skeleton(assets::CHAIN_3).unwrap();
        let cfg = tiny_config(&model);
        let w = NeurikWeights::seeded(&cfg, 6).unwrap();
        let mut rng = synth::seeded_rng(7);
        let z = DMatrix::from_fn(cfg.frames, cfg.embed_dim(), |_, _| {
            synth::uniform(&mut rng, -2.0, 2.0)
        });
        let (_, probs) = multi_head_attention(&z, &w.blocks[0], cfg.attention_heads);
        for p in &probs {
            for r in 0..p.nrows() {
                let sum: f64 = (0..p.ncols()).map(|c| p[(r, c)]).sum();
                assert!((sum - 1.0).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn zeroed_value_path_reduces_to_ffn_only() {
        let model = load_skeleton(assets::CHAIN_3).unwrap();
        let cfg = tiny_config(&model);
        let mut w = NeurikWeights::seeded(&cfg, 8).unwrap();
        for b in &mut w.blocks {
            b.wv.fill(0.0);
        }
        let seq: Vec<DMatrix<f64>> = (0..cfg.frames)
            .map(|t| {
                let mut rng = synth::seeded_rng(100 + t as u64);
                DMatrix::from_fn(cfg.marker_count, cfg.spatial_channels, |_, _| {
                    synth::uniform(&mut rng, -1.0, 1.0)
                })
            })
            .collect();
        let got = temporal_forward(&seq, &w, &cfg).unwrap();

        // FFN-path oracle: z = flatten + PE, then z += ffn(z) per block.
        let d = cfg.embed_dim();
        let mut z = DMatrix::zeros(cfg.frames, d);
        for (t, f) in seq.iter().enumerate() {
            for row in 0..cfg.marker_count {
                for ch in 0..cfg.spatial_channels {
                    z[(t, row * cfg.spatial_channels + ch)] = f[(row, ch)];
                }
            }
        }
        z += &w.pos_embedding;
        for b in &w.blocks {
            let mut hidden = &z * &b.ffn_w1;
            hidden.apply(|v| *v = v.max(0.0));
            let f = &hidden * &b.ffn_w2;
            z += f;
        }
        let y = z.row(cfg.frames - 1);
        let qrow = y * &w.angle_head;
        for i in 0..cfg.dof_count {
            assert!((got.q_r_hat[0][i] - qrow[i]).abs() < 1e-10);
        }
        let srow = y * &w.scale_head;
        for s in 0..cfg.segment_count {
            for a in 0..3 {
                assert!((got.scales_hat[s][a] - srow[3 * s + a].exp()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn single_frame_attention_is_identity_mixing() {
        let model = load_skeleton(assets::CHAIN_3).unwrap();
        let mut cfg = tiny_config(&model);
        cfg.frames = 1;
        cfg.attention_blocks = 1;
        let w = NeurikWeights::seeded(&cfg, 9).unwrap();
        let seq = [random_markers(&cfg, 10).columns(0, 3).into_owned()];
        let seq: Vec<DMatrix<f64>> = seq
            .iter()
            .map(|m| spatial_encode(m, &w, &cfg).unwrap())
            .collect();
        let got = temporal_forward(&seq, &w, &cfg).unwrap();

        // Per-token oracle: with one token the attention weights are [1], so
        // the mixed output is z·Wv·Wo.
        let d = cfg.embed_dim();
        let mut z = DMatrix::zeros(1, d);
        for row in 0..cfg.marker_count {
            for ch in 0..cfg.spatial_channels {
                z[(0, row * cfg.spatial_channels + ch)] = seq[0][(row, ch)];
            }
        }
        z += &w.pos_embedding;
        let b = &w.blocks[0];
        let attn = (&z * &b.wv) * &b.wo;
        z += attn;
        let mut hidden = &z * &b.ffn_w1;
        hidden.apply(|v| *v = v.max(0.0));
        let f = &hidden * &b.ffn_w2;
        z += f;
        let qrow = z.row(0) * &w.angle_head;
        for i in 0..cfg.dof_count {
            assert!((got.q_r_hat[0][i] - qrow[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn all_frames_mode_emits_one_pose_per_frame() {
        let model = load_skeleton(assets::CHAIN_3).unwrap();
        let mut cfg = tiny_config(&model);
        cfg.output_mode = OutputMode::AllFrames;
        let w = NeurikWeights::seeded(&cfg, 11).unwrap();
        let seq: Vec<DMatrix<f64>> = (0..cfg.frames)
            .map(|t| spatial_encode(&random_markers(&cfg, 200 + t as u64), &w, &cfg).unwrap())
            .collect();
        let out = temporal_forward(&seq, &w, &cfg).unwrap();
        assert_eq!(out.q_r_hat.len(), 3);
        assert_eq!(out.scales_hat.len(), 3);
    }

    fn fk_ready_output(model: &SkeletonModel, seed: u64) -> NeurikOutput {
        let mut rng = synth::seeded_rng(seed);
        let q = DVector::from_fn(model.total_dof(), |i, _| {
            let (lo, hi) = model.coord_range(i);
            synth::uniform(&mut rng, lo, hi)
        });
        let scales = (0..model.joints().len())
            .map(|_| synth::random_scale(&mut rng))
            .collect();
        NeurikOutput {
            scales_hat: scales,
            q_r_hat: vec![q],
            fk_markers: Vec::new(),
            fk_joints: Vec::new(),
        }
    }

    #[test]
    fn fk_layer_matches_direct_kinematics_composition() {
        let model = load_skeleton(assets::FULL_BODY_24).unwrap();
        let out = fk_ready_output(&model, 12);
        let filled = fk_layer(&out, &model).unwrap();

        let scaled = model.apply_scales(&out.scales_hat).unwrap();
        let pose = scaled
            .clamp_pose(&Pose::new(out.q_r_hat[0].clone(), Vector3::zeros()))
            .unwrap();
        let fk = forward_kinematics(&scaled, &pose).unwrap();
        for (a, b) in filled.fk_markers[0].iter().zip(&fk.marker_world) {
            assert!((a - b).norm() < 1e-12);
        }
        for (a, b) in filled.fk_joints[0].iter().zip(&fk.joint_world) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn fk_layer_rest_and_clamp_contract() {
        let model = load_skeleton(assets::CHAIN_3).unwrap();
        let rest = NeurikOutput {
            scales_hat: vec![Vector3::repeat(1.0); 3],
            q_r_hat: vec![DVector::zeros(5)],
            fk_markers: Vec::new(),
            fk_joints: Vec::new(),
        };
        let out = fk_layer(&rest, &model).unwrap();
        let fk = forward_kinematics(&model, &Pose::zero(5)).unwrap();
        for (a, b) in out.fk_markers[0].iter().zip(&fk.marker_world) {
            assert_eq!(a, b);
        }

        // A coordinate beyond its range is used clamped.
        let mut wild = rest.clone();
        wild.q_r_hat[0][3] = 10.0;
        let out = fk_layer(&wild, &model).unwrap();
        let (_, hi) = model.coord_range(3);
        assert_eq!(out.q_r_hat[0][3], hi);
        let mut clamped_pose = Pose::zero(5);
        clamped_pose.coords[3] = hi;
        let fk = forward_kinematics(&model, &clamped_pose).unwrap();
        for (a, b) in out.fk_markers[0].iter().zip(&fk.marker_world) {
            assert_eq!(a, b);
        }
    }

    fn ground_truth_for(out: &NeurikOutput) -> GroundTruth {
        GroundTruth {
            frames: out
                .q_r_hat
                .iter()
                .enumerate()
                .map(|(t, q)| GroundTruthFrame {
                    joints: out.fk_joints[t].clone(),
                    markers: out.fk_markers[t].clone(),
                    q_r: q.clone(),
                })
                .collect(),
            scales: out.scales_hat.clone(),
        }
    }

    #[test]
    fn loss_vanishes_at_ground_truth() {
        let model = load_skeleton(assets::FULL_BODY_24).unwrap();
        let cfg = NeurikConfig::default_for(&model);
        let out = fk_layer(&fk_ready_output(&model, 13), &model).unwrap();
        let gt = ground_truth_for(&out);
        let loss = neurik_loss(&out, &gt, &cfg).unwrap();
        assert_eq!(loss.total, 0.0);
        assert_eq!(loss.joints, 0.0);
        assert_eq!(loss.markers, 0.0);
        assert_eq!(loss.scales, 0.0);
        assert_eq!(loss.angles, 0.0);
    }

    #[test]
    fn unit_terms_compose_to_316_hundredths() {
        let w = LossWeights::default();
        let b = LossBreakdown::compose(&w, 1.0, 1.0, 1.0, 1.0);
        assert!((b.total - 3.16).abs() < 1e-12);
        // Bitwise recomposition.
        assert_eq!(
            b.total,
            w.joints * b.joints + w.markers * b.markers + w.scales * b.scales + w.angles * b.angles
        );
    }

    #[test]
    fn random_loss_matches_manual_recomposition() {
        let model = load_skeleton(assets::FULL_BODY_24).unwrap();
        let cfg = NeurikConfig::default_for(&model);
        let out = fk_layer(&fk_ready_output(&model, 14), &model).unwrap();
        let other = fk_layer(&fk_ready_output(&model, 15), &model).unwrap();
        let gt = ground_truth_for(&other);
        let loss = neurik_loss(&out, &gt, &cfg).unwrap();
        let w = &cfg.loss_weights;
        let manual =
            w.joints * loss.joints + w.markers * loss.markers + w.scales * loss.scales + w.angles * loss.angles;
        assert_eq!(loss.total, manual);
        assert!(loss.total > 0.0);
    }

    #[test]
    fn gradient_vanishes_at_the_minimum() {
        let model = load_skeleton(assets::FULL_BODY_24).unwrap();
        let out = fk_layer(&fk_ready_output(&model, 16), &model).unwrap();
        let gt_frame = GroundTruthFrame {
            joints: out.fk_joints[0].clone(),
            markers: out.fk_markers[0].clone(),
            q_r: out.q_r_hat[0].clone(),
        };
        let g = loss_gradient(
            &model,
            &out.q_r_hat[0],
            &out.scales_hat,
            &gt_frame,
            &out.scales_hat,
            &LossWeights::default(),
        )
        .unwrap();
        assert!(g.wrt_coords.norm() < 1e-8);
        assert!(g.wrt_scales.iter().all(|v| v.norm() < 1e-8));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let model = load_skeleton(assets::CHAIN_3).unwrap();
        let w = LossWeights::default();
        let mut rng = synth::seeded_rng(17);
        for trial in 0..10 {
            // Interior point: margins keep the clamp inactive under FD probes.
            let q = DVector::from_fn(model.total_dof(), |i, _| {
                let (lo, hi) = model.coord_range(i);
                let mid = 0.5 * (lo + hi);
                let half = 0.4 * (hi - lo);
                synth::uniform(&mut rng, mid - half, mid + half)
            });
            let scales: Vec<Vector3<f64>> =
                (0..3).map(|_| synth::random_scale(&mut rng)).collect();
            let gt_q = DVector::from_fn(model.total_dof(), |i, _| {
                let (lo, hi) = model.coord_range(i);
                synth::uniform(&mut rng, lo, hi)
            });
            let gt_scales: Vec<Vector3<f64>> =
                (0..3).map(|_| synth::random_scale(&mut rng)).collect();
            let gt_fk = forward_kinematics(
                &model.apply_scales(&gt_scales).unwrap(),
                &Pose::new(gt_q.clone(), Vector3::zeros()),
            )
            .unwrap();
            let gt = GroundTruthFrame {
                joints: gt_fk.joint_world,
                markers: gt_fk.marker_world,
                q_r: gt_q,
            };

            let g = loss_gradient(&model, &q, &scales, &gt, &gt_scales, &w).unwrap();
            let h = 1e-6;
            let mut worst: f64 = 0.0;
            for c in 0..model.total_dof() {
                let mut qp = q.clone();
                qp[c] += h;
                let mut qm = q.clone();
                qm[c] -= h;
                let fd = (frame_loss(&model, &qp, &scales, &gt, &gt_scales, &w).unwrap().total
                    - frame_loss(&model, &qm, &scales, &gt, &gt_scales, &w).unwrap().total)
                    / (2.0 * h);
                let denom = fd.abs().max(g.wrt_coords[c].abs()).max(1e-8);
                worst = worst.max((fd - g.wrt_coords[c]).abs() / denom);
            }
            for seg in 0..3 {
                for a in 0..3 {
                    let mut sp = scales.clone();
                    sp[seg][a] += h;
                    let mut sm = scales.clone();
                    sm[seg][a] -= h;
                    let fd = (frame_loss(&model, &q, &sp, &gt, &gt_scales, &w).unwrap().total
                        - frame_loss(&model, &q, &sm, &gt, &gt_scales, &w).unwrap().total)
                        / (2.0 * h);
                    let denom = fd.abs().max(g.wrt_scales[seg][a].abs()).max(1e-8);
                    worst = worst.max((fd - g.wrt_scales[seg][a]).abs() / denom);
                }
            }
            assert!(worst < 1e-4, "trial {trial}: relative error {worst:.3e}");
        }
    }

    #[test]
    fn weight_container_round_trip() {
        let model = load_skeleton(assets::CHAIN_3).unwrap();
        let cfg = tiny_config(&model);
        let w = NeurikWeights::seeded(&cfg, 77).unwrap();
        let c = w.to_container(&cfg);
        let back = NeurikWeights::from_container(
            &crate::io::ArrayContainer::from_json(&c.to_json()).unwrap(),
            &cfg,
        )
        .unwrap();
        assert_eq!(back.pos_embedding, w.pos_embedding);
        assert_eq!(back.blocks[1].ffn_w2, w.blocks[1].ffn_w2);
        assert_eq!(back.conv[0].weight, w.conv[0].weight);
        assert_eq!(back.angle_head, w.angle_head);

        let mut other = cfg.clone();
        other.frames = 5;
        assert!(NeurikWeights::from_container(&c, &other).is_err());
    }

    #[test]
    fn saturated_coordinate_has_zero_subgradient() {
        let model = load_skeleton(assets::CHAIN_3).unwrap();
        let w = LossWeights::default();
        let mut q = DVector::zeros(5);
        let (_, hi) = model.coord_range(3);
        q[3] = hi + 0.5; // beyond the range: clamp saturates
        let scales = vec![Vector3::repeat(1.0); 3];
        let gt_fk = forward_kinematics(&model, &Pose::zero(5)).unwrap();
        let gt = GroundTruthFrame {
            joints: gt_fk.joint_world,
            markers: gt_fk.marker_world,
            q_r: DVector::zeros(5),
        };
        let g = loss_gradient(&model, &q, &scales, &gt, &scales, &w).unwrap();
        assert_eq!(g.wrt_coords[3], 0.0);
        // Inside coordinates still see gradient from the mismatch.
        assert!(g.wrt_coords.norm() > 0.0);
    }
}
