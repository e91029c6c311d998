//! Multi-scale deformable attention: queries sample feature maps at
//! fractional offsets around reference points, weight the samples with
//! normalized attention weights, and project through a shared matrix.
//! Forward-only numeric code over synthetic pyramids.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::synth;
use rand_chacha::ChaCha20Rng;

/// One feature map, row-major `[y][x][channel]`.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn from_fn<F: FnMut(usize, usize, usize) -> f64>(
        height: usize,
        width: usize,
        channels: usize,
        mut f: F,
    ) -> FeatureMap {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        FeatureMap {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn constant(height: usize, width: usize, value: &[f64]) -> FeatureMap {
        FeatureMap::from_fn(height, width, value.len(), |_, _, c| value[c])
    }

    #[inline]
    pub fn texel(&self, y: usize, x: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }
}

/// Feature maps at strided resolutions sharing one channel width.
#[derive(Debug, Clone)]
pub struct FeaturePyramid {
    pub levels: Vec<FeatureMap>,
    /// Stride labels, e.g. 1×, 4×, 8×, 16×.
    pub scale_factors: Vec<u32>,
}

pub const DEFAULT_SCALE_FACTORS: [u32; 4] = [1, 4, 8, 16];

impl FeaturePyramid {
    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.levels.first() else {
            return Err(Error::Validation("pyramid has no levels".into()));
        };
        for (i, l) in self.levels.iter().enumerate() {
            if l.channels != first.channels {
                return Err(Error::Validation(format!(
                    "level {i} has {} channels, level 0 has {}",
                    l.channels, first.channels
                )));
            }
            if l.height < 2 || l.width < 2 {
                return Err(Error::Validation(format!(
                    "level {i} is {}×{}; need at least 2×2",
                    l.height, l.width
                )));
            }
            if l.data.len() != l.height * l.width * l.channels {
                return Err(Error::Validation(format!("level {i} data length mismatch")));
            }
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        self.levels.first().map_or(0, |l| l.channels)
    }

    /// Seeded random pyramid with the default 1×/4×/8×/16× stride layout.
    pub fn synthetic(seed: u64, base_height: usize, base_width: usize, channels: usize) -> FeaturePyramid {
        let mut rng = synth::seeded_rng(seed);
        let levels = DEFAULT_SCALE_FACTORS
            .iter()
            .map(|&s| {
                let h = (base_height / s as usize).max(2);
                let w = (base_width / s as usize).max(2);
                FeatureMap::from_fn(h, w, channels, |_, _, _| synth::uniform(&mut rng, -1.0, 1.0))
            })
            .collect();
        FeaturePyramid {
            levels,
            scale_factors: DEFAULT_SCALE_FACTORS.to_vec(),
        }
    }
}

/// Query tokens with their reference points, per-level sampling offsets,
/// attention weights, and the shared projection matrix.
///
/// `offsets` is `K × (S·M·2)` and `weights` is `K × (S·M)`, both laid out
/// level-major (`s`-then-`m`); offsets are in the same normalized `[0,1]`
/// units as the reference points.
#[derive(Debug, Clone)]
pub struct QuerySet {
    pub queries: DMatrix<f64>,          // K×C
    pub reference_points: Vec<[f64; 2]>, // K
    pub offsets: DMatrix<f64>,          // K×(S·M·2)
    pub weights: DMatrix<f64>,          // K×(S·M)
    pub projection: DMatrix<f64>,       // C×C
    pub levels: usize,
    pub points: usize,
}

impl QuerySet {
    pub fn n_queries(&self) -> usize {
        self.queries.nrows()
    }

    pub fn weight(&self, k: usize, s: usize, m: usize) -> f64 {
        self.weights[(k, s * self.points + m)]
    }

    pub fn offset(&self, k: usize, s: usize, m: usize) -> [f64; 2] {
        let base = (s * self.points + m) * 2;
        [self.offsets[(k, base)], self.offsets[(k, base + 1)]]
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.n_queries();
        let c = self.queries.ncols();
        let sm = self.levels * self.points;
        if self.reference_points.len() != k
            || self.weights.shape() != (k, sm)
            || self.offsets.shape() != (k, 2 * sm)
            || self.projection.shape() != (c, c)
        {
            return Err(Error::DimensionMismatch(
                "query set field shapes disagree".into(),
            ));
        }
        for (i, r) in self.reference_points.iter().enumerate() {
            if !(0.0..=1.0).contains(&r[0]) || !(0.0..=1.0).contains(&r[1]) {
                return Err(Error::Validation(format!(
                    "reference point {i} = [{}, {}] outside [0,1]²",
                    r[0], r[1]
                )));
            }
        }
        for q in 0..k {
            let mut sum = 0.0;
            for j in 0..sm {
                let w = self.weights[(q, j)];
                if w < 0.0 {
                    return Err(Error::Validation(format!("negative attention weight for query {q}")));
                }
                sum += w;
            }
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::Validation(format!(
                    "attention weights of query {q} sum to {sum}, want 1"
                )));
            }
        }
        Ok(())
    }

    /// Seeded random query set with normalized weights.
    pub fn synthetic(
        seed: u64,
        n_queries: usize,
        levels: usize,
        points: usize,
        channels: usize,
    ) -> QuerySet {
        let mut rng = synth::seeded_rng(seed);
        let u = |lo: f64, hi: f64, rng: &mut ChaCha20Rng| synth::uniform(rng, lo, hi);
        let queries = DMatrix::from_fn(n_queries, channels, |_, _| u(-1.0, 1.0, &mut rng));
        let reference_points = (0..n_queries)
            .map(|_| [u(0.0, 1.0, &mut rng), u(0.0, 1.0, &mut rng)])
            .collect();
        let offsets = DMatrix::from_fn(n_queries, 2 * levels * points, |_, _| u(-0.2, 0.2, &mut rng));
        let raw = DMatrix::from_fn(n_queries, levels * points, |_, _| u(-2.0, 2.0, &mut rng));
        let weights = normalize_weights(&raw);
        let projection = DMatrix::from_fn(channels, channels, |_, _| u(-0.5, 0.5, &mut rng));
        QuerySet {
            queries,
            reference_points,
            offsets,
            weights,
            projection,
            levels,
            points,
        }
    }
}

/// Bilinear interpolation at a normalized point; out-of-bounds texels read as
/// zero, so every point is defined.
pub fn bilinear_sample(map: &FeatureMap, point: [f64; 2]) -> Vec<f64> {
    let px = point[0] * (map.width - 1) as f64;
    let py = point[1] * (map.height - 1) as f64;
    let x0 = px.floor();
    let y0 = py.floor();
    let fx = px - x0;
    let fy = py - y0;

    let mut out = vec![0.0; map.channels];
    let mut add = |xi: f64, yi: f64, w: f64| {
        if w == 0.0 || xi < 0.0 || yi < 0.0 || xi >= map.width as f64 || yi >= map.height as f64 {
            return;
        }
        let t = map.texel(yi as usize, xi as usize);
        for (o, v) in out.iter_mut().zip(t) {
            *o += w * v;
        }
    };
    add(x0, y0, (1.0 - fx) * (1.0 - fy));
    add(x0 + 1.0, y0, fx * (1.0 - fy));
    add(x0, y0 + 1.0, (1.0 - fx) * fy);
    add(x0 + 1.0, y0 + 1.0, fx * fy);
    out
}

/// Deformable attention forward pass:
/// `output_k = Σ_s Σ_m α_ksm · W · F^s(r̂_k + Δr_ksm)`.
pub fn dam_forward(pyramid: &FeaturePyramid, qs: &QuerySet) -> Result<DMatrix<f64>> {
    pyramid.validate()?;
    qs.validate()?;
    let c = pyramid.channels();
    if qs.queries.ncols() != c {
        return Err(Error::DimensionMismatch(format!(
            "queries carry {} channels, pyramid {}",
            qs.queries.ncols(),
            c
        )));
    }
    if qs.levels != pyramid.levels.len() {
        return Err(Error::DimensionMismatch(format!(
            "query set expects {} levels, pyramid has {}",
            qs.levels,
            pyramid.levels.len()
        )));
    }

    let k = qs.n_queries();
    let mut out = DMatrix::zeros(k, c);
    for q in 0..k {
        let r = qs.reference_points[q];
        // Accumulate Σ α·f, then project once; W is linear so this matches
        // applying W per sample.
        let mut acc = vec![0.0; c];
        for s in 0..qs.levels {
            for m in 0..qs.points {
                let alpha = qs.weight(q, s, m);
                let d = qs.offset(q, s, m);
                let f = bilinear_sample(&pyramid.levels[s], [r[0] + d[0], r[1] + d[1]]);
                for (a, v) in acc.iter_mut().zip(&f) {
                    *a += alpha * v;
                }
            }
        }
        for row in 0..c {
            let v: f64 = acc
                .iter()
                .enumerate()
                .map(|(col, a)| qs.projection[(row, col)] * a)
                .sum();
            out[(q, row)] = v;
        }
    }
    Ok(out)
}

/// Stabilized softmax over each query's S·M raw weights.
pub fn normalize_weights(raw: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = raw.clone();
    for q in 0..raw.nrows() {
        let max = (0..raw.ncols()).fold(f64::NEG_INFINITY, |m, j| m.max(raw[(q, j)]));
        let mut sum = 0.0;
        for j in 0..raw.ncols() {
            let e = (raw[(q, j)] - max).exp();
            out[(q, j)] = e;
            sum += e;
        }
        for j in 0..raw.ncols() {
            out[(q, j)] /= sum;
        }
    }
    out
}
