//! Multi-scale deformable attention over a seeded feature pyramid, with a
//! brute-force cross-check of the kernel.

#![allow(clippy::needless_range_loop)]

use biokin::attention::{bilinear_sample, dam_forward, FeaturePyramid, QuerySet};

fn main() -> biokin::Result<()> {
    let channels = 16;
    let pyramid = FeaturePyramid::synthetic(4, 64, 64, channels);
    for (level, map) in pyramid.levels.iter().enumerate() {
        println!(
            "level {level}: {}x{}x{} (stride {}x)",
            map.height, map.width, map.channels, pyramid.scale_factors[level]
        );
    }

    // 96 pose-token queries, 4 sampling points per scale.
    let qs = QuerySet::synthetic(5, 96, pyramid.levels.len(), 4, channels);
    let out = dam_forward(&pyramid, &qs)?;
    println!("output: {}x{} query features", out.nrows(), out.ncols());

    // Brute-force recomputation of one query.
    let q = 17;
    let mut acc = vec![0.0; channels];
    for s in 0..qs.levels {
        for m in 0..qs.points {
            let alpha = qs.weight(q, s, m);
            let d = qs.offset(q, s, m);
            let point = [
                qs.reference_points[q][0] + d[0],
                qs.reference_points[q][1] + d[1],
            ];
            let f = bilinear_sample(&pyramid.levels[s], point);
            for (a, v) in acc.iter_mut().zip(&f) {
                *a += alpha * v;
            }
        }
    }
    let mut worst: f64 = 0.0;
    for row in 0..channels {
        let mut v = 0.0;
        for col in 0..channels {
            v += qs.projection[(row, col)] * acc[col];
        }
        worst = worst.max((out[(q, row)] - v).abs());
    }
    println!("query {q} vs brute-force recomputation: max abs error {worst:.2e}");
    Ok(())
}
