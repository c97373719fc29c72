//! Contrast-limited adaptive histogram equalization over a tile grid.

use super::filters::equalize_lut;
use crate::image::{from_unit, Plane, Raster};
use crate::scalar::Scalar;

/// Normalized clip limit used by the `adaptive_hist_eq` block.
pub const CLAHE_CLIP_LIMIT: f64 = 0.01;

/// Clips every bin at `limit` and spreads the excess uniformly over all 256 bins.
pub fn clip_histogram(hist: &mut [u64; 256], limit: u64) {
    let mut excess = 0u64;
    for c in hist.iter_mut() {
        if *c > limit {
            excess += *c - limit;
            *c = limit;
        }
    }
    if excess == 0 {
        return;
    }
    let per_bin = excess / 256;
    for c in hist.iter_mut() {
        *c += per_bin;
    }
    let rem = (excess % 256) as usize;
    if rem > 0 {
        let step = (256 / rem).max(1);
        for i in 0..rem {
            hist[(i * step) % 256] += 1;
        }
    }
}

/// Bin index and interpolation weight along one axis for tile centers `centers`.
fn axis_weights(n: usize, centers: &[f64]) -> Vec<(usize, usize, f64)> {
    (0..n)
        .map(|p| {
            let p = p as f64;
            let last = centers.len() - 1;
            if p <= centers[0] {
                (0, 0, 0.0)
            } else if p >= centers[last] {
                (last, last, 0.0)
            } else {
                let i = centers.partition_point(|&c| c <= p) - 1;
                let f = (p - centers[i]) / (centers[i + 1] - centers[i]);
                (i, i + 1, f)
            }
        })
        .collect()
}

/// CLAHE with `tiles_x x tiles_y` tiles (clamped to the image size) and
/// normalized clip limit `clip` in `[0, 1]`; `clip >= 1` disables clipping.
///
/// Tile mappings are bilinearly interpolated between tile centers.
pub fn clahe<T: Scalar>(img: &Plane<T>, tiles_x: usize, tiles_y: usize, clip: f64) -> Plane<T> {
    let (w, h) = img.dims();
    let tx = tiles_x.clamp(1, w);
    let ty = tiles_y.clamp(1, h);
    let levels: Vec<u8> = img.pixels().iter().map(|&v| from_unit(v)).collect();
    let xb: Vec<usize> = (0..=tx).map(|i| i * w / tx).collect();
    let yb: Vec<usize> = (0..=ty).map(|j| j * h / ty).collect();

    let mut luts: Vec<[f64; 256]> = Vec::with_capacity(tx * ty);
    for j in 0..ty {
        for i in 0..tx {
            let mut hist = [0u64; 256];
            for y in yb[j]..yb[j + 1] {
                for &l in &levels[y * w + xb[i]..y * w + xb[i + 1]] {
                    hist[l as usize] += 1;
                }
            }
            let n: u64 = hist.iter().sum();
            let single_level = hist.iter().filter(|&&c| c > 0).count() <= 1;
            if clip < 1.0 && !single_level {
                let min_limit = n.div_ceil(256);
                let limit = min_limit + (clip.max(0.0) * (n - min_limit) as f64).round() as u64;
                clip_histogram(&mut hist, limit);
            }
            let lut = equalize_lut(&hist)
                .unwrap_or_else(|| std::array::from_fn(|k| k as f64 / 255.0));
            luts.push(lut);
        }
    }

    let cx: Vec<f64> = (0..tx)
        .map(|i| (xb[i] + xb[i + 1]) as f64 / 2.0 - 0.5)
        .collect();
    let cy: Vec<f64> = (0..ty)
        .map(|j| (yb[j] + yb[j + 1]) as f64 / 2.0 - 0.5)
        .collect();
    let wx = axis_weights(w, &cx);
    let wy = axis_weights(h, &cy);

    Raster::from_fn(w, h, |x, y| {
        let l = levels[y * w + x] as usize;
        let (i0, i1, fx) = wx[x];
        let (j0, j1, fy) = wy[y];
        let at = |i: usize, j: usize| luts[j * tx + i][l];
        if tx == 1 && ty == 1 {
            return T::of(at(0, 0));
        }
        let top = (1.0 - fx) * at(i0, j0) + fx * at(i1, j0);
        let bottom = (1.0 - fx) * at(i0, j1) + fx * at(i1, j1);
        T::of((1.0 - fy) * top + fy * bottom)
    })
}
