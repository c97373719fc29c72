//! Edge-aware detail remapping through Laplacian pyramids.
//!
//! Uses a fixed set of reference intensities: the input is remapped around
//! each reference, every remapped image gets its own Laplacian pyramid, and
//! each output coefficient interpolates between the two references that
//! bracket the input's Gaussian-pyramid value at that location.

use crate::image::{correlate_separable, PadMode, Plane, Raster};
use crate::scalar::Scalar;

const REFERENCE_LEVELS: usize = 16;
const MAX_PYRAMID_LEVELS: usize = 5;
const BINOMIAL: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

fn downsample<T: Scalar>(p: &Plane<T>) -> Plane<T> {
    let blurred = correlate_separable(p, &BINOMIAL, &BINOMIAL, PadMode::Symmetric);
    let w = p.width().div_ceil(2);
    let h = p.height().div_ceil(2);
    Raster::from_fn(w, h, |x, y| blurred.get(2 * x, 2 * y))
}

/// Linear interpolation back onto a `w x h` grid.
fn upsample<T: Scalar>(p: &Plane<T>, w: usize, h: usize) -> Plane<T> {
    let coords = |n_out: usize, n_in: usize| -> Vec<(usize, usize, T)> {
        (0..n_out)
            .map(|i| {
                let s = i as f64 / 2.0;
                let i0 = (s.floor() as usize).min(n_in - 1);
                let i1 = (i0 + 1).min(n_in - 1);
                (i0, i1, T::of(s - s.floor()))
            })
            .collect()
    };
    let cx = coords(w, p.width());
    let cy = coords(h, p.height());
    Raster::from_fn(w, h, |x, y| {
        let (x0, x1, fx) = cx[x];
        let (y0, y1, fy) = cy[y];
        let one = T::one();
        let top = (one - fx) * p.get(x0, y0) + fx * p.get(x1, y0);
        let bot = (one - fx) * p.get(x0, y1) + fx * p.get(x1, y1);
        (one - fy) * top + fy * bot
    })
}

fn gaussian_pyramid<T: Scalar>(p: &Plane<T>, levels: usize) -> Vec<Plane<T>> {
    let mut pyr = vec![p.clone()];
    for _ in 1..levels {
        let next = downsample(pyr.last().expect("non-empty"));
        pyr.push(next);
    }
    pyr
}

/// Band-pass levels followed by the low-pass residual.
fn laplacian_pyramid<T: Scalar>(p: &Plane<T>, levels: usize) -> Vec<Plane<T>> {
    let g = gaussian_pyramid(p, levels);
    let mut out = Vec::with_capacity(levels);
    for k in 0..levels - 1 {
        let up = upsample(&g[k + 1], g[k].width(), g[k].height());
        out.push(g[k].zip_map(&up, |a, b| a - b));
    }
    out.push(g[levels - 1].clone());
    out
}

fn collapse<T: Scalar>(pyr: Vec<Plane<T>>) -> Plane<T> {
    let mut it = pyr.into_iter().rev();
    let mut acc = it.next().expect("non-empty pyramid");
    for band in it {
        let up = upsample(&acc, band.width(), band.height());
        acc = band.zip_map(&up, |b, u| b + u);
    }
    acc
}

fn pyramid_levels(w: usize, h: usize) -> usize {
    let min_dim = w.min(h).max(1);
    let depth = usize::BITS as usize - min_dim.leading_zeros() as usize;
    depth.clamp(1, MAX_PYRAMID_LEVELS)
}

/// Detail remap `d -> sign(d) sigma (|d|/sigma)^alpha` for `|d| <= sigma`;
/// larger differences (edges) pass through unchanged.
#[inline]
fn remap(v: f64, reference: f64, sigma: f64, alpha: f64) -> f64 {
    let d = v - reference;
    let a = d.abs();
    if a <= sigma {
        reference + d.signum() * sigma * (a / sigma).powf(alpha)
    } else {
        v
    }
}

pub(super) fn local_laplacian<T: Scalar>(img: &Plane<T>, sigma: f64, alpha: f64) -> Plane<T> {
    let levels = pyramid_levels(img.width(), img.height());
    let gauss = gaussian_pyramid(img, levels);
    let refs: Vec<f64> = (0..REFERENCE_LEVELS)
        .map(|j| j as f64 / (REFERENCE_LEVELS - 1) as f64)
        .collect();
    let remapped: Vec<Vec<Plane<T>>> = refs
        .iter()
        .map(|&g| {
            let r = img.map(|v| T::of(remap(v.to_f64_lossy(), g, sigma, alpha)));
            laplacian_pyramid(&r, levels)
        })
        .collect();

    let step = T::of((REFERENCE_LEVELS - 1) as f64);
    let mut out: Vec<Plane<T>> = Vec::with_capacity(levels);
    for k in 0..levels - 1 {
        let g = &gauss[k];
        let band = Raster::from_fn(g.width(), g.height(), |x, y| {
            let pos = (g.get(x, y).max(T::zero()).min(T::one())) * step;
            let j = pos.floor().to_usize().unwrap_or(0).min(REFERENCE_LEVELS - 2);
            let f = pos - T::of(j as f64);
            let a = remapped[j][k].get(x, y);
            let b = remapped[j + 1][k].get(x, y);
            (T::one() - f) * a + f * b
        });
        out.push(band);
    }
    out.push(gauss[levels - 1].clone());
    collapse(out)
}
