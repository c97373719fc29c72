use crate::image::{box_mean, from_unit, gaussian_blur, PadMode, Plane, Raster};
use crate::scalar::Scalar;

const EPS: f64 = 1e-6;

/// Intensity levels `(low, high)` saturating 1% of pixels at each end, or
/// `None` when they coincide.
pub fn stretch_limits(hist: &[u64; 256]) -> Option<(u8, u8)> {
    let total: u64 = hist.iter().sum();
    let mut cdf = 0u64;
    let mut low = None;
    let mut high = None;
    for (k, &c) in hist.iter().enumerate() {
        cdf += c;
        // cdf/total > 0.01 and cdf/total >= 0.99, in integer arithmetic
        if low.is_none() && cdf * 100 > total {
            low = Some(k as u8);
        }
        if high.is_none() && cdf * 100 >= total * 99 {
            high = Some(k as u8);
        }
    }
    match (low, high) {
        (Some(l), Some(h)) if l < h => Some((l, h)),
        _ => None,
    }
}

pub(super) fn contrast_stretch<T: Scalar>(img: &Plane<T>) -> Plane<T> {
    let Some((low, high)) = stretch_limits(&img.level_histogram()) else {
        return img.clone();
    };
    let lo = T::of(low as f64 / 255.0);
    let scale = T::of(255.0 / (high - low) as f64);
    img.map(|v| (v - lo) * scale)
}

/// Monotone CDF map `(cdf(k) - cdf_min) / (total - cdf_min)` onto `[0, 1]`.
///
/// Returns `None` for a histogram with a single occupied level.
pub fn equalize_lut(hist: &[u64; 256]) -> Option<[f64; 256]> {
    let total: u64 = hist.iter().sum();
    let cdf_min = hist.iter().copied().find(|&c| c > 0)?;
    if total == cdf_min {
        return None;
    }
    let denom = (total - cdf_min) as f64;
    let mut lut = [0.0; 256];
    let mut cdf = 0u64;
    for (k, &c) in hist.iter().enumerate() {
        cdf += c;
        lut[k] = cdf.saturating_sub(cdf_min) as f64 / denom;
    }
    Some(lut)
}

/// Global histogram equalization over 256 levels.
pub fn hist_eq<T: Scalar>(img: &Plane<T>) -> Plane<T> {
    let Some(lut) = equalize_lut(&img.level_histogram()) else {
        return img.clone();
    };
    let lut: Vec<T> = lut.iter().map(|&v| T::of(v)).collect();
    img.map(|v| lut[from_unit(v) as usize])
}

pub(super) fn local_brighten<T: Scalar>(img: &Plane<T>, amount: f64, alpha_blend: bool) -> Plane<T> {
    let sigma = img.width().min(img.height()) as f64 / 16.0;
    let inverted = img.map(|v| T::one() - v);
    let weight = gaussian_blur(&inverted, sigma, PadMode::Replicate);
    let amount = T::of(amount);
    img.zip_map(&weight, |v, w| {
        let bright = v + amount * w * (T::one() - v);
        if alpha_blend {
            (T::one() - w) * v + w * bright
        } else {
            bright
        }
    })
}

pub(super) fn unsharp_mask<T: Scalar>(
    img: &Plane<T>,
    radius: f64,
    amount: f64,
    threshold: f64,
) -> Plane<T> {
    let blurred = gaussian_blur(img, radius, PadMode::Replicate);
    let amount = T::of(amount);
    let threshold = T::of(threshold);
    img.zip_map(&blurred, |v, b| {
        let d = v - b;
        if d.abs() > threshold {
            v + amount * d
        } else {
            v
        }
    })
}

pub(super) fn gaussian_filter<T: Scalar>(img: &Plane<T>, sigma: f64) -> Plane<T> {
    gaussian_blur(img, sigma, PadMode::Replicate)
}

/// Divides out a smooth shading estimate, preserving the mean shading level.
pub(super) fn flat_field<T: Scalar>(img: &Plane<T>, sigma: f64) -> Plane<T> {
    let shading = gaussian_blur(img, sigma, PadMode::Replicate);
    let mean = shading.mean();
    let eps = T::of(EPS);
    img.zip_map(&shading, |v, s| v * mean / s.max(eps))
}

/// Local-statistics Wiener denoiser; noise power is the mean local variance.
pub(super) fn wiener_adaptive<T: Scalar>(img: &Plane<T>, h: usize, w: usize) -> Plane<T> {
    let mean = box_mean(img, w, h, PadMode::Replicate);
    let sq = img.map(|v| v * v);
    let mean_sq = box_mean(&sq, w, h, PadMode::Replicate);
    let var = mean_sq.zip_map(&mean, |m2, m| (m2 - m * m).max(T::zero()));
    let noise = var.mean();
    let gain = var.map(|v| {
        let denom = v.max(noise);
        if denom > T::zero() {
            (v - noise).max(T::zero()) / denom
        } else {
            T::zero()
        }
    });
    let detail = img.zip_map(&mean, |v, m| v - m);
    mean.zip_map(&detail.zip_map(&gain, |d, g| d * g), |m, dg| m + dg)
}

fn transpose<T: Scalar>(img: &Plane<T>) -> Plane<T> {
    Raster::from_fn(img.height(), img.width(), |x, y| img.get(y, x))
}

/// One horizontal 1D bilateral pass with replicated borders.
fn bilateral_rows<T: Scalar>(img: &Plane<T>, spatial: &[T], range: &[T]) -> Plane<T> {
    let r = spatial.len() / 2;
    let bins = T::of((range.len() - 1) as f64);
    let w = img.width();
    let mut out = Vec::with_capacity(img.len());
    let mut line = Vec::with_capacity(w + 2 * r);
    for y in 0..img.height() {
        let row = img.row(y);
        line.clear();
        line.extend(std::iter::repeat_n(row[0], r));
        line.extend_from_slice(row);
        line.extend(std::iter::repeat_n(row[w - 1], r));
        for (x, &center) in row.iter().enumerate() {
            let mut num = T::zero();
            let mut den = T::zero();
            for (&v, &s) in line[x..x + 2 * r + 1].iter().zip(spatial) {
                let d = ((v - center).abs().min(T::one()) * bins).to_usize().unwrap_or(0);
                let wgt = s * range[d];
                num += wgt * v;
                den += wgt;
            }
            out.push(num / den);
        }
    }
    Raster::new(w, img.height(), out).expect("dimensions preserved")
}

/// Separable bilateral filter: a 1D bilateral pass along rows, then along
/// columns, each over a window of radius `ceil(2 sigma_s)`.
pub(super) fn bilateral<T: Scalar>(img: &Plane<T>, sigma_s: f64, sigma_r: f64) -> Plane<T> {
    const RANGE_BINS: usize = 4096;
    let r = (2.0 * sigma_s).ceil().max(1.0) as i64;
    let spatial: Vec<T> = (-r..=r)
        .map(|d| T::of((-((d * d) as f64) / (2.0 * sigma_s * sigma_s)).exp()))
        .collect();
    // range weights tabulated over |difference| in [0, 1]
    let range: Vec<T> = (0..=RANGE_BINS)
        .map(|i| {
            let d = i as f64 / RANGE_BINS as f64;
            T::of((-(d * d) / (2.0 * sigma_r * sigma_r)).exp())
        })
        .collect();
    let horizontal = bilateral_rows(img, &spatial, &range);
    transpose(&bilateral_rows(&transpose(&horizontal), &spatial, &range))
}

/// Richardson-Lucy deconvolution under a Gaussian PSF, starting from the observation.
pub(super) fn richardson_lucy<T: Scalar>(img: &Plane<T>, sigma_psf: f64, iters: usize) -> Plane<T> {
    let eps = T::of(EPS);
    let mut estimate = img.map(|v| v.max(eps));
    for _ in 0..iters {
        let reblurred = gaussian_blur(&estimate, sigma_psf, PadMode::Replicate);
        let ratio = img.zip_map(&reblurred, |o, b| o / b.max(eps));
        let correction = gaussian_blur(&ratio, sigma_psf, PadMode::Replicate);
        estimate = estimate.zip_map(&correction, |e, c| e * c);
    }
    estimate
}

/// Half-widths of the rows of a digital disk of the given radius, indexed by `dy + radius`.
fn disk_rows(radius: usize) -> Vec<usize> {
    let r = radius as i64;
    (-r..=r)
        .map(|dy| (((r * r - dy * dy) as f64).sqrt()).floor() as usize)
        .collect()
}

/// Min (erode) or max (dilate) over a disk; samples outside the raster are ignored.
fn disk_extremum<T: Scalar>(img: &Plane<T>, radius: usize, take_min: bool) -> Plane<T> {
    let (w, h) = img.dims();
    let pick = |a: T, b: T| if take_min { a.min(b) } else { a.max(b) };
    let rows = disk_rows(radius);
    // running[a][y*w + x] = extremum over [x - a, x + a] within row y
    let mut running: Vec<Vec<T>> = Vec::with_capacity(radius + 1);
    running.push(img.pixels().to_vec());
    for a in 1..=radius {
        let prev = &running[a - 1];
        let mut cur = prev.clone();
        for y in 0..h {
            let row = img.row(y);
            for x in 0..w {
                let mut v = prev[y * w + x];
                if x >= a {
                    v = pick(v, row[x - a]);
                }
                if x + a < w {
                    v = pick(v, row[x + a]);
                }
                cur[y * w + x] = v;
            }
        }
        running.push(cur);
    }
    Raster::from_fn(w, h, |x, y| {
        let mut acc: Option<T> = None;
        for (k, &half) in rows.iter().enumerate() {
            let sy = y as isize + k as isize - radius as isize;
            if sy < 0 || sy >= h as isize {
                continue;
            }
            let v = running[half][sy as usize * w + x];
            acc = Some(acc.map_or(v, |a| pick(a, v)));
        }
        acc.unwrap_or_else(|| img.get(x, y))
    })
}

/// Grayscale opening with a disk structuring element.
pub(super) fn morph_open<T: Scalar>(img: &Plane<T>, radius: usize) -> Plane<T> {
    let eroded = disk_extremum(img, radius, true);
    disk_extremum(&eroded, radius, false)
}
