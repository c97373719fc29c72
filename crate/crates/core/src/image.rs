//! Raster containers, padding, correlation and histogram utilities.
//!
//! Every filter block works on a [`Plane`] of reals in `[0, 1]`; 8-bit
//! [`GrayImage`]s only appear at pipeline boundaries.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RasterError {
    #[error("raster dimensions must be at least 1x1, got {width}x{height}")]
    EmptyDimensions { width: usize, height: usize },
    #[error("expected {expected} pixels for the given dimensions, got {actual}")]
    PixelCount { expected: usize, actual: usize },
    #[error("kernel dimensions must be odd, got {width}x{height}")]
    EvenKernel { width: usize, height: usize },
    #[error("kernel has {actual} weights, expected {expected}")]
    KernelWeights { expected: usize, actual: usize },
    #[error("crop margins exceed raster dimensions")]
    CropTooLarge,
}

/// Row-major 2D raster.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Raster<P> {
    width: usize,
    height: usize,
    data: Vec<P>,
}

/// 8-bit grayscale image, the value that enters and leaves a pipeline.
pub type GrayImage = Raster<u8>;

/// Real-valued working image with intensities nominally in `[0, 1]`.
pub type Plane<T> = Raster<T>;

impl<P: Copy> Raster<P> {
    pub fn new(width: usize, height: usize, data: Vec<P>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::EmptyDimensions { width, height });
        }
        if data.len() != width * height {
            return Err(RasterError::PixelCount {
                expected: width * height,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn filled(width: usize, height: usize, value: P) -> Self {
        assert!(width > 0 && height > 0, "raster dimensions must be non-zero");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> P) -> Self {
        assert!(width > 0 && height > 0, "raster dimensions must be non-zero");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    /// Always false; rasters are at least 1x1.
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> P {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: P) {
        self.data[y * self.width + x] = v;
    }

    #[inline]
    pub fn pixels(&self) -> &[P] {
        &self.data
    }

    #[inline]
    pub fn pixels_mut(&mut self) -> &mut [P] {
        &mut self.data
    }

    pub fn into_pixels(self) -> Vec<P> {
        self.data
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[P] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn map<Q: Copy>(&self, f: impl FnMut(P) -> Q) -> Raster<Q> {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().copied().map(f).collect(),
        }
    }

    /// Same-shaped raster built from the pairwise combination of two rasters.
    ///
    /// # Panics
    /// If the dimensions differ.
    pub fn zip_map<Q: Copy, R: Copy>(
        &self,
        other: &Raster<Q>,
        mut f: impl FnMut(P, Q) -> R,
    ) -> Raster<R> {
        assert_eq!(self.dims(), other.dims(), "raster dimension mismatch");
        Raster {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Sample at a possibly out-of-range coordinate, resolving the border per `mode`.
    #[inline]
    pub fn sample(&self, x: isize, y: isize, mode: PadMode) -> P
    where
        P: Default,
    {
        match (
            mode.resolve(x, self.width),
            mode.resolve(y, self.height),
        ) {
            (Some(xi), Some(yi)) => self.get(xi, yi),
            _ => P::default(),
        }
    }

    /// Remove the given margins.
    pub fn crop(
        &self,
        top: usize,
        bottom: usize,
        left: usize,
        right: usize,
    ) -> Result<Self, RasterError> {
        if top + bottom >= self.height || left + right >= self.width {
            return Err(RasterError::CropTooLarge);
        }
        let w = self.width - left - right;
        let h = self.height - top - bottom;
        Ok(Raster::from_fn(w, h, |x, y| self.get(x + left, y + top)))
    }
}

impl GrayImage {
    /// Converts 8-bit intensities to the `[0, 1]` working range.
    pub fn to_plane<T: Scalar>(&self) -> Plane<T> {
        let lut: Vec<T> = (0..=255u8).map(to_unit).collect();
        self.map(|v| lut[v as usize])
    }
}

impl<T: Scalar> Plane<T> {
    /// Clamps to `[0, 1]` and quantizes back to 8 bits.
    pub fn to_gray(&self) -> GrayImage {
        self.map(from_unit)
    }

    /// Clamp every sample into `[0, 1]`; NaN becomes 0.
    pub fn clamp_unit(mut self) -> Self {
        for v in self.data.iter_mut() {
            *v = clamp_unit(*v);
        }
        self
    }

    pub fn mean(&self) -> T {
        let sum: f64 = self.data.iter().map(|v| v.to_f64_lossy()).sum();
        T::of(sum / self.data.len() as f64)
    }

    /// 256-bin histogram of the quantized samples.
    pub fn level_histogram(&self) -> [u64; 256] {
        let mut h = [0u64; 256];
        for &v in &self.data {
            h[from_unit(v) as usize] += 1;
        }
        h
    }
}

#[inline]
pub fn to_unit<T: Scalar>(v: u8) -> T {
    T::of(v as f64 / 255.0)
}

/// Round-half-away-from-zero of `clamp(v, 0, 1) * 255`.
#[inline]
pub fn from_unit<T: Scalar>(v: T) -> u8 {
    let x = clamp_unit(v).to_f64_lossy() * 255.0;
    x.round() as u8
}

#[inline]
pub fn clamp_unit<T: Scalar>(v: T) -> T {
    if v.is_nan() {
        T::zero()
    } else {
        v.max(T::zero()).min(T::one())
    }
}

/// Border extension rule for out-of-range samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PadMode {
    /// Intensity 0 outside the raster.
    Zeros,
    /// Nearest edge sample.
    Replicate,
    /// Mirror including the edge sample (`-1 -> 0`, `-2 -> 1`).
    Symmetric,
}

impl PadMode {
    pub const ALL: [PadMode; 3] = [PadMode::Zeros, PadMode::Replicate, PadMode::Symmetric];

    pub fn name(self) -> &'static str {
        match self {
            PadMode::Zeros => "zeros",
            PadMode::Replicate => "replicate",
            PadMode::Symmetric => "symmetric",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    /// Maps a coordinate onto `0..n`, or `None` when the sample is zero padding.
    #[inline]
    pub fn resolve(self, i: isize, n: usize) -> Option<usize> {
        let ni = n as isize;
        if (0..ni).contains(&i) {
            return Some(i as usize);
        }
        match self {
            PadMode::Zeros => None,
            PadMode::Replicate => Some(i.clamp(0, ni - 1) as usize),
            PadMode::Symmetric => {
                let m = i.rem_euclid(2 * ni);
                Some(if m < ni { m } else { 2 * ni - 1 - m } as usize)
            }
        }
    }
}

/// Extends a raster by the given margins.
pub fn pad<P: Copy + Default>(
    img: &Raster<P>,
    mode: PadMode,
    top: usize,
    bottom: usize,
    left: usize,
    right: usize,
) -> Raster<P> {
    let w = img.width + left + right;
    let h = img.height + top + bottom;
    Raster::from_fn(w, h, |x, y| {
        img.sample(x as isize - left as isize, y as isize - top as isize, mode)
    })
}

/// Dense 2D correlation kernel with odd dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    width: usize,
    height: usize,
    weights: Vec<f64>,
}

impl Kernel {
    pub fn new(width: usize, height: usize, weights: Vec<f64>) -> Result<Self, RasterError> {
        if width % 2 == 0 || height % 2 == 0 {
            return Err(RasterError::EvenKernel { width, height });
        }
        if weights.len() != width * height {
            return Err(RasterError::KernelWeights {
                expected: width * height,
                actual: weights.len(),
            });
        }
        Ok(Self {
            width,
            height,
            weights,
        })
    }

    pub fn delta() -> Self {
        Self {
            width: 1,
            height: 1,
            weights: vec![1.0],
        }
    }

    /// Square Gaussian kernel truncated at radius `ceil(3 sigma)`, normalized to sum 1.
    pub fn gaussian(sigma: f64) -> Self {
        let g = gaussian_taps(sigma);
        let n = g.len();
        let mut weights = Vec::with_capacity(n * n);
        for a in &g {
            for b in &g {
                weights.push(a * b);
            }
        }
        let s: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= s);
        Self {
            width: n,
            height: n,
            weights,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, kx: usize, ky: usize) -> f64 {
        self.weights[ky * self.width + kx]
    }
}

/// Normalized 1D Gaussian taps over `[-ceil(3 sigma), ceil(3 sigma)]`.
pub fn gaussian_taps(sigma: f64) -> Vec<f64> {
    assert!(sigma > 0.0 && sigma.is_finite(), "sigma must be positive");
    let radius = (3.0 * sigma).ceil() as isize;
    let denom = 2.0 * sigma * sigma;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / denom).exp())
        .collect();
    let s: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= s);
    taps
}

/// Correlation (not convolution: the kernel is not flipped) of `img` with `k`.
///
/// Output has the input's dimensions; borders are resolved with `mode`.
pub fn convolve2d<T: Scalar>(
    img: &Plane<T>,
    k: &Kernel,
    mode: PadMode,
) -> Result<Plane<T>, RasterError> {
    if k.width % 2 == 0 || k.height % 2 == 0 {
        return Err(RasterError::EvenKernel {
            width: k.width,
            height: k.height,
        });
    }
    let rx = (k.width / 2) as isize;
    let ry = (k.height / 2) as isize;
    let weights: Vec<T> = k.weights.iter().map(|&w| T::of(w)).collect();
    Ok(Raster::from_fn(img.width, img.height, |x, y| {
        let mut acc = T::zero();
        for ky in 0..k.height {
            for kx in 0..k.width {
                let sx = x as isize + kx as isize - rx;
                let sy = y as isize + ky as isize - ry;
                acc += weights[ky * k.width + kx] * img.sample(sx, sy, mode);
            }
        }
        acc
    }))
}

/// Separable correlation: rows with `kx`, then columns with `ky`.
///
/// # Panics
/// If either tap vector has even length.
pub fn correlate_separable<T: Scalar>(
    img: &Plane<T>,
    kx: &[f64],
    ky: &[f64],
    mode: PadMode,
) -> Plane<T> {
    assert!(kx.len() % 2 == 1 && ky.len() % 2 == 1, "taps must be odd");
    let (w, h) = img.dims();

    let rx = kx.len() / 2;
    let wx: Vec<T> = kx.iter().map(|&v| T::of(v)).collect();
    let mut rows = vec![T::zero(); w * h];
    let mut buf = vec![T::zero(); w + 2 * rx];
    for y in 0..h {
        let src = img.row(y);
        for (j, b) in buf.iter_mut().enumerate() {
            *b = match mode.resolve(j as isize - rx as isize, w) {
                Some(i) => src[i],
                None => T::zero(),
            };
        }
        let out = &mut rows[y * w..(y + 1) * w];
        for (k, &wk) in wx.iter().enumerate() {
            for (o, &b) in out.iter_mut().zip(&buf[k..k + w]) {
                *o += wk * b;
            }
        }
    }

    let ry = ky.len() / 2;
    let wy: Vec<T> = ky.iter().map(|&v| T::of(v)).collect();
    let mut data = vec![T::zero(); w * h];
    for y in 0..h {
        let out = &mut data[y * w..(y + 1) * w];
        for (k, &wk) in wy.iter().enumerate() {
            let Some(sy) = mode.resolve(y as isize + k as isize - ry as isize, h) else {
                continue;
            };
            for (o, &b) in out.iter_mut().zip(&rows[sy * w..(sy + 1) * w]) {
                *o += wk * b;
            }
        }
    }
    Raster {
        width: w,
        height: h,
        data,
    }
}

/// Blur with the truncated square Gaussian kernel, computed separably.
pub fn gaussian_blur<T: Scalar>(img: &Plane<T>, sigma: f64, mode: PadMode) -> Plane<T> {
    let taps = gaussian_taps(sigma);
    correlate_separable(img, &taps, &taps, mode)
}

/// Box mean over a `kw x kh` window (both odd).
pub fn box_mean<T: Scalar>(img: &Plane<T>, kw: usize, kh: usize, mode: PadMode) -> Plane<T> {
    let tx = vec![1.0 / kw as f64; kw];
    let ty = vec![1.0 / kh as f64; kh];
    correlate_separable(img, &tx, &ty, mode)
}

/// Counts per bin; bin `b` covers intensities `[b*256/bins, (b+1)*256/bins)`.
///
/// # Panics
/// If `bins` is zero.
pub fn histogram(img: &GrayImage, bins: usize) -> Vec<u64> {
    assert!(bins >= 1, "histogram needs at least one bin");
    let mut counts = vec![0u64; bins];
    for &v in img.pixels() {
        counts[v as usize * bins / 256] += 1;
    }
    counts
}
