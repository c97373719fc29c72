//! Synthetic precipitate micrographs with exact ground truth.
//!
//! A clean scene of Voronoi grains and dark disks is degraded by an
//! illumination ramp, blur, vertical streaks, and Poisson plus Gaussian noise.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{write_manifest, DatasetError, ManifestEntry};
use crate::image::{gaussian_blur, GrayImage, PadMode, Plane, Raster};
use crate::io::{save_image, IoError};
use crate::segment::{mask_to_gray, Mask};

/// Placement attempts per disk before giving up on it.
const PLACEMENT_TRIES: usize = 200;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthesis parameter: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Manifest(#[from] DatasetError),
    #[error("cannot create {path}: {source}")]
    CreateDir { path: std::path::PathBuf, source: std::io::Error },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub width: usize,
    pub height: usize,
    pub count_min: usize,
    pub count_max: usize,
    /// Log-normal radius distribution, in pixels.
    pub radius_median: f64,
    pub radius_sigma: f64,
    pub radius_min: f64,
    pub radius_max: f64,
    /// Minimum gap between disk edges.
    pub spacing: f64,
    /// Intensity of precipitates in the clean scene, in `[0, 1]`.
    pub precipitate_intensity: f64,
    /// Per-disk intensity jitter (uniform half-width).
    pub precipitate_jitter: f64,
    pub grain_cells: usize,
    pub grain_min: f64,
    pub grain_max: f64,
    /// Brightness falls linearly from 1 at the bottom to `1 - illumination` at the top.
    pub illumination: f64,
    pub blur_sigma: f64,
    pub streaks: usize,
    pub streak_width: f64,
    pub streak_contrast: f64,
    /// Photon count at unit intensity; 0 disables Poisson noise.
    pub poisson_scale: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            width: 512,
            height: 512,
            count_min: 60,
            count_max: 90,
            radius_median: 10.0,
            radius_sigma: 0.35,
            radius_min: 2.0,
            radius_max: 20.0,
            spacing: 3.0,
            precipitate_intensity: 0.22,
            precipitate_jitter: 0.04,
            grain_cells: 24,
            grain_min: 0.45,
            grain_max: 0.8,
            illumination: 0.45,
            blur_sigma: 1.2,
            streaks: 10,
            streak_width: 6.0,
            streak_contrast: 0.25,
            poisson_scale: 100.0,
            noise_sigma: 0.04,
            seed: 0,
        }
    }
}

impl SynthParams {
    /// No degradations at all.
    pub fn clean() -> Self {
        Self {
            illumination: 0.0,
            blur_sigma: 0.0,
            streaks: 0,
            streak_contrast: 0.0,
            poisson_scale: 0.0,
            noise_sigma: 0.0,
            precipitate_jitter: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Invalid(m.to_string()));
        if self.width == 0 || self.height == 0 {
            return bad("width and height must be positive");
        }
        if self.count_min > self.count_max {
            return bad("count_min exceeds count_max");
        }
        if !(self.radius_min >= 2.0) || self.radius_max < self.radius_min {
            return bad("radii need 2 <= radius_min <= radius_max");
        }
        if !(self.radius_median > 0.0) {
            return bad("radius_median must be positive");
        }
        let reals = [
            self.radius_sigma,
            self.spacing,
            self.precipitate_intensity,
            self.precipitate_jitter,
            self.grain_min,
            self.grain_max,
            self.illumination,
            self.blur_sigma,
            self.streak_width,
            self.streak_contrast,
            self.poisson_scale,
            self.noise_sigma,
        ];
        if reals.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("all parameters must be finite and non-negative");
        }
        if self.grain_min > self.grain_max {
            return bad("grain_min exceeds grain_max");
        }
        if self.illumination > 1.0 || self.streak_contrast > 1.0 {
            return bad("illumination and streak_contrast must not exceed 1");
        }
        Ok(())
    }
}

/// One placed precipitate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Disk {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

impl Disk {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        (x as f64 - self.cx).powi(2) + (y as f64 - self.cy).powi(2) <= self.r * self.r
    }
}

fn place_disks(p: &SynthParams, rng: &mut ChaCha8Rng) -> Vec<Disk> {
    let count = rng.random_range(p.count_min..=p.count_max);
    let radius = LogNormal::new(p.radius_median.ln(), p.radius_sigma).expect("validated sigma");
    let mut disks: Vec<Disk> = Vec::with_capacity(count);
    for _ in 0..count {
        let r = radius.sample(rng).clamp(p.radius_min, p.radius_max);
        let (w, h) = (p.width as f64, p.height as f64);
        if 2.0 * r + 1.0 > w || 2.0 * r + 1.0 > h {
            continue;
        }
        for _ in 0..PLACEMENT_TRIES {
            let d = Disk {
                cx: rng.random_range(r..=w - 1.0 - r),
                cy: rng.random_range(r..=h - 1.0 - r),
                r,
            };
            let clear = disks.iter().all(|o| {
                let dist = ((o.cx - d.cx).powi(2) + (o.cy - d.cy).powi(2)).sqrt();
                dist >= o.r + d.r + p.spacing
            });
            if clear {
                disks.push(d);
                break;
            }
        }
    }
    disks
}

/// Generated image, truth mask and the disks behind the mask.
#[derive(Clone, Debug)]
pub struct Micrograph {
    pub image: GrayImage,
    pub mask: Mask,
    pub disks: Vec<Disk>,
}

pub fn synth_micrograph(p: &SynthParams, rng: &mut ChaCha8Rng) -> Result<Micrograph, SynthError> {
    p.validate()?;
    let (w, h) = (p.width, p.height);

    let cells: Vec<(f64, f64, f64)> = (0..p.grain_cells.max(1))
        .map(|_| {
            (
                rng.random_range(0.0..w as f64),
                rng.random_range(0.0..h as f64),
                rng.random_range(p.grain_min..=p.grain_max),
            )
        })
        .collect();
    let grain = |x: usize, y: usize| {
        cells
            .iter()
            .map(|&(cx, cy, v)| ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2), v))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, v)| v)
            .expect("at least one cell")
    };

    let disks = place_disks(p, rng);
    let levels: Vec<f64> = disks
        .iter()
        .map(|_| {
            let j = if p.precipitate_jitter > 0.0 {
                rng.random_range(-p.precipitate_jitter..=p.precipitate_jitter)
            } else {
                0.0
            };
            (p.precipitate_intensity + j).clamp(0.0, 1.0)
        })
        .collect();
    let mut label = Raster::filled(w, h, usize::MAX);
    for (k, d) in disks.iter().enumerate() {
        let x0 = (d.cx - d.r).floor().max(0.0) as usize;
        let x1 = ((d.cx + d.r).ceil() as usize).min(w - 1);
        let y0 = (d.cy - d.r).floor().max(0.0) as usize;
        let y1 = ((d.cy + d.r).ceil() as usize).min(h - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                if d.contains(x, y) {
                    label.set(x, y, k);
                }
            }
        }
    }
    let mask = label.map(|k| k != usize::MAX);
    let mut scene: Plane<f64> = Raster::from_fn(w, h, |x, y| match label.get(x, y) {
        usize::MAX => grain(x, y),
        k => levels[k],
    });

    if p.illumination > 0.0 {
        let denom = (h.max(2) - 1) as f64;
        scene = Raster::from_fn(w, h, |x, y| {
            scene.get(x, y) * (1.0 - p.illumination * (1.0 - y as f64 / denom))
        });
    }
    if p.blur_sigma > 0.0 {
        scene = gaussian_blur(&scene, p.blur_sigma, PadMode::Replicate);
    }
    if p.streaks > 0 && p.streak_contrast > 0.0 {
        let mut profile = vec![1.0f64; w];
        for _ in 0..p.streaks {
            let center = rng.random_range(0.0..w as f64);
            let half = (p.streak_width * rng.random_range(0.5..=1.5)).max(0.5);
            let depth = p.streak_contrast * rng.random_range(0.5..=1.0);
            for (x, f) in profile.iter_mut().enumerate() {
                let d = (x as f64 - center).abs() / half;
                if d < 1.0 {
                    *f *= 1.0 - depth * 0.5 * (1.0 + (std::f64::consts::PI * d).cos());
                }
            }
        }
        scene = Raster::from_fn(w, h, |x, y| scene.get(x, y) * profile[x]);
    }
    if p.poisson_scale > 0.0 {
        scene = scene.map(|v| {
            let lambda = v.max(0.0) * p.poisson_scale;
            if lambda <= 0.0 {
                0.0
            } else {
                Poisson::new(lambda).map(|d| d.sample(rng)).unwrap_or(lambda) / p.poisson_scale
            }
        });
    }
    if p.noise_sigma > 0.0 {
        let n = Normal::new(0.0, p.noise_sigma).expect("validated sigma");
        scene = scene.map(|v| v + n.sample(rng));
    }
    Ok(Micrograph {
        image: scene.to_gray(),
        mask,
        disks,
    })
}

/// Stream for image `index` of a corpus generated from `seed`.
pub fn image_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub fn synth_corpus(p: &SynthParams, count: usize) -> Result<Vec<Micrograph>, SynthError> {
    if count == 0 {
        return Err(SynthError::Invalid("count must be at least 1".into()));
    }
    (0..count).map(|i| synth_micrograph(p, &mut image_rng(p.seed, i))).collect()
}

/// Writes `synth_NNN.png`, `synth_NNN_mask.png` and `manifest.json` into
/// `dir`; returns the manifest path.
pub fn write_corpus(p: &SynthParams, count: usize, dir: impl AsRef<Path>) -> Result<std::path::PathBuf, SynthError> {
    let dir = dir.as_ref();
    let corpus = synth_corpus(p, count)?;
    std::fs::create_dir_all(dir).map_err(|source| SynthError::CreateDir {
        path: dir.to_owned(),
        source,
    })?;
    let mut entries = Vec::with_capacity(count);
    for (i, m) in corpus.iter().enumerate() {
        let id = format!("synth_{i:03}");
        let image = format!("{id}.png");
        let mask = format!("{id}_mask.png");
        save_image(&m.image, dir.join(&image))?;
        save_image(&mask_to_gray(&m.mask), dir.join(&mask))?;
        entries.push(ManifestEntry {
            id,
            image: image.into(),
            mask: mask.into(),
            split: None,
        });
    }
    let manifest = dir.join("manifest.json");
    write_manifest(&manifest, &entries)?;
    Ok(manifest)
}
