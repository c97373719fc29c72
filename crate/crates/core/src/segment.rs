//! The fixed filter-to-mask stage: Otsu threshold for dark objects, hole
//! filling, small-object removal, 8-connected labeling and measurement.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{histogram, GrayImage, Raster};

/// Binary raster; `true` is foreground (precipitate).
pub type Mask = Raster<bool>;

/// Minimum component area kept by the standard segmenter.
pub const MIN_AREA: usize = 9;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SegmentError {
    #[error("histogram is empty")]
    EmptyHistogram,
    #[error("histogram has a single occupied level; no threshold separates two classes")]
    Degenerate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
            Connectivity::Eight => &[
                (1, 0),
                (-1, 0),
                (0, 1),
                (0, -1),
                (1, 1),
                (1, -1),
                (-1, 1),
                (-1, -1),
            ],
        }
    }
}

/// `(N*S0 - n0*S)^2 / (n0*n1)`, proportional to the between-class variance,
/// kept as an exact fraction.
#[derive(Clone, Copy, Debug)]
struct Separation {
    num: u128,
    den: u128,
}

impl Separation {
    /// Exact `self > other` without overflowing: compare integer quotients,
    /// then the remainders' fractions.
    fn gt(&self, other: &Separation) -> bool {
        let (qa, ra) = (self.num / self.den, self.num % self.den);
        let (qb, rb) = (other.num / other.den, other.num % other.den);
        if qa != qb {
            return qa > qb;
        }
        ra * other.den > rb * self.den
    }
}

/// Otsu's level: pixels strictly below it form the dark class. Maximizes the
/// between-class variance; ties go to the lower level.
pub fn otsu_threshold(hist: &[u64; 256]) -> Result<u8, SegmentError> {
    let n: u64 = hist.iter().sum();
    if n == 0 {
        return Err(SegmentError::EmptyHistogram);
    }
    let total_sum: u64 = hist.iter().enumerate().map(|(k, &c)| k as u64 * c).sum();
    let mut best: Option<(u8, Separation)> = None;
    let mut n0 = 0u64;
    let mut s0 = 0u64;
    for t in 1..256usize {
        n0 += hist[t - 1];
        s0 += (t as u64 - 1) * hist[t - 1];
        let n1 = n - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let diff = (n as i128 * s0 as i128 - n0 as i128 * total_sum as i128).unsigned_abs();
        let cand = Separation {
            num: diff * diff,
            den: n0 as u128 * n1 as u128,
        };
        if best.as_ref().is_none_or(|(_, b)| cand.gt(b)) {
            best = Some((t as u8, cand));
        }
    }
    best.map(|(t, _)| t).ok_or(SegmentError::Degenerate)
}

/// Dense labels (`0` = background, components numbered from 1 in raster
/// order of their first pixel) and per-label areas.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Labeling {
    pub labels: Raster<u32>,
    /// `areas[k]` is the pixel count of label `k + 1`.
    pub areas: Vec<usize>,
}

impl Labeling {
    pub fn count(&self) -> usize {
        self.areas.len()
    }
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        parent[x as usize] = parent[parent[x as usize] as usize];
        x = parent[x as usize];
    }
    x
}

/// Two-pass union-find labeling.
pub fn connected_components(mask: &Mask, connectivity: Connectivity) -> Labeling {
    let (w, h) = mask.dims();
    let mut provisional = vec![0u32; w * h];
    let mut parent: Vec<u32> = vec![0];
    // previously visited neighbours in raster order
    let back: &[(isize, isize)] = match connectivity {
        Connectivity::Four => &[(-1, 0), (0, -1)],
        Connectivity::Eight => &[(-1, 0), (-1, -1), (0, -1), (1, -1)],
    };
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let mut label = 0u32;
            for &(dx, dy) in back {
                let nx = x as isize + dx;
                let ny = y as isize + dy;
                if nx < 0 || ny < 0 || nx >= w as isize {
                    continue;
                }
                let l = provisional[ny as usize * w + nx as usize];
                if l == 0 {
                    continue;
                }
                if label == 0 {
                    label = l;
                } else {
                    let a = find(&mut parent, label);
                    let b = find(&mut parent, l);
                    if a != b {
                        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                        parent[hi as usize] = lo;
                    }
                }
            }
            if label == 0 {
                label = parent.len() as u32;
                parent.push(label);
            }
            provisional[y * w + x] = label;
        }
    }
    let mut dense = vec![0u32; parent.len()];
    let mut areas = Vec::new();
    let mut data = vec![0u32; w * h];
    for (i, &p) in provisional.iter().enumerate() {
        if p == 0 {
            continue;
        }
        let root = find(&mut parent, p) as usize;
        if dense[root] == 0 {
            areas.push(0);
            dense[root] = areas.len() as u32;
        }
        let l = dense[root];
        areas[l as usize - 1] += 1;
        data[i] = l;
    }
    Labeling {
        labels: Raster::new(w, h, data).expect("same dimensions"),
        areas,
    }
}

/// Sets every background pixel that is not 4-connected to the border.
pub fn fill_holes(mask: &Mask) -> Mask {
    let (w, h) = mask.dims();
    let mut outside = vec![false; w * h];
    let mut queue = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            let border = x == 0 || y == 0 || x == w - 1 || y == h - 1;
            if border && !mask.get(x, y) {
                outside[y * w + x] = true;
                queue.push_back((x, y));
            }
        }
    }
    while let Some((x, y)) = queue.pop_front() {
        for &(dx, dy) in Connectivity::Four.offsets() {
            let nx = x as isize + dx;
            let ny = y as isize + dy;
            if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                continue;
            }
            let (nx, ny) = (nx as usize, ny as usize);
            if !mask.get(nx, ny) && !outside[ny * w + nx] {
                outside[ny * w + nx] = true;
                queue.push_back((nx, ny));
            }
        }
    }
    Raster::new(w, h, outside.into_iter().map(|o| !o).collect()).expect("same dimensions")
}

/// Drops 8-connected components smaller than `min_area`.
pub fn remove_small(mask: &Mask, min_area: usize) -> Mask {
    let lab = connected_components(mask, Connectivity::Eight);
    lab.labels
        .map(|l| l != 0 && lab.areas[l as usize - 1] >= min_area)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub label: u32,
    pub area: usize,
    pub equivalent_diameter: f64,
    pub centroid: (f64, f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentationResult {
    pub mask: Mask,
    pub components: Vec<Component>,
}

impl SegmentationResult {
    /// Labels and measures a mask as-is (no cleanup).
    pub fn from_mask(mask: Mask) -> Self {
        let lab = connected_components(&mask, Connectivity::Eight);
        let mut sums = vec![(0.0f64, 0.0f64); lab.count()];
        let (w, h) = mask.dims();
        for y in 0..h {
            for x in 0..w {
                let l = lab.labels.get(x, y);
                if l > 0 {
                    let s = &mut sums[l as usize - 1];
                    s.0 += x as f64;
                    s.1 += y as f64;
                }
            }
        }
        let components = lab
            .areas
            .iter()
            .zip(&sums)
            .enumerate()
            .map(|(i, (&area, &(sx, sy)))| Component {
                label: i as u32 + 1,
                area,
                equivalent_diameter: equivalent_diameter(area),
                centroid: (sx / area as f64, sy / area as f64),
            })
            .collect();
        Self { mask, components }
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            mask: Mask::filled(width, height, false),
            components: Vec::new(),
        }
    }

    pub fn count(&self) -> usize {
        self.components.len()
    }

    pub fn area(&self) -> usize {
        self.components.iter().map(|c| c.area).sum()
    }

    pub fn diameters(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.equivalent_diameter).collect()
    }

    /// Mask as a `{0, 255}` image.
    pub fn mask_image(&self) -> GrayImage {
        mask_to_gray(&self.mask)
    }

    /// `label,area_px,eq_diameter_px,centroid_x,centroid_y` rows with a header.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["label", "area_px", "eq_diameter_px", "centroid_x", "centroid_y"])?;
        for c in &self.components {
            wtr.write_record([
                c.label.to_string(),
                c.area.to_string(),
                c.equivalent_diameter.to_string(),
                c.centroid.0.to_string(),
                c.centroid.1.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> csv::Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// `2 sqrt(area / pi)`.
pub fn equivalent_diameter(area: usize) -> f64 {
    2.0 * (area as f64 / std::f64::consts::PI).sqrt()
}

pub fn mask_to_gray(mask: &Mask) -> GrayImage {
    mask.map(|b| if b { 255 } else { 0 })
}

/// Any intensity of 128 or more is foreground.
pub fn gray_to_mask(img: &GrayImage) -> Mask {
    img.map(|v| v >= 128)
}

/// A versioned image-to-segmentation procedure.
pub trait Segmenter: Send + Sync {
    fn version(&self) -> &str;
    fn segment(&self, img: &GrayImage) -> SegmentationResult;
}

/// Otsu threshold (dark foreground), hole fill, removal of components below
/// `min_area`, 8-connected labeling.
#[derive(Clone, Debug)]
pub struct OtsuSegmenter {
    pub min_area: usize,
}

impl Default for OtsuSegmenter {
    fn default() -> Self {
        Self { min_area: MIN_AREA }
    }
}

impl Segmenter for OtsuSegmenter {
    fn version(&self) -> &str {
        "otsu-dark/fill/min-area/8conn v1"
    }

    fn segment(&self, img: &GrayImage) -> SegmentationResult {
        let hist: [u64; 256] = histogram(img, 256)
            .try_into()
            .expect("256 bins requested");
        let Ok(t) = otsu_threshold(&hist) else {
            return SegmentationResult::empty(img.width(), img.height());
        };
        let fg = img.map(|v| v < t);
        let filled = fill_holes(&fg);
        let cleaned = remove_small(&filled, self.min_area);
        SegmentationResult::from_mask(cleaned)
    }
}

/// The standard segmentation procedure.
pub fn segment(img: &GrayImage) -> SegmentationResult {
    OtsuSegmenter::default().segment(img)
}

/// Logarithmic diameter bins.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub bins: usize,
    pub min_diameter: f64,
    pub max_diameter: f64,
}

impl Default for BinSpec {
    fn default() -> Self {
        Self {
            bins: 16,
            min_diameter: 2.0,
            max_diameter: 200.0,
        }
    }
}

impl BinSpec {
    /// Bin of a diameter; values outside the range land in the end bins.
    pub fn bin_of(&self, d: f64) -> usize {
        let span = (self.max_diameter / self.min_diameter).ln();
        let pos = (d.max(f64::MIN_POSITIVE) / self.min_diameter).ln() / span * self.bins as f64;
        if pos.is_nan() || pos < 0.0 {
            0
        } else {
            (pos.floor() as usize).min(self.bins - 1)
        }
    }
}

/// Normalized size histogram; all zeros when there are no diameters.
pub fn size_histogram(diameters: &[f64], bins: &BinSpec) -> Vec<f64> {
    let mut w = vec![0.0; bins.bins];
    if diameters.is_empty() {
        return w;
    }
    for &d in diameters {
        w[bins.bin_of(d)] += 1.0;
    }
    let n = diameters.len() as f64;
    w.iter_mut().for_each(|v| *v /= n);
    w
}
