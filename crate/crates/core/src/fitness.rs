//! Five-objective scoring of a genome against a set of annotated images.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{run_pipeline, Genome};
use crate::image::GrayImage;
use crate::segment::{size_histogram, BinSpec, Mask, OtsuSegmenter, SegmentationResult, Segmenter};
use crate::Real;

/// Modeled cost of the segmentation stage, nanoseconds per pixel.
const SEGMENT_COST_PER_PIXEL: f64 = 12.0;
/// Modeled cost of quantizing in and out of the working representation.
const CONVERT_COST_PER_PIXEL: f64 = 2.0;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FitnessError {
    #[error("mask dimensions differ: {0:?} vs {1:?}")]
    DimensionMismatch((usize, usize), (usize, usize)),
    #[error("cannot aggregate an empty error list")]
    Empty,
}

/// Fraction of pixels where the masks disagree.
pub fn xor_error(pred: &Mask, truth: &Mask) -> Result<f64, FitnessError> {
    if pred.dims() != truth.dims() {
        return Err(FitnessError::DimensionMismatch(pred.dims(), truth.dims()));
    }
    let diff = pred
        .pixels()
        .iter()
        .zip(truth.pixels())
        .filter(|(a, b)| a != b)
        .count();
    Ok(diff as f64 / pred.len() as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub enum DistNorm {
    #[default]
    L2,
    L1,
}

impl DistNorm {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        let diffs = a.iter().zip(b).map(|(x, y)| (x - y).abs());
        match self {
            DistNorm::L2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
            DistNorm::L1 => diffs.sum(),
        }
    }
}

/// Where the time objective comes from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeSource {
    /// Cost model over block parameters and image size; reproducible.
    #[default]
    Modeled,
    /// Wall clock of pipeline plus segmentation.
    Measured,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitnessConfig {
    pub dist_norm: DistNorm,
    pub time_source: TimeSource,
    pub bins: BinSpec,
}

/// An image with its ground-truth segmentation.
#[derive(Clone, Debug)]
pub struct Sample {
    pub id: String,
    pub image: GrayImage,
    pub truth: SegmentationResult,
}

impl Sample {
    /// Truth is measured from `mask` as-is, without small-object removal.
    pub fn new(id: impl Into<String>, image: GrayImage, mask: Mask) -> Result<Self, FitnessError> {
        if image.dims() != mask.dims() {
            return Err(FitnessError::DimensionMismatch(image.dims(), mask.dims()));
        }
        Ok(Self {
            id: id.into(),
            image,
            truth: SegmentationResult::from_mask(mask),
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PerImageError {
    pub area_err: f64,
    pub count_err: f64,
    pub dist_err: f64,
    pub xor_err: f64,
    pub seconds: f64,
}

impl PerImageError {
    fn as_array(&self) -> [f64; 5] {
        [self.area_err, self.count_err, self.dist_err, self.xor_err, self.seconds]
    }
}

pub const OBJECTIVE_NAMES: [&str; 5] = ["area", "count", "distribution", "xor", "time"];

/// Aggregated scores, all minimized: area, count, distribution, xor, time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector(pub [f64; 5]);

impl ObjectiveVector {
    pub fn area(&self) -> f64 {
        self.0[0]
    }
    pub fn count(&self) -> f64 {
        self.0[1]
    }
    pub fn distribution(&self) -> f64 {
        self.0[2]
    }
    pub fn xor(&self) -> f64 {
        self.0[3]
    }
    pub fn time(&self) -> f64 {
        self.0[4]
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// The four segmentation errors, without time.
    pub fn errors(&self) -> &[f64] {
        &self.0[..4]
    }

    pub fn is_perfect(&self) -> bool {
        self.errors().iter().all(|&v| v == 0.0)
    }
}

impl fmt::Display for ObjectiveVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (name, v)) in OBJECTIVE_NAMES.iter().zip(self.0).enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{name}={v:.6e}")?;
        }
        Ok(())
    }
}

/// Mean over images of each squared per-image value.
pub fn aggregate(errors: &[PerImageError]) -> Result<ObjectiveVector, FitnessError> {
    if errors.is_empty() {
        return Err(FitnessError::Empty);
    }
    let mut acc = [0.0f64; 5];
    for e in errors {
        for (a, v) in acc.iter_mut().zip(e.as_array()) {
            *a += v * v;
        }
    }
    let n = errors.len() as f64;
    Ok(ObjectiveVector(acc.map(|a| a / n)))
}

/// Modeled seconds to filter and segment one `width x height` image.
pub fn modeled_seconds(g: &Genome, width: usize, height: usize) -> f64 {
    let per_pixel: f64 = g
        .active()
        .map(|b| b.cost_per_pixel(width, height))
        .sum::<f64>()
        + SEGMENT_COST_PER_PIXEL
        + CONVERT_COST_PER_PIXEL;
    per_pixel * (width * height) as f64 * 1e-9
}

/// Compares a predicted segmentation against the truth of `sample`.
pub fn compare(pred: &SegmentationResult, truth: &SegmentationResult, cfg: &FitnessConfig) -> PerImageError {
    let (w, h) = truth.mask.dims();
    let pred_hist = size_histogram(&pred.diameters(), &cfg.bins);
    let truth_hist = size_histogram(&truth.diameters(), &cfg.bins);
    PerImageError {
        area_err: pred.area().abs_diff(truth.area()) as f64 / (w * h) as f64,
        count_err: pred.count().abs_diff(truth.count()) as f64,
        dist_err: cfg.dist_norm.distance(&pred_hist, &truth_hist),
        xor_err: xor_error(&pred.mask, &truth.mask).expect("sample dimensions validated"),
        seconds: 0.0,
    }
}

/// Runs the pipeline and the segmenter on one sample and scores the result.
pub fn per_image_errors(
    g: &Genome,
    sample: &Sample,
    segmenter: &dyn Segmenter,
    cfg: &FitnessConfig,
) -> PerImageError {
    let start = Instant::now();
    let filtered = if g.effective_length() == 0 {
        sample.image.clone()
    } else {
        run_pipeline(g, &sample.image.to_plane::<Real>()).to_gray()
    };
    let pred = segmenter.segment(&filtered);
    let elapsed = start.elapsed().as_secs_f64();
    let mut e = compare(&pred, &sample.truth, cfg);
    e.seconds = match cfg.time_source {
        TimeSource::Measured => elapsed,
        TimeSource::Modeled => modeled_seconds(g, sample.image.width(), sample.image.height()),
    };
    e
}

/// Objectives plus the plain (unsquared) mean XOR error over the images.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub objectives: ObjectiveVector,
    pub mean_xor: f64,
}

impl Evaluation {
    pub fn from_errors(errors: &[PerImageError]) -> Result<Self, FitnessError> {
        let objectives = aggregate(errors)?;
        let mean_xor = errors.iter().map(|e| e.xor_err).sum::<f64>() / errors.len() as f64;
        Ok(Self { objectives, mean_xor })
    }
}

/// Scores genomes against a fixed sample set, memoizing by pipeline text.
///
/// Work fans out over (genome, image) pairs on the current rayon pool;
/// results are gathered in input order, so everything except measured time
/// is independent of the number of workers.
pub struct Evaluator<'a> {
    samples: &'a [Sample],
    segmenter: Arc<dyn Segmenter>,
    cfg: FitnessConfig,
    cache: Mutex<HashMap<String, Evaluation>>,
    wall_seconds: Mutex<f64>,
}

impl<'a> Evaluator<'a> {
    pub fn new(samples: &'a [Sample], cfg: FitnessConfig) -> Result<Self, FitnessError> {
        Self::with_segmenter(samples, cfg, Arc::new(OtsuSegmenter::default()))
    }

    pub fn with_segmenter(
        samples: &'a [Sample],
        cfg: FitnessConfig,
        segmenter: Arc<dyn Segmenter>,
    ) -> Result<Self, FitnessError> {
        if samples.is_empty() {
            return Err(FitnessError::Empty);
        }
        Ok(Self {
            samples,
            segmenter,
            cfg,
            cache: Mutex::new(HashMap::new()),
            wall_seconds: Mutex::new(0.0),
        })
    }

    pub fn samples(&self) -> &[Sample] {
        self.samples
    }

    pub fn config(&self) -> &FitnessConfig {
        &self.cfg
    }

    /// Total wall time spent running pipelines and segmentation.
    pub fn wall_seconds(&self) -> f64 {
        *self.wall_seconds.lock().expect("timer lock")
    }

    pub fn cache_len(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }

    /// Per-image errors, uncached.
    pub fn errors(&self, g: &Genome) -> Vec<PerImageError> {
        self.samples
            .par_iter()
            .map(|s| per_image_errors(g, s, self.segmenter.as_ref(), &self.cfg))
            .collect()
    }

    pub fn evaluate(&self, g: &Genome) -> Evaluation {
        self.evaluate_many(std::slice::from_ref(g))[0]
    }

    pub fn evaluate_many(&self, genomes: &[Genome]) -> Vec<Evaluation> {
        let keys: Vec<String> = genomes.iter().map(|g| g.compacted().to_string()).collect();
        let mut pending: Vec<usize> = Vec::new();
        {
            let cache = self.cache.lock().expect("cache lock");
            let mut seen = std::collections::HashSet::new();
            for (i, k) in keys.iter().enumerate() {
                if !cache.contains_key(k) && seen.insert(k.as_str()) {
                    pending.push(i);
                }
            }
        }
        let n = self.samples.len();
        let start = Instant::now();
        let errors: Vec<PerImageError> = (0..pending.len() * n)
            .into_par_iter()
            .map(|job| {
                let g = &genomes[pending[job / n]];
                per_image_errors(g, &self.samples[job % n], self.segmenter.as_ref(), &self.cfg)
            })
            .collect();
        *self.wall_seconds.lock().expect("timer lock") += start.elapsed().as_secs_f64();

        let mut cache = self.cache.lock().expect("cache lock");
        for (chunk, &i) in errors.chunks(n).zip(&pending) {
            let eval = Evaluation::from_errors(chunk).expect("sample set is non-empty");
            cache.insert(keys[i].clone(), eval);
        }
        keys.iter().map(|k| cache[k]).collect()
    }
}
