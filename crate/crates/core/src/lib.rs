//! Evolutionary synthesis of image-restoration pipelines.
//!
//! Pipelines are fixed-length sequences of parameterized filter blocks. A
//! multi-objective linear genetic programming engine evolves them so that a
//! fixed Otsu-based segmentation of the filtered image matches ground-truth
//! precipitate masks. Evolved pipelines round-trip through a small text
//! language.
//!
//! The filter stack is generic over the working [`Scalar`] (`f32` or `f64`);
//! the evaluation path uses [`Real`].

pub mod blocks;
pub mod dataset;
pub mod dsl;
pub mod evolution;
pub mod fitness;
pub mod image;
pub mod io;
pub mod report;
pub mod scalar;
pub mod segment;
pub mod synth;

pub use scalar::Scalar;

/// Working scalar used by fitness evaluation and the CLI.
pub type Real = f32;

/// Single-precision working image.
pub type Plane32 = image::Plane<f32>;
/// Double-precision working image.
pub type Plane64 = image::Plane<f64>;
