//! Median filtering over an `h x w` window.

use std::cmp::Ordering;

use crate::image::{PadMode, Plane, Raster};
use crate::scalar::Scalar;

#[inline]
fn cmp<T: Scalar>(a: &T, b: &T) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

/// Intensity buckets of the sliding histogram.
const BUCKETS: usize = 256;

/// Monotone bucket index of a working value.
#[inline]
fn bucket<T: Scalar>(v: T) -> u8 {
    let b = (v.to_f64_lossy() * BUCKETS as f64).floor();
    b.clamp(0.0, (BUCKETS - 1) as f64) as u8
}

/// Exact sliding-window median.
///
/// Each row keeps a histogram of coarse intensity buckets over the window,
/// tracks the bucket holding the median, and selects exactly among the
/// window values that fall into that bucket.
///
/// # Panics
/// If `h` or `w` is even or zero.
pub fn median_filter<T: Scalar>(img: &Plane<T>, h: usize, w: usize, mode: PadMode) -> Plane<T> {
    assert!(h % 2 == 1 && w % 2 == 1, "median window must be odd");
    let (width, height) = img.dims();
    let ry = (h / 2) as isize;
    let rx = (w / 2) as isize;
    let k = h * w / 2;

    // padded copy so the inner loops index directly
    let pw = width + w - 1;
    let ph = height + h - 1;
    let mut padded: Vec<T> = Vec::with_capacity(pw * ph);
    for y in 0..ph {
        for x in 0..pw {
            padded.push(img.sample(x as isize - rx, y as isize - ry, mode));
        }
    }
    let buckets: Vec<u8> = padded.iter().map(|&v| bucket(v)).collect();

    let mut out = Vec::with_capacity(width * height);
    let mut candidates: Vec<T> = Vec::with_capacity(h * w);
    for y in 0..height {
        let mut counts = [0u32; BUCKETS];
        for dy in 0..h {
            for &b in &buckets[(y + dy) * pw..(y + dy) * pw + w] {
                counts[b as usize] += 1;
            }
        }
        // invariant: below <= k < below + counts[median]
        let mut median = 0usize;
        let mut below = 0usize;
        for x in 0..width {
            if x > 0 {
                for dy in 0..h {
                    let row = (y + dy) * pw;
                    let gone = buckets[row + x - 1] as usize;
                    let come = buckets[row + x + w - 1] as usize;
                    counts[gone] -= 1;
                    counts[come] += 1;
                    below = below + (come < median) as usize - (gone < median) as usize;
                }
            }
            while below > k {
                median -= 1;
                below -= counts[median] as usize;
            }
            while below + counts[median] as usize <= k {
                below += counts[median] as usize;
                median += 1;
            }
            candidates.clear();
            for dy in 0..h {
                let row = (y + dy) * pw + x;
                for (&v, &b) in padded[row..row + w].iter().zip(&buckets[row..row + w]) {
                    if b as usize == median {
                        candidates.push(v);
                    }
                }
            }
            let (_, m, _) = candidates.select_nth_unstable_by(k - below, cmp);
            out.push(*m);
        }
    }
    Raster::new(width, height, out).expect("dimensions preserved")
}

/// Gather-and-sort median per pixel; the oracle for [`median_filter`].
pub fn median_filter_ref<T: Scalar>(img: &Plane<T>, h: usize, w: usize, mode: PadMode) -> Plane<T> {
    assert!(h % 2 == 1 && w % 2 == 1, "median window must be odd");
    let ry = (h / 2) as isize;
    let rx = (w / 2) as isize;
    Raster::from_fn(img.width(), img.height(), |x, y| {
        let mut vals = Vec::with_capacity(h * w);
        for dy in -ry..=ry {
            for dx in -rx..=rx {
                vals.push(img.sample(x as isize + dx, y as isize + dy, mode));
            }
        }
        vals.sort_by(cmp);
        vals[vals.len() / 2]
    })
}
