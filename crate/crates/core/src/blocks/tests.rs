use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::filters::reference::morph_open_ref;
use super::*;
use crate::image::{GrayImage, Plane};

fn random_gray(w: usize, h: usize, rng: &mut ChaCha8Rng) -> GrayImage {
    GrayImage::from_fn(w, h, |_, _| rng.random())
}

fn max_level_diff(a: &GrayImage, b: &GrayImage) -> u8 {
    a.pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&x, &y)| x.abs_diff(y))
        .max()
        .unwrap_or(0)
}

#[test]
fn library_has_fourteen_unique_blocks() {
    assert_eq!(library().len(), 14);
    let names: HashSet<_> = library().iter().map(|s| s.id.name()).collect();
    assert_eq!(names.len(), 14);
    for (i, spec) in library().iter().enumerate() {
        assert_eq!(spec.id.index(), i);
        assert_eq!(BlockId::from_name(spec.id.name()).unwrap(), spec.id);
        for p in spec.params {
            p.check(spec.id, p.default).unwrap();
            if let ParamKind::OddInteger { min, max } = p.kind {
                assert!(min % 2 == 1 && max % 2 == 1);
            }
        }
    }
}

#[test]
fn param_space_examples() {
    let median = param_space("median_filter").unwrap();
    assert_eq!(median.params.len(), 3);
    assert!(matches!(median.params[0].kind, ParamKind::OddInteger { .. }));
    assert!(matches!(median.params[1].kind, ParamKind::OddInteger { .. }));
    assert_eq!(
        median.params[2].kind,
        ParamKind::Enum {
            choices: &["zeros", "replicate", "symmetric"]
        }
    );
    assert!(param_space("identity").unwrap().params.is_empty());
    let clahe = param_space("adaptive_hist_eq").unwrap();
    assert_eq!(clahe.params.len(), 2);
    for p in clahe.params {
        assert_eq!(p.kind, ParamKind::Integer { min: 2, max: 64 });
    }
    assert!(std::ptr::eq(param_space("hist_eq").unwrap(), param_space("hist_eq").unwrap()));
    assert_eq!(
        param_space("sobel"),
        Err(BlockError::UnknownBlock("sobel".into()))
    );
}

#[test]
fn construction_rejects_bad_parameters() {
    use ParamValue::*;
    let even = BlockInstance::new(BlockId::MedianFilter, vec![Int(4), Int(3), Choice(0)]);
    assert!(matches!(even, Err(BlockError::OutOfRange { param: "h", .. })));
    let arity = BlockInstance::new(BlockId::MedianFilter, vec![Int(3)]);
    assert!(matches!(arity, Err(BlockError::Arity { expected: 3, got: 1, .. })));
    let ty = BlockInstance::new(BlockId::GaussianFilter, vec![Int(1)]);
    assert!(matches!(ty, Err(BlockError::Type { .. })));
    let zero = BlockInstance::new(BlockId::GaussianFilter, vec![Real(0.0)]);
    assert!(matches!(zero, Err(BlockError::OutOfRange { .. })));
    let nan = BlockInstance::new(BlockId::LocalBrighten, vec![Real(f64::NAN), Bool(true)]);
    assert!(nan.is_err());
    let choice = BlockInstance::new(BlockId::MedianFilter, vec![Int(3), Int(3), Choice(3)]);
    assert!(choice.is_err());
    assert!(BlockInstance::new(BlockId::UnsharpMask, vec![Real(37.3409), Real(1.363), Real(0.28738)]).is_ok());
}

#[test]
fn random_instance_identity_and_determinism() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    assert_eq!(random_instance(BlockId::Identity, &mut rng), BlockInstance::identity());
    for id in BlockId::ALL {
        let a = random_instance(id, &mut ChaCha8Rng::seed_from_u64(77));
        let b = random_instance(id, &mut ChaCha8Rng::seed_from_u64(77));
        assert_eq!(a, b);
        BlockInstance::new(a.id(), a.params().to_vec()).unwrap();
    }
}

#[test]
fn random_median_heights_are_odd_and_roughly_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut counts = [0usize; 16];
    let draws = 10_000;
    for _ in 0..draws {
        let b = random_instance(BlockId::MedianFilter, &mut rng);
        let ParamValue::Int(h) = b.params()[0] else {
            panic!("median height is an integer")
        };
        assert!(h % 2 == 1 && (1..=15).contains(&h));
        counts[h as usize] += 1;
    }
    let expected = draws as f64 / 8.0;
    for h in (1..=15).step_by(2) {
        let c = counts[h] as f64;
        assert!(c > expected / 5.0 && c < expected * 5.0, "h={h} count {c}");
        // chi-square style per-cell sanity: within 5 standard deviations
        assert!((c - expected).abs() < 5.0 * (expected * 7.0 / 8.0).sqrt());
    }
}

#[test]
fn every_block_preserves_dims_range_and_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..3 {
        let img = random_gray(23, 17, &mut rng);
        let plane = img.to_plane::<f64>();
        for id in BlockId::ALL {
            let b = random_instance(id, &mut rng);
            let out = apply_block(&b, &plane);
            assert_eq!(out.dims(), plane.dims(), "{b}");
            assert!(out.pixels().iter().all(|v| (0.0..=1.0).contains(v)), "{b}");
            assert_eq!(out, apply_block(&b, &plane), "{b} not deterministic");
        }
    }
}

#[test]
fn blocks_handle_single_pixel_images() {
    let img = GrayImage::filled(1, 1, 90).to_plane::<f32>();
    for id in BlockId::ALL {
        let out = apply_block(&BlockInstance::with_defaults(id), &img);
        assert_eq!(out.dims(), (1, 1), "{id}");
    }
}

#[test]
fn identity_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let img = random_gray(19, 8, &mut rng);
    assert_eq!(apply_block_gray::<f32>(&BlockInstance::identity(), &img), img);
    let p = img.to_plane::<f64>();
    assert_eq!(apply_block(&BlockInstance::identity(), &p), p);
}

#[test]
fn zero_amount_unsharp_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let img = random_gray(16, 16, &mut rng);
        let radius = rng.random_range(0.1..50.0);
        let threshold = rng.random_range(0.0..1.0);
        let b = BlockInstance::new(
            BlockId::UnsharpMask,
            vec![ParamValue::Real(radius), ParamValue::Real(0.0), ParamValue::Real(threshold)],
        )
        .unwrap();
        assert!(max_level_diff(&apply_block_gray::<f32>(&b, &img), &img) <= 1);
    }
}

#[test]
fn contrast_stretch_saturates_a_ramp() {
    let img = GrayImage::from_fn(100, 100, |x, y| {
        let i = y * 100 + x;
        (10 + i * 231 / 10_000) as u8
    });
    assert_eq!(*img.pixels().iter().min().unwrap(), 10);
    assert_eq!(*img.pixels().iter().max().unwrap(), 240);
    // percentile oracle: 1% and 99% points of the ramp, by sorting
    let mut sorted = img.pixels().to_vec();
    sorted.sort_unstable();
    let lo = sorted[100];
    let hi = sorted[9_899];
    assert!(lo > 10 && hi < 240);
    let out = apply_block_gray::<f64>(&BlockInstance::with_defaults(BlockId::ContrastStretch), &img);
    assert_eq!(*out.pixels().iter().min().unwrap(), 0);
    assert_eq!(*out.pixels().iter().max().unwrap(), 255);
}

#[test]
fn equalization_and_stretch_leave_constant_images() {
    let img = GrayImage::filled(12, 9, 77);
    for id in [BlockId::ContrastStretch, BlockId::HistEq, BlockId::AdaptiveHistEq] {
        let out = apply_block_gray::<f64>(&BlockInstance::with_defaults(id), &img);
        assert_eq!(out, img, "{id}");
    }
}

#[test]
fn median_matches_reference_all_modes() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..5 {
        let p = random_gray(8, 8, &mut rng).to_plane::<f64>();
        for mode in PadMode::ALL {
            for (h, w) in [(1, 1), (3, 3), (5, 1), (3, 7), (15, 15)] {
                assert_eq!(median_filter(&p, h, w, mode), median_filter_ref(&p, h, w, mode));
            }
        }
    }
    // real-valued, duplicate-heavy input
    let q = Plane::<f32>::from_fn(11, 6, |x, y| ((x * y) % 3) as f32 * 0.25);
    assert_eq!(
        median_filter(&q, 5, 3, PadMode::Symmetric),
        median_filter_ref(&q, 5, 3, PadMode::Symmetric)
    );
}

#[test]
fn median_reference_examples() {
    let z = Plane::<f64>::filled(3, 3, 0.0);
    assert_eq!(median_filter_ref(&z, 3, 3, PadMode::Zeros), z);
    let c = Plane::<f64>::filled(5, 4, 0.6);
    assert_eq!(median_filter_ref(&c, 3, 5, PadMode::Replicate), c);
}

#[test]
fn clahe_single_tile_unclipped_matches_hist_eq() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10 {
        let img = random_gray(21, 14, &mut rng);
        let p = img.to_plane::<f64>();
        let a = clahe(&p, 1, 1, 1.0).to_gray();
        let b = hist_eq(&p).to_gray();
        assert!(max_level_diff(&a, &b) <= 1);
    }
}

#[test]
fn flat_field_on_constant_is_identity() {
    for v in [0u8, 3, 128, 255] {
        let img = GrayImage::filled(9, 13, v);
        for sigma in [0.5, 30.0, 200.0] {
            let b = BlockInstance::new(BlockId::FlatField, vec![ParamValue::Real(sigma)]).unwrap();
            assert!(max_level_diff(&apply_block_gray::<f32>(&b, &img), &img) <= 1);
        }
    }
}

#[test]
fn local_brighten_zero_amount_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let img = random_gray(30, 20, &mut rng);
    for blend in [false, true] {
        let b = BlockInstance::new(
            BlockId::LocalBrighten,
            vec![ParamValue::Real(0.0), ParamValue::Bool(blend)],
        )
        .unwrap();
        assert!(max_level_diff(&apply_block_gray::<f32>(&b, &img), &img) <= 1);
    }
}

#[test]
fn local_brighten_lifts_dark_pixels() {
    let img = GrayImage::filled(32, 32, 40);
    let b = BlockInstance::new(
        BlockId::LocalBrighten,
        vec![ParamValue::Real(0.8), ParamValue::Bool(false)],
    )
    .unwrap();
    let out = apply_block_gray::<f64>(&b, &img);
    assert!(out.pixels().iter().all(|&v| v > 40));
}

#[test]
fn morph_open_matches_direct_disk() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let p = random_gray(17, 12, &mut rng).to_plane::<f64>();
    for r in 1..=9 {
        let b = BlockInstance::new(BlockId::MorphOpen, vec![ParamValue::Int(r)]).unwrap();
        assert_eq!(apply_block(&b, &p), morph_open_ref(&p, r as usize), "radius {r}");
    }
}

#[test]
fn morph_open_removes_small_bright_specks() {
    let mut p = Plane::<f64>::filled(15, 15, 0.2);
    p.set(7, 7, 1.0);
    let b = BlockInstance::new(BlockId::MorphOpen, vec![ParamValue::Int(1)]).unwrap();
    assert!(apply_block(&b, &p).pixels().iter().all(|&v| v == 0.2));
}

#[test]
fn wiener_smooths_noise_on_flat_region() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let p = Plane::<f64>::from_fn(40, 40, |_, _| 0.5 + rng.random_range(-0.05..0.05));
    let b = BlockInstance::new(BlockId::WienerAdaptive, vec![ParamValue::Int(5), ParamValue::Int(5)]).unwrap();
    let out = apply_block(&b, &p);
    let var = |q: &Plane<f64>| {
        let m = q.mean();
        q.pixels().iter().map(|v| (v - m).powi(2)).sum::<f64>() / q.len() as f64
    };
    assert!(var(&out) < var(&p));
}

#[test]
fn bilateral_preserves_step_edges() {
    let p = Plane::<f64>::from_fn(20, 10, |x, _| if x < 10 { 0.1 } else { 0.9 });
    let b = BlockInstance::new(
        BlockId::BilateralFilter,
        vec![ParamValue::Real(2.0), ParamValue::Real(0.05)],
    )
    .unwrap();
    let out = apply_block(&b, &p);
    assert!((out.get(9, 5) - 0.1).abs() < 1e-3);
    assert!((out.get(10, 5) - 0.9).abs() < 1e-3);
}

#[test]
fn richardson_lucy_sharpens_a_blurred_edge() {
    let sharp = Plane::<f64>::from_fn(32, 8, |x, _| if x < 16 { 0.2 } else { 0.8 });
    let blurred = crate::image::gaussian_blur(&sharp, 1.5, PadMode::Replicate);
    let b = BlockInstance::new(
        BlockId::RichardsonLucy,
        vec![ParamValue::Real(1.5), ParamValue::Int(15)],
    )
    .unwrap();
    let restored = apply_block(&b, &blurred);
    let err = |q: &Plane<f64>| {
        q.pixels()
            .iter()
            .zip(sharp.pixels())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    };
    assert!(err(&restored) < err(&blurred));
}

#[test]
fn perturb_keeps_values_valid() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for id in BlockId::ALL {
        let mut b = random_instance(id, &mut rng);
        for _ in 0..200 {
            let params: Vec<_> = id
                .spec()
                .params
                .iter()
                .zip(b.params())
                .map(|(s, &v)| s.perturb(v, 0.5, &mut rng))
                .collect();
            b = BlockInstance::new(id, params).unwrap();
        }
    }
}

#[test]
fn scalar_types_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let img = random_gray(24, 24, &mut rng);
    for id in [
        BlockId::ContrastStretch,
        BlockId::GaussianFilter,
        BlockId::UnsharpMask,
        BlockId::MedianFilter,
        BlockId::MorphOpen,
        BlockId::WienerAdaptive,
    ] {
        let b = BlockInstance::with_defaults(id);
        let a32 = apply_block_gray::<f32>(&b, &img);
        let a64 = apply_block_gray::<f64>(&b, &img);
        assert!(max_level_diff(&a32, &a64) <= 1, "{id}");
    }
}

#[test]
fn display_uses_shortest_literals() {
    let b = BlockInstance::new(
        BlockId::UnsharpMask,
        vec![ParamValue::Real(37.3409), ParamValue::Real(1.363), ParamValue::Real(0.28738)],
    )
    .unwrap();
    assert_eq!(b.to_string(), "unsharp_mask(37.3409, 1.363, 0.28738)");
}
