//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any gating criterion fails.
//!
//! Arguments: criterion numbers select a subset (default: 1-9). Criterion 10
//! is a long report-only trend check; run it with
//! `cargo test --test acceptance -- 10`.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pipegen::blocks::{apply_block_gray, clahe, hist_eq, median_filter, median_filter_ref, BlockId, BlockInstance, ParamValue};
use pipegen::dataset::split_indices;
use pipegen::dsl::{emit_code, parse_code, random_genome, reference_pipeline, run_pipeline_gray, Dialect, Genome};
use pipegen::evolution::{
    evolve_observed, hypervolume, next_generation, non_dominated_sort, EvolutionConfig, Origin, RankedPopulation,
    TrialResult,
};
use pipegen::fitness::{Evaluator, FitnessConfig, ObjectiveVector, Sample};
use pipegen::image::{GrayImage, PadMode, Plane};
use pipegen::segment::{otsu_threshold, segment};
use pipegen::synth::{synth_corpus, SynthParams};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_gray(w: usize, h: usize, rng: &mut ChaCha8Rng) -> GrayImage {
    GrayImage::from_fn(w, h, |_, _| rng.random())
}

fn max_level_diff(a: &GrayImage, b: &GrayImage) -> u8 {
    a.pixels()
        .iter()
        .zip(b.pixels())
        .map(|(x, y)| x.abs_diff(*y))
        .max()
        .unwrap_or(0)
}

fn samples_of(corpus: Vec<pipegen::synth::Micrograph>) -> Vec<Sample> {
    corpus
        .into_iter()
        .enumerate()
        .map(|(i, m)| Sample::new(format!("synth_{i:03}"), m.image, m.mask).unwrap())
        .collect()
}

/// Runs a trial and checks that the archive hypervolume never drops. The
/// reference point is the componentwise maximum over every snapshot plus one.
fn evolve_tracking_hv(cfg: &EvolutionConfig, train: &[Sample], workers: usize) -> (TrialResult, Vec<f64>) {
    let mut snapshots: Vec<Vec<ObjectiveVector>> = Vec::new();
    let result = evolve_observed(cfg, train, workers, |s| snapshots.push(s.archive.objectives())).unwrap();
    let mut reference = [f64::NEG_INFINITY; 5];
    for p in snapshots.iter().flatten() {
        for (r, v) in reference.iter_mut().zip(p.values()) {
            *r = r.max(*v);
        }
    }
    let reference: Vec<f64> = reference.iter().map(|r| r + 1.0).collect();
    let hv = snapshots.iter().map(|s| hypervolume(s, &reference)).collect();
    (result, hv)
}

fn hv_is_monotone(hv: &[f64]) -> bool {
    hv.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12))
}

// 1
fn median_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let sizes = [1, 3, 5, 7];
    let mut cases = 0;
    let mut mismatches = 0;
    for i in 0..100 {
        let quantized = random_gray(16, 16, &mut rng).to_plane::<f64>();
        let continuous = Plane::<f64>::from_fn(16, 16, |_, _| rng.random::<f64>());
        let img = if i % 2 == 0 { quantized } else { continuous };
        for h in sizes {
            for w in sizes {
                for mode in PadMode::ALL {
                    cases += 1;
                    if median_filter(&img, h, w, mode) != median_filter_ref(&img, h, w, mode) {
                        mismatches += 1;
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && secs < 30.0,
        format!("{cases} cases, {mismatches} mismatches, {secs:.2} s (limit 30 s)"),
    )
}

fn fronts_by_peeling(points: &[Vec<f64>]) -> Vec<usize> {
    let dominates = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| x <= y) && a.iter().zip(b).any(|(x, y)| x < y);
    let mut front = vec![0; points.len()];
    let mut level = 0;
    while front.contains(&0) {
        level += 1;
        let remaining: Vec<usize> = (0..points.len()).filter(|&i| front[i] == 0).collect();
        let current: Vec<usize> = remaining
            .iter()
            .copied()
            .filter(|&i| !remaining.iter().any(|&j| dominates(&points[j], &points[i])))
            .collect();
        for i in current {
            front[i] = level;
        }
    }
    front
}

fn otsu_by_exhaustive_search(hist: &[u64; 256]) -> Option<u8> {
    // between-class variance is (s0*n1 - s1*n0)^2 / (n0*n1*n^2); compare the
    // n-free part as an exact fraction
    let mut best: Option<(u8, u128, u128)> = None;
    for t in 1..256 {
        let (lo, hi) = hist.split_at(t);
        let n0: u64 = lo.iter().sum();
        let n1: u64 = hi.iter().sum();
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let s0: u64 = lo.iter().enumerate().map(|(k, c)| k as u64 * c).sum();
        let s1: u64 = hi.iter().enumerate().map(|(k, c)| (k + t) as u64 * c).sum();
        let d = (s0 as i128 * n1 as i128 - s1 as i128 * n0 as i128).unsigned_abs();
        let (num, den) = (d * d, n0 as u128 * n1 as u128);
        let better = match best {
            None => true,
            Some((_, bn, bd)) => num * bd > bn * den,
        };
        if better {
            best = Some((t as u8, num, den));
        }
    }
    best.map(|b| b.0)
}

// 2
fn sorting_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut sort_bad = 0;
    for k in 0..1000 {
        let n = rng.random_range(1..=64);
        let m = [2, 3, 5][k % 3];
        // a coarse grid makes ties and duplicates common
        let grid = rng.random_range(2..=20);
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..m).map(|_| rng.random_range(0..grid) as f64).collect())
            .collect();
        if non_dominated_sort(&pts) != fronts_by_peeling(&pts) {
            sort_bad += 1;
        }
    }
    let mut otsu_bad = 0;
    for _ in 0..1000 {
        let sparsity: f64 = rng.random_range(0.0..0.99);
        let mut hist = [0u64; 256];
        for c in hist.iter_mut() {
            if rng.random::<f64>() >= sparsity {
                *c = rng.random_range(0..=200);
            }
        }
        if otsu_threshold(&hist).ok() != otsu_by_exhaustive_search(&hist) {
            otsu_bad += 1;
        }
    }
    outcome(
        sort_bad == 0 && otsu_bad == 0,
        format!("non-dominated sort: {sort_bad}/1000 mismatches; otsu: {otsu_bad}/1000 mismatches"),
    )
}

fn tokens(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in s.chars() {
        if c.is_alphanumeric() || c == '.' || c == '_' || c == '-' {
            cur.push(c);
        } else {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            if !c.is_whitespace() && c != '\'' {
                out.push(c.to_string());
            }
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

// 3
fn dsl_laws() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut round_trip_bad = 0;
    let mut exact_bad = 0;
    for k in 0..1000 {
        let len = [4, 5, 6][k % 3];
        let g = random_genome(len, &mut rng);
        let text = emit_code(&g, Dialect::Native);
        match parse_code(&text, len) {
            Ok(back) if back == g.compacted() => {}
            _ => round_trip_bad += 1,
        }
        let c = g.compacted();
        if parse_code(&emit_code(&c, Dialect::Native), len).ok() != Some(c) {
            exact_bad += 1;
        }
    }

    let mut padding_bad = 0;
    for _ in 0..100 {
        let len = rng.random_range(1..=4);
        let g = random_genome(len, &mut rng);
        let img = random_gray(rng.random_range(8..=24), rng.random_range(8..=24), &mut rng);
        let mut slots = g.slots().to_vec();
        for _ in 0..rng.random_range(1..=3) {
            let at = rng.random_range(0..=slots.len());
            slots.insert(at, BlockInstance::identity());
        }
        let padded = Genome::new(slots).unwrap();
        if run_pipeline_gray(&g, &img) != run_pipeline_gray(&padded, &img) {
            padding_bad += 1;
        }
    }

    let listing = "pipeline(Blocks.imadjust(), Blocks.adapthisteq(15, 21),
        Blocks.imlocalbrighten(0.63579, false),
        Blocks.imsharpen(37.3409, 1.363, 0.28738), Blocks.medfilt2(5,
        7, 'zeros'))";
    let emitted = emit_code(&reference_pipeline(), Dialect::MatlabLike);
    let listing_ok = tokens(&emitted) == tokens(listing);
    outcome(
        round_trip_bad == 0 && exact_bad == 0 && padding_bad == 0 && listing_ok,
        format!(
            "round trip (modulo identity positions) {round_trip_bad}/1000 bad, compacted exact {exact_bad}/1000 bad, \
             padding {padding_bad}/100 bad, matlab listing {}",
            if listing_ok { "matches" } else { "differs" }
        ),
    )
}

// 4
fn block_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst = [0u8; 4];
    for _ in 0..50 {
        let (w, h) = (rng.random_range(8..=40), rng.random_range(8..=40));
        let img = random_gray(w, h, &mut rng);

        let unsharp = BlockInstance::new(
            BlockId::UnsharpMask,
            vec![
                ParamValue::Real(rng.random_range(0.1..50.0)),
                ParamValue::Real(0.0),
                ParamValue::Real(rng.random_range(0.0..1.0)),
            ],
        )
        .unwrap();
        worst[0] = worst[0].max(max_level_diff(&apply_block_gray::<f32>(&unsharp, &img), &img));

        let brighten = BlockInstance::new(
            BlockId::LocalBrighten,
            vec![ParamValue::Real(0.0), ParamValue::Bool(rng.random())],
        )
        .unwrap();
        worst[1] = worst[1].max(max_level_diff(&apply_block_gray::<f32>(&brighten, &img), &img));

        let flat = GrayImage::filled(w, h, rng.random());
        let ff = BlockInstance::new(BlockId::FlatField, vec![ParamValue::Real(rng.random_range(0.5..=200.0))]).unwrap();
        worst[2] = worst[2].max(max_level_diff(&apply_block_gray::<f32>(&ff, &flat), &flat));

        let p = img.to_plane::<f64>();
        worst[3] = worst[3].max(max_level_diff(&clahe(&p, 1, 1, 1.0).to_gray(), &hist_eq(&p).to_gray()));
    }
    outcome(
        worst.iter().all(|&d| d <= 1),
        format!(
            "max level difference (tolerance 1): unsharp {} / local_brighten {} / flat_field {} / clahe-vs-hist_eq {}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

fn small_corpus(count: usize, seed: u64) -> Vec<Sample> {
    let p = SynthParams {
        width: 128,
        height: 112,
        count_min: 6,
        count_max: 10,
        radius_median: 6.0,
        radius_max: 12.0,
        streak_width: 4.0,
        seed,
        ..SynthParams::default()
    };
    samples_of(synth_corpus(&p, count).unwrap())
}

fn archive_fingerprint(r: &TrialResult) -> String {
    let mut out = String::new();
    for m in &r.archive {
        out += &m.pipeline;
        for v in m.objectives.errors() {
            out += &format!(" {:016x}", v.to_bits());
        }
        out.push('\n');
    }
    out
}

// 5 and 7 (first part)
fn determinism(hv_runs: &mut Vec<(String, bool)>) -> Outcome {
    let train = small_corpus(4, 5);
    let cfg = EvolutionConfig {
        population_size: 20,
        max_length: 4,
        max_generations: 10,
        seed: 17,
        ..EvolutionConfig::default()
    };
    let mut prints = Vec::new();
    for workers in [1, 2, 8] {
        let (r, hv) = evolve_tracking_hv(&cfg, &train, workers);
        hv_runs.push((format!("determinism, {workers} workers"), hv_is_monotone(&hv)));
        prints.push(archive_fingerprint(&r));
    }
    let same = prints.iter().all(|p| p == &prints[0]);
    outcome(
        same,
        format!(
            "archive of {} members {} across 1/2/8 workers",
            prints[0].lines().count(),
            if same { "byte-identical" } else { "differs" }
        ),
    )
}

// 6
fn composition() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut notes = Vec::new();
    let mut ok = true;
    for n in [20usize, 40, 60] {
        let members: Vec<(Genome, ObjectiveVector)> = (0..n)
            .map(|_| {
                let g = random_genome(5, &mut rng);
                (g, ObjectiveVector(std::array::from_fn(|_| rng.random_range(0.0..1.0))))
            })
            .collect();
        let ranked = RankedPopulation::new(members);
        let cfg = EvolutionConfig {
            population_size: n,
            seed: 9,
            ..EvolutionConfig::default()
        };
        let next = next_generation(&ranked, &cfg, 3);
        let e = (0.05 * n as f64).ceil() as usize;
        let c = (0.8 * (n - e) as f64).round() as usize;
        let m = n - e - c;
        let counts = |f: fn(&Origin) -> bool| next.iter().filter(|(_, o)| f(o)).count();
        let got = (
            counts(|o| matches!(o, Origin::Elite(_))),
            counts(|o| matches!(o, Origin::Crossover(..))),
            counts(|o| matches!(o, Origin::Mutation(_))),
        );
        let elites_exact = next.iter().take(e).enumerate().all(|(k, (g, o))| {
            let i = ranked.order[k];
            *o == Origin::Elite(i) && format!("{g:?}") == format!("{:?}", ranked.members[i].0)
        });
        ok &= next.len() == n && got == (e, c, m) && elites_exact;
        notes.push(format!("N={n}: {}/{}/{} (expected {e}/{c}/{m})", got.0, got.1, got.2));
    }
    outcome(ok, notes.join(", ") + ", elites copied bit-identically from the top of the order")
}

// 8 and 7 (second part)
fn end_to_end(hv_runs: &mut Vec<(String, bool)>) -> Outcome {
    let start = Instant::now();
    let samples = samples_of(synth_corpus(&SynthParams::default(), 21).unwrap());
    let (tr, ev) = split_indices(&[None; 21], 0.75, 0).unwrap();
    let train: Vec<Sample> = tr.iter().map(|&i| samples[i].clone()).collect();
    let eval: Vec<Sample> = ev.iter().map(|&i| samples[i].clone()).collect();
    let cfg = EvolutionConfig {
        population_size: 20,
        max_length: 4,
        max_generations: 40,
        seed: 1,
        ..EvolutionConfig::default()
    };
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let (result, hv) = evolve_tracking_hv(&cfg, &train, workers);
    hv_runs.push(("end to end".into(), hv_is_monotone(&hv)));

    let evaluator = Evaluator::new(&eval, FitnessConfig::default()).unwrap();
    let best = result.best_by_xor().unwrap();
    let best_eval = evaluator.evaluate(&best.genome(cfg.max_length).unwrap()).mean_xor;
    let baseline = evaluator.evaluate(&Genome::identity(cfg.max_length)).mean_xor;
    outcome(
        best_eval <= 0.05 && best_eval < baseline,
        format!(
            "split {}/{}, best eval XOR {:.3}% (limit 5%), identity baseline {:.3}%, train {:.3}%, {} generations, {:.0} s; best {}",
            train.len(),
            eval.len(),
            100.0 * best_eval,
            100.0 * baseline,
            100.0 * best.train_mean_xor,
            result.generations,
            start.elapsed().as_secs_f64(),
            best.pipeline
        ),
    )
}

// 9
fn throughput() -> Outcome {
    let p = SynthParams {
        width: 2048,
        height: 1767,
        count_min: 800,
        count_max: 1200,
        ..SynthParams::default()
    };
    let img = synth_corpus(&p, 1).unwrap().remove(0).image;
    let g = reference_pipeline();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let (secs, count) = pool.install(|| {
        let start = Instant::now();
        let seg = segment(&run_pipeline_gray(&g, &img));
        (start.elapsed().as_secs_f64(), seg.count())
    });
    outcome(
        secs <= 5.0,
        format!("2048x1767 filtering + segmentation in {secs:.2} s single-threaded (limit 5 s), {count} components"),
    )
}

// 10
fn population_trend() -> Outcome {
    let samples = samples_of(synth_corpus(&SynthParams::default(), 21).unwrap());
    let (tr, ev) = split_indices(&[None; 21], 0.75, 0).unwrap();
    let train: Vec<Sample> = tr.iter().map(|&i| samples[i].clone()).collect();
    let eval: Vec<Sample> = ev.iter().map(|&i| samples[i].clone()).collect();
    let evaluator = Evaluator::new(&eval, FitnessConfig::default()).unwrap();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut means = Vec::new();
    let mut notes = Vec::new();
    for n in [20, 60] {
        let mut scores = Vec::new();
        for seed in 1..=3 {
            let cfg = EvolutionConfig {
                population_size: n,
                max_length: 4,
                max_generations: 40,
                seed,
                ..EvolutionConfig::default()
            };
            let r = pipegen::evolution::evolve(&cfg, &train, workers).unwrap();
            let best = r.best_by_xor().unwrap();
            scores.push(evaluator.evaluate(&best.genome(4).unwrap()).mean_xor);
        }
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        let listed: Vec<String> = scores.iter().map(|s| format!("{:.3}", 100.0 * s)).collect();
        notes.push(format!("N={n}: mean {:.3}% [{}]", 100.0 * mean, listed.join(", ")));
        means.push(mean);
    }
    outcome(means[1] <= means[0], notes.join("; "))
}

fn report(results: &mut Vec<(u32, Outcome)>, i: u32, name: &str, o: Outcome) {
    println!(
        "criterion {i:>2} {:<4} {name}: {}",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail
    );
    results.push((i, o));
}

fn main() {
    let picked: BTreeSet<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let selected = |i: u32| if picked.is_empty() { i <= 9 } else { picked.contains(&i) };

    let mut results = Vec::new();
    let mut hv_runs = Vec::new();
    if selected(1) {
        report(&mut results, 1, "median filter oracle", median_oracle());
    }
    if selected(2) {
        report(&mut results, 2, "sorting and otsu oracles", sorting_oracles());
    }
    if selected(3) {
        report(&mut results, 3, "dsl laws", dsl_laws());
    }
    if selected(4) {
        report(&mut results, 4, "block identities", block_identities());
    }
    if selected(5) || selected(7) {
        let o = determinism(&mut hv_runs);
        if selected(5) {
            report(&mut results, 5, "determinism under parallelism", o);
        }
    }
    if selected(6) {
        report(&mut results, 6, "generation composition", composition());
    }
    if selected(8) {
        report(&mut results, 8, "synthetic end to end", end_to_end(&mut hv_runs));
    }
    if selected(7) {
        let bad: Vec<&String> = hv_runs.iter().filter(|r| !r.1).map(|r| &r.0).collect();
        let o = outcome(
            bad.is_empty(),
            format!("{} evolve runs checked, non-monotone: {:?}", hv_runs.len(), bad),
        );
        report(&mut results, 7, "archive hypervolume monotone", o);
    }
    if selected(9) {
        report(&mut results, 9, "throughput", throughput());
    }
    if selected(10) {
        let o = population_trend();
        println!(
            "criterion 10 {:<4} population size trend (report only, non-gating): {}",
            if o.pass { "HOLD" } else { "MISS" },
            o.detail
        );
    }

    let failed: Vec<u32> = results.iter().filter(|r| !r.1.pass).map(|r| r.0).collect();
    if results.is_empty() {
        println!("acceptance: no gating criteria selected");
    } else if failed.is_empty() {
        println!("acceptance: {} gating criteria passed", results.len());
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
