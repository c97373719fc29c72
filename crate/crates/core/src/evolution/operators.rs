//! Selection, crossover, mutation and generation assembly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::pareto::RankedPopulation;
use super::EvolutionConfig;
use crate::blocks::BlockInstance;
use crate::dsl::{splice, DslError, Genome};

/// Draws `size` members uniformly with replacement and returns the one with
/// the best (lowest) rank.
pub fn tournament_select<R: Rng + ?Sized>(ranked: &RankedPopulation, size: usize, rng: &mut R) -> usize {
    let n = ranked.len();
    assert!(n > 0, "tournament over an empty population");
    (0..size.max(1))
        .map(|_| rng.random_range(0..n))
        .min_by_key(|&i| (ranked.rank[i], i))
        .expect("at least one draw")
}

fn crossover_mask<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<bool> {
    (0..len).map(|_| rng.random_bool(0.5)).collect()
}

/// Each slot comes from `a` or `b` with equal probability.
pub fn uniform_crossover<R: Rng + ?Sized>(a: &Genome, b: &Genome, rng: &mut R) -> Result<Genome, DslError> {
    let mask = crossover_mask(a.len(), rng);
    splice(a, b, &mask)
}

/// Two complementary children from one slot mask.
pub fn crossover_pair<R: Rng + ?Sized>(
    a: &Genome,
    b: &Genome,
    rng: &mut R,
) -> Result<(Genome, Genome), DslError> {
    let mask = crossover_mask(a.len(), rng);
    let inverse: Vec<bool> = mask.iter().map(|m| !m).collect();
    Ok((splice(a, b, &mask)?, splice(a, b, &inverse)?))
}

/// Perturbs each parameter independently with probability `rate`; block ids
/// never change.
pub fn mutate<R: Rng + ?Sized>(g: &Genome, rate: f64, sigma_fraction: f64, rng: &mut R) -> Genome {
    let mut out = g.clone();
    for slot in out.slots_mut() {
        let spec = slot.id().spec();
        let mut params = slot.params().to_vec();
        let mut changed = false;
        for (v, p) in params.iter_mut().zip(spec.params) {
            if rng.random_bool(rate.clamp(0.0, 1.0)) {
                *v = p.perturb(*v, sigma_fraction, rng);
                changed = true;
            }
        }
        if changed {
            *slot = BlockInstance::new(slot.id(), params).expect("perturb stays in range");
        }
    }
    out
}

/// Elite, crossover and mutation-only counts for a population of `n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Composition {
    pub elites: usize,
    pub crossover: usize,
    pub mutation: usize,
}

impl Composition {
    pub fn new(n: usize, elite_fraction: f64, crossover_fraction: f64) -> Self {
        let elites = ((elite_fraction * n as f64).ceil() as usize).min(n);
        let crossover = ((crossover_fraction * (n - elites) as f64).round() as usize).min(n - elites);
        Self {
            elites,
            crossover,
            mutation: n - elites - crossover,
        }
    }

    pub fn total(&self) -> usize {
        self.elites + self.crossover + self.mutation
    }
}

/// Where a member of the next generation came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Origin {
    /// Copy of the member at this index of the ranked population.
    Elite(usize),
    /// Child of these two parents.
    Crossover(usize, usize),
    /// Mutated copy of this parent.
    Mutation(usize),
}

const STREAM_POOL: u64 = 0;
const STREAM_CROSSOVER: u64 = 1;
const STREAM_MUTATION: u64 = 2;

/// Independent stream for one reproduction step.
pub fn candidate_rng(seed: u64, generation: usize, kind: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((generation as u64) << 34) | (kind << 32) | index as u64);
    rng
}

/// Builds the next population: elites from the top of the total order, then
/// crossover children from positionally paired halves of a tournament pool,
/// then mutation-only children.
pub fn next_generation(
    ranked: &RankedPopulation,
    cfg: &EvolutionConfig,
    generation: usize,
) -> Vec<(Genome, Origin)> {
    let n = cfg.population_size;
    let comp = Composition::new(n, cfg.elite_fraction, cfg.crossover_fraction);
    let mut out = Vec::with_capacity(n);
    for &i in ranked.order.iter().take(comp.elites) {
        out.push((ranked.members[i].0.clone(), Origin::Elite(i)));
    }

    let pairs = comp.crossover.div_ceil(2);
    let pool: Vec<usize> = (0..2 * pairs)
        .map(|k| {
            let mut rng = candidate_rng(cfg.seed, generation, STREAM_POOL, k);
            tournament_select(ranked, cfg.tournament_size, &mut rng)
        })
        .collect();
    let (half_a, half_b) = pool.split_at(pairs);
    let mut children = Vec::with_capacity(2 * pairs);
    for (p, (&ia, &ib)) in half_a.iter().zip(half_b).enumerate() {
        let mut rng = candidate_rng(cfg.seed, generation, STREAM_CROSSOVER, p);
        let (a, b) = (&ranked.members[ia].0, &ranked.members[ib].0);
        let (c1, c2) = crossover_pair(a, b, &mut rng).expect("population genomes share one length");
        for c in [c1, c2] {
            let m = mutate(&c, cfg.mutation_rate, cfg.mutation_sigma_fraction, &mut rng);
            children.push((m, Origin::Crossover(ia, ib)));
        }
    }
    out.extend(children.into_iter().take(comp.crossover));

    for m in 0..comp.mutation {
        let mut rng = candidate_rng(cfg.seed, generation, STREAM_MUTATION, m);
        let parent = tournament_select(ranked, cfg.tournament_size, &mut rng);
        let child = mutate(&ranked.members[parent].0, cfg.mutation_rate, cfg.mutation_sigma_fraction, &mut rng);
        out.push((child, Origin::Mutation(parent)));
    }
    debug_assert_eq!(out.len(), n);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::BlockId;
    use crate::dsl::{parse_code, random_genome};
    use crate::fitness::ObjectiveVector;

    fn ranked(n: usize, seed: u64) -> RankedPopulation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let members = (0..n)
            .map(|_| {
                let g = random_genome(4, &mut rng);
                let v = ObjectiveVector([0.0; 5].map(|_: f64| rng.random::<f64>()));
                (g, v)
            })
            .collect();
        RankedPopulation::new(members)
    }

    #[test]
    fn composition_examples() {
        assert_eq!(Composition::new(60, 0.05, 0.8), Composition { elites: 3, crossover: 46, mutation: 11 });
        assert_eq!(Composition::new(20, 0.05, 0.8), Composition { elites: 1, crossover: 15, mutation: 4 });
        assert_eq!(Composition::new(40, 0.05, 0.8).total(), 40);
    }

    #[test]
    fn single_member_tournament() {
        let r = ranked(1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(tournament_select(&r, 4, &mut rng), 0);
    }

    #[test]
    fn tournament_win_rates_match_closed_form() {
        let n = 20;
        let r = ranked(n, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let trials = 100_000;
        let mut wins = vec![0usize; n];
        for _ in 0..trials {
            wins[tournament_select(&r, 4, &mut rng)] += 1;
        }
        for i in 0..n {
            // best of 4 uniform draws has position exactly r
            let rk = r.rank[i] as f64;
            let nf = n as f64;
            let p = ((nf - rk + 1.0) / nf).powi(4) - ((nf - rk) / nf).powi(4);
            let emp = wins[i] as f64 / trials as f64;
            assert!((emp - p).abs() < 0.01, "rank {rk}: {emp} vs {p}");
        }
    }

    #[test]
    fn crossover_with_self_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = random_genome(5, &mut rng);
        assert_eq!(uniform_crossover(&g, &g, &mut rng).unwrap(), g);
        assert!(uniform_crossover(&g, &Genome::identity(4), &mut rng).is_err());
    }

    #[test]
    fn crossover_slot_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = Genome::padded(vec![BlockInstance::with_defaults(BlockId::GaussianFilter); 5], 5).unwrap();
        let b = Genome::identity(5);
        let mut from_a = [0usize; 5];
        for _ in 0..10_000 {
            let c = uniform_crossover(&a, &b, &mut rng).unwrap();
            for (k, s) in c.slots().iter().enumerate() {
                from_a[k] += (!s.is_identity()) as usize;
            }
        }
        for f in from_a {
            assert!((f as f64 / 10_000.0 - 0.5).abs() < 0.02);
        }
    }

    #[test]
    fn mutation_keeps_blocks_and_validity() {
        let g = parse_code("pipeline(median_filter(5, 7, zeros))", 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        assert_eq!(mutate(&g, 0.0, 0.1, &mut rng), g);
        let mut hs = Vec::new();
        for _ in 0..10_000 {
            let m = mutate(&g, 1.0, 0.1, &mut rng);
            assert_eq!(m.slots()[0].id(), BlockId::MedianFilter);
            let text = m.to_string();
            assert_eq!(parse_code(&text, 1).unwrap(), m);
            hs.push(m.slots()[0].params()[0].as_f64());
        }
        let mean = hs.iter().sum::<f64>() / hs.len() as f64;
        assert!((mean - 5.0).abs() < 0.1, "mean h {mean}");
        assert!(hs.iter().all(|&h| h as i64 % 2 == 1 && (1.0..=15.0).contains(&h)));
    }

    #[test]
    fn generation_sizes_and_elites() {
        for n in [20, 40, 60] {
            let r = ranked(n, n as u64);
            let cfg = EvolutionConfig {
                population_size: n,
                max_length: 4,
                ..Default::default()
            };
            let next = next_generation(&r, &cfg, 0);
            let comp = Composition::new(n, 0.05, 0.8);
            assert_eq!(next.len(), n);
            let count = |f: fn(&Origin) -> bool| next.iter().filter(|(_, o)| f(o)).count();
            assert_eq!(count(|o| matches!(o, Origin::Elite(_))), comp.elites);
            assert_eq!(count(|o| matches!(o, Origin::Crossover(..))), comp.crossover);
            assert_eq!(count(|o| matches!(o, Origin::Mutation(_))), comp.mutation);
            for (k, (g, o)) in next.iter().take(comp.elites).enumerate() {
                assert_eq!(*o, Origin::Elite(r.order[k]));
                assert_eq!(g, &r.members[r.order[k]].0);
            }
            assert_eq!(next_generation(&r, &cfg, 0).iter().map(|x| &x.0).collect::<Vec<_>>(),
                next.iter().map(|x| &x.0).collect::<Vec<_>>());
        }
    }
}
