//! Multi-objective linear GP over fixed-length pipelines.

mod hypervolume;
mod operators;
mod pareto;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use hypervolume::hypervolume;
pub use operators::{
    candidate_rng, crossover_pair, mutate, next_generation, tournament_select, uniform_crossover, Composition,
    Origin,
};
pub use pareto::{crowding_distance, dominates, non_dominated_sort, weakly_dominates, RankedPopulation};

use crate::blocks::{library, BlockId};
use crate::dsl::{parse_code, random_genome, DslError, Genome};
use crate::fitness::{DistNorm, Evaluation, Evaluator, FitnessConfig, FitnessError, ObjectiveVector, Sample, TimeSource};

const STREAM_INIT: u64 = 3;

#[derive(Debug, Error)]
pub enum EvolutionError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Fitness(#[from] FitnessError),
    #[error("cannot start worker pool: {0}")]
    Workers(#[from] rayon::ThreadPoolBuildError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolutionConfig {
    pub population_size: usize,
    pub max_length: usize,
    pub max_generations: usize,
    pub max_wall_hours: f64,
    pub elite_fraction: f64,
    pub crossover_fraction: f64,
    pub tournament_size: usize,
    pub pareto_fraction: f64,
    pub mutation_rate: f64,
    pub mutation_sigma_fraction: f64,
    pub seed: u64,
    pub dist_norm: DistNorm,
    pub time_source: TimeSource,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            population_size: 20,
            max_length: 5,
            max_generations: 500,
            max_wall_hours: 20.0,
            elite_fraction: 0.05,
            crossover_fraction: 0.80,
            tournament_size: 4,
            pareto_fraction: 0.35,
            mutation_rate: 0.2,
            mutation_sigma_fraction: 0.1,
            seed: 0,
            dist_norm: DistNorm::L2,
            time_source: TimeSource::Modeled,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<(), EvolutionError> {
        let err = |m: String| Err(EvolutionError::Config(m));
        if self.population_size < 4 {
            return err(format!("population_size must be at least 4, got {}", self.population_size));
        }
        if self.max_length < 1 {
            return err("max_length must be at least 1".into());
        }
        if self.max_generations < 1 {
            return err("max_generations must be at least 1".into());
        }
        if self.tournament_size < 1 {
            return err("tournament_size must be at least 1".into());
        }
        if !(self.max_wall_hours > 0.0) {
            return err(format!("max_wall_hours must be positive, got {}", self.max_wall_hours));
        }
        for (name, v) in [
            ("elite_fraction", self.elite_fraction),
            ("crossover_fraction", self.crossover_fraction),
            ("pareto_fraction", self.pareto_fraction),
            ("mutation_rate", self.mutation_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return err(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if self.elite_fraction + self.crossover_fraction > 1.0 {
            return err("elite_fraction + crossover_fraction must not exceed 1".into());
        }
        if !(self.mutation_sigma_fraction >= 0.0) {
            return err("mutation_sigma_fraction must be non-negative".into());
        }
        Ok(())
    }

    pub fn fitness(&self) -> FitnessConfig {
        FitnessConfig {
            dist_norm: self.dist_norm,
            time_source: self.time_source,
            ..Default::default()
        }
    }

    /// Size of the reported final front.
    pub fn front_size(&self) -> usize {
        (self.pareto_fraction * self.population_size as f64).ceil() as usize
    }
}

/// Non-dominated set of every genome evaluated so far.
#[derive(Clone, Debug, Default)]
pub struct Archive {
    members: Vec<(Genome, Evaluation, usize)>,
}

impl Archive {
    /// Adds the candidate unless an existing member weakly dominates it;
    /// drops members it dominates. Returns whether it was added.
    pub fn offer(&mut self, g: &Genome, eval: Evaluation, generation: usize) -> bool {
        let v = eval.objectives;
        if self.members.iter().any(|(_, e, _)| weakly_dominates(&e.objectives.0, &v.0)) {
            return false;
        }
        self.members.retain(|(_, e, _)| !dominates(&v.0, &e.objectives.0));
        self.members.push((g.clone(), eval, generation));
        true
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn objectives(&self) -> Vec<ObjectiveVector> {
        self.members.iter().map(|m| m.1.objectives).collect()
    }

    pub fn members(&self) -> impl Iterator<Item = (&Genome, &Evaluation, usize)> {
        self.members.iter().map(|(g, e, k)| (g, e, *k))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamStat {
    pub block: String,
    pub param: String,
    /// Number of slots holding this block.
    pub count: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    /// Lowest and mean xor objective over the population.
    pub min_xor_score: f64,
    pub mean_xor_score: f64,
    /// Lowest plain mean XOR error over the population.
    pub best_mean_xor: f64,
    pub mean_effective_length: f64,
    pub wall_seconds: f64,
    pub archive_size: usize,
    /// Slot counts per block, in library order; sums to `N * L`.
    pub block_counts: Vec<usize>,
    pub params: Vec<ParamStat>,
}

impl GenerationStats {
    pub fn collect(generation: usize, ranked: &RankedPopulation, evals: &[Evaluation], wall_seconds: f64, archive_size: usize) -> Self {
        let n = ranked.len() as f64;
        let xor: Vec<f64> = ranked.members.iter().map(|m| m.1.xor()).collect();
        let mut block_counts = vec![0usize; BlockId::ALL.len()];
        let mut values: Vec<Vec<Vec<f64>>> = library().iter().map(|s| vec![Vec::new(); s.params.len()]).collect();
        for (g, _) in &ranked.members {
            for slot in g.slots() {
                let b = slot.id().index();
                block_counts[b] += 1;
                for (k, v) in slot.params().iter().enumerate() {
                    values[b][k].push(v.as_f64());
                }
            }
        }
        let mut params = Vec::new();
        for (spec, vals) in library().iter().zip(&values) {
            let count = block_counts[spec.id.index()];
            for (p, vs) in spec.params.iter().zip(vals) {
                let (mean, std) = if vs.is_empty() {
                    (None, None)
                } else {
                    let m = vs.iter().sum::<f64>() / vs.len() as f64;
                    let var = vs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vs.len() as f64;
                    (Some(m), Some(var.sqrt()))
                };
                params.push(ParamStat {
                    block: spec.id.name().to_string(),
                    param: p.name.to_string(),
                    count,
                    mean,
                    std,
                });
            }
        }
        Self {
            generation,
            min_xor_score: xor.iter().copied().fold(f64::INFINITY, f64::min),
            mean_xor_score: xor.iter().sum::<f64>() / n,
            best_mean_xor: evals.iter().map(|e| e.mean_xor).fold(f64::INFINITY, f64::min),
            mean_effective_length: ranked.members.iter().map(|m| m.0.effective_length() as f64).sum::<f64>() / n,
            wall_seconds,
            archive_size,
            block_counts,
            params,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    MaxGenerations,
    WallClock,
    PerfectScore,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontMember {
    /// Native pipeline text.
    pub pipeline: String,
    pub objectives: ObjectiveVector,
    /// Plain mean XOR error on the training images.
    pub train_mean_xor: f64,
    pub generation: usize,
}

impl FrontMember {
    pub fn genome(&self, len: usize) -> Result<Genome, DslError> {
        parse_code(&self.pipeline, len)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub config: EvolutionConfig,
    pub termination: Termination,
    pub generations: usize,
    pub front: Vec<FrontMember>,
    pub archive: Vec<FrontMember>,
    pub stats: Vec<GenerationStats>,
    pub wall_seconds: f64,
}

impl TrialResult {
    /// Archive member with the lowest training xor objective (ties: earlier generation, then text).
    pub fn best_by_xor(&self) -> Option<&FrontMember> {
        self.archive.iter().min_by(|a, b| {
            a.objectives
                .xor()
                .total_cmp(&b.objectives.xor())
                .then(a.generation.cmp(&b.generation))
                .then(a.pipeline.cmp(&b.pipeline))
        })
    }
}

/// What an observer sees after each generation is ranked and archived.
pub struct GenerationSnapshot<'a> {
    pub generation: usize,
    pub ranked: &'a RankedPopulation,
    pub archive: &'a Archive,
    pub stats: &'a GenerationStats,
}

pub fn evolve(cfg: &EvolutionConfig, train: &[Sample], workers: usize) -> Result<TrialResult, EvolutionError> {
    evolve_observed(cfg, train, workers, |_| {})
}

/// Runs one trial on `workers` threads, calling `observer` once per generation.
pub fn evolve_observed(
    cfg: &EvolutionConfig,
    train: &[Sample],
    workers: usize,
    mut observer: impl FnMut(&GenerationSnapshot),
) -> Result<TrialResult, EvolutionError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()?;
    let evaluator = Evaluator::new(train, cfg.fitness())?;
    let trial_start = Instant::now();
    let n = cfg.population_size;

    let mut population: Vec<Genome> = (0..n)
        .map(|i| random_genome(cfg.max_length, &mut candidate_rng(cfg.seed, 0, STREAM_INIT, i)))
        .collect();
    let mut archive = Archive::default();
    let mut stats = Vec::new();
    let mut generation = 0;
    let (ranked, termination) = loop {
        let gen_start = Instant::now();
        let evals = pool.install(|| evaluator.evaluate_many(&population));
        let ranked = RankedPopulation::new(
            population.iter().cloned().zip(evals.iter().map(|e| e.objectives)).collect(),
        );
        for (g, e) in population.iter().zip(&evals) {
            archive.offer(g, *e, generation);
        }
        let row = GenerationStats::collect(generation, &ranked, &evals, gen_start.elapsed().as_secs_f64(), archive.len());
        log::info!(
            "generation {generation}: min xor score {:.3e}, best mean xor {:.4}, archive {}",
            row.min_xor_score,
            row.best_mean_xor,
            archive.len()
        );
        observer(&GenerationSnapshot {
            generation,
            ranked: &ranked,
            archive: &archive,
            stats: &row,
        });
        stats.push(row);

        let hours = trial_start.elapsed().as_secs_f64() / 3600.0;
        let stop = if evals.iter().any(|e| e.objectives.is_perfect()) {
            Some(Termination::PerfectScore)
        } else if generation + 1 >= cfg.max_generations {
            Some(Termination::MaxGenerations)
        } else if hours > cfg.max_wall_hours {
            Some(Termination::WallClock)
        } else {
            None
        };
        if let Some(t) = stop {
            break (ranked, t);
        }
        generation += 1;
        population = next_generation(&ranked, cfg, generation).into_iter().map(|(g, _)| g).collect();
    };

    let lookup = |g: &Genome| evaluator.evaluate(g);
    let mut seen = std::collections::HashSet::new();
    let front: Vec<FrontMember> = ranked
        .first_front()
        .into_iter()
        .filter(|&i| seen.insert(ranked.members[i].0.compacted().to_string()))
        .take(cfg.front_size())
        .map(|i| {
            let g = &ranked.members[i].0;
            let e = lookup(g);
            FrontMember {
                pipeline: g.to_string(),
                objectives: e.objectives,
                train_mean_xor: e.mean_xor,
                generation,
            }
        })
        .collect();
    let archive = archive
        .members()
        .map(|(g, e, k)| FrontMember {
            pipeline: g.to_string(),
            objectives: e.objectives,
            train_mean_xor: e.mean_xor,
            generation: k,
        })
        .collect();
    Ok(TrialResult {
        config: cfg.clone(),
        termination,
        generations: generation + 1,
        front,
        archive,
        stats,
        wall_seconds: trial_start.elapsed().as_secs_f64(),
    })
}
