//! The generational loop: converge once with SGD, then evolve retain/reinit
//! masks whose fitness is validation accuracy after retraining.
//!
//! Each generation draws `m` offspring by binary tournament, single-point
//! crossover and per-bit mutation, evaluates them, and keeps `m` of the `2m`
//! parents and offspring. With suppression enabled the pool is clustered by
//! genome distance first and crowded clusters lose their weakest member's
//! selection fitness.

use std::time::Instant;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Samples, Split};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::genome::{apply_genome, Genome};
use crate::nn::{build_model, sgd_train, Architecture, InitSpec, Model, Provenance, TrainConfig, WeightSnapshot};
use crate::seed::{derive_rng, derive_seed, rng_from_seed, Purpose, Rng};
use crate::suppression::{suppress_population, Linkage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionConfig {
    pub population_size: usize,
    pub generations: usize,
    pub crossover_probability: f64,
    pub mutation_probability: f64,
    #[serde(default = "enabled")]
    pub elitism: bool,
    #[serde(default = "enabled")]
    pub suppression: bool,
    #[serde(default)]
    pub linkage: Linkage,
}

fn enabled() -> bool {
    true
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 2 {
            return Err(Error::config("evolution.population_size must be at least 2"));
        }
        if self.generations == 0 {
            return Err(Error::config("evolution.generations must be at least 1"));
        }
        for (key, p) in [
            ("evolution.crossover_probability", self.crossover_probability),
            ("evolution.mutation_probability", self.mutation_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("{key} must lie in [0, 1], got {p}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub id: u64,
    pub genome: Genome,
    pub raw_fitness: Option<f64>,
    pub adjusted_fitness: Option<f64>,
    pub birth_generation: u64,
    pub parent_ids: Vec<u64>,
}

impl Individual {
    pub fn new(id: u64, genome: Genome, birth_generation: u64, parent_ids: Vec<u64>) -> Self {
        Self {
            id,
            genome,
            raw_fitness: None,
            adjusted_fitness: None,
            birth_generation,
            parent_ids,
        }
    }

    pub fn raw(&self) -> Result<f64> {
        self.raw_fitness
            .ok_or_else(|| Error::state(format!("individual {} has not been evaluated", self.id)))
    }

    /// Adjusted fitness when `adjusted` is set and known, raw fitness otherwise.
    pub fn selection_fitness(&self, adjusted: bool) -> Result<f64> {
        match (adjusted, self.adjusted_fitness) {
            (true, Some(f)) => Ok(f),
            _ => self.raw(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub members: Vec<Individual>,
    pub generation: u64,
}

/// Everything a fitness evaluation reads; shared read-only across workers.
pub struct FitnessContext<'a> {
    pub base: &'a WeightSnapshot,
    pub template: &'a Model,
    pub train: &'a Samples,
    pub validation: &'a Samples,
    pub config: &'a TrainConfig,
    /// Retraining epochs; `config.epochs_beta` in a normal run.
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub fitness: f64,
    pub snapshot: WeightSnapshot,
    pub diverged: bool,
}

/// Remaps the converged weights with `genome`, retrains with the retained /
/// reinitialized learning rates and scores validation accuracy. A diverging
/// retrain scores 0.
pub fn evaluate_fitness(ctx: &FitnessContext<'_>, genome: &Genome, reinit_seed: u64, retrain_seed: u64) -> Result<Evaluation> {
    let inits: Vec<InitSpec> = ctx.template.partition().blocks().iter().map(|b| b.init).collect();
    let remapped = apply_genome(ctx.base, &inits, genome, &mut rng_from_seed(reinit_seed))?;
    let mut model = ctx.template.clone();
    model.restore(&remapped.snapshot)?;
    let lrs = remapped.learning_rates(ctx.config.lr_retained, ctx.config.lr_reinit);
    match sgd_train(&mut model, ctx.train, ctx.config, ctx.epochs, &lrs, &mut rng_from_seed(retrain_seed)) {
        Ok(_) => Ok(Evaluation {
            fitness: model.evaluate_accuracy(ctx.validation)?,
            snapshot: model.snapshot(Provenance::Beta),
            diverged: false,
        }),
        Err(Error::Diverged { epoch }) => {
            log::warn!("genome {genome} diverged in retraining epoch {epoch}; fitness set to 0");
            Ok(Evaluation {
                fitness: 0.0,
                snapshot: model.snapshot(Provenance::Beta),
                diverged: true,
            })
        }
        Err(e) => Err(e),
    }
}

/// Two uniform draws with replacement; the fitter wins, exact ties by coin flip.
pub fn binary_tournament<'p>(members: &'p [Individual], use_adjusted: bool, rng: &mut Rng) -> Result<&'p Individual> {
    if members.is_empty() {
        return Err(Error::state("tournament on an empty population"));
    }
    let a = &members[rng.random_range(0..members.len())];
    let b = &members[rng.random_range(0..members.len())];
    let (fa, fb) = (a.selection_fitness(use_adjusted)?, b.selection_fitness(use_adjusted)?);
    Ok(if fa > fb {
        a
    } else if fb > fa {
        b
    } else if rng.random_bool(0.5) {
        a
    } else {
        b
    })
}

/// Swaps the tails of two genomes from position `cut` onward.
pub fn single_point(a: &Genome, b: &Genome, cut: usize) -> Result<(Genome, Genome)> {
    if a.len() != b.len() {
        return Err(Error::shape(format!("crossover of genomes of length {} and {}", a.len(), b.len())));
    }
    let cut = cut.min(a.len());
    let join = |head: &Genome, tail: &Genome| {
        Genome::from_bits(head.bits()[..cut].iter().chain(&tail.bits()[cut..]).copied().collect())
    };
    Ok((join(a, b), join(b, a)))
}

/// With probability `rate`, single-point crossover at a cut drawn from `1..n`;
/// otherwise clones.
pub fn crossover(a: &Genome, b: &Genome, rate: f64, rng: &mut Rng) -> Result<(Genome, Genome)> {
    if a.len() != b.len() {
        return Err(Error::shape(format!("crossover of genomes of length {} and {}", a.len(), b.len())));
    }
    if a.len() >= 2 && rng.random_bool(rate) {
        let cut = rng.random_range(1..a.len());
        single_point(a, b, cut)
    } else {
        Ok((a.clone(), b.clone()))
    }
}

/// Flips every bit independently with probability `rate`.
pub fn mutate(genome: &Genome, rate: f64, rng: &mut Rng) -> Genome {
    Genome::from_bits(genome.bits().iter().map(|&b| b ^ rng.random_bool(rate)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Offspring {
    pub genome: Genome,
    pub parent_ids: [u64; 2],
}

/// Exactly `config.population_size` offspring; an odd count keeps only the
/// first child of the final pair.
pub fn generate_offspring(parents: &[Individual], config: &EvolutionConfig, rng: &mut Rng) -> Result<Vec<Offspring>> {
    let target = config.population_size;
    let mut out = Vec::with_capacity(target);
    while out.len() < target {
        let p1 = binary_tournament(parents, config.suppression, rng)?;
        let p2 = binary_tournament(parents, config.suppression, rng)?;
        let (c1, c2) = crossover(&p1.genome, &p2.genome, config.crossover_probability, rng)?;
        let parent_ids = [p1.id, p2.id];
        let c1 = mutate(&c1, config.mutation_probability, rng);
        let c2 = mutate(&c2, config.mutation_probability, rng);
        out.push(Offspring { genome: c1, parent_ids });
        if out.len() < target {
            out.push(Offspring { genome: c2, parent_ids });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Survivors in ascending id order, with `adjusted_fitness` filled in.
    pub survivors: Vec<Individual>,
    /// Ids whose fitness was suppressed before ranking.
    pub suppressed: Vec<u64>,
}

/// Keeps `m` of the `2m` parents and offspring.
///
/// Adjusted fitness comes from niche suppression when enabled and equals raw
/// fitness otherwise. Elitism reserves a slot for the best raw fitness; the
/// rest go by descending adjusted fitness. Ties favour the lower id.
pub fn environmental_selection(mut pool: Vec<Individual>, config: &EvolutionConfig) -> Result<Selection> {
    let m = config.population_size;
    if pool.len() != 2 * m {
        return Err(Error::state(format!(
            "environmental selection expects {} individuals, got {}",
            2 * m,
            pool.len()
        )));
    }
    pool.sort_by_key(|ind| ind.id);
    let raw: Vec<f64> = pool.iter().map(Individual::raw).collect::<Result<_>>()?;

    let (adjusted, suppressed) = if config.suppression {
        let genomes: Vec<Genome> = pool.iter().map(|ind| ind.genome.clone()).collect();
        let s = suppress_population(&genomes, &raw, m, config.linkage)?;
        let ids = s.suppressed.iter().map(|&i| pool[i].id).collect();
        (s.adjusted, ids)
    } else {
        (raw.clone(), Vec::new())
    };
    for (ind, &adj) in pool.iter_mut().zip(&adjusted) {
        ind.adjusted_fitness = Some(adj);
    }

    let mut keep = vec![false; pool.len()];
    let mut kept = 0;
    if config.elitism {
        let elite = (0..pool.len())
            .max_by(|&a, &b| raw[a].total_cmp(&raw[b]).then(b.cmp(&a)))
            .unwrap();
        keep[elite] = true;
        kept += 1;
    }
    let mut ranked: Vec<usize> = (0..pool.len()).collect();
    ranked.sort_by(|&a, &b| adjusted[b].total_cmp(&adjusted[a]).then(a.cmp(&b)));
    for i in ranked {
        if kept == m {
            break;
        }
        if !keep[i] {
            keep[i] = true;
            kept += 1;
        }
    }
    let survivors = pool.into_iter().zip(keep).filter_map(|(ind, k)| k.then_some(ind)).collect();
    Ok(Selection { survivors, suppressed })
}

/// Spread of raw fitness: `max - min`.
pub fn nabla(members: &[Individual]) -> Result<f64> {
    if members.is_empty() {
        return Err(Error::state("nabla of an empty population"));
    }
    let raw: Vec<f64> = members.iter().map(Individual::raw).collect::<Result<_>>()?;
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(max - min)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberRecord {
    pub id: u64,
    pub genome: String,
    pub raw_fitness: f64,
    pub adjusted_fitness: f64,
}

/// Statistics of the population that survives a generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationLog {
    pub generation: u64,
    pub best_raw: f64,
    pub median_raw: f64,
    pub min_raw: f64,
    pub nabla: f64,
    pub suppressed_count: usize,
    pub best_genome: String,
    pub wall_time_seconds: f64,
    pub members: Vec<MemberRecord>,
}

impl GenerationLog {
    fn summarize(generation: u64, survivors: &[Individual], suppressed_count: usize, wall_time_seconds: f64) -> Result<Self> {
        let mut raw: Vec<f64> = survivors.iter().map(Individual::raw).collect::<Result<_>>()?;
        raw.sort_by(f64::total_cmp);
        let k = raw.len();
        let median_raw = if k % 2 == 1 {
            raw[k / 2]
        } else {
            (raw[k / 2 - 1] + raw[k / 2]) / 2.0
        };
        let best = best_of(survivors)?;
        let best_raw = best.raw()?;
        let min_raw = raw[0];
        Ok(Self {
            generation,
            best_raw,
            median_raw,
            min_raw,
            nabla: nabla(survivors)?,
            suppressed_count,
            best_genome: best.genome.to_string(),
            wall_time_seconds,
            members: survivors
                .iter()
                .map(|ind| {
                    Ok(MemberRecord {
                        id: ind.id,
                        genome: ind.genome.to_string(),
                        raw_fitness: ind.raw()?,
                        adjusted_fitness: ind.adjusted_fitness.unwrap_or(ind.raw()?),
                    })
                })
                .collect::<Result<_>>()?,
        })
    }
}

/// Highest raw fitness, lowest id on ties.
pub fn best_of(members: &[Individual]) -> Result<&Individual> {
    let mut best: Option<(&Individual, f64)> = None;
    for ind in members {
        let f = ind.raw()?;
        match best {
            Some((b, bf)) if bf > f || (bf == f && b.id < ind.id) => {}
            _ => best = Some((ind, f)),
        }
    }
    best.map(|(b, _)| b).ok_or_else(|| Error::state("empty population"))
}

/// Inputs to a full run besides the data and architecture.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub evolution: EvolutionConfig,
    pub train: TrainConfig,
    pub seed: u64,
    /// Worker count for fitness evaluation; 0 means all cores. Never affects results.
    pub parallelism: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub best: Individual,
    pub best_snapshot: WeightSnapshot,
    pub logs: Vec<GenerationLog>,
    pub base_snapshot: WeightSnapshot,
    /// Validation accuracy of the converged network before any remapping.
    pub base_validation_accuracy: f64,
    pub final_population: Population,
}

/// Converges the network once, then runs the generational search.
///
/// `on_generation` sees every log as soon as its generation finishes; an error
/// from it aborts the run.
pub fn run(
    spec: &RunSpec,
    data: &Dataset,
    architecture: &Architecture,
    mut on_generation: impl FnMut(&GenerationLog) -> Result<()>,
) -> Result<RunOutcome> {
    spec.train.validate()?;
    spec.evolution.validate()?;
    if architecture.input_width() != data.dim {
        return Err(Error::shape(format!(
            "network input width {} does not match feature width {}",
            architecture.input_width(),
            data.dim
        )));
    }
    if architecture.class_count() < data.class_count {
        return Err(Error::shape(format!(
            "network has {} outputs for {} classes",
            architecture.class_count(),
            data.class_count
        )));
    }
    let train = data.samples(Split::Train);
    let validation = data.samples(Split::Validation);
    if train.is_empty() || validation.is_empty() {
        return Err(Error::data("run needs non-empty train and validation splits"));
    }

    let seed = spec.seed;
    let m = spec.evolution.population_size;
    let executor = Executor::new(spec.parallelism)?;

    let mut model = build_model(architecture, derive_seed(seed, 0, 0, Purpose::ModelInit));
    let alpha_lrs = vec![spec.train.lr_reinit; model.block_count()];
    sgd_train(
        &mut model,
        &train,
        &spec.train,
        spec.train.epochs_alpha,
        &alpha_lrs,
        &mut derive_rng(seed, 0, 0, Purpose::AlphaTrain),
    )?;
    let base_snapshot = model.snapshot(Provenance::Alpha);
    let base_validation_accuracy = model.evaluate_accuracy(&validation)?;
    log::info!("converged base network: validation accuracy {base_validation_accuracy:.4}");

    let ctx = FitnessContext {
        base: &base_snapshot,
        template: &model,
        train: &train,
        validation: &validation,
        config: &spec.train,
        epochs: spec.train.epochs_beta,
    };
    let evaluate = |batch: &mut [Individual], best: &mut Option<(Individual, WeightSnapshot)>| -> Result<()> {
        let results = executor.map(batch, |ind| {
            evaluate_fitness(
                &ctx,
                &ind.genome,
                derive_seed(seed, ind.birth_generation, ind.id, Purpose::Reinit),
                derive_seed(seed, ind.birth_generation, ind.id, Purpose::Retrain),
            )
        });
        for (ind, result) in batch.iter_mut().zip(results) {
            let eval = result?;
            ind.raw_fitness = Some(eval.fitness);
            let better = best
                .as_ref()
                .is_none_or(|(b, _)| eval.fitness > b.raw_fitness.unwrap());
            if better {
                *best = Some((ind.clone(), eval.snapshot));
            }
        }
        Ok(())
    };

    let mut best: Option<(Individual, WeightSnapshot)> = None;
    let mut rng = derive_rng(seed, 0, 0, Purpose::Population);
    let mut members = (0..m as u64)
        .map(|id| Ok(Individual::new(id, Genome::random(model.block_count(), &mut rng)?, 0, Vec::new())))
        .collect::<Result<Vec<_>>>()?;
    evaluate(&mut members, &mut best)?;
    for ind in &mut members {
        ind.adjusted_fitness = ind.raw_fitness;
    }
    let mut next_id = m as u64;

    let mut logs = Vec::with_capacity(spec.evolution.generations);
    for generation in 1..=spec.evolution.generations as u64 {
        let started = Instant::now();
        let mut rng = derive_rng(seed, generation, 0, Purpose::Variation);
        let mut offspring: Vec<Individual> = generate_offspring(&members, &spec.evolution, &mut rng)?
            .into_iter()
            .map(|o| {
                let ind = Individual::new(next_id, o.genome, generation, o.parent_ids.to_vec());
                next_id += 1;
                ind
            })
            .collect();
        evaluate(&mut offspring, &mut best)?;

        let mut pool = members;
        pool.extend(offspring);
        let selection = environmental_selection(pool, &spec.evolution)?;
        members = selection.survivors;

        let log = GenerationLog::summarize(
            generation,
            &members,
            selection.suppressed.len(),
            started.elapsed().as_secs_f64(),
        )?;
        log::info!(
            "generation {generation}: best {:.4} median {:.4} min {:.4} suppressed {}",
            log.best_raw,
            log.median_raw,
            log.min_raw,
            log.suppressed_count
        );
        on_generation(&log)?;
        logs.push(log);
    }

    let (best, best_snapshot) = best.expect("initial population is evaluated");
    Ok(RunOutcome {
        best,
        best_snapshot,
        logs,
        base_snapshot,
        base_validation_accuracy,
        final_population: Population {
            members,
            generation: spec.evolution.generations as u64,
        },
    })
}
