//! The generation loop: a standard pipeline that evaluates every member in
//! full, and an efficient pipeline that pre-generates tournaments and stops
//! evaluating members once they cannot win any of them.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rayon::ThreadPool;
use serde::Serialize;

use crate::data::{Dataset, DEFAULT_BLOCK_SIZE};
use crate::error::EngineError;
use crate::eval::{eval_block, EvalState, Scratch, Status};
use crate::genome::{
    breed, ramped_half_and_half, BreedParams, FunctionSet, Limits, Origin, Program,
};
use crate::tourney::{
    generate_tournaments, mark_losers_with, select_winner, AuditRecord, EfficiencyLedger,
    LoserRule, TournamentSet, WorkTotals,
};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub population_size: usize,
    pub generations: usize,
    pub tournament_size: usize,
    pub p_crossover: f64,
    pub p_mutation: f64,
    pub max_depth: usize,
    pub max_size: usize,
    /// Cases per block, or packed words per block for Boolean problems.
    pub block_size: usize,
    pub elitism_fraction: f64,
    pub efficient_selection: bool,
    pub reuse_unmodified: bool,
    pub skip_unsampled: bool,
    /// Complete every loser before choosing elites. Keeps both pipelines on
    /// the same path when elitism is on, at the cost of the pruning savings.
    pub strict_elitism: bool,
    pub seed: u64,
    pub workers: usize,
    #[serde(skip)]
    pub loser_rule: LoserRule,
    /// Force-evaluate losers after each generation and record whether they
    /// would have won.
    pub audit: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            population_size: 4000,
            generations: 50,
            tournament_size: 3,
            p_crossover: 0.5,
            p_mutation: 0.5,
            max_depth: 50,
            max_size: 1000,
            block_size: DEFAULT_BLOCK_SIZE,
            elitism_fraction: 0.0,
            efficient_selection: false,
            reuse_unmodified: false,
            skip_unsampled: false,
            strict_elitism: false,
            seed: 1,
            workers: 1,
            loser_rule: LoserRule::Strict,
            audit: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let fail = |msg: &str| Err(EngineError::Config(msg.to_string()));
        if self.population_size == 0 {
            return fail("population size must be at least 1");
        }
        if self.tournament_size == 0 {
            return fail("tournament size must be at least 1");
        }
        for (name, p) in [
            ("crossover", self.p_crossover),
            ("mutation", self.p_mutation),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(EngineError::Config(format!(
                    "{name} probability {p} outside [0, 1]"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.elitism_fraction) {
            return fail("elitism fraction must lie in [0, 1)");
        }
        if self.elite_count() >= self.population_size {
            return fail("elitism leaves no room for offspring");
        }
        if self.max_depth == 0 || self.max_size == 0 {
            return fail("size and depth limits must be at least 1");
        }
        if self.block_size == 0 {
            return fail("block size must be at least 1");
        }
        if self.workers == 0 {
            return fail("worker count must be at least 1");
        }
        Ok(())
    }

    pub fn limits(&self) -> Limits {
        Limits {
            max_depth: self.max_depth,
            max_size: self.max_size,
        }
    }

    pub fn breed_params(&self) -> BreedParams {
        BreedParams {
            p_crossover: self.p_crossover,
            p_mutation: self.p_mutation,
        }
    }

    pub fn elite_count(&self) -> usize {
        (self.elitism_fraction * self.population_size as f64).floor() as usize
    }

    /// Offspring bred per generation.
    pub fn offspring_count(&self) -> usize {
        self.population_size - self.elite_count()
    }

    /// Tournaments per generation: one per parent, rounded up to pairs.
    pub fn parents_needed(&self) -> usize {
        let o = self.offspring_count();
        o + o % 2
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pipeline {
    Standard,
    Efficient,
}

impl RunConfig {
    pub fn pipeline(&self) -> Pipeline {
        if self.efficient_selection {
            Pipeline::Efficient
        } else {
            Pipeline::Standard
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best_hits: u64,
    /// Percentage of cases the best member classifies correctly.
    pub accuracy: f64,
    /// Mean hits over members with any evaluation (partial for losers).
    pub mean_hits: f64,
    pub avg_size: f64,
    pub saving: f64,
    /// Saving counting only members that were actually evaluated.
    pub pruning_saving: f64,
    pub gpops: f64,
    pub losers: usize,
    pub not_sampled: usize,
    pub reused: usize,
    /// Members evaluated on every case.
    pub evaluated: usize,
    pub elapsed: f64,
    pub skipped_work: u128,
    pub full_work: u128,
}

/// Everything one generation produced.
#[derive(Clone, Debug)]
pub struct GenerationOutcome {
    pub next: Vec<Program>,
    pub stats: GenerationStats,
    pub tournaments: TournamentSet,
    pub winners: Vec<usize>,
    pub elites: Vec<usize>,
    pub states: Vec<EvalState>,
    pub work: WorkTotals,
    pub evaluated_work: WorkTotals,
    pub audit: Vec<AuditRecord>,
}

/// A dataset, its function set and a worker pool bound to one configuration.
pub struct Engine {
    config: RunConfig,
    data: Dataset,
    set: FunctionSet,
    pool: ThreadPool,
}

impl Engine {
    /// Applies the configured block size to `data` and builds the pool.
    pub fn new(config: RunConfig, data: &Dataset) -> Result<Self, EngineError> {
        config.validate()?;
        let data = data.clone().with_block_size(config.block_size);
        if data.total_cases() == 0 {
            return Err(EngineError::Config("dataset has no fitness cases".into()));
        }
        let set = data.function_set();
        if set.variables() == 0 {
            return Err(EngineError::Config("dataset has no input features".into()));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| EngineError::Config(format!("cannot start worker pool: {e}")))?;
        Ok(Engine {
            config,
            data,
            set,
            pool,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn function_set(&self) -> &FunctionSet {
        &self.set
    }

    pub fn initial_population(&self, rng: &mut ChaCha8Rng) -> Vec<Program> {
        ramped_half_and_half(
            rng,
            &self.set,
            &self.config.limits(),
            self.config.population_size,
        )
    }

    /// Rejects populations of the wrong size or with nodes the dataset
    /// cannot evaluate.
    pub fn check_population(&self, population: &[Program]) -> Result<(), EngineError> {
        if population.len() != self.config.population_size {
            return Err(EngineError::Config(format!(
                "population has {} members, expected {}",
                population.len(),
                self.config.population_size
            )));
        }
        for (member, p) in population.iter().enumerate() {
            p.check_against(&self.set)
                .map_err(|source| EngineError::Program { member, source })?;
        }
        Ok(())
    }

    pub fn generation(
        &self,
        pipeline: Pipeline,
        population: &[Program],
        rng: &mut ChaCha8Rng,
        generation: usize,
    ) -> Result<GenerationOutcome, EngineError> {
        self.check_population(population)?;
        let config = &self.config;
        let total = self.data.total_cases();
        let n = population.len();
        let elitism = config.elite_count() > 0;

        let tournaments =
            generate_tournaments(rng, n, config.parents_needed(), config.tournament_size);
        let mut states = self.initial_states(population, &tournaments, elitism);

        let started = Instant::now();
        match pipeline {
            Pipeline::Standard => {
                self.evaluate_remaining(population, &mut states, |s| s.status == Status::Active)
            }
            Pipeline::Efficient => {
                self.evaluate_pruned(population, &mut states, &tournaments);
                if elitism && config.strict_elitism {
                    self.evaluate_remaining(population, &mut states, |s| s.status == Status::Loser);
                }
            }
        }
        let elapsed = started.elapsed().as_secs_f64();

        let audit = if config.audit {
            self.audit(population, &states, &tournaments, generation)
        } else {
            Vec::new()
        };

        let hits: Vec<u64> = states.iter().map(|s| s.hits).collect();
        let winners: Vec<usize> = tournaments
            .tournaments()
            .iter()
            .map(|t| select_winner(t, &hits))
            .collect();
        let elites = elitism_select(&hits, config.elite_count());
        let mut next: Vec<Program> = elites
            .iter()
            .map(|&m| population[m].inherit(states[m].fitness(total), Origin::Elite))
            .collect();
        next.extend(self.breed_offspring(population, &states, &winners, rng));

        let (ledger, evaluated_ledger) = ledgers(population, &states, total);
        let work = ledger.work();
        let evaluated_work = evaluated_ledger.work();
        let stats = summarize(
            generation,
            population,
            &states,
            total,
            work,
            evaluated_work,
            elapsed,
        );

        Ok(GenerationOutcome {
            next,
            stats,
            tournaments,
            winners,
            elites,
            states,
            work,
            evaluated_work,
            audit,
        })
    }

    fn initial_states(
        &self,
        population: &[Program],
        set: &TournamentSet,
        elitism: bool,
    ) -> Vec<EvalState> {
        let total = self.data.total_cases();
        population
            .iter()
            .enumerate()
            .map(|(m, p)| {
                let memberships = set.memberships(m).len();
                match p.cached_fitness {
                    Some(f) if self.config.reuse_unmodified && p.unmodified => {
                        EvalState::known_full(f, total, memberships)
                    }
                    // Elites are drawn from the whole population, so under
                    // elitism unsampled members still need a fitness.
                    _ if self.config.skip_unsampled && memberships == 0 && !elitism => {
                        EvalState::not_sampled()
                    }
                    _ => EvalState::active(memberships),
                }
            })
            .collect()
    }

    /// Evaluates the remaining blocks of every member selected by `pick`.
    fn evaluate_remaining<F>(&self, population: &[Program], states: &mut [EvalState], pick: F)
    where
        F: Fn(&EvalState) -> bool + Sync,
    {
        let data = &self.data;
        self.pool.install(|| {
            states
                .par_iter_mut()
                .zip(population.par_iter())
                .filter(|(s, _)| pick(s))
                .for_each_init(Scratch::default, |scratch, (state, program)| {
                    let status = state.status;
                    state.status = Status::Active;
                    for block in state.blocks_evaluated..data.block_count() {
                        let hits = eval_block(data, program, block, scratch);
                        let nodes = program.size() as u64 * data.block_steps(block);
                        state.record_block(hits, data.block_cases(block), nodes);
                    }
                    state.status = status;
                });
        });
    }

    fn evaluate_pruned(
        &self,
        population: &[Program],
        states: &mut [EvalState],
        set: &TournamentSet,
    ) {
        let data = &self.data;
        let blocks = data.block_count();
        for block in 0..blocks {
            let cases = data.block_cases(block);
            let steps = data.block_steps(block);
            self.pool.install(|| {
                states
                    .par_iter_mut()
                    .zip(population.par_iter())
                    .filter(|(s, _)| s.status == Status::Active)
                    .for_each_init(Scratch::default, |scratch, (state, program)| {
                        let hits = eval_block(data, program, block, scratch);
                        state.record_block(hits, cases, program.size() as u64 * steps);
                    });
            });
            // Barrier reached; nothing remains to prune after the last block.
            if block + 1 < blocks {
                mark_losers_with(states, set, data.total_cases(), self.config.loser_rule);
            }
        }
    }

    fn audit(
        &self,
        population: &[Program],
        states: &[EvalState],
        set: &TournamentSet,
        generation: usize,
    ) -> Vec<AuditRecord> {
        let mut completed = states.to_vec();
        self.evaluate_remaining(population, &mut completed, |s| s.status == Status::Loser);
        let full: Vec<u64> = completed.iter().map(|s| s.hits).collect();
        let winners: Vec<usize> = set
            .tournaments()
            .iter()
            .map(|t| select_winner(t, &full))
            .collect();
        states
            .iter()
            .enumerate()
            .filter(|(_, s)| s.status == Status::Loser)
            .map(|(m, s)| {
                let joined: Vec<String> = set
                    .memberships(m)
                    .iter()
                    .map(|(t, _)| t.to_string())
                    .collect();
                AuditRecord {
                    generation,
                    member: m,
                    tournaments: joined.join(";"),
                    pruned_after_block: s.blocks_evaluated,
                    hits_at_pruning: s.hits,
                    final_hits: full[m],
                    wins: set
                        .memberships(m)
                        .iter()
                        .filter(|(t, _)| winners[*t] == m)
                        .count(),
                }
            })
            .collect()
    }

    fn breed_offspring(
        &self,
        population: &[Program],
        states: &[EvalState],
        winners: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Vec<Program> {
        let total = self.data.total_cases();
        let limits = self.config.limits();
        let params = self.config.breed_params();
        let mut offspring = Vec::with_capacity(winners.len());
        for pair in winners.chunks_exact(2) {
            let (a, b) = (pair[0], pair[1]);
            let (c, d) = breed(
                (&population[a], &population[b]),
                (states[a].fitness(total), states[b].fitness(total)),
                rng,
                &self.set,
                &limits,
                params,
            );
            offspring.push(c);
            offspring.push(d);
        }
        offspring.truncate(self.config.offspring_count());
        offspring
    }
}

/// The `k` members with most hits, ties to the lower index, best first.
pub fn elitism_select(hits: &[u64], k: usize) -> Vec<usize> {
    assert!(
        k <= hits.len(),
        "cannot select {k} elites from {}",
        hits.len()
    );
    let mut order: Vec<usize> = (0..hits.len()).collect();
    order.sort_by_key(|&m| (std::cmp::Reverse(hits[m]), m));
    order.truncate(k);
    order
}

/// Size-weighted case evaluations per second, counting skipped work as
/// done. `lanes` scales ledgers kept in packed words; ledgers kept in raw
/// cases pass 1.
pub fn effective_gpops(ledger: &EfficiencyLedger, elapsed: f64, lanes: u32) -> f64 {
    assert!(elapsed > 0.0, "elapsed time must be positive");
    ledger.work().full as f64 * f64::from(lanes) / elapsed
}

fn gpops_of(full_work: u128, elapsed: f64) -> f64 {
    if elapsed > 0.0 {
        full_work as f64 / elapsed
    } else {
        0.0
    }
}

/// The primary ledger counts every member; the second excludes members
/// that were never evaluated (reused or unsampled).
fn ledgers(
    population: &[Program],
    states: &[EvalState],
    total: u64,
) -> (EfficiencyLedger, EfficiencyLedger) {
    let mut all = EfficiencyLedger::new(total);
    let mut evaluated = EfficiencyLedger::new(total);
    for (p, s) in population.iter().zip(states) {
        let (skipped, was_evaluated) = match s.status {
            Status::KnownFull | Status::NotSampled => (total, false),
            Status::Active | Status::Loser => (total - s.cases_evaluated, true),
        };
        all.record(skipped, p.size(), true);
        evaluated.record(skipped, p.size(), was_evaluated);
    }
    (all, evaluated)
}

fn summarize(
    generation: usize,
    population: &[Program],
    states: &[EvalState],
    total: u64,
    work: WorkTotals,
    evaluated_work: WorkTotals,
    elapsed: f64,
) -> GenerationStats {
    let count = |status| states.iter().filter(|s| s.status == status).count();
    let best_hits = states
        .iter()
        .filter_map(|s| s.fitness(total))
        .max()
        .unwrap_or(0);
    let scored: Vec<u64> = states
        .iter()
        .filter(|s| s.status != Status::NotSampled)
        .map(|s| s.hits)
        .collect();
    let mean_hits = if scored.is_empty() {
        0.0
    } else {
        scored.iter().sum::<u64>() as f64 / scored.len() as f64
    };
    GenerationStats {
        generation,
        best_hits,
        accuracy: 100.0 * best_hits as f64 / total as f64,
        mean_hits,
        avg_size: population.iter().map(|p| p.size()).sum::<usize>() as f64
            / population.len() as f64,
        saving: work.saving_percent().unwrap_or(0.0),
        pruning_saving: evaluated_work.saving_percent().unwrap_or(0.0),
        gpops: gpops_of(work.full, elapsed),
        losers: count(Status::Loser),
        not_sampled: count(Status::NotSampled),
        reused: count(Status::KnownFull),
        evaluated: states
            .iter()
            .filter(|s| s.status == Status::Active && s.cases_evaluated == total)
            .count(),
        elapsed,
        skipped_work: work.skipped,
        full_work: work.full,
    }
}

pub fn run_generation_standard(
    engine: &Engine,
    population: &[Program],
    rng: &mut ChaCha8Rng,
    generation: usize,
) -> Result<GenerationOutcome, EngineError> {
    engine.generation(Pipeline::Standard, population, rng, generation)
}

pub fn run_generation_efficient(
    engine: &Engine,
    population: &[Program],
    rng: &mut ChaCha8Rng,
    generation: usize,
) -> Result<GenerationOutcome, EngineError> {
    engine.generation(Pipeline::Efficient, population, rng, generation)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub seed: u64,
    pub pipeline: String,
    pub initial_avg_size: f64,
    pub generations: Vec<GenerationStats>,
    /// Best accuracy in the last generation evaluated.
    pub final_accuracy: f64,
    pub final_best_hits: u64,
    /// Mean of per-generation average tree sizes.
    pub avg_size: f64,
    /// Saving aggregated over all generations.
    pub saving: f64,
    pub pruning_saving: f64,
    pub gpops: f64,
    pub elapsed: f64,
    pub audit: Vec<AuditRecord>,
}

impl RunReport {
    pub fn audit_violations(&self) -> usize {
        self.audit.iter().filter(|r| r.wins > 0).count()
    }
}

/// Runs one seed of `config` start to finish.
pub fn run_single(engine: &Engine) -> Result<RunReport, EngineError> {
    let config = engine.config();
    let total = engine.data().total_cases();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut population = engine.initial_population(&mut rng);
    let initial_avg_size =
        population.iter().map(|p| p.size()).sum::<usize>() as f64 / population.len() as f64;
    let mut generations = Vec::with_capacity(config.generations);
    let mut work = WorkTotals::default();
    let mut evaluated_work = WorkTotals::default();
    let mut audit = Vec::new();
    for g in 0..config.generations {
        let outcome = engine.generation(config.pipeline(), &population, &mut rng, g)?;
        work += outcome.work;
        evaluated_work += outcome.evaluated_work;
        audit.extend(outcome.audit);
        generations.push(outcome.stats);
        population = outcome.next;
    }
    let elapsed: f64 = generations.iter().map(|s| s.elapsed).sum();
    let last = generations.last();
    let final_best_hits = last.map_or(0, |s| s.best_hits);
    let avg_size = if generations.is_empty() {
        initial_avg_size
    } else {
        generations.iter().map(|s| s.avg_size).sum::<f64>() / generations.len() as f64
    };
    Ok(RunReport {
        seed: config.seed,
        pipeline: match config.pipeline() {
            Pipeline::Standard => "standard".into(),
            Pipeline::Efficient => "efficient".into(),
        },
        initial_avg_size,
        final_accuracy: 100.0 * final_best_hits as f64 / total as f64,
        final_best_hits,
        avg_size,
        saving: work.saving_percent().unwrap_or(0.0),
        pruning_saving: evaluated_work.saving_percent().unwrap_or(0.0),
        gpops: gpops_of(work.full, elapsed),
        elapsed,
        audit,
        generations,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    /// Sample standard deviation; zero for a single value.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return MeanSd::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        MeanSd { mean, sd }
    }
}

impl std::fmt::Display for MeanSd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.2} ± {:.2}", self.mean, self.sd)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub tournament_size: usize,
    pub runs: usize,
    pub accuracy: MeanSd,
    pub avg_size: MeanSd,
    pub elapsed: MeanSd,
    pub saving: MeanSd,
    pub pruning_saving: MeanSd,
    pub gpops: MeanSd,
}

impl ExperimentSummary {
    pub fn of(tournament_size: usize, runs: &[RunReport]) -> Self {
        let pick = |f: fn(&RunReport) -> f64| MeanSd::of(&runs.iter().map(f).collect::<Vec<_>>());
        ExperimentSummary {
            tournament_size,
            runs: runs.len(),
            accuracy: pick(|r| r.final_accuracy),
            avg_size: pick(|r| r.avg_size),
            elapsed: pick(|r| r.elapsed),
            saving: pick(|r| r.saving),
            pruning_saving: pick(|r| r.pruning_saving),
            gpops: pick(|r| r.gpops),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub config: RunConfig,
    pub runs: Vec<RunReport>,
    pub summary: ExperimentSummary,
}

/// Runs `repeats` seeds sequentially, starting from `config.seed`.
pub fn run_experiment(
    config: &RunConfig,
    data: &Dataset,
    repeats: usize,
) -> Result<ExperimentReport, EngineError> {
    if repeats == 0 {
        return Err(EngineError::Config(
            "repeat count must be at least 1".into(),
        ));
    }
    let mut engine = Engine::new(config.clone(), data)?;
    let mut runs = Vec::with_capacity(repeats);
    for r in 0..repeats {
        engine.config.seed = config.seed + r as u64;
        runs.push(run_single(&engine)?);
    }
    Ok(ExperimentReport {
        config: config.clone(),
        summary: ExperimentSummary::of(config.tournament_size, &runs),
        runs,
    })
}

/// First point where the two pipelines disagree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Divergence {
    pub generation: usize,
    pub tournament: Option<usize>,
    pub detail: String,
}

impl std::fmt::Display for Divergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "generation {}", self.generation)?;
        if let Some(t) = self.tournament {
            write!(f, ", tournament {t}")?;
        }
        write!(f, ": {}", self.detail)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VerifyReport {
    pub generations: usize,
    pub tournaments_checked: usize,
    pub losers_audited: usize,
    pub violations: usize,
    pub divergence: Option<Divergence>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.divergence.is_none() && self.violations == 0
    }
}

/// Runs both pipelines in lockstep from the same seed, comparing winners
/// and next-generation genomes, and audits every loser of the efficient
/// pipeline. Stops at the first divergence.
pub fn verify_paths(config: &RunConfig, data: &Dataset) -> Result<VerifyReport, EngineError> {
    if config.elite_count() > 0 && !config.strict_elitism {
        return Err(EngineError::Config(
            "elitism ranks losers by partial fitness, so the pipelines may legitimately diverge; \
             enable strict elitism to verify"
                .into(),
        ));
    }
    let mut audited = config.clone();
    audited.audit = true;
    let engine = Engine::new(audited, data)?;
    let mut rng_std = ChaCha8Rng::seed_from_u64(config.seed);
    let mut rng_eff = rng_std.clone();
    let mut pop_std = engine.initial_population(&mut rng_std);
    let mut pop_eff = engine.initial_population(&mut rng_eff);
    let mut report = VerifyReport::default();

    for g in 0..config.generations {
        let std_out = engine.generation(Pipeline::Standard, &pop_std, &mut rng_std, g)?;
        let eff_out = engine.generation(Pipeline::Efficient, &pop_eff, &mut rng_eff, g)?;
        report.generations += 1;
        report.losers_audited += eff_out.audit.len();
        report.violations += eff_out.audit.iter().filter(|r| r.wins > 0).count();

        if std_out.tournaments != eff_out.tournaments {
            report.divergence = Some(Divergence {
                generation: g,
                tournament: None,
                detail: "tournament draws differ".into(),
            });
            return Ok(report);
        }
        for (t, (a, b)) in std_out.winners.iter().zip(&eff_out.winners).enumerate() {
            report.tournaments_checked += 1;
            if a != b {
                report.divergence = Some(Divergence {
                    generation: g,
                    tournament: Some(t),
                    detail: format!(
                        "standard winner {a}, efficient winner {b}, members {:?}",
                        std_out.tournaments.tournaments()[t]
                    ),
                });
                return Ok(report);
            }
        }
        if let Some(m) =
            (0..std_out.next.len()).find(|&m| !std_out.next[m].same_genome(&eff_out.next[m]))
        {
            report.divergence = Some(Divergence {
                generation: g,
                tournament: None,
                detail: format!("next-generation member {m} differs"),
            });
            return Ok(report);
        }
        pop_std = std_out.next;
        pop_eff = eff_out.next;
    }
    Ok(report)
}
