//! Steady-state search loop and its checkpointable state.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use rand::SeedableRng;

use super::operators::{crossover, mutate, select_parents, SelectionMethod};
use super::population::{Individual, Population};
use crate::fitness::{FitnessFn, FitnessRecord, ThresholdSchedule};
use crate::measure::Genome;
use crate::SeedRng;

/// Parameters of one search.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchConfig {
    /// Population size `S`.
    pub population_size: usize,
    pub schedule: ThresholdSchedule,
    /// Offspring budget `G_max`.
    pub max_generations: u64,
    /// Stop after this many consecutive generations without an insertion.
    pub stagnation_window: u64,
    /// Random candidates drawn during initialization before giving up.
    pub init_draw_budget: usize,
}

impl SearchConfig {
    /// Defaults for population size `s` and the standard schedule at `chance_ratio`.
    pub fn new(population_size: usize, chance_ratio: f64) -> SearchConfig {
        let max_generations = 500;
        SearchConfig {
            population_size,
            schedule: ThresholdSchedule::standard(max_generations, chance_ratio),
            max_generations,
            stagnation_window: 50,
            init_draw_budget: 50 * population_size.max(1),
        }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if self.population_size < 2 {
            return Err(SearchError::PopulationTooSmall(self.population_size));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SearchError {
    PopulationTooSmall(usize),
    /// The draw budget ran out before enough candidates beat the threshold.
    InitFailure {
        threshold: f64,
        accepted: usize,
        needed: usize,
        draws: usize,
    },
    /// Restored state is inconsistent with the configuration.
    InvalidState(&'static str),
}

impl fmt::Display for SearchError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SearchError::PopulationTooSmall(s) => {
                write!(f, "population size must be at least 2, got {s}")
            }
            SearchError::InitFailure {
                threshold,
                accepted,
                needed,
                draws,
            } => write!(
                f,
                "initialization failed: only {accepted} of {needed} random candidates \
                 beat threshold {threshold} after {draws} draws"
            ),
            SearchError::InvalidState(why) => write!(f, "invalid search state: {why}"),
        }
    }
}

impl core::error::Error for SearchError {}

/// What happened to the offspring of one generation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepEvent {
    /// The child replaced the weakest member and now sits at `rank`.
    Inserted { rank: usize },
    /// The child did not beat the weakest member.
    NotBetter,
    /// The child's genome is already in the population.
    Duplicate,
    /// Evaluation failed; the child was recorded with fitness 0.
    EvalFailed,
}

impl StepEvent {
    pub fn name(&self) -> &'static str {
        match self {
            StepEvent::Inserted { .. } => "inserted",
            StepEvent::NotBetter => "not_better",
            StepEvent::Duplicate => "duplicate",
            StepEvent::EvalFailed => "eval_failed",
        }
    }
}

/// Summary of one generation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    /// Generation counter after the step.
    pub generation: u64,
    pub child: Genome,
    pub child_fitness: f64,
    pub method: SelectionMethod,
    pub cache_hit: bool,
    pub event: StepEvent,
    pub best: f64,
    pub median: f64,
    pub stage: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Stagnated,
    BudgetExhausted,
}

/// Everything needed to continue a search bit-identically.
#[derive(Clone, Debug)]
pub struct SearchState {
    population: Population,
    generation: u64,
    stage: usize,
    stagnation: u64,
    seed: u64,
    rng: SeedRng,
    cache: BTreeMap<Genome, FitnessRecord>,
}

/// Evaluates `genomes` (distinct, uncached) and stores every result in `cache`.
fn evaluate_into_cache<F: FitnessFn + ?Sized>(
    fitness: &F,
    genomes: &[Genome],
    threshold: f64,
    cache: &mut BTreeMap<Genome, FitnessRecord>,
) -> Vec<FitnessRecord> {
    let results = fitness.evaluate_batch(genomes, threshold);
    assert_eq!(results.len(), genomes.len(), "evaluate_batch length");
    genomes
        .iter()
        .zip(results)
        .map(|(g, r)| {
            let rec = r.unwrap_or_else(|e| {
                log::warn!("evaluation of {g} failed: {e}");
                FitnessRecord::failed(*g, threshold)
            });
            cache.insert(*g, rec.clone());
            rec
        })
        .collect()
}

/// Builds the initial population: `S − 1` random genomes beating the stage-0
/// threshold plus the baseline genome.
///
/// Candidates are drawn in rounds of exactly the number still missing, and
/// each round is one [`FitnessFn::evaluate_batch`] call, so a parallel batch
/// evaluator yields the same population as a sequential one.
pub fn init_population<F: FitnessFn + ?Sized>(
    config: &SearchConfig,
    fitness: &F,
    rng: &mut SeedRng,
    cache: &mut BTreeMap<Genome, FitnessRecord>,
) -> Result<Population, SearchError> {
    config.validate()?;
    let s = config.population_size;
    let t0 = config.schedule.threshold(0);
    let baseline = match cache.get(&Genome::BASELINE) {
        Some(r) => r.clone(),
        None => evaluate_into_cache(fitness, &[Genome::BASELINE], t0, cache).remove(0),
    };
    let mut members = alloc::vec![Individual::from_record(&baseline)];
    let needed = s - 1;
    let mut accepted = 0;
    let mut draws = 0;
    while accepted < needed {
        let mut round: Vec<Genome> = Vec::new();
        while round.len() < needed - accepted {
            if draws == config.init_draw_budget {
                break;
            }
            draws += 1;
            let g = Genome::random(rng);
            if g == Genome::BASELINE || cache.contains_key(&g) || round.contains(&g) {
                continue;
            }
            round.push(g);
        }
        if round.is_empty() {
            return Err(SearchError::InitFailure {
                threshold: t0,
                accepted,
                needed,
                draws,
            });
        }
        for rec in evaluate_into_cache(fitness, &round, t0, cache) {
            if rec.fitness > t0 {
                members.push(Individual::from_record(&rec));
                accepted += 1;
            }
        }
    }
    Ok(Population::from_unsorted(members))
}

impl SearchState {
    /// Seeds the generator and builds the initial population.
    pub fn initialize<F: FitnessFn + ?Sized>(
        config: &SearchConfig,
        fitness: &F,
        seed: u64,
    ) -> Result<SearchState, SearchError> {
        let mut rng = SeedRng::seed_from_u64(seed);
        let mut cache = BTreeMap::new();
        let population = init_population(config, fitness, &mut rng, &mut cache)?;
        Ok(SearchState {
            population,
            generation: 0,
            stage: config.schedule.stage_at(0),
            stagnation: 0,
            seed,
            rng,
            cache,
        })
    }

    /// Rebuilds a state from checkpointed parts.
    ///
    /// `rng_word_pos` is the generator's position in 32-bit words since seeding.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        config: &SearchConfig,
        members: Vec<Individual>,
        generation: u64,
        stage: usize,
        stagnation: u64,
        seed: u64,
        rng_word_pos: u128,
        cache: BTreeMap<Genome, FitnessRecord>,
    ) -> Result<SearchState, SearchError> {
        config.validate()?;
        if members.len() != config.population_size {
            return Err(SearchError::InvalidState(
                "population size differs from config",
            ));
        }
        let population = Population::from_unsorted(members);
        if population.members() != {
            let mut m = population.members().to_vec();
            m.sort_by(|x, y| y.fitness.total_cmp(&x.fitness));
            m
        }
        .as_slice()
        {
            return Err(SearchError::InvalidState("population is not sorted"));
        }
        if population
            .members()
            .iter()
            .any(|m| !cache.contains_key(&m.genome))
        {
            return Err(SearchError::InvalidState(
                "population member missing from cache",
            ));
        }
        if stage >= config.schedule.stages() {
            return Err(SearchError::InvalidState("stage outside the schedule"));
        }
        let mut rng = SeedRng::seed_from_u64(seed);
        rng.set_word_pos(rng_word_pos);
        Ok(SearchState {
            population,
            generation,
            stage,
            stagnation,
            seed,
            rng,
            cache,
        })
    }

    pub fn population(&self) -> &Population {
        &self.population
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn stagnation(&self) -> u64 {
        self.stagnation
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Generator position in 32-bit words since seeding.
    pub fn rng_word_pos(&self) -> u128 {
        self.rng.get_word_pos()
    }

    pub fn cache(&self) -> &BTreeMap<Genome, FitnessRecord> {
        &self.cache
    }

    /// Whether the stopping rule of `config` holds.
    pub fn stop_reason(&self, config: &SearchConfig) -> Option<StopReason> {
        if self.generation >= config.max_generations {
            Some(StopReason::BudgetExhausted)
        } else if self.stagnation >= config.stagnation_window {
            Some(StopReason::Stagnated)
        } else {
            None
        }
    }

    /// Produces and evaluates one offspring.
    pub fn step<F: FitnessFn + ?Sized>(
        &mut self,
        config: &SearchConfig,
        fitness: &F,
    ) -> StepReport {
        let threshold = config.schedule.threshold(self.stage);
        let (method, p1, p2) = select_parents(&self.population, &mut self.rng);
        let (g1, g2) = (p1.genome, p2.genome);
        let child = mutate(&crossover(&g1, &g2, &mut self.rng), &mut self.rng);

        let cache_hit = self.cache.contains_key(&child);
        let record = match self.cache.get(&child) {
            Some(r) => r.clone(),
            None => match fitness.evaluate(&child, threshold) {
                Ok(r) => {
                    self.cache.insert(child, r.clone());
                    r
                }
                Err(e) => {
                    log::warn!("evaluation of {child} failed: {e}");
                    let r = FitnessRecord::failed(child, threshold);
                    self.cache.insert(child, r.clone());
                    self.finish_generation(config, false);
                    return self.report(child, 0.0, method, false, StepEvent::EvalFailed);
                }
            },
        };
        let ind = Individual::from_record(&record);
        let worst = self
            .population
            .worst()
            .map_or(f64::NEG_INFINITY, |w| w.fitness);
        let event = if self.population.contains(&child) {
            StepEvent::Duplicate
        } else if ind.fitness > worst {
            self.population.pop_worst();
            StepEvent::Inserted {
                rank: self.population.insert(ind),
            }
        } else {
            StepEvent::NotBetter
        };
        self.finish_generation(config, matches!(event, StepEvent::Inserted { .. }));
        self.report(child, ind.fitness, method, cache_hit, event)
    }

    fn finish_generation(&mut self, config: &SearchConfig, inserted: bool) {
        self.stagnation = if inserted { 0 } else { self.stagnation + 1 };
        self.generation += 1;
        self.stage = config.schedule.stage_at(self.generation);
    }

    fn report(
        &self,
        child: Genome,
        child_fitness: f64,
        method: SelectionMethod,
        cache_hit: bool,
        event: StepEvent,
    ) -> StepReport {
        StepReport {
            generation: self.generation,
            child,
            child_fitness,
            method,
            cache_hit,
            event,
            best: self.population.best().map_or(0.0, |b| b.fitness),
            median: self.population.median(),
            stage: self.stage,
        }
    }
}

/// Receives every step; an error aborts the run and is returned unchanged.
pub trait Observer {
    type Error;

    fn on_step(&mut self, state: &SearchState, report: &StepReport) -> Result<(), Self::Error>;
}

/// Observer that ignores everything.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoObserver;

impl Observer for NoObserver {
    type Error = core::convert::Infallible;

    fn on_step(&mut self, _: &SearchState, _: &StepReport) -> Result<(), Self::Error> {
        Ok(())
    }
}

/// Steps `state` until the stopping rule fires.
///
/// On an observer error the state is left as it was after the failing step.
pub fn run<F: FitnessFn + ?Sized, O: Observer>(
    state: &mut SearchState,
    config: &SearchConfig,
    fitness: &F,
    observer: &mut O,
) -> Result<StopReason, O::Error> {
    loop {
        if let Some(reason) = state.stop_reason(config) {
            return Ok(reason);
        }
        let report = state.step(config, fitness);
        observer.on_step(state, &report)?;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitness::{EvalFailure, SurrogateFitness};

    fn surrogate_config(s: usize, g_max: u64) -> SearchConfig {
        SearchConfig {
            population_size: s,
            schedule: ThresholdSchedule::constant(0.11),
            max_generations: g_max,
            stagnation_window: g_max,
            init_draw_budget: 10_000,
        }
    }

    struct Flat;

    impl FitnessFn for Flat {
        fn evaluate(&self, g: &Genome, t: f64) -> Result<FitnessRecord, EvalFailure> {
            Ok(FitnessRecord::accepted(*g, alloc::vec![0.5], t))
        }
    }

    #[test]
    fn init_with_flat_landscape() {
        let cfg = surrogate_config(30, 0);
        let st = SearchState::initialize(&cfg, &Flat, 4).unwrap();
        assert_eq!(st.population().len(), 30);
        assert!(st.population().is_sorted());
        assert!(st.population().contains(&Genome::BASELINE));
        assert_eq!(st.cache().len(), 30);
    }

    #[test]
    fn impossible_bar_fails() {
        let mut cfg = surrogate_config(5, 0);
        cfg.schedule = ThresholdSchedule::constant(1.0);
        cfg.init_draw_budget = 200;
        let f = SurrogateFitness::new(Genome::BASELINE);
        match SearchState::initialize(&cfg, &f, 1) {
            Err(SearchError::InitFailure { threshold, .. }) => assert_eq!(threshold, 1.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_budget_returns_initial_population() {
        let cfg = surrogate_config(10, 0);
        let f = SurrogateFitness::new(Genome::new([3, 0, 3, 0, 0, 1, 6]).unwrap());
        let mut st = SearchState::initialize(&cfg, &f, 2).unwrap();
        let before = st.population().clone();
        let reason = run(&mut st, &cfg, &f, &mut NoObserver).unwrap();
        assert_eq!(reason, StopReason::BudgetExhausted);
        assert_eq!(st.population(), &before);
    }

    #[test]
    fn stagnation_stops_run() {
        let mut cfg = surrogate_config(4, 1000);
        cfg.stagnation_window = 3;
        let mut st = SearchState::initialize(&cfg, &Flat, 8).unwrap();
        let reason = run(&mut st, &cfg, &Flat, &mut NoObserver).unwrap();
        assert_eq!(reason, StopReason::Stagnated);
        assert_eq!(st.generation(), 3);
    }

    #[test]
    fn observer_error_aborts() {
        struct FailAt(u64);
        impl Observer for FailAt {
            type Error = u64;
            fn on_step(&mut self, s: &SearchState, _: &StepReport) -> Result<(), u64> {
                if s.generation() == self.0 {
                    Err(self.0)
                } else {
                    Ok(())
                }
            }
        }
        let cfg = surrogate_config(6, 100);
        let f = SurrogateFitness::new(Genome::new([1, 2, 3, 4, 5, 6, 7]).unwrap());
        let mut st = SearchState::initialize(&cfg, &f, 3).unwrap();
        assert_eq!(run(&mut st, &cfg, &f, &mut FailAt(7)), Err(7));
        assert_eq!(st.generation(), 7);
    }
}
