//! Steady-state genetic search over measure genomes.

mod operators;
mod population;
mod search;

pub use operators::{
    crossover, crossover_at, mutate, proportionate_draw, select_parents, select_with,
    SelectionMethod,
};
pub use population::{Individual, Population};
pub use search::{
    init_population, run, NoObserver, Observer, SearchConfig, SearchError, SearchState, StepEvent,
    StepReport, StopReason,
};
