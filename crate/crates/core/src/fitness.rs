//! Early-rejection fitness, the rising threshold schedule and a surrogate landscape.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::sync::atomic::{AtomicUsize, Ordering};

use crate::bnn::{TrainConfig, TrainError, Trainer};
use crate::dataset::Dataset;
use crate::measure::{Genome, MeasureExpr, GENOME_LEN};

/// Rejection thresholds per stage for a 10-class problem.
pub const BASE_THRESHOLDS: [f64; 4] = [0.11, 0.25, 0.35, 0.40];
/// Upper clamp for scaled thresholds.
pub const MAX_THRESHOLD: f64 = 0.95;
/// Chance accuracy the base thresholds were set against.
pub const REFERENCE_CHANCE: f64 = 0.1;

/// Outcome of evaluating one genome.
#[derive(Clone, Debug, PartialEq)]
pub struct FitnessRecord {
    pub genome: Genome,
    /// Validation top-1 accuracy after each evaluated epoch.
    pub accuracy_trace: Vec<f64>,
    pub fitness: f64,
    pub rejected: bool,
    pub threshold_used: f64,
    /// Seconds spent evaluating; zero unless the caller measures it.
    pub wall_time: f64,
    /// Training produced a non-finite loss.
    pub diverged: bool,
    pub epochs_trained: u32,
}

impl FitnessRecord {
    /// Record for a candidate that completed without an early stop.
    pub fn accepted(genome: Genome, trace: Vec<f64>, threshold: f64) -> FitnessRecord {
        let fitness = trace.last().copied().unwrap_or(0.0);
        let epochs = trace.len() as u32;
        FitnessRecord {
            genome,
            accuracy_trace: trace,
            fitness,
            rejected: false,
            threshold_used: threshold,
            wall_time: 0.0,
            diverged: false,
            epochs_trained: epochs,
        }
    }

    /// Record assigned to a genome whose evaluation failed outright.
    pub fn failed(genome: Genome, threshold: f64) -> FitnessRecord {
        FitnessRecord {
            genome,
            accuracy_trace: vec![0.0],
            fitness: 0.0,
            rejected: true,
            threshold_used: threshold,
            wall_time: 0.0,
            diverged: false,
            epochs_trained: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalFailure(pub String);

impl fmt::Display for EvalFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl core::error::Error for EvalFailure {}

/// A fitness function over genomes.
///
/// Implementations must be deterministic for a given `(genome, threshold)`.
/// `&self` lets callers evaluate distinct genomes from several threads.
pub trait FitnessFn {
    fn evaluate(&self, genome: &Genome, threshold: f64) -> Result<FitnessRecord, EvalFailure>;

    /// Evaluates several genomes; results are in input order.
    fn evaluate_batch(
        &self,
        genomes: &[Genome],
        threshold: f64,
    ) -> Vec<Result<FitnessRecord, EvalFailure>> {
        genomes
            .iter()
            .map(|g| self.evaluate(g, threshold))
            .collect()
    }
}

impl<F: FitnessFn + ?Sized> FitnessFn for &F {
    fn evaluate(&self, genome: &Genome, threshold: f64) -> Result<FitnessRecord, EvalFailure> {
        (**self).evaluate(genome, threshold)
    }

    fn evaluate_batch(
        &self,
        genomes: &[Genome],
        threshold: f64,
    ) -> Vec<Result<FitnessRecord, EvalFailure>> {
        (**self).evaluate_batch(genomes, threshold)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StageOutOfRange(pub usize);

impl fmt::Display for StageOutOfRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "threshold stage {} is outside 0..{}",
            self.0,
            BASE_THRESHOLDS.len()
        )
    }
}

impl core::error::Error for StageOutOfRange {}

/// `chance / 0.1` for a balanced `classes`-way problem.
pub fn chance_ratio(classes: u8) -> f64 {
    (1.0 / f64::from(classes.max(1))) / REFERENCE_CHANCE
}

/// Scales a base threshold to a dataset and clamps it to `[0, 0.95]`.
pub fn scale_threshold(base: f64, chance_ratio: f64) -> f64 {
    (base * chance_ratio).clamp(0.0, MAX_THRESHOLD)
}

/// Threshold for `stage` of the default schedule.
pub fn threshold_for(stage: usize, chance_ratio: f64) -> Result<f64, StageOutOfRange> {
    BASE_THRESHOLDS
        .get(stage)
        .map(|&t| scale_threshold(t, chance_ratio))
        .ok_or(StageOutOfRange(stage))
}

#[derive(Clone, Debug, PartialEq)]
pub enum ScheduleError {
    Empty,
    LengthMismatch,
    /// Milestones must start at 0 and be non-decreasing.
    BadMilestones,
    ThresholdRange,
}

impl fmt::Display for ScheduleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleError::Empty => "threshold schedule is empty",
            ScheduleError::LengthMismatch => "thresholds and milestones differ in length",
            ScheduleError::BadMilestones => "milestones must start at 0 and not decrease",
            ScheduleError::ThresholdRange => "thresholds must lie in [0, 1]",
        })
    }
}

impl core::error::Error for ScheduleError {}

/// Stage thresholds with the generation at which each stage begins.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdSchedule {
    thresholds: Vec<f64>,
    milestones: Vec<u64>,
}

impl ThresholdSchedule {
    pub fn new(thresholds: Vec<f64>, milestones: Vec<u64>) -> Result<Self, ScheduleError> {
        if thresholds.is_empty() {
            return Err(ScheduleError::Empty);
        }
        if thresholds.len() != milestones.len() {
            return Err(ScheduleError::LengthMismatch);
        }
        if milestones[0] != 0 || milestones.windows(2).any(|w| w[1] < w[0]) {
            return Err(ScheduleError::BadMilestones);
        }
        if thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(ScheduleError::ThresholdRange);
        }
        Ok(ThresholdSchedule {
            thresholds,
            milestones,
        })
    }

    /// Base thresholds scaled by `chance_ratio`, switching at quarters of `max_generations`.
    pub fn standard(max_generations: u64, chance_ratio: f64) -> ThresholdSchedule {
        ThresholdSchedule {
            thresholds: BASE_THRESHOLDS
                .iter()
                .map(|&t| scale_threshold(t, chance_ratio))
                .collect(),
            milestones: default_milestones(max_generations),
        }
    }

    /// One stage with a fixed threshold.
    pub fn constant(threshold: f64) -> ThresholdSchedule {
        ThresholdSchedule {
            thresholds: vec![threshold],
            milestones: vec![0],
        }
    }

    pub fn stages(&self) -> usize {
        self.thresholds.len()
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn milestones(&self) -> &[u64] {
        &self.milestones
    }

    pub fn threshold(&self, stage: usize) -> f64 {
        self.thresholds[stage.min(self.thresholds.len() - 1)]
    }

    /// Stage in force at `generation`.
    pub fn stage_at(&self, generation: u64) -> usize {
        self.milestones
            .iter()
            .rposition(|&m| generation >= m)
            .unwrap_or(0)
    }
}

/// `[0, G/4, G/2, 3G/4]`.
pub fn default_milestones(max_generations: u64) -> Vec<u64> {
    vec![
        0,
        max_generations / 4,
        max_generations / 2,
        3 * max_generations / 4,
    ]
}

/// `1 − hamming(genome, target) / 7`.
pub fn surrogate_evaluate(genome: &Genome, target: &Genome) -> f64 {
    1.0 - genome.hamming(target) as f64 / GENOME_LEN as f64
}

/// Fitness landscape with a single planted optimum, for testing the search.
#[derive(Debug)]
pub struct SurrogateFitness {
    target: Genome,
    calls: AtomicUsize,
}

impl SurrogateFitness {
    pub fn new(target: Genome) -> Self {
        SurrogateFitness {
            target,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn target(&self) -> Genome {
        self.target
    }

    /// Number of evaluations so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl FitnessFn for SurrogateFitness {
    fn evaluate(&self, genome: &Genome, threshold: f64) -> Result<FitnessRecord, EvalFailure> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let f = surrogate_evaluate(genome, &self.target);
        Ok(FitnessRecord::accepted(*genome, vec![f], threshold))
    }
}

/// Fitness from training the toy network with the candidate measure.
///
/// The model trains for `reject_epoch` epochs; if its validation accuracy
/// is then below the threshold the candidate is rejected with that accuracy
/// as its fitness. Otherwise training continues to `epochs` and the final
/// accuracy is the fitness.
#[derive(Clone, Debug)]
pub struct TrainedFitness {
    pub train: Dataset,
    pub validation: Dataset,
    pub config: TrainConfig,
}

impl TrainedFitness {
    pub fn new(train: Dataset, validation: Dataset, config: TrainConfig) -> Self {
        TrainedFitness {
            train,
            validation,
            config,
        }
    }

    pub fn chance_ratio(&self) -> f64 {
        chance_ratio(self.validation.num_classes())
    }
}

impl FitnessFn for TrainedFitness {
    fn evaluate(&self, genome: &Genome, threshold: f64) -> Result<FitnessRecord, EvalFailure> {
        let expr = MeasureExpr::decode(*genome);
        let mut trainer = Trainer::for_measure(self.config, &self.train, expr)
            .map_err(|e| EvalFailure(e.to_string()))?;
        let mut trace = Vec::new();
        for epoch in 1..=self.config.epochs {
            match trainer.train_epoch(&self.train) {
                Ok(_) => {}
                Err(TrainError::Diverged { .. }) => {
                    log::debug!("{genome}: training diverged in epoch {epoch}");
                    return Ok(FitnessRecord {
                        epochs_trained: trainer.epochs_run(),
                        diverged: true,
                        ..FitnessRecord::failed(*genome, threshold)
                    });
                }
                Err(e) => return Err(EvalFailure(e.to_string())),
            }
            let acc = trainer
                .validate(&self.validation)
                .map_err(|e| EvalFailure(e.to_string()))?;
            trace.push(acc);
            if epoch == self.config.reject_epoch && acc < threshold {
                return Ok(FitnessRecord {
                    genome: *genome,
                    accuracy_trace: trace,
                    fitness: acc,
                    rejected: true,
                    threshold_used: threshold,
                    wall_time: 0.0,
                    diverged: false,
                    epochs_trained: trainer.epochs_run(),
                });
            }
        }
        let mut rec = FitnessRecord::accepted(*genome, trace, threshold);
        rec.epochs_trained = trainer.epochs_run();
        Ok(rec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_stages() {
        assert_eq!(threshold_for(0, 1.0), Ok(0.11));
        assert_eq!(threshold_for(3, 1.0), Ok(0.40));
        assert_eq!(threshold_for(4, 1.0), Err(StageOutOfRange(4)));
        // two classes: chance 0.5, ratio 5; 0.25 * 5 is clamped
        let ratio = chance_ratio(2);
        assert!((ratio - 5.0).abs() < 1e-12);
        assert_eq!(threshold_for(1, ratio), Ok(MAX_THRESHOLD));
        assert!((threshold_for(0, ratio).unwrap() - 0.55).abs() < 1e-12);
    }

    #[test]
    fn schedule_stages() {
        let s = ThresholdSchedule::standard(500, 1.0);
        assert_eq!(s.milestones(), &[0, 125, 250, 375]);
        assert_eq!(s.stage_at(0), 0);
        assert_eq!(s.stage_at(124), 0);
        assert_eq!(s.stage_at(125), 1);
        assert_eq!(s.stage_at(10_000), 3);
        assert_eq!(s.threshold(2), 0.35);
        // G = 0 collapses every milestone to 0
        assert_eq!(ThresholdSchedule::standard(0, 1.0).stage_at(0), 3);
        assert_eq!(
            ThresholdSchedule::new(vec![0.1, 0.2], vec![5, 10]),
            Err(ScheduleError::BadMilestones)
        );
        assert_eq!(
            ThresholdSchedule::new(vec![0.1], vec![0, 1]),
            Err(ScheduleError::LengthMismatch)
        );
    }

    #[test]
    fn surrogate_landscape() {
        let target = Genome::new([3, 0, 3, 0, 0, 1, 6]).unwrap();
        assert_eq!(surrogate_evaluate(&target, &target), 1.0);
        let far = Genome::new([4, 1, 4, 1, 1, 2, 7]).unwrap();
        assert_eq!(surrogate_evaluate(&far, &target), 0.0);
        let near = target.with_gene(2, 9).unwrap();
        assert!((surrogate_evaluate(&near, &target) - 6.0 / 7.0).abs() < 1e-15);
        let s = SurrogateFitness::new(target);
        let r = s.evaluate(&near, 0.11).unwrap();
        assert!(!r.rejected && r.accuracy_trace.len() == 1);
        assert_eq!(s.calls(), 1);
    }
}
