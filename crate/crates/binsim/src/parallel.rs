use std::sync::Mutex;
use std::time::Instant;

use binsim_core::fitness::{EvalFailure, FitnessFn, FitnessRecord};
use binsim_core::Genome;
use rayon::prelude::*;

/// Times each evaluation, runs batches on the rayon pool and keeps a journal
/// of every record produced, in request order.
pub struct Evaluator<F> {
    inner: F,
    journal: Mutex<Vec<FitnessRecord>>,
}

impl<F: FitnessFn + Sync> Evaluator<F> {
    pub fn new(inner: F) -> Self {
        Evaluator {
            inner,
            journal: Mutex::new(Vec::new()),
        }
    }

    pub fn inner(&self) -> &F {
        &self.inner
    }

    /// Records produced since the last drain.
    pub fn drain(&self) -> Vec<FitnessRecord> {
        std::mem::take(&mut *self.journal.lock().expect("journal lock"))
    }

    fn timed(&self, genome: &Genome, threshold: f64) -> Result<FitnessRecord, EvalFailure> {
        let start = Instant::now();
        let mut rec = self.inner.evaluate(genome, threshold)?;
        rec.wall_time = start.elapsed().as_secs_f64();
        log::debug!(
            "{genome}: fitness {:.4}{} in {:.2}s",
            rec.fitness,
            if rec.rejected { " (rejected)" } else { "" },
            rec.wall_time
        );
        Ok(rec)
    }

    fn log(
        &self,
        results: &[Result<FitnessRecord, EvalFailure>],
        genomes: &[Genome],
        threshold: f64,
    ) {
        let mut j = self.journal.lock().expect("journal lock");
        for (r, g) in results.iter().zip(genomes) {
            j.push(match r {
                Ok(rec) => rec.clone(),
                Err(_) => FitnessRecord::failed(*g, threshold),
            });
        }
    }
}

impl<F: FitnessFn + Sync> FitnessFn for Evaluator<F> {
    fn evaluate(&self, genome: &Genome, threshold: f64) -> Result<FitnessRecord, EvalFailure> {
        let r = self.timed(genome, threshold);
        self.log(
            std::slice::from_ref(&r),
            std::slice::from_ref(genome),
            threshold,
        );
        r
    }

    fn evaluate_batch(
        &self,
        genomes: &[Genome],
        threshold: f64,
    ) -> Vec<Result<FitnessRecord, EvalFailure>> {
        let results: Vec<_> = genomes
            .par_iter()
            .map(|g| self.timed(g, threshold))
            .collect();
        self.log(&results, genomes, threshold);
        results
    }
}
