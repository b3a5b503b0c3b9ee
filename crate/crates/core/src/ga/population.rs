use alloc::vec::Vec;

use crate::fitness::FitnessRecord;
use crate::measure::Genome;

/// A genome with its fitness.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Individual {
    pub genome: Genome,
    pub fitness: f64,
    pub rejected: bool,
    /// Epochs with a recorded validation accuracy.
    pub evaluated_epochs: u32,
}

impl Individual {
    pub fn from_record(record: &FitnessRecord) -> Individual {
        Individual {
            genome: record.genome,
            fitness: record.fitness.clamp(0.0, 1.0),
            rejected: record.rejected,
            evaluated_epochs: record.accuracy_trace.len() as u32,
        }
    }
}

/// Fixed-size population kept in descending fitness order.
///
/// Equal fitness keeps insertion order: a newcomer goes after every member
/// it ties with.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Population {
    members: Vec<Individual>,
}

impl Population {
    /// Sorts `members` by fitness, stable for ties.
    pub fn from_unsorted(mut members: Vec<Individual>) -> Population {
        members.sort_by(|x, y| y.fitness.total_cmp(&x.fitness));
        Population { members }
    }

    pub fn members(&self) -> &[Individual] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn best(&self) -> Option<&Individual> {
        self.members.first()
    }

    pub fn worst(&self) -> Option<&Individual> {
        self.members.last()
    }

    pub fn contains(&self, genome: &Genome) -> bool {
        self.members.iter().any(|m| &m.genome == genome)
    }

    /// Median fitness; the mean of the two middle members for even sizes.
    pub fn median(&self) -> f64 {
        let n = self.members.len();
        if n == 0 {
            return 0.0;
        }
        if n % 2 == 1 {
            self.members[n / 2].fitness
        } else {
            0.5 * (self.members[n / 2 - 1].fitness + self.members[n / 2].fitness)
        }
    }

    /// Inserts at its rank; returns the index it landed at.
    pub fn insert(&mut self, ind: Individual) -> usize {
        let at = self
            .members
            .iter()
            .position(|m| m.fitness < ind.fitness)
            .unwrap_or(self.members.len());
        self.members.insert(at, ind);
        at
    }

    pub fn pop_worst(&mut self) -> Option<Individual> {
        self.members.pop()
    }

    pub fn is_sorted(&self) -> bool {
        self.members
            .windows(2)
            .all(|w| w[0].fitness >= w[1].fitness)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn ind(gene: u8, fitness: f64) -> Individual {
        Individual {
            genome: Genome::new([gene, 0, 0, 0, 0, 0, 0]).unwrap(),
            fitness,
            rejected: false,
            evaluated_epochs: 1,
        }
    }

    #[test]
    fn sorting_is_stable() {
        let p = Population::from_unsorted(vec![ind(1, 0.5), ind(2, 0.9), ind(3, 0.5)]);
        let genes: Vec<u8> = p.members().iter().map(|m| m.genome.gene(0)).collect();
        assert_eq!(genes, [2, 1, 3]);
        assert!(p.is_sorted());
    }

    #[test]
    fn insert_goes_after_ties() {
        let mut p = Population::from_unsorted(vec![ind(1, 0.9), ind(2, 0.5), ind(3, 0.1)]);
        assert_eq!(p.insert(ind(4, 0.5)), 2);
        assert_eq!(p.insert(ind(5, 1.0)), 0);
        assert_eq!(p.insert(ind(6, 0.0)), 5);
        assert!(p.is_sorted());
        assert_eq!(p.median(), 0.5);
    }
}
