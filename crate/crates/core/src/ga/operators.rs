//! Selection, single-point crossover and single-point mutation.

use rand::Rng;

use super::population::{Individual, Population};
use crate::measure::{Genome, GENOME_LEN};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SelectionMethod {
    /// The two best members.
    Elitism,
    /// A uniform member, then a uniform member ranked below it.
    Tournament,
    /// Two draws with probability proportional to fitness.
    Proportionate,
}

impl SelectionMethod {
    pub const ALL: [SelectionMethod; 3] = [
        SelectionMethod::Elitism,
        SelectionMethod::Tournament,
        SelectionMethod::Proportionate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SelectionMethod::Elitism => "elitism",
            SelectionMethod::Tournament => "tournament",
            SelectionMethod::Proportionate => "proportionate",
        }
    }
}

/// Picks one of the three methods uniformly, then two parents with it.
///
/// Panics if the population has fewer than two members.
pub fn select_parents<'p, R: Rng + ?Sized>(
    population: &'p Population,
    rng: &mut R,
) -> (SelectionMethod, &'p Individual, &'p Individual) {
    let method = SelectionMethod::ALL[rng.gen_range(0..SelectionMethod::ALL.len())];
    let (i, j) = select_with(method, population, rng);
    let m = population.members();
    (method, &m[i], &m[j])
}

/// Parent indices chosen by `method`.
pub fn select_with<R: Rng + ?Sized>(
    method: SelectionMethod,
    population: &Population,
    rng: &mut R,
) -> (usize, usize) {
    let s = population.len();
    assert!(s >= 2, "selection needs at least two members");
    match method {
        SelectionMethod::Elitism => (0, 1),
        SelectionMethod::Tournament => {
            // the last member has nothing ranked below it
            let first = loop {
                let i = rng.gen_range(0..s);
                if i + 1 < s {
                    break i;
                }
            };
            (first, rng.gen_range(first + 1..s))
        }
        SelectionMethod::Proportionate => {
            let i = proportionate_draw(population, rng.gen::<f64>());
            let j = proportionate_draw(population, rng.gen::<f64>());
            (i, j)
        }
    }
}

/// Member whose normalized cumulative fitness first reaches `u ∈ [0, 1)`.
///
/// A population with zero total fitness is treated as uniform.
pub fn proportionate_draw(population: &Population, u: f64) -> usize {
    let m = population.members();
    let total: f64 = m.iter().map(|x| x.fitness).sum();
    if total <= 0.0 {
        return ((u * m.len() as f64) as usize).min(m.len() - 1);
    }
    let mut cumulative = 0.0;
    for (i, x) in m.iter().enumerate() {
        cumulative += x.fitness / total;
        if x.fitness > 0.0 && u < cumulative {
            return i;
        }
    }
    // rounding can leave the last cumulative value just under 1
    m.iter()
        .rposition(|x| x.fitness > 0.0)
        .unwrap_or(m.len() - 1)
}

/// `p1[..k] + p2[k..]` when `left_from_first`, otherwise `p2[..k] + p1[k..]`.
pub fn crossover_at(p1: &Genome, p2: &Genome, k: usize, left_from_first: bool) -> Genome {
    let (left, right) = if left_from_first { (p1, p2) } else { (p2, p1) };
    let mut genes = right.genes();
    genes[..k].copy_from_slice(&left.genes()[..k]);
    Genome::new(genes).expect("splice of valid genomes")
}

/// Single-point crossover with `k` uniform in `0..7` and a fair orientation coin.
pub fn crossover<R: Rng + ?Sized>(p1: &Genome, p2: &Genome, rng: &mut R) -> Genome {
    let k = rng.gen_range(0..GENOME_LEN);
    let left_from_first = rng.gen_range(0..2) == 1;
    crossover_at(p1, p2, k, left_from_first)
}

/// Replaces gene `m` with a uniform draw from that gene's operator table.
pub fn mutate<R: Rng + ?Sized>(g: &Genome, rng: &mut R) -> Genome {
    let m = rng.gen_range(0..GENOME_LEN);
    let value = rng.gen_range(0..Genome::domain(m)) as u8;
    g.with_gene(m, value).expect("draw within domain")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::SeedRng;
    use alloc::vec::Vec;
    use rand::SeedableRng;

    fn pop(fitness: &[f64]) -> Population {
        Population::from_unsorted(
            fitness
                .iter()
                .enumerate()
                .map(|(i, &f)| Individual {
                    genome: Genome::new([i as u8, 0, 0, 0, 0, 0, 0]).unwrap(),
                    fitness: f,
                    rejected: false,
                    evaluated_epochs: 1,
                })
                .collect(),
        )
    }

    #[test]
    fn elitism_takes_top_two() {
        let p = pop(&[0.2, 0.9, 0.5]);
        let mut rng = SeedRng::seed_from_u64(1);
        assert_eq!(select_with(SelectionMethod::Elitism, &p, &mut rng), (0, 1));
    }

    #[test]
    fn tournament_second_ranks_below_first() {
        let p = pop(&[0.9, 0.8, 0.7, 0.6, 0.5]);
        let mut rng = SeedRng::seed_from_u64(3);
        for _ in 0..2000 {
            let (i, j) = select_with(SelectionMethod::Tournament, &p, &mut rng);
            assert!(i < 4 && j > i && j < 5);
        }
        // with two members the first draw must land on index 0
        let p2 = pop(&[0.9, 0.1]);
        for _ in 0..100 {
            assert_eq!(
                select_with(SelectionMethod::Tournament, &p2, &mut rng),
                (0, 1)
            );
        }
    }

    #[test]
    fn proportionate_degenerate_mass() {
        let p = pop(&[0.0, 0.7, 0.0]);
        for k in 0..100 {
            assert_eq!(proportionate_draw(&p, k as f64 / 100.0), 0);
        }
        assert_eq!(proportionate_draw(&p, 0.999_999_999), 0);
        let flat = pop(&[0.0, 0.0]);
        assert_eq!(proportionate_draw(&flat, 0.75), 1);
    }

    #[test]
    fn proportionate_frequencies_follow_fitness() {
        let p = pop(&[0.6, 0.3, 0.1]);
        let mut rng = SeedRng::seed_from_u64(11);
        let mut hist = [0usize; 3];
        let draws = 30_000;
        for _ in 0..draws {
            let (i, j) = select_with(SelectionMethod::Proportionate, &p, &mut rng);
            hist[i] += 1;
            hist[j] += 1;
        }
        for (h, want) in hist.iter().zip([0.6, 0.3, 0.1]) {
            let got = *h as f64 / (2 * draws) as f64;
            assert!((got - want).abs() < 0.01, "{got} vs {want}");
        }
    }

    #[test]
    fn crossover_examples() {
        let base = Genome::BASELINE;
        let m1 = Genome::new([3, 0, 3, 0, 0, 1, 6]).unwrap();
        assert_eq!(crossover_at(&base, &m1, 0, true), m1);
        assert_eq!(
            crossover_at(&base, &m1, 4, true).genes(),
            [0, 0, 0, 0, 0, 1, 6]
        );
        assert_eq!(
            crossover_at(&base, &m1, 4, false).genes(),
            [3, 0, 3, 0, 0, 0, 1]
        );
        let mut rng = SeedRng::seed_from_u64(5);
        for _ in 0..50 {
            assert_eq!(crossover(&m1, &m1, &mut rng), m1);
        }
    }

    #[test]
    fn mutation_is_local_and_in_domain() {
        let mut rng = SeedRng::seed_from_u64(9);
        let mut touched = [false; GENOME_LEN];
        let mut values: Vec<Vec<u8>> = alloc::vec![Vec::new(); GENOME_LEN];
        for _ in 0..5000 {
            let g = mutate(&Genome::BASELINE, &mut rng);
            assert!(g.hamming(&Genome::BASELINE) <= 1);
            for pos in 0..GENOME_LEN {
                if g.gene(pos) != Genome::BASELINE.gene(pos) {
                    touched[pos] = true;
                    values[pos].push(g.gene(pos));
                }
            }
        }
        assert!(touched.iter().all(|&t| t));
        assert!(values[0].iter().any(|&v| v > 13));
        assert!(values[6].iter().all(|&v| v < 14));
    }
}
