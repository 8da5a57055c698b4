//! Differential-evolution population and the mutation, crossover and
//! selection operators (current-to-pbest/1, binomial crossover, one-to-one
//! greedy selection).

use rand::Rng;

use crate::benchfn::Objective;
use crate::error::{invalid, Result};

pub const MIN_POPULATION: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    pub members: Vec<Vec<f64>>,
    /// Raw objective values, minimized.
    pub fitness: Vec<f64>,
    pub generation: usize,
}

impl Population {
    pub fn new(members: Vec<Vec<f64>>, fitness: Vec<f64>) -> Result<Self> {
        if members.len() != fitness.len() {
            return Err(invalid("members and fitness lengths differ"));
        }
        if members.len() < MIN_POPULATION {
            return Err(invalid(format!(
                "population size {} below minimum {MIN_POPULATION}",
                members.len()
            )));
        }
        Ok(Population {
            members,
            fitness,
            generation: 0,
        })
    }

    /// Draws `size` points uniformly in the unit cube; [`place`](Self::place) maps them into a box.
    pub fn unit_sample<R: Rng + ?Sized>(size: usize, dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
        (0..size)
            .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
            .collect()
    }

    /// Maps unit-cube points into `f`'s box and evaluates them.
    pub fn place<O: Objective + ?Sized>(unit: &[Vec<f64>], f: &O) -> Result<Self> {
        let members: Vec<Vec<f64>> = unit
            .iter()
            .map(|u| {
                u.iter()
                    .zip(f.bounds())
                    .map(|(t, &(lo, hi))| lo + t * (hi - lo))
                    .collect()
            })
            .collect();
        let fitness = members
            .iter()
            .map(|x| f.evaluate(x))
            .collect::<Result<Vec<_>>>()?;
        Population::new(members, fitness)
    }

    pub fn random<O: Objective + ?Sized, R: Rng + ?Sized>(
        f: &O,
        size: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Population::place(&Population::unit_sample(size, f.dim(), rng), f)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn best_index(&self) -> usize {
        self.fitness
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    pub fn best_fitness(&self) -> f64 {
        self.fitness[self.best_index()]
    }

    /// Indices sorted by ascending fitness (ties keep index order).
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.fitness[a].total_cmp(&self.fitness[b]));
        idx
    }
}

/// Per-individual scale factors and crossover rates for one generation.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSheet {
    pub f: Vec<f64>,
    pub cr: Vec<f64>,
}

impl ParamSheet {
    pub fn uniform(n: usize, f: f64, cr: f64) -> Self {
        ParamSheet {
            f: vec![f; n],
            cr: vec![cr; n],
        }
    }

    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }
}

/// Size of the pbest candidate pool: `ceil(N·p)`, at least 1.
pub fn pbest_count(n: usize, p: f64) -> usize {
    ((n as f64 * p).ceil() as usize).clamp(1, n)
}

/// Draws `(pbest, r1, r2)` for target `i`: pbest uniform over `pool`,
/// `r1`, `r2` uniform without replacement from indices other than `i`.
pub fn draw_indices<R: Rng + ?Sized>(
    n: usize,
    i: usize,
    pool: &[usize],
    rng: &mut R,
) -> (usize, usize, usize) {
    let pbest = pool[rng.random_range(0..pool.len())];
    let mut r1 = rng.random_range(0..n - 1);
    if r1 >= i {
        r1 += 1;
    }
    let mut r2 = rng.random_range(0..n - 2);
    let (lo, hi) = if i < r1 { (i, r1) } else { (r1, i) };
    if r2 >= lo {
        r2 += 1;
    }
    if r2 >= hi {
        r2 += 1;
    }
    (pbest, r1, r2)
}

/// `x + F·(pbest − x) + F·(r1 − r2)` for one target.
pub fn current_to_pbest(x: &[f64], pbest: &[f64], r1: &[f64], r2: &[f64], f: f64) -> Vec<f64> {
    x.iter()
        .zip(pbest)
        .zip(r1.iter().zip(r2))
        .map(|((&xi, &pb), (&a, &b))| xi + f * (pb - xi) + f * (a - b))
        .collect()
}

/// Current-to-pbest/1 mutants for the whole population. Mutants are not bound-repaired.
pub fn mutate_current_to_pbest<R: Rng + ?Sized>(
    pop: &Population,
    params: &ParamSheet,
    p: f64,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let n = pop.len();
    if n < MIN_POPULATION {
        return Err(invalid(format!(
            "current-to-pbest/1 needs N ≥ {MIN_POPULATION}, got {n}"
        )));
    }
    if params.len() != n {
        return Err(invalid("parameter sheet length differs from population"));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(invalid(format!("p = {p} outside (0, 1]")));
    }
    let ranking = pop.ranking();
    let pool = &ranking[..pbest_count(n, p)];
    Ok((0..n)
        .map(|i| {
            let (pb, r1, r2) = draw_indices(n, i, pool, rng);
            let m = &pop.members;
            current_to_pbest(&m[i], &m[pb], &m[r1], &m[r2], params.f[i])
        })
        .collect())
}

/// Binomial crossover from explicit draws: `rands[j]` is the uniform number
/// for coordinate `j`, `j_rand` the forced coordinate (0-based).
pub fn binomial_crossover_with(
    target: &[f64],
    mutant: &[f64],
    cr: f64,
    j_rand: usize,
    rands: impl IntoIterator<Item = f64>,
) -> Vec<f64> {
    target
        .iter()
        .zip(mutant)
        .zip(rands)
        .enumerate()
        .map(|(j, ((&t, &m), u))| if u <= cr || j == j_rand { m } else { t })
        .collect()
}

pub fn binomial_crossover<R: Rng + ?Sized>(
    target: &[f64],
    mutant: &[f64],
    cr: f64,
    rng: &mut R,
) -> Vec<f64> {
    let n = target.len();
    let j_rand = rng.random_range(0..n);
    let rands: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    binomial_crossover_with(target, mutant, cr, j_rand, rands)
}

pub fn repair_bounds(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(lo, hi);
    }
}

/// One-to-one selection; a trial replaces its target when not worse.
pub fn select(
    mut pop: Population,
    trials: Vec<Vec<f64>>,
    trial_fitness: &[f64],
) -> Result<Population> {
    if trials.len() != pop.len() || trial_fitness.len() != pop.len() {
        return Err(invalid("trial count differs from population"));
    }
    for (i, (trial, &ft)) in trials.into_iter().zip(trial_fitness).enumerate() {
        if ft <= pop.fitness[i] {
            pop.members[i] = trial;
            pop.fitness[i] = ft;
        }
    }
    pop.generation += 1;
    Ok(pop)
}

/// Crossover, repair and evaluation of a batch of mutants against `pop`.
pub fn make_trials<O: Objective + ?Sized, R: Rng + ?Sized>(
    pop: &Population,
    mutants: &[Vec<f64>],
    cr: &[f64],
    f: &O,
    rng: &mut R,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let trials: Vec<Vec<f64>> = pop
        .members
        .iter()
        .zip(mutants)
        .zip(cr)
        .map(|((x, v), &c)| {
            let mut t = binomial_crossover(x, v, c, rng);
            repair_bounds(&mut t, f.bounds());
            t
        })
        .collect();
    let fitness = trials
        .iter()
        .map(|t| f.evaluate(t))
        .collect::<Result<Vec<_>>>()?;
    Ok((trials, fitness))
}
