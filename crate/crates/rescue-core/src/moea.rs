//! NSGA-II over a continuous configuration space, used to extract the
//! surrogate's inferred Pareto front.
//!
//! Constraints enter through a scalar violation (feasible when <= 0) and
//! Deb's constrained-domination rule. Alongside the evolving population the
//! optimizer keeps an unbounded archive of every feasible nondominated point
//! it has evaluated, so the hypervolume of the returned front never degrades
//! as generations pass.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::pareto::dominates;
use crate::space::ConfigSpace;
use crate::{Error, Result};

/// Evolutionary settings. Mutation probability is `1 / dim`, set internally.
#[derive(Debug, Clone, PartialEq)]
pub struct Nsga2Config {
    pub population: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    pub crossover_eta: f64,
    pub mutation_eta: f64,
    pub seed: u64,
}

impl Default for Nsga2Config {
    fn default() -> Self {
        Nsga2Config {
            population: 100,
            generations: 50,
            crossover_prob: 0.9,
            crossover_eta: 15.0,
            mutation_eta: 20.0,
            seed: 0,
        }
    }
}

/// A candidate with its objective vector (minimization) and constraint
/// violation (feasible when <= 0).
#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub x: Vec<f64>,
    pub objectives: Vec<f64>,
    pub violation: f64,
}

impl Individual {
    pub fn is_feasible(&self) -> bool {
        self.violation <= 0.0
    }
}

/// Final population and the feasible elite archive.
#[derive(Debug, Clone)]
pub struct Nsga2Result {
    pub archive: Vec<Individual>,
    pub population: Vec<Individual>,
}

/// Deb's constrained domination: feasible beats infeasible, less violated
/// beats more violated, and between feasible points ordinary Pareto
/// domination decides.
fn constrained_dominates(a: &Individual, b: &Individual) -> bool {
    let va = a.violation.max(0.0);
    let vb = b.violation.max(0.0);
    if va == 0.0 && vb == 0.0 {
        dominates(&a.objectives, &b.objectives)
    } else {
        va < vb
    }
}

/// Partition indices into nondomination fronts (best first).
pub fn fast_non_dominated_sort(individuals: &[Individual]) -> Vec<Vec<usize>> {
    let n = individuals.len();
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut domination_count = vec![0usize; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if constrained_dominates(&individuals[i], &individuals[j]) {
                dominated_by[i].push(j);
            } else if constrained_dominates(&individuals[j], &individuals[i]) {
                domination_count[i] += 1;
            }
        }
    }
    let mut fronts: Vec<Vec<usize>> = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| domination_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated_by[i] {
                domination_count[j] -= 1;
                if domination_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        fronts.push(std::mem::take(&mut current));
        current = next;
    }
    fronts
}

/// Crowding distance of each member of one front; boundary points get
/// infinity. Objectives with no spread contribute nothing.
pub fn crowding_distance(objectives: &[Vec<f64>]) -> Vec<f64> {
    let n = objectives.len();
    let mut distance = vec![0.0; n];
    if n == 0 {
        return distance;
    }
    let m = objectives[0].len();
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    for k in 0..m {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| objectives[a][k].total_cmp(&objectives[b][k]));
        let lo = objectives[order[0]][k];
        let hi = objectives[order[n - 1]][k];
        distance[order[0]] = f64::INFINITY;
        distance[order[n - 1]] = f64::INFINITY;
        if hi - lo <= 0.0 {
            continue;
        }
        for w in 1..n - 1 {
            let spread = objectives[order[w + 1]][k] - objectives[order[w - 1]][k];
            distance[order[w]] += spread / (hi - lo);
        }
    }
    distance
}

/// Add to the archive if feasible and not dominated there; evict anything the
/// newcomer dominates. Exact duplicates in objective space are dropped.
fn archive_insert(archive: &mut Vec<Individual>, candidate: &Individual) {
    if !candidate.is_feasible() {
        return;
    }
    for kept in archive.iter() {
        if dominates(&kept.objectives, &candidate.objectives)
            || kept.objectives == candidate.objectives
        {
            return;
        }
    }
    archive.retain(|kept| !dominates(&candidate.objectives, &kept.objectives));
    archive.push(candidate.clone());
}

fn sbx_pair(
    p1: &[f64],
    p2: &[f64],
    space: &ConfigSpace,
    config: &Nsga2Config,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, Vec<f64>) {
    let mut c1 = p1.to_vec();
    let mut c2 = p2.to_vec();
    if rng.gen_range(0.0..1.0) < config.crossover_prob {
        for (k, &(lo, hi)) in space.bounds().iter().enumerate() {
            if rng.gen_range(0.0..1.0) < 0.5 {
                continue;
            }
            let u: f64 = rng.gen_range(0.0..1.0);
            let beta = if u <= 0.5 {
                (2.0 * u).powf(1.0 / (config.crossover_eta + 1.0))
            } else {
                (1.0 / (2.0 * (1.0 - u))).powf(1.0 / (config.crossover_eta + 1.0))
            };
            let a = 0.5 * ((1.0 + beta) * p1[k] + (1.0 - beta) * p2[k]);
            let b = 0.5 * ((1.0 - beta) * p1[k] + (1.0 + beta) * p2[k]);
            c1[k] = a.clamp(lo, hi);
            c2[k] = b.clamp(lo, hi);
        }
    }
    (c1, c2)
}

fn polynomial_mutation(x: &mut [f64], space: &ConfigSpace, eta: f64, rng: &mut ChaCha8Rng) {
    let p = 1.0 / x.len() as f64;
    for (k, &(lo, hi)) in space.bounds().iter().enumerate() {
        if rng.gen_range(0.0..1.0) >= p {
            continue;
        }
        let u: f64 = rng.gen_range(0.0..1.0);
        let delta = if u < 0.5 {
            (2.0 * u).powf(1.0 / (eta + 1.0)) - 1.0
        } else {
            1.0 - (2.0 * (1.0 - u)).powf(1.0 / (eta + 1.0))
        };
        x[k] = (x[k] + delta * (hi - lo)).clamp(lo, hi);
    }
}

/// Binary tournament on (front rank, crowding distance).
fn tournament(ranks: &[usize], crowding: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let n = ranks.len();
    let a = rng.gen_range(0..n);
    let b = rng.gen_range(0..n);
    if ranks[a] < ranks[b] || (ranks[a] == ranks[b] && crowding[a] > crowding[b]) {
        a
    } else {
        b
    }
}

/// Run NSGA-II. `eval` maps a configuration to (objectives, violation); its
/// errors abort the run.
pub fn nsga2_optimize<F>(
    space: &ConfigSpace,
    mut eval: F,
    config: &Nsga2Config,
) -> Result<Nsga2Result>
where
    F: FnMut(&[f64]) -> Result<(Vec<f64>, f64)>,
{
    if config.population < 4 || config.population % 2 != 0 {
        return Err(Error::config(
            "population size must be an even number of at least 4",
        ));
    }
    if !(0.0..=1.0).contains(&config.crossover_prob) {
        return Err(Error::config("crossover probability must lie in [0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut archive: Vec<Individual> = Vec::new();

    let make = |x: Vec<f64>, eval: &mut F, archive: &mut Vec<Individual>| -> Result<Individual> {
        let (objectives, violation) = eval(&x)?;
        if objectives.iter().any(|v| !v.is_finite()) || !violation.is_finite() {
            return Err(Error::domain(
                "objective evaluation produced a non-finite value",
            ));
        }
        let individual = Individual {
            x,
            objectives,
            violation,
        };
        archive_insert(archive, &individual);
        Ok(individual)
    };

    let mut population: Vec<Individual> = Vec::with_capacity(config.population);
    for _ in 0..config.population {
        let x: Vec<f64> = space
            .bounds()
            .iter()
            .map(|&(lo, hi)| rng.gen_range(lo..=hi))
            .collect();
        population.push(make(x, &mut eval, &mut archive)?);
    }

    for _ in 0..config.generations {
        let fronts = fast_non_dominated_sort(&population);
        let mut ranks = vec![0usize; population.len()];
        let mut crowding = vec![0.0; population.len()];
        for (rank, front) in fronts.iter().enumerate() {
            let objs: Vec<Vec<f64>> = front
                .iter()
                .map(|&i| population[i].objectives.clone())
                .collect();
            let dist = crowding_distance(&objs);
            for (w, &i) in front.iter().enumerate() {
                ranks[i] = rank;
                crowding[i] = dist[w];
            }
        }

        let mut offspring = Vec::with_capacity(config.population);
        while offspring.len() < config.population {
            let pa = tournament(&ranks, &crowding, &mut rng);
            let pb = tournament(&ranks, &crowding, &mut rng);
            let (mut c1, mut c2) = sbx_pair(
                &population[pa].x,
                &population[pb].x,
                space,
                config,
                &mut rng,
            );
            polynomial_mutation(&mut c1, space, config.mutation_eta, &mut rng);
            polynomial_mutation(&mut c2, space, config.mutation_eta, &mut rng);
            offspring.push(make(c1, &mut eval, &mut archive)?);
            offspring.push(make(c2, &mut eval, &mut archive)?);
        }

        let mut combined = population;
        combined.append(&mut offspring);
        let fronts = fast_non_dominated_sort(&combined);
        let mut next: Vec<Individual> = Vec::with_capacity(config.population);
        for front in fronts {
            let remaining = config.population - next.len();
            if remaining == 0 {
                break;
            }
            if front.len() <= remaining {
                next.extend(front.iter().map(|&i| combined[i].clone()));
            } else {
                let objs: Vec<Vec<f64>> = front
                    .iter()
                    .map(|&i| combined[i].objectives.clone())
                    .collect();
                let dist = crowding_distance(&objs);
                let mut order: Vec<usize> = (0..front.len()).collect();
                order.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]));
                next.extend(order[..remaining].iter().map(|&w| combined[front[w]].clone()));
            }
        }
        population = next;
    }

    Ok(Nsga2Result {
        archive,
        population,
    })
}
