//! Genetic search for low-utilization routings.
//!
//! A chromosome holds one x-path label per flow. Each generation is scored
//! by residual link capacity (with a penalty on overload), parents are drawn
//! by roulette wheel, the best chromosome is carried over untouched, and the
//! rest are recombined by uniform crossover and multipoint mutation. The
//! mutation rate jumps to its maximum while the best fitness stalls.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::ecmp::ecmp_label;
use crate::routing::{RoutingAssignment, Utilization, DEFAULT_MU_TARGET};
use crate::topology::{Bandwidth, Topology};
use crate::traffic::{FlowId, FlowSet};
use crate::xpath::{PathLabel, XPathTable};

/// Probability that a child inherits a gene from its own-side parent.
pub const CROSSOVER_MIX: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum GaError {
    #[error("flow {0} has no feasible path")]
    NoFeasiblePath(FlowId),
    #[error("flow {flow}: label {label} is not a feasible path")]
    InfeasibleGene { flow: FlowId, label: PathLabel },
    #[error("chromosome has {got} genes for {expected} flows")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    /// `None` picks `ceil(sqrt(flows * log2(switches)))`, at least 2.
    pub population_size: Option<usize>,
    pub max_iterations: usize,
    pub mut_min: f64,
    pub mut_max: f64,
    /// Generations without fitness improvement before switching to `mut_max`.
    pub stall_window: usize,
    pub mu_target: f64,
    /// Fitness lost per unit of overload; `None` uses the switch count.
    pub penalty: Option<f64>,
    /// Seed one chromosome with hashed shortest paths.
    pub seed_shortest: bool,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population_size: None,
            max_iterations: 100,
            mut_min: 0.02,
            mut_max: 0.2,
            stall_window: 10,
            mu_target: DEFAULT_MU_TARGET,
            penalty: None,
            seed_shortest: true,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<(), GaError> {
        if !(self.mut_min > 0.0 && self.mut_min <= self.mut_max && self.mut_max <= 1.0) {
            return Err(GaError::Config(format!(
                "need 0 < mut_min <= mut_max <= 1, got {} and {}",
                self.mut_min, self.mut_max
            )));
        }
        if self.population_size.is_some_and(|n| n < 2) {
            return Err(GaError::Config("population size must be at least 2".into()));
        }
        if self.max_iterations == 0 {
            return Err(GaError::Config("max_iterations must be at least 1".into()));
        }
        if !(self.mu_target > 0.0) {
            return Err(GaError::Config("mu_target must be positive".into()));
        }
        if self.penalty.is_some_and(|p| !(p.is_finite() && p >= 0.0)) {
            return Err(GaError::Config("penalty must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn population_for(&self, n_flows: usize, n_switches: usize) -> usize {
        self.population_size
            .unwrap_or_else(|| default_population_size(n_flows, n_switches))
    }

    pub fn penalty_for(&self, topology: &Topology) -> f64 {
        self.penalty.unwrap_or(topology.node_count() as f64)
    }
}

pub fn default_population_size(n_flows: usize, n_switches: usize) -> usize {
    let log = (n_switches.max(2) as f64).log2();
    ((n_flows as f64 * log).sqrt().ceil() as usize).max(2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chromosome {
    pub genes: Vec<PathLabel>,
    pub cached_fitness: Option<f64>,
}

impl Chromosome {
    pub fn new(genes: Vec<PathLabel>) -> Self {
        Self {
            genes,
            cached_fitness: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub members: Vec<Chromosome>,
    pub generation: usize,
}

/// Shared read-only data for scoring chromosomes.
struct Scorer<'a> {
    table: &'a XPathTable,
    capacity: Vec<Bandwidth>,
    demands: Vec<Bandwidth>,
    penalty: f64,
}

impl<'a> Scorer<'a> {
    fn new(flows: &FlowSet, table: &'a XPathTable, topology: &Topology, penalty: f64) -> Self {
        Self {
            table,
            capacity: topology.links().iter().map(|l| l.capacity).collect(),
            demands: flows.flows().iter().map(|f| f.demand).collect(),
            penalty,
        }
    }

    fn score(&self, genes: &[PathLabel], load: &mut Vec<Bandwidth>) -> (f64, Utilization) {
        load.clear();
        load.resize(self.capacity.len(), 0);
        crate::routing::accumulate_loads(genes, &self.demands, self.table, load);
        let mut residual: i128 = 0;
        let mut overload: u128 = 0;
        let mut mu = Utilization::ZERO;
        for (&l, &c) in load.iter().zip(&self.capacity) {
            residual += c as i128 - l as i128;
            overload += l.saturating_sub(c) as u128;
            mu = mu.max(Utilization::new(l, c));
        }
        (residual as f64 - self.penalty * overload as f64, mu)
    }
}

fn check_genes(genes: &[PathLabel], flows: &FlowSet, table: &XPathTable) -> Result<(), GaError> {
    if genes.len() != flows.len() {
        return Err(GaError::LengthMismatch {
            expected: flows.len(),
            got: genes.len(),
        });
    }
    for (f, &label) in flows.flows().iter().zip(genes) {
        if !table.feasible_labels(f.src, f.dst).contains(&label) {
            return Err(GaError::InfeasibleGene { flow: f.id, label });
        }
    }
    Ok(())
}

/// Total residual capacity over all links, minus `penalty` per unit of
/// overload. Higher is better.
pub fn fitness(
    chromosome: &Chromosome,
    flows: &FlowSet,
    table: &XPathTable,
    topology: &Topology,
    penalty: f64,
) -> Result<f64, GaError> {
    check_genes(&chromosome.genes, flows, table)?;
    let scorer = Scorer::new(flows, table, topology, penalty);
    Ok(scorer.score(&chromosome.genes, &mut Vec::new()).0)
}

/// Fitness-proportionate wheel over a population.
#[derive(Debug, Clone)]
pub struct RouletteWheel {
    // normalized running sums; the last entry is 1
    cumulative: Vec<f64>,
}

impl RouletteWheel {
    /// Builds the wheel. When any fitness is non-positive, all values are
    /// shifted by `-min + epsilon` first.
    pub fn new(fitnesses: &[f64], epsilon: f64) -> Self {
        debug_assert!(fitnesses.iter().all(|f| f.is_finite()));
        let min = fitnesses.iter().copied().fold(f64::INFINITY, f64::min);
        let shift = if min <= 0.0 { -min + epsilon } else { 0.0 };
        let weights: Vec<f64> = fitnesses.iter().map(|f| f + shift).collect();
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        Self { cumulative }
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.cumulative
            .iter()
            .map(|&c| {
                let p = c - prev;
                prev = c;
                p
            })
            .collect()
    }

    pub fn spin<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let r: f64 = rng.gen();
        self.cumulative
            .partition_point(|&c| c <= r)
            .min(self.cumulative.len() - 1)
    }
}

/// Draws `count` chromosomes with replacement, proportionally to fitness.
pub fn roulette_select<R: Rng + ?Sized>(
    population: &[Chromosome],
    fitnesses: &[f64],
    count: usize,
    epsilon: f64,
    rng: &mut R,
) -> Vec<Chromosome> {
    let wheel = RouletteWheel::new(fitnesses, epsilon);
    (0..count)
        .map(|_| population[wheel.spin(rng)].clone())
        .collect()
}

/// Gene-wise swap: where `mask[i]` is true child 1 takes parent 1's gene,
/// otherwise the parents' genes are exchanged.
pub fn crossover_with_mask(
    parent1: &Chromosome,
    parent2: &Chromosome,
    mask: &[bool],
) -> Result<(Chromosome, Chromosome), GaError> {
    if parent1.genes.len() != parent2.genes.len() || mask.len() != parent1.genes.len() {
        return Err(GaError::LengthMismatch {
            expected: parent1.genes.len(),
            got: parent2.genes.len().min(mask.len()),
        });
    }
    let (a, b) = parent1
        .genes
        .iter()
        .zip(&parent2.genes)
        .zip(mask)
        .map(|((&g1, &g2), &keep)| if keep { (g1, g2) } else { (g2, g1) })
        .unzip();
    Ok((Chromosome::new(a), Chromosome::new(b)))
}

pub fn uniform_crossover<R: Rng + ?Sized>(
    parent1: &Chromosome,
    parent2: &Chromosome,
    rng: &mut R,
) -> Result<(Chromosome, Chromosome), GaError> {
    let mask: Vec<bool> = (0..parent1.genes.len())
        .map(|_| rng.gen::<f64>() < CROSSOVER_MIX)
        .collect();
    crossover_with_mask(parent1, parent2, &mask)
}

/// Redraws each gene with probability `rate` from its flow's feasible
/// labels. Returns the mutant and the number of redraws.
pub fn multipoint_mutate_counted<R: Rng + ?Sized>(
    chromosome: &Chromosome,
    rate: f64,
    table: &XPathTable,
    flows: &FlowSet,
    rng: &mut R,
) -> Result<(Chromosome, usize), GaError> {
    if chromosome.genes.len() != flows.len() {
        return Err(GaError::LengthMismatch {
            expected: flows.len(),
            got: chromosome.genes.len(),
        });
    }
    let mut redraws = 0;
    let mut genes = chromosome.genes.clone();
    for (g, f) in genes.iter_mut().zip(flows.flows()) {
        if rng.gen::<f64>() < rate {
            let options = table.feasible_labels(f.src, f.dst);
            *g = *options.choose(rng).ok_or(GaError::NoFeasiblePath(f.id))?;
            redraws += 1;
        }
    }
    Ok((Chromosome::new(genes), redraws))
}

pub fn multipoint_mutate<R: Rng + ?Sized>(
    chromosome: &Chromosome,
    rate: f64,
    table: &XPathTable,
    flows: &FlowSet,
    rng: &mut R,
) -> Result<Chromosome, GaError> {
    multipoint_mutate_counted(chromosome, rate, table, flows, rng).map(|(c, _)| c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationStats {
    pub generation: usize,
    /// Utilization of the incumbent after this generation was scored.
    pub best_mu: f64,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    /// Rate applied when breeding the following generation.
    pub mut_rate: f64,
}

#[derive(Debug, Clone)]
pub struct CectOutcome {
    pub assignment: RoutingAssignment,
    pub mu: Utilization,
    pub fitness: f64,
    /// Whether the incumbent met `mu_target`.
    pub reached_target: bool,
    pub population_size: usize,
    pub stats: Vec<GenerationStats>,
}

impl CectOutcome {
    pub fn generations(&self) -> usize {
        self.stats.len()
    }

    /// `generation,best_mu,best_fitness,mean_fitness,mut_rate` rows.
    pub fn stats_csv(&self) -> String {
        let mut out = String::from("generation,best_mu,best_fitness,mean_fitness,mut_rate\n");
        for s in &self.stats {
            out.push_str(&format!(
                "{},{:.6},{:.3},{:.3},{}\n",
                s.generation, s.best_mu, s.best_fitness, s.mean_fitness, s.mut_rate
            ));
        }
        out
    }
}

pub fn run_cect(
    flows: &FlowSet,
    table: &XPathTable,
    topology: &Topology,
    config: &GaConfig,
) -> Result<CectOutcome, GaError> {
    run_cect_observed(flows, table, topology, config, |_| {})
}

/// Like [`run_cect`], calling `observer` on every scored population.
pub fn run_cect_observed(
    flows: &FlowSet,
    table: &XPathTable,
    topology: &Topology,
    config: &GaConfig,
    mut observer: impl FnMut(&Population),
) -> Result<CectOutcome, GaError> {
    config.validate()?;
    let options: Vec<&[PathLabel]> = flows
        .flows()
        .iter()
        .map(|f| table.feasible_labels(f.src, f.dst))
        .collect();
    if let Some((f, _)) = flows.flows().iter().zip(&options).find(|(_, o)| o.is_empty()) {
        return Err(GaError::NoFeasiblePath(f.id));
    }

    let pop_size = config.population_for(flows.len(), topology.node_count());
    let scorer = Scorer::new(flows, table, topology, config.penalty_for(topology));
    let epsilon = 1e-6 * topology.total_capacity().max(1) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut members = Vec::with_capacity(pop_size);
    if config.seed_shortest {
        let genes = flows
            .flows()
            .iter()
            .map(|f| ecmp_label(f, table, None).unwrap())
            .collect();
        members.push(Chromosome::new(genes));
    }
    while members.len() < pop_size {
        let genes = options.iter().map(|o| *o.choose(&mut rng).unwrap()).collect();
        members.push(Chromosome::new(genes));
    }
    let mut population = Population {
        members,
        generation: 0,
    };

    let mut incumbent: Option<(Chromosome, Utilization, f64)> = None;
    let mut best_fitness = f64::NEG_INFINITY;
    let mut stall = 0usize;
    let mut stats = Vec::new();

    for generation in 0..config.max_iterations {
        population.generation = generation;
        // scoring is pure, so it may run in parallel without touching the rng
        let scores: Vec<(f64, Utilization)> = population
            .members
            .par_iter()
            .map_init(Vec::new, |load, c| scorer.score(&c.genes, load))
            .collect();
        for (c, s) in population.members.iter_mut().zip(&scores) {
            c.cached_fitness = Some(s.0);
        }
        observer(&population);

        // best = lowest utilization, then highest fitness, then earliest
        let elite = (0..scores.len())
            .min_by(|&a, &b| {
                scores[a]
                    .1
                    .cmp(&scores[b].1)
                    .then(scores[b].0.total_cmp(&scores[a].0))
            })
            .unwrap();
        let improves = incumbent.as_ref().is_none_or(|(_, mu, fit)| {
            (scores[elite].1, -scores[elite].0) < (*mu, -*fit)
        });
        if improves {
            incumbent = Some((
                population.members[elite].clone(),
                scores[elite].1,
                scores[elite].0,
            ));
        }

        let gen_best = scores.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
        if gen_best > best_fitness {
            best_fitness = gen_best;
            stall = 0;
        } else {
            stall += 1;
        }
        let mut_rate = if stall >= config.stall_window {
            config.mut_max
        } else {
            config.mut_min
        };

        let (_, inc_mu, _) = incumbent.as_ref().unwrap();
        stats.push(GenerationStats {
            generation,
            best_mu: inc_mu.as_f64(),
            best_fitness: gen_best,
            mean_fitness: scores.iter().map(|s| s.0).sum::<f64>() / scores.len() as f64,
            mut_rate,
        });
        if inc_mu.at_most(config.mu_target) || generation + 1 == config.max_iterations {
            break;
        }

        let fitnesses: Vec<f64> = scores.iter().map(|s| s.0).collect();
        let wheel = RouletteWheel::new(&fitnesses, epsilon);
        let mut picks: Vec<usize> = (0..pop_size).map(|_| wheel.spin(&mut rng)).collect();
        // the elite skips recombination; drop one slot to keep the size fixed
        match picks.iter().position(|&i| i == elite) {
            Some(pos) => {
                picks.remove(pos);
            }
            None => {
                picks.pop();
            }
        }

        let mut next = Vec::with_capacity(pop_size);
        next.push(population.members[elite].clone());
        for pair in picks.chunks(2) {
            match *pair {
                [a, b] => {
                    let (c1, c2) = uniform_crossover(
                        &population.members[a],
                        &population.members[b],
                        &mut rng,
                    )?;
                    next.push(multipoint_mutate(&c1, mut_rate, table, flows, &mut rng)?);
                    next.push(multipoint_mutate(&c2, mut_rate, table, flows, &mut rng)?);
                }
                [a] => next.push(multipoint_mutate(
                    &population.members[a],
                    mut_rate,
                    table,
                    flows,
                    &mut rng,
                )?),
                _ => unreachable!(),
            }
        }
        population.members = next;
    }

    let (best, mu, fit) = incumbent.expect("at least one generation is scored");
    Ok(CectOutcome {
        assignment: RoutingAssignment::new(best.genes),
        mu,
        fitness: fit,
        reached_target: mu.at_most(config.mu_target),
        population_size: pop_size,
        stats,
    })
}
