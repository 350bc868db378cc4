//! NSGA-II multi-objective search over a search space: maximize the proxy
//! score, minimize estimated TFLOPs, subject to a hard parameter-count bound
//! handled by constraint-domination (feasible always beats infeasible).
//!
//! The evaluator is a caller-supplied closure, so the same machinery runs
//! against capacity scoring (with or without a lookup table) and against the
//! cheap synthetic objectives used by the test oracles.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_bigint::BigUint;
use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::archspace::{ArchitectureSpec, DimensionDef, SearchSpaceDef, SpaceError};
use crate::rng::{seeded, uniform01, uniform_index};

/// Evaluated objective values for one architecture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objectives {
    pub proxy: f64,
    pub tflops: f64,
    pub params: u64,
}

/// An evaluated candidate with its nondomination rank and crowding distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub arch: ArchitectureSpec,
    pub proxy: f64,
    pub tflops: f64,
    pub params: u64,
    pub rank: usize,
    pub crowding: f64,
}

/// Hard parameter-count constraint: feasible iff `low < params < high`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub low: u64,
    pub high: u64,
}

impl ParamBounds {
    pub fn unbounded() -> Self {
        Self {
            low: 0,
            high: u64::MAX,
        }
    }

    pub fn feasible(&self, params: u64) -> bool {
        self.low < params && params < self.high
    }

    /// Magnitude of the bound violation; zero iff feasible.
    pub fn violation(&self, params: u64) -> u64 {
        if params <= self.low {
            self.low - params + 1
        } else if params >= self.high {
            params - self.high + 1
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Population size; must be even and at least 2.
    pub population: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    /// Per-dimension probability of resampling a value uniformly.
    pub mutation_rate: f64,
    pub param_bounds: ParamBounds,
    /// Balance parameter the run's scorer was built with (recorded in manifests).
    pub alpha: f64,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            population: 64,
            generations: 50,
            crossover_rate: 0.9,
            mutation_rate: 0.1,
            param_bounds: ParamBounds::unbounded(),
            alpha: 0.5,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        if self.population < 2 || self.population % 2 != 0 {
            return Err(SearchError::InvalidConfig {
                reason: format!("population must be even and >= 2, got {}", self.population),
            });
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) || !(0.0..=1.0).contains(&self.mutation_rate)
        {
            return Err(SearchError::InvalidConfig {
                reason: "crossover and mutation rates must lie in [0, 1]".to_string(),
            });
        }
        if self.param_bounds.low >= self.param_bounds.high {
            return Err(SearchError::InvalidConfig {
                reason: format!(
                    "param bounds require low < high, got {} >= {}",
                    self.param_bounds.low, self.param_bounds.high
                ),
            });
        }
        Ok(())
    }
}

/// Per-generation best/median proxy over the feasible population members.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationStat {
    pub generation: usize,
    pub best_proxy: Option<f64>,
    pub median_proxy: Option<f64>,
}

/// Nondominated feasible candidates (rank 0), sorted by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    pub members: Vec<Candidate>,
}

impl ParetoFront {
    /// Post-hoc invariant check: mutual non-domination and bound satisfaction.
    pub fn validate(&self, bounds: &ParamBounds) -> Result<(), SearchError> {
        for c in &self.members {
            if !bounds.feasible(c.params) {
                return Err(SearchError::FrontInvariantViolated {
                    reason: format!("member {} violates parameter bounds", c.arch.id),
                });
            }
        }
        for a in &self.members {
            for b in &self.members {
                if a.arch.id != b.arch.id && dominates(a, b) {
                    return Err(SearchError::FrontInvariantViolated {
                        reason: format!("{} dominates {}", a.arch.id, b.arch.id),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub front: ParetoFront,
    pub history: Vec<GenerationStat>,
    /// Total evaluator invocations across the run.
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SearchError {
    InvalidConfig { reason: String },
    /// No sampled candidate satisfied the parameter bounds.
    InfeasibleBounds { attempts: usize },
    ScorerFailure { generation: usize, message: String },
    FrontInvariantViolated { reason: String },
    Space(SpaceError),
}

impl fmt::Display for SearchError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SearchError::InvalidConfig { reason } => write!(f, "invalid search config: {reason}"),
            SearchError::InfeasibleBounds { attempts } => write!(
                f,
                "no candidate satisfied the parameter bounds in {attempts} sampling attempts"
            ),
            SearchError::ScorerFailure { generation, message } => {
                write!(f, "scorer failed at generation {generation}: {message}")
            }
            SearchError::FrontInvariantViolated { reason } => {
                write!(f, "pareto front invariant violated: {reason}")
            }
            SearchError::Space(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for SearchError {}

impl From<SpaceError> for SearchError {
    fn from(e: SpaceError) -> Self {
        SearchError::Space(e)
    }
}

/// Strict Pareto domination under (proxy maximized, tflops minimized).
pub fn dominates(a: &Candidate, b: &Candidate) -> bool {
    (a.proxy >= b.proxy && a.tflops <= b.tflops) && (a.proxy > b.proxy || a.tflops < b.tflops)
}

fn constrained_dominates(a: &Candidate, b: &Candidate, bounds: &ParamBounds) -> bool {
    let va = bounds.violation(a.params);
    let vb = bounds.violation(b.params);
    match (va == 0, vb == 0) {
        (true, false) => true,
        (false, true) => false,
        (false, false) => va < vb,
        (true, true) => dominates(a, b),
    }
}

/// Fast nondominated sort; returns fronts of indices, rank 0 first.
pub fn nondominated_sort(pop: &[Candidate]) -> Vec<Vec<usize>> {
    nondominated_sort_by(pop, dominates)
}

fn nondominated_sort_by<F>(pop: &[Candidate], dom: F) -> Vec<Vec<usize>>
where
    F: Fn(&Candidate, &Candidate) -> bool,
{
    let n = pop.len();
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut domination_count = vec![0usize; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if dom(&pop[i], &pop[j]) {
                dominated_by[i].push(j);
                domination_count[j] += 1;
            } else if dom(&pop[j], &pop[i]) {
                dominated_by[j].push(i);
                domination_count[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
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
        next.sort_unstable();
        fronts.push(core::mem::take(&mut current));
        current = next;
    }
    fronts
}

/// Crowding distances for one front. Boundary candidates get `+inf`; interior
/// candidates sum normalized objective gaps. Order-independent: objective
/// ties are resolved by the other objective and then by id.
pub fn crowding_distance(front: &[Candidate]) -> Vec<f64> {
    let n = front.len();
    let mut distance = vec![0.0f64; n];
    if n == 0 {
        return distance;
    }
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let objectives: [(
        fn(&Candidate) -> f64,
        fn(&Candidate) -> f64,
    ); 2] = [
        (|c| c.proxy, |c| c.tflops),
        (|c| c.tflops, |c| c.proxy),
    ];
    for (key, other) in objectives {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            key(&front[a])
                .total_cmp(&key(&front[b]))
                .then_with(|| other(&front[a]).total_cmp(&other(&front[b])))
                .then_with(|| front[a].arch.id.cmp(&front[b].arch.id))
        });
        let lo = key(&front[order[0]]);
        let hi = key(&front[order[n - 1]]);
        distance[order[0]] = f64::INFINITY;
        distance[order[n - 1]] = f64::INFINITY;
        if hi == lo {
            continue;
        }
        for w in 1..n - 1 {
            let idx = order[w];
            if distance[idx].is_finite() {
                distance[idx] += (key(&front[order[w + 1]]) - key(&front[order[w - 1]])) / (hi - lo);
            }
        }
    }
    distance
}

/// Generational NSGA-II loop.
///
/// Initialization enumerates the whole space when it fits inside the
/// population (so small spaces are searched exhaustively) and samples
/// uniformly otherwise. Selection is binary tournament on (rank, crowding);
/// variation is per-dimension uniform crossover plus per-dimension uniform
/// resampling mutation. The returned front is the nondominated set over every
/// feasible candidate evaluated during the run.
pub fn nsga2_search<F, E>(
    space: &SearchSpaceDef,
    mut evaluate: F,
    cfg: &SearchConfig,
) -> Result<SearchOutcome, SearchError>
where
    F: FnMut(&ArchitectureSpec) -> Result<Objectives, E>,
    E: fmt::Display,
{
    cfg.validate()?;
    space.validate()?;
    let bounds = cfg.param_bounds;
    let mut rng = seeded(cfg.seed);
    let mut evaluations = 0usize;

    let mut eval = |arch: &ArchitectureSpec, generation: usize, evals: &mut usize| {
        *evals += 1;
        evaluate(arch)
            .map(|o| Candidate {
                arch: arch.clone(),
                proxy: o.proxy,
                tflops: o.tflops,
                params: o.params,
                rank: 0,
                crowding: 0.0,
            })
            .map_err(|e| SearchError::ScorerFailure {
                generation,
                message: e.to_string(),
            })
    };

    // Initial population: exhaustive when the space fits, sampled otherwise.
    let exhaustive = space.space_size() <= BigUint::from(cfg.population);
    let mut population: Vec<Candidate> = Vec::with_capacity(cfg.population);
    if exhaustive {
        let archs = space.enumerate_archs(cfg.population)?;
        for i in 0..cfg.population {
            let arch = &archs[i % archs.len()];
            population.push(eval(arch, 0, &mut evaluations)?);
        }
    } else {
        for _ in 0..cfg.population {
            let arch = space.sample_with(&mut rng);
            population.push(eval(&arch, 0, &mut evaluations)?);
        }
    }

    // Bound-feasibility guard: keep sampling (up to 10x population draws in
    // total) until at least one member is feasible.
    if !population.iter().any(|c| bounds.feasible(c.params)) {
        let mut attempts = cfg.population;
        let mut found = false;
        while attempts < 10 * cfg.population {
            let arch = space.sample_with(&mut rng);
            let cand = eval(&arch, 0, &mut evaluations)?;
            attempts += 1;
            let feasible = bounds.feasible(cand.params);
            population[attempts % cfg.population] = cand;
            if feasible {
                found = true;
                break;
            }
        }
        if !found {
            return Err(SearchError::InfeasibleBounds { attempts });
        }
    }

    let mut archive: BTreeMap<String, Candidate> = BTreeMap::new();
    update_archive(&mut archive, population.iter().cloned(), &bounds);

    let mut history = vec![population_stat(0, &population, &bounds)];

    for generation in 1..=cfg.generations {
        assign_rank_and_crowding(&mut population, &bounds);

        let mut children: Vec<Candidate> = Vec::with_capacity(cfg.population);
        while children.len() < cfg.population {
            let p1 = tournament(&population, &mut rng);
            let p2 = tournament(&population, &mut rng);
            let (mut c1, mut c2) = if uniform01(&mut rng) < cfg.crossover_rate {
                uniform_crossover(space, &population[p1].arch, &population[p2].arch, &mut rng)
            } else {
                (population[p1].arch.clone(), population[p2].arch.clone())
            };
            mutate(space, &mut c1, cfg.mutation_rate, &mut rng);
            mutate(space, &mut c2, cfg.mutation_rate, &mut rng);
            for child in [c1, c2] {
                if children.len() < cfg.population {
                    children.push(eval(&child, generation, &mut evaluations)?);
                }
            }
        }

        update_archive(&mut archive, children.iter().cloned(), &bounds);

        // (mu + lambda) survival: merge, constrained sort, fill by rank and
        // truncate the last front by crowding (ties broken by id).
        let mut merged = population;
        merged.extend(children);
        let fronts = nondominated_sort_by(&merged, |a, b| constrained_dominates(a, b, &bounds));
        let mut next: Vec<Candidate> = Vec::with_capacity(cfg.population);
        for front_idx in fronts {
            if next.len() == cfg.population {
                break;
            }
            let front: Vec<Candidate> = front_idx.iter().map(|&i| merged[i].clone()).collect();
            let dist = crowding_distance(&front);
            let mut order: Vec<usize> = (0..front.len()).collect();
            order.sort_by(|&a, &b| {
                dist[b]
                    .total_cmp(&dist[a])
                    .then_with(|| front[a].arch.id.cmp(&front[b].arch.id))
            });
            for &i in &order {
                if next.len() == cfg.population {
                    break;
                }
                let mut c = front[i].clone();
                c.crowding = dist[i];
                next.push(c);
            }
        }
        population = next;
        history.push(population_stat(generation, &population, &bounds));
    }

    let mut members: Vec<Candidate> = archive.into_values().collect();
    members.sort_by(|a, b| a.arch.id.cmp(&b.arch.id));
    let dist = crowding_distance(&members);
    for (c, d) in members.iter_mut().zip(dist) {
        c.rank = 0;
        c.crowding = d;
    }
    let front = ParetoFront { members };
    front.validate(&bounds)?;
    Ok(SearchOutcome {
        front,
        history,
        evaluations,
    })
}

/// Default enumeration cap for [`exhaustive_pareto`].
pub const DEFAULT_ENUMERATION_CAP: usize = 100_000;

/// Enumerates the whole space, filters the parameter bounds, and returns the
/// brute-force nondominated set. Test oracle for [`nsga2_search`]; refuses
/// spaces larger than `cap`.
pub fn exhaustive_pareto<F, E>(
    space: &SearchSpaceDef,
    mut evaluate: F,
    bounds: &ParamBounds,
    cap: usize,
) -> Result<ParetoFront, SearchError>
where
    F: FnMut(&ArchitectureSpec) -> Result<Objectives, E>,
    E: fmt::Display,
{
    space.validate()?;
    let archs = space.enumerate_archs(cap)?;
    let mut feasible: Vec<Candidate> = Vec::new();
    for arch in &archs {
        let o = evaluate(arch).map_err(|e| SearchError::ScorerFailure {
            generation: 0,
            message: e.to_string(),
        })?;
        if bounds.feasible(o.params) {
            feasible.push(Candidate {
                arch: arch.clone(),
                proxy: o.proxy,
                tflops: o.tflops,
                params: o.params,
                rank: 0,
                crowding: 0.0,
            });
        }
    }
    let mut members: Vec<Candidate> = feasible
        .iter()
        .filter(|c| !feasible.iter().any(|d| dominates(d, c)))
        .cloned()
        .collect();
    members.sort_by(|a, b| a.arch.id.cmp(&b.arch.id));
    members.dedup_by(|a, b| a.arch.id == b.arch.id);
    let dist = crowding_distance(&members);
    for (c, d) in members.iter_mut().zip(dist) {
        c.crowding = d;
    }
    Ok(ParetoFront { members })
}

fn update_archive<I>(archive: &mut BTreeMap<String, Candidate>, new: I, bounds: &ParamBounds)
where
    I: Iterator<Item = Candidate>,
{
    for c in new {
        if bounds.feasible(c.params) {
            archive.entry(c.arch.id.clone()).or_insert(c);
        }
    }
    let snapshot: Vec<Candidate> = archive.values().cloned().collect();
    archive.retain(|_, c| !snapshot.iter().any(|d| dominates(d, c)));
}

fn population_stat(generation: usize, pop: &[Candidate], bounds: &ParamBounds) -> GenerationStat {
    let mut feasible: Vec<f64> = pop
        .iter()
        .filter(|c| bounds.feasible(c.params))
        .map(|c| c.proxy)
        .collect();
    feasible.sort_by(f64::total_cmp);
    if feasible.is_empty() {
        return GenerationStat {
            generation,
            best_proxy: None,
            median_proxy: None,
        };
    }
    let n = feasible.len();
    let median = if n % 2 == 1 {
        feasible[n / 2]
    } else {
        0.5 * (feasible[n / 2 - 1] + feasible[n / 2])
    };
    GenerationStat {
        generation,
        best_proxy: Some(feasible[n - 1]),
        median_proxy: Some(median),
    }
}

fn assign_rank_and_crowding(pop: &mut [Candidate], bounds: &ParamBounds) {
    let fronts = nondominated_sort_by(pop, |a, b| constrained_dominates(a, b, bounds));
    for (rank, front_idx) in fronts.iter().enumerate() {
        let front: Vec<Candidate> = front_idx.iter().map(|&i| pop[i].clone()).collect();
        let dist = crowding_distance(&front);
        for (&i, d) in front_idx.iter().zip(dist) {
            pop[i].rank = rank;
            pop[i].crowding = d;
        }
    }
}

fn tournament<R: RngCore>(pop: &[Candidate], rng: &mut R) -> usize {
    let a = uniform_index(rng, pop.len());
    let b = uniform_index(rng, pop.len());
    let better = match pop[a].rank.cmp(&pop[b].rank) {
        core::cmp::Ordering::Less => a,
        core::cmp::Ordering::Greater => b,
        core::cmp::Ordering::Equal => match pop[a].crowding.total_cmp(&pop[b].crowding) {
            core::cmp::Ordering::Greater => a,
            core::cmp::Ordering::Less => b,
            core::cmp::Ordering::Equal => a.min(b),
        },
    };
    better
}

fn scoped_map<'a>(
    arch: &'a ArchitectureSpec,
    dim: &DimensionDef,
) -> Option<&'a alloc::collections::BTreeMap<String, crate::archspace::DimValue>> {
    if dim.embedding {
        arch.embedding_config.as_ref()
    } else {
        Some(&arch.globals)
    }
}

fn set_scoped(
    arch: &mut ArchitectureSpec,
    dim: &DimensionDef,
    value: crate::archspace::DimValue,
) {
    if dim.embedding {
        arch.embedding_config
            .get_or_insert_with(BTreeMap::new)
            .insert(dim.name.clone(), value);
    } else {
        arch.globals.insert(dim.name.clone(), value);
    }
}

/// Per-dimension uniform crossover. Each child draws its layer count from one
/// parent, mixes choices where both parents have a layer, and copies choices
/// from the deeper parent elsewhere.
fn uniform_crossover<R: RngCore>(
    space: &SearchSpaceDef,
    a: &ArchitectureSpec,
    b: &ArchitectureSpec,
    rng: &mut R,
) -> (ArchitectureSpec, ArchitectureSpec) {
    let make_child = |rng: &mut R| {
        let num_layers = if rng.next_u64() & 1 == 0 {
            a.num_layers
        } else {
            b.num_layers
        };
        let mut child = ArchitectureSpec {
            id: String::new(),
            space: space.name.clone(),
            num_layers,
            globals: BTreeMap::new(),
            layers: vec![BTreeMap::new(); num_layers],
            embedding_config: None,
        };
        for dim in &space.dimensions {
            if dim.layer_scoped {
                for l in 0..num_layers {
                    let from_a = a.layers.get(l).and_then(|m| m.get(&dim.name));
                    let from_b = b.layers.get(l).and_then(|m| m.get(&dim.name));
                    let value = match (from_a, from_b) {
                        (Some(va), Some(vb)) => {
                            if rng.next_u64() & 1 == 0 {
                                va.clone()
                            } else {
                                vb.clone()
                            }
                        }
                        (Some(va), None) => va.clone(),
                        (None, Some(vb)) => vb.clone(),
                        (None, None) => {
                            let values = dim.values_at(l);
                            values[uniform_index(rng, values.len())].clone()
                        }
                    };
                    child.layers[l].insert(dim.name.clone(), value);
                }
            } else {
                let pick_a = rng.next_u64() & 1 == 0;
                let source = if pick_a { a } else { b };
                let value = scoped_map(source, dim)
                    .and_then(|m| m.get(&dim.name))
                    .cloned()
                    .unwrap_or_else(|| dim.values[uniform_index(rng, dim.values.len())].clone());
                set_scoped(&mut child, dim, value);
            }
        }
        child.recompute_id();
        child
    };
    let c1 = make_child(rng);
    let c2 = make_child(rng);
    (c1, c2)
}

/// Uniform resampling mutation: each gene (layer count, then every dimension
/// choice) is independently redrawn from its allowed values with probability
/// `rate`.
fn mutate<R: RngCore>(
    space: &SearchSpaceDef,
    arch: &mut ArchitectureSpec,
    rate: f64,
    rng: &mut R,
) {
    let layer_options = space.num_layers.options();
    if layer_options.len() > 1 && uniform01(rng) < rate {
        let new_layers = layer_options[uniform_index(rng, layer_options.len())];
        resize_layers(space, arch, new_layers, rng);
    }
    for dim in &space.dimensions {
        if dim.layer_scoped {
            for l in 0..arch.num_layers {
                if uniform01(rng) < rate {
                    let values = dim.values_at(l);
                    let value = values[uniform_index(rng, values.len())].clone();
                    arch.layers[l].insert(dim.name.clone(), value);
                }
            }
        } else if uniform01(rng) < rate {
            let value = dim.values[uniform_index(rng, dim.values.len())].clone();
            set_scoped(arch, dim, value);
        }
    }
    arch.recompute_id();
}

fn resize_layers<R: RngCore>(
    space: &SearchSpaceDef,
    arch: &mut ArchitectureSpec,
    new_layers: usize,
    rng: &mut R,
) {
    arch.layers.truncate(new_layers);
    while arch.layers.len() < new_layers {
        let l = arch.layers.len();
        let mut layer = BTreeMap::new();
        for dim in space.dimensions.iter().filter(|d| d.layer_scoped) {
            let values = dim.values_at(l);
            layer.insert(dim.name.clone(), values[uniform_index(rng, values.len())].clone());
        }
        arch.layers.push(layer);
    }
    arch.num_layers = new_layers;
}
