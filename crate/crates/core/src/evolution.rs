//! The genetic loop: initialization, fitness evaluation with common random
//! numbers, binary tournaments, order crossover, mutation and convergence.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stack::{sot_distance, StackOfTasks, TaskEntry};
use crate::tasks::{TaskDictionary, TaskParams};
use crate::world_sim::Scenario;

type Stack = StackOfTasks<f64>;

/// Which genes are searched.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Random orders, default parameters, all tasks active; parameters frozen.
    #[default]
    #[serde(alias = "order")]
    OrderOnly,
    /// Order taken from a benchmark stack; parameters and flags random.
    Params,
    /// Order, parameters and flags all random.
    Joint,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorWeights {
    pub swap_order: f64,
    pub perturb_param: f64,
    pub flip_active: f64,
}

impl Default for OperatorWeights {
    fn default() -> Self {
        Self {
            swap_order: 1.0,
            perturb_param: 1.0,
            flip_active: 1.0,
        }
    }
}

fn d_population() -> usize {
    8
}
fn d_generations() -> usize {
    10
}
fn d_crossover() -> f64 {
    0.5
}
fn d_sigma() -> f64 {
    0.1
}
fn d_episodes() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpConfig {
    #[serde(default = "d_population")]
    pub population_size: usize,
    #[serde(default = "d_generations")]
    pub max_generations: usize,
    #[serde(default = "d_crossover")]
    pub crossover_prob: f64,
    #[serde(default)]
    pub weights: OperatorWeights,
    /// Gaussian mutation σ as a fraction of each bound's width.
    #[serde(default = "d_sigma")]
    pub param_sigma: f64,
    /// `d_conv`; half the number of tasks when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence_threshold: Option<f64>,
    #[serde(default = "d_episodes")]
    pub episodes_per_individual: usize,
    #[serde(default)]
    pub phase: Phase,
    #[serde(default)]
    pub master_seed: u64,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            population_size: d_population(),
            max_generations: d_generations(),
            crossover_prob: d_crossover(),
            weights: OperatorWeights::default(),
            param_sigma: d_sigma(),
            convergence_threshold: None,
            episodes_per_individual: d_episodes(),
            phase: Phase::default(),
            master_seed: 0,
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 4 || !self.population_size.is_multiple_of(2) {
            return Err(Error::config("gp.population_size", "must be an even integer >= 4"));
        }
        if !(0.0..=1.0).contains(&self.crossover_prob) {
            return Err(Error::config("gp.crossover_prob", "must lie in [0, 1]"));
        }
        let w = self.weights;
        if [w.swap_order, w.perturb_param, w.flip_active].iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::config("gp.weights", "weights must be non-negative"));
        }
        if w.swap_order + w.perturb_param + w.flip_active <= 0.0 {
            return Err(Error::config("gp.weights", "weights must not all be zero"));
        }
        if !(self.param_sigma >= 0.0) {
            return Err(Error::config("gp.param_sigma", "must be non-negative"));
        }
        if let Some(d) = self.convergence_threshold {
            if !(d > 0.0) {
                return Err(Error::config("gp.convergence_threshold", "must be positive"));
            }
        }
        if self.episodes_per_individual == 0 {
            return Err(Error::config("gp.episodes_per_individual", "must be at least 1"));
        }
        Ok(())
    }

    pub fn d_conv(&self, n_tasks: usize) -> f64 {
        self.convergence_threshold.unwrap_or(0.5 * n_tasks as f64)
    }

    /// Operator weights in `phase`: parameters are frozen while searching orders.
    fn phase_weights(&self, phase: Phase) -> [f64; 3] {
        let w = self.weights;
        let perturb = if phase == Phase::OrderOnly { 0.0 } else { w.perturb_param };
        [w.swap_order, perturb, w.flip_active]
    }
}

/// Seed of episode `episode` in generation `gen`, shared by every individual.
pub fn episode_seed(master: u64, gen: usize, episode: usize) -> u64 {
    let mut z = master
        .wrapping_add((gen as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((episode as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn random_params(dict: &TaskDictionary<f64>, id: &str, rng: &mut ChaCha8Rng) -> TaskParams<f64> {
    let def = dict.get(id).expect("dictionary id");
    let mut p = TaskParams::default();
    for k in def.bounds.kinds() {
        p.set(k, def.bounds.get(k).unwrap().sample(rng.random::<f64>()));
    }
    p
}

fn ensure_active(stack: &mut Stack) {
    if stack.active_count() == 0 {
        if let Some(e) = stack.entries.first_mut() {
            e.active = true;
        }
    }
}

/// Random initial population for `phase`; `benchmark` supplies the order in
/// the params phase.
pub fn init_population(
    dict: &TaskDictionary<f64>,
    cfg: &GpConfig,
    phase: Phase,
    benchmark: Option<&Stack>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Stack>> {
    let ids: Vec<String> = dict.tasks().iter().map(|d| d.id.clone()).collect();
    let mut pop = Vec::with_capacity(cfg.population_size);
    for _ in 0..cfg.population_size {
        let order: Vec<String> = match (phase, benchmark) {
            (Phase::Params, Some(b)) => {
                b.validate(dict)?;
                b.order().into_iter().map(String::from).collect()
            }
            (Phase::Params, None) => {
                return Err(Error::config("gp.phase", "params phase needs a benchmark stack"));
            }
            _ => {
                let mut o = ids.clone();
                o.shuffle(rng);
                o
            }
        };
        let entries = order
            .into_iter()
            .map(|id| {
                if phase == Phase::OrderOnly {
                    let p = dict.get(&id).unwrap().defaults;
                    TaskEntry::new(id, true, p)
                } else {
                    let p = random_params(dict, &id, rng);
                    let active = rng.random_bool(0.5);
                    TaskEntry::new(id, active, p)
                }
            })
            .collect();
        let mut s = Stack::new(entries);
        ensure_active(&mut s);
        pop.push(s);
    }
    Ok(pop)
}

/// Evaluates every individual without a cost on the generation's shared
/// episode seeds; returns how many individuals were simulated.
pub fn evaluate_population(
    pop: &mut [Stack],
    scenario: &Scenario<f64>,
    cfg: &GpConfig,
    gen: usize,
    pool: &rayon::ThreadPool,
) -> Result<usize> {
    let seeds = seeds_of(cfg, gen);
    let todo: Vec<usize> = (0..pop.len()).filter(|i| pop[*i].cost.is_none()).collect();
    let costs: Vec<Result<f64>> = pool.install(|| {
        todo.par_iter()
            .map(|&i| {
                let mut sum = 0.0;
                for s in &seeds {
                    sum += scenario.run(&pop[i], *s)?.1;
                }
                Ok(sum / seeds.len() as f64)
            })
            .collect()
    });
    for (i, c) in todo.iter().zip(costs) {
        pop[*i].cost = Some(c?);
    }
    Ok(todo.len())
}

/// Random disjoint pairs; the cheaper member of each survives, exact ties by coin flip.
/// Returns the survivors' indices.
pub fn tournament_indices(pop: &[Stack], rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    if !pop.len().is_multiple_of(2) {
        return Err(Error::Protocol("tournament needs an even population".into()));
    }
    if let Some(i) = pop.iter().position(|s| s.cost.is_none()) {
        return Err(Error::Protocol(format!("individual {i} has no cost")));
    }
    let mut idx: Vec<usize> = (0..pop.len()).collect();
    idx.shuffle(rng);
    Ok(idx
        .chunks(2)
        .map(|pair| {
            let (ca, cb) = (pop[pair[0]].cost.unwrap(), pop[pair[1]].cost.unwrap());
            if ca < cb {
                pair[0]
            } else if cb < ca {
                pair[1]
            } else if rng.random_bool(0.5) {
                pair[0]
            } else {
                pair[1]
            }
        })
        .collect())
}

pub fn tournament_select(pop: &[Stack], rng: &mut ChaCha8Rng) -> Result<Vec<Stack>> {
    Ok(tournament_indices(pop, rng)?.into_iter().map(|i| pop[i].clone()).collect())
}

/// Order crossover at `cut`: the first `cut` entries of `a`, then the
/// remaining tasks in `b`'s relative order, each entry copied from the parent
/// that placed it.
pub fn crossover_at(a: &Stack, b: &Stack, cut: usize) -> Result<Stack> {
    if a.len() != b.len() || a.entries.iter().any(|e| b.entry(&e.task_id).is_none()) {
        return Err(Error::Comparison("parents come from different dictionaries".into()));
    }
    let cut = cut.min(a.len());
    let head = &a.entries[..cut];
    let mut entries: Vec<TaskEntry<f64>> = head.to_vec();
    entries.extend(
        b.entries
            .iter()
            .filter(|e| !head.iter().any(|h| h.task_id == e.task_id))
            .cloned(),
    );
    let mut child = Stack::new(entries);
    ensure_active(&mut child);
    Ok(child)
}

/// [`crossover_at`] with a cut drawn uniformly from `1..n_tasks`.
pub fn crossover(a: &Stack, b: &Stack, rng: &mut ChaCha8Rng) -> Result<Stack> {
    if a.len() < 2 {
        return crossover_at(a, b, a.len());
    }
    let cut = rng.random_range(1..a.len());
    crossover_at(a, b, cut)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mutation {
    Swap,
    Perturb,
    Flip,
}

/// Applies one operator drawn by the phase's weights; the child has no cost.
pub fn mutate(
    a: &Stack,
    dict: &TaskDictionary<f64>,
    cfg: &GpConfig,
    phase: Phase,
    rng: &mut ChaCha8Rng,
) -> (Stack, Mutation) {
    let w = cfg.phase_weights(phase);
    let total: f64 = w.iter().sum();
    let op = if total <= 0.0 {
        Mutation::Swap
    } else {
        let u = rng.random::<f64>() * total;
        if u < w[0] {
            Mutation::Swap
        } else if u < w[0] + w[1] {
            Mutation::Perturb
        } else {
            Mutation::Flip
        }
    };
    (apply_mutation(a, dict, cfg.param_sigma, op, rng), op)
}

pub fn apply_mutation(a: &Stack, dict: &TaskDictionary<f64>, sigma: f64, op: Mutation, rng: &mut ChaCha8Rng) -> Stack {
    let mut child = a.clone().without_cost();
    let n = child.len();
    match op {
        Mutation::Swap => {
            if n >= 2 {
                let i = rng.random_range(0..n);
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                child.entries.swap(i, j);
            }
        }
        Mutation::Perturb => {
            let candidates: Vec<usize> = (0..n).filter(|i| !child.entries[*i].params.kinds().is_empty()).collect();
            if let Some(&i) = candidates.get(rng.random_range(0..candidates.len().max(1))) {
                let e = &mut child.entries[i];
                let kinds = e.params.kinds();
                let k = kinds[rng.random_range(0..kinds.len())];
                let bound = dict.get(&e.task_id).and_then(|d| d.bounds.get(k));
                if let (Some(bound), Some(v)) = (bound, e.params.get(k)) {
                    let sd = sigma * bound.width();
                    let step = if sd > 0.0 {
                        Normal::new(0.0, sd).expect("finite σ").sample(rng)
                    } else {
                        0.0
                    };
                    e.params.set(k, bound.clamp(v + step));
                }
            }
        }
        Mutation::Flip => {
            let lone = if child.active_count() == 1 {
                child.entries.iter().position(|e| e.active)
            } else {
                None
            };
            let choices: Vec<usize> = (0..n).filter(|i| Some(*i) != lone).collect();
            if !choices.is_empty() {
                let i = choices[rng.random_range(0..choices.len())];
                child.entries[i].active = !child.entries[i].active;
            }
        }
    }
    child
}

/// Whether the largest pairwise distance is below `d_conv`.
pub fn check_convergence(pop: &[Stack], d_conv: f64) -> Result<bool> {
    Ok(max_pairwise_distance(pop)? < d_conv)
}

pub fn max_pairwise_distance(pop: &[Stack]) -> Result<f64> {
    let mut m: f64 = 0.0;
    for i in 0..pop.len() {
        for j in i + 1..pop.len() {
            m = m.max(sot_distance(&pop[i], &pop[j])?);
        }
    }
    Ok(m)
}

/// Per-generation summary.
#[derive(Clone, Debug, PartialEq)]
pub struct GenerationRecord {
    pub gen: usize,
    pub costs: Vec<f64>,
    pub best: Stack,
    pub best_cost: f64,
    pub mean_cost: f64,
    /// Percentage of individuals whose active order equals the final best's;
    /// filled in once the run ends.
    pub order_match_pct: f64,
    pub max_pairwise_dist: f64,
    /// Smallest position of a distractor in the best stack's entry list
    /// (inactive distractors count as `n_tasks`); `None` without distractors.
    pub distractor_min_rank: Option<usize>,
    pub population: Vec<Stack>,
}

pub fn distractor_min_rank(stack: &Stack, dict: &TaskDictionary<f64>) -> Option<usize> {
    dict.tasks()
        .iter()
        .filter(|d| d.kind.is_distractor())
        .map(|d| {
            let pos = stack.position(&d.id).unwrap_or(stack.len());
            if stack.entry(&d.id).is_some_and(|e| e.active) {
                pos
            } else {
                stack.len()
            }
        })
        .min()
}

pub fn records_csv(records: &[GenerationRecord]) -> String {
    let mut out = String::from("gen,best_cost,mean_cost,order_match_pct,max_pairwise_dist,distractor_min_rank\n");
    for r in records {
        let rank = r.distractor_min_rank.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.gen, r.best_cost, r.mean_cost, r.order_match_pct, r.max_pairwise_dist, rank
        );
    }
    out
}

#[derive(Clone, Debug)]
pub struct EvolutionResult {
    pub best: Stack,
    pub records: Vec<GenerationRecord>,
    /// Individuals simulated, summed over generations.
    pub evaluations: usize,
    /// Episode seeds the best stack's cost was measured on.
    pub best_seeds: Vec<u64>,
}

fn best_index(pop: &[Stack]) -> usize {
    (0..pop.len())
        .min_by(|a, b| pop[*a].cost.unwrap().total_cmp(&pop[*b].cost.unwrap()))
        .expect("non-empty population")
}

fn seeds_of(cfg: &GpConfig, gen: usize) -> Vec<u64> {
    (0..cfg.episodes_per_individual)
        .map(|e| episode_seed(cfg.master_seed, gen, e))
        .collect()
}

pub fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Protocol(format!("cannot start worker pool: {e}")))
}

/// Runs the loop from a given initial population.
pub fn run_evolution_from(
    mut pop: Vec<Stack>,
    scenario: &Scenario<f64>,
    cfg: &GpConfig,
    phase: Phase,
    rng: &mut ChaCha8Rng,
    pool: &rayon::ThreadPool,
    first_gen: usize,
) -> Result<EvolutionResult> {
    if pop.len() != cfg.population_size {
        return Err(Error::Protocol(format!(
            "population has {} individuals, expected {}",
            pop.len(),
            cfg.population_size
        )));
    }
    for s in &pop {
        s.validate(&scenario.dictionary)?;
    }
    let dict = &scenario.dictionary;
    let d_conv = cfg.d_conv(dict.len());
    let mut records = Vec::new();
    let mut evaluations = 0;
    let mut gen = first_gen;
    // Generation each individual was evaluated in.
    let mut born: Vec<usize> = vec![first_gen; pop.len()];
    loop {
        for (i, s) in pop.iter().enumerate() {
            if s.cost.is_none() {
                born[i] = gen;
            }
        }
        evaluations += evaluate_population(&mut pop, scenario, cfg, gen, pool)?;
        let costs: Vec<f64> = pop.iter().map(|s| s.cost.unwrap()).collect();
        let best = pop[best_index(&pop)].clone();
        let spread = max_pairwise_distance(&pop)?;
        log::info!("generation {gen}: best {:.6}", best.cost.unwrap());
        records.push(GenerationRecord {
            gen,
            best_cost: best.cost.unwrap(),
            mean_cost: costs.iter().sum::<f64>() / costs.len() as f64,
            costs,
            distractor_min_rank: distractor_min_rank(&best, dict),
            best,
            order_match_pct: 0.0,
            max_pairwise_dist: spread,
            population: pop.clone(),
        });
        if spread < d_conv || gen - first_gen >= cfg.max_generations {
            break;
        }
        let kept = tournament_indices(&pop, rng)?;
        let survivors: Vec<Stack> = kept.iter().map(|i| pop[*i].clone()).collect();
        born = kept.iter().map(|i| born[*i]).chain(kept.iter().map(|_| 0)).collect();
        let mut next = survivors.clone();
        for (i, s) in survivors.iter().enumerate() {
            let child = if survivors.len() > 1 && rng.random_bool(cfg.crossover_prob) {
                let mut j = rng.random_range(0..survivors.len() - 1);
                if j >= i {
                    j += 1;
                }
                crossover(s, &survivors[j], rng)?
            } else {
                mutate(s, dict, cfg, phase, rng).0
            };
            next.push(child);
        }
        pop = next;
        gen += 1;
    }
    let b = best_index(&pop);
    let best = pop[b].clone();
    score_order_match(&mut records, &best);
    Ok(EvolutionResult {
        best,
        records,
        evaluations,
        best_seeds: seeds_of(cfg, born[b]),
    })
}

fn score_order_match(records: &mut [GenerationRecord], best: &Stack) {
    let target = best.active_order();
    for r in records {
        let hits = r.population.iter().filter(|s| s.active_order() == target).count();
        r.order_match_pct = 100.0 * hits as f64 / r.population.len() as f64;
    }
}

/// Full learning run. In the params phase without a benchmark an order
/// phase runs first and its best stack becomes the benchmark.
pub fn run_evolution(
    scenario: &Scenario<f64>,
    cfg: &GpConfig,
    benchmark: Option<&Stack>,
    workers: usize,
) -> Result<EvolutionResult> {
    cfg.validate()?;
    scenario.validate()?;
    let pool = thread_pool(workers)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.master_seed);
    if cfg.phase == Phase::Params && benchmark.is_none() {
        let first = init_population(&scenario.dictionary, cfg, Phase::OrderOnly, None, &mut rng)?;
        let ordered = run_evolution_from(first, scenario, cfg, Phase::OrderOnly, &mut rng, &pool, 0)?;
        let start = ordered.records.last().map_or(0, |r| r.gen + 1);
        let pop = init_population(&scenario.dictionary, cfg, Phase::Params, Some(&ordered.best), &mut rng)?;
        let mut tuned = run_evolution_from(pop, scenario, cfg, Phase::Params, &mut rng, &pool, start)?;
        let mut records = ordered.records;
        records.append(&mut tuned.records);
        score_order_match(&mut records, &tuned.best);
        return Ok(EvolutionResult {
            best: tuned.best,
            records,
            evaluations: ordered.evaluations + tuned.evaluations,
            best_seeds: tuned.best_seeds,
        });
    }
    let pop = init_population(&scenario.dictionary, cfg, cfg.phase, benchmark, &mut rng)?;
    run_evolution_from(pop, scenario, cfg, cfg.phase, &mut rng, &pool, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::RobotModel;
    use crate::tasks::{TaskDef, TaskKind};
    use proptest::prelude::*;

    fn dict() -> TaskDictionary<f64> {
        let m = RobotModel::mobile(
            vec![0.3, 0.3],
            vec![(-2.0, 2.0); 2],
            crate::kinematics::BaseLimits {
                x: (-5.0, 5.0),
                y: (-5.0, 5.0),
            },
            0.2,
        );
        TaskDictionary::new(
            vec![
                TaskDef::new("T1", TaskKind::Oa),
                TaskDef::new("T2", TaskKind::Ik),
                TaskDef::new("T3", TaskKind::MaxManip),
                TaskDef::new("T4", TaskKind::MaxMjl),
            ],
            &m,
        )
        .unwrap()
    }

    fn ordered(ids: [&str; 4]) -> Stack {
        let d = dict();
        Stack::new(ids.iter().map(|id| TaskEntry::new(*id, true, d.get(id).unwrap().defaults)).collect())
    }

    fn costed(costs: &[f64]) -> Vec<Stack> {
        costs.iter().map(|c| ordered(["T1", "T2", "T3", "T4"]).with_cost(*c)).collect()
    }

    #[test]
    fn order_crossover_hand_example() {
        let a = ordered(["T1", "T2", "T3", "T4"]);
        let b = ordered(["T4", "T3", "T2", "T1"]);
        assert_eq!(crossover_at(&a, &b, 2).unwrap().order(), vec!["T1", "T2", "T4", "T3"]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            assert_eq!(crossover(&a, &a, &mut rng).unwrap(), a);
        }
    }

    #[test]
    fn tournament_keeps_pair_winners() {
        let pop = costed(&[1.0, 2.0, 3.0, 4.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = tournament_select(&pop, &mut rng).unwrap();
        assert_eq!(s.len(), 2);
        assert!(s.iter().any(|x| x.cost == Some(1.0)));
        let tied = tournament_select(&costed(&[5.0; 8]), &mut rng).unwrap();
        assert_eq!(tied.len(), 4);
        let mut unset = costed(&[1.0, 2.0, 3.0, 4.0]);
        unset[2].cost = None;
        assert!(matches!(tournament_select(&unset, &mut rng), Err(Error::Protocol(_))));
    }

    #[test]
    fn best_survives_every_pairing_of_six() {
        // Exhaustive over seeds covers all 15 pairings of six individuals.
        let pop = costed(&[3.0, 1.0, 4.0, 1.5, 9.0, 2.6]);
        let mut seen = std::collections::HashSet::new();
        for seed in 0..400 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = tournament_select(&pop, &mut rng).unwrap();
            assert!(s.iter().any(|x| x.cost == Some(1.0)));
            let mut costs: Vec<u64> = s.iter().map(|x| x.cost.unwrap().to_bits()).collect();
            costs.sort();
            seen.insert(costs);
        }
        assert!(seen.len() > 1);
    }

    #[test]
    fn degenerate_and_constrained_mutations() {
        let d = dict();
        let parent = ordered(["T1", "T2", "T3", "T4"]).with_cost(2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let same = apply_mutation(&parent, &d, 0.0, Mutation::Perturb, &mut rng);
        assert_eq!(same, parent.clone().without_cost());
        let mut lone = parent.clone();
        for e in lone.entries.iter_mut().skip(1) {
            e.active = false;
        }
        for _ in 0..50 {
            let c = apply_mutation(&lone, &d, 0.1, Mutation::Flip, &mut rng);
            assert!(c.entries[0].active);
        }
    }

    #[test]
    fn order_phase_freezes_parameters() {
        let d = dict();
        let cfg = GpConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pop = init_population(&d, &cfg, Phase::OrderOnly, None, &mut rng).unwrap();
        assert_eq!(pop.len(), 8);
        for s in &pop {
            assert!(s.cost.is_none());
            for e in &s.entries {
                assert!(e.active);
                assert_eq!(e.params, d.get(&e.task_id).unwrap().defaults);
            }
            for _ in 0..20 {
                let (c, op) = mutate(s, &d, &cfg, Phase::OrderOnly, &mut rng);
                assert_ne!(op, Mutation::Perturb);
                for e in &c.entries {
                    assert_eq!(e.params, d.get(&e.task_id).unwrap().defaults);
                }
            }
        }
        let mut again = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(pop, init_population(&d, &cfg, Phase::OrderOnly, None, &mut again).unwrap());
    }

    #[test]
    fn convergence_examples() {
        let clones = vec![ordered(["T1", "T2", "T3", "T4"]); 4];
        assert!(check_convergence(&clones, 1e-9).unwrap());
        let mut off = clones.clone();
        off[1].entries[3].active = false;
        assert!(!check_convergence(&off, 4.0).unwrap());
        assert!(check_convergence(&off, 4.5).unwrap());
    }

    #[test]
    fn episode_seeds_vary_by_generation_and_episode() {
        let a = episode_seed(7, 0, 0);
        assert_ne!(a, episode_seed(7, 1, 0));
        assert_ne!(a, episode_seed(7, 0, 1));
        assert_ne!(a, episode_seed(8, 0, 0));
        assert_eq!(a, episode_seed(7, 0, 0));
    }

    fn genome() -> impl Strategy<Value = Stack> {
        (
            Just(vec!["T1", "T2", "T3", "T4"]).prop_shuffle(),
            proptest::collection::vec(any::<bool>(), 4),
            any::<u64>(),
        )
            .prop_map(|(order, flags, seed)| {
                let d = dict();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut s = Stack::new(
                    order
                        .iter()
                        .zip(flags)
                        .map(|(id, f)| TaskEntry::new(*id, f, random_params(&d, id, &mut rng)))
                        .collect(),
                );
                ensure_active(&mut s);
                s
            })
    }

    proptest! {
        #[test]
        fn operators_preserve_validity(a in genome(), b in genome(), seed in any::<u64>()) {
            let d = dict();
            let cfg = GpConfig { param_sigma: 0.5, ..Default::default() };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = crossover(&a, &b, &mut rng).unwrap();
            prop_assert!(x.validate(&d).is_ok());
            prop_assert!(x.cost.is_none());
            for phase in [Phase::OrderOnly, Phase::Params, Phase::Joint] {
                let (m, _) = mutate(&a, &d, &cfg, phase, &mut rng);
                prop_assert!(m.validate(&d).is_ok());
                for e in &m.entries {
                    if let Some(g) = e.params.gamma_cl {
                        prop_assert!(g > 0.0 && g <= 2.0);
                    }
                }
            }
        }
    }
}
