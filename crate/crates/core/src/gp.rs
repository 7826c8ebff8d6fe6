//! Island-model genetic programming over [`Expr`] trees.
//!
//! Each island is a steady-state population driven by annealed tournament
//! selection. Early generations replace the oldest member, later ones the
//! loser of a tournament. The best formula found at every complexity level is
//! kept in a [`ParetoArchive`], whose members periodically get their constants
//! refined by Nelder-Mead.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::random::random_leaf;
use crate::expr::{random_expr, simplify, Expr, FunctionSet};
use crate::numopt::{local_minimize, Objective};
use crate::Matrix;

#[derive(Debug, Error)]
pub enum GpError {
    #[error("training data is empty")]
    EmptyData,
    #[error("{rows} input rows but {targets} targets")]
    LengthMismatch { rows: usize, targets: usize },
    #[error("invalid GP configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite value in training data")]
    NonFiniteData,
}

/// A candidate formula with its bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Genome {
    pub expr: Expr,
    /// Generations survived since creation.
    pub age: usize,
    /// Training MSE, `f64::INFINITY` when predictions are non-finite.
    pub loss: f64,
    pub complexity: usize,
}

impl Genome {
    pub fn new(expr: Expr, x: &Matrix, y: &[f64]) -> Self {
        let loss = mse_of(&expr, x, y);
        let complexity = expr.complexity();
        Self { expr, age: 0, loss, complexity }
    }

    pub fn fitness(&self, parsimony: f64) -> f64 {
        self.loss + parsimony * self.complexity as f64
    }
}

/// Relative weights of the mutation operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MutationWeights {
    pub point: f64,
    pub subtree: f64,
    pub insert: f64,
    pub delete: f64,
    pub constant: f64,
}

impl Default for MutationWeights {
    fn default() -> Self {
        Self { point: 1.0, subtree: 1.0, insert: 1.0, delete: 0.7, constant: 2.0 }
    }
}

impl MutationWeights {
    fn as_array(&self) -> [f64; 5] {
        [self.point, self.subtree, self.insert, self.delete, self.constant]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    Point,
    Subtree,
    Insert,
    Delete,
    Constant,
}

const MUTATIONS: [Mutation; 5] = [
    Mutation::Point,
    Mutation::Subtree,
    Mutation::Insert,
    Mutation::Delete,
    Mutation::Constant,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpConfig {
    pub islands: usize,
    pub population: usize,
    pub generations: usize,
    pub tournament_size: usize,
    pub selection_p: f64,
    pub temperature_initial: f64,
    pub temperature_final: f64,
    pub parsimony: f64,
    pub mutation: MutationWeights,
    pub crossover_prob: f64,
    pub migration_interval: usize,
    pub migration_fraction: f64,
    pub max_complexity: usize,
    pub max_depth: usize,
    pub init_depth: usize,
    /// Children produced per island per generation; 0 means one per member.
    pub events_per_generation: usize,
    /// Fraction of generations that use age-regularized replacement.
    pub age_regularized_fraction: f64,
    pub const_opt_interval: usize,
    pub const_opt_budget: usize,
    /// Probability that a new child gets a short constant refinement.
    pub child_const_opt_prob: f64,
    /// Evaluations per constant for that refinement.
    pub child_const_opt_budget: usize,
    pub seed: u64,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            islands: 4,
            population: 100,
            generations: 40,
            tournament_size: 8,
            selection_p: 0.9,
            temperature_initial: 1.0,
            temperature_final: 0.05,
            parsimony: 1e-4,
            mutation: MutationWeights::default(),
            crossover_prob: 0.1,
            migration_interval: 10,
            migration_fraction: 0.05,
            max_complexity: 40,
            max_depth: 12,
            init_depth: 4,
            events_per_generation: 0,
            age_regularized_fraction: 0.2,
            const_opt_interval: 2,
            const_opt_budget: 100,
            child_const_opt_prob: 0.1,
            child_const_opt_budget: 20,
            seed: 0,
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<(), GpError> {
        let bad = |m: &str| Err(GpError::InvalidConfig(m.to_string()));
        if self.islands == 0 {
            return bad("islands must be at least 1");
        }
        if self.population < 2 {
            return bad("population must be at least 2");
        }
        if self.tournament_size == 0 || self.tournament_size > self.population {
            return bad("tournament size must be in 1..=population");
        }
        for (name, p) in [
            ("selection_p", self.selection_p),
            ("crossover_prob", self.crossover_prob),
            ("migration_fraction", self.migration_fraction),
            ("age_regularized_fraction", self.age_regularized_fraction),
            ("child_const_opt_prob", self.child_const_opt_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(GpError::InvalidConfig(format!("{name} must lie in [0, 1]")));
            }
        }
        if !(self.temperature_initial >= 0.0 && self.temperature_final >= 0.0) {
            return bad("temperatures must be non-negative");
        }
        if !(self.parsimony >= 0.0 && self.parsimony.is_finite()) {
            return bad("parsimony must be finite and non-negative");
        }
        let w = self.mutation.as_array();
        if w.iter().any(|v| !(*v >= 0.0 && v.is_finite())) || w.iter().sum::<f64>() <= 0.0 {
            return bad("mutation weights must be non-negative with a positive sum");
        }
        if self.max_complexity < 3 {
            return bad("max complexity must be at least 3");
        }
        if self.max_depth < 2 || self.init_depth == 0 {
            return bad("depth limits too small");
        }
        Ok(())
    }

    fn temperature(&self, generation: usize) -> f64 {
        let span = self.generations.saturating_sub(1).max(1) as f64;
        let frac = (generation as f64 / span).min(1.0);
        self.temperature_initial + (self.temperature_final - self.temperature_initial) * frac
    }

    fn events(&self) -> usize {
        if self.events_per_generation == 0 {
            self.population
        } else {
            self.events_per_generation
        }
    }
}

fn mse_of(expr: &Expr, x: &Matrix, y: &[f64]) -> f64 {
    let pred = expr.eval_unchecked(x);
    let mut acc = 0.0;
    for (p, t) in pred.iter().zip(y) {
        if !p.is_finite() {
            return f64::INFINITY;
        }
        acc += (p - t) * (p - t);
    }
    let m = acc / y.len() as f64;
    if m.is_finite() {
        m
    } else {
        f64::INFINITY
    }
}

/// MSE plus parsimony times complexity; infinite for non-finite predictions.
pub fn score(expr: &Expr, x: &Matrix, y: &[f64], parsimony: f64) -> f64 {
    mse_of(expr, x, y) + parsimony * expr.complexity() as f64
}

/// Annealed probabilistic tournament over `fitness`, returning an index.
///
/// Samples `k` distinct members, sorts them best first and accepts rank `i`
/// with probability `p * exp(-d_i / temperature)`, where `d_i` is the fitness
/// gap to the best sampled member relative to that member's fitness. An
/// infinite temperature gives the plain tournament. If every rank is
/// rejected the best sampled member wins.
pub fn tournament_select<R: Rng + ?Sized>(
    fitness: &[f64],
    k: usize,
    p: f64,
    temperature: f64,
    rng: &mut R,
) -> usize {
    let n = fitness.len();
    let k = k.clamp(1, n);
    let mut picked = sample(rng, n, k).into_vec();
    picked.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]).then(a.cmp(&b)));
    let best = fitness[picked[0]];
    for &idx in &picked {
        let factor = if temperature.is_infinite() {
            1.0
        } else {
            let gap = fitness[idx] - best;
            if gap <= 0.0 {
                1.0
            } else if temperature <= 0.0 {
                0.0
            } else {
                let rel = gap / best.abs().max(f64::MIN_POSITIVE);
                (-rel / temperature).exp()
            }
        };
        if rng.random::<f64>() < p * factor {
            return idx;
        }
    }
    picked[0]
}

fn pick_weighted<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

fn is_leaf(e: &Expr) -> bool {
    matches!(e, Expr::Const(_) | Expr::Var(_))
}

/// Applies one mutation operator. Returns `None` when the operator does not
/// apply to this tree (e.g. deleting from a single leaf).
pub fn apply_mutation<R: Rng + ?Sized>(
    expr: &Expr,
    op: Mutation,
    fset: &FunctionSet,
    arity: usize,
    rng: &mut R,
) -> Option<Expr> {
    let size = expr.size();
    match op {
        Mutation::Point => {
            let i = rng.random_range(0..size);
            let node = expr.node(i)?;
            let new = match node {
                Expr::Const(_) | Expr::Var(_) => random_leaf(rng, arity),
                Expr::Unary(_, c) => {
                    if fset.unary.is_empty() {
                        return None;
                    }
                    let f = fset.unary[rng.random_range(0..fset.unary.len())];
                    Expr::Unary(f, c.clone())
                }
                Expr::Binary(_, a, b) => {
                    if fset.binary.is_empty() {
                        return None;
                    }
                    let op = fset.binary[rng.random_range(0..fset.binary.len())];
                    Expr::Binary(op, a.clone(), b.clone())
                }
            };
            Some(expr.replace_node(i, &new))
        }
        Mutation::Subtree => {
            let i = rng.random_range(0..size);
            let depth = rng.random_range(1..=3);
            Some(expr.replace_node(i, &random_expr(rng, depth, arity, fset)))
        }
        Mutation::Insert => {
            let i = rng.random_range(0..size);
            let node = expr.node(i)?.clone();
            let (nu, nb) = (fset.unary.len(), fset.binary.len());
            if nu + nb == 0 {
                return None;
            }
            let pick = rng.random_range(0..nu + nb);
            let new = if pick < nu {
                Expr::unary(fset.unary[pick], node)
            } else {
                let op = fset.binary[pick - nu];
                let depth = rng.random_range(1..=2);
                let other = random_expr(rng, depth, arity, fset);
                if rng.random_bool(0.5) {
                    Expr::binary(op, node, other)
                } else {
                    Expr::binary(op, other, node)
                }
            };
            Some(expr.replace_node(i, &new))
        }
        Mutation::Delete => {
            let interior: Vec<usize> = (0..size)
                .filter(|&i| expr.node(i).is_some_and(|n| !is_leaf(n)))
                .collect();
            if interior.is_empty() {
                return None;
            }
            let i = interior[rng.random_range(0..interior.len())];
            let child = match expr.node(i)? {
                Expr::Unary(_, c) => c.as_ref().clone(),
                Expr::Binary(_, a, b) => {
                    if rng.random_bool(0.5) {
                        a.as_ref().clone()
                    } else {
                        b.as_ref().clone()
                    }
                }
                _ => unreachable!(),
            };
            Some(expr.replace_node(i, &child))
        }
        Mutation::Constant => {
            let mut consts = expr.constants();
            if consts.is_empty() {
                return None;
            }
            let j = rng.random_range(0..consts.len());
            let c = consts[j];
            consts[j] = if c.abs() < 0.1 {
                let step: f64 = StandardNormal.sample(rng);
                c + step
            } else {
                let z: f64 = Normal::new(0.0, 0.1).unwrap().sample(rng);
                c * z.exp()
            };
            Some(expr.with_constants(&consts))
        }
    }
}

const MAX_ATTEMPTS: usize = 10;

/// Mutates `expr` with an operator drawn from `weights`; retries until the
/// child respects the complexity and depth caps and returns the parent
/// unchanged if no attempt succeeds.
pub fn mutate<R: Rng + ?Sized>(
    expr: &Expr,
    weights: &MutationWeights,
    fset: &FunctionSet,
    arity: usize,
    max_complexity: usize,
    max_depth: usize,
    rng: &mut R,
) -> Expr {
    let w = weights.as_array();
    for _ in 0..MAX_ATTEMPTS {
        let op = MUTATIONS[pick_weighted(&w, rng)];
        if let Some(child) = apply_mutation(expr, op, fset, arity, rng) {
            if child.complexity() <= max_complexity && child.depth() <= max_depth {
                return child;
            }
        }
    }
    expr.clone()
}

/// Swaps random non-root subtrees. Trees without internal crossover points
/// (single leaves) come back unchanged, as do pairs that would exceed the cap.
pub fn crossover<R: Rng + ?Sized>(
    a: &Expr,
    b: &Expr,
    max_complexity: usize,
    max_depth: usize,
    rng: &mut R,
) -> (Expr, Expr) {
    let (sa, sb) = (a.size(), b.size());
    if sa < 2 || sb < 2 {
        return (a.clone(), b.clone());
    }
    for _ in 0..MAX_ATTEMPTS {
        let i = rng.random_range(1..sa);
        let j = rng.random_range(1..sb);
        let (na, nb) = (a.node(i).unwrap(), b.node(j).unwrap());
        let c1 = a.replace_node(i, nb);
        let c2 = b.replace_node(j, na);
        let ok = |e: &Expr| e.complexity() <= max_complexity && e.depth() <= max_depth;
        if ok(&c1) && ok(&c2) {
            return (c1, c2);
        }
    }
    (a.clone(), b.clone())
}

/// Best genome per complexity level with dominated entries removed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParetoArchive {
    entries: BTreeMap<usize, Genome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveRecord {
    pub complexity: usize,
    pub loss: f64,
    pub formula: String,
}

impl ParetoArchive {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts `g` unless an entry of equal or lower complexity has a loss
    /// at most `g.loss`; entries that `g` dominates are dropped.
    pub fn insert(&mut self, g: Genome) -> bool {
        if !g.loss.is_finite() {
            return false;
        }
        let c = g.complexity;
        if self.entries.range(..=c).any(|(_, e)| e.loss <= g.loss) {
            return false;
        }
        let loss = g.loss;
        self.entries.insert(c, g);
        self.entries.retain(|&k, e| k <= c || e.loss < loss);
        true
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, complexity: usize) -> Option<&Genome> {
        self.entries.get(&complexity)
    }

    /// Entries in increasing complexity (hence decreasing loss).
    pub fn iter(&self) -> impl Iterator<Item = &Genome> {
        self.entries.values()
    }

    /// The lowest-loss entry, which is the most complex one.
    pub fn best(&self) -> Option<&Genome> {
        self.entries.values().next_back()
    }

    /// Lowest-loss entry with complexity at most `max_complexity`.
    pub fn best_within(&self, max_complexity: usize) -> Option<&Genome> {
        self.entries.range(..=max_complexity).next_back().map(|(_, g)| g)
    }

    pub fn is_pareto(&self) -> bool {
        let losses: Vec<f64> = self.entries.values().map(|g| g.loss).collect();
        losses.windows(2).all(|w| w[1] < w[0])
    }

    pub fn records(&self) -> Vec<ArchiveRecord> {
        self.entries
            .values()
            .map(|g| ArchiveRecord {
                complexity: g.complexity,
                loss: g.loss,
                formula: g.expr.to_string(),
            })
            .collect()
    }
}

impl Serialize for ParetoArchive {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.records().serialize(s)
    }
}

struct Island {
    members: Vec<Genome>,
    /// Creation order, used to find the oldest member.
    births: Vec<u64>,
    next_birth: u64,
    rng: ChaCha8Rng,
}

impl Island {
    fn fitness(&self, parsimony: f64) -> Vec<f64> {
        self.members.iter().map(|g| g.fitness(parsimony)).collect()
    }

    fn replace(&mut self, slot: usize, g: Genome) {
        self.members[slot] = g;
        self.births[slot] = self.next_birth;
        self.next_birth += 1;
    }

    fn oldest(&self) -> usize {
        (0..self.births.len()).min_by_key(|&i| self.births[i]).unwrap()
    }

    fn worst(&self, parsimony: f64) -> usize {
        let f = self.fitness(parsimony);
        (0..f.len())
            .max_by(|&a, &b| f[a].total_cmp(&f[b]).then(b.cmp(&a)))
            .unwrap()
    }
}

/// A GP run that can be advanced one generation at a time.
pub struct GpRun<'a> {
    x: &'a Matrix,
    y: &'a [f64],
    fset: FunctionSet,
    cfg: GpConfig,
    islands: Vec<Island>,
    archive: ParetoArchive,
    refined: BTreeSet<String>,
    generation: usize,
    degenerate: bool,
}

impl<'a> GpRun<'a> {
    pub fn new(x: &'a Matrix, y: &'a [f64], fset: FunctionSet, cfg: GpConfig) -> Result<Self, GpError> {
        cfg.validate()?;
        if y.is_empty() || x.n_rows() == 0 {
            return Err(GpError::EmptyData);
        }
        if x.n_rows() != y.len() {
            return Err(GpError::LengthMismatch { rows: x.n_rows(), targets: y.len() });
        }
        if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
            return Err(GpError::NonFiniteData);
        }
        let arity = x.n_cols();
        let mut islands = Vec::with_capacity(cfg.islands);
        for i in 0..cfg.islands {
            let mut irng = ChaCha8Rng::seed_from_u64(cfg.seed);
            irng.set_stream(i as u64 + 1);
            let mut members = Vec::with_capacity(cfg.population);
            while members.len() < cfg.population {
                let e = random_expr(&mut irng, cfg.init_depth, arity, &fset);
                if e.complexity() <= cfg.max_complexity && e.depth() <= cfg.max_depth {
                    members.push(Genome::new(e, x, y));
                }
            }
            let n = members.len() as u64;
            islands.push(Island { members, births: (0..n).collect(), next_birth: n, rng: irng });
        }

        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let degenerate = y.iter().all(|v| *v == y[0]);
        let mut archive = ParetoArchive::new();
        let constant = if degenerate { y[0] } else { mean };
        archive.insert(Genome::new(Expr::Const(constant), x, y));
        let mut run = Self {
            x,
            y,
            fset,
            cfg,
            islands,
            archive,
            refined: BTreeSet::new(),
            generation: 0,
            degenerate,
        };
        run.update_archive();
        Ok(run)
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn archive(&self) -> &ParetoArchive {
        &self.archive
    }

    pub fn islands(&self) -> impl Iterator<Item = &[Genome]> {
        self.islands.iter().map(|i| i.members.as_slice())
    }

    /// Per island, a creation stamp for each member slot; a slot keeps its
    /// stamp for as long as its genome survives.
    pub fn birth_stamps(&self) -> impl Iterator<Item = &[u64]> {
        self.islands.iter().map(|i| i.births.as_slice())
    }

    pub fn is_done(&self) -> bool {
        self.degenerate || self.generation >= self.cfg.generations
    }

    /// Runs one generation on every island, then migration, archive update,
    /// and (on schedule) constant refinement.
    pub fn step(&mut self) {
        if self.is_done() {
            return;
        }
        let gen = self.generation;
        let cfg = &self.cfg;
        let age_phase = (gen as f64) < cfg.age_regularized_fraction * cfg.generations as f64;
        let temperature = cfg.temperature(gen);
        let (x, y, fset) = (self.x, self.y, &self.fset);
        self.islands.par_iter_mut().for_each(|island| {
            for g in &mut island.members {
                g.age += 1;
            }
            evolve_island(island, x, y, fset, cfg, temperature, age_phase);
        });
        self.generation += 1;

        let interval = self.cfg.migration_interval;
        if self.islands.len() > 1 && interval > 0 && self.generation % interval == 0 {
            self.migrate();
        }
        self.update_archive();
        let interval = self.cfg.const_opt_interval;
        if interval > 0 && self.generation % interval == 0 {
            self.refine_constants();
        }
    }

    pub fn run(mut self) -> ParetoArchive {
        while !self.is_done() {
            self.step();
        }
        self.archive
    }

    /// Ring migration: the top fraction of island `i` replaces the worst
    /// members of island `i + 1`.
    fn migrate(&mut self) {
        let n = self.islands.len();
        let parsimony = self.cfg.parsimony;
        let count = ((self.cfg.migration_fraction * self.cfg.population as f64).ceil() as usize).max(1);
        let emigrants: Vec<Vec<Genome>> = self
            .islands
            .iter()
            .map(|isl| {
                let f = isl.fitness(parsimony);
                let mut idx: Vec<usize> = (0..f.len()).collect();
                idx.sort_by(|&a, &b| f[a].total_cmp(&f[b]).then(a.cmp(&b)));
                idx.iter().take(count).map(|&i| isl.members[i].clone()).collect()
            })
            .collect();
        for (i, group) in emigrants.into_iter().enumerate() {
            let dest = &mut self.islands[(i + 1) % n];
            for mut g in group {
                g.age = 0;
                let slot = dest.worst(parsimony);
                dest.replace(slot, g);
            }
        }
    }

    fn update_archive(&mut self) {
        for island in &self.islands {
            for g in &island.members {
                if g.loss.is_finite() {
                    self.archive.insert(g.clone());
                }
            }
        }
        self.simplify_archive();
    }

    fn simplify_archive(&mut self) {
        let entries: Vec<Genome> = self.archive.iter().cloned().collect();
        for g in entries {
            let s = simplify_in(&g.expr, &self.fset, self.x.n_cols(), &self.cfg);
            if s == g.expr {
                continue;
            }
            let sg = Genome::new(s, self.x, self.y);
            if sg.loss <= g.loss {
                if sg.complexity == g.complexity {
                    self.archive.entries.insert(g.complexity, Genome { age: g.age, ..sg });
                } else {
                    self.archive.insert(Genome { age: g.age, ..sg });
                }
            }
        }
    }

    fn refine_constants(&mut self) {
        let todo: Vec<Genome> = self
            .archive
            .iter()
            .filter(|g| !g.expr.constants().is_empty() && !self.refined.contains(&g.expr.to_string()))
            .cloned()
            .collect();
        let (x, y, budget) = (self.x, self.y, self.cfg.const_opt_budget);
        let improved: Vec<(String, Option<Genome>)> = todo
            .par_iter()
            .map(|g| {
                let per_constant = budget / g.expr.constants().len().max(1);
                (g.expr.to_string(), refine(g, x, y, per_constant.max(1)))
            })
            .collect();
        let n_islands = self.islands.len();
        let mut target = self.generation;
        for (key, better) in improved {
            self.refined.insert(key);
            if let Some(b) = better {
                self.refined.insert(b.expr.to_string());
                self.archive.insert(b.clone());
                let island = &mut self.islands[target % n_islands];
                target += 1;
                let slot = island.worst(self.cfg.parsimony);
                island.replace(slot, Genome { age: 0, ..b });
            }
        }
        self.simplify_archive();
    }
}

/// Nelder-Mead over the constants of `g`; `Some` only on strict improvement.
fn refine(g: &Genome, x: &Matrix, y: &[f64], per_constant: usize) -> Option<Genome> {
    let c0 = g.expr.constants();
    if c0.is_empty() {
        return None;
    }
    let expr = &g.expr;
    let obj = Objective::new(c0.len(), |c: &[f64]| mse_of(&expr.with_constants(c), x, y));
    let r = local_minimize(&obj, &c0, per_constant * (c0.len() + 1)).ok()?;
    if r.f < g.loss {
        let better = Genome { age: g.age, ..Genome::new(expr.with_constants(&r.x), x, y) };
        (better.loss < g.loss).then_some(better)
    } else {
        None
    }
}

/// Simplifies `e` unless the rewrite leaves `fset` or the size limits.
fn simplify_in(e: &Expr, fset: &FunctionSet, arity: usize, cfg: &GpConfig) -> Expr {
    let s = simplify(e);
    if s.complexity() <= cfg.max_complexity && s.depth() <= cfg.max_depth && s.validate(arity, fset).is_ok() {
        s
    } else {
        e.clone()
    }
}

fn evolve_island(
    island: &mut Island,
    x: &Matrix,
    y: &[f64],
    fset: &FunctionSet,
    cfg: &GpConfig,
    temperature: f64,
    age_phase: bool,
) {
    let arity = x.n_cols();
    for _ in 0..cfg.events() {
        let fitness = island.fitness(cfg.parsimony);
        let k = cfg.tournament_size;
        let children: Vec<Expr> = if island.rng.random::<f64>() < cfg.crossover_prob {
            let a = tournament_select(&fitness, k, cfg.selection_p, temperature, &mut island.rng);
            let b = tournament_select(&fitness, k, cfg.selection_p, temperature, &mut island.rng);
            let (c1, c2) = crossover(
                &island.members[a].expr,
                &island.members[b].expr,
                cfg.max_complexity,
                cfg.max_depth,
                &mut island.rng,
            );
            vec![c1, c2]
        } else {
            let a = tournament_select(&fitness, k, cfg.selection_p, temperature, &mut island.rng);
            vec![mutate(
                &island.members[a].expr,
                &cfg.mutation,
                fset,
                arity,
                cfg.max_complexity,
                cfg.max_depth,
                &mut island.rng,
            )]
        };
        for child in children {
            let mut g = Genome::new(simplify_in(&child, fset, arity, cfg), x, y);
            if !g.loss.is_finite() {
                continue;
            }
            if island.rng.random::<f64>() < cfg.child_const_opt_prob {
                if let Some(better) = refine(&g, x, y, cfg.child_const_opt_budget) {
                    g = better;
                }
            }
            let slot = if age_phase {
                island.oldest()
            } else {
                let f = island.fitness(cfg.parsimony);
                let n = f.len();
                let picked = sample(&mut island.rng, n, k.min(n)).into_vec();
                picked
                    .into_iter()
                    .max_by(|&a, &b| f[a].total_cmp(&f[b]).then(b.cmp(&a)))
                    .unwrap()
            };
            island.replace(slot, g);
        }
    }
}

/// Runs a full GP search and returns the merged Pareto archive.
pub fn evolve(x: &Matrix, y: &[f64], fset: &FunctionSet, cfg: &GpConfig) -> Result<ParetoArchive, GpError> {
    Ok(GpRun::new(x, y, fset.clone(), cfg.clone())?.run())
}
