//! Finite-population experiments: realized welfare of a continuum strategy,
//! gains from unilateral deviation, and the welfare gap to the best
//! strategy for the realized type mix.
//!
//! Initial types are the only Monte-Carlo input. Expectations over the
//! exogenous states are taken exactly over the history tree.

use std::collections::HashMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::equilibrium::best_response::argmax_1d;
use crate::equilibrium::{welfare_with_weights, ObliviousStrategy};
use crate::error::{Error, Result};
use crate::pricing::{csv_err, finish_csv, fmt_f};
use crate::program::{maximize_box, MaxConfig, Program};
use crate::scenario::{CostModel, HistoryTree, Scenario};

/// Default master seed.
pub const DEFAULT_SEED: u64 = 20_240_601;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Random stream of draw `draw` under master seed `seed`.
pub fn draw_rng(seed: u64, draw: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(splitmix(seed) ^ draw))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSample {
    pub n: usize,
    /// Initial type of every consumer.
    pub types: Vec<usize>,
    /// Number of consumers of each type.
    pub counts: Vec<usize>,
    pub seed: u64,
    pub draw: u64,
}

impl PopulationSample {
    pub fn empirical(&self) -> Vec<f64> {
        self.counts
            .iter()
            .map(|c| *c as f64 / self.n as f64)
            .collect()
    }

    /// Largest absolute deviation of the type shares from `eta`.
    pub fn distance(&self, eta: &[f64]) -> f64 {
        self.empirical()
            .iter()
            .zip(eta)
            .map(|(f, e)| (f - e).abs())
            .fold(0.0, f64::max)
    }
}

pub fn sample_population(eta: &[f64], n: usize, seed: u64, draw: u64) -> PopulationSample {
    let dist = WeightedIndex::new(eta).expect("type weights form a distribution");
    let mut rng = draw_rng(seed, draw);
    let types: Vec<usize> = (0..n).map(|_| dist.sample(&mut rng)).collect();
    let mut counts = vec![0; eta.len()];
    for &t in &types {
        counts[t] += 1;
    }
    PopulationSample {
        n,
        types,
        counts,
        seed,
        draw,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub per_draw: Vec<f64>,
    pub mean: f64,
    pub stderr: f64,
}

impl Summary {
    /// Statistics summed in draw order, so they do not depend on how the
    /// draws were scheduled.
    pub fn from_draws(per_draw: Vec<f64>) -> Self {
        let k = per_draw.len() as f64;
        let mean = per_draw.iter().sum::<f64>() / k;
        let var = if per_draw.len() > 1 {
            per_draw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)
        } else {
            0.0
        };
        Summary {
            per_draw,
            mean,
            stderr: (var / k).sqrt(),
        }
    }
}

/// Realized welfare per consumer of an `n`-consumer population whose
/// members follow `strategy`, with the `n`-consumer cost functions.
pub fn finite_welfare(
    scenario: &Scenario,
    tree: &HistoryTree,
    strategy: &ObliviousStrategy,
    sample: &PopulationSample,
    costs_n: &CostModel,
) -> f64 {
    let n = sample.n as f64;
    let z = crate::equilibrium::own_states(scenario, tree, strategy);
    let mut total = 0.0;
    let demand: Vec<f64> = (0..tree.len())
        .map(|id| {
            sample
                .counts
                .iter()
                .enumerate()
                .map(|(x, c)| *c as f64 * strategy.get(x, id))
                .sum()
        })
        .collect();
    for (id, nd) in tree.nodes.iter().enumerate() {
        let mut w = 0.0;
        for (x, &c) in sample.counts.iter().enumerate() {
            if c > 0 {
                w += c as f64
                    * scenario
                        .utility(x, nd.stage, nd.state)
                        .value(z[x][id], strategy.get(x, id));
            }
        }
        w -= costs_n.primary(demand[id], nd.state);
        w -= match nd.parent {
            None => costs_n.initial_ancillary(demand[id], nd.state),
            Some(p) => costs_n.ancillary(demand[p], demand[id], tree.nodes[p].state, nd.state),
        };
        total += nd.prob * w;
    }
    total / n
}

/// Realized welfare per consumer for `draws` independent populations of
/// size `n` following `strategy`.
pub fn simulate_symmetric(
    scenario: &Scenario,
    strategy: &ObliviousStrategy,
    n: usize,
    draws: usize,
    seed: u64,
) -> Result<Summary> {
    if n == 0 || draws == 0 {
        return Err(Error::Invalid(
            "population size and draw count must be positive".into(),
        ));
    }
    let tree = scenario.tree()?;
    let eta = scenario.eta(tree.s0);
    let costs_n = scenario.costs.scale_to_n(n);
    let per_draw: Vec<f64> = (0..draws as u64)
        .into_par_iter()
        .map(|d| {
            let s = sample_population(&eta, n, seed, d);
            finite_welfare(scenario, &tree, strategy, &s, &costs_n)
        })
        .collect();
    Ok(Summary::from_draws(per_draw))
}

#[derive(Debug, Clone)]
pub struct DeviationConfig {
    /// Number of sampled populations of the other consumers.
    pub draws: usize,
    /// Type of the deviating consumer.
    pub tagged_type: usize,
    pub a_points: usize,
    pub z_points: usize,
    pub prev_points: usize,
}

impl Default for DeviationConfig {
    fn default() -> Self {
        DeviationConfig {
            draws: 200,
            tagged_type: 0,
            a_points: 201,
            z_points: 201,
            prev_points: 201,
        }
    }
}

/// What the deviating consumer conditions on at a node besides the
/// history: its previous action and its own state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentedState {
    pub prev_action: f64,
    pub state: f64,
}

/// Deviating actions for one population of others, by history node. The
/// others' types are fixed within a draw, so the node determines the
/// augmented state and the others' empirical state.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationPolicy {
    pub actions: Vec<f64>,
    pub states: Vec<AugmentedState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationResult {
    pub n: usize,
    pub gain: Summary,
    /// Deviating policy found for each draw.
    pub policies: Vec<DeviationPolicy>,
    /// Smallest difference between the searched policy and conforming,
    /// before the conforming path is taken as a candidate.
    pub raw_min: f64,
    /// Bound on how far below zero a reported gain can fall because of the
    /// grids. Deviating paths are evaluated exactly and the conforming path
    /// is always a candidate, so this is zero.
    pub grid_error: f64,
}

/// The tagged consumer's problem against a fixed population of others.
struct Tagged<'a> {
    scenario: &'a Scenario,
    tree: &'a HistoryTree,
    costs_n: CostModel,
    others: Vec<f64>,
    ty: usize,
    conform: Vec<f64>,
}

impl Tagged<'_> {
    fn stage(&self, id: usize, z: f64, a: f64, prev: f64) -> f64 {
        let nd = &self.tree.nodes[id];
        let c = &self.costs_n;
        let total = self.others[id] + a;
        let p = c.primary_slope(total, nd.state);
        let u = self
            .scenario
            .utility(self.ty, nd.stage, nd.state)
            .value(z, a);
        match nd.parent {
            None => u - (p + c.initial_ancillary_slope(total, nd.state)) * a,
            Some(par) => {
                let before = self.others[par] + prev;
                let (q, w) = c.ancillary_grad(before, total, self.tree.nodes[par].state, nd.state);
                u - (p + w) * a - q * prev
            }
        }
    }

    fn policy(&self, actions: Vec<f64>) -> DeviationPolicy {
        let spec = &self.scenario.types[self.ty];
        let mut states: Vec<AugmentedState> = Vec::with_capacity(actions.len());
        for nd in &self.tree.nodes {
            states.push(match nd.parent {
                None => AugmentedState {
                    prev_action: 0.0,
                    state: spec.initial_state,
                },
                Some(p) => AugmentedState {
                    prev_action: actions[p],
                    state: spec.transition.next(states[p].state, actions[p], nd.state),
                },
            });
        }
        DeviationPolicy { actions, states }
    }

    fn path_value(&self, actions: &[f64]) -> f64 {
        let spec = &self.scenario.types[self.ty];
        let mut z = vec![0.0; self.tree.len()];
        let mut v = 0.0;
        for (id, nd) in self.tree.nodes.iter().enumerate() {
            let prev = match nd.parent {
                None => {
                    z[id] = spec.initial_state;
                    0.0
                }
                Some(p) => {
                    z[id] = spec.transition.next(z[p], actions[p], nd.state);
                    actions[p]
                }
            };
            v += nd.prob * self.stage(id, z[id], actions[id], prev);
        }
        v
    }

    /// Best action at `id` from a grid plus the conforming action, refined
    /// by golden-section search around the best grid point. `f` is the value
    /// of the subtree from `id` as a function of the action there.
    fn search(&self, id: usize, points: usize, f: impl Fn(f64) -> f64) -> (f64, f64) {
        let b = self.scenario.bounds.action;
        let (mut a, mut v) = argmax_1d(&f, b, points, true, 1e-12);
        let c = f(self.conform[id]);
        if c > v {
            a = self.conform[id];
            v = c;
        }
        (a, v)
    }

    fn leaf(&self, id: usize, z: f64, prev: f64, points: usize) -> (f64, f64) {
        self.search(id, points, |a| self.stage(id, z, a, prev))
    }

    /// Optimal path for trees with at most two stages, searching the second
    /// stage exactly for every first-stage candidate.
    fn exact_path(&self, points: usize) -> Vec<f64> {
        let spec = &self.scenario.types[self.ty];
        let tree = self.tree;
        let z0 = spec.initial_state;
        let root = |a: f64| {
            let mut v = self.stage(0, z0, a, 0.0);
            for &c in &tree.nodes[0].children {
                let zn = spec.transition.next(z0, a, tree.nodes[c].state);
                v += tree.cond_prob(c) * self.leaf(c, zn, a, points).1;
            }
            v
        };
        let (a0, _) = self.search(0, points, root);
        let mut path = vec![0.0; tree.len()];
        path[0] = a0;
        for &c in &tree.nodes[0].children {
            let zn = spec.transition.next(z0, a0, tree.nodes[c].state);
            path[c] = self.leaf(c, zn, a0, points).0;
        }
        path
    }
}

/// Mean gain of one consumer of the tagged type from deviating, in an
/// `n`-consumer market where everyone else follows `strategy`.
///
/// The deviating consumer knows the other consumers' types and its own
/// price impact. For horizons up to one the search over its actions is
/// exact apart from the action grid refined by golden-section search; for
/// longer horizons the continuation values are taken on a grid over (own
/// state, previous action) and the resulting path is evaluated exactly.
pub fn deviation_gain(
    scenario: &Scenario,
    strategy: &ObliviousStrategy,
    n: usize,
    seed: u64,
    cfg: &DeviationConfig,
) -> Result<DeviationResult> {
    if n == 0 || cfg.draws == 0 {
        return Err(Error::Invalid(
            "population size and draw count must be positive".into(),
        ));
    }
    let tree = scenario.tree()?;
    let eta = scenario.eta(tree.s0);
    let work = tree.len() * cfg.z_points * cfg.prev_points * cfg.a_points;
    if tree.horizon() > 1 && work > 2_000_000_000 {
        return Err(Error::Capacity {
            budget: 2_000_000_000,
        });
    }
    let costs_n = scenario.costs.scale_to_n(n);
    let conform = strategy.of_type(cfg.tagged_type).to_vec();
    let per_draw: Vec<(f64, DeviationPolicy)> = (0..cfg.draws as u64)
        .into_par_iter()
        .map(|d| {
            let s = sample_population(&eta, n - 1, seed, d);
            let others: Vec<f64> = (0..tree.len())
                .map(|id| {
                    s.counts
                        .iter()
                        .enumerate()
                        .map(|(x, c)| *c as f64 * strategy.get(x, id))
                        .sum()
                })
                .collect();
            let t = Tagged {
                scenario,
                tree: &tree,
                costs_n: costs_n.clone(),
                others,
                ty: cfg.tagged_type,
                conform: conform.clone(),
            };
            let v_conform = t.path_value(&conform);
            let path = if tree.horizon() <= 1 {
                t.exact_path(cfg.a_points)
            } else {
                grid_path(&t, cfg)
            };
            (t.path_value(&path) - v_conform, t.policy(path))
        })
        .collect();
    let raw_min = per_draw
        .iter()
        .map(|(g, _)| *g)
        .fold(f64::INFINITY, f64::min);
    let (raw, policies): (Vec<f64>, Vec<DeviationPolicy>) = per_draw.into_iter().unzip();
    let gains = raw.into_iter().map(|g| g.max(0.0)).collect();
    Ok(DeviationResult {
        n,
        gain: Summary::from_draws(gains),
        policies,
        raw_min,
        grid_error: 0.0,
    })
}

fn bilinear(v: &[f64], nz: usize, np: usize, fz: f64, fp: f64) -> f64 {
    let pz = fz.clamp(0.0, 1.0) * (nz - 1) as f64;
    let pp = fp.clamp(0.0, 1.0) * (np - 1) as f64;
    let iz = (pz.floor() as usize).min(nz - 2);
    let ip = (pp.floor() as usize).min(np - 2);
    let (tz, tp) = (pz - iz as f64, pp - ip as f64);
    let at = |i: usize, j: usize| v[i * np + j];
    at(iz, ip) * (1.0 - tz) * (1.0 - tp)
        + at(iz + 1, ip) * tz * (1.0 - tp)
        + at(iz, ip + 1) * (1.0 - tz) * tp
        + at(iz + 1, ip + 1) * tz * tp
}

/// Greedy path against continuation values on a (own state, previous
/// action) grid.
fn grid_path(t: &Tagged, cfg: &DeviationConfig) -> Vec<f64> {
    let sc = t.scenario;
    let tree = t.tree;
    let spec = &sc.types[t.ty];
    let (b, zmax) = (sc.bounds.action, sc.bounds.state);
    let (nz, np) = (cfg.z_points.max(2), cfg.prev_points.max(2));
    let mut v: Vec<Vec<f64>> = vec![vec![]; tree.len()];
    let obj = |id: usize, z: f64, prev: f64, a: f64, v: &Vec<Vec<f64>>| -> f64 {
        let mut out = t.stage(id, z, a, prev);
        for &c in &tree.nodes[id].children {
            let zn = spec.transition.next(z, a, tree.nodes[c].state);
            out += tree.cond_prob(c) * bilinear(&v[c], nz, np, zn / zmax, a / b);
        }
        out
    };
    let best = |id: usize, z: f64, prev: f64, v: &Vec<Vec<f64>>| -> (f64, f64) {
        let (mut a, mut val) = argmax_1d(|a| obj(id, z, prev, a, v), b, cfg.a_points, true, 1e-12);
        let c = obj(id, z, prev, t.conform[id], v);
        if c > val {
            a = t.conform[id];
            val = c;
        }
        (a, val)
    };
    for id in (1..tree.len()).rev() {
        let grid: Vec<f64> = (0..nz * np)
            .into_par_iter()
            .map(|k| {
                let z = zmax * (k / np) as f64 / (nz - 1) as f64;
                let prev = b * (k % np) as f64 / (np - 1) as f64;
                best(id, z, prev, &v).1
            })
            .collect();
        v[id] = grid;
    }
    let mut path = vec![0.0; tree.len()];
    let mut z = vec![0.0; tree.len()];
    for id in 0..tree.len() {
        let nd = &tree.nodes[id];
        let prev = match nd.parent {
            None => {
                z[id] = spec.initial_state;
                0.0
            }
            Some(p) => {
                z[id] = spec.transition.next(z[p], path[p], nd.state);
                path[p]
            }
        };
        path[id] = best(id, z[id], prev, &v).0;
    }
    path
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapRow {
    pub n: usize,
    pub gap: Summary,
}

/// Welfare lost per consumer by following `strategy` instead of the best
/// strategy for each sampled type mix.
pub fn welfare_gap(
    scenario: &Scenario,
    strategy: &ObliviousStrategy,
    n_list: &[usize],
    draws: usize,
    seed: u64,
) -> Result<Vec<GapRow>> {
    if draws == 0 || n_list.contains(&0) {
        return Err(Error::Invalid(
            "population size and draw count must be positive".into(),
        ));
    }
    let tree = scenario.tree()?;
    let eta = scenario.eta(tree.s0);
    let b = scenario.bounds.action;
    let mut rows = Vec::new();
    for &n in n_list {
        let samples: Vec<PopulationSample> = (0..draws as u64)
            .map(|d| sample_population(&eta, n, seed, d))
            .collect();
        let mut distinct: Vec<Vec<usize>> = samples.iter().map(|s| s.counts.clone()).collect();
        distinct.sort();
        distinct.dedup();
        let solved: HashMap<Vec<usize>, f64> = distinct
            .par_iter()
            .map(|counts| {
                let f: Vec<f64> = counts.iter().map(|c| *c as f64 / n as f64).collect();
                let prog = Program::welfare(scenario, &tree, &f);
                let start: Vec<f64> = prog
                    .types
                    .iter()
                    .flat_map(|(x, _)| strategy.of_type(*x).to_vec())
                    .collect();
                let d = start.len();
                let out = maximize_box(
                    &prog,
                    &vec![0.0; d],
                    &vec![b; d],
                    &[start],
                    &MaxConfig::default(),
                );
                let base = welfare_with_weights(scenario, &tree, strategy, &f).total;
                (counts.clone(), out.value - base)
            })
            .collect();
        let per_draw = samples.iter().map(|s| solved[&s.counts]).collect();
        rows.push(GapRow {
            n,
            gap: Summary::from_draws(per_draw),
        });
    }
    Ok(rows)
}

/// Columns `experiment, n, draws, seed, mean, stderr, metric`.
pub fn to_csv(rows: &[(String, usize, usize, u64, Summary, String)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(vec![]);
    w.write_record([
        "experiment",
        "n",
        "draws",
        "seed",
        "mean",
        "stderr",
        "metric",
    ])
    .map_err(csv_err)?;
    for (exp, n, draws, seed, s, metric) in rows {
        w.write_record([
            exp.clone(),
            n.to_string(),
            draws.to_string(),
            seed.to_string(),
            fmt_f(s.mean),
            fmt_f(s.stderr),
            metric.clone(),
        ])
        .map_err(csv_err)?;
    }
    finish_csv(w)
}
