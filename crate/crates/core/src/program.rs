//! The welfare / payoff program over an action table, and a box-constrained
//! maximizer for it.
//!
//! Variables are the actions of the listed consumer types at every history
//! node, laid out type-major (`slot * nodes + node`).

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::num::{Jet, Real, Smoothing};
use crate::scenario::{CostModel, HistoryTree, Scenario};

pub trait Objective: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64], sm: Smoothing) -> f64;
    /// Value, gradient and row-major Hessian.
    fn jet(&self, x: &[f64], sm: Smoothing) -> (f64, Vec<f64>, Vec<f64>);
}

/// Expected weighted utility of some consumer types, minus optionally the
/// supplier costs of their aggregate demand, linear charges per node and a
/// proximal term.
pub struct Program<'a> {
    pub scenario: &'a Scenario,
    pub tree: &'a HistoryTree,
    /// `(type, weight)` of every variable block.
    pub types: Vec<(usize, f64)>,
    pub costs: Option<&'a CostModel>,
    /// Per-node price charged on every unit of action.
    pub prices: Option<Vec<f64>>,
    /// `rho` and the centre point of `-(rho/2) * sum weight * P(h) * (a - c)^2`.
    pub proximal: Option<(f64, Vec<f64>)>,
    paths: Vec<Vec<usize>>,
}

impl<'a> Program<'a> {
    pub fn new(scenario: &'a Scenario, tree: &'a HistoryTree, types: Vec<(usize, f64)>) -> Self {
        let paths = (0..tree.len()).map(|n| tree.path(n)).collect();
        Program {
            scenario,
            tree,
            types,
            costs: None,
            prices: None,
            proximal: None,
            paths,
        }
    }

    /// Expected welfare with the given type weights.
    pub fn welfare(scenario: &'a Scenario, tree: &'a HistoryTree, weights: &[f64]) -> Self {
        let types = weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(x, w)| (x, *w))
            .collect();
        let mut p = Program::new(scenario, tree, types);
        p.costs = Some(&scenario.costs);
        p
    }

    pub fn nodes(&self) -> usize {
        self.tree.len()
    }

    fn path_utility<R: Real>(&self, ty: usize, path: &[usize], acts: &[R], sm: Smoothing) -> R {
        let spec = &self.scenario.types[ty];
        let mut z = R::constant(spec.initial_state);
        for k in 0..path.len() - 1 {
            let next = self.tree.nodes[path[k + 1]].state;
            z = spec.transition.eval(&z, &acts[k], next, sm);
        }
        let nd = &self.tree.nodes[*path.last().unwrap()];
        self.scenario
            .utility(ty, nd.stage, nd.state)
            .eval(&z, acts.last().unwrap(), sm)
    }

    fn demand(&self, x: &[f64]) -> Vec<f64> {
        let n = self.nodes();
        (0..n)
            .map(|node| {
                self.types
                    .iter()
                    .enumerate()
                    .map(|(slot, (_, w))| w * x[slot * n + node])
                    .sum()
            })
            .collect()
    }
}

impl Objective for Program<'_> {
    fn dim(&self) -> usize {
        self.types.len() * self.nodes()
    }

    fn value(&self, x: &[f64], sm: Smoothing) -> f64 {
        let n = self.nodes();
        let mut total = 0.0;
        for (slot, &(ty, w)) in self.types.iter().enumerate() {
            let block = &x[slot * n..(slot + 1) * n];
            for node in 0..n {
                let path = &self.paths[node];
                let acts: Vec<f64> = path.iter().map(|&m| block[m]).collect();
                let prob = self.tree.nodes[node].prob;
                let mut v = self.path_utility(ty, path, &acts, sm);
                if let Some(pr) = &self.prices {
                    v -= pr[node] * block[node];
                }
                if let Some((rho, c)) = &self.proximal {
                    let d = block[node] - c[slot * n + node];
                    v -= 0.5 * rho * d * d;
                }
                total += prob * w * v;
            }
        }
        if let Some(costs) = self.costs {
            let a = self.demand(x);
            for (node, nd) in self.tree.nodes.iter().enumerate() {
                let mut c = costs.primary(a[node], nd.state);
                c += match nd.parent {
                    None => costs.initial_ancillary(a[node], nd.state),
                    Some(p) => costs.ancillary(a[p], a[node], self.tree.nodes[p].state, nd.state),
                };
                total -= nd.prob * c;
            }
        }
        total
    }

    fn jet(&self, x: &[f64], sm: Smoothing) -> (f64, Vec<f64>, Vec<f64>) {
        let n = self.nodes();
        let dim = self.dim();
        let mut f = 0.0;
        let mut g = vec![0.0; dim];
        let mut h = vec![0.0; dim * dim];
        for (slot, &(ty, w)) in self.types.iter().enumerate() {
            let base = slot * n;
            for node in 0..n {
                let path = &self.paths[node];
                let m = path.len();
                let acts: Vec<Jet> = path
                    .iter()
                    .enumerate()
                    .map(|(k, &id)| Jet::variable(x[base + id], k, m))
                    .collect();
                let u = self.path_utility(ty, path, &acts, sm);
                let k = self.tree.nodes[node].prob * w;
                f += k * u.v;
                for (i, &pi) in path.iter().enumerate() {
                    if let Some(gi) = u.g.get(i) {
                        g[base + pi] += k * gi;
                    }
                    for (j, &pj) in path.iter().enumerate() {
                        if i < u.dim() && j < u.dim() {
                            h[(base + pi) * dim + base + pj] += k * u.hess(i, j);
                        }
                    }
                }
                let idx = base + node;
                if let Some(pr) = &self.prices {
                    f -= k * pr[node] * x[idx];
                    g[idx] -= k * pr[node];
                }
                if let Some((rho, c)) = &self.proximal {
                    let d = x[idx] - c[idx];
                    f -= 0.5 * k * rho * d * d;
                    g[idx] -= k * rho * d;
                    h[idx * dim + idx] -= k * rho;
                }
            }
        }
        if let Some(costs) = self.costs {
            let a = self.demand(x);
            let ws: Vec<f64> = self.types.iter().map(|t| t.1).collect();
            // scatter a cost with respect to aggregate demand at nodes (u, v)
            let mut add = |u: usize, v: usize, val: f64| {
                for (si, wi) in ws.iter().enumerate() {
                    for (sj, wj) in ws.iter().enumerate() {
                        h[(si * n + u) * dim + sj * n + v] -= wi * wj * val;
                    }
                }
            };
            for (node, nd) in self.tree.nodes.iter().enumerate() {
                let pr = nd.prob;
                let mut c = costs.primary(a[node], nd.state);
                let mut dc = costs.primary_slope(a[node], nd.state);
                let mut d2 = costs.primary_curvature(a[node], nd.state);
                match nd.parent {
                    None => {
                        c += costs.initial_ancillary(a[node], nd.state);
                        dc += costs.initial_ancillary_slope(a[node], nd.state);
                        d2 += costs.initial_ancillary_curvature(a[node], nd.state);
                    }
                    Some(p) => {
                        let sp = self.tree.nodes[p].state;
                        c += costs.ancillary(a[p], a[node], sp, nd.state);
                        let (gp, gc) = costs.ancillary_grad(a[p], a[node], sp, nd.state);
                        let (hpp, hpc, hcc) = costs.ancillary_hess(a[p], a[node], sp, nd.state);
                        dc += gc;
                        d2 += hcc;
                        for (s, wi) in ws.iter().enumerate() {
                            g[s * n + p] -= pr * wi * gp;
                        }
                        add(p, p, pr * hpp);
                        add(p, node, pr * hpc);
                        add(node, p, pr * hpc);
                    }
                }
                f -= pr * c;
                for (s, wi) in ws.iter().enumerate() {
                    g[s * n + node] -= pr * wi * dc;
                }
                add(node, node, pr * d2);
            }
        }
        (f, g, h)
    }
}

#[derive(Debug, Clone)]
pub struct MaxConfig {
    /// Projected supergradient iterations run before the smoothing stages.
    pub subgradient_iters: usize,
    /// Smoothing radii, from coarse to fine.
    pub mu_schedule: Vec<f64>,
    pub newton_iters: usize,
    /// Stop a stage once the projected gradient step is below this.
    pub tol: f64,
    /// Add the three constant starts (lower bound, midpoint, upper bound).
    pub default_starts: bool,
}

impl Default for MaxConfig {
    fn default() -> Self {
        MaxConfig {
            subgradient_iters: 200,
            mu_schedule: (2..=10).map(|k| 10f64.powi(-k)).collect(),
            newton_iters: 100,
            tol: 1e-12,
            default_starts: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MaxOutcome {
    pub x: Vec<f64>,
    /// Exact (unsmoothed) objective at `x`.
    pub value: f64,
    /// Total Newton and supergradient iterations over all starts.
    pub iterations: usize,
    /// Exact values reached from each start.
    pub local_values: Vec<f64>,
}

impl MaxOutcome {
    /// Whether different starts ended at different objective values.
    pub fn distinct_optima(&self, tol: f64) -> bool {
        let lo = self
            .local_values
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        self.value - lo > tol * (1.0 + self.value.abs())
    }
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

fn proj_grad_norm(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    (0..x.len())
        .map(|i| ((x[i] + g[i]).clamp(lo[i], hi[i]) - x[i]).abs())
        .fold(0.0, f64::max)
}

fn supergradient(
    obj: &dyn Objective,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    iters: usize,
) -> (Vec<f64>, f64) {
    let width = (0..x0.len()).map(|i| hi[i] - lo[i]).fold(0.0, f64::max);
    let mut x = x0.to_vec();
    let mut best = (x.clone(), obj.value(&x, Smoothing::EXACT));
    for k in 0..iters {
        let (_, g, _) = obj.jet(&x, Smoothing::EXACT);
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        let step = 0.25 * width / ((k + 1) as f64).sqrt() / norm;
        for i in 0..x.len() {
            x[i] += step * g[i];
        }
        project(&mut x, lo, hi);
        let v = obj.value(&x, Smoothing::EXACT);
        if v > best.1 {
            best = (x.clone(), v);
        }
    }
    best
}

/// One smoothing stage of projected Newton. Returns the iteration count.
fn newton_stage(
    obj: &dyn Objective,
    x: &mut Vec<f64>,
    lo: &[f64],
    hi: &[f64],
    sm: Smoothing,
    cfg: &MaxConfig,
) -> usize {
    let d = x.len();
    for it in 0..cfg.newton_iters {
        let (f, g, h) = obj.jet(x, sm);
        let pg = proj_grad_norm(x, &g, lo, hi);
        if pg <= cfg.tol {
            return it;
        }
        let eps = pg.min(1e-6);
        let free: Vec<usize> = (0..d)
            .filter(|&i| {
                !((x[i] <= lo[i] + eps && g[i] < 0.0) || (x[i] >= hi[i] - eps && g[i] > 0.0))
            })
            .collect();
        let mut dir = g.clone();
        if !free.is_empty() {
            let m = free.len();
            let mut neg = DMatrix::<f64>::zeros(m, m);
            let mut scale: f64 = 0.0;
            for (a, &i) in free.iter().enumerate() {
                for (b, &j) in free.iter().enumerate() {
                    neg[(a, b)] = -h[i * d + j];
                }
                scale = scale.max(neg[(a, a)].abs());
            }
            let rhs = DVector::from_iterator(m, free.iter().map(|&i| g[i]));
            let mut tau = 0.0;
            let step = loop {
                let mut reg = neg.clone();
                for a in 0..m {
                    reg[(a, a)] += tau;
                }
                if let Some(ch) = reg.cholesky() {
                    break Some(ch.solve(&rhs));
                }
                tau = if tau == 0.0 {
                    1e-10 * (1.0 + scale)
                } else {
                    tau * 100.0
                };
                if tau > 1e12 * (1.0 + scale) {
                    break None;
                }
            };
            if let Some(s) = step {
                for (a, &i) in free.iter().enumerate() {
                    dir[i] = s[a];
                }
            }
        }
        let accept = |dir: &[f64]| -> Option<Vec<f64>> {
            let mut alpha = 1.0;
            for _ in 0..60 {
                let mut xn: Vec<f64> = (0..d).map(|i| x[i] + alpha * dir[i]).collect();
                project(&mut xn, lo, hi);
                let gain: f64 = (0..d).map(|i| g[i] * (xn[i] - x[i])).sum();
                let fv = obj.value(&xn, sm);
                if gain > 0.0 && fv >= f + 1e-4 * gain {
                    return Some(xn);
                }
                alpha *= 0.5;
            }
            None
        };
        match accept(&dir).or_else(|| accept(&g)) {
            Some(xn) => {
                let moved = (0..d).map(|i| (xn[i] - x[i]).abs()).fold(0.0, f64::max);
                *x = xn;
                if moved <= 1e-15 {
                    return it + 1;
                }
            }
            None => return it + 1,
        }
    }
    cfg.newton_iters
}

fn smoothing_newton(
    obj: &dyn Objective,
    start: &[f64],
    lo: &[f64],
    hi: &[f64],
    cfg: &MaxConfig,
) -> (Vec<f64>, usize) {
    let mut x = start.to_vec();
    project(&mut x, lo, hi);
    let mut iters = 0;
    for &mu in &cfg.mu_schedule {
        iters += newton_stage(obj, &mut x, lo, hi, Smoothing::smooth(mu), cfg);
    }
    (x, iters)
}

/// Maximize `obj` over the box `[lo, hi]` from several starting points.
///
/// Each start goes through a decreasing sequence of smoothing radii with a
/// projected Newton method at every stage; the result with the best exact
/// value wins. The caller's starts are themselves candidates, so the
/// outcome is never worse than any of them.
pub fn maximize_box(
    obj: &dyn Objective,
    lo: &[f64],
    hi: &[f64],
    starts: &[Vec<f64>],
    cfg: &MaxConfig,
) -> MaxOutcome {
    let d = obj.dim();
    let mut all: Vec<Vec<f64>> = starts.to_vec();
    if cfg.default_starts || all.is_empty() {
        all.push(lo.to_vec());
        all.push((0..d).map(|i| 0.5 * (lo[i] + hi[i])).collect());
        all.push(hi.to_vec());
    }
    let mut sg_iters = 0;
    if cfg.subgradient_iters > 0 {
        let (x, _) = supergradient(obj, &all[0], lo, hi, cfg.subgradient_iters);
        sg_iters = cfg.subgradient_iters;
        all.push(x);
    }
    let results: Vec<(Vec<f64>, f64, usize)> = all
        .par_iter()
        .map(|s| {
            let (x, it) = smoothing_newton(obj, s, lo, hi, cfg);
            let v = obj.value(&x, Smoothing::EXACT);
            (x, v, it)
        })
        .collect();
    let mut best_x = results[0].0.clone();
    let mut best_v = results[0].1;
    for (x, v, _) in &results[1..] {
        if *v > best_v {
            best_v = *v;
            best_x = x.clone();
        }
    }
    for s in starts {
        let mut x = s.clone();
        project(&mut x, lo, hi);
        let v = obj.value(&x, Smoothing::EXACT);
        if v > best_v {
            best_v = v;
            best_x = x;
        }
    }
    MaxOutcome {
        x: best_x,
        value: best_v,
        iterations: sg_iters + results.iter().map(|r| r.2).sum::<usize>(),
        local_values: results.iter().map(|r| r.1).collect(),
    }
}
