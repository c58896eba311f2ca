use rayon::prelude::*;

use crate::num::Smoothing;
use crate::pricing::{payment, PaymentMode, PricePath};
use crate::program::{maximize_box, MaxConfig, Objective, Program};
use crate::scenario::{HistoryTree, Scenario};

#[derive(Debug, Clone)]
pub struct BrConfig {
    /// Own-state grid points on `[0, Z]`.
    pub z_points: usize,
    /// Action grid points on `[0, B]` before golden-section refinement.
    pub a_points: usize,
    pub refine: bool,
    /// Run a local Newton search from the grid solution.
    pub polish: bool,
    /// Returned instead of the computed response when it is at least as good.
    pub seed: Option<Vec<f64>>,
    /// Values within this relative distance count as ties.
    pub tie_tol: f64,
    /// The seed is kept when it is within this relative distance of the
    /// computed value.
    pub seed_tol: f64,
}

impl Default for BrConfig {
    fn default() -> Self {
        BrConfig {
            z_points: 201,
            a_points: 2001,
            refine: true,
            polish: true,
            seed: None,
            tie_tol: 1e-12,
            seed_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestResponse {
    /// Action at every history node.
    pub actions: Vec<f64>,
    /// Exact expected payoff of `actions`.
    pub value: f64,
    /// Value estimated by the grid recursion.
    pub dp_value: f64,
}

/// Exact expected payoff of one type following `actions`.
pub fn path_value(
    scenario: &Scenario,
    tree: &HistoryTree,
    prices: &PricePath,
    ty: usize,
    mode: PaymentMode,
    actions: &[f64],
) -> f64 {
    let spec = &scenario.types[ty];
    let mut z = vec![0.0; tree.len()];
    let mut total = 0.0;
    for (id, nd) in tree.nodes.iter().enumerate() {
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
        let u = scenario
            .utility(ty, nd.stage, nd.state)
            .value(z[id], actions[id]);
        total += nd.prob * (u - payment(actions[id], prev, &prices.nodes[id], mode));
    }
    total
}

fn interp(v: &[f64], z: f64, zmax: f64) -> f64 {
    let k = v.len();
    if k == 1 || zmax <= 0.0 {
        return v[0];
    }
    let pos = (z / zmax).clamp(0.0, 1.0) * (k - 1) as f64;
    let i = (pos.floor() as usize).min(k - 2);
    let t = pos - i as f64;
    v[i] * (1.0 - t) + v[i + 1] * t
}

/// Smallest grid maximizer of `f` on `[0, b]`, refined by golden-section
/// search in the neighbouring cells when that gains more than `tie`.
pub(crate) fn argmax_1d(
    f: impl Fn(f64) -> f64,
    b: f64,
    points: usize,
    refine: bool,
    tie: f64,
) -> (f64, f64) {
    let step = b / (points - 1) as f64;
    let vals: Vec<f64> = (0..points).map(|i| f(step * i as f64)).collect();
    let vmax = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let thr = vmax - tie * (1.0 + vmax.abs());
    let k = vals.iter().position(|v| *v >= thr).unwrap();
    let mut best = (step * k as f64, vals[k]);
    if refine && points > 2 {
        let lo = step * k.saturating_sub(1) as f64;
        let hi = (step * (k + 1) as f64).min(b);
        let (a, v) = golden(&f, lo, hi);
        if v > best.1 + tie * (1.0 + best.1.abs()) {
            best = (a, v);
        }
    }
    best
}

pub(crate) fn golden(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = hi - r * (hi - lo);
    let mut d = lo + r * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..80 {
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - r * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + r * (hi - lo);
            fd = f(d);
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    let mut best = if fc >= fd { (c, fc) } else { (d, fd) };
    for e in [lo, hi] {
        let fe = f(e);
        if fe > best.1 {
            best = (e, fe);
        }
    }
    best
}

/// Best response of type `ty` to a fixed price path.
///
/// Backward recursion over (history node, own state) on a state grid with
/// linear interpolation, then a forward pass from the exact initial state.
/// The path found is polished locally and ties are broken towards the
/// smallest action at each node.
pub fn best_response(
    scenario: &Scenario,
    tree: &HistoryTree,
    prices: &PricePath,
    ty: usize,
    mode: PaymentMode,
    cfg: &BrConfig,
) -> BestResponse {
    let spec = &scenario.types[ty];
    let pi = prices.effective_all(tree, mode);
    let b = scenario.bounds.action;
    let zmax = scenario.bounds.state;
    let k = cfg.z_points.max(2);
    let zs: Vec<f64> = (0..k).map(|i| zmax * i as f64 / (k - 1) as f64).collect();
    let n = tree.len();
    let mut v: Vec<Vec<f64>> = vec![vec![]; n];

    let stage_obj = |id: usize, z: f64, a: f64, v: &Vec<Vec<f64>>| -> f64 {
        let nd = &tree.nodes[id];
        let mut out = scenario.utility(ty, nd.stage, nd.state).value(z, a) - pi[id] * a;
        for &c in &nd.children {
            let zn = spec.transition.next(z, a, tree.nodes[c].state);
            out += tree.cond_prob(c) * interp(&v[c], zn, zmax);
        }
        out
    };

    for id in (0..n).rev() {
        let vals: Vec<f64> = zs
            .par_iter()
            .map(|&z| {
                argmax_1d(
                    |a| stage_obj(id, z, a, &v),
                    b,
                    cfg.a_points,
                    cfg.refine,
                    cfg.tie_tol,
                )
                .1
            })
            .collect();
        v[id] = vals;
    }

    let mut actions = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut dp_value = 0.0;
    for id in 0..n {
        let nd = &tree.nodes[id];
        z[id] = match nd.parent {
            None => spec.initial_state,
            Some(p) => spec.transition.next(z[p], actions[p], nd.state),
        };
        let (a, val) = argmax_1d(
            |a| stage_obj(id, z[id], a, &v),
            b,
            cfg.a_points,
            cfg.refine,
            cfg.tie_tol,
        );
        actions[id] = a;
        if id == 0 {
            dp_value = val;
        }
    }

    // the payoff program equals the payoff once backward charges are moved
    let mut prog = Program::new(scenario, tree, vec![(ty, 1.0)]);
    prog.prices = Some(pi.clone());
    let exact = |x: &[f64]| prog.value(x, Smoothing::EXACT);
    let mut best = exact(&actions);
    if cfg.polish {
        let mc = MaxConfig {
            subgradient_iters: 0,
            default_starts: false,
            ..MaxConfig::default()
        };
        let out = maximize_box(&prog, &vec![0.0; n], &vec![b; n], &[actions.clone()], &mc);
        if out.value > best + cfg.tie_tol * (1.0 + best.abs()) {
            actions = out.x;
            best = out.value;
        }
    }

    // smallest action per node that keeps the value
    let target = |best: f64| best - cfg.tie_tol * (1.0 + best.abs());
    for id in 0..n {
        if actions[id] <= 0.0 {
            continue;
        }
        let thr = target(best);
        let mut trial = actions.clone();
        trial[id] = 0.0;
        if exact(&trial) >= thr {
            actions = trial;
            continue;
        }
        let (mut lo, mut hi) = (0.0, actions[id]);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            trial[id] = mid;
            if exact(&trial) >= thr {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        actions[id] = hi;
    }
    let mut value = path_value(scenario, tree, prices, ty, mode, &actions);

    if let Some(seed) = &cfg.seed {
        let sv = path_value(scenario, tree, prices, ty, mode, seed);
        if sv >= value - cfg.seed_tol * (1.0 + value.abs()) {
            actions = seed.clone();
            value = sv;
        }
    }
    BestResponse {
        actions,
        value,
        dp_value,
    }
}
