//! Equilibria of the continuum game.

pub(crate) mod best_response;
mod kkt;

use crate::error::{Error, Result};
use crate::pricing::{
    accounting, average_retail_price, csv_err, finish_csv, fmt_f, induced_prices, Accounting,
    DemandPath, PaymentMode, PricePath,
};
use crate::program::{maximize_box, MaxConfig, Objective, Program};
use crate::scenario::{validate, HistoryTree, Scenario};

pub use best_response::{best_response, BestResponse, BrConfig};
pub use kkt::{kkt_residual, kkt_residual_with_tie, KktClass, KktEntry, KktResidual};

/// Action of every consumer type at every history node.
#[derive(Debug, Clone, PartialEq)]
pub struct ObliviousStrategy {
    pub types: usize,
    pub nodes: usize,
    /// Type-major: `actions[type * nodes + node]`.
    pub actions: Vec<f64>,
}

impl ObliviousStrategy {
    pub fn constant(types: usize, nodes: usize, value: f64) -> Self {
        ObliviousStrategy {
            types,
            nodes,
            actions: vec![value; types * nodes],
        }
    }

    pub fn from_fn(types: usize, nodes: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut s = Self::constant(types, nodes, 0.0);
        for x in 0..types {
            for n in 0..nodes {
                s.actions[x * nodes + n] = f(x, n);
            }
        }
        s
    }

    pub fn get(&self, ty: usize, node: usize) -> f64 {
        self.actions[ty * self.nodes + node]
    }

    pub fn set(&mut self, ty: usize, node: usize, v: f64) {
        self.actions[ty * self.nodes + node] = v;
    }

    pub fn of_type(&self, ty: usize) -> &[f64] {
        &self.actions[ty * self.nodes..(ty + 1) * self.nodes]
    }

    pub fn demand(&self, weights: &[f64]) -> DemandPath {
        DemandPath::new(
            (0..self.nodes)
                .map(|n| {
                    weights
                        .iter()
                        .enumerate()
                        .map(|(x, w)| w * self.get(x, n))
                        .sum()
                })
                .collect(),
        )
    }
}

/// Own state of every type at every node when following `strategy`.
pub fn own_states(
    scenario: &Scenario,
    tree: &HistoryTree,
    strategy: &ObliviousStrategy,
) -> Vec<Vec<f64>> {
    scenario
        .types
        .iter()
        .enumerate()
        .map(|(x, ty)| {
            let mut z = vec![0.0; tree.len()];
            for (id, nd) in tree.nodes.iter().enumerate() {
                z[id] = match nd.parent {
                    None => ty.initial_state,
                    Some(p) => ty.transition.next(z[p], strategy.get(x, p), nd.state),
                };
            }
            z
        })
        .collect()
}

pub fn aggregate_demand(
    scenario: &Scenario,
    tree: &HistoryTree,
    strategy: &ObliviousStrategy,
) -> DemandPath {
    strategy.demand(&scenario.eta(tree.s0))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StageWelfare {
    pub utility: f64,
    pub primary_cost: f64,
    pub ancillary_cost: f64,
    pub welfare: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WelfareReport {
    /// Expected contribution of each stage.
    pub stages: Vec<StageWelfare>,
    pub utility: f64,
    pub primary_cost: f64,
    pub ancillary_cost: f64,
    pub total: f64,
}

pub fn continuum_welfare(
    scenario: &Scenario,
    tree: &HistoryTree,
    strategy: &ObliviousStrategy,
) -> WelfareReport {
    welfare_with_weights(scenario, tree, strategy, &scenario.eta(tree.s0))
}

/// Welfare per consumer when the types are present in proportions `weights`.
pub fn welfare_with_weights(
    scenario: &Scenario,
    tree: &HistoryTree,
    strategy: &ObliviousStrategy,
    weights: &[f64],
) -> WelfareReport {
    let z = own_states(scenario, tree, strategy);
    let a = strategy.demand(weights).values;
    let costs = &scenario.costs;
    let mut stages = vec![StageWelfare::default(); tree.horizon() + 1];
    for (id, nd) in tree.nodes.iter().enumerate() {
        let st = &mut stages[nd.stage];
        let u: f64 = weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(x, w)| {
                w * scenario
                    .utility(x, nd.stage, nd.state)
                    .value(z[x][id], strategy.get(x, id))
            })
            .sum();
        let anc = match nd.parent {
            None => costs.initial_ancillary(a[id], nd.state),
            Some(p) => costs.ancillary(a[p], a[id], tree.nodes[p].state, nd.state),
        };
        st.utility += nd.prob * u;
        st.primary_cost += nd.prob * costs.primary(a[id], nd.state);
        st.ancillary_cost += nd.prob * anc;
    }
    for st in &mut stages {
        st.welfare = st.utility - st.primary_cost - st.ancillary_cost;
    }
    WelfareReport {
        utility: stages.iter().map(|s| s.utility).sum(),
        primary_cost: stages.iter().map(|s| s.primary_cost).sum(),
        ancillary_cost: stages.iter().map(|s| s.ancillary_cost).sum(),
        total: stages.iter().map(|s| s.welfare).sum(),
        stages,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub mechanism: PaymentMode,
    pub strategy: ObliviousStrategy,
    pub demand: DemandPath,
    pub prices: PricePath,
    pub welfare: WelfareReport,
    pub accounting: Accounting,
    pub kkt: KktResidual,
    /// Largest gain any type could get by deviating to its best response.
    pub best_response_gap: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Fixed-point residual per iteration (MCP only).
    pub residual_history: Vec<f64>,
    pub warnings: Vec<String>,
}

impl SolveReport {
    pub fn max_kkt_residual(&self) -> f64 {
        self.kkt.max
    }

    pub fn average_price(&self, tree: &HistoryTree, include_q: bool) -> Result<f64> {
        average_retail_price(tree, &self.demand, &self.prices, include_q)
    }

    /// Columns `mechanism, E, b0, stage, history_id, type, action, A, p, w,
    /// q, welfare, kkt_residual`; `E` and `b0` stay empty when not given.
    pub fn to_csv(
        &self,
        scenario: &Scenario,
        tree: &HistoryTree,
        e: Option<f64>,
        b0: Option<f64>,
    ) -> Result<String> {
        let mut w = csv::Writer::from_writer(vec![]);
        w.write_record([
            "mechanism",
            "E",
            "b0",
            "stage",
            "history_id",
            "type",
            "action",
            "A",
            "p",
            "w",
            "q",
            "welfare",
            "kkt_residual",
        ])
        .map_err(csv_err)?;
        let opt = |v: Option<f64>| v.map(fmt_f).unwrap_or_default();
        for (id, nd) in tree.nodes.iter().enumerate() {
            for (x, ty) in scenario.types.iter().enumerate() {
                let res = self
                    .kkt
                    .entries
                    .iter()
                    .find(|k| k.ty == x && k.node == id)
                    .map_or(0.0, |k| k.residual);
                let pr = &self.prices.nodes[id];
                w.write_record([
                    self.mechanism.name().to_string(),
                    opt(e),
                    opt(b0),
                    nd.stage.to_string(),
                    id.to_string(),
                    ty.id.clone(),
                    fmt_f(self.strategy.get(x, id)),
                    fmt_f(self.demand.values[id]),
                    fmt_f(pr.p),
                    fmt_f(pr.w),
                    fmt_f(pr.q),
                    fmt_f(self.welfare.total),
                    fmt_f(res),
                ])
                .map_err(csv_err)?;
            }
        }
        finish_csv(w)
    }
}

#[derive(Debug, Clone)]
pub struct DoeConfig {
    /// Largest KKT residual accepted.
    pub tol: f64,
    /// Tie tolerance of the one-sided derivative rule in the KKT check.
    pub kkt_tie: f64,
    pub max: MaxConfig,
    pub warm_start: Option<ObliviousStrategy>,
    /// Check every type against its dynamic-programming best response.
    pub verify_best_response: bool,
    pub br: BrConfig,
}

impl Default for DoeConfig {
    fn default() -> Self {
        DoeConfig {
            tol: 1e-6,
            kkt_tie: 1e-7,
            max: MaxConfig::default(),
            warm_start: None,
            verify_best_response: true,
            br: BrConfig::default(),
        }
    }
}

fn check(scenario: &Scenario) -> Result<HistoryTree> {
    let rep = validate(scenario);
    if !rep.is_ok() {
        return Err(Error::Invalid(rep.to_string().trim_end().to_string()));
    }
    scenario.tree()
}

/// Strategy of the weighted types from a flat variable vector; unweighted
/// types keep `fill`.
fn unpack(
    types: usize,
    nodes: usize,
    slots: &[(usize, f64)],
    x: &[f64],
    fill: &ObliviousStrategy,
) -> ObliviousStrategy {
    let mut s = fill.clone();
    for (slot, (ty, _)) in slots.iter().enumerate() {
        for n in 0..nodes {
            s.set(*ty, n, x[slot * nodes + n]);
        }
    }
    debug_assert_eq!(s.types, types);
    s
}

fn pack(nodes: usize, slots: &[(usize, f64)], s: &ObliviousStrategy) -> Vec<f64> {
    slots
        .iter()
        .flat_map(|(ty, _)| s.of_type(*ty)[..nodes].to_vec())
        .collect()
}

/// Actions maximizing each type's own utility when nothing is charged.
pub fn utility_maximizer(scenario: &Scenario, tree: &HistoryTree) -> ObliviousStrategy {
    let slots: Vec<(usize, f64)> = (0..scenario.num_types()).map(|x| (x, 1.0)).collect();
    let prog = Program::new(scenario, tree, slots.clone());
    let d = prog.dim();
    let cfg = MaxConfig {
        subgradient_iters: 0,
        ..MaxConfig::default()
    };
    let out = maximize_box(
        &prog,
        &vec![0.0; d],
        &vec![scenario.bounds.action; d],
        &[],
        &cfg,
    );
    let zero = ObliviousStrategy::constant(scenario.num_types(), tree.len(), 0.0);
    unpack(scenario.num_types(), tree.len(), &slots, &out.x, &zero)
}

/// Assemble a report for a given strategy and mechanism.
pub fn evaluate(
    scenario: &Scenario,
    tree: &HistoryTree,
    strategy: ObliviousStrategy,
    mechanism: PaymentMode,
    kkt_tie: f64,
) -> Result<SolveReport> {
    let demand = aggregate_demand(scenario, tree, &strategy);
    let prices = induced_prices(&scenario.costs, tree, &demand)?;
    let welfare = continuum_welfare(scenario, tree, &strategy);
    let acc = accounting(scenario, tree, &strategy, &prices, mechanism);
    let kkt = kkt_residual_with_tie(scenario, tree, &strategy, mechanism, kkt_tie);
    let mut prices = prices;
    if mechanism != PaymentMode::Proposed {
        // backward charges are not levied outside the proposed mechanism
        for n in &mut prices.nodes {
            n.q = 0.0;
        }
    }
    Ok(SolveReport {
        mechanism,
        strategy,
        demand,
        prices,
        welfare,
        accounting: acc,
        kkt,
        best_response_gap: None,
        iterations: 0,
        converged: true,
        residual_history: vec![],
        warnings: vec![],
    })
}

/// Largest improvement any weighted type gets from its best response to
/// `report`'s prices, seeded with its own actions.
pub fn best_response_gap(
    scenario: &Scenario,
    tree: &HistoryTree,
    report: &SolveReport,
    cfg: &BrConfig,
) -> f64 {
    let eta = scenario.eta(tree.s0);
    let mut gap = f64::NEG_INFINITY;
    for x in 0..scenario.num_types() {
        if eta[x] == 0.0 {
            continue;
        }
        let own = report.strategy.of_type(x).to_vec();
        let cfg = BrConfig {
            seed: Some(own.clone()),
            ..cfg.clone()
        };
        let br = best_response(scenario, tree, &report.prices, x, report.mechanism, &cfg);
        let conform =
            best_response::path_value(scenario, tree, &report.prices, x, report.mechanism, &own);
        gap = gap.max(br.value - conform);
    }
    gap
}

/// Dynamic oblivious equilibrium under the proposed mechanism, computed as
/// the maximizer of expected welfare.
pub fn solve_doe(scenario: &Scenario, cfg: &DoeConfig) -> Result<SolveReport> {
    let tree = check(scenario)?;
    let eta = scenario.eta(tree.s0);
    let prog = Program::welfare(scenario, &tree, &eta);
    let slots = prog.types.clone();
    let d = prog.dim();
    let nodes = tree.len();
    let b = scenario.bounds.action;
    let mut starts = vec![pack(nodes, &slots, &utility_maximizer(scenario, &tree))];
    if let Some(w) = &cfg.warm_start {
        starts.insert(0, pack(nodes, &slots, w));
    }
    let out = maximize_box(&prog, &vec![0.0; d], &vec![b; d], &starts, &cfg.max);
    let fill = cfg
        .warm_start
        .clone()
        .unwrap_or_else(|| ObliviousStrategy::constant(scenario.num_types(), nodes, 0.0));
    let strategy = unpack(scenario.num_types(), nodes, &slots, &out.x, &fill);
    let mut report = evaluate(
        scenario,
        &tree,
        strategy,
        PaymentMode::Proposed,
        cfg.kkt_tie,
    )?;
    report.iterations = out.iterations;
    if out.distinct_optima(1e-7) {
        report.warnings.push(format!(
            "welfare is not concave here: starts reached values from {:.6} to {:.6}",
            out.local_values
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min),
            out.value
        ));
    }
    if cfg.verify_best_response {
        let gap = best_response_gap(scenario, &tree, &report, &cfg.br);
        report.best_response_gap = Some(gap);
        if gap > 1e-6 {
            report.warnings.push(format!(
                "a type gains {gap:.3e} by deviating from the welfare maximizer"
            ));
        }
    }
    report.converged = report.kkt.max <= cfg.tol;
    if !report.converged {
        return Err(Error::NonConvergence {
            what: "welfare maximization",
            iterations: report.iterations,
            residual: report.kkt.max,
            best: Some(Box::new(report)),
        });
    }
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct McpConfig {
    /// Fixed-point tolerance on `max |nu_next - nu|`.
    pub tol: f64,
    pub max_iters: usize,
    /// Damping `lambda` in `nu <- (1 - lambda) nu + lambda BR(nu)`.
    pub damping: f64,
    /// Proximal weight of the regularized best response; derived from the
    /// cost curvature when `None`.
    pub rho: Option<f64>,
    pub kkt_tie: f64,
    pub warm_start: Option<ObliviousStrategy>,
    pub verify_best_response: bool,
    pub br: BrConfig,
}

impl Default for McpConfig {
    fn default() -> Self {
        McpConfig {
            tol: 1e-8,
            max_iters: 100_000,
            damping: 0.5,
            rho: None,
            kkt_tie: 1e-7,
            warm_start: None,
            verify_best_response: true,
            br: BrConfig::default(),
        }
    }
}

/// Bound on how fast marginal-cost prices move with the actions: the
/// largest row sum of the price Jacobian over a grid of demands.
fn price_sensitivity(scenario: &Scenario, tree: &HistoryTree) -> f64 {
    let c = &scenario.costs;
    let b = scenario.bounds.action;
    let mut l: f64 = 0.0;
    for i in 0..=20 {
        let a = b * i as f64 / 20.0;
        for nd in &tree.nodes {
            let mut row = c.primary_curvature(a, nd.state).abs();
            match nd.parent {
                None => row += c.initial_ancillary_curvature(a, nd.state).abs(),
                Some(p) => {
                    let sp = tree.nodes[p].state;
                    let mut worst: f64 = 0.0;
                    for j in 0..=20 {
                        let prev = b * j as f64 / 20.0;
                        let (_, pc, cc) = c.ancillary_hess(prev, a, sp, nd.state);
                        worst = worst.max(pc.abs() + cc.abs());
                    }
                    row += worst;
                }
            }
            l = l.max(row);
        }
    }
    l
}

/// Equilibrium under marginal cost pricing.
///
/// Each step replaces every type's action by a proximal best response
/// `argmax U - (p + w) a - (rho/2) sum P(h) (a - nu)^2`, which has the same
/// fixed points as the plain best response but is single-valued and
/// continuous even when utilities are linear, then damps the update.
pub fn solve_mcp(scenario: &Scenario, cfg: &McpConfig) -> Result<SolveReport> {
    let tree = check(scenario)?;
    let eta = scenario.eta(tree.s0);
    let nodes = tree.len();
    let b = scenario.bounds.action;
    let mut nu = match &cfg.warm_start {
        Some(w) => w.clone(),
        None => utility_maximizer(scenario, &tree),
    };
    let slots: Vec<(usize, f64)> = eta
        .iter()
        .enumerate()
        .filter(|(_, w)| **w > 0.0)
        .map(|(x, w)| (x, *w))
        .collect();
    let mut rho = cfg
        .rho
        .unwrap_or_else(|| 4.0 * price_sensitivity(scenario, &tree).max(0.25));
    let max_cfg = MaxConfig {
        subgradient_iters: 0,
        mu_schedule: (4..=10).map(|k| 10f64.powi(-k)).collect(),
        newton_iters: 50,
        tol: 1e-13,
        default_starts: false,
    };
    let d = slots.len() * nodes;
    let (lo, hi) = (vec![0.0; d], vec![b; d]);
    let mut history = Vec::new();
    let mut last_br: Option<Vec<f64>> = None;
    let mut converged = false;
    let mut iters = 0;
    let mut rising = 0;
    for k in 0..cfg.max_iters {
        iters = k + 1;
        let demand = aggregate_demand(scenario, &tree, &nu);
        let prices = induced_prices(&scenario.costs, &tree, &demand)?;
        let center = pack(nodes, &slots, &nu);
        let mut prog = Program::new(scenario, &tree, slots.clone());
        prog.prices = Some(prices.effective_all(&tree, PaymentMode::Mcp));
        prog.proximal = Some((rho, center.clone()));
        let mut starts = vec![center.clone()];
        if let Some(prev) = &last_br {
            starts.push(prev.clone());
        }
        let br = maximize_box(&prog, &lo, &hi, &starts, &max_cfg).x;
        let next: Vec<f64> = center
            .iter()
            .zip(&br)
            .map(|(c, r)| (1.0 - cfg.damping) * c + cfg.damping * r)
            .collect();
        let res = center
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if let Some(&prev) = history.last() {
            if res > prev * (1.0 + 1e-12) {
                rising += 1;
                if rising >= 3 {
                    rho *= 2.0;
                    rising = 0;
                }
            } else {
                rising = 0;
            }
        }
        history.push(res);
        last_br = Some(br);
        nu = unpack(scenario.num_types(), nodes, &slots, &next, &nu);
        if res <= cfg.tol {
            converged = true;
            break;
        }
    }
    let mut report = evaluate(scenario, &tree, nu, PaymentMode::Mcp, cfg.kkt_tie)?;
    report.iterations = iters;
    report.residual_history = history;
    report.converged = converged;
    if cfg.verify_best_response {
        let gap = best_response_gap(scenario, &tree, &report, &cfg.br);
        report.best_response_gap = Some(gap);
        if gap > 1e-6 {
            report.warnings.push(format!(
                "a type gains {gap:.3e} by deviating from the fixed point"
            ));
        }
    }
    if !converged {
        let residual = *report.residual_history.last().unwrap_or(&f64::NAN);
        return Err(Error::NonConvergence {
            what: "marginal cost pricing fixed point",
            iterations: iters,
            residual,
            best: Some(Box::new(report)),
        });
    }
    Ok(report)
}

/// Consumers facing a constant retail `rate`: each type plays its best
/// response to it; the reported prices are the marginal costs at the
/// resulting demand.
pub fn solve_flat(scenario: &Scenario, rate: f64, br: &BrConfig) -> Result<SolveReport> {
    if !(rate >= 0.0) {
        return Err(Error::Invalid(format!("flat rate {rate} is negative")));
    }
    let tree = check(scenario)?;
    let mode = PaymentMode::FlatRate(rate);
    let zero = PricePath::zeros(tree.len());
    let mut strategy = ObliviousStrategy::constant(scenario.num_types(), tree.len(), 0.0);
    for x in 0..scenario.num_types() {
        let r = best_response(scenario, &tree, &zero, x, mode, br);
        for n in 0..tree.len() {
            strategy.set(x, n, r.actions[n]);
        }
    }
    evaluate(scenario, &tree, strategy, mode, 1e-7)
}
