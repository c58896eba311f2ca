use super::{own_states, ObliviousStrategy};
use crate::num::{Dir, Real, Smoothing};
use crate::pricing::{induced_prices, PaymentMode};
use crate::scenario::{HistoryTree, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KktClass {
    LowerActive,
    Interior,
    UpperActive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktEntry {
    pub ty: usize,
    pub node: usize,
    pub class: KktClass,
    /// Right and left derivatives of the type's expected utility from this
    /// node on, with respect to its action here.
    pub right: f64,
    pub left: f64,
    /// `p + w` at the node (the rate under a flat tariff).
    pub price: f64,
    /// Correction terms: expected next backward price minus the one-sided
    /// derivative of future utility.
    pub g_plus: f64,
    pub g_minus: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktResidual {
    pub entries: Vec<KktEntry>,
    pub max: f64,
}

/// One-sided derivative of expected utility from `node` on (conditional on
/// reaching it) when the type's action at `node` moves in direction `dir`.
/// Returns `(current stage part, future part)`.
fn directional(
    scenario: &Scenario,
    tree: &HistoryTree,
    strategy: &ObliviousStrategy,
    z: &[f64],
    ty: usize,
    node: usize,
    dir: f64,
    sm: Smoothing,
) -> (f64, f64) {
    let spec = &scenario.types[ty];
    let nd = &tree.nodes[node];
    let a = Dir::new(strategy.get(ty, node), dir);
    let zn = Dir::constant(z[node]);
    let now = scenario.utility(ty, nd.stage, nd.state).eval(&zn, &a, sm).d;
    let mut future = 0.0;
    // (node id, own-state with its derivative)
    let mut stack: Vec<(usize, Dir)> = nd
        .children
        .iter()
        .map(|&c| (c, spec.transition.eval(&zn, &a, tree.nodes[c].state, sm)))
        .collect();
    while let Some((m, zm)) = stack.pop() {
        let md = &tree.nodes[m];
        let am = Dir::constant(strategy.get(ty, m));
        let w = md.prob / nd.prob;
        future += w * scenario
            .utility(ty, md.stage, md.state)
            .eval(&zm, &am, sm)
            .d;
        for &c in &md.children {
            stack.push((c, spec.transition.eval(&zm, &am, tree.nodes[c].state, sm)));
        }
    }
    (now, future)
}

/// Optimality conditions of the welfare program (equivalently, of every
/// type's payoff under the proposed prices the strategy induces).
pub fn kkt_residual(
    scenario: &Scenario,
    tree: &HistoryTree,
    strategy: &ObliviousStrategy,
) -> KktResidual {
    kkt_residual_with_tie(scenario, tree, strategy, PaymentMode::Proposed, 1e-7)
}

/// First-order conditions of every type's payoff under the prices the
/// strategy induces in mechanism `mode`, checked with exact one-sided
/// derivatives. Branches of a min/max closer than `tie` are treated as
/// tied.
pub fn kkt_residual_with_tie(
    scenario: &Scenario,
    tree: &HistoryTree,
    strategy: &ObliviousStrategy,
    mode: PaymentMode,
    tie: f64,
) -> KktResidual {
    let eta = scenario.eta(tree.s0);
    let demand = strategy.demand(&eta);
    let prices =
        induced_prices(&scenario.costs, tree, &demand).expect("strategy actions are nonnegative");
    let z = own_states(scenario, tree, strategy);
    let sm = Smoothing { mu: 0.0, tie };
    let b = scenario.bounds.action;
    let mut entries = Vec::new();
    for (x, w) in eta.iter().enumerate() {
        if *w == 0.0 {
            continue;
        }
        for node in 0..tree.len() {
            let (rn, rf) = directional(scenario, tree, strategy, &z[x], x, node, 1.0, sm);
            let (ln, lf) = directional(scenario, tree, strategy, &z[x], x, node, -1.0, sm);
            let right = rn + rf;
            let left = -(ln + lf);
            let price = match mode {
                PaymentMode::FlatRate(r) => r,
                _ => prices.p_plus_w(node),
            };
            let eq = prices.effective(tree, node, mode) - price;
            let a = strategy.get(x, node);
            let mut residual: f64 = 0.0;
            if a < b {
                residual = residual.max(right - price - eq);
            }
            if a > 0.0 {
                residual = residual.max(price + eq - left);
            }
            let class = if a <= 0.0 {
                KktClass::LowerActive
            } else if a >= b {
                KktClass::UpperActive
            } else {
                KktClass::Interior
            };
            entries.push(KktEntry {
                ty: x,
                node,
                class,
                right,
                left,
                price,
                g_plus: eq - rf,
                g_minus: eq + lf,
                residual,
            });
        }
    }
    let max = entries.iter().map(|e| e.residual).fold(0.0, f64::max);
    KktResidual { entries, max }
}
