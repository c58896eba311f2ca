//! Prices induced by a demand path, stage payoffs and money accounting.

use crate::equilibrium::{own_states, ObliviousStrategy};
use crate::error::{Error, Result};
use crate::scenario::{CostModel, HistoryTree, Scenario, UtilityTerm};

/// Aggregate (per-consumer average) demand at every history node.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandPath {
    pub values: Vec<f64>,
}

impl DemandPath {
    pub fn new(values: Vec<f64>) -> Self {
        DemandPath { values }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NodePrices {
    /// Primary marginal cost.
    pub p: f64,
    /// Ancillary marginal cost with respect to current demand.
    pub w: f64,
    /// Ancillary marginal cost with respect to the previous demand, charged
    /// on the previous action.
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PricePath {
    pub nodes: Vec<NodePrices>,
}

impl PricePath {
    pub fn zeros(n: usize) -> Self {
        PricePath {
            nodes: vec![NodePrices::default(); n],
        }
    }

    pub fn p_plus_w(&self, node: usize) -> f64 {
        self.nodes[node].p + self.nodes[node].w
    }

    /// Price per unit of action at `node` once the backward charges of
    /// the children are moved onto it: `p + w + E[q_next]` under the
    /// proposed mechanism, `p + w` under marginal cost pricing.
    pub fn effective(&self, tree: &HistoryTree, node: usize, mode: PaymentMode) -> f64 {
        match mode {
            PaymentMode::Proposed => {
                let next: f64 = tree.nodes[node]
                    .children
                    .iter()
                    .map(|&c| tree.cond_prob(c) * self.nodes[c].q)
                    .sum();
                self.p_plus_w(node) + next
            }
            PaymentMode::Mcp => self.p_plus_w(node),
            PaymentMode::FlatRate(r) => r,
        }
    }

    pub fn effective_all(&self, tree: &HistoryTree, mode: PaymentMode) -> Vec<f64> {
        (0..tree.len())
            .map(|n| self.effective(tree, n, mode))
            .collect()
    }

    /// Columns `stage, history_id, p, w, q, p_plus_w`.
    pub fn to_csv(&self, tree: &HistoryTree) -> Result<String> {
        let mut w = csv::Writer::from_writer(vec![]);
        w.write_record(["stage", "history_id", "p", "w", "q", "p_plus_w"])
            .map_err(csv_err)?;
        for (id, pr) in self.nodes.iter().enumerate() {
            w.write_record([
                tree.nodes[id].stage.to_string(),
                id.to_string(),
                fmt_f(pr.p),
                fmt_f(pr.w),
                fmt_f(pr.q),
                fmt_f(pr.p + pr.w),
            ])
            .map_err(csv_err)?;
        }
        finish_csv(w)
    }
}

pub(crate) fn fmt_f(x: f64) -> String {
    let s = format!("{x:.10}");
    if s == "-0.0000000000" {
        "0.0000000000".to_string()
    } else {
        s
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

pub(crate) fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PaymentMode {
    Proposed,
    Mcp,
    FlatRate(f64),
}

impl PaymentMode {
    pub fn name(&self) -> &'static str {
        match self {
            PaymentMode::Proposed => "proposed",
            PaymentMode::Mcp => "mcp",
            PaymentMode::FlatRate(_) => "flat",
        }
    }
}

/// Marginal costs at every node of `tree` for the given demand.
pub fn induced_prices(
    costs: &CostModel,
    tree: &HistoryTree,
    demand: &DemandPath,
) -> Result<PricePath> {
    if let Some((node, &value)) = demand
        .values
        .iter()
        .enumerate()
        .find(|(_, a)| !(**a >= 0.0))
    {
        return Err(Error::Domain { node, value });
    }
    let a = &demand.values;
    let nodes = tree
        .nodes
        .iter()
        .enumerate()
        .map(|(id, nd)| {
            let p = costs.primary_slope(a[id], nd.state);
            match nd.parent {
                None => NodePrices {
                    p,
                    w: costs.initial_ancillary_slope(a[id], nd.state),
                    q: 0.0,
                },
                Some(par) => {
                    let (q, w) =
                        costs.ancillary_grad(a[par], a[id], tree.nodes[par].state, nd.state);
                    NodePrices { p, w, q }
                }
            }
        })
        .collect();
    Ok(PricePath { nodes })
}

/// One stage payoff of a consumer with own state `z`.
pub fn stage_payoff(
    utility: &UtilityTerm,
    z: f64,
    action: f64,
    prev_action: f64,
    prices: &NodePrices,
    mode: PaymentMode,
) -> f64 {
    utility.value(z, action) - payment(action, prev_action, prices, mode)
}

/// Money paid at one stage.
pub fn payment(action: f64, prev_action: f64, prices: &NodePrices, mode: PaymentMode) -> f64 {
    match mode {
        PaymentMode::Proposed => (prices.p + prices.w) * action + prices.q * prev_action,
        PaymentMode::Mcp => (prices.p + prices.w) * action,
        PaymentMode::FlatRate(r) => r * action,
    }
}

/// Expected money flows, averaged per consumer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Accounting {
    /// Expected total utility.
    pub utility: f64,
    /// Expected total payoff (utility minus payments).
    pub consumer_surplus: f64,
    pub supplier_revenue: f64,
    pub primary_cost: f64,
    pub ancillary_cost: f64,
    /// Welfare computed directly as utility minus costs.
    pub welfare: f64,
    /// `|surplus + revenue - costs - welfare|`
    pub residual: f64,
}

pub fn accounting(
    scenario: &Scenario,
    tree: &HistoryTree,
    strategy: &ObliviousStrategy,
    prices: &PricePath,
    mode: PaymentMode,
) -> Accounting {
    let eta = scenario.eta(tree.s0);
    let z = own_states(scenario, tree, strategy);
    let demand = strategy.demand(&eta);
    let (mut utility, mut surplus, mut revenue, mut primary, mut ancillary) =
        (0.0, 0.0, 0.0, 0.0, 0.0);
    for (id, nd) in tree.nodes.iter().enumerate() {
        for (x, &w) in eta.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let a = strategy.get(x, id);
            let a_prev = nd.parent.map_or(0.0, |p| strategy.get(x, p));
            let u = scenario.utility(x, nd.stage, nd.state).value(z[x][id], a);
            let pay = payment(a, a_prev, &prices.nodes[id], mode);
            utility += nd.prob * w * u;
            surplus += nd.prob * w * (u - pay);
            revenue += nd.prob * w * pay;
        }
        primary += nd.prob * scenario.costs.primary(demand.values[id], nd.state);
        ancillary += nd.prob
            * match nd.parent {
                None => scenario
                    .costs
                    .initial_ancillary(demand.values[id], nd.state),
                Some(p) => scenario.costs.ancillary(
                    demand.values[p],
                    demand.values[id],
                    tree.nodes[p].state,
                    nd.state,
                ),
            };
    }
    let welfare = utility - primary - ancillary;
    Accounting {
        utility,
        consumer_surplus: surplus,
        supplier_revenue: revenue,
        primary_cost: primary,
        ancillary_cost: ancillary,
        welfare,
        residual: (surplus + revenue - primary - ancillary - welfare).abs(),
    }
}

/// Money paid per unit consumed.
///
/// Without `include_q` the backward charges are left out of the numerator.
pub fn average_retail_price(
    tree: &HistoryTree,
    demand: &DemandPath,
    prices: &PricePath,
    include_q: bool,
) -> Result<f64> {
    let (mut paid, mut used) = (0.0, 0.0);
    for (id, nd) in tree.nodes.iter().enumerate() {
        let a = demand.values[id];
        paid += nd.prob * prices.p_plus_w(id) * a;
        if include_q {
            if let Some(p) = nd.parent {
                paid += nd.prob * prices.nodes[id].q * demand.values[p];
            }
        }
        used += nd.prob * a;
    }
    if used == 0.0 {
        return Err(Error::ZeroDemand);
    }
    Ok(paid / used)
}
