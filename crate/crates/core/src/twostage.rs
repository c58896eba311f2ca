//! The two-stage shiftable-demand example: scenario builder, result tables
//! and parameter sweeps.
//!
//! A consumer wants `1 + E` units at stage 0 and `1.2 - E` units at
//! stage 1. Whatever it does not consume above one unit at stage 0 can be
//! consumed at stage 1 instead. The reserve requirement is proportional to
//! load (factor `b0` at stage 0, `b1` at stage 1) and its cost is a
//! quadratic of the part not covered by the previous stage.

use rayon::prelude::*;

use crate::equilibrium::{
    solve_doe, solve_flat, solve_mcp, BrConfig, DoeConfig, McpConfig, SolveReport,
};
use crate::error::Result;
use crate::pricing::{csv_err, finish_csv, fmt_f, PaymentMode};
use crate::scenario::{
    Bounds, ConsumerTypeSpec, CostModel, CostTerm, ExogenousChain, PairCosts, Scenario, StateCosts,
    Transition, UtilitySchedule, UtilityTerm,
};

/// Peak load without any demand shifting.
pub const REFERENCE_PEAK: f64 = 1.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoStageParams {
    /// Demand substitutability.
    pub e: f64,
    pub b0: f64,
    pub b1: f64,
    pub d0: f64,
    pub d1: f64,
}

impl TwoStageParams {
    pub fn new(e: f64, b0: f64) -> Self {
        TwoStageParams {
            e,
            b0,
            b1: 1.1,
            d0: 10.0,
            d1: 12.0,
        }
    }
}

fn consumer(id: &str, p: &TwoStageParams, eta: f64) -> ConsumerTypeSpec {
    ConsumerTypeSpec {
        id: id.into(),
        eta: vec![eta],
        initial_state: 1.0 + p.e,
        utility: UtilitySchedule::PerStage(vec![
            UtilityTerm::CappedLinear { slope: p.d0 },
            UtilityTerm::CappedLinear { slope: p.d1 },
        ]),
        transition: Transition::ShiftableDemand {
            base: 1.2 - p.e,
            threshold: 1.0,
        },
    }
}

fn costs(p: &TwoStageParams) -> CostModel {
    CostModel {
        primary: StateCosts::All(vec![CostTerm::Poly {
            coeffs: vec![0.0, 0.0, 1.0],
        }]),
        ancillary0: StateCosts::All(vec![CostTerm::Hinge {
            alpha: 10.0,
            beta: p.b0,
            gamma: 0.0,
            delta: 1.12,
        }]),
        ancillary: PairCosts::All(vec![CostTerm::Hinge {
            alpha: 20.0,
            beta: p.b1,
            gamma: p.b0,
            delta: 0.0,
        }]),
        reserve_policy: Some("reserve proportional to load: b0 at stage 0, b1 at stage 1".into()),
    }
}

fn bounds() -> Bounds {
    Bounds {
        action: 2.0,
        state: 2.0,
        marginal_cost: 120.0,
        utility: 30.0,
    }
}

/// Single-type instance with a deterministic exogenous state.
pub fn build(p: &TwoStageParams) -> Scenario {
    Scenario {
        name: Some(format!("two-stage E={} b0={}", p.e, p.b0)),
        chain: ExogenousChain::deterministic(1),
        types: vec![consumer("consumer", p, 1.0)],
        costs: costs(p),
        bounds: bounds(),
    }
}

/// Two consumer types with different substitutability, present in shares
/// `share` and `1 - share`.
pub fn build_mixed(e_first: f64, e_second: f64, share: f64, b0: f64) -> Scenario {
    let p1 = TwoStageParams::new(e_first, b0);
    let p2 = TwoStageParams::new(e_second, b0);
    Scenario {
        name: Some(format!("two-stage mixed E={e_first}/{e_second} b0={b0}")),
        chain: ExogenousChain::deterministic(1),
        types: vec![
            consumer("first", &p1, share),
            consumer("second", &p2, 1.0 - share),
        ],
        costs: costs(&p1),
        bounds: bounds(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub e: f64,
    pub b0: f64,
    pub mechanism: &'static str,
    pub a0: f64,
    pub a1: f64,
    pub welfare: f64,
    pub p0w0: f64,
    pub p1w1: f64,
    /// Backward charge levied at stage 1 (zero unless proposed).
    pub q1: f64,
    pub avg_price_exq: f64,
    pub avg_price_incq: f64,
    pub peak_reduction_pct: f64,
}

#[derive(Debug, Clone)]
pub struct Tables {
    pub flat: TableRow,
    pub mcp: TableRow,
    pub proposed: TableRow,
    /// Retail rate used for the flat row.
    pub flat_rate: f64,
}

impl Tables {
    pub fn rows(&self) -> [&TableRow; 3] {
        [&self.flat, &self.mcp, &self.proposed]
    }
}

fn row(p: &TwoStageParams, r: &SolveReport) -> Result<TableRow> {
    let tree = build(p).tree()?;
    let (a0, a1) = (r.demand.values[0], r.demand.values[1]);
    // only the proposed mechanism levies the backward charge
    let charged = r.mechanism == PaymentMode::Proposed;
    Ok(TableRow {
        e: p.e,
        b0: p.b0,
        mechanism: r.mechanism.name(),
        a0,
        a1,
        welfare: r.welfare.total,
        p0w0: r.prices.p_plus_w(0),
        p1w1: r.prices.p_plus_w(1),
        q1: if charged { r.prices.nodes[1].q } else { 0.0 },
        avg_price_exq: r.average_price(&tree, false)?,
        avg_price_incq: r.average_price(&tree, charged)?,
        peak_reduction_pct: 100.0 * (REFERENCE_PEAK - a0.max(a1)) / REFERENCE_PEAK,
    })
}

/// Solve all three mechanisms for one instance.
///
/// The flat row charges the marginal-cost-pricing average price as its
/// retail rate; its reported prices are the marginal costs at the demand
/// that rate induces.
pub fn solve_all(p: &TwoStageParams) -> Result<(SolveReport, SolveReport, SolveReport)> {
    let sc = build(p);
    let doe = solve_doe(&sc, &DoeConfig::default())?;
    let mcp = solve_mcp(
        &sc,
        &McpConfig {
            tol: 1e-11,
            warm_start: Some(doe.strategy.clone()),
            ..McpConfig::default()
        },
    )?;
    let tree = sc.tree()?;
    let rate = mcp.average_price(&tree, false)?;
    let flat = solve_flat(&sc, rate, &BrConfig::default())?;
    Ok((flat, mcp, doe))
}

pub fn run_tables(e: f64, b0: f64) -> Result<Tables> {
    let p = TwoStageParams::new(e, b0);
    let (flat, mcp, doe) = solve_all(&p)?;
    let flat_rate = match flat.mechanism {
        PaymentMode::FlatRate(r) => r,
        _ => unreachable!(),
    };
    Ok(Tables {
        flat: row(&p, &flat)?,
        mcp: row(&p, &mcp)?,
        proposed: row(&p, &doe)?,
        flat_rate,
    })
}

/// Tables for every `(E, b0)` pair of the grid, in grid order.
pub fn sweep(e_grid: &[f64], b0_grid: &[f64]) -> Result<Vec<Tables>> {
    let points: Vec<(f64, f64)> = b0_grid
        .iter()
        .flat_map(|&b0| e_grid.iter().map(move |&e| (e, b0)))
        .collect();
    points
        .par_iter()
        .map(|&(e, b0)| run_tables(e, b0))
        .collect()
}

/// Evenly spaced grid including both ends.
pub fn linspace(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n)
        .map(|i| lo + (hi - lo) * i as f64 / n.max(1) as f64)
        .collect()
}

/// Columns `E, b0, mechanism, a0, a1, welfare, p0w0, p1w1, q1,
/// avg_price_exq, avg_price_incq, peak_reduction_pct`.
pub fn to_csv(tables: &[Tables]) -> Result<String> {
    let mut w = csv::Writer::from_writer(vec![]);
    w.write_record([
        "E",
        "b0",
        "mechanism",
        "a0",
        "a1",
        "welfare",
        "p0w0",
        "p1w1",
        "q1",
        "avg_price_exq",
        "avg_price_incq",
        "peak_reduction_pct",
    ])
    .map_err(csv_err)?;
    for t in tables {
        for r in t.rows() {
            w.write_record([
                fmt_f(r.e),
                fmt_f(r.b0),
                r.mechanism.to_string(),
                fmt_f(r.a0),
                fmt_f(r.a1),
                fmt_f(r.welfare),
                fmt_f(r.p0w0),
                fmt_f(r.p1w1),
                fmt_f(r.q1),
                fmt_f(r.avg_price_exq),
                fmt_f(r.avg_price_incq),
                fmt_f(r.peak_reduction_pct),
            ])
            .map_err(csv_err)?;
        }
    }
    finish_csv(w)
}
