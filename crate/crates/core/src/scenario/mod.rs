//! Market-game data model and the exogenous history tree.

mod costs;
mod families;
mod tree;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use costs::{scale_to_n, CostModel, CostTerm, PairCosts, StateCosts};
pub use families::{Transition, UtilitySchedule, UtilityTerm};
pub use tree::{
    enumerate_histories, enumerate_histories_with_budget, HistoryNode, HistoryTree, NODE_BUDGET,
};

use crate::error::{Error, Result};

/// Number of sample points per axis used by the sampled checks in
/// [`validate`].
pub const VALIDATION_GRID: usize = 41;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExogenousChain {
    pub states: Vec<String>,
    /// Row-stochastic `S x S` matrix.
    pub transition: Vec<Vec<f64>>,
    /// Last stage index; stages run `0..=horizon`.
    pub horizon: usize,
    /// Initial exogenous state used by the solvers.
    #[serde(default)]
    pub initial: usize,
}

impl ExogenousChain {
    pub fn deterministic(horizon: usize) -> Self {
        ExogenousChain {
            states: vec!["s".into()],
            transition: vec![vec![1.0]],
            horizon,
            initial: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsumerTypeSpec {
    pub id: String,
    /// Weight of this type for each initial exogenous state.
    pub eta: Vec<f64>,
    /// Own state `z` at stage 0.
    #[serde(default)]
    pub initial_state: f64,
    pub utility: UtilitySchedule,
    pub transition: Transition,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    /// Action bound.
    #[serde(rename = "B")]
    pub action: f64,
    /// Own-state bound.
    #[serde(rename = "Z")]
    pub state: f64,
    /// Bound on the absolute value of all marginal costs.
    #[serde(rename = "P")]
    pub marginal_cost: f64,
    /// Bound on stage utilities.
    #[serde(rename = "Q")]
    pub utility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub chain: ExogenousChain,
    pub types: Vec<ConsumerTypeSpec>,
    pub costs: CostModel,
    pub bounds: Bounds,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::NotFound(path.display().to_string()));
        }
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn num_types(&self) -> usize {
        self.types.len()
    }

    /// Type weights for initial state `s0`.
    pub fn eta(&self, s0: usize) -> Vec<f64> {
        self.types.iter().map(|t| t.eta[s0]).collect()
    }

    pub fn utility(&self, ty: usize, stage: usize, state: usize) -> &UtilityTerm {
        self.types[ty].utility.term(stage, state)
    }

    pub fn tree(&self) -> Result<HistoryTree> {
        enumerate_histories(&self.chain, self.chain.initial)
    }
}

/// One failed invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub invariant: String,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, invariant: &str) -> bool {
        self.violations.iter().any(|v| v.invariant == invariant)
    }

    fn push(&mut self, invariant: &str, detail: String) {
        self.violations.push(Violation {
            invariant: invariant.to_string(),
            detail,
        });
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for v in &self.violations {
            writeln!(f, "{}: {}", v.invariant, v.detail)?;
        }
        Ok(())
    }
}

fn grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
}

const TOL: f64 = 1e-12;

/// Check every decidable invariant of `scenario`.
///
/// Monotonicity, sign and slope bounds of the costs are sampled on
/// [`VALIDATION_GRID`] points of `[0, B]` per argument. Utility bounds are
/// sampled on the same number of points of `[0, Z] x [0, B]`. The range of
/// the own-state transitions is checked on the states reachable from each
/// type's initial state, sampled stage by stage.
pub fn validate(scenario: &Scenario) -> ValidationReport {
    let mut rep = ValidationReport::default();
    let chain = &scenario.chain;
    let s = chain.len();
    if s == 0 {
        rep.push("no exogenous states", "S = 0".into());
        return rep;
    }
    if chain.initial >= s {
        rep.push(
            "initial state out of range",
            format!("{} >= {s}", chain.initial),
        );
    }
    if chain.transition.len() != s || chain.transition.iter().any(|r| r.len() != s) {
        rep.push("transition shape", format!("expected {s} x {s}"));
        return rep;
    }
    for (i, row) in chain.transition.iter().enumerate() {
        if let Some(p) = row.iter().find(|p| !(**p >= 0.0)) {
            rep.push("negative transition probability", format!("row {i}: {p}"));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > TOL {
            rep.push("row not stochastic", format!("row {i} sums to {sum}"));
        }
    }

    let b = scenario.bounds;
    for (name, v) in [
        ("B", b.action),
        ("Z", b.state),
        ("P", b.marginal_cost),
        ("Q", b.utility),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            rep.push("bounds positive", format!("{name} = {v}"));
        }
    }
    if !rep.is_ok() {
        return rep;
    }

    if scenario.types.is_empty() {
        rep.push("no consumer types", String::new());
    }
    let stages = chain.horizon + 1;
    for ty in &scenario.types {
        if ty.eta.len() != s {
            rep.push(
                "eta shape",
                format!("type {}: {} weights for {s} states", ty.id, ty.eta.len()),
            );
        } else if let Some(w) = ty.eta.iter().find(|w| !(**w >= 0.0)) {
            rep.push("negative type weight", format!("type {}: {w}", ty.id));
        }
        if let Some(e) = ty.utility.shape_error(stages, s) {
            rep.push("utility shape", format!("type {}: {e}", ty.id));
        }
        if let Some(e) = ty.transition.shape_error(s) {
            rep.push("transition shape", format!("type {}: {e}", ty.id));
        }
        if !(0.0..=b.state).contains(&ty.initial_state) {
            rep.push(
                "state out of range",
                format!("type {}: initial state {}", ty.id, ty.initial_state),
            );
        }
    }
    if !rep.is_ok() {
        return rep;
    }
    if !scenario.types.is_empty() {
        for s0 in 0..s {
            let sum: f64 = scenario.types.iter().map(|t| t.eta[s0]).sum();
            if (sum - 1.0).abs() > TOL {
                rep.push(
                    "eta not a distribution",
                    format!("initial state {s0}: weights sum to {sum}"),
                );
            }
        }
    }

    let n = VALIDATION_GRID;
    for (x, ty) in scenario.types.iter().enumerate() {
        'util: for t in 0..stages {
            for st in 0..s {
                let u = scenario.utility(x, t, st);
                for z in grid(0.0, b.state, n) {
                    for a in grid(0.0, b.action, n) {
                        let v = u.value(z, a);
                        if !(v >= -TOL) || v > b.utility + TOL {
                            rep.push(
                                "utility out of range",
                                format!("type {} stage {t} state {st}: U({z}, {a}) = {v}", ty.id),
                            );
                            break 'util;
                        }
                    }
                }
            }
        }
        // reachable own states, stage by stage
        let mut lo = ty.initial_state;
        let mut hi = ty.initial_state;
        'reach: for _ in 0..chain.horizon {
            let (mut nlo, mut nhi) = (f64::INFINITY, f64::NEG_INFINITY);
            for z in grid(lo, hi, n) {
                for a in grid(0.0, b.action, n) {
                    for sn in 0..s {
                        let zn = ty.transition.next(z, a, sn);
                        if !(zn >= -TOL) || zn > b.state + TOL {
                            rep.push(
                                "state out of range",
                                format!("type {}: r({z}, {a}, {sn}) = {zn}", ty.id),
                            );
                            break 'reach;
                        }
                        nlo = nlo.min(zn);
                        nhi = nhi.max(zn);
                    }
                }
            }
            lo = nlo;
            hi = nhi;
        }
    }

    let c = &scenario.costs;
    if !c.primary.len_ok(s) || !c.ancillary0.len_ok(s) || !c.ancillary.len_ok(s) {
        rep.push(
            "cost shape",
            format!("per-state costs must cover {s} states"),
        );
        return rep;
    }
    let p = b.marginal_cost;
    for st in 0..s {
        let mut prev = c.primary(0.0, st);
        let mut reported = (false, false, false);
        for a in grid(0.0, b.action, n) {
            let v = c.primary(a, st);
            let d = c.primary_slope(a, st);
            if (v < prev - TOL || d < -TOL) && !reported.0 {
                rep.push(
                    "primary cost decreasing",
                    format!("state {st}: C'({a}) = {d}"),
                );
                reported.0 = true;
            }
            prev = v;
            if v < -TOL && !reported.1 {
                rep.push("negative cost", format!("state {st}: C({a}) = {v}"));
                reported.1 = true;
            }
            let h0 = c.initial_ancillary(a, st);
            if h0 < -TOL && !reported.1 {
                rep.push("negative cost", format!("state {st}: H0({a}) = {h0}"));
                reported.1 = true;
            }
            let d0 = c.initial_ancillary_slope(a, st);
            if (d.abs() > p || d0.abs() > p) && !reported.2 {
                rep.push(
                    "marginal cost above bound",
                    format!("state {st}: C'({a}) = {d}, H0'({a}) = {d0}, P = {p}"),
                );
                reported.2 = true;
            }
        }
    }
    'anc: for sp in 0..s {
        for st in 0..s {
            if chain.transition[sp][st] <= 0.0 {
                continue;
            }
            for a in grid(0.0, b.action, n) {
                for an in grid(0.0, b.action, n) {
                    let h = c.ancillary(a, an, sp, st);
                    let (dp, dc) = c.ancillary_grad(a, an, sp, st);
                    if h < -TOL {
                        rep.push(
                            "negative cost",
                            format!("states ({sp},{st}): H({a}, {an}) = {h}"),
                        );
                        break 'anc;
                    }
                    if dp.abs() > p || dc.abs() > p {
                        rep.push(
                            "marginal cost above bound",
                            format!(
                                "states ({sp},{st}): grad H({a}, {an}) = ({dp}, {dc}), P = {p}"
                            ),
                        );
                        break 'anc;
                    }
                }
            }
        }
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::twostage::{build, TwoStageParams};

    #[test]
    fn two_stage_instance_is_valid() {
        for (e, b0) in [(0.0, 1.12), (0.08, 1.2), (0.1, 1.2)] {
            let sc = build(&TwoStageParams::new(e, b0));
            let rep = validate(&sc);
            assert!(rep.is_ok(), "{rep}");
        }
    }

    #[test]
    fn substochastic_row_is_reported() {
        let mut sc = build(&TwoStageParams::new(0.0, 1.12));
        sc.chain.states = vec!["lo".into(), "hi".into()];
        sc.chain.transition = vec![vec![0.5, 0.4], vec![0.5, 0.5]];
        for t in &mut sc.types {
            t.eta = vec![1.0, 1.0];
        }
        assert!(validate(&sc).has("row not stochastic"));
    }

    #[test]
    fn decreasing_primary_cost_is_reported() {
        let mut sc = build(&TwoStageParams::new(0.0, 1.12));
        sc.costs.primary = StateCosts::All(vec![CostTerm::Poly {
            coeffs: vec![0.0, -1.0],
        }]);
        assert!(validate(&sc).has("primary cost decreasing"));
    }

    #[test]
    fn toml_round_trip() {
        let sc = build(&TwoStageParams::new(0.08, 1.2));
        let text = sc.to_toml_string().unwrap();
        assert_eq!(Scenario::from_toml_str(&text).unwrap(), sc);
    }

    #[test]
    fn missing_file() {
        let err = Scenario::load("/nonexistent/missing.cfg").unwrap_err();
        assert!(err.to_string().contains("file not found"));
    }
}
