mod common;

use dynprice::equilibrium::{
    best_response, continuum_welfare, kkt_residual, solve_doe, solve_flat, solve_mcp, BrConfig,
    DoeConfig, McpConfig, ObliviousStrategy,
};
use dynprice::pricing::{PaymentMode, PricePath};
use dynprice::scenario::{CostModel, PairCosts, StateCosts};
use dynprice::twostage::{build, TwoStageParams};
use dynprice::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn two_point(a0: f64, a1: f64) -> ObliviousStrategy {
    ObliviousStrategy::from_fn(1, 2, |_, n| if n == 0 { a0 } else { a1 })
}

fn zero_costs(sc: &mut dynprice::scenario::Scenario) {
    sc.costs = CostModel {
        primary: StateCosts::All(vec![]),
        ancillary0: StateCosts::All(vec![]),
        ancillary: PairCosts::All(vec![]),
        reserve_policy: None,
    };
}

#[test]
fn welfare_of_reported_strategies() {
    let sc = build(&TwoStageParams::new(0.0, 1.12));
    let tree = sc.tree().unwrap();
    assert!((continuum_welfare(&sc, &tree, &two_point(1.0901, 1.2)).total - 21.4735).abs() < 1e-3);
    assert!((continuum_welfare(&sc, &tree, &two_point(1.0, 1.2)).total - 21.16).abs() < 1e-3);
    let sc = build(&TwoStageParams::new(0.08, 1.2));
    assert!((continuum_welfare(&sc, &tree, &two_point(1.0, 1.2)).total - 21.608).abs() < 1e-3);
}

#[test]
fn doe_reproduces_reported_demand() {
    let r = solve_doe(
        &build(&TwoStageParams::new(0.0, 1.12)),
        &DoeConfig::default(),
    )
    .unwrap();
    assert!((r.demand.values[0] - 1.0901).abs() < 2e-3);
    assert!((r.demand.values[1] - 1.2).abs() < 2e-3);
    assert!(r.kkt.max <= 1e-6);
    let r = solve_doe(
        &build(&TwoStageParams::new(0.08, 1.2)),
        &DoeConfig::default(),
    )
    .unwrap();
    assert!((r.demand.values[0] - 1.0308).abs() < 2e-3);
    assert!((r.prices.nodes[1].q + 2.363).abs() < 2e-3);
}

#[test]
fn expensive_supply_gives_all_zero_strategy() {
    let mut sc = common::smooth_two_stage();
    // marginal cost at zero is 10, above every marginal utility
    sc.costs.primary = StateCosts::All(vec![dynprice::scenario::CostTerm::Poly {
        coeffs: vec![0.0, 10.0, 1.0],
    }]);
    let r = solve_doe(&sc, &DoeConfig::default()).unwrap();
    assert!(
        r.strategy.actions.iter().all(|a| *a == 0.0),
        "{:?}",
        r.strategy.actions
    );
}

#[test]
fn mcp_reproduces_reported_prices() {
    let sc = build(&TwoStageParams::new(0.0, 1.12));
    let r = solve_mcp(&sc, &McpConfig::default()).unwrap();
    assert!((r.demand.values[0] - 1.0).abs() < 2e-3 && (r.demand.values[1] - 1.2).abs() < 2e-3);
    assert!((r.prices.p_plus_w(0) - 2.0).abs() < 2e-3);
    assert!((r.prices.p_plus_w(1) - 11.2).abs() < 2e-3);
    assert!((r.welfare.total - 21.16).abs() < 1e-3);
}

#[test]
fn zero_costs_make_mechanisms_coincide() {
    let mut sc = build(&TwoStageParams::new(0.05, 1.2));
    zero_costs(&mut sc);
    let doe = solve_doe(&sc, &DoeConfig::default()).unwrap();
    let mcp = solve_mcp(&sc, &McpConfig::default()).unwrap();
    let flat = solve_flat(&sc, 0.0, &BrConfig::default()).unwrap();
    for r in [&mcp, &flat] {
        assert!((r.welfare.total - doe.welfare.total).abs() < 1e-9);
    }
    // free supply: consume 1 and 1.2 for 10 + 14.4
    assert!(
        (doe.welfare.total - 24.4).abs() < 1e-9,
        "{}",
        doe.welfare.total
    );
    assert!(kkt_residual(&sc, &sc.tree().unwrap(), &doe.strategy).max == 0.0);
}

#[test]
fn best_response_to_doe_prices_is_the_doe() {
    for (e, b0) in [(0.08, 1.2), (0.05, 1.15)] {
        let sc = build(&TwoStageParams::new(e, b0));
        let tree = sc.tree().unwrap();
        let r = solve_doe(&sc, &DoeConfig::default()).unwrap();
        // shifting is payoff-neutral at these prices, so seed with the DOE
        let cfg = BrConfig {
            seed: Some(r.strategy.of_type(0).to_vec()),
            ..BrConfig::default()
        };
        let br = best_response(&sc, &tree, &r.prices, 0, PaymentMode::Proposed, &cfg);
        let own = dynprice::equilibrium::best_response_gap(&sc, &tree, &r, &BrConfig::default());
        for n in 0..2 {
            assert!(
                (br.actions[n] - r.strategy.get(0, n)).abs() < 1e-3,
                "{:?}",
                br.actions
            );
        }
        assert!(own <= 1e-6, "{own}");
    }
}

#[test]
fn zero_total_stage_zero_price_breaks_ties_low() {
    let sc = build(&TwoStageParams::new(0.0, 1.12));
    let tree = sc.tree().unwrap();
    let r = solve_doe(&sc, &DoeConfig::default()).unwrap();
    assert!(r.prices.effective(&tree, 0, PaymentMode::Proposed).abs() < 1e-6);
    let free = best_response(
        &sc,
        &tree,
        &r.prices,
        0,
        PaymentMode::Proposed,
        &BrConfig::default(),
    );
    assert!((free.actions[0] - 1.0).abs() < 1e-6, "{:?}", free.actions);
    let seeded = best_response(
        &sc,
        &tree,
        &r.prices,
        0,
        PaymentMode::Proposed,
        &BrConfig {
            seed: Some(r.strategy.of_type(0).to_vec()),
            ..BrConfig::default()
        },
    );
    assert!((seeded.actions[0] - 1.0901).abs() < 2e-3);
}

#[test]
fn non_equilibrium_strategy_has_stage_zero_residual() {
    let sc = build(&TwoStageParams::new(0.0, 1.12));
    let k = kkt_residual(&sc, &sc.tree().unwrap(), &two_point(1.0, 1.2));
    let stage0 = k.entries.iter().find(|e| e.node == 0).unwrap();
    assert!(stage0.residual > 1e-3, "{stage0:?}");
}

#[test]
fn interior_spread_identities() {
    // MCP interior: (p1 + w1) - (p0 + w0) = d1 - d0
    let sc = build(&TwoStageParams::new(0.08, 1.2));
    let tree = sc.tree().unwrap();
    let m = solve_mcp(
        &sc,
        &McpConfig {
            tol: 1e-11,
            ..McpConfig::default()
        },
    )
    .unwrap();
    let mspread = m.prices.p_plus_w(1) - m.prices.p_plus_w(0);
    assert!(
        m.demand.values[0] > 1.0 && (mspread - 2.0).abs() < 1e-4,
        "{:?} {mspread}",
        m.demand.values
    );
    // DOE with 0 < shift < E
    let d = solve_doe(&sc, &DoeConfig::default()).unwrap();
    let shift = d.demand.values[0] - 1.0;
    assert!(shift > 0.0 && shift < 0.08);
    let spread = d.prices.p_plus_w(1) - d.prices.effective(&tree, 0, PaymentMode::Proposed);
    assert!((spread - 2.0).abs() < 1e-6, "{spread}");
    // E = 0 with a0 > 1
    let sc = build(&TwoStageParams::new(0.0, 1.12));
    let tree = sc.tree().unwrap();
    let d = solve_doe(&sc, &DoeConfig::default()).unwrap();
    assert!(d.prices.effective(&tree, 0, PaymentMode::Proposed).abs() < 1e-6);
}

#[test]
fn brute_force_grid_matches_doe() {
    for (e, b0) in [(0.0, 1.12), (0.08, 1.2), (0.03, 1.16)] {
        let sc = build(&TwoStageParams::new(e, b0));
        let tree = sc.tree().unwrap();
        let r = solve_doe(&sc, &DoeConfig::default()).unwrap();
        let f = |a0: f64, a1: f64| {
            let cap1 = 1.2 - e + (1.0 + e - a0.max(1.0)).max(0.0);
            10.0 * a0.min(1.0 + e) + 12.0 * a1.min(cap1)
                - a0 * a0
                - a1 * a1
                - 10.0 * (b0 * a0 - 1.12).max(0.0).powi(2)
                - 20.0 * (1.1 * a1 - b0 * a0).max(0.0).powi(2)
        };
        let (_, _, best) = common::brute_force_2d(f, 2.0, 1e-4);
        assert!(
            (r.welfare.total - best).abs() < 1e-6,
            "{} vs {best}",
            r.welfare.total
        );
        assert!(continuum_welfare(&sc, &tree, &r.strategy).total >= best - 1e-6);
    }
}

#[test]
fn invalid_scenario_is_rejected() {
    let mut sc = build(&TwoStageParams::new(0.0, 1.12));
    sc.chain.transition = vec![vec![0.9]];
    assert!(matches!(
        solve_doe(&sc, &DoeConfig::default()),
        Err(Error::Invalid(_))
    ));
}

#[test]
fn unattainable_tolerance_reports_best_iterate() {
    let sc = build(&TwoStageParams::new(0.0, 1.12));
    match solve_doe(
        &sc,
        &DoeConfig {
            tol: -1.0,
            ..DoeConfig::default()
        },
    ) {
        Err(Error::NonConvergence { best: Some(b), .. }) => {
            assert!((b.welfare.total - 21.4735).abs() < 1e-3)
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn zero_prices_best_response_maximizes_utility() {
    let sc = common::smooth_two_stage();
    let tree = sc.tree().unwrap();
    let br = best_response(
        &sc,
        &tree,
        &PricePath::zeros(2),
        0,
        PaymentMode::Mcp,
        &BrConfig::default(),
    );
    // 6a - a^2 peaks at 3 = B, where it is flat; ln(1 + a) increases up to B
    assert!(
        (br.actions[0] - 3.0).abs() < 1e-5 && (br.actions[1] - 3.0).abs() < 1e-9,
        "{:?}",
        br.actions
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn welfare_is_concave_along_segments(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sc = common::random_concave_scenario(&mut rng);
        let tree = sc.tree().unwrap();
        let x = sc.num_types();
        for _ in 0..10 {
            let draw = |rng: &mut ChaCha8Rng| {
                let mut s = ObliviousStrategy::constant(x, tree.len(), 0.0);
                for t in 0..x {
                    for n in 0..tree.len() {
                        s.set(t, n, rng.gen_range(0.0..=sc.bounds.action));
                    }
                }
                s
            };
            let (a, b) = (draw(&mut rng), draw(&mut rng));
            let mut mid = a.clone();
            for t in 0..x {
                for n in 0..tree.len() {
                    mid.set(t, n, 0.5 * (a.get(t, n) + b.get(t, n)));
                }
            }
            let w = |s: &ObliviousStrategy| continuum_welfare(&sc, &tree, s).total;
            prop_assert!(w(&mid) >= 0.5 * (w(&a) + w(&b)) - 1e-9);
        }
    }
}
