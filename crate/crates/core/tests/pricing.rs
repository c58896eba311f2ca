use dynprice::equilibrium::{solve_doe, DoeConfig, ObliviousStrategy};
use dynprice::pricing::{
    accounting, average_retail_price, induced_prices, stage_payoff, DemandPath, NodePrices,
    PaymentMode,
};
use dynprice::scenario::UtilityTerm;
use dynprice::twostage::{build, TwoStageParams};

fn table_two_instance() -> dynprice::scenario::Scenario {
    build(&TwoStageParams::new(0.0, 1.12))
}

#[test]
fn prices_at_reported_demand() {
    let sc = table_two_instance();
    let tree = sc.tree().unwrap();
    let p = induced_prices(&sc.costs, &tree, &DemandPath::new(vec![1.0901, 1.2])).unwrap();
    assert!((p.p_plus_w(0) - 4.4401).abs() < 2e-3, "{}", p.p_plus_w(0));
    assert!((p.p_plus_w(1) - 6.7609).abs() < 2e-3, "{}", p.p_plus_w(1));
    assert!((p.nodes[1].q + 4.4401).abs() < 2e-3, "{}", p.nodes[1].q);
    assert_eq!(p.nodes[0].q, 0.0);
}

#[test]
fn proposed_stage_one_payoff() {
    let prices = NodePrices {
        p: 2.4,
        w: 6.7609 - 2.4,
        q: -4.4401,
    };
    let u = UtilityTerm::CappedLinear { slope: 12.0 };
    let v = stage_payoff(&u, 1.2, 1.2, 1.0901, &prices, PaymentMode::Proposed);
    let expected = 14.4 - 6.7609 * 1.2 + 4.4401 * 1.0901;
    assert!((v - expected).abs() < 1e-12);
    assert!((12.0 * 1.2 - 14.4f64).abs() < 5e-3);
    assert!((6.7609 * 1.2 - 8.1131f64).abs() < 5e-3);
    assert!((4.4401 * 1.0901 - 4.8402f64).abs() < 5e-3);
}

#[test]
fn mcp_stage_zero_payoff() {
    let prices = NodePrices {
        p: 2.0,
        w: 0.0,
        q: 0.0,
    };
    let u = UtilityTerm::CappedLinear { slope: 10.0 };
    assert!((stage_payoff(&u, 1.0, 1.0, 0.0, &prices, PaymentMode::Mcp) - 8.0).abs() < 1e-12);
}

#[test]
fn flat_rate_payment_over_both_stages() {
    let sc = table_two_instance();
    let tree = sc.tree().unwrap();
    let s = ObliviousStrategy::from_fn(1, 2, |_, n| if n == 0 { 1.0 } else { 1.2 });
    let prices = induced_prices(&sc.costs, &tree, &s.demand(&[1.0])).unwrap();
    let acc = accounting(&sc, &tree, &s, &prices, PaymentMode::FlatRate(7.0182));
    assert!(
        (acc.supplier_revenue - 15.44).abs() < 1e-3,
        "{}",
        acc.supplier_revenue
    );
}

#[test]
fn accounting_closes_on_solved_instances() {
    for (e, b0) in [(0.0, 1.12), (0.08, 1.2), (0.04, 1.15)] {
        let sc = build(&TwoStageParams::new(e, b0));
        let r = solve_doe(&sc, &DoeConfig::default()).unwrap();
        assert!(r.accounting.residual <= 1e-9, "{}", r.accounting.residual);
        // the identity is exact: surplus + revenue - costs = utility - costs
        let direct = r.accounting.utility - r.accounting.primary_cost - r.accounting.ancillary_cost;
        assert!((direct - r.welfare.total).abs() < 1e-9);
    }
}

#[test]
fn solved_average_prices() {
    let sc = table_two_instance();
    let tree = sc.tree().unwrap();
    let r = solve_doe(&sc, &DoeConfig::default()).unwrap();
    let exq = average_retail_price(&tree, &r.demand, &r.prices, false).unwrap();
    assert!((exq - 5.6562).abs() < 2e-3, "{exq}");

    let sc = build(&TwoStageParams::new(0.08, 1.2));
    let tree = sc.tree().unwrap();
    let r = solve_doe(&sc, &DoeConfig::default()).unwrap();
    let incq = average_retail_price(&tree, &r.demand, &r.prices, true).unwrap();
    assert!((incq - 3.568).abs() < 2e-3, "{incq}");
}
