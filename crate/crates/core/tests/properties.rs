mod common;

use dynprice::equilibrium::ObliviousStrategy;
use dynprice::pricing::{accounting, induced_prices, PaymentMode};
use dynprice::scenario::Scenario;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_strategy(sc: &Scenario, rng: &mut ChaCha8Rng) -> ObliviousStrategy {
    let nodes = sc.tree().unwrap().len();
    let b = sc.bounds.action;
    let mut s = ObliviousStrategy::constant(sc.num_types(), nodes, 0.0);
    for x in 0..sc.num_types() {
        for n in 0..nodes {
            s.set(x, n, rng.gen_range(0.0..=b));
        }
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn scenario_survives_toml_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sc = common::random_concave_scenario(&mut rng);
        let back = Scenario::from_toml_str(&sc.to_toml_string().unwrap()).unwrap();
        prop_assert_eq!(back, sc);
    }

    #[test]
    fn revenue_matches_charges(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sc = common::random_concave_scenario(&mut rng);
        let tree = sc.tree().unwrap();
        let s = random_strategy(&sc, &mut rng);
        let demand = s.demand(&sc.eta(tree.s0));
        let prices = induced_prices(&sc.costs, &tree, &demand).unwrap();
        let mut mcp = 0.0;
        let mut proposed = 0.0;
        for (id, nd) in tree.nodes.iter().enumerate() {
            let pr = &prices.nodes[id];
            let d = demand.values[id];
            mcp += nd.prob * (pr.p + pr.w) * d;
            proposed += nd.prob * ((pr.p + pr.w) * d + pr.q * nd.parent.map_or(0.0, |p| demand.values[p]));
        }
        for (mode, expected) in [(PaymentMode::Mcp, mcp), (PaymentMode::Proposed, proposed)] {
            let acc = accounting(&sc, &tree, &s, &prices, mode);
            prop_assert!((acc.supplier_revenue - expected).abs() <= 1e-9 * (1.0 + expected.abs()));
            prop_assert!(acc.residual <= 1e-9);
            prop_assert!((acc.welfare - (acc.utility - acc.primary_cost - acc.ancillary_cost)).abs() <= 1e-9);
        }
    }

    #[test]
    fn flat_revenue_is_rate_times_consumption(seed in any::<u64>(), rate in 0.0f64..20.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sc = common::random_concave_scenario(&mut rng);
        let tree = sc.tree().unwrap();
        let s = random_strategy(&sc, &mut rng);
        let demand = s.demand(&sc.eta(tree.s0));
        let prices = induced_prices(&sc.costs, &tree, &demand).unwrap();
        let total: f64 = tree.nodes.iter().enumerate().map(|(id, nd)| nd.prob * demand.values[id]).sum();
        let acc = accounting(&sc, &tree, &s, &prices, PaymentMode::FlatRate(rate));
        prop_assert!((acc.supplier_revenue - rate * total).abs() <= 1e-9 * (1.0 + rate * total));
    }
}
