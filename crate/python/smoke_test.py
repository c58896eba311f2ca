"""Smoke test for the dynprice extension module.

Build and install first, e.g. `maturin develop --release -m crates/python/Cargo.toml`.
"""

import math

import dynprice


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    sc = dynprice.Scenario.two_stage(0.0, 1.12)
    assert sc.validate() == [], sc.validate()
    assert sc.num_nodes == 2

    doe = dynprice.solve(sc, "proposed")
    assert doe.converged
    assert close(doe.demand[0], 84.224 / 77.264, 1e-4), doe.demand
    assert close(doe.welfare, 21.4735, 1e-3)
    assert close(doe.average_price(), 5.6562, 2e-3)

    mcp = dynprice.solve(sc, "mcp")
    assert close(mcp.welfare, 21.16, 1e-3)

    rows = dynprice.run_tables(0.08, 1.2)
    flat, mcp_row, proposed = rows
    assert close(proposed["a0"], 1.0308, 2e-3)
    assert close(proposed["avg_price_incq"], 3.568, 5e-3)
    assert proposed["welfare"] >= mcp_row["welfare"] >= flat["welfare"] - 1e-6

    again = dynprice.Scenario.from_toml(sc.to_toml())
    assert again.num_types == 1

    mixed = dynprice.Scenario.two_type()
    rep = dynprice.solve(mixed)
    mean, se = dynprice.simulate_symmetric(mixed, rep, 40, draws=50, seed=3)
    assert math.isfinite(mean) and se >= 0.0
    gain, _ = dynprice.deviation_gain(mixed, rep, 5, draws=10, seed=3, tagged_type=1)
    assert gain > 0.0

    assert close(dynprice.true_cost(1.0, 1.0, [0.5, 2.5]), 12.5, 1e-12)
    assert dynprice.surrogate_cost(1.0, 1.0, [-1.0, -0.5]) == 0.0

    try:
        dynprice.Scenario.load("missing.cfg")
    except FileNotFoundError:
        pass
    else:
        raise AssertionError("expected FileNotFoundError")

    print("smoke test passed")


if __name__ == "__main__":
    main()
