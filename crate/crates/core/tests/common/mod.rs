#![allow(dead_code)]

use dynprice::scenario::{
    validate, Bounds, ConsumerTypeSpec, CostModel, CostTerm, ExogenousChain, PairCosts, Scenario,
    StateCosts, Transition, UtilitySchedule, UtilityTerm,
};
use rand::Rng;

/// Smooth deterministic two-stage instance: U0 = 6a - a^2, U1 = 5 ln(1 + a),
/// C(A) = 0.5 A + A^2 and H = 2 (A1 - A0)^2.
pub fn smooth_two_stage() -> Scenario {
    Scenario {
        name: Some("smooth".into()),
        chain: ExogenousChain::deterministic(1),
        types: vec![ConsumerTypeSpec {
            id: "c".into(),
            eta: vec![1.0],
            initial_state: 0.0,
            utility: UtilitySchedule::PerStage(vec![
                UtilityTerm::Quadratic {
                    linear: 6.0,
                    quad: 2.0,
                },
                UtilityTerm::Log { scale: 5.0 },
            ]),
            transition: Transition::Hold,
        }],
        costs: CostModel {
            primary: StateCosts::All(vec![CostTerm::Poly {
                coeffs: vec![0.0, 0.5, 1.0],
            }]),
            ancillary0: StateCosts::All(vec![]),
            ancillary: PairCosts::All(vec![
                CostTerm::Hinge {
                    alpha: 2.0,
                    beta: 1.0,
                    gamma: 1.0,
                    delta: 0.0,
                },
                CostTerm::Hinge {
                    alpha: 2.0,
                    beta: -1.0,
                    gamma: -1.0,
                    delta: 0.0,
                },
            ]),
            reserve_policy: None,
        },
        bounds: Bounds {
            action: 3.0,
            state: 1.0,
            marginal_cost: 50.0,
            utility: 20.0,
        },
    }
}

/// Welfare of the smooth instance written out by hand.
pub fn smooth_welfare(a0: f64, a1: f64) -> f64 {
    6.0 * a0 - a0 * a0 + 5.0 * (1.0 + a1).ln()
        - (0.5 * a0 + a0 * a0)
        - (0.5 * a1 + a1 * a1)
        - 2.0 * (a1 - a0).powi(2)
}

/// Maximize a function of two actions on `[0, b]^2`: exhaustive search on a
/// coarse grid, then on a `step` grid around the coarse winner, then a
/// local pattern search.
pub fn brute_force_2d(f: impl Fn(f64, f64) -> f64, b: f64, step: f64) -> (f64, f64, f64) {
    let coarse = 1e-2;
    let k = (b / coarse).round() as usize;
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for i in 0..=k {
        for j in 0..=k {
            let (x, y) = (i as f64 * coarse, j as f64 * coarse);
            let v = f(x, y);
            if v > best.0 {
                best = (v, x, y);
            }
        }
    }
    let m = (2.0 * coarse / step).round() as i64;
    let (cx, cy) = (best.1, best.2);
    for i in -m..=m {
        for j in -m..=m {
            let (x, y) = (cx + i as f64 * step, cy + j as f64 * step);
            if !(0.0..=b).contains(&x) || !(0.0..=b).contains(&y) {
                continue;
            }
            let v = f(x, y);
            if v > best.0 {
                best = (v, x, y);
            }
        }
    }
    let mut h = step;
    while h > 1e-12 {
        let mut moved = false;
        for (dx, dy) in [(h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h)] {
            let (x, y) = ((best.1 + dx).clamp(0.0, b), (best.2 + dy).clamp(0.0, b));
            let v = f(x, y);
            if v > best.0 {
                best = (v, x, y);
                moved = true;
            }
        }
        if !moved {
            h *= 0.5;
        }
    }
    (best.1, best.2, best.0)
}

fn random_utility(rng: &mut impl Rng) -> UtilityTerm {
    match rng.gen_range(0..4) {
        0 => {
            let linear = rng.gen_range(1.0..6.0);
            UtilityTerm::Quadratic {
                linear,
                quad: rng.gen_range(0.2..linear),
            }
        }
        1 => UtilityTerm::Log {
            scale: rng.gen_range(1.0..5.0),
        },
        2 => UtilityTerm::Linear {
            slope: rng.gen_range(1.0..8.0),
            cap: Some(rng.gen_range(0.5..2.0)),
        },
        _ => UtilityTerm::CappedLinear {
            slope: rng.gen_range(1.0..8.0),
        },
    }
}

fn random_transition(rng: &mut impl Rng) -> Transition {
    if rng.gen_bool(0.25) {
        Transition::Hold
    } else {
        Transition::Linear {
            constant: rng.gen_range(0.2..0.8),
            state: rng.gen_range(0.0..0.5),
            action: rng.gen_range(-0.1..0.1),
        }
    }
}

fn stochastic_row(rng: &mut impl Rng, s: usize) -> Vec<f64> {
    loop {
        let row: Vec<f64> = (0..s)
            .map(|_| {
                if rng.gen_bool(0.2) {
                    0.0
                } else {
                    rng.gen_range(0.1..1.0)
                }
            })
            .collect();
        let sum: f64 = row.iter().sum();
        if sum > 0.0 {
            return row.iter().map(|v| v / sum).collect();
        }
    }
}

/// Random scenario with concave utilities, affine own-state transitions and
/// convex costs: up to three exogenous states, horizon up to three and up
/// to three types.
pub fn random_concave_scenario(rng: &mut impl Rng) -> Scenario {
    loop {
        let s = rng.gen_range(1..=3);
        let horizon = rng.gen_range(0..=3);
        let x = rng.gen_range(1..=3);
        let chain = ExogenousChain {
            states: (0..s).map(|i| format!("s{i}")).collect(),
            transition: (0..s).map(|_| stochastic_row(rng, s)).collect(),
            horizon,
            initial: rng.gen_range(0..s),
        };
        let mut weights: Vec<Vec<f64>> = (0..s)
            .map(|_| (0..x).map(|_| rng.gen_range(0.1..1.0)).collect())
            .collect();
        for w in &mut weights {
            let sum: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= sum);
        }
        let types = (0..x)
            .map(|i| ConsumerTypeSpec {
                id: format!("t{i}"),
                eta: (0..s).map(|st| weights[st][i]).collect(),
                initial_state: rng.gen_range(0.2..1.0),
                utility: UtilitySchedule::PerStageState(
                    (0..=horizon)
                        .map(|_| (0..s).map(|_| random_utility(rng)).collect())
                        .collect(),
                ),
                transition: random_transition(rng),
            })
            .collect();
        let costs = CostModel {
            primary: StateCosts::PerState(
                (0..s)
                    .map(|_| {
                        vec![CostTerm::Poly {
                            coeffs: vec![0.0, rng.gen_range(0.0..2.0), rng.gen_range(0.2..2.0)],
                        }]
                    })
                    .collect(),
            ),
            ancillary0: StateCosts::All(vec![CostTerm::Hinge {
                alpha: rng.gen_range(0.0..3.0),
                beta: rng.gen_range(0.5..1.5),
                gamma: 0.0,
                delta: rng.gen_range(0.0..1.0),
            }]),
            ancillary: PairCosts::All(vec![CostTerm::Hinge {
                alpha: rng.gen_range(0.0..3.0),
                beta: rng.gen_range(0.8..1.2),
                gamma: rng.gen_range(0.8..1.2),
                delta: rng.gen_range(-0.2..0.2),
            }]),
            reserve_policy: None,
        };
        let sc = Scenario {
            name: Some("random".into()),
            chain,
            types,
            costs,
            bounds: Bounds {
                action: 2.0,
                state: 3.0,
                marginal_cost: 200.0,
                utility: 100.0,
            },
        };
        if validate(&sc).is_ok() {
            return sc;
        }
    }
}
