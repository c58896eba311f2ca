//! Supplier cost with a ramp-limited primary resource and an expensive
//! ancillary resource, against a surrogate whose stage terms only depend on
//! consecutive forecast errors.

use rand::distributions::{Distribution, Uniform};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::finite_game::draw_rng;
use crate::pricing::{csv_err, finish_csv, fmt_f};

/// Cost weight of ancillary output relative to primary output.
pub const ANCILLARY_WEIGHT: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispatchParams {
    pub horizon: usize,
    pub r_b: f64,
    pub r_d: f64,
    /// Forecast errors are uniform on `[-omega, omega]`.
    pub omega: f64,
    pub trials: usize,
    pub seed: u64,
}

impl DispatchParams {
    pub fn new(r_b: f64, r_d: f64, omega: f64) -> Self {
        DispatchParams {
            horizon: 24,
            r_b,
            r_d,
            omega,
            trials: 100_000,
            seed: crate::finite_game::DEFAULT_SEED,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_b > 0.0 && self.r_d > 0.0 && self.omega > 0.0) {
            return Err(Error::Invalid(
                "ramp rates and omega must be positive".into(),
            ));
        }
        if self.horizon == 0 || self.trials == 0 {
            return Err(Error::Invalid(
                "horizon and trial count must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dispatch {
    pub primary: f64,
    pub ancillary: f64,
}

/// Actual dispatch for errors `w[0..T]` (stages 1..T; stage 0 has no error).
pub fn dispatch(params: &DispatchParams, w: &[f64]) -> Vec<Dispatch> {
    let (mut b, mut d) = (0.0, 0.0);
    w.iter()
        .map(|&wt| {
            if wt > 0.0 {
                b = f64::min(wt, b + params.r_b);
                d = f64::min(wt - b, d + params.r_d);
            } else {
                b = 0.0;
                d = 0.0;
            }
            Dispatch {
                primary: b,
                ancillary: d,
            }
        })
        .collect()
}

pub fn true_cost(params: &DispatchParams, w: &[f64]) -> f64 {
    dispatch(params, w)
        .iter()
        .map(|x| x.primary * x.primary + ANCILLARY_WEIGHT * x.ancillary * x.ancillary)
        .sum()
}

/// Surrogate dispatch at one stage given the previous and current errors.
pub fn surrogate_dispatch(params: &DispatchParams, w_prev: f64, w: f64) -> Dispatch {
    let d = f64::min(params.r_d, (w - w_prev.max(0.0) - params.r_b).max(0.0));
    Dispatch {
        primary: (w - d).max(0.0),
        ancillary: d,
    }
}

fn surrogate_term(params: &DispatchParams, w_prev: f64, w: f64) -> f64 {
    let s = surrogate_dispatch(params, w_prev, w);
    s.primary * s.primary + ANCILLARY_WEIGHT * s.ancillary * s.ancillary
}

/// Pairwise extra cost over serving the error with the primary resource.
pub fn pairwise_h(params: &DispatchParams, w_prev: f64, w: f64) -> f64 {
    let wp = w.max(0.0);
    (surrogate_term(params, w_prev, w) - wp * wp).max(0.0)
}

pub fn surrogate_cost(params: &DispatchParams, w: &[f64]) -> f64 {
    let mut prev = 0.0;
    let mut total = 0.0;
    for &wt in w {
        total += surrogate_term(params, prev, wt);
        prev = wt;
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryReport {
    pub cost: f64,
    pub surrogate: f64,
    /// Some stage has `b + d < w` with `w > 0`.
    pub shed: bool,
    /// Some stage has `w[t-1] <= 0`, `w[t] > r_b` and `w[t+1] > 2 r_b`.
    pub triple_surge: bool,
    /// Largest stage difference between the surrogate term and its
    /// pairwise form `((w)^+)^2 + H`.
    pub pairwise_mismatch: f64,
}

impl TrajectoryReport {
    pub fn relative_error(&self) -> f64 {
        if self.cost > 0.0 {
            (self.cost - self.surrogate).abs() / self.cost
        } else {
            0.0
        }
    }
}

pub fn evaluate_trajectory(params: &DispatchParams, w: &[f64]) -> TrajectoryReport {
    let dis = dispatch(params, w);
    let shed = w
        .iter()
        .zip(&dis)
        .any(|(wt, x)| *wt > 0.0 && x.primary + x.ancillary < *wt - 1e-12);
    let mut padded = Vec::with_capacity(w.len() + 1);
    padded.push(0.0);
    padded.extend_from_slice(w);
    let triple_surge = padded
        .windows(3)
        .any(|v| v[0] <= 0.0 && v[1] > params.r_b && v[2] > 2.0 * params.r_b);
    let pairwise_mismatch = padded
        .windows(2)
        .map(|v| {
            let wp = v[1].max(0.0);
            (surrogate_term(params, v[0], v[1]) - wp * wp - pairwise_h(params, v[0], v[1])).abs()
        })
        .fold(0.0, f64::max);
    TrajectoryReport {
        cost: dis
            .iter()
            .map(|x| x.primary * x.primary + ANCILLARY_WEIGHT * x.ancillary * x.ancillary)
            .sum(),
        surrogate: surrogate_cost(params, w),
        shed,
        triple_surge,
        pairwise_mismatch,
    }
}

pub fn sample_trajectory(params: &DispatchParams, index: u64) -> Vec<f64> {
    let mut rng = draw_rng(params.seed, index);
    let u = Uniform::new_inclusive(-params.omega, params.omega);
    (0..params.horizon).map(|_| u.sample(&mut rng)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorPoint {
    pub omega_over_rb: f64,
    pub r_b: f64,
    pub r_d: f64,
    pub trials: usize,
    /// Mean of `|C - C~| / C` over trajectories with `C > 0`.
    pub mean_rel_error: f64,
    /// Same, with trajectories where `C = 0` counted as zero error.
    pub mean_rel_error_all: f64,
    pub shed_rate: f64,
    pub triple_surge_rate: f64,
    /// Trajectories where `C != C~` although neither shedding nor the
    /// triple surge occurs.
    pub unexplained: usize,
    pub max_pairwise_mismatch: f64,
}

pub fn run_point(params: &DispatchParams) -> Result<ErrorPoint> {
    params.validate()?;
    let reports: Vec<TrajectoryReport> = (0..params.trials as u64)
        .into_par_iter()
        .map(|i| evaluate_trajectory(params, &sample_trajectory(params, i)))
        .collect();
    let k = reports.len() as f64;
    let positive: Vec<f64> = reports
        .iter()
        .filter(|r| r.cost > 0.0)
        .map(|r| r.relative_error())
        .collect();
    let sum: f64 = positive.iter().sum();
    Ok(ErrorPoint {
        omega_over_rb: params.omega / params.r_b,
        r_b: params.r_b,
        r_d: params.r_d,
        trials: params.trials,
        mean_rel_error: if positive.is_empty() {
            0.0
        } else {
            sum / positive.len() as f64
        },
        mean_rel_error_all: sum / k,
        shed_rate: reports.iter().filter(|r| r.shed).count() as f64 / k,
        triple_surge_rate: reports.iter().filter(|r| r.triple_surge).count() as f64 / k,
        unexplained: reports
            .iter()
            .filter(|r| {
                !r.shed && !r.triple_surge && (r.cost - r.surrogate).abs() > 1e-12 * (1.0 + r.cost)
            })
            .count(),
        max_pairwise_mismatch: reports
            .iter()
            .map(|r| r.pairwise_mismatch)
            .fold(0.0, f64::max),
    })
}

/// Default grid of `omega / r_b`.
pub fn default_ratios() -> Vec<f64> {
    (1..=12).map(|i| 0.5 * i as f64).collect()
}

/// `(r_b, r_d)` pairs of the reference curves.
pub const REFERENCE_CURVES: [(f64, f64); 3] = [(0.05, 0.1), (0.05, 0.25), (0.02, 0.1)];

/// Error curve for one `(r_b, r_d)` pair. Every grid point draws its own
/// trajectories from a seed derived from `seed` and the point.
pub fn error_experiment(
    r_b: f64,
    r_d: f64,
    ratios: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Vec<ErrorPoint>> {
    error_experiment_with_horizon(r_b, r_d, ratios, trials, 24, seed)
}

pub fn error_experiment_with_horizon(
    r_b: f64,
    r_d: f64,
    ratios: &[f64],
    trials: usize,
    horizon: usize,
    seed: u64,
) -> Result<Vec<ErrorPoint>> {
    if trials == 0 {
        return Err(Error::Invalid("trials must be at least 1".into()));
    }
    ratios
        .iter()
        .map(|&ratio| {
            let mut p = DispatchParams::new(r_b, r_d, ratio * r_b);
            p.trials = trials;
            p.horizon = horizon;
            p.seed = point_seed(seed, r_b, r_d, ratio);
            run_point(&p)
        })
        .collect()
}

fn point_seed(seed: u64, r_b: f64, r_d: f64, ratio: f64) -> u64 {
    let mut h = seed;
    for x in [r_b, r_d, ratio] {
        h = h.rotate_left(17) ^ x.to_bits();
        h = h.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    }
    h
}

/// Columns `omega_over_rb, r_b, r_d, trials, mean_rel_error, shed_rate,
/// mean_rel_error_all`.
pub fn to_csv(points: &[ErrorPoint]) -> Result<String> {
    let mut w = csv::Writer::from_writer(vec![]);
    w.write_record([
        "omega_over_rb",
        "r_b",
        "r_d",
        "trials",
        "mean_rel_error",
        "shed_rate",
        "mean_rel_error_all",
    ])
    .map_err(csv_err)?;
    for p in points {
        w.write_record([
            fmt_f(p.omega_over_rb),
            fmt_f(p.r_b),
            fmt_f(p.r_d),
            p.trials.to_string(),
            fmt_f(p.mean_rel_error),
            fmt_f(p.shed_rate),
            fmt_f(p.mean_rel_error_all),
        ])
        .map_err(csv_err)?;
    }
    finish_csv(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> DispatchParams {
        DispatchParams::new(1.0, 1.0, 3.0)
    }

    #[test]
    fn hand_traced_dispatch() {
        let p = unit();
        let d = dispatch(&p, &[0.5, 2.5]);
        assert_eq!(
            d[0],
            Dispatch {
                primary: 0.5,
                ancillary: 0.0
            }
        );
        assert_eq!(
            d[1],
            Dispatch {
                primary: 1.5,
                ancillary: 1.0
            }
        );
        assert!((true_cost(&p, &[0.5, 2.5]) - 12.5).abs() < 1e-12);
    }

    #[test]
    fn negative_errors_cost_nothing() {
        let p = unit();
        let w = [-0.1, -2.0, -0.5];
        assert_eq!(true_cost(&p, &w), 0.0);
        assert_eq!(surrogate_cost(&p, &w), 0.0);
    }

    #[test]
    fn single_surge_at_ramp_rate() {
        let p = DispatchParams::new(0.3, 0.1, 1.0);
        assert!((true_cost(&p, &[0.3]) - 0.09).abs() < 1e-15);
        assert_eq!(dispatch(&p, &[0.3])[0].ancillary, 0.0);
    }

    #[test]
    fn small_surge_after_slack_is_primary_only() {
        let p = DispatchParams::new(0.3, 0.1, 1.0);
        let s = surrogate_dispatch(&p, -0.2, 0.25);
        assert_eq!(
            s,
            Dispatch {
                primary: 0.25,
                ancillary: 0.0
            }
        );
    }

    #[test]
    fn triple_surge_is_flagged() {
        let p = unit();
        let r = evaluate_trajectory(&p, &[-0.5, 1.5, 2.5]);
        assert!(r.triple_surge);
        assert!(r.cost != r.surrogate);
    }
}
