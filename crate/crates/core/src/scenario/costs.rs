use serde::{Deserialize, Serialize};

/// One term of a supplier cost function.
///
/// Single-argument functions (primary cost, initial ancillary cost) only use
/// the current aggregate demand; two-argument ancillary costs see the
/// previous demand as well.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostTerm {
    /// `sum_k coeffs[k] * current^k`
    Poly { coeffs: Vec<f64> },
    /// `alpha * max(beta * current - gamma * previous - delta, 0)^2`
    Hinge {
        alpha: f64,
        beta: f64,
        #[serde(default)]
        gamma: f64,
        #[serde(default)]
        delta: f64,
    },
}

impl CostTerm {
    pub fn value(&self, prev: f64, cur: f64) -> f64 {
        match self {
            CostTerm::Poly { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * cur + c),
            CostTerm::Hinge {
                alpha,
                beta,
                gamma,
                delta,
            } => {
                let u = (beta * cur - gamma * prev - delta).max(0.0);
                alpha * u * u
            }
        }
    }

    /// Partial derivatives `(d/d prev, d/d cur)`.
    pub fn grad(&self, prev: f64, cur: f64) -> (f64, f64) {
        match self {
            CostTerm::Poly { coeffs } => {
                let mut d = 0.0;
                for (k, c) in coeffs.iter().enumerate().skip(1).rev() {
                    d = d * cur + (k as f64) * c;
                }
                (0.0, d)
            }
            CostTerm::Hinge {
                alpha,
                beta,
                gamma,
                delta,
            } => {
                let u = (beta * cur - gamma * prev - delta).max(0.0);
                (-2.0 * alpha * gamma * u, 2.0 * alpha * beta * u)
            }
        }
    }

    /// Second partials `(pp, pc, cc)`; the right-sided value at a hinge kink.
    pub fn hess(&self, prev: f64, cur: f64) -> (f64, f64, f64) {
        match self {
            CostTerm::Poly { coeffs } => {
                let mut d2 = 0.0;
                for (k, c) in coeffs.iter().enumerate().skip(2).rev() {
                    d2 = d2 * cur + (k * (k - 1)) as f64 * c;
                }
                (0.0, 0.0, d2)
            }
            CostTerm::Hinge {
                alpha,
                beta,
                gamma,
                delta,
            } => {
                if beta * cur - gamma * prev - delta > 0.0 {
                    let k = 2.0 * alpha;
                    (k * gamma * gamma, -k * beta * gamma, k * beta * beta)
                } else {
                    (0.0, 0.0, 0.0)
                }
            }
        }
    }

    /// The same term for an `n`-consumer market: `n * f(prev/n, cur/n)`.
    pub fn scaled(&self, n: f64) -> CostTerm {
        match self {
            CostTerm::Poly { coeffs } => CostTerm::Poly {
                coeffs: coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, c)| c * n.powi(1 - k as i32))
                    .collect(),
            },
            CostTerm::Hinge {
                alpha,
                beta,
                gamma,
                delta,
            } => CostTerm::Hinge {
                alpha: alpha / n,
                beta: *beta,
                gamma: *gamma,
                delta: delta * n,
            },
        }
    }
}

fn sum_value(terms: &[CostTerm], prev: f64, cur: f64) -> f64 {
    terms.iter().map(|t| t.value(prev, cur)).sum()
}

fn sum_grad(terms: &[CostTerm], prev: f64, cur: f64) -> (f64, f64) {
    terms.iter().fold((0.0, 0.0), |(p, c), t| {
        let (dp, dc) = t.grad(prev, cur);
        (p + dp, c + dc)
    })
}

fn sum_hess(terms: &[CostTerm], prev: f64, cur: f64) -> (f64, f64, f64) {
    terms.iter().fold((0.0, 0.0, 0.0), |(a, b, c), t| {
        let (pp, pc, cc) = t.hess(prev, cur);
        (a + pp, b + pc, c + cc)
    })
}

/// A single-argument cost function indexed by exogenous state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateCosts {
    All(Vec<CostTerm>),
    PerState(Vec<Vec<CostTerm>>),
}

impl StateCosts {
    pub fn terms(&self, s: usize) -> &[CostTerm] {
        match self {
            StateCosts::All(t) => t,
            StateCosts::PerState(v) => &v[s],
        }
    }

    fn map(&self, f: impl Fn(&CostTerm) -> CostTerm) -> StateCosts {
        match self {
            StateCosts::All(t) => StateCosts::All(t.iter().map(&f).collect()),
            StateCosts::PerState(v) => {
                StateCosts::PerState(v.iter().map(|t| t.iter().map(&f).collect()).collect())
            }
        }
    }

    pub(crate) fn len_ok(&self, states: usize) -> bool {
        match self {
            StateCosts::All(_) => true,
            StateCosts::PerState(v) => v.len() == states,
        }
    }
}

/// A two-argument cost function indexed by the pair (previous state, state).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairCosts {
    All(Vec<CostTerm>),
    PerPair(Vec<Vec<Vec<CostTerm>>>),
}

impl PairCosts {
    pub fn terms(&self, prev_state: usize, state: usize) -> &[CostTerm] {
        match self {
            PairCosts::All(t) => t,
            PairCosts::PerPair(v) => &v[prev_state][state],
        }
    }

    fn map(&self, f: impl Fn(&CostTerm) -> CostTerm) -> PairCosts {
        match self {
            PairCosts::All(t) => PairCosts::All(t.iter().map(&f).collect()),
            PairCosts::PerPair(v) => PairCosts::PerPair(
                v.iter()
                    .map(|row| row.iter().map(|t| t.iter().map(&f).collect()).collect())
                    .collect(),
            ),
        }
    }

    pub(crate) fn len_ok(&self, states: usize) -> bool {
        match self {
            PairCosts::All(_) => true,
            PairCosts::PerPair(v) => v.len() == states && v.iter().all(|r| r.len() == states),
        }
    }
}

/// Supplier cost model: primary cost, initial ancillary cost and the
/// ancillary cost of moving from one aggregate demand to the next.
///
/// Reserve requirements are folded into these functions; `reserve_policy`
/// only records how that was done.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub primary: StateCosts,
    pub ancillary0: StateCosts,
    pub ancillary: PairCosts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reserve_policy: Option<String>,
}

impl CostModel {
    pub fn zero() -> Self {
        CostModel {
            primary: StateCosts::All(vec![]),
            ancillary0: StateCosts::All(vec![]),
            ancillary: PairCosts::All(vec![]),
            reserve_policy: None,
        }
    }

    pub fn primary(&self, a: f64, s: usize) -> f64 {
        sum_value(self.primary.terms(s), 0.0, a)
    }

    pub fn primary_slope(&self, a: f64, s: usize) -> f64 {
        sum_grad(self.primary.terms(s), 0.0, a).1
    }

    pub fn primary_curvature(&self, a: f64, s: usize) -> f64 {
        sum_hess(self.primary.terms(s), 0.0, a).2
    }

    pub fn initial_ancillary(&self, a: f64, s: usize) -> f64 {
        sum_value(self.ancillary0.terms(s), 0.0, a)
    }

    pub fn initial_ancillary_slope(&self, a: f64, s: usize) -> f64 {
        sum_grad(self.ancillary0.terms(s), 0.0, a).1
    }

    pub fn initial_ancillary_curvature(&self, a: f64, s: usize) -> f64 {
        sum_hess(self.ancillary0.terms(s), 0.0, a).2
    }

    pub fn ancillary(&self, prev: f64, cur: f64, prev_state: usize, state: usize) -> f64 {
        sum_value(self.ancillary.terms(prev_state, state), prev, cur)
    }

    /// `(dH/d prev, dH/d cur)`.
    pub fn ancillary_grad(
        &self,
        prev: f64,
        cur: f64,
        prev_state: usize,
        state: usize,
    ) -> (f64, f64) {
        sum_grad(self.ancillary.terms(prev_state, state), prev, cur)
    }

    pub fn ancillary_hess(
        &self,
        prev: f64,
        cur: f64,
        prev_state: usize,
        state: usize,
    ) -> (f64, f64, f64) {
        sum_hess(self.ancillary.terms(prev_state, state), prev, cur)
    }

    /// Cost functions of the `n`-consumer market whose per-consumer
    /// averages are this model: `C^n(A) = n * C(A/n)` and likewise for both
    /// ancillary costs. The closed family is preserved exactly.
    pub fn scale_to_n(&self, n: usize) -> CostModel {
        assert!(n >= 1, "population size must be positive");
        let n = n as f64;
        CostModel {
            primary: self.primary.map(|t| t.scaled(n)),
            ancillary0: self.ancillary0.map(|t| t.scaled(n)),
            ancillary: self.ancillary.map(|t| t.scaled(n)),
            reserve_policy: self.reserve_policy.clone(),
        }
    }
}

/// Free-function form of [`CostModel::scale_to_n`].
pub fn scale_to_n(costs: &CostModel, n: usize) -> CostModel {
    costs.scale_to_n(n)
}
