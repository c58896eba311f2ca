use serde::{Deserialize, Serialize};

use crate::num::{Real, Smoothing};

/// Stage utility `U(z, a)` of a consumer with own state `z` taking action `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UtilityTerm {
    /// `slope * min(a, z)`: the own state caps useful consumption.
    CappedLinear { slope: f64 },
    /// `slope * min(a, cap)`, or `slope * a` without a cap.
    Linear {
        slope: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cap: Option<f64>,
    },
    /// `linear * a - quad * a^2 / 2`
    Quadratic { linear: f64, quad: f64 },
    /// `scale * ln(1 + a)`
    Log { scale: f64 },
}

impl UtilityTerm {
    pub fn eval<R: Real>(&self, z: &R, a: &R, sm: Smoothing) -> R {
        match self {
            UtilityTerm::CappedLinear { slope } => a.min_s(z, sm).scale(*slope),
            UtilityTerm::Linear { slope, cap } => match cap {
                Some(c) => a.min_s(&R::constant(*c), sm).scale(*slope),
                None => a.scale(*slope),
            },
            UtilityTerm::Quadratic { linear, quad } => {
                a.scale(*linear) - a.square().scale(0.5 * quad)
            }
            UtilityTerm::Log { scale } => a.ln_1p().scale(*scale),
        }
    }

    pub fn value(&self, z: f64, a: f64) -> f64 {
        self.eval(&z, &a, Smoothing::EXACT)
    }

    /// Largest action at which the utility can still be increasing, if bounded.
    pub fn satiation(&self, z: f64) -> Option<f64> {
        match self {
            UtilityTerm::CappedLinear { .. } => Some(z),
            UtilityTerm::Linear { cap, .. } => *cap,
            UtilityTerm::Quadratic { linear, quad } if *quad > 0.0 => Some(linear / quad),
            _ => None,
        }
    }
}

/// Utility functions of one consumer type over stages and exogenous states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilitySchedule {
    All(UtilityTerm),
    PerStage(Vec<UtilityTerm>),
    /// Indexed `[stage][state]`.
    PerStageState(Vec<Vec<UtilityTerm>>),
}

impl UtilitySchedule {
    pub fn term(&self, stage: usize, state: usize) -> &UtilityTerm {
        match self {
            UtilitySchedule::All(u) => u,
            UtilitySchedule::PerStage(v) => &v[stage],
            UtilitySchedule::PerStageState(v) => &v[stage][state],
        }
    }

    pub(crate) fn shape_error(&self, stages: usize, states: usize) -> Option<String> {
        match self {
            UtilitySchedule::All(_) => None,
            UtilitySchedule::PerStage(v) if v.len() != stages => {
                Some(format!("{} stage utilities for {} stages", v.len(), stages))
            }
            UtilitySchedule::PerStageState(v) => {
                if v.len() != stages {
                    Some(format!("{} stage utilities for {} stages", v.len(), stages))
                } else {
                    v.iter().position(|row| row.len() != states).map(|t| {
                        format!(
                            "stage {t} has {} state utilities, expected {states}",
                            v[t].len()
                        )
                    })
                }
            }
            _ => None,
        }
    }
}

/// Own-state transition `z' = r(z, a, s')`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transition {
    Hold,
    Fixed {
        value: f64,
    },
    /// `base + max(0, z - max(a, threshold))`: demand left unserved above
    /// `threshold` carries over to the next stage.
    ShiftableDemand {
        base: f64,
        threshold: f64,
    },
    /// `constant + state * z + action * a`
    Linear {
        constant: f64,
        state: f64,
        action: f64,
    },
    /// Chosen by the next exogenous state.
    PerState {
        by_state: Vec<Transition>,
    },
}

impl Transition {
    pub fn eval<R: Real>(&self, z: &R, a: &R, next_state: usize, sm: Smoothing) -> R {
        match self {
            Transition::Hold => z.clone(),
            Transition::Fixed { value } => R::constant(*value),
            Transition::ShiftableDemand { base, threshold } => {
                let used = a.max_s(&R::constant(*threshold), sm);
                (z.clone() - used)
                    .max_s(&R::constant(0.0), sm)
                    .offset(*base)
            }
            Transition::Linear {
                constant,
                state,
                action,
            } => (z.scale(*state) + a.scale(*action)).offset(*constant),
            Transition::PerState { by_state } => by_state[next_state].eval(z, a, next_state, sm),
        }
    }

    pub fn next(&self, z: f64, a: f64, next_state: usize) -> f64 {
        self.eval(&z, &a, next_state, Smoothing::EXACT)
    }

    pub(crate) fn shape_error(&self, states: usize) -> Option<String> {
        match self {
            Transition::PerState { by_state } if by_state.len() != states => Some(format!(
                "{} per-state transitions for {states} states",
                by_state.len()
            )),
            Transition::PerState { by_state } => {
                by_state.iter().find_map(|t| t.shape_error(states))
            }
            _ => None,
        }
    }

    /// True when the next state does not depend on the action.
    pub fn action_free(&self) -> bool {
        match self {
            Transition::Hold | Transition::Fixed { .. } => true,
            Transition::Linear { action, .. } => *action == 0.0,
            Transition::ShiftableDemand { .. } => false,
            Transition::PerState { by_state } => by_state.iter().all(|t| t.action_free()),
        }
    }
}
