use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::geometry::InteractionType;

/// Relative tolerance for task completion.
pub const SUCCESS_TOLERANCE: f64 = 0.15;

/// Target signed change of the joint coordinate plus the interaction type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub theta: f64,
    pub interaction: InteractionType,
}

impl TaskSpec {
    pub fn new(theta: f64, interaction: InteractionType) -> Result<Self> {
        if !theta.is_finite() || theta == 0.0 {
            return Err(validation("task theta must be finite and non-zero"));
        }
        Ok(Self { theta, interaction })
    }

    pub fn with_theta(&self, theta: f64) -> Result<Self> {
        Self::new(theta, self.interaction)
    }
}

/// `|theta - achieved| <= 0.15 |theta|`.
pub fn check_success(task: &TaskSpec, achieved: f64) -> Result<bool> {
    check_success_with(task, achieved, SUCCESS_TOLERANCE)
}

pub fn check_success_with(task: &TaskSpec, achieved: f64, tolerance: f64) -> Result<bool> {
    if task.theta == 0.0 || !task.theta.is_finite() {
        return Err(validation("task theta must be non-zero"));
    }
    // absorbs rounding at the band edges
    let slack = 1e-12 * task.theta.abs().max(1.0);
    Ok((task.theta - achieved).abs() <= tolerance * task.theta.abs() + slack)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn push(theta: f64) -> TaskSpec {
        TaskSpec {
            theta,
            interaction: InteractionType::Push,
        }
    }

    #[test]
    fn ten_degree_band() {
        let t = push(10f64.to_radians());
        for deg in [8.5, 9.0, 10.0, 11.0, 11.5] {
            assert!(check_success(&t, f64::to_radians(deg)).unwrap(), "{deg}");
        }
        for deg in [8.4, 11.6, 0.0, -10.0] {
            assert!(!check_success(&t, f64::to_radians(deg)).unwrap(), "{deg}");
        }
    }

    #[test]
    fn thirty_degree_cases() {
        let t = push(30f64.to_radians());
        assert!(check_success(&t, 26f64.to_radians()).unwrap());
        assert!(!check_success(&t, 25f64.to_radians()).unwrap());
    }

    #[test]
    fn zero_theta_is_invalid() {
        assert!(check_success(&push(0.0), 0.0).is_err());
        assert!(TaskSpec::new(0.0, InteractionType::Pull).is_err());
    }
}
