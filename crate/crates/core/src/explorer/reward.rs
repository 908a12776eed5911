use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub success: f64,
    pub guidance: f64,
    pub distance_threshold: f64,
    pub distance_jump: f64,
    pub distance_slope: f64,
    pub curiosity: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            success: 500.0,
            guidance: 300.0,
            distance_threshold: 0.1,
            distance_jump: 300.0,
            distance_slope: 150.0,
            curiosity: 500.0,
        }
    }
}

/// Individual reward terms; [`RewardTerms::total`] is their sum.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardTerms {
    pub success: f64,
    pub guidance: f64,
    pub distance: f64,
    pub curiosity: f64,
}

impl RewardTerms {
    pub fn total(&self) -> f64 {
        self.success + self.guidance + self.distance + self.curiosity
    }
}

pub fn reward_terms(
    cfg: &RewardConfig,
    prev_delta: f64,
    new_delta: f64,
    theta: f64,
    d_gc: f64,
    done_success: bool,
    curiosity: Option<f64>,
) -> RewardTerms {
    let jump = if d_gc > cfg.distance_threshold { cfg.distance_jump } else { 0.0 };
    RewardTerms {
        success: if done_success { cfg.success } else { 0.0 },
        guidance: cfg.guidance * ((theta - prev_delta).abs() - (theta - new_delta).abs()),
        distance: -(jump + cfg.distance_slope * d_gc),
        curiosity: curiosity.map_or(0.0, |r| -cfg.curiosity * r),
    }
}

pub fn compute_reward(
    cfg: &RewardConfig,
    prev_delta: f64,
    new_delta: f64,
    theta: f64,
    d_gc: f64,
    done_success: bool,
    curiosity: Option<f64>,
) -> f64 {
    reward_terms(cfg, prev_delta, new_delta, theta, d_gc, done_success, curiosity).total()
}
