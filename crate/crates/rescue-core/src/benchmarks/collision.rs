//! Physics-based collision-risk score for robot navigation stacks.
//!
//! Six interpretable risk ratios over planner/controller/costmap settings,
//! each in [0, 1], combined as a weighted sum scaled to [0, 10]. The weights
//! sum to one, so the bound is tight by construction.

use crate::{Error, Result};

/// Navigation parameters feeding the score, with their legal ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionRiskInputs {
    /// Forward speed limit, m/s, in [0.1, 0.5].
    pub max_vel_x: f64,
    /// Deceleration limit, m/s² (negative), in [-4, -1].
    pub decel_lim_x: f64,
    /// Local costmap inflation radius, m, in [0.3, 0.6].
    pub local_inflation_radius: f64,
    /// Trajectory rollout horizon, s, in [1, 3].
    pub sim_time: f64,
    /// Local costmap resolution, m/cell, in [0.04, 0.1].
    pub local_resolution: f64,
    /// Critic weights, each in [10, 60].
    pub goal_align_scale: f64,
    pub goal_dist_scale: f64,
    /// Obstacle critic weight, in [0.01, 0.1].
    pub base_obstacle_scale: f64,
    /// Velocity sampling counts, each in [10, 40].
    pub vx_samples: f64,
    pub vtheta_samples: f64,
}

impl CollisionRiskInputs {
    const BOUNDS: [(&'static str, f64, f64); 10] = [
        ("max_vel_x", 0.1, 0.5),
        ("decel_lim_x", -4.0, -1.0),
        ("local_inflation_radius", 0.3, 0.6),
        ("sim_time", 1.0, 3.0),
        ("local_resolution", 0.04, 0.1),
        ("goal_align_scale", 10.0, 60.0),
        ("goal_dist_scale", 10.0, 60.0),
        ("base_obstacle_scale", 0.01, 0.1),
        ("vx_samples", 10.0, 40.0),
        ("vtheta_samples", 10.0, 40.0),
    ];

    fn values(&self) -> [f64; 10] {
        [
            self.max_vel_x,
            self.decel_lim_x,
            self.local_inflation_radius,
            self.sim_time,
            self.local_resolution,
            self.goal_align_scale,
            self.goal_dist_scale,
            self.base_obstacle_scale,
            self.vx_samples,
            self.vtheta_samples,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for ((name, lo, hi), v) in Self::BOUNDS.iter().zip(self.values()) {
            if !v.is_finite() || v < *lo || v > *hi {
                return Err(Error::domain(format!("{name} = {v} outside [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

fn clip01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// Weighted risk score in [0, 10]. Inputs are assumed validated; every
/// denominator carries the +0.01 guard from the definition.
pub fn collision_risk_score(inputs: &CollisionRiskInputs) -> f64 {
    let speed_decel_ratio = inputs.max_vel_x / (inputs.decel_lim_x.abs() + 0.01);
    let r_speed = clip01(speed_decel_ratio / 2.0);

    let safety_margin = inputs.local_inflation_radius / (inputs.max_vel_x + 0.01);
    let r_safety = 1.0 / (1.0 + safety_margin);

    let reaction_margin = inputs.local_inflation_radius / (inputs.max_vel_x * inputs.sim_time + 0.01);
    let r_reaction = 1.0 / (1.0 + reaction_margin);

    let perception_risk = inputs.local_resolution / (inputs.local_inflation_radius + 0.01);
    let r_perception = clip01(perception_risk / 0.5);

    let goal_vs_obstacle =
        (inputs.goal_align_scale + inputs.goal_dist_scale) / (inputs.base_obstacle_scale + 0.01);
    let r_goal = clip01(goal_vs_obstacle / 3.0);

    let sampling_density = inputs.vx_samples * inputs.vtheta_samples;
    let r_sampling = 1.0 / (1.0 + sampling_density / 200.0);

    10.0 * (0.2 * r_speed
        + 0.3 * r_safety
        + 0.2 * r_reaction
        + 0.1 * r_perception
        + 0.15 * r_goal
        + 0.05 * r_sampling)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn worked_example() -> CollisionRiskInputs {
        CollisionRiskInputs {
            max_vel_x: 0.5,
            decel_lim_x: -2.0,
            local_inflation_radius: 0.5,
            sim_time: 2.0,
            local_resolution: 0.05,
            goal_align_scale: 30.0,
            goal_dist_scale: 30.0,
            base_obstacle_scale: 0.05,
            vx_samples: 20.0,
            vtheta_samples: 20.0,
        }
    }

    #[test]
    fn reference_score() {
        let inputs = worked_example();
        inputs.validate().unwrap();
        // Frozen from term-by-term evaluation: r_speed 0.1244, r_safety
        // 0.5050, r_reaction 0.6689, r_perception 0.1961, r_goal 1,
        // r_sampling 1/3.
        assert!((collision_risk_score(&inputs) - 4.964101146464063).abs() < 1e-9);
    }

    #[test]
    fn random_inputs_stay_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let inputs = CollisionRiskInputs {
                max_vel_x: rng.gen_range(0.1..=0.5),
                decel_lim_x: rng.gen_range(-4.0..=-1.0),
                local_inflation_radius: rng.gen_range(0.3..=0.6),
                sim_time: rng.gen_range(1.0..=3.0),
                local_resolution: rng.gen_range(0.04..=0.1),
                goal_align_scale: rng.gen_range(10.0..=60.0),
                goal_dist_scale: rng.gen_range(10.0..=60.0),
                base_obstacle_scale: rng.gen_range(0.01..=0.1),
                vx_samples: rng.gen_range(10.0..=40.0),
                vtheta_samples: rng.gen_range(10.0..=40.0),
            };
            inputs.validate().unwrap();
            let score = collision_risk_score(&inputs);
            assert!((0.0..=10.0).contains(&score), "score {score} out of range");
        }
    }

    #[test]
    fn denser_sampling_lowers_sampling_risk() {
        let mut sparse = worked_example();
        let mut dense = worked_example();
        sparse.vx_samples = 10.0;
        sparse.vtheta_samples = 10.0;
        dense.vx_samples = 40.0;
        dense.vtheta_samples = 40.0;
        assert!(collision_risk_score(&dense) < collision_risk_score(&sparse));
    }

    #[test]
    fn out_of_bounds_rejected() {
        let mut inputs = worked_example();
        inputs.max_vel_x = 0.6;
        assert!(inputs.validate().is_err());
        let mut inputs = worked_example();
        inputs.decel_lim_x = 0.5;
        assert!(inputs.validate().is_err());
    }
}
