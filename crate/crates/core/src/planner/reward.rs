use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub epsilon: f64,
    /// Success bonus λ_s.
    pub success_bonus: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig { epsilon: 0.1, success_bonus: 100.0 }
    }
}

/// `1 / (d + ε) + λ_s · 1(success)`.
pub fn compute_reward(d: f64, success: bool, cfg: &RewardConfig) -> f64 {
    let bonus = if success { cfg.success_bonus } else { 0.0 };
    1.0 / (d + cfg.epsilon) + bonus
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn examples() {
        let cfg = RewardConfig::default();
        assert!((compute_reward(0.4, false, &cfg) - 2.0).abs() < 1e-12);
        assert!((compute_reward(0.1, true, &cfg) - 105.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn bounded_and_monotone(d1 in 0.0..PI, d2 in 0.0..PI, s in any::<bool>()) {
            let cfg = RewardConfig::default();
            let r1 = compute_reward(d1, s, &cfg);
            let lo = 1.0 / (PI + cfg.epsilon) + if s { cfg.success_bonus } else { 0.0 };
            prop_assert!(r1 >= lo - 1e-12 && r1 <= 1.0 / cfg.epsilon + cfg.success_bonus + 1e-12);
            let r2 = compute_reward(d2, s, &cfg);
            if d1 < d2 {
                prop_assert!(r1 > r2);
            }
            prop_assert!((compute_reward(d1, true, &cfg) - compute_reward(d1, false, &cfg) - cfg.success_bonus).abs() < 1e-9);
        }
    }
}
