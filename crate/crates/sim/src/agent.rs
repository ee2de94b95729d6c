//! Behaviour of a simulated partner.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use otterlink_core::ReactKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentPolicy {
    /// Chance of sharing after an own-state suggestion or an app open.
    pub share_propensity: f64,
    /// Weights over the full react catalog; must sum to 1.
    pub react_distribution: BTreeMap<ReactKind, f64>,
    /// Chance a partner share is answered straight from the notification.
    pub quick_react_probability: f64,
    /// Chance a partner share is dismissed instead of answered.
    pub dismiss_probability: f64,
    /// Spontaneous app opens per waking hour.
    pub app_open_per_hour: f64,
}

impl Default for AgentPolicy {
    fn default() -> Self {
        let w = 1.0 / ReactKind::ALL.len() as f64;
        AgentPolicy {
            share_propensity: 0.5,
            react_distribution: ReactKind::ALL.iter().map(|&r| (r, w)).collect(),
            quick_react_probability: 0.4,
            dismiss_probability: 0.15,
            app_open_per_hour: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("{field} = {value} is not a probability")]
    NotAProbability { field: &'static str, value: f64 },
    #[error("react distribution sums to {0}, expected 1")]
    DistributionSum(f64),
    #[error("app_open_per_hour must be in [0, 60], got {0}")]
    OpenRate(f64),
}

fn probability(field: &'static str, value: f64) -> Result<(), PolicyError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(PolicyError::NotAProbability { field, value })
    }
}

impl AgentPolicy {
    pub fn validate(&self) -> Result<(), PolicyError> {
        probability("share_propensity", self.share_propensity)?;
        probability("quick_react_probability", self.quick_react_probability)?;
        probability("dismiss_probability", self.dismiss_probability)?;
        for &w in self.react_distribution.values() {
            probability("react_distribution", w)?;
        }
        let sum: f64 = self.react_distribution.values().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(PolicyError::DistributionSum(sum));
        }
        if !(0.0..=60.0).contains(&self.app_open_per_hour) {
            return Err(PolicyError::OpenRate(self.app_open_per_hour));
        }
        Ok(())
    }

    /// Draws a react. With `quick_only` the distribution is renormalized over
    /// the quick set, falling back to uniform when it carries no weight there.
    pub fn sample_react<R: Rng + ?Sized>(&self, rng: &mut R, quick_only: bool) -> ReactKind {
        let pool: Vec<(ReactKind, f64)> = ReactKind::ALL
            .iter()
            .filter(|r| !quick_only || r.is_quick())
            .map(|&r| (r, self.react_distribution.get(&r).copied().unwrap_or(0.0)))
            .collect();
        let total: f64 = pool.iter().map(|(_, w)| w).sum();
        if total <= 0.0 {
            return pool[rng.gen_range(0..pool.len())].0;
        }
        let mut x = rng.gen::<f64>() * total;
        for &(r, w) in &pool {
            if x < w {
                return r;
            }
            x -= w;
        }
        pool.iter().rev().find(|(_, w)| *w > 0.0).expect("positive total").0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use otterlink_core::rng;

    #[test]
    fn default_is_valid() {
        AgentPolicy::default().validate().unwrap();
    }

    #[test]
    fn bad_policies() {
        let p = AgentPolicy {
            dismiss_probability: 1.5,
            ..AgentPolicy::default()
        };
        assert!(matches!(
            p.validate(),
            Err(PolicyError::NotAProbability {
                field: "dismiss_probability",
                ..
            })
        ));
        let mut p = AgentPolicy::default();
        p.react_distribution.insert(ReactKind::Love, 0.5);
        assert!(matches!(p.validate(), Err(PolicyError::DistributionSum(_))));
    }

    #[test]
    fn quick_draws_stay_in_the_quick_set() {
        let mut p = AgentPolicy {
            react_distribution: [(ReactKind::Question, 0.5), (ReactKind::Love, 0.5)]
                .into_iter()
                .collect(),
            ..AgentPolicy::default()
        };
        let mut rng = rng::stream(3, "test", &[]);
        for _ in 0..200 {
            assert_eq!(p.sample_react(&mut rng, true), ReactKind::Love);
        }
        p.react_distribution = [(ReactKind::Question, 1.0)].into_iter().collect();
        for _ in 0..200 {
            assert!(p.sample_react(&mut rng, true).is_quick());
            assert_eq!(p.sample_react(&mut rng, false), ReactKind::Question);
        }
    }

    #[test]
    fn toml_keys_are_react_names() {
        let p: AgentPolicy = toml::from_str("react_distribution = { love = 0.25, call_me = 0.75 }").unwrap();
        assert_eq!(p.react_distribution[&ReactKind::CallMe], 0.75);
        p.validate().unwrap();
        let back: AgentPolicy = toml::from_str(&toml::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
    }
}
