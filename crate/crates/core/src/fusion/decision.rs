use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Prior and error costs that fix the Bayes threshold on calibrated LLRs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionPolicy {
    pub prior: f64,
    pub cost_false_accept: f64,
    pub cost_miss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Accept,
    Reject,
}

impl DecisionPolicy {
    pub fn new(prior: f64, cost_false_accept: f64, cost_miss: f64) -> Result<Self> {
        if !(prior > 0.0 && prior < 1.0) {
            return Err(Error::invalid(format!("prior must be in (0, 1), got {prior}")));
        }
        if !(cost_false_accept > 0.0 && cost_miss > 0.0) || !cost_false_accept.is_finite() || !cost_miss.is_finite() {
            return Err(Error::invalid("decision costs must be positive and finite"));
        }
        Ok(Self {
            prior,
            cost_false_accept,
            cost_miss,
        })
    }

    /// Threshold in the log-likelihood-ratio domain.
    pub fn threshold(&self) -> f64 {
        ((1.0 - self.prior) / self.prior * self.cost_false_accept / self.cost_miss).ln()
    }
}

impl Default for DecisionPolicy {
    fn default() -> Self {
        Self {
            prior: 0.5,
            cost_false_accept: 1.0,
            cost_miss: 1.0,
        }
    }
}

/// Accepts only when the LLR strictly exceeds the threshold.
pub fn bayes_decide(llr: f64, policy: &DecisionPolicy) -> Decision {
    if llr > policy.threshold() {
        Decision::Accept
    } else {
        Decision::Reject
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_costs_even_prior() {
        let p = DecisionPolicy::default();
        assert_eq!(p.threshold(), 0.0);
        assert_eq!(bayes_decide(0.1, &p), Decision::Accept);
        assert_eq!(bayes_decide(0.0, &p), Decision::Reject);
    }

    #[test]
    fn expensive_false_accepts() {
        let p = DecisionPolicy::new(0.5, 10.0, 1.0).unwrap();
        assert!((p.threshold() - 10f64.ln()).abs() < 1e-15);
        assert_eq!(bayes_decide(2.0, &p), Decision::Reject);
        assert_eq!(bayes_decide(p.threshold(), &p), Decision::Reject);
        assert_eq!(bayes_decide(2.31, &p), Decision::Accept);
    }

    #[test]
    fn prior_shifts_threshold() {
        // P = 0.9: odds against are 1/9.
        let p = DecisionPolicy::new(0.9, 1.0, 1.0).unwrap();
        assert!((p.threshold() + 9f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn invalid_policies() {
        assert!(DecisionPolicy::new(0.0, 1.0, 1.0).is_err());
        assert!(DecisionPolicy::new(1.0, 1.0, 1.0).is_err());
        assert!(DecisionPolicy::new(0.5, 0.0, 1.0).is_err());
        assert!(DecisionPolicy::new(0.5, 1.0, -1.0).is_err());
    }
}
