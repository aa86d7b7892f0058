//! Open-set rejection: GMM densities map to fuzzy memberships through a
//! scaled arctangent, the decision set's average fuzzy entropy measures
//! ambiguity, and decisions above the threshold are rejected.

use std::f64::consts::FRAC_PI_2;

use crate::corpus::EmotionLabel;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RejectionPolicy {
    /// Average-entropy threshold; strictly above rejects.
    pub threshold: f64,
    /// Entropy constant.
    pub k: f64,
    /// Density scale divisor inside the arctangent map.
    pub divisor: f64,
}

impl Default for RejectionPolicy {
    fn default() -> Self {
        RejectionPolicy {
            threshold: 0.11,
            k: FRAC_PI_2,
            divisor: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Decision {
    Accept(EmotionLabel),
    Reject,
}

/// Maps a non-negative density into [0, 1): arctan(p / divisor) / (pi/2).
pub fn membership(p: f64, divisor: f64) -> Result<f64> {
    if p < 0.0 {
        return Err(Error::Argument(format!("negative density {p}")));
    }
    Ok((p / divisor).atan() / FRAC_PI_2)
}

/// Fuzzy entropy of one membership: -K ln(mu). Zero membership reports the
/// infinite sentinel.
pub fn fuzzy_entropy(mu: f64, k: f64) -> f64 {
    if mu <= 0.0 {
        f64::INFINITY
    } else {
        -k * mu.ln()
    }
}

/// Average decision-set entropy: (1/C) * sum of mu * e(mu); the mu = 0 term
/// takes its limit value 0.
pub fn decision_entropy(densities: &[f64], policy: &RejectionPolicy) -> Result<f64> {
    if densities.len() < 2 {
        return Err(Error::Argument("decision set needs at least two models".into()));
    }
    let mut total = 0.0;
    for &p in densities {
        let mu = membership(p, policy.divisor)?;
        if mu > 0.0 {
            total += mu * fuzzy_entropy(mu, policy.k);
        }
    }
    Ok(total / densities.len() as f64)
}

/// Accepts the maximum-density label, or rejects when the average fuzzy
/// entropy strictly exceeds the threshold (the boundary accepts).
pub fn decide(
    densities: &[f64],
    labels: &[EmotionLabel],
    policy: &RejectionPolicy,
) -> Result<Decision> {
    if densities.len() != labels.len() {
        return Err(Error::Argument("density/label count mismatch".into()));
    }
    let s = decision_entropy(densities, policy)?;
    if s > policy.threshold {
        return Ok(Decision::Reject);
    }
    let mut best = 0;
    for (i, &p) in densities.iter().enumerate().skip(1) {
        if p > densities[best] {
            best = i;
        }
    }
    Ok(Decision::Accept(labels[best].clone()))
}

/// Upper bound of the average entropy: the summand -K mu ln(mu) peaks at
/// mu = 1/e, so S can never exceed K/e.
pub fn entropy_upper_bound(policy: &RejectionPolicy) -> f64 {
    policy.k / std::f64::consts::E
}

/// Converts a log-density into the membership domain safely.
pub fn membership_from_log(lp: f64, divisor: f64) -> f64 {
    (lp.exp() / divisor).atan() / FRAC_PI_2
}
