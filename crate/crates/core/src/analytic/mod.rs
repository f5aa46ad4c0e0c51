//! Closed-form and numerically solved quantities for erasure cascades.
//!
//! All logarithms are natural. Rates `lambda` always denote the packet
//! arrival rate; the Chernoff dual variable appears only as `x` inside the
//! exponent solvers.

mod bounds;
mod divergence;
mod exponent;
mod simplex;
mod tail;

use thiserror::Error;

use crate::model::{LinkMode, LinkProfile, ModelError};

pub use bounds::{bounds_with_divergence, failure_prob_bounds, BoundsReport};
pub use divergence::{kl_binary, kl_categorical};
pub use exponent::{
    ee_fixed_chernoff, ee_fixed_types, ee_homogeneous, ee_prob_chernoff, ee_prob_types,
    error_exponent, ExponentForm, ExponentReport,
};
pub use tail::{
    exact_failure_prob, exact_failure_prob_instantaneous, exact_failure_prob_mixture,
    ln_exact_failure_prob,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticError {
    #[error("AlphaAboveIV: alpha = {alpha} is not below the information velocity {iv}")]
    AlphaAboveIV { alpha: f64, iv: f64 },
    #[error("DegenerateR: bounds need r >= 2, got r = {r}")]
    DegenerateR { r: u64 },
    #[error("UnstableLambda: effective erasure probability {value} of entry {index} is >= 1")]
    UnstableLambda { index: usize, value: f64 },
    #[error("InfiniteVelocity: instantaneous links with zero erasure have no hop delay")]
    InfiniteVelocity,
    #[error("AllLinksPerfect: no link can erase, the exponent is undefined")]
    AllLinksPerfect,
    #[error("DegenerateChain: gamma + beta must be positive")]
    DegenerateChain,
    #[error("InvalidProbability: {value} is outside the admissible range")]
    InvalidProbability { value: f64 },
    #[error("InvalidAlpha: alpha = {alpha} must be positive and finite")]
    InvalidAlpha { alpha: f64 },
    #[error("LengthMismatch: probability and weight vectors differ in length")]
    LengthMismatch,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// The profile seen by a single packet under arrival rate `lambda`: every
/// erasure probability becomes `p / (1 - lambda)`.
pub fn effective_profile(profile: &LinkProfile, lambda: f64) -> Result<LinkProfile, AnalyticError> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(AnalyticError::InvalidProbability { value: lambda });
    }
    if lambda == 0.0 {
        return Ok(profile.clone());
    }
    let scale = 1.0 - lambda;
    if let Some((index, value)) = profile
        .probabilities()
        .iter()
        .map(|p| p / scale)
        .enumerate()
        .find(|(_, v)| *v >= 1.0)
    {
        return Err(AnalyticError::UnstableLambda { index, value });
    }
    Ok(profile.map_probabilities(|p| p / scale))
}

pub fn information_velocity(
    profile: &LinkProfile,
    lambda: f64,
    mode: LinkMode,
) -> Result<f64, AnalyticError> {
    let effective = effective_profile(profile, lambda)?;
    let (probs, weights) = effective.weighted_alphabet();
    if probs.len() != weights.len() {
        return Err(AnalyticError::LengthMismatch);
    }
    let mean_delay: f64 = match mode {
        LinkMode::Delayed => probs.iter().zip(&weights).map(|(p, w)| w / (1.0 - p)).sum(),
        LinkMode::Instantaneous => probs
            .iter()
            .zip(&weights)
            .map(|(p, w)| w * p / (1.0 - p))
            .sum(),
    };
    if mean_delay == 0.0 {
        return Err(AnalyticError::InfiniteVelocity);
    }
    Ok(1.0 / mean_delay)
}

/// Long-run arrival rate of the Gilbert-Elliott source.
pub fn ge_stationary_rate(gamma: f64, beta: f64, epsilon: f64) -> Result<f64, AnalyticError> {
    let total = gamma + beta;
    if !(total > 0.0) {
        return Err(AnalyticError::DegenerateChain);
    }
    Ok(beta / total * epsilon + gamma / total)
}

/// Failure probability when the receiver cannot signal back and must guess
/// among `m` messages on failure.
pub fn no_feedback_error_prob(pe: f64, m: u64) -> f64 {
    assert!(m >= 2, "message count must be at least 2");
    (1.0 - 1.0 / m as f64) * pe
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed(probs: &[f64], types: &[f64]) -> LinkProfile {
        LinkProfile::FixedType {
            probs: probs.to_vec(),
            types: types.to_vec(),
            r: 10,
            counts: vec![],
        }
    }

    #[test]
    fn quoted_velocities() {
        let h = LinkProfile::Homogeneous { p: 0.01, r: 100 };
        assert!((information_velocity(&h, 0.5, LinkMode::Delayed).unwrap() - 0.98).abs() < 1e-12);
        let two = fixed(&[0.01, 0.1], &[0.5, 0.5]);
        assert!((information_velocity(&two, 0.5, LinkMode::Delayed).unwrap() - 0.881).abs() < 5e-3);
        let three = fixed(&[0.2, 0.5, 0.7], &[0.5, 0.2, 0.3]);
        assert!(
            (information_velocity(&three, 0.0, LinkMode::Delayed).unwrap() - 0.49).abs() < 5e-3
        );
        assert!(
            (information_velocity(&three, 0.0, LinkMode::Instantaneous).unwrap() - 0.98).abs()
                < 5e-3
        );
    }

    #[test]
    fn singleton_type_matches_homogeneous_bitwise() {
        for &p in &[0.0, 0.013, 0.3, 0.77] {
            for &lambda in &[0.0, 0.1, 0.2] {
                let h = LinkProfile::Homogeneous { p, r: 7 };
                let f = fixed(&[p], &[1.0]);
                for mode in [LinkMode::Delayed, LinkMode::Instantaneous] {
                    let a = information_velocity(&h, lambda, mode);
                    let b = information_velocity(&f, lambda, mode);
                    match (a, b) {
                        (Ok(a), Ok(b)) => assert_eq!(a.to_bits(), b.to_bits()),
                        (a, b) => assert_eq!(a, b),
                    }
                }
            }
        }
    }

    #[test]
    fn effective_profile_cases() {
        let h = LinkProfile::Homogeneous { p: 0.01, r: 3 };
        assert_eq!(
            effective_profile(&h, 0.5).unwrap(),
            LinkProfile::Homogeneous { p: 0.02, r: 3 }
        );
        assert_eq!(effective_profile(&h, 0.0).unwrap(), h);
        let bad = LinkProfile::Homogeneous { p: 0.6, r: 3 };
        assert!(matches!(
            effective_profile(&bad, 0.5),
            Err(AnalyticError::UnstableLambda { index: 0, .. })
        ));
    }

    #[test]
    fn instantaneous_perfect_links() {
        let h = LinkProfile::Homogeneous { p: 0.0, r: 3 };
        assert_eq!(
            information_velocity(&h, 0.0, LinkMode::Instantaneous),
            Err(AnalyticError::InfiniteVelocity)
        );
        assert_eq!(information_velocity(&h, 0.0, LinkMode::Delayed), Ok(1.0));
    }

    #[test]
    fn gilbert_elliott_rates() {
        assert!((ge_stationary_rate(0.01, 0.1, 0.45).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(ge_stationary_rate(0.3, 0.2, 1.0).unwrap(), 1.0);
        assert_eq!(ge_stationary_rate(0.5, 0.5, 0.0).unwrap(), 0.5);
        assert_eq!(
            ge_stationary_rate(0.0, 0.0, 0.5),
            Err(AnalyticError::DegenerateChain)
        );
    }

    #[test]
    fn no_feedback_factor() {
        assert_eq!(no_feedback_error_prob(0.5, 2), 0.25);
        let pe = exact_failure_prob(3, 10, 0.2);
        assert_eq!(no_feedback_error_prob(pe, 4), 0.75 * pe);
        let tiny = 0.3f64.powi(12);
        assert!((no_feedback_error_prob(tiny, 1 << 40) - tiny).abs() < 1e-12 * tiny);
    }
}
