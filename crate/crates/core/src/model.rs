//! Scenario types shared by the analytic solvers and the simulator.
//!
//! A [`Scenario`] bundles a [`LinkProfile`] (the erasure structure of the
//! cascade), an [`ArrivalSpec`] (how packets enter node 1), the [`LinkMode`]
//! and the simulation horizon. Scenario files are JSON documents whose field
//! names mirror these types; see `scenarios/README.md` for the schema.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on the sum of a type vector before it is rejected.
pub const SIMPLEX_TOLERANCE: f64 = 1e-12;

/// Sums within this distance of 1 are treated as already normalized.
const NORMALIZED_SLACK: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("NonSimplexType: {field} must be a probability vector (sum = {sum}, min = {min})")]
    NonSimplexType {
        field: &'static str,
        sum: f64,
        min: f64,
    },
    #[error("ErasureOutOfRange: erasure probability {value} at index {index} is outside [0, 1)")]
    ErasureOutOfRange { index: usize, value: f64 },
    #[error("EmptyCascade: the cascade must contain at least one link")]
    EmptyCascade,
    #[error("WarmupExceedsHorizon: warmup_packets ({warmup}) must be smaller than num_packets ({packets})")]
    WarmupExceedsHorizon { warmup: u64, packets: u64 },
    #[error("LengthMismatch: P has {probs} entries but the type vector has {weights}")]
    LengthMismatch { probs: usize, weights: usize },
    #[error("DuplicateErasure: possible erasure probabilities must be distinct ({value} repeats)")]
    DuplicateErasure { value: f64 },
    #[error("InvalidArrival: {0}")]
    InvalidArrival(String),
}

/// Erasure-probability structure of the cascade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LinkProfile {
    /// `r` links sharing the erasure probability `p`.
    Homogeneous { p: f64, r: usize },
    /// One erasure probability per link, in cascade order.
    Explicit {
        #[serde(alias = "p")]
        p_seq: Vec<f64>,
    },
    /// Exactly `counts[i]` links carry `probs[i]`, with counts apportioned
    /// from the channels-type `types` over `r` links.
    FixedType {
        #[serde(rename = "P")]
        probs: Vec<f64>,
        #[serde(rename = "Q")]
        types: Vec<f64>,
        r: usize,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        counts: Vec<usize>,
    },
    /// Each link draws its erasure probability i.i.d. from `probs`
    /// according to `weights`.
    Probabilistic {
        #[serde(rename = "P")]
        probs: Vec<f64>,
        #[serde(rename = "Q", alias = "Qtilde")]
        weights: Vec<f64>,
        r: usize,
    },
}

impl LinkProfile {
    pub fn link_count(&self) -> usize {
        match self {
            LinkProfile::Homogeneous { r, .. }
            | LinkProfile::FixedType { r, .. }
            | LinkProfile::Probabilistic { r, .. } => *r,
            LinkProfile::Explicit { p_seq } => p_seq.len(),
        }
    }

    /// Largest erasure probability any link can carry.
    pub fn max_erasure(&self) -> f64 {
        let fold = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
        match self {
            LinkProfile::Homogeneous { p, .. } => *p,
            LinkProfile::Explicit { p_seq } => fold(p_seq),
            LinkProfile::FixedType { probs, types, .. } => support_max(probs, types),
            LinkProfile::Probabilistic { probs, weights, .. } => support_max(probs, weights),
        }
    }

    /// The erasure alphabet and its weights: the singleton for homogeneous
    /// links, the empirical type of an explicit sequence, `Q` or `Q~`.
    pub fn weighted_alphabet(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            LinkProfile::Homogeneous { p, .. } => (vec![*p], vec![1.0]),
            LinkProfile::Explicit { p_seq } => {
                let mut probs: Vec<f64> = Vec::new();
                let mut counts: Vec<usize> = Vec::new();
                for &p in p_seq {
                    match probs.iter().position(|&q| q == p) {
                        Some(i) => counts[i] += 1,
                        None => {
                            probs.push(p);
                            counts.push(1);
                        }
                    }
                }
                let r = p_seq.len() as f64;
                let weights = counts.into_iter().map(|c| c as f64 / r).collect();
                (probs, weights)
            }
            LinkProfile::FixedType { probs, types, .. } => (probs.clone(), types.clone()),
            LinkProfile::Probabilistic { probs, weights, .. } => (probs.clone(), weights.clone()),
        }
    }

    /// The deterministic link sequence, or `None` for probabilistic profiles.
    ///
    /// Fixed-type links are laid out in blocks following the order of `P`.
    pub fn fixed_sequence(&self) -> Option<Vec<f64>> {
        match self {
            LinkProfile::Homogeneous { p, r } => Some(vec![*p; *r]),
            LinkProfile::Explicit { p_seq } => Some(p_seq.clone()),
            LinkProfile::FixedType {
                probs,
                types,
                r,
                counts,
            } => {
                let counts = if counts.len() == probs.len() {
                    counts.clone()
                } else {
                    apportion(types, *r)
                };
                Some(
                    probs
                        .iter()
                        .zip(&counts)
                        .flat_map(|(&p, &c)| std::iter::repeat_n(p, c))
                        .collect(),
                )
            }
            LinkProfile::Probabilistic { .. } => None,
        }
    }

    /// Same-shaped profile with every erasure probability mapped through `f`.
    pub fn map_probabilities(&self, mut f: impl FnMut(f64) -> f64) -> LinkProfile {
        match self {
            LinkProfile::Homogeneous { p, r } => LinkProfile::Homogeneous { p: f(*p), r: *r },
            LinkProfile::Explicit { p_seq } => LinkProfile::Explicit {
                p_seq: p_seq.iter().map(|&p| f(p)).collect(),
            },
            LinkProfile::FixedType {
                probs,
                types,
                r,
                counts,
            } => LinkProfile::FixedType {
                probs: probs.iter().map(|&p| f(p)).collect(),
                types: types.clone(),
                r: *r,
                counts: counts.clone(),
            },
            LinkProfile::Probabilistic { probs, weights, r } => LinkProfile::Probabilistic {
                probs: probs.iter().map(|&p| f(p)).collect(),
                weights: weights.clone(),
                r: *r,
            },
        }
    }

    /// All erasure probabilities stored in the profile, in storage order.
    pub fn probabilities(&self) -> Vec<f64> {
        match self {
            LinkProfile::Homogeneous { p, .. } => vec![*p],
            LinkProfile::Explicit { p_seq } => p_seq.clone(),
            LinkProfile::FixedType { probs, .. } | LinkProfile::Probabilistic { probs, .. } => {
                probs.clone()
            }
        }
    }
}

fn support_max(probs: &[f64], weights: &[f64]) -> f64 {
    probs
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&p, _)| p)
        .fold(0.0, f64::max)
}

/// Packet arrival process at node 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArrivalSpec {
    /// One packet, available at slot 1.
    SinglePacket,
    /// Bernoulli(lambda) arrivals per slot.
    Geometric { lambda: f64 },
    /// Arrivals at slots floor(i * a), i = 1, 2, ...
    Deterministic { a: f64 },
    /// Two-state Markov-modulated arrivals: the good state emits with
    /// probability `epsilon`, the bad state always emits.
    GilbertElliott { gamma: f64, beta: f64, epsilon: f64 },
}

impl ArrivalSpec {
    /// Long-run arrival rate per slot (0 for a single packet).
    pub fn rate(&self) -> f64 {
        match *self {
            ArrivalSpec::SinglePacket => 0.0,
            ArrivalSpec::Geometric { lambda } => lambda,
            ArrivalSpec::Deterministic { a } => 1.0 / a,
            ArrivalSpec::GilbertElliott {
                gamma,
                beta,
                epsilon,
            } => crate::analytic::ge_stationary_rate(gamma, beta, epsilon).unwrap_or(f64::NAN),
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(ModelError::InvalidArrival(format!(
                    "{name} = {v} is outside [0, 1]"
                )))
            }
        };
        match *self {
            ArrivalSpec::SinglePacket => Ok(()),
            ArrivalSpec::Geometric { lambda } => {
                if lambda > 0.0 && lambda < 1.0 {
                    Ok(())
                } else {
                    Err(ModelError::InvalidArrival(format!(
                        "lambda = {lambda} is outside (0, 1)"
                    )))
                }
            }
            ArrivalSpec::Deterministic { a } => {
                if a >= 1.0 && a.is_finite() {
                    Ok(())
                } else {
                    Err(ModelError::InvalidArrival(format!(
                        "period a = {a} must be >= 1"
                    )))
                }
            }
            ArrivalSpec::GilbertElliott {
                gamma,
                beta,
                epsilon,
            } => {
                unit("gamma", gamma)?;
                unit("beta", beta)?;
                unit("epsilon", epsilon)?;
                if gamma + beta <= 0.0 {
                    return Err(ModelError::InvalidArrival(
                        "gamma + beta must be positive".to_string(),
                    ));
                }
                if self.rate() <= 0.0 {
                    return Err(ModelError::InvalidArrival(
                        "the chain never emits an arrival".to_string(),
                    ));
                }
                Ok(())
            }
        }
    }
}

/// Whether a successful hop costs a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkMode {
    /// A success in slot t makes the packet available to the next node at t + 1.
    #[default]
    Delayed,
    /// A success in slot t forwards the packet within the same slot.
    Instantaneous,
}

/// A complete analysis/simulation configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub profile: LinkProfile,
    pub arrivals: ArrivalSpec,
    #[serde(default)]
    pub mode: LinkMode,
    pub num_packets: u64,
    /// Packets discarded before recording. Defaults to `num_packets / 10`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup_packets: Option<u64>,
    #[serde(default)]
    pub seed: u64,
}

impl Scenario {
    pub fn warmup(&self) -> u64 {
        self.warmup_packets.unwrap_or(self.num_packets / 10)
    }

    /// Arrival rate against the worst link: `rate < 1 - max p`.
    pub fn is_stable(&self) -> bool {
        self.arrivals.rate() < 1.0 - self.profile.max_erasure()
    }
}

/// Validate and normalize a scenario.
///
/// Type vectors within [`SIMPLEX_TOLERANCE`] of the simplex are rescaled to
/// sum to one, fixed-type link counts are materialized, and the warm-up
/// default is made explicit. Unstable scenarios are accepted with a warning.
pub fn validate_scenario(raw: &Scenario) -> Result<Scenario, ModelError> {
    let profile = validate_profile(&raw.profile)?;
    raw.arrivals.validate()?;
    let warmup = raw.warmup();
    if warmup >= raw.num_packets {
        return Err(ModelError::WarmupExceedsHorizon {
            warmup,
            packets: raw.num_packets,
        });
    }
    let scenario = Scenario {
        profile,
        arrivals: raw.arrivals,
        mode: raw.mode,
        num_packets: raw.num_packets,
        warmup_packets: Some(warmup),
        seed: raw.seed,
    };
    if !scenario.is_stable() {
        log::warn!(
            "arrival rate {} is not below 1 - max erasure probability {}; queues will grow without bound",
            scenario.arrivals.rate(),
            1.0 - scenario.profile.max_erasure()
        );
    }
    Ok(scenario)
}

/// Profile-only part of [`validate_scenario`].
pub fn validate_profile(profile: &LinkProfile) -> Result<LinkProfile, ModelError> {
    match profile {
        LinkProfile::Homogeneous { p, r } => {
            check_erasures(&[*p])?;
            if *r == 0 {
                return Err(ModelError::EmptyCascade);
            }
            Ok(profile.clone())
        }
        LinkProfile::Explicit { p_seq } => {
            if p_seq.is_empty() {
                return Err(ModelError::EmptyCascade);
            }
            check_erasures(p_seq)?;
            Ok(profile.clone())
        }
        LinkProfile::FixedType {
            probs, types, r, ..
        } => {
            let types = check_alphabet(probs, types, *r, "Q")?;
            let counts = apportion(&types, *r);
            Ok(LinkProfile::FixedType {
                probs: probs.clone(),
                types,
                r: *r,
                counts,
            })
        }
        LinkProfile::Probabilistic { probs, weights, r } => {
            let weights = check_alphabet(probs, weights, *r, "Qtilde")?;
            Ok(LinkProfile::Probabilistic {
                probs: probs.clone(),
                weights,
                r: *r,
            })
        }
    }
}

fn check_erasures(probs: &[f64]) -> Result<(), ModelError> {
    for (index, &value) in probs.iter().enumerate() {
        if !(0.0..1.0).contains(&value) {
            return Err(ModelError::ErasureOutOfRange { index, value });
        }
    }
    Ok(())
}

fn check_alphabet(
    probs: &[f64],
    weights: &[f64],
    r: usize,
    field: &'static str,
) -> Result<Vec<f64>, ModelError> {
    if r == 0 || probs.is_empty() {
        return Err(ModelError::EmptyCascade);
    }
    if probs.len() != weights.len() {
        return Err(ModelError::LengthMismatch {
            probs: probs.len(),
            weights: weights.len(),
        });
    }
    check_erasures(probs)?;
    for (i, &p) in probs.iter().enumerate() {
        if probs[..i].contains(&p) {
            return Err(ModelError::DuplicateErasure { value: p });
        }
    }
    normalize_simplex(weights, field)
}

/// Check that `weights` lies on the simplex and rescale it to sum to one.
pub fn normalize_simplex(weights: &[f64], field: &'static str) -> Result<Vec<f64>, ModelError> {
    let sum: f64 = weights.iter().sum();
    let min = weights.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min >= 0.0) || !((sum - 1.0).abs() <= SIMPLEX_TOLERANCE) {
        return Err(ModelError::NonSimplexType { field, sum, min });
    }
    if (sum - 1.0).abs() <= NORMALIZED_SLACK {
        return Ok(weights.to_vec());
    }
    Ok(weights.iter().map(|w| w / sum).collect())
}

/// Largest-remainder apportionment of `r` links over the type vector.
///
/// Ties in the fractional part go to the lower index.
pub fn apportion(types: &[f64], r: usize) -> Vec<usize> {
    let quotas: Vec<f64> = types.iter().map(|&q| q * r as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..types.len()).collect();
    order.sort_by(|&i, &j| {
        let (fi, fj) = (quotas[i] - quotas[i].floor(), quotas[j] - quotas[j].floor());
        fj.total_cmp(&fi).then(i.cmp(&j))
    });
    for &i in order.iter().take(r.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(profile: LinkProfile, arrivals: ArrivalSpec) -> Scenario {
        Scenario {
            profile,
            arrivals,
            mode: LinkMode::Delayed,
            num_packets: 1000,
            warmup_packets: None,
            seed: 7,
        }
    }

    #[test]
    fn stable_homogeneous() {
        let s = scenario(
            LinkProfile::Homogeneous { p: 0.01, r: 100 },
            ArrivalSpec::Geometric { lambda: 0.5 },
        );
        let v = validate_scenario(&s).unwrap();
        assert!(v.is_stable());
        assert_eq!(v.warmup_packets, Some(100));
    }

    #[test]
    fn unstable_is_flagged_not_rejected() {
        let s = scenario(
            LinkProfile::Homogeneous { p: 0.6, r: 10 },
            ArrivalSpec::Geometric { lambda: 0.5 },
        );
        let v = validate_scenario(&s).unwrap();
        assert!(!v.is_stable());
    }

    #[test]
    fn non_simplex_type_rejected() {
        let s = scenario(
            LinkProfile::FixedType {
                probs: vec![0.01, 0.1],
                types: vec![0.7, 0.4],
                r: 10,
                counts: vec![],
            },
            ArrivalSpec::SinglePacket,
        );
        assert!(matches!(
            validate_scenario(&s),
            Err(ModelError::NonSimplexType { .. })
        ));
        let neg = scenario(
            LinkProfile::Probabilistic {
                probs: vec![0.01, 0.1],
                weights: vec![1.5, -0.5],
                r: 10,
            },
            ArrivalSpec::SinglePacket,
        );
        assert!(matches!(
            validate_scenario(&neg),
            Err(ModelError::NonSimplexType { .. })
        ));
    }

    #[test]
    fn other_errors() {
        let bad_p = scenario(
            LinkProfile::Homogeneous { p: 1.0, r: 3 },
            ArrivalSpec::SinglePacket,
        );
        assert!(matches!(
            validate_scenario(&bad_p),
            Err(ModelError::ErasureOutOfRange { .. })
        ));
        let empty = scenario(
            LinkProfile::Homogeneous { p: 0.1, r: 0 },
            ArrivalSpec::SinglePacket,
        );
        assert_eq!(validate_scenario(&empty), Err(ModelError::EmptyCascade));
        let mut warm = scenario(
            LinkProfile::Homogeneous { p: 0.1, r: 3 },
            ArrivalSpec::SinglePacket,
        );
        warm.warmup_packets = Some(1000);
        assert!(matches!(
            validate_scenario(&warm),
            Err(ModelError::WarmupExceedsHorizon { .. })
        ));
        let dup = scenario(
            LinkProfile::FixedType {
                probs: vec![0.1, 0.1],
                types: vec![0.5, 0.5],
                r: 4,
                counts: vec![],
            },
            ArrivalSpec::SinglePacket,
        );
        assert!(matches!(
            validate_scenario(&dup),
            Err(ModelError::DuplicateErasure { .. })
        ));
        let ge = scenario(
            LinkProfile::Homogeneous { p: 0.1, r: 3 },
            ArrivalSpec::GilbertElliott {
                gamma: 0.0,
                beta: 0.0,
                epsilon: 0.5,
            },
        );
        assert!(matches!(
            validate_scenario(&ge),
            Err(ModelError::InvalidArrival(_))
        ));
    }

    #[test]
    fn near_simplex_is_renormalized() {
        let s = scenario(
            LinkProfile::FixedType {
                probs: vec![0.2, 0.5],
                types: vec![0.5 + 4e-13, 0.5],
                r: 10,
                counts: vec![],
            },
            ArrivalSpec::SinglePacket,
        );
        let v = validate_scenario(&s).unwrap();
        let LinkProfile::FixedType { types, counts, .. } = &v.profile else {
            panic!()
        };
        assert!((types.iter().sum::<f64>() - 1.0).abs() <= 1e-15);
        assert_eq!(counts, &vec![5, 5]);
    }

    #[test]
    fn largest_remainder() {
        assert_eq!(apportion(&[0.5, 0.2, 0.3], 10), vec![5, 2, 3]);
        assert_eq!(apportion(&[1.0 / 3.0; 3], 10), vec![4, 3, 3]);
        assert_eq!(apportion(&[0.29, 0.71], 100), vec![29, 71]);
        assert_eq!(apportion(&[0.15, 0.85], 3), vec![0, 3]);
        assert_eq!(apportion(&[0.5, 0.5], 7).iter().sum::<usize>(), 7);
    }

    #[test]
    fn fixed_sequence_layout() {
        let p = validate_profile(&LinkProfile::FixedType {
            probs: vec![0.2, 0.5, 0.7],
            types: vec![0.5, 0.2, 0.3],
            r: 10,
            counts: vec![],
        })
        .unwrap();
        assert_eq!(
            p.fixed_sequence().unwrap(),
            vec![0.2, 0.2, 0.2, 0.2, 0.2, 0.5, 0.5, 0.7, 0.7, 0.7]
        );
    }

    #[test]
    fn json_field_names() {
        let text = r#"{
            "profile": {"kind": "fixed_type", "P": [0.01, 0.1], "Q": [0.5, 0.5], "r": 20},
            "arrivals": {"kind": "gilbert_elliott", "gamma": 0.01, "beta": 0.1, "epsilon": 0.45},
            "mode": "instantaneous",
            "num_packets": 1000,
            "seed": 3
        }"#;
        let s: Scenario = serde_json::from_str(text).unwrap();
        assert_eq!(s.mode, LinkMode::Instantaneous);
        assert!((s.arrivals.rate() - 0.5).abs() < 1e-12);
        let prob = r#"{"kind": "probabilistic", "P": [0.2, 0.5], "Qtilde": [0.5, 0.5], "r": 4}"#;
        let p: LinkProfile = serde_json::from_str(prob).unwrap();
        assert!(matches!(p, LinkProfile::Probabilistic { .. }));
    }
}
