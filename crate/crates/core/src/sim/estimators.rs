use rand_distr::Distribution;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::gamma_ur;
use thiserror::Error;

use super::rng::{RngStream, PROFILE_STREAM, SERVICE_STREAM};
use super::tandem::{hop_laws, realize_links, simulate_tandem_with, SimOptions, TraceStats};
use crate::model::{LinkMode, LinkProfile, Scenario};

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959963984540054;
const MIN_STEADY_SAMPLES: usize = 10_000;
const MIN_EXPECTED_COUNT: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("EmptyTrace: no packets were recorded")]
    EmptyTrace,
    #[error("InsufficientSamples: {have} samples, need at least {need}")]
    InsufficientSamples { have: usize, need: usize },
    #[error("NodeOutOfRange: node {node} of a {links}-link cascade")]
    NodeOutOfRange { node: usize, links: usize },
    #[error("WaitsNotRecorded: the trace carries no per-node waits")]
    WaitsNotRecorded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FailureRatio {
    pub ratio: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub samples: usize,
}

/// Fraction of recorded packets with `B - A > n`, with a 95% normal
/// confidence interval clipped to `[0, 1]`.
pub fn empirical_failure_ratio(stats: &TraceStats, n: u64) -> Result<FailureRatio, SimError> {
    let samples = stats.packet_records.len();
    if samples == 0 {
        return Err(SimError::EmptyTrace);
    }
    let failures = stats.delays().filter(|&d| d > n).count();
    let ratio = failures as f64 / samples as f64;
    let half = Z95 * (ratio * (1.0 - ratio) / samples as f64).sqrt();
    Ok(FailureRatio {
        ratio,
        ci_lo: (ratio - half).max(0.0),
        ci_hi: (ratio + half).min(1.0),
        samples,
    })
}

/// Standard error of the exceedance ratio from `batches` contiguous batch
/// means, which absorbs the correlation between neighbouring packets.
pub fn batch_means_se(stats: &TraceStats, n: u64, batches: usize) -> Result<f64, SimError> {
    let total = stats.packet_records.len();
    if total < 2 * batches || batches < 2 {
        return Err(SimError::InsufficientSamples {
            have: total,
            need: 2 * batches.max(2),
        });
    }
    let size = total / batches;
    let means: Vec<f64> = stats
        .packet_records
        .chunks_exact(size)
        .take(batches)
        .map(|chunk| chunk.iter().filter(|p| p.delay() > n).count() as f64 / size as f64)
        .collect();
    let k = means.len() as f64;
    let mean = means.iter().sum::<f64>() / k;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (k - 1.0);
    Ok((var / k).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeometricFit {
    pub samples: usize,
    pub empirical_mean: f64,
    pub theoretical_mean: f64,
    pub success_prob: f64,
    pub chi_square: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
}

/// Chi-square fit of the waits at `node` (0-based) to the geometric law on
/// `{1, 2, ...}` with success probability `1 - p / (1 - lambda)`.
pub fn fit_waiting_geometric(
    stats: &TraceStats,
    node: usize,
    p: f64,
    lambda: f64,
) -> Result<GeometricFit, SimError> {
    fit_waiting_geometric_spaced(stats, node, p, lambda, 1)
}

/// As [`fit_waiting_geometric`], using only every `spacing`-th packet.
///
/// Waits of consecutive packets at one node are positively correlated
/// (a packet queued behind a slow one waits too), which inflates the
/// chi-square statistic; spacing the samples restores independence.
pub fn fit_waiting_geometric_spaced(
    stats: &TraceStats,
    node: usize,
    p: f64,
    lambda: f64,
    spacing: usize,
) -> Result<GeometricFit, SimError> {
    let column = node_column(stats, node)?;
    let waits: Vec<u64> = column.iter().step_by(spacing.max(1)).copied().collect();
    if waits.len() < MIN_STEADY_SAMPLES {
        return Err(SimError::InsufficientSamples {
            have: waits.len(),
            need: MIN_STEADY_SAMPLES,
        });
    }
    let n = waits.len();
    let success = 1.0 - p / (1.0 - lambda);
    let empirical_mean = waits.iter().sum::<u64>() as f64 / n as f64;

    let top = waits.iter().copied().max().unwrap_or(1) as usize;
    let mut counts = vec![0u64; top + 1];
    for &w in &waits {
        counts[w as usize] += 1;
    }
    // Cells {1}, {2}, ... while both the cell and the remaining tail expect
    // at least five samples; the last cell is the merged tail.
    let pmf = |k: usize| success * (1.0 - success).powi(k as i32 - 1);
    let mut chi = 0.0;
    let mut cells = 0;
    let mut tail_prob = 1.0;
    let mut tail_count = n as u64 - counts[0];
    let mut k = 1;
    loop {
        let expected = n as f64 * pmf(k);
        let rest = n as f64 * (tail_prob - pmf(k));
        if expected < MIN_EXPECTED_COUNT || rest < MIN_EXPECTED_COUNT {
            break;
        }
        let observed = counts.get(k).copied().unwrap_or(0);
        chi += (observed as f64 - expected).powi(2) / expected;
        cells += 1;
        tail_prob -= pmf(k);
        tail_count -= observed;
        k += 1;
    }
    let expected_tail = n as f64 * tail_prob;
    if expected_tail > 0.0 {
        chi += (tail_count as f64 - expected_tail).powi(2) / expected_tail;
    } else if tail_count > 0 {
        chi = f64::INFINITY;
    }
    cells += 1;
    let dof = cells - 1;
    let p_value = if dof == 0 {
        if chi == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        gamma_ur(dof as f64 / 2.0, chi / 2.0)
    };
    Ok(GeometricFit {
        samples: n,
        empirical_mean,
        theoretical_mean: (1.0 - lambda) / (1.0 - lambda - p),
        success_prob: success,
        chi_square: chi,
        degrees_of_freedom: dof,
        p_value,
    })
}

fn node_column(stats: &TraceStats, node: usize) -> Result<&[u64], SimError> {
    if stats.node_waits.is_empty() {
        return Err(SimError::WaitsNotRecorded);
    }
    let waits = stats.node_waits.get(node).ok_or(SimError::NodeOutOfRange {
        node,
        links: stats.node_waits.len(),
    })?;
    if waits.len() < MIN_STEADY_SAMPLES {
        return Err(SimError::InsufficientSamples {
            have: waits.len(),
            need: MIN_STEADY_SAMPLES,
        });
    }
    Ok(waits)
}

/// Pearson correlations between the per-node waits of the same packet.
/// Constant columns get correlation 0 with everything but themselves.
pub fn waiting_independence(stats: &TraceStats) -> Result<Vec<Vec<f64>>, SimError> {
    let r = stats.node_waits.len();
    let columns: Vec<&[u64]> = (0..r)
        .map(|j| node_column(stats, j))
        .collect::<Result<_, _>>()?;
    let n = stats.node_waits[0].len() as f64;
    let centred: Vec<(Vec<f64>, f64)> = columns
        .iter()
        .map(|col| {
            let mean = col.iter().sum::<u64>() as f64 / n;
            let dev: Vec<f64> = col.iter().map(|&w| w as f64 - mean).collect();
            let ss = dev.iter().map(|d| d * d).sum::<f64>();
            (dev, ss)
        })
        .collect();
    let mut corr = vec![vec![0.0; r]; r];
    for j in 0..r {
        corr[j][j] = 1.0;
        for k in j + 1..r {
            let (dj, sj) = &centred[j];
            let (dk, sk) = &centred[k];
            let rho = if *sj == 0.0 || *sk == 0.0 {
                0.0
            } else {
                dj.iter().zip(dk).map(|(a, b)| a * b).sum::<f64>() / (sj * sk).sqrt()
            };
            corr[j][k] = rho;
            corr[k][j] = rho;
        }
    }
    Ok(corr)
}

/// Largest off-diagonal magnitude of a correlation matrix.
pub fn max_abs_correlation(corr: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (j, row) in corr.iter().enumerate() {
        for &rho in &row[j + 1..] {
            worst = worst.max(rho.abs());
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VelocityDefinition {
    /// Mean number of links crossed within the budget, over the budget.
    HopsPerSlot,
    /// Link count over the mean end-to-end delay.
    SlotsPerHop,
}

/// Single-packet estimate of the velocity over `num_packets` replications.
///
/// `HopsPerSlot` walks an unbounded cascade that repeats the profile's link
/// sequence (probabilistic profiles draw every hop afresh). It returns
/// infinity for instantaneous links that never erase, since no slot is ever
/// spent.
pub fn empirical_velocity(
    scenario: &Scenario,
    budget_n: u64,
    definition: VelocityDefinition,
) -> f64 {
    match definition {
        VelocityDefinition::SlotsPerHop => {
            let single = Scenario {
                arrivals: crate::model::ArrivalSpec::SinglePacket,
                ..scenario.clone()
            };
            let stats = simulate_tandem_with(
                &single,
                SimOptions {
                    record_node_waits: false,
                },
            );
            let mean =
                stats.delays().map(|d| d as f64).sum::<f64>() / stats.packet_records.len() as f64;
            scenario.profile.link_count() as f64 / mean
        }
        VelocityDefinition::HopsPerSlot => hops_per_slot(scenario, budget_n),
    }
}

fn hops_per_slot(scenario: &Scenario, budget_n: u64) -> f64 {
    let instantaneous = scenario.mode == LinkMode::Instantaneous;
    let cycle: Option<Vec<f64>> = scenario.profile.fixed_sequence();
    if instantaneous && scenario.profile.probabilities().iter().all(|&p| p == 0.0) {
        return f64::INFINITY;
    }
    let replications = scenario.num_packets;
    let total: u64 = (0..replications)
        .into_par_iter()
        .map(|rep| {
            let mut service = RngStream::for_replication(scenario.seed, rep, SERVICE_STREAM);
            let mut draw = RngStream::for_replication(scenario.seed, rep, PROFILE_STREAM);
            let fixed = cycle.as_ref().map(|seq| hop_laws(seq));
            let mut elapsed = 0u64;
            let mut hops = 0u64;
            loop {
                let law = match &fixed {
                    Some(laws) => laws[(hops % laws.len() as u64) as usize],
                    None => {
                        let one = realize_links(&single_link(&scenario.profile), &mut draw);
                        hop_laws(&one)[0]
                    }
                };
                let failures = law.sample(&mut service);
                elapsed += if instantaneous {
                    failures
                } else {
                    failures + 1
                };
                if elapsed > budget_n {
                    return hops;
                }
                hops += 1;
            }
        })
        .sum();
    total as f64 / (replications as f64 * budget_n as f64)
}

fn single_link(profile: &LinkProfile) -> LinkProfile {
    match profile {
        LinkProfile::Probabilistic { probs, weights, .. } => LinkProfile::Probabilistic {
            probs: probs.clone(),
            weights: weights.clone(),
            r: 1,
        },
        other => other.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::PacketRecord;

    fn trace(delays: &[u64]) -> TraceStats {
        TraceStats {
            packet_records: delays
                .iter()
                .enumerate()
                .map(|(i, &d)| PacketRecord {
                    index: i as u64 + 1,
                    a: 1,
                    b: 1 + d,
                })
                .collect(),
            node_waits: Vec::new(),
            horizon_slots: 0,
            dropped_warmup: 0,
            mode: LinkMode::Delayed,
        }
    }

    #[test]
    fn ratio_edges() {
        let t = trace(&[4; 10]);
        assert_eq!(empirical_failure_ratio(&t, 4).unwrap().ratio, 0.0);
        assert_eq!(empirical_failure_ratio(&t, 3).unwrap().ratio, 1.0);
        assert_eq!(
            empirical_failure_ratio(&trace(&[]), 3),
            Err(SimError::EmptyTrace)
        );
    }

    #[test]
    fn constant_waits_fit_and_decorrelate() {
        let mut t = trace(&[3; 20_000]);
        t.node_waits = vec![vec![1; 20_000]; 3];
        let fit = fit_waiting_geometric(&t, 1, 0.0, 0.0).unwrap();
        assert_eq!(fit.theoretical_mean, 1.0);
        assert_eq!(fit.p_value, 1.0);
        let corr = waiting_independence(&t).unwrap();
        assert_eq!(max_abs_correlation(&corr), 0.0);
    }

    #[test]
    fn too_few_samples() {
        let mut t = trace(&[3; 10]);
        t.node_waits = vec![vec![1; 10]; 3];
        assert!(matches!(
            fit_waiting_geometric(&t, 0, 0.1, 0.2),
            Err(SimError::InsufficientSamples { .. })
        ));
        assert!(matches!(
            waiting_independence(&t),
            Err(SimError::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn perfect_links_one_hop_per_slot() {
        let s = Scenario {
            profile: LinkProfile::Homogeneous { p: 0.0, r: 50 },
            arrivals: crate::model::ArrivalSpec::SinglePacket,
            mode: LinkMode::Delayed,
            num_packets: 100,
            warmup_packets: None,
            seed: 1,
        };
        assert_eq!(
            empirical_velocity(&s, 50, VelocityDefinition::HopsPerSlot),
            1.0
        );
        assert_eq!(
            empirical_velocity(&s, 50, VelocityDefinition::SlotsPerHop),
            1.0
        );
    }
}
