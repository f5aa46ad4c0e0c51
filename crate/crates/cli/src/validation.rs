//! Built-in validation suite: named invariants of the analytics and, at the
//! full level, Monte Carlo cross-checks against them.

use std::time::Instant;

use ivelox_core::analytic::{
    bounds_with_divergence, ee_homogeneous, error_exponent, exact_failure_prob,
    exact_failure_prob_instantaneous, exact_failure_prob_mixture, information_velocity, kl_binary,
    ExponentForm,
};
use ivelox_core::model::{validate_scenario, ArrivalSpec, LinkMode, LinkProfile, Scenario};
use ivelox_core::sim::{
    batch_means_se, empirical_failure_ratio, empirical_velocity, fit_waiting_geometric_spaced,
    max_abs_correlation, simulate_tandem_with, waiting_independence, SimOptions, TraceStats,
    VelocityDefinition,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Level {
    Fast,
    Full,
}

/// Deliberate defects for checking that the suite notices them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Fault {
    /// Flip the sign of the binary divergence inside the bounds.
    KlSign,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

const SEED: u64 = 20_240_601;

fn check(name: &'static str, f: impl FnOnce() -> Result<String, String>) -> Check {
    let start = Instant::now();
    let (passed, detail) = match f() {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    Check {
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn scenario(
    profile: LinkProfile,
    arrivals: ArrivalSpec,
    mode: LinkMode,
    packets: u64,
    warmup: u64,
) -> Scenario {
    validate_scenario(&Scenario {
        profile,
        arrivals,
        mode,
        num_packets: packets,
        warmup_packets: Some(warmup),
        seed: SEED,
    })
    .expect("built-in scenarios are valid")
}

fn hetero(r: usize) -> LinkProfile {
    LinkProfile::FixedType {
        probs: vec![0.01, 0.1],
        types: vec![0.5, 0.5],
        r,
        counts: vec![],
    }
}

fn ee_profiles() -> [LinkProfile; 2] {
    [
        LinkProfile::FixedType {
            probs: vec![0.2, 0.5, 0.7],
            types: vec![0.5, 0.2, 0.3],
            r: 10,
            counts: vec![],
        },
        LinkProfile::Probabilistic {
            probs: vec![0.2, 0.5, 0.7],
            weights: vec![0.5, 0.2, 0.3],
            r: 10,
        },
    ]
}

pub fn quoted_velocities() -> Result<String, String> {
    let [fixed, _] = ee_profiles();
    let cases = [
        (
            "homogeneous",
            LinkProfile::Homogeneous { p: 0.01, r: 20 },
            0.5,
            LinkMode::Delayed,
            0.98,
        ),
        ("two-type", hetero(20), 0.5, LinkMode::Delayed, 0.881),
        (
            "three-type delayed",
            fixed.clone(),
            0.0,
            LinkMode::Delayed,
            0.49,
        ),
        (
            "three-type instantaneous",
            fixed,
            0.0,
            LinkMode::Instantaneous,
            0.98,
        ),
    ];
    let mut got = Vec::new();
    for (name, profile, lambda, mode, want) in cases {
        let iv = information_velocity(&profile, lambda, mode).map_err(|e| e.to_string())?;
        ensure((iv - want).abs() <= 0.005, || {
            format!("{name}: {iv} vs {want}")
        })?;
        got.push(format!("{iv:.4}"));
    }
    Ok(got.join(" "))
}

fn single_link_tail() -> Result<String, String> {
    for p in [0.05f64, 0.3, 0.7] {
        for n in [1u64, 5, 40] {
            let want = p.powi(n as i32);
            let d = exact_failure_prob(1, n, p);
            let i = exact_failure_prob_instantaneous(1, n, p);
            ensure((d - want).abs() <= 1e-12 * want, || {
                format!("delayed p={p} N={n}: {d} vs {want}")
            })?;
            ensure((i - want * p).abs() <= 1e-12 * want * p, || {
                format!("instantaneous p={p} N={n}: {i}")
            })?;
        }
    }
    Ok("Pr[delay > N] = p^N".into())
}

fn tail_monotone() -> Result<String, String> {
    for p in [0.01, 0.2, 0.6] {
        for r in 1..=15u64 {
            for n in r..r + 40 {
                let here = exact_failure_prob(r, n, p);
                ensure(exact_failure_prob(r, n + 1, p) <= here, || {
                    format!("not decreasing in N at r={r} N={n} p={p}")
                })?;
                ensure(exact_failure_prob(r + 1, n, p) >= here, || {
                    format!("not increasing in r at r={r} N={n} p={p}")
                })?;
            }
        }
    }
    Ok("monotone in N and r".into())
}

fn mixture_agrees() -> Result<String, String> {
    let mut worst: f64 = 0.0;
    for (r, p) in [(5u64, 0.1), (12, 0.4), (30, 0.02)] {
        let links = vec![vec![(1.0, p)]; r as usize];
        for n in r..r + 30 {
            for mode in [LinkMode::Delayed, LinkMode::Instantaneous] {
                let dp = exact_failure_prob_mixture(&links, n, mode);
                let closed = match mode {
                    LinkMode::Delayed => exact_failure_prob(r, n, p),
                    LinkMode::Instantaneous => exact_failure_prob_instantaneous(r, n, p),
                };
                worst = worst.max((dp - closed).abs());
                ensure((dp - closed).abs() <= 1e-12, || {
                    format!("r={r} N={n} {mode:?}: {dp} vs {closed}")
                })?;
            }
        }
    }
    Ok(format!("max abs err {worst:.1e}"))
}

/// Criterion grid: r in 2..=21, alpha = k/10 (1 - p), p in {0.01, 0.1, 0.3}.
pub fn bound_sandwich(fault: Option<Fault>) -> Result<String, String> {
    let kl = |a: f64, b: f64| match fault {
        Some(Fault::KlSign) => -kl_binary(a, b),
        None => kl_binary(a, b),
    };
    let mut checked = 0;
    let mut violations = Vec::new();
    for p in [0.01, 0.1, 0.3] {
        for k in 1..=9 {
            let alpha = k as f64 / 10.0 * (1.0 - p);
            for r in 2..=21u64 {
                let n = (r as f64 / alpha).ceil() as u64;
                let b = bounds_with_divergence(r, n, p, kl)
                    .map_err(|e| format!("r={r} N={n} p={p}: {e}"))?;
                checked += 1;
                if !b.is_sandwiched(1e-12) {
                    violations.push(format!("r={r} N={n} p={p}"));
                }
            }
        }
    }
    ensure(violations.is_empty(), || {
        format!(
            "{} of {checked} violate lower <= exact <= upper, first {}",
            violations.len(),
            violations[0]
        )
    })?;
    Ok(format!("{checked} triples"))
}

fn dual_forms() -> Result<String, String> {
    let instances = [
        (vec![0.1, 0.4], vec![0.3, 0.7]),
        (vec![0.05, 0.5], vec![0.5, 0.5]),
        (vec![0.2, 0.5, 0.7], vec![0.5, 0.2, 0.3]),
        (vec![0.01, 0.1, 0.3, 0.6], vec![0.4, 0.3, 0.2, 0.1]),
    ];
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (probs, weights) in instances {
        let profiles = [
            LinkProfile::FixedType {
                probs: probs.clone(),
                types: weights.clone(),
                r: 10,
                counts: vec![],
            },
            LinkProfile::Probabilistic {
                probs: probs.clone(),
                weights: weights.clone(),
                r: 10,
            },
        ];
        for profile in profiles {
            let iv = information_velocity(&profile, 0.0, LinkMode::Delayed)
                .map_err(|e| e.to_string())?;
            for frac in [0.2, 0.5, 0.8, 0.95] {
                let alpha = frac * iv;
                let ee = |form| {
                    error_exponent(&profile, 0.0, LinkMode::Delayed, alpha, form).map(|r| r.ee)
                };
                let (c, t) = (ee(ExponentForm::Chernoff), ee(ExponentForm::Types));
                let (c, t) = (c.map_err(|e| e.to_string())?, t.map_err(|e| e.to_string())?);
                let rel = (c - t).abs() / c.abs().max(1e-300);
                worst = worst.max(rel);
                count += 1;
                ensure(rel <= 1e-6, || {
                    format!("{profile:?} alpha={alpha}: chernoff {c} vs types {t}")
                })?;
            }
        }
    }
    Ok(format!("{count} instances, max rel diff {worst:.1e}"))
}

fn small_alpha_limit() -> Result<String, String> {
    let alpha = 1e-9;
    for p in [0.01, 0.2, 0.7] {
        let ee = ee_homogeneous(alpha, p, LinkMode::Delayed).map_err(|e| e.to_string())?;
        ensure((ee + p.ln()).abs() <= 1e-5, || {
            format!("homogeneous p={p}: {ee} vs {}", -p.ln())
        })?;
    }
    for profile in ee_profiles() {
        for form in [ExponentForm::Chernoff, ExponentForm::Types] {
            let ee = error_exponent(&profile, 0.0, LinkMode::Delayed, alpha, form)
                .map_err(|e| e.to_string())?
                .ee;
            ensure((ee + 0.7f64.ln()).abs() <= 1e-5, || {
                format!("{profile:?} {form:?}: {ee} vs {}", -0.7f64.ln())
            })?;
        }
    }
    Ok("-ln max P".into())
}

fn exponent_shape() -> Result<String, String> {
    for profile in ee_profiles() {
        for mode in [LinkMode::Delayed, LinkMode::Instantaneous] {
            let iv = information_velocity(&profile, 0.0, mode).map_err(|e| e.to_string())?;
            let mut prev = f64::INFINITY;
            for k in 1..=19 {
                let ee = error_exponent(
                    &profile,
                    0.0,
                    mode,
                    k as f64 / 20.0 * iv,
                    ExponentForm::Chernoff,
                )
                .map_err(|e| e.to_string())?
                .ee;
                ensure(ee < prev && ee > 0.0, || {
                    format!("{mode:?}: not decreasing at {k}/20 IV")
                })?;
                prev = ee;
            }
            let near = error_exponent(
                &profile,
                0.0,
                mode,
                iv * (1.0 - 1e-6),
                ExponentForm::Chernoff,
            )
            .map_err(|e| e.to_string())?
            .ee;
            ensure(near < 1e-4, || format!("{mode:?}: EE {near} just below IV"))?;
        }
    }
    Ok("decreasing, vanishing at IV".into())
}

fn three_se(got: f64, exact: f64, sigma: f64) -> bool {
    (got - exact).abs() <= 3.0 * sigma
}

fn single_packet() -> Result<String, String> {
    let reps = 1_000_000;
    let s = scenario(
        LinkProfile::Homogeneous { p: 0.2, r: 10 },
        ArrivalSpec::SinglePacket,
        LinkMode::Delayed,
        reps,
        0,
    );
    let t = simulate_tandem_with(
        &s,
        SimOptions {
            record_node_waits: false,
        },
    );
    let mut out = Vec::new();
    for n in [15u64, 20, 30] {
        let exact = exact_failure_prob(10, n, 0.2);
        let got = empirical_failure_ratio(&t, n)
            .map_err(|e| e.to_string())?
            .ratio;
        let se = (exact * (1.0 - exact) / reps as f64).sqrt();
        ensure(three_se(got, exact, se), || {
            format!("N={n}: {got} vs {exact} (se {se:.2e})")
        })?;
        out.push(format!("N={n} z={:+.2}", (got - exact) / se));
    }
    Ok(out.join(" "))
}

/// The reference steady-state run: lambda = 0.5, p = 0.01, 1e5 packets kept.
pub fn steady_state_trace(r: usize, record_waits: bool) -> TraceStats {
    let s = scenario(
        LinkProfile::Homogeneous { p: 0.01, r },
        ArrivalSpec::Geometric { lambda: 0.5 },
        LinkMode::Delayed,
        110_000,
        10_000,
    );
    simulate_tandem_with(
        &s,
        SimOptions {
            record_node_waits: record_waits,
        },
    )
}

fn steady_state() -> Result<String, String> {
    let t = steady_state_trace(20, false);
    let mut out = Vec::new();
    for n in 20..=26u64 {
        let exact = exact_failure_prob(20, n, 0.02);
        let got = empirical_failure_ratio(&t, n)
            .map_err(|e| e.to_string())?
            .ratio;
        let binomial = (exact * (1.0 - exact) / t.packet_records.len() as f64).sqrt();
        let sigma = batch_means_se(&t, n, 100)
            .map_err(|e| e.to_string())?
            .max(binomial);
        ensure(three_se(got, exact, sigma), || {
            format!("N={n}: {got} vs {exact} (sigma {sigma:.2e})")
        })?;
        out.push(format!("N={n} z={:+.2}", (got - exact) / sigma));
    }
    Ok(out.join(" "))
}

fn burke_fit(t: &TraceStats) -> Result<String, String> {
    // node 3 of 5, every 10th packet (waits of consecutive packets correlate)
    let fit = fit_waiting_geometric_spaced(t, 2, 0.01, 0.5, 10).map_err(|e| e.to_string())?;
    ensure(fit.p_value > 0.01, || format!("{fit:?}"))?;
    Ok(format!(
        "chi2 {:.2} dof {} p {:.3}",
        fit.chi_square, fit.degrees_of_freedom, fit.p_value
    ))
}

fn independence(t: &TraceStats) -> Result<String, String> {
    let corr = waiting_independence(t).map_err(|e| e.to_string())?;
    let max = max_abs_correlation(&corr);
    ensure(max < 0.01, || format!("max |corr| {max}"))?;
    Ok(format!("max |corr| {max:.4}"))
}

/// Rate `r / N` at which the empirical failure ratio crosses 1/2, linearly
/// interpolated between the neighbouring budgets.
pub fn half_crossing(
    t: &TraceStats,
    r: u64,
    budgets: impl IntoIterator<Item = u64>,
) -> Option<f64> {
    let mut prev: Option<(f64, f64)> = None;
    for n in budgets {
        let ratio = empirical_failure_ratio(t, n).ok()?.ratio;
        let alpha = r as f64 / n as f64;
        if let Some((a0, f0)) = prev {
            if f0 > 0.5 && ratio <= 0.5 {
                return Some(a0 + (f0 - 0.5) / (f0 - ratio) * (alpha - a0));
            }
        }
        prev = Some((alpha, ratio));
    }
    None
}

/// Desk-scale r = 1000 runs of the step-function reproduction: the crossing
/// of 1/2 for each arrival process and its target velocity.
pub fn step_crossings() -> Vec<(&'static str, f64, Option<f64>)> {
    let geo = ArrivalSpec::Geometric { lambda: 0.5 };
    let runs = [
        (
            "homogeneous geometric",
            LinkProfile::Homogeneous { p: 0.01, r: 1000 },
            geo,
        ),
        ("two-type geometric", hetero(1000), geo),
        (
            "two-type deterministic",
            hetero(1000),
            ArrivalSpec::Deterministic { a: 2.0 },
        ),
        (
            "two-type gilbert-elliott",
            hetero(1000),
            ArrivalSpec::GilbertElliott {
                gamma: 0.01,
                beta: 0.1,
                epsilon: 0.45,
            },
        ),
    ];
    use rayon::prelude::*;
    runs.into_par_iter()
        .map(|(name, profile, arrivals)| {
            let iv = information_velocity(&profile, 0.5, LinkMode::Delayed).expect("stable");
            let s = scenario(profile, arrivals, LinkMode::Delayed, 110_000, 10_000);
            let t = simulate_tandem_with(
                &s,
                SimOptions {
                    record_node_waits: false,
                },
            );
            (name, iv, half_crossing(&t, 1000, 1000..=1400))
        })
        .collect()
}

fn universality() -> Result<String, String> {
    let mut out = Vec::new();
    for (name, iv, crossing) in step_crossings() {
        let c = crossing.ok_or_else(|| format!("{name}: no crossing of 1/2"))?;
        ensure((c - iv).abs() <= 0.01, || {
            format!("{name}: crossing {c:.4} vs IV {iv:.4}")
        })?;
        out.push(format!("{c:.4}/{iv:.3}"));
    }
    Ok(out.join(" "))
}

fn velocities() -> Result<String, String> {
    let mut out = Vec::new();
    for (mode, want) in [(LinkMode::Delayed, 0.5), (LinkMode::Instantaneous, 1.0)] {
        let s = scenario(
            LinkProfile::Homogeneous { p: 0.5, r: 200 },
            ArrivalSpec::SinglePacket,
            mode,
            100_000,
            0,
        );
        for def in [
            VelocityDefinition::HopsPerSlot,
            VelocityDefinition::SlotsPerHop,
        ] {
            let v = empirical_velocity(&s, 200, def);
            ensure((v - want).abs() <= 0.01, || {
                format!("{mode:?} {def:?}: {v} vs {want}")
            })?;
            out.push(format!("{v:.4}"));
        }
    }
    Ok(out.join(" "))
}

pub fn run_validation_suite(level: Level, fault: Option<Fault>) -> Vec<Check> {
    let mut checks = vec![
        check("iv_quoted_values", quoted_velocities),
        check("exact_tail_single_link", single_link_tail),
        check("exact_tail_monotone", tail_monotone),
        check("mixture_tail_agrees", mixture_agrees),
        check("bound_sandwich", || bound_sandwich(fault)),
        check("ee_dual_forms", dual_forms),
        check("ee_small_alpha_limit", small_alpha_limit),
        check("ee_decreasing_to_iv", exponent_shape),
    ];
    if level == Level::Full {
        checks.push(check("single_packet_equivalence", single_packet));
        checks.push(check("steady_state_exceedance", steady_state));
        let reference = steady_state_trace(5, true);
        checks.push(check("burke_waiting_fit", || burke_fit(&reference)));
        checks.push(check("waiting_independence", || independence(&reference)));
        checks.push(check("arrival_universality", universality));
        checks.push(check("velocity_estimators", velocities));
    }
    checks
}

#[cfg(test)]
mod tests {
    use super::*;
    use ivelox_core::sim::simulate_tandem;

    #[test]
    fn fast_level_passes() {
        let checks = run_validation_suite(Level::Fast, None);
        assert!(checks.iter().all(|c| c.passed), "{checks:?}");
    }

    #[test]
    fn kl_fault_breaks_sandwich() {
        assert!(bound_sandwich(Some(Fault::KlSign)).is_err());
    }

    #[test]
    fn crossing_interpolates() {
        let t = simulate_tandem(&scenario(
            LinkProfile::Homogeneous { p: 0.0, r: 4 },
            ArrivalSpec::SinglePacket,
            LinkMode::Delayed,
            10,
            0,
        ));
        // every delay is exactly 4: ratio 1 at N = 3, 0 at N = 4
        assert_eq!(
            half_crossing(&t, 4, 3..=5),
            Some(4.0 / 3.0 + 0.5 * (1.0 - 4.0 / 3.0))
        );
    }
}
