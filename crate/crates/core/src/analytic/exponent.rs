//! Error exponents (natural base) for homogeneous, fixed-type and
//! probabilistic cascades.
//!
//! Two independent routes are provided for each heterogeneous setting: the
//! Chernoff form, which solves a scalar equation for the optimal
//! `x = exp(dual)` by bisection, and the types form, which minimizes a
//! convex program over the simplex with [`pairwise_descent`]. They must
//! agree, and the test suites hold them to it.

use serde::Serialize;

use super::divergence::{kl_binary, kl_categorical};
use super::simplex::{pairwise_descent, DescentOptions, SimplexObjective};
use super::{effective_profile, information_velocity, AnalyticError};
use crate::model::{LinkMode, LinkProfile};

const BISECTION_CAP: usize = 200;
const BISECTION_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentReport {
    pub alpha: f64,
    pub iv: f64,
    pub ee: f64,
    /// The Chernoff variable `x`; `None` for the types form.
    pub dual_x: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExponentForm {
    #[default]
    Chernoff,
    Types,
}

/// `KL(alpha || 1-p)` for delayed links, `(1+alpha) KL(alpha/(1+alpha) || 1-p)`
/// for instantaneous ones.
pub fn ee_homogeneous(alpha: f64, p: f64, mode: LinkMode) -> Result<f64, AnalyticError> {
    check_alpha(alpha)?;
    if !(0.0..1.0).contains(&p) {
        return Err(AnalyticError::InvalidProbability { value: p });
    }
    if p == 0.0 {
        return Err(AnalyticError::AllLinksPerfect);
    }
    match mode {
        LinkMode::Delayed => {
            if alpha >= 1.0 - p {
                return Err(AnalyticError::AlphaAboveIV { alpha, iv: 1.0 - p });
            }
            Ok(kl_binary(alpha, 1.0 - p))
        }
        LinkMode::Instantaneous => {
            let iv = (1.0 - p) / p;
            if alpha >= iv {
                return Err(AnalyticError::AlphaAboveIV { alpha, iv });
            }
            Ok((1.0 + alpha) * kl_binary(alpha / (1.0 + alpha), 1.0 - p))
        }
    }
}

fn check_alpha(alpha: f64) -> Result<(), AnalyticError> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(AnalyticError::InvalidAlpha { alpha })
    }
}

/// Alphabet entries with positive weight.
struct Alphabet {
    probs: Vec<f64>,
    weights: Vec<f64>,
    worst: f64,
    iv: f64,
}

impl Alphabet {
    fn new(probs: &[f64], weights: &[f64]) -> Result<Self, AnalyticError> {
        if probs.len() != weights.len() || probs.is_empty() {
            return Err(AnalyticError::LengthMismatch);
        }
        let (mut ps, mut ws) = (Vec::new(), Vec::new());
        for (&p, &w) in probs.iter().zip(weights) {
            if !(0.0..1.0).contains(&p) {
                return Err(AnalyticError::InvalidProbability { value: p });
            }
            if w > 0.0 {
                ps.push(p);
                ws.push(w);
            }
        }
        let worst = ps.iter().copied().fold(0.0, f64::max);
        let iv = 1.0 / ps.iter().zip(&ws).map(|(p, w)| w / (1.0 - p)).sum::<f64>();
        Ok(Alphabet {
            probs: ps,
            weights: ws,
            worst,
            iv,
        })
    }

    fn check(&self, alpha: f64) -> Result<(), AnalyticError> {
        check_alpha(alpha)?;
        if alpha >= self.iv {
            return Err(AnalyticError::AlphaAboveIV { alpha, iv: self.iv });
        }
        if self.worst == 0.0 {
            return Err(AnalyticError::AllLinksPerfect);
        }
        Ok(())
    }
}

/// Root of an increasing function on `(1, 1/worst)` by bisection.
fn bisect_increasing(worst: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (1.0, 1.0 / worst);
    for _ in 0..BISECTION_CAP {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= BISECTION_TOL * f64::EPSILON {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Fixed-type exponent through the Chernoff variable: solve
/// `sum Q(i) / (1 - P(i) x) = 1/alpha` on `(1, 1/max P)` and evaluate
/// `(1-alpha) ln x + alpha sum Q(i) ln((1 - P(i) x) / (1 - P(i)))`.
pub fn ee_fixed_chernoff(
    alpha: f64,
    probs: &[f64],
    types: &[f64],
) -> Result<ExponentReport, AnalyticError> {
    let ab = Alphabet::new(probs, types)?;
    ab.check(alpha)?;
    let target = 1.0 / alpha;
    let x = bisect_increasing(ab.worst, |x| {
        ab.probs
            .iter()
            .zip(&ab.weights)
            .map(|(p, w)| w / (1.0 - p * x))
            .sum::<f64>()
            - target
    });
    let tilt: f64 = ab
        .probs
        .iter()
        .zip(&ab.weights)
        .map(|(&p, &w)| w * ((-p * x).ln_1p() - (-p).ln_1p()))
        .sum();
    let ee = (1.0 - alpha) * x.ln() + alpha * tilt;
    Ok(ExponentReport {
        alpha,
        iv: ab.iv,
        ee,
        dual_x: Some(x),
    })
}

/// Probabilistic-setting exponent through the Chernoff variable: the root of
/// `sum Q~(i) (1-P(i)) (1 - alpha - P(i) x) / (1 - P(i) x)^2` on
/// `(1, 1/max P)`, then `(1-alpha) ln x - alpha ln sum Q~(i) (1-P(i)) / (1-P(i) x)`.
pub fn ee_prob_chernoff(
    alpha: f64,
    probs: &[f64],
    weights: &[f64],
) -> Result<ExponentReport, AnalyticError> {
    let ab = Alphabet::new(probs, weights)?;
    ab.check(alpha)?;
    let stationarity = |x: f64| {
        ab.probs
            .iter()
            .zip(&ab.weights)
            .map(|(&p, &w)| {
                let d = 1.0 - p * x;
                w * (1.0 - p) * (1.0 - alpha - p * x) / (d * d)
            })
            .sum::<f64>()
    };
    // The stationarity residual is positive at x = 1 and eventually negative
    // as x approaches 1/max P; scan toward the pole for a negative bracket.
    let pole = 1.0 / ab.worst;
    let mut hi = pole;
    let mut gap = 0.5 * (pole - 1.0);
    while gap > 0.0 {
        let probe = pole - gap;
        if probe <= 1.0 || stationarity(probe) < 0.0 {
            hi = probe.max(1.0);
            break;
        }
        gap *= 0.5;
    }
    let (mut lo, mut hi) = (1.0, hi);
    for _ in 0..BISECTION_CAP {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if stationarity(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    let mgf: f64 = ab
        .probs
        .iter()
        .zip(&ab.weights)
        .map(|(&p, &w)| w * (1.0 - p) / (1.0 - p * x))
        .sum();
    let ee = (1.0 - alpha) * x.ln() - alpha * mgf.ln();
    Ok(ExponentReport {
        alpha,
        iv: ab.iv,
        ee,
        dual_x: Some(x),
    })
}

/// `min_U sum_i U(i) KL(a(i)/U(i) || 1-P(i))` over simplex `U` with
/// `U(i) >= a(i) / (1-P(i))`, `a = alpha Q`.
struct FixedTypesProgram<'a> {
    probs: &'a [f64],
    mass: Vec<f64>,
    floor: Vec<f64>,
}

impl FixedTypesProgram<'_> {
    fn term(&self, i: usize, u: f64) -> f64 {
        let (a, p) = (self.mass[i], self.probs[i]);
        if p == 0.0 {
            return 0.0;
        }
        let head = if a == 0.0 {
            0.0
        } else {
            a * (a / (u * (1.0 - p))).ln()
        };
        let rest = u - a;
        let tail = if rest <= 0.0 {
            0.0
        } else {
            rest * (rest / (u * p)).ln()
        };
        head + tail
    }

    /// `d term / d a` at fixed `U`, used for envelope gradients.
    fn mass_derivative(&self, i: usize, u: f64, multiplier: f64) -> f64 {
        let (a, p) = (self.mass[i], self.probs[i]);
        if p > 0.0 && a > 0.0 && u > a {
            (a * p / ((u - a) * (1.0 - p))).ln()
        } else {
            (-p * multiplier.exp()).ln_1p() - (-p).ln_1p() - multiplier
        }
    }
}

impl SimplexObjective for FixedTypesProgram<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        (0..x.len()).map(|i| self.term(i, x[i])).sum()
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        for i in 0..x.len() {
            let p = self.probs[i];
            grad[i] = if p == 0.0 {
                0.0
            } else {
                (-self.mass[i] / x[i]).ln_1p() - p.ln()
            };
        }
    }

    fn max_transfer(&self, x: &[f64], from: usize, _to: usize) -> f64 {
        (x[from] - self.floor[from]).max(0.0)
    }

    fn movable(&self, i: usize) -> bool {
        self.probs[i] > 0.0
    }
}

struct FixedTypesSolution {
    value: f64,
    u: Vec<f64>,
    multiplier: f64,
}

fn solve_fixed_types(
    alpha: f64,
    probs: &[f64],
    types: &[f64],
    opts: DescentOptions,
) -> Result<FixedTypesSolution, AnalyticError> {
    let mass: Vec<f64> = types.iter().map(|q| alpha * q).collect();
    let floor: Vec<f64> = mass.iter().zip(probs).map(|(a, p)| a / (1.0 - p)).collect();
    let slack = 1.0 - floor.iter().sum::<f64>();
    let iv = alpha / (1.0 - slack);
    if slack < -1e-14 {
        return Err(AnalyticError::AlphaAboveIV { alpha, iv });
    }
    let slack = slack.max(0.0);
    let program = FixedTypesProgram { probs, mass, floor };
    let free = (0..probs.len()).filter(|&i| program.movable(i)).count();
    if free == 0 {
        return Err(AnalyticError::AllLinksPerfect);
    }
    // Start at the feasibility floor with the slack spread uniformly.
    let start: Vec<f64> = (0..probs.len())
        .map(|i| {
            if program.movable(i) {
                program.floor[i] + slack / free as f64
            } else {
                program.floor[i]
            }
        })
        .collect();
    let d = pairwise_descent(&program, start, opts);
    let mut grad = vec![0.0; probs.len()];
    program.gradient(&d.x, &mut grad);
    let (num, den) =
        (0..probs.len())
            .filter(|&i| program.movable(i))
            .fold((0.0, 0.0), |(n, c), i| {
                let w = d.x[i] - program.floor[i];
                (n + w * grad[i], c + w)
            });
    let multiplier = if den > 0.0 { num / den } else { 0.0 };
    Ok(FixedTypesSolution {
        value: d.value,
        u: d.x,
        multiplier,
    })
}

/// Fixed-type exponent through the method of types (convex program over
/// simplex vectors `U`). Returns 0 when `alpha` equals the velocity.
pub fn ee_fixed_types(alpha: f64, probs: &[f64], types: &[f64]) -> Result<f64, AnalyticError> {
    let ab = Alphabet::new(probs, types)?;
    check_alpha(alpha)?;
    if alpha > ab.iv {
        return Err(AnalyticError::AlphaAboveIV { alpha, iv: ab.iv });
    }
    let sol = solve_fixed_types(alpha, &ab.probs, &ab.weights, DescentOptions::default())?;
    Ok(sol.value)
}

/// `min_Q ee_fixed_types(alpha, P, Q) + alpha KL(Q || Q~)` over the part of
/// the simplex where the inner program is feasible.
struct ProbTypesProgram<'a> {
    alpha: f64,
    probs: &'a [f64],
    weights: &'a [f64],
    inner: DescentOptions,
}

impl ProbTypesProgram<'_> {
    fn load(&self, q: &[f64]) -> f64 {
        q.iter().zip(self.probs).map(|(q, p)| q / (1.0 - p)).sum()
    }

    fn inner(&self, q: &[f64]) -> Option<FixedTypesSolution> {
        solve_fixed_types(self.alpha, self.probs, q, self.inner).ok()
    }
}

impl SimplexObjective for ProbTypesProgram<'_> {
    fn value(&self, q: &[f64]) -> f64 {
        match self.inner(q) {
            Some(sol) => sol.value + self.alpha * kl_categorical(q, self.weights),
            None => f64::INFINITY,
        }
    }

    fn gradient(&self, q: &[f64], grad: &mut [f64]) {
        let Some(sol) = self.inner(q) else {
            grad.iter_mut().for_each(|g| *g = f64::NAN);
            return;
        };
        let program = FixedTypesProgram {
            probs: self.probs,
            mass: q.iter().map(|q| self.alpha * q).collect(),
            floor: Vec::new(),
        };
        for i in 0..q.len() {
            let envelope = program.mass_derivative(i, sol.u[i], sol.multiplier);
            grad[i] = self.alpha * (envelope + (q[i] / self.weights[i]).ln() + 1.0);
        }
    }

    fn max_transfer(&self, q: &[f64], from: usize, to: usize) -> f64 {
        let shift = 1.0 / (1.0 - self.probs[to]) - 1.0 / (1.0 - self.probs[from]);
        let room = if shift > 0.0 {
            ((1.0 / self.alpha - self.load(q)) / shift).max(0.0)
        } else {
            f64::INFINITY
        };
        q[from].min(room)
    }

    fn movable(&self, _i: usize) -> bool {
        true
    }
}

/// Probabilistic-setting exponent through the method of types.
pub fn ee_prob_types(alpha: f64, probs: &[f64], weights: &[f64]) -> Result<f64, AnalyticError> {
    let ab = Alphabet::new(probs, weights)?;
    ab.check(alpha)?;
    let program = ProbTypesProgram {
        alpha,
        probs: &ab.probs,
        weights: &ab.weights,
        inner: DescentOptions {
            rel_tol: 1e-14,
            max_iter: 20_000,
        },
    };
    let d = pairwise_descent(
        &program,
        ab.weights.clone(),
        DescentOptions {
            rel_tol: 1e-11,
            max_iter: 5_000,
        },
    );
    log::debug!(
        "types-form mixture exponent: {} iterations, gap {:e}",
        d.iterations,
        d.gap
    );
    Ok(d.value)
}

/// Exponent of a raw profile under arrival rate `lambda`.
///
/// Probabilities are first replaced by their effective values
/// `p / (1 - lambda)`. Instantaneous links reuse the delayed solvers via
/// `E_inst(alpha) = (1 + alpha) E_delayed(alpha / (1 + alpha))`.
pub fn error_exponent(
    profile: &LinkProfile,
    lambda: f64,
    mode: LinkMode,
    alpha: f64,
    form: ExponentForm,
) -> Result<ExponentReport, AnalyticError> {
    let effective = effective_profile(profile, lambda)?;
    let iv = information_velocity(profile, lambda, mode)?;
    check_alpha(alpha)?;
    if alpha >= iv {
        return Err(AnalyticError::AlphaAboveIV { alpha, iv });
    }
    let (delayed_alpha, scale) = match mode {
        LinkMode::Delayed => (alpha, 1.0),
        LinkMode::Instantaneous => (alpha / (1.0 + alpha), 1.0 + alpha),
    };
    let (probs, weights) = effective.weighted_alphabet();
    let (ee, dual_x) = match (&effective, form) {
        (LinkProfile::Homogeneous { p, .. }, _) => {
            let ee = ee_homogeneous(delayed_alpha, *p, LinkMode::Delayed)?;
            (ee, Some((1.0 - delayed_alpha) / p))
        }
        (LinkProfile::Probabilistic { .. }, ExponentForm::Chernoff) => {
            let rep = ee_prob_chernoff(delayed_alpha, &probs, &weights)?;
            (rep.ee, rep.dual_x)
        }
        (LinkProfile::Probabilistic { .. }, ExponentForm::Types) => {
            (ee_prob_types(delayed_alpha, &probs, &weights)?, None)
        }
        (_, ExponentForm::Chernoff) => {
            let rep = ee_fixed_chernoff(delayed_alpha, &probs, &weights)?;
            (rep.ee, rep.dual_x)
        }
        (_, ExponentForm::Types) => (ee_fixed_types(delayed_alpha, &probs, &weights)?, None),
    };
    Ok(ExponentReport {
        alpha,
        iv,
        ee: scale * ee,
        dual_x,
    })
}
