use std::f64::consts::PI;

use serde::Serialize;

use super::divergence::kl_binary;
use super::tail::ln_exact_failure_prob;
use super::AnalyticError;

/// Exact arrive-failure probability and its closed-form bounds for `r`
/// homogeneous links, budget `n` and (effective) erasure probability `p_eff`.
///
/// Probabilities are also kept in the log domain, where they stay
/// comparable long after `exp` underflows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundsReport {
    pub r: u64,
    pub n: u64,
    pub p_eff: f64,
    pub exact: f64,
    pub lower: f64,
    pub chernoff_upper: f64,
    /// Clamped to at most 1.
    pub sum_upper: f64,
    pub ln_exact: f64,
    pub ln_lower: f64,
    pub ln_chernoff_upper: f64,
    pub ln_sum_upper: f64,
}

impl BoundsReport {
    /// `lower <= exact <= min(uppers)`, checked on the log scale with a
    /// relative slack of `rel`.
    pub fn is_sandwiched(&self, rel: f64) -> bool {
        let le = |a: f64, b: f64| a <= b + rel * a.abs().max(b.abs()).max(1e-300);
        le(self.ln_lower, self.ln_exact)
            && le(self.ln_exact, self.ln_chernoff_upper)
            && le(self.ln_exact, self.ln_sum_upper)
    }
}

/// Lower bound, Chernoff upper bound and summed-tail upper bound on the
/// arrive-failure probability, alongside the exact value.
///
/// Requires `2 <= r`, `r / n < 1 - p` and `p` in `(0, 1)`.
pub fn failure_prob_bounds(r: u64, n: u64, p: f64) -> Result<BoundsReport, AnalyticError> {
    bounds_with_divergence(r, n, p, kl_binary)
}

/// [`failure_prob_bounds`] with the binary divergence supplied by the caller.
/// The validation suite uses this to inject faults.
pub fn bounds_with_divergence(
    r: u64,
    n: u64,
    p: f64,
    kl: impl Fn(f64, f64) -> f64,
) -> Result<BoundsReport, AnalyticError> {
    if r < 2 {
        return Err(AnalyticError::DegenerateR { r });
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(AnalyticError::InvalidProbability { value: p });
    }
    let (rf, nf) = (r as f64, n as f64);
    if n < r || rf / nf >= 1.0 - p {
        return Err(AnalyticError::AlphaAboveIV {
            alpha: rf / nf,
            iv: 1.0 - p,
        });
    }

    let k = kl((rf - 1.0) / nf, 1.0 - p);
    let spread = (rf - 1.0) * (nf - rf + 1.0);
    let ln_lower = (1.0 - p).ln() + 0.5 * nf.ln() - nf * k - 0.5 * (8.0 * spread).ln();

    // The supremum over x > 1 sits at x = (N - r - 1) / (p (N - 1)); when
    // that is not above 1 the bound degenerates to 1.
    let chernoff_alpha = rf / (nf - 1.0);
    let ln_chernoff_upper = if chernoff_alpha < 1.0 - p {
        -(nf - 1.0) * kl(chernoff_alpha, 1.0 - p)
    } else {
        0.0
    };

    let ln_sum = (1.0 - p).ln() + 0.5 * nf.ln()
        - 0.5 * (2.0 * PI * spread).ln()
        - nf * k
        - (-(-k).exp_m1()).ln();
    let ln_sum_upper = if ln_sum.is_nan() {
        0.0
    } else {
        ln_sum.min(0.0)
    };

    let ln_exact = ln_exact_failure_prob(r, n, p);
    Ok(BoundsReport {
        r,
        n,
        p_eff: p,
        exact: ln_exact.exp(),
        lower: ln_lower.exp(),
        chernoff_upper: ln_chernoff_upper.exp(),
        sum_upper: ln_sum_upper.exp(),
        ln_exact,
        ln_lower,
        ln_chernoff_upper,
        ln_sum_upper,
    })
}
