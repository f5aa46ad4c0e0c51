//! Exact arrive-failure probabilities.
//!
//! For `r` i.i.d. shifted-geometric hop delays with success probability
//! `1 - p`, `Pr[sum > N] = Pr[Binomial(N, 1 - p) <= r - 1]`. The binomial
//! CDF is summed term by term from the smaller tail, with every term
//! evaluated independently through Loader's saddle-point form of the
//! binomial pmf, so nothing cancels and nothing accumulates across terms.

use crate::model::LinkMode;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

// ln(n!) - (n + 1/2) ln n + n - ln sqrt(2 pi), n = 1..=15.
const STIRLING_ERROR: [f64; 15] = [
    0.081_061_466_795_327_258,
    0.041_340_695_955_409_294,
    0.027_677_925_684_998_339,
    0.020_790_672_103_765_093,
    0.016_644_691_189_821_192,
    0.013_876_128_823_070_748,
    0.011_896_709_945_891_770,
    0.010_411_265_261_972_096,
    0.009_255_462_182_712_733,
    0.008_330_563_433_362_871,
    0.007_573_675_487_951_841,
    0.006_942_840_107_209_530,
    0.006_408_994_188_004_207,
    0.005_951_370_112_758_848,
    0.005_554_733_551_962_801,
];

fn stirling_error(n: f64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n <= 15.0 {
        let k = n as usize;
        if k as f64 == n && k >= 1 {
            return STIRLING_ERROR[k - 1];
        }
    }
    let nn = n * n;
    if n > 500.0 {
        (S0 - S1 / nn) / n
    } else if n > 80.0 {
        (S0 - (S1 - S2 / nn) / nn) / n
    } else if n > 35.0 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
    }
}

/// `x ln(x / m) + m - x`, accurate when `x` is close to `m`.
fn deviance(x: f64, m: f64) -> f64 {
    if (x - m).abs() < 0.1 * (x + m) {
        let v = (x - m) / (x + m);
        let mut s = (x - m) * v;
        let mut ej = 2.0 * x * v;
        let v2 = v * v;
        for j in 1..1000 {
            ej *= v2;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        s
    } else {
        x * (x / m).ln() + m - x
    }
}

/// `ln Pr[Binomial(n, succ) = k]` with `fail = 1 - succ` passed separately
/// so that neither probability loses digits.
pub(crate) fn ln_binomial_pmf(k: u64, n: u64, succ: f64, fail: f64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    if succ == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if fail == 0.0 {
        return if k == n { 0.0 } else { f64::NEG_INFINITY };
    }
    let (k, n) = (k as f64, n as f64);
    if k == 0.0 {
        return if succ < 0.1 {
            -deviance(n, n * fail) - n * succ
        } else {
            n * fail.ln()
        };
    }
    if k == n {
        return if fail < 0.1 {
            -deviance(n, n * succ) - n * fail
        } else {
            n * succ.ln()
        };
    }
    let lc = stirling_error(n)
        - stirling_error(k)
        - stirling_error(n - k)
        - deviance(k, n * succ)
        - deviance(n - k, n * fail);
    let lf = LN_2PI + k.ln() + (-k / n).ln_1p();
    lc - 0.5 * lf
}

/// Sum of `exp(terms)` for a monotonically decaying run of log-terms,
/// returned in the log domain. Stops once the geometric remainder bound
/// falls below double precision.
fn ln_decaying_sum(mut next: impl FnMut() -> Option<f64>) -> f64 {
    let Some(head) = next() else {
        return f64::NEG_INFINITY;
    };
    if head == f64::NEG_INFINITY {
        return head;
    }
    let mut sum = 1.0;
    let mut prev = 1.0;
    while let Some(ln_t) = next() {
        let t = (ln_t - head).exp();
        sum += t;
        let ratio = t / prev;
        if t == 0.0 || (ratio < 1.0 && t * ratio / (1.0 - ratio) < 1e-17 * sum) {
            break;
        }
        prev = t;
    }
    head + sum.ln()
}

/// `ln Pr[Binomial(n, succ) <= k]`.
pub(crate) fn ln_binomial_cdf(k: u64, n: u64, succ: f64, fail: f64) -> f64 {
    if k >= n {
        return 0.0;
    }
    let mean = n as f64 * succ;
    if (k as f64) < mean {
        // Lower tail is the small one; terms decay walking down from k.
        let mut j = Some(k);
        ln_decaying_sum(|| {
            let cur = j?;
            j = cur.checked_sub(1);
            Some(ln_binomial_pmf(cur, n, succ, fail))
        })
    } else {
        let mut j = k + 1;
        let upper = ln_decaying_sum(|| {
            if j > n {
                return None;
            }
            let cur = j;
            j += 1;
            Some(ln_binomial_pmf(cur, n, succ, fail))
        });
        (-upper.exp()).ln_1p()
    }
}

/// `ln Pr[tau_1 + ... + tau_r > n]` for i.i.d. shifted geometric hop delays.
pub fn ln_exact_failure_prob(r: u64, n: u64, p: f64) -> f64 {
    assert!(r >= 1, "the cascade needs at least one link");
    if n < r {
        return 0.0;
    }
    ln_binomial_cdf(r - 1, n, 1.0 - p, p)
}

/// `Pr[tau_1 + ... + tau_r > n]` for `r` homogeneous delayed links.
///
/// Equals 1 for `n < r`, since every hop costs at least one slot.
pub fn exact_failure_prob(r: u64, n: u64, p: f64) -> f64 {
    ln_exact_failure_prob(r, n, p).exp()
}

/// Exact tail for instantaneous links, whose hop delays are non-shifted
/// geometric: `Pr[sum tau' > N] = Pr[sum tau > N + r]`.
pub fn exact_failure_prob_instantaneous(r: u64, n: u64, p: f64) -> f64 {
    exact_failure_prob(r, n + r, p)
}

/// Exact tail for an arbitrary sequence of per-link hop-delay laws.
///
/// Each link is a mixture of shifted geometrics `(weight, erasure)`; a
/// deterministic link is a single component of weight 1. The CDF of the
/// total delay is built by dynamic programming up to the budget, so cost is
/// `O(links * components * budget)`.
pub fn exact_failure_prob_mixture(links: &[Vec<(f64, f64)>], n: u64, mode: LinkMode) -> f64 {
    let r = links.len() as u64;
    let budget = match mode {
        LinkMode::Delayed => n,
        LinkMode::Instantaneous => n + r,
    };
    if budget < r {
        return 1.0;
    }
    let len = budget as usize + 1;
    // pmf of the partial sum over 0..=budget
    let mut pmf = vec![0.0; len];
    pmf[0] = 1.0;
    let mut component = vec![0.0; len];
    let mut next = vec![0.0; len];
    for link in links {
        next.iter_mut().for_each(|v| *v = 0.0);
        for &(weight, p) in link {
            if weight == 0.0 {
                continue;
            }
            component[0] = 0.0;
            for s in 1..len {
                component[s] = (1.0 - p) * pmf[s - 1] + p * component[s - 1];
            }
            for s in 0..len {
                next[s] += weight * component[s];
            }
        }
        std::mem::swap(&mut pmf, &mut next);
    }
    let mass: f64 = pmf.iter().sum();
    (1.0 - mass).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_link_is_power() {
        assert!((exact_failure_prob(1, 5, 0.1) - 1e-5).abs() < 1e-18);
        assert!((exact_failure_prob(1, 3, 0.2) - 0.008).abs() < 1e-17);
    }

    #[test]
    fn hand_enumeration() {
        // Pr(sum = 2) = Pr(sum = 3) = 1/4, so Pr(sum > 3) = 1/2.
        assert!((exact_failure_prob(2, 3, 0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn two_dimensional_enumeration() {
        for &p in &[0.1f64, 0.5, 0.8] {
            for n in 2..20u64 {
                let mut below = 0.0;
                for a in 1..=64u64 {
                    for b in 1..=64u64 {
                        if a + b <= n {
                            below +=
                                (1.0 - p) * p.powi(a as i32 - 1) * (1.0 - p) * p.powi(b as i32 - 1);
                        }
                    }
                }
                let got = exact_failure_prob(2, n, p);
                assert!((got - (1.0 - below)).abs() < 1e-13, "p={p} n={n}");
            }
        }
    }

    #[test]
    fn budget_below_hops_always_fails() {
        assert_eq!(exact_failure_prob(5, 4, 0.3), 1.0);
        assert_eq!(exact_failure_prob(5, 4, 0.0), 1.0);
    }

    #[test]
    fn erasure_free_links() {
        assert_eq!(exact_failure_prob(5, 5, 0.0), 0.0);
        assert_eq!(exact_failure_prob(5, 100, 0.0), 0.0);
    }

    #[test]
    fn mixture_dp_agrees_with_binomial() {
        for &(r, n, p) in &[
            (3u64, 10u64, 0.2),
            (10, 15, 0.2),
            (20, 40, 0.5),
            (1, 7, 0.3),
        ] {
            let links = vec![vec![(1.0, p)]; r as usize];
            let dp = exact_failure_prob_mixture(&links, n, LinkMode::Delayed);
            assert!((dp - exact_failure_prob(r, n, p)).abs() < 1e-12);
            let inst = exact_failure_prob_mixture(&links, n, LinkMode::Instantaneous);
            assert!((inst - exact_failure_prob_instantaneous(r, n, p)).abs() < 1e-12);
        }
    }

    #[test]
    fn large_budget_is_finite_and_ordered() {
        let a = ln_exact_failure_prob(1000, 1_000_000, 0.5);
        assert!(a.is_finite() && a < -1e5);
        let b = exact_failure_prob(1000, 1020, 0.02);
        assert!(b > 0.3 && b < 0.7, "{b}");
    }

    #[test]
    fn pmf_matches_direct_formula() {
        // C(10, 3) 0.3^3 0.7^7
        let direct = 120.0 * 0.3f64.powi(3) * 0.7f64.powi(7);
        assert!((ln_binomial_pmf(3, 10, 0.3, 0.7).exp() - direct).abs() < 1e-15);
    }
}
