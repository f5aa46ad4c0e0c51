//! Binary and categorical KL divergence in nats.

/// `p ln(p/q) + (1-p) ln((1-p)/(1-q))` with `0 ln 0 = 0`, `0 ln(0/0) = 0`
/// and `ln(1/0) = +inf`.
pub fn kl_binary(p: f64, q: f64) -> f64 {
    xlogy_ratio(p, q) + xlogy_ratio(1.0 - p, 1.0 - q)
}

/// `x ln(x / y)` with the divergence conventions at zero.
pub(crate) fn xlogy_ratio(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if y == 0.0 {
        f64::INFINITY
    } else {
        x * (x / y).ln()
    }
}

/// `sum_i p_i ln(p_i / q_i)` over a common alphabet.
pub fn kl_categorical(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(&a, &b)| xlogy_ratio(a, b)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_is_zero() {
        assert_eq!(kl_binary(0.3, 0.3), 0.0);
        assert_eq!(kl_binary(0.0, 0.0), 0.0);
        assert_eq!(kl_binary(1.0, 1.0), 0.0);
    }

    #[test]
    fn single_surviving_term() {
        assert!((kl_binary(1.0, 0.5) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    #[allow(clippy::excessive_precision)]
    fn high_precision_reference() {
        // 0.5 ln 2 + 0.5 ln(2/3), evaluated with mpmath at 50 digits.
        let reference = 0.14384103622589046371960950299691371575175485544888;
        assert!((kl_binary(0.5, 0.25) - reference).abs() < 1e-16);
    }

    #[test]
    fn infinite_when_support_missing() {
        assert_eq!(kl_binary(0.5, 0.0), f64::INFINITY);
        assert_eq!(kl_binary(0.5, 1.0), f64::INFINITY);
        assert_eq!(kl_categorical(&[0.5, 0.5], &[1.0, 0.0]), f64::INFINITY);
        assert_eq!(
            kl_categorical(&[1.0, 0.0], &[0.5, 0.5]),
            std::f64::consts::LN_2
        );
    }
}
