//! Pairwise Frank-Wolfe descent over a shifted, possibly truncated simplex.
//!
//! Each step moves mass from the "away" coordinate (largest partial
//! derivative among those that can give mass) to the Frank-Wolfe coordinate
//! (smallest partial derivative), with an exact line search by bisection on
//! the directional derivative. The Frank-Wolfe gap bounds the suboptimality
//! and drives termination. No randomness: identical inputs give identical
//! iterates.

/// A smooth convex objective over `{x : sum x = const}` intersected with a
/// domain described by [`SimplexObjective::max_transfer`].
pub(crate) trait SimplexObjective {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], grad: &mut [f64]);
    /// Largest mass that may move from `from` to `to` staying in the domain.
    fn max_transfer(&self, x: &[f64], from: usize, to: usize) -> f64;
    fn movable(&self, i: usize) -> bool;
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct DescentOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for DescentOptions {
    fn default() -> Self {
        DescentOptions {
            rel_tol: 1e-12,
            max_iter: 20_000,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Descent {
    pub x: Vec<f64>,
    pub value: f64,
    pub gap: f64,
    pub iterations: usize,
}

const MAX_FLAT_STEPS: usize = 50;

pub(crate) fn pairwise_descent<O: SimplexObjective>(
    obj: &O,
    mut x: Vec<f64>,
    opts: DescentOptions,
) -> Descent {
    let n = x.len();
    let mut grad = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut trial_grad = vec![0.0; n];
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    let mut flat_steps = 0;

    while iterations < opts.max_iter {
        obj.gradient(&x, &mut grad);
        let Some(fw) = (0..n)
            .filter(|&i| obj.movable(i))
            .min_by(|&i, &j| grad[i].total_cmp(&grad[j]))
        else {
            break;
        };

        gap = 0.0;
        let mut away = None;
        for i in (0..n).filter(|&i| i != fw && obj.movable(i)) {
            let room = obj.max_transfer(&x, i, fw);
            if room > 0.0 {
                gap += room * (grad[i] - grad[fw]);
                if away.is_none_or(|k: usize| grad[i] > grad[k]) {
                    away = Some(i);
                }
            }
        }
        let value = obj.value(&x);
        let Some(away) = away else { break };
        if !(gap > opts.rel_tol * value.abs()) {
            break;
        }

        let room = obj.max_transfer(&x, away, fw);
        let mut slope = |step: f64| {
            trial.copy_from_slice(&x);
            trial[away] -= step;
            trial[fw] += step;
            obj.gradient(&trial, &mut trial_grad);
            trial_grad[fw] - trial_grad[away]
        };
        let (mut lo, mut hi) = (0.0, room);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if slope(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let step = 0.5 * (lo + hi);
        let (from, to) = (x[away] - step, x[fw] + step);
        trial.copy_from_slice(&x);
        trial[away] = from;
        trial[fw] = to;
        // Near the optimum rounding can make steps stall or cycle; stop at
        // the first ascent or after a run of steps that leave the value flat.
        let next = obj.value(&trial);
        if !(next <= value) {
            break;
        }
        flat_steps = if next < value { 0 } else { flat_steps + 1 };
        if flat_steps > MAX_FLAT_STEPS {
            break;
        }
        x.copy_from_slice(&trial);
        iterations += 1;
    }

    let value = obj.value(&x);
    Descent {
        x,
        value,
        gap,
        iterations,
    }
}
