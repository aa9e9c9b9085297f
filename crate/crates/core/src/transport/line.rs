//! Transport along a real embedding: the comonotone (quantile) coupling, the
//! one-dimensional Wasserstein distance, and the measurable coupling map
//! `ζ(μ, μ′, x, u) = F_{μ′}^{-1}(F_μ(x) − u·ΔF_μ(x))`.
//!
//! Generalized inverse: `F^{-1}(v) = inf{x : F(x) ≥ v}` over the support,
//! ties to the smaller embedded value. At `u = 1` the strict inverse
//! `inf{x : F(x) > v}` is used instead, so that `u ↦ ζ(μ, μ′, x, u)` stays
//! inside the closed quantile interval of `x` at both ends and
//! `ζ(μ, μ, x, u) = x` for every `u ∈ [0, 1]`.

use crate::error::{Error, Result};
use crate::spaces::{check_same, DiscreteMeasure, FiniteMetricSpace, MetricKind};

pub(crate) fn order_of(space: &FiniteMetricSpace) -> Result<&[usize]> {
    space
        .embedding_order()
        .ok_or_else(|| Error::Contract("operation needs a real embedding of the space".into()))
}

/// Cumulative mass in embedding order: `cum[r] = F(order[r])`.
fn cumulative(weights: &[f64], order: &[usize]) -> Vec<f64> {
    let mut acc = 0.0;
    order
        .iter()
        .map(|&i| {
            acc += weights[i];
            acc
        })
        .collect()
}

/// Joint law of `(F_μ^{-1}(U), F_ν^{-1}(U))` as a row-major `n × n` matrix:
/// cell `(x, y)` holds the overlap of the quantile intervals of `x` and `y`.
pub fn comonotone_plan(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<Vec<f64>> {
    check_same(mu.space(), nu.space())?;
    let space = mu.space();
    let order = order_of(space)?;
    let n = space.len();
    let fa = cumulative(mu.weights(), order);
    let fb = cumulative(nu.weights(), order);
    let mut plan = vec![0.0; n * n];
    let (mut r, mut s) = (0usize, 0usize);
    let mut lo = 0.0f64;
    while r < n && s < n {
        let hi = fa[r].min(fb[s]);
        let overlap = hi - lo;
        if overlap > 0.0 {
            plan[order[r] * n + order[s]] += overlap;
            lo = hi;
        }
        if fa[r] <= hi {
            r += 1;
        }
        if fb[s] <= hi {
            s += 1;
        }
    }
    Ok(plan)
}

/// `∫₀¹ |F_μ^{-1}(u) − F_ν^{-1}(u)| du` by merging both breakpoint sets.
pub fn wasserstein_1d(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    let space = mu.space();
    if space.kind() != MetricKind::Line {
        return Err(Error::Contract("metric is not induced by the embedding".into()));
    }
    let n = space.len();
    let plan = comonotone_plan(mu, nu)?;
    let e = space.embedding().expect("line metric has an embedding");
    Ok(plan
        .iter()
        .enumerate()
        .filter(|(_, m)| **m > 0.0)
        .map(|(k, m)| m * (e[k / n] - e[k % n]).abs())
        .sum())
}

/// `∫ |F_μ − F_ν|` over the embedding; same value as [`wasserstein_1d`],
/// cheaper, and takes raw weight slices.
pub(crate) fn cdf_distance(space: &FiniteMetricSpace, a: &[f64], b: &[f64]) -> f64 {
    let order = space.embedding_order().expect("line metric has an embedding");
    let e = space.embedding().expect("line metric has an embedding");
    let (mut fa, mut fb, mut total) = (0.0, 0.0, 0.0);
    for w in order.windows(2) {
        fa += a[w[0]];
        fb += b[w[0]];
        total += (fa - fb).abs() * (e[w[1]] - e[w[0]]);
    }
    total
}

fn left_inverse(weights: &[f64], order: &[usize], cum: &[f64], v: f64) -> usize {
    let mut last = None;
    for (r, &i) in order.iter().enumerate() {
        if weights[i] > 0.0 {
            if cum[r] >= v {
                return i;
            }
            last = Some(i);
        }
    }
    last.expect("probability measure has nonempty support")
}

fn strict_inverse(weights: &[f64], order: &[usize], cum: &[f64], v: f64) -> usize {
    let mut last = None;
    for (r, &i) in order.iter().enumerate() {
        if weights[i] > 0.0 {
            if cum[r] > v {
                return i;
            }
            last = Some(i);
        }
    }
    last.expect("probability measure has nonempty support")
}

/// `ζ(μ, μ′, x, u)`. If `ξ ∼ μ` and `U ∼ U[0,1]` are independent then
/// `ζ(μ, μ′, ξ, U) ∼ μ′`, and under the embedding metric the pair
/// `(ξ, ζ(μ, μ′, ξ, U))` is an optimal coupling.
pub fn coupling_zeta(mu: &DiscreteMeasure, mu_prime: &DiscreteMeasure, x: usize, u: f64) -> Result<usize> {
    check_same(mu.space(), mu_prime.space())?;
    let space = mu.space();
    if x >= space.len() {
        return Err(Error::Domain(format!("point {x} is not in the space")));
    }
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::Domain(format!("u = {u} outside [0, 1]")));
    }
    let order = order_of(space)?;
    let rank = order.iter().position(|&i| i == x).expect("order covers every point");
    let cum = cumulative(mu.weights(), order);
    let below = if rank == 0 { 0.0 } else { cum[rank - 1] };
    let jump = mu.mass(x);
    let v = below + (1.0 - u) * jump;
    let cum_prime = cumulative(mu_prime.weights(), order);
    Ok(if u == 1.0 && jump > 0.0 {
        strict_inverse(mu_prime.weights(), order, &cum_prime, v)
    } else {
        left_inverse(mu_prime.weights(), order, &cum_prime, v)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn dirac_to_dirac() {
        let s = Arc::new(FiniteMetricSpace::euclidean(&[0.0, 1.5, 4.0]).unwrap());
        let a = DiscreteMeasure::dirac(s.clone(), 0);
        let b = DiscreteMeasure::dirac(s.clone(), 2);
        assert_eq!(wasserstein_1d(&a, &b).unwrap(), 4.0);
        for u in [0.0, 0.5, 1.0] {
            assert_eq!(coupling_zeta(&a, &b, 0, u).unwrap(), 2);
        }
    }

    #[test]
    fn zeta_rejects_bad_inputs() {
        let s = Arc::new(FiniteMetricSpace::euclidean(&[0.0, 1.0]).unwrap());
        let a = DiscreteMeasure::uniform(s.clone());
        assert!(coupling_zeta(&a, &a, 3, 0.5).is_err());
        assert!(coupling_zeta(&a, &a, 0, 1.5).is_err());
        let d = Arc::new(FiniteMetricSpace::discrete(vec!["p".into(), "q".into()], None).unwrap());
        let b = DiscreteMeasure::uniform(d);
        assert!(coupling_zeta(&b, &b, 0, 0.5).is_err());
    }

    #[test]
    fn zeta_bernoulli_pieces() {
        // μ = B(1/2) on {−1, 1}, μ′ = (0.25, 0.75).
        let s = Arc::new(FiniteMetricSpace::euclidean(&[-1.0, 1.0]).unwrap());
        let mu = DiscreteMeasure::uniform(s.clone());
        let mp = DiscreteMeasure::new(s.clone(), vec![0.25, 0.75]).unwrap();
        // x = −1 covers v ∈ [0, 0.5]: ζ = −1 for v ≤ 0.25, i.e. u ≥ 0.5.
        assert_eq!(coupling_zeta(&mu, &mp, 0, 0.9).unwrap(), 0);
        assert_eq!(coupling_zeta(&mu, &mp, 0, 0.1).unwrap(), 1);
        // x = 1 covers v ∈ [0.5, 1]: always 1.
        assert_eq!(coupling_zeta(&mu, &mp, 1, 0.3).unwrap(), 1);
        let plan = comonotone_plan(&mu, &mp).unwrap();
        assert_eq!(plan, vec![0.25, 0.25, 0.0, 0.5]);
    }

    #[test]
    fn line_requirement() {
        let d = Arc::new(FiniteMetricSpace::discrete(vec!["p".into(), "q".into()], Some(vec![0.0, 1.0])).unwrap());
        let m = DiscreteMeasure::uniform(d);
        assert!(matches!(wasserstein_1d(&m, &m), Err(Error::Contract(_))));
    }
}
