//! Exact Wasserstein-1 distances on finite metric spaces, the inverse-CDF
//! coupling `ζ`, and the coupling projection `p(μ, 𝐚)` that forces a joint
//! state-action law onto a prescribed state marginal.

mod line;
pub mod simplex;

pub use line::{comonotone_plan, coupling_zeta, wasserstein_1d};

use crate::error::{Error, Result};
use crate::spaces::{check_same, DiscreteMeasure, FiniteMetricSpace, MetricKind, ProductSpace, Side};

/// An optimal transport plan together with its LP certificate.
#[derive(Clone, Debug)]
pub struct TransportPlan {
    pub source: DiscreteMeasure,
    pub target: DiscreteMeasure,
    /// Row-major `n × n`, `plan[i * n + j]` = mass moved from `i` to `j`.
    pub plan: Vec<f64>,
    pub cost: f64,
    /// Dual objective `Σ u_i μ_i + Σ v_j ν_j` of the final basis.
    pub dual_cost: f64,
}

impl TransportPlan {
    pub fn mass(&self, i: usize, j: usize) -> f64 {
        self.plan[i * self.source.space().len() + j]
    }
}

/// Exact Wasserstein-1 distance by the transportation simplex, with the plan.
pub fn wasserstein(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<TransportPlan> {
    check_same(mu.space(), nu.space())?;
    let space = mu.space();
    let n = space.len();
    let rows: Vec<usize> = mu.support().collect();
    let cols: Vec<usize> = nu.support().collect();
    let supply: Vec<f64> = rows.iter().map(|&i| mu.mass(i)).collect();
    let demand: Vec<f64> = cols.iter().map(|&j| nu.mass(j)).collect();
    let sol = simplex::solve(&supply, &demand, |i, j| space.dist(rows[i], cols[j]))?;
    let mut plan = vec![0.0; n * n];
    for (a, &i) in rows.iter().enumerate() {
        for (b, &j) in cols.iter().enumerate() {
            plan[i * n + j] = sol.flow[a * cols.len() + b];
        }
    }
    let dual_cost = sol.dual_objective(&supply, &demand);
    Ok(TransportPlan { source: mu.clone(), target: nu.clone(), plan, cost: sol.cost, dual_cost })
}

/// Exact W1 between two weight vectors on `space`, dispatching on the metric:
/// total variation for the discrete metric, the CDF integral on a line, the
/// transportation simplex otherwise.
pub fn distance_weights(space: &FiniteMetricSpace, a: &[f64], b: &[f64]) -> f64 {
    match space.kind() {
        MetricKind::Discrete => 0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>(),
        MetricKind::Line => line::cdf_distance(space, a, b),
        MetricKind::General => {
            let rows: Vec<usize> = (0..a.len()).filter(|&i| a[i] > 0.0).collect();
            let cols: Vec<usize> = (0..b.len()).filter(|&j| b[j] > 0.0).collect();
            let supply: Vec<f64> = rows.iter().map(|&i| a[i]).collect();
            let demand: Vec<f64> = cols.iter().map(|&j| b[j]).collect();
            simplex::solve(&supply, &demand, |i, j| space.dist(rows[i], cols[j]))
                .map(|s| s.cost)
                .expect("transportation simplex on a valid instance")
        }
    }
}

/// Same value as `wasserstein(mu, nu).cost`, through the fastest exact route.
pub fn distance(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    check_same(mu.space(), nu.space())?;
    Ok(distance_weights(mu.space(), mu.weights(), nu.weights()))
}

/// The comonotone coupling of `(μ, μ′)`, i.e. the law of
/// `(ξ, ζ(μ, μ′, ξ, U))`, as a measure on `X × X`.
pub fn exact_coupled_law(mu: &DiscreteMeasure, mu_prime: &DiscreteMeasure, product: &ProductSpace) -> Result<DiscreteMeasure> {
    check_same(mu.space(), product.left())?;
    check_same(mu.space(), product.right())?;
    let plan = comonotone_plan(mu, mu_prime)?;
    Ok(DiscreteMeasure::normalized(product.joint().clone(), plan))
}

/// `p(μ, 𝐚)`: law of `(ζ(pr₁⋆𝐚, μ, ξ′, U), α₀)` with `(ξ′, α₀) ∼ 𝐚`.
/// Its state marginal is `μ`, and `p(μ, 𝐚) = 𝐚` whenever `pr₁⋆𝐚 = μ`.
pub fn coupling_projection(mu: &DiscreteMeasure, a: &DiscreteMeasure, product: &ProductSpace) -> Result<DiscreteMeasure> {
    check_same(mu.space(), product.left())?;
    check_same(a.space(), product.joint())?;
    let state_marginal = crate::spaces::marginal(a, product, Side::Left)?;
    let n = product.left().len();
    let m = product.right().len();
    let plan = comonotone_plan(&state_marginal, mu)?;
    let mut w = vec![0.0; n * m];
    for x in state_marginal.support() {
        let mx = state_marginal.mass(x);
        for y in 0..n {
            let moved = plan[x * n + y];
            if moved > 0.0 {
                for act in 0..m {
                    w[y * m + act] += moved * a.mass(x * m + act) / mx;
                }
            }
        }
    }
    if w.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Invariant("coupling projection lost all mass".into()));
    }
    Ok(DiscreteMeasure::normalized(product.joint().clone(), w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::{marginal, FiniteMetricSpace, SpaceRef};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn random_measure(space: &SpaceRef, rng: &mut ChaCha8Rng, sparse: bool) -> DiscreteMeasure {
        let mut w: Vec<f64> = (0..space.len())
            .map(|_| if sparse && rng.gen_bool(0.3) { 0.0 } else { rng.gen::<f64>() })
            .collect();
        if w.iter().sum::<f64>() == 0.0 {
            w[0] = 1.0;
        }
        let s: f64 = w.iter().sum();
        DiscreteMeasure::new(space.clone(), w.into_iter().map(|x| x / s).collect()).unwrap()
    }

    #[test]
    fn self_distance_is_zero() {
        let s = Arc::new(FiniteMetricSpace::euclidean(&[0.0, 1.0, 3.0]).unwrap());
        let m = DiscreteMeasure::new(s, vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(wasserstein(&m, &m).unwrap().cost, 0.0);
        assert_eq!(distance(&m, &m).unwrap(), 0.0);
    }

    #[test]
    fn discrete_metric_dirac_vs_fair_coin() {
        let s = Arc::new(FiniteMetricSpace::discrete(vec!["-1".into(), "1".into()], Some(vec![-1.0, 1.0])).unwrap());
        let d = DiscreteMeasure::dirac(s.clone(), 1);
        let b = DiscreteMeasure::uniform(s);
        assert!((wasserstein(&d, &b).unwrap().cost - 0.5).abs() < 1e-15);
        assert!((distance(&d, &b).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mixed_line_space_matches_quantile_oracle() {
        // uniform on {2, 2.5, 3} against B(1/2) on {−1, 1}. Quantile coupling by hand:
        // u ∈ [0, 1/3): 2 ↔ −1, [1/3, 1/2): 2.5 ↔ −1, [1/2, 2/3): 2.5 ↔ 1, [2/3, 1]: 3 ↔ 1.
        let expected = (1.0 / 3.0) * 3.0 + (1.0 / 6.0) * 3.5 + (1.0 / 6.0) * 1.5 + (1.0 / 3.0) * 2.0;
        let s = Arc::new(FiniteMetricSpace::euclidean(&[2.0, 2.5, 3.0, -1.0, 1.0]).unwrap());
        let u = DiscreteMeasure::new(s.clone(), vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0, 0.0]).unwrap();
        let b = DiscreteMeasure::new(s.clone(), vec![0.0, 0.0, 0.0, 0.5, 0.5]).unwrap();
        let lp = wasserstein(&u, &b).unwrap();
        assert!((lp.cost - expected).abs() < 1e-12, "{} vs {expected}", lp.cost);
        assert!((wasserstein_1d(&u, &b).unwrap() - expected).abs() < 1e-12);
        assert!((distance(&u, &b).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn plan_marginals_and_certificate() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let labels: Vec<String> = (0..6).map(|i| format!("p{i}")).collect();
        let pts: Vec<(f64, f64)> = (0..6).map(|_| (rng.gen::<f64>(), rng.gen::<f64>())).collect();
        let matrix = pts
            .iter()
            .map(|a| pts.iter().map(|b| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()).collect())
            .collect();
        let s = Arc::new(FiniteMetricSpace::from_matrix(labels, matrix, None).unwrap());
        for _ in 0..50 {
            let mu = random_measure(&s, &mut rng, true);
            let nu = random_measure(&s, &mut rng, true);
            let tp = wasserstein(&mu, &nu).unwrap();
            for i in 0..6 {
                let row: f64 = (0..6).map(|j| tp.mass(i, j)).sum();
                let col: f64 = (0..6).map(|j| tp.mass(j, i)).sum();
                assert!((row - mu.mass(i)).abs() < 1e-9);
                assert!((col - nu.mass(i)).abs() < 1e-9);
            }
            let cost: f64 = (0..36).map(|k| tp.plan[k] * s.dist(k / 6, k % 6)).sum();
            assert!((cost - tp.cost).abs() < 1e-12);
            assert!((tp.cost - tp.dual_cost).abs() < 1e-9);
            let back = wasserstein(&nu, &mu).unwrap();
            assert!((back.cost - tp.cost).abs() < 1e-9);
        }
    }

    #[test]
    fn triangle_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = Arc::new(FiniteMetricSpace::euclidean(&[0.0, 0.4, 1.0, 2.2, 5.0]).unwrap());
        for _ in 0..100 {
            let a = random_measure(&s, &mut rng, true);
            let b = random_measure(&s, &mut rng, true);
            let c = random_measure(&s, &mut rng, true);
            let ab = wasserstein(&a, &b).unwrap().cost;
            let bc = wasserstein(&b, &c).unwrap().cost;
            let ac = wasserstein(&a, &c).unwrap().cost;
            assert!(ac <= ab + bc + 1e-12);
        }
    }

    #[test]
    fn projection_of_dirac_target_moves_all_state_mass() {
        let x = Arc::new(FiniteMetricSpace::euclidean(&[-1.0, 1.0, 2.0]).unwrap());
        let a = Arc::new(FiniteMetricSpace::euclidean(&[0.0, 1.0]).unwrap());
        let p = ProductSpace::new(x.clone(), a.clone());
        let joint = DiscreteMeasure::new(p.joint().clone(), vec![0.1, 0.2, 0.3, 0.1, 0.05, 0.25]).unwrap();
        let target = DiscreteMeasure::dirac(x.clone(), 2);
        let proj = coupling_projection(&target, &joint, &p).unwrap();
        let action_marginal = marginal(&joint, &p, Side::Right).unwrap();
        assert!((proj.mass(p.index(2, 0)) - action_marginal.mass(0)).abs() < 1e-15);
        assert!((proj.mass(p.index(2, 1)) - action_marginal.mass(1)).abs() < 1e-15);
        assert_eq!(marginal(&proj, &p, Side::Left).unwrap().weights(), target.weights());
    }
}
