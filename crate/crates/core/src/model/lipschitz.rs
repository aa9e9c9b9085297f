use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SimplexGrid;
use crate::spaces::DiscreteMeasure;
use crate::transport::distance_weights;

use super::{MeanFieldModel, StepTables};

/// Empirical Lipschitz constants of `F` and `f`, and the Hölder exponent they
/// imply. Both constants are maxima over sampled pairs, hence lower bounds
/// on the true ones.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    /// `K_F`
    pub k_transition: f64,
    /// `K_f`
    pub k_reward: f64,
    pub gamma: f64,
    pub pairs: usize,
}

/// `min(1, |ln β| / (ln 2K_F)₊)`.
pub fn holder_exponent(k_transition: f64, discount: f64) -> f64 {
    let l = (2.0 * k_transition).ln();
    if l <= 0.0 || discount == 0.0 {
        return 1.0;
    }
    (discount.ln().abs() / l).min(1.0)
}

/// Largest joint lattice enumerated exhaustively before falling back to
/// random laws only.
const LATTICE_LAWS: usize = 64;

fn random_law(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let keep = rng.gen_range(1..=n);
    let mut w = vec![0.0; n];
    for _ in 0..keep {
        w[rng.gen_range(0..n)] += rng.gen::<f64>() + 1e-3;
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Samples pairs `(ν, ν′)` of joint laws and all `(x, x′, a, e⁰)`; the
/// expectation over the idiosyncratic noise is exact. Pairs with a zero
/// denominator are skipped.
pub fn estimate_lipschitz(model: &MeanFieldModel, samples: usize, seed: u64) -> Result<LipschitzEstimate> {
    if samples == 0 {
        return Err(Error::Contract("estimate_lipschitz needs at least one sample".into()));
    }
    let sp = model.spaces();
    let joint = sp.product.joint().clone();
    let nj = joint.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut laws: Vec<Vec<f64>> = Vec::new();
    let mut steps = 1;
    while crate::grid::lattice_size(nj, steps + 1) <= LATTICE_LAWS as u128 {
        steps += 1;
    }
    laws.extend(SimplexGrid::enumerate_weights(nj, steps, LATTICE_LAWS)?);
    let exhaustive = laws.len();
    for _ in 0..samples {
        laws.push(random_law(nj, &mut rng));
    }
    let tables: Vec<StepTables> = laws
        .iter()
        .map(|w| model.step_tables(&DiscreteMeasure::normalized(joint.clone(), w.clone())))
        .collect();

    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for i in 0..exhaustive {
        for j in i..exhaustive {
            pairs.push((i, j));
        }
    }
    for k in exhaustive..laws.len() {
        pairs.push((k, k));
        pairs.push((k, rng.gen_range(0..laws.len())));
    }

    let (nx, na, ne, ne0) = (sp.n_states(), sp.n_actions(), sp.n_idio(), sp.n_common());
    let lambda = sp.idio_noise.weights();
    let d = |i: usize, j: usize| sp.state.dist(i, j);
    let (mut kf_big, mut kf_small, mut used) = (0.0f64, 0.0f64, 0usize);
    for &(i, j) in &pairs {
        let w = distance_weights(&joint, &laws[i], &laws[j]);
        let (ti, tj) = (&tables[i], &tables[j]);
        for x in 0..nx {
            for x2 in 0..nx {
                let denom = d(x, x2) + w;
                if denom <= 1e-12 {
                    continue;
                }
                used += 1;
                for a in 0..na {
                    let df = (ti.reward[x * na + a] - tj.reward[x2 * na + a]).abs();
                    kf_small = kf_small.max(df / denom);
                    for e0 in 0..ne0 {
                        let mut ed = 0.0;
                        for e in 0..ne {
                            let y = ti.next[sp.next_index(x, a, e, e0)];
                            let y2 = tj.next[sp.next_index(x2, a, e, e0)];
                            ed += lambda[e] * d(y, y2);
                        }
                        kf_big = kf_big.max(ed / denom);
                    }
                }
            }
        }
    }
    if used == 0 {
        return Err(Error::Estimation("every sampled pair had a zero denominator".into()));
    }
    Ok(LipschitzEstimate {
        k_transition: kf_big,
        k_reward: kf_small,
        gamma: holder_exponent(kf_big, model.discount()),
        pairs: used,
    })
}

/// `H(w) = 2 K_f Σ_t β^t min((2 K_F)^t w, Δ_X)`: the modulus of continuity of
/// every value iterate, and of the fixed point, in the Wasserstein distance.
pub fn holder_modulus(est: &LipschitzEstimate, discount: f64, diameter: f64, w: f64) -> f64 {
    let (q, kf) = (2.0 * est.k_transition, 2.0 * est.k_reward);
    let w = w.clamp(0.0, diameter);
    if kf == 0.0 || w == 0.0 {
        return 0.0;
    }
    if q <= 1.0 {
        // q^t w never exceeds Δ: plain geometric series.
        return kf * w / (1.0 - discount * q);
    }
    let mut sum = 0.0;
    let mut term = w;
    let mut bt = 1.0;
    loop {
        if term >= diameter {
            return kf * (sum + diameter * bt / (1.0 - discount));
        }
        sum += bt * term;
        term *= q;
        bt *= discount;
        if bt == 0.0 {
            return kf * sum;
        }
    }
}

/// `K⋆ = sup_{0 < w ≤ Δ} H(w) / w^γ`, estimated on a geometric grid of `w`.
/// `None` when the supremum is infinite, which happens exactly when
/// `2 β K_F = 1` with `2 K_F > 1` (then `γ = 1` and `H(w) ~ w log(1/w)`).
pub fn holder_constant(est: &LipschitzEstimate, discount: f64, diameter: f64) -> Option<f64> {
    let q = 2.0 * est.k_transition;
    if q > 1.0 && (discount * q - 1.0).abs() < 1e-12 {
        return None;
    }
    if diameter == 0.0 {
        return Some(0.0);
    }
    let mut best: f64 = 0.0;
    for k in 0..=3000 {
        let w = diameter * (-(k as f64) * 0.01).exp();
        best = best.max(holder_modulus(est, discount, diameter, w) / w.powf(est.gamma));
    }
    Some(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_example, ExampleOptions};

    #[test]
    fn flip_model_constants() {
        let (m, _) = builtin_example("ex4_1", &ExampleOptions::default()).unwrap();
        let est = estimate_lipschitz(&m, 50, 1).unwrap();
        assert!(est.k_transition >= 1.0 - 1e-12, "{est:?}");
        assert!(est.k_reward >= 1.0 - 1e-12, "{est:?}");
        assert!((est.gamma - 1.0).abs() < 1e-12);
        // 2βK_F = 1: the Hölder constant blows up.
        assert!(holder_constant(&est, 0.5, 1.0).is_none());
        assert!(holder_constant(&est, 0.3, 1.0).is_some());
    }

    #[test]
    fn exponent_rule() {
        assert_eq!(holder_exponent(0.0, 0.5), 1.0);
        assert_eq!(holder_exponent(0.5, 0.9), 1.0);
        let g = holder_exponent(2.0, 0.5);
        assert!((g - 0.5).abs() < 1e-12);
    }

    #[test]
    fn modulus_matches_direct_sum() {
        let est = LipschitzEstimate { k_transition: 1.5, k_reward: 0.7, gamma: holder_exponent(1.5, 0.6), pairs: 1 };
        for &w in &[1e-4, 0.01, 0.3, 2.0] {
            let direct: f64 = (0..2000).map(|t| 0.6f64.powi(t) * (3.0f64.powi(t) * w).min(2.0)).sum::<f64>() * 1.4;
            assert!((holder_modulus(&est, 0.6, 2.0, w) - direct).abs() < 1e-9);
        }
        let k = holder_constant(&est, 0.6, 2.0).unwrap();
        for &w in &[1e-6, 1e-3, 0.5] {
            assert!(holder_modulus(&est, 0.6, 2.0, w) <= k * w.powf(est.gamma) * (1.0 + 1e-2));
        }
    }
}
