//! Quantization of the probability simplex `P(X)`: all measures whose
//! weights are multiples of `1/n`, with nearest-node projection under the
//! Wasserstein distance.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::spaces::{check_same, DiscreteMeasure, SpaceRef};
use crate::transport::distance_weights;

/// Grids above this size are projected onto by rounding plus local search
/// instead of exhaustive scan.
pub const EXHAUSTIVE_PROJECTION_LIMIT: usize = 4096;

pub const DEFAULT_NODE_CAP: usize = 2_000_000;

const TIE_EPS: f64 = 1e-12;

/// `C(n + k − 1, k − 1)`, saturating.
pub fn lattice_size(points: usize, steps: usize) -> u128 {
    if points == 0 {
        return 0;
    }
    let (top, k) = ((steps + points - 1) as u128, (points - 1) as u128);
    let k = k.min(top - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul(top - i) {
            Some(v) => v / (i + 1),
            None => return u128::MAX,
        };
    }
    acc
}

#[derive(Clone, Debug)]
pub struct SimplexGrid {
    space: SpaceRef,
    steps: usize,
    counts: Vec<Vec<u32>>,
    weights: Vec<Vec<f64>>,
    lookup: HashMap<Vec<u32>, usize>,
}

impl SimplexGrid {
    /// All count vectors of `points` nonnegative integers summing to
    /// `steps`, in lexicographic order.
    fn enumerate_counts(points: usize, steps: usize, cap: usize) -> Result<Vec<Vec<u32>>> {
        let size = lattice_size(points, steps);
        if size > cap as u128 {
            return Err(Error::Resource(format!(
                "simplex lattice with {points} points and step 1/{steps} has {size} nodes (cap {cap}); lower the resolution"
            )));
        }
        let mut out = Vec::with_capacity(size as usize);
        let mut cur = vec![0u32; points];
        fn rec(i: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
            if i + 1 == cur.len() {
                cur[i] = left;
                out.push(cur.clone());
                return;
            }
            for c in 0..=left {
                cur[i] = c;
                rec(i + 1, left - c, cur, out);
            }
        }
        rec(0, steps as u32, &mut cur, &mut out);
        Ok(out)
    }

    /// Weight vectors of the lattice, without attaching a space.
    pub fn enumerate_weights(points: usize, steps: usize, cap: usize) -> Result<Vec<Vec<f64>>> {
        Ok(Self::enumerate_counts(points, steps, cap)?
            .into_iter()
            .map(|c| c.into_iter().map(|v| v as f64 / steps as f64).collect())
            .collect())
    }

    pub fn build(space: SpaceRef, steps: usize) -> Result<Self> {
        Self::build_capped(space, steps, DEFAULT_NODE_CAP)
    }

    pub fn build_capped(space: SpaceRef, steps: usize, cap: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Contract("grid resolution n_eta must be at least 1".into()));
        }
        let counts = Self::enumerate_counts(space.len(), steps, cap)?;
        let weights = counts.iter().map(|c| c.iter().map(|&v| v as f64 / steps as f64).collect()).collect();
        let lookup = counts.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
        Ok(SimplexGrid { space, steps, counts, weights, lookup })
    }

    pub fn space(&self) -> &SpaceRef {
        &self.space
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn weights(&self, node: usize) -> &[f64] {
        &self.weights[node]
    }

    pub fn counts(&self, node: usize) -> &[u32] {
        &self.counts[node]
    }

    pub fn measure(&self, node: usize) -> DiscreteMeasure {
        DiscreteMeasure::normalized(self.space.clone(), self.weights[node].clone())
    }

    pub fn node_of_counts(&self, counts: &[u32]) -> Option<usize> {
        self.lookup.get(counts).copied()
    }

    /// Upper bound on the Wasserstein distance from any measure to its
    /// nearest node: `Δ_X · |X| / (2 n)`.
    pub fn covering_radius(&self) -> f64 {
        self.space.diameter() * self.space.len() as f64 / (2.0 * self.steps as f64)
    }

    /// Node nearest to `mu` in Wasserstein distance, ties to the lowest
    /// index.
    pub fn project(&self, mu: &DiscreteMeasure) -> Result<usize> {
        check_same(mu.space(), &self.space)?;
        Ok(self.project_weights(mu.weights()))
    }

    pub fn project_weights(&self, w: &[f64]) -> usize {
        if self.len() <= EXHAUSTIVE_PROJECTION_LIMIT {
            self.project_exhaustive(w)
        } else {
            self.project_local(w)
        }
    }

    fn project_exhaustive(&self, w: &[f64]) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, node) in self.weights.iter().enumerate() {
            let d = distance_weights(&self.space, w, node);
            if d < best.1 - TIE_EPS {
                best = (i, d);
            }
        }
        best.0
    }

    /// Largest-remainder rounding, then unit moves between coordinates while
    /// the distance strictly improves.
    fn project_local(&self, w: &[f64]) -> usize {
        let n = self.steps as f64;
        let k = w.len();
        let mut counts: Vec<u32> = w.iter().map(|v| (v * n).floor() as u32).collect();
        let assigned: u32 = counts.iter().sum();
        let mut rema: Vec<(usize, f64)> = w.iter().enumerate().map(|(i, v)| (i, v * n - (v * n).floor())).collect();
        rema.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let missing = (self.steps as u32).saturating_sub(assigned) as usize;
        for &(i, _) in rema.iter().take(missing) {
            counts[i] += 1;
        }
        let to_w = |c: &[u32]| c.iter().map(|&v| v as f64 / n).collect::<Vec<_>>();
        let mut best = distance_weights(&self.space, w, &to_w(&counts));
        loop {
            let mut improved = None;
            for from in 0..k {
                if counts[from] == 0 {
                    continue;
                }
                for to in 0..k {
                    if to == from {
                        continue;
                    }
                    let mut cand = counts.clone();
                    cand[from] -= 1;
                    cand[to] += 1;
                    let d = distance_weights(&self.space, w, &to_w(&cand));
                    if d < best - TIE_EPS && improved.as_ref().is_none_or(|(bd, _)| d < *bd) {
                        improved = Some((d, cand));
                    }
                }
            }
            match improved {
                Some((d, c)) => {
                    best = d;
                    counts = c;
                }
                None => break,
            }
        }
        self.lookup[&counts]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::FiniteMetricSpace;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn line(n: usize) -> SpaceRef {
        Arc::new(FiniteMetricSpace::euclidean(&(0..n).map(|i| i as f64).collect::<Vec<_>>()).unwrap())
    }

    #[test]
    fn enumeration_examples() {
        let g = SimplexGrid::build(line(2), 2).unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(g.weights(0), &[0.0, 1.0]);
        assert_eq!(g.weights(1), &[0.5, 0.5]);
        assert_eq!(g.weights(2), &[1.0, 0.0]);
        assert_eq!(SimplexGrid::build(line(2), 10).unwrap().len(), 11);
        assert_eq!(SimplexGrid::build(line(3), 4).unwrap().len(), 15);
        assert_eq!(lattice_size(3, 4), 15);
        assert_eq!(lattice_size(13, 10), 646_646);
    }

    #[test]
    fn resource_cap() {
        let err = SimplexGrid::build_capped(line(13), 10, 1000).unwrap_err();
        assert!(matches!(err, Error::Resource(_)));
        assert!(SimplexGrid::build(line(3), 0).is_err());
    }

    #[test]
    fn projection_examples() {
        let d = Arc::new(FiniteMetricSpace::discrete(vec!["a".into(), "b".into()], None).unwrap());
        let g = SimplexGrid::build(d.clone(), 4).unwrap();
        let mu = DiscreteMeasure::new(d.clone(), vec![0.26, 0.74]).unwrap();
        assert_eq!(g.weights(g.project(&mu).unwrap()), &[0.25, 0.75]);
        for i in 0..g.len() {
            assert_eq!(g.project(&g.measure(i)).unwrap(), i);
        }
    }

    #[test]
    fn covering_property_exhaustive_and_local() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = line(4);
        let g = SimplexGrid::build(s.clone(), 7).unwrap();
        for _ in 0..300 {
            let w: Vec<f64> = (0..4).map(|_| rng.gen::<f64>()).collect();
            let t: f64 = w.iter().sum();
            let w: Vec<f64> = w.into_iter().map(|v| v / t).collect();
            let ex = g.project_exhaustive(&w);
            let lo = g.project_local(&w);
            let dex = distance_weights(&s, &w, g.weights(ex));
            let dlo = distance_weights(&s, &w, g.weights(lo));
            assert!(dex <= g.covering_radius() + 1e-12);
            assert!(dlo <= g.covering_radius() + 1e-12);
            assert!(dex <= dlo + 1e-12);
        }
    }
}
