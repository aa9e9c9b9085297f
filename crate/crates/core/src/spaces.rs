//! Finite metric spaces, discrete probability measures and probability
//! kernels, plus the measure algebra used everywhere else: pushforward,
//! kernel products `μ·k`, marginals and disintegration.
//!
//! Points are identified by their index in the declared ordering. Labels only
//! matter for I/O.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Tolerance on the total mass of a weight vector handed to a constructor.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// How the metric of a space was declared; picks the fastest exact
/// Wasserstein routine.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricKind {
    /// `d(x, y) = 1{x != y}`.
    Discrete,
    /// `d(x, y) = |embed(x) - embed(y)|`.
    Line,
    General,
}

#[derive(Clone, Debug)]
pub struct FiniteMetricSpace {
    labels: Vec<String>,
    dist: Vec<f64>,
    embed: Option<Vec<f64>>,
    embed_order: Option<Vec<usize>>,
    kind: MetricKind,
}

pub type SpaceRef = Arc<FiniteMetricSpace>;

impl PartialEq for FiniteMetricSpace {
    fn eq(&self, other: &Self) -> bool {
        self.labels == other.labels && self.dist == other.dist && self.embed == other.embed
    }
}

pub fn format_real(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

impl FiniteMetricSpace {
    /// Discrete metric `1{x != y}`. Numeric labels also become the embedding.
    pub fn discrete(labels: Vec<String>, embed: Option<Vec<f64>>) -> Result<Self> {
        let n = labels.len();
        let mut dist = vec![1.0; n * n];
        for i in 0..n {
            dist[i * n + i] = 0.0;
        }
        Self::build(labels, dist, embed, MetricKind::Discrete)
    }

    /// Points on the real line with the Euclidean metric.
    pub fn euclidean(values: &[f64]) -> Result<Self> {
        let n = values.len();
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                dist[i * n + j] = (values[i] - values[j]).abs();
            }
        }
        let labels = values.iter().map(|v| format_real(*v)).collect();
        Self::build(labels, dist, Some(values.to_vec()), MetricKind::Line)
    }

    /// Arbitrary metric table, validated (symmetry, positivity, triangle
    /// inequality).
    pub fn from_matrix(labels: Vec<String>, matrix: Vec<Vec<f64>>, embed: Option<Vec<f64>>) -> Result<Self> {
        let n = labels.len();
        if matrix.len() != n || matrix.iter().any(|r| r.len() != n) {
            return Err(Error::Contract(format!("metric table must be {n}x{n}")));
        }
        let dist: Vec<f64> = matrix.into_iter().flatten().collect();
        let mut kind = MetricKind::General;
        if let Some(e) = &embed {
            if e.len() == n
                && (0..n).all(|i| (0..n).all(|j| (dist[i * n + j] - (e[i] - e[j]).abs()).abs() <= 1e-12))
            {
                kind = MetricKind::Line;
            }
        }
        if kind == MetricKind::General
            && (0..n).all(|i| (0..n).all(|j| dist[i * n + j] == if i == j { 0.0 } else { 1.0 }))
        {
            kind = MetricKind::Discrete;
        }
        Self::build(labels, dist, embed, kind)
    }

    fn build(labels: Vec<String>, dist: Vec<f64>, embed: Option<Vec<f64>>, kind: MetricKind) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::Contract("a space needs at least one point".into()));
        }
        for i in 0..n {
            if dist[i * n + i] != 0.0 {
                return Err(Error::Contract(format!("d(x{i}, x{i}) must be 0")));
            }
            for j in 0..n {
                let d = dist[i * n + j];
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::Contract(format!("d(x{i}, x{j}) = {d} is not a finite nonnegative number")));
                }
                if i != j && d <= 0.0 {
                    return Err(Error::Contract(format!("distinct points x{i}, x{j} at distance 0")));
                }
                if (d - dist[j * n + i]).abs() > 1e-12 {
                    return Err(Error::Contract(format!("metric not symmetric at ({i}, {j})")));
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if dist[i * n + k] > dist[i * n + j] + dist[j * n + k] + 1e-12 {
                        return Err(Error::Contract(format!("triangle inequality fails for ({i}, {j}, {k})")));
                    }
                }
            }
        }
        if let Some(e) = &embed {
            if e.len() != n {
                return Err(Error::Contract("embedding length differs from point count".into()));
            }
            let mut sorted = e.clone();
            sorted.sort_by(f64::total_cmp);
            if sorted.windows(2).any(|w| w[0] == w[1]) || e.iter().any(|v| !v.is_finite()) {
                return Err(Error::Contract("embedding must be injective and finite".into()));
            }
        }
        let embed_order = embed.as_ref().map(|e| {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| e[a].total_cmp(&e[b]));
            order
        });
        Ok(FiniteMetricSpace { labels, dist, embed, embed_order, kind })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.len() + j]
    }

    pub fn diameter(&self) -> f64 {
        self.dist.iter().copied().fold(0.0, f64::max)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn embedding(&self) -> Option<&[f64]> {
        self.embed.as_deref()
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    /// Point indices sorted by embedded value.
    pub fn embedding_order(&self) -> Option<&[usize]> {
        self.embed_order.as_deref()
    }

    /// Nearest point to a real value under the embedding; ties go to the
    /// smaller embedded value.
    pub fn nearest_embedded(&self, value: f64) -> Option<usize> {
        let e = self.embed.as_ref()?;
        let mut best: Option<(usize, f64)> = None;
        for (i, &v) in e.iter().enumerate() {
            let d = (v - value).abs();
            best = match best {
                None => Some((i, d)),
                Some((b, bd)) if d < bd || (d == bd && v < e[b]) => Some((i, d)),
                keep => keep,
            };
        }
        best.map(|(i, _)| i)
    }
}

pub fn same_space(a: &SpaceRef, b: &SpaceRef) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// `X × A` with the sum metric `d((x,a),(x',a')) = d(x,x') + d_A(a,a')`.
/// Pair `(i, j)` sits at index `i * |A| + j` of the joint space.
#[derive(Clone, Debug)]
pub struct ProductSpace {
    left: SpaceRef,
    right: SpaceRef,
    joint: SpaceRef,
}

impl ProductSpace {
    pub fn new(left: SpaceRef, right: SpaceRef) -> Self {
        let (n, m) = (left.len(), right.len());
        let mut labels = Vec::with_capacity(n * m);
        let mut dist = vec![0.0; n * m * n * m];
        for i in 0..n {
            for j in 0..m {
                labels.push(format!("({},{})", left.label(i), right.label(j)));
            }
        }
        let nm = n * m;
        for p in 0..nm {
            for q in 0..nm {
                dist[p * nm + q] = left.dist(p / m, q / m) + right.dist(p % m, q % m);
            }
        }
        let joint = FiniteMetricSpace { labels, dist, embed: None, embed_order: None, kind: MetricKind::General };
        ProductSpace { left, right, joint: Arc::new(joint) }
    }

    pub fn left(&self) -> &SpaceRef {
        &self.left
    }

    pub fn right(&self) -> &SpaceRef {
        &self.right
    }

    pub fn joint(&self) -> &SpaceRef {
        &self.joint
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.right.len() + j
    }

    #[inline]
    pub fn split(&self, p: usize) -> (usize, usize) {
        (p / self.right.len(), p % self.right.len())
    }
}

#[derive(Clone, Debug)]
pub struct DiscreteMeasure {
    space: SpaceRef,
    weights: Vec<f64>,
}

impl PartialEq for DiscreteMeasure {
    fn eq(&self, other: &Self) -> bool {
        same_space(&self.space, &other.space) && self.weights == other.weights
    }
}

impl fmt::Display for DiscreteMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, w) in self.weights.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}: {:.6}", self.space.label(i), w)?;
        }
        write!(f, "]")
    }
}

impl DiscreteMeasure {
    /// Validates and renormalizes. Sums off by more than [`MASS_TOLERANCE`]
    /// are rejected.
    pub fn new(space: SpaceRef, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != space.len() {
            return Err(Error::SpaceMismatch(format!(
                "{} weights for a space of {} points",
                weights.len(),
                space.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Contract("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::Contract(format!("weights sum to {total}, not 1")));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(DiscreteMeasure { space, weights })
    }

    /// Internal constructor for results of measure algebra. Drift beyond
    /// [`MASS_TOLERANCE`] is a bug, not an input problem.
    pub(crate) fn normalized(space: SpaceRef, weights: Vec<f64>) -> Self {
        let total: f64 = weights.iter().sum();
        assert!(
            (total - 1.0).abs() <= MASS_TOLERANCE,
            "mass drifted to {total} in measure algebra"
        );
        let weights = weights.into_iter().map(|w| (w / total).max(0.0)).collect();
        DiscreteMeasure { space, weights }
    }

    pub fn dirac(space: SpaceRef, i: usize) -> Self {
        let mut w = vec![0.0; space.len()];
        w[i] = 1.0;
        DiscreteMeasure { space, weights: w }
    }

    pub fn uniform(space: SpaceRef) -> Self {
        let n = space.len();
        DiscreteMeasure { space, weights: vec![1.0 / n as f64; n] }
    }

    pub fn space(&self) -> &SpaceRef {
        &self.space
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn mass(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.weights.iter().enumerate().filter(|(_, w)| **w > 0.0).map(|(i, _)| i)
    }

    pub fn is_dirac(&self) -> bool {
        self.support().count() == 1
    }

    /// Total variation, `½ Σ |μ(x) − ν(x)|`.
    pub fn total_variation(&self, other: &DiscreteMeasure) -> f64 {
        0.5 * self.weights.iter().zip(&other.weights).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }

    /// `t·self + (1 − t)·other`.
    pub fn mix(&self, t: f64, other: &DiscreteMeasure) -> Result<Self> {
        check_same(&self.space, &other.space)?;
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Contract(format!("mixing weight {t} outside [0, 1]")));
        }
        let w = self.weights.iter().zip(&other.weights).map(|(a, b)| t * a + (1.0 - t) * b).collect();
        Ok(Self::normalized(self.space.clone(), w))
    }

    pub fn expectation(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.weights.iter().enumerate().map(|(i, w)| if *w > 0.0 { w * f(i) } else { 0.0 }).sum()
    }
}

pub(crate) fn check_same(a: &SpaceRef, b: &SpaceRef) -> Result<()> {
    if same_space(a, b) {
        Ok(())
    } else {
        Err(Error::SpaceMismatch("measures live on different spaces".into()))
    }
}

/// A stochastic matrix `from → P(to)`; the relaxed control `â`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityKernel {
    from: SpaceRef,
    to: SpaceRef,
    rows: Vec<Vec<f64>>,
}

impl ProbabilityKernel {
    pub fn new(from: SpaceRef, to: SpaceRef, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != from.len() {
            return Err(Error::SpaceMismatch(format!("{} kernel rows for {} source points", rows.len(), from.len())));
        }
        let rows = rows
            .into_iter()
            .map(|r| DiscreteMeasure::new(to.clone(), r).map(|m| m.weights))
            .collect::<Result<Vec<_>>>()?;
        Ok(ProbabilityKernel { from, to, rows })
    }

    /// Every source point mapped to the same law.
    pub fn constant(from: SpaceRef, row: &DiscreteMeasure) -> Self {
        let rows = vec![row.weights.clone(); from.len()];
        ProbabilityKernel { from, to: row.space.clone(), rows }
    }

    /// Deterministic feedback `x ↦ δ_{map[x]}`.
    pub fn deterministic(from: SpaceRef, to: SpaceRef, map: &[usize]) -> Result<Self> {
        if map.len() != from.len() || map.iter().any(|&a| a >= to.len()) {
            return Err(Error::Domain("feedback map does not fit the spaces".into()));
        }
        let rows = map
            .iter()
            .map(|&a| {
                let mut r = vec![0.0; to.len()];
                r[a] = 1.0;
                r
            })
            .collect();
        Ok(ProbabilityKernel { from, to, rows })
    }

    pub fn from_space(&self) -> &SpaceRef {
        &self.from
    }

    pub fn to_space(&self) -> &SpaceRef {
        &self.to
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.rows[x]
    }

    pub fn row_measure(&self, x: usize) -> DiscreteMeasure {
        DiscreteMeasure { space: self.to.clone(), weights: self.rows[x].clone() }
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

/// `φ⋆μ`; `phi` maps point indices of `mu`'s space to indices of `target`.
pub fn pushforward(phi: impl Fn(usize) -> usize, mu: &DiscreteMeasure, target: &SpaceRef) -> Result<DiscreteMeasure> {
    let mut w = vec![0.0; target.len()];
    for x in mu.support() {
        let y = phi(x);
        if y >= target.len() {
            return Err(Error::Domain(format!(
                "image {y} of point {} lies outside the target space of {} points",
                mu.space.label(x),
                target.len()
            )));
        }
        w[y] += mu.weights[x];
    }
    Ok(DiscreteMeasure::normalized(target.clone(), w))
}

/// `μ·k` on `X × A`: weight `(x, a)` is `μ(x)·k(x)(a)`.
pub fn kernel_product(mu: &DiscreteMeasure, k: &ProbabilityKernel, product: &ProductSpace) -> Result<DiscreteMeasure> {
    check_same(&mu.space, &k.from)?;
    check_same(&mu.space, &product.left)?;
    check_same(&k.to, &product.right)?;
    let m = product.right.len();
    let mut w = vec![0.0; product.joint.len()];
    for x in mu.support() {
        for a in 0..m {
            w[x * m + a] = mu.weights[x] * k.rows[x][a];
        }
    }
    Ok(DiscreteMeasure::normalized(product.joint.clone(), w))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

pub fn marginal(nu: &DiscreteMeasure, product: &ProductSpace, side: Side) -> Result<DiscreteMeasure> {
    check_same(&nu.space, &product.joint)?;
    let m = product.right.len();
    let (space, mut w) = match side {
        Side::Left => (product.left.clone(), vec![0.0; product.left.len()]),
        Side::Right => (product.right.clone(), vec![0.0; m]),
    };
    for (p, &v) in nu.weights.iter().enumerate() {
        let idx = match side {
            Side::Left => p / m,
            Side::Right => p % m,
        };
        w[idx] += v;
    }
    Ok(DiscreteMeasure::normalized(space, w))
}

/// Splits a joint law into its state marginal and the conditional law of the
/// action given the state. Rows of zero-mass states are uniform on `A`.
pub fn disintegrate(nu: &DiscreteMeasure, product: &ProductSpace) -> Result<(DiscreteMeasure, ProbabilityKernel)> {
    let mu = marginal(nu, product, Side::Left)?;
    let m = product.right.len();
    let rows = (0..product.left.len())
        .map(|x| {
            let mass = mu.weights[x];
            if mass > 0.0 {
                let row: Vec<f64> = (0..m).map(|a| nu.weights[x * m + a] / mass).collect();
                let s: f64 = row.iter().sum();
                row.into_iter().map(|v| v / s).collect()
            } else {
                vec![1.0 / m as f64; m]
            }
        })
        .collect();
    let k = ProbabilityKernel { from: product.left.clone(), to: product.right.clone(), rows };
    Ok((mu, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pm1() -> SpaceRef {
        Arc::new(FiniteMetricSpace::euclidean(&[-1.0, 1.0]).unwrap())
    }

    fn m(space: &SpaceRef, w: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::new(space.clone(), w.to_vec()).unwrap()
    }

    #[test]
    fn metric_validation() {
        assert!(FiniteMetricSpace::from_matrix(
            vec!["a".into(), "b".into(), "c".into()],
            vec![vec![0.0, 1.0, 5.0], vec![1.0, 0.0, 1.0], vec![5.0, 1.0, 0.0]],
            None
        )
        .is_err());
        assert!(FiniteMetricSpace::from_matrix(
            vec!["a".into(), "b".into()],
            vec![vec![0.0, 1.0], vec![2.0, 0.0]],
            None
        )
        .is_err());
        assert!(FiniteMetricSpace::discrete(vec!["a".into(), "b".into()], Some(vec![1.0, 1.0])).is_err());
        let s = FiniteMetricSpace::euclidean(&[2.0, 2.5, 3.0, -1.0, 1.0]).unwrap();
        assert_eq!(s.diameter(), 4.0);
        assert_eq!(s.kind(), MetricKind::Line);
        let s = FiniteMetricSpace::from_matrix(
            vec!["a".into(), "b".into()],
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            None,
        )
        .unwrap();
        assert_eq!(s.kind(), MetricKind::Discrete);
    }

    #[test]
    fn nearest_embedded_ties_to_smaller() {
        let s = FiniteMetricSpace::euclidean(&[3.0, 2.0, 2.5]).unwrap();
        assert_eq!(s.nearest_embedded(2.3), Some(2));
        assert_eq!(s.nearest_embedded(2.25), Some(1));
        assert_eq!(s.nearest_embedded(2.5), Some(2));
    }

    #[test]
    fn product_metric_is_sum() {
        let x = Arc::new(FiniteMetricSpace::euclidean(&[0.0, 1.0, 3.0]).unwrap());
        let a = Arc::new(FiniteMetricSpace::discrete(vec!["u".into(), "v".into()], None).unwrap());
        let p = ProductSpace::new(x.clone(), a.clone());
        assert_eq!(p.joint().len(), 6);
        for i in 0..3 {
            for j in 0..2 {
                for k in 0..3 {
                    for l in 0..2 {
                        assert_eq!(p.joint().dist(p.index(i, j), p.index(k, l)), x.dist(i, k) + a.dist(j, l));
                    }
                }
            }
        }
    }

    #[test]
    fn pushforward_examples() {
        let s = pushforward(|x| x, &m(&pm1(), &[0.3, 0.7]), &pm1()).unwrap();
        assert_eq!(s.weights(), &[0.3, 0.7]);
        let s = pushforward(|_| 1, &m(&pm1(), &[0.3, 0.7]), &pm1()).unwrap();
        assert_eq!(s.weights(), &[0.0, 1.0]);
        // x -> -x swaps the two atoms
        let s = pushforward(|x| 1 - x, &m(&pm1(), &[0.3, 0.7]), &pm1()).unwrap();
        assert_eq!(s.weights(), &[0.7, 0.3]);
        assert!(matches!(pushforward(|_| 5, &m(&pm1(), &[0.3, 0.7]), &pm1()), Err(Error::Domain(_))));
    }

    #[test]
    fn kernel_product_and_marginals() {
        let x = pm1();
        let p = ProductSpace::new(x.clone(), x.clone());
        let half = m(&x, &[0.5, 0.5]);
        let k = ProbabilityKernel::constant(x.clone(), &half);
        let nu = kernel_product(&half, &k, &p).unwrap();
        assert_eq!(nu.weights(), &[0.25; 4]);
        assert_eq!(marginal(&nu, &p, Side::Left).unwrap().weights(), &[0.5, 0.5]);
        assert_eq!(marginal(&nu, &p, Side::Right).unwrap().weights(), &[0.5, 0.5]);

        let k = ProbabilityKernel::deterministic(x.clone(), x.clone(), &[1, 0]).unwrap();
        let nu = kernel_product(&DiscreteMeasure::dirac(x.clone(), 0), &k, &p).unwrap();
        assert_eq!(nu.weights(), &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(marginal(&nu, &p, Side::Left).unwrap().weights(), &[1.0, 0.0]);
    }

    #[test]
    fn disintegrate_examples() {
        let x = pm1();
        let p = ProductSpace::new(x.clone(), x.clone());
        let nu = DiscreteMeasure::dirac(p.joint().clone(), p.index(1, 0));
        let (mu, k) = disintegrate(&nu, &p).unwrap();
        assert_eq!(mu.weights(), &[0.0, 1.0]);
        assert_eq!(k.row(1), &[1.0, 0.0]);
        assert_eq!(k.row(0), &[0.5, 0.5]);

        let nu = DiscreteMeasure::new(p.joint().clone(), vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        let (mu, k) = disintegrate(&nu, &p).unwrap();
        assert_eq!(mu.weights(), &[0.5, 0.5]);
        assert_eq!(k.row(0), &[1.0, 0.0]);
        assert_eq!(k.row(1), &[0.0, 1.0]);
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(DiscreteMeasure::new(pm1(), vec![0.5, 0.6]).is_err());
        assert!(DiscreteMeasure::new(pm1(), vec![1.5, -0.5]).is_err());
        assert!(DiscreteMeasure::new(pm1(), vec![1.0]).is_err());
    }

    fn simplex(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, n).prop_map(|v| {
            let s: f64 = v.iter().sum::<f64>() + 1e-9;
            v.into_iter().map(|x| (x + 1e-9 / 4.0) / s).collect::<Vec<_>>()
        })
    }

    fn renorm(v: Vec<f64>) -> Vec<f64> {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    }

    proptest! {
        #[test]
        fn round_trip_on_full_support(mu in simplex(4), rows in prop::collection::vec(simplex(3), 4)) {
            let x = Arc::new(FiniteMetricSpace::euclidean(&[0.0, 1.0, 2.0, 5.0]).unwrap());
            let a = Arc::new(FiniteMetricSpace::discrete(vec!["p".into(), "q".into(), "r".into()], None).unwrap());
            let p = ProductSpace::new(x.clone(), a.clone());
            let mu = DiscreteMeasure::new(x.clone(), renorm(mu)).unwrap();
            let k = ProbabilityKernel::new(x.clone(), a.clone(), rows.into_iter().map(renorm).collect()).unwrap();
            let nu = kernel_product(&mu, &k, &p).unwrap();
            let total: f64 = nu.weights().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            let left = marginal(&nu, &p, Side::Left).unwrap();
            for i in 0..4 { prop_assert!((left.mass(i) - mu.mass(i)).abs() < 1e-12); }
            let (mu2, k2) = disintegrate(&nu, &p).unwrap();
            let nu2 = kernel_product(&mu2, &k2, &p).unwrap();
            for i in 0..nu.weights().len() { prop_assert!((nu.mass(i) - nu2.mass(i)).abs() < 1e-12); }
        }

        #[test]
        fn pushforward_is_linear(mu in simplex(4), nu in simplex(4), map in prop::collection::vec(0usize..3, 4)) {
            let x = Arc::new(FiniteMetricSpace::euclidean(&[0.0, 1.0, 2.0, 5.0]).unwrap());
            let y = Arc::new(FiniteMetricSpace::euclidean(&[0.0, 1.0, 2.0]).unwrap());
            let mu = DiscreteMeasure::new(x.clone(), renorm(mu)).unwrap();
            let nu = DiscreteMeasure::new(x.clone(), renorm(nu)).unwrap();
            for t in [0.0, 0.25, 0.5, 1.0] {
                let lhs = pushforward(|i| map[i], &mu.mix(t, &nu).unwrap(), &y).unwrap();
                let a = pushforward(|i| map[i], &mu, &y).unwrap();
                let b = pushforward(|i| map[i], &nu, &y).unwrap();
                let rhs = a.mix(t, &b).unwrap();
                for i in 0..3 { prop_assert!((lhs.mass(i) - rhs.mass(i)).abs() < 1e-12); }
            }
        }
    }
}
