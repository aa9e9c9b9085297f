//! The lifted MDP on `P(X)`: exact propagation of the conditional state law,
//! lifted rewards, Bellman operators and the Q-function.
//!
//! For a relaxed control `â` (a kernel `X → P(A)`),
//! `F̂(μ, â, e⁰) = F(·, ·, μ·â, ·, e⁰) ⋆ ((μ·â) ⊗ λ_ε)` and
//! `f̂(μ, â) = ∫ f(x, a, μ·â) d(μ·â)`. The barred versions first force the
//! state marginal of a joint law `𝐚` onto `μ` with the coupling projection.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::grid::SimplexGrid;
use crate::model::{MeanFieldModel, StepTables};
use crate::spaces::{check_same, DiscreteMeasure, ProbabilityKernel};
use crate::transport::coupling_projection;

/// Kernels whose sup-search value is within this of the max count as tied.
pub const ARGMAX_TIE: f64 = 1e-12;

/// Hard cap on the number of (node, kernel) pairs in a [`LiftedTable`].
pub const MAX_TABLE_ENTRIES: u128 = 50_000_000;

/// Reward and next-state laws (one per common-noise point) of a joint law.
#[derive(Clone, Debug)]
pub struct LiftedStep {
    pub reward: f64,
    pub next: Vec<Vec<f64>>,
}

/// One lifted step from the joint state-action law `joint` (weights on
/// `X × A`).
pub fn lift_joint(model: &MeanFieldModel, joint: &[f64]) -> LiftedStep {
    lift_joint_tables(model, joint).0
}

/// [`lift_joint`] plus the frozen tables `F(·, ·, ν, ·, ·)`, `f(·, ·, ν)`.
pub fn lift_joint_tables(model: &MeanFieldModel, joint: &[f64]) -> (LiftedStep, StepTables) {
    let sp = model.spaces();
    let (nx, na, ne, ne0) = (sp.n_states(), sp.n_actions(), sp.n_idio(), sp.n_common());
    let nu = DiscreteMeasure::normalized(sp.product.joint().clone(), joint.to_vec());
    let t = model.step_tables(&nu);
    let lambda = sp.idio_noise.weights();
    let mut reward = 0.0;
    let mut next = vec![vec![0.0; nx]; ne0];
    for x in 0..nx {
        for a in 0..na {
            let p = joint[x * na + a];
            if p == 0.0 {
                continue;
            }
            reward += p * t.reward[x * na + a];
            for e in 0..ne {
                let pe = p * lambda[e];
                if pe == 0.0 {
                    continue;
                }
                for (e0, law) in next.iter_mut().enumerate() {
                    law[t.next[sp.next_index(x, a, e, e0)]] += pe;
                }
            }
        }
    }
    (LiftedStep { reward, next }, t)
}

/// `μ·â` as weights on `X × A`.
pub fn joint_of(mu: &[f64], rows: &[Vec<f64>]) -> Vec<f64> {
    let na = rows.first().map_or(0, Vec::len);
    let mut out = vec![0.0; mu.len() * na];
    for (x, &m) in mu.iter().enumerate() {
        if m > 0.0 {
            for (a, &r) in rows[x].iter().enumerate() {
                out[x * na + a] = m * r;
            }
        }
    }
    out
}

fn check_kernel(model: &MeanFieldModel, mu: &DiscreteMeasure, a_hat: &ProbabilityKernel) -> Result<()> {
    check_same(mu.space(), model.state_space())?;
    check_same(a_hat.from_space(), model.state_space())?;
    check_same(a_hat.to_space(), model.action_space())
}

fn check_e0(model: &MeanFieldModel, e0: usize) -> Result<()> {
    if e0 >= model.spaces().n_common() {
        return Err(Error::Domain(format!("common-noise index {e0} out of range")));
    }
    Ok(())
}

/// `F̂(μ, â, e⁰)`.
pub fn lift_transition_hat(
    model: &MeanFieldModel,
    mu: &DiscreteMeasure,
    a_hat: &ProbabilityKernel,
    e0: usize,
) -> Result<DiscreteMeasure> {
    check_kernel(model, mu, a_hat)?;
    check_e0(model, e0)?;
    let step = lift_joint(model, &joint_of(mu.weights(), a_hat.rows()));
    Ok(DiscreteMeasure::normalized(model.state_space().clone(), step.next[e0].clone()))
}

/// `f̂(μ, â)`.
pub fn lift_reward_hat(model: &MeanFieldModel, mu: &DiscreteMeasure, a_hat: &ProbabilityKernel) -> Result<f64> {
    check_kernel(model, mu, a_hat)?;
    Ok(lift_joint(model, &joint_of(mu.weights(), a_hat.rows())).reward)
}

/// `F̄(μ, 𝐚, e⁰)`: the step from `p(μ, 𝐚)`.
pub fn lift_transition_bar(model: &MeanFieldModel, mu: &DiscreteMeasure, a: &DiscreteMeasure, e0: usize) -> Result<DiscreteMeasure> {
    check_e0(model, e0)?;
    let p = coupling_projection(mu, a, model.product())?;
    let step = lift_joint(model, p.weights());
    Ok(DiscreteMeasure::normalized(model.state_space().clone(), step.next[e0].clone()))
}

/// `f̄(μ, 𝐚) = f̂` evaluated at `p(μ, 𝐚)`.
pub fn lift_reward_bar(model: &MeanFieldModel, mu: &DiscreteMeasure, a: &DiscreteMeasure) -> Result<f64> {
    let p = coupling_projection(mu, a, model.product())?;
    Ok(lift_joint(model, p.weights()).reward)
}

/// Which relaxed controls the Bellman sup ranges over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum KernelFamily {
    /// Every row on the lattice of `P(A)` with step `1/steps`.
    Randomized { steps: usize },
    /// Dirac rows only: deterministic feedback `X → A`.
    Deterministic,
}

/// The finite set of kernels `P(A)^X` searched by the Bellman operator. At a
/// law `μ` only rows on the support of `μ` matter; the others are fixed to a
/// default (uniform for randomized families, the first action for the
/// deterministic one).
#[derive(Clone, Debug)]
pub struct KernelSearchSpace {
    family: KernelFamily,
    n_actions: usize,
    rows: Vec<Vec<f64>>,
    default_row: Vec<f64>,
}

impl KernelSearchSpace {
    pub fn new(family: KernelFamily, n_actions: usize) -> Result<Self> {
        if n_actions == 0 {
            return Err(Error::Contract("the action space is empty".into()));
        }
        let (rows, default_row) = match family {
            KernelFamily::Randomized { steps } => {
                if steps == 0 {
                    return Err(Error::Contract("kernel grid resolution n_A must be at least 1".into()));
                }
                (SimplexGrid::enumerate_weights(n_actions, steps, 1_000_000)?, vec![1.0 / n_actions as f64; n_actions])
            }
            KernelFamily::Deterministic => {
                let rows: Vec<Vec<f64>> = (0..n_actions)
                    .map(|a| (0..n_actions).map(|b| if a == b { 1.0 } else { 0.0 }).collect())
                    .collect();
                let d = rows[0].clone();
                (rows, d)
            }
        };
        Ok(KernelSearchSpace { family, n_actions, rows, default_row })
    }

    pub fn randomized(steps: usize, n_actions: usize) -> Result<Self> {
        Self::new(KernelFamily::Randomized { steps }, n_actions)
    }

    pub fn deterministic(n_actions: usize) -> Result<Self> {
        Self::new(KernelFamily::Deterministic, n_actions)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn is_deterministic(&self) -> bool {
        self.family == KernelFamily::Deterministic
    }

    /// Candidate rows in enumeration order.
    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn default_row(&self) -> &[f64] {
        &self.default_row
    }

    /// Number of kernels at a law with `support` atoms, saturating.
    pub fn count(&self, support: usize) -> u128 {
        let r = self.rows.len() as u128;
        let mut c: u128 = 1;
        for _ in 0..support {
            c = c.saturating_mul(r);
        }
        c
    }

    /// Kernel number `k` at a law with the given support: the first support
    /// state is the most significant digit, so `k` runs lexicographically.
    pub fn kernel(&self, support: &[usize], n_states: usize, k: usize) -> Vec<Vec<f64>> {
        let mut rows = vec![self.default_row.clone(); n_states];
        let r = self.rows.len();
        let mut rem = k;
        for &x in support.iter().rev() {
            rows[x] = self.rows[rem % r].clone();
            rem /= r;
        }
        rows
    }

    pub fn kernel_measure(&self, model: &MeanFieldModel, support: &[usize], k: usize) -> ProbabilityKernel {
        let rows = self.kernel(support, model.spaces().n_states(), k);
        ProbabilityKernel::new(model.state_space().clone(), model.action_space().clone(), rows)
            .expect("search-space rows are probability vectors")
    }
}

/// A value function on the nodes of a simplex grid, evaluated off-grid at
/// the nearest node.
#[derive(Clone, Debug)]
pub struct ValueFunction {
    pub grid: Arc<SimplexGrid>,
    pub values: Vec<f64>,
}

impl ValueFunction {
    pub fn new(grid: Arc<SimplexGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Contract(format!("{} values for {} grid nodes", values.len(), grid.len())));
        }
        Ok(ValueFunction { grid, values })
    }

    pub fn zeros(grid: Arc<SimplexGrid>) -> Self {
        let n = grid.len();
        ValueFunction { grid, values: vec![0.0; n] }
    }

    pub fn from_fn(grid: Arc<SimplexGrid>, f: impl Fn(&DiscreteMeasure) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.measure(i))).collect();
        ValueFunction { grid, values }
    }

    pub fn eval(&self, mu: &DiscreteMeasure) -> Result<f64> {
        Ok(self.values[self.grid.project(mu)?])
    }

    pub fn sup_distance(&self, other: &ValueFunction) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// `max` then the first index within [`ARGMAX_TIE`] of it.
fn argmax_first(values: impl Iterator<Item = f64> + Clone) -> (f64, usize) {
    let best = values.clone().fold(f64::NEG_INFINITY, f64::max);
    let k = values.into_iter().position(|v| v >= best - ARGMAX_TIE).unwrap_or(0);
    (best, k)
}

/// Direct (untabulated) Bellman step at an arbitrary law: the max over the
/// search space of `f̂(μ, â) + β Σ λ⁰(e⁰) W(F̂(μ, â, e⁰))`, with the first
/// maximizer in enumeration order.
pub fn bellman_apply(
    model: &MeanFieldModel,
    w: &ValueFunction,
    mu: &DiscreteMeasure,
    search: &KernelSearchSpace,
) -> Result<(f64, ProbabilityKernel)> {
    check_same(mu.space(), model.state_space())?;
    let support: Vec<usize> = mu.support().collect();
    let count = search.count(support.len());
    if count > MAX_TABLE_ENTRIES {
        return Err(Error::Resource(format!("{count} kernels at one law; lower n_A")));
    }
    let nx = model.spaces().n_states();
    let vals: Vec<f64> = (0..count as usize)
        .map(|k| q_rows(model, w, mu.weights(), &search.kernel(&support, nx, k)))
        .collect();
    let (best, k) = argmax_first(vals.iter().copied());
    Ok((best, search.kernel_measure(model, &support, k)))
}

fn q_rows(model: &MeanFieldModel, w: &ValueFunction, mu: &[f64], rows: &[Vec<f64>]) -> f64 {
    let step = lift_joint(model, &joint_of(mu, rows));
    let lambda0 = model.spaces().common_noise.weights();
    let cont: f64 = step
        .next
        .iter()
        .zip(lambda0)
        .filter(|(_, &l)| l > 0.0)
        .map(|(law, &l)| l * w.values[w.grid.project_weights(law)])
        .sum();
    step.reward + model.discount() * cont
}

/// `Q(μ, â) = f̂(μ, â) + β E[W(F̂(μ, â, ε⁰))]`.
pub fn q_value(model: &MeanFieldModel, w: &ValueFunction, mu: &DiscreteMeasure, a_hat: &ProbabilityKernel) -> Result<f64> {
    check_kernel(model, mu, a_hat)?;
    Ok(q_rows(model, w, mu.weights(), a_hat.rows()))
}

/// Rewards and projected successor nodes of every (node, kernel) pair, so
/// that a Bellman sweep is pure table arithmetic.
#[derive(Clone, Debug)]
pub struct LiftedTable {
    grid: Arc<SimplexGrid>,
    search: KernelSearchSpace,
    discount: f64,
    common: Vec<f64>,
    supports: Vec<Vec<usize>>,
    offsets: Vec<usize>,
    reward: Vec<f64>,
    next: Vec<u32>,
}

impl LiftedTable {
    pub fn build(model: &MeanFieldModel, grid: Arc<SimplexGrid>, search: KernelSearchSpace, exec: Execution) -> Result<Self> {
        check_same(grid.space(), model.state_space())?;
        if search.n_actions != model.spaces().n_actions() {
            return Err(Error::SpaceMismatch("kernel search space and model disagree on |A|".into()));
        }
        let supports: Vec<Vec<usize>> =
            (0..grid.len()).map(|i| grid.weights(i).iter().enumerate().filter(|(_, &w)| w > 0.0).map(|(x, _)| x).collect()).collect();
        let mut total: u128 = 0;
        let mut offsets = Vec::with_capacity(grid.len() + 1);
        offsets.push(0usize);
        for s in &supports {
            total = total.saturating_add(search.count(s.len()));
            if total > MAX_TABLE_ENTRIES {
                return Err(Error::Resource(format!(
                    "the kernel search space has more than {MAX_TABLE_ENTRIES} (node, kernel) pairs; lower n_eta or n_A"
                )));
            }
            offsets.push(total as usize);
        }
        let nx = model.spaces().n_states();
        let common = model.spaces().common_noise.weights().to_vec();
        let ne0 = common.len();
        let per_node: Vec<(Vec<f64>, Vec<u32>)> = exec.map_range(grid.len(), |i| {
            let mu = grid.weights(i);
            let count = offsets[i + 1] - offsets[i];
            let mut r = Vec::with_capacity(count);
            let mut n = Vec::with_capacity(count * ne0);
            for k in 0..count {
                let step = lift_joint(model, &joint_of(mu, &search.kernel(&supports[i], nx, k)));
                r.push(step.reward);
                for law in &step.next {
                    n.push(grid.project_weights(law) as u32);
                }
            }
            (r, n)
        });
        let mut reward = Vec::with_capacity(total as usize);
        let mut next = Vec::with_capacity(total as usize * ne0);
        for (r, n) in per_node {
            reward.extend(r);
            next.extend(n);
        }
        Ok(LiftedTable { grid, search, discount: model.discount(), common, supports, offsets, reward, next })
    }

    pub fn grid(&self) -> &Arc<SimplexGrid> {
        &self.grid
    }

    pub fn search(&self) -> &KernelSearchSpace {
        &self.search
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn kernels_at(&self, node: usize) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }

    pub fn len(&self) -> usize {
        self.reward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reward.is_empty()
    }

    pub fn support(&self, node: usize) -> &[usize] {
        &self.supports[node]
    }

    /// Rows of kernel `k` at `node`.
    pub fn kernel_rows(&self, node: usize, k: usize) -> Vec<Vec<f64>> {
        self.search.kernel(&self.supports[node], self.grid.space().len(), k)
    }

    /// `f̂` of kernel `k` at `node`.
    pub fn reward(&self, node: usize, k: usize) -> f64 {
        self.reward[self.offsets[node] + k]
    }

    /// Projected successor node of kernel `k` at `node` under `e0`.
    pub fn next_node(&self, node: usize, k: usize, e0: usize) -> usize {
        self.next[(self.offsets[node] + k) * self.common.len() + e0] as usize
    }

    /// `f̂ + β Σ λ⁰ W(next)` for kernel `k` at `node`.
    #[inline]
    pub fn q(&self, values: &[f64], node: usize, k: usize) -> f64 {
        let flat = self.offsets[node] + k;
        let ne0 = self.common.len();
        let mut cont = 0.0;
        for (e0, &l) in self.common.iter().enumerate() {
            if l > 0.0 {
                cont += l * values[self.next[flat * ne0 + e0] as usize];
            }
        }
        self.reward[flat] + self.discount * cont
    }

    /// `[T W](node)` and its first maximizer.
    pub fn apply(&self, values: &[f64], node: usize) -> (f64, usize) {
        argmax_first((0..self.kernels_at(node)).map(|k| self.q(values, node, k)))
    }

    /// One full sweep `W ↦ T W`, with argmax kernels.
    pub fn apply_all(&self, values: &[f64], exec: Execution) -> (Vec<f64>, Vec<usize>) {
        let out = exec.map_range(self.grid.len(), |i| self.apply(values, i));
        out.into_iter().unzip()
    }

    /// `[T^π W]` for the stationary table policy `choice[node] = kernel`.
    pub fn apply_policy(&self, values: &[f64], choice: &[usize], exec: Execution) -> Vec<f64> {
        exec.map_range(self.grid.len(), |i| self.q(values, i, choice[i]))
    }
}

/// A stationary randomized feedback policy on a simplex grid: the action
/// distribution of an agent at state `x` when the population sits at node
/// `μ`, with a quantile sampler `𝔞(μ, x, u)`.
#[derive(Clone, Debug)]
pub struct RandomizedFeedbackPolicy {
    pub grid: Arc<SimplexGrid>,
    /// `rows[node][x]`, a distribution on `A`.
    pub rows: Vec<Vec<Vec<f64>>>,
    /// Every row is a Dirac: the policy needs no randomizer.
    pub deterministic: bool,
    /// Declared suboptimality `ε / (1 − β)` in value units.
    pub suboptimality: f64,
}

impl RandomizedFeedbackPolicy {
    pub fn new(grid: Arc<SimplexGrid>, rows: Vec<Vec<Vec<f64>>>, suboptimality: f64) -> Result<Self> {
        if rows.len() != grid.len() {
            return Err(Error::Contract(format!("{} policy nodes for {} grid nodes", rows.len(), grid.len())));
        }
        let nx = grid.space().len();
        for (i, node) in rows.iter().enumerate() {
            if node.len() != nx {
                return Err(Error::Contract(format!("node {i} has {} rows, expected {nx}", node.len())));
            }
            for r in node {
                let s: f64 = r.iter().sum();
                if r.iter().any(|v| !(*v >= 0.0)) || (s - 1.0).abs() > 1e-9 {
                    return Err(Error::Contract(format!("node {i} has a row that is not a probability vector")));
                }
            }
        }
        let deterministic = rows.iter().flatten().all(|r| r.iter().filter(|&&v| v > 0.0).count() == 1);
        Ok(RandomizedFeedbackPolicy { grid, rows, deterministic, suboptimality })
    }

    /// Policy that plays the same kernel at every node.
    pub fn constant(grid: Arc<SimplexGrid>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = grid.len();
        Self::new(grid, vec![rows; n], f64::INFINITY)
    }

    pub fn row(&self, node: usize, x: usize) -> &[f64] {
        &self.rows[node][x]
    }

    /// `𝔞(node, x, u)`: the generalized inverse of the row's CDF at `u`,
    /// restricted to actions with positive mass.
    pub fn sample(&self, node: usize, x: usize, u: f64) -> usize {
        quantile(&self.rows[node][x], u)
    }

    pub fn kernel(&self, node: usize) -> &[Vec<f64>] {
        &self.rows[node]
    }
}

/// Smallest `a` with positive mass and `CDF(a) ≥ u`.
pub fn quantile(row: &[f64], u: f64) -> usize {
    let mut cum = 0.0;
    let mut last = 0;
    for (a, &p) in row.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        cum += p;
        last = a;
        if cum >= u {
            return a;
        }
    }
    last
}
