//! Fixed points of the lifted Bellman operator on a quantized simplex.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::grid::SimplexGrid;
use crate::lifted::{KernelFamily, KernelSearchSpace, LiftedTable, RandomizedFeedbackPolicy, ValueFunction, ARGMAX_TIE};
use crate::model::{estimate_lipschitz, holder_constant, holder_modulus, LipschitzEstimate, MeanFieldModel};
use crate::spaces::{DiscreteMeasure, SpaceRef};

pub const DEFAULT_MAX_ITERATIONS: usize = 10_000;

/// Slack on the per-step contraction check, relative to the value scale.
const CONTRACTION_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Value,
    Policy,
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub n_eta: usize,
    /// Kernel-row lattice resolution `n_A`; ignored when `feedback_only`.
    pub n_actions_grid: usize,
    pub tol: f64,
    /// Restrict the sup to deterministic feedback `X → A`.
    pub feedback_only: bool,
    pub max_iterations: usize,
    pub lipschitz_samples: usize,
    pub seed: u64,
    pub exec: Execution,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            n_eta: 10,
            n_actions_grid: 10,
            tol: 1e-6,
            feedback_only: false,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            lipschitz_samples: 200,
            seed: 0,
            exec: Execution::default(),
        }
    }
}

impl SolverConfig {
    pub fn family(&self) -> KernelFamily {
        if self.feedback_only {
            KernelFamily::Deterministic
        } else {
            KernelFamily::Randomized { steps: self.n_actions_grid }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveReport {
    pub method: Method,
    pub family: KernelFamily,
    pub n_eta: usize,
    pub nodes: usize,
    pub table_entries: usize,
    pub tol: f64,
    /// Value-iteration sweeps, or total evaluation sweeps for policy iteration.
    pub iterations: usize,
    /// Outer improvement steps (policy iteration only).
    pub improvements: usize,
    /// Last `‖V_{n+1} − V_n‖∞` of the stopping loop.
    pub residual: f64,
    /// `‖T V − V‖∞` of the returned values.
    pub bellman_residual: f64,
    /// Bound on `‖V − V⋆_grid‖∞` from the contraction argument.
    pub iteration_bound: f64,
    pub covering_radius: f64,
    pub lipschitz: LipschitzEstimate,
    /// `K⋆`; `None` when the supremum defining it is infinite.
    pub holder_constant: Option<f64>,
    /// `H(η) / (1 − β)`: quantization error of the value.
    pub grid_bound: f64,
    /// `grid_bound + iteration_bound`.
    pub error_bound: f64,
    /// Declared suboptimality of the greedy policy, `ε / (1 − β)`.
    pub policy_suboptimality: f64,
    pub residual_history: Vec<f64>,
    /// Not serialized, so that saved reports are reproducible byte for byte.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub values: ValueFunction,
    pub policy: RandomizedFeedbackPolicy,
    /// Kernel index chosen at each node, in the table's enumeration.
    pub choice: Vec<usize>,
    pub table: Arc<LiftedTable>,
    pub report: SolveReport,
}

impl Solution {
    /// `V⋆` at the node nearest to `mu`.
    pub fn value_at(&self, mu: &DiscreteMeasure) -> Result<f64> {
        self.values.eval(mu)
    }
}

pub fn build_grid(space: SpaceRef, n_eta: usize) -> Result<SimplexGrid> {
    SimplexGrid::build(space, n_eta)
}

pub fn project_to_grid(mu: &DiscreteMeasure, grid: &SimplexGrid) -> Result<usize> {
    grid.project(mu)
}

/// Builds the lifted table for a config.
pub fn build_table(model: &MeanFieldModel, cfg: &SolverConfig) -> Result<LiftedTable> {
    let grid = Arc::new(build_grid(model.state_space().clone(), cfg.n_eta)?);
    let search = KernelSearchSpace::new(cfg.family(), model.spaces().n_actions())?;
    LiftedTable::build(model, grid, search, cfg.exec)
}

fn stop_threshold(tol: f64, beta: f64) -> f64 {
    if beta == 0.0 {
        f64::INFINITY
    } else {
        tol * (1.0 - beta) / beta
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn scale(v: &[f64]) -> f64 {
    v.iter().fold(1.0f64, |m, x| m.max(x.abs()))
}

/// Outcome of iterating a contraction on the table.
#[derive(Clone, Debug)]
pub struct Iterates {
    pub values: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub history: Vec<f64>,
}

/// Iterates `V ← op(V)` from `start` until `‖V_{n+1} − V_n‖∞ ≤ tol (1 − β)/β`,
/// asserting the per-step decay `r_{n+1} ≤ β r_n`.
fn iterate_contraction(
    start: Vec<f64>,
    tol: f64,
    beta: f64,
    max_iterations: usize,
    mut op: impl FnMut(&[f64]) -> Vec<f64>,
) -> Result<Iterates> {
    let threshold = stop_threshold(tol, beta);
    let mut v = start;
    let mut history = Vec::new();
    for n in 1..=max_iterations {
        let next = op(&v);
        let r = sup_diff(&next, &v);
        if let Some(&prev) = history.last() {
            if r > beta * prev + CONTRACTION_SLACK * scale(&next) {
                return Err(Error::Invariant(format!(
                    "residual grew from {prev:e} to {r:e} at iteration {n}; the operator is not a {beta}-contraction"
                )));
            }
        }
        history.push(r);
        v = next;
        if r <= threshold {
            return Ok(Iterates { values: v, iterations: n, residual: r, history });
        }
    }
    Err(Error::Convergence(format!(
        "no convergence after {max_iterations} iterations (residual {:e})",
        history.last().copied().unwrap_or(f64::NAN)
    )))
}

/// Value iteration on a prebuilt table from `V₀ ≡ 0`.
pub fn value_iteration_table(table: &LiftedTable, tol: f64, max_iterations: usize, exec: Execution) -> Result<Iterates> {
    if !(tol > 0.0) {
        return Err(Error::Contract("tol must be positive".into()));
    }
    let start = vec![0.0; table.grid().len()];
    iterate_contraction(start, tol, table.discount(), max_iterations, |v| table.apply_all(v, exec).0)
}

/// Exact evaluation of a stationary table policy to within `tol`, warm
/// started from `start`.
pub fn evaluate_table_policy(
    table: &LiftedTable,
    choice: &[usize],
    start: Vec<f64>,
    tol: f64,
    max_iterations: usize,
    exec: Execution,
) -> Result<Iterates> {
    iterate_contraction(start, tol, table.discount(), max_iterations, |v| table.apply_policy(v, choice, exec))
}

/// Greedy kernels for `values` and the Bellman residual `‖T V − V‖∞`.
pub fn greedy(table: &LiftedTable, values: &[f64], exec: Execution) -> (Vec<usize>, f64) {
    let (tv, choice) = table.apply_all(values, exec);
    (choice, sup_diff(&tv, values))
}

/// The greedy policy of `values` as per-node kernel rows.
pub fn extract_policy(table: &LiftedTable, values: &[f64], suboptimality: f64, exec: Execution) -> Result<(RandomizedFeedbackPolicy, Vec<usize>)> {
    let (choice, _) = greedy(table, values, exec);
    let rows = (0..table.grid().len()).map(|i| table.kernel_rows(i, choice[i])).collect();
    Ok((RandomizedFeedbackPolicy::new(table.grid().clone(), rows, suboptimality)?, choice))
}

struct Bounds {
    lipschitz: LipschitzEstimate,
    holder_constant: Option<f64>,
    grid_bound: f64,
    step_grid_error: f64,
}

fn grid_bounds(model: &MeanFieldModel, grid: &SimplexGrid, cfg: &SolverConfig) -> Result<Bounds> {
    let est = estimate_lipschitz(model, cfg.lipschitz_samples.max(1), cfg.seed)?;
    let beta = model.discount();
    let diam = model.state_space().diameter();
    let h = holder_modulus(&est, beta, diam, grid.covering_radius());
    Ok(Bounds {
        lipschitz: est,
        holder_constant: holder_constant(&est, beta, diam),
        grid_bound: h / (1.0 - beta),
        step_grid_error: h,
    })
}

#[allow(clippy::too_many_arguments)]
fn finish(
    model: &MeanFieldModel,
    cfg: &SolverConfig,
    table: Arc<LiftedTable>,
    method: Method,
    values: Vec<f64>,
    iterations: usize,
    improvements: usize,
    residual: f64,
    iteration_bound: f64,
    history: Vec<f64>,
    started: Instant,
) -> Result<Solution> {
    let beta = model.discount();
    let bounds = grid_bounds(model, table.grid(), cfg)?;
    let (choice, bellman_residual) = greedy(&table, &values, cfg.exec);
    // Greedy w.r.t. V with ‖V − V⋆‖ ≤ δ satisfies V⋆ ≤ T^π V⋆ + 2βδ on the
    // grid; the quantization adds H(η) on each side of that comparison.
    let epsilon = 2.0 * beta * iteration_bound + 2.0 * bounds.step_grid_error;
    let rows = (0..table.grid().len()).map(|i| table.kernel_rows(i, choice[i])).collect();
    let policy = RandomizedFeedbackPolicy::new(table.grid().clone(), rows, epsilon / (1.0 - beta))?;
    let grid = table.grid().clone();
    let report = SolveReport {
        method,
        family: table.search().family(),
        n_eta: grid.steps(),
        nodes: grid.len(),
        table_entries: table.len(),
        tol: cfg.tol,
        iterations,
        improvements,
        residual,
        bellman_residual,
        iteration_bound,
        covering_radius: grid.covering_radius(),
        lipschitz: bounds.lipschitz,
        holder_constant: bounds.holder_constant,
        grid_bound: bounds.grid_bound,
        error_bound: bounds.grid_bound + iteration_bound,
        policy_suboptimality: epsilon / (1.0 - beta),
        residual_history: history,
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    Ok(Solution { values: ValueFunction::new(grid, values)?, policy, choice, table, report })
}

pub fn value_iteration(model: &MeanFieldModel, cfg: &SolverConfig) -> Result<Solution> {
    let started = Instant::now();
    let table = Arc::new(build_table(model, cfg)?);
    value_iteration_on(model, cfg, table, started)
}

/// Value iteration reusing an existing table.
pub fn value_iteration_on(model: &MeanFieldModel, cfg: &SolverConfig, table: Arc<LiftedTable>, started: Instant) -> Result<Solution> {
    let it = value_iteration_table(&table, cfg.tol, cfg.max_iterations, cfg.exec)?;
    let beta = model.discount();
    let iteration_bound = if beta == 0.0 { 0.0 } else { it.residual * beta / (1.0 - beta) };
    finish(model, cfg, table, Method::Value, it.values, it.iterations, 0, it.residual, iteration_bound, it.history, started)
}

pub fn policy_iteration(model: &MeanFieldModel, cfg: &SolverConfig) -> Result<Solution> {
    let started = Instant::now();
    let table = Arc::new(build_table(model, cfg)?);
    let start = vec![0; table.grid().len()];
    policy_iteration_on(model, cfg, table, start, started)
}

/// Policy iteration from the table policy `choice`. Evaluations are warm
/// started and accurate to `tol (1 − β) / 10`; a node switches kernel only
/// when the gain exceeds `tol (1 − β) / 10`, and the loop ends when no node
/// switches.
pub fn policy_iteration_on(
    model: &MeanFieldModel,
    cfg: &SolverConfig,
    table: Arc<LiftedTable>,
    mut choice: Vec<usize>,
    started: Instant,
) -> Result<Solution> {
    if !(cfg.tol > 0.0) {
        return Err(Error::Contract("tol must be positive".into()));
    }
    if choice.len() != table.grid().len() || choice.iter().enumerate().any(|(i, &k)| k >= table.kernels_at(i)) {
        return Err(Error::Contract("initial policy does not fit the kernel table".into()));
    }
    let beta = model.discount();
    let eval_tol = cfg.tol * (1.0 - beta) / 10.0;
    let switch = cfg.tol * (1.0 - beta) / 10.0;
    let mut values = vec![0.0; table.grid().len()];
    let mut sweeps = 0;
    let mut history = Vec::new();
    let mut first = true;
    for outer in 0..cfg.max_iterations {
        let ev = evaluate_table_policy(&table, &choice, values.clone(), eval_tol, cfg.max_iterations, cfg.exec)?;
        sweeps += ev.iterations;
        if !first {
            let slack = 2.0 * eval_tol + CONTRACTION_SLACK * scale(&ev.values);
            if let Some(i) = (0..values.len()).find(|&i| ev.values[i] < values[i] - slack) {
                return Err(Error::Invariant(format!(
                    "policy iteration decreased the value at node {i}: {} -> {}",
                    values[i], ev.values[i]
                )));
            }
        }
        first = false;
        values = ev.values;
        let (tv, greedy_choice) = table.apply_all(&values, cfg.exec);
        history.push(sup_diff(&tv, &values));
        let mut changed = 0;
        for i in 0..values.len() {
            let current = table.q(&values, i, choice[i]);
            if tv[i] > current + switch.max(ARGMAX_TIE) {
                choice[i] = greedy_choice[i];
                changed += 1;
            }
        }
        if changed == 0 {
            // ‖T V − V‖ ≤ switch + (1 + β)·eval_tol, so ‖V − V⋆‖ ≤ that / (1 − β).
            let b = *history.last().unwrap();
            let iteration_bound = b / (1.0 - beta);
            let residual = ev.residual;
            return finish(model, cfg, table, Method::Policy, values, sweeps, outer, residual, iteration_bound, history, started);
        }
    }
    Err(Error::Convergence(format!("policy iteration did not stabilize in {} improvement steps", cfg.max_iterations)))
}

pub fn solve(model: &MeanFieldModel, cfg: &SolverConfig, method: Method) -> Result<Solution> {
    match method {
        Method::Value => value_iteration(model, cfg),
        Method::Policy => policy_iteration(model, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_example, ExampleOptions};
    use crate::transport::distance;

    fn quick(feedback_only: bool) -> SolverConfig {
        SolverConfig { feedback_only, exec: Execution::Sequential, tol: 1e-8, lipschitz_samples: 20, ..Default::default() }
    }

    #[test]
    fn flip_feedback_value() {
        let (m, init) = builtin_example("ex4_1", &ExampleOptions::default()).unwrap();
        let sol = value_iteration(&m, &quick(true)).unwrap();
        let v = sol.value_at(&init.law).unwrap();
        assert!((v + 1.0).abs() < 1e-7, "{v}");
        let pi = policy_iteration(&m, &quick(true)).unwrap();
        assert!((pi.value_at(&init.law).unwrap() + 1.0).abs() < 1e-7);
        assert!(sol.policy.deterministic);
    }

    #[test]
    fn rich_value_matches_closed_form() {
        let (m, init) = builtin_example("ex4_3", &ExampleOptions::default()).unwrap();
        let sol = value_iteration(&m, &quick(false)).unwrap();
        assert!((sol.value_at(&init.law).unwrap() + 0.5).abs() < 1e-7);
        let b = DiscreteMeasure::uniform(m.state_space().clone());
        for i in 0..sol.values.grid.len() {
            let mu = sol.values.grid.measure(i);
            assert!((sol.values.values[i] + distance(&mu, &b).unwrap()).abs() < 1e-7, "node {i}");
        }
        assert!(sol.report.bellman_residual <= 1e-8);
        let d1 = sol.values.grid.project(&init.law).unwrap();
        assert_eq!(sol.policy.row(d1, 1), &[0.5, 0.5]);
        let pi = policy_iteration(&m, &quick(false)).unwrap();
        assert!(sol.values.sup_distance(&pi.values) <= 2e-8);
    }

    #[test]
    fn constant_reward_and_myopic() {
        let mut cfg = crate::model::examples::example_config("ex4_3", &ExampleOptions::default()).unwrap();
        cfg.reward.expr = "2".into();
        cfg.reward.bound = None;
        let (m, _) = cfg.build().unwrap();
        let sol = value_iteration(&m, &quick(false)).unwrap();
        assert!(sol.values.values.iter().all(|v| (v - 4.0).abs() < 1e-7));

        let (m, _) = builtin_example("ex4_3", &ExampleOptions { discount: 0.0, resolution: 11 }).unwrap();
        let sol = value_iteration(&m, &quick(false)).unwrap();
        assert_eq!(sol.report.iterations, 1);
        let b = DiscreteMeasure::uniform(m.state_space().clone());
        for i in 0..sol.values.grid.len() {
            assert!((sol.values.values[i] + distance(&sol.values.grid.measure(i), &b).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn policy_iteration_from_optimum_does_not_improve() {
        let (m, _) = builtin_example("ex4_3", &ExampleOptions::default()).unwrap();
        let cfg = quick(false);
        let vi = value_iteration(&m, &cfg).unwrap();
        let pi = policy_iteration_on(&m, &cfg, vi.table.clone(), vi.choice.clone(), Instant::now()).unwrap();
        assert_eq!(pi.report.improvements, 0);
        assert_eq!(pi.choice, vi.choice);
    }

    #[test]
    fn execution_modes_agree_bitwise() {
        let (m, _) = builtin_example("ex4_3", &ExampleOptions::default()).unwrap();
        let a = value_iteration(&m, &quick(false)).unwrap();
        let b = value_iteration(&m, &SolverConfig { exec: Execution::Parallel, ..quick(false) }).unwrap();
        assert_eq!(a.values.values, b.values.values);
        assert_eq!(a.choice, b.choice);
    }
}
