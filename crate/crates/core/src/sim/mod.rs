//! Monte Carlo engines: the N-agent interacting system and the
//! representative agent driven by the exact conditional law.
//!
//! Randomness comes from [`rng::Streams`]. Per replication `r`:
//!
//! * common noise `ε⁰_{t+1}`: lane [`rng::COMMON_LANE`], step `t + 1`, slot 0;
//! * agent `i` initial state `ξ^i`: lane `i`, step 0, slot 0;
//! * agent `i` noise `ε^i_{t+1}` and randomizer `U^i_t`: lane `i`, step
//!   `t + 1`, slots 0 and 1.
//!
//! The conditional law path is a deterministic function of the common-noise
//! path, so both engines compute it exactly. In the N-agent system each
//! agent also carries a shadow copy of its state that follows the limit
//! dynamics; the policy acts on the shadow state and the exact law, which
//! makes the action process an individualized open-loop control that does
//! not depend on `N`. The real state feels the empirical law.

pub mod chaos;
pub mod rng;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::lifted::{joint_of, lift_joint_tables, quantile, RandomizedFeedbackPolicy};
use crate::model::{InfoMode, InitialCondition, MeanFieldModel, StepTables};
use crate::spaces::{same_space, DiscreteMeasure};
use crate::transport::distance_weights;

pub use chaos::{chaos_experiment, empirical_measure_rate, fit_loglog, ChaosReport, ChaosRow, ChaosSample, LogLogFit};
use rng::{open_uniform, Purpose, Streams, COMMON_LANE};

/// One step of a scripted open-loop control.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptStep {
    /// The same action for everybody.
    Fixed(usize),
    /// Action indexed by the agent's most recent idiosyncratic noise.
    PreviousNoise(Vec<usize>),
}

/// `α_t` as an explicit function of the noise history: `steps[t]` for
/// `t < steps.len()`, then `tail` forever.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpenLoopScript {
    pub steps: Vec<ScriptStep>,
    pub tail: ScriptStep,
}

impl OpenLoopScript {
    pub fn step(&self, t: usize) -> &ScriptStep {
        self.steps.get(t).unwrap_or(&self.tail)
    }

    /// `prev_noise` is `None` at `t = 0`.
    pub fn action(&self, t: usize, prev_noise: Option<usize>) -> usize {
        match self.step(t) {
            ScriptStep::Fixed(a) => *a,
            ScriptStep::PreviousNoise(map) => map[prev_noise.expect("validated: no noise-dependent step at t = 0")],
        }
    }

    fn validate(&self, model: &MeanFieldModel) -> Result<()> {
        let (na, ne) = (model.spaces().n_actions(), model.spaces().n_idio());
        let first = self.step(0);
        if matches!(first, ScriptStep::PreviousNoise(_)) {
            return Err(Error::Contract("the first script step cannot depend on a previous noise".into()));
        }
        for s in self.steps.iter().chain(std::iter::once(&self.tail)) {
            match s {
                ScriptStep::Fixed(a) if *a >= na => {
                    return Err(Error::Domain(format!("script action {a} out of range")));
                }
                ScriptStep::PreviousNoise(map) if map.len() != ne || map.iter().any(|&a| a >= na) => {
                    return Err(Error::Domain(format!(
                        "noise map must list one action (< {na}) per idiosyncratic noise point ({ne})"
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub enum Policy {
    Feedback(RandomizedFeedbackPolicy),
    OpenLoop(OpenLoopScript),
}

impl Policy {
    pub fn is_deterministic(&self) -> bool {
        match self {
            Policy::Feedback(p) => p.deterministic,
            Policy::OpenLoop(_) => true,
        }
    }

    /// Checks spaces and the information structure.
    pub fn check(&self, model: &MeanFieldModel, init: &InitialCondition) -> Result<()> {
        if !same_space(init.law.space(), model.state_space()) {
            return Err(Error::SpaceMismatch("initial law does not live on the state space".into()));
        }
        match self {
            Policy::Feedback(p) => {
                if !same_space(p.grid.space(), model.state_space()) {
                    return Err(Error::SpaceMismatch("policy grid does not live on the model's state space".into()));
                }
                if p.rows.iter().flatten().any(|r| r.len() != model.spaces().n_actions()) {
                    return Err(Error::SpaceMismatch("policy rows do not match the action space".into()));
                }
                if init.info_mode == InfoMode::Trivial && !p.deterministic {
                    return Err(Error::PolicyInfo(
                        "randomized feedback needs an independent randomizer, but the initial information is trivial".into(),
                    ));
                }
                Ok(())
            }
            Policy::OpenLoop(s) => s.validate(model),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub agents: usize,
    pub horizon: usize,
    pub replications: usize,
    pub seed: u64,
    /// Agents of replication 0 whose trajectories are kept.
    pub record_agents: usize,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { agents: 1000, horizon: 20, replications: 100, seed: 0, record_agents: 0, exec: Execution::default() }
    }
}

impl RunConfig {
    fn validate(&self) -> Result<()> {
        if self.agents == 0 || self.horizon == 0 || self.replications == 0 {
            return Err(Error::Contract("agents, horizon and replications must all be at least 1".into()));
        }
        if self.agents as u64 >= COMMON_LANE || self.replications >= 1 << 24 {
            return Err(Error::Resource("agent or replication count exceeds the random stream address space".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentTrajectory {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
}

/// Mean over replications with a normal 95% interval and the truncation
/// tail `β^T ‖f‖∞ / (1 − β)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainEstimate {
    pub mean: f64,
    pub std_dev: f64,
    pub ci_half_width: f64,
    pub tail_bound: f64,
    pub replications: usize,
}

impl GainEstimate {
    pub fn from_samples(samples: &[f64], tail_bound: f64) -> Self {
        let (mean, std_dev, ci_half_width) = mean_ci(samples);
        GainEstimate { mean, std_dev, ci_half_width, tail_bound, replications: samples.len() }
    }
}

/// `(mean, sample std, 1.96 · std / √R)`; the interval is zero for one sample.
pub fn mean_ci(samples: &[f64]) -> (f64, f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0, 0.0);
    }
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt(), 1.96 * var.sqrt() / n.sqrt())
}

/// Exact conditional laws along one common-noise path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LawPath {
    pub common_noise: Vec<usize>,
    /// `μ_t`, `t = 0..=T`.
    pub states: Vec<Vec<f64>>,
    /// `ν_t = ℙ⁰_{(X_t, α_t)}` on `X × A`, `t < T`.
    pub joints: Vec<Vec<f64>>,
    /// `E⁰[f(X_t, α_t, ν_t)]`.
    pub rewards: Vec<f64>,
    /// Policy node used at each step (feedback policies only).
    pub nodes: Vec<usize>,
}

impl LawPath {
    pub fn gain(&self, discount: f64) -> f64 {
        discounted(&self.rewards, discount)
    }
}

fn discounted(rewards: &[f64], discount: f64) -> f64 {
    let mut acc = 0.0;
    let mut b = 1.0;
    for r in rewards {
        acc += b * r;
        b *= discount;
    }
    acc
}

fn common_path(model: &MeanFieldModel, streams: &Streams, replication: usize, horizon: usize) -> Vec<usize> {
    let w = model.spaces().common_noise.weights();
    (0..horizon)
        .map(|t| {
            if w.len() == 1 {
                return 0;
            }
            let mut r = streams.at(replication as u64, COMMON_LANE, t as u64 + 1);
            quantile(w, open_uniform(&mut r))
        })
        .collect()
}

/// Propagates the conditional law exactly along `common`, returning the
/// path and the frozen tables `F(·, ·, ν_t, ·, ·)` for each step.
pub fn propagate_law(
    model: &MeanFieldModel,
    policy: &Policy,
    init: &DiscreteMeasure,
    common: &[usize],
) -> Result<(LawPath, Vec<StepTables>)> {
    let sp = model.spaces();
    let (nx, na, ne) = (sp.n_states(), sp.n_actions(), sp.n_idio());
    let lambda = sp.idio_noise.weights();
    let horizon = common.len();
    let mut path = LawPath {
        common_noise: common.to_vec(),
        states: vec![init.weights().to_vec()],
        joints: Vec::with_capacity(horizon),
        rewards: Vec::with_capacity(horizon),
        nodes: Vec::new(),
    };
    let mut tables = Vec::with_capacity(horizon);
    match policy {
        Policy::Feedback(p) => {
            for &e0 in common {
                let mu = path.states.last().expect("nonempty");
                let node = p.grid.project_weights(mu);
                let joint = joint_of(mu, p.kernel(node));
                let (step, t) = lift_joint_tables(model, &joint);
                path.nodes.push(node);
                path.rewards.push(step.reward);
                path.joints.push(joint);
                path.states.push(step.next[e0].clone());
                tables.push(t);
            }
        }
        Policy::OpenLoop(script) => {
            // Law of (x, previous noise) with `ne` meaning "none yet".
            let width = ne + 1;
            let mut aug = vec![0.0; nx * width];
            for (x, &m) in init.weights().iter().enumerate() {
                aug[x * width + ne] = m;
            }
            for (t, &e0) in common.iter().enumerate() {
                let act = |k: usize| script.action(t, (k < ne).then_some(k));
                let mut joint = vec![0.0; nx * na];
                for x in 0..nx {
                    for k in 0..width {
                        let m = aug[x * width + k];
                        if m > 0.0 {
                            joint[x * na + act(k)] += m;
                        }
                    }
                }
                let (step, tab) = lift_joint_tables(model, &joint);
                let mut next = vec![0.0; nx * width];
                for x in 0..nx {
                    for k in 0..width {
                        let m = aug[x * width + k];
                        if m <= 0.0 {
                            continue;
                        }
                        let a = act(k);
                        for (e, &l) in lambda.iter().enumerate() {
                            let y = tab.next[sp.next_index(x, a, e, e0)];
                            next[y * width + e] += m * l;
                        }
                    }
                }
                aug = next;
                let mu: Vec<f64> = (0..nx).map(|x| aug[x * width..(x + 1) * width].iter().sum()).collect();
                path.rewards.push(step.reward);
                path.joints.push(joint);
                path.states.push(mu);
                tables.push(tab);
            }
        }
    }
    Ok((path, tables))
}

#[derive(Clone, Copy, Debug, Default)]
struct Agent {
    x: usize,
    shadow: usize,
    prev_noise: Option<usize>,
    action: usize,
    noise: usize,
}

/// Per-replication output of the N-agent engine.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub gain: f64,
    /// Time average of `W(ν^N_t, ν_t)` on `X × A`, empirical vs exact.
    pub w_distance: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NAgentRun {
    pub config: RunConfig,
    pub gain: GainEstimate,
    pub replications: Vec<Replication>,
    /// Recorded agents of replication 0.
    pub trajectories: Vec<AgentTrajectory>,
    /// Empirical joint laws of replication 0, one per step.
    pub empirical_joints: Vec<Vec<f64>>,
    /// Exact law path of replication 0.
    pub law_path: LawPath,
}

struct RepOut {
    rep: Replication,
    trajectories: Vec<AgentTrajectory>,
    joints: Vec<Vec<f64>>,
    path: Option<LawPath>,
}

/// Simulates the N-agent system `R` times.
pub fn simulate_n_agent(
    model: &MeanFieldModel,
    policy: &Policy,
    init: &InitialCondition,
    cfg: &RunConfig,
) -> Result<NAgentRun> {
    cfg.validate()?;
    policy.check(model, init)?;
    let streams = Streams::new(cfg.seed, Purpose::Dynamics);
    let outs = cfg.exec.map_range(cfg.replications, |r| run_replication(model, policy, init, cfg, &streams, r));
    let mut reps = Vec::with_capacity(outs.len());
    let mut trajectories = Vec::new();
    let mut joints = Vec::new();
    let mut law_path = None;
    for (r, out) in outs.into_iter().enumerate() {
        let out = out?;
        if r == 0 {
            trajectories = out.trajectories;
            joints = out.joints;
            law_path = out.path;
        }
        reps.push(out.rep);
    }
    let gains: Vec<f64> = reps.iter().map(|r| r.gain).collect();
    Ok(NAgentRun {
        config: *cfg,
        gain: GainEstimate::from_samples(&gains, model.tail_bound(cfg.horizon)),
        replications: reps,
        trajectories,
        empirical_joints: joints,
        law_path: law_path.expect("at least one replication"),
    })
}

fn run_replication(
    model: &MeanFieldModel,
    policy: &Policy,
    init: &InitialCondition,
    cfg: &RunConfig,
    streams: &Streams,
    r: usize,
) -> Result<RepOut> {
    let sp = model.spaces();
    let (na, n) = (sp.n_actions(), cfg.agents);
    let lambda = sp.idio_noise.weights();
    let joint_space = sp.product.joint().clone();
    let common = common_path(model, streams, r, cfg.horizon);
    let (path, limit_tables) = propagate_law(model, policy, &init.law, &common)?;
    let mu0 = init.law.weights();
    let rep = r as u64;

    let mut agents: Vec<Agent> = cfg.exec.map_range(n, |i| {
        let x = quantile(mu0, open_uniform(&mut streams.at(rep, i as u64, 0)));
        Agent { x, shadow: x, ..Agent::default() }
    });
    let record = if r == 0 { cfg.record_agents.min(n) } else { 0 };
    let mut trajectories = vec![AgentTrajectory::default(); record];
    let mut joints = Vec::new();
    let (mut gain, mut w_sum, mut disc) = (0.0, 0.0, 1.0);
    let inv_n = 1.0 / n as f64;

    for t in 0..cfg.horizon {
        let e0 = common[t];
        let node = path.nodes.get(t).copied();
        cfg.exec.for_each_mut(&mut agents, |i, ag| {
            let mut g = streams.at(rep, i as u64, t as u64 + 1);
            ag.noise = quantile(lambda, open_uniform(&mut g));
            let u = open_uniform(&mut g);
            ag.action = match policy {
                Policy::Feedback(p) => p.sample(node.expect("feedback path records nodes"), ag.shadow, u),
                Policy::OpenLoop(s) => s.action(t, ag.prev_noise),
            };
        });
        let mut counts = vec![0u64; sp.product.joint().len()];
        for ag in &agents {
            counts[ag.x * na + ag.action] += 1;
        }
        let emp: Vec<f64> = counts.iter().map(|&c| c as f64 * inv_n).collect();
        let tables = model.step_tables(&DiscreteMeasure::normalized(joint_space.clone(), emp.clone()));
        let mean_reward: f64 = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(j, &c)| c as f64 * tables.reward[j])
            .sum::<f64>()
            * inv_n;
        gain += disc * mean_reward;
        disc *= model.discount();
        w_sum += distance_weights(&joint_space, &emp, &path.joints[t]);
        for (k, tr) in trajectories.iter_mut().enumerate() {
            let ag = &agents[k];
            tr.states.push(ag.x);
            tr.actions.push(ag.action);
            tr.rewards.push(tables.reward[ag.x * na + ag.action]);
        }
        if r == 0 {
            joints.push(emp);
        }
        let limit = &limit_tables[t];
        cfg.exec.for_each_mut(&mut agents, |_, ag| {
            ag.x = tables.next[sp.next_index(ag.x, ag.action, ag.noise, e0)];
            ag.shadow = limit.next[sp.next_index(ag.shadow, ag.action, ag.noise, e0)];
            ag.prev_noise = Some(ag.noise);
        });
    }
    Ok(RepOut {
        rep: Replication { gain, w_distance: w_sum / cfg.horizon as f64 },
        trajectories,
        joints,
        path: (r == 0).then_some(path),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MkvRun {
    pub config: RunConfig,
    pub gain: GainEstimate,
    /// Exact gain of each common-noise path.
    pub path_gains: Vec<f64>,
    pub law_paths: Vec<LawPath>,
    /// Agent 0 of replication 0, fed the exact law.
    pub representative: AgentTrajectory,
}

/// The limit system: one exact law path per replication's common-noise
/// path (the same paths [`simulate_n_agent`] uses for the same seed).
pub fn simulate_mkv(model: &MeanFieldModel, policy: &Policy, init: &InitialCondition, cfg: &RunConfig) -> Result<MkvRun> {
    cfg.validate()?;
    policy.check(model, init)?;
    let streams = Streams::new(cfg.seed, Purpose::Dynamics);
    let sp = model.spaces();
    let results = cfg.exec.map_range(cfg.replications, |r| {
        let common = common_path(model, &streams, r, cfg.horizon);
        propagate_law(model, policy, &init.law, &common)
    });
    let mut law_paths = Vec::with_capacity(cfg.replications);
    let mut representative = AgentTrajectory::default();
    for (r, res) in results.into_iter().enumerate() {
        let (path, tables) = res?;
        if r == 0 {
            let mut g0 = streams.at(0, 0, 0);
            let mut x = quantile(init.law.weights(), open_uniform(&mut g0));
            let mut prev = None;
            for t in 0..cfg.horizon {
                let mut g = streams.at(0, 0, t as u64 + 1);
                let e = quantile(sp.idio_noise.weights(), open_uniform(&mut g));
                let u = open_uniform(&mut g);
                let a = match policy {
                    Policy::Feedback(p) => p.sample(path.nodes[t], x, u),
                    Policy::OpenLoop(s) => s.action(t, prev),
                };
                representative.states.push(x);
                representative.actions.push(a);
                representative.rewards.push(tables[t].reward[x * sp.n_actions() + a]);
                x = tables[t].next[sp.next_index(x, a, e, path.common_noise[t])];
                prev = Some(e);
            }
        }
        law_paths.push(path);
    }
    let path_gains: Vec<f64> = law_paths.iter().map(|p| p.gain(model.discount())).collect();
    Ok(MkvRun {
        config: *cfg,
        gain: GainEstimate::from_samples(&path_gains, model.tail_bound(cfg.horizon)),
        path_gains,
        law_paths,
        representative,
    })
}

/// Builtin scripted policies. `ex4_2` plays `+1`, then the sign of the
/// first noise, then `+1` forever.
pub fn builtin_script(name: &str, model: &MeanFieldModel) -> Result<OpenLoopScript> {
    let sp = model.spaces();
    let plus = sp.action.index_of("1").ok_or_else(|| Error::Model("script needs an action labelled 1".into()))?;
    match name {
        "ex4_2" => {
            let map = (0..sp.n_idio())
                .map(|e| {
                    sp.action
                        .index_of(sp.idio_noise.space().label(e))
                        .ok_or_else(|| Error::Model("ex4_2 script needs noise labels that are actions".into()))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(OpenLoopScript {
                steps: vec![ScriptStep::Fixed(plus), ScriptStep::PreviousNoise(map)],
                tail: ScriptStep::Fixed(plus),
            })
        }
        "constant" => Ok(OpenLoopScript { steps: Vec::new(), tail: ScriptStep::Fixed(plus) }),
        other => Err(Error::Contract(format!("unknown builtin script `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_example, ExampleOptions};
    use crate::solver::{solve, Method, SolverConfig};
    use std::sync::Arc;

    fn cfg(agents: usize, horizon: usize, replications: usize) -> RunConfig {
        RunConfig { agents, horizon, replications, seed: 7, record_agents: 2, exec: Execution::Sequential }
    }

    fn constant_feedback(model: &MeanFieldModel, a: usize) -> Policy {
        let grid = Arc::new(crate::grid::SimplexGrid::build(model.state_space().clone(), 2).unwrap());
        let mut row = vec![0.0; model.spaces().n_actions()];
        row[a] = 1.0;
        let rows = vec![row; model.spaces().n_states()];
        Policy::Feedback(RandomizedFeedbackPolicy::constant(grid, rows).unwrap())
    }

    #[test]
    fn ex4_1_constant_action_is_worst_gain() {
        let (m, init) = builtin_example("ex4_1", &ExampleOptions::default()).unwrap();
        let p = constant_feedback(&m, 1);
        let t = 12;
        let expected: f64 = -(0..t).map(|k| 0.5f64.powi(k as i32) * 0.5).sum::<f64>();
        for n in [1, 5, 40] {
            let run = simulate_n_agent(&m, &p, &init, &cfg(n, t, 3)).unwrap();
            assert!((run.gain.mean - expected).abs() < 1e-12);
            assert_eq!(run.gain.ci_half_width, 0.0);
        }
        let mkv = simulate_mkv(&m, &p, &init, &cfg(1, t, 2)).unwrap();
        assert!((mkv.gain.mean - expected).abs() < 1e-12);
    }

    #[test]
    fn trivial_info_rejects_randomized_policy() {
        let (m, init) = builtin_example("ex4_1", &ExampleOptions::default()).unwrap();
        let grid = Arc::new(crate::grid::SimplexGrid::build(m.state_space().clone(), 2).unwrap());
        let p = RandomizedFeedbackPolicy::constant(grid, vec![vec![0.5, 0.5]; 2]).unwrap();
        let err = simulate_n_agent(&m, &Policy::Feedback(p), &init, &cfg(10, 3, 1)).unwrap_err();
        assert!(matches!(err, Error::PolicyInfo(_)));
    }

    #[test]
    fn script_reaches_bernoulli_law() {
        let (m, init) = builtin_example("ex4_2", &ExampleOptions::default()).unwrap();
        let s = builtin_script("ex4_2", &m).unwrap();
        let mkv = simulate_mkv(&m, &Policy::OpenLoop(s), &init, &cfg(1, 30, 1)).unwrap();
        // -1/2 - β/2, then zero reward.
        assert!((mkv.gain.mean + 0.75).abs() < 1e-12, "{}", mkv.gain.mean);
        let path = &mkv.law_paths[0];
        assert!((path.states[2][0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ex4_3_policy_in_mkv_and_particles() {
        let (m, init) = builtin_example("ex4_3", &ExampleOptions::default()).unwrap();
        let sol = solve(&m, &SolverConfig::default(), Method::Value).unwrap();
        let p = Policy::Feedback(sol.policy.clone());
        let mkv = simulate_mkv(&m, &p, &init, &cfg(1, 20, 1)).unwrap();
        let path = &mkv.law_paths[0];
        assert!((path.rewards[0] + 0.5).abs() < 1e-12);
        assert!(path.rewards[1..].iter().all(|r| r.abs() < 1e-12));
        assert!((mkv.gain.mean + 0.5).abs() < 1e-12);

        let run = simulate_n_agent(&m, &p, &init, &cfg(2000, 12, 20)).unwrap();
        assert!((run.gain.mean + 0.5).abs() < 0.05, "{:?}", run.gain);
        assert!(run.gain.mean <= -0.5 + 1e-12);
        assert_eq!(run.trajectories.len(), 2);
        assert_eq!(run.trajectories[0].states.len(), 12);
        assert_eq!(run.empirical_joints.len(), 12);
    }

    #[test]
    fn results_do_not_depend_on_execution() {
        let (m, init) = builtin_example("ex4_3", &ExampleOptions::default()).unwrap();
        let sol = solve(&m, &SolverConfig::default(), Method::Value).unwrap();
        let p = Policy::Feedback(sol.policy);
        let mut c = cfg(300, 6, 8);
        let a = simulate_n_agent(&m, &p, &init, &c).unwrap();
        c.exec = Execution::Parallel;
        let b = simulate_n_agent(&m, &p, &init, &c).unwrap();
        assert_eq!(a.replications, b.replications);
        assert_eq!(a.trajectories, b.trajectories);
    }

    #[test]
    fn single_agent_matches_hand_rolled_chain() {
        let (m, init) = builtin_example("ex4_3", &ExampleOptions::default()).unwrap();
        let p = constant_feedback(&m, 0);
        let run = simulate_n_agent(&m, &p, &init, &cfg(1, 5, 1)).unwrap();
        let tr = &run.trajectories[0];
        // always a = -1: the state alternates 1, -1, 1, ...
        let xs: Vec<usize> = (0..5).map(|t| if t % 2 == 0 { 1 } else { 0 }).collect();
        assert_eq!(tr.states, xs);
        assert!(tr.rewards.iter().all(|r| (*r + 0.5).abs() < 1e-12));
    }
}
