use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use mfmdp::artifact::SolverArtifact;
use mfmdp::evaluate::{evaluate, EvalTarget, Evaluation};
use mfmdp::model::{example_config, ExampleOptions, InitialCondition, MeanFieldModel, ModelConfig, EXAMPLE_NAMES};
use mfmdp::sim::{builtin_script, chaos_experiment, simulate_mkv, simulate_n_agent, GainEstimate, Policy, RunConfig};
use mfmdp::solver::{solve, Method, SolverConfig};
use mfmdp::{Error, Execution};

use crate::args::{ConvergeArgs, EvaluateArgs, ExamplesCommand, MethodArg, ReplayArgs, SimulateArgs, SolveArgs};
use crate::manifest::{sha256_hex, Manifest, OutputDir, Recorded, MANIFEST_FILE};

/// Bad command-line input that clap cannot catch.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "usage error: {}", self.0)
    }
}

impl std::error::Error for Usage {}

/// A replayed run did not reproduce the recorded outputs.
#[derive(Debug)]
pub struct ReplayMismatch(pub String);

impl std::fmt::Display for ReplayMismatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "replay mismatch: {}", self.0)
    }
}

impl std::error::Error for ReplayMismatch {}

pub struct LoadedModel {
    pub model: MeanFieldModel,
    pub init: InitialCondition,
    pub sha256: String,
}

/// A path to a model file, or the name of a builtin example.
pub fn load_model(source: &str) -> Result<LoadedModel> {
    let path = Path::new(source);
    let text = if path.is_file() {
        std::fs::read_to_string(path).map_err(|e| Error::Model(format!("cannot read {source}: {e}")))?
    } else if EXAMPLE_NAMES.contains(&source) {
        example_config(source, &ExampleOptions::default())?.to_json()
    } else {
        return Err(Error::Model(format!("`{source}` is neither a model file nor a builtin example")).into());
    };
    let cfg = ModelConfig::from_json(&text).map_err(|e| match e {
        Error::Model(m) => Error::Model(format!("{source}: {m}")),
        other => other,
    })?;
    let (model, init) = cfg.build()?;
    Ok(LoadedModel { model, init, sha256: sha256_hex(text.as_bytes()) })
}

struct LoadedPolicy {
    policy: Policy,
    sha256: Option<String>,
    artifact: Option<SolverArtifact>,
}

fn load_policy(spec: &str, model: &MeanFieldModel) -> Result<LoadedPolicy> {
    if let Some(name) = spec.strip_prefix("script:") {
        return Ok(LoadedPolicy { policy: Policy::OpenLoop(builtin_script(name, model)?), sha256: None, artifact: None });
    }
    let bytes = std::fs::read(spec).map_err(|e| Error::Artifact(format!("cannot read policy artifact {spec}: {e}")))?;
    let artifact = SolverArtifact::from_json(&String::from_utf8_lossy(&bytes))?;
    let policy = Policy::Feedback(artifact.policy(model)?);
    Ok(LoadedPolicy { policy, sha256: Some(sha256_hex(&bytes)), artifact: Some(artifact) })
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    model: &'a str,
    model_sha256: &'a str,
    initial_node: usize,
    value_at_initial: f64,
    report: &'a mfmdp::solver::SolveReport,
}

pub fn cmd_solve(args: &SolveArgs) -> Result<Manifest> {
    let m = load_model(&args.model)?;
    let cfg = SolverConfig {
        n_eta: args.n_eta,
        n_actions_grid: args.n_actions_grid,
        tol: args.tol,
        feedback_only: args.feedback_only,
        max_iterations: args.max_iterations,
        lipschitz_samples: args.lipschitz_samples,
        seed: args.seed,
        exec: Execution::default(),
    };
    let method = match args.method {
        MethodArg::Value => Method::Value,
        MethodArg::Policy => Method::Policy,
    };
    let sol = solve(&m.model, &cfg, method)?;
    let node = sol.values.grid.project(&m.init.law)?;
    let value = sol.values.values[node];
    let artifact = SolverArtifact::from_solution(&m.model, &sol, Some(m.sha256.clone()));

    let mut out = OutputDir::create(&args.out, Manifest::new(Recorded::Solve(args.clone()), m.sha256.clone(), None))?;
    out.write("artifact.json", (artifact.to_json()? + "\n").as_bytes())?;
    let r = &sol.report;
    out.write_json(
        "solve.json",
        &SolveSummary { model: m.model.name(), model_sha256: &m.sha256, initial_node: node, value_at_initial: value, report: r },
    )?;
    println!("model            {}", m.model.name());
    println!("grid nodes       {} (n_eta = {})", r.nodes, r.n_eta);
    println!("iterations       {} (residual {:.3e})", r.iterations, r.residual);
    println!("V(initial)       {value:.9}");
    println!("iteration bound  {:.3e}", r.iteration_bound);
    println!("grid bound       {:.3e}", r.grid_bound);
    println!("total error      {:.3e}", r.error_bound);
    println!("policy subopt.   {:.3e}", r.policy_suboptimality);
    eprintln!("solved in {:.3}s", r.wall_time_secs);
    out.finish()
}

#[derive(Serialize)]
struct SampleRow {
    #[serde(rename = "N")]
    n: usize,
    replication: usize,
    gain: Option<f64>,
    gap: Option<f64>,
    w_distance: f64,
}

#[derive(Serialize)]
struct Verification {
    value_star: f64,
    policy_suboptimality: f64,
    /// `V⋆ − suboptimality − CI − tail`.
    lower_bound: f64,
    holds: bool,
}

#[derive(Serialize)]
struct SimulateSummary<'a> {
    model: &'a str,
    policy: &'a str,
    agents: usize,
    horizon: usize,
    replications: usize,
    seed: u64,
    tail_bound: f64,
    gain: GainEstimate,
    limit_gain: GainEstimate,
    mean_gap: f64,
    gap_ci: f64,
    verification: Option<Verification>,
}

fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| anyhow!("csv: {e}"))
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<Manifest> {
    let m = load_model(&args.model)?;
    let p = load_policy(&args.policy, &m.model)?;
    if !(args.tol > 0.0) {
        bail!(Usage("--tol must be positive".into()));
    }
    let horizon = args.horizon.unwrap_or_else(|| m.model.horizon_for(args.tol / 10.0));
    let cfg = RunConfig {
        agents: args.agents,
        horizon,
        replications: args.replications,
        seed: args.seed,
        record_agents: args.record_agents,
        exec: Execution::default(),
    };
    let run = simulate_n_agent(&m.model, &p.policy, &m.init, &cfg)?;
    let limit = simulate_mkv(&m.model, &p.policy, &m.init, &cfg)?;
    let gaps: Vec<f64> = run.replications.iter().zip(&limit.path_gains).map(|(a, b)| a.gain - b).collect();
    let (mean_gap, _, gap_ci) = mfmdp::sim::mean_ci(&gaps);

    let verification = match &p.artifact {
        Some(a) => {
            let vf = a.value_function(&m.model)?;
            let value_star = vf.eval(&m.init.law)?;
            let sub = a.report.policy_suboptimality;
            let lower_bound = value_star - sub - run.gain.ci_half_width - run.gain.tail_bound;
            Some(Verification { value_star, policy_suboptimality: sub, lower_bound, holds: run.gain.mean >= lower_bound })
        }
        None => None,
    };

    let mut out = OutputDir::create(
        &args.out,
        Manifest::new(Recorded::Simulate(args.clone()), m.sha256.clone(), p.sha256.clone()),
    )?;
    let rows = run.replications.iter().enumerate().map(|(r, rep)| SampleRow {
        n: args.agents,
        replication: r,
        gain: Some(rep.gain),
        gap: Some(gaps[r]),
        w_distance: rep.w_distance,
    });
    out.write("simulate.csv", &csv_bytes(rows)?)?;
    if !run.trajectories.is_empty() {
        out.write("trajectories.csv", &trajectory_csv(&m.model, &run.trajectories)?)?;
    }
    let summary = SimulateSummary {
        model: m.model.name(),
        policy: &args.policy,
        agents: args.agents,
        horizon,
        replications: args.replications,
        seed: args.seed,
        tail_bound: run.gain.tail_bound,
        gain: run.gain,
        limit_gain: limit.gain,
        mean_gap,
        gap_ci,
        verification,
    };
    out.write_json("summary.json", &summary)?;
    println!("N = {}, T = {horizon}, R = {}", args.agents, args.replications);
    println!("mean gain        {:.6} ± {:.2e} (tail {:.2e})", run.gain.mean, run.gain.ci_half_width, run.gain.tail_bound);
    println!("limit gain       {:.6} ± {:.2e}", limit.gain.mean, limit.gain.ci_half_width);
    println!("gap              {mean_gap:.3e} ± {gap_ci:.2e}");
    if let Some(v) = &summary.verification {
        println!("verification     gain ≥ {:.6}: {}", v.lower_bound, if v.holds { "holds" } else { "FAILS" });
    }
    out.finish()
}

fn trajectory_csv(model: &MeanFieldModel, trajectories: &[mfmdp::sim::AgentTrajectory]) -> Result<Vec<u8>> {
    #[derive(Serialize)]
    struct Row<'a> {
        agent: usize,
        t: usize,
        state: &'a str,
        action: &'a str,
        reward: f64,
    }
    let (xs, acts) = (model.state_space(), model.action_space());
    let rows = trajectories.iter().enumerate().flat_map(|(i, tr)| {
        (0..tr.states.len()).map(move |t| Row {
            agent: i,
            t,
            state: xs.label(tr.states[t]),
            action: acts.label(tr.actions[t]),
            reward: tr.rewards[t],
        })
    });
    csv_bytes(rows)
}

pub fn cmd_converge(args: &ConvergeArgs) -> Result<Manifest> {
    if args.ns.is_empty() || args.ns.windows(2).any(|w| w[1] <= w[0]) || args.ns[0] == 0 {
        bail!(Usage("--agents needs a nonempty, positive, strictly increasing list".into()));
    }
    if !(args.tol > 0.0) {
        bail!(Usage("--tol must be positive".into()));
    }
    let m = load_model(&args.model)?;
    let p = load_policy(&args.policy, &m.model)?;
    let horizon = args.horizon.unwrap_or_else(|| m.model.horizon_for(args.tol / 10.0));
    let cfg = RunConfig {
        agents: 1,
        horizon,
        replications: args.replications,
        seed: args.seed,
        record_agents: 0,
        exec: Execution::default(),
    };
    let report = chaos_experiment(&m.model, &p.policy, &m.init, &args.ns, &cfg)?;
    let mut out = OutputDir::create(
        &args.out,
        Manifest::new(Recorded::Converge(args.clone()), m.sha256.clone(), p.sha256.clone()),
    )?;
    let rows = report.samples.iter().map(|s| SampleRow {
        n: s.n,
        replication: s.replication,
        gain: s.gain,
        gap: s.gap,
        w_distance: s.w_distance,
    });
    out.write("converge.csv", &csv_bytes(rows)?)?;

    #[derive(Serialize)]
    struct Summary<'a> {
        model: &'a str,
        policy: &'a str,
        horizon: usize,
        tail_bound: f64,
        replications: usize,
        seed: u64,
        limit_gain: Option<GainEstimate>,
        rows: &'a [mfmdp::sim::ChaosRow],
        gap_decreasing: bool,
        gap_fit: Option<mfmdp::sim::LogLogFit>,
        w_fit: Option<mfmdp::sim::LogLogFit>,
    }
    out.write_json(
        "summary.json",
        &Summary {
            model: m.model.name(),
            policy: &args.policy,
            horizon,
            tail_bound: m.model.tail_bound(horizon),
            replications: args.replications,
            seed: args.seed,
            limit_gain: report.limit_gain,
            rows: &report.rows,
            gap_decreasing: report.gap_decreasing(),
            gap_fit: report.gap_fit,
            w_fit: report.w_fit,
        },
    )?;
    println!("{:>10} {:>12} {:>10} {:>12}", "N", "gap", "± CI", "mean W");
    for r in &report.rows {
        println!(
            "{:>10} {:>12.4e} {:>10.2e} {:>12.4e}",
            r.n,
            r.gap.unwrap_or(f64::NAN),
            r.gap_ci.unwrap_or(f64::NAN),
            r.w_mean
        );
    }
    match report.gap_fit {
        Some(f) => println!("gap slope        {:.3} (R² {:.3})", f.slope, f.r_squared),
        None => println!("gap slope        n/a (a gap is zero)"),
    }
    out.finish()
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<Option<Manifest>> {
    let m = load_model(&args.model)?;
    let mut policy_sha = None;
    let mut node_rows = Vec::new();
    let eval: Evaluation = match args.policy.as_str() {
        "open-loop-search" => evaluate(&m.model, &m.init, EvalTarget::OpenLoopSearch, args.tol, args.cap)?,
        spec => {
            let p = load_policy(spec, &m.model)?;
            policy_sha = p.sha256.clone();
            match (&p.policy, &p.artifact) {
                (Policy::Feedback(fp), Some(a)) => {
                    if fp.grid.len() <= 2000 {
                        for node in 0..fp.grid.len() {
                            let init = InitialCondition { law: fp.grid.measure(node), info_mode: m.init.info_mode };
                            let e = evaluate(&m.model, &init, EvalTarget::Feedback(fp), args.tol, args.cap)?;
                            node_rows.push((node, fp.grid.weights(node).to_vec(), a.values[node], e.value));
                        }
                    }
                    evaluate(&m.model, &m.init, EvalTarget::Feedback(fp), args.tol, args.cap)?
                }
                (Policy::OpenLoop(s), _) => evaluate(&m.model, &m.init, EvalTarget::Script(s), args.tol, args.cap)?,
                (Policy::Feedback(_), None) => unreachable!("feedback policies come from artifacts"),
            }
        }
    };
    println!("value            {:.9} (horizon {}, tail {:.2e})", eval.value, eval.horizon, eval.tail_bound);
    if let Some(d) = eval.search_depth {
        println!("history depth    {d}");
    }
    if let Some(b) = &eval.bellman {
        println!("bellman rhs      {:.9}", b.rhs);
        println!("bellman residual {:.6e}", b.residual);
    }
    let Some(dir) = &args.out else {
        return Ok(None);
    };
    let mut out = OutputDir::create(dir, Manifest::new(Recorded::Evaluate(args.clone()), m.sha256.clone(), policy_sha))?;

    #[derive(Serialize)]
    struct Summary<'a> {
        model: &'a str,
        policy: &'a str,
        evaluation: Evaluation,
    }
    out.write_json("evaluate.json", &Summary { model: m.model.name(), policy: &args.policy, evaluation: eval })?;
    if !node_rows.is_empty() {
        #[derive(Serialize)]
        struct Row {
            node: usize,
            weights: String,
            solver_value: f64,
            exact_value: f64,
        }
        let rows = node_rows.into_iter().map(|(node, w, s, e)| Row {
            node,
            weights: w.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";"),
            solver_value: s,
            exact_value: e,
        });
        out.write("evaluate_nodes.csv", &csv_bytes(rows)?)?;
    }
    Ok(Some(out.finish()?))
}

pub fn cmd_examples(cmd: &ExamplesCommand) -> Result<()> {
    let opts = ExampleOptions::default();
    match cmd {
        ExamplesCommand::List => {
            for name in EXAMPLE_NAMES {
                let cfg = example_config(name, &opts)?;
                println!("{name:<6} {}", cfg.description);
            }
        }
        ExamplesCommand::Export { out, name } => {
            let names: Vec<&str> = match name {
                Some(n) if EXAMPLE_NAMES.contains(&n.as_str()) => vec![n.as_str()],
                Some(n) => bail!(Usage(format!("unknown example `{n}`"))),
                None => EXAMPLE_NAMES.to_vec(),
            };
            std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
            for n in names {
                let path = out.join(format!("{n}.json"));
                std::fs::write(&path, example_config(n, &opts)?.to_json())
                    .with_context(|| format!("writing {}", path.display()))?;
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

pub fn cmd_replay(args: &ReplayArgs) -> Result<()> {
    let recorded = Manifest::load(&args.manifest)?;
    let dir: PathBuf = match &args.out {
        Some(d) => d.clone(),
        None => args.manifest.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(".")),
    };
    let fresh = match recorded.recorded.clone() {
        Recorded::Solve(mut a) => {
            a.out = dir;
            cmd_solve(&a)?
        }
        Recorded::Simulate(mut a) => {
            a.out = dir;
            cmd_simulate(&a)?
        }
        Recorded::Converge(mut a) => {
            a.out = dir;
            cmd_converge(&a)?
        }
        Recorded::Evaluate(mut a) => {
            a.out = Some(dir);
            cmd_evaluate(&a)?.expect("output directory set")
        }
    };
    if fresh.model_sha256 != recorded.model_sha256 {
        return Err(Error::Model("model file changed since the manifest was written".into()).into());
    }
    if fresh.policy_sha256 != recorded.policy_sha256 {
        return Err(Error::Artifact("policy artifact changed since the manifest was written".into()).into());
    }
    if fresh.outputs != recorded.outputs {
        let differing: Vec<&String> = recorded
            .outputs
            .iter()
            .filter(|(k, v)| fresh.outputs.get(*k) != Some(v))
            .map(|(k, _)| k)
            .collect();
        bail!(ReplayMismatch(format!("outputs differ: {differing:?}")));
    }
    println!("replay reproduced {} output files ({MANIFEST_FILE} rewritten)", fresh.outputs.len());
    Ok(())
}
