use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use mfmdp::model::{builtin_example, ExampleOptions};
use mfmdp::sim::{simulate_n_agent, Policy, RunConfig};
use mfmdp::solver::{build_table, solve, Method, SolverConfig};
use mfmdp::Execution;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn lifted_table(c: &mut Criterion) {
    let (m, _) = builtin_example("ex4_6", &ExampleOptions::default()).unwrap();
    let mut g = c.benchmark_group("table_build");
    g.sample_size(10);
    for (name, exec) in MODES {
        let cfg = SolverConfig { n_eta: 2, n_actions_grid: 2, exec, ..SolverConfig::default() };
        g.bench_function(BenchmarkId::new("ex4_6", name), |b| b.iter(|| build_table(&m, &cfg).unwrap()));
    }
    g.finish();

    let table = build_table(&m, &SolverConfig { n_eta: 2, n_actions_grid: 2, ..SolverConfig::default() }).unwrap();
    let values: Vec<f64> = (0..table.grid().len()).map(|i| (i as f64).sin()).collect();
    let mut g = c.benchmark_group("bellman_sweep");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new("ex4_6", name), |b| b.iter(|| table.apply_all(&values, exec)));
    }
    g.finish();
}

fn particles(c: &mut Criterion) {
    let (m, init) = builtin_example("ex4_3", &ExampleOptions::default()).unwrap();
    let sol = solve(&m, &SolverConfig::default(), Method::Value).unwrap();
    let policy = Policy::Feedback(sol.policy);
    let mut g = c.benchmark_group("simulate_n_agent");
    g.sample_size(10);
    for (name, exec) in MODES {
        let cfg = RunConfig { agents: 20_000, horizon: 14, replications: 8, seed: 1, record_agents: 0, exec };
        g.bench_function(BenchmarkId::new("ex4_3", name), |b| {
            b.iter(|| simulate_n_agent(&m, &policy, &init, &cfg).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, lifted_table, particles);
criterion_main!(benches);
