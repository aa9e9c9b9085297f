//! Randomized structural checks against brute-force oracles.

use std::sync::Arc;

use proptest::prelude::*;

use mfmdp::grid::{SimplexGrid, EXHAUSTIVE_PROJECTION_LIMIT};
use mfmdp::lifted::{q_value, quantile, KernelSearchSpace, LiftedTable, ValueFunction};
use mfmdp::model::{builtin_example, ExampleOptions};
use mfmdp::sim::{simulate_n_agent, Policy, RunConfig};
use mfmdp::solver::{solve, Method, SolverConfig};
use mfmdp::spaces::{DiscreteMeasure, FiniteMetricSpace, SpaceRef};
use mfmdp::transport::{distance, distance_weights, wasserstein};
use mfmdp::Execution;

fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![1 => Just(0.0), 3 => 0.0..1.0f64], n).prop_map(|mut w| {
        if w.iter().all(|v| *v == 0.0) {
            w[0] = 1.0;
        }
        let s: f64 = w.iter().sum();
        w.iter().map(|v| v / s).collect()
    })
}

fn line(points: &[f64]) -> SpaceRef {
    Arc::new(FiniteMetricSpace::euclidean(points).unwrap())
}

/// Shortest-path metric of a weighted cycle, so the space is not a line.
fn cycle(edges: &[f64]) -> SpaceRef {
    let n = edges.len();
    let mut d = vec![vec![0.0; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (lo, hi) = (i.min(j), i.max(j));
            let inner: f64 = edges[lo..hi].iter().sum();
            let total: f64 = edges.iter().sum();
            *v = inner.min(total - inner);
        }
    }
    Arc::new(FiniteMetricSpace::from_matrix((0..n).map(|i| format!("p{i}")).collect(), d, None).unwrap())
}

/// `∫ |F_μ − F_ν|` on sorted points.
fn cdf_distance(points: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&i, &j| points[i].total_cmp(&points[j]));
    let (mut fa, mut fb, mut acc) = (0.0, 0.0, 0.0);
    for w in idx.windows(2) {
        fa += a[w[0]];
        fb += b[w[0]];
        acc += (fa - fb).abs() * (points[w[1]] - points[w[0]]);
    }
    acc
}

fn brute_nearest(grid: &SimplexGrid, w: &[f64]) -> f64 {
    (0..grid.len()).map(|i| distance_weights(grid.space(), w, grid.weights(i))).fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn line_distance_matches_cdf_formula(
        (points, a, b) in prop::collection::btree_set(-50i32..50, 2..7).prop_flat_map(|pts| {
            let n = pts.len();
            let points: Vec<f64> = pts.into_iter().map(|p| p as f64 / 4.0).collect();
            (Just(points), weights(n), weights(n))
        }),
    ) {
        let sp = line(&points);
        let mu = DiscreteMeasure::new(sp.clone(), a.clone()).unwrap();
        let nu = DiscreteMeasure::new(sp, b.clone()).unwrap();
        let oracle = cdf_distance(&points, &a, &b);
        prop_assert!((distance(&mu, &nu).unwrap() - oracle).abs() < 1e-9);
        prop_assert!((wasserstein(&mu, &nu).unwrap().cost - oracle).abs() < 1e-9);
    }

    #[test]
    fn cycle_distance_is_a_metric(
        (edges, a, b, c) in (3usize..6).prop_flat_map(|n| {
            (prop::collection::vec(0.1..3.0f64, n), weights(n), weights(n), weights(n))
        }),
    ) {
        let n = edges.len();
        let sp = cycle(&edges);
        let m = |w: &[f64]| DiscreteMeasure::new(sp.clone(), w.to_vec()).unwrap();
        let (x, y, z) = (m(&a), m(&b), m(&c));
        let dxy = distance(&x, &y).unwrap();
        prop_assert!(distance(&x, &x).unwrap().abs() < 1e-12);
        prop_assert!((dxy - distance(&y, &x).unwrap()).abs() < 1e-9);
        prop_assert!(dxy <= distance(&x, &z).unwrap() + distance(&z, &y).unwrap() + 1e-9);
        prop_assert!(dxy <= sp.diameter() + 1e-12);
        // the plan is a coupling of the two marginals
        let plan = wasserstein(&x, &y).unwrap();
        prop_assert!((plan.cost - dxy).abs() < 1e-9);
        for i in 0..n {
            let row: f64 = (0..n).map(|j| plan.mass(i, j)).sum();
            let col: f64 = (0..n).map(|j| plan.mass(j, i)).sum();
            prop_assert!((row - x.weights()[i]).abs() < 1e-9);
            prop_assert!((col - y.weights()[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn quantile_inverts_the_cdf(row in weights(6), u in 1e-12..=1.0f64) {
        let a = quantile(&row, u);
        prop_assert!(row[a] > 0.0);
        let below: f64 = row[..a].iter().sum();
        let through: f64 = row[..=a].iter().sum();
        prop_assert!(below < u || below == 0.0);
        prop_assert!(through >= u - 1e-12 || a == row.iter().rposition(|p| *p > 0.0).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn small_grid_projection_is_exact_nearest(w in weights(4), steps in 1usize..8) {
        let sp = line(&[0.0, 0.5, 2.0, 3.0]);
        let grid = SimplexGrid::build(sp, steps).unwrap();
        let got = grid.project_weights(&w);
        let d = distance_weights(grid.space(), &w, grid.weights(got));
        let best = brute_nearest(&grid, &w);
        prop_assert!(d <= best + 1e-12);
        // ties go to the lowest index
        let first = (0..grid.len()).find(|&i| distance_weights(grid.space(), &w, grid.weights(i)) <= best + 1e-12).unwrap();
        prop_assert_eq!(got, first);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn large_line_grid_projection_reaches_the_minimum(w in weights(4)) {
        let sp = line(&[0.0, 1.0, 1.5, 4.0]);
        let grid = SimplexGrid::build(sp, 30).unwrap();
        prop_assert!(grid.len() > EXHAUSTIVE_PROJECTION_LIMIT);
        let got = grid.project_weights(&w);
        let d = distance_weights(grid.space(), &w, grid.weights(got));
        prop_assert!(d <= brute_nearest(&grid, &w) + 1e-12);
    }

    #[test]
    fn large_discrete_grid_projection_reaches_the_minimum(w in weights(3)) {
        let sp: SpaceRef = Arc::new(FiniteMetricSpace::discrete(vec!["a".into(), "b".into(), "c".into()], None).unwrap());
        let grid = SimplexGrid::build(sp, 100).unwrap();
        prop_assert!(grid.len() > EXHAUSTIVE_PROJECTION_LIMIT);
        let got = grid.project_weights(&w);
        let d = distance_weights(grid.space(), &w, grid.weights(got));
        prop_assert!(d <= brute_nearest(&grid, &w) + 1e-12);
    }
}

fn ex4_3_table() -> (mfmdp::model::MeanFieldModel, LiftedTable) {
    let (m, _) = builtin_example("ex4_3", &ExampleOptions::default()).unwrap();
    let grid = Arc::new(SimplexGrid::build(m.state_space().clone(), 6).unwrap());
    let search = KernelSearchSpace::randomized(6, m.spaces().n_actions()).unwrap();
    let table = LiftedTable::build(&m, grid, search, Execution::Sequential).unwrap();
    (m, table)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn bellman_operator_contracts_and_is_monotone(
        w1 in prop::collection::vec(-5.0..5.0f64, 7),
        w2 in prop::collection::vec(-5.0..5.0f64, 7),
        bump in prop::collection::vec(0.0..1.0f64, 7),
        shift in -3.0..3.0f64,
    ) {
        let (m, table) = ex4_3_table();
        prop_assert_eq!(table.grid().len(), 7);
        let beta = m.discount();
        let (t1, _) = table.apply_all(&w1, Execution::Sequential);
        let (t2, _) = table.apply_all(&w2, Execution::Parallel);
        let sup = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(sup(&t1, &t2) <= beta * sup(&w1, &w2) + 1e-12);
        let w3: Vec<f64> = w1.iter().zip(&bump).map(|(a, b)| a + b).collect();
        let (t3, _) = table.apply_all(&w3, Execution::Sequential);
        prop_assert!(t1.iter().zip(&t3).all(|(a, b)| a <= b));
        // constants pass through with factor β
        let w4: Vec<f64> = w1.iter().map(|v| v + shift).collect();
        let (t4, _) = table.apply_all(&w4, Execution::Sequential);
        prop_assert!(t1.iter().zip(&t4).all(|(a, b)| (b - a - beta * shift).abs() < 1e-12));
    }

    #[test]
    fn table_q_matches_direct_lift(values in prop::collection::vec(-5.0..5.0f64, 7), node in 0usize..7) {
        let (m, table) = ex4_3_table();
        let w = ValueFunction::new(table.grid().clone(), values.clone()).unwrap();
        let mu = table.grid().measure(node);
        for k in 0..table.kernels_at(node) {
            let kernel = table.search().kernel_measure(&m, table.support(node), k);
            let direct = q_value(&m, &w, &mu, &kernel).unwrap();
            prop_assert!((direct - table.q(&values, node, k)).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn simulation_is_a_function_of_the_seed(seed in any::<u64>(), agents in 1usize..300) {
        let (m, init) = builtin_example("ex4_3", &ExampleOptions::default()).unwrap();
        let sol = solve(&m, &SolverConfig { n_eta: 4, n_actions_grid: 4, ..SolverConfig::default() }, Method::Value).unwrap();
        let policy = Policy::Feedback(sol.policy);
        let cfg = RunConfig { agents, horizon: 6, replications: 3, seed, record_agents: 2, exec: Execution::Sequential };
        let a = simulate_n_agent(&m, &policy, &init, &cfg).unwrap();
        let b = simulate_n_agent(&m, &policy, &init, &RunConfig { exec: Execution::Parallel, ..cfg }).unwrap();
        prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = simulate_n_agent(&m, &policy, &init, &RunConfig { seed: seed ^ 1, ..cfg }).unwrap();
        prop_assert!(a.replications.iter().zip(&c.replications).any(|(x, y)| x.gain != y.gain) || agents == 1);
    }
}
