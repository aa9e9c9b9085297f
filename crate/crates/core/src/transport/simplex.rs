//! Transportation simplex (network simplex on the complete bipartite graph).
//!
//! The basis is a spanning tree of `m + n − 1` cells over the `m` supply and
//! `n` demand nodes, degenerate cells included. Potentials `u_i + v_j = c_ij`
//! are recomputed along the tree each pivot; the entering cell is the one
//! with the most negative reduced cost.

use crate::error::{Error, Result};

const REDUCED_COST_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Solution {
    /// Row-major `m × n` flow matrix.
    pub flow: Vec<f64>,
    pub cost: f64,
    pub row_potential: Vec<f64>,
    pub col_potential: Vec<f64>,
    pub pivots: usize,
}

impl Solution {
    pub fn dual_objective(&self, supply: &[f64], demand: &[f64]) -> f64 {
        supply.iter().zip(&self.row_potential).map(|(s, u)| s * u).sum::<f64>()
            + demand.iter().zip(&self.col_potential).map(|(d, v)| d * v).sum::<f64>()
    }
}

struct Basis {
    cells: Vec<(usize, usize)>,
    flow: Vec<f64>,
}

/// Solves `min Σ c_ij x_ij` subject to row sums `supply`, column sums
/// `demand`, `x ≥ 0`. Both sides must be strictly positive and carry the
/// same total mass.
pub fn solve(supply: &[f64], demand: &[f64], cost: impl Fn(usize, usize) -> f64) -> Result<Solution> {
    let (m, n) = (supply.len(), demand.len());
    if m == 0 || n == 0 {
        return Err(Error::Contract("empty transportation problem".into()));
    }
    let c: Vec<f64> = (0..m * n).map(|k| cost(k / n, k % n)).collect();
    let mut basis = northwest_corner(supply, demand);
    let mut u = vec![0.0; m];
    let mut v = vec![0.0; n];
    let max_pivots = 50 * (m + n) * (m + n) + 100;
    let mut pivots = 0;
    loop {
        let adj = adjacency(&basis, m, n);
        potentials(&basis, &adj, &c, m, n, &mut u, &mut v);

        let mut entering = None;
        let mut best = -REDUCED_COST_EPS;
        for i in 0..m {
            for j in 0..n {
                let r = c[i * n + j] - u[i] - v[j];
                if r < best {
                    best = r;
                    entering = Some((i, j));
                }
            }
        }
        let Some((p, q)) = entering else { break };
        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::Invariant("transportation simplex exceeded its pivot budget".into()));
        }

        // Tree path row p -> column q; tree nodes are rows 0..m, columns m..m+n.
        let path = tree_path(&adj, p, m + q, m + n)
            .ok_or_else(|| Error::Invariant("basis is not a spanning tree".into()))?;
        // Edges along the path alternate -, +, -, ... starting at the row end.
        let mut leave: Option<(usize, f64)> = None;
        for (k, &cell_idx) in path.iter().enumerate() {
            if k % 2 == 0 {
                let f = basis.flow[cell_idx];
                if leave.is_none_or(|(_, lf)| f < lf) {
                    leave = Some((k, f));
                }
            }
        }
        let (leave_pos, theta) = leave.expect("cycle has a minus edge");
        for (k, &cell_idx) in path.iter().enumerate() {
            if k % 2 == 0 {
                basis.flow[cell_idx] -= theta;
            } else {
                basis.flow[cell_idx] += theta;
            }
        }
        let out = path[leave_pos];
        basis.cells[out] = (p, q);
        basis.flow[out] = theta;
    }

    let mut flow = vec![0.0; m * n];
    for (&(i, j), &f) in basis.cells.iter().zip(&basis.flow) {
        flow[i * n + j] += f.max(0.0);
    }
    let total = flow.iter().zip(&c).map(|(f, c)| f * c).sum();
    Ok(Solution { flow, cost: total, row_potential: u, col_potential: v, pivots })
}

fn northwest_corner(supply: &[f64], demand: &[f64]) -> Basis {
    let (m, n) = (supply.len(), demand.len());
    let mut s = supply.to_vec();
    let mut d = demand.to_vec();
    let mut cells = Vec::with_capacity(m + n - 1);
    let mut flow = Vec::with_capacity(m + n - 1);
    let (mut i, mut j) = (0, 0);
    loop {
        let x = s[i].min(d[j]);
        cells.push((i, j));
        flow.push(x);
        s[i] -= x;
        d[j] -= x;
        if i == m - 1 && j == n - 1 {
            break;
        }
        // Exhaust the row first on ties so the tree stays connected with
        // exactly m + n − 1 cells.
        if (s[i] <= d[j] && i < m - 1) || j == n - 1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    debug_assert_eq!(cells.len(), m + n - 1);
    Basis { cells, flow }
}

/// adjacency[node] = list of (neighbor node, basis cell index)
fn adjacency(basis: &Basis, m: usize, n: usize) -> Vec<Vec<(usize, usize)>> {
    let mut adj = vec![Vec::new(); m + n];
    for (k, &(i, j)) in basis.cells.iter().enumerate() {
        adj[i].push((m + j, k));
        adj[m + j].push((i, k));
    }
    adj
}

fn potentials(
    basis: &Basis,
    adj: &[Vec<(usize, usize)>],
    c: &[f64],
    m: usize,
    n: usize,
    u: &mut [f64],
    v: &mut [f64],
) {
    let mut seen = vec![false; m + n];
    let mut stack = vec![0usize];
    seen[0] = true;
    u[0] = 0.0;
    while let Some(node) = stack.pop() {
        for &(next, k) in &adj[node] {
            if seen[next] {
                continue;
            }
            seen[next] = true;
            let (i, j) = basis.cells[k];
            if next >= m {
                v[j] = c[i * n + j] - u[i];
            } else {
                u[i] = c[i * n + j] - v[j];
            }
            stack.push(next);
        }
    }
}

/// Basis cell indices on the tree path from `from` to `to`, ordered from the
/// `from` end.
fn tree_path(adj: &[Vec<(usize, usize)>], from: usize, to: usize, nodes: usize) -> Option<Vec<usize>> {
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; nodes];
    let mut seen = vec![false; nodes];
    let mut stack = vec![from];
    seen[from] = true;
    while let Some(node) = stack.pop() {
        if node == to {
            break;
        }
        for &(next, k) in &adj[node] {
            if !seen[next] {
                seen[next] = true;
                parent[next] = Some((node, k));
                stack.push(next);
            }
        }
    }
    if !seen[to] {
        return None;
    }
    let mut path = Vec::new();
    let mut node = to;
    while node != from {
        let (prev, k) = parent[node]?;
        path.push(k);
        node = prev;
    }
    path.reverse();
    Some(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classic_textbook_instance() {
        // 3 x 4 instance with known optimum 743 (supplies 7, 9, 18; demands 5, 8, 7, 14).
        let supply = [7.0, 9.0, 18.0];
        let demand = [5.0, 8.0, 7.0, 14.0];
        let c = [[19.0, 30.0, 50.0, 10.0], [70.0, 30.0, 40.0, 60.0], [40.0, 8.0, 70.0, 20.0]];
        let sol = solve(&supply, &demand, |i, j| c[i][j]).unwrap();
        assert!((sol.cost - 743.0).abs() < 1e-9, "cost {}", sol.cost);
        assert!((sol.dual_objective(&supply, &demand) - 743.0).abs() < 1e-9);
    }

    #[test]
    fn single_row_and_column() {
        let sol = solve(&[1.0], &[0.25, 0.75], |_, j| j as f64).unwrap();
        assert!((sol.cost - 0.75).abs() < 1e-15);
        let sol = solve(&[0.5, 0.5], &[1.0], |i, _| 2.0 * i as f64).unwrap();
        assert!((sol.cost - 1.0).abs() < 1e-15);
    }
}
