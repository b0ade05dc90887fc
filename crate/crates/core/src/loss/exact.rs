//! Exact optimal transport for small instances by the transportation simplex.

use super::{cost_matrix, Pmf, TransportPlan};
use crate::diffcore::Tensor2;
use crate::error::{Error, Result};

/// Largest `|p|·|q|` accepted by the exact solver.
pub const ORACLE_MAX_CELLS: usize = 64;

const REDUCED_COST_TOL: f64 = 1e-12;
const MAX_PIVOTS: usize = 10_000;

pub fn ot_exact(p: &Pmf, q: &Pmf) -> Result<TransportPlan> {
    check_scale(p.len(), q.len())?;
    let cost = cost_matrix(p, q)?;
    ot_exact_with_cost(&p.weights, &q.weights, cost)
}

fn check_scale(n: usize, m: usize) -> Result<()> {
    if n * m > ORACLE_MAX_CELLS {
        return Err(Error::OracleScale { cells: n * m, limit: ORACLE_MAX_CELLS });
    }
    Ok(())
}

/// Solves min ⟨γ, C⟩ subject to γ1 = p, γᵀ1 = q, γ ≥ 0.
pub fn ot_exact_with_cost(p: &[f64], q: &[f64], cost: Tensor2) -> Result<TransportPlan> {
    let (n, m) = cost.shape();
    check_scale(n, m)?;
    if p.len() != n || q.len() != m || n == 0 || m == 0 {
        return Err(Error::dim("ot_exact", format!("cost {:?} for marginals {} and {}", (n, m), p.len(), q.len())));
    }
    let (sp, sq): (f64, f64) = (p.iter().sum(), q.iter().sum());
    if (sp - sq).abs() > 1e-9 || p.iter().chain(q).any(|v| !(*v >= 0.0)) {
        return Err(Error::Evaluation(format!("marginals must be nonnegative with equal mass ({sp} vs {sq})")));
    }

    let mut x = Tensor2::zeros(n, m);
    let mut basic = vec![vec![false; m]; n];
    northwest_corner(p, q, &mut x, &mut basic);

    let mut pivots = 0;
    loop {
        let (u, v) = potentials(&cost, &basic);
        let entering = (0..n)
            .flat_map(|i| (0..m).map(move |j| (i, j)))
            .find(|&(i, j)| !basic[i][j] && cost.get(i, j) - u[i] - v[j] < -REDUCED_COST_TOL);
        let Some((ei, ej)) = entering else { break };
        pivots += 1;
        if pivots > MAX_PIVOTS {
            return Err(Error::Evaluation("transportation simplex did not terminate".into()));
        }
        let cycle = cycle_through(&basic, ei, ej);
        // cycle[0] is the entering cell; odd positions lose mass
        let theta = cycle.iter().skip(1).step_by(2).map(|&(i, j)| x.get(i, j)).fold(f64::INFINITY, f64::min);
        let leaving = cycle
            .iter()
            .skip(1)
            .step_by(2)
            .filter(|&&(i, j)| x.get(i, j) == theta)
            .min()
            .copied()
            .expect("cycle has a losing cell");
        for (k, &(i, j)) in cycle.iter().enumerate() {
            let delta = if k % 2 == 0 { theta } else { -theta };
            x.set(i, j, (x.get(i, j) + delta).max(0.0));
        }
        x.set(leaving.0, leaving.1, 0.0);
        basic[leaving.0][leaving.1] = false;
        basic[ei][ej] = true;
    }

    let total_cost = x.data().iter().zip(cost.data()).map(|(g, c)| g * c).sum();
    Ok(TransportPlan { gamma: x, cost, total_cost })
}

/// Initial basic solution with exactly `n + m − 1` basic cells.
fn northwest_corner(p: &[f64], q: &[f64], x: &mut Tensor2, basic: &mut [Vec<bool>]) {
    let (n, m) = (p.len(), q.len());
    let mut supply = p.to_vec();
    let mut demand = q.to_vec();
    let (mut i, mut j) = (0, 0);
    loop {
        let amount = supply[i].min(demand[j]);
        x.set(i, j, amount);
        basic[i][j] = true;
        supply[i] -= amount;
        demand[j] -= amount;
        if i == n - 1 && j == m - 1 {
            break;
        }
        if j == m - 1 || (i < n - 1 && supply[i] <= demand[j]) {
            i += 1;
        } else {
            j += 1;
        }
    }
}

/// Dual potentials with `u₀ = 0` from the basis spanning tree.
fn potentials(cost: &Tensor2, basic: &[Vec<bool>]) -> (Vec<f64>, Vec<f64>) {
    let (n, m) = cost.shape();
    let mut u = vec![f64::NAN; n];
    let mut v = vec![f64::NAN; m];
    u[0] = 0.0;
    let mut changed = true;
    while changed {
        changed = false;
        for i in 0..n {
            for j in 0..m {
                if !basic[i][j] {
                    continue;
                }
                if !u[i].is_nan() && v[j].is_nan() {
                    v[j] = cost.get(i, j) - u[i];
                    changed = true;
                } else if u[i].is_nan() && !v[j].is_nan() {
                    u[i] = cost.get(i, j) - v[j];
                    changed = true;
                }
            }
        }
    }
    (u, v)
}

/// The unique cycle formed by adding `(ei, ej)` to the basis tree, starting
/// with the entering cell and alternating row and column moves.
fn cycle_through(basic: &[Vec<bool>], ei: usize, ej: usize) -> Vec<(usize, usize)> {
    let n = basic.len();
    let m = basic[0].len();
    // nodes 0..n are rows, n..n+m columns; search from column ej to row ei
    let mut parent = vec![usize::MAX; n + m];
    let mut stack = vec![n + ej];
    parent[n + ej] = n + ej;
    while let Some(node) = stack.pop() {
        if node == ei {
            break;
        }
        let neighbors: Vec<usize> = if node < n {
            (0..m).filter(|&j| basic[node][j]).map(|j| n + j).collect()
        } else {
            (0..n).filter(|&i| basic[i][node - n]).collect()
        };
        for nb in neighbors {
            if parent[nb] == usize::MAX {
                parent[nb] = node;
                stack.push(nb);
            }
        }
    }
    let mut cycle = vec![(ei, ej)];
    let mut node = ei;
    while node != n + ej {
        let prev = parent[node];
        let cell = if node < n { (node, prev - n) } else { (prev, node - n) };
        cycle.push(cell);
        node = prev;
    }
    cycle
}
