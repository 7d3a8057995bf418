//! Exact transportation simplex for small problems.
//!
//! The starting basis comes from the northwest-corner rule with the dummy
//! row moved to the top and the dummy column to the far right. With `M > 0`
//! the staircase can never reach the top-right (excluded) cell, so the
//! excluded cell is never basic. Pivots follow Bland's rule (smallest
//! row-major index enters, smallest row-major index leaves on ties), which
//! rules out cycling on degenerate bases and makes the result deterministic.

use std::collections::VecDeque;

use super::plan::TransportPlan;
use super::problem::BalancedProblem;
use crate::error::{Error, Result};

/// Largest row or column count (dummies included) the oracle accepts.
pub const ORACLE_MAX_DIM: usize = 16;

const MAX_PIVOTS: usize = 100_000;

struct Simplex<'a> {
    problem: &'a BalancedProblem,
    rows: usize,
    cols: usize,
    flow: Vec<f64>,
    basic: Vec<bool>,
}

impl Simplex<'_> {
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.cols + j
    }

    fn northwest_corner(&mut self) {
        let mut row_order: Vec<usize> = (0..self.rows).collect();
        let mut col_order: Vec<usize> = (0..self.cols).collect();
        if let Some((fi, fj)) = self.problem.forbidden() {
            row_order.retain(|&i| i != fi);
            row_order.insert(0, fi);
            col_order.retain(|&j| j != fj);
            col_order.push(fj);
        }
        let mut supply = self.problem.supply().to_vec();
        let mut demand = self.problem.demand().to_vec();
        let (mut a, mut b) = (0, 0);
        loop {
            let (i, j) = (row_order[a], col_order[b]);
            let x = supply[i].min(demand[j]);
            let k = self.idx(i, j);
            self.flow[k] = x;
            self.basic[k] = true;
            supply[i] -= x;
            demand[j] -= x;
            if a + 1 == self.rows && b + 1 == self.cols {
                break;
            }
            // On ties step down, except on the last row.
            if (supply[i] <= demand[j] && a + 1 < self.rows) || b + 1 == self.cols {
                a += 1;
            } else {
                b += 1;
            }
        }
    }

    /// Dual potentials with `u_0 = 0` from the basis tree.
    fn potentials(&self, adj: &[Vec<usize>]) -> (Vec<f64>, Vec<f64>) {
        let mut u = vec![f64::NAN; self.rows];
        let mut v = vec![f64::NAN; self.cols];
        u[0] = 0.0;
        let mut queue = VecDeque::from([0usize]);
        while let Some(node) = queue.pop_front() {
            for &other in &adj[node] {
                if node < self.rows {
                    let (i, j) = (node, other - self.rows);
                    if v[j].is_nan() {
                        v[j] = self.problem.cost(i, j) - u[i];
                        queue.push_back(other);
                    }
                } else {
                    let (i, j) = (other, node - self.rows);
                    if u[i].is_nan() {
                        u[i] = self.problem.cost(i, j) - v[j];
                        queue.push_back(other);
                    }
                }
            }
        }
        (u, v)
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.rows + self.cols];
        for i in 0..self.rows {
            for j in 0..self.cols {
                if self.basic[self.idx(i, j)] {
                    adj[i].push(self.rows + j);
                    adj[self.rows + j].push(i);
                }
            }
        }
        adj
    }

    /// Tree path from row `i` to column `j` as a list of cells.
    fn path(&self, adj: &[Vec<usize>], i: usize, j: usize) -> Vec<(usize, usize)> {
        let n = self.rows + self.cols;
        let mut parent = vec![usize::MAX; n];
        parent[i] = i;
        let mut queue = VecDeque::from([i]);
        while let Some(node) = queue.pop_front() {
            for &next in &adj[node] {
                if parent[next] == usize::MAX {
                    parent[next] = node;
                    queue.push_back(next);
                }
            }
        }
        let mut cells = Vec::new();
        let mut node = self.rows + j;
        while node != i {
            let prev = parent[node];
            let cell = if node < self.rows { (node, prev - self.rows) } else { (prev, node - self.rows) };
            cells.push(cell);
            node = prev;
        }
        cells
    }

    fn solve(&mut self) -> Result<usize> {
        self.northwest_corner();
        let scale = self.problem.costs().iter().fold(1.0f64, |m, c| m.max(c.abs()));
        let tol = 1e-12 * scale;
        for pivot in 0..MAX_PIVOTS {
            let adj = self.adjacency();
            let (u, v) = self.potentials(&adj);
            let entering = (0..self.rows * self.cols).find(|&k| {
                let (i, j) = (k / self.cols, k % self.cols);
                !self.basic[k]
                    && self.problem.is_allowed(i, j)
                    && self.problem.cost(i, j) - u[i] - v[j] < -tol
            });
            let Some(k) = entering else {
                return Ok(pivot);
            };
            let (ei, ej) = (k / self.cols, k % self.cols);
            // Cells from column ej back to row ei; odd positions lose flow.
            let cycle = self.path(&adj, ei, ej);
            let mut leaving: Option<(f64, usize)> = None;
            for (pos, &(i, j)) in cycle.iter().enumerate() {
                if pos % 2 == 0 {
                    let c = self.idx(i, j);
                    let x = self.flow[c];
                    leaving = match leaving {
                        Some((best, bc)) if best < x || (best == x && bc < c) => Some((best, bc)),
                        _ => Some((x, c)),
                    };
                }
            }
            let (theta, out) = leaving.expect("basis cycle has a losing cell");
            for (pos, &(i, j)) in cycle.iter().enumerate() {
                let c = self.idx(i, j);
                if pos % 2 == 0 {
                    self.flow[c] = (self.flow[c] - theta).max(0.0);
                } else {
                    self.flow[c] += theta;
                }
            }
            self.flow[k] = theta;
            self.flow[out] = 0.0;
            self.basic[k] = true;
            self.basic[out] = false;
        }
        Err(Error::Config(format!("transportation simplex exceeded {MAX_PIVOTS} pivots")))
    }
}

/// Exact optimum of a balanced problem with at most
/// [`ORACLE_MAX_DIM`] rows and columns.
pub fn exact_solve_oracle(problem: &BalancedProblem) -> Result<TransportPlan> {
    let (rows, cols) = (problem.rows(), problem.cols());
    if rows > ORACLE_MAX_DIM || cols > ORACLE_MAX_DIM {
        return Err(Error::OracleTooLarge { rows, cols });
    }
    let mut simplex = Simplex {
        problem,
        rows,
        cols,
        flow: vec![0.0; rows * cols],
        basic: vec![false; rows * cols],
    };
    let pivots = simplex.solve()?;
    if let Some((fi, fj)) = problem.forbidden() {
        debug_assert!(!simplex.basic[fi * cols + fj]);
    }
    let mut plan = problem.finish(TransportPlan::from_flows(rows, cols, simplex.flow));
    plan.iterations = pivots;
    Ok(plan)
}
