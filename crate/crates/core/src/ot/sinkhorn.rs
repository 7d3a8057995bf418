//! Entropic Sinkhorn in the log domain.
//!
//! Potentials `f`, `g` parametrise the plan
//! `x_ij = exp((f_i + g_j - c_ij) / eps)` over the allowed cells. The
//! excluded dummy corner has no kernel entry at all, and zero-mass nodes are
//! dropped from the iteration. Near convergence the alternating updates are
//! Anderson-accelerated, with plain sweeps as the fallback.

use super::plan::TransportPlan;
use super::problem::BalancedProblem;
use super::rounding::round_to_feasible;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornConfig {
    /// Regulariser as a fraction of the mean real-block cost.
    pub epsilon_scale: f64,
    /// Sweep budget per annealing stage.
    pub max_iters: usize,
    /// Target max marginal defect.
    pub tolerance: f64,
    /// Number of times eps is halved after the first stage.
    pub anneal_steps: usize,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self { epsilon_scale: 0.05, max_iters: 1000, tolerance: 1e-6, anneal_steps: 3 }
    }
}

impl SinkhornConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_scale.is_finite() && self.epsilon_scale > 0.0) {
            return Err(Error::Config(format!("epsilon_scale must be > 0, got {}", self.epsilon_scale)));
        }
        if self.max_iters < 1 {
            return Err(Error::Config("max_iters must be >= 1".into()));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::Config(format!("tolerance must be > 0, got {}", self.tolerance)));
        }
        Ok(())
    }

    /// Base regulariser `epsilon_scale * mean(real-block cost)`; falls back
    /// to `epsilon_scale` when every cost is zero.
    pub fn base_epsilon(&self, problem: &BalancedProblem) -> f64 {
        let mean = problem.mean_real_cost();
        if mean > 0.0 {
            self.epsilon_scale * mean
        } else {
            self.epsilon_scale
        }
    }
}

/// Sparse-by-structure view of the active cells.
struct Kernel<'a> {
    problem: &'a BalancedProblem,
    rows: Vec<usize>,
    cols: Vec<usize>,
    log_supply: Vec<f64>,
    log_demand: Vec<f64>,
    min_mass: f64,
}

impl Kernel<'_> {
    fn allowed(&self, i: usize, j: usize) -> bool {
        self.problem.is_allowed(i, j)
    }

    fn update_rows(&self, f: &mut [f64], g: &[f64], eps: f64) {
        for (a, &i) in self.rows.iter().enumerate() {
            let mut max = f64::NEG_INFINITY;
            for &j in &self.cols {
                if self.allowed(i, j) {
                    max = max.max((g[j] - self.problem.cost(i, j)) / eps);
                }
            }
            let mut sum = 0.0;
            for &j in &self.cols {
                if self.allowed(i, j) {
                    sum += ((g[j] - self.problem.cost(i, j)) / eps - max).exp();
                }
            }
            f[i] = eps * (self.log_supply[a] - max - sum.ln());
        }
    }

    fn update_cols(&self, f: &[f64], g: &mut [f64], eps: f64) {
        for (b, &j) in self.cols.iter().enumerate() {
            let mut max = f64::NEG_INFINITY;
            for &i in &self.rows {
                if self.allowed(i, j) {
                    max = max.max((f[i] - self.problem.cost(i, j)) / eps);
                }
            }
            let mut sum = 0.0;
            for &i in &self.rows {
                if self.allowed(i, j) {
                    sum += ((f[i] - self.problem.cost(i, j)) / eps - max).exp();
                }
            }
            g[j] = eps * (self.log_demand[b] - max - sum.ln());
        }
    }

    fn plan(&self, f: &[f64], g: &[f64], eps: f64) -> TransportPlan {
        let (rows, cols) = (self.problem.rows(), self.problem.cols());
        let mut flows = vec![0.0; rows * cols];
        for &i in &self.rows {
            for &j in &self.cols {
                if self.allowed(i, j) {
                    flows[i * cols + j] = ((f[i] + g[j] - self.problem.cost(i, j)) / eps).exp();
                }
            }
        }
        TransportPlan::from_flows(rows, cols, flows)
    }

    /// Row defect; columns are exact right after a column update.
    fn row_defect(&self, f: &[f64], g: &[f64], eps: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for (a, &i) in self.rows.iter().enumerate() {
            let mut sum = 0.0;
            for &j in &self.cols {
                if self.allowed(i, j) {
                    sum += ((f[i] + g[j] - self.problem.cost(i, j)) / eps).exp();
                }
            }
            worst = worst.max((sum - self.log_supply[a].exp()).abs());
        }
        worst
    }
}

const ANDERSON_DEPTH: usize = 5;
/// Extrapolation only pays off near the solution; far from it plain sweeps
/// are used. Relative to the smallest active marginal.
const ACCELERATE_BELOW: f64 = 1e-2;

/// Anderson mixing of the column-potential fixed-point map. Degenerate
/// instances (a subset of rows exactly balancing a subset of columns) leave
/// a near-neutral shift between blocks that plain alternation relaxes very
/// slowly; extrapolating over recent residuals removes it.
struct Anderson {
    depth: usize,
    last: Option<(DVector<f64>, DVector<f64>)>,
    d_image: Vec<DVector<f64>>,
    d_residual: Vec<DVector<f64>>,
}

impl Anderson {
    fn new(depth: usize) -> Self {
        Self { depth, last: None, d_image: Vec::new(), d_residual: Vec::new() }
    }

    fn is_active(&self) -> bool {
        self.last.is_some()
    }

    fn reset(&mut self) {
        self.last = None;
        self.d_image.clear();
        self.d_residual.clear();
    }

    /// Given the input `g` and its image `next` under one sweep, returns the
    /// extrapolated input for the following sweep (active columns only).
    fn mix(&mut self, active: &[usize], g: &[f64], mut next: Vec<f64>) -> Vec<f64> {
        // A common shift of all column potentials is absorbed by the row
        // update, so mixing happens on centred vectors; otherwise the
        // extrapolation can wander along that flat direction.
        let centred = |v: &[f64]| {
            let x = DVector::from_iterator(active.len(), active.iter().map(|&j| v[j]));
            let mean = x.mean();
            x.add_scalar(-mean)
        };
        let image = centred(&next);
        let residual = &image - centred(g);
        if let Some((prev_image, prev_residual)) = self.last.take() {
            if self.d_image.len() == self.depth {
                self.d_image.remove(0);
                self.d_residual.remove(0);
            }
            self.d_image.push(&image - prev_image);
            self.d_residual.push(&residual - prev_residual);
        }
        self.last = Some((image.clone(), residual.clone()));
        if self.d_residual.is_empty() {
            return next;
        }
        let dr = DMatrix::from_columns(&self.d_residual);
        let Ok(gamma) = dr.svd(true, true).solve(&residual, 1e-12) else {
            return next;
        };
        let dg = DMatrix::from_columns(&self.d_image);
        let mixed = &image - dg * gamma;
        if mixed.iter().any(|v| !v.is_finite()) {
            self.reset();
            return next;
        }
        for (&j, v) in active.iter().zip(mixed.iter()) {
            next[j] = *v;
        }
        next
    }
}

/// Solves the entropic problem with eps annealed from the base value by
/// `anneal_steps` halvings, warm-starting each stage, then rounds the
/// result onto the feasible set.
pub fn sinkhorn_solve(problem: &BalancedProblem, cfg: &SinkhornConfig) -> Result<TransportPlan> {
    cfg.validate()?;
    let rows: Vec<usize> = (0..problem.rows()).filter(|&i| problem.supply()[i] > 0.0).collect();
    let cols: Vec<usize> = (0..problem.cols()).filter(|&j| problem.demand()[j] > 0.0).collect();
    let kernel = Kernel {
        problem,
        log_supply: rows.iter().map(|&i| problem.supply()[i].ln()).collect(),
        log_demand: cols.iter().map(|&j| problem.demand()[j].ln()).collect(),
        min_mass: rows
            .iter()
            .map(|&i| problem.supply()[i])
            .chain(cols.iter().map(|&j| problem.demand()[j]))
            .fold(f64::INFINITY, f64::min),
        rows,
        cols,
    };

    let mut f = vec![0.0; problem.rows()];
    let mut g = vec![0.0; problem.cols()];
    let base = cfg.base_epsilon(problem);
    let mut eps = base;
    let mut iterations = 0;
    let mut defect = f64::INFINITY;
    for stage in 0..=cfg.anneal_steps {
        eps = base / f64::powi(2.0, stage as i32);
        let mut mixer = Anderson::new(ANDERSON_DEPTH);
        let mut best: Option<(Vec<f64>, Vec<f64>, f64)> = None;
        let (mut plain, mut stall, mut cooldown) = (0, 0, ANDERSON_DEPTH);
        for _ in 0..cfg.max_iters {
            kernel.update_rows(&mut f, &g, eps);
            let mut next = g.clone();
            kernel.update_cols(&f, &mut next, eps);
            iterations += 1;
            let d = kernel.row_defect(&f, &next, eps);
            let best_defect = best.as_ref().map_or(f64::INFINITY, |b| b.2);
            if d < best_defect {
                best = Some((f.clone(), next.clone(), d));
                stall = 0;
            } else {
                stall += 1;
            }
            if d < cfg.tolerance {
                break;
            }
            let overshoot = !(d <= 10.0 * best_defect);
            if mixer.is_active() && (overshoot || stall >= ANDERSON_DEPTH) {
                // Extrapolation overshot or stalled: fall back to plain
                // sweeps for a while, from the best state after an overshoot.
                mixer.reset();
                cooldown *= 2;
                plain = cooldown;
                stall = 0;
                g = match (&best, overshoot) {
                    (Some(b), true) => b.1.clone(),
                    _ => next,
                };
                continue;
            }
            if plain == 0 && d < ACCELERATE_BELOW * kernel.min_mass {
                g = mixer.mix(&kernel.cols, &g, next);
            } else {
                plain = plain.saturating_sub(1);
                stall = 0;
                g = next;
            }
        }
        if let Some((bf, bg, d)) = best {
            f = bf;
            g = bg;
            defect = d;
        }
    }
    if !(defect <= 100.0 * cfg.tolerance) {
        return Err(Error::Convergence { iterations, defect });
    }

    let mut plan = round_to_feasible(&kernel.plan(&f, &g, eps), problem);
    plan.iterations = iterations;
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ot::{build_partial_problem, CostMatrix, MarginalWeights};

    #[test]
    fn single_cell() {
        let w = MarginalWeights::new(vec![1.0], vec![1.0], 1.0).unwrap();
        let p = build_partial_problem(&w, &CostMatrix::new(1, 1, vec![0.5]).unwrap()).unwrap();
        let plan = sinkhorn_solve(&p, &SinkhornConfig::default()).unwrap();
        assert!((plan.get(0, 0) - 1.0).abs() < 1e-9);
        assert!((plan.cost - 0.5).abs() < 1e-9);
        assert_eq!(plan.get(1, 1), 0.0);
    }

    #[test]
    fn uniform_cost_is_uniform_plan() {
        let w = MarginalWeights::new(vec![1.0, 1.0], vec![1.0, 1.0], 2.0).unwrap();
        let p = build_partial_problem(&w, &CostMatrix::new(2, 2, vec![0.7; 4]).unwrap()).unwrap();
        let plan = sinkhorn_solve(&p, &SinkhornConfig::default()).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((plan.get(i, j) - 0.5).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn unique_plan_with_dummies_converges() {
        let w = MarginalWeights::new(vec![5.0], vec![4.0], 3.0).unwrap();
        let p = build_partial_problem(&w, &CostMatrix::new(1, 1, vec![1.2234759]).unwrap()).unwrap();
        let cfg = SinkhornConfig { epsilon_scale: 0.01, ..Default::default() };
        let plan = sinkhorn_solve(&p, &cfg).unwrap();
        assert!((plan.get(0, 0) - 3.0).abs() < 1e-9);
        assert!((plan.get(0, 1) - 2.0).abs() < 1e-9);
        assert!((plan.get(1, 0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn balanced_blocks_converge_within_default_budget() {
        // Rows {0} and {1, 2} exactly balance columns {0} and {1, 2}, so the
        // optimum splits into blocks joined only through tiny entropic flow.
        let costs = vec![0.01, 0.9, 0.95, 0.9, 0.02, 0.05, 0.85, 0.04, 0.03];
        let w = MarginalWeights::new(vec![2.0, 3.0, 1.0], vec![2.0, 1.0, 3.0], 6.0).unwrap();
        let p = build_partial_problem(&w, &CostMatrix::new(3, 3, costs).unwrap()).unwrap();
        for scale in [0.05, 0.01] {
            let cfg = SinkhornConfig { epsilon_scale: scale, ..Default::default() };
            let plan = sinkhorn_solve(&p, &cfg).unwrap();
            assert!(plan.marginal_defect(p.supply(), p.demand()) < 1e-9);
            assert!((plan.get(0, 0) - 2.0).abs() < 1e-3, "{:?}", plan.flows());
        }
    }

    #[test]
    fn rejects_bad_config() {
        let w = MarginalWeights::unit(1, 1, 1.0).unwrap();
        let p = build_partial_problem(&w, &CostMatrix::new(1, 1, vec![0.5]).unwrap()).unwrap();
        let cfg = SinkhornConfig { epsilon_scale: 0.0, ..Default::default() };
        assert!(matches!(sinkhorn_solve(&p, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn starved_budget_reports_defect() {
        let costs: Vec<f32> = (0..36).map(|i| ((i * 7919) % 13) as f32 / 6.5).collect();
        let w = MarginalWeights::new(vec![3.0, 1.0, 4.0, 1.0, 5.0, 2.0], vec![2.0, 6.0, 5.0, 3.0, 1.0, 1.0], 9.0).unwrap();
        let p = build_partial_problem(&w, &CostMatrix::new(6, 6, costs).unwrap()).unwrap();
        let cfg = SinkhornConfig { epsilon_scale: 0.001, max_iters: 1, tolerance: 1e-12, anneal_steps: 0 };
        match sinkhorn_solve(&p, &cfg) {
            Err(Error::Convergence { defect, .. }) => assert!(defect > 1e-10),
            other => panic!("expected convergence error, got {other:?}"),
        }
    }
}
