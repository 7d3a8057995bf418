use super::cost::CostMatrix;
use super::plan::TransportPlan;
use crate::error::{Error, Result};

/// Supplier and demander masses plus the mass `M` to be matched.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalWeights {
    pub supply: Vec<f64>,
    pub demand: Vec<f64>,
    pub matched: f64,
}

impl MarginalWeights {
    pub fn new(supply: Vec<f64>, demand: Vec<f64>, matched: f64) -> Result<Self> {
        let w = Self { supply, demand, matched };
        w.validate()?;
        Ok(w)
    }

    /// Unit mass on every node.
    pub fn unit(m: usize, k: usize, matched: f64) -> Result<Self> {
        Self::new(vec![1.0; m], vec![1.0; k], matched)
    }

    pub fn total_supply(&self) -> f64 {
        self.supply.iter().sum()
    }

    pub fn total_demand(&self) -> f64 {
        self.demand.iter().sum()
    }

    fn validate(&self) -> Result<()> {
        if self.supply.is_empty() || self.demand.is_empty() {
            return Err(Error::EmptyInput("marginals need at least one supplier and demander".into()));
        }
        if let Some(x) = self.supply.iter().chain(&self.demand).find(|x| !x.is_finite() || **x < 0.0) {
            return Err(Error::Config(format!("node mass {x} must be finite and nonnegative")));
        }
        if !(self.matched.is_finite() && self.matched > 0.0) {
            return Err(Error::Config(format!("matched mass {} must be positive", self.matched)));
        }
        let (ws, wd) = (self.total_supply(), self.total_demand());
        let cap = ws.min(wd);
        if self.matched > cap * (1.0 + 1e-12) {
            return Err(Error::InfeasibleFlow { matched: self.matched, supply: ws, demand: wd });
        }
        Ok(())
    }
}

/// `M = round(lambda * F)` clamped to `[1, min(m, k)]`, for unit node masses.
pub fn select_matched_mass(foreground: usize, lambda: f64, m: usize, k: usize) -> f64 {
    let cap = m.min(k).max(1) as f64;
    (lambda * foreground as f64).round().clamp(1.0, cap)
}

/// Balanced transportation problem, optionally carrying the dummy row and
/// column of the partial reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct BalancedProblem {
    rows: usize,
    cols: usize,
    cost: Vec<f64>,
    supply: Vec<f64>,
    demand: Vec<f64>,
    real_rows: usize,
    real_cols: usize,
    matched: f64,
    forbidden: Option<(usize, usize)>,
}

/// Partial problem with dummies: `w_{m+1} = w_d - M`, `u_{k+1} = w_s - M`,
/// total flow `w_d + w_s - M`, zero-cost dummy edges and no dummy-to-dummy
/// cell.
pub fn build_partial_problem(weights: &MarginalWeights, cost: &CostMatrix) -> Result<BalancedProblem> {
    weights.validate()?;
    let (m, k) = (weights.supply.len(), weights.demand.len());
    if cost.rows() != m || cost.cols() != k {
        return Err(Error::ShapeMismatch(format!(
            "cost is {}x{} but weights describe {m} suppliers and {k} demanders",
            cost.rows(),
            cost.cols()
        )));
    }
    let (ws, wd, matched) = (weights.total_supply(), weights.total_demand(), weights.matched);
    let mut supply = weights.supply.clone();
    supply.push((wd - matched).max(0.0));
    let mut demand = weights.demand.clone();
    demand.push((ws - matched).max(0.0));

    let (rows, cols) = (m + 1, k + 1);
    let mut augmented = vec![0.0; rows * cols];
    for i in 0..m {
        for j in 0..k {
            augmented[i * cols + j] = cost.get(i, j) as f64;
        }
    }
    Ok(BalancedProblem {
        rows,
        cols,
        cost: augmented,
        supply,
        demand,
        real_rows: m,
        real_cols: k,
        matched,
        forbidden: Some((m, k)),
    })
}

/// Ordinary balanced OT on the unaugmented problem; needs `w_s == w_d`.
pub fn build_full_problem(supply: Vec<f64>, demand: Vec<f64>, cost: &CostMatrix) -> Result<BalancedProblem> {
    let total = supply.iter().sum::<f64>();
    let w = MarginalWeights::new(supply, demand, total)?;
    let wd = w.total_demand();
    if (total - wd).abs() > 1e-9 * total.max(1.0) {
        return Err(Error::InfeasibleFlow { matched: total, supply: total, demand: wd });
    }
    let (m, k) = (w.supply.len(), w.demand.len());
    if cost.rows() != m || cost.cols() != k {
        return Err(Error::ShapeMismatch(format!(
            "cost is {}x{} but weights describe {m}x{k}",
            cost.rows(),
            cost.cols()
        )));
    }
    Ok(BalancedProblem {
        rows: m,
        cols: k,
        cost: cost.values().iter().map(|&c| c as f64).collect(),
        supply: w.supply,
        demand: w.demand,
        real_rows: m,
        real_cols: k,
        matched: total,
        forbidden: None,
    })
}

impl BalancedProblem {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn real_rows(&self) -> usize {
        self.real_rows
    }

    pub fn real_cols(&self) -> usize {
        self.real_cols
    }

    pub fn cost(&self, i: usize, j: usize) -> f64 {
        self.cost[i * self.cols + j]
    }

    pub fn costs(&self) -> &[f64] {
        &self.cost
    }

    pub fn supply(&self) -> &[f64] {
        &self.supply
    }

    pub fn demand(&self) -> &[f64] {
        &self.demand
    }

    /// Mass `M` that must cross the real block.
    pub fn matched(&self) -> f64 {
        self.matched
    }

    /// Total balanced flow `M(gamma)`.
    pub fn total_flow(&self) -> f64 {
        self.supply.iter().sum()
    }

    /// The excluded dummy-to-dummy cell, if the problem has dummies.
    pub fn forbidden(&self) -> Option<(usize, usize)> {
        self.forbidden
    }

    pub fn has_dummies(&self) -> bool {
        self.forbidden.is_some()
    }

    pub fn is_allowed(&self, i: usize, j: usize) -> bool {
        self.forbidden != Some((i, j))
    }

    pub fn mean_real_cost(&self) -> f64 {
        let mut sum = 0.0;
        for i in 0..self.real_rows {
            sum += self.cost[i * self.cols..i * self.cols + self.real_cols].iter().sum::<f64>();
        }
        sum / (self.real_rows * self.real_cols) as f64
    }

    /// Cost of a plan over all allowed cells; dummy edges cost zero so this
    /// is the real-block cost.
    pub fn plan_cost(&self, plan: &TransportPlan) -> f64 {
        let mut total = 0.0;
        for i in 0..self.real_rows {
            for j in 0..self.real_cols {
                total += self.cost(i, j) * plan.get(i, j);
            }
        }
        total
    }

    /// Mass on the real `m x k` block.
    pub fn real_mass(&self, plan: &TransportPlan) -> f64 {
        (0..self.real_rows)
            .map(|i| (0..self.real_cols).map(|j| plan.get(i, j)).sum::<f64>())
            .sum()
    }

    pub(crate) fn finish(&self, mut plan: TransportPlan) -> TransportPlan {
        plan.cost = self.plan_cost(&plan);
        plan.marginal_violation = plan.marginal_defect(&self.supply, &self.demand);
        plan
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn costs(m: usize, k: usize) -> CostMatrix {
        CostMatrix::new(m, k, vec![0.5; m * k]).unwrap()
    }

    #[test]
    fn substitution_instance() {
        let w = MarginalWeights::new(vec![2.0, 3.0], vec![4.0, 3.0], 4.0).unwrap();
        let p = build_partial_problem(&w, &costs(2, 2)).unwrap();
        assert_eq!(p.supply()[2], 3.0);
        assert_eq!(p.demand()[2], 1.0);
        assert_eq!(p.total_flow(), 8.0);
        assert_eq!(p.demand().iter().sum::<f64>(), 8.0);
        assert_eq!(p.forbidden(), Some((2, 2)));
        for j in 0..2 {
            assert_eq!(p.cost(2, j), 0.0);
            assert_eq!(p.cost(j, 2), 0.0);
        }
    }

    #[test]
    fn fully_balanced_has_empty_dummies() {
        let w = MarginalWeights::new(vec![1.0, 2.0], vec![2.0, 1.0], 3.0).unwrap();
        let p = build_partial_problem(&w, &costs(2, 2)).unwrap();
        assert_eq!(p.supply()[2], 0.0);
        assert_eq!(p.demand()[2], 0.0);
    }

    #[test]
    fn infeasible_and_invalid() {
        assert!(matches!(
            MarginalWeights::new(vec![2.0, 3.0], vec![4.0, 3.0], 6.0),
            Err(Error::InfeasibleFlow { .. })
        ));
        assert!(MarginalWeights::new(vec![1.0], vec![1.0], 0.0).is_err());
        assert!(MarginalWeights::new(vec![-1.0], vec![1.0], 1.0).is_err());
        let w = MarginalWeights::unit(2, 2, 1.0).unwrap();
        assert!(matches!(build_partial_problem(&w, &costs(3, 2)), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn matched_mass_selection() {
        assert_eq!(select_matched_mass(16, 1.0, 64, 64), 16.0);
        assert_eq!(select_matched_mass(0, 1.0, 64, 64), 1.0);
        assert_eq!(select_matched_mass(60, 2.0, 64, 50), 50.0);
        assert_eq!(select_matched_mass(10, 0.55, 64, 64), 6.0);
    }
}
