use crate::error::{Error, Result};

/// Nonnegative flow matrix with solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    rows: usize,
    cols: usize,
    flows: Vec<f64>,
    /// Achieved cost over the real block.
    pub cost: f64,
    /// Largest absolute row or column defect against the prescribed marginals.
    pub marginal_violation: f64,
    /// Solver iterations (Sinkhorn sweeps or simplex pivots).
    pub iterations: usize,
}

impl TransportPlan {
    pub fn from_flows(rows: usize, cols: usize, flows: Vec<f64>) -> Self {
        assert_eq!(flows.len(), rows * cols, "flow matrix shape");
        Self { rows, cols, flows, cost: 0.0, marginal_violation: 0.0, iterations: 0 }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn flows(&self) -> &[f64] {
        &self.flows
    }

    pub(crate) fn flows_mut(&mut self) -> &mut [f64] {
        &mut self.flows
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.flows[i * self.cols + j]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.flows.chunks_exact(self.cols).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for row in self.flows.chunks_exact(self.cols) {
            sums.iter_mut().zip(row).for_each(|(s, x)| *s += x);
        }
        sums
    }

    pub fn total(&self) -> f64 {
        self.flows.iter().sum()
    }

    /// Max absolute defect of the row/column sums against `supply`/`demand`.
    pub fn marginal_defect(&self, supply: &[f64], demand: &[f64]) -> f64 {
        let rows = self.row_sums().iter().zip(supply).map(|(r, a)| (r - a).abs()).fold(0.0, f64::max);
        let cols = self.col_sums().iter().zip(demand).map(|(c, b)| (c - b).abs()).fold(0.0, f64::max);
        rows.max(cols)
    }
}

/// Drops the dummy row and column of an `(m+1) x (k+1)` plan.
pub fn strip_dummies(plan: &TransportPlan, m: usize, k: usize) -> Result<TransportPlan> {
    if plan.rows != m + 1 || plan.cols != k + 1 {
        return Err(Error::ShapeMismatch(format!(
            "expected a {}x{} augmented plan, got {}x{}",
            m + 1,
            k + 1,
            plan.rows,
            plan.cols
        )));
    }
    let flows = plan
        .flows
        .chunks_exact(plan.cols)
        .take(m)
        .flat_map(|row| row[..k].iter().copied())
        .collect();
    Ok(TransportPlan { rows: m, cols: k, flows, ..plan.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strip_shapes() {
        let plan = TransportPlan::from_flows(2, 3, vec![1.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
        let block = strip_dummies(&plan, 1, 2).unwrap();
        assert_eq!(block.flows(), &[1.0, 2.0]);
        assert!(matches!(strip_dummies(&plan, 2, 2), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn sums() {
        let plan = TransportPlan::from_flows(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(plan.row_sums(), vec![3.0, 7.0]);
        assert_eq!(plan.col_sums(), vec![4.0, 6.0]);
        assert_eq!(plan.marginal_defect(&[3.0, 7.0], &[4.0, 5.0]), 1.0);
    }
}
