use super::plan::TransportPlan;
use crate::error::{Error, Result};
use crate::tensor_io::FeatureGrid;

/// `m x k` per-unit costs, suppliers along rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f32>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 || values.len() != rows * cols {
            return Err(Error::InvalidShape(format!(
                "{rows}x{cols} cost matrix with {} entries",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::InvalidShape(format!(
                "cost entry {} at offset {pos} is negative or not finite",
                values[pos]
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.values[i * self.cols + j]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().map(|&c| c as f64).sum::<f64>() / self.values.len() as f64
    }
}

fn norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
}

/// Cosine similarity in f64; `None` when either vector has zero norm.
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> Option<f64> {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
    Some(dot / (na * nb))
}

/// `c_ij = 1 - cos(s_i, d_j)` with support nodes as suppliers and query
/// nodes as demanders, both flattened row-major. Clamped to `[0, 2]`.
pub fn cosine_cost_matrix(support: &FeatureGrid, query: &FeatureGrid) -> Result<CostMatrix> {
    if support.channels() != query.channels() {
        return Err(Error::ShapeMismatch(format!(
            "support has {} channels, query has {}",
            support.channels(),
            query.channels()
        )));
    }
    let unit = |grid: &FeatureGrid, what: &str| -> Result<Vec<Vec<f64>>> {
        (0..grid.nodes())
            .map(|i| {
                let v = grid.node(i);
                let n = norm(v);
                if n == 0.0 {
                    return Err(Error::DegenerateFeature(format!("{what} node {i} has zero norm")));
                }
                Ok(v.iter().map(|&x| x as f64 / n).collect())
            })
            .collect()
    };
    let s = unit(support, "support")?;
    let d = unit(query, "query")?;
    let mut values = Vec::with_capacity(s.len() * d.len());
    for si in &s {
        for dj in &d {
            let cos: f64 = si.iter().zip(dj).map(|(a, b)| a * b).sum();
            values.push((1.0 - cos).clamp(0.0, 2.0) as f32);
        }
    }
    CostMatrix::new(s.len(), d.len(), values)
}

/// `sum_ij c_ij x_ij` over a real-block plan.
pub fn transport_cost(plan: &TransportPlan, cost: &CostMatrix) -> Result<f64> {
    if plan.rows() != cost.rows() || plan.cols() != cost.cols() {
        return Err(Error::ShapeMismatch(format!(
            "plan is {}x{}, cost is {}x{}",
            plan.rows(),
            plan.cols(),
            cost.rows(),
            cost.cols()
        )));
    }
    Ok(plan
        .flows()
        .iter()
        .zip(cost.values())
        .map(|(&x, &c)| x * c as f64)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(v: &[f32]) -> FeatureGrid {
        FeatureGrid::new(1, 1, v.len(), v.to_vec()).unwrap()
    }

    #[test]
    fn analytic_cases() {
        let c = |a: &[f32], b: &[f32]| cosine_cost_matrix(&grid(a), &grid(b)).unwrap().get(0, 0);
        assert_eq!(c(&[1.0, 0.0], &[1.0, 0.0]), 0.0);
        assert_eq!(c(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
        assert_eq!(c(&[1.0, 0.0], &[-1.0, 0.0]), 2.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            cosine_cost_matrix(&grid(&[0.0, 0.0]), &grid(&[1.0, 0.0])),
            Err(Error::DegenerateFeature(_))
        ));
        assert!(matches!(
            cosine_cost_matrix(&grid(&[1.0, 0.0]), &grid(&[1.0, 0.0, 0.0, 0.0])),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn transport_cost_cases() {
        let cost = CostMatrix::new(2, 2, vec![0.1, 5.0, 5.0, 0.2]).unwrap();
        let zero = TransportPlan::from_flows(2, 2, vec![0.0; 4]);
        assert_eq!(transport_cost(&zero, &cost).unwrap(), 0.0);
        let diag = TransportPlan::from_flows(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        assert!((transport_cost(&diag, &cost).unwrap() - 0.3).abs() < 1e-7);
        let bad = TransportPlan::from_flows(1, 2, vec![0.0; 2]);
        assert!(matches!(transport_cost(&bad, &cost), Err(Error::ShapeMismatch(_))));
    }
}
