//! From transport plans to per-pixel foreground evidence.

use crate::error::{Error, Result};
use crate::ot::{cosine_similarity, MarginalWeights, TransportPlan};
use crate::tensor_io::{BinaryMask, FeatureGrid, Tensor};

/// Real-block plan with suppliers split by the support annotation.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredPlan {
    pub foreground: Vec<bool>,
    /// Flow reaching each query node from foreground suppliers.
    pub foreground_inflow: Vec<f64>,
    /// Flow reaching each query node from any supplier.
    pub total_inflow: Vec<f64>,
}

/// `H x W` map with entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl ProbabilityMap {
    pub fn new(height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != height * width || values.is_empty() {
            return Err(Error::InvalidShape(format!(
                "{height}x{width} probability map with {} values",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidShape(format!("probability {v} outside [0, 1]")));
        }
        Ok(Self { height, width, values })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_f32(vec![self.height, self.width], self.values.clone())
            .expect("probability map shape is valid")
    }
}

/// Per query node, the support node sending it the most flow, or `None`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BestMatchMap {
    pub height: usize,
    pub width: usize,
    pub matches: Vec<Option<usize>>,
}

impl BestMatchMap {
    /// Indices with `-1` for unmatched nodes.
    pub fn indices(&self) -> Vec<i64> {
        self.matches.iter().map(|m| m.map_or(-1, |i| i as i64)).collect()
    }

    /// `r,c,match_r,match_c` rows for a support grid `support_width` wide.
    pub fn to_csv(&self, support_width: usize) -> String {
        let mut out = String::from("r,c,match_r,match_c\n");
        for (j, m) in self.matches.iter().enumerate() {
            let (r, c) = (j / self.width, j % self.width);
            match m {
                Some(i) => out.push_str(&format!("{r},{c},{},{}\n", i / support_width, i % support_width)),
                None => out.push_str(&format!("{r},{c},-1,-1\n")),
            }
        }
        out
    }
}

pub fn filter_by_support_mask(plan: &TransportPlan, mask: &BinaryMask) -> Result<FilteredPlan> {
    if mask.len() != plan.rows() {
        return Err(Error::ShapeMismatch(format!(
            "support mask has {} cells, plan has {} suppliers",
            mask.len(),
            plan.rows()
        )));
    }
    let foreground: Vec<bool> = mask.values().iter().map(|&v| v == 1).collect();
    let mut foreground_inflow = vec![0.0; plan.cols()];
    let mut total_inflow = vec![0.0; plan.cols()];
    for (i, &fg) in foreground.iter().enumerate() {
        for j in 0..plan.cols() {
            let x = plan.get(i, j);
            total_inflow[j] += x;
            if fg {
                foreground_inflow[j] += x;
            }
        }
    }
    Ok(FilteredPlan { foreground, foreground_inflow, total_inflow })
}

/// `p_j = foreground inflow / u_j`, clamped to `[0, 1]`; nodes without
/// demand get 0.
pub fn foreground_probability_map(
    fp: &FilteredPlan,
    demand: &MarginalWeights,
    height: usize,
    width: usize,
) -> Result<ProbabilityMap> {
    let k = fp.foreground_inflow.len();
    if k != height * width || demand.demand.len() != k {
        return Err(Error::ShapeMismatch(format!(
            "{k} query nodes, {} demands, {height}x{width} map",
            demand.demand.len()
        )));
    }
    let values = fp
        .foreground_inflow
        .iter()
        .zip(&demand.demand)
        .map(|(&x, &u)| if u > 0.0 { (x / u).clamp(0.0, 1.0) as f32 } else { 0.0 })
        .collect();
    ProbabilityMap::new(height, width, values)
}

fn min_max_normalize(raw: &[f64]) -> Vec<f32> {
    let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 0.0 {
        return vec![0.0; raw.len()];
    }
    raw.iter().map(|&r| (((r - lo) / (hi - lo)) as f32).clamp(0.0, 1.0)).collect()
}

/// Highest cosine similarity of each query node to any foreground support
/// node, min-max normalised over the map.
pub fn prior_mask(query: &FeatureGrid, support: &FeatureGrid, mask: &BinaryMask) -> Result<ProbabilityMap> {
    if mask.len() != support.nodes() {
        return Err(Error::ShapeMismatch(format!(
            "support mask has {} cells, support grid has {} nodes",
            mask.len(),
            support.nodes()
        )));
    }
    if query.channels() != support.channels() {
        return Err(Error::ShapeMismatch("query and support channel counts differ".into()));
    }
    let fg: Vec<usize> = (0..mask.len()).filter(|&i| mask.values()[i] == 1).collect();
    if fg.is_empty() {
        return Err(Error::EmptySupportForeground);
    }
    let raw = (0..query.nodes())
        .map(|j| {
            fg.iter().try_fold(f64::NEG_INFINITY, |best, &i| {
                cosine_similarity(query.node(j), support.node(i))
                    .map(|s| best.max(s))
                    .ok_or_else(|| Error::DegenerateFeature(format!("zero-norm feature near query node {j}")))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ProbabilityMap::new(query.height(), query.width(), min_max_normalize(&raw))
}

/// Argmax supplier per query column, smallest index on ties.
pub fn best_match_map(plan: &TransportPlan, height: usize, width: usize) -> Result<BestMatchMap> {
    if plan.cols() != height * width {
        return Err(Error::ShapeMismatch(format!(
            "plan has {} demanders, map is {height}x{width}",
            plan.cols()
        )));
    }
    let matches = (0..plan.cols())
        .map(|j| {
            let mut best: Option<(usize, f64)> = None;
            for i in 0..plan.rows() {
                let x = plan.get(i, j);
                if x > 0.0 && best.is_none_or(|(_, b)| x > b) {
                    best = Some((i, x));
                }
            }
            best.map(|(i, _)| i)
        })
        .collect();
    Ok(BestMatchMap { height, width, matches })
}

pub fn threshold_prediction(p: &ProbabilityMap, tau: f64) -> Result<BinaryMask> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidThreshold(tau));
    }
    let values = p.values.iter().map(|&v| (v as f64 >= tau) as u8).collect();
    BinaryMask::new(p.height, p.width, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn plan(rows: usize, cols: usize, flows: &[f64]) -> TransportPlan {
        TransportPlan::from_flows(rows, cols, flows.to_vec())
    }

    #[test]
    fn filter_extremes() {
        let p = plan(2, 2, &[0.3, 0.2, 0.5, 0.1]);
        let all = filter_by_support_mask(&p, &BinaryMask::filled(1, 2, true).unwrap()).unwrap();
        assert_eq!(all.foreground_inflow, all.total_inflow);
        let none = filter_by_support_mask(&p, &BinaryMask::filled(2, 1, false).unwrap()).unwrap();
        assert_eq!(none.foreground_inflow, vec![0.0, 0.0]);
        assert!(matches!(
            filter_by_support_mask(&p, &BinaryMask::filled(1, 3, true).unwrap()),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn single_foreground_supplier() {
        // exact 3x3 partial plan: supplier 1 is the only foreground node
        let w = MarginalWeights::unit(3, 3, 2.0).unwrap();
        let cost = crate::ot::CostMatrix::new(3, 3, vec![0.9, 0.1, 0.8, 0.2, 0.7, 0.6, 0.5, 0.4, 0.3]).unwrap();
        let problem = crate::ot::build_partial_problem(&w, &cost).unwrap();
        let full = crate::ot::exact_solve_oracle(&problem).unwrap();
        let block = crate::ot::strip_dummies(&full, 3, 3).unwrap();
        let mask = BinaryMask::new(1, 3, vec![0, 1, 0]).unwrap();
        let fp = filter_by_support_mask(&block, &mask).unwrap();
        for j in 0..3 {
            assert_eq!(fp.foreground_inflow[j], block.get(1, j));
        }
    }

    #[test]
    fn probability_cases() {
        let fp = FilteredPlan {
            foreground: vec![true],
            foreground_inflow: vec![1.0, 0.0, 0.5, 0.3],
            total_inflow: vec![1.0, 1.0, 1.0, 0.3],
        };
        let w = MarginalWeights::new(vec![4.0], vec![1.0, 1.0, 1.0, 0.0], 1.0).unwrap();
        let p = foreground_probability_map(&fp, &w, 2, 2).unwrap();
        assert_eq!(p.values(), &[1.0, 0.0, 0.5, 0.0]);
        assert!(foreground_probability_map(&fp, &w, 1, 3).is_err());
    }

    #[test]
    fn prior_mask_cases() {
        let support = FeatureGrid::new(1, 2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let mask = BinaryMask::new(1, 2, vec![1, 0]).unwrap();
        let query = FeatureGrid::new(1, 3, 2, vec![2.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let p = prior_mask(&query, &support, &mask).unwrap();
        assert_eq!(p.values()[0], 1.0);
        assert_eq!(p.values()[1], 0.0);
        assert!((p.values()[2] - std::f32::consts::FRAC_1_SQRT_2).abs() < 1e-6);

        let flat = FeatureGrid::new(1, 3, 2, vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0]).unwrap();
        assert_eq!(prior_mask(&flat, &support, &mask).unwrap().values(), &[0.0; 3]);

        let empty = BinaryMask::new(1, 2, vec![0, 0]).unwrap();
        assert!(matches!(prior_mask(&query, &support, &empty), Err(Error::EmptySupportForeground)));
    }

    #[test]
    fn min_max_toy() {
        assert_eq!(min_max_normalize(&[0.2, 0.8]), vec![0.0, 1.0]);
    }

    #[test]
    fn best_match_cases() {
        let mut flows = vec![0.0; 8 * 3];
        flows[5 * 3] = 0.7; // column 0: only supplier 5
        flows[2 * 3 + 2] = 0.4; // column 2: tie between 2 and 7
        flows[7 * 3 + 2] = 0.4;
        let bm = best_match_map(&plan(8, 3, &flows), 1, 3).unwrap();
        assert_eq!(bm.indices(), vec![5, -1, 2]);
        let csv = bm.to_csv(4);
        assert_eq!(csv, "r,c,match_r,match_c\n0,0,1,1\n0,1,-1,-1\n0,2,0,2\n");
        assert!(best_match_map(&plan(8, 3, &flows), 2, 2).is_err());
    }

    #[test]
    fn threshold_cases() {
        let p = ProbabilityMap::new(1, 2, vec![0.4, 0.6]).unwrap();
        assert_eq!(threshold_prediction(&p, 0.5).unwrap().values(), &[0, 1]);
        assert_eq!(threshold_prediction(&p, 0.0).unwrap().values(), &[1, 1]);
        let low = ProbabilityMap::new(1, 2, vec![0.9, 0.1]).unwrap();
        assert_eq!(threshold_prediction(&low, 1.0).unwrap().count_ones(), 0);
        assert!(matches!(threshold_prediction(&p, 1.5), Err(Error::InvalidThreshold(_))));
    }

    proptest! {
        #[test]
        fn probabilities_in_range_and_mask_monotone(
            flows in prop::collection::vec(0.0f64..2.0, 12),
            bits in prop::collection::vec(any::<bool>(), 4),
            extra in 0usize..4,
        ) {
            let p = plan(4, 3, &flows);
            let mask = BinaryMask::new(2, 2, bits.iter().map(|&b| b as u8).collect()).unwrap();
            let mut bigger = mask.values().to_vec();
            bigger[extra] = 1;
            let bigger = BinaryMask::new(2, 2, bigger).unwrap();
            let w = MarginalWeights::unit(4, 3, 1.0).unwrap();
            let small = foreground_probability_map(&filter_by_support_mask(&p, &mask).unwrap(), &w, 1, 3).unwrap();
            let large = foreground_probability_map(&filter_by_support_mask(&p, &bigger).unwrap(), &w, 1, 3).unwrap();
            for (a, b) in small.values().iter().zip(large.values()) {
                prop_assert!((0.0..=1.0).contains(a));
                prop_assert!(a <= b);
            }
        }

        #[test]
        fn threshold_monotone(values in prop::collection::vec(0.0f32..=1.0, 6), t1 in 0.0f64..=1.0, t2 in 0.0f64..=1.0) {
            let (lo, hi) = (t1.min(t2), t1.max(t2));
            let p = ProbabilityMap::new(2, 3, values).unwrap();
            let a = threshold_prediction(&p, lo).unwrap();
            let b = threshold_prediction(&p, hi).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!(y <= x);
            }
        }
    }
}
