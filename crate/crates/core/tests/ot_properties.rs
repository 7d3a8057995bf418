use flowmatch::ot::{
    build_full_problem, build_partial_problem, cosine_cost_matrix, exact_solve_oracle, sinkhorn_solve,
    strip_dummies, transport_cost, CostMatrix, MarginalWeights, SinkhornConfig,
};
use flowmatch::{Error, FeatureGrid};
use proptest::prelude::*;

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f32>)> {
    (1usize..=5, 1usize..=5).prop_flat_map(|(m, k)| {
        (
            prop::collection::vec(1u8..=4, m).prop_map(|v| v.into_iter().map(f64::from).collect()),
            prop::collection::vec(1u8..=4, k).prop_map(|v| v.into_iter().map(f64::from).collect()),
            prop::collection::vec(0.0f32..2.0, m * k),
        )
    })
}

fn capacity(supply: &[f64], demand: &[f64]) -> f64 {
    supply.iter().sum::<f64>().min(demand.iter().sum())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn real_block_carries_matched_mass((supply, demand, costs) in instance(), frac in 0.0f64..1.0) {
        let (m, k) = (supply.len(), demand.len());
        let matched = (frac * capacity(&supply, &demand)).floor().max(1.0);
        let cost = CostMatrix::new(m, k, costs).unwrap();
        let w = MarginalWeights::new(supply, demand, matched).unwrap();
        let p = build_partial_problem(&w, &cost).unwrap();
        for plan in [exact_solve_oracle(&p).unwrap(), sinkhorn_solve(&p, &SinkhornConfig::default()).unwrap()] {
            let real = strip_dummies(&plan, m, k).unwrap();
            prop_assert!((real.total() - matched).abs() < 1e-9);
            prop_assert!((transport_cost(&real, &cost).unwrap() - plan.cost).abs() < 1e-9);
            prop_assert!(real.row_sums().iter().zip(&w.supply).all(|(r, s)| *r <= s + 1e-9));
            prop_assert!(real.col_sums().iter().zip(&w.demand).all(|(c, d)| *c <= d + 1e-9));
        }
    }

    #[test]
    fn oracle_cost_is_permutation_invariant((supply, demand, costs) in instance(), rot in 0usize..5) {
        let (m, k) = (supply.len(), demand.len());
        let matched = capacity(&supply, &demand);
        let base = {
            let w = MarginalWeights::new(supply.clone(), demand.clone(), matched).unwrap();
            exact_solve_oracle(&build_partial_problem(&w, &CostMatrix::new(m, k, costs.clone()).unwrap()).unwrap()).unwrap()
        };
        // Rotate the suppliers.
        let r = rot % m;
        let order: Vec<usize> = (0..m).map(|i| (i + r) % m).collect();
        let supply2: Vec<f64> = order.iter().map(|&i| supply[i]).collect();
        let costs2: Vec<f32> = order.iter().flat_map(|&i| costs[i * k..(i + 1) * k].to_vec()).collect();
        let w = MarginalWeights::new(supply2, demand, matched).unwrap();
        let permuted = exact_solve_oracle(&build_partial_problem(&w, &CostMatrix::new(m, k, costs2).unwrap()).unwrap()).unwrap();
        prop_assert!((base.cost - permuted.cost).abs() < 1e-9);
    }

    #[test]
    fn oracle_cost_grows_with_matched_mass((supply, demand, costs) in instance()) {
        let (m, k) = (supply.len(), demand.len());
        let cost = CostMatrix::new(m, k, costs).unwrap();
        let mut previous = 0.0;
        for matched in 1..=capacity(&supply, &demand) as u32 {
            let w = MarginalWeights::new(supply.clone(), demand.clone(), matched as f64).unwrap();
            let c = exact_solve_oracle(&build_partial_problem(&w, &cost).unwrap()).unwrap().cost;
            prop_assert!(c >= previous);
            previous = c;
        }
    }

    #[test]
    fn cosine_cost_ignores_positive_scale(
        a in prop::collection::vec(-5.0f32..5.0, 4),
        b in prop::collection::vec(-5.0f32..5.0, 4),
        s in 0.01f32..100.0,
    ) {
        prop_assume!(a.iter().any(|x| x.abs() > 1e-3) && b.iter().any(|x| x.abs() > 1e-3));
        let grid = |v: &[f32]| FeatureGrid::new(1, 1, 4, v.to_vec()).unwrap();
        let scaled: Vec<f32> = a.iter().map(|x| x * s).collect();
        let c1 = cosine_cost_matrix(&grid(&a), &grid(&b)).unwrap().get(0, 0);
        let c2 = cosine_cost_matrix(&grid(&scaled), &grid(&b)).unwrap().get(0, 0);
        prop_assert!((0.0..=2.0).contains(&c1));
        prop_assert!((c1 - c2).abs() <= 1e-6);
    }
}

#[test]
fn matched_mass_above_capacity_is_infeasible() {
    let cost = CostMatrix::new(2, 2, vec![0.1; 4]).unwrap();
    let w = MarginalWeights::new(vec![2.0, 3.0], vec![4.0, 3.0], 6.0);
    let err = w.and_then(|w| build_partial_problem(&w, &cost)).unwrap_err();
    assert!(matches!(err, Error::InfeasibleFlow { .. }), "{err:?}");
}

#[test]
fn fully_balanced_partial_has_empty_dummies() {
    let cost = CostMatrix::new(2, 2, vec![0.3, 0.1, 0.2, 0.4]).unwrap();
    let w = MarginalWeights::new(vec![1.0, 2.0], vec![2.0, 1.0], 3.0).unwrap();
    let p = build_partial_problem(&w, &cost).unwrap();
    assert_eq!(p.supply()[2], 0.0);
    assert_eq!(p.demand()[2], 0.0);
    let full = build_full_problem(vec![1.0, 2.0], vec![2.0, 1.0], &cost).unwrap();
    let a = exact_solve_oracle(&p).unwrap().cost;
    let b = exact_solve_oracle(&full).unwrap().cost;
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn zero_vector_is_degenerate() {
    let s = FeatureGrid::new(1, 2, 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
    let q = FeatureGrid::new(1, 1, 2, vec![1.0, 1.0]).unwrap();
    assert!(matches!(cosine_cost_matrix(&s, &q), Err(Error::DegenerateFeature(_))));
    let wide = FeatureGrid::new(1, 1, 4, vec![1.0; 4]).unwrap();
    assert!(matches!(cosine_cost_matrix(&q, &wide), Err(Error::ShapeMismatch(_))));
}
