use super::plan::TransportPlan;
use super::problem::BalancedProblem;

/// Projects a nonnegative plan onto the feasible set of `problem`.
///
/// Rows over their supply are scaled down, then columns over their demand.
/// The remaining row and column deficits are filled greedily in order of
/// increasing cost. If the only deficits left are on the dummy row and the
/// dummy column, whose shared cell is excluded, mass is rerouted through the
/// most expensive occupied real cells: `x_ij -= d`, `x_{m+1,j} += d`,
/// `x_{i,k+1} += d`, which keeps every marginal of real nodes intact.
pub fn round_to_feasible(plan: &TransportPlan, problem: &BalancedProblem) -> TransportPlan {
    let (rows, cols) = (problem.rows(), problem.cols());
    assert_eq!((plan.rows(), plan.cols()), (rows, cols), "plan does not match problem");
    let mut out = TransportPlan::from_flows(rows, cols, plan.flows().to_vec());
    let x = out.flows_mut();
    for v in x.iter_mut() {
        if !(*v > 0.0) {
            *v = 0.0;
        }
    }
    if let Some((fi, fj)) = problem.forbidden() {
        x[fi * cols + fj] = 0.0;
    }

    let supply = problem.supply();
    let demand = problem.demand();
    for i in 0..rows {
        let row = &mut x[i * cols..(i + 1) * cols];
        let sum: f64 = row.iter().sum();
        if sum > supply[i] {
            let s = if sum > 0.0 { supply[i] / sum } else { 0.0 };
            row.iter_mut().for_each(|v| *v *= s);
        }
    }
    for j in 0..cols {
        let sum: f64 = (0..rows).map(|i| x[i * cols + j]).sum();
        if sum > demand[j] {
            let s = if sum > 0.0 { demand[j] / sum } else { 0.0 };
            (0..rows).for_each(|i| x[i * cols + j] *= s);
        }
    }

    let mut row_gap: Vec<f64> = (0..rows)
        .map(|i| (supply[i] - x[i * cols..(i + 1) * cols].iter().sum::<f64>()).max(0.0))
        .collect();
    let mut col_gap: Vec<f64> = (0..cols)
        .map(|j| (demand[j] - (0..rows).map(|i| x[i * cols + j]).sum::<f64>()).max(0.0))
        .collect();

    let open_rows: Vec<usize> = (0..rows).filter(|&i| row_gap[i] > 0.0).collect();
    let open_cols: Vec<usize> = (0..cols).filter(|&j| col_gap[j] > 0.0).collect();
    let mut cells: Vec<(usize, usize)> = open_rows
        .iter()
        .flat_map(|&i| open_cols.iter().map(move |&j| (i, j)))
        .filter(|&(i, j)| problem.is_allowed(i, j))
        .collect();
    cells.sort_by(|a, b| {
        problem
            .cost(a.0, a.1)
            .total_cmp(&problem.cost(b.0, b.1))
            .then(a.cmp(b))
    });
    for (i, j) in cells {
        let d = row_gap[i].min(col_gap[j]);
        if d > 0.0 {
            x[i * cols + j] += d;
            row_gap[i] -= d;
            col_gap[j] -= d;
        }
    }

    if let Some((fi, fj)) = problem.forbidden() {
        let mut left = row_gap[fi].min(col_gap[fj]);
        if left > 0.0 {
            let mut real: Vec<(usize, usize)> = (0..problem.real_rows())
                .flat_map(|i| (0..problem.real_cols()).map(move |j| (i, j)))
                .filter(|&(i, j)| x[i * cols + j] > 0.0)
                .collect();
            real.sort_by(|a, b| {
                problem
                    .cost(b.0, b.1)
                    .total_cmp(&problem.cost(a.0, a.1))
                    .then(a.cmp(b))
            });
            for (i, j) in real {
                if left <= 0.0 {
                    break;
                }
                let d = left.min(x[i * cols + j]);
                x[i * cols + j] -= d;
                x[fi * cols + j] += d;
                x[i * cols + fj] += d;
                left -= d;
            }
        }
    }

    problem.finish(out)
}
