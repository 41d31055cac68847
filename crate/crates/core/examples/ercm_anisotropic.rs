//! Empirical reduced collocation: greedy parameters and greedy collocation points.

use std::sync::Arc;

use rcm::ercm::ercm_greedy_train;
use rcm::problem::build_anisotropic;
use rcm::reduced::{ReducedModel, TrainOptions};
use rcm::ParameterPoint;

fn main() -> rcm::Result<()> {
    let problem = Arc::new(build_anisotropic(24)?.with_training_grid(vec![16, 16])?);
    let opts = TrainOptions {
        n_max: 12,
        tol: 1e-8,
        seed: 1,
    };
    let model = ercm_greedy_train(problem.clone(), &opts)?;
    println!(" k  parameter            point");
    for (k, (mu, (x, y))) in model.selected().iter().zip(model.points()).enumerate() {
        println!("{:2}  ({:5.3}, {:5.3})   ({x:+.4}, {y:+.4})", k + 1, mu[0], mu[1]);
    }

    let b = model.b_matrix();
    let mut upper = 0.0_f64;
    for k in 0..b.nrows() {
        for j in k..b.ncols() {
            let target = if j == k { 1.0 } else { 0.0 };
            upper = upper.max((b[(k, j)] - target).abs());
        }
    }
    println!("B = ξ_j(x_k) departs from unit lower triangular by {upper:.1e}");

    let mu = ParameterPoint::from([1.0, 0.5]);
    let c = model.solve(&mu)?;
    let est = model.estimate(&mu, &c)?;
    let truth = problem.truth_solve(&mu)?.values;
    let err = model
        .reconstruct(&c)
        .iter()
        .zip(&truth)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    println!("at {:?}: error {err:.3e}, bound {:.3e}, condition {:.2e}", mu.0, est.delta, model.condition(&mu, model.size())?);
    Ok(())
}
