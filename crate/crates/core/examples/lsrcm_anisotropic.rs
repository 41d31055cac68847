//! Greedy least-squares reduced collocation on the anisotropic problem.

use std::sync::Arc;

use rcm::harness::TestSet;
use rcm::linalg::norm2;
use rcm::lsrcm::ls_greedy_train;
use rcm::problem::build_anisotropic;
use rcm::reduced::{ReducedModel, TrainOptions};

fn main() -> rcm::Result<()> {
    let problem = Arc::new(build_anisotropic(24)?.with_training_grid(vec![16, 16])?);
    let opts = TrainOptions {
        n_max: 15,
        tol: 1e-8,
        seed: 1,
    };
    let model = ls_greedy_train(problem.clone(), &opts)?;
    for e in model.log() {
        println!("iteration {:2}: mu = {:?}, max bound over the lattice {:.3e}", e.iteration, e.mu.0, e.max_delta);
    }

    let tests = TestSet::sample(&problem, 20, 3)?;
    for n in [1, 5, 10, model.size()] {
        let worst = tests
            .points
            .iter()
            .zip(&tests.truths)
            .map(|(mu, truth)| {
                let u = model.reconstruct(&model.solve_n(mu, n)?);
                Ok(norm2(&u.iter().zip(truth).map(|(a, b)| a - b).collect::<Vec<_>>()))
            })
            .collect::<rcm::Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        println!("n = {n:2}: worst test error {worst:.3e}");
    }
    Ok(())
}
