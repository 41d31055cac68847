//! Greedy collocation points next to a coarse Chebyshev tensor grid.

use std::sync::Arc;

use rcm::ercm::ercm_greedy_train;
use rcm::harness::studies::coarse_chebyshev_points;
use rcm::harness::{study_naive_points, TestSet};
use rcm::problem::build_anisotropic;
use rcm::reduced::{ReducedModel, TrainOptions};

fn main() -> rcm::Result<()> {
    let problem = Arc::new(build_anisotropic(24)?.with_training_grid(vec![16, 16])?);
    let model = ercm_greedy_train(
        problem.clone(),
        &TrainOptions {
            n_max: 14,
            tol: 0.0,
            seed: 1,
        },
    )?;
    println!("coarse points for n = 5: {:?}", coarse_chebyshev_points(5));
    let tests = TestSet::sample(&problem, 20, 4)?;
    println!("points     n  median condition  singular  best L∞ error");
    for r in study_naive_points(&model, &tests)? {
        println!(
            "{:9} {:2}  {:16.3e}  {:8}  {:.3e}",
            r.points, r.n, r.median_cond, r.singular, r.best_linf
        );
    }
    println!("({} basis functions, {} test parameters)", model.size(), tests.len());
    Ok(())
}
