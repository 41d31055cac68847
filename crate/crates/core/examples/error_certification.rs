//! Actual errors against the residual-based bound, for both methods.

use std::sync::Arc;

use rcm::ercm::ercm_greedy_train_with;
use rcm::ercm::ErcmOptions;
use rcm::harness::TestSet;
use rcm::linalg::norm2;
use rcm::lsrcm::ls_greedy_train_with;
use rcm::problem::build_diffusion;
use rcm::reduced::{ReducedModel, TrainOptions};

fn main() -> rcm::Result<()> {
    let problem = Arc::new(build_diffusion(20)?.with_training_grid(vec![12, 12])?);
    let table = Arc::new(problem.stability_table()?);
    let opts = TrainOptions {
        n_max: 10,
        tol: 0.0,
        seed: 2,
    };
    let ls = ls_greedy_train_with(problem.clone(), Some(table.clone()), &opts)?;
    let er = ercm_greedy_train_with(problem.clone(), Some(table), &opts, ErcmOptions::default())?;
    let tests = TestSet::sample(&problem, 10, 8)?;
    for m in [&ls as &dyn ReducedModel, &er] {
        println!("{}:", m.method());
        for (mu, truth) in tests.points.iter().zip(&tests.truths).take(5) {
            let c = m.solve(mu)?;
            let u = m.reconstruct(&c);
            let err = norm2(&u.iter().zip(truth).map(|(a, b)| a - b).collect::<Vec<_>>());
            let online = m.estimate(mu, &c)?;
            let fine = m.estimate_direct(mu, &c)?;
            println!(
                "  mu ({:+.3}, {:+.3}): error {err:.3e}  bound {:.3e}  (fine-grid residual {:.3e})  effectivity {:.1}",
                mu[0],
                mu[1],
                online.delta,
                fine.delta,
                fine.delta / err
            );
        }
    }
    Ok(())
}
