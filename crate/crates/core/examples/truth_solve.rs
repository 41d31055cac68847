//! Truth solves of the built-in problems and their convergence in the grid order.

use rcm::linalg::{matvec, norm2};
use rcm::problem::build_named;
use rcm::ParameterPoint;

fn main() -> rcm::Result<()> {
    for (name, mu) in [("anisotropic", [1.0, 0.5]), ("diffusion", [0.5, -0.5])] {
        let mu = ParameterPoint::from(mu);
        let p = build_named(name, 32)?;
        let u = p.truth_solve(&mu)?.values;
        let l = p.operator_at(&mu)?;
        let f = p.rhs_at(&mu)?;
        let r: Vec<f64> = matvec(l.as_ref(), &u).iter().zip(&f).map(|(a, b)| a - b).collect();
        let peak = u.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        println!(
            "{name} at {:?}: {} unknowns, max |u| {peak:.6}, relative residual {:.1e}",
            mu.0,
            p.dofs(),
            norm2(&r) / norm2(&f)
        );
    }

    // the solution is odd in x, so watch the node (cos(π/4), 0) instead of the centre
    let mu = ParameterPoint::from([1.0, 0.5]);
    for nx in [12, 16, 20, 24, 32, 40] {
        let p = build_named("anisotropic", nx)?;
        let u = p.truth_solve(&mu)?.values;
        let node = p.grid().dof(nx / 4, nx / 2).expect("interior node");
        println!("nx = {nx:2}: u(0.7071, 0) = {:+.12}", u[node]);
    }
    Ok(())
}
