//! Chebyshev nodes, differentiation matrices and tensor interpolation.

use rcm::linalg::matvec;
use rcm::spectral::{cheb_coeffs_2d, cheb_diff, cheb_nodes, interpolate_at, TensorGrid2D};

fn main() -> rcm::Result<()> {
    for n in [8, 16, 24] {
        let x = cheb_nodes(n)?;
        let u: Vec<f64> = x.nodes().iter().map(|&t| (2.0 * t).sin()).collect();
        let d1 = matvec(cheb_diff(n, 1)?.matrix.as_ref(), &u);
        let d2 = matvec(cheb_diff(n, 2)?.matrix.as_ref(), &u);
        let (mut e1, mut e2) = (0.0_f64, 0.0_f64);
        for (i, &t) in x.nodes().iter().enumerate() {
            e1 = e1.max((d1[i] - 2.0 * (2.0 * t).cos()).abs());
            e2 = e2.max((d2[i] + 4.0 * (2.0 * t).sin()).abs());
        }
        println!("n = {n:2}: max error of u' {e1:.2e}, of u'' {e2:.2e}");
    }

    let grid = TensorGrid2D::new(20, 20)?;
    let f = |x: f64, y: f64| (4.0 * x * y).exp() * (1.0 - y * y);
    let interp = cheb_coeffs_2d(&grid.sample_full(f), &grid)?;
    let probes = [(0.3, -0.7), (-0.95, 0.1), (0.0, 0.0)];
    for (&(x, y), v) in probes.iter().zip(interpolate_at(&interp, &probes)?) {
        println!("interpolant at ({x:5.2}, {y:5.2}) = {v:.12}  (exact {:.12})", f(x, y));
    }
    Ok(())
}
