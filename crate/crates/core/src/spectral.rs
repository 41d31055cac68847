//! Chebyshev–Gauss–Lobatto grids, collocation differentiation matrices and the
//! tensor Chebyshev expansion used to move fine-grid data to arbitrary points.
//!
//! Node ordering follows `x_j = cos(πj/n)`, so nodes run from `1` down to `-1`.
//! Full-grid 2-D arrays are stored row-major in `(x-index, y-index)`.

use std::f64::consts::PI;

use faer::Mat;

use crate::error::{Error, Result};

/// `cos(π m / n)` with the argument reduced modulo `2n` first.
fn cos_pi_ratio(m: usize, n: usize) -> f64 {
    let r = m % (2 * n);
    (PI * r as f64 / n as f64).cos()
}

/// `T_k(x) = cos(k arccos x)` for `|x| ≤ 1`.
pub fn chebyshev_t(k: usize, x: f64) -> f64 {
    (k as f64 * x.clamp(-1.0, 1.0).acos()).cos()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChebGrid1D {
    n: usize,
    nodes: Vec<f64>,
}

impl ChebGrid1D {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidOrder(n));
        }
        let nodes = (0..=n).map(|j| (PI * j as f64 / n as f64).cos()).collect();
        Ok(ChebGrid1D { n, nodes })
    }

    /// Polynomial order; the grid has `order + 1` nodes.
    pub fn order(&self) -> usize {
        self.n
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn interior(&self) -> &[f64] {
        &self.nodes[1..self.n]
    }
}

pub fn cheb_nodes(n: usize) -> Result<ChebGrid1D> {
    ChebGrid1D::new(n)
}

#[derive(Clone, Debug)]
pub struct DiffOp1D {
    pub order: usize,
    pub matrix: Mat<f64>,
}

fn first_derivative(n: usize) -> Mat<f64> {
    let c = |i: usize| if i == 0 || i == n { 2.0 } else { 1.0 };
    let mut d = Mat::<f64>::zeros(n + 1, n + 1);
    for i in 0..=n {
        for j in 0..=n {
            if i == j {
                continue;
            }
            // x_i - x_j = -2 sin(π(i+j)/2n) sin(π(i-j)/2n), exact-in-trig form
            let diff = -2.0
                * (PI * (i + j) as f64 / (2 * n) as f64).sin()
                * (PI * (i as f64 - j as f64) / (2 * n) as f64).sin();
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            d[(i, j)] = c(i) / c(j) * sign / diff;
        }
    }
    // negative-sum trick
    for i in 0..=n {
        let s: f64 = (0..=n).filter(|&j| j != i).map(|j| d[(i, j)]).sum();
        d[(i, i)] = -s;
    }
    d
}

pub fn cheb_diff(n: usize, order: usize) -> Result<DiffOp1D> {
    if n < 2 {
        return Err(Error::InvalidOrder(n));
    }
    let d1 = first_derivative(n);
    let matrix = match order {
        1 => d1,
        2 => &d1 * &d1,
        other => return Err(Error::UnsupportedDerivative(other)),
    };
    Ok(DiffOp1D { order, matrix })
}

/// Tensor product of two Chebyshev grids; unknowns live on interior sites only.
#[derive(Clone, Debug)]
pub struct TensorGrid2D {
    pub gx: ChebGrid1D,
    pub gy: ChebGrid1D,
}

impl TensorGrid2D {
    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        Ok(TensorGrid2D {
            gx: ChebGrid1D::new(nx)?,
            gy: ChebGrid1D::new(ny)?,
        })
    }

    pub fn nx(&self) -> usize {
        self.gx.order()
    }

    pub fn ny(&self) -> usize {
        self.gy.order()
    }

    /// Interior sites along x and y.
    pub fn interior_shape(&self) -> (usize, usize) {
        (self.nx() - 1, self.ny() - 1)
    }

    pub fn interior_count(&self) -> usize {
        let (mx, my) = self.interior_shape();
        mx * my
    }

    pub fn full_count(&self) -> usize {
        (self.nx() + 1) * (self.ny() + 1)
    }

    /// Flat dof index of lattice site `(i, j)`, or `None` on the boundary.
    pub fn dof(&self, i: usize, j: usize) -> Option<usize> {
        let (nx, ny) = (self.nx(), self.ny());
        if i == 0 || j == 0 || i >= nx || j >= ny {
            return None;
        }
        Some((i - 1) * (ny - 1) + (j - 1))
    }

    /// Lattice site `(i, j)` of a dof.
    pub fn site(&self, dof: usize) -> (usize, usize) {
        let my = self.ny() - 1;
        (dof / my + 1, dof % my + 1)
    }

    pub fn point(&self, dof: usize) -> (f64, f64) {
        let (i, j) = self.site(dof);
        (self.gx.nodes()[i], self.gy.nodes()[j])
    }

    pub fn interior_points(&self) -> Vec<(f64, f64)> {
        (0..self.interior_count()).map(|d| self.point(d)).collect()
    }

    /// Zero-extend interior values to the full tensor grid.
    pub fn embed(&self, interior: &[f64]) -> Vec<f64> {
        assert_eq!(interior.len(), self.interior_count());
        let (nx, ny) = (self.nx(), self.ny());
        let mut full = vec![0.0; (nx + 1) * (ny + 1)];
        for i in 1..nx {
            let src = &interior[(i - 1) * (ny - 1)..i * (ny - 1)];
            full[i * (ny + 1) + 1..i * (ny + 1) + ny].copy_from_slice(src);
        }
        full
    }

    /// Interior values of a full-grid array.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        assert_eq!(full.len(), self.full_count());
        let (nx, ny) = (self.nx(), self.ny());
        let mut out = Vec::with_capacity(self.interior_count());
        for i in 1..nx {
            out.extend_from_slice(&full[i * (ny + 1) + 1..i * (ny + 1) + ny]);
        }
        out
    }

    /// Sample `f(x, y)` on every node of the full grid.
    pub fn sample_full(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.full_count());
        for &x in self.gx.nodes() {
            for &y in self.gy.nodes() {
                out.push(f(x, y));
            }
        }
        out
    }
}

/// Tensor Chebyshev coefficients `a[k1][k2]` of data given on a full tensor grid.
#[derive(Clone, Debug)]
pub struct SpectralInterpolant {
    nx: usize,
    ny: usize,
    coeffs: Vec<f64>,
}

/// Matrix `C[k][j] = 2 / (n c_k c_j) cos(πjk/n)` of the discrete Chebyshev transform.
fn transform_matrix(n: usize) -> Vec<f64> {
    let c = |i: usize| if i == 0 || i == n { 2.0 } else { 1.0 };
    let mut m = vec![0.0; (n + 1) * (n + 1)];
    for k in 0..=n {
        for j in 0..=n {
            m[k * (n + 1) + j] = 2.0 / (n as f64 * c(k) * c(j)) * cos_pi_ratio(j * k, n);
        }
    }
    m
}

pub fn cheb_coeffs_2d(values: &[f64], grid: &TensorGrid2D) -> Result<SpectralInterpolant> {
    let (nx, ny) = (grid.nx(), grid.ny());
    if values.len() != (nx + 1) * (ny + 1) {
        return Err(Error::Shape(format!(
            "expected {}x{} grid values, got {}",
            nx + 1,
            ny + 1,
            values.len()
        )));
    }
    let (px, py) = (nx + 1, ny + 1);
    let cy = transform_matrix(ny);
    let cx = transform_matrix(nx);

    // along y: partial[i][k2] = Σ_j Cy[k2][j] v[i][j]
    let mut partial = vec![0.0; px * py];
    for i in 0..px {
        let row = &values[i * py..(i + 1) * py];
        for k2 in 0..py {
            let t = &cy[k2 * py..(k2 + 1) * py];
            partial[i * py + k2] = t.iter().zip(row).map(|(a, b)| a * b).sum();
        }
    }
    // along x: a[k1][k2] = Σ_i Cx[k1][i] partial[i][k2]
    let mut coeffs = vec![0.0; px * py];
    for k1 in 0..px {
        let out = &mut coeffs[k1 * py..(k1 + 1) * py];
        for i in 0..px {
            let w = cx[k1 * px + i];
            let src = &partial[i * py..(i + 1) * py];
            for (o, s) in out.iter_mut().zip(src) {
                *o += w * s;
            }
        }
    }
    Ok(SpectralInterpolant { nx, ny, coeffs })
}

impl SpectralInterpolant {
    pub fn orders(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn coeff(&self, k1: usize, k2: usize) -> f64 {
        self.coeffs[k1 * (self.ny + 1) + k2]
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        if !(x.abs() <= 1.0 && y.abs() <= 1.0) {
            return Err(Error::PointOutsideDomain { x, y });
        }
        let py = self.ny + 1;
        let ty: Vec<f64> = (0..py).map(|k| chebyshev_t(k, y)).collect();
        let mut total = 0.0;
        for k1 in 0..=self.nx {
            let row = &self.coeffs[k1 * py..(k1 + 1) * py];
            let inner: f64 = row.iter().zip(&ty).map(|(a, t)| a * t).sum();
            total += chebyshev_t(k1, x) * inner;
        }
        Ok(total)
    }
}

/// Evaluate the expansion at arbitrary points of `[-1, 1]²`.
pub fn interpolate_at(interp: &SpectralInterpolant, points: &[(f64, f64)]) -> Result<Vec<f64>> {
    points.iter().map(|&(x, y)| interp.eval(x, y)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recurrence_t(k: usize, x: f64) -> f64 {
        let (mut t0, mut t1) = (1.0, x);
        match k {
            0 => 1.0,
            1 => x,
            _ => {
                for _ in 2..=k {
                    let t2 = 2.0 * x * t1 - t0;
                    t0 = t1;
                    t1 = t2;
                }
                t1
            }
        }
    }

    #[test]
    fn nodes_small_orders() {
        assert!(matches!(cheb_nodes(1), Err(Error::InvalidOrder(1))));
        let g = cheb_nodes(2).unwrap();
        assert_eq!(g.nodes()[0], 1.0);
        assert!(g.nodes()[1].abs() < 1e-16);
        assert_eq!(g.nodes()[2], -1.0);
        let g = cheb_nodes(4).unwrap();
        assert!((g.nodes()[1] - 0.7071067811865476).abs() < 1e-16);
        let g = cheb_nodes(32).unwrap();
        assert!(g.nodes()[16].abs() < 1e-16);
    }

    #[test]
    fn nodes_symmetric_and_decreasing() {
        for n in [2, 5, 16, 33] {
            let g = cheb_nodes(n).unwrap();
            let x = g.nodes();
            for j in 0..n {
                assert!(x[j] > x[j + 1]);
            }
            for j in 0..=n {
                assert!((x[j] + x[n - j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn derivative_examples() {
        let g = cheb_nodes(8).unwrap();
        let d = cheb_diff(8, 1).unwrap().matrix;
        let x = g.nodes();
        for i in 0..=8 {
            let dx: f64 = (0..=8).map(|j| d[(i, j)] * x[j]).sum();
            assert!((dx - 1.0).abs() < 1e-12);
            let dx2: f64 = (0..=8).map(|j| d[(i, j)] * x[j] * x[j]).sum();
            assert!((dx2 - 2.0 * x[i]).abs() < 1e-11);
            let rs: f64 = (0..=8).map(|j| d[(i, j)]).sum();
            assert!(rs.abs() < 1e-12);
        }
        let g = cheb_nodes(10).unwrap();
        let d2 = cheb_diff(10, 2).unwrap().matrix;
        let x = g.nodes();
        for i in 0..=10 {
            let v: f64 = (0..=10).map(|j| d2[(i, j)] * x[j].powi(3)).sum();
            assert!((v - 6.0 * x[i]).abs() < 1e-10);
        }
        assert!(matches!(cheb_diff(8, 3), Err(Error::UnsupportedDerivative(3))));
    }

    #[test]
    fn second_derivative_is_square_of_first() {
        for n in [4, 12, 24] {
            let d1 = cheb_diff(n, 1).unwrap().matrix;
            let d2 = cheb_diff(n, 2).unwrap().matrix;
            let sq = &d1 * &d1;
            let diff = (&d2 - &sq).norm_l2();
            assert!(diff <= 1e-12 * sq.norm_l2());
        }
    }

    #[test]
    fn polynomial_derivatives_exact_up_to_order() {
        let n = 16;
        let g = cheb_nodes(n).unwrap();
        let d = cheb_diff(n, 1).unwrap().matrix;
        let x = g.nodes();
        for deg in 0..=n {
            for i in 0..=n {
                let v: f64 = (0..=n).map(|j| d[(i, j)] * x[j].powi(deg as i32)).sum();
                let exact = if deg == 0 { 0.0 } else { deg as f64 * x[i].powi(deg as i32 - 1) };
                assert!((v - exact).abs() <= 1e-10 * (n * n) as f64, "deg {deg}");
            }
        }
    }

    #[test]
    fn chebyshev_identity_and_recurrence_agree() {
        for n in [6, 17, 40] {
            let g = cheb_nodes(n).unwrap();
            for (j, &x) in g.nodes().iter().enumerate() {
                for k in 0..=n {
                    let t = chebyshev_t(k, x);
                    assert!((t - cos_pi_ratio(j * k, n)).abs() < 1e-13);
                    assert!((t - recurrence_t(k, x)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn constant_coefficients() {
        let grid = TensorGrid2D::new(7, 5).unwrap();
        let v = vec![1.0; grid.full_count()];
        let a = cheb_coeffs_2d(&v, &grid).unwrap();
        for k1 in 0..=7 {
            for k2 in 0..=5 {
                let e = if k1 == 0 && k2 == 0 { 1.0 } else { 0.0 };
                assert!((a.coeff(k1, k2) - e).abs() < 1e-13);
            }
        }
        assert!((a.eval(0.123, -0.77).unwrap() - 1.0).abs() < 1e-13);
        assert!(cheb_coeffs_2d(&v[1..], &grid).is_err());
    }

    #[test]
    fn single_mode_matches_direct_double_sum() {
        let (nx, ny) = (6, 8);
        let grid = TensorGrid2D::new(nx, ny).unwrap();
        let v = grid.sample_full(|x, y| recurrence_t(2, x) * recurrence_t(3, y));
        let a = cheb_coeffs_2d(&v, &grid).unwrap();

        // direct evaluation of the double sum, independent of the nested transform
        let c = |i: usize, n: usize| if i == 0 || i == n { 2.0 } else { 1.0 };
        for k1 in 0..=nx {
            for k2 in 0..=ny {
                let mut s = 0.0;
                for i in 0..=nx {
                    for j in 0..=ny {
                        s += v[i * (ny + 1) + j] / (c(i, nx) * c(j, ny))
                            * (PI * (i * k1) as f64 / nx as f64).cos()
                            * (PI * (j * k2) as f64 / ny as f64).cos();
                    }
                }
                s *= 4.0 / (nx as f64 * ny as f64 * c(k1, nx) * c(k2, ny));
                assert!((a.coeff(k1, k2) - s).abs() < 1e-12);
                let e = if (k1, k2) == (2, 3) { 1.0 } else { 0.0 };
                assert!((a.coeff(k1, k2) - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn round_trip_exp4xy() {
        let grid = TensorGrid2D::new(32, 32).unwrap();
        let v = grid.sample_full(|x, y| (4.0 * x * y).exp());
        let a = cheb_coeffs_2d(&v, &grid).unwrap();
        let mut pts = Vec::new();
        for &x in grid.gx.nodes() {
            for &y in grid.gy.nodes() {
                pts.push((x, y));
            }
        }
        let back = interpolate_at(&a, &pts).unwrap();
        for (b, v) in back.iter().zip(&v) {
            assert!((b - v).abs() <= 1e-11 * v.abs().max(1.0));
        }
    }

    #[test]
    fn polynomial_reproduction_at_arbitrary_point() {
        let grid = TensorGrid2D::new(4, 4).unwrap();
        let v = grid.sample_full(|x, y| x * x * y);
        let a = cheb_coeffs_2d(&v, &grid).unwrap();
        let u = interpolate_at(&a, &[(0.3, -0.5)]).unwrap()[0];
        assert!((u + 0.045).abs() < 1e-12);
        assert!(matches!(
            interpolate_at(&a, &[(1.2, 0.0)]),
            Err(Error::PointOutsideDomain { .. })
        ));
    }

    #[test]
    fn oscillatory_function_at_interior_points() {
        let grid = TensorGrid2D::new(40, 40).unwrap();
        let f = |x: f64, y: f64| (8.0 * x * (y - 1.0)).sin();
        let a = cheb_coeffs_2d(&grid.sample_full(f), &grid).unwrap();
        let pts = [(0.1, 0.2), (-0.73, 0.41), (0.55, -0.9), (-0.05, -0.33), (0.91, 0.77)];
        for (p, v) in pts.iter().zip(interpolate_at(&a, &pts).unwrap()) {
            assert!((v - f(p.0, p.1)).abs() < 1e-9);
        }
    }

    #[test]
    fn interior_map_is_a_bijection() {
        let grid = TensorGrid2D::new(6, 9).unwrap();
        assert_eq!(grid.interior_count(), 5 * 8);
        let mut seen = vec![false; grid.interior_count()];
        for i in 0..=6 {
            for j in 0..=9 {
                match grid.dof(i, j) {
                    Some(d) => {
                        assert!(!seen[d]);
                        seen[d] = true;
                        assert_eq!(grid.site(d), (i, j));
                    }
                    None => assert!(i == 0 || j == 0 || i == 6 || j == 9),
                }
            }
        }
        assert!(seen.iter().all(|&s| s));
        let u: Vec<f64> = (0..grid.interior_count()).map(|d| d as f64).collect();
        assert_eq!(grid.restrict(&grid.embed(&u)), u);
    }
}
