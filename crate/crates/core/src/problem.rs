//! Affinely parametrized elliptic problems on `[-1, 1]²` with homogeneous Dirichlet data.
//!
//! The operator is `L(μ) = Σ_q a_q(μ) L_q` where every `L_q` is a Kronecker product of a
//! 1-D collocation matrix with an identity, restricted to interior nodes. Terms are kept
//! factored and only assembled densely when a factorization is needed.

use std::collections::HashMap;
use std::sync::Mutex;

use faer::{Mat, MatRef};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::linalg::{matvec, norm2, smallest_eigenvalue_normal, DenseLu};
use crate::spectral::{cheb_diff, TensorGrid2D};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterPoint(pub Vec<f64>);

impl ParameterPoint {
    pub fn new(components: Vec<f64>) -> Self {
        ParameterPoint(components)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    fn key(&self) -> Vec<u64> {
        self.0.iter().map(|v| v.to_bits()).collect()
    }
}

impl From<[f64; 2]> for ParameterPoint {
    fn from(v: [f64; 2]) -> Self {
        ParameterPoint(v.to_vec())
    }
}

impl std::ops::Index<usize> for ParameterPoint {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Box parameter domain with a uniform Cartesian training lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterDomain {
    pub bounds: Vec<(f64, f64)>,
    pub train_counts: Vec<usize>,
}

impl ParameterDomain {
    pub fn new(bounds: Vec<(f64, f64)>, train_counts: Vec<usize>) -> Result<Self> {
        if bounds.is_empty() || bounds.len() != train_counts.len() {
            return Err(Error::Config(format!(
                "parameter domain has {} bounds but {} training counts",
                bounds.len(),
                train_counts.len()
            )));
        }
        for &(lo, hi) in &bounds {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Config(format!("invalid parameter interval [{lo}, {hi}]")));
            }
        }
        if train_counts.contains(&0) {
            return Err(Error::Config("training grid counts must be at least 1".into()));
        }
        Ok(ParameterDomain {
            bounds,
            train_counts,
        })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn contains(&self, mu: &ParameterPoint) -> bool {
        mu.dim() == self.dim()
            && mu.0.iter().zip(&self.bounds).all(|(&v, &(lo, hi))| {
                let slack = 1e-12 * lo.abs().max(hi.abs()).max(1.0);
                v >= lo - slack && v <= hi + slack
            })
    }

    pub fn check(&self, mu: &ParameterPoint) -> Result<()> {
        if self.contains(mu) {
            Ok(())
        } else {
            Err(Error::ParameterOutsideDomain { mu: mu.0.clone() })
        }
    }

    pub fn center(&self) -> ParameterPoint {
        ParameterPoint(self.bounds.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect())
    }

    /// Lattice points, last dimension varying fastest, endpoints included.
    pub fn training_set(&self) -> Vec<ParameterPoint> {
        let axes: Vec<Vec<f64>> = self
            .bounds
            .iter()
            .zip(&self.train_counts)
            .map(|(&(lo, hi), &m)| {
                if m == 1 {
                    vec![0.5 * (lo + hi)]
                } else {
                    (0..m)
                        .map(|k| lo + (hi - lo) * k as f64 / (m - 1) as f64)
                        .collect()
                }
            })
            .collect();
        let total: usize = self.train_counts.iter().product();
        let mut out = Vec::with_capacity(total);
        for mut flat in 0..total {
            let mut comps = vec![0.0; self.dim()];
            for d in (0..self.dim()).rev() {
                let m = self.train_counts[d];
                comps[d] = axes[d][flat % m];
                flat /= m;
            }
            out.push(ParameterPoint(comps));
        }
        out
    }

    /// Independent uniform draws from the box.
    pub fn sample_uniform<R: Rng>(&self, rng: &mut R, count: usize) -> Vec<ParameterPoint> {
        (0..count)
            .map(|_| {
                ParameterPoint(
                    self.bounds
                        .iter()
                        .map(|&(lo, hi)| rng.random_range(lo..=hi))
                        .collect(),
                )
            })
            .collect()
    }
}

/// Symbolic name of a μ-independent operator term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TermTag {
    Dxx,
    Dyy,
    XDxx,
    YDyy,
    Identity,
}

impl TermTag {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().replace(' ', "").as_str() {
            "dxx" => Ok(TermTag::Dxx),
            "dyy" => Ok(TermTag::Dyy),
            "x*dxx" => Ok(TermTag::XDxx),
            "y*dyy" => Ok(TermTag::YDyy),
            "identity" | "id" => Ok(TermTag::Identity),
            other => Err(Error::Config(format!(
                "unknown operator term `{other}` (expected dxx, dyy, x*dxx, y*dyy, identity)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            TermTag::Dxx => "dxx",
            TermTag::Dyy => "dyy",
            TermTag::XDxx => "x*dxx",
            TermTag::YDyy => "y*dyy",
            TermTag::Identity => "identity",
        }
    }
}

/// Coefficient function `a_q(μ)`.
#[derive(Clone, Debug)]
pub enum Coefficient {
    /// `constant + Σ_k weights[k] μ_k`
    Affine { constant: f64, weights: Vec<f64> },
    Expr(Expr),
}

impl Coefficient {
    pub fn constant(c: f64) -> Self {
        Coefficient::Affine {
            constant: c,
            weights: Vec::new(),
        }
    }

    /// `μ_k` (zero-based `k`).
    pub fn component(k: usize, dim: usize) -> Self {
        let mut weights = vec![0.0; dim];
        weights[k] = 1.0;
        Coefficient::Affine {
            constant: 0.0,
            weights,
        }
    }

    pub fn eval(&self, mu: &ParameterPoint) -> Result<f64> {
        match self {
            Coefficient::Affine { constant, weights } => {
                Ok(constant + weights.iter().zip(&mu.0).map(|(w, m)| w * m).sum::<f64>())
            }
            Coefficient::Expr(e) => {
                let names = mu_names(mu.dim());
                let vars: Vec<(&str, f64)> =
                    names.iter().map(String::as_str).zip(mu.0.iter().copied()).collect();
                e.eval(&vars)
            }
        }
    }
}

fn mu_names(d: usize) -> Vec<String> {
    (1..=d).map(|k| format!("mu{k}")).collect()
}

#[derive(Clone, Debug)]
pub struct OperatorTerm {
    pub tag: TermTag,
    pub scale: f64,
    pub coefficient: Coefficient,
}

#[derive(Clone, Debug)]
pub struct RhsTerm {
    pub label: String,
    pub coefficient: Coefficient,
    full: Vec<f64>,
    interior: Vec<f64>,
}

/// Declarative term of a user-described problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermDecl {
    pub op: String,
    pub coefficient: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhsDecl {
    pub source: String,
    pub coefficient: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CustomProblem {
    pub name: String,
    pub nx: usize,
    pub bounds: Vec<(f64, f64)>,
    pub train: Vec<usize>,
    pub terms: Vec<TermDecl>,
    pub rhs: Vec<RhsDecl>,
}

/// Everything needed to rebuild a problem, e.g. when loading a saved model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemSpec {
    Diffusion { nx: usize, train: Vec<usize> },
    Anisotropic { nx: usize, train: Vec<usize> },
    Custom(CustomProblem),
}

impl ProblemSpec {
    pub fn nx(&self) -> usize {
        match self {
            ProblemSpec::Diffusion { nx, .. } | ProblemSpec::Anisotropic { nx, .. } => *nx,
            ProblemSpec::Custom(c) => c.nx,
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum AxisOp {
    Identity,
    Second,
    CoordSecond,
}

impl TermTag {
    fn axes(self) -> (AxisOp, AxisOp) {
        match self {
            TermTag::Dxx => (AxisOp::Second, AxisOp::Identity),
            TermTag::XDxx => (AxisOp::CoordSecond, AxisOp::Identity),
            TermTag::Dyy => (AxisOp::Identity, AxisOp::Second),
            TermTag::YDyy => (AxisOp::Identity, AxisOp::CoordSecond),
            TermTag::Identity => (AxisOp::Identity, AxisOp::Identity),
        }
    }
}

/// Full-grid 1-D second-derivative matrices, row-major `(n+1)×(n+1)`.
#[derive(Clone, Debug)]
struct AxisMatrices {
    n: usize,
    second: Vec<f64>,
    coord_second: Vec<f64>,
}

impl AxisMatrices {
    fn new(n: usize, nodes: &[f64]) -> Result<Self> {
        let d2 = cheb_diff(n, 2)?.matrix;
        let p = n + 1;
        let mut second = vec![0.0; p * p];
        let mut coord_second = vec![0.0; p * p];
        for i in 0..p {
            for k in 0..p {
                second[i * p + k] = d2[(i, k)];
                coord_second[i * p + k] = nodes[i] * d2[(i, k)];
            }
        }
        Ok(AxisMatrices {
            n,
            second,
            coord_second,
        })
    }

    fn matrix(&self, op: AxisOp) -> Option<&[f64]> {
        match op {
            AxisOp::Identity => None,
            AxisOp::Second => Some(&self.second),
            AxisOp::CoordSecond => Some(&self.coord_second),
        }
    }
}

/// `out += s (A ⊗ I) u` for an `r×c` row-major array, `A(i,k) = a[(i+off)·lda + k+off]`.
fn apply_along_x(a: &[f64], lda: usize, off: usize, r: usize, c: usize, s: f64, u: &[f64], out: &mut [f64]) {
    for i in 0..r {
        let arow = &a[(i + off) * lda + off..(i + off) * lda + off + r];
        let orow = &mut out[i * c..(i + 1) * c];
        for (k, &aik) in arow.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let w = s * aik;
            for (o, v) in orow.iter_mut().zip(&u[k * c..(k + 1) * c]) {
                *o += w * v;
            }
        }
    }
}

/// `out += s (I ⊗ B) u` for an `r×c` row-major array.
fn apply_along_y(b: &[f64], ldb: usize, off: usize, r: usize, c: usize, s: f64, u: &[f64], out: &mut [f64]) {
    for j in 0..c {
        let brow = &b[(j + off) * ldb + off..(j + off) * ldb + off + c];
        for i in 0..r {
            let urow = &u[i * c..(i + 1) * c];
            out[i * c + j] += s * brow.iter().zip(urow).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

#[derive(Clone, Debug)]
pub struct TruthSolution {
    pub mu: ParameterPoint,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct AffineProblem {
    name: String,
    spec: ProblemSpec,
    grid: TensorGrid2D,
    domain: ParameterDomain,
    terms: Vec<OperatorTerm>,
    rhs: Vec<RhsTerm>,
    x_axis: AxisMatrices,
    y_axis: AxisMatrices,
}

pub fn build_diffusion(nx: usize) -> Result<AffineProblem> {
    AffineProblem::from_spec(&ProblemSpec::Diffusion {
        nx,
        train: vec![64, 64],
    })
}

pub fn build_anisotropic(nx: usize) -> Result<AffineProblem> {
    AffineProblem::from_spec(&ProblemSpec::Anisotropic {
        nx,
        train: vec![128, 64],
    })
}

/// Built-in problem by name (`diffusion` or `anisotropic`).
pub fn build_named(name: &str, nx: usize) -> Result<AffineProblem> {
    match name {
        "diffusion" => build_diffusion(nx),
        "anisotropic" => build_anisotropic(nx),
        other => Err(Error::Config(format!(
            "unknown problem `{other}` (expected diffusion or anisotropic)"
        ))),
    }
}

impl AffineProblem {
    pub fn from_spec(spec: &ProblemSpec) -> Result<Self> {
        match spec {
            ProblemSpec::Diffusion { nx, train } => {
                if *nx < 4 {
                    return Err(Error::InvalidOrder(*nx));
                }
                let grid = TensorGrid2D::new(*nx, *nx)?;
                let domain = ParameterDomain::new(vec![(-0.99, 0.99); 2], train.clone())?;
                let terms = vec![
                    term(TermTag::Dxx, 1.0, Coefficient::constant(1.0)),
                    term(TermTag::XDxx, 1.0, Coefficient::component(0, 2)),
                    term(TermTag::Dyy, 1.0, Coefficient::constant(1.0)),
                    term(TermTag::YDyy, 1.0, Coefficient::component(1, 2)),
                ];
                let f = grid.sample_full(|x, y| (4.0 * x * y).exp());
                let rhs = vec![rhs_term("exp(4xy)", Coefficient::constant(1.0), f, &grid)];
                Self::assemble("diffusion", spec.clone(), grid, domain, terms, rhs)
            }
            ProblemSpec::Anisotropic { nx, train } => {
                if *nx < 4 {
                    return Err(Error::InvalidOrder(*nx));
                }
                let grid = TensorGrid2D::new(*nx, *nx)?;
                let domain = ParameterDomain::new(vec![(0.1, 4.0), (0.0, 2.0)], train.clone())?;
                let terms = vec![
                    term(TermTag::Dxx, -1.0, Coefficient::constant(1.0)),
                    term(TermTag::Dyy, -1.0, Coefficient::component(0, 2)),
                    term(TermTag::Identity, -1.0, Coefficient::component(1, 2)),
                ];
                let f = grid.sample_full(|x, y| -10.0 * (8.0 * x * (y - 1.0)).sin());
                let rhs = vec![rhs_term(
                    "-10 sin(8x(y-1))",
                    Coefficient::constant(1.0),
                    f,
                    &grid,
                )];
                Self::assemble("anisotropic", spec.clone(), grid, domain, terms, rhs)
            }
            ProblemSpec::Custom(c) => {
                let grid = TensorGrid2D::new(c.nx, c.nx)?;
                let domain = ParameterDomain::new(c.bounds.clone(), c.train.clone())?;
                let names = mu_names(domain.dim());
                let allowed: Vec<&str> = names.iter().map(String::as_str).collect();
                let mut terms = Vec::with_capacity(c.terms.len());
                for t in &c.terms {
                    terms.push(term(
                        TermTag::parse(&t.op)?,
                        1.0,
                        Coefficient::Expr(Expr::parse(&t.coefficient, &allowed)?),
                    ));
                }
                let mut rhs = Vec::with_capacity(c.rhs.len());
                for r in &c.rhs {
                    let source = Expr::parse(&r.source, &["x", "y"])?;
                    let mut full = Vec::with_capacity(grid.full_count());
                    for &x in grid.gx.nodes() {
                        for &y in grid.gy.nodes() {
                            full.push(source.eval(&[("x", x), ("y", y)])?);
                        }
                    }
                    let coefficient = Coefficient::Expr(Expr::parse(&r.coefficient, &allowed)?);
                    rhs.push(rhs_term(&r.source, coefficient, full, &grid));
                }
                Self::assemble(&c.name, spec.clone(), grid, domain, terms, rhs)
            }
        }
    }

    fn assemble(
        name: &str,
        spec: ProblemSpec,
        grid: TensorGrid2D,
        domain: ParameterDomain,
        terms: Vec<OperatorTerm>,
        rhs: Vec<RhsTerm>,
    ) -> Result<Self> {
        if terms.is_empty() || rhs.is_empty() {
            return Err(Error::Config(
                "a problem needs at least one operator term and one right-hand side term".into(),
            ));
        }
        let x_axis = AxisMatrices::new(grid.nx(), grid.gx.nodes())?;
        let y_axis = AxisMatrices::new(grid.ny(), grid.gy.nodes())?;
        Ok(AffineProblem {
            name: name.to_string(),
            spec,
            grid,
            domain,
            terms,
            rhs,
            x_axis,
            y_axis,
        })
    }

    /// Same problem with a different training lattice.
    pub fn with_training_grid(mut self, counts: Vec<usize>) -> Result<Self> {
        self.domain = ParameterDomain::new(self.domain.bounds.clone(), counts.clone())?;
        match &mut self.spec {
            ProblemSpec::Diffusion { train, .. } | ProblemSpec::Anisotropic { train, .. } => {
                *train = counts
            }
            ProblemSpec::Custom(c) => c.train = counts,
        }
        Ok(self)
    }

    /// Same problem over a different parameter box, keeping the lattice counts.
    pub fn with_bounds(mut self, bounds: Vec<(f64, f64)>) -> Result<Self> {
        self.domain = ParameterDomain::new(bounds.clone(), self.domain.train_counts.clone())?;
        if let ProblemSpec::Custom(c) = &mut self.spec {
            c.bounds = bounds;
        }
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn grid(&self) -> &TensorGrid2D {
        &self.grid
    }

    pub fn domain(&self) -> &ParameterDomain {
        &self.domain
    }

    pub fn terms(&self) -> &[OperatorTerm] {
        &self.terms
    }

    pub fn qa(&self) -> usize {
        self.terms.len()
    }

    pub fn qf(&self) -> usize {
        self.rhs.len()
    }

    pub fn dofs(&self) -> usize {
        self.grid.interior_count()
    }

    pub fn operator_coefficients(&self, mu: &ParameterPoint) -> Result<Vec<f64>> {
        self.domain.check(mu)?;
        self.terms.iter().map(|t| t.coefficient.eval(mu)).collect()
    }

    pub fn rhs_coefficients(&self, mu: &ParameterPoint) -> Result<Vec<f64>> {
        self.domain.check(mu)?;
        self.rhs.iter().map(|t| t.coefficient.eval(mu)).collect()
    }

    /// Interior samples of `f_q`.
    pub fn rhs_term(&self, q: usize) -> &[f64] {
        &self.rhs[q].interior
    }

    /// Full-grid samples of `f_q`, boundary included.
    pub fn rhs_term_full(&self, q: usize) -> &[f64] {
        &self.rhs[q].full
    }

    pub fn rhs_label(&self, q: usize) -> &str {
        &self.rhs[q].label
    }

    /// `L_q u` on interior dofs.
    pub fn apply_term(&self, q: usize, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.dofs(), "vector does not match the interior grid");
        let (mx, my) = self.grid.interior_shape();
        let t = &self.terms[q];
        let mut out = vec![0.0; u.len()];
        let (ax, ay) = t.tag.axes();
        match (self.x_axis.matrix(ax), self.y_axis.matrix(ay)) {
            (Some(a), None) => apply_along_x(a, self.x_axis.n + 1, 1, mx, my, t.scale, u, &mut out),
            (None, Some(b)) => apply_along_y(b, self.y_axis.n + 1, 1, mx, my, t.scale, u, &mut out),
            (None, None) => out.iter_mut().zip(u).for_each(|(o, v)| *o = t.scale * v),
            (Some(_), Some(_)) => unreachable!("terms act along one axis"),
        }
        out
    }

    /// `L_q u` evaluated at every node of the full grid, with `u` zero-extended.
    ///
    /// Interior entries agree with [`apply_term`](Self::apply_term); boundary entries are
    /// the collocation derivative there, which the spectral interpolant needs.
    pub fn apply_term_full(&self, q: usize, u: &[f64]) -> Vec<f64> {
        let full = self.grid.embed(u);
        let (px, py) = (self.grid.nx() + 1, self.grid.ny() + 1);
        let t = &self.terms[q];
        let mut out = vec![0.0; full.len()];
        let (ax, ay) = t.tag.axes();
        match (self.x_axis.matrix(ax), self.y_axis.matrix(ay)) {
            (Some(a), None) => apply_along_x(a, px, 0, px, py, t.scale, &full, &mut out),
            (None, Some(b)) => apply_along_y(b, py, 0, px, py, t.scale, &full, &mut out),
            (None, None) => out.iter_mut().zip(&full).for_each(|(o, v)| *o = t.scale * v),
            (Some(_), Some(_)) => unreachable!("terms act along one axis"),
        }
        out
    }

    /// `L(μ) u` without assembling the matrix.
    pub fn apply_operator(&self, mu: &ParameterPoint, u: &[f64]) -> Result<Vec<f64>> {
        let a = self.operator_coefficients(mu)?;
        let mut out = vec![0.0; self.dofs()];
        for (q, aq) in a.iter().enumerate() {
            let lu = self.apply_term(q, u);
            out.iter_mut().zip(&lu).for_each(|(o, v)| *o += aq * v);
        }
        Ok(out)
    }

    fn add_term_dense(&self, q: usize, w: f64, m: &mut Mat<f64>) {
        let (mx, my) = self.grid.interior_shape();
        let t = &self.terms[q];
        let s = w * t.scale;
        if s == 0.0 {
            return;
        }
        let (ax, ay) = t.tag.axes();
        match (self.x_axis.matrix(ax), self.y_axis.matrix(ay)) {
            (Some(a), None) => {
                let p = self.x_axis.n + 1;
                for i in 0..mx {
                    for k in 0..mx {
                        let v = s * a[(i + 1) * p + k + 1];
                        for j in 0..my {
                            m[(i * my + j, k * my + j)] += v;
                        }
                    }
                }
            }
            (None, Some(b)) => {
                let p = self.y_axis.n + 1;
                for j in 0..my {
                    for l in 0..my {
                        let v = s * b[(j + 1) * p + l + 1];
                        for i in 0..mx {
                            m[(i * my + j, i * my + l)] += v;
                        }
                    }
                }
            }
            (None, None) => {
                for d in 0..mx * my {
                    m[(d, d)] += s;
                }
            }
            (Some(_), Some(_)) => unreachable!("terms act along one axis"),
        }
    }

    /// Dense `L_q` on interior dofs.
    pub fn term_matrix(&self, q: usize) -> Mat<f64> {
        let n = self.dofs();
        let mut m = Mat::zeros(n, n);
        self.add_term_dense(q, 1.0, &mut m);
        m
    }

    /// Dense `L(μ) = Σ_q a_q(μ) L_q`.
    pub fn operator_at(&self, mu: &ParameterPoint) -> Result<Mat<f64>> {
        let a = self.operator_coefficients(mu)?;
        let n = self.dofs();
        let mut m = Mat::zeros(n, n);
        for (q, aq) in a.iter().enumerate() {
            self.add_term_dense(q, *aq, &mut m);
        }
        Ok(m)
    }

    pub fn rhs_at(&self, mu: &ParameterPoint) -> Result<Vec<f64>> {
        let a = self.rhs_coefficients(mu)?;
        let mut f = vec![0.0; self.dofs()];
        for (q, aq) in a.iter().enumerate() {
            f.iter_mut()
                .zip(&self.rhs[q].interior)
                .for_each(|(o, v)| *o += aq * v);
        }
        Ok(f)
    }

    /// Dense LU solve of `L(μ) u = f(μ)` with one step of iterative refinement.
    pub fn truth_solve(&self, mu: &ParameterPoint) -> Result<TruthSolution> {
        let l = self.operator_at(mu)?;
        let f = self.rhs_at(mu)?;
        let singular = || Error::SingularTruth { mu: mu.0.clone() };
        let lu = DenseLu::factor(l.as_ref())?;
        if lu.is_singular() {
            return Err(singular());
        }
        let mut u = lu.solve(&f);
        let residual = |u: &[f64]| -> Vec<f64> {
            let lu_ = matvec(l.as_ref(), u);
            f.iter().zip(&lu_).map(|(a, b)| a - b).collect()
        };
        let r = residual(&u);
        let du = lu.solve(&r);
        u.iter_mut().zip(&du).for_each(|(a, d)| *a += d);
        let r = residual(&u);
        if !(norm2(&r) <= 1e-9 * norm2(&f)) || u.iter().any(|v| !v.is_finite()) {
            return Err(singular());
        }
        Ok(TruthSolution {
            mu: mu.clone(),
            values: u,
        })
    }

    /// `β(μ)`, the smallest eigenvalue of `L(μ)ᵀ L(μ)`.
    pub fn stability_constant(&self, mu: &ParameterPoint) -> Result<f64> {
        let l = self.operator_at(mu)?;
        stability_of_matrix(l.as_ref()).map_err(|e| match e {
            Error::EigenNonConvergence { iterations, .. } => Error::EigenNonConvergence {
                mu: mu.0.clone(),
                iterations,
            },
            other => other,
        })
    }

    /// `β` over the whole training lattice, evaluated in parallel.
    pub fn stability_table(&self) -> Result<StabilityTable> {
        let points = self.domain.training_set();
        let values: Vec<f64> = points
            .par_iter()
            .map(|mu| self.stability_constant(mu))
            .collect::<Result<_>>()?;
        Ok(StabilityTable::from_values(points, values))
    }
}

fn term(tag: TermTag, scale: f64, coefficient: Coefficient) -> OperatorTerm {
    OperatorTerm {
        tag,
        scale,
        coefficient,
    }
}

fn rhs_term(label: &str, coefficient: Coefficient, full: Vec<f64>, grid: &TensorGrid2D) -> RhsTerm {
    let interior = grid.restrict(&full);
    RhsTerm {
        label: label.to_string(),
        coefficient,
        full,
        interior,
    }
}

/// Smallest eigenvalue of `AᵀA` for a square matrix.
pub fn stability_of_matrix(a: MatRef<'_, f64>) -> Result<f64> {
    let lu = DenseLu::factor(a)?;
    smallest_eigenvalue_normal(&lu).ok_or(Error::EigenNonConvergence {
        mu: Vec::new(),
        iterations: a.nrows().min(300),
    })
}

/// `β` tabulated over a training lattice, with exact on-demand values elsewhere.
pub struct StabilityTable {
    points: Vec<ParameterPoint>,
    values: Vec<f64>,
    index: HashMap<Vec<u64>, usize>,
    extra: Mutex<HashMap<Vec<u64>, f64>>,
}

impl Clone for StabilityTable {
    fn clone(&self) -> Self {
        StabilityTable {
            points: self.points.clone(),
            values: self.values.clone(),
            index: self.index.clone(),
            extra: Mutex::new(self.extra.lock().expect("stability cache").clone()),
        }
    }
}

impl std::fmt::Debug for StabilityTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StabilityTable")
            .field("len", &self.points.len())
            .finish()
    }
}

impl StabilityTable {
    pub fn from_values(points: Vec<ParameterPoint>, values: Vec<f64>) -> Self {
        assert_eq!(points.len(), values.len());
        let index = points.iter().enumerate().map(|(i, p)| (p.key(), i)).collect();
        StabilityTable {
            points,
            values,
            index,
            extra: Mutex::new(HashMap::new()),
        }
    }

    pub fn points(&self) -> &[ParameterPoint] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Tabulated or previously computed value, if any.
    pub fn lookup(&self, mu: &ParameterPoint) -> Option<f64> {
        let key = mu.key();
        if let Some(&i) = self.index.get(&key) {
            return Some(self.values[i]);
        }
        self.extra.lock().expect("stability cache").get(&key).copied()
    }

    /// `β(μ)`, computing and caching it when `μ` is not tabulated.
    pub fn beta(&self, problem: &AffineProblem, mu: &ParameterPoint) -> Result<f64> {
        if let Some(v) = self.lookup(mu) {
            return Ok(v);
        }
        let v = problem.stability_constant(mu)?;
        self.extra
            .lock()
            .expect("stability cache")
            .insert(mu.key(), v);
        Ok(v)
    }
}
