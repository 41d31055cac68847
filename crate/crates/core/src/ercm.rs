//! Empirical reduced collocation.
//!
//! Each greedy step adds a snapshot, removes its interpolant on the existing points,
//! and picks the node where the remainder is largest as a new collocation point. The
//! basis is normalized to one at its own point, so the matrix `B_kj = ξ_j(x_k)` is unit
//! lower triangular. Online, the residual is enforced only at those points: an `n×n`
//! system assembled from `(L_q ξ_j)(x_k)` and `f_q(x_k)`, solved by LU.

use std::sync::Arc;

use faer::Mat;

use crate::error::{Error, Result};
use crate::estimator::{cache_build, AppliedBasis, EstimatorCache};
use crate::linalg::{condition_number, dot, norm2, norm_inf, DenseLu};
use crate::problem::{AffineProblem, ParameterPoint, StabilityTable};
use crate::reduced::{
    argmax_unselected, check_size, first_pick, shared_table, sweep, LogEntry, ReducedModel, TrainOptions,
};
use crate::spectral::{cheb_coeffs_2d, SpectralInterpolant};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErcmOptions {
    /// Orthonormalize the final basis (Euclidean modified Gram–Schmidt) and then
    /// re-triangularize it against the selected points.
    pub gram_schmidt: bool,
}

#[derive(Clone, Debug)]
pub struct ErcmModel {
    pub(crate) problem: Arc<AffineProblem>,
    pub(crate) stability: Arc<StabilityTable>,
    pub(crate) selected: Vec<ParameterPoint>,
    pub(crate) points: Vec<(f64, f64)>,
    pub(crate) point_dofs: Vec<Option<usize>>,
    pub(crate) basis: Vec<Vec<f64>>,
    // op_rows[k][j·Qa + q] = (L_q ξ_j)(x_k)
    pub(crate) op_rows: Vec<Vec<f64>>,
    // rhs_rows[k][q] = f_q(x_k)
    pub(crate) rhs_rows: Vec<Vec<f64>>,
    // b[k][j] = ξ_j(x_k)
    pub(crate) b: Vec<Vec<f64>>,
    pub(crate) cache: EstimatorCache,
    pub(crate) log: Vec<LogEntry>,
}

fn term_interpolants(problem: &AffineProblem, xi: &[f64]) -> Result<Vec<SpectralInterpolant>> {
    (0..problem.qa())
        .map(|q| cheb_coeffs_2d(&problem.apply_term_full(q, xi), problem.grid()))
        .collect()
}

fn rhs_interpolants(problem: &AffineProblem) -> Result<Vec<SpectralInterpolant>> {
    (0..problem.qf())
        .map(|q| cheb_coeffs_2d(problem.rhs_term_full(q), problem.grid()))
        .collect()
}

pub fn ercm_greedy_train(problem: Arc<AffineProblem>, opts: &TrainOptions) -> Result<ErcmModel> {
    ercm_greedy_train_with(problem, None, opts, ErcmOptions::default())
}

pub fn ercm_greedy_train_with(
    problem: Arc<AffineProblem>,
    table: Option<Arc<StabilityTable>>,
    opts: &TrainOptions,
    ercm: ErcmOptions,
) -> Result<ErcmModel> {
    if opts.n_max == 0 {
        return Err(Error::Config("n_max must be at least 1".into()));
    }
    let stability = shared_table(&problem, table)?;
    let training = problem.domain().training_set();
    let grid = problem.grid().clone();
    let qa = problem.qa();
    let rhs_interp = rhs_interpolants(&problem)?;

    let mut model = ErcmModel {
        cache: EstimatorCache::new(&problem),
        problem: problem.clone(),
        stability,
        selected: Vec::new(),
        points: Vec::new(),
        point_dofs: Vec::new(),
        basis: Vec::new(),
        op_rows: Vec::new(),
        rhs_rows: Vec::new(),
        b: Vec::new(),
        log: Vec::new(),
    };
    let mut applied = AppliedBasis::new();
    let mut interps: Vec<Vec<SpectralInterpolant>> = Vec::new();
    let mut chosen: Vec<usize> = Vec::new();
    let mut next = first_pick(training.len(), opts.seed);
    let mut next_delta = None;

    loop {
        let iteration = chosen.len() + 1;
        let wrap = |e: Error| e.in_iteration(iteration);
        let mu = training[next].clone();
        let u = problem.truth_solve(&mu).map_err(wrap)?.values;

        // remove the interpolant on the existing points: B c = u(x_1..x_{i-1})
        let i = model.basis.len();
        let mut xi = u.clone();
        let mut c = vec![0.0; i];
        for k in 0..i {
            let d = model.point_dofs[k].expect("greedy points are grid nodes");
            let s: f64 = (0..k).map(|j| model.b[k][j] * c[j]).sum();
            c[k] = u[d] - s;
        }
        for (cj, bj) in c.iter().zip(&model.basis) {
            xi.iter_mut().zip(bj).for_each(|(o, v)| *o -= cj * v);
        }

        let (dof, peak) = xi
            .iter()
            .enumerate()
            .fold((0, 0.0_f64), |(bd, bv), (d, &v)| if v.abs() > bv.abs() { (d, v) } else { (bd, bv) });
        if !(peak.abs() >= 1e-12 * norm_inf(&u)) {
            return Err(Error::DegenerateBasis { iteration }.in_iteration(iteration));
        }
        xi.iter_mut().for_each(|v| *v /= peak);
        let point = grid.point(dof);

        let new_interp = term_interpolants(&problem, &xi).map_err(wrap)?;
        for k in 0..i {
            let (x, y) = model.points[k];
            for t in &new_interp {
                model.op_rows[k].push(t.eval(x, y).map_err(wrap)?);
            }
            let d = model.point_dofs[k].expect("greedy points are grid nodes");
            model.b[k].push(xi[d]);
        }
        interps.push(new_interp);
        let mut row = Vec::with_capacity((i + 1) * qa);
        for terms in &interps {
            for t in terms {
                row.push(t.eval(point.0, point.1).map_err(wrap)?);
            }
        }
        model.op_rows.push(row);
        model.rhs_rows.push(
            rhs_interp
                .iter()
                .map(|t| t.eval(point.0, point.1))
                .collect::<Result<_>>()
                .map_err(wrap)?,
        );
        let mut brow: Vec<f64> = model.basis.iter().map(|bj| bj[dof]).collect();
        brow.push(xi[dof]);
        model.b.push(brow);

        applied.push(&problem, &xi).map_err(wrap)?;
        model.cache.extend(&problem, &applied).map_err(wrap)?;
        model.basis.push(xi);
        model.points.push(point);
        model.point_dofs.push(Some(dof));
        model.selected.push(mu.clone());
        chosen.push(next);

        let n = model.basis.len();
        let deltas = sweep(&training, |_, m| match model.solve_n(m, n) {
            Ok(c) => Ok(model.estimate(m, &c)?.delta),
            Err(Error::SingularReducedSystem { .. }) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        })
        .map_err(wrap)?;
        let max_delta = deltas.iter().copied().fold(0.0_f64, f64::max);
        model.log.push(LogEntry {
            iteration,
            mu,
            index: next,
            selected_delta: next_delta,
            max_delta,
        });
        if n >= opts.n_max || max_delta <= opts.tol {
            break;
        }
        next = argmax_unselected(&deltas, &chosen).ok_or(Error::TrainingExhausted(training.len()))?;
        next_delta = Some(deltas[next]);
    }

    if ercm.gram_schmidt {
        let mut q: Vec<Vec<f64>> = Vec::with_capacity(model.basis.len());
        for v in &model.basis {
            let mut w = v.clone();
            for _ in 0..2 {
                for e in &q {
                    let c = dot(&w, e);
                    w.iter_mut().zip(e).for_each(|(a, b)| *a -= c * b);
                }
            }
            let nrm = norm2(&w);
            w.iter_mut().for_each(|a| *a /= nrm);
            q.push(w);
        }
        let points = model.points.clone();
        let dofs = model.point_dofs.clone();
        return model.rebuild(q, points, dofs, true);
    }
    Ok(model)
}

impl ErcmModel {
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        problem: Arc<AffineProblem>,
        stability: Arc<StabilityTable>,
        selected: Vec<ParameterPoint>,
        points: Vec<(f64, f64)>,
        point_dofs: Vec<Option<usize>>,
        basis: Vec<Vec<f64>>,
        op_rows: Vec<Vec<f64>>,
        rhs_rows: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        cache: EstimatorCache,
        log: Vec<LogEntry>,
    ) -> Result<Self> {
        let n = basis.len();
        let qa = problem.qa();
        let ok = selected.len() == n
            && points.len() == n
            && point_dofs.len() == n
            && cache.size() == n
            && op_rows.len() == n
            && op_rows.iter().all(|r| r.len() == n * qa)
            && rhs_rows.len() == n
            && rhs_rows.iter().all(|r| r.len() == problem.qf())
            && b.len() == n
            && b.iter().all(|r| r.len() == n);
        if !ok {
            return Err(Error::Shape("inconsistent collocation model parts".into()));
        }
        Ok(ErcmModel {
            problem,
            stability,
            selected,
            points,
            point_dofs,
            basis,
            op_rows,
            rhs_rows,
            b,
            cache,
            log,
        })
    }

    /// Reduced collocation points `x_1..x_N`.
    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Interior dof index of each point, when it is a grid node.
    pub fn point_dofs(&self) -> &[Option<usize>] {
        &self.point_dofs
    }

    /// `B_kj = ξ_j(x_k)`
    pub fn b_matrix(&self) -> Mat<f64> {
        let n = self.b.len();
        Mat::from_fn(n, n, |k, j| self.b[k][j])
    }

    pub fn op_rows(&self) -> &[Vec<f64>] {
        &self.op_rows
    }

    pub fn rhs_rows(&self) -> &[Vec<f64>] {
        &self.rhs_rows
    }

    /// Collocation matrix and right-hand side from per-point coefficient values.
    ///
    /// `op_coeff(k, q)` and `rhs_coeff(k, q)` give the coefficient of term `q` at point
    /// `x_k`; nothing else about the problem is consulted.
    pub fn assemble_pointwise(
        &self,
        n: usize,
        op_coeff: impl Fn(usize, usize) -> f64,
        rhs_coeff: impl Fn(usize, usize) -> f64,
    ) -> Result<(Mat<f64>, Vec<f64>)> {
        check_size(n, self.basis.len())?;
        let qa = self.cache.qa();
        let qf = self.cache.qf();
        let mut m = Mat::zeros(n, n);
        let mut rhs = vec![0.0; n];
        for k in 0..n {
            let row = &self.op_rows[k];
            let a: Vec<f64> = (0..qa).map(|q| op_coeff(k, q)).collect();
            for j in 0..n {
                let mut s = 0.0;
                for (q, aq) in a.iter().enumerate() {
                    s += aq * row[j * qa + q];
                }
                m[(k, j)] = s;
            }
            rhs[k] = (0..qf).map(|q| rhs_coeff(k, q) * self.rhs_rows[k][q]).sum();
        }
        Ok((m, rhs))
    }

    pub fn solve_pointwise(
        &self,
        n: usize,
        op_coeff: impl Fn(usize, usize) -> f64,
        rhs_coeff: impl Fn(usize, usize) -> f64,
    ) -> Result<Vec<f64>> {
        let (m, rhs) = self.assemble_pointwise(n, op_coeff, rhs_coeff)?;
        let lu = DenseLu::factor(m.as_ref())?;
        if lu.is_singular() {
            return Err(Error::SingularReducedSystem { n });
        }
        let c = lu.solve(&rhs);
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularReducedSystem { n });
        }
        Ok(c)
    }

    /// Reduced system for the first `n` points and basis functions.
    pub fn online_system(&self, mu: &ParameterPoint, n: usize) -> Result<(Mat<f64>, Vec<f64>)> {
        let a = self.problem.operator_coefficients(mu)?;
        let af = self.problem.rhs_coefficients(mu)?;
        self.assemble_pointwise(n, |_, q| a[q], |_, q| af[q])
    }

    /// 2-norm condition number of the reduced system.
    pub fn condition(&self, mu: &ParameterPoint, n: usize) -> Result<f64> {
        let (m, _) = self.online_system(mu, n)?;
        Ok(condition_number(m.as_ref()))
    }

    /// Same snapshots, collocated at caller-supplied points.
    ///
    /// Uses the first `points.len()` basis functions. When `B` at the new points is not
    /// already unit lower triangular the basis is re-triangularized against them where
    /// the pivots allow it.
    pub fn with_points(&self, points: &[(f64, f64)]) -> Result<ErcmModel> {
        let m = points.len();
        check_size(m, self.basis.len())?;
        for &(x, y) in points {
            if !(x.abs() <= 1.0 && y.abs() <= 1.0) {
                return Err(Error::PointOutsideDomain { x, y });
            }
        }
        let dofs: Vec<Option<usize>> = points
            .iter()
            .map(|&p| self.point_dofs.iter().zip(&self.points).find(|(_, q)| **q == p).and_then(|(d, _)| *d))
            .collect();
        let basis = self.basis[..m].to_vec();
        let mut truncated = self.clone();
        truncated.selected.truncate(m);
        truncated.log.truncate(m);
        let values = basis_values(&self.problem, &basis, points, &dofs)?;
        let triangular = (0..m).all(|k| {
            (values[k][k] - 1.0).abs() <= 1e-10 && (k + 1..m).all(|j| values[k][j].abs() <= 1e-10)
        });
        truncated.rebuild(basis, points.to_vec(), dofs, !triangular)
    }

    /// Recompute every offline quantity for a basis collocated at `points`.
    fn rebuild(
        mut self,
        basis: Vec<Vec<f64>>,
        points: Vec<(f64, f64)>,
        dofs: Vec<Option<usize>>,
        triangularize: bool,
    ) -> Result<ErcmModel> {
        let problem = self.problem.clone();
        let basis = if triangularize {
            triangularize_against(&problem, basis, &points, &dofs)?
        } else {
            basis
        };
        let rhs_interp = rhs_interpolants(&problem)?;
        let interps: Vec<Vec<SpectralInterpolant>> = basis
            .iter()
            .map(|xi| term_interpolants(&problem, xi))
            .collect::<Result<_>>()?;
        let mut op_rows = Vec::with_capacity(points.len());
        let mut rhs_rows = Vec::with_capacity(points.len());
        for &(x, y) in &points {
            let mut row = Vec::new();
            for terms in &interps {
                for t in terms {
                    row.push(t.eval(x, y)?);
                }
            }
            op_rows.push(row);
            rhs_rows.push(rhs_interp.iter().map(|t| t.eval(x, y)).collect::<Result<_>>()?);
        }
        self.b = basis_values(&problem, &basis, &points, &dofs)?;
        self.cache = cache_build(&problem, &basis)?;
        self.op_rows = op_rows;
        self.rhs_rows = rhs_rows;
        self.basis = basis;
        self.points = points;
        self.point_dofs = dofs;
        Ok(self)
    }
}

/// `values[k][j] = ξ_j(x_k)`
fn basis_values(
    problem: &AffineProblem,
    basis: &[Vec<f64>],
    points: &[(f64, f64)],
    dofs: &[Option<usize>],
) -> Result<Vec<Vec<f64>>> {
    let mut values = vec![vec![0.0; basis.len()]; points.len()];
    for (j, xi) in basis.iter().enumerate() {
        let interp = if dofs.iter().all(Option::is_some) {
            None
        } else {
            Some(cheb_coeffs_2d(&problem.grid().embed(xi), problem.grid())?)
        };
        for (k, (&(x, y), d)) in points.iter().zip(dofs).enumerate() {
            values[k][j] = match (d, &interp) {
                (Some(d), _) => xi[*d],
                (None, Some(it)) => it.eval(x, y)?,
                (None, None) => unreachable!("an interpolant exists whenever a point is off-grid"),
            };
        }
    }
    Ok(values)
}

/// Make `ξ_i(x_k) = 0` for earlier pivoted points and `ξ_i(x_i) = 1` where the pivot
/// is usable; columns with a negligible pivot are left as they are.
fn triangularize_against(
    problem: &AffineProblem,
    mut basis: Vec<Vec<f64>>,
    points: &[(f64, f64)],
    dofs: &[Option<usize>],
) -> Result<Vec<Vec<f64>>> {
    let mut values = basis_values(problem, &basis, points, dofs)?;
    let m = basis.len();
    let mut pivoted: Vec<usize> = Vec::new();
    for i in 0..m {
        for &j in &pivoted {
            let c = values[j][i];
            if c == 0.0 {
                continue;
            }
            let (head, tail) = basis.split_at_mut(i);
            tail[0].iter_mut().zip(&head[j]).for_each(|(a, b)| *a -= c * b);
            for row in values.iter_mut() {
                row[i] -= c * row[j];
            }
        }
        let pivot = values[i][i];
        if pivot.abs() > 1e-12 * norm_inf(&basis[i]) {
            basis[i].iter_mut().for_each(|v| *v /= pivot);
            for row in values.iter_mut() {
                row[i] /= pivot;
            }
            pivoted.push(i);
        }
    }
    Ok(basis)
}

pub fn ercm_online_solve(model: &ErcmModel, mu: &ParameterPoint, n_active: usize) -> Result<Vec<f64>> {
    model.solve_n(mu, n_active)
}

impl ReducedModel for ErcmModel {
    fn method(&self) -> &'static str {
        "ercm"
    }

    fn problem(&self) -> &AffineProblem {
        &self.problem
    }

    fn stability(&self) -> &StabilityTable {
        &self.stability
    }

    fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    fn selected(&self) -> &[ParameterPoint] {
        &self.selected
    }

    fn log(&self) -> &[LogEntry] {
        &self.log
    }

    fn cache(&self) -> &EstimatorCache {
        &self.cache
    }

    fn solve_n(&self, mu: &ParameterPoint, n: usize) -> Result<Vec<f64>> {
        let a = self.problem.operator_coefficients(mu)?;
        let af = self.problem.rhs_coefficients(mu)?;
        self.solve_pointwise(n, |_, q| a[q], |_, q| af[q])
    }
}
