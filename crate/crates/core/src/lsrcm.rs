//! Least-squares reduced collocation.
//!
//! The reduced solution minimizes `‖f(μ) − L(μ) Σ c_j ξ_j‖` over the span of greedily
//! selected snapshots. Online, `AᵀA` and `Aᵀf` are assembled from the estimator tensors
//! (they are the same inner products) and solved by Cholesky.

use std::sync::Arc;

use faer::Mat;

use crate::error::{Error, Result};
use crate::estimator::{AppliedBasis, EstimatorCache};
use crate::linalg::{axpy, cholesky_solve, dot, norm2};
use crate::problem::{AffineProblem, ParameterPoint, StabilityTable};
use crate::reduced::{
    argmax_unselected, check_size, first_pick, shared_table, sweep, LogEntry, ReducedModel, TrainOptions,
};

#[derive(Clone, Debug)]
pub struct LsModel {
    pub(crate) problem: Arc<AffineProblem>,
    pub(crate) stability: Arc<StabilityTable>,
    pub(crate) selected: Vec<ParameterPoint>,
    pub(crate) basis: Vec<Vec<f64>>,
    pub(crate) cache: EstimatorCache,
    pub(crate) log: Vec<LogEntry>,
}

/// Greedy training with a freshly computed stability table.
pub fn ls_greedy_train(problem: Arc<AffineProblem>, opts: &TrainOptions) -> Result<LsModel> {
    ls_greedy_train_with(problem, None, opts)
}

/// Greedy training, optionally reusing a stability table over the same lattice.
pub fn ls_greedy_train_with(
    problem: Arc<AffineProblem>,
    table: Option<Arc<StabilityTable>>,
    opts: &TrainOptions,
) -> Result<LsModel> {
    if opts.n_max == 0 {
        return Err(Error::Config("n_max must be at least 1".into()));
    }
    let stability = shared_table(&problem, table)?;
    let training = problem.domain().training_set();
    let mut gs = WeightedGramSchmidt::new(&problem)?;
    let mut model = LsModel {
        cache: EstimatorCache::new(&problem),
        problem: problem.clone(),
        stability,
        selected: Vec::new(),
        basis: Vec::new(),
        log: Vec::new(),
    };
    let mut applied = AppliedBasis::new();
    let mut chosen: Vec<usize> = Vec::new();
    let mut next = first_pick(training.len(), opts.seed);
    let mut next_delta = None;

    loop {
        let iteration = chosen.len() + 1;
        let wrap = |e: Error| e.in_iteration(iteration);
        let mu = training[next].clone();
        let snapshot = problem.truth_solve(&mu).map_err(wrap)?;
        let xi = gs.add(snapshot.values).ok_or(Error::DegenerateBasis { iteration }).map_err(wrap)?;
        applied.push(&problem, &xi).map_err(wrap)?;
        model.cache.extend(&problem, &applied).map_err(wrap)?;
        model.basis.push(xi);
        model.selected.push(mu.clone());
        chosen.push(next);

        let n = model.basis.len();
        let deltas = sweep(&training, |i, m| {
            let c = model.solve_n(m, n)?;
            let est = model.estimate(m, &c)?;
            debug_assert_eq!(model.stability.values()[i], est.beta);
            Ok(est.delta)
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
    Ok(model)
}

/// Modified Gram–Schmidt in the inner product `(L(μc)u, L(μc)v)`, `μc` the domain center.
struct WeightedGramSchmidt<'a> {
    problem: &'a AffineProblem,
    weights: Vec<f64>,
    basis: Vec<Vec<f64>>,
    images: Vec<Vec<f64>>,
}

impl<'a> WeightedGramSchmidt<'a> {
    fn new(problem: &'a AffineProblem) -> Result<Self> {
        let weights = problem.operator_coefficients(&problem.domain().center())?;
        Ok(WeightedGramSchmidt {
            problem,
            weights,
            basis: Vec::new(),
            images: Vec::new(),
        })
    }

    fn image(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        for (q, w) in self.weights.iter().enumerate() {
            axpy(*w, &self.problem.apply_term(q, u), &mut out);
        }
        out
    }

    /// Orthonormalize `s` against the current basis; `None` if nothing is left.
    fn add(&mut self, mut s: Vec<f64>) -> Option<Vec<f64>> {
        let mut w = self.image(&s);
        let start = norm2(&w);
        for _ in 0..2 {
            for (b, img) in self.basis.iter().zip(&self.images) {
                let c = dot(&w, img);
                axpy(-c, b, &mut s);
                axpy(-c, img, &mut w);
            }
        }
        let nrm = norm2(&w);
        if !(nrm > 1e-12 * start) {
            return None;
        }
        s.iter_mut().for_each(|v| *v /= nrm);
        w.iter_mut().for_each(|v| *v /= nrm);
        self.basis.push(s.clone());
        self.images.push(w);
        Some(s)
    }
}

impl LsModel {
    pub fn from_parts(
        problem: Arc<AffineProblem>,
        stability: Arc<StabilityTable>,
        selected: Vec<ParameterPoint>,
        basis: Vec<Vec<f64>>,
        cache: EstimatorCache,
        log: Vec<LogEntry>,
    ) -> Result<Self> {
        if selected.len() != basis.len() || cache.size() != basis.len() {
            return Err(Error::Shape("inconsistent least-squares model parts".into()));
        }
        Ok(LsModel {
            problem,
            stability,
            selected,
            basis,
            cache,
            log,
        })
    }

    /// `AᵀA` and `Aᵀf` for the first `n` basis functions, from the cached tensors.
    pub fn online_system(&self, mu: &ParameterPoint, n: usize) -> Result<(Mat<f64>, Vec<f64>)> {
        check_size(n, self.basis.len())?;
        let a = self.problem.operator_coefficients(mu)?;
        let af = self.problem.rhs_coefficients(mu)?;
        let c = &self.cache;
        let (qa, qf) = (c.qa(), c.qf());
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = 0.0;
                for q1 in 0..qa {
                    for q2 in 0..qa {
                        s += a[q1] * a[q2] * c.ull(i, q1, j, q2);
                    }
                }
                m[(i, j)] = s;
                m[(j, i)] = s;
            }
        }
        let rhs = (0..n)
            .map(|i| {
                let mut s = 0.0;
                for q1 in 0..qa {
                    for q2 in 0..qf {
                        s += a[q1] * af[q2] * c.flu(q2, q1, i);
                    }
                }
                s
            })
            .collect();
        Ok((m, rhs))
    }
}

/// `AᵀA`, `Aᵀf` for the first `n_active` basis functions.
pub fn ls_online_matrix(model: &LsModel, mu: &ParameterPoint, n_active: usize) -> Result<(Mat<f64>, Vec<f64>)> {
    model.online_system(mu, n_active)
}

pub fn ls_online_solve(model: &LsModel, mu: &ParameterPoint) -> Result<Vec<f64>> {
    model.solve(mu)
}

impl ReducedModel for LsModel {
    fn method(&self) -> &'static str {
        "lsrcm"
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
        let (m, rhs) = self.online_system(mu, n)?;
        cholesky_solve(m.as_ref(), &rhs).ok_or(Error::IllConditionedModel { n })
    }
}
