//! Convergence and timing studies, emitted as plain tables.

use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::ercm::{ercm_greedy_train_with, ErcmModel, ErcmOptions};
use crate::error::{Error, Result};
use crate::linalg::{norm2, norm_inf};
use crate::lsrcm::ls_greedy_train_with;
use crate::problem::{AffineProblem, ParameterPoint, StabilityTable};
use crate::reduced::{Estimate, ReducedModel, TrainOptions};
use crate::spectral::{cheb_coeffs_2d, interpolate_at};

use super::artifact::{AnyModel, ModelArtifact};
use super::config::{Method, StudyConfig};

/// Train the configured method. `table` may carry a precomputed `β` table for the same
/// lattice; its cost is then not part of the reported offline time.
pub fn train(config: &StudyConfig, table: Option<Arc<StabilityTable>>) -> Result<ModelArtifact> {
    let problem = Arc::new(config.build_problem()?);
    let start = Instant::now();
    let opts = TrainOptions {
        n_max: config.n_max,
        tol: config.tol,
        seed: config.seed,
    };
    let model = match config.method {
        Method::Lsrcm => AnyModel::Lsrcm(ls_greedy_train_with(problem, table, &opts)?),
        Method::Ercm => AnyModel::Ercm(ercm_greedy_train_with(problem, table, &opts, ErcmOptions::default())?),
    };
    Ok(ModelArtifact {
        config: config.clone(),
        offline_seconds: start.elapsed().as_secs_f64(),
        model,
    })
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Median of a non-empty slice (mean of the middle pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Least-squares line through `(x, y)`: slope and coefficient of determination.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, r2)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TruthRow {
    pub nx: usize,
    pub l2: f64,
    pub linf: f64,
}

/// Truth solutions at `mu` for each order in `nx_list`, compared with a reference at
/// `ref_nx` on the reference's interior nodes.
///
/// This is a discretization study, so `mu` may lie outside the training box; the box is
/// widened to contain it.
pub fn study_truth_convergence(
    config: &StudyConfig,
    mu: &ParameterPoint,
    nx_list: &[usize],
    ref_nx: usize,
) -> Result<Vec<TruthRow>> {
    if nx_list.iter().any(|&n| n > ref_nx) {
        return Err(Error::Config(format!(
            "reference order {ref_nx} must be at least every order in the list"
        )));
    }
    let build = |nx: usize| -> Result<AffineProblem> {
        let p = AffineProblem::from_spec(&config.problem_spec(nx)?)?;
        let d = p.domain();
        if mu.dim() != d.dim() {
            return Err(Error::Shape(format!("mu has {} components, expected {}", mu.dim(), d.dim())));
        }
        if d.contains(mu) {
            return Ok(p);
        }
        let bounds = d
            .bounds
            .iter()
            .zip(mu.as_slice())
            .map(|(&(lo, hi), &m)| (lo.min(m), hi.max(m)))
            .collect();
        p.with_bounds(bounds)
    };
    let reference = build(ref_nx)?;
    let u_ref = reference.truth_solve(mu)?.values;
    let targets = reference.grid().interior_points();
    nx_list
        .iter()
        .map(|&nx| {
            let p = build(nx)?;
            let u = p.truth_solve(mu)?.values;
            let interp = cheb_coeffs_2d(&p.grid().embed(&u), p.grid())?;
            let at = interpolate_at(&interp, &targets)?;
            let e = diff(&at, &u_ref);
            Ok(TruthRow {
                nx,
                l2: norm2(&e),
                linf: norm_inf(&e),
            })
        })
        .collect()
}

/// Random test parameters with their truth solutions, shared by the studies.
#[derive(Clone, Debug)]
pub struct TestSet {
    pub points: Vec<ParameterPoint>,
    pub truths: Vec<Vec<f64>>,
}

impl TestSet {
    /// `samples` uniform draws from the problem's box, solved in parallel.
    pub fn sample(problem: &AffineProblem, samples: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = problem.domain().sample_uniform(&mut rng, samples);
        let truths = points
            .par_iter()
            .map(|mu| {
                problem.truth_solve(mu).map(|t| t.values).map_err(|e| Error::Study {
                    n: 0,
                    mu: mu.0.clone(),
                    source: Box::new(e),
                })
            })
            .collect::<Result<_>>()?;
        Ok(TestSet { points, truths })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRecord {
    pub n: usize,
    /// Largest bound over the training lattice, from the greedy log.
    pub max_delta_xi: f64,
    /// Largest bound over the test sample (fine-grid residual, exact `β`).
    pub max_delta_test: f64,
    pub max_l2: f64,
    pub median_l2: f64,
    pub min_l2: f64,
    pub max_linf: f64,
    pub median_linf: f64,
    pub min_linf: f64,
}

impl ConvergenceRecord {
    pub const HEADER: [&'static str; 9] = [
        "n",
        "max_delta_xi",
        "max_delta_test",
        "max_l2",
        "median_l2",
        "min_l2",
        "max_linf",
        "median_linf",
        "min_linf",
    ];
}

/// Errors and bounds for `n = 1..=N` over a test set.
pub fn study_rbm_convergence(model: &dyn ReducedModel, tests: &TestSet) -> Result<Vec<ConvergenceRecord>> {
    if tests.is_empty() {
        return Err(Error::Config("the test set is empty".into()));
    }
    (1..=model.size())
        .map(|n| {
            let per_sample: Vec<(f64, f64, f64)> = tests
                .points
                .par_iter()
                .zip(&tests.truths)
                .map(|(mu, truth)| {
                    let ctx = |e: Error| Error::Study {
                        n,
                        mu: mu.0.clone(),
                        source: Box::new(e),
                    };
                    let c = model.solve_n(mu, n).map_err(ctx)?;
                    let e = diff(&model.reconstruct(&c), truth);
                    let est = model.estimate_direct(mu, &c).map_err(ctx)?;
                    Ok((norm2(&e), norm_inf(&e), est.delta))
                })
                .collect::<Result<_>>()?;
            let l2: Vec<f64> = per_sample.iter().map(|s| s.0).collect();
            let linf: Vec<f64> = per_sample.iter().map(|s| s.1).collect();
            let (min_l2, max_l2) = min_max(&l2);
            let (min_linf, max_linf) = min_max(&linf);
            Ok(ConvergenceRecord {
                n,
                max_delta_xi: model.log()[n - 1].max_delta,
                max_delta_test: per_sample.iter().map(|s| s.2).fold(0.0, f64::max),
                max_l2,
                median_l2: median(&l2),
                min_l2,
                max_linf,
                median_linf: median(&linf),
                min_linf,
            })
        })
        .collect()
}

/// The first `n` nodes (row-major) of the interior Chebyshev tensor grid with
/// `⌈√n⌉` nodes per row.
pub fn coarse_chebyshev_points(n: usize) -> Vec<(f64, f64)> {
    let px = (n as f64).sqrt().ceil() as usize;
    let py = n.div_ceil(px.max(1));
    let nodes = |m: usize| -> Vec<f64> {
        (1..=m)
            .map(|k| (std::f64::consts::PI * k as f64 / (m + 1) as f64).cos())
            .collect()
    };
    let (xs, ys) = (nodes(px), nodes(py));
    xs.iter()
        .flat_map(|&x| ys.iter().map(move |&y| (x, y)))
        .take(n)
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct NaiveRow {
    /// `chebyshev` for the coarse tensor points, `greedy` for the trained ones.
    pub points: &'static str,
    pub n: usize,
    pub min_cond: f64,
    pub median_cond: f64,
    pub max_cond: f64,
    /// Samples whose reduced system could not be solved.
    pub singular: usize,
    /// Smallest errors over the samples that could be solved (`inf` if none).
    pub best_l2: f64,
    pub best_linf: f64,
}

impl NaiveRow {
    pub const HEADER: [&'static str; 8] = [
        "points",
        "n",
        "min_cond",
        "median_cond",
        "max_cond",
        "singular",
        "best_l2",
        "best_linf",
    ];
}

fn point_set_row(label: &'static str, model: &ErcmModel, n: usize, tests: &TestSet) -> Result<NaiveRow> {
    let per_sample: Vec<(f64, Option<(f64, f64)>)> = tests
        .points
        .par_iter()
        .zip(&tests.truths)
        .map(|(mu, truth)| {
            let cond = model.condition(mu, n)?;
            let err = match model.solve_n(mu, n) {
                Ok(c) => {
                    let e = diff(&model.reconstruct(&c), truth);
                    Some((norm2(&e), norm_inf(&e)))
                }
                Err(Error::SingularReducedSystem { .. }) => None,
                Err(e) => return Err(e),
            };
            Ok((cond, err))
        })
        .collect::<Result<_>>()?;
    // A NaN condition number comes from a non-finite system; treat it as infinite.
    let conds: Vec<f64> = per_sample
        .iter()
        .map(|s| if s.0.is_nan() { f64::INFINITY } else { s.0 })
        .collect();
    let (min_cond, max_cond) = min_max(&conds);
    let solved: Vec<(f64, f64)> = per_sample.iter().filter_map(|s| s.1).collect();
    Ok(NaiveRow {
        points: label,
        n,
        min_cond,
        median_cond: median(&conds),
        max_cond,
        singular: per_sample.len() - solved.len(),
        best_l2: solved.iter().map(|s| s.0).fold(f64::INFINITY, f64::min),
        best_linf: solved.iter().map(|s| s.1).fold(f64::INFINITY, f64::min),
    })
}

/// The trained snapshots collocated at coarse Chebyshev points, next to the greedy
/// points as a control. Rows are ordered by point set, then `n`.
pub fn study_naive_points(model: &ErcmModel, tests: &TestSet) -> Result<Vec<NaiveRow>> {
    let mut rows = Vec::new();
    for n in 1..=model.size() {
        let naive = model.with_points(&coarse_chebyshev_points(n))?;
        rows.push(point_set_row("chebyshev", &naive, n, tests)?);
    }
    for n in 1..=model.size() {
        rows.push(point_set_row("greedy", model, n, tests)?);
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimingRow {
    pub method: &'static str,
    pub nx: usize,
    pub n: usize,
    pub offline_seconds: f64,
    pub online_seconds: f64,
    pub truth_seconds: f64,
    pub online_over_truth: f64,
    pub offline_over_truth: f64,
}

impl TimingRow {
    pub const HEADER: [&'static str; 8] = [
        "method",
        "nx",
        "n",
        "offline_seconds",
        "online_seconds",
        "truth_seconds",
        "online_over_truth",
        "offline_over_truth",
    ];
}

/// Number of truth solves timed (they dominate the study's cost).
pub const TRUTH_REPETITIONS: usize = 5;

/// Median wall time of one online solve (coefficients, assembly and solve) and of one
/// truth solve, on a single worker.
pub fn study_timing(
    model: &dyn ReducedModel,
    offline_seconds: f64,
    repetitions: usize,
    seed: u64,
) -> Result<TimingRow> {
    let p = model.problem();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mus = p.domain().sample_uniform(&mut rng, repetitions.clamp(1, 64));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::Config(format!("cannot build a timing pool: {e}")))?;
    pool.install(|| {
        // warm-up, so first-touch costs stay out of the medians
        std::hint::black_box(model.solve(&mus[0])?);
        let mut online = Vec::with_capacity(repetitions);
        for r in 0..repetitions.max(1) {
            let mu = &mus[r % mus.len()];
            let t = Instant::now();
            std::hint::black_box(model.solve(mu)?);
            online.push(t.elapsed().as_secs_f64());
        }
        let mut truth = Vec::new();
        for r in 0..TRUTH_REPETITIONS.min(repetitions.max(1)) {
            let mu = &mus[r % mus.len()];
            let t = Instant::now();
            std::hint::black_box(p.truth_solve(mu)?);
            truth.push(t.elapsed().as_secs_f64());
        }
        let (online_seconds, truth_seconds) = (median(&online), median(&truth));
        Ok(TimingRow {
            method: model.method(),
            nx: p.grid().nx(),
            n: model.size(),
            offline_seconds,
            online_seconds,
            truth_seconds,
            online_over_truth: online_seconds / truth_seconds,
            offline_over_truth: offline_seconds / truth_seconds,
        })
    })
}

/// One online evaluation with its certificate.
#[derive(Clone, Debug)]
pub struct OnlineResult {
    pub mu: ParameterPoint,
    pub coefficients: Vec<f64>,
    /// Reduced solution on the interior grid.
    pub values: Vec<f64>,
    pub estimate: Estimate,
    /// Wall time of the reduced solve alone.
    pub seconds: f64,
}

pub fn online(model: &dyn ReducedModel, mu: &ParameterPoint) -> Result<OnlineResult> {
    model.problem().domain().check(mu)?;
    let t = Instant::now();
    let coefficients = model.solve(mu)?;
    let seconds = t.elapsed().as_secs_f64();
    let estimate = model.estimate(mu, &coefficients)?;
    Ok(OnlineResult {
        mu: mu.clone(),
        values: model.reconstruct(&coefficients),
        coefficients,
        estimate,
        seconds,
    })
}
