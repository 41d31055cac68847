//! Residual-based a posteriori error bound `Δ(μ) = ‖f(μ) − L(μ)u‖ / √β(μ)`.
//!
//! The squared residual norm of `u = Σ_j c_j u_j` expands into
//! `e1 − 2 e3 + e2` with
//!
//! ```text
//! e1 = Σ a^f_q3 a^f_q4 (f_q3 · f_q4)
//! e2 = Σ c_j1 c_j2 a_q1 a_q2 (L_q1 u_j1 · L_q2 u_j2)
//! e3 = Σ a^f_q3 a_q1 c_j1 (f_q3 · L_q1 u_j1)
//! ```
//!
//! so once the inner products are cached the bound costs nothing on the fine grid.

use crate::error::{Error, Result};
use crate::linalg::{dot, norm2};
use crate::problem::{AffineProblem, ParameterPoint};

/// `L_q u_j` for every basis vector `u_j` and operator term `q`.
#[derive(Clone, Debug, Default)]
pub struct AppliedBasis {
    vectors: Vec<Vec<Vec<f64>>>,
}

impl AppliedBasis {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn push(&mut self, problem: &AffineProblem, u: &[f64]) -> Result<()> {
        if u.len() != problem.dofs() {
            return Err(Error::Shape(format!(
                "basis vector has {} entries, the grid has {} interior dofs",
                u.len(),
                problem.dofs()
            )));
        }
        self.vectors
            .push((0..problem.qa()).map(|q| problem.apply_term(q, u)).collect());
        Ok(())
    }

    /// `L_q u_j`
    pub fn get(&self, j: usize, q: usize) -> &[f64] {
        &self.vectors[j][q]
    }
}

/// Inner products of right-hand side terms and applied basis vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorCache {
    qa: usize,
    qf: usize,
    ff: Vec<f64>,
    // ull[j1] holds blocks for j2 = 0..=j1, entry (j2, q1, q2) at (j2·qa + q1)·qa + q2
    ull: Vec<Vec<f64>>,
    // flu[j1] entry (q3, q1) at q3·qa + q1
    flu: Vec<Vec<f64>>,
}

impl EstimatorCache {
    /// Cache for an empty basis (only `f_q3 · f_q4`).
    pub fn new(problem: &AffineProblem) -> Self {
        let qf = problem.qf();
        let mut ff = vec![0.0; qf * qf];
        for a in 0..qf {
            for b in 0..qf {
                ff[a * qf + b] = dot(problem.rhs_term(a), problem.rhs_term(b));
            }
        }
        EstimatorCache {
            qa: problem.qa(),
            qf,
            ff,
            ull: Vec::new(),
            flu: Vec::new(),
        }
    }

    /// Rebuild from stored tensors, e.g. after loading a model.
    pub fn from_parts(qa: usize, qf: usize, ff: Vec<f64>, ull: Vec<Vec<f64>>, flu: Vec<Vec<f64>>) -> Result<Self> {
        let ok = ff.len() == qf * qf
            && ull.len() == flu.len()
            && ull.iter().enumerate().all(|(j, r)| r.len() == (j + 1) * qa * qa)
            && flu.iter().all(|r| r.len() == qf * qa);
        if !ok {
            return Err(Error::Shape("inconsistent estimator tensors".into()));
        }
        Ok(EstimatorCache { qa, qf, ff, ull, flu })
    }

    pub fn size(&self) -> usize {
        self.ull.len()
    }

    pub fn qa(&self) -> usize {
        self.qa
    }

    pub fn qf(&self) -> usize {
        self.qf
    }

    pub fn ff(&self, q3: usize, q4: usize) -> f64 {
        self.ff[q3 * self.qf + q4]
    }

    /// `(L_q1 u_j1) · (L_q2 u_j2)`
    pub fn ull(&self, j1: usize, q1: usize, j2: usize, q2: usize) -> f64 {
        if j2 <= j1 {
            self.ull[j1][(j2 * self.qa + q1) * self.qa + q2]
        } else {
            self.ull[j2][(j1 * self.qa + q2) * self.qa + q1]
        }
    }

    /// `f_q3 · (L_q1 u_j1)`
    pub fn flu(&self, q3: usize, q1: usize, j1: usize) -> f64 {
        self.flu[j1][q3 * self.qa + q1]
    }

    pub fn ff_raw(&self) -> &[f64] {
        &self.ff
    }

    pub fn ull_rows(&self) -> &[Vec<f64>] {
        &self.ull
    }

    pub fn flu_rows(&self) -> &[Vec<f64>] {
        &self.flu
    }

    /// Add the entries belonging to the next basis vector in `applied`.
    pub fn extend(&mut self, problem: &AffineProblem, applied: &AppliedBasis) -> Result<()> {
        let j1 = self.size();
        if applied.len() <= j1 {
            return Err(Error::Shape(format!(
                "cache already covers {j1} vectors, applied basis has {}",
                applied.len()
            )));
        }
        let qa = self.qa;
        let mut row = vec![0.0; (j1 + 1) * qa * qa];
        for j2 in 0..=j1 {
            for q1 in 0..qa {
                for q2 in 0..qa {
                    row[(j2 * qa + q1) * qa + q2] = dot(applied.get(j1, q1), applied.get(j2, q2));
                }
            }
        }
        let mut frow = vec![0.0; self.qf * qa];
        for q3 in 0..self.qf {
            for q1 in 0..qa {
                frow[q3 * qa + q1] = dot(problem.rhs_term(q3), applied.get(j1, q1));
            }
        }
        self.ull.push(row);
        self.flu.push(frow);
        Ok(())
    }

    /// Keep only the first `n` basis vectors.
    pub fn truncated(&self, n: usize) -> Self {
        EstimatorCache {
            qa: self.qa,
            qf: self.qf,
            ff: self.ff.clone(),
            ull: self.ull[..n.min(self.size())].to_vec(),
            flu: self.flu[..n.min(self.size())].to_vec(),
        }
    }
}

pub fn cache_build(problem: &AffineProblem, basis: &[Vec<f64>]) -> Result<EstimatorCache> {
    let mut cache = EstimatorCache::new(problem);
    let mut applied = AppliedBasis::new();
    for u in basis {
        applied.push(problem, u)?;
        cache.extend(problem, &applied)?;
    }
    Ok(cache)
}

pub fn cache_extend(cache: &mut EstimatorCache, problem: &AffineProblem, applied: &AppliedBasis) -> Result<()> {
    cache.extend(problem, applied)
}

/// `Σ_j c_j u_j`
pub fn combine(coeffs: &[f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let mut u = vec![0.0; basis.first().map_or(0, Vec::len)];
    for (c, b) in coeffs.iter().zip(basis) {
        u.iter_mut().zip(b).for_each(|(o, v)| *o += c * v);
    }
    u
}

/// `‖f(μ) − L(μ) Σ c_j u_j‖` evaluated on the fine grid.
pub fn residual_norm_direct(
    problem: &AffineProblem,
    mu: &ParameterPoint,
    coeffs: &[f64],
    basis: &[Vec<f64>],
) -> Result<f64> {
    if coeffs.len() != basis.len() {
        return Err(Error::Shape(format!(
            "{} coefficients for {} basis vectors",
            coeffs.len(),
            basis.len()
        )));
    }
    let f = problem.rhs_at(mu)?;
    if basis.is_empty() {
        return Ok(norm2(&f));
    }
    let lu = problem.apply_operator(mu, &combine(coeffs, basis))?;
    let r: Vec<f64> = f.iter().zip(&lu).map(|(a, b)| a - b).collect();
    Ok(norm2(&r))
}

/// Residual norm from the cached tensors; uses the first `coeffs.len()` basis vectors.
pub fn residual_norm_decomposed(cache: &EstimatorCache, a: &[f64], af: &[f64], coeffs: &[f64]) -> Result<f64> {
    let n = coeffs.len();
    if n > cache.size() || a.len() != cache.qa || af.len() != cache.qf {
        return Err(Error::Shape(format!(
            "cache holds {} vectors with Qa={}, Qf={}; got {} coefficients, {} and {} affine values",
            cache.size(),
            cache.qa,
            cache.qf,
            n,
            a.len(),
            af.len()
        )));
    }
    let qa = cache.qa;
    let mut e1 = 0.0;
    for q3 in 0..cache.qf {
        for q4 in 0..cache.qf {
            e1 += af[q3] * af[q4] * cache.ff(q3, q4);
        }
    }
    let mut e3 = 0.0;
    for (j1, c) in coeffs.iter().enumerate() {
        let frow = &cache.flu[j1];
        for q3 in 0..cache.qf {
            for q1 in 0..qa {
                e3 += af[q3] * a[q1] * c * frow[q3 * qa + q1];
            }
        }
    }
    let mut e2 = 0.0;
    for j1 in 0..n {
        let row = &cache.ull[j1];
        for j2 in 0..=j1 {
            let mut s = 0.0;
            for q1 in 0..qa {
                for q2 in 0..qa {
                    s += a[q1] * a[q2] * row[(j2 * qa + q1) * qa + q2];
                }
            }
            let w = if j1 == j2 { 1.0 } else { 2.0 };
            e2 += w * coeffs[j1] * coeffs[j2] * s;
        }
    }
    let radicand = e1 - 2.0 * e3 + e2;
    if radicand >= 0.0 {
        Ok(radicand.sqrt())
    } else if radicand >= -1e-12 * e1 {
        Ok(0.0)
    } else {
        Err(Error::NumericalInconsistency { radicand, e1 })
    }
}

/// `Δ = residual / √β_LB`
pub fn error_bound(residual_norm: f64, beta_lb: f64) -> Result<f64> {
    if !(beta_lb > 0.0) {
        return Err(Error::InvalidStability(beta_lb));
    }
    Ok(residual_norm / beta_lb.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{build_anisotropic, build_diffusion, CustomProblem, ProblemSpec, RhsDecl, TermDecl};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn snapshots(p: &AffineProblem, mus: &[[f64; 2]]) -> Vec<Vec<f64>> {
        mus.iter()
            .map(|m| p.truth_solve(&(*m).into()).unwrap().values)
            .collect()
    }

    fn single_term() -> AffineProblem {
        AffineProblem::from_spec(&ProblemSpec::Custom(CustomProblem {
            name: "single".into(),
            nx: 8,
            bounds: vec![(1.0, 2.0)],
            train: vec![2],
            terms: vec![TermDecl {
                op: "dxx".into(),
                coefficient: "mu1".into(),
            }],
            rhs: vec![RhsDecl {
                source: "x * y + 1.0".into(),
                coefficient: "1".into(),
            }],
        }))
        .unwrap()
    }

    #[test]
    fn empty_basis_cache() {
        let p = build_diffusion(8).unwrap();
        let c = cache_build(&p, &[]).unwrap();
        assert_eq!(c.size(), 0);
        let f = p.rhs_term(0);
        assert_eq!(c.ff(0, 0), dot(f, f));
        let r = residual_norm_decomposed(&c, &[1.0, 0.0, 1.0, 0.0], &[1.0], &[]).unwrap();
        assert!((r - norm2(f)).abs() <= 1e-14 * r);
    }

    #[test]
    fn single_snapshot_matches_direct_products() {
        let p = single_term();
        let u: Vec<f64> = (0..p.dofs()).map(|i| (i as f64 * 0.37).cos()).collect();
        let c = cache_build(&p, std::slice::from_ref(&u)).unwrap();
        let lu = p.apply_term(0, &u);
        assert_eq!(c.ull(0, 0, 0, 0), dot(&lu, &lu));
        assert_eq!(c.flu(0, 0, 0), dot(p.rhs_term(0), &lu));
    }

    #[test]
    fn extend_is_bit_equal_to_build() {
        let p = build_anisotropic(10).unwrap();
        let basis = snapshots(&p, &[[1.0, 0.5], [3.0, 1.5], [0.2, 0.1]]);
        let full = cache_build(&p, &basis).unwrap();
        let mut inc = cache_build(&p, &basis[..2]).unwrap();
        let mut applied = AppliedBasis::new();
        for u in &basis {
            applied.push(&p, u).unwrap();
        }
        cache_extend(&mut inc, &p, &applied).unwrap();
        assert_eq!(inc, full);
        for j1 in 0..3 {
            for j2 in 0..3 {
                for q1 in 0..3 {
                    for q2 in 0..3 {
                        assert_eq!(full.ull(j1, q1, j2, q2), full.ull(j2, q2, j1, q1));
                    }
                }
            }
        }
    }

    #[test]
    fn shape_errors() {
        let p = build_anisotropic(8).unwrap();
        assert!(matches!(cache_build(&p, &[vec![0.0; 3]]), Err(Error::Shape(_))));
        let basis = snapshots(&p, &[[1.0, 0.5]]);
        assert!(residual_norm_direct(&p, &[1.0, 0.5].into(), &[1.0, 2.0], &basis).is_err());
    }

    #[test]
    fn zero_coefficients_give_rhs_norm() {
        let p = build_anisotropic(10).unwrap();
        let mu: ParameterPoint = [2.0, 1.0].into();
        let basis = snapshots(&p, &[[1.0, 0.5]]);
        let d = residual_norm_direct(&p, &mu, &[0.0], &basis).unwrap();
        assert_eq!(d, norm2(&p.rhs_at(&mu).unwrap()));
    }

    #[test]
    fn snapshot_reproduction_residual() {
        let p = build_anisotropic(12).unwrap();
        let mu: ParameterPoint = [1.0, 0.5].into();
        let basis = snapshots(&p, &[[1.0, 0.5]]);
        let f = norm2(&p.rhs_at(&mu).unwrap());
        let d = residual_norm_direct(&p, &mu, &[1.0], &basis).unwrap();
        assert!(d <= 1e-9 * f);
        let cache = cache_build(&p, &basis).unwrap();
        let a = p.operator_coefficients(&mu).unwrap();
        let af = p.rhs_coefficients(&mu).unwrap();
        let r = residual_norm_decomposed(&cache, &a, &af, &[1.0]).unwrap();
        assert!(r <= 1e-7 * f);
    }

    #[test]
    fn decomposed_matches_direct_on_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for p in [build_anisotropic(12).unwrap(), build_diffusion(12).unwrap()] {
            let train = p.domain().sample_uniform(&mut rng, 4);
            let basis: Vec<Vec<f64>> = train.iter().map(|m| p.truth_solve(m).unwrap().values).collect();
            let cache = cache_build(&p, &basis).unwrap();
            for mu in p.domain().sample_uniform(&mut rng, 20) {
                let coeffs: Vec<f64> = (0..basis.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let direct = residual_norm_direct(&p, &mu, &coeffs, &basis).unwrap();
                let a = p.operator_coefficients(&mu).unwrap();
                let af = p.rhs_coefficients(&mu).unwrap();
                let dec = residual_norm_decomposed(&cache, &a, &af, &coeffs).unwrap();
                assert!((dec - direct).abs() <= 1e-9 * direct, "{dec} vs {direct}");
            }
        }
    }

    #[test]
    fn online_extents_do_not_depend_on_grid() {
        let shapes = |nx: usize| {
            let p = build_anisotropic(nx).unwrap();
            let basis = snapshots(&p, &[[1.0, 0.5], [2.0, 1.0]]);
            let c = cache_build(&p, &basis).unwrap();
            (
                c.ff_raw().len(),
                c.ull_rows().iter().map(Vec::len).collect::<Vec<_>>(),
                c.flu_rows().iter().map(Vec::len).collect::<Vec<_>>(),
            )
        };
        assert_eq!(shapes(8), shapes(14));
    }

    #[test]
    fn error_bound_arithmetic() {
        assert_eq!(error_bound(0.0, 3.0).unwrap(), 0.0);
        assert_eq!(error_bound(2.0, 4.0).unwrap(), 1.0);
        assert!(matches!(error_bound(1.0, 0.0), Err(Error::InvalidStability(_))));
        assert!(matches!(error_bound(1.0, -2.0), Err(Error::InvalidStability(_))));
    }

    #[test]
    fn negative_radicand_beyond_tolerance_is_an_error() {
        let cache = EstimatorCache::from_parts(1, 1, vec![1.0], vec![vec![1.0]], vec![vec![5.0]]).unwrap();
        // e1 - 2 e3 + e2 = 1 - 10 + 1
        assert!(matches!(
            residual_norm_decomposed(&cache, &[1.0], &[1.0], &[1.0]),
            Err(Error::NumericalInconsistency { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn decomposed_equals_direct(c0 in -2.0f64..2.0, c1 in -2.0f64..2.0, m1 in 0.1f64..4.0, m2 in 0.0f64..2.0) {
            let p = build_anisotropic(8).unwrap();
            let basis: Vec<Vec<f64>> = (0..2)
                .map(|k| (0..p.dofs()).map(|i| ((i + 7 * k) as f64 * 0.41).sin()).collect())
                .collect();
            let cache = cache_build(&p, &basis).unwrap();
            let mu: ParameterPoint = [m1, m2].into();
            let direct = residual_norm_direct(&p, &mu, &[c0, c1], &basis).unwrap();
            let a = p.operator_coefficients(&mu).unwrap();
            let af = p.rhs_coefficients(&mu).unwrap();
            let dec = residual_norm_decomposed(&cache, &a, &af, &[c0, c1]).unwrap();
            prop_assert!((dec - direct).abs() <= 1e-9 * direct.max(1e-300));
        }
    }
}
