//! Pieces shared by the two reduced models: training options, the greedy log and a
//! common online interface.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{combine, error_bound, residual_norm_decomposed, residual_norm_direct, EstimatorCache};
use crate::problem::{AffineProblem, ParameterPoint, StabilityTable};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub n_max: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            n_max: 17,
            tol: 1e-8,
            seed: 0,
        }
    }
}

/// One greedy iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub iteration: usize,
    pub mu: ParameterPoint,
    /// Position of `mu` in the training lattice.
    pub index: usize,
    /// Bound that selected `mu`; `None` for the random first pick.
    pub selected_delta: Option<f64>,
    /// Largest bound over the training lattice once `mu` has joined the basis.
    pub max_delta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub residual: f64,
    pub beta: f64,
    pub delta: f64,
}

/// Online interface common to both methods.
pub trait ReducedModel: Sync {
    fn method(&self) -> &'static str;
    fn problem(&self) -> &AffineProblem;
    fn stability(&self) -> &StabilityTable;
    fn basis(&self) -> &[Vec<f64>];
    fn selected(&self) -> &[ParameterPoint];
    fn log(&self) -> &[LogEntry];
    fn cache(&self) -> &EstimatorCache;

    /// Reduced coefficients using the first `n` basis functions.
    fn solve_n(&self, mu: &ParameterPoint, n: usize) -> Result<Vec<f64>>;

    fn size(&self) -> usize {
        self.basis().len()
    }

    fn solve(&self, mu: &ParameterPoint) -> Result<Vec<f64>> {
        self.solve_n(mu, self.size())
    }

    /// `u = Σ c_j ξ_j` on the interior grid.
    fn reconstruct(&self, coeffs: &[f64]) -> Vec<f64> {
        combine(coeffs, &self.basis()[..coeffs.len()])
    }

    /// Bound from the cached tensors (no fine-grid work besides `β` for new `μ`).
    fn estimate(&self, mu: &ParameterPoint, coeffs: &[f64]) -> Result<Estimate> {
        let p = self.problem();
        let a = p.operator_coefficients(mu)?;
        let af = p.rhs_coefficients(mu)?;
        let residual = residual_norm_decomposed(self.cache(), &a, &af, coeffs)?;
        let beta = self.stability().beta(p, mu)?;
        Ok(Estimate {
            residual,
            beta,
            delta: error_bound(residual, beta)?,
        })
    }

    /// Bound with the residual evaluated on the fine grid.
    fn estimate_direct(&self, mu: &ParameterPoint, coeffs: &[f64]) -> Result<Estimate> {
        let p = self.problem();
        let residual = residual_norm_direct(p, mu, coeffs, &self.basis()[..coeffs.len()])?;
        let beta = self.stability().beta(p, mu)?;
        Ok(Estimate {
            residual,
            beta,
            delta: error_bound(residual, beta)?,
        })
    }
}

pub(crate) fn first_pick(len: usize, seed: u64) -> usize {
    ChaCha8Rng::seed_from_u64(seed).random_range(0..len)
}

/// Largest value among indices not yet selected; the first index wins ties.
pub(crate) fn argmax_unselected(values: &[f64], selected: &[usize]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if selected.contains(&i) {
            continue;
        }
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Evaluate `f` over the training lattice in parallel, keeping lattice order.
pub(crate) fn sweep<F>(points: &[ParameterPoint], f: F) -> Result<Vec<f64>>
where
    F: Fn(usize, &ParameterPoint) -> Result<f64> + Sync,
{
    points
        .par_iter()
        .enumerate()
        .map(|(i, mu)| f(i, mu))
        .collect()
}

pub(crate) fn shared_table(problem: &AffineProblem, table: Option<Arc<StabilityTable>>) -> Result<Arc<StabilityTable>> {
    match table {
        Some(t) => {
            if t.points() != problem.domain().training_set().as_slice() {
                return Err(Error::Shape(
                    "stability table was computed on a different training lattice".into(),
                ));
            }
            Ok(t)
        }
        None => Ok(Arc::new(problem.stability_table()?)),
    }
}

pub(crate) fn check_size(n: usize, available: usize) -> Result<()> {
    if n == 0 || n > available {
        Err(Error::BasisSizeOutOfRange {
            requested: n,
            available,
        })
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_skips_selected_and_prefers_first() {
        assert_eq!(argmax_unselected(&[1.0, 3.0, 3.0, 2.0], &[]), Some(1));
        assert_eq!(argmax_unselected(&[1.0, 3.0, 3.0, 2.0], &[1]), Some(2));
        assert_eq!(argmax_unselected(&[1.0, f64::INFINITY], &[]), Some(1));
        assert_eq!(argmax_unselected(&[1.0], &[0]), None);
    }

    #[test]
    fn first_pick_is_seeded() {
        assert_eq!(first_pick(1000, 7), first_pick(1000, 7));
        assert!(first_pick(5, 1) < 5);
    }
}
