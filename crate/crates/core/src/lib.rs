//! Reduced collocation methods for affinely parametrized elliptic problems.
//!
//! Truth solutions come from Chebyshev spectral collocation on `[-1, 1]²`. Two reduced
//! models are built on top of them by greedy sampling:
//!
//! - [`lsrcm`]: least-squares reduced collocation (normal equations over the snapshot span);
//! - [`ercm`]: empirical reduced collocation (a square system at greedily chosen points).
//!
//! Both carry a residual-based error bound from [`estimator`] whose online cost does not
//! depend on the truth grid size. [`harness`] holds configuration, model files and the
//! convergence/timing studies used by the `rcm` binary.

pub mod error;
pub mod estimator;
pub mod ercm;
pub mod expr;
pub mod harness;
pub mod linalg;
pub mod lsrcm;
pub mod problem;
pub mod reduced;
pub mod spectral;

pub use error::{Error, Result};
pub use problem::{build_anisotropic, build_diffusion, AffineProblem, ParameterPoint};
