//! Closed-form rigid pose estimation from mixed 3D-3D (point, line, plane) and
//! 3D-2D (perspective) correspondences.
//!
//! The weighted least-squares pose objective is reduced to a quartic in a unit
//! quaternion by eliminating the translation in closed form. The first-order
//! stationarity system of that quartic is solved globally by a hidden-variable
//! resultant: multiples of the stationarity polynomials (augmented at the lower
//! elimination degrees by Sylvester-form rows) assemble into a matrix pencil
//! whose forty generalized eigenpairs carry every critical rotation. The
//! cost-minimal real candidate is the global optimum.
//!
//! Pipeline: [`reduction`] builds the quadratic canonical form, [`polysys`]
//! the stationarity system, [`sylvester`] the augmentation rows, [`elimination`]
//! the eliminant matrices and their Schur-compressed 40x40 pencil,
//! [`eigensolver`] the candidate rotations, and [`solver`] ties the stages
//! together. [`sim_bench`] holds the synthetic-scene simulator, error metrics,
//! benchmark harness and a restart-based local-refinement oracle; [`verify`]
//! the structural rank/degree checks exposed by the CLI.

// Force linking of the system BLAS/LAPACK the eigensolver backend calls into.
extern crate openblas_src as _;

pub mod eigensolver;
pub mod elimination;
pub mod poly;
pub mod polysys;
pub mod reduction;
pub mod sim_bench;
pub mod solver;
pub mod sylvester;
pub mod verify;

pub use poly::{monomial_count, HomoPoly, LambdaPoly, MonomialBasis};
pub use reduction::{build_canonical, CanonicalForm, Correspondence, CorrespondenceKind};
pub use solver::{
    solve, solve_canonical, Method, PoseSolution, SolveError, SolverConfig, StageTimings,
    Tolerances,
};
