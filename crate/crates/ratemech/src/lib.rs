//! Rate allocation on capacity-constrained networks: a social-welfare solver
//! with optimality certificates, two tax mechanisms whose Nash equilibria
//! realize the welfare-optimal rates, and a game engine that searches for and
//! audits those equilibria.
//!
//! Layout:
//! - [`model`]: network instances, routes, valuations, structural validation.
//! - [`solver`]: the centralized welfare problem, solved by a dual method and
//!   certified by first-order optimality residuals; plus a grid-search oracle.
//! - [`wbb`]: the weakly budget-balanced mechanism (scaled proportional
//!   allocation, quadratic price taxes).
//! - [`sbb`]: the strongly budget-balanced variant (adds a redistribution
//!   term and a scale-report penalty).
//! - [`game`]: message-space utilities, analytic gradients, best-response
//!   dynamics, equilibrium construction and verification.
//! - [`generator`]: seeded random instances for experiments.

// Index loops are kept where several same-length vectors are walked against
// matrix rows; iterator chains obscure the algebra there.
#![allow(clippy::needless_range_loop)]

pub mod game;
pub mod generator;
pub mod model;
pub mod sbb;
pub mod solver;
pub mod wbb;

/// Max-norm distance between two equal-length vectors.
pub fn linf_distance(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
