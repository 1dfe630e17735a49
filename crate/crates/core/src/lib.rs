//! Forward and inverse spectral solver for
//! `−y″ + (ν₀/(x−a)² + q(x)) y = λ y` on the half-line, `y(0) = 0`, with a
//! Bessel-type singularity at the interior point `x = a` and a matching
//! matrix `A` connecting the solution branches across it.
//!
//! Everything numerical is generic over [`scalar::Real`]; the aliases below
//! fix the scalar to `f64`, which is what the accuracy targets assume.

pub mod asymptotics;
pub mod contour;
pub mod error;
pub mod forward;
pub mod inverse;
pub mod io;
pub mod linalg;
pub mod ode;
pub mod problem;
pub mod quadrature;
pub mod scalar;
pub mod series;
pub mod spectrum;
pub mod volterra;

pub use error::{Result, SlwError};
pub use problem::{
    check_class_w, classify_regime, compute_xi, lift_lambda, Edge, Potential, RegimeReport, SingularProblem,
    SpectralPoint, TransitionMatrix, WReport, XiMatrix,
};
pub use scalar::Real;

pub type C64 = num_complex::Complex<f64>;
pub type Problem = SingularProblem<f64>;
pub type Point = SpectralPoint<f64>;
