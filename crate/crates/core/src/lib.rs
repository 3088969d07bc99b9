//! Wick–Wong–Zakai approximation of fBm-driven Itô SDE systems.
//!
//! The approximation replaces fractional white noise by the derivative of a
//! truncated Cameron–Martin expansion and interprets the noise product as a
//! Wick product. This crate evaluates the resulting mild solution pathwise,
//! evaluates the exact strong solution on the same Gaussian sample, and
//! provides Monte Carlo checks of convergence, moment bounds and the weak
//! Fokker–Planck identity.
//!
//! Numerical types are generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix the double-precision instantiation used by the analysis
//! layer and the CLI.

pub mod analysis;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod phi;
pub mod scalar;
pub mod solver;
pub mod wick;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Hurst64 = phi::Hurst<f64>;
pub type TimeGrid64 = phi::TimeGrid<f64>;
pub type StepFunction64 = phi::StepFunction<f64>;
pub type PhiSpace64 = phi::PhiSpace<f64>;
pub type PhiBasis64 = phi::PhiBasis<f64>;
pub type SigmaCoeffs64 = wick::SigmaCoeffs<f64>;
pub type CovarianceModel64 = ensemble::CovarianceModel<f64>;
pub type ProblemSpec64 = solver::ProblemSpec<f64>;
pub type PathSolution64 = solver::PathSolution<f64>;

pub type PhiBasis32 = phi::PhiBasis<f32>;
pub type ProblemSpec32 = solver::ProblemSpec<f32>;
