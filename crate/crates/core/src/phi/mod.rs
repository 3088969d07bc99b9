//! The Hilbert space of integrands for fractional Wiener integrals with Hurst
//! index in (1/2, 1).
//!
//! Every element is represented as a step function on a shared [`TimeGrid`],
//! which keeps inner products in closed form: the singular kernel is never
//! integrated numerically.

mod basis;
mod grid;
mod kernel;
mod space;

pub use basis::{gram_schmidt, PhiBasis, SeedFamily};
pub use grid::{Hurst, StepFunction, TimeGrid};
pub use kernel::{phi_kernel, phi_transform_cell, rect_inner};
pub use space::{PhiGram, PhiSpace};

pub(crate) use space::dot as dot_values;
