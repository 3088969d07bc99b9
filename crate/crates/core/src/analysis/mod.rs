//! Monte Carlo verification: strong convergence in `K`, the explicit `L^p`
//! bound for Wick exponentials, the Gronwall envelope and the weak
//! Fokker–Planck identity.
//!
//! Every estimator evaluates one value vector per draw (draw `j` depends only
//! on `(seed, j)`) and reduces sequentially in draw order, so reports do not
//! depend on the number of worker threads.

mod bound;
mod convergence;
mod fokker_planck;

pub use bound::{appendix_bound_check, holder_bound_constant, BoundCheckRecord, HolderExponents};
pub use convergence::{
    exact_rung_basis, gronwall_envelope, l1_convergence, ConvergenceReport, ConvergenceRow, GronwallRow, Ladder,
};
pub use fokker_planck::{
    binned_conditional_mean, fokker_planck_residual, FpOptions, FpReport, FpResidualRecord, SteinRecord,
    TestFunction, MIN_PER_BIN,
};

use rayon::prelude::*;

use crate::ensemble::CovarianceModel;

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl MeanSe {
    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        let n = v.len();
        if n == 0 {
            return Self { mean: 0.0, se: 0.0, n };
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            mean,
            se: (var / n as f64).sqrt(),
            n,
        }
    }

    /// `|mean| ≤ z·se`.
    pub fn consistent_with_zero(&self, z: f64) -> bool {
        self.mean.abs() <= z * self.se
    }
}

/// `f(draw_j)` for `j = 0..n`, evaluated in parallel, returned in draw order.
pub(crate) fn per_draw<R, F>(model: &CovarianceModel<f64>, n: usize, seed: u64, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(&[f64]) -> R + Sync,
{
    let width = model.width();
    (0..n)
        .into_par_iter()
        .map_init(
            || vec![0.0; width],
            |buf, j| {
                model.draw_into(seed, j as u64, buf);
                f(buf)
            },
        )
        .collect()
}
