use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::drift::Drift;
use crate::error::{Error, Result};
use crate::phi::{Hurst, PhiSpace, StepFunction};
use crate::scalar::Scalar;

/// SDE system `dX_i = b_i(t,X)dt + σ_i(t)X_i dB_i^H(t)`, `X(0) = c`.
#[derive(Debug, Clone)]
pub struct ProblemSpec<T: Scalar> {
    space: Arc<PhiSpace<T>>,
    drift: Arc<dyn Drift<T>>,
    sigma: Vec<StepFunction<T>>,
    init: Vec<T>,
}

impl<T: Scalar> ProblemSpec<T> {
    pub fn new(
        space: Arc<PhiSpace<T>>,
        drift: Arc<dyn Drift<T>>,
        sigma: Vec<StepFunction<T>>,
        init: Vec<T>,
    ) -> Result<Self> {
        if init.is_empty() || sigma.len() != init.len() {
            return Err(Error::config(
                "sigma",
                format!("{} diffusion coefficients for {} components", sigma.len(), init.len()),
            ));
        }
        for s in &sigma {
            space.check(s)?;
        }
        if init.iter().any(|c| !c.is_finite()) {
            return Err(Error::config("c", "initial condition must be finite"));
        }
        Ok(Self {
            space,
            drift,
            sigma,
            init,
        })
    }

    pub fn dim(&self) -> usize {
        self.init.len()
    }

    pub fn space(&self) -> &Arc<PhiSpace<T>> {
        &self.space
    }

    pub fn drift(&self) -> &dyn Drift<T> {
        self.drift.as_ref()
    }

    pub fn sigma(&self) -> &[StepFunction<T>] {
        &self.sigma
    }

    pub fn init(&self) -> &[T] {
        &self.init
    }

    pub fn hurst(&self) -> Hurst<T> {
        self.space.hurst()
    }

    pub fn horizon(&self) -> T {
        self.space.grid().horizon()
    }

    /// `M`.
    pub fn drift_bound(&self) -> T {
        self.drift.bound()
    }

    /// `L`.
    pub fn lipschitz(&self) -> T {
        self.drift.lipschitz()
    }

    /// `S = max_i sup|σ_i|`.
    pub fn sigma_bound(&self) -> T {
        self.sigma.iter().map(StepFunction::sup_norm).fold(T::zero(), T::max)
    }

    /// Whether each component can be solved on its own.
    pub fn is_decoupled(&self) -> bool {
        self.dim() == 1 || self.drift.is_decoupled()
    }

    /// Spot-checks the declared `M` and `L` on random arguments.
    pub fn audit(&self, samples: usize, seed: u64) -> Result<()> {
        let d = self.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, l) = (self.drift_bound(), self.lipschitz());
        let slack = T::lit(1e-9);
        let mut x = vec![T::zero(); d];
        let mut y = vec![T::zero(); d];
        let mut bx = vec![T::zero(); d];
        let mut by = vec![T::zero(); d];
        for _ in 0..samples {
            let t = T::lit(rng.random_range(0.0..=1.0)) * self.horizon();
            for (xi, yi) in x.iter_mut().zip(y.iter_mut()) {
                *xi = T::lit(rng.random_range(-10.0..10.0));
                *yi = *xi + T::lit(rng.random_range(-1.0..1.0));
            }
            self.drift.eval(t, &x, &mut bx);
            self.drift.eval(t, &y, &mut by);
            let sup = bx.iter().fold(T::zero(), |a, v| a.max(v.abs()));
            if !(sup <= m * (T::one() + slack) + slack) {
                return Err(Error::DriftAudit(format!("|b(t,x)| = {sup} exceeds declared bound {m}")));
            }
            let dist: T = x.iter().zip(&y).map(|(a, b)| (*a - *b).abs()).sum();
            let diff = bx.iter().zip(&by).fold(T::zero(), |a, (p, q)| a.max((*p - *q).abs()));
            if !(diff <= l * dist * (T::one() + slack) + slack) {
                return Err(Error::DriftAudit(format!(
                    "Lipschitz quotient {} exceeds declared constant {l}",
                    diff / dist
                )));
            }
        }
        Ok(())
    }
}

/// Uniform left-endpoint Riemann grid `t_n = n·t/N` for the mild integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverGrid<T> {
    steps: usize,
    horizon: T,
}

impl<T: Scalar> SolverGrid<T> {
    pub fn new(steps: usize, horizon: T) -> Result<Self> {
        if steps == 0 || !(horizon > T::zero()) {
            return Err(Error::InvalidGrid(format!(
                "solver grid needs N ≥ 1 and t > 0 (got {steps}, {horizon})"
            )));
        }
        Ok(Self { steps, horizon })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    /// `Δ`.
    pub fn step(&self) -> T {
        self.horizon / T::from_usize_lossy(self.steps)
    }

    pub fn node(&self, n: usize) -> T {
        self.horizon * T::from_usize_lossy(n) / T::from_usize_lossy(self.steps)
    }
}
