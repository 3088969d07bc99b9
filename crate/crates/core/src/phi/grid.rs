use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Hurst index restricted to the open interval (1/2, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hurst<T>(T);

impl<T: Scalar> Hurst<T> {
    pub fn new(h: T) -> Result<Self> {
        if h > T::lit(0.5) && h < T::one() {
            Ok(Self(h))
        } else {
            Err(Error::InvalidHurst(h.to_f64_lossy()))
        }
    }

    #[inline]
    pub fn value(self) -> T {
        self.0
    }

    /// `2H`, the covariance exponent.
    #[inline]
    pub fn two_h(self) -> T {
        self.0 + self.0
    }
}

/// Ordered partition `0 = τ_0 < τ_1 < … < τ_M = T` of the time horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid<T> {
    points: Vec<T>,
}

impl<T: Scalar> TimeGrid<T> {
    pub fn new(points: Vec<T>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidGrid("need at least one cell".into()));
        }
        if points[0] != T::zero() {
            return Err(Error::InvalidGrid("first point must be 0".into()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidGrid("non-finite point".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid("points must be strictly increasing".into()));
        }
        Ok(Self { points })
    }

    pub fn uniform(horizon: T, cells: usize) -> Result<Self> {
        if !(horizon > T::zero()) || cells == 0 {
            return Err(Error::InvalidGrid(format!(
                "uniform grid needs horizon > 0 and cells > 0 (got {horizon}, {cells})"
            )));
        }
        let step = horizon / T::from_usize_lossy(cells);
        let mut points: Vec<T> = (0..cells).map(|m| step * T::from_usize_lossy(m)).collect();
        points.push(horizon);
        Self::new(points)
    }

    #[inline]
    pub fn points(&self) -> &[T] {
        &self.points
    }

    /// Number of cells `M`.
    #[inline]
    pub fn cells(&self) -> usize {
        self.points.len() - 1
    }

    #[inline]
    pub fn horizon(&self) -> T {
        self.points[self.points.len() - 1]
    }

    #[inline]
    pub fn cell(&self, m: usize) -> (T, T) {
        (self.points[m], self.points[m + 1])
    }

    /// Index of the grid point equal to `t` up to a relative tolerance of 1e-9.
    pub fn index_of(&self, t: T) -> Option<usize> {
        let tol = T::lit(1e-9) * self.horizon();
        let pos = self.points.partition_point(|p| *p < t - tol);
        (pos < self.points.len() && (self.points[pos] - t).abs() <= tol).then_some(pos)
    }

    pub fn require_index(&self, t: T) -> Result<usize> {
        self.index_of(t).ok_or(Error::OffGrid(t.to_f64_lossy()))
    }
}

/// Piecewise-constant function: `values[m]` on the cell `[τ_m, τ_{m+1})`.
#[derive(Debug, Clone)]
pub struct StepFunction<T> {
    grid: Arc<TimeGrid<T>>,
    values: Vec<T>,
}

impl<T: Scalar> StepFunction<T> {
    pub fn new(grid: Arc<TimeGrid<T>>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.cells() {
            return Err(Error::InvalidGrid(format!(
                "{} values for {} cells",
                values.len(),
                grid.cells()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("step function values must be finite".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<TimeGrid<T>>) -> Self {
        let m = grid.cells();
        Self {
            grid,
            values: vec![T::zero(); m],
        }
    }

    pub fn constant(grid: Arc<TimeGrid<T>>, value: T) -> Self {
        let m = grid.cells();
        Self {
            grid,
            values: vec![value; m],
        }
    }

    /// Indicator of `[τ_a, τ_b]` given as grid indices `a ≤ b`.
    pub fn indicator(grid: Arc<TimeGrid<T>>, a: usize, b: usize) -> Self {
        let mut f = Self::zeros(grid);
        for v in &mut f.values[a..b] {
            *v = T::one();
        }
        f
    }

    #[inline]
    pub fn grid(&self) -> &Arc<TimeGrid<T>> {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    /// `χ_[τ_a, τ_b] · f`.
    pub fn restrict(&self, a: usize, b: usize) -> Self {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(m, &v)| if m >= a && m < b { v } else { T::zero() })
            .collect();
        Self {
            grid: self.grid.clone(),
            values,
        }
    }

    pub fn scaled(&self, alpha: T) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| v * alpha).collect(),
        }
    }

    /// `alpha·self + beta·other`.
    pub fn combine(&self, alpha: T, other: &Self, beta: T) -> Result<Self> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| alpha * a + beta * b)
                .collect(),
        })
    }

    pub fn sup_norm(&self) -> T {
        self.values.iter().fold(T::zero(), |acc, v| acc.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == T::zero())
    }
}
