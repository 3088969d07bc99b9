use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::grid::{Hurst, StepFunction, TimeGrid};
use super::kernel::{phi_transform_cell, rect_inner};

/// Gram matrix of the cell indicators: `entry(m,n) = ⟨χ_cell_m, χ_cell_n⟩_φ`.
#[derive(Debug, Clone)]
pub struct PhiGram<T> {
    cells: usize,
    entries: Vec<T>,
}

impl<T: Scalar> PhiGram<T> {
    pub fn new(grid: &TimeGrid<T>, hurst: Hurst<T>) -> Self {
        let m = grid.cells();
        let mut entries = vec![T::zero(); m * m];
        for i in 0..m {
            let (a, b) = grid.cell(i);
            for j in i..m {
                let (c, d) = grid.cell(j);
                let v = rect_inner(a, b, c, d, hurst);
                entries[i * m + j] = v;
                entries[j * m + i] = v;
            }
        }
        Self { cells: m, entries }
    }

    #[inline]
    pub fn cells(&self) -> usize {
        self.cells
    }

    #[inline]
    pub fn entry(&self, m: usize, n: usize) -> T {
        self.entries[m * self.cells + n]
    }

    #[inline]
    pub fn row(&self, m: usize) -> &[T] {
        &self.entries[m * self.cells..(m + 1) * self.cells]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.entries
    }

    /// `G·v`.
    pub fn apply(&self, v: &[T]) -> Vec<T> {
        (0..self.cells).map(|m| dot(self.row(m), v)).collect()
    }
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// A grid, a Hurst index and the cell Gram matrix: everything needed for exact
/// inner products of step functions.
#[derive(Debug)]
pub struct PhiSpace<T> {
    grid: Arc<TimeGrid<T>>,
    hurst: Hurst<T>,
    gram: PhiGram<T>,
}

impl<T: Scalar> PhiSpace<T> {
    pub fn new(grid: Arc<TimeGrid<T>>, hurst: Hurst<T>) -> Arc<Self> {
        let gram = PhiGram::new(&grid, hurst);
        Arc::new(Self { grid, hurst, gram })
    }

    #[inline]
    pub fn grid(&self) -> &Arc<TimeGrid<T>> {
        &self.grid
    }

    #[inline]
    pub fn hurst(&self) -> Hurst<T> {
        self.hurst
    }

    #[inline]
    pub fn gram(&self) -> &PhiGram<T> {
        &self.gram
    }

    pub(crate) fn check(&self, f: &StepFunction<T>) -> Result<()> {
        if Arc::ptr_eq(f.grid(), &self.grid) || **f.grid() == *self.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// `⟨f, g⟩_φ = Σ_{m,n} f_m g_n G(m,n)`.
    pub fn inner(&self, f: &StepFunction<T>, g: &StepFunction<T>) -> Result<T> {
        self.check(f)?;
        self.check(g)?;
        Ok(self.inner_values(f.values(), g.values()))
    }

    pub fn inner_values(&self, f: &[T], g: &[T]) -> T {
        let m = self.gram.cells();
        let mut acc = T::zero();
        for i in 0..m {
            if f[i] == T::zero() {
                continue;
            }
            acc += f[i] * dot(self.gram.row(i), g);
        }
        acc
    }

    pub fn norm_sq(&self, f: &StepFunction<T>) -> Result<T> {
        self.inner(f, f)
    }

    /// `Φ[f](t) = ∫ f(s) φ(t,s) ds` in closed form.
    pub fn transform(&self, f: &StepFunction<T>, t: T) -> Result<T> {
        self.check(f)?;
        Ok(f
            .values()
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != T::zero())
            .map(|(m, &v)| {
                let (a, b) = self.grid.cell(m);
                v * phi_transform_cell(a, b, t, self.hurst)
            })
            .sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn space(cells: usize, horizon: f64, h: f64) -> Arc<PhiSpace<f64>> {
        PhiSpace::new(
            Arc::new(TimeGrid::uniform(horizon, cells).unwrap()),
            Hurst::new(h).unwrap(),
        )
    }

    #[test]
    fn indicator_inner_products() {
        let sp = space(4, 2.0, 0.75);
        let g = sp.grid().clone();
        let first = StepFunction::indicator(g.clone(), 0, 2);
        assert_relative_eq!(sp.inner(&first, &first).unwrap(), 1.0, epsilon = 1e-14);
        let zero = StepFunction::zeros(g.clone());
        assert_eq!(sp.inner(&first, &zero).unwrap(), 0.0);
        let half = StepFunction::new(g.clone(), vec![0.5, 0.5, 0.0, 0.0]).unwrap();
        assert_relative_eq!(sp.inner(&half, &first).unwrap(), 0.5, epsilon = 1e-14);
        let second = StepFunction::indicator(g, 2, 4);
        assert_relative_eq!(
            sp.inner(&first, &second).unwrap(),
            0.414_213_562_373_095_05,
            max_relative = 1e-13
        );
    }

    #[test]
    fn grid_mismatch_is_error() {
        let sp = space(4, 1.0, 0.75);
        let other = StepFunction::constant(Arc::new(TimeGrid::uniform(1.0, 3).unwrap()), 1.0);
        assert!(matches!(sp.norm_sq(&other), Err(Error::GridMismatch)));
    }

    #[test]
    fn transform_of_zero_vanishes() {
        let sp = space(8, 1.0, 0.6);
        let zero = StepFunction::zeros(sp.grid().clone());
        assert_eq!(sp.transform(&zero, 0.37).unwrap(), 0.0);
    }

    #[test]
    fn gram_diagonal_positive() {
        let sp = space(32, 1.0, 0.9);
        for m in 0..32 {
            assert!(sp.gram().entry(m, m) > 0.0);
        }
    }
}
