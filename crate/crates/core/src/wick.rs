//! Wick-calculus primitives on the truncated span: Σ coefficients, projection
//! norms, stochastic exponentials and translation offsets.

use crate::error::Result;
use crate::phi::{PhiBasis, PhiSpace, StepFunction};
use crate::scalar::Scalar;

/// `Σ_k(r,t) = ⟨χ_[r,t]σ, e_k⟩_φ` for one diffusion coefficient σ, stored as
/// cumulative values at every grid point so that additivity holds exactly.
#[derive(Debug, Clone)]
pub struct SigmaCoeffs<T> {
    basis: PhiBasis<T>,
    sigma: StepFunction<T>,
    /// `cumulative[k][p] = Σ_k(0, τ_p)`
    cumulative: Vec<Vec<T>>,
}

pub fn sigma_coeffs<T: Scalar>(basis: &PhiBasis<T>, sigma: &StepFunction<T>) -> Result<SigmaCoeffs<T>> {
    basis.space().check(sigma)?;
    let cumulative = (0..basis.len())
        .map(|k| {
            let ge = basis.weighted(k);
            let mut acc = T::zero();
            std::iter::once(T::zero())
                .chain(sigma.values().iter().zip(ge).map(|(&s, &w)| {
                    acc += s * w;
                    acc
                }))
                .collect()
        })
        .collect();
    Ok(SigmaCoeffs {
        basis: basis.clone(),
        sigma: sigma.clone(),
        cumulative,
    })
}

impl<T: Scalar> SigmaCoeffs<T> {
    pub fn basis(&self) -> &PhiBasis<T> {
        &self.basis
    }

    pub fn sigma(&self) -> &StepFunction<T> {
        &self.sigma
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    /// `Σ_k(0, τ_p)`.
    #[inline]
    pub fn cumulative(&self, k: usize, p: usize) -> T {
        self.cumulative[k][p]
    }

    pub fn cumulative_row(&self, k: usize) -> &[T] {
        &self.cumulative[k]
    }

    /// `Σ_k(τ_r, τ_t)` for grid indices `r ≤ t`.
    #[inline]
    pub fn coeff(&self, k: usize, r: usize, t: usize) -> T {
        self.cumulative[k][t] - self.cumulative[k][r]
    }

    /// All `K` coefficients of the interval `[τ_r, τ_t]`.
    pub fn coeffs(&self, r: usize, t: usize) -> Vec<T> {
        (0..self.len()).map(|k| self.coeff(k, r, t)).collect()
    }

    /// The first `k` coefficient rows.
    pub fn prefix(&self, k: usize) -> Self {
        let k = k.min(self.len());
        Self {
            basis: self.basis.prefix(k),
            sigma: self.sigma.clone(),
            cumulative: self.cumulative[..k].to_vec(),
        }
    }

    /// `σ^K(r,t;·) = Σ_k Σ_k(r,t) e_k` as a step function.
    pub fn projection(&self, r: usize, t: usize) -> StepFunction<T> {
        let mut out = vec![T::zero(); self.sigma.values().len()];
        for (k, e) in self.basis.vectors().iter().enumerate() {
            let c = self.coeff(k, r, t);
            for (o, &v) in out.iter_mut().zip(e.values()) {
                *o += c * v;
            }
        }
        StepFunction::new(self.sigma.grid().clone(), out).expect("finite projection")
    }

    /// `|χ_[r,t]σ|_φ²`.
    pub fn exact_norm_sq(&self, r: usize, t: usize) -> T {
        let f = self.sigma.restrict(r, t);
        self.basis.space().inner_values(f.values(), f.values())
    }

    /// `|σ^K(r,t) − χ_[r,t]σ|_φ`, from the difference itself: the
    /// Pythagorean form cancels catastrophically when the defect is small.
    pub fn defect(&self, r: usize, t: usize) -> T {
        let mut diff = self.projection(r, t).values().to_vec();
        for (d, &s) in diff.iter_mut().zip(self.sigma.restrict(r, t).values()) {
            *d -= s;
        }
        self.basis.space().inner_values(&diff, &diff).max(T::zero()).sqrt()
    }
}

/// `|σ^K(r,t;·)|_φ² = Σ_k Σ_k(r,t)²`.
pub fn projection_norm_sq<T: Scalar>(coeffs: &SigmaCoeffs<T>, r: usize, t: usize) -> T {
    (0..coeffs.len()).map(|k| coeffs.coeff(k, r, t).powi(2)).sum()
}

/// A stochastic exponential evaluated at one sample point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WickExponentialEval<T> {
    pub log_value: T,
    pub value: T,
}

/// `exp{Σ_k z_k·shift_k − ½·norm_sq}`. Overflow yields `+∞`; no clamping.
pub fn wick_exponential<T: Scalar>(z: &[T], shifts: &[T], norm_sq: T) -> WickExponentialEval<T> {
    assert_eq!(z.len(), shifts.len(), "coordinates and coefficients must align");
    let log_value = z.iter().zip(shifts).fold(T::zero(), |acc, (&a, &b)| acc + a * b) - T::lit(0.5) * norm_sq;
    WickExponentialEval {
        log_value,
        value: log_value.exp(),
    }
}

/// Offset added to the realized Gaussian `I(g)` by the translation
/// `T_{−Φ[f]}`: `I(g) ↦ I(g) − ⟨g, f⟩_φ`.
pub fn translation_shift<T: Scalar>(space: &PhiSpace<T>, g: &StepFunction<T>, f: &StepFunction<T>) -> Result<T> {
    Ok(-space.inner(g, f)?)
}
