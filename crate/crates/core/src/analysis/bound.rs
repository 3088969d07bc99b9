use serde::{Deserialize, Serialize};

use super::{per_draw, MeanSe};
use crate::ensemble::{build_covariance, GaussianFrame};
use crate::error::{Error, Result};
use crate::phi::PhiBasis;
use crate::solver::ProblemSpec;
use crate::wick::sigma_coeffs;

/// Hölder triple with `1/p1 + 1/p2 = 1/p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderExponents {
    pub p: f64,
    pub p1: f64,
    pub p2: f64,
}

impl HolderExponents {
    pub fn new(p: f64, p1: f64, p2: f64) -> Result<Self> {
        let sum = 1.0 / p1 + 1.0 / p2;
        let target = 1.0 / p;
        if !(p >= 1.0) || !(p1 > p) || !(p2 > p) || (sum - target).abs() > 1e-12 {
            return Err(Error::ExponentInconsistency { p, p1, p2, sum, target });
        }
        Ok(Self { p, p1, p2 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheckRecord {
    pub component: usize,
    pub exponents: HolderExponents,
    pub k: usize,
    pub s: f64,
    pub t: f64,
    /// MC estimate of `E|E^K(s,t) − E(s,t)|^p`.
    pub lhs: MeanSe,
    pub constant: f64,
    pub defect: f64,
    pub rhs: f64,
    /// `lhs / rhs` (infinite if `rhs = 0 < lhs`, zero if both vanish).
    pub ratio: f64,
    pub pass: bool,
}

impl BoundCheckRecord {
    /// Three-SE half width of the lhs interval.
    pub fn lhs_ci(&self) -> f64 {
        3.0 * self.lhs.se
    }
}

/// Constant `C` of the explicit bound `E|E^K − E|^p ≤ C|σ^K(s,t) − χ_[s,t]σ|^p`
/// for `v = |χ_[s,t]σ|²`, sup bound `S`, horizon `T`.
pub fn holder_bound_constant(e: HolderExponents, v: f64, s_bound: f64, horizon: f64, hurst: f64) -> f64 {
    let HolderExponents { p, p1, p2 } = e;
    let first = 2f64.powf(1.5 * p - 1.0) * (p * (p1 - 1.0) / 2.0 * v).exp() * libm::tgamma(p2 + 1.0).powf(p / p2)
        / std::f64::consts::PI.sqrt();
    let second = 2f64.powf(2.0 * p - 1.0)
        * s_bound.powf(2.0 * p)
        * horizon.powf(2.0 * hurst * p)
        * (p * (p - 1.0) / 2.0 * v).exp();
    first + second
}

/// Checks the explicit `L^p` bound for `E_i^K(s,t)` on every component.
#[allow(clippy::too_many_arguments)]
pub fn appendix_bound_check(
    spec: &ProblemSpec<f64>,
    basis: &PhiBasis<f64>,
    s: f64,
    t: f64,
    exponents: HolderExponents,
    n: usize,
    seed: u64,
) -> Result<Vec<BoundCheckRecord>> {
    let space = spec.space();
    let grid = space.grid();
    let (a, b) = (grid.require_index(s)?, grid.require_index(t)?);
    if a >= b {
        return Err(Error::config("bound.interval", format!("need s < t, got [{s}, {t}]")));
    }
    let k = basis.len();
    let d = spec.dim();
    let coeffs = spec
        .sigma()
        .iter()
        .map(|sig| sigma_coeffs(basis, sig))
        .collect::<Result<Vec<_>>>()?;
    let frame = GaussianFrame::new(
        spec.sigma()
            .iter()
            .map(|sig| {
                let mut kernels = basis.vectors().to_vec();
                kernels.push(sig.restrict(a, b));
                kernels
            })
            .collect(),
    );
    let model = build_covariance(space, &frame)?;
    let sig: Vec<Vec<f64>> = coeffs.iter().map(|c| c.coeffs(a, b)).collect();
    let proj_sq: Vec<f64> = sig.iter().map(|v| v.iter().map(|x| x * x).sum()).collect();
    let exact_sq: Vec<f64> = coeffs.iter().map(|c| c.exact_norm_sq(a, b)).collect();
    let p = exponents.p;
    let draws = per_draw(&model, n, seed, |draw| {
        (0..d)
            .map(|i| {
                let block = &draw[i * (k + 1)..(i + 1) * (k + 1)];
                let lk: f64 = block[..k].iter().zip(&sig[i]).map(|(z, s)| z * s).sum::<f64>() - 0.5 * proj_sq[i];
                let le = block[k] - 0.5 * exact_sq[i];
                (lk.exp() - le.exp()).abs().powf(p)
            })
            .collect::<Vec<f64>>()
    });
    let horizon = spec.horizon();
    let h = spec.hurst().value();
    let s_bound = spec.sigma_bound();
    Ok((0..d)
        .map(|i| {
            let lhs = MeanSe::from_values(draws.iter().map(|v| v[i]));
            let constant = holder_bound_constant(exponents, exact_sq[i], s_bound, horizon, h);
            let defect = coeffs[i].defect(a, b);
            let rhs = constant * defect.powf(p);
            let ratio = if rhs > 0.0 {
                lhs.mean / rhs
            } else if lhs.mean == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            BoundCheckRecord {
                component: i,
                exponents,
                k,
                s,
                t,
                lhs,
                constant,
                defect,
                rhs,
                ratio,
                pass: lhs.mean + 3.0 * lhs.se <= rhs,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponent_validation() {
        assert!(HolderExponents::new(1.0, 2.0, 2.0).is_ok());
        assert!(HolderExponents::new(2.0, 4.0, 4.0).is_ok());
        assert!(HolderExponents::new(1.0, 3.0, 3.0).is_err());
        assert!(HolderExponents::new(0.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn constant_at_zero_variance() {
        // v = 0, S = 0: only the Gamma term survives
        let e = HolderExponents::new(1.0, 2.0, 2.0).unwrap();
        let c = holder_bound_constant(e, 0.0, 0.0, 1.0, 0.7);
        let want = 2f64.powf(0.5) * 2f64.sqrt() / std::f64::consts::PI.sqrt();
        assert!((c - want).abs() < 1e-14);
    }
}
