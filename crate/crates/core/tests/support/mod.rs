//! Independent oracles for the integration tests. Apart from data accessors,
//! the only library call is `PhiSpace::inner`, which is itself checked against
//! quadrature.
#![allow(dead_code)]

use std::sync::Arc;

use fracwick::phi::{Hurst, PhiBasis, PhiSpace, StepFunction, TimeGrid};
use fracwick::solver::{DriftModel, ProblemSpec};
use gauss_quad::hermite::GaussHermite;
use quadrature::double_exponential;

/// Tanh–sinh quadrature on `[a, b]`, tolerant of integrable endpoint singularities.
pub fn tanh_sinh<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    double_exponential::integrate(f, a, b, 1e-14).integral
}

/// `∫_0^l w^{2H−2} f(w) dw` after `w = u^m`, `m = 1/(2H−1)`, which turns the
/// endpoint singularity into the bounded integrand `m·f(u^m)`.
pub fn power_weighted<F: Fn(f64) -> f64>(f: F, h: f64, l: f64) -> f64 {
    let m = 1.0 / (2.0 * h - 1.0);
    tanh_sinh(|u| m * f(u.powf(m)), 0.0, l.powf(1.0 / m))
}

/// `∫_a^b ∫_c^d φ(s,t) dt ds` as a quadrature along the diagonal offset
/// `w = s − t`: the kernel depends on `w` only, weighted by the length of the
/// rectangle's slice at that offset.
pub fn rect_inner_quadrature(a: f64, b: f64, c: f64, d: f64, h: f64) -> f64 {
    let slice = |w: f64| (b.min(d + w) - a.max(c + w)).max(0.0);
    let (lo, hi) = (a - d, b - c);
    let mut cuts = vec![lo, hi];
    cuts.extend([a - c, b - d, 0.0].into_iter().filter(|&x| x > lo && x < hi));
    cuts.sort_by(f64::total_cmp);
    let alpha = 2.0 * h - 2.0;
    let total: f64 = cuts
        .windows(2)
        .map(|seg| {
            let (w0, w1) = (seg[0], seg[1]);
            if w0 == 0.0 {
                power_weighted(slice, h, w1)
            } else if w1 == 0.0 {
                power_weighted(|u| slice(-u), h, -w0)
            } else {
                tanh_sinh(|w| w.abs().powf(alpha) * slice(w), w0, w1)
            }
        })
        .sum();
    h * (2.0 * h - 1.0) * total
}

/// `∫ χ_[a,b](s) φ(t,s) ds` by quadrature.
pub fn transform_quadrature(a: f64, b: f64, t: f64, h: f64) -> f64 {
    let k = h * (2.0 * h - 1.0);
    let one = |_: f64| 1.0;
    // distances from t to the two ends; same-side pieces subtract
    let piece = |x: f64| power_weighted(one, h, (t - x).abs());
    if t >= b {
        k * (piece(a) - piece(b))
    } else if t <= a {
        k * (piece(b) - piece(a))
    } else {
        k * (piece(a) + piece(b))
    }
}

pub fn fbm_covariance(s: f64, t: f64, h: f64) -> f64 {
    0.5 * (t.powf(2.0 * h) + s.powf(2.0 * h) - (t - s).abs().powf(2.0 * h))
}

/// `E|e^{G₁−v₁/2} − e^{G₂−v₂/2}|^p` for a Gaussian pair with `Var G₁ = a`,
/// `Var G₂ = v` and `Cov = a` (a projection and its target).
///
/// Writing `G₂ = G₁ + δW` with `W ⊥ G₁`, the smooth `G₁` direction uses
/// Gauss–Hermite; the `W` direction has a kink where the exponentials cross
/// and is integrated against the normal density with tanh–sinh split there.
pub fn lognormal_gap_moment(a: f64, v: f64, p: f64) -> f64 {
    let delta = (v - a).max(0.0).sqrt();
    let sa = a.sqrt();
    let rule = GaussHermite::new(80).expect("degree ≥ 2");
    let r2 = std::f64::consts::SQRT_2;
    let density = |w: f64| (-0.5 * w * w).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let outer = |x: f64| {
        let g1 = sa * r2 * x;
        let f = |w: f64| ((g1 - 0.5 * a).exp() - (g1 + delta * w - 0.5 * v).exp()).abs().powf(p) * density(w);
        if delta == 0.0 {
            return ((g1 - 0.5 * a).exp() - (g1 - 0.5 * v).exp()).abs().powf(p);
        }
        let kink = (0.5 * (v - a) / delta).clamp(-39.0, 39.0);
        tanh_sinh(f, -40.0, kink) + tanh_sinh(f, kink, 40.0)
    };
    rule.integrate(outer) / std::f64::consts::PI.sqrt()
}

pub fn space(horizon: f64, cells: usize, h: f64) -> Arc<PhiSpace<f64>> {
    PhiSpace::new(Arc::new(TimeGrid::uniform(horizon, cells).unwrap()), Hurst::new(h).unwrap())
}

pub fn constant_problem(space: &Arc<PhiSpace<f64>>, drift: DriftModel, sigma: f64, c: f64) -> ProblemSpec<f64> {
    let sig = vec![StepFunction::constant(space.grid().clone(), sigma)];
    ProblemSpec::new(space.clone(), Arc::new(drift), sig, vec![c]).unwrap()
}

/// The drift formulas, written out again.
pub fn drift_oracle(model: DriftModel) -> impl Fn(&[f64]) -> Vec<f64> {
    move |x: &[f64]| match model {
        DriftModel::Zero => vec![0.0; x.len()],
        DriftModel::Sin { amplitude } => x.iter().map(|v| amplitude * v.sin()).collect(),
        DriftModel::TanhScaled { amplitude, scale } => x.iter().map(|v| amplitude * (v / scale).tanh()).collect(),
        DriftModel::SinCoupled { amplitude } => {
            let s: f64 = x.iter().sum();
            vec![amplitude * s.sin(); x.len()]
        }
    }
}

/// Direct, unmemoized evaluation of the truncated mild solution at node `n`:
///
/// `X_i(t_n)(Z) = c_i E_i(0,n)(Z) + Δ Σ_{m<n} b_i(X(t_m)(Z − e_i⊗Σ_i(m,n))) E_i(m,n)(Z)`
///
/// with `E_i(m,n)(Z) = exp(Z_i·Σ_i(m,n) − ½|Σ_i(m,n)|²)`. `sigma(i, m, n)` returns
/// the coefficient vector `Σ_i(t_m, t_n)`.
pub struct NaiveMild<'a> {
    pub c: Vec<f64>,
    pub dt: f64,
    pub drift: &'a dyn Fn(&[f64]) -> Vec<f64>,
    pub sigma: &'a dyn Fn(usize, usize, usize) -> Vec<f64>,
}

impl NaiveMild<'_> {
    pub fn value(&self, n: usize, z: &[Vec<f64>]) -> Vec<f64> {
        let d = self.c.len();
        (0..d)
            .map(|i| {
                let mut x = self.c[i] * wick_exp(&z[i], &(self.sigma)(i, 0, n));
                for m in 0..n {
                    let shift = (self.sigma)(i, m, n);
                    let mut zs = z.to_vec();
                    for (zk, sk) in zs[i].iter_mut().zip(&shift) {
                        *zk -= sk;
                    }
                    let inner = self.value(m, &zs);
                    x += self.dt * (self.drift)(&inner)[i] * wick_exp(&z[i], &shift);
                }
                x
            })
            .collect()
    }
}

pub fn wick_exp(z: &[f64], s: &[f64]) -> f64 {
    let dot: f64 = z.iter().zip(s).map(|(a, b)| a * b).sum();
    let nrm: f64 = s.iter().map(|v| v * v).sum();
    (dot - 0.5 * nrm).exp()
}

/// Left-endpoint Euler for `x' = b(x)`.
pub fn euler(c: &[f64], drift: &dyn Fn(&[f64]) -> Vec<f64>, dt: f64, steps: usize) -> Vec<Vec<f64>> {
    let mut out = vec![c.to_vec()];
    for _ in 0..steps {
        let x = out.last().unwrap().clone();
        let b = drift(&x);
        out.push(x.iter().zip(&b).map(|(xi, bi)| xi + dt * bi).collect());
    }
    out
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
}

/// `Σ_i(t_m, t_n)` straight from inner products.
pub fn direct_sigma<'a>(
    basis: &'a PhiBasis<f64>,
    sigma: &'a [StepFunction<f64>],
    stride: usize,
) -> impl Fn(usize, usize, usize) -> Vec<f64> + 'a {
    let space = basis.space().clone();
    move |i, m, n| {
        let piece = sigma[i].restrict(m * stride, n * stride);
        basis.vectors().iter().map(|e| space.inner(e, &piece).unwrap()).collect()
    }
}
