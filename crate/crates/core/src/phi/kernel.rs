use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::grid::Hurst;

/// `H(2H−1)|s−t|^{2H−2}`; singular on the diagonal.
pub fn phi_kernel<T: Scalar>(s: T, t: T, h: Hurst<T>) -> Result<T> {
    if s == t {
        return Err(Error::DiagonalSingularity(s.to_f64_lossy()));
    }
    let h = h.value();
    let two = T::lit(2.0);
    Ok(h * (two * h - T::one()) * (s - t).abs().powf(two * h - two))
}

/// Closed form of `∫_a^b ∫_c^d φ(s,t) dt ds = ⟨χ_[a,b], χ_[c,d]⟩_φ`.
///
/// Obtained from the fBm covariance by polarization:
/// `½(|b−c|^{2H} + |a−d|^{2H} − |a−c|^{2H} − |b−d|^{2H})`.
#[inline]
pub fn rect_inner<T: Scalar>(a: T, b: T, c: T, d: T, h: Hurst<T>) -> T {
    let e = h.two_h();
    let p = |x: T| x.abs().powf(e);
    T::lit(0.5) * (p(b - c) + p(a - d) - p(a - c) - p(b - d))
}

/// `Φ[χ_[a,b]](t) = ∫_a^b φ(t,s) ds`, finite for every `t` including the endpoints.
#[inline]
pub fn phi_transform_cell<T: Scalar>(a: T, b: T, t: T, h: Hurst<T>) -> T {
    let e = h.two_h() - T::one();
    let signed = |x: T| {
        if x == T::zero() {
            T::zero()
        } else {
            x.signum() * x.abs().powf(e)
        }
    };
    h.value() * (signed(t - a) - signed(t - b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn h(x: f64) -> Hurst<f64> {
        Hurst::new(x).unwrap()
    }

    #[test]
    fn kernel_values() {
        assert_relative_eq!(phi_kernel(0.0, 1.0, h(0.75)).unwrap(), 0.375, epsilon = 1e-15);
        // mpmath, 50 digits
        assert_relative_eq!(
            phi_kernel(1.0, 3.0, h(0.75)).unwrap(),
            0.265_165_042_944_955_32,
            max_relative = 1e-14
        );
        assert_relative_eq!(phi_kernel(0.0, 1.0, h(0.51)).unwrap(), 0.0102, max_relative = 1e-13);
        assert!(matches!(
            phi_kernel(0.3, 0.3, h(0.75)),
            Err(Error::DiagonalSingularity(_))
        ));
    }

    #[test]
    fn rectangle_values() {
        assert_relative_eq!(rect_inner(0.0, 2.0, 0.0, 2.0, h(0.75)), 2f64.powf(1.5), max_relative = 1e-15);
        assert_relative_eq!(rect_inner(0.0, 1.0, 0.0, 1.0, h(0.75)), 1.0, epsilon = 1e-15);
        assert_relative_eq!(
            rect_inner(0.0, 1.0, 1.0, 2.0, h(0.75)),
            0.414_213_562_373_095_05,
            max_relative = 1e-14
        );
    }

    #[test]
    fn transform_values() {
        assert_relative_eq!(phi_transform_cell(0.0, 1.0, 1.0, h(0.75)), 0.75, max_relative = 1e-14);
        assert_relative_eq!(
            phi_transform_cell(0.0, 1.0, 2.0, h(0.75)),
            0.310_660_171_779_821_29,
            max_relative = 1e-14
        );
        // finite at the left endpoint as well
        assert!(phi_transform_cell(0.0, 1.0, 0.0, h(0.75)).is_finite());
    }

    #[test]
    fn covariance_identity() {
        let hh = h(0.7);
        for &(s, t) in &[(0.3f64, 0.9f64), (1.0, 1.0), (0.0, 0.4), (2.5, 0.1)] {
            let fbm: f64 = 0.5 * (t.powf(1.4) + s.powf(1.4) - (t - s).abs().powf(1.4));
            assert_relative_eq!(rect_inner(0.0, t, 0.0, s, hh), fbm, max_relative = 1e-12, epsilon = 1e-300);
        }
    }
}
