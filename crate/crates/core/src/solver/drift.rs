use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Bounded, Lipschitz drift `b: [0,T]×ℝ^d → ℝ^d` with declared constants.
pub trait Drift<T: Scalar>: Send + Sync + Debug {
    /// `b(t, x)` written into `out`.
    fn eval(&self, t: T, x: &[T], out: &mut [T]);

    /// `M` with `|b(t,x)|_∞ ≤ M`.
    fn bound(&self) -> T;

    /// `L` with `|b(t,x) − b(t,y)|_∞ ≤ L|x − y|_1`.
    fn lipschitz(&self) -> T;

    /// `true` when `b_i` depends on `x_i` only.
    fn is_decoupled(&self) -> bool;

    /// `b_i(t, x)` for a decoupled drift, given `x_i` alone.
    fn component(&self, i: usize, t: T, xi: T) -> T;

    /// `∂b_i/∂x_i` for a decoupled drift; `None` if not available.
    fn component_derivative(&self, i: usize, t: T, xi: T) -> Option<T>;
}

/// Registry of drifts with analytically known constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "id")]
pub enum DriftModel {
    /// `b ≡ 0`.
    Zero,
    /// `b_i(x) = a·sin(x_i)`.
    Sin {
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `b_i(x) = a·tanh(x_i / s)`.
    TanhScaled {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `b_i(x) = a·sin(x_1 + … + x_d)`: every component sees every coordinate.
    SinCoupled {
        #[serde(default = "one")]
        amplitude: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl DriftModel {
    pub fn name(&self) -> &'static str {
        match self {
            DriftModel::Zero => "zero",
            DriftModel::Sin { .. } => "sin",
            DriftModel::TanhScaled { .. } => "tanh_scaled",
            DriftModel::SinCoupled { .. } => "sin_coupled",
        }
    }
}

impl<T: Scalar> Drift<T> for DriftModel {
    fn eval(&self, t: T, x: &[T], out: &mut [T]) {
        match *self {
            DriftModel::SinCoupled { amplitude } => {
                let s: T = x.iter().copied().sum();
                let v = T::lit(amplitude) * s.sin();
                out.iter_mut().for_each(|o| *o = v);
            }
            _ => {
                for (i, (o, &xi)) in out.iter_mut().zip(x).enumerate() {
                    *o = self.component(i, t, xi);
                }
            }
        }
    }

    fn bound(&self) -> T {
        match *self {
            DriftModel::Zero => T::zero(),
            DriftModel::Sin { amplitude }
            | DriftModel::TanhScaled { amplitude, .. }
            | DriftModel::SinCoupled { amplitude } => T::lit(amplitude.abs()),
        }
    }

    fn lipschitz(&self) -> T {
        match *self {
            DriftModel::Zero => T::zero(),
            DriftModel::Sin { amplitude } | DriftModel::SinCoupled { amplitude } => T::lit(amplitude.abs()),
            DriftModel::TanhScaled { amplitude, scale } => T::lit((amplitude / scale).abs()),
        }
    }

    fn is_decoupled(&self) -> bool {
        !matches!(self, DriftModel::SinCoupled { .. })
    }

    fn component(&self, _i: usize, _t: T, xi: T) -> T {
        match *self {
            DriftModel::Zero => T::zero(),
            DriftModel::Sin { amplitude } => T::lit(amplitude) * xi.sin(),
            DriftModel::TanhScaled { amplitude, scale } => T::lit(amplitude) * (xi / T::lit(scale)).tanh(),
            // single-coordinate view, meaningful when d = 1
            DriftModel::SinCoupled { amplitude } => T::lit(amplitude) * xi.sin(),
        }
    }

    fn component_derivative(&self, _i: usize, _t: T, xi: T) -> Option<T> {
        Some(match *self {
            DriftModel::Zero => T::zero(),
            DriftModel::Sin { amplitude } | DriftModel::SinCoupled { amplitude } => T::lit(amplitude) * xi.cos(),
            DriftModel::TanhScaled { amplitude, scale } => {
                let s = T::lit(scale);
                let th = (xi / s).tanh();
                T::lit(amplitude) / s * (T::one() - th * th)
            }
        })
    }
}
