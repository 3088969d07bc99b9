use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{per_draw, MeanSe};
use crate::ensemble::{build_covariance, GaussianFrame};
use crate::error::{Error, Result};
use crate::phi::PhiBasis;
use crate::solver::{ChainPoint, Lattice, ProblemSpec, SolverGrid, SolverOptions, TruncatedSolver};
use crate::wick::sigma_coeffs;

/// Smallest admissible bin population for the conditional-mean estimator.
pub const MIN_PER_BIN: usize = 50;

/// Test functions `φ(t, x)` for the weak form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TestFunction {
    /// All derivatives vanish, so the residual is identically zero.
    Constant { value: f64 },
    /// Product of smooth bumps `ψ((t−t0)/a)·ψ((x−x0)/w)`, `ψ(u) = exp(−1/(1−u²))`.
    Bump {
        t_center: f64,
        t_radius: f64,
        x_center: f64,
        x_radius: f64,
    },
}

/// `(ψ, ψ', ψ'')` of the standard bump at `u`.
fn bump(u: f64) -> (f64, f64, f64) {
    if u.abs() >= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let q = 1.0 - u * u;
    let psi = (-1.0 / q).exp();
    let g1 = -2.0 * u / (q * q);
    let g2 = -2.0 * (1.0 + 3.0 * u * u) / (q * q * q);
    (psi, psi * g1, psi * (g1 * g1 + g2))
}

/// Derivatives of a test function at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub dt: f64,
    pub dx: f64,
    pub dxx: f64,
}

impl TestFunction {
    /// Registry of named test functions.
    pub fn preset(id: &str) -> Option<Self> {
        let b = |t_center, t_radius, x_center, x_radius| TestFunction::Bump {
            t_center,
            t_radius,
            x_center,
            x_radius,
        };
        Some(match id {
            "constant" => TestFunction::Constant { value: 1.0 },
            "bump_center" => b(0.5, 0.4, 1.2, 1.0),
            "bump_early" => b(0.35, 0.3, 1.0, 0.6),
            "bump_late" => b(0.65, 0.3, 1.6, 1.2),
            _ => return None,
        })
    }

    pub fn jet(&self, t: f64, x: f64) -> Jet {
        match *self {
            TestFunction::Constant { value } => Jet {
                value,
                dt: 0.0,
                dx: 0.0,
                dxx: 0.0,
            },
            TestFunction::Bump {
                t_center,
                t_radius,
                x_center,
                x_radius,
            } => {
                let (a, da, _) = bump((t - t_center) / t_radius);
                if a == 0.0 {
                    return Jet {
                        value: 0.0,
                        dt: 0.0,
                        dx: 0.0,
                        dxx: 0.0,
                    };
                }
                let (b, db, ddb) = bump((x - x_center) / x_radius);
                Jet {
                    value: a * b,
                    dt: da / t_radius * b,
                    dx: a * db / x_radius,
                    dxx: a * ddb / (x_radius * x_radius),
                }
            }
        }
    }

    /// Time support inside the open interval `(0, horizon)`.
    fn check_support(&self, horizon: f64) -> Result<()> {
        if let TestFunction::Bump { t_center, t_radius, x_radius, .. } = *self {
            if !(t_radius > 0.0 && x_radius > 0.0) {
                return Err(Error::config("fokker_planck.test_functions", "bump radii must be positive"));
            }
            if t_center - t_radius <= 0.0 || t_center + t_radius >= horizon {
                return Err(Error::config(
                    "fokker_planck.test_functions",
                    format!("bump time support must lie inside (0, {horizon})"),
                ));
            }
        }
        Ok(())
    }
}

/// Equal-count binning of `(x_j, y_j)` pairs.
#[derive(Debug, Clone)]
pub struct BinnedMean {
    /// Bin index of every sample.
    pub assignment: Vec<usize>,
    /// Mean of `x` per bin.
    pub centers: Vec<f64>,
    /// Mean and SE of `y` per bin.
    pub means: Vec<MeanSe>,
}

impl BinnedMean {
    /// `ĝ(x_j)` for every sample.
    pub fn fitted(&self) -> Vec<f64> {
        self.assignment.iter().map(|&b| self.means[b].mean).collect()
    }
}

/// `E[y | x]` by equal-count (quantile) binning.
pub fn binned_conditional_mean(x: &[f64], y: &[f64], bins: usize) -> Result<BinnedMean> {
    let n = x.len();
    if bins < 10 {
        return Err(Error::config("fokker_planck.bins", format!("need at least 10 bins, got {bins}")));
    }
    if n / bins < MIN_PER_BIN {
        return Err(Error::EstimatorUndersampled {
            per_bin: n / bins,
            min: MIN_PER_BIN,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut assignment = vec![0; n];
    for (rank, &j) in order.iter().enumerate() {
        assignment[j] = rank * bins / n;
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); bins];
    for &j in &order {
        members[assignment[j]].push(j);
    }
    let centers = members
        .iter()
        .map(|m| m.iter().map(|&j| x[j]).sum::<f64>() / m.len() as f64)
        .collect();
    let means = members.iter().map(|m| MeanSe::from_values(m.iter().map(|&j| y[j]))).collect();
    Ok(BinnedMean {
        assignment,
        centers,
        means,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FpResidualRecord {
    pub test_function: String,
    pub residual: MeanSe,
    pub bins: usize,
    pub pass: bool,
}

/// Gaussian integration-by-parts identity `E[f(Z)Z_k] = E[∂_k f(Z)]`,
/// evaluated as the mean of `f(Z)Z_k − ∂_k f(Z)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteinRecord {
    pub identity: String,
    pub k: usize,
    pub defect: MeanSe,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FpReport {
    pub residuals: Vec<FpResidualRecord>,
    pub stein: Vec<SteinRecord>,
}

impl FpReport {
    pub fn all_pass(&self) -> bool {
        self.residuals.iter().all(|r| r.pass) && self.stein.iter().all(|s| s.pass)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FpOptions {
    pub bins: usize,
    /// Gate for residuals, in standard errors.
    pub residual_z: f64,
    /// Gate for Stein identities, in standard errors.
    pub stein_z: f64,
}

impl Default for FpOptions {
    fn default() -> Self {
        Self {
            bins: 100,
            residual_z: 3.0,
            stein_z: 4.0,
        }
    }
}

/// Weak-form Fokker–Planck residual of the law of `X^K` (one component).
///
/// Between nodes `X^K` follows the Wick transport exactly and at each node
/// it jumps by the drift increment `Δ·b(t_n, X^K(t_n))`; the identity
/// `0 = E[φ(T,X(T)) − φ(0,c)]` therefore splits into a time term, the
/// diffusion term with `E[∂_k X | X]` in place of `∂_k X`, and the node
/// jumps `φ(t_n, X(t_n+)) − φ(t_n, X(t_n))`. Time integrals use the
/// trapezoid rule on the basis grid, with `σξ_k dr = dΣ_k(0,r)` exact.
pub fn fokker_planck_residual(
    spec: &ProblemSpec<f64>,
    basis: &PhiBasis<f64>,
    grid: &SolverGrid<f64>,
    tests: &[(String, TestFunction)],
    n: usize,
    seed: u64,
    options: FpOptions,
) -> Result<FpReport> {
    if spec.dim() != 1 {
        return Err(Error::Unsupported("the Fokker–Planck check is one-dimensional".into()));
    }
    if spec.drift().component_derivative(0, 0.0, 0.0).is_none() {
        return Err(Error::Unsupported("drift has no declared derivative".into()));
    }
    for (_, f) in tests {
        f.check_support(grid.horizon())?;
    }
    if n / options.bins.max(1) < MIN_PER_BIN {
        return Err(Error::EstimatorUndersampled {
            per_bin: n / options.bins.max(1),
            min: MIN_PER_BIN,
        });
    }
    let space = spec.space();
    let kk = basis.len();
    let coeffs = sigma_coeffs(basis, &spec.sigma()[0])?;
    let lattice = Lattice::fine(space, grid)?;
    let solver = TruncatedSolver::new(spec, vec![coeffs], lattice, SolverOptions::default())?;
    let eng = solver.engine();
    let lat = eng.lattice();
    let cum = solver.basis_drive(0);
    let pts = lat.len();
    let mut node_of = vec![None; pts];
    for (m, &q) in lat.nodes_index().iter().enumerate() {
        node_of[q] = Some(m);
    }

    let model = build_covariance(space, &GaussianFrame::new(vec![basis.vectors().to_vec()]))?;
    // z followed by the drive at the nodes
    let draws: Vec<Vec<f64>> = per_draw(&model, n, seed, |z| {
        let mut row = z.to_vec();
        row.extend(lat.nodes_index().iter().map(|&q| (0..kk).map(|k| z[k] * cum[k][q]).sum::<f64>()));
        row
    });
    let eval = |top: usize| -> Vec<ChainPoint<f64>> {
        draws
            .par_iter()
            .map(|row| {
                let (z, wn) = row.split_at(kk);
                let w = |q: usize| match node_of[q] {
                    Some(m) => wn[m],
                    None => (0..kk).map(|k| z[k] * cum[k][q]).sum(),
                };
                eng.chain_with(0, w, top, kk, |k, q| cum[k][q], |_, _| {})
            })
            .collect()
    };

    let nt = tests.len();
    let mut totals = vec![vec![0.0; nt]; n];
    // right-limit quantities at the previous lattice point: (x, ĝ_k)
    let mut prev: Option<(Vec<f64>, Vec<Vec<f64>>)> = None;
    let mut stein_terminal = None;
    for p in 0..pts {
        let chain = eval(p);
        let t = lat.time(p);
        let pre: Vec<f64> = chain.iter().map(|c| c.pre).collect();
        if p > 0 {
            let g_pre = conditional_means(&pre, &chain, kk, options.bins, false)?;
            let (x_left, g_left) = prev.take().expect("previous point");
            let h = t - lat.time(p - 1);
            let dc: Vec<f64> = (0..kk).map(|k| cum[k][p] - cum[k][p - 1]).collect();
            let tl = lat.time(p - 1);
            for (j, tot) in totals.iter_mut().enumerate() {
                for (f, (_, tf)) in tot.iter_mut().zip(tests) {
                    let jl = tf.jet(tl, x_left[j]);
                    let jr = tf.jet(t, pre[j]);
                    let mut acc = 0.5 * h * (jl.dt + jr.dt);
                    for (k, &dck) in dc.iter().enumerate() {
                        acc += 0.5
                            * dck
                            * (jl.dxx * x_left[j] * g_left[k][j] + jr.dxx * pre[j] * g_pre[k][j]);
                    }
                    *f += acc;
                }
            }
        }
        if p + 1 < pts {
            let is_node = node_of[p].is_some();
            let post: Vec<f64> = chain.iter().map(|c| c.post).collect();
            if is_node {
                for (j, tot) in totals.iter_mut().enumerate() {
                    for (f, (_, tf)) in tot.iter_mut().zip(tests) {
                        *f += tf.jet(t, post[j]).value - tf.jet(t, pre[j]).value;
                    }
                }
            }
            let g_post = conditional_means(&post, &chain, kk, options.bins, true)?;
            prev = Some((post, g_post));
        } else {
            stein_terminal = Some(chain);
        }
    }

    let residuals = tests
        .iter()
        .enumerate()
        .map(|(c, (id, _))| {
            let residual = MeanSe::from_values(totals.iter().map(|t| t[c]));
            FpResidualRecord {
                test_function: id.clone(),
                residual,
                bins: options.bins,
                pass: residual.mean.abs() <= options.residual_z * residual.se,
            }
        })
        .collect();

    let terminal = stein_terminal.expect("terminal point");
    let mut stein = Vec::new();
    let mut push = |identity: &str, k: usize, values: Vec<f64>| {
        let defect = MeanSe::from_values(values);
        stein.push(SteinRecord {
            identity: identity.to_string(),
            k,
            pass: defect.consistent_with_zero(options.stein_z),
            defect,
        });
    };
    for k in 0..kk {
        let z = || draws.iter().map(move |r| r[k]);
        push("z*1 = 0", k, z().collect());
        push("z*z = 1", k, z().map(|v| v * v - 1.0).collect());
        push("z*z^2 = 2z", k, z().map(|v| v * v * v - 2.0 * v).collect());
        push("z*z^3 = 3z^2", k, z().map(|v| v.powi(4) - 3.0 * v * v).collect());
        push(
            "z*X = dX",
            k,
            draws.iter().zip(&terminal).map(|(r, c)| r[k] * c.pre - c.dpre[k]).collect(),
        );
    }
    Ok(FpReport { residuals, stein })
}

/// `ĝ_k` at every draw for the chosen side of the lattice point.
fn conditional_means(x: &[f64], chain: &[ChainPoint<f64>], kk: usize, bins: usize, post: bool) -> Result<Vec<Vec<f64>>> {
    (0..kk)
        .map(|k| {
            let y: Vec<f64> = chain.iter().map(|c| if post { c.dpost[k] } else { c.dpre[k] }).collect();
            Ok(binned_conditional_mean(x, &y, bins)?.fitted())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_derivatives_match_differences() {
        let f = TestFunction::preset("bump_center").unwrap();
        let (t, x, h) = (0.45, 1.5, 1e-5);
        let j = f.jet(t, x);
        let dt = (f.jet(t + h, x).value - f.jet(t - h, x).value) / (2.0 * h);
        let dx = (f.jet(t, x + h).value - f.jet(t, x - h).value) / (2.0 * h);
        let dxx = (f.jet(t, x + h).dx - f.jet(t, x - h).dx) / (2.0 * h);
        assert!((j.dt - dt).abs() < 1e-8);
        assert!((j.dx - dx).abs() < 1e-8);
        assert!((j.dxx - dxx).abs() < 1e-7);
        assert_eq!(f.jet(0.05, x).value, 0.0);
    }

    #[test]
    fn binning_recovers_linear_regression() {
        let x: Vec<f64> = (0..1000).map(|j| (j as f64 * 0.618).fract()).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
        let b = binned_conditional_mean(&x, &y, 10).unwrap();
        for (c, m) in b.centers.iter().zip(&b.means) {
            assert!((m.mean - 3.0 * c).abs() < 1e-12);
        }
        assert!(matches!(
            binned_conditional_mean(&x, &y, 100),
            Err(Error::EstimatorUndersampled { per_bin: 10, .. })
        ));
        assert!(binned_conditional_mean(&x, &y, 5).is_err());
    }
}
