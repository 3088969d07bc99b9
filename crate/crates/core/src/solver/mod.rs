//! Pathwise mild-solution solvers for the truncated and the exact equation.

mod descriptor;
mod drift;
mod engine;
mod lattice;
mod problem;

pub use descriptor::ShiftDescriptor;
pub use drift::{Drift, DriftModel};
pub use engine::{ChainPoint, Engine, PathSolution, SolverOptions, Strategy};
pub use lattice::{Drive, ExponentTables, Lattice};
pub use problem::{ProblemSpec, SolverGrid};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::wick::SigmaCoeffs;

/// Solver for `X^K`, driven by the basis coordinates `z`.
#[derive(Debug, Clone)]
pub struct TruncatedSolver<T: Scalar> {
    engine: Engine<T>,
    coeffs: Vec<SigmaCoeffs<T>>,
    /// `basis_drive[i][k][p] = Σ_k(0, p)` for component `i`.
    basis_drive: Vec<Vec<Vec<T>>>,
}

impl<T: Scalar> TruncatedSolver<T> {
    pub fn new(
        spec: &ProblemSpec<T>,
        coeffs: Vec<SigmaCoeffs<T>>,
        lattice: Lattice<T>,
        options: SolverOptions,
    ) -> Result<Self> {
        if coeffs.len() != spec.dim() {
            return Err(Error::config("coeffs", "one coefficient table per component"));
        }
        let tables = ExponentTables::truncated(&coeffs, &lattice);
        let basis_drive = coeffs
            .iter()
            .map(|c| {
                (0..c.len())
                    .map(|k| lattice.grid_indices().iter().map(|&g| c.cumulative(k, g)).collect())
                    .collect()
            })
            .collect();
        Ok(Self {
            engine: Engine::new(spec.clone(), lattice, tables, options),
            coeffs,
            basis_drive,
        })
    }

    pub fn engine(&self) -> &Engine<T> {
        &self.engine
    }

    pub fn coeffs(&self) -> &[SigmaCoeffs<T>] {
        &self.coeffs
    }

    /// `∂W_i/∂z_k` on the lattice.
    pub fn basis_drive(&self, i: usize) -> &[Vec<T>] {
        &self.basis_drive[i]
    }

    pub fn drive(&self, z: &[Vec<T>]) -> Result<Drive<T>> {
        Drive::truncated(&self.coeffs, self.engine.lattice(), z)
    }

    pub fn solve(&self, z: &[Vec<T>]) -> Result<PathSolution<T>> {
        self.engine.solve(&self.drive(z)?)
    }

    /// `(N+1)×d×K` array of `∂X_i^K(t_n)/∂z_k^{(i)}`.
    pub fn sensitivities(&self, z: &[Vec<T>]) -> Result<Vec<Vec<Vec<T>>>> {
        self.engine.sensitivities(&self.drive(z)?, &self.basis_drive)
    }
}

/// Solver for the exact equation, driven by per-cell Wiener integrals.
#[derive(Debug, Clone)]
pub struct ReferenceSolver<T: Scalar> {
    engine: Engine<T>,
}

impl<T: Scalar> ReferenceSolver<T> {
    pub fn new(spec: &ProblemSpec<T>, lattice: Lattice<T>, options: SolverOptions) -> Result<Self> {
        let tables = ExponentTables::exact(spec.space(), spec.sigma(), &lattice)?;
        Ok(Self {
            engine: Engine::new(spec.clone(), lattice, tables, options),
        })
    }

    pub fn engine(&self) -> &Engine<T> {
        &self.engine
    }

    pub fn drive(&self, g: &[Vec<T>]) -> Result<Drive<T>> {
        Drive::exact(self.engine.lattice(), g)
    }

    pub fn solve(&self, g: &[Vec<T>]) -> Result<PathSolution<T>> {
        self.engine.solve(&self.drive(g)?)
    }
}

/// `X^K` at the nodes of `grid` for basis coordinates `z[i][k]`.
pub fn solve_truncated<T: Scalar>(
    spec: &ProblemSpec<T>,
    coeffs: &[SigmaCoeffs<T>],
    grid: &SolverGrid<T>,
    z: &[Vec<T>],
) -> Result<PathSolution<T>> {
    let lattice = Lattice::nodes(spec.space(), grid)?;
    TruncatedSolver::new(spec, coeffs.to_vec(), lattice, SolverOptions::default())?.solve(z)
}

/// `X` at the nodes of `grid` for the exact per-step integrals `g[i][n] = I(χ_[t_n,t_{n+1}]σ_i)`.
pub fn solve_reference<T: Scalar>(spec: &ProblemSpec<T>, grid: &SolverGrid<T>, g: &[Vec<T>]) -> Result<PathSolution<T>> {
    let lattice = Lattice::nodes(spec.space(), grid)?;
    ReferenceSolver::new(spec, lattice, SolverOptions::default())?.solve(g)
}

pub fn forward_sensitivities<T: Scalar>(
    spec: &ProblemSpec<T>,
    coeffs: &[SigmaCoeffs<T>],
    grid: &SolverGrid<T>,
    z: &[Vec<T>],
) -> Result<Vec<Vec<Vec<T>>>> {
    let lattice = Lattice::nodes(spec.space(), grid)?;
    TruncatedSolver::new(spec, coeffs.to_vec(), lattice, SolverOptions::default())?.sensitivities(z)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::ensemble::{build_covariance, sample, GaussianFrame};
    use crate::phi::{gram_schmidt, Hurst, PhiBasis, PhiSpace, SeedFamily, StepFunction, TimeGrid};
    use crate::wick::sigma_coeffs;

    fn space(m: usize, h: f64, t: f64) -> Arc<PhiSpace<f64>> {
        PhiSpace::new(Arc::new(TimeGrid::uniform(t, m).unwrap()), Hurst::new(h).unwrap())
    }

    fn problem(sp: &Arc<PhiSpace<f64>>, drift: DriftModel, sigma: &[f64], c: &[f64]) -> ProblemSpec<f64> {
        let sig = sigma
            .iter()
            .map(|&s| StepFunction::constant(sp.grid().clone(), s))
            .collect();
        ProblemSpec::new(sp.clone(), Arc::new(drift), sig, c.to_vec()).unwrap()
    }

    fn coeffs(spec: &ProblemSpec<f64>, basis: &PhiBasis<f64>) -> Vec<crate::wick::SigmaCoeffs<f64>> {
        spec.sigma().iter().map(|s| sigma_coeffs(basis, s).unwrap()).collect()
    }

    #[test]
    fn zero_drift_is_stochastic_exponential() {
        let sp = space(32, 0.75, 1.0);
        let spec = problem(&sp, DriftModel::Zero, &[0.5], &[1.3]);
        let basis = PhiBasis::from_family(&sp, SeedFamily::Legendre, 3).unwrap();
        let cs = coeffs(&spec, &basis);
        let grid = SolverGrid::new(8, 1.0).unwrap();
        let z = vec![vec![0.4, -1.1, 0.7]];
        let sol = solve_truncated(&spec, &cs, &grid, &z).unwrap();
        for n in 0..=8 {
            let p = 4 * n;
            let log: f64 = (0..3).map(|k| z[0][k] * cs[0].coeff(k, 0, p)).sum::<f64>()
                - 0.5 * crate::wick::projection_norm_sq(&cs[0], 0, p);
            let want = 1.3 * log.exp();
            assert!((sol.value(n, 0) - want).abs() <= 1e-14 * want.abs().max(1.0), "n={n}");
        }
        assert_eq!(sol.value(0, 0), 1.3);
    }

    #[test]
    fn zero_sigma_is_euler() {
        let sp = space(16, 0.7, 2.0);
        let spec = problem(&sp, DriftModel::Sin { amplitude: 1.0 }, &[0.0], &[0.3]);
        let basis = PhiBasis::from_family(&sp, SeedFamily::Legendre, 2).unwrap();
        let grid = SolverGrid::new(16, 2.0).unwrap();
        let sol = solve_truncated(&spec, &coeffs(&spec, &basis), &grid, &[vec![1.0, -2.0]]).unwrap();
        let mut x = 0.3f64;
        for n in 0..=16 {
            assert!((sol.value(n, 0) - x).abs() <= 1e-14, "n={n}");
            x += 0.125 * x.sin();
        }
        let g = vec![vec![0.0; 16]];
        let reference = solve_reference(&spec, &grid, &g).unwrap();
        for n in 0..=16 {
            assert!((reference.value(n, 0) - sol.value(n, 0)).abs() <= 1e-14);
        }
    }

    #[test]
    fn chains_match_memoized_recursion() {
        let sp = space(24, 0.7, 1.0);
        let spec = problem(&sp, DriftModel::TanhScaled { amplitude: 1.5, scale: 0.7 }, &[0.8], &[0.9]);
        let basis = PhiBasis::from_family(&sp, SeedFamily::Legendre, 4).unwrap();
        let cs = coeffs(&spec, &basis);
        let grid = SolverGrid::new(12, 1.0).unwrap();
        let z = vec![vec![0.3, 1.2, -0.5, 0.9]];
        let lattice = Lattice::nodes(&sp, &grid).unwrap();
        let fast = TruncatedSolver::new(&spec, cs.clone(), lattice.clone(), SolverOptions::default())
            .unwrap()
            .solve(&z)
            .unwrap();
        let memo_opts = SolverOptions {
            strategy: Strategy::Memoized,
            ..Default::default()
        };
        let memo = TruncatedSolver::new(&spec, cs, lattice, memo_opts).unwrap().solve(&z).unwrap();
        assert_eq!(memo.max_chain_depth, 1);
        for n in 0..=12 {
            let (a, b) = (fast.value(n, 0), memo.value(n, 0));
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "n={n}: {a} vs {b}");
        }
    }

    #[test]
    fn decoupled_system_solves_componentwise() {
        let sp = space(16, 0.8, 1.0);
        let spec = problem(&sp, DriftModel::Sin { amplitude: 1.0 }, &[0.5, 0.2], &[1.0, -0.5]);
        let basis = PhiBasis::from_family(&sp, SeedFamily::Legendre, 2).unwrap();
        let cs = coeffs(&spec, &basis);
        let grid = SolverGrid::new(4, 1.0).unwrap();
        let z = vec![vec![0.1, 0.2], vec![-0.3, 0.4]];
        let joint = solve_truncated(&spec, &cs, &grid, &z).unwrap();
        for i in 0..2 {
            let single = problem(&sp, DriftModel::Sin { amplitude: 1.0 }, &[[0.5, 0.2][i]], &[[1.0, -0.5][i]]);
            let s = solve_truncated(&single, &cs[i..=i], &grid, &z[i..=i]).unwrap();
            for n in 0..=4 {
                assert!((s.value(n, 0) - joint.value(n, i)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn coupled_drift_grows_descriptors_and_guards() {
        let sp = space(32, 0.7, 1.0);
        let spec = problem(&sp, DriftModel::SinCoupled { amplitude: 1.0 }, &[0.5, 0.3], &[1.0, 0.5]);
        let basis = PhiBasis::from_family(&sp, SeedFamily::Legendre, 2).unwrap();
        let cs = coeffs(&spec, &basis);
        let z = vec![vec![0.5, -0.2], vec![1.0, 0.1]];
        let sol = solve_truncated(&spec, &cs, &SolverGrid::new(4, 1.0).unwrap(), &z).unwrap();
        assert!(sol.max_chain_depth >= 2);
        assert!(sol.values.iter().flatten().all(|v| v.is_finite()));
        let err = solve_truncated(&spec, &cs, &SolverGrid::new(32, 1.0).unwrap(), &z).unwrap_err();
        assert!(matches!(err, Error::ComplexityGuard { steps: 32, limit: 16, .. }));
        assert!(forward_sensitivities(&spec, &cs, &SolverGrid::new(4, 1.0).unwrap(), &z).is_err());
    }

    #[test]
    fn exact_projection_couples_the_solvers() {
        let n = 8;
        let sp = space(32, 0.75, 1.0);
        let spec = problem(&sp, DriftModel::Sin { amplitude: 1.0 }, &[0.5], &[1.0]);
        let grid = SolverGrid::new(n, 1.0).unwrap();
        let cells: Vec<StepFunction<f64>> = (0..n).map(|c| spec.sigma()[0].restrict(4 * c, 4 * c + 4)).collect();
        let basis = gram_schmidt(&sp, &cells, n).unwrap();
        let cs = coeffs(&spec, &basis);
        let mut kernels = basis.vectors().to_vec();
        kernels.extend(cells);
        let model = build_covariance(&sp, &GaussianFrame::new(vec![kernels])).unwrap();
        let batch = sample(&model, 20, 7);
        for draw in batch.iter() {
            let z = vec![draw[..n].to_vec()];
            let g = vec![draw[n..].to_vec()];
            let a = solve_truncated(&spec, &cs, &grid, &z).unwrap();
            let b = solve_reference(&spec, &grid, &g).unwrap();
            for k in 0..=n {
                assert!((a.value(k, 0) - b.value(k, 0)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn zero_drift_sensitivity_is_coefficient_times_value() {
        let sp = space(32, 0.65, 1.0);
        let spec = problem(&sp, DriftModel::Zero, &[0.7], &[2.0]);
        let basis = PhiBasis::from_family(&sp, SeedFamily::Legendre, 3).unwrap();
        let cs = coeffs(&spec, &basis);
        let grid = SolverGrid::new(8, 1.0).unwrap();
        let z = vec![vec![0.2, -0.4, 1.0]];
        let sol = solve_truncated(&spec, &cs, &grid, &z).unwrap();
        let sens = forward_sensitivities(&spec, &cs, &grid, &z).unwrap();
        for n in 0..=8 {
            for k in 0..3 {
                let want = cs[0].coeff(k, 0, 4 * n) * sol.value(n, 0);
                assert!((sens[n][0][k] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn sensitivities_match_finite_differences() {
        let sp = space(32, 0.7, 1.0);
        let spec = problem(&sp, DriftModel::Sin { amplitude: 1.0 }, &[0.5], &[0.8]);
        let basis = PhiBasis::from_family(&sp, SeedFamily::Legendre, 3).unwrap();
        let cs = coeffs(&spec, &basis);
        let grid = SolverGrid::new(8, 1.0).unwrap();
        let z = vec![vec![0.3, -0.7, 1.1]];
        let sens = forward_sensitivities(&spec, &cs, &grid, &z).unwrap();
        let h = 1e-5;
        for k in 0..3 {
            let mut up = z.clone();
            up[0][k] += h;
            let mut dn = z.clone();
            dn[0][k] -= h;
            let a = solve_truncated(&spec, &cs, &grid, &up).unwrap();
            let b = solve_truncated(&spec, &cs, &grid, &dn).unwrap();
            let fd = (a.value(8, 0) - b.value(8, 0)) / (2.0 * h);
            assert!((fd - sens[8][0][k]).abs() <= 1e-6 * fd.abs().max(1.0), "k={k}");
        }
    }

    #[test]
    fn single_precision_instantiation() {
        let sp = PhiSpace::new(Arc::new(TimeGrid::uniform(1.0f32, 16).unwrap()), Hurst::new(0.7f32).unwrap());
        let sig = vec![StepFunction::constant(sp.grid().clone(), 0.5f32)];
        let spec = ProblemSpec::new(sp.clone(), Arc::new(DriftModel::Sin { amplitude: 1.0 }), sig, vec![1.0f32]).unwrap();
        let basis = PhiBasis::from_family(&sp, SeedFamily::Legendre, 2).unwrap();
        let cs = vec![sigma_coeffs(&basis, &spec.sigma()[0]).unwrap()];
        let sol = solve_truncated(&spec, &cs, &SolverGrid::new(4, 1.0).unwrap(), &[vec![0.5, 0.5]]).unwrap();
        assert!(sol.terminal()[0].is_finite());
    }

    #[test]
    fn audit_catches_understated_bound() {
        #[derive(Debug)]
        struct Liar;
        impl Drift<f64> for Liar {
            fn eval(&self, _t: f64, x: &[f64], out: &mut [f64]) {
                out[0] = 2.0 * x[0].sin();
            }
            fn bound(&self) -> f64 {
                1.0
            }
            fn lipschitz(&self) -> f64 {
                2.0
            }
            fn is_decoupled(&self) -> bool {
                true
            }
            fn component(&self, _i: usize, _t: f64, xi: f64) -> f64 {
                2.0 * xi.sin()
            }
            fn component_derivative(&self, _i: usize, _t: f64, _xi: f64) -> Option<f64> {
                None
            }
        }
        let sp = space(8, 0.7, 1.0);
        let sig = vec![StepFunction::constant(sp.grid().clone(), 0.5)];
        let spec = ProblemSpec::new(sp.clone(), Arc::new(Liar), sig, vec![1.0]).unwrap();
        assert!(matches!(spec.audit(1000, 1), Err(Error::DriftAudit(_))));
        let honest = problem(&sp, DriftModel::TanhScaled { amplitude: 2.0, scale: 0.5 }, &[0.5], &[1.0]);
        honest.audit(1000, 1).unwrap();
        let basis = PhiBasis::from_family(&sp, SeedFamily::Legendre, 2).unwrap();
        let cs = vec![sigma_coeffs(&basis, &spec.sigma()[0]).unwrap()];
        let grid = SolverGrid::new(4, 1.0).unwrap();
        assert!(matches!(
            forward_sensitivities(&spec, &cs, &grid, &[vec![0.0, 0.0]]),
            Err(Error::Unsupported(_))
        ));
    }
}
