use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{per_draw, MeanSe};
use crate::ensemble::{build_covariance, GaussianFrame};
use crate::error::{Error, Result};
use crate::phi::{gram_schmidt, PhiBasis, PhiSpace, SeedFamily, StepFunction};
use crate::solver::{Drive, Lattice, ProblemSpec, ReferenceSolver, SolverGrid, SolverOptions, TruncatedSolver};
use crate::wick::sigma_coeffs;

/// Increasing truncation levels. With `exact_final_rung` the last level must
/// equal the step count and uses the orthonormalized solver-cell kernels of
/// σ, which span every `χ_[t_m,t_n]σ` exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ladder {
    pub ks: Vec<usize>,
    #[serde(default)]
    pub exact_final_rung: bool,
    /// Seeds of the nested bases below the exact rung.
    #[serde(default = "legendre")]
    pub family: SeedFamily,
}

fn legendre() -> SeedFamily {
    SeedFamily::Legendre
}

impl Ladder {
    pub fn new(ks: Vec<usize>, exact_final_rung: bool) -> Self {
        Self {
            ks,
            exact_final_rung,
            family: SeedFamily::Legendre,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub k: usize,
    pub l1_error: f64,
    pub std_err: f64,
    pub n: usize,
    pub sigma_defect: f64,
    pub exact_projection: bool,
    /// Mean and SE of the paired increment over the previous rung.
    pub increment: Option<MeanSe>,
    /// `𝓜^K(t)` estimate.
    pub forcing: Option<MeanSe>,
    /// Discrete Gronwall propagation of `𝓜^K`, and the paired error − bound.
    pub gronwall_bound: Option<f64>,
    pub gronwall_excess: Option<MeanSe>,
}

impl ConvergenceRow {
    /// Error not above the previous rung by more than `z` paired SE.
    pub fn nonincreasing(&self, z: f64) -> bool {
        self.increment.is_none_or(|d| d.mean <= z * d.se)
    }

    pub fn gronwall_pass(&self) -> bool {
        self.gronwall_excess.is_none_or(|e| e.mean <= 3.0 * e.se + GRONWALL_SLACK)
    }
}

/// Absolute slack for the Gronwall gate; covers the rounding-level error of
/// an exactly coupled rung, where both sides vanish.
pub const GRONWALL_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GronwallRow {
    pub t: f64,
    /// Largest `𝓜^K(t)` estimate over the ladder.
    pub estimate: f64,
    pub envelope: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub gronwall: Vec<GronwallRow>,
    pub seed: u64,
    pub steps: usize,
    pub horizon: f64,
}

impl ConvergenceReport {
    /// Every rung within `z` paired SE of its predecessor.
    pub fn monotone(&self, z: f64) -> bool {
        self.rows.iter().all(|r| r.nonincreasing(z))
    }

    /// Error of the exact-projection rung, if the ladder has one.
    pub fn exact_rung_error(&self) -> Option<f64> {
        self.rows.iter().find(|r| r.exact_projection).map(|r| r.l1_error)
    }
}

/// `2Σ|c_i| + 2dMt`.
pub fn gronwall_envelope(spec: &ProblemSpec<f64>, t: f64) -> f64 {
    let c: f64 = spec.init().iter().map(|c| c.abs()).sum();
    2.0 * c + 2.0 * spec.dim() as f64 * spec.drift_bound() * t
}

/// Orthonormalized `χ_cell σ` over the solver cells (plain `χ_cell` where σ
/// vanishes on the cell).
pub fn exact_rung_basis(space: &Arc<PhiSpace<f64>>, sigma: &StepFunction<f64>, lattice: &Lattice<f64>) -> Result<PhiBasis<f64>> {
    let nodes = lattice.nodes_index();
    let seeds: Vec<StepFunction<f64>> = nodes
        .windows(2)
        .map(|w| {
            let (a, b) = (lattice.grid_index(w[0]), lattice.grid_index(w[1]));
            let cell = sigma.restrict(a, b);
            if cell.is_zero() {
                StepFunction::indicator(space.grid().clone(), a, b)
            } else {
                cell
            }
        })
        .collect();
    gram_schmidt(space, &seeds, seeds.len())
}

struct Rung {
    k: usize,
    exact: bool,
    /// Offset of this rung's coordinates inside a component's frame block.
    z_offset: usize,
    solver: TruncatedSolver<f64>,
    defect: f64,
}

/// `Σ_i E|X_i^K(t) − X_i(t)|` along the ladder, on common random numbers.
pub fn l1_convergence(
    spec: &ProblemSpec<f64>,
    ladder: &Ladder,
    grid: &SolverGrid<f64>,
    n: usize,
    seed: u64,
) -> Result<ConvergenceReport> {
    let space = spec.space();
    let steps = grid.steps();
    let d = spec.dim();
    if ladder.ks.is_empty() || ladder.ks[0] == 0 || ladder.ks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config("k_ladder", "must be a nonempty strictly increasing list of positive integers"));
    }
    if ladder.exact_final_rung && *ladder.ks.last().unwrap() != steps {
        return Err(Error::config(
            "k_ladder",
            format!("the exact-projection rung needs K = N = {steps}"),
        ));
    }
    let lattice = Lattice::nodes(space, grid)?;
    let nested_ks: Vec<usize> = if ladder.exact_final_rung {
        ladder.ks[..ladder.ks.len() - 1].to_vec()
    } else {
        ladder.ks.clone()
    };
    let kmax = nested_ks.last().copied().unwrap_or(0);
    let nested = if kmax > 0 {
        Some(PhiBasis::from_family(space, ladder.family, kmax)?)
    } else {
        None
    };
    let exact_bases: Vec<PhiBasis<f64>> = if ladder.exact_final_rung {
        spec.sigma()
            .iter()
            .map(|s| exact_rung_basis(space, s, &lattice))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let exact_width = if ladder.exact_final_rung { steps } else { 0 };

    let top_grid = lattice.grid_index(steps);
    let mut rungs = Vec::new();
    for &k in &nested_ks {
        let basis = nested.as_ref().expect("nested basis").prefix(k);
        rungs.push(build_rung(spec, &basis, None, k, 0, false, &lattice, top_grid)?);
    }
    if ladder.exact_final_rung {
        rungs.push(build_rung(spec, &exact_bases[0], Some(&exact_bases), steps, kmax, true, &lattice, top_grid)?);
    }

    let cells: Vec<Vec<StepFunction<f64>>> = spec
        .sigma()
        .iter()
        .map(|s| {
            lattice
                .nodes_index()
                .windows(2)
                .map(|w| s.restrict(lattice.grid_index(w[0]), lattice.grid_index(w[1])))
                .collect()
        })
        .collect();
    let frame = GaussianFrame::new(
        (0..d)
            .map(|i| {
                let mut kernels = Vec::new();
                if let Some(b) = &nested {
                    kernels.extend(b.vectors().iter().cloned());
                }
                if let Some(b) = exact_bases.get(i) {
                    kernels.extend(b.vectors().iter().cloned());
                }
                kernels.extend(cells[i].iter().cloned());
                kernels
            })
            .collect(),
    );
    let model = build_covariance(space, &frame)?;
    let reference = ReferenceSolver::new(spec, lattice.clone(), SolverOptions::default())?;
    let decoupled = spec.is_decoupled();
    let block = kmax + exact_width + steps;
    let g_offset = kmax + exact_width;

    let draws: Vec<Result<Vec<f64>>> = per_draw(&model, n, seed, |draw| {
        let g: Vec<Vec<f64>> = (0..d)
            .map(|i| draw[i * block + g_offset..i * block + g_offset + steps].to_vec())
            .collect();
        let ref_drive = reference.drive(&g)?;
        if decoupled {
            Ok(decoupled_draw(spec, &reference, &ref_drive, &rungs, draw, block, steps))
        } else {
            let x = reference.engine().solve(&ref_drive)?;
            let mut out = Vec::with_capacity(rungs.len());
            for r in &rungs {
                let z = rung_coordinates(r, draw, block, d);
                let xk = r.solver.solve(&z)?;
                out.push((0..d).map(|i| (xk.terminal()[i] - x.terminal()[i]).abs()).sum());
            }
            Ok(out)
        }
    });
    let draws: Vec<Vec<f64>> = draws.into_iter().collect::<Result<_>>()?;

    let dt = grid.step();
    let ld = spec.lipschitz() * d as f64;
    let stride = if decoupled { steps + 2 } else { 1 };
    let mut rows = Vec::with_capacity(rungs.len());
    let mut forcing_by_node = vec![vec![0.0; steps + 1]; rungs.len()];
    for (r, rung) in rungs.iter().enumerate() {
        let base = r * stride;
        let err = MeanSe::from_values(draws.iter().map(|v| v[base]));
        let increment = (r > 0).then(|| {
            let prev = (r - 1) * stride;
            MeanSe::from_values(draws.iter().map(|v| v[base] - v[prev]))
        });
        let (forcing, gronwall_bound, gronwall_excess) = if decoupled {
            for (m, slot) in forcing_by_node[r].iter_mut().enumerate() {
                *slot = draws.iter().map(|v| v[base + 1 + m]).sum::<f64>() / n as f64;
            }
            let weights = gronwall_weights(steps, ld * dt);
            let bound_of = |v: &[f64]| -> f64 { (0..=steps).map(|m| weights[m] * v[base + 1 + m]).sum() };
            let bound = draws.iter().map(|v| bound_of(v)).sum::<f64>() / n as f64;
            let excess = MeanSe::from_values(draws.iter().map(|v| v[base] - bound_of(v)));
            let forcing = MeanSe::from_values(draws.iter().map(|v| v[base + 1 + steps]));
            (Some(forcing), Some(bound), Some(excess))
        } else {
            (None, None, None)
        };
        rows.push(ConvergenceRow {
            k: rung.k,
            l1_error: err.mean,
            std_err: err.se,
            n,
            sigma_defect: rung.defect,
            exact_projection: rung.exact,
            increment,
            forcing,
            gronwall_bound,
            gronwall_excess,
        });
    }
    let gronwall = if decoupled {
        (1..=steps)
            .map(|m| {
                let t = grid.node(m);
                let estimate = forcing_by_node.iter().map(|f| f[m]).fold(0.0, f64::max);
                let envelope = gronwall_envelope(spec, t);
                GronwallRow {
                    t,
                    estimate,
                    envelope,
                    pass: estimate <= envelope,
                }
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(ConvergenceReport {
        rows,
        gronwall,
        seed,
        steps,
        horizon: grid.horizon(),
    })
}

#[allow(clippy::too_many_arguments)]
fn build_rung(
    spec: &ProblemSpec<f64>,
    basis: &PhiBasis<f64>,
    per_component: Option<&[PhiBasis<f64>]>,
    k: usize,
    z_offset: usize,
    exact: bool,
    lattice: &Lattice<f64>,
    top_grid: usize,
) -> Result<Rung> {
    let coeffs = spec
        .sigma()
        .iter()
        .enumerate()
        .map(|(i, s)| sigma_coeffs(per_component.map_or(basis, |b| &b[i]), s))
        .collect::<Result<Vec<_>>>()?;
    // Worst projection defect over the solver subintervals [t_m, t_n].
    let steps = lattice.steps();
    let stride = top_grid / steps;
    let mut defect = 0.0f64;
    for c in &coeffs {
        for m in 0..steps {
            for n in m + 1..=steps {
                defect = defect.max(c.defect(m * stride, n * stride));
            }
        }
    }
    let solver = TruncatedSolver::new(spec, coeffs, lattice.clone(), SolverOptions::default())?;
    Ok(Rung {
        k,
        exact,
        z_offset,
        solver,
        defect,
    })
}

fn rung_coordinates(rung: &Rung, draw: &[f64], block: usize, d: usize) -> Vec<Vec<f64>> {
    (0..d)
        .map(|i| draw[i * block + rung.z_offset..i * block + rung.z_offset + rung.k].to_vec())
        .collect()
}

/// Per rung: `[error, 𝓜_0, …, 𝓜_N]` for one draw.
fn decoupled_draw(
    spec: &ProblemSpec<f64>,
    reference: &ReferenceSolver<f64>,
    ref_drive: &Drive<f64>,
    rungs: &[Rung],
    draw: &[f64],
    block: usize,
    steps: usize,
) -> Vec<f64> {
    let d = spec.dim();
    let eng = reference.engine();
    let dt = eng.lattice().step();
    let drift = spec.drift();
    let mut out = vec![0.0; rungs.len() * (steps + 2)];
    for i in 0..d {
        let w = ref_drive.component(i);
        let x = eng.chain(i, w, steps, &[]).pre;
        // translated[n][m]: X_i(t_m) shifted by χ_[t_m,t_n]σ_i
        let translated: Vec<Vec<f64>> = (0..=steps).map(|top| eng.translated_nodes(i, w, top)).collect();
        let ci = spec.init()[i];
        for (r, rung) in rungs.iter().enumerate() {
            let row = &mut out[r * (steps + 2)..(r + 1) * (steps + 2)];
            let z = rung_coordinates(rung, draw, block, d);
            let wk = rung.solver.drive(&z).expect("validated coordinates");
            let wk = wk.component(i);
            let keng = rung.solver.engine();
            row[0] += (keng.chain(i, wk, steps, &[]).pre - x).abs();
            let cum = rung.solver.basis_drive(i);
            for top in 0..=steps {
                let mut forcing =
                    ci.abs() * (eng.log_weight(i, w, 0, top).exp() - keng.log_weight(i, wk, 0, top).exp()).abs();
                for m in 0..top {
                    let tm = eng.lattice().node_time(m);
                    let exact = drift.component(i, tm, translated[top][m]) * eng.log_weight(i, w, m, top).exp();
                    // X_i(t_m) shifted by σ_i^K(t_m, t_n) instead
                    let sig: Vec<f64> = cum.iter().map(|c| c[top] - c[m]).collect();
                    let omega = |p: usize| -> f64 { cum.iter().zip(&sig).map(|(c, s)| c[p] * s).sum() };
                    let shifted = eng.chain_with(i, |p| w[p] - omega(p), m, 0, |_, _| 0.0, |_, _| {}).pre;
                    let approx = drift.component(i, tm, shifted) * keng.log_weight(i, wk, m, top).exp();
                    forcing += dt * (exact - approx).abs();
                }
                row[1 + top] += forcing;
            }
        }
    }
    out
}

/// Weights `w_m` with `Σ_m w_m 𝓜_m = 𝓜_N + a Σ_{m<N} (1+a)^{N−1−m} 𝓜_m`,
/// the discrete Gronwall solution of `e_n ≤ 𝓜_n + a Σ_{m<n} e_m`.
fn gronwall_weights(steps: usize, a: f64) -> Vec<f64> {
    (0..=steps)
        .map(|m| if m == steps { 1.0 } else { a * (1.0 + a).powi((steps - 1 - m) as i32) })
        .collect()
}
