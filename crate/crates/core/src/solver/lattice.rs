use super::problem::SolverGrid;
use crate::error::{Error, Result};
use crate::phi::{PhiSpace, StepFunction};
use crate::scalar::Scalar;
use crate::wick::SigmaCoeffs;

/// Basis-grid points on which exponentials are evaluated. Always contains
/// every solver node; may contain more points for off-node evaluation.
#[derive(Debug, Clone)]
pub struct Lattice<T> {
    grid_index: Vec<usize>,
    times: Vec<T>,
    nodes: Vec<usize>,
    step: T,
}

impl<T: Scalar> Lattice<T> {
    /// Lattice consisting of the solver nodes only.
    pub fn nodes(space: &PhiSpace<T>, grid: &SolverGrid<T>) -> Result<Self> {
        let grid_index = node_indices(space, grid)?;
        let times = (0..=grid.steps()).map(|n| grid.node(n)).collect();
        Ok(Self {
            grid_index,
            times,
            nodes: (0..=grid.steps()).collect(),
            step: grid.step(),
        })
    }

    /// Every basis-grid point in `[0, t_N]`.
    pub fn fine(space: &PhiSpace<T>, grid: &SolverGrid<T>) -> Result<Self> {
        let node_idx = node_indices(space, grid)?;
        let last = *node_idx.last().expect("at least two nodes");
        let grid_index: Vec<usize> = (0..=last).collect();
        let times = space.grid().points()[..=last].to_vec();
        Ok(Self {
            grid_index,
            times,
            nodes: node_idx,
            step: grid.step(),
        })
    }

    /// Number of lattice points.
    pub fn len(&self) -> usize {
        self.grid_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid_index.is_empty()
    }

    pub fn grid_index(&self, p: usize) -> usize {
        self.grid_index[p]
    }

    pub fn grid_indices(&self) -> &[usize] {
        &self.grid_index
    }

    pub fn time(&self, p: usize) -> T {
        self.times[p]
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    /// Lattice index of every solver node `t_0, …, t_N`.
    pub fn nodes_index(&self) -> &[usize] {
        &self.nodes
    }

    pub fn steps(&self) -> usize {
        self.nodes.len() - 1
    }

    /// `Δ`.
    pub fn step(&self) -> T {
        self.step
    }

    /// Node time `t_n` (exactly `nΔ`, not the grid point it was matched to).
    pub fn node_time(&self, n: usize) -> T {
        self.step * T::from_usize_lossy(n)
    }
}

fn node_indices<T: Scalar>(space: &PhiSpace<T>, grid: &SolverGrid<T>) -> Result<Vec<usize>> {
    (0..=grid.steps())
        .map(|n| space.grid().require_index(grid.node(n)))
        .collect()
}

/// Symmetric tables `F_i(p,q) = ⟨χ_[0,p]σ_i, χ_[0,q]σ_i⟩` on a lattice,
/// either for the exact kernels or for their projections on a basis.
#[derive(Debug, Clone)]
pub struct ExponentTables<T> {
    points: usize,
    cross: Vec<Vec<T>>,
}

impl<T: Scalar> ExponentTables<T> {
    /// `F_i(p,q) = Σ_k Σ_k(0,p)Σ_k(0,q)`.
    pub fn truncated(coeffs: &[SigmaCoeffs<T>], lattice: &Lattice<T>) -> Self {
        let pts = lattice.len();
        let cross = coeffs
            .iter()
            .map(|c| {
                let rows: Vec<Vec<T>> = (0..c.len())
                    .map(|k| lattice.grid_indices().iter().map(|&g| c.cumulative(k, g)).collect())
                    .collect();
                let mut f = vec![T::zero(); pts * pts];
                for p in 0..pts {
                    for q in p..pts {
                        let v: T = rows.iter().map(|r| r[p] * r[q]).sum();
                        f[p * pts + q] = v;
                        f[q * pts + p] = v;
                    }
                }
                f
            })
            .collect();
        Self { points: pts, cross }
    }

    /// Exact tables from the cell Gram matrix.
    pub fn exact(space: &PhiSpace<T>, sigma: &[StepFunction<T>], lattice: &Lattice<T>) -> Result<Self> {
        let m = space.grid().cells();
        let pts = lattice.len();
        let gram = space.gram();
        let mut cross = Vec::with_capacity(sigma.len());
        for s in sigma {
            space.check(s)?;
            let sv = s.values();
            // prefix[a][q] = Σ_{b<q} σ_b G(a,b), then cumulate over a
            let mut full = vec![T::zero(); (m + 1) * (m + 1)];
            let mut row_prefix = vec![T::zero(); m + 1];
            for a in 0..m {
                let row = gram.row(a);
                let mut acc = T::zero();
                for b in 0..m {
                    acc += sv[b] * row[b];
                    row_prefix[b + 1] = acc;
                }
                for q in 0..=m {
                    full[(a + 1) * (m + 1) + q] = full[a * (m + 1) + q] + sv[a] * row_prefix[q];
                }
            }
            let mut f = vec![T::zero(); pts * pts];
            for (p, &gp) in lattice.grid_indices().iter().enumerate() {
                for (q, &gq) in lattice.grid_indices().iter().enumerate() {
                    // symmetrize the rounding
                    f[p * pts + q] = T::lit(0.5) * (full[gp * (m + 1) + gq] + full[gq * (m + 1) + gp]);
                }
            }
            cross.push(f);
        }
        Ok(Self { points: pts, cross })
    }

    pub fn components(&self) -> usize {
        self.cross.len()
    }

    pub fn points(&self) -> usize {
        self.points
    }

    #[inline]
    pub fn cross(&self, i: usize, p: usize, q: usize) -> T {
        self.cross[i][p * self.points + q]
    }

    /// `|χ_[r,t]σ_i|²` (or its projected counterpart).
    pub fn norm_sq(&self, i: usize, r: usize, t: usize) -> T {
        self.cross(i, t, t) - T::lit(2.0) * self.cross(i, r, t) + self.cross(i, r, r)
    }

    /// `⟨χ_[r,t]σ_i, χ_[a,b]σ_i⟩` (or its projected counterpart).
    pub fn overlap(&self, i: usize, r: usize, t: usize, a: usize, b: usize) -> T {
        self.cross(i, t, b) - self.cross(i, t, a) - self.cross(i, r, b) + self.cross(i, r, a)
    }
}

/// Realized Gaussian drive `W_i(p) = I(χ_[0,p]σ_i)` (or its truncation) at
/// every lattice point.
#[derive(Debug, Clone, PartialEq)]
pub struct Drive<T> {
    values: Vec<Vec<T>>,
}

impl<T: Scalar> Drive<T> {
    pub fn new(values: Vec<Vec<T>>) -> Self {
        Self { values }
    }

    /// `W_i(p) = Σ_k z_k^{(i)} Σ_k(0,p)`; uses the first `K` entries of `z[i]`.
    pub fn truncated(coeffs: &[SigmaCoeffs<T>], lattice: &Lattice<T>, z: &[Vec<T>]) -> Result<Self> {
        if z.len() != coeffs.len() {
            return Err(Error::config("z", format!("{} rows for {} components", z.len(), coeffs.len())));
        }
        let values = coeffs
            .iter()
            .zip(z)
            .map(|(c, zi)| {
                if zi.len() < c.len() {
                    return Err(Error::config("z", format!("{} coordinates for K = {}", zi.len(), c.len())));
                }
                Ok(lattice
                    .grid_indices()
                    .iter()
                    .map(|&g| (0..c.len()).map(|k| zi[k] * c.cumulative(k, g)).sum())
                    .collect())
            })
            .collect::<Result<_>>()?;
        Ok(Self { values })
    }

    /// Cumulative sums of per-lattice-cell exact integrals `g_i[p] = I(χ_[p,p+1]σ_i)`.
    pub fn exact(lattice: &Lattice<T>, g: &[Vec<T>]) -> Result<Self> {
        let cells = lattice.len() - 1;
        let values = g
            .iter()
            .map(|gi| {
                if gi.len() != cells {
                    return Err(Error::config("g", format!("{} cell integrals for {} cells", gi.len(), cells)));
                }
                let mut acc = T::zero();
                Ok(std::iter::once(T::zero())
                    .chain(gi.iter().map(|&v| {
                        acc += v;
                        acc
                    }))
                    .collect())
            })
            .collect::<Result<_>>()?;
        Ok(Self { values })
    }

    pub fn component(&self, i: usize) -> &[T] {
        &self.values[i]
    }

    pub fn components(&self) -> usize {
        self.values.len()
    }

    /// Gjessing translation: `W_i(p) ← W_i(p) − offsets[p]`.
    pub fn translated(&self, i: usize, offsets: &[T]) -> Self {
        let mut out = self.clone();
        for (w, &o) in out.values[i].iter_mut().zip(offsets) {
            *w -= o;
        }
        out
    }
}
