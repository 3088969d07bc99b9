use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::grid::StepFunction;
use super::space::{dot, PhiSpace};

/// Family of step functions fed to Gram–Schmidt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SeedFamily {
    /// Shifted Legendre polynomials sampled at cell midpoints. Requires `M ≥ 4K`.
    Legendre,
    /// Indicators of `cells` equal blocks of the grid (`cells` must divide `M`).
    Indicator { cells: usize },
}

impl SeedFamily {
    pub fn seeds<T: Scalar>(&self, space: &PhiSpace<T>, k: usize) -> Result<Vec<StepFunction<T>>> {
        let grid = space.grid().clone();
        let m = grid.cells();
        match *self {
            SeedFamily::Legendre => {
                if 4 * k > m {
                    return Err(Error::config(
                        "basis_cells",
                        format!("Legendre seeds need at least 4K = {} cells, grid has {m}", 4 * k),
                    ));
                }
                let horizon = grid.horizon();
                let two = T::lit(2.0);
                let mut columns = vec![Vec::with_capacity(m); k];
                for cell in 0..m {
                    let (a, b) = grid.cell(cell);
                    let x = (a + b) / horizon - T::one();
                    // P_0 = 1, P_1 = x, (j+1) P_{j+1} = (2j+1) x P_j − j P_{j−1}
                    let (mut prev, mut cur) = (T::one(), x);
                    for (j, col) in columns.iter_mut().enumerate() {
                        let value = match j {
                            0 => T::one(),
                            1 => x,
                            _ => {
                                let jj = T::from_usize_lossy(j - 1);
                                let next = ((two * jj + T::one()) * x * cur - jj * prev) / (jj + T::one());
                                prev = cur;
                                cur = next;
                                next
                            }
                        };
                        col.push(value);
                    }
                }
                columns
                    .into_iter()
                    .map(|v| StepFunction::new(grid.clone(), v))
                    .collect()
            }
            SeedFamily::Indicator { cells } => {
                if cells == 0 || m % cells != 0 {
                    return Err(Error::config(
                        "seed_family.cells",
                        format!("{cells} blocks do not divide {m} grid cells"),
                    ));
                }
                if k > cells {
                    return Err(Error::NotEnoughSeeds {
                        requested: k,
                        available: cells,
                    });
                }
                let width = m / cells;
                Ok((0..k)
                    .map(|j| StepFunction::indicator(grid.clone(), j * width, (j + 1) * width))
                    .collect())
            }
        }
    }
}

/// Orthonormal family `e_1 … e_K` of the φ-space with its Cameron–Martin table
/// `cm(k, n) = ⟨e_k, χ_[0,τ_n]⟩_φ`.
#[derive(Debug, Clone)]
pub struct PhiBasis<T> {
    space: Arc<PhiSpace<T>>,
    vectors: Vec<StepFunction<T>>,
    /// `G·e_k`, so that `⟨f, e_k⟩_φ = f · weighted[k]`.
    weighted: Vec<Vec<T>>,
    cm: Vec<Vec<T>>,
}

const PIVOT_CUTOFF: f64 = 1e-12;

/// Modified Gram–Schmidt under `⟨·,·⟩_φ`, with one full reorthogonalization sweep.
pub fn gram_schmidt<T: Scalar>(
    space: &Arc<PhiSpace<T>>,
    seeds: &[StepFunction<T>],
    k: usize,
) -> Result<PhiBasis<T>> {
    if k > seeds.len() {
        return Err(Error::NotEnoughSeeds {
            requested: k,
            available: seeds.len(),
        });
    }
    let gram = space.gram();
    let mut vectors: Vec<StepFunction<T>> = Vec::with_capacity(k);
    let mut weighted: Vec<Vec<T>> = Vec::with_capacity(k);
    for (index, seed) in seeds.iter().take(k).enumerate() {
        space.check(seed)?;
        let mut v = seed.values().to_vec();
        let initial = space.inner_values(&v, &v).sqrt();
        for _sweep in 0..2 {
            for (e, ge) in vectors.iter().zip(&weighted) {
                let c = dot(&v, ge);
                for (vi, &ei) in v.iter_mut().zip(e.values()) {
                    *vi -= c * ei;
                }
            }
        }
        let gv = gram.apply(&v);
        let norm = dot(&v, &gv).max(T::zero()).sqrt();
        if !(norm > T::lit(PIVOT_CUTOFF) * initial) || norm == T::zero() {
            return Err(Error::DegenerateFamily { index });
        }
        let inv = norm.recip();
        v.iter_mut().for_each(|x| *x *= inv);
        weighted.push(gv.into_iter().map(|x| x * inv).collect());
        vectors.push(StepFunction::new(space.grid().clone(), v)?);
    }
    Ok(PhiBasis::assemble(space.clone(), vectors, weighted))
}

impl<T: Scalar> PhiBasis<T> {
    fn assemble(space: Arc<PhiSpace<T>>, vectors: Vec<StepFunction<T>>, weighted: Vec<Vec<T>>) -> Self {
        let cm = weighted
            .iter()
            .map(|ge| {
                let mut acc = T::zero();
                std::iter::once(T::zero())
                    .chain(ge.iter().map(|&x| {
                        acc += x;
                        acc
                    }))
                    .collect()
            })
            .collect();
        Self {
            space,
            vectors,
            weighted,
            cm,
        }
    }

    /// Builds `k` vectors from the given seed family.
    pub fn from_family(space: &Arc<PhiSpace<T>>, family: SeedFamily, k: usize) -> Result<Self> {
        let seeds = family.seeds(space, k)?;
        gram_schmidt(space, &seeds, k)
    }

    #[inline]
    pub fn space(&self) -> &Arc<PhiSpace<T>> {
        &self.space
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    #[inline]
    pub fn vectors(&self) -> &[StepFunction<T>] {
        &self.vectors
    }

    /// `cm(k, n) = ⟨e_k, χ_[0,τ_n]⟩_φ`, `n` a grid index.
    #[inline]
    pub fn cm(&self, k: usize, n: usize) -> T {
        self.cm[k][n]
    }

    /// `G·e_k`.
    pub(crate) fn weighted(&self, k: usize) -> &[T] {
        &self.weighted[k]
    }

    pub fn cm_row(&self, k: usize) -> &[T] {
        &self.cm[k]
    }

    /// The first `k` vectors. Gram–Schmidt is sequential, so this equals the basis
    /// built from the first `k` seeds.
    pub fn prefix(&self, k: usize) -> Self {
        let k = k.min(self.len());
        Self {
            space: self.space.clone(),
            vectors: self.vectors[..k].to_vec(),
            weighted: self.weighted[..k].to_vec(),
            cm: self.cm[..k].to_vec(),
        }
    }

    /// `⟨f, e_k⟩_φ` for every `k`.
    pub fn coefficients(&self, f: &StepFunction<T>) -> Result<Vec<T>> {
        self.space.check(f)?;
        Ok(self.weighted.iter().map(|ge| dot(f.values(), ge)).collect())
    }

    /// Orthogonal projection of `f` on the span.
    pub fn project(&self, f: &StepFunction<T>) -> Result<StepFunction<T>> {
        let coeffs = self.coefficients(f)?;
        let mut out = vec![T::zero(); f.values().len()];
        for (c, e) in coeffs.iter().zip(&self.vectors) {
            for (o, &v) in out.iter_mut().zip(e.values()) {
                *o += *c * v;
            }
        }
        StepFunction::new(self.space.grid().clone(), out)
    }

    /// `max_{j,k} |⟨e_j, e_k⟩_φ − δ_jk|`.
    pub fn orthonormality_defect(&self) -> T {
        let mut worst = T::zero();
        for (j, ej) in self.vectors.iter().enumerate() {
            for (k, gk) in self.weighted.iter().enumerate() {
                let target = if j == k { T::one() } else { T::zero() };
                worst = worst.max((dot(ej.values(), gk) - target).abs());
            }
        }
        worst
    }

    /// `Σ_{k<K} cm(k,s)·cm(k,t)`: covariance of the truncated expansion at grid
    /// indices `s`, `t`.
    pub fn partial_sum_covariance(&self, k: usize, s: usize, t: usize) -> T {
        self.cm.iter().take(k).map(|row| row[s] * row[t]).sum()
    }

    /// Dumps the vectors as `k,cell,value` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "k,cell,value")?;
        for (k, e) in self.vectors.iter().enumerate() {
            for (cell, v) in e.values().iter().enumerate() {
                writeln!(out, "{k},{cell},{:.17e}", v.to_f64_lossy())?;
            }
        }
        Ok(())
    }

    /// Reloads a dump written by [`PhiBasis::write_csv`] on the same space.
    pub fn read_csv<R: BufRead>(space: &Arc<PhiSpace<T>>, input: R) -> Result<Self> {
        let m = space.grid().cells();
        let mut rows: Vec<Vec<Option<T>>> = Vec::new();
        for (line_no, line) in input.lines().enumerate() {
            let line = line?;
            if line_no == 0 {
                if line.trim() != "k,cell,value" {
                    return Err(Error::BasisCsv(format!("unexpected header `{line}`")));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::BasisCsv(format!("line {}: `{line}`", line_no + 1));
            let mut parts = line.split(',');
            let k: usize = parts.next().and_then(|s| s.trim().parse().ok()).ok_or_else(bad)?;
            let cell: usize = parts.next().and_then(|s| s.trim().parse().ok()).ok_or_else(bad)?;
            let value: f64 = parts.next().and_then(|s| s.trim().parse().ok()).ok_or_else(bad)?;
            if cell >= m {
                return Err(bad());
            }
            if rows.len() <= k {
                rows.resize(k + 1, vec![None; m]);
            }
            rows[k][cell] = Some(T::lit(value));
        }
        let gram = space.gram();
        let mut vectors = Vec::with_capacity(rows.len());
        let mut weighted = Vec::with_capacity(rows.len());
        for (k, row) in rows.into_iter().enumerate() {
            let values: Vec<T> = row
                .into_iter()
                .collect::<Option<_>>()
                .ok_or_else(|| Error::BasisCsv(format!("vector {k} is missing cells")))?;
            weighted.push(gram.apply(&values));
            vectors.push(StepFunction::new(space.grid().clone(), values)?);
        }
        Ok(Self::assemble(space.clone(), vectors, weighted))
    }
}
