//! Joint Gaussian model of every fractional Wiener integral the solvers consume.
//!
//! All kernels are step functions on one grid, so each Wiener integral is a
//! linear functional of the `M` cell integrals `I(χ_cell)`, whose covariance is
//! the φ-Gram matrix. Sampling goes through that generator: `draw = C·L·ξ`,
//! where `C` holds the kernel values and `L` the Cholesky factor of the Gram.
//! Linearly dependent kernels (a basis spanning some of the other kernels)
//! therefore stay exactly dependent in every draw.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::phi::{PhiBasis, PhiSpace, StepFunction};
use crate::scalar::Scalar;

/// Jitter values tried in order when factoring a covariance.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-12, 1e-10, 1e-8];

/// Kernels per independent fBm component.
#[derive(Debug, Clone)]
pub struct GaussianFrame<T> {
    components: Vec<Vec<StepFunction<T>>>,
}

impl<T: Scalar> GaussianFrame<T> {
    pub fn new(components: Vec<Vec<StepFunction<T>>>) -> Self {
        Self { components }
    }

    pub fn components(&self) -> &[Vec<StepFunction<T>>] {
        &self.components
    }

    pub fn width(&self) -> usize {
        self.components.iter().map(Vec::len).sum()
    }

    /// Offset of component `i` inside a draw vector.
    pub fn offset(&self, i: usize) -> usize {
        self.components[..i].iter().map(Vec::len).sum()
    }
}

/// Lower-triangular Cholesky factor (row-major) of `a + jitter·I`, trying the
/// jitter ladder in order. Returns the factor and the jitter that worked.
pub fn cholesky_jittered<T: Scalar>(a: &[T], n: usize) -> Result<(Vec<T>, T)> {
    let scale = (0..n).fold(T::zero(), |acc, i| acc.max(a[i * n + i].abs()));
    for &jitter in &JITTER_LADDER {
        let jitter = T::lit(jitter) * scale.max(T::min_positive_value());
        if let Some(l) = cholesky(a, n, jitter) {
            return Ok((l, jitter));
        }
    }
    Err(Error::IllConditionedFrame {
        max_jitter: JITTER_LADDER[JITTER_LADDER.len() - 1],
    })
}

/// Factors in `f64` whatever the scalar type; the Gram matrices are small.
fn cholesky<T: Scalar>(a: &[T], n: usize, jitter: T) -> Option<Vec<T>> {
    let mut m = DMatrix::from_fn(n, n, |i, j| a[i * n + j].to_f64_lossy());
    for i in 0..n {
        m[(i, i)] += jitter.to_f64_lossy();
    }
    let l = Cholesky::new(m)?.unpack();
    Some((0..n * n).map(|p| T::lit(l[(p / n, p % n)])).collect())
}

/// Covariance of a frame plus the generator factor used for sampling.
#[derive(Debug, Clone)]
pub struct CovarianceModel<T> {
    width: usize,
    cells: usize,
    /// Full `width × width` covariance (block diagonal across components).
    matrix: Vec<T>,
    /// Per component, `kernels × cells` matrix `C·L`.
    factors: Vec<Vec<T>>,
    kernel_counts: Vec<usize>,
    jitter_used: T,
}

/// Covariance `⟨kernel_p, kernel_q⟩_φ` within a component, zero across
/// components; factored through the Gram's Cholesky factor.
pub fn build_covariance<T: Scalar>(space: &Arc<PhiSpace<T>>, frame: &GaussianFrame<T>) -> Result<CovarianceModel<T>> {
    let m = space.grid().cells();
    let (chol, jitter_used) = cholesky_jittered(space.gram().as_slice(), m)?;
    let width = frame.width();
    let mut matrix = vec![T::zero(); width * width];
    let mut factors = Vec::with_capacity(frame.components.len());
    let mut kernel_counts = Vec::with_capacity(frame.components.len());
    let mut offset = 0;
    for kernels in &frame.components {
        for f in kernels {
            space.check(f)?;
        }
        let weighted: Vec<Vec<T>> = kernels.iter().map(|f| space.gram().apply(f.values())).collect();
        for (p, gp) in weighted.iter().enumerate() {
            for (q, fq) in kernels.iter().enumerate() {
                let v = crate::phi::dot_values(gp, fq.values());
                matrix[(offset + p) * width + offset + q] = v;
            }
        }
        // factor row p = values_p · L
        let mut factor = vec![T::zero(); kernels.len() * m];
        for (p, f) in kernels.iter().enumerate() {
            let row = &mut factor[p * m..(p + 1) * m];
            for (c, &v) in f.values().iter().enumerate() {
                if v == T::zero() {
                    continue;
                }
                for (j, r) in row.iter_mut().enumerate().take(c + 1) {
                    *r += v * chol[c * m + j];
                }
            }
        }
        factors.push(factor);
        kernel_counts.push(kernels.len());
        offset += kernels.len();
    }
    Ok(CovarianceModel {
        width,
        cells: m,
        matrix,
        factors,
        kernel_counts,
        jitter_used,
    })
}

impl<T: Scalar> CovarianceModel<T>
where
    StandardNormal: Distribution<T>,
{
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn entry(&self, p: usize, q: usize) -> T {
        self.matrix[p * self.width + q]
    }

    pub fn jitter_used(&self) -> T {
        self.jitter_used
    }

    /// `factor · factorᵀ` restricted to one entry; equals `entry(p,q)` up to the
    /// jitter contribution.
    pub fn reconstructed(&self, p: usize, q: usize) -> T {
        let (ci, pi) = self.locate(p);
        let (cj, qj) = self.locate(q);
        if ci != cj {
            return T::zero();
        }
        let m = self.cells;
        let f = &self.factors[ci];
        crate::phi::dot_values(&f[pi * m..(pi + 1) * m], &f[qj * m..(qj + 1) * m])
    }

    fn locate(&self, mut p: usize) -> (usize, usize) {
        for (c, &n) in self.kernel_counts.iter().enumerate() {
            if p < n {
                return (c, p);
            }
            p -= n;
        }
        panic!("index out of range")
    }

    /// Draw number `index` of the stream identified by `seed`. The content
    /// depends only on `(seed, index)`.
    pub fn draw_into(&self, seed: u64, index: u64, out: &mut [T]) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let m = self.cells;
        let mut xi = vec![T::zero(); m];
        let mut offset = 0;
        for (factor, &count) in self.factors.iter().zip(&self.kernel_counts) {
            for x in xi.iter_mut() {
                *x = StandardNormal.sample(&mut rng);
            }
            for p in 0..count {
                out[offset + p] = crate::phi::dot_values(&factor[p * m..(p + 1) * m], &xi);
            }
            offset += count;
        }
    }
}

/// `n` seeded draws aligned with the frame's kernel order.
#[derive(Debug, Clone)]
pub struct SampleBatch<T> {
    pub seed: u64,
    pub count: usize,
    width: usize,
    values: Vec<T>,
}

impl<T: Scalar> SampleBatch<T> {
    pub fn draw(&self, j: usize) -> &[T] {
        &self.values[j * self.width..(j + 1) * self.width]
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn iter(&self) -> impl Iterator<Item = &[T]> {
        self.values.chunks(self.width.max(1)).take(self.count)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# seed={}", self.seed)?;
        for draw in self.iter() {
            let line: Vec<String> = draw.iter().map(|v| format!("{:.17e}", v.to_f64_lossy())).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

pub fn sample<T: Scalar>(model: &CovarianceModel<T>, n: usize, seed: u64) -> SampleBatch<T>
where
    StandardNormal: Distribution<T>,
{
    let width = model.width();
    let mut values = vec![T::zero(); n * width];
    if width > 0 {
        values
            .par_chunks_mut(width)
            .enumerate()
            .for_each(|(j, out)| model.draw_into(seed, j as u64, out));
    }
    SampleBatch {
        seed,
        count: n,
        width,
        values,
    }
}

/// Covariance of the `K`-term truncated expansion at grid indices `s`, `t`.
pub fn cm_partial_sum_covariance<T: Scalar>(basis: &PhiBasis<T>, k: usize, s: usize, t: usize) -> T {
    basis.partial_sum_covariance(k, s, t)
}
