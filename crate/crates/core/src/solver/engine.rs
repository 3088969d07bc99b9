use std::collections::HashMap;

use super::descriptor::ShiftDescriptor;
use super::lattice::{Drive, ExponentTables, Lattice};
use super::problem::ProblemSpec;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Path values at the solver nodes plus traversal diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSolution<T> {
    /// `values[n][i] = X_i(t_n)`.
    pub values: Vec<Vec<T>>,
    /// Distinct `(node, descriptor)` pairs evaluated.
    pub memo_size: usize,
    /// Longest interval chain seen in any descriptor.
    pub max_chain_depth: usize,
}

impl<T: Scalar> PathSolution<T> {
    pub fn value(&self, n: usize, i: usize) -> T {
        self.values[n][i]
    }

    pub fn terminal(&self) -> &[T] {
        self.values.last().expect("non-empty path")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Per-component chains when the drift allows it, memoized lattice otherwise.
    Auto,
    /// Always run the memoized descriptor recursion.
    Memoized,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub max_coupled_steps: usize,
    pub strategy: Strategy,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_coupled_steps: 16,
            strategy: Strategy::Auto,
        }
    }
}

/// Value of one component at a lattice point, just before and just after
/// the drift contribution of a node located there.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainPoint<T> {
    pub pre: T,
    pub post: T,
    pub dpre: Vec<T>,
    pub dpost: Vec<T>,
}

/// Mild-solution evaluator for one exponent model (truncated or exact).
#[derive(Debug, Clone)]
pub struct Engine<T: Scalar> {
    spec: ProblemSpec<T>,
    lattice: Lattice<T>,
    tables: ExponentTables<T>,
    options: SolverOptions,
}

impl<T: Scalar> Engine<T> {
    pub fn new(spec: ProblemSpec<T>, lattice: Lattice<T>, tables: ExponentTables<T>, options: SolverOptions) -> Self {
        assert_eq!(tables.points(), lattice.len(), "tables built on another lattice");
        assert_eq!(tables.components(), spec.dim(), "one table per component");
        Self {
            spec,
            lattice,
            tables,
            options,
        }
    }

    pub fn spec(&self) -> &ProblemSpec<T> {
        &self.spec
    }

    pub fn lattice(&self) -> &Lattice<T> {
        &self.lattice
    }

    pub fn tables(&self) -> &ExponentTables<T> {
        &self.tables
    }

    fn uses_chains(&self) -> bool {
        self.options.strategy == Strategy::Auto && self.spec.is_decoupled()
    }

    pub fn solve(&self, drive: &Drive<T>) -> Result<PathSolution<T>> {
        if self.uses_chains() {
            Ok(self.solve_chains(drive))
        } else {
            self.solve_memoized(drive)
        }
    }

    /// Every descriptor reachable from the empty one is a single interval
    /// `[t_m, top]`, and the exponent along it telescopes into a potential
    /// `ψ(p) = W(p) − F(p,top) + ½F(p,p)`, so the recursion collapses to one
    /// running sum per evaluation point.
    fn solve_chains(&self, drive: &Drive<T>) -> PathSolution<T> {
        let d = self.spec.dim();
        let nodes = self.lattice.nodes_index();
        let mut values = vec![vec![T::zero(); d]; nodes.len()];
        for i in 0..d {
            let w = drive.component(i);
            for (n, &q) in nodes.iter().enumerate() {
                values[n][i] = self.chain(i, w, q, &[]).pre;
            }
        }
        PathSolution {
            values,
            memo_size: nodes.len() * d,
            max_chain_depth: usize::from(nodes.len() > 1),
        }
    }

    /// Component `i` at lattice point `top`, with forward derivatives along
    /// the drive directions `dw` (each a lattice vector `∂W_i/∂z_k`).
    pub fn chain(&self, i: usize, w: &[T], top: usize, dw: &[&[T]]) -> ChainPoint<T> {
        self.chain_with(i, |p| w[p], top, dw.len(), |k, p| dw[k][p], |_, _| {})
    }

    /// Values `A_m` of component `i` at the nodes strictly before `top`,
    /// each translated by `χ_[t_m, top]σ_i`, as used in the recursion at `top`.
    pub fn translated_nodes(&self, i: usize, w: &[T], top: usize) -> Vec<T> {
        let mut out = Vec::new();
        self.chain_with(i, |p| w[p], top, 0, |_, _| T::zero(), |_, a| out.push(a));
        out
    }

    /// Chain evaluation with the drive supplied pointwise. `w` and `dw` are
    /// only queried at nodes before `top` and at `top`; `visit(m, A_m)` sees
    /// every node value on the way.
    pub fn chain_with<W, D, V>(&self, i: usize, w: W, top: usize, kk: usize, dw: D, mut visit: V) -> ChainPoint<T>
    where
        W: Fn(usize) -> T,
        D: Fn(usize, usize) -> T,
        V: FnMut(usize, T),
    {
        let dt = self.lattice.step();
        let psi = |p: usize| w(p) - self.tables.cross(i, p, top) + T::lit(0.5) * self.tables.cross(i, p, p);
        let drift = self.spec.drift();
        let mut s = self.spec.init()[i];
        let mut ds = vec![T::zero(); kk];
        let mut top_node = None;
        for (m, &q) in self.lattice.nodes_index().iter().enumerate() {
            if q >= top {
                if q == top {
                    top_node = Some(m);
                }
                break;
            }
            let e = psi(q).exp();
            let a = e * s;
            visit(m, a);
            let tm = self.lattice.node_time(m);
            let f = drift.component(i, tm, a);
            let einv = T::one() / e;
            if kk > 0 {
                let fp = drift.component_derivative(i, tm, a).unwrap_or_else(T::zero);
                for (k, dsk) in ds.iter_mut().enumerate() {
                    let dwq = dw(k, q);
                    let da = e * (dwq * s + *dsk);
                    *dsk += dt * einv * (fp * da - f * dwq);
                }
            }
            s += dt * f * einv;
        }
        let e = psi(top).exp();
        let pre = e * s;
        let dpre: Vec<T> = ds.iter().enumerate().map(|(k, &dsk)| e * (dw(k, top) * s + dsk)).collect();
        match top_node {
            Some(m) => {
                let tm = self.lattice.node_time(m);
                let f = drift.component(i, tm, pre);
                let fp = if kk > 0 {
                    drift.component_derivative(i, tm, pre).unwrap_or_else(T::zero)
                } else {
                    T::zero()
                };
                ChainPoint {
                    pre,
                    post: pre + dt * f,
                    dpost: dpre.iter().map(|&v| v + dt * fp * v).collect(),
                    dpre,
                }
            }
            None => ChainPoint {
                pre,
                post: pre,
                dpost: dpre.clone(),
                dpre,
            },
        }
    }

    /// `log E_i(r, t)` without translation.
    pub fn log_weight(&self, i: usize, w: &[T], r: usize, t: usize) -> T {
        w[t] - w[r] - T::lit(0.5) * self.tables.norm_sq(i, r, t)
    }

    /// `∂X_i(t_n)/∂z_k` for the drive derivatives `dw[i][k]`.
    pub fn sensitivities(&self, drive: &Drive<T>, dw: &[Vec<Vec<T>>]) -> Result<Vec<Vec<Vec<T>>>> {
        if !self.spec.is_decoupled() {
            return Err(Error::Unsupported("sensitivities need d = 1 or a decoupled drift".into()));
        }
        let d = self.spec.dim();
        if self.spec.drift().component_derivative(0, T::zero(), T::zero()).is_none() {
            return Err(Error::Unsupported("drift has no declared derivative".into()));
        }
        let nodes = self.lattice.nodes_index();
        let mut out = vec![vec![Vec::new(); d]; nodes.len()];
        for i in 0..d {
            let rows: Vec<&[T]> = dw[i].iter().map(Vec::as_slice).collect();
            for (n, &q) in nodes.iter().enumerate() {
                out[n][i] = self.chain(i, drive.component(i), q, &rows).dpre;
            }
        }
        Ok(out)
    }

    fn solve_memoized(&self, drive: &Drive<T>) -> Result<PathSolution<T>> {
        let steps = self.lattice.steps();
        if !self.spec.is_decoupled() && steps > self.options.max_coupled_steps {
            let d = self.spec.dim() as f64;
            return Err(Error::ComplexityGuard {
                steps,
                limit: self.options.max_coupled_steps,
                estimated_nodes: d * steps as f64 * 2f64.powi(steps as i32),
            });
        }
        let mut memo = Memo {
            engine: self,
            drive,
            table: HashMap::new(),
            max_depth: 0,
            scratch: vec![T::zero(); self.spec.dim()],
        };
        let empty = ShiftDescriptor::empty(self.spec.dim());
        let values = (0..=steps).map(|n| memo.eval(n, &empty)).collect();
        Ok(PathSolution {
            values,
            memo_size: memo.table.len(),
            max_chain_depth: memo.max_depth,
        })
    }

    /// `log E_i(t_r, t_t)` under the translation described by `desc`.
    fn log_exponential(&self, drive: &Drive<T>, i: usize, r: usize, t: usize, desc: &ShiftDescriptor) -> T {
        let w = drive.component(i);
        let shift: T = desc
            .component(i)
            .iter()
            .map(|&(a, b)| self.tables.overlap(i, r, t, a, b))
            .sum();
        w[t] - w[r] - shift - T::lit(0.5) * self.tables.norm_sq(i, r, t)
    }
}

struct Memo<'a, T: Scalar> {
    engine: &'a Engine<T>,
    drive: &'a Drive<T>,
    table: HashMap<(usize, ShiftDescriptor), Vec<T>>,
    max_depth: usize,
    scratch: Vec<T>,
}

impl<T: Scalar> Memo<'_, T> {
    fn eval(&mut self, n: usize, desc: &ShiftDescriptor) -> Vec<T> {
        if let Some(v) = self.table.get(&(n, desc.clone())) {
            return v.clone();
        }
        self.max_depth = self.max_depth.max(desc.depth());
        let eng = self.engine;
        let nodes = eng.lattice.nodes_index();
        let qn = nodes[n];
        let dt = eng.lattice.step();
        let d = eng.spec.dim();
        let mut out = vec![T::zero(); d];
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = eng.spec.init()[i] * eng.log_exponential(self.drive, i, nodes[0], qn, desc).exp();
            for (m, &qm) in nodes[..n].iter().enumerate() {
                let child = desc.with_interval(i, qm, qn);
                let a = self.eval(m, &child);
                eng.spec.drift().eval(eng.lattice.node_time(m), &a, &mut self.scratch);
                acc += dt * self.scratch[i] * eng.log_exponential(self.drive, i, qm, qn, desc).exp();
            }
            *o = acc;
        }
        self.table.insert((n, desc.clone()), out.clone());
        out
    }
}
