//! Reproducible experiment runs: JSON configuration, orchestration of the
//! analyses, CSV/manifest output, and the built-in self test.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    appendix_bound_check, fokker_planck_residual, gronwall_envelope, l1_convergence, BoundCheckRecord,
    ConvergenceReport, FpOptions, FpReport, HolderExponents, Ladder, TestFunction,
};
use crate::error::{Error, Result};
use crate::phi::{Hurst, PhiBasis, PhiSpace, SeedFamily, StepFunction, TimeGrid};
use crate::solver::{DriftModel, ProblemSpec, SolverGrid};

pub const SCHEMA_VERSION: u32 = 1;
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const SEED_ENV: &str = "FRACWICK_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub problem: ProblemConfig,
    pub discretization: DiscretizationConfig,
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub analyses: AnalysesConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub d: usize,
    pub drift: DriftModel,
    /// Per component: a constant, or one value per basis-grid cell.
    pub sigma: Vec<SigmaConfig>,
    pub c: Vec<f64>,
    pub hurst: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaConfig {
    Constant(f64),
    Cells(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationConfig {
    /// `M`, cells of the uniform basis grid.
    pub basis_cells: usize,
    /// `N`, solver steps over the horizon.
    pub steps: usize,
    pub k_ladder: Vec<usize>,
    #[serde(default = "yes")]
    pub exact_final_rung: bool,
    #[serde(default = "legendre")]
    pub seed_family: SeedFamily,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub n: usize,
    pub seed: u64,
    #[serde(default = "one")]
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysesConfig {
    #[serde(default = "yes")]
    pub convergence: bool,
    #[serde(default = "yes")]
    pub gronwall: bool,
    #[serde(default)]
    pub bound: Option<BoundConfig>,
    #[serde(default)]
    pub fokker_planck: Option<FpConfig>,
}

impl Default for AnalysesConfig {
    fn default() -> Self {
        Self {
            convergence: true,
            gronwall: true,
            bound: None,
            fokker_planck: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConfig {
    /// `[p, p1, p2]` triples.
    pub exponents: Vec<[f64; 3]>,
    pub k: Vec<usize>,
    #[serde(default)]
    pub s: f64,
    /// Defaults to half the horizon.
    #[serde(default)]
    pub t: Option<f64>,
    #[serde(default)]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FpConfig {
    pub k: usize,
    pub test_functions: Vec<String>,
    #[serde(default = "hundred")]
    pub bins: usize,
    #[serde(default)]
    pub n: Option<usize>,
}

fn legendre() -> SeedFamily {
    SeedFamily::Legendre
}

fn yes() -> bool {
    true
}

fn one() -> usize {
    1
}

fn hundred() -> usize {
    100
}

impl ExperimentConfig {
    /// Parses and validates; errors name the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." { "<root>".to_string() } else { path };
            Error::config(field, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// The configuration shipped as `configs/default.json`.
    pub fn default_run() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            problem: ProblemConfig {
                d: 1,
                drift: DriftModel::Sin { amplitude: 1.0 },
                sigma: vec![SigmaConfig::Constant(0.5)],
                c: vec![1.0],
                hurst: 0.7,
                horizon: 1.0,
            },
            discretization: DiscretizationConfig {
                basis_cells: 128,
                steps: 16,
                k_ladder: vec![1, 2, 4, 8, 16],
                exact_final_rung: true,
                seed_family: SeedFamily::Legendre,
            },
            sampling: SamplingConfig {
                n: 10_000,
                seed: 42,
                workers: 1,
            },
            analyses: AnalysesConfig {
                convergence: true,
                gronwall: true,
                bound: Some(BoundConfig {
                    exponents: vec![[1.0, 2.0, 2.0], [2.0, 4.0, 4.0]],
                    k: vec![1, 2, 4, 8],
                    s: 0.0,
                    t: None,
                    n: Some(100_000),
                }),
                fokker_planck: Some(FpConfig {
                    k: 4,
                    test_functions: vec!["bump_center".into(), "bump_early".into(), "bump_late".into()],
                    bins: 100,
                    n: Some(100_000),
                }),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.problem;
        let d = &self.discretization;
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        if p.d == 0 {
            return Err(Error::config("problem.d", "need at least one component"));
        }
        if p.sigma.len() != p.d {
            return Err(Error::config("problem.sigma", format!("{} entries for d = {}", p.sigma.len(), p.d)));
        }
        if p.c.len() != p.d {
            return Err(Error::config("problem.c", format!("{} entries for d = {}", p.c.len(), p.d)));
        }
        if !(p.hurst > 0.5 && p.hurst < 1.0) {
            return Err(Error::config("problem.hurst", format!("{} is outside (1/2, 1)", p.hurst)));
        }
        if !(p.horizon > 0.0 && p.horizon.is_finite()) {
            return Err(Error::config("problem.horizon", "must be positive"));
        }
        for (i, s) in p.sigma.iter().enumerate() {
            let ok = match s {
                SigmaConfig::Constant(v) => v.is_finite(),
                SigmaConfig::Cells(v) => v.len() == d.basis_cells && v.iter().all(|x| x.is_finite()),
            };
            if !ok {
                return Err(Error::config(
                    format!("problem.sigma[{i}]"),
                    format!("must be a finite constant or {} finite cell values", d.basis_cells),
                ));
            }
        }
        match p.drift {
            DriftModel::TanhScaled { scale, .. } if !(scale > 0.0) => {
                return Err(Error::config("problem.drift.scale", "must be positive"));
            }
            _ => {}
        }
        if d.basis_cells == 0 {
            return Err(Error::config("discretization.basis_cells", "must be positive"));
        }
        if d.steps == 0 {
            return Err(Error::config("discretization.steps", "N must be at least 1"));
        }
        if d.basis_cells % d.steps != 0 {
            return Err(Error::config(
                "discretization.steps",
                format!("N = {} must divide basis_cells = {}", d.steps, d.basis_cells),
            ));
        }
        if d.k_ladder.is_empty() || d.k_ladder.windows(2).any(|w| w[1] <= w[0]) || d.k_ladder[0] == 0 {
            return Err(Error::config("discretization.k_ladder", "must be strictly increasing positive integers"));
        }
        let capacity = match d.seed_family {
            SeedFamily::Legendre => d.basis_cells / 4,
            SeedFamily::Indicator { cells } => {
                if cells == 0 || d.basis_cells % cells != 0 {
                    return Err(Error::config(
                        "discretization.seed_family.cells",
                        format!("{cells} blocks do not divide basis_cells = {}", d.basis_cells),
                    ));
                }
                cells
            }
        };
        let nested_max = if d.exact_final_rung {
            if *d.k_ladder.last().unwrap() != d.steps {
                return Err(Error::config(
                    "discretization.k_ladder",
                    format!("the exact-projection rung must equal N = {}", d.steps),
                ));
            }
            d.k_ladder.iter().rev().nth(1).copied().unwrap_or(0)
        } else {
            *d.k_ladder.last().unwrap()
        };
        if *d.k_ladder.last().unwrap() > d.basis_cells {
            return Err(Error::config("discretization.k_ladder", "K must not exceed basis_cells"));
        }
        if nested_max > capacity {
            return Err(Error::config(
                "discretization.k_ladder",
                format!("the seed family supports K ≤ {capacity} on {} cells", d.basis_cells),
            ));
        }
        if self.sampling.n < 100 {
            return Err(Error::config("sampling.n", "need at least 100 samples"));
        }
        if self.sampling.workers == 0 {
            return Err(Error::config("sampling.workers", "must be at least 1"));
        }
        if let Some(b) = &self.analyses.bound {
            for (j, e) in b.exponents.iter().enumerate() {
                HolderExponents::new(e[0], e[1], e[2]).map_err(|err| {
                    Error::config(format!("analyses.bound.exponents[{j}] (p1/p2)"), err.to_string())
                })?;
            }
            if b.k.is_empty() || b.k.iter().any(|&k| k == 0 || k > capacity) {
                return Err(Error::config("analyses.bound.k", format!("each K must lie in 1..={capacity}")));
            }
            let t = b.t.unwrap_or(p.horizon / 2.0);
            if !(b.s >= 0.0 && b.s < t && t <= p.horizon) {
                return Err(Error::config("analyses.bound.t", format!("need 0 ≤ s < t ≤ T, got [{}, {t}]", b.s)));
            }
            if b.n.is_some_and(|n| n < 100) {
                return Err(Error::config("analyses.bound.n", "need at least 100 samples"));
            }
        }
        if let Some(f) = &self.analyses.fokker_planck {
            if p.d != 1 {
                return Err(Error::config("analyses.fokker_planck", "only available for d = 1"));
            }
            if f.k == 0 || f.k > capacity {
                return Err(Error::config("analyses.fokker_planck.k", format!("must lie in 1..={capacity}")));
            }
            for (j, id) in f.test_functions.iter().enumerate() {
                if TestFunction::preset(id).is_none() {
                    return Err(Error::config(
                        format!("analyses.fokker_planck.test_functions[{j}]"),
                        format!("unknown test function `{id}`"),
                    ));
                }
            }
            if f.bins < 10 {
                return Err(Error::config("analyses.fokker_planck.bins", "need at least 10 bins"));
            }
            let n = f.n.unwrap_or(self.sampling.n);
            if n / f.bins < crate::analysis::MIN_PER_BIN {
                return Err(Error::config(
                    "analyses.fokker_planck.bins",
                    format!("{} samples per bin (< {})", n / f.bins, crate::analysis::MIN_PER_BIN),
                ));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring the worker count.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.sampling.workers = 0;
        let text = serde_json::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn space(&self) -> Result<Arc<PhiSpace<f64>>> {
        let grid = TimeGrid::uniform(self.problem.horizon, self.discretization.basis_cells)?;
        Ok(PhiSpace::new(Arc::new(grid), Hurst::new(self.problem.hurst)?))
    }

    pub fn problem(&self) -> Result<ProblemSpec<f64>> {
        let space = self.space()?;
        let sigma = self
            .problem
            .sigma
            .iter()
            .map(|s| match s {
                SigmaConfig::Constant(v) => Ok(StepFunction::constant(space.grid().clone(), *v)),
                SigmaConfig::Cells(v) => StepFunction::new(space.grid().clone(), v.clone()),
            })
            .collect::<Result<Vec<_>>>()?;
        ProblemSpec::new(space, Arc::new(self.problem.drift), sigma, self.problem.c.clone())
    }

    pub fn solver_grid(&self) -> Result<SolverGrid<f64>> {
        SolverGrid::new(self.discretization.steps, self.problem.horizon)
    }
}

/// One pass/fail decision of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gate {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub artifact_version: String,
    pub timestamp: String,
    pub seed: u64,
    pub workers: usize,
    pub files: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub gates: Vec<Gate>,
    pub convergence: Option<ConvergenceReport>,
    pub bound: Vec<BoundCheckRecord>,
    pub fokker_planck: Option<FpReport>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.gates.iter().all(|g| g.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Gate> {
        self.gates.iter().filter(|g| !g.pass)
    }
}

/// Seed precedence: explicit override, then `FRACWICK_SEED`, then the config.
pub fn effective_seed(config: &ExperimentConfig, explicit: Option<u64>) -> Result<u64> {
    if let Some(s) = explicit {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::config(SEED_ENV, format!("`{v}` is not an unsigned integer"))),
        Err(_) => Ok(config.sampling.seed),
    }
}

/// Runs every enabled analysis and writes `manifest.json` plus one CSV per
/// analysis into `out`.
pub fn run(config: &ExperimentConfig, out: &Path, workers: Option<usize>, seed: Option<u64>) -> Result<RunOutcome> {
    config.validate()?;
    let mut config = config.clone();
    config.sampling.seed = effective_seed(&config, seed)?;
    if let Some(w) = workers {
        if w == 0 {
            return Err(Error::config("--workers", "must be at least 1"));
        }
        config.sampling.workers = w;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.sampling.workers)
        .build()
        .map_err(|e| Error::config("sampling.workers", e.to_string()))?;
    pool.install(|| run_inner(&config, out))
}

fn run_inner(config: &ExperimentConfig, out: &Path) -> Result<RunOutcome> {
    let hash = config.hash();
    let seed = config.sampling.seed;
    let a = &config.analyses;
    let mut files = Vec::new();
    if a.convergence {
        files.push("convergence.csv");
    }
    if a.convergence && a.gronwall {
        files.push("gronwall.csv");
    }
    if a.bound.is_some() {
        files.push("bound.csv");
    }
    if a.fokker_planck.is_some() {
        files.push("fp.csv");
    }
    fs::create_dir_all(out)?;
    let manifest = RunManifest {
        config_hash: hash.clone(),
        artifact_version: ARTIFACT_VERSION.to_string(),
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        seed,
        workers: config.sampling.workers,
        files: files.iter().map(|s| s.to_string()).collect(),
    };
    fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;

    let spec = config.problem()?;
    spec.audit(10_000, seed)?;
    let grid = config.solver_grid()?;
    let mut gates = Vec::new();

    let convergence = if a.convergence {
        let ladder = Ladder {
            ks: config.discretization.k_ladder.clone(),
            exact_final_rung: config.discretization.exact_final_rung,
            family: config.discretization.seed_family,
        };
        let report = l1_convergence(&spec, &ladder, &grid, config.sampling.n, seed)?;
        write_file(out, "convergence.csv", &convergence_csv(&report, &hash))?;
        for row in &report.rows {
            gates.push(Gate {
                name: format!("convergence.monotone[K={}]", row.k),
                pass: row.nonincreasing(2.0),
                detail: match row.increment {
                    Some(d) => format!("paired increment {:.3e} (SE {:.3e})", d.mean, d.se),
                    None => "first rung".into(),
                },
            });
            if a.gronwall {
                gates.push(Gate {
                    name: format!("gronwall.propagated[K={}]", row.k),
                    pass: row.gronwall_pass(),
                    detail: format!("error {:.3e} vs bound {:.3e}", row.l1_error, row.gronwall_bound.unwrap_or(f64::NAN)),
                });
            }
        }
        if let Some(e) = report.exact_rung_error() {
            gates.push(Gate {
                name: "convergence.exact_projection".into(),
                pass: e <= 1e-8,
                detail: format!("final-rung error {e:.3e}"),
            });
        }
        if a.gronwall {
            write_file(out, "gronwall.csv", &gronwall_csv(&report, &hash))?;
            for g in &report.gronwall {
                gates.push(Gate {
                    name: format!("gronwall.envelope[t={}]", g.t),
                    pass: g.pass,
                    detail: format!("𝓜^K {:.3e} ≤ {:.3e}", g.estimate, g.envelope),
                });
            }
        }
        Some(report)
    } else {
        None
    };

    let mut bound = Vec::new();
    if let Some(b) = &a.bound {
        let t = b.t.unwrap_or(config.problem.horizon / 2.0);
        let n = b.n.unwrap_or(config.sampling.n);
        for e in &b.exponents {
            let ex = HolderExponents::new(e[0], e[1], e[2])?;
            for &k in &b.k {
                let basis = PhiBasis::from_family(spec.space(), config.discretization.seed_family, k)?;
                for rec in appendix_bound_check(&spec, &basis, b.s, t, ex, n, seed)? {
                    gates.push(Gate {
                        name: format!("bound[p={},p1={},p2={},K={},i={}]", ex.p, ex.p1, ex.p2, k, rec.component),
                        pass: rec.pass,
                        detail: format!("lhs {:.3e} ± {:.3e} vs rhs {:.3e}", rec.lhs.mean, rec.lhs_ci(), rec.rhs),
                    });
                    bound.push(rec);
                }
            }
        }
        write_file(out, "bound.csv", &bound_csv(&bound, &hash))?;
    }

    let fokker_planck = if let Some(f) = &a.fokker_planck {
        let basis = PhiBasis::from_family(spec.space(), config.discretization.seed_family, f.k)?;
        let tests: Vec<(String, TestFunction)> = f
            .test_functions
            .iter()
            .map(|id| (id.clone(), TestFunction::preset(id).expect("validated id")))
            .collect();
        let options = FpOptions {
            bins: f.bins,
            ..FpOptions::default()
        };
        let report =
            fokker_planck_residual(&spec, &basis, &grid, &tests, f.n.unwrap_or(config.sampling.n), seed, options)?;
        write_file(out, "fp.csv", &fp_csv(&report, &hash))?;
        for r in &report.residuals {
            gates.push(Gate {
                name: format!("fp.residual[{}]", r.test_function),
                pass: r.pass,
                detail: format!("{:.3e} (SE {:.3e})", r.residual.mean, r.residual.se),
            });
        }
        for s in &report.stein {
            gates.push(Gate {
                name: format!("fp.stein[{}, k={}]", s.identity, s.k),
                pass: s.pass,
                detail: format!("{:.3e} (SE {:.3e})", s.defect.mean, s.defect.se),
            });
        }
        Some(report)
    } else {
        None
    };

    Ok(RunOutcome {
        manifest,
        gates,
        convergence,
        bound,
        fokker_planck,
    })
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<()> {
    let mut f = fs::File::create(dir.join(name))?;
    f.write_all(body.as_bytes())?;
    Ok(())
}

/// 17 significant digits.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn header(hash: &str, columns: &str) -> String {
    format!("# config_hash={hash}\n{columns}\n")
}

pub fn convergence_csv(report: &ConvergenceReport, hash: &str) -> String {
    let mut s = header(hash, "K,l1_error,std_err,n,sigma_defect_phi");
    for r in &report.rows {
        let _ = writeln!(s, "{},{},{},{},{}", r.k, num(r.l1_error), num(r.std_err), r.n, num(r.sigma_defect));
    }
    s
}

pub fn gronwall_csv(report: &ConvergenceReport, hash: &str) -> String {
    let mut s = header(hash, "t,estimate,envelope,pass");
    for g in &report.gronwall {
        let _ = writeln!(s, "{},{},{},{}", num(g.t), num(g.estimate), num(g.envelope), g.pass);
    }
    s
}

pub fn bound_csv(records: &[BoundCheckRecord], hash: &str) -> String {
    let mut s = header(hash, "p,p1,p2,K,s,t,lhs,lhs_ci,C,rhs,ratio,pass");
    for r in records {
        let e = r.exponents;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            num(e.p),
            num(e.p1),
            num(e.p2),
            r.k,
            num(r.s),
            num(r.t),
            num(r.lhs.mean),
            num(r.lhs_ci()),
            num(r.constant),
            num(r.rhs),
            num(r.ratio),
            r.pass
        );
    }
    s
}

pub fn fp_csv(report: &FpReport, hash: &str) -> String {
    let mut s = header(hash, "testfn,residual,std_err,bins,pass");
    for r in &report.residuals {
        let _ = writeln!(s, "{},{},{},{},{}", r.test_function, num(r.residual.mean), num(r.residual.se), r.bins, r.pass);
    }
    s
}

/// Writes the basis of size `k` and Gram diagnostics; returns the diagnostics.
pub fn dump_basis(config: &ExperimentConfig, k: Option<usize>, out: &Path) -> Result<serde_json::Value> {
    let space = config.space()?;
    let d = &config.discretization;
    let k = k.unwrap_or_else(|| {
        let ladder = &d.k_ladder;
        if d.exact_final_rung && ladder.len() > 1 {
            ladder[ladder.len() - 2]
        } else {
            *ladder.last().unwrap()
        }
    });
    let basis = PhiBasis::from_family(&space, d.seed_family, k)?;
    fs::create_dir_all(out)?;
    basis.write_csv(std::io::BufWriter::new(fs::File::create(out.join("basis.csv"))?))?;
    let gram = space.gram();
    let m = gram.cells();
    let diag: Vec<f64> = (0..m).map(|i| gram.entry(i, i)).collect();
    let model = crate::ensemble::build_covariance(&space, &crate::ensemble::GaussianFrame::new(vec![Vec::new()]))?;
    let info = serde_json::json!({
        "config_hash": config.hash(),
        "basis_cells": m,
        "k": k,
        "hurst": config.problem.hurst,
        "orthonormality_defect": basis.orthonormality_defect(),
        "gram_diagonal_min": diag.iter().copied().fold(f64::INFINITY, f64::min),
        "gram_diagonal_max": diag.iter().copied().fold(0.0, f64::max),
        "cholesky_jitter": model.jitter_used(),
    });
    fs::write(out.join("basis.json"), serde_json::to_string_pretty(&info)? + "\n")?;
    Ok(info)
}

/// Result of one self-test case.
#[derive(Debug, Clone)]
pub struct SelfTestCase {
    pub name: &'static str,
    pub outcome: std::result::Result<(), String>,
}

/// Closed-form and degenerate-input checks plus exact-projection coupling.
pub fn selftest() -> Vec<SelfTestCase> {
    let cases: Vec<(&'static str, fn() -> std::result::Result<(), String>)> = vec![
        ("phi_kernel", st::kernel),
        ("rect_inner", st::rect),
        ("inner_phi", st::inner),
        ("phi_transform", st::transform),
        ("gram_schmidt", st::orthogonal),
        ("build_covariance", st::covariance),
        ("sample", st::sampling),
        ("cm_partial_sum_covariance", st::partial_sum),
        ("sigma_coeffs", st::coeffs),
        ("projection_norm_sq", st::norms),
        ("wick_exponential", st::wick),
        ("translation_shift", st::translation),
        ("solve_truncated zero drift", st::zero_drift),
        ("solve_truncated/solve_reference zero sigma", st::zero_sigma),
        ("forward_sensitivities", st::sensitivities),
        ("gronwall_envelope", st::envelope),
        ("solve_reference zero drift", st::reference_zero_drift),
        ("appendix_bound_check zero sigma", st::bound_zero_sigma),
        ("appendix_bound_check full basis", st::bound_full_basis),
        ("l1_convergence zero sigma", st::convergence_zero_sigma),
        ("fokker_planck_residual constant", st::fp_constant),
        ("run: zero sigma config", st::run_zero_sigma),
        ("config: inconsistent exponents", st::config_exponents),
        ("exact projection coupling", st::exact_projection),
    ];
    cases
        .into_iter()
        .map(|(name, f)| SelfTestCase { name, outcome: f() })
        .collect()
}

mod st {
    use super::*;
    use crate::analysis::exact_rung_basis;
    use crate::ensemble::{build_covariance, cm_partial_sum_covariance, sample, GaussianFrame};
    use crate::phi::{phi_kernel, rect_inner};
    use crate::solver::{forward_sensitivities, solve_reference, solve_truncated, Lattice};
    use crate::wick::{projection_norm_sq, sigma_coeffs, translation_shift, wick_exponential};

    type Check = std::result::Result<(), String>;

    fn close(name: &str, got: f64, want: f64, tol: f64) -> Check {
        if (got - want).abs() <= tol * want.abs().max(1.0) {
            Ok(())
        } else {
            Err(format!("{name}: got {got:e}, want {want:e}"))
        }
    }

    fn e<E: std::fmt::Display>(err: E) -> String {
        err.to_string()
    }

    fn problem(drift: DriftModel, sigma: f64, c: f64, h: f64, m: usize) -> std::result::Result<ProblemSpec<f64>, String> {
        let space = PhiSpace::new(Arc::new(TimeGrid::uniform(1.0, m).map_err(e)?), Hurst::new(h).map_err(e)?);
        let sig = vec![StepFunction::constant(space.grid().clone(), sigma)];
        ProblemSpec::new(space, Arc::new(drift), sig, vec![c]).map_err(e)
    }

    pub fn kernel() -> Check {
        let h = Hurst::new(0.75).map_err(e)?;
        close("phi(0,1)", phi_kernel(0.0, 1.0, h).map_err(e)?, 0.375, 1e-15)?;
        if phi_kernel(0.5, 0.5, h).is_ok() {
            return Err("diagonal accepted".into());
        }
        Ok(())
    }

    pub fn rect() -> Check {
        let h = Hurst::new(0.75).map_err(e)?;
        close("rect(0,1,0,1)", rect_inner(0.0, 1.0, 0.0, 1.0, h), 1.0, 1e-15)?;
        close("rect(0,2,0,2)", rect_inner(0.0, 2.0, 0.0, 2.0, h), 2f64.powf(1.5), 1e-15)
    }

    pub fn inner() -> Check {
        let space = PhiSpace::new(Arc::new(TimeGrid::uniform(2.0, 8).map_err(e)?), Hurst::new(0.75).map_err(e)?);
        let f = StepFunction::indicator(space.grid().clone(), 0, 4);
        close("<χ,χ>", space.inner(&f, &f).map_err(e)?, 1.0, 1e-14)?;
        close("<f,0>", space.inner(&f, &StepFunction::zeros(space.grid().clone())).map_err(e)?, 0.0, 0.0)
    }

    fn space(m: usize, horizon: f64, h: f64) -> std::result::Result<Arc<PhiSpace<f64>>, String> {
        Ok(PhiSpace::new(Arc::new(TimeGrid::uniform(horizon, m).map_err(e)?), Hurst::new(h).map_err(e)?))
    }

    pub fn transform() -> Check {
        let sp = space(8, 2.0, 0.75)?;
        for t in [0.0, 0.25, 1.0, 2.0] {
            close("Φ[0]", sp.transform(&StepFunction::zeros(sp.grid().clone()), t).map_err(e)?, 0.0, 0.0)?;
        }
        Ok(())
    }

    pub fn orthogonal() -> Check {
        let sp = space(64, 1.0, 0.75)?;
        let b = PhiBasis::from_family(&sp, SeedFamily::Legendre, 2).map_err(e)?;
        let ip = sp.inner(&b.vectors()[0], &b.vectors()[1]).map_err(e)?;
        close("<e1,e2>", ip, 0.0, 1e-10)
    }

    pub fn covariance() -> Check {
        let sp = space(32, 1.0, 0.7)?;
        let b = PhiBasis::from_family(&sp, SeedFamily::Legendre, 4).map_err(e)?;
        let model = build_covariance(&sp, &GaussianFrame::new(vec![b.vectors().to_vec()])).map_err(e)?;
        if model.jitter_used() != 0.0 {
            return Err(format!("jitter {}", model.jitter_used()));
        }
        for p in 0..4 {
            for q in 0..4 {
                close("identity", model.entry(p, q), if p == q { 1.0 } else { 0.0 }, 1e-10)?;
            }
        }
        let g = sp.grid().clone();
        let two = GaussianFrame::new(vec![
            vec![StepFunction::indicator(g.clone(), 0, 16), StepFunction::constant(g.clone(), 0.3)],
            vec![StepFunction::indicator(g.clone(), 8, 32)],
        ]);
        let model = build_covariance(&sp, &two).map_err(e)?;
        for p in 0..2 {
            close("cross", model.entry(p, 2), 0.0, 0.0)?;
            close("cross", model.entry(2, p), 0.0, 0.0)?;
        }
        Ok(())
    }

    pub fn sampling() -> Check {
        let sp = space(16, 1.0, 0.7)?;
        let zero = GaussianFrame::new(vec![vec![StepFunction::zeros(sp.grid().clone()); 3]]);
        let model = build_covariance(&sp, &zero).map_err(e)?;
        if sample(&model, 1, 9).draw(0).iter().any(|v| *v != 0.0) {
            return Err("degenerate frame drew nonzero values".into());
        }
        let b = PhiBasis::from_family(&sp, SeedFamily::Legendre, 3).map_err(e)?;
        let model = build_covariance(&sp, &GaussianFrame::new(vec![b.vectors().to_vec()])).map_err(e)?;
        let n = 100_000;
        let batch = sample(&model, n, 2024);
        for k in 0..3 {
            let mean = batch.iter().map(|d| d[k]).sum::<f64>() / n as f64;
            if mean.abs() > 4.0 / (n as f64).sqrt() {
                return Err(format!("coordinate {k} mean {mean:e}"));
            }
        }
        Ok(())
    }

    pub fn partial_sum() -> Check {
        let sp = space(32, 1.0, 0.8)?;
        let b = PhiBasis::from_family(&sp, SeedFamily::Legendre, 8).map_err(e)?;
        close("K=0", cm_partial_sum_covariance(&b, 0, 32, 32), 0.0, 0.0)?;
        for k in 1..=8 {
            let v = cm_partial_sum_covariance(&b, k, 32, 32);
            if v > 1.0 + 1e-12 {
                return Err(format!("Bessel violated at K={k}: {v}"));
            }
        }
        Ok(())
    }

    pub fn coeffs() -> Check {
        let sp = space(16, 1.0, 0.7)?;
        let zero = StepFunction::zeros(sp.grid().clone());
        let b = PhiBasis::from_family(&sp, SeedFamily::Legendre, 3).map_err(e)?;
        let c = sigma_coeffs(&b, &zero).map_err(e)?;
        for k in 0..3 {
            if c.cumulative_row(k).iter().any(|v| *v != 0.0) {
                return Err("σ ≡ 0 gave nonzero coefficients".into());
            }
        }
        let full = PhiBasis::from_family(&sp, SeedFamily::Indicator { cells: 16 }, 16).map_err(e)?;
        let sigma = StepFunction::new(sp.grid().clone(), (0..16).map(|j| 0.2 + 0.05 * j as f64).collect())
            .map_err(e)?;
        let c = sigma_coeffs(&full, &sigma).map_err(e)?;
        for (r, t) in [(0, 16), (3, 11), (5, 6)] {
            close("full-basis defect", c.defect(r, t), 0.0, 1e-10)?;
            close("Parseval", projection_norm_sq(&c, r, t), c.exact_norm_sq(r, t), 1e-10)?;
        }
        Ok(())
    }

    pub fn norms() -> Check {
        let sp = space(16, 1.0, 0.7)?;
        let b = PhiBasis::from_family(&sp, SeedFamily::Legendre, 3).map_err(e)?;
        let c = sigma_coeffs(&b, &StepFunction::constant(sp.grid().clone(), 0.5)).map_err(e)?;
        for r in [0, 7, 16] {
            close("r = t", projection_norm_sq(&c, r, r), 0.0, 0.0)?;
        }
        Ok(())
    }

    pub fn wick() -> Check {
        close("σ ≡ 0", wick_exponential(&[0.3, -1.2], &[0.0, 0.0], 0.0).value, 1.0, 0.0)?;
        let sp = space(32, 1.0, 0.7)?;
        let b = PhiBasis::from_family(&sp, SeedFamily::Legendre, 2).map_err(e)?;
        let c = sigma_coeffs(&b, &StepFunction::constant(sp.grid().clone(), 0.8)).map_err(e)?;
        let shifts = c.coeffs(0, 32);
        let v = projection_norm_sq(&c, 0, 32);
        let model = build_covariance(&sp, &GaussianFrame::new(vec![b.vectors().to_vec()])).map_err(e)?;
        let n = 100_000;
        let vals: Vec<f64> = sample(&model, n, 77).iter().map(|z| wick_exponential(z, &shifts, v).value).collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let var = vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        if (mean - 1.0).abs() > 4.0 * se {
            return Err(format!("mean {mean} (SE {se:e})"));
        }
        Ok(())
    }

    pub fn translation() -> Check {
        let sp = space(16, 1.0, 0.7)?;
        let g = StepFunction::indicator(sp.grid().clone(), 2, 9);
        close("f ≡ 0", translation_shift(&sp, &g, &StepFunction::zeros(sp.grid().clone())).map_err(e)?, 0.0, 0.0)?;
        let b = PhiBasis::from_family(&sp, SeedFamily::Legendre, 3).map_err(e)?;
        let c = sigma_coeffs(&b, &StepFunction::constant(sp.grid().clone(), 0.5)).map_err(e)?;
        let f = c.projection(4, 12);
        for k in 0..3 {
            close("g = e_k", translation_shift(&sp, &b.vectors()[k], &f).map_err(e)?, -c.coeff(k, 4, 12), 1e-12)?;
        }
        Ok(())
    }

    pub fn zero_drift() -> Check {
        let spec = problem(DriftModel::Zero, 0.5, 1.5, 0.75, 32)?;
        let basis = PhiBasis::from_family(spec.space(), SeedFamily::Legendre, 2).map_err(e)?;
        let cs = vec![sigma_coeffs(&basis, &spec.sigma()[0]).map_err(e)?];
        let z = vec![vec![0.7, -0.3]];
        let sol = solve_truncated(&spec, &cs, &SolverGrid::new(4, 1.0).map_err(e)?, &z).map_err(e)?;
        for n in 0..=4 {
            let p = 8 * n;
            let log = z[0][0] * cs[0].coeff(0, 0, p) + z[0][1] * cs[0].coeff(1, 0, p) - 0.5 * projection_norm_sq(&cs[0], 0, p);
            close("X^K", sol.value(n, 0), 1.5 * log.exp(), 1e-14)?;
        }
        Ok(())
    }

    pub fn zero_sigma() -> Check {
        let spec = problem(DriftModel::Sin { amplitude: 1.0 }, 0.0, 0.4, 0.7, 16)?;
        let basis = PhiBasis::from_family(spec.space(), SeedFamily::Legendre, 2).map_err(e)?;
        let cs = vec![sigma_coeffs(&basis, &spec.sigma()[0]).map_err(e)?];
        let grid = SolverGrid::new(8, 1.0).map_err(e)?;
        let a = solve_truncated(&spec, &cs, &grid, &[vec![1.0, 2.0]]).map_err(e)?;
        let b = solve_reference(&spec, &grid, &[vec![0.0; 8]]).map_err(e)?;
        let mut x = 0.4f64;
        for n in 0..=8 {
            close("truncated", a.value(n, 0), x, 1e-14)?;
            close("reference", b.value(n, 0), x, 1e-14)?;
            x += 0.125 * x.sin();
        }
        Ok(())
    }

    pub fn sensitivities() -> Check {
        let spec = problem(DriftModel::Zero, 0.5, 1.0, 0.75, 16)?;
        let basis = PhiBasis::from_family(spec.space(), SeedFamily::Legendre, 2).map_err(e)?;
        let cs = vec![sigma_coeffs(&basis, &spec.sigma()[0]).map_err(e)?];
        let grid = SolverGrid::new(4, 1.0).map_err(e)?;
        let z = vec![vec![0.2, 0.9]];
        let x = solve_truncated(&spec, &cs, &grid, &z).map_err(e)?;
        let s = forward_sensitivities(&spec, &cs, &grid, &z).map_err(e)?;
        for n in 0..=4 {
            for k in 0..2 {
                close("dX/dz", s[n][0][k], cs[0].coeff(k, 0, 4 * n) * x.value(n, 0), 1e-14)?;
            }
        }
        let still = problem(DriftModel::Sin { amplitude: 1.0 }, 0.0, 1.0, 0.75, 16)?;
        let cs = vec![sigma_coeffs(&basis, &still.sigma()[0]).map_err(e)?];
        let s = forward_sensitivities(&still, &cs, &grid, &z).map_err(e)?;
        if s.iter().flatten().flatten().any(|v| *v != 0.0) {
            return Err("σ ≡ 0 sensitivities not zero".into());
        }
        Ok(())
    }

    pub fn envelope() -> Check {
        let space = PhiSpace::new(Arc::new(TimeGrid::uniform(1.0, 4).map_err(e)?), Hurst::new(0.7).map_err(e)?);
        let one = |c: Vec<f64>, m: f64| {
            let sig = c.iter().map(|_| StepFunction::constant(space.grid().clone(), 0.5)).collect();
            ProblemSpec::new(space.clone(), Arc::new(DriftModel::Sin { amplitude: m }), sig, c).map_err(e)
        };
        close("c=0,M=0", gronwall_envelope(&one(vec![0.0], 0.0)?, 1.0), 0.0, 0.0)?;
        close("d=1", gronwall_envelope(&one(vec![1.0], 1.0)?, 1.0), 4.0, 1e-15)?;
        close("d=2", gronwall_envelope(&one(vec![1.0, 1.0], 2.0)?, 0.5), 8.0, 1e-15)
    }

    pub fn reference_zero_drift() -> Check {
        let spec = problem(DriftModel::Zero, 0.5, 1.5, 0.75, 16)?;
        let g = vec![vec![0.3, -0.1, 0.4, 0.2]];
        let sol = solve_reference(&spec, &SolverGrid::new(4, 1.0).map_err(e)?, &g).map_err(e)?;
        let sigma = &spec.sigma()[0];
        let mut integral = 0.0;
        for n in 0..=4 {
            let norm = spec.space().norm_sq(&sigma.restrict(0, 4 * n)).map_err(e)?;
            close("c·E(0,t)", sol.value(n, 0), 1.5 * (integral - 0.5 * norm).exp(), 1e-14)?;
            if n < 4 {
                integral += g[0][n];
            }
        }
        Ok(())
    }

    pub fn bound_full_basis() -> Check {
        let spec = problem(DriftModel::Sin { amplitude: 1.0 }, 0.5, 1.0, 0.75, 16)?;
        let basis = PhiBasis::from_family(spec.space(), SeedFamily::Indicator { cells: 16 }, 16).map_err(e)?;
        let ex = HolderExponents::new(1.0, 2.0, 2.0).map_err(e)?;
        let r = appendix_bound_check(&spec, &basis, 0.0, 0.5, ex, 200, 1).map_err(e)?;
        if r[0].lhs.mean <= 1e-10 && r[0].rhs <= 1e-10 && r[0].pass {
            Ok(())
        } else {
            Err(format!("{:?}", r[0]))
        }
    }

    pub fn bound_zero_sigma() -> Check {
        let spec = problem(DriftModel::Sin { amplitude: 1.0 }, 0.0, 1.0, 0.75, 16)?;
        let basis = PhiBasis::from_family(spec.space(), SeedFamily::Legendre, 2).map_err(e)?;
        let ex = HolderExponents::new(1.0, 2.0, 2.0).map_err(e)?;
        let r = appendix_bound_check(&spec, &basis, 0.0, 0.5, ex, 200, 1).map_err(e)?;
        if r[0].lhs.mean == 0.0 && r[0].rhs == 0.0 && r[0].pass {
            Ok(())
        } else {
            Err(format!("{:?}", r[0]))
        }
    }

    pub fn convergence_zero_sigma() -> Check {
        let spec = problem(DriftModel::Sin { amplitude: 1.0 }, 0.0, 1.0, 0.7, 32)?;
        let ladder = Ladder::new(vec![1, 2, 8], true);
        let r = l1_convergence(&spec, &ladder, &SolverGrid::new(8, 1.0).map_err(e)?, 200, 3).map_err(e)?;
        if r.rows.iter().all(|row| row.l1_error == 0.0) {
            Ok(())
        } else {
            Err("nonzero error with σ ≡ 0".into())
        }
    }

    pub fn fp_constant() -> Check {
        let spec = problem(DriftModel::Sin { amplitude: 1.0 }, 0.5, 1.0, 0.7, 16)?;
        let basis = PhiBasis::from_family(spec.space(), SeedFamily::Legendre, 2).map_err(e)?;
        let tests = vec![("constant".to_string(), TestFunction::Constant { value: 2.0 })];
        let opts = FpOptions {
            bins: 10,
            ..FpOptions::default()
        };
        let r = fokker_planck_residual(&spec, &basis, &SolverGrid::new(4, 1.0).map_err(e)?, &tests, 500, 5, opts)
            .map_err(e)?;
        close("residual", r.residuals[0].residual.mean, 0.0, 0.0)
    }

    fn small_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default_run();
        cfg.problem.sigma = vec![SigmaConfig::Constant(0.0)];
        cfg.discretization.basis_cells = 32;
        cfg.discretization.steps = 8;
        cfg.discretization.k_ladder = vec![1, 2, 8];
        cfg.sampling.n = 200;
        cfg.analyses.bound = None;
        cfg.analyses.fokker_planck = None;
        cfg
    }

    pub fn run_zero_sigma() -> Check {
        let dir = std::env::temp_dir().join(format!("fracwick-selftest-{}", std::process::id()));
        let outcome = run(&small_config(), &dir, Some(1), Some(5)).map_err(e);
        let csv = fs::read_to_string(dir.join("convergence.csv")).map_err(e);
        let _ = fs::remove_dir_all(&dir);
        let outcome = outcome?;
        if !outcome.passed() {
            return Err(format!("failing gates: {:?}", outcome.failures().map(|g| &g.name).collect::<Vec<_>>()));
        }
        let csv = csv?;
        let rows: Vec<&str> = csv.lines().skip(2).collect();
        if rows.len() != 3 || rows.iter().any(|l| l.split(',').nth(1) != Some("0.0000000000000000e0")) {
            return Err(format!("unexpected convergence.csv:\n{csv}"));
        }
        Ok(())
    }

    pub fn config_exponents() -> Check {
        let mut cfg = ExperimentConfig::default_run();
        cfg.analyses.bound.as_mut().expect("default has bound").exponents = vec![[2.0, 3.0, 3.0]];
        let text = serde_json::to_string(&cfg).map_err(e)?;
        match ExperimentConfig::from_json(&text) {
            Err(Error::Config { field, .. }) if field.contains("p1/p2") => Ok(()),
            other => Err(format!("expected a p1/p2 config error, got {other:?}")),
        }
    }

    pub fn exact_projection() -> Check {
        let spec = problem(DriftModel::Sin { amplitude: 1.0 }, 0.5, 1.0, 0.75, 32)?;
        let grid = SolverGrid::new(8, 1.0).map_err(e)?;
        let lattice = Lattice::nodes(spec.space(), &grid).map_err(e)?;
        let basis = exact_rung_basis(spec.space(), &spec.sigma()[0], &lattice).map_err(e)?;
        let cs = vec![sigma_coeffs(&basis, &spec.sigma()[0]).map_err(e)?];
        let mut kernels = basis.vectors().to_vec();
        kernels.extend((0..8).map(|c| spec.sigma()[0].restrict(4 * c, 4 * c + 4)));
        let model = build_covariance(spec.space(), &GaussianFrame::new(vec![kernels])).map_err(e)?;
        for draw in sample(&model, 25, 11).iter() {
            let a = solve_truncated(&spec, &cs, &grid, &[draw[..8].to_vec()]).map_err(e)?;
            let b = solve_reference(&spec, &grid, &[draw[8..].to_vec()]).map_err(e)?;
            close("X^K vs X", a.terminal()[0], b.terminal()[0], 1e-8)?;
        }
        Ok(())
    }
}

/// Output directory used when none is given.
pub fn default_out_dir() -> PathBuf {
    PathBuf::from("fracwick-out")
}
