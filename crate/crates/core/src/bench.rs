//! Experiment matrices, summary tables, plot data and oracle self-checks.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::circumcenter::{circumcenter, pcrm};
use crate::error::{CfpError, Result};
use crate::geometry::{ConvexSet, Point, ProblemPair};
use crate::operators::{centralization_inner_product, centralize, eccrm_step, KernelSpec, StepOptions, StepValue};
use crate::oracle;
use crate::problems::{Family, GeneratorSpec};
use crate::rng::SplitMix64;
use crate::solver::{format_float, solve, Method, RunStatus, SolveTrace, SolverConfig};

pub const SUMMARY_CSV_HEADER: &str = "method,alpha,kernel,mean_iters,mean_time_s,mean_final_delta,mean_projections";
pub const PLOTDATA_CSV_HEADER: &str = "method,k,delta";

fn default_eps() -> f64 {
    1e-10
}
fn default_max_iter() -> usize {
    10_000
}

/// One experiment: every method runs on the instance generated from every seed.
/// `eps` and `max_iter` apply to all methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub generator: Family,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(CfpError::InvalidConfig("at least one method is required".into()));
        }
        if self.seeds.is_empty() {
            return Err(CfpError::InvalidConfig("at least one seed is required".into()));
        }
        self.generator.validate()?;
        for m in &self.methods {
            self.solver_config(m).validate()?;
        }
        Ok(())
    }

    pub fn solver_config(&self, method: &Method) -> SolverConfig {
        SolverConfig::new(method.clone(), self.eps, self.max_iter)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// JSON Schema of the config file.
    pub fn schema() -> String {
        let schema = schemars::schema_for!(ExperimentConfig);
        serde_json::to_string_pretty(&schema).expect("schema serializes")
    }
}

/// Terminal numbers of one (method, seed) run.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub method: String,
    pub seed: u64,
    pub status: Option<RunStatus>,
    pub iterations: usize,
    pub final_delta: f64,
    pub projections: u64,
    pub wall_time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunRecord {
    pub fn succeeded(&self) -> bool {
        self.status == Some(RunStatus::Converged)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: String,
    pub alpha: String,
    pub kernel: String,
    pub mean_iters: f64,
    pub mean_time_s: f64,
    pub mean_final_delta: f64,
    pub mean_projections: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FailedRun {
    pub seed: u64,
    pub method: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    /// Ordered by (method index, seed index).
    pub runs: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
    pub failures: Vec<FailedRun>,
    /// Same order as `runs`; `None` where the solver returned an error.
    pub traces: Vec<Option<SolveTrace>>,
}

impl BenchReport {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn summary_csv(&self) -> String {
        summary_csv(&self.summary)
    }

    pub fn report_json(&self) -> String {
        let doc = json!({
            "ok": self.ok(),
            "runs": self.runs,
            "failures": self.failures,
        });
        serde_json::to_string_pretty(&doc).expect("report serializes")
    }

    /// Writes `trace_<method>_<seed>.csv`, `summary.csv`, `plotdata.csv`
    /// (first seed only) and `report.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (run, trace) in self.runs.iter().zip(&self.traces) {
            if let Some(t) = trace {
                fs::write(dir.join(format!("trace_{}_{}.csv", run.method, run.seed)), t.to_csv())?;
            }
        }
        fs::write(dir.join("summary.csv"), self.summary_csv())?;
        let first_seed = self.runs.first().map(|r| r.seed);
        let first: Vec<&SolveTrace> = self
            .runs
            .iter()
            .zip(&self.traces)
            .filter(|(r, _)| Some(r.seed) == first_seed)
            .filter_map(|(_, t)| t.as_ref())
            .collect();
        if !first.is_empty() {
            fs::write(dir.join("plotdata.csv"), emit_convergence_plotdata(&first)?)?;
        }
        fs::write(dir.join("report.json"), self.report_json())?;
        Ok(())
    }
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(SUMMARY_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.method,
            r.alpha,
            r.kernel,
            format_float(r.mean_iters),
            format_float(r.mean_time_s),
            format_float(r.mean_final_delta),
            format_float(r.mean_projections)
        );
    }
    out
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CfpError::InvalidConfig(format!("cannot start worker pool: {e}")))
}

/// Runs every (method, seed) pair with at most `jobs` concurrent solves.
///
/// Instance generation errors abort the whole matrix. Solver errors and runs
/// that hit `max_iter` are recorded as failures; summary means are taken over
/// the converged runs of each method.
pub fn run_matrix(cfg: &ExperimentConfig, jobs: usize) -> Result<BenchReport> {
    cfg.validate()?;
    let pool = thread_pool(jobs)?;
    pool.install(|| {
        let pairs: Vec<ProblemPair> = cfg
            .seeds
            .par_iter()
            .map(|&seed| GeneratorSpec::new(cfg.generator.clone(), seed).generate())
            .collect::<Result<_>>()?;

        let tasks: Vec<(usize, usize)> =
            (0..cfg.methods.len()).flat_map(|m| (0..cfg.seeds.len()).map(move |s| (m, s))).collect();
        let results: Vec<(RunRecord, Option<SolveTrace>)> = tasks
            .par_iter()
            .map(|&(m, s)| {
                let method = &cfg.methods[m];
                let seed = cfg.seeds[s];
                match solve(&pairs[s], &cfg.solver_config(method)) {
                    Ok(trace) => (
                        RunRecord {
                            method: method.label(),
                            seed,
                            status: Some(trace.status),
                            iterations: trace.iterations,
                            final_delta: trace.final_delta(),
                            projections: trace.total_algorithmic_projections(),
                            wall_time_s: trace.wall_time_s(),
                            error: None,
                        },
                        Some(trace),
                    ),
                    Err(e) => (
                        RunRecord {
                            method: method.label(),
                            seed,
                            status: Some(RunStatus::NumericalFailure),
                            iterations: 0,
                            final_delta: f64::NAN,
                            projections: 0,
                            wall_time_s: 0.0,
                            error: Some(e.to_string()),
                        },
                        None,
                    ),
                }
            })
            .collect();
        let (runs, traces): (Vec<_>, Vec<_>) = results.into_iter().unzip();

        let failures = runs
            .iter()
            .filter(|r| !r.succeeded())
            .map(|r| FailedRun {
                seed: r.seed,
                method: r.method.clone(),
                reason: r.error.clone().unwrap_or_else(|| format!("{:?}", r.status.unwrap_or(RunStatus::MaxIter))),
            })
            .collect();

        let summary = cfg
            .methods
            .iter()
            .enumerate()
            .map(|(m, method)| {
                let ok: Vec<&RunRecord> =
                    runs[m * cfg.seeds.len()..(m + 1) * cfg.seeds.len()].iter().filter(|r| r.succeeded()).collect();
                let mean = |f: &dyn Fn(&RunRecord) -> f64| {
                    if ok.is_empty() {
                        f64::NAN
                    } else {
                        ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64
                    }
                };
                SummaryRow {
                    method: method.label(),
                    alpha: method.alpha_label(),
                    kernel: method.kernel_label(),
                    mean_iters: mean(&|r| r.iterations as f64),
                    mean_time_s: mean(&|r| r.wall_time_s),
                    mean_final_delta: mean(&|r| r.final_delta),
                    mean_projections: mean(&|r| r.projections as f64),
                }
            })
            .collect();

        Ok(BenchReport { runs, summary, failures, traces })
    })
}

/// A named `delta` series for plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaSeries {
    pub method: String,
    pub points: Vec<(usize, f64)>,
}

impl DeltaSeries {
    pub fn from_trace(trace: &SolveTrace) -> Self {
        Self { method: trace.method.clone(), points: trace.records.iter().map(|r| (r.k, r.delta)).collect() }
    }
}

/// Long-format `method,k,delta` CSV from solver traces.
pub fn emit_convergence_plotdata(traces: &[&SolveTrace]) -> Result<String> {
    let series: Vec<DeltaSeries> = traces.iter().map(|t| DeltaSeries::from_trace(t)).collect();
    emit_plotdata(&series)
}

/// Long-format `method,k,delta` CSV. Rows are interleaved by position in each
/// series, and rows with `delta <= 0` are dropped so the column can be drawn
/// on a log axis.
pub fn emit_plotdata(series: &[DeltaSeries]) -> Result<String> {
    if series.is_empty() || series.iter().all(|s| s.points.is_empty()) {
        return Err(CfpError::EmptyInput);
    }
    let mut out = String::from(PLOTDATA_CSV_HEADER);
    out.push('\n');
    let longest = series.iter().map(|s| s.points.len()).max().unwrap_or(0);
    for i in 0..longest {
        for s in series {
            if let Some(&(k, delta)) = s.points.get(i) {
                if delta > 0.0 && delta.is_finite() {
                    let _ = writeln!(out, "{},{},{}", s.method, k, format_float(delta));
                }
            }
        }
    }
    Ok(out)
}

/// Mean of `log10(delta_{k+1} / delta_k)` over the last decade of a series
/// (the steps after `delta` first drops below ten times its final value).
/// More negative means a steeper terminal slope.
pub fn terminal_log_slope(deltas: &[f64]) -> Option<f64> {
    let positive: Vec<f64> = deltas.iter().copied().filter(|d| *d > 0.0).collect();
    let last = *positive.last()?;
    let start = positive.iter().position(|&d| d <= 10.0 * last)?;
    let start = start.saturating_sub(1);
    let tail = &positive[start..];
    if tail.len() < 2 {
        return None;
    }
    Some(tail.windows(2).map(|w| (w[1] / w[0]).log10()).sum::<f64>() / (tail.len() - 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleSuite {
    Projections,
    Circumcenter,
    Invariants,
}

impl std::str::FromStr for OracleSuite {
    type Err = CfpError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "projections" => Ok(Self::Projections),
            "circumcenter" => Ok(Self::Circumcenter),
            "invariants" => Ok(Self::Invariants),
            other => Err(CfpError::InvalidConfig(format!(
                "unknown suite {other:?}; expected projections, circumcenter or invariants"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub suite: OracleSuite,
    pub cases: usize,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_failure: Option<serde_json::Value>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleCheckOptions {
    pub seeds: (u64, u64),
    pub cases_per_seed: usize,
    /// Added to every computed circumcenter before checking, to exercise the
    /// failure path.
    pub circumcenter_fault: Option<f64>,
}

impl Default for OracleCheckOptions {
    fn default() -> Self {
        Self { seeds: (0, 9), cases_per_seed: 20, circumcenter_fault: None }
    }
}

/// Runs the brute-force comparisons of one suite and stops at the first failure.
pub fn oracle_check(suite: OracleSuite, opts: &OracleCheckOptions) -> Result<OracleReport> {
    let mut cases = 0;
    for seed in opts.seeds.0..=opts.seeds.1 {
        let mut rng = SplitMix64::substream(seed, 0x0ac1e);
        for case in 0..opts.cases_per_seed {
            cases += 1;
            let failure = match suite {
                OracleSuite::Projections => projection_case(&mut rng)?,
                OracleSuite::Circumcenter => circumcenter_case(&mut rng, opts.circumcenter_fault)?,
                OracleSuite::Invariants => invariant_case(&mut rng)?,
            };
            if let Some(mut detail) = failure {
                detail["seed"] = json!(seed);
                detail["case"] = json!(case);
                return Ok(OracleReport { suite, cases, passed: false, first_failure: Some(detail) });
            }
        }
    }
    Ok(OracleReport { suite, cases, passed: true, first_failure: None })
}

fn random_point(rng: &mut SplitMix64, n: usize, scale: f64) -> Point {
    Point::from_vec(rng.normal_vec(n)).scale(scale)
}

fn rel_err(got: &Point, want: &Point) -> f64 {
    (got - want).norm() / (1.0 + want.norm())
}

fn projection_case(rng: &mut SplitMix64) -> Result<Option<serde_json::Value>> {
    const TOL: f64 = 1e-8;
    let n = 2 + rng.below(7);
    let z = random_point(rng, n, 3.0);
    let mut checks: Vec<(&str, Point, Point)> = Vec::new();

    let normal = rng.normal_vec(n);
    let offset = rng.normal();
    let hs = ConvexSet::halfspace(normal.clone(), offset)?;
    checks.push(("halfspace", hs.project(&z)?, Point::from_vec(oracle::halfspace_closed_form(&normal, offset, z.as_slice()))));

    let lo: Vec<f64> = (0..n).map(|_| rng.uniform_in(-2.0, 0.0)).collect();
    let hi: Vec<f64> = lo.iter().map(|l| l + rng.uniform_in(0.0, 2.0)).collect();
    let bx = ConvexSet::axis_box(lo.clone(), hi.clone())?;
    checks.push(("box", bx.project(&z)?, Point::from_vec(oracle::box_closed_form(&lo, &hi, z.as_slice()))));

    let center = rng.normal_vec(n);
    let radius = rng.uniform_in(0.1, 2.0);
    let ball = ConvexSet::ball(center.clone(), radius)?;
    checks.push(("ball", ball.project(&z)?, Point::from_vec(oracle::ball_closed_form(&center, radius, z.as_slice()))));

    let diag: Vec<f64> = (0..n).map(|_| (rng.uniform() * 20f64.ln()).exp()).collect();
    let ell = ConvexSet::ellipsoid(center.clone(), diag.clone())?;
    checks.push(("ellipsoid", ell.project(&z)?, oracle::ellipsoid_bisection(&center, &diag, z.as_slice()).0));

    let order = 2 + rng.below(4);
    let raw = rng.normal_vec(order * order);
    let m = Point::from_vec(raw);
    let psd = ConvexSet::psd_cone(order)?;
    checks.push(("psd", psd.project(&m)?, oracle::psd_factorized_gradient(order, m.as_slice(), 200_000)));

    for (kind, got, want) in checks {
        let err = rel_err(&got, &want);
        if !(err <= TOL) {
            return Ok(Some(json!({"check": "projection", "set": kind, "relative_error": err, "tolerance": TOL})));
        }
    }
    Ok(None)
}

fn circumcenter_case(rng: &mut SplitMix64, fault: Option<f64>) -> Result<Option<serde_json::Value>> {
    const TOL: f64 = 1e-9;
    let n = 2 + rng.below(9);
    let z = random_point(rng, n, 1.0);
    let v = random_point(rng, n, 1.0);
    let w = random_point(rng, n, 1.0);
    let mut c = circumcenter(&z, &v, &w)?.center;
    if let Some(f) = fault {
        c[0] += f;
    }
    let scale = 1.0 + z.norm().max(v.norm()).max(w.norm());
    let eq = oracle::equidistance_violation(&c, &z, &v, &w);
    if !(eq <= TOL * scale) {
        return Ok(Some(json!({"check": "equidistance", "violation": eq, "tolerance": TOL * scale})));
    }
    let span = oracle::affine_span_residual(&c, &z, &v, &w);
    if !(span <= TOL * scale) {
        return Ok(Some(json!({"check": "affine_span", "residual": span, "tolerance": TOL * scale})));
    }

    // PCRM at a strictly centralized point of two halfspaces is the projection
    // onto their intersection.
    let (a1, b1, a2, b2, zq) = centralized_halfspace_pair(rng, n);
    let pair = ProblemPair::bare(ConvexSet::halfspace(a1.as_slice().to_vec(), b1)?, ConvexSet::halfspace(a2.as_slice().to_vec(), b2)?, zq.clone())?;
    let mut got = pcrm(&pair, &zq, 1e-12)?;
    if let Some(f) = fault {
        got[0] += f;
    }
    let want = oracle::project_two_halfspaces(&a1, b1, &a2, b2, &zq);
    let err = rel_err(&got, &want);
    if !(err <= 1e-8) {
        return Ok(Some(json!({"check": "pcrm_vs_qp", "relative_error": err, "tolerance": 1e-8})));
    }
    Ok(None)
}

/// Two halfspaces through a common point and a point violating both whose
/// projection displacements make an obtuse angle.
pub fn centralized_halfspace_pair(rng: &mut SplitMix64, n: usize) -> (Point, f64, Point, f64, Point) {
    loop {
        let a1 = random_point(rng, n, 1.0);
        let a2 = random_point(rng, n, 1.0);
        if a1.dot(&a2) >= -0.05 * a1.norm() * a2.norm() {
            continue;
        }
        let p = random_point(rng, n, 1.0);
        let (b1, b2) = (a1.dot(&p), a2.dot(&p));
        // Outward along both normals from the common boundary point.
        let t1 = rng.uniform_in(0.1, 2.0);
        let t2 = rng.uniform_in(0.1, 2.0);
        let z = &p + a1.scale(t1 / a1.norm()) + a2.scale(t2 / a2.norm());
        if a1.dot(&z) > b1 && a2.dot(&z) > b2 {
            return (a1, b1, a2, b2, z);
        }
    }
}

fn invariant_case(rng: &mut SplitMix64) -> Result<Option<serde_json::Value>> {
    const TOL: f64 = 1e-9;
    let n = 2 + rng.below(5);
    let center_x = rng.normal_vec(n);
    let mut center_y = center_x.clone();
    center_y[0] += rng.uniform_in(0.5, 1.5);
    let pair = ProblemPair::bare(ConvexSet::ball(center_x, 1.0)?, ConvexSet::ball(center_y, 1.0)?, random_point(rng, n, 3.0))?;
    let z = pair.z0.clone();
    let alpha = StepValue::new(rng.uniform_in(0.01, 0.99))?;
    let kernel = match rng.below(3) {
        0 => KernelSpec::basic(),
        1 => KernelSpec::ccrm(),
        _ => KernelSpec::deep(),
    };
    let (t, _) = crate::operators::apply_kernel(&kernel, &pair, &z)?;
    let (nz, _) = centralize(&pair, &t, alpha)?;
    let scale = 1.0 + nz.norm_squared();
    let ip = centralization_inner_product(&pair, &nz)?;
    if !(ip <= TOL * scale) {
        return Ok(Some(json!({"check": "centralization", "inner_product": ip, "tolerance": TOL * scale, "kernel": kernel.to_string()})));
    }

    // Midpoint of the two centers is feasible; check one Fejér step against it.
    let s = (pair.x.project(&pair.y.project(&z)?)? + pair.y.project(&pair.x.project(&z)?)?).scale(0.5);
    let s = if pair.gap(&s)? <= 1e-12 { s } else { return Ok(None) };
    let (next, _) = eccrm_step(&pair, &z, alpha, &kernel, &StepOptions::default())?;
    let lhs = (&s - &next).norm_squared();
    let rhs = (&s - &z).norm_squared() - pair.gap(&next)?.powi(2);
    let tol = 1e-8 * (1.0 + (&s - &z).norm_squared());
    if !(lhs <= rhs + tol) {
        return Ok(Some(json!({"check": "fejer", "lhs": lhs, "rhs": rhs, "tolerance": tol})));
    }
    Ok(None)
}
