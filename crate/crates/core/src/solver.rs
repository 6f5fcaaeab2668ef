//! Iteration drivers, step schedules, traces and convergence-order estimates.

use std::fmt::Write as _;
use std::time::Instant;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{CfpError, Result};
use crate::geometry::{Point, ProblemPair, MEMBERSHIP_TOL};
use crate::operators::{eccrm_step, KernelSpec, StepOptions, StepValue, STRICT_TOL};

/// Step sizes `alpha_k` fed to the centralizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    Constant { alpha: f64 },
    /// `alpha_k = 1 / (k + 2)`.
    Vanishing,
    /// `values[k]`, repeating the last entry past the end of the table.
    Table { values: Vec<f64> },
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Constant { alpha } => StepValue::new(*alpha).map(|_| ()),
            Self::Vanishing => Ok(()),
            Self::Table { values } => {
                if values.is_empty() {
                    return Err(CfpError::InvalidSchedule("step table is empty".into()));
                }
                for &v in values {
                    StepValue::new(v).map_err(|_| CfpError::InvalidSchedule(format!("table value {v} outside (0, 1)")))?;
                }
                Ok(())
            }
        }
    }

    /// Short label used in summaries and file names.
    pub fn label(&self) -> String {
        match self {
            Self::Constant { alpha } => format_float(*alpha),
            Self::Vanishing => "vanishing".into(),
            Self::Table { .. } => "table".into(),
        }
    }
}

/// Step size for iteration `k` (0-based).
pub fn schedule_value(schedule: &StepSchedule, k: usize) -> Result<StepValue> {
    match schedule {
        StepSchedule::Constant { alpha } => StepValue::new(*alpha),
        StepSchedule::Vanishing => StepValue::new(1.0 / (k as f64 + 2.0)),
        StepSchedule::Table { values } => {
            let v = values
                .get(k)
                .or(values.last())
                .ok_or_else(|| CfpError::InvalidSchedule("step table is empty".into()))?;
            StepValue::new(*v)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Eccrm {
        /// Kernel tokens innermost first, e.g. `"YXY"`.
        #[schemars(with = "String")]
        kernel: KernelSpec,
        schedule: StepSchedule,
    },
    /// Alternating projections `z -> P_X P_Y z`.
    Map,
    /// Alias for `Eccrm { kernel: XY, schedule: Constant { alpha: 0.5 } }`.
    Ccrm,
}

impl Method {
    pub fn eccrm(kernel: KernelSpec, schedule: StepSchedule) -> Self {
        Self::Eccrm { kernel, schedule }
    }

    /// Replaces aliases by the explicit ecCRM configuration.
    pub fn resolved(&self) -> Method {
        match self {
            Self::Ccrm => Self::Eccrm { kernel: KernelSpec::ccrm(), schedule: StepSchedule::Constant { alpha: 0.5 } },
            other => other.clone(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Eccrm { .. } => "ecCRM",
            Self::Map => "MAP",
            Self::Ccrm => "cCRM",
        }
    }

    pub fn kernel_label(&self) -> String {
        match self.resolved() {
            Self::Eccrm { kernel, .. } => kernel.to_string(),
            _ => "-".into(),
        }
    }

    pub fn alpha_label(&self) -> String {
        match self.resolved() {
            Self::Eccrm { schedule, .. } => schedule.label(),
            _ => "-".into(),
        }
    }

    /// Filesystem-safe identifier, e.g. `ecCRM_XY_0.5` or `MAP`.
    pub fn label(&self) -> String {
        match self {
            Self::Map => "MAP".into(),
            Self::Ccrm => "cCRM".into(),
            Self::Eccrm { kernel, schedule } => format!("ecCRM_{}_{}", kernel, schedule.label()),
        }
    }
}

/// Parses `map`, `ccrm`, or `<kernel>:<alpha>` / `<kernel>:vanishing`,
/// e.g. `XY:0.5` or `YXY:vanishing`.
impl std::str::FromStr for Method {
    type Err = CfpError;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        match t.to_ascii_lowercase().as_str() {
            "map" => return Ok(Self::Map),
            "ccrm" => return Ok(Self::Ccrm),
            _ => {}
        }
        let (kernel, step) =
            t.split_once(':').ok_or_else(|| CfpError::InvalidConfig(format!("cannot parse method {s:?}")))?;
        let kernel: KernelSpec = kernel.parse()?;
        let schedule = if step.eq_ignore_ascii_case("vanishing") {
            StepSchedule::Vanishing
        } else {
            let alpha = step.parse::<f64>().map_err(|_| CfpError::InvalidConfig(format!("cannot parse step {step:?}")))?;
            StepSchedule::Constant { alpha }
        };
        schedule.validate()?;
        Ok(Self::Eccrm { kernel, schedule })
    }
}

fn default_max_iter() -> usize {
    10_000
}
fn default_eps() -> f64 {
    1e-10
}
fn default_membership_tol() -> f64 {
    MEMBERSHIP_TOL
}
fn default_strict_tol() -> f64 {
    STRICT_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: Method,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_membership_tol")]
    pub membership_tol: f64,
    #[serde(default = "default_strict_tol")]
    pub strict_tol: f64,
    #[serde(default)]
    pub record_iterates: bool,
}

impl SolverConfig {
    pub fn new(method: Method, eps: f64, max_iter: usize) -> Self {
        Self {
            method,
            eps,
            max_iter,
            membership_tol: MEMBERSHIP_TOL,
            strict_tol: STRICT_TOL,
            record_iterates: false,
        }
    }

    pub fn with_iterates(mut self) -> Self {
        self.record_iterates = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(CfpError::InvalidConfig(format!("eps must be positive, got {}", self.eps)));
        }
        if self.max_iter == 0 {
            return Err(CfpError::InvalidConfig("max_iter must be at least 1".into()));
        }
        if !(self.membership_tol >= 0.0 && self.strict_tol >= 0.0) {
            return Err(CfpError::InvalidConfig("tolerances must be nonnegative".into()));
        }
        if let Method::Eccrm { schedule, .. } = &self.method {
            schedule.validate()?;
        }
        Ok(())
    }

    fn step_options(&self) -> StepOptions {
        StepOptions { membership_tol: self.membership_tol, strict_tol: self.strict_tol }
    }
}

/// State after iteration `k` (record 0 is the starting point).
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub delta: f64,
    pub dist_sref: Option<f64>,
    /// Inner product at the centralized point that produced this iterate.
    pub centralization_ip: Option<f64>,
    /// Step size that produced this iterate.
    pub alpha: Option<f64>,
    pub cum_algorithmic_projections: u64,
    pub cum_diagnostic_projections: u64,
    pub wall_time_ns: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunStatus {
    Converged,
    MaxIter,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct SolveTrace {
    pub method: String,
    pub records: Vec<IterationRecord>,
    pub status: RunStatus,
    pub final_point: Point,
    pub iterations: usize,
    /// `z_0, z_1, ...` when `record_iterates` was set.
    pub iterates: Option<Vec<Point>>,
}

pub const TRACE_CSV_HEADER: &str = "k,delta,dist_sref,alpha,cum_proj_alg,cum_proj_diag,wall_ns";

impl SolveTrace {
    pub fn final_delta(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.delta)
    }

    pub fn total_algorithmic_projections(&self) -> u64 {
        self.records.last().map_or(0, |r| r.cum_algorithmic_projections)
    }

    pub fn wall_time_s(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.wall_time_ns as f64 * 1e-9)
    }

    /// One CSV row per record; optional fields are left empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.records.len() + 1));
        out.push_str(TRACE_CSV_HEADER);
        out.push('\n');
        let opt = |v: Option<f64>| v.map(format_float).unwrap_or_default();
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.k,
                format_float(r.delta),
                opt(r.dist_sref),
                opt(r.alpha),
                r.cum_algorithmic_projections,
                r.cum_diagnostic_projections,
                r.wall_time_ns
            );
        }
        out
    }
}

/// Row of a trace CSV read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub delta: f64,
    pub dist_sref: Option<f64>,
    pub alpha: Option<f64>,
    pub cum_proj_alg: u64,
    pub cum_proj_diag: u64,
    pub wall_ns: u64,
}

pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == TRACE_CSV_HEADER => {}
        other => return Err(CfpError::Parse(format!("unexpected trace header {other:?}"))),
    }
    let parse_f = |s: &str| s.parse::<f64>().map_err(|e| CfpError::Parse(format!("{s:?}: {e}")));
    let parse_u = |s: &str| s.parse::<u64>().map_err(|e| CfpError::Parse(format!("{s:?}: {e}")));
    let opt_f = |s: &str| if s.is_empty() { Ok(None) } else { parse_f(s).map(Some) };
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.trim().split(',').collect();
            if f.len() != 7 {
                return Err(CfpError::Parse(format!("expected 7 fields in {line:?}")));
            }
            Ok(TraceRow {
                k: parse_u(f[0])? as usize,
                delta: parse_f(f[1])?,
                dist_sref: opt_f(f[2])?,
                alpha: opt_f(f[3])?,
                cum_proj_alg: parse_u(f[4])?,
                cum_proj_diag: parse_u(f[5])?,
                wall_ns: parse_u(f[6])?,
            })
        })
        .collect()
}

/// Shortest round-trip decimal; scientific notation outside `[1e-5, 1e16)`.
pub fn format_float(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

struct StepOutcome {
    next: Point,
    projections: usize,
    ip: Option<f64>,
    alpha: Option<f64>,
}

fn drive<F>(pair: &ProblemPair, cfg: &SolverConfig, mut step: F) -> Result<SolveTrace>
where
    F: FnMut(usize, &Point) -> Result<StepOutcome>,
{
    cfg.validate()?;
    let start = Instant::now();
    let elapsed = |s: &Instant| s.elapsed().as_nanos() as u64;
    let dist_ref = |z: &Point| pair.s_ref.as_ref().map(|s| (z - s).norm());
    let failure = |iteration: usize| move |e: CfpError| CfpError::NumericalFailure { iteration, source: Box::new(e) };

    let mut z = pair.z0.clone();
    let mut cum_alg = 0u64;
    let mut cum_diag = 2u64;
    let delta0 = pair.gap(&z).map_err(failure(0))?;
    let mut records = vec![IterationRecord {
        k: 0,
        delta: delta0,
        dist_sref: dist_ref(&z),
        centralization_ip: None,
        alpha: None,
        cum_algorithmic_projections: 0,
        cum_diagnostic_projections: cum_diag,
        wall_time_ns: elapsed(&start),
    }];
    let mut iterates = cfg.record_iterates.then(|| vec![z.clone()]);

    let mut status = if delta0 <= cfg.eps { RunStatus::Converged } else { RunStatus::MaxIter };
    let mut k = 0;
    while status != RunStatus::Converged && k < cfg.max_iter {
        let out = step(k, &z).map_err(failure(k))?;
        k += 1;
        z = out.next;
        cum_alg += out.projections as u64;
        let delta = pair.gap(&z).map_err(failure(k))?;
        cum_diag += 2;
        if !delta.is_finite() {
            return Err(failure(k)(CfpError::InvalidConfig("feasibility gap is not finite".into())));
        }
        records.push(IterationRecord {
            k,
            delta,
            dist_sref: dist_ref(&z),
            centralization_ip: out.ip,
            alpha: out.alpha,
            cum_algorithmic_projections: cum_alg,
            cum_diagnostic_projections: cum_diag,
            wall_time_ns: elapsed(&start),
        });
        if let Some(it) = iterates.as_mut() {
            it.push(z.clone());
        }
        if delta <= cfg.eps {
            status = RunStatus::Converged;
        }
    }
    Ok(SolveTrace { method: cfg.method.label(), records, status, final_point: z, iterations: k, iterates })
}

/// Runs the configured method until `delta(z_k) <= eps` or `max_iter` steps.
pub fn solve(pair: &ProblemPair, cfg: &SolverConfig) -> Result<SolveTrace> {
    match cfg.method.resolved() {
        Method::Map => solve_map(pair, cfg),
        Method::Eccrm { kernel, schedule } => {
            let opts = cfg.step_options();
            drive(pair, cfg, |k, z| {
                let alpha = schedule_value(&schedule, k)?;
                let (next, d) = eccrm_step(pair, z, alpha, &kernel, &opts)?;
                Ok(StepOutcome {
                    next,
                    projections: d.algorithmic_projections,
                    ip: Some(d.centralization_ip),
                    alpha: Some(alpha.get()),
                })
            })
        }
        Method::Ccrm => unreachable!("resolved() removes aliases"),
    }
}

/// Alternating projections `z_{k+1} = P_X(P_Y(z_k))` under the same stopping
/// rule and trace format as [`solve`].
pub fn solve_map(pair: &ProblemPair, cfg: &SolverConfig) -> Result<SolveTrace> {
    drive(pair, cfg, |_, z| {
        let next = pair.x.project(&pair.y.project(z)?)?;
        Ok(StepOutcome { next, projections: 2, ip: None, alpha: None })
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Merit {
    Delta,
    /// `||z_k - z_final||`; needs recorded iterates.
    DistToFinal,
    /// `||z_k - s_ref||`; needs a reference solution.
    DistToRef,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RateOptions {
    /// Leading records to discard; `None` discards the first 10% of the trace.
    pub burn_in: Option<usize>,
    /// Scale of the noise floor `100 eps scale`; `None` uses the largest merit value.
    pub noise_scale: Option<f64>,
    /// Error-bound constant, when known, for the reported bounds.
    pub omega: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateClass {
    Linear { rho: f64 },
    Superlinear,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateEstimate {
    pub q_ratios: Vec<f64>,
    /// Arithmetic mean of the last (up to) ten ratios.
    pub tail_mean: f64,
    pub classification: RateClass,
    pub omega: Option<f64>,
    /// `sqrt(1 - omega^2)`.
    pub beta: Option<f64>,
    /// `beta (abar + (1 - abar) beta)` with `abar` the largest tail step size.
    pub rho_bound: Option<f64>,
    /// `(1 + omega^2 / 4)^(-1/2)`.
    pub q_linear_bound: Option<f64>,
}

/// Extracts the merit sequence from a trace.
pub fn merit_values(trace: &SolveTrace, merit: Merit) -> Result<Vec<f64>> {
    match merit {
        Merit::Delta => Ok(trace.records.iter().map(|r| r.delta).collect()),
        Merit::DistToRef => trace
            .records
            .iter()
            .map(|r| r.dist_sref.ok_or_else(|| CfpError::InsufficientTrace("trace has no reference distances".into())))
            .collect(),
        Merit::DistToFinal => {
            let its = trace
                .iterates
                .as_ref()
                .ok_or_else(|| CfpError::InsufficientTrace("trace has no recorded iterates".into()))?;
            Ok(its.iter().map(|z| (z - &trace.final_point).norm()).collect())
        }
    }
}

pub fn estimate_rate(trace: &SolveTrace, merit: Merit, opts: &RateOptions) -> Result<RateEstimate> {
    let values = merit_values(trace, merit)?;
    let alphas: Vec<f64> = trace.records.iter().filter_map(|r| r.alpha).collect();
    estimate_rate_from_values(&values, &alphas, opts)
}

/// Classifies the convergence order of a merit sequence.
///
/// Ratios `q_k = m_{k+1} / m_k` are kept after the burn-in while `m_k` is
/// above `100 eps scale`. The sequence is `Superlinear` when the last five
/// ratios strictly decrease and the final one is below `0.1`, `Linear` when the
/// last (up to) ten ratios stay within 20% of their geometric mean, and
/// `Inconclusive` otherwise. At least five ratios are required.
pub fn estimate_rate_from_values(values: &[f64], alphas: &[f64], opts: &RateOptions) -> Result<RateEstimate> {
    let scale = opts.noise_scale.unwrap_or_else(|| values.iter().cloned().fold(0.0, f64::max));
    let floor = 100.0 * f64::EPSILON * scale;
    let burn_in = opts.burn_in.unwrap_or(values.len() / 10);

    let q_ratios: Vec<f64> = (burn_in..values.len().saturating_sub(1))
        .filter(|&k| values[k] > floor)
        .map(|k| values[k + 1].max(0.0) / values[k])
        .collect();
    if q_ratios.len() < 5 {
        return Err(CfpError::InsufficientTrace(format!(
            "{} ratios above the noise floor after burn-in {burn_in}, need 5",
            q_ratios.len()
        )));
    }

    let tail = &q_ratios[q_ratios.len().saturating_sub(10)..];
    let tail_mean = tail.iter().sum::<f64>() / tail.len() as f64;
    let last5 = &q_ratios[q_ratios.len() - 5..];
    let classification = if last5.windows(2).all(|w| w[1] < w[0]) && last5[4] < 0.1 {
        RateClass::Superlinear
    } else if tail.iter().all(|&q| q > 0.0) {
        let geo = (tail.iter().map(|q| q.ln()).sum::<f64>() / tail.len() as f64).exp();
        if tail.iter().all(|&q| (q - geo).abs() <= 0.2 * geo) {
            RateClass::Linear { rho: geo }
        } else {
            RateClass::Inconclusive
        }
    } else {
        RateClass::Inconclusive
    };

    let beta = opts.omega.map(|w| (1.0 - w * w).sqrt());
    let abar = alphas.iter().skip(burn_in.min(alphas.len())).cloned().fold(f64::NAN, f64::max);
    let rho_bound = beta.map(|b| if abar.is_nan() { b } else { b * (abar + (1.0 - abar) * b) });
    let q_linear_bound = opts.omega.map(|w| (1.0 + w * w / 4.0).powf(-0.5));
    Ok(RateEstimate { q_ratios, tail_mean, classification, omega: opts.omega, beta, rho_bound, q_linear_bound })
}
