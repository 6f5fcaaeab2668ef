//! Admissible kernels `T`, the alpha-centralizer `N^alpha = alpha T + (1 - alpha) P_X T`,
//! and one ecCRM step `z -> PCRM(N^alpha z)` with projection accounting.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::circumcenter::circumcenter;
use crate::error::{CfpError, Result};
use crate::geometry::{Point, ProblemPair, MEMBERSHIP_TOL};

/// Default relative tolerance of the strict-centralization test.
pub const STRICT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SetId {
    X,
    Y,
}

/// A composition of projections, stored innermost first: `[X, Y]` is
/// `T = P_Y ∘ P_X`.
///
/// The outermost token must be `Y` so that `Im T ⊂ Y`, and no token may repeat
/// its neighbour.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct KernelSpec {
    tokens: Vec<SetId>,
}

impl KernelSpec {
    pub fn new(tokens: Vec<SetId>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(CfpError::InvalidKernel("kernel must contain at least one projection".into()));
        }
        if tokens.last() != Some(&SetId::Y) {
            return Err(CfpError::InvalidKernel("outermost projection must be P_Y".into()));
        }
        if tokens.windows(2).any(|w| w[0] == w[1]) {
            return Err(CfpError::InvalidKernel("adjacent projections onto the same set".into()));
        }
        Ok(Self { tokens })
    }

    /// `T = P_Y` (3 projections per step).
    pub fn basic() -> Self {
        Self { tokens: vec![SetId::Y] }
    }

    /// `T = P_Y P_X`, the classical cCRM kernel (4 projections per step).
    pub fn ccrm() -> Self {
        Self { tokens: vec![SetId::X, SetId::Y] }
    }

    /// `T = P_Y P_X P_Y` (5 projections per step).
    pub fn deep() -> Self {
        Self { tokens: vec![SetId::Y, SetId::X, SetId::Y] }
    }

    pub fn tokens(&self) -> &[SetId] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.tokens {
            f.write_str(match t {
                SetId::X => "X",
                SetId::Y => "Y",
            })?;
        }
        Ok(())
    }
}

impl FromStr for KernelSpec {
    type Err = CfpError;

    /// Parses `"XY"`, `"Y,X,Y"` or `"x y"` (innermost first).
    fn from_str(s: &str) -> Result<Self> {
        let mut tokens = Vec::new();
        for c in s.chars() {
            match c {
                'X' | 'x' => tokens.push(SetId::X),
                'Y' | 'y' => tokens.push(SetId::Y),
                ',' | ' ' | '-' | '_' => {}
                other => return Err(CfpError::InvalidKernel(format!("unexpected character {other:?} in {s:?}"))),
            }
        }
        Self::new(tokens)
    }
}

impl TryFrom<String> for KernelSpec {
    type Error = CfpError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<KernelSpec> for String {
    fn from(k: KernelSpec) -> String {
        k.to_string()
    }
}

/// A step size strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct StepValue(f64);

impl StepValue {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha < 1.0 {
            Ok(Self(alpha))
        } else {
            Err(CfpError::InvalidStep(alpha))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// An operator mapping into `Y` that is quasi-nonexpansive relative to `X ∩ Y`.
///
/// `apply` returns the image together with the number of projections spent.
pub trait AdmissibleOperator: Send + Sync {
    fn apply(&self, pair: &ProblemPair, z: &Point) -> Result<(Point, usize)>;
    fn label(&self) -> String;
}

impl AdmissibleOperator for KernelSpec {
    fn apply(&self, pair: &ProblemPair, z: &Point) -> Result<(Point, usize)> {
        apply_kernel(self, pair, z)
    }

    fn label(&self) -> String {
        self.to_string()
    }
}

/// `T = P_Y ∘ J` for a caller-supplied `J`. Admissibility requires `J` to be
/// quasi-nonexpansive relative to `X ∩ Y`; this is not checked.
pub struct ComposedKernel<J> {
    pre: J,
    name: String,
}

impl<J> ComposedKernel<J>
where
    J: Fn(&ProblemPair, &Point) -> Result<(Point, usize)> + Send + Sync,
{
    pub fn new(name: impl Into<String>, pre: J) -> Self {
        Self { pre, name: name.into() }
    }
}

impl<J> AdmissibleOperator for ComposedKernel<J>
where
    J: Fn(&ProblemPair, &Point) -> Result<(Point, usize)> + Send + Sync,
{
    fn apply(&self, pair: &ProblemPair, z: &Point) -> Result<(Point, usize)> {
        let (u, count) = (self.pre)(pair, z)?;
        Ok((pair.y.project(&u)?, count + 1))
    }

    fn label(&self) -> String {
        self.name.clone()
    }
}

/// Applies the projection composition; returns `(Tz, number of projections)`.
pub fn apply_kernel(spec: &KernelSpec, pair: &ProblemPair, z: &Point) -> Result<(Point, usize)> {
    let mut p = z.clone();
    for token in spec.tokens() {
        p = match token {
            SetId::X => pair.x.project(&p)?,
            SetId::Y => pair.y.project(&p)?,
        };
    }
    Ok((p, spec.len()))
}

/// `N^alpha` applied to a kernel output `t ∈ Y`. Returns `(n, P_X t)`; since
/// `n` lies on the segment `[t, P_X t]`, `P_X n = P_X t` and callers reuse it.
pub fn centralize(pair: &ProblemPair, t_point: &Point, alpha: StepValue) -> Result<(Point, Point)> {
    let px_t = pair.x.project(t_point)?;
    let a = alpha.get();
    let n_point = t_point.scale(a) + px_t.scale(1.0 - a);
    Ok((n_point, px_t))
}

/// `<z - P_X z, z - P_Y z>` (two projections).
pub fn centralization_inner_product(pair: &ProblemPair, z: &Point) -> Result<f64> {
    let u = z - pair.x.project(z)?;
    let v = z - pair.y.project(z)?;
    Ok(u.dot(&v))
}

/// Strict centralization with a scale-free test on the angle between the two
/// displacements: `<u, v> < -tol * ||u|| ||v||` with `u = z - P_X z` and
/// `v = z - P_Y z`. Uses two projections.
pub fn is_strictly_centralized(pair: &ProblemPair, z: &Point, tol: f64) -> Result<bool> {
    let u = z - pair.x.project(z)?;
    let v = z - pair.y.project(z)?;
    Ok(strictly_centralized(&u, &v, tol))
}

fn strictly_centralized(u: &Point, v: &Point, tol: f64) -> bool {
    u.dot(v) < -tol * u.norm() * v.norm()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions {
    pub membership_tol: f64,
    pub strict_tol: f64,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self { membership_tol: MEMBERSHIP_TOL, strict_tol: STRICT_TOL }
    }
}

/// Which rule produced the step's output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepBranch {
    /// `N^alpha z ∈ Y`: output `P_X N^alpha z`.
    InY,
    /// `N^alpha z ∈ X`: output `P_Y N^alpha z`.
    InX,
    /// Not strictly centralized (so in `Y` up to rounding): output `P_X N^alpha z`.
    Fallback,
    Circumcenter,
}

#[derive(Debug, Clone)]
pub struct StepDiagnostics {
    pub t_point: Point,
    pub n_point: Point,
    /// `<n - P_X n, n - P_Y n>`; nonpositive up to rounding.
    pub centralization_ip: f64,
    pub algorithmic_projections: usize,
    pub strictly_centralized: bool,
    pub branch: StepBranch,
}

/// One ecCRM iteration `z -> PCRM(N^alpha T z)`.
///
/// Spends `len(T) + 2` projections: the kernel, `P_X(Tz)` (shared by the
/// centralizer and the X-reflection) and `P_Y(N^alpha z)`.
pub fn eccrm_step(
    pair: &ProblemPair,
    z: &Point,
    alpha: StepValue,
    spec: &KernelSpec,
    opts: &StepOptions,
) -> Result<(Point, StepDiagnostics)> {
    eccrm_step_with(pair, z, alpha, spec, opts)
}

/// [`eccrm_step`] for an arbitrary admissible operator.
pub fn eccrm_step_with(
    pair: &ProblemPair,
    z: &Point,
    alpha: StepValue,
    kernel: &dyn AdmissibleOperator,
    opts: &StepOptions,
) -> Result<(Point, StepDiagnostics)> {
    let (t_point, kernel_projections) = kernel.apply(pair, z)?;
    let (n_point, px_n) = centralize(pair, &t_point, alpha)?;
    let py_n = pair.y.project(&n_point)?;

    let u = &n_point - &px_n;
    let v = &n_point - &py_n;
    let ip = u.dot(&v);
    let strict = strictly_centralized(&u, &v, opts.strict_tol);
    let tol = opts.membership_tol * (1.0 + n_point.norm());

    // u = alpha (t - P_X t) exactly, so n ∈ X iff t ∈ X. Testing t keeps the
    // check independent of alpha, which matters once alpha_k is small.
    let (next, branch) = if v.norm() <= tol {
        (px_n, StepBranch::InY)
    } else if (&t_point - &px_n).norm() <= tol {
        (py_n, StepBranch::InX)
    } else if !strict {
        (px_n, StepBranch::Fallback)
    } else {
        let rx = px_n.scale(2.0) - &n_point;
        let ry = py_n.scale(2.0) - &n_point;
        (circumcenter(&n_point, &rx, &ry)?.center, StepBranch::Circumcenter)
    };
    if next.iter().any(|x| !x.is_finite()) {
        return Err(CfpError::InvalidConfig("step produced non-finite coordinates".into()));
    }
    let diag = StepDiagnostics {
        t_point,
        n_point,
        centralization_ip: ip,
        algorithmic_projections: kernel_projections + 2,
        strictly_centralized: strict,
        branch,
    };
    Ok((next, diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ConvexSet;
    use nalgebra::dvector;

    fn pt(v: &[f64]) -> Point {
        Point::from_column_slice(v)
    }

    fn orthogonal_halfspaces() -> ProblemPair {
        let x = ConvexSet::halfspace(vec![1.0, 0.0], 0.0).unwrap();
        let y = ConvexSet::halfspace(vec![0.0, 1.0], 0.0).unwrap();
        ProblemPair::bare(x, y, pt(&[1.0, 1.0])).unwrap()
    }

    #[test]
    fn kernel_validation() {
        assert!(KernelSpec::new(vec![]).is_err());
        assert!(KernelSpec::new(vec![SetId::Y, SetId::X]).is_err());
        assert!(KernelSpec::new(vec![SetId::X, SetId::Y, SetId::Y]).is_err());
        assert_eq!("YXY".parse::<KernelSpec>().unwrap(), KernelSpec::deep());
        assert_eq!("x,y".parse::<KernelSpec>().unwrap(), KernelSpec::ccrm());
        assert!("XZ".parse::<KernelSpec>().is_err());
        assert_eq!(KernelSpec::deep().to_string(), "YXY");
    }

    #[test]
    fn step_value_bounds() {
        assert!(StepValue::new(0.0).is_err());
        assert!(StepValue::new(1.0).is_err());
        assert!(StepValue::new(f64::NAN).is_err());
        assert_eq!(StepValue::new(0.25).unwrap().get(), 0.25);
    }

    #[test]
    fn apply_kernel_examples() {
        let pair = orthogonal_halfspaces();
        let (t, c) = apply_kernel(&KernelSpec::basic(), &pair, &pt(&[3.0, -1.0])).unwrap();
        assert_eq!((t, c), (dvector![3.0, -1.0], 1));
        let (t, c) = apply_kernel(&KernelSpec::ccrm(), &pair, &pt(&[1.0, 1.0])).unwrap();
        assert_eq!((t, c), (dvector![0.0, 0.0], 2));
        let (t, c) = apply_kernel(&KernelSpec::deep(), &pair, &pt(&[1.0, 1.0])).unwrap();
        assert_eq!((t, c), (dvector![0.0, 0.0], 3));
    }

    #[test]
    fn centralize_examples() {
        let pair = orthogonal_halfspaces();
        let (n, px) = centralize(&pair, &pt(&[1.0, 0.0]), StepValue::new(0.5).unwrap()).unwrap();
        assert_eq!(n, dvector![0.5, 0.0]);
        assert_eq!(px, dvector![0.0, 0.0]);
        let (n, _) = centralize(&pair, &pt(&[1.0, 0.0]), StepValue::new(0.25).unwrap()).unwrap();
        assert_eq!(n, dvector![0.25, 0.0]);
        let s = pt(&[-1.0, -1.0]);
        let (n, px) = centralize(&pair, &s, StepValue::new(0.7).unwrap()).unwrap();
        assert_eq!(n, s);
        assert_eq!(px, s);
    }

    #[test]
    fn strict_centralization_examples() {
        let pair = orthogonal_halfspaces();
        // z ∈ Y, z ∉ X
        assert!(!is_strictly_centralized(&pair, &pt(&[1.0, -1.0]), STRICT_TOL).unwrap());
        assert!(!is_strictly_centralized(&pair, &pt(&[-1.0, -1.0]), STRICT_TOL).unwrap());
        // obtuse displacements
        let x = ConvexSet::halfspace(vec![1.0, 1.0], 0.0).unwrap();
        let y = ConvexSet::halfspace(vec![1.0, -1.0], 0.0).unwrap();
        let pair = ProblemPair::bare(x, y, pt(&[1.0, 0.0])).unwrap();
        assert!(!is_strictly_centralized(&pair, &pt(&[1.0, 0.0]), STRICT_TOL).unwrap());
        let x = ConvexSet::halfspace(vec![1.0, 1.0], 0.0).unwrap();
        let y = ConvexSet::halfspace(vec![1.0, -3.0], 0.0).unwrap();
        let pair = ProblemPair::bare(x, y, pt(&[1.0, 0.0])).unwrap();
        assert!(is_strictly_centralized(&pair, &pt(&[1.0, 0.0]), STRICT_TOL).unwrap());
    }

    #[test]
    fn step_reaches_solution_in_one_iteration() {
        let pair = orthogonal_halfspaces();
        let alpha = StepValue::new(0.5).unwrap();
        let (next, d) = eccrm_step(&pair, &pt(&[1.0, 1.0]), alpha, &KernelSpec::basic(), &StepOptions::default()).unwrap();
        assert_eq!(d.t_point, dvector![1.0, 0.0]);
        assert_eq!(d.n_point, dvector![0.5, 0.0]);
        assert_eq!(d.branch, StepBranch::InY);
        assert_eq!(next, dvector![0.0, 0.0]);
        assert_eq!(d.algorithmic_projections, 3);
    }

    #[test]
    fn step_fixes_feasible_points() {
        let pair = orthogonal_halfspaces();
        let s = pt(&[-0.5, -2.0]);
        for spec in [KernelSpec::basic(), KernelSpec::ccrm(), KernelSpec::deep()] {
            for a in [0.1, 0.5, 0.9] {
                let (next, _) = eccrm_step(&pair, &s, StepValue::new(a).unwrap(), &spec, &StepOptions::default()).unwrap();
                assert_eq!(next, s);
            }
        }
    }

    #[test]
    fn projection_counts() {
        let pair = orthogonal_halfspaces();
        let z = pt(&[2.0, 3.0]);
        let a = StepValue::new(0.5).unwrap();
        let o = StepOptions::default();
        assert_eq!(eccrm_step(&pair, &z, a, &KernelSpec::basic(), &o).unwrap().1.algorithmic_projections, 3);
        assert_eq!(eccrm_step(&pair, &z, a, &KernelSpec::ccrm(), &o).unwrap().1.algorithmic_projections, 4);
        assert_eq!(eccrm_step(&pair, &z, a, &KernelSpec::deep(), &o).unwrap().1.algorithmic_projections, 5);
    }

    #[test]
    fn composed_kernel_hook() {
        let pair = orthogonal_halfspaces();
        // J = P_X expressed through the hook reproduces the cCRM kernel.
        let hook = ComposedKernel::new("PxHook", |p: &ProblemPair, z: &Point| Ok((p.x.project(z)?, 1)));
        let z = pt(&[2.0, 1.5]);
        let a = StepValue::new(0.4).unwrap();
        let o = StepOptions::default();
        let (via_hook, d1) = eccrm_step_with(&pair, &z, a, &hook, &o).unwrap();
        let (via_spec, d2) = eccrm_step(&pair, &z, a, &KernelSpec::ccrm(), &o).unwrap();
        assert_eq!(via_hook, via_spec);
        assert_eq!(d1.algorithmic_projections, d2.algorithmic_projections);
        assert_eq!(hook.label(), "PxHook");
    }

    #[test]
    fn kernel_serde_is_a_string() {
        let json = serde_json::to_string(&KernelSpec::deep()).unwrap();
        assert_eq!(json, "\"YXY\"");
        assert!(serde_json::from_str::<KernelSpec>("\"YX\"").is_err());
    }
}
