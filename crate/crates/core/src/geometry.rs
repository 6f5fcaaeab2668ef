//! Closed convex sets with metric projections, distances and reflections.
//!
//! Every set is described by a [`ConvexSet`] value. Symmetric matrices live in
//! `R^(n*n)` as row-major vectors, so the PSD cone and entry masks share the
//! same ambient space as every other variant.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{CfpError, Result};

/// A point of the ambient space.
pub type Point = DVector<f64>;

/// Relative membership tolerance: `z ∈ C` iff `dist(z, C) <= tol * (1 + ||z||)`.
pub const MEMBERSHIP_TOL: f64 = 1e-12;

/// Absolute residual tolerance on the ellipsoid secular equation.
pub const ELLIPSOID_TOL: f64 = 1e-13;
pub const ELLIPSOID_MAX_ITER: usize = 200;

/// Eigenvalues below this fraction of the spectral norm are clamped to zero.
pub const PSD_CLAMP_REL: f64 = 1e-14;

/// One observed entry `(row, col, value)` of an [`ConvexSet::EntryMask`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskEntry(pub usize, pub usize, pub f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConvexSet {
    /// `{x : <normal, x> <= offset}`
    Halfspace { normal: Vec<f64>, offset: f64 },
    /// `{x : lo <= x <= hi}` componentwise.
    #[serde(rename = "box")]
    AxisBox { lo: Vec<f64>, hi: Vec<f64> },
    /// `{x : ||x - center|| <= radius}`
    Ball { center: Vec<f64>, radius: f64 },
    /// `{x : sum_i diag_i (x_i - center_i)^2 <= 1}`
    Ellipsoid { center: Vec<f64>, diag: Vec<f64> },
    /// Symmetric positive semidefinite `order x order` matrices.
    PsdCone { order: usize },
    /// `{M : M_ij = value for every (i, j, value) in entries}`.
    EntryMask { order: usize, entries: Vec<MaskEntry> },
}

impl ConvexSet {
    pub fn halfspace(normal: Vec<f64>, offset: f64) -> Result<Self> {
        Self::Halfspace { normal, offset }.validated()
    }

    pub fn axis_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        Self::AxisBox { lo, hi }.validated()
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        Self::Ball { center, radius }.validated()
    }

    pub fn ellipsoid(center: Vec<f64>, diag: Vec<f64>) -> Result<Self> {
        Self::Ellipsoid { center, diag }.validated()
    }

    pub fn psd_cone(order: usize) -> Result<Self> {
        Self::PsdCone { order }.validated()
    }

    pub fn entry_mask(order: usize, entries: Vec<MaskEntry>) -> Result<Self> {
        Self::EntryMask { order, entries }.validated()
    }

    fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    /// Checks the structural invariants of the variant.
    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(CfpError::InvalidSet(msg));
        let all_finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            Self::Halfspace { normal, offset } => {
                if normal.is_empty() || !all_finite(normal) || !offset.is_finite() {
                    return invalid("halfspace needs a finite, non-empty normal and offset".into());
                }
                if normal.iter().all(|&a| a == 0.0) {
                    return invalid("halfspace normal must be nonzero".into());
                }
            }
            Self::AxisBox { lo, hi } => {
                if lo.is_empty() || lo.len() != hi.len() {
                    return invalid(format!("box bounds have lengths {} and {}", lo.len(), hi.len()));
                }
                if !all_finite(lo) || !all_finite(hi) {
                    return invalid("box bounds must be finite".into());
                }
                if lo.iter().zip(hi).any(|(l, h)| l > h) {
                    return invalid("box has lo > hi in some coordinate".into());
                }
            }
            Self::Ball { center, radius } => {
                if center.is_empty() || !all_finite(center) {
                    return invalid("ball center must be finite and non-empty".into());
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return invalid(format!("ball radius {radius} must be positive"));
                }
            }
            Self::Ellipsoid { center, diag } => {
                if center.is_empty() || center.len() != diag.len() {
                    return invalid(format!(
                        "ellipsoid center/diag lengths {} and {}",
                        center.len(),
                        diag.len()
                    ));
                }
                if !all_finite(center) {
                    return invalid("ellipsoid center must be finite".into());
                }
                if diag.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
                    return invalid("ellipsoid scales must be finite and positive".into());
                }
            }
            Self::PsdCone { order } => {
                if *order == 0 {
                    return invalid("PSD cone order must be positive".into());
                }
            }
            Self::EntryMask { order, entries } => {
                if *order == 0 {
                    return invalid("entry mask order must be positive".into());
                }
                let mut seen: HashMap<(usize, usize), f64> = HashMap::with_capacity(entries.len());
                for &MaskEntry(i, j, v) in entries {
                    if i >= *order || j >= *order {
                        return invalid(format!("mask entry ({i}, {j}) outside order {order}"));
                    }
                    if !v.is_finite() {
                        return invalid(format!("mask entry ({i}, {j}) is not finite"));
                    }
                    if let Some(prev) = seen.insert((i, j), v) {
                        if prev != v {
                            return invalid(format!("mask entry ({i}, {j}) given twice"));
                        }
                    }
                }
                for (&(i, j), &v) in &seen {
                    match seen.get(&(j, i)) {
                        Some(&w) if w == v => {}
                        Some(_) => return invalid(format!("mask values at ({i}, {j}) and ({j}, {i}) differ")),
                        None => return invalid(format!("mask has ({i}, {j}) without its mirror")),
                    }
                }
            }
        }
        Ok(())
    }

    /// Dimension of the ambient space.
    pub fn dim(&self) -> usize {
        match self {
            Self::Halfspace { normal, .. } => normal.len(),
            Self::AxisBox { lo, .. } => lo.len(),
            Self::Ball { center, .. } | Self::Ellipsoid { center, .. } => center.len(),
            Self::PsdCone { order } | Self::EntryMask { order, .. } => order * order,
        }
    }

    /// Matrix order for matrix-valued sets.
    pub fn matrix_order(&self) -> Option<usize> {
        match self {
            Self::PsdCone { order } | Self::EntryMask { order, .. } => Some(*order),
            _ => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Halfspace { .. } => "halfspace",
            Self::AxisBox { .. } => "box",
            Self::Ball { .. } => "ball",
            Self::Ellipsoid { .. } => "ellipsoid",
            Self::PsdCone { .. } => "psd_cone",
            Self::EntryMask { .. } => "entry_mask",
        }
    }

    fn check_dim(&self, z: &Point) -> Result<()> {
        let expected = self.dim();
        if z.len() != expected {
            return Err(CfpError::DimensionMismatch { expected, found: z.len() });
        }
        Ok(())
    }

    /// Metric projection `P_C(z)`.
    pub fn project(&self, z: &Point) -> Result<Point> {
        self.check_dim(z)?;
        let p = match self {
            Self::Halfspace { normal, offset } => {
                let a = DVector::from_column_slice(normal);
                let excess = a.dot(z) - offset;
                if excess <= 0.0 {
                    z.clone()
                } else {
                    z - a.scale(excess / a.norm_squared())
                }
            }
            Self::AxisBox { lo, hi } => {
                Point::from_iterator(z.len(), z.iter().zip(lo.iter().zip(hi)).map(|(&x, (&l, &h))| x.clamp(l, h)))
            }
            Self::Ball { center, radius } => {
                let c = DVector::from_column_slice(center);
                let w = z - &c;
                let r = w.norm();
                if r <= *radius {
                    z.clone()
                } else {
                    c + w.scale(radius / r)
                }
            }
            Self::Ellipsoid { center, diag } => project_ellipsoid_multiplier(center, diag, z)?.0,
            Self::PsdCone { order } => project_psd(*order, z)?,
            Self::EntryMask { order, entries } => {
                let mut p = z.clone();
                for &MaskEntry(i, j, v) in entries {
                    p[i * order + j] = v;
                }
                p
            }
        };
        Ok(p)
    }

    /// `dist(z, C) = ||z - P_C(z)||`.
    pub fn distance(&self, z: &Point) -> Result<f64> {
        Ok((z - self.project(z)?).norm())
    }

    /// Reflection `R_C(z) = 2 P_C(z) - z`.
    pub fn reflect(&self, z: &Point) -> Result<Point> {
        Ok(self.project(z)?.scale(2.0) - z)
    }

    /// Membership with the relative tolerance `tol * (1 + ||z||)`.
    pub fn contains(&self, z: &Point, tol: f64) -> Result<bool> {
        Ok(self.distance(z)? <= tol * (1.0 + z.norm()))
    }
}

/// Projection onto `{x : sum_i d_i (x_i - c_i)^2 <= 1}` together with the
/// Lagrange multiplier `lambda` of the constraint.
///
/// The projection is `x_i = c_i + (z_i - c_i) / (1 + lambda d_i)` where
/// `lambda >= 0` solves `sum_i d_i w_i^2 / (1 + lambda d_i)^2 = 1`. The root is
/// found by Newton's method on `q(lambda)^(-1/2)`, which is concave and
/// increasing, safeguarded by bisection on a bracket `[0, sqrt(sum w_i^2 / d_i)]`.
pub fn project_ellipsoid_multiplier(center: &[f64], diag: &[f64], z: &Point) -> Result<(Point, f64)> {
    if z.len() != center.len() {
        return Err(CfpError::DimensionMismatch { expected: center.len(), found: z.len() });
    }
    let w: Vec<f64> = z.iter().zip(center).map(|(a, b)| a - b).collect();
    let q0: f64 = w.iter().zip(diag).map(|(wi, di)| di * wi * wi).sum();
    if q0 <= 1.0 {
        return Ok((z.clone(), 0.0));
    }

    // q(lambda) and its derivative.
    let eval = |lambda: f64| -> (f64, f64) {
        let mut q = 0.0;
        let mut dq = 0.0;
        for (wi, di) in w.iter().zip(diag) {
            let s = 1.0 / (1.0 + lambda * di);
            let t = di * wi * wi * s * s;
            q += t;
            dq -= 2.0 * di * t * s;
        }
        (q, dq)
    };

    let mut lo = 0.0_f64;
    let mut hi = w.iter().zip(diag).map(|(wi, di)| wi * wi / di).sum::<f64>().sqrt();
    while eval(hi).0 > 1.0 {
        hi *= 2.0;
    }

    let mut lambda = lo;
    let mut best = (f64::INFINITY, lo);
    let mut converged = false;
    for _ in 0..ELLIPSOID_MAX_ITER {
        let (q, dq) = eval(lambda);
        let phi = q - 1.0;
        if phi.abs() < best.0 {
            best = (phi.abs(), lambda);
        }
        if phi.abs() <= ELLIPSOID_TOL {
            converged = true;
            break;
        }
        if phi > 0.0 {
            lo = lambda;
        } else {
            hi = lambda;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        // Newton on r(lambda) = q^(-1/2), root at r = 1.
        let r = q.powf(-0.5);
        let dr = -0.5 * q.powf(-1.5) * dq;
        let mut next = lambda + (1.0 - r) / dr;
        if !(next.is_finite() && next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        lambda = next;
    }
    if !converged {
        // The bracket collapsed to adjacent floats; accept the best iterate only
        // when it sits at the floating-point resolution of the sum.
        let floor = 64.0 * f64::EPSILON * w.len() as f64;
        if best.0 > floor.max(ELLIPSOID_TOL) {
            return Err(CfpError::NonconvergedProjection { iterations: ELLIPSOID_MAX_ITER, residual: best.0 });
        }
        lambda = best.1;
    }
    let x = Point::from_iterator(
        z.len(),
        center.iter().zip(&w).zip(diag).map(|((c, wi), di)| c + wi / (1.0 + lambda * di)),
    );
    Ok((x, lambda))
}

/// Frobenius-nearest symmetric PSD matrix to the row-major `order x order`
/// matrix `z`. The input is symmetrized before decomposition.
pub fn project_psd(order: usize, z: &Point) -> Result<Point> {
    let n = order;
    if z.len() != n * n {
        return Err(CfpError::DimensionMismatch { expected: n * n, found: z.len() });
    }
    let m = DMatrix::from_row_slice(n, n, z.as_slice());
    let sym = (&m + m.transpose()).scale(0.5);
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 1000 * n.max(10)).ok_or(CfpError::EigenFailure)?;
    let spectral = eig.eigenvalues.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let floor = PSD_CLAMP_REL * spectral;

    let mut v = eig.eigenvectors;
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        let s = if lam > floor { lam.sqrt() } else { 0.0 };
        v.column_mut(k).scale_mut(s);
    }
    let p = &v * v.transpose();
    let mut out = Point::zeros(n * n);
    for i in 0..n {
        out[i * n + i] = p[(i, i)];
        for j in (i + 1)..n {
            let s = 0.5 * (p[(i, j)] + p[(j, i)]);
            out[i * n + j] = s;
            out[j * n + i] = s;
        }
    }
    Ok(out)
}

/// Descriptive metadata attached to a problem instance.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub family: String,
    pub seed: Option<u64>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

/// A two-set feasibility problem `find z in X ∩ Y` with a starting point and,
/// when known, a reference solution.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemPair {
    pub x: ConvexSet,
    pub y: ConvexSet,
    pub z0: Point,
    pub s_ref: Option<Point>,
    pub metadata: Metadata,
}

impl ProblemPair {
    pub fn new(x: ConvexSet, y: ConvexSet, z0: Point, s_ref: Option<Point>, metadata: Metadata) -> Result<Self> {
        x.validate()?;
        y.validate()?;
        let dim = x.dim();
        if y.dim() != dim {
            return Err(CfpError::DimensionMismatch { expected: dim, found: y.dim() });
        }
        if z0.len() != dim {
            return Err(CfpError::DimensionMismatch { expected: dim, found: z0.len() });
        }
        if let Some(s) = &s_ref {
            if s.len() != dim {
                return Err(CfpError::DimensionMismatch { expected: dim, found: s.len() });
            }
        }
        if z0.iter().any(|v| !v.is_finite()) {
            return Err(CfpError::InvalidSet("starting point has non-finite entries".into()));
        }
        Ok(Self { x, y, z0, s_ref, metadata })
    }

    /// Pair with default metadata and no reference solution.
    pub fn bare(x: ConvexSet, y: ConvexSet, z0: Point) -> Result<Self> {
        Self::new(x, y, z0, None, Metadata::default())
    }

    pub fn dim(&self) -> usize {
        self.x.dim()
    }

    /// Feasibility gap `delta(z) = max{dist(z, X), dist(z, Y)}`.
    pub fn gap(&self, z: &Point) -> Result<f64> {
        Ok(self.x.distance(z)?.max(self.y.distance(z)?))
    }

    /// Membership in `S = X ∩ Y` under the relative tolerance.
    pub fn is_feasible(&self, z: &Point, tol: f64) -> Result<bool> {
        Ok(self.gap(z)? <= tol * (1.0 + z.norm()))
    }
}
