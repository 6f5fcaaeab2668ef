//! Circumcenters of three points and the parallel circumcentered-reflection
//! operator `PCRM(z) = circ(z, R_X z, R_Y z)`.

use crate::error::{CfpError, Result};
use crate::geometry::{Point, ProblemPair};

/// Threshold on `|det G| / (G_11 G_22)`, the squared sine of the angle between
/// `v - z` and `w - z`, below which the Gram system is treated as rank
/// deficient. Independent of the lengths of the two sides.
pub const GRAM_DET_REL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CircumcenterCase {
    FullRank,
    /// Two of the three points coincide; the center is the midpoint of the
    /// two distinct ones.
    CoincidentPair,
    AllCoincident,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircumcenterResult {
    pub center: Point,
    pub case: CircumcenterCase,
    /// Residual of the equidistance conditions in the span coordinates.
    pub residual: f64,
}

/// Circumcenter of `{z, v, w}`: the point of `aff{z, v, w}` equidistant from
/// all three.
///
/// Writes `c = z + s (v - z) + t (w - z)` and solves `G (s, t) = (|v-z|^2/2, |w-z|^2/2)`
/// with `G` the Gram matrix of `(v - z, w - z)`.
pub fn circumcenter(z: &Point, v: &Point, w: &Point) -> Result<CircumcenterResult> {
    if v.len() != z.len() || w.len() != z.len() {
        let found = if v.len() != z.len() { v.len() } else { w.len() };
        return Err(CfpError::DimensionMismatch { expected: z.len(), found });
    }
    let a = v - z;
    let b = w - z;
    let g11 = a.norm_squared();
    let g22 = b.norm_squared();
    let g12 = a.dot(&b);
    let (r1, r2) = (0.5 * g11, 0.5 * g22);
    let det = g11 * g22 - g12 * g12;
    if g11 > 0.0 && g22 > 0.0 && det.abs() > GRAM_DET_REL * g11 * g22 {
        let s = (g22 * r1 - g12 * r2) / det;
        let t = (g11 * r2 - g12 * r1) / det;
        let residual = (g11 * s + g12 * t - r1).abs().max((g12 * s + g22 * t - r2).abs());
        let center = z + a.scale(s) + b.scale(t);
        return Ok(CircumcenterResult { center, case: CircumcenterCase::FullRank, residual });
    }

    // Rank-deficient Gram matrix: decide which points coincide.
    let scale = g11.sqrt().max(g22.sqrt());
    let tiny = 1e-7 * scale;
    let na = g11.sqrt();
    let nb = g22.sqrt();
    let nab = (&a - &b).norm();
    if scale == 0.0 {
        return Ok(CircumcenterResult { center: z.clone(), case: CircumcenterCase::AllCoincident, residual: 0.0 });
    }
    let (center, residual) = if nab <= tiny {
        // v = w
        ((z + v).scale(0.5), nab)
    } else if na <= tiny {
        // v = z
        ((z + w).scale(0.5), na)
    } else if nb <= tiny {
        // w = z
        ((z + v).scale(0.5), nb)
    } else {
        // Distinct and collinear: along the common line the equidistance
        // conditions ask for s = |a|/2 and s = <b, a/|a|>/2 at once.
        let residual = 0.5 * (na - g12 / na).abs();
        return Err(CfpError::DegenerateCircumcenter { residual });
    };
    Ok(CircumcenterResult { center, case: CircumcenterCase::CoincidentPair, residual })
}

/// `PCRM(z) = circ(z, R_X z, R_Y z)` with explicit shortcuts: when `z ∈ Y` the
/// result is `P_X z`, and when `z ∈ X` it is `P_Y z`. Membership uses
/// `membership_tol` relative to `1 + ||z||`.
pub fn pcrm(pair: &ProblemPair, z: &Point, membership_tol: f64) -> Result<Point> {
    let px = pair.x.project(z)?;
    let py = pair.y.project(z)?;
    pcrm_from_projections(z, &px, &py, membership_tol)
}

/// PCRM given precomputed `P_X z` and `P_Y z`.
pub fn pcrm_from_projections(z: &Point, px: &Point, py: &Point, membership_tol: f64) -> Result<Point> {
    let tol = membership_tol * (1.0 + z.norm());
    let dx = (z - px).norm();
    let dy = (z - py).norm();
    if dy <= tol {
        return Ok(px.clone());
    }
    if dx <= tol {
        return Ok(py.clone());
    }
    let rx = px.scale(2.0) - z;
    let ry = py.scale(2.0) - z;
    Ok(circumcenter(z, &rx, &ry)?.center)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ConvexSet;
    use crate::oracle;
    use crate::rng::SplitMix64;
    use nalgebra::dvector;

    fn pt(v: &[f64]) -> Point {
        Point::from_column_slice(v)
    }

    #[test]
    fn right_triangle_hypotenuse_midpoint() {
        let r = circumcenter(&pt(&[0.0, 0.0]), &pt(&[2.0, 0.0]), &pt(&[0.0, 2.0])).unwrap();
        assert_eq!(r.case, CircumcenterCase::FullRank);
        assert!((r.center - dvector![1.0, 1.0]).norm() < 1e-15);
    }

    #[test]
    fn all_coincident() {
        let p = pt(&[3.0, -1.0]);
        let r = circumcenter(&p, &p, &p).unwrap();
        assert_eq!(r.case, CircumcenterCase::AllCoincident);
        assert_eq!(r.center, p);
    }

    #[test]
    fn coincident_pairs_give_midpoints() {
        let z = pt(&[0.0, 0.0]);
        let v = pt(&[2.0, 4.0]);
        let r = circumcenter(&z, &v, &v).unwrap();
        assert_eq!(r.case, CircumcenterCase::CoincidentPair);
        assert_eq!(r.center, dvector![1.0, 2.0]);
        let r = circumcenter(&z, &z, &v).unwrap();
        assert_eq!(r.center, dvector![1.0, 2.0]);
        let r = circumcenter(&z, &v, &z).unwrap();
        assert_eq!(r.center, dvector![1.0, 2.0]);
    }

    #[test]
    fn collinear_distinct_points_fail() {
        let r = circumcenter(&pt(&[0.0, 0.0]), &pt(&[1.0, 0.0]), &pt(&[3.0, 0.0]));
        assert!(matches!(r, Err(CfpError::DegenerateCircumcenter { .. })));
    }

    #[test]
    fn random_triple_in_r5_is_equidistant() {
        let mut rng = SplitMix64::new(11);
        let z = Point::from_vec(rng.normal_vec(5));
        let v = Point::from_vec(rng.normal_vec(5));
        let w = Point::from_vec(rng.normal_vec(5));
        let c = circumcenter(&z, &v, &w).unwrap().center;
        assert!(oracle::equidistance_violation(&c, &z, &v, &w) < 1e-10);
        assert!(oracle::affine_span_residual(&c, &z, &v, &w) < 1e-10);
    }

    fn orthogonal_halfspaces() -> ProblemPair {
        let x = ConvexSet::halfspace(vec![1.0, 0.0], 0.0).unwrap();
        let y = ConvexSet::halfspace(vec![0.0, 1.0], 0.0).unwrap();
        ProblemPair::bare(x, y, pt(&[1.0, 1.0])).unwrap()
    }

    #[test]
    fn pcrm_shortcut_when_in_y() {
        let pair = orthogonal_halfspaces();
        let r = pcrm(&pair, &pt(&[1.0, 0.0]), 1e-12).unwrap();
        assert_eq!(r, dvector![0.0, 0.0]);
    }

    #[test]
    fn pcrm_fixes_feasible_points() {
        let pair = orthogonal_halfspaces();
        let s = pt(&[-1.0, -2.0]);
        assert_eq!(pcrm(&pair, &s, 1e-12).unwrap(), s);
    }

    #[test]
    fn pcrm_matches_two_halfspace_qp() {
        let pair = orthogonal_halfspaces();
        let z = pt(&[1.0, 1.0]);
        let got = pcrm(&pair, &z, 1e-12).unwrap();
        let a1 = dvector![1.0, 0.0];
        let a2 = dvector![0.0, 1.0];
        let want = oracle::project_two_halfspaces(&a1, 0.0, &a2, 0.0, &z);
        assert!((got - want).norm() < 1e-12);
    }
}
