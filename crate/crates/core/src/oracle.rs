//! Brute-force reference computations.
//!
//! These routines deliberately avoid the code paths in [`crate::geometry`] and
//! [`crate::circumcenter`]: bisection instead of Newton for ellipsoids,
//! gradient descent on a factorization instead of an eigendecomposition for
//! the PSD cone, and active-set enumeration for two-halfspace projections.
//! They are slow and only meant for cross-checking.

use nalgebra::{DMatrix, DVector};

/// Ellipsoid projection by plain bisection on the multiplier.
///
/// Returns `(x, lambda)`. Bisection runs on `[0, hi]` with `hi` doubled from
/// `1` until the secular function changes sign, and stops once
/// `|phi(lambda)| <= 1e-12` or the interval can no longer shrink.
pub fn ellipsoid_bisection(center: &[f64], diag: &[f64], z: &[f64]) -> (DVector<f64>, f64) {
    let phi = |lambda: f64| -> f64 {
        center
            .iter()
            .zip(diag)
            .zip(z)
            .map(|((c, d), zi)| {
                let xi = (zi - c) / (1.0 + lambda * d);
                d * xi * xi
            })
            .sum::<f64>()
            - 1.0
    };
    let point = |lambda: f64| {
        DVector::from_iterator(
            z.len(),
            center.iter().zip(diag).zip(z).map(|((c, d), zi)| c + (zi - c) / (1.0 + lambda * d)),
        )
    };
    if phi(0.0) <= 0.0 {
        return (DVector::from_column_slice(z), 0.0);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while phi(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = phi(mid);
        if v.abs() <= 1e-12 {
            return (point(mid), mid);
        }
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = 0.5 * (lo + hi);
    (point(lambda), lambda)
}

/// Nearest PSD matrix by gradient descent on `f(L) = 1/4 ||L L^T - M||_F^2`.
///
/// `m` is row-major `order x order` and is symmetrized first. The factor
/// starts from a small multiple of the identity and takes `steps` gradient
/// steps `L <- L - eta (L L^T - M) L`, stopping early once the gradient
/// vanishes to machine precision.
pub fn psd_factorized_gradient(order: usize, m: &[f64], steps: usize) -> DVector<f64> {
    let n = order;
    let raw = DMatrix::from_row_slice(n, n, m);
    let sym = (&raw + raw.transpose()).scale(0.5);
    let fro = sym.norm();
    if fro == 0.0 {
        return DVector::zeros(n * n);
    }
    let eta = 0.25 / (fro + 1e-300);
    let mut l = DMatrix::<f64>::identity(n, n).scale(1e-3 * fro.sqrt());
    for _ in 0..steps {
        let resid = &l * l.transpose() - &sym;
        let grad = &resid * &l;
        if grad.norm() <= 1e-15 * fro {
            break;
        }
        l -= grad.scale(eta);
    }
    let z = &l * l.transpose();
    DVector::from_iterator(n * n, (0..n * n).map(|k| z[(k / n, k % n)]))
}

/// Projection onto `{x : <a1, x> <= b1} ∩ {x : <a2, x> <= b2}` by enumerating
/// the four active sets and keeping the nearest feasible candidate.
pub fn project_two_halfspaces(a1: &DVector<f64>, b1: f64, a2: &DVector<f64>, b2: f64, z: &DVector<f64>) -> DVector<f64> {
    let feasible = |x: &DVector<f64>| {
        let s1 = 1e-12 * (1.0 + x.norm()) * a1.norm();
        let s2 = 1e-12 * (1.0 + x.norm()) * a2.norm();
        a1.dot(x) <= b1 + s1 && a2.dot(x) <= b2 + s2
    };
    let onto = |a: &DVector<f64>, b: f64, x: &DVector<f64>| x - a.scale((a.dot(x) - b) / a.dot(a));

    let mut candidates: Vec<DVector<f64>> = vec![z.clone(), onto(a1, b1, z), onto(a2, b2, z)];
    // Both constraints active: z - mu1 a1 - mu2 a2 with a Gram solve.
    let g11 = a1.dot(a1);
    let g12 = a1.dot(a2);
    let g22 = a2.dot(a2);
    let det = g11 * g22 - g12 * g12;
    if det.abs() > 1e-14 * (g11 * g22) {
        let r1 = a1.dot(z) - b1;
        let r2 = a2.dot(z) - b2;
        let mu1 = (g22 * r1 - g12 * r2) / det;
        let mu2 = (g11 * r2 - g12 * r1) / det;
        if mu1 >= 0.0 && mu2 >= 0.0 {
            candidates.push(z - a1.scale(mu1) - a2.scale(mu2));
        }
    }
    candidates
        .into_iter()
        .filter(|x| feasible(x))
        .min_by(|p, q| (p - z).norm().total_cmp(&(q - z).norm()))
        .expect("the intersection of two halfspaces through a common point is nonempty")
}

/// Closed-form halfspace projection written independently of the library.
pub fn halfspace_closed_form(normal: &[f64], offset: f64, z: &[f64]) -> Vec<f64> {
    let dot: f64 = normal.iter().zip(z).map(|(a, b)| a * b).sum();
    let nn: f64 = normal.iter().map(|a| a * a).sum();
    let t = ((dot - offset) / nn).max(0.0);
    z.iter().zip(normal).map(|(zi, ai)| zi - t * ai).collect()
}

pub fn box_closed_form(lo: &[f64], hi: &[f64], z: &[f64]) -> Vec<f64> {
    (0..z.len())
        .map(|i| if z[i] < lo[i] { lo[i] } else if z[i] > hi[i] { hi[i] } else { z[i] })
        .collect()
}

pub fn ball_closed_form(center: &[f64], radius: f64, z: &[f64]) -> Vec<f64> {
    let r: f64 = z.iter().zip(center).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt();
    let scale = if r <= radius { 1.0 } else { radius / r };
    z.iter().zip(center).map(|(a, c)| c + scale * (a - c)).collect()
}

/// Largest pairwise difference among `||c - z||, ||c - v||, ||c - w||`.
pub fn equidistance_violation(c: &DVector<f64>, z: &DVector<f64>, v: &DVector<f64>, w: &DVector<f64>) -> f64 {
    let dz = (c - z).norm();
    let dv = (c - v).norm();
    let dw = (c - w).norm();
    (dz - dv).abs().max((dz - dw).abs()).max((dv - dw).abs())
}

/// Distance from `c` to `aff{z, v, w}` via least squares on the normal equations.
pub fn affine_span_residual(c: &DVector<f64>, z: &DVector<f64>, v: &DVector<f64>, w: &DVector<f64>) -> f64 {
    let a = DMatrix::from_columns(&[v - z, w - z]);
    let rhs = c - z;
    let svd = a.clone().svd(true, true);
    match svd.solve(&rhs, 1e-13) {
        Ok(coef) => (&a * coef - rhs).norm(),
        Err(_) => f64::INFINITY,
    }
}
