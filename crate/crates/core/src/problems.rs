//! Seeded instance generators: PSD matrix completion, nearly tangent
//! ellipsoids, and halfspace wedges with a closed-form error-bound constant.
//!
//! All randomness comes from [`SplitMix64`] streams derived from the seed, so
//! an instance is a pure function of its [`GeneratorSpec`].

use std::path::Path;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{CfpError, Result};
use crate::geometry::{ConvexSet, MaskEntry, Metadata, Point, ProblemPair};
use crate::rng::SplitMix64;

/// Default tangency slack of the ellipsoid family.
pub const DEFAULT_TANGENCY_GAP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// `X = {M : M_ij = A_ij on Ω}`, `Y = S_+^n` with `A = B B^T`, `B` n x rank.
    MatrixCompletion { n: usize, rank: usize, obs_frac: f64 },
    /// Two axis-aligned ellipsoids overlapping in a thin lens around a known point.
    EllipsoidPair {
        n: usize,
        cond: f64,
        #[serde(default = "default_gap")]
        tangency_gap: f64,
    },
    /// Two halfspaces through the origin whose normals meet at angle `pi - angle`.
    HalfspaceWedge { n: usize, angle: f64 },
}

fn default_gap() -> f64 {
    DEFAULT_TANGENCY_GAP
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Self::MatrixCompletion { .. } => "matrix_completion",
            Self::EllipsoidPair { .. } => "ellipsoid_pair",
            Self::HalfspaceWedge { .. } => "halfspace_wedge",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CfpError::InvalidSpec(m));
        match *self {
            Self::MatrixCompletion { n, rank, obs_frac } => {
                if n == 0 || rank == 0 || rank >= n {
                    return bad(format!("need 0 < rank < n, got rank {rank}, n {n}"));
                }
                if !(obs_frac > 0.0 && obs_frac <= 1.0) {
                    return bad(format!("obs_frac {obs_frac} outside (0, 1]"));
                }
            }
            Self::EllipsoidPair { n, cond, tangency_gap } => {
                if n == 0 {
                    return bad("ellipsoid dimension must be positive".into());
                }
                if !(cond >= 1.0 && cond.is_finite()) {
                    return bad(format!("condition number {cond} must be >= 1"));
                }
                if !(tangency_gap > 0.0 && tangency_gap < 1.0) {
                    return bad(format!("tangency gap {tangency_gap} outside (0, 1)"));
                }
            }
            Self::HalfspaceWedge { n, angle } => {
                if n < 2 {
                    return bad("wedge needs dimension >= 2".into());
                }
                if !(angle > 0.0 && angle <= std::f64::consts::FRAC_PI_2) {
                    return bad(format!("wedge angle {angle} outside (0, pi/2]"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub family: Family,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(family: Family, seed: u64) -> Self {
        Self { family, seed }
    }

    pub fn generate(&self) -> Result<ProblemPair> {
        match self.family {
            Family::MatrixCompletion { n, rank, obs_frac } => gen_matrix_completion(n, rank, obs_frac, self.seed),
            Family::EllipsoidPair { n, cond, tangency_gap } => gen_ellipsoids(n, cond, tangency_gap, self.seed),
            Family::HalfspaceWedge { n, angle } => gen_halfspace_wedge(n, angle, self.seed),
        }
    }
}

/// PSD matrix completion: `A = B B^T` with standard normal `B` (n x r), and a
/// symmetric mask of at least `ceil(obs_frac n^2)` entries. The starting point
/// is `A` on the mask and zero elsewhere; `A` is the reference solution.
///
/// The affine mask set is `X` and the PSD cone is `Y`. With the opposite
/// assignment every iterate after the first lies in the affine set, which makes
/// the step size irrelevant (all points of `[t, P_X t]` share one PCRM image)
/// and reduces the `YXY` kernel to `XY`.
pub fn gen_matrix_completion(n: usize, rank: usize, obs_frac: f64, seed: u64) -> Result<ProblemPair> {
    let family = Family::MatrixCompletion { n, rank, obs_frac };
    family.validate()?;

    let mut rng = SplitMix64::substream(seed, 1);
    let b = rng.normal_vec(n * rank);
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v: f64 = (0..rank).map(|l| b[i * rank + l] * b[j * rank + l]).sum();
            a[i * n + j] = v;
            a[j * n + i] = v;
        }
    }

    let mut mask_rng = SplitMix64::substream(seed, 2);
    let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    mask_rng.shuffle(&mut pairs);
    let target = (obs_frac * (n * n) as f64).ceil() as usize;
    let mut chosen = Vec::new();
    let mut covered = 0;
    for (i, j) in pairs {
        if covered >= target {
            break;
        }
        chosen.push((i, j));
        covered += if i == j { 1 } else { 2 };
    }
    let mut entries: Vec<MaskEntry> = chosen
        .iter()
        .flat_map(|&(i, j)| {
            let v = a[i * n + j];
            if i == j {
                vec![MaskEntry(i, i, v)]
            } else {
                vec![MaskEntry(i, j, v), MaskEntry(j, i, v)]
            }
        })
        .collect();
    entries.sort_by_key(|e| (e.0, e.1));

    let mut z0 = vec![0.0; n * n];
    for e in &entries {
        z0[e.0 * n + e.1] = e.2;
    }
    let metadata = Metadata {
        family: family.name().into(),
        seed: Some(seed),
        params: [
            ("n".to_string(), n as f64),
            ("rank".to_string(), rank as f64),
            ("obs_frac".to_string(), obs_frac),
            ("observed".to_string(), entries.len() as f64),
        ]
        .into_iter()
        .collect(),
    };
    ProblemPair::new(
        ConvexSet::entry_mask(n, entries)?,
        ConvexSet::psd_cone(n)?,
        Point::from_vec(z0),
        Some(Point::from_vec(a)),
        metadata,
    )
}

/// Two axis-aligned ellipsoids `sum_i d_i (x_i - c_i)^2 <= 1` whose scales are
/// log-uniform on `[1, cond]`. Both share the scale `d_0` along the first axis
/// and their centers sit at `p -/+ t e_0` with `d_0 t^2 = 1 - tangency_gap`, so
/// `p = 0` is interior to both with the same slack and the intersection is a
/// thin lens around `p`. The start is `p + 2 u / sqrt(min d)` for a random unit
/// direction `u`.
pub fn gen_ellipsoids(n: usize, cond: f64, tangency_gap: f64, seed: u64) -> Result<ProblemPair> {
    let family = Family::EllipsoidPair { n, cond, tangency_gap };
    family.validate()?;

    let mut rng = SplitMix64::substream(seed, 1);
    let ln_cond = cond.ln();
    let mut draw = || (ln_cond * rng.uniform()).exp();
    let d0 = draw();
    let mut d1 = vec![d0];
    let mut d2 = vec![d0];
    for _ in 1..n {
        d1.push(draw());
    }
    for _ in 1..n {
        d2.push(draw());
    }

    let t = ((1.0 - tangency_gap) / d0).sqrt();
    let mut c1 = vec![0.0; n];
    let mut c2 = vec![0.0; n];
    c1[0] = -t;
    c2[0] = t;

    let mut dir_rng = SplitMix64::substream(seed, 2);
    let u = Point::from_vec(dir_rng.normal_vec(n));
    let u = &u / u.norm();
    let dmin = d1.iter().chain(&d2).cloned().fold(f64::INFINITY, f64::min);
    let z0 = u.scale(2.0 / dmin.sqrt());

    let metadata = Metadata {
        family: family.name().into(),
        seed: Some(seed),
        params: [
            ("n".to_string(), n as f64),
            ("cond".to_string(), cond),
            ("tangency_gap".to_string(), tangency_gap),
        ]
        .into_iter()
        .collect(),
    };
    ProblemPair::new(
        ConvexSet::ellipsoid(c1, d1)?,
        ConvexSet::ellipsoid(c2, d2)?,
        z0,
        Some(Point::zeros(n)),
        metadata,
    )
}

/// `X = {x_0 <= 0}`, `Y = {-cos(angle) x_0 + sin(angle) x_1 <= 0}`. The
/// normals meet at `pi - angle`, `X ∩ Y` is a wedge of opening `angle`, and the
/// error bound holds globally with `omega = sin(angle / 2)` (stored in
/// `metadata.params["omega"]`). The start is a seeded standard normal point.
pub fn gen_halfspace_wedge(n: usize, angle: f64, seed: u64) -> Result<ProblemPair> {
    let family = Family::HalfspaceWedge { n, angle };
    family.validate()?;
    let mut a = vec![0.0; n];
    a[0] = 1.0;
    let mut b = vec![0.0; n];
    b[0] = -angle.cos();
    b[1] = angle.sin();
    let mut rng = SplitMix64::substream(seed, 1);
    let z0 = Point::from_vec(rng.normal_vec(n));
    let omega = (0.5 * angle).sin();
    let metadata = Metadata {
        family: family.name().into(),
        seed: Some(seed),
        params: [("n".to_string(), n as f64), ("angle".to_string(), angle), ("omega".to_string(), omega)]
            .into_iter()
            .collect(),
    };
    ProblemPair::new(ConvexSet::halfspace(a, 0.0)?, ConvexSet::halfspace(b, 0.0)?, z0, Some(Point::zeros(n)), metadata)
}

/// Self-describing instance document for cross-implementation replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
    pub x: ConvexSet,
    pub y: ConvexSet,
    pub z0: Vec<f64>,
    #[serde(default)]
    pub s_ref: Option<Vec<f64>>,
    #[serde(default)]
    pub metadata: Metadata,
}

impl InstanceDocument {
    pub fn from_pair(pair: &ProblemPair, generator: Option<GeneratorSpec>) -> Self {
        Self {
            generator,
            x: pair.x.clone(),
            y: pair.y.clone(),
            z0: pair.z0.as_slice().to_vec(),
            s_ref: pair.s_ref.as_ref().map(|s| s.as_slice().to_vec()),
            metadata: pair.metadata.clone(),
        }
    }

    pub fn into_pair(self) -> Result<ProblemPair> {
        ProblemPair::new(
            self.x,
            self.y,
            Point::from_vec(self.z0),
            self.s_ref.map(Point::from_vec),
            self.metadata,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<ProblemPair> {
        Self::from_json(&std::fs::read_to_string(path)?)?.into_pair()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_observation_pins_matrix() {
        let pair = gen_matrix_completion(2, 1, 1.0, 0).unwrap();
        let a = pair.s_ref.clone().unwrap();
        match &pair.x {
            ConvexSet::EntryMask { entries, .. } => assert_eq!(entries.len(), 4),
            other => panic!("{other:?}"),
        }
        assert_eq!(pair.z0, a);
        assert!(pair.gap(&a).unwrap() < 1e-12);
    }

    #[test]
    fn matrix_completion_reference_is_feasible() {
        let pair = gen_matrix_completion(30, 3, 0.4, 1).unwrap();
        let a = pair.s_ref.as_ref().unwrap();
        assert!(pair.gap(a).unwrap() <= 1e-10 * (1.0 + a.norm()));
        let observed = pair.metadata.params["observed"] as usize;
        assert!((360..=361).contains(&observed));
    }

    #[test]
    fn completion_target_is_psd_with_requested_rank() {
        let (n, r) = (20, 3);
        let pair = gen_matrix_completion(n, r, 0.4, 7).unwrap();
        let a = nalgebra::DMatrix::from_row_slice(n, n, pair.s_ref.as_ref().unwrap().as_slice());
        let norm = a.norm();
        let eig = a.symmetric_eigen().eigenvalues;
        assert!(eig.iter().all(|&l| l >= -1e-10 * norm));
        let significant = eig.iter().filter(|&&l| l > 1e-10 * norm).count();
        assert_eq!(significant, r);
    }

    /// Exit distance of the ray `p + r u` from `{sum d_i (x_i - c_i)^2 <= 1}`,
    /// found by bisection on `r`.
    fn ray_exit(center: &[f64], diag: &[f64], p: &[f64], u: &[f64]) -> f64 {
        let q = |r: f64| -> f64 {
            (0..p.len()).map(|i| diag[i] * (p[i] + r * u[i] - center[i]).powi(2)).sum()
        };
        if q(0.0) >= 1.0 {
            return 0.0;
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        while q(hi) < 1.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if q(mid) < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    #[test]
    fn ellipsoid_probes_confirm_interior_point() {
        let pair = gen_ellipsoids(200, 20.0, DEFAULT_TANGENCY_GAP, 1).unwrap();
        let p = pair.s_ref.clone().unwrap();
        assert_eq!(pair.gap(&p).unwrap(), 0.0);
        let mut rng = SplitMix64::new(99);
        let mut min_exit = f64::INFINITY;
        for _ in 0..100 {
            let u = Point::from_vec(rng.normal_vec(200));
            let u = &u / u.norm();
            for set in [&pair.x, &pair.y] {
                if let ConvexSet::Ellipsoid { center, diag } = set {
                    min_exit = min_exit.min(ray_exit(center, diag, p.as_slice(), u.as_slice()));
                }
            }
        }
        assert!(min_exit > 0.0, "probe left an ellipsoid immediately");
    }

    #[test]
    fn wedge_error_bound_holds_on_samples() {
        let angle = std::f64::consts::FRAC_PI_3;
        let pair = gen_halfspace_wedge(5, angle, 2).unwrap();
        let omega = pair.metadata.params["omega"];
        let (a, b) = match (&pair.x, &pair.y) {
            (ConvexSet::Halfspace { normal: a, .. }, ConvexSet::Halfspace { normal: b, .. }) => {
                (Point::from_column_slice(a), Point::from_column_slice(b))
            }
            _ => panic!("expected halfspaces"),
        };
        let mut rng = SplitMix64::new(5);
        let mut worst = f64::INFINITY;
        for _ in 0..20_000 {
            let z = Point::from_vec(rng.normal_vec(5));
            let ds = (&z - crate::oracle::project_two_halfspaces(&a, 0.0, &b, 0.0, &z)).norm();
            if ds > 1e-12 {
                worst = worst.min(pair.gap(&z).unwrap() / ds);
            }
        }
        assert!(worst >= omega - 1e-12, "sampled ratio {worst} below omega {omega}");
        assert!(worst < omega + 0.05, "sampling never came close to the worst case");
    }

    #[test]
    fn ellipsoid_reference_is_interior() {
        let gap = 1e-3;
        let pair = gen_ellipsoids(200, 20.0, gap, 1).unwrap();
        let p = pair.s_ref.as_ref().unwrap();
        assert_eq!(pair.gap(p).unwrap(), 0.0);
        for set in [&pair.x, &pair.y] {
            if let ConvexSet::Ellipsoid { center, diag } = set {
                let q: f64 = center.iter().zip(diag).zip(p.iter()).map(|((c, d), x)| d * (x - c).powi(2)).sum();
                assert!(q <= 1.0 - gap + 1e-15);
                assert!(diag.iter().all(|&d| (1.0..=20.0).contains(&d)));
            }
        }
    }

    #[test]
    fn isotropic_ellipsoids_are_offset_balls() {
        let pair = gen_ellipsoids(3, 1.0, 0.5, 4).unwrap();
        if let (ConvexSet::Ellipsoid { center: c1, diag: d1 }, ConvexSet::Ellipsoid { center: c2, diag: d2 }) = (&pair.x, &pair.y)
        {
            assert!(d1.iter().chain(d2).all(|&d| d == 1.0));
            assert_eq!(c1[0], -c2[0]);
        } else {
            panic!("expected ellipsoids");
        }
        assert_eq!(pair.gap(pair.s_ref.as_ref().unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn wedge_constant_and_origin() {
        let pair = gen_halfspace_wedge(2, std::f64::consts::FRAC_PI_2, 3).unwrap();
        assert!((pair.metadata.params["omega"] - std::f64::consts::FRAC_PI_4.sin()).abs() < 1e-15);
        assert_eq!(pair.gap(&Point::zeros(2)).unwrap(), 0.0);
    }

    #[test]
    fn specs_are_validated() {
        assert!(gen_matrix_completion(5, 5, 0.4, 0).is_err());
        assert!(gen_matrix_completion(5, 2, 0.0, 0).is_err());
        assert!(gen_ellipsoids(5, 0.5, 1e-3, 0).is_err());
        assert!(gen_ellipsoids(5, 20.0, 0.0, 0).is_err());
        assert!(gen_halfspace_wedge(1, 0.5, 0).is_err());
        assert!(gen_halfspace_wedge(3, 2.0, 0).is_err());
    }

    #[test]
    fn regeneration_is_bit_identical() {
        for spec in [
            GeneratorSpec::new(Family::MatrixCompletion { n: 12, rank: 2, obs_frac: 0.4 }, 5),
            GeneratorSpec::new(Family::EllipsoidPair { n: 20, cond: 20.0, tangency_gap: 1e-3 }, 5),
            GeneratorSpec::new(Family::HalfspaceWedge { n: 4, angle: 0.7 }, 5),
        ] {
            assert_eq!(spec.generate().unwrap(), spec.generate().unwrap());
        }
    }

    #[test]
    fn document_round_trip() {
        let spec = GeneratorSpec::new(Family::MatrixCompletion { n: 4, rank: 1, obs_frac: 0.5 }, 9);
        let pair = spec.generate().unwrap();
        let doc = InstanceDocument::from_pair(&pair, Some(spec.clone()));
        let json = doc.to_json().unwrap();
        assert!(json.contains("\"family\": \"matrix_completion\""));
        let back = InstanceDocument::from_json(&json).unwrap();
        assert_eq!(back.generator, Some(spec));
        assert_eq!(back.into_pair().unwrap(), pair);
    }
}
