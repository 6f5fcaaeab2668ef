//! Acceptance checks. Runs as a plain binary (no libtest harness) and prints
//! one PASS/FAIL line per criterion; exits nonzero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use eccrm::bench::{run_matrix, ExperimentConfig};
use eccrm::circumcenter::{circumcenter, pcrm};
use eccrm::geometry::{project_psd, ConvexSet, Point, ProblemPair};
use eccrm::operators::{apply_kernel, centralization_inner_product, centralize, is_strictly_centralized, KernelSpec, StepValue};
use eccrm::oracle;
use eccrm::problems::{gen_ellipsoids, gen_halfspace_wedge, gen_matrix_completion, Family};
use eccrm::solver::{estimate_rate, solve, Merit, Method, RateClass, RateOptions, RunStatus, SolverConfig, StepSchedule};
use eccrm::SplitMix64;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

type Criterion = (&'static str, Option<Duration>, fn() -> Verdict);

fn jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("projection oracle equivalence", Some(Duration::from_secs(30)), projection_oracles),
        ("circumcenter correctness", Some(Duration::from_secs(10)), circumcenter_correctness),
        ("centralization invariant", None, centralization_invariant),
        ("Fejer suite", None, fejer_suite),
        ("rate sandwich on halfspace wedge", Some(Duration::from_secs(5)), rate_sandwich),
        ("superlinearity detection", Some(Duration::from_secs(60)), superlinearity),
        ("deep kernel and step-size trend, matrix completion", Some(Duration::from_secs(300)), kernel_trend),
        ("vanishing step trend, ellipsoids", Some(Duration::from_secs(120)), vanishing_trend),
        ("cost accounting", None, cost_accounting),
        ("determinism", None, determinism),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut v = match catch_unwind(AssertUnwindSafe(check)) {
            Ok(v) => v,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                verdict(false, format!("panicked: {msg}"))
            }
        };
        let elapsed = start.elapsed();
        if let Some(b) = budget {
            if elapsed > *b {
                v.pass = false;
                v.detail.push_str(&format!("; over runtime budget of {:.0}s", b.as_secs_f64()));
            }
        }
        if !v.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {}: {} ({:.2}s) {}",
            i + 1,
            if v.pass { "PASS" } else { "FAIL" },
            name,
            elapsed.as_secs_f64(),
            v.detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn random_point(rng: &mut SplitMix64, n: usize, scale: f64) -> Point {
    Point::from_vec(rng.normal_vec(n)).scale(scale)
}

fn rel(got: &Point, want: &Point) -> f64 {
    (got - want).norm() / want.norm().max(1.0)
}

fn projection_oracles() -> Verdict {
    const CASES: usize = 200;
    const TOL: f64 = 1e-8;
    let mut worst = [0.0f64; 5];
    for case in 0..CASES as u64 {
        let mut rng = SplitMix64::substream(case, 101);
        let n = 2 + rng.below(9);
        let z = random_point(&mut rng, n, 3.0);

        let normal = rng.normal_vec(n);
        let offset = rng.normal();
        let got = ConvexSet::halfspace(normal.clone(), offset).unwrap().project(&z).unwrap();
        let want = Point::from_vec(oracle::halfspace_closed_form(&normal, offset, z.as_slice()));
        worst[0] = worst[0].max(rel(&got, &want));

        let lo: Vec<f64> = (0..n).map(|_| rng.uniform_in(-2.0, 0.5)).collect();
        let hi: Vec<f64> = lo.iter().map(|l| l + rng.uniform_in(0.0, 2.0)).collect();
        let got = ConvexSet::axis_box(lo.clone(), hi.clone()).unwrap().project(&z).unwrap();
        let want = Point::from_vec(oracle::box_closed_form(&lo, &hi, z.as_slice()));
        worst[1] = worst[1].max(rel(&got, &want));

        let center = rng.normal_vec(n);
        let radius = rng.uniform_in(0.1, 3.0);
        let got = ConvexSet::ball(center.clone(), radius).unwrap().project(&z).unwrap();
        let want = Point::from_vec(oracle::ball_closed_form(&center, radius, z.as_slice()));
        worst[2] = worst[2].max(rel(&got, &want));

        let diag: Vec<f64> = (0..n).map(|_| (rng.uniform() * 100f64.ln()).exp()).collect();
        let got = ConvexSet::ellipsoid(center.clone(), diag.clone()).unwrap().project(&z).unwrap();
        let want = oracle::ellipsoid_bisection(&center, &diag, z.as_slice()).0;
        worst[3] = worst[3].max(rel(&got, &want));

        let order = 2 + rng.below(5);
        let m = random_point(&mut rng, order * order, 1.0);
        let got = project_psd(order, &m).unwrap();
        let want = oracle::psd_factorized_gradient(order, m.as_slice(), 400_000);
        worst[4] = worst[4].max(rel(&got, &want));
    }
    let names = ["halfspace", "box", "ball", "ellipsoid", "psd"];
    let detail = names.iter().zip(worst).map(|(n, w)| format!("{n} {w:.1e}")).collect::<Vec<_>>().join(", ");
    verdict(worst.iter().all(|&w| w <= TOL), format!("{CASES} cases per set, worst relative error: {detail}"))
}

/// Two halfspaces through a common point and a point violating both whose
/// displacements to the two projections make an obtuse angle.
fn centralized_halfspaces(rng: &mut SplitMix64, n: usize) -> (Point, f64, Point, f64, Point) {
    loop {
        let a1 = random_point(rng, n, 1.0);
        let a2 = random_point(rng, n, 1.0);
        if a1.dot(&a2) >= -0.05 * a1.norm() * a2.norm() {
            continue;
        }
        let p = random_point(rng, n, 1.0);
        let z = &p + a1.scale(rng.uniform_in(0.1, 2.0) / a1.norm()) + a2.scale(rng.uniform_in(0.1, 2.0) / a2.norm());
        let (b1, b2) = (a1.dot(&p), a2.dot(&p));
        if a1.dot(&z) > b1 && a2.dot(&z) > b2 {
            return (a1, b1, a2, b2, z);
        }
    }
}

fn circumcenter_correctness() -> Verdict {
    let mut rng = SplitMix64::new(2024);
    let mut worst_eq = 0.0f64;
    let mut worst_span = 0.0f64;
    for _ in 0..1000 {
        let n = 2 + rng.below(9);
        let z = random_point(&mut rng, n, 1.0);
        let v = random_point(&mut rng, n, 1.0);
        let w = random_point(&mut rng, n, 1.0);
        let c = circumcenter(&z, &v, &w).unwrap().center;
        let scale = 1.0 + z.norm().max(v.norm()).max(w.norm());
        worst_eq = worst_eq.max(oracle::equidistance_violation(&c, &z, &v, &w) / scale);
        worst_span = worst_span.max(oracle::affine_span_residual(&c, &z, &v, &w) / scale);
    }
    let mut worst_qp = 0.0f64;
    for _ in 0..1000 {
        let n = 2 + rng.below(9);
        let (a1, b1, a2, b2, z) = centralized_halfspaces(&mut rng, n);
        let pair = ProblemPair::bare(
            ConvexSet::halfspace(a1.as_slice().to_vec(), b1).unwrap(),
            ConvexSet::halfspace(a2.as_slice().to_vec(), b2).unwrap(),
            z.clone(),
        )
        .unwrap();
        assert!(is_strictly_centralized(&pair, &z, 1e-12).unwrap());
        let got = pcrm(&pair, &z, 1e-12).unwrap();
        let want = oracle::project_two_halfspaces(&a1, b1, &a2, b2, &z);
        worst_qp = worst_qp.max(rel(&got, &want));
    }
    verdict(
        worst_eq <= 1e-9 && worst_span <= 1e-9 && worst_qp <= 1e-8,
        format!("equidistance {worst_eq:.1e}, affine span {worst_span:.1e}, PCRM vs QP {worst_qp:.1e}"),
    )
}

/// Random pair of sets sharing the point `s`.
fn random_pair(rng: &mut SplitMix64, n: usize) -> (ProblemPair, Point) {
    let s = random_point(rng, n, 1.0);
    let make = |rng: &mut SplitMix64| -> ConvexSet {
        match rng.below(4) {
            0 => {
                let a = rng.normal_vec(n);
                let b = a.iter().zip(s.iter()).map(|(x, y)| x * y).sum::<f64>() + rng.uniform_in(0.0, 0.5);
                ConvexSet::halfspace(a, b).unwrap()
            }
            1 => {
                let c: Vec<f64> = s.iter().map(|x| x + rng.normal()).collect();
                let r = (Point::from_column_slice(&c) - &s).norm() + rng.uniform_in(0.0, 0.5);
                ConvexSet::ball(c, r).unwrap()
            }
            2 => {
                let lo: Vec<f64> = s.iter().map(|x| x - rng.uniform_in(0.0, 1.0)).collect();
                let hi: Vec<f64> = s.iter().map(|x| x + rng.uniform_in(0.0, 1.0)).collect();
                ConvexSet::axis_box(lo, hi).unwrap()
            }
            _ => {
                let diag: Vec<f64> = (0..n).map(|_| (rng.uniform() * 20f64.ln()).exp()).collect();
                let dir = Point::from_vec(rng.normal_vec(n));
                let q: f64 = (0..n).map(|i| diag[i] * dir[i] * dir[i]).sum();
                // Center placed so that s sits at quadratic value in (0, 1).
                let t = rng.uniform_in(0.2, 0.99).sqrt() / q.sqrt();
                let c: Vec<f64> = (0..n).map(|i| s[i] + t * dir[i]).collect();
                ConvexSet::ellipsoid(c, diag).unwrap()
            }
        }
    };
    let x = make(rng);
    let y = make(rng);
    let z0 = random_point(rng, n, 4.0);
    (ProblemPair::new(x, y, z0, Some(s.clone()), Default::default()).unwrap(), s)
}

fn random_kernel(rng: &mut SplitMix64) -> KernelSpec {
    match rng.below(3) {
        0 => KernelSpec::basic(),
        1 => KernelSpec::ccrm(),
        _ => KernelSpec::deep(),
    }
}

fn centralization_invariant() -> Verdict {
    let mut rng = SplitMix64::new(33);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let n = 2 + rng.below(7);
        let (pair, _) = random_pair(&mut rng, n);
        let alpha = StepValue::new(rng.uniform_in(1e-3, 1.0 - 1e-3)).unwrap();
        let (t, _) = apply_kernel(&random_kernel(&mut rng), &pair, &pair.z0).unwrap();
        let (nz, _) = centralize(&pair, &t, alpha).unwrap();
        let ip = centralization_inner_product(&pair, &nz).unwrap();
        worst = worst.max(ip / (1.0 + nz.norm_squared()));
    }
    let mut constructed = 0;
    let mut strict = 0;
    while constructed < 1000 {
        let n = 2 + rng.below(7);
        let (pair, _) = random_pair(&mut rng, n);
        let x = pair.x.project(&random_point(&mut rng, n, 4.0)).unwrap();
        let t = pair.y.project(&x).unwrap();
        if pair.gap(&t).unwrap() <= 1e-9 {
            continue;
        }
        constructed += 1;
        let alpha = StepValue::new(rng.uniform_in(1e-3, 1.0 - 1e-3)).unwrap();
        let (nz, _) = centralize(&pair, &t, alpha).unwrap();
        if is_strictly_centralized(&pair, &nz, 1e-12).unwrap() {
            strict += 1;
        }
    }
    verdict(
        worst <= 1e-9 && strict == constructed,
        format!("max scaled inner product {worst:.1e}; strictly centralized {strict}/{constructed} from P_Y(X) minus S"),
    )
}

fn methods_under_test() -> Vec<Method> {
    let mut m = Vec::new();
    for k in [KernelSpec::basic(), KernelSpec::ccrm(), KernelSpec::deep()] {
        m.push(Method::eccrm(k.clone(), StepSchedule::Constant { alpha: 0.5 }));
        m.push(Method::eccrm(k.clone(), StepSchedule::Constant { alpha: 0.2 }));
        m.push(Method::eccrm(k, StepSchedule::Vanishing));
    }
    m
}

fn fejer_suite() -> Verdict {
    let mut instances = Vec::new();
    for seed in 0..3 {
        instances.push((gen_matrix_completion(8, 2, 0.5, seed).unwrap(), 1e-4, 3000));
        instances.push((gen_ellipsoids(40, 20.0, 1e-3, seed).unwrap(), 1e-12, 3000));
        instances.push((gen_halfspace_wedge(5, 0.3 + 0.4 * seed as f64, seed).unwrap(), 1e-12, 3000));
    }
    let mut runs = 0;
    let mut steps = 0;
    let mut worst_step = f64::NEG_INFINITY;
    let mut worst_sum = f64::NEG_INFINITY;
    for (pair, eps, max_iter) in &instances {
        for method in methods_under_test() {
            let trace = solve(pair, &SolverConfig::new(method, *eps, *max_iter)).unwrap();
            runs += 1;
            let d0 = trace.records[0].dist_sref.unwrap();
            let scale = 1.0 + d0 * d0;
            for w in trace.records.windows(2) {
                let (a, b) = (w[0].dist_sref.unwrap(), w[1].dist_sref.unwrap());
                let excess = b * b - (a * a - w[1].delta * w[1].delta);
                worst_step = worst_step.max(excess / scale);
                steps += 1;
            }
            // Sum over the iterates produced by the method, z_1, z_2, ...
            let sum: f64 = trace.records.iter().skip(1).map(|r| r.delta * r.delta).sum();
            worst_sum = worst_sum.max((sum - d0 * d0) / scale);
        }
    }
    verdict(
        worst_step <= 1e-8 && worst_sum <= 1e-8,
        format!("{runs} runs, {steps} steps; worst per-step excess {worst_step:.1e}, worst telescoped excess {worst_sum:.1e} (scaled)"),
    )
}

fn wedge_normals(pair: &ProblemPair) -> (Point, Point) {
    match (&pair.x, &pair.y) {
        (ConvexSet::Halfspace { normal: a, .. }, ConvexSet::Halfspace { normal: b, .. }) => {
            (Point::from_column_slice(a), Point::from_column_slice(b))
        }
        _ => panic!("wedge instance must be two halfspaces"),
    }
}

fn rate_sandwich() -> Verdict {
    let mut q_worst = f64::NEG_INFINITY;
    let mut d_worst = f64::NEG_INFINITY;
    let (mut q_count, mut d_count) = (0, 0);
    for (i, &angle) in [0.1, 0.3, 0.6, 1.0, 1.4, std::f64::consts::FRAC_PI_2].iter().enumerate() {
        for seed in 0..4u64 {
            let pair = gen_halfspace_wedge(6, angle, seed + 10 * i as u64).unwrap();
            let omega = pair.metadata.params["omega"];
            let beta = (1.0 - omega * omega).sqrt();
            let q_bound = (1.0 + omega * omega / 4.0).powf(-0.5);
            let (a, b) = wedge_normals(&pair);
            let dist_s = |z: &Point| (z - oracle::project_two_halfspaces(&a, 0.0, &b, 0.0, z)).norm();
            for method in methods_under_test() {
                let (kernel, schedule) = match &method {
                    Method::Eccrm { kernel, schedule } => (kernel.clone(), schedule.clone()),
                    _ => unreachable!(),
                };
                let trace = solve(&pair, &SolverConfig::new(method, 1e-14, 500).with_iterates()).unwrap();
                let its = trace.iterates.as_ref().unwrap();
                let zbar = &trace.final_point;
                for k in 0..its.len() - 1 {
                    let dk = (&its[k] - zbar).norm();
                    if dk > 1e-12 {
                        q_worst = q_worst.max((&its[k + 1] - zbar).norm() / dk - q_bound);
                        q_count += 1;
                    }
                    let (t, _) = apply_kernel(&kernel, &pair, &its[k]).unwrap();
                    let dt = dist_s(&t);
                    if dt > 1e-12 {
                        let alpha = eccrm::solver::schedule_value(&schedule, k).unwrap().get();
                        let rho = beta * (alpha + (1.0 - alpha) * beta);
                        d_worst = d_worst.max(dist_s(&its[k + 1]) / dt - rho);
                        d_count += 1;
                    }
                }
            }
        }
    }
    verdict(
        q_worst <= 1e-3 && d_worst <= 1e-6,
        format!(
            "{q_count} Q-ratios, max excess over (1+w^2/4)^-1/2 {q_worst:.1e}; {d_count} single-step ratios, max excess over beta(a+(1-a)beta) {d_worst:.1e}"
        ),
    )
}

fn superlinearity() -> Verdict {
    let vanishing = Method::eccrm(KernelSpec::ccrm(), StepSchedule::Vanishing);
    let constant = Method::eccrm(KernelSpec::ccrm(), StepSchedule::Constant { alpha: 0.5 });
    let mut hits = [0usize; 2];
    let mut notes = Vec::new();
    for seed in 0..5u64 {
        let pair = gen_ellipsoids(50, 20.0, 1e-3, seed).unwrap();
        for (i, m) in [&vanishing, &constant].into_iter().enumerate() {
            let trace = solve(&pair, &SolverConfig::new(m.clone(), 1e-12, 10_000)).unwrap();
            match estimate_rate(&trace, Merit::Delta, &RateOptions::default()) {
                Ok(e) if e.classification == RateClass::Superlinear => hits[i] += 1,
                Ok(e) => notes.push(format!("seed {seed} {}: {:?}", m.label(), e.classification)),
                Err(err) => notes.push(format!("seed {seed} {}: {err}", m.label())),
            }
        }
    }
    let mut detail = format!("vanishing {}/5, XY at 0.5 {}/5 superlinear", hits[0], hits[1]);
    if !notes.is_empty() {
        detail.push_str(&format!(" [{}]", notes.join("; ")));
    }
    verdict(hits[0] >= 4 && hits[1] >= 4, detail)
}

fn kernel_trend() -> Verdict {
    let alphas = [0.25, 0.5, 0.75];
    let mut methods = Vec::new();
    for k in [KernelSpec::ccrm(), KernelSpec::deep()] {
        for a in alphas {
            methods.push(Method::eccrm(k.clone(), StepSchedule::Constant { alpha: a }));
        }
    }
    let cfg = ExperimentConfig {
        generator: Family::MatrixCompletion { n: 30, rank: 3, obs_frac: 0.4 },
        methods,
        seeds: (0..10).collect(),
        eps: 1e-2,
        max_iter: 200_000,
        output_dir: None,
    };
    let report = run_matrix(&cfg, jobs()).unwrap();
    if !report.ok() {
        return verdict(false, format!("{} runs failed", report.failures.len()));
    }
    let it: Vec<f64> = report.summary.iter().map(|r| r.mean_iters).collect();
    let (ccrm, deep) = (&it[0..3], &it[3..6]);
    let deep_wins = (0..3).all(|i| deep[i] < ccrm[i]);
    let half_best = |v: &[f64]| v[1] <= v[0] && v[1] <= v[2];
    let detail = format!(
        "mean iters XY {:?}, YXY {:?} at alpha {:?}; deep < XY at every alpha: {}; alpha 0.5 minimal: XY {}, YXY {}",
        ccrm,
        deep,
        alphas,
        deep_wins,
        half_best(ccrm),
        half_best(deep)
    );
    verdict(deep_wins && half_best(ccrm) && half_best(deep), detail)
}

fn vanishing_trend() -> Verdict {
    let cfg = ExperimentConfig {
        generator: Family::EllipsoidPair { n: 200, cond: 20.0, tangency_gap: 1e-3 },
        methods: vec![
            Method::eccrm(KernelSpec::ccrm(), StepSchedule::Constant { alpha: 0.5 }),
            Method::eccrm(KernelSpec::ccrm(), StepSchedule::Vanishing),
        ],
        seeds: (0..10).collect(),
        eps: 1e-12,
        max_iter: 100_000,
        output_dir: None,
    };
    let report = run_matrix(&cfg, jobs()).unwrap();
    let all_converged = report.ok() && report.runs.iter().all(|r| r.final_delta <= cfg.eps);
    let (c, v) = (report.summary[0].mean_iters, report.summary[1].mean_iters);
    let reduction = 1.0 - v / c;
    verdict(
        all_converged && reduction >= 0.05,
        format!("mean iters constant {c}, vanishing {v}, reduction {:.1}% (need >= 5%); all final delta <= eps: {all_converged}", 100.0 * reduction),
    )
}

fn cost_accounting() -> Verdict {
    let instances = [
        gen_ellipsoids(30, 20.0, 1e-3, 3).unwrap(),
        gen_matrix_completion(10, 2, 0.5, 3).unwrap(),
        gen_halfspace_wedge(4, 0.4, 3).unwrap(),
    ];
    let mut bad = Vec::new();
    let mut checked = 0;
    for pair in &instances {
        for (kernel, expected) in [(KernelSpec::basic(), 3), (KernelSpec::ccrm(), 4), (KernelSpec::deep(), 5)] {
            let m = Method::eccrm(kernel.clone(), StepSchedule::Constant { alpha: 0.5 });
            let trace = solve(pair, &SolverConfig::new(m, 1e-9, 200)).unwrap();
            for w in trace.records.windows(2) {
                checked += 1;
                let per = w[1].cum_algorithmic_projections - w[0].cum_algorithmic_projections;
                if per != expected {
                    bad.push(format!("{kernel} step {}: {per}", w[1].k));
                }
            }
        }
    }
    verdict(bad.is_empty(), format!("{checked} steps checked, projections per step Y=3 XY=4 YXY=5; mismatches {}", bad.len()))
}

fn strip_time(summary: &str) -> String {
    summary
        .lines()
        .map(|l| {
            let cols: Vec<&str> = l.split(',').collect();
            [&cols[..4], &cols[5..]].concat().join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn determinism() -> Verdict {
    let cfg = ExperimentConfig {
        generator: Family::EllipsoidPair { n: 60, cond: 20.0, tangency_gap: 1e-3 },
        methods: vec![
            Method::Ccrm,
            Method::eccrm(KernelSpec::deep(), StepSchedule::Vanishing),
            Method::eccrm(KernelSpec::basic(), StepSchedule::Constant { alpha: 0.3 }),
            Method::Map,
        ],
        seeds: (0..4).collect(),
        eps: 1e-10,
        max_iter: 100_000,
        output_dir: None,
    };
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for (d, jobs) in dirs.iter().zip([1, 3]) {
        run_matrix(&cfg, jobs).unwrap().write(d.path()).unwrap();
    }
    let read = |i: usize| std::fs::read_to_string(dirs[i].path().join("summary.csv")).unwrap();
    let same = strip_time(&read(0)) == strip_time(&read(1));
    let statuses_ok = {
        let r = run_matrix(&cfg, 1).unwrap();
        r.runs.iter().all(|x| x.status == Some(RunStatus::Converged))
    };
    verdict(same && statuses_ok, format!("summary.csv identical apart from time column across runs with 1 and 3 workers: {same}"))
}
