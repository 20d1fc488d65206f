//! Acceptance suite. Runs every criterion against the bundled example plant,
//! prints one `PASS`/`FAIL` line per criterion and exits non-zero if any
//! criterion fails.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use iqc_core::analysis::{self, AnalysisOptions, CertificateBundle, EllipsoidReport};
use iqc_core::lmi::{self, LmiConstraint, SdpProblem, Sense, VarLayout};
use iqc_core::riccati;
use iqc_core::sdp::{self, SdpStatus, SolverOptions};
use iqc_core::sim::{self, ContainmentOptions, DisturbanceKind};
use iqc_core::statespace::{self, Interval, Realization, UncertainPlant};

/// Regression baselines for trace(Y_nu), nu = 0..3, produced by this solver
/// with default options on the example plant.
const TRACE_BASELINE: [f64; 4] = [114.161227, 33.233451, 22.214102, 20.058771];
/// Regression baseline for the largest level `e^T Y_3^{-1} e` reached by the
/// five worst-case trajectories at `delta = -0.6`.
const TIGHTNESS_BASELINE: f64 = 0.977186;

type Outcome = Result<String, String>;

struct Solved {
    nu: usize,
    bundle: CertificateBundle,
    report: EllipsoidReport,
    elapsed: Duration,
}

fn interval() -> Interval {
    Interval::new(-0.6, 5.0).unwrap()
}

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn solve_all(plant: &UncertainPlant) -> Result<Vec<Solved>, String> {
    (0..=3)
        .map(|nu| {
            let start = Instant::now();
            let (bundle, report) = analysis::robust_ellipsoid_analysis(plant, &interval(), nu, &AnalysisOptions::default())
                .map_err(|e| format!("nu={nu}: {e}"))?;
            Ok(Solved { nu, bundle, report, elapsed: start.elapsed() })
        })
        .collect()
}

fn c1_feasibility(solved: &[Solved]) -> Outcome {
    let times: Vec<String> = solved.iter().map(|s| format!("nu={} {:.3}s", s.nu, s.elapsed.as_secs_f64())).collect();
    check(
        solved.len() == 4 && solved.iter().all(|s| s.elapsed <= Duration::from_secs(10)),
        format!("feasible for nu=0..3 ({})", times.join(", ")),
    )
}

fn c2_monotone(solved: &[Solved]) -> Outcome {
    let t: Vec<f64> = solved.iter().map(|s| s.report.trace).collect();
    let monotone = t.windows(2).all(|w| w[0] >= w[1] - 1e-6);
    let strict = t[1] < 0.99 * t[0];
    let baseline = t.iter().zip(TRACE_BASELINE).all(|(a, b)| (a - b).abs() <= 1e-5 * b);
    check(
        monotone && strict && baseline,
        format!("traces {:.6} >= {:.6} >= {:.6} >= {:.6}, matches baseline: {baseline}", t[0], t[1], t[2], t[3]),
    )
}

fn c3_containment(plant: &UncertainPlant, solved: &[Solved]) -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for s in solved {
        let stats = sim::containment_check(plant, &interval(), &s.report.y, &ContainmentOptions::default()).map_err(|e| e.to_string())?;
        ok &= stats.violations == 0;
        lines.push(format!("nu={} violations={}/{} worst excess {:.2e}", s.nu, stats.violations, stats.runs, stats.worst_excess));
    }
    check(ok, lines.join("; "))
}

fn c4_tightness(plant: &UncertainPlant, solved: &[Solved]) -> Outcome {
    let y3 = &solved[3].report.y;
    let y_inv = y3.clone().try_inverse().ok_or("Y_3 singular")?;
    let mut best: f64 = 0.0;
    let mut endpoint_err: f64 = 0.0;
    for k in 0..5 {
        let theta = std::f64::consts::TAU * k as f64 / 5.0;
        let dir = DVector::from_vec(vec![theta.cos(), theta.sin()]);
        let wc = sim::worst_case_disturbance(plant, -0.6, &dir, sim::DEFAULT_HORIZON, sim::DEFAULT_DT).map_err(|e| e.to_string())?;
        endpoint_err = endpoint_err.max((&wc.e_final - &wc.e_star).norm() / wc.e_star.norm());
        for e in wc.trajectory.channel("e").unwrap() {
            best = best.max(e.dot(&(&y_inv * e)));
        }
    }
    let baseline = (best - TIGHTNESS_BASELINE).abs() <= 1e-4;
    check(
        best >= 0.8 && best <= 1.0 + 1e-5 && endpoint_err <= 1e-2 && baseline,
        format!("max e^T Y3^-1 e = {best:.6}, worst endpoint error {endpoint_err:.1e}"),
    )
}

fn scalar_are_case() -> Result<f64, String> {
    let s = |v| DMatrix::from_element(1, 1, v);
    let psi = Realization::new(s(-1.0), s(1.0), s(1.0), s(1.0)).map_err(|e| e.to_string())?;
    let z = riccati::solve_sym_are(&psi, &s(1.0)).map_err(|e| e.to_string())?;
    let rep = riccati::sym_are_report(&psi, &s(1.0), &z).map_err(|e| e.to_string())?;
    if z[(0, 0)].abs() > 1e-12 || rep.relative_residual > 1e-8 || (rep.max_real_part() + 2.0).abs() > 1e-12 {
        return Err(format!("scalar case: Z = {}, residual {:.1e}", z[(0, 0)], rep.relative_residual));
    }
    Ok(rep.relative_residual)
}

fn c5_are(solved: &[Solved]) -> Outcome {
    let scalar = scalar_are_case()?;
    let mut worst_res = scalar;
    let mut worst_re = f64::NEG_INFINITY;
    for s in solved {
        let psi = statespace::psi_basis(s.nu);
        let k = riccati::solve_nonsym_are(&psi, &psi, &s.bundle.p).map_err(|e| format!("nu={}: {e}", s.nu))?;
        let rep = riccati::nonsym_are_report(&psi, &psi, &s.bundle.p, &k).map_err(|e| e.to_string())?;
        let filter = statespace::example_filter(s.nu);
        let m = s.bundle.m();
        let z = riccati::solve_sym_are(&filter, &m).map_err(|e| format!("nu={}: {e}", s.nu))?;
        let srep = riccati::sym_are_report(&filter, &m, &z).map_err(|e| e.to_string())?;
        for r in [&rep, &srep] {
            worst_res = worst_res.max(r.relative_residual);
            worst_re = worst_re.max(r.max_real_part());
        }
    }
    check(
        worst_res <= 1e-8 && worst_re < 0.0,
        format!("scalar oracle Z=0 ok; worst residual {worst_res:.1e}, max closed-loop real part {worst_re:.3}"),
    )
}

fn c6_factorization(solved: &[Solved]) -> Outcome {
    let grid = riccati::log_grid(1e-3, 1e3, 200);
    let mut worst: f64 = 0.0;
    for s in solved {
        let filter = statespace::example_filter(s.nu);
        let m = s.bundle.m();
        let z = riccati::solve_sym_are(&filter, &m).map_err(|e| e.to_string())?;
        let cf = riccati::canonical_factor(&filter, &m, &z).map_err(|e| e.to_string())?;
        worst = worst.max(riccati::verify_factorization(&filter, &m, &cf, &grid).map_err(|e| e.to_string())?);
        if cf.inverse_poles().map_err(|e| e.to_string())?.iter().any(|p| p.re >= 0.0) {
            return Err(format!("nu={}: inverse factor not stable", s.nu));
        }
    }
    check(worst <= 1e-8, format!("max grid deviation {worst:.1e} over 200 points"))
}

fn c7_positivity(solved: &[Solved]) -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for s in solved {
        let convex = analysis::positivity_check(&s.bundle.xcal, &s.bundle.z_tilde.z).map_err(|e| e.to_string())?;
        let are = analysis::are_terminal_cost(s.nu, &s.bundle.p).map_err(|e| e.to_string())?;
        let are_pos = analysis::positivity_check(&s.bundle.xcal, &are.z).map_err(|e| e.to_string())?;
        let lemma4 = analysis::terminal_lmi_margin(&s.bundle.r, &are).map_err(|e| e.to_string())?;
        ok &= convex > 0.0 && are_pos > 0.0;
        lines.push(format!("nu={} convex {convex:.2e} ARE {are_pos:.2e} (R-Z max eig {lemma4:.1e})", s.nu));
    }
    check(ok, lines.join("; "))
}

fn c8_finite_horizon(solved: &[Solved]) -> Outcome {
    let iv = interval();
    let dt = sim::DEFAULT_DT;
    let steps = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst_rel = f64::NEG_INFINITY;
    for run in 0..100 {
        let s = &solved[1 + run % 3];
        let delta = rng.random_range(iv.alpha..=iv.beta);
        let kind = if run % 2 == 0 { DisturbanceKind::PiecewiseConstant } else { DisturbanceKind::Sinusoidal };
        let z = sim::random_disturbance(&mut rng, kind, 1, steps, dt);
        let u: Vec<DVector<f64>> = z.iter().map(|v| DVector::from_vec(vec![v[0], delta * v[0]])).collect();
        let filter = lmi::parametric_filter(s.nu, &iv, 1).map_err(|e| e.to_string())?;
        let rep = sim::check_finite_horizon_iqc(&filter, &s.bundle.m(), &s.bundle.z_tilde.z, &u, dt).map_err(|e| e.to_string())?;
        worst_rel = worst_rel.max(-rep.worst / rep.scale);
        if !rep.holds(1e-5) {
            return Err(format!("run {run} (nu={}, delta={delta:.4}): margin {:.3e}, scale {:.3e}", s.nu, rep.worst, rep.scale));
        }
    }
    check(true, format!("100 runs, worst relative margin {:.1e}", -worst_rel))
}

fn c9_soft_iqc(solved: &[Solved]) -> Outcome {
    let iv = interval();
    let grid = riccati::log_grid(1e-3, 1e3, 200);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for s in solved {
        for _ in 0..10 {
            let delta = rng.random_range(iv.alpha..=iv.beta);
            worst = worst.max(analysis::soft_iqc_identity_residual(s.nu, &iv, &s.bundle.p, delta, &grid).map_err(|e| e.to_string())?);
        }
    }
    check(worst <= 1e-8, format!("max residual {worst:.1e} over 10 deltas x 4 bases"))
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn random_invertible(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    random_matrix(rng, n, n) + DMatrix::identity(n, n) * (2.0 * n as f64).sqrt()
}

fn c10_congruence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut negative, mut other) = (0, 0);
    for i in 0..50 {
        let (n, m, p) = (rng.random_range(1..5usize), rng.random_range(1..4usize), rng.random_range(1..4usize));
        let a = random_matrix(&mut rng, n, n) - DMatrix::identity(n, n) * 3.0;
        let b = random_matrix(&mut rng, n, m) * 0.3;
        let c = random_matrix(&mut rng, p, n);
        let d = random_matrix(&mut rng, p, m);
        let x = DMatrix::identity(n, n) + random_matrix(&mut rng, n, n) * 0.2;
        let x = (&x + x.transpose()) * 0.5;
        // Alternate between negative and indefinite middle matrices so both
        // verdicts occur.
        let mm = if i % 2 == 0 { -DMatrix::identity(p, p) } else { random_matrix(&mut rng, p, p) };
        let mm = (&mm + mm.transpose()) * 0.5;
        let (t, r, s, f) = (random_invertible(&mut rng, n), random_invertible(&mut rng, p), random_invertible(&mut rng, m), random_matrix(&mut rng, m, n));
        let (ti, ri) = (t.clone().try_inverse().unwrap(), r.clone().try_inverse().unwrap());
        let real = Realization::new(a.clone(), b.clone(), c.clone(), d.clone()).unwrap();
        let real_t = Realization::new(&ti * (&a * &t + &b * &f), &ti * &b * &s, &ri * (&c * &t + &d * &f), &ri * &d * &s).unwrap();
        let lhs = lmi::kyp_numeric(&x, &mm, &real).map_err(|e| e.to_string())?;
        let rhs = lmi::kyp_numeric(&(t.transpose() * &x * &t), &(r.transpose() * &mm * &r), &real_t).map_err(|e| e.to_string())?;
        let v1 = sdp::min_eig(&(-&lhs)).map_err(|e| e.to_string())? > 0.0;
        let v2 = sdp::min_eig(&(-&rhs)).map_err(|e| e.to_string())? > 0.0;
        if v1 != v2 {
            return Err(format!("instance {i}: verdicts differ"));
        }
        if v1 {
            negative += 1;
        } else {
            other += 1;
        }
    }
    check(negative > 0 && other > 0, format!("50 instances agree ({negative} negative definite, {other} not)"))
}

/// Each entry carries the error relative to `1 + |analytic optimum|`, or the
/// relative gap if larger.
fn sdp_battery() -> Result<Vec<(String, DVector<f64>, f64, SdpStatus)>, String> {
    let opts = SolverOptions::default();
    let mut out = Vec::new();

    let mut l = VarLayout::new();
    let y = l.add_symmetric("Y", 2);
    let mut prob = SdpProblem::new(l);
    let target = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
    let e = prob.layout.var(y).sub(&lmi::AffineMatrix::constant(target)).unwrap().into_symmetric().unwrap();
    prob.push(LmiConstraint::nonstrict("Y >= diag(1, 2)", e, Sense::Psd));
    prob.minimize_trace(y);
    let s = sdp::solve(&prob, &opts).map_err(|e| e.to_string())?;
    out.push(("trace projection".to_string(), s.x.clone(), ((s.objective - 3.0).abs() / 4.0).max(s.rel_gap), s.status));

    let mut l = VarLayout::new();
    let x = l.add_scalar("x");
    let mut prob = SdpProblem::new(l);
    let xv = prob.layout.var(x);
    let one = lmi::AffineMatrix::constant(DMatrix::from_element(1, 1, 1.0));
    let e = lmi::AffineMatrix::blocks(&[vec![xv.clone(), one.clone()], vec![one, xv]]).unwrap().into_symmetric().unwrap();
    prob.push(LmiConstraint::nonstrict("[[x, 1], [1, x]] >= 0", e, Sense::Psd));
    prob.objective[0] = 1.0;
    let s = sdp::solve(&prob, &opts).map_err(|e| e.to_string())?;
    out.push(("[[x,1],[1,x]]".to_string(), s.x.clone(), ((s.x[0] - 1.0).abs() / 2.0).max(s.rel_gap), s.status));

    let mut l = VarLayout::new();
    let p = l.add_scalar("p");
    let mut prob = SdpProblem::new(l);
    let e = prob.layout.var(p).scale(-2.0).into_symmetric().unwrap();
    prob.push(LmiConstraint::strict("-2 p <= -eps", e, Sense::Nsd, 1e-6));
    let s = sdp::solve(&prob, &opts).map_err(|e| e.to_string())?;
    let ok = s.x[0] >= 5e-7 * (1.0 - 1e-8);
    out.push(("scalar Lyapunov".to_string(), s.x.clone(), if ok { 0.0 } else { 1.0 }, s.status));
    Ok(out)
}

fn c11_sdp_battery() -> Outcome {
    let first = sdp_battery()?;
    let second = sdp_battery()?;
    let mut lines = Vec::new();
    let mut ok = true;
    for ((name, x1, err, status), (_, x2, _, _)) in first.iter().zip(&second) {
        let deterministic = x1 == x2;
        ok &= *err <= 1e-8 && status.is_success() && deterministic;
        lines.push(format!("{name}: {} err {err:.1e}{}", status.as_str(), if deterministic { "" } else { " NONDETERMINISTIC" }));
    }
    check(ok, lines.join("; "))
}

fn main() {
    let plant = UncertainPlant::example();
    let start = Instant::now();
    let solved = solve_all(&plant);
    let mut failures = 0;
    let mut report = |id: usize, name: &str, outcome: Outcome| {
        match &outcome {
            Ok(detail) => println!("criterion {id:>2} PASS  {name}: {detail}"),
            Err(detail) => {
                failures += 1;
                println!("criterion {id:>2} FAIL  {name}: {detail}");
            }
        }
    };
    match &solved {
        Ok(solved) => {
            report(1, "example feasibility", c1_feasibility(solved));
            report(2, "monotone benefit of dynamics", c2_monotone(solved));
            report(3, "invariance soundness", c3_containment(&plant, solved));
            report(4, "tightness at nu=3", c4_tightness(&plant, solved));
            report(5, "Riccati correctness", c5_are(solved));
            report(6, "factorization identity", c6_factorization(solved));
            report(7, "coupling positivity", c7_positivity(solved));
            report(8, "finite-horizon IQC", c8_finite_horizon(solved));
            report(9, "soft-IQC identity", c9_soft_iqc(solved));
        }
        Err(e) => {
            for (id, name) in (1..=9).zip([
                "example feasibility",
                "monotone benefit of dynamics",
                "invariance soundness",
                "tightness at nu=3",
                "Riccati correctness",
                "factorization identity",
                "coupling positivity",
                "finite-horizon IQC",
                "soft-IQC identity",
            ]) {
                report(id, name, Err(format!("example solve failed: {e}")));
            }
        }
    }
    report(10, "congruence property", c10_congruence());
    report(11, "SDP solver battery", c11_sdp_battery());
    println!("acceptance: {} failed, total {:.1}s", failures, start.elapsed().as_secs_f64());
    if failures > 0 {
        std::process::exit(1);
    }
}
