//! The four subcommands.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use iqc_core::analysis::{self, CertificateBundle};
use iqc_core::riccati::{self, StructuredTerminalCost};
use iqc_core::sim::{self, ContainmentOptions, DisturbanceKind, MarginReport};
use iqc_core::{lmi, statespace, IqcError};

use crate::config::{from_matrix, to_matrix, AnalysisConfig, DeltaConfig, Problem, Rows};
use crate::error::CliError;
use crate::output::{write_csv, write_json};

const ELLIPSE_POINTS: usize = 256;
/// Relative tolerance of all time-domain checks, `tol * (1 + energy)`.
const TOL_DISSIPATION: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResidualRecord {
    pub constraint: String,
    /// Absent for empty constraint blocks, whose minimum eigenvalue is `+inf`.
    pub min_eig: Option<f64>,
}

/// One solved basis length as stored in `certificates.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleRecord {
    pub nu: usize,
    pub status: String,
    pub iterations: usize,
    pub trace_y: f64,
    pub rel_gap: f64,
    pub worst_residual: f64,
    pub gamma: Option<f64>,
    pub coupling_margin: f64,
    pub p: Rows,
    pub xcal: Rows,
    pub r: Rows,
    pub k: Rows,
    pub y: Rows,
    pub z_tilde: Rows,
    pub residuals: Vec<ResidualRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateFile {
    pub delta: DeltaConfig,
    pub bundles: Vec<BundleRecord>,
}

fn load_problem(config: &Path) -> Result<Problem, CliError> {
    AnalysisConfig::load(config)?.validate()
}

fn core_err(context: String) -> impl FnOnce(IqcError) -> CliError {
    move |e| CliError::from_core(&context, e)
}

fn filter_for(problem: &Problem, nu: usize) -> Result<statespace::Realization, CliError> {
    lmi::parametric_filter(nu, &problem.interval, problem.plant.n_z()).map_err(core_err(format!("nu={nu}")))
}

pub fn analyze(config: &Path, out: &Path) -> Result<(), CliError> {
    let problem = load_problem(config)?;
    let g = problem.plant.g();
    let mut records = Vec::new();
    let mut ellipses = Vec::new();
    for &nu in &problem.nu_list {
        let ctx = format!("nu={nu}");
        let (mut bundle, report) =
            analysis::robust_ellipsoid_analysis(&problem.plant, &problem.interval, nu, &problem.options).map_err(core_err(ctx.clone()))?;
        let filter = filter_for(&problem, nu)?;
        bundle.gamma = match analysis::gamma_bisection(&bundle.xcal, &bundle.m(), &g, &filter, 1e-6, 1e8, 1e-3, 0.5 * problem.options.assembly.eps_margin) {
            Ok(gamma) => Some(gamma),
            Err(IqcError::NoFeasibleGamma { .. }) => {
                log::warn!("{ctx}: no gamma in [1e-6, 1e8] certifies the extended inequality");
                None
            }
            Err(e) => return Err(CliError::from_core(&ctx, e)),
        };
        let coupling_margin = analysis::positivity_check(&bundle.xcal, &bundle.z_tilde.z).map_err(core_err(ctx.clone()))?;
        log::info!("{ctx}: trace(Y) = {:.8}, gamma = {:?}", report.trace, bundle.gamma);
        records.push(record(&bundle, report.trace, coupling_margin));
        if problem.plant.n_e() == 2 {
            ellipses.push((nu, analysis::ellipse_boundary_points(&report.y, ELLIPSE_POINTS).map_err(core_err(ctx))?));
        } else {
            log::warn!("{ctx}: performance output is not two-dimensional, no ellipse file written");
        }
    }
    std::fs::create_dir_all(out)?;
    let file = CertificateFile { delta: DeltaConfig { min: problem.interval.alpha, max: problem.interval.beta }, bundles: records };
    write_json(&out.join("certificates.json"), &file)?;
    for (nu, points) in ellipses {
        write_csv(&out.join(format!("ellipse_nu{nu}.csv")), &["theta", "e1", "e2"], points.into_iter().map(|(t, p)| vec![t, p[0], p[1]]))?;
    }
    Ok(())
}

fn record(b: &CertificateBundle, trace_y: f64, coupling_margin: f64) -> BundleRecord {
    let d = &b.diagnostics;
    BundleRecord {
        nu: b.nu,
        status: d.status.as_str().to_string(),
        iterations: d.iterations,
        trace_y,
        rel_gap: d.rel_gap,
        worst_residual: d.worst_residual,
        gamma: b.gamma,
        coupling_margin,
        p: from_matrix(&b.p),
        xcal: from_matrix(&b.xcal),
        r: from_matrix(&b.r),
        k: from_matrix(&b.k),
        y: from_matrix(b.y.as_ref().expect("ellipsoid bundles carry Y")),
        z_tilde: from_matrix(&b.z_tilde.z),
        residuals: d.residuals.iter().map(|(n, v)| ResidualRecord { constraint: n.clone(), min_eig: v.is_finite().then_some(*v) }).collect(),
    }
}

/// Certificates read back from disk, shape-checked against the plant.
struct Certificate {
    nu: usize,
    p: DMatrix<f64>,
    xcal: DMatrix<f64>,
    r: DMatrix<f64>,
    y: DMatrix<f64>,
    gamma: Option<f64>,
    z: StructuredTerminalCost,
}

fn load_certificates(path: &Path, problem: &Problem) -> Result<Vec<Certificate>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let file: CertificateFile = serde_path_to_error::deserialize(de)
        .map_err(|e| CliError::Config(format!("{}: {}: {}", path.display(), e.path(), e.inner())))?;
    if file.bundles.is_empty() {
        return Err(CliError::Config(format!("{}: no certificate bundles", path.display())));
    }
    if (file.delta.min, file.delta.max) != (problem.interval.alpha, problem.interval.beta) {
        return Err(CliError::Config(format!("{}: certificates were computed for a different delta interval", path.display())));
    }
    let n = problem.plant.n();
    let ne = problem.plant.n_e();
    file.bundles
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let at = |f: &str| format!("bundles[{i}].{f}");
            let nu = b.nu;
            let get = |rows: &Rows, f: &str, r: usize, c: usize| -> Result<DMatrix<f64>, CliError> {
                let m = to_matrix(rows, &at(f))?;
                // Empty blocks serialize as `[]`, which reads back as 0x0.
                if m.shape() != (r, c) && !(r * c == 0 && m.is_empty()) {
                    return Err(CliError::Config(format!("{}: expected {r}x{c}, got {}x{}", at(f), m.nrows(), m.ncols())));
                }
                Ok(if m.is_empty() { DMatrix::zeros(r, c) } else { m })
            };
            let k = get(&b.k, "k", nu, nu)?;
            Ok(Certificate {
                nu,
                p: get(&b.p, "p", nu + 1, nu + 1)?,
                xcal: get(&b.xcal, "xcal", 2 * nu + n, 2 * nu + n)?,
                r: get(&b.r, "r", 2 * nu, 2 * nu)?,
                y: get(&b.y, "y", ne, ne)?,
                gamma: b.gamma,
                z: riccati::terminal_cost_from_k(&k),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct MarginSummary {
    pub runs: usize,
    pub failures: usize,
    /// Smallest `margin / scale` over all runs (nonnegative when all hold).
    pub worst_relative_margin: f64,
}

impl MarginSummary {
    fn add(&mut self, r: &MarginReport) {
        self.runs += 1;
        let rel = r.worst / r.scale;
        self.worst_relative_margin = if self.runs == 1 { rel } else { self.worst_relative_margin.min(rel) };
        if !r.holds(TOL_DISSIPATION) {
            self.failures += 1;
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ContainmentRecord {
    pub runs: usize,
    pub violations: usize,
    pub worst_excess: f64,
    pub max_level: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyRecord {
    pub nu: usize,
    pub fdi_max_eig: f64,
    pub positivity_convex: f64,
    pub positivity_are: Option<f64>,
    /// `max_eig(R - Z_are)`; nonpositive when the Riccati terminal cost
    /// satisfies the terminal-cost inequality.
    pub terminal_lmi_are_max_eig: Option<f64>,
    pub gamma: Option<f64>,
    pub storage_dissipation: MarginSummary,
    pub gamma_dissipation: Option<MarginSummary>,
    pub iqc_convex: MarginSummary,
    pub iqc_are: Option<MarginSummary>,
    pub containment: ContainmentRecord,
    /// Largest `e^T Y^{-1} e` reached by the five worst-case inputs at the
    /// left interval endpoint.
    pub worst_case_level: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub failed_checks: Vec<String>,
    pub runs_per_check: usize,
    pub results: Vec<VerifyRecord>,
}

fn run_seed(seed: u64, nu: usize, run: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((nu as u64) << 32) ^ run as u64
}

struct RunMargins {
    storage: MarginReport,
    iqc_convex: MarginReport,
    iqc_are: Option<MarginReport>,
    gamma: Option<MarginReport>,
}

fn verify_one(problem: &Problem, cert: &Certificate, failed: &mut Vec<String>) -> Result<VerifyRecord, CliError> {
    let nu = cert.nu;
    let ctx = format!("nu={nu}");
    let plant = &problem.plant;
    let iv = problem.interval;
    let g = plant.g();
    let filter = filter_for(problem, nu)?;
    let m = lmi::structured_m_numeric(&cert.p);
    let mut fail = |name: &str| failed.push(format!("{name} ({ctx})"));

    let fdi = analysis::fdi_sample_check(&filter, &m, &g, &analysis::default_frequency_grid()).map_err(core_err(ctx.clone()))?;
    if !(fdi < 0.0) {
        fail("frequency-domain inequality");
    }
    let positivity_convex = analysis::positivity_check(&cert.xcal, &cert.z.z).map_err(core_err(ctx.clone()))?;
    if !(positivity_convex > 0.0) {
        fail("coupling positivity (convex K)");
    }
    let are = match analysis::are_terminal_cost(nu, &cert.p) {
        Ok(z) => Some(z),
        Err(e) => {
            log::warn!("{ctx}: Riccati terminal cost unavailable: {e}");
            fail("Riccati terminal cost");
            None
        }
    };
    let positivity_are = are.as_ref().map(|z| analysis::positivity_check(&cert.xcal, &z.z)).transpose().map_err(core_err(ctx.clone()))?;
    if positivity_are.is_some_and(|v| !(v > 0.0)) {
        fail("coupling positivity (Riccati K)");
    }
    let terminal = are.as_ref().map(|z| analysis::terminal_lmi_margin(&cert.r, z)).transpose().map_err(core_err(ctx.clone()))?;
    if terminal.is_some_and(|v| v > 0.0) {
        fail("terminal-cost inequality (Riccati K)");
    }

    let sim_cfg = problem.sim;
    let steps = (sim_cfg.horizon / sim_cfg.dt).round() as usize;
    let (nd, nz) = (plant.n_d(), plant.n_z());
    let runs: Vec<Result<RunMargins, IqcError>> = (0..sim_cfg.n_random_runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = ChaCha8Rng::seed_from_u64(run_seed(sim_cfg.seed, nu, run));
            let delta = if run == 0 { iv.alpha } else { rng.random_range(iv.alpha..=iv.beta) };
            let kind = if run % 2 == 0 { DisturbanceKind::PiecewiseConstant } else { DisturbanceKind::Sinusoidal };
            let d = sim::random_disturbance(&mut rng, kind, nd, steps, sim_cfg.dt);
            let mut terms = vec![&cert.z.z];
            if let Some(z) = &are {
                terms.push(&z.z);
            }
            let lm = sim::loop_margins(plant, delta, &filter, &cert.xcal, &m, &terms, &d, sim_cfg.dt)?;
            let gamma = match cert.gamma {
                Some(gamma) => {
                    let dz = if nz == nd { d } else { sim::random_disturbance(&mut rng, kind, nz, steps, sim_cfg.dt) };
                    Some(sim::check_dissipation(&cert.xcal, &cert.z.z, gamma, &g, &filter, delta, &dz, sim_cfg.dt)?)
                }
                None => None,
            };
            Ok(RunMargins { storage: lm.storage, iqc_convex: lm.iqc[0], iqc_are: lm.iqc.get(1).copied(), gamma })
        })
        .collect();
    let mut storage = MarginSummary::default();
    let mut iqc_convex = MarginSummary::default();
    let mut iqc_are = are.as_ref().map(|_| MarginSummary::default());
    let mut gamma_diss = cert.gamma.map(|_| MarginSummary::default());
    for r in runs {
        let r = r.map_err(core_err(ctx.clone()))?;
        storage.add(&r.storage);
        iqc_convex.add(&r.iqc_convex);
        if let (Some(s), Some(v)) = (iqc_are.as_mut(), r.iqc_are.as_ref()) {
            s.add(v);
        }
        if let (Some(s), Some(v)) = (gamma_diss.as_mut(), r.gamma.as_ref()) {
            s.add(v);
        }
    }
    let mut fail = |name: &str| failed.push(format!("{name} ({ctx})"));
    if storage.failures > 0 {
        fail("storage dissipation");
    }
    if gamma_diss.is_some_and(|s| s.failures > 0) {
        fail("gamma dissipation");
    }
    if iqc_convex.failures > 0 {
        fail("finite-horizon IQC (convex K)");
    }
    if iqc_are.is_some_and(|s| s.failures > 0) {
        fail("finite-horizon IQC (Riccati K)");
    }

    let copts = ContainmentOptions { runs: sim_cfg.n_random_runs, horizon: sim_cfg.horizon, dt: sim_cfg.dt, seed: sim_cfg.seed, rel_tol: TOL_DISSIPATION };
    let stats = sim::containment_check(plant, &iv, &cert.y, &copts).map_err(|e| match e {
        IqcError::NotPositiveDefinite { .. } => CliError::CheckFailed(vec![format!("containment ({ctx}): Y is not positive definite")]),
        other => CliError::from_core(&ctx, other),
    })?;
    if stats.violations > 0 {
        fail("containment");
    }

    let worst_case_level = if plant.n_e() == 2 {
        let y_inv = cert.y.clone().try_inverse().ok_or_else(|| CliError::CheckFailed(vec![format!("containment ({ctx}): Y is singular")]))?;
        let mut level: f64 = 0.0;
        for k in 0..5 {
            let theta = std::f64::consts::TAU * k as f64 / 5.0;
            let dir = DVector::from_vec(vec![theta.cos(), theta.sin()]);
            let wc = sim::worst_case_disturbance(plant, iv.alpha, &dir, sim_cfg.horizon, sim_cfg.dt).map_err(core_err(ctx.clone()))?;
            for e in wc.trajectory.channel("e").expect("loop simulation has e") {
                level = level.max(e.dot(&(&y_inv * e)));
            }
        }
        if level > 1.0 + TOL_DISSIPATION * 2.0 {
            fail("worst-case containment");
        }
        Some(level)
    } else {
        None
    };

    Ok(VerifyRecord {
        nu,
        fdi_max_eig: fdi,
        positivity_convex,
        positivity_are,
        terminal_lmi_are_max_eig: terminal,
        gamma: cert.gamma,
        storage_dissipation: storage,
        gamma_dissipation: gamma_diss,
        iqc_convex,
        iqc_are,
        containment: ContainmentRecord { runs: stats.runs, violations: stats.violations, worst_excess: stats.worst_excess, max_level: stats.max_level },
        worst_case_level,
    })
}

pub fn verify(config: &Path, certificates: &Path, out: &Path) -> Result<(), CliError> {
    let problem = load_problem(config)?;
    let certs = load_certificates(certificates, &problem)?;
    let mut failed = Vec::new();
    let mut results = Vec::new();
    for cert in &certs {
        results.push(verify_one(&problem, cert, &mut failed)?);
    }
    let report = VerifyReport { passed: failed.is_empty(), failed_checks: failed.clone(), runs_per_check: problem.sim.n_random_runs, results };
    std::fs::create_dir_all(out)?;
    write_json(&out.join("verify_report.json"), &report)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::CheckFailed(failed))
    }
}

pub struct SimulateArgs {
    pub delta: f64,
    pub direction_angle: f64,
    pub horizon: Option<f64>,
    pub zero_disturbance: bool,
}

fn tag_number(v: f64) -> String {
    let s = format!("{v}");
    s.replace('.', "p")
}

pub fn simulate(config: &Path, args: &SimulateArgs, out: &Path) -> Result<PathBuf, CliError> {
    let problem = load_problem(config)?;
    let iv = problem.interval;
    if !args.delta.is_finite() || !iv.contains(args.delta) {
        return Err(CliError::Config(format!("--delta {} lies outside [{}, {}]", args.delta, iv.alpha, iv.beta)));
    }
    if !args.direction_angle.is_finite() {
        return Err(CliError::Config("--direction-angle must be finite".into()));
    }
    let horizon = args.horizon.unwrap_or(problem.sim.horizon);
    let dt = problem.sim.dt;
    if !(horizon > dt && horizon.is_finite()) {
        return Err(CliError::Config(format!("--horizon must exceed dt = {dt}")));
    }
    let plant = &problem.plant;
    let ne = plant.n_e();
    let d = if args.zero_disturbance {
        let steps = (horizon / dt).round() as usize;
        vec![DVector::zeros(plant.n_d()); steps + 1]
    } else {
        let (c, s) = (args.direction_angle.cos(), args.direction_angle.sin());
        let dir = DVector::from_fn(ne, |i, _| match i {
            0 => c,
            1 => s,
            _ => 0.0,
        });
        let wc = sim::worst_case_disturbance(plant, args.delta, &dir, horizon, dt).map_err(core_err(format!("delta={}", args.delta)))?;
        log::info!("predicted boundary point {:?}, reached {:?}", wc.e_star.as_slice(), wc.e_final.as_slice());
        wc.d
    };
    let traj = sim::simulate_loop(plant, args.delta, &d, dt).map_err(core_err(format!("delta={}", args.delta)))?;
    let channel = |name: &str| traj.channel(name).expect("loop simulation channel");
    let names = |base: &str, n: usize| -> Vec<String> {
        if n == 1 {
            vec![base.to_string()]
        } else {
            (1..=n).map(|i| format!("{base}{i}")).collect()
        }
    };
    let mut header = vec!["t".to_string()];
    header.extend(names("d", plant.n_d()));
    header.extend(names("z", plant.n_z()));
    header.extend(names("w", plant.n_w()));
    header.extend((1..=ne).map(|i| format!("e{i}")));
    header.push("energy".into());
    let times = traj.times();
    let (cd, cz, cw, ce, ch) = (channel("d"), channel("z"), channel("w"), channel("e"), channel("energy"));
    let rows = (0..traj.len()).map(|k| {
        let mut row = vec![times[k]];
        for c in [cd, cz, cw, ce, ch] {
            row.extend(c[k].iter().copied());
        }
        row
    });
    std::fs::create_dir_all(out)?;
    let tag = if args.zero_disturbance {
        format!("delta{}_zero", tag_number(args.delta))
    } else {
        format!("delta{}_angle{}", tag_number(args.delta), tag_number(args.direction_angle))
    };
    let path = out.join(format!("traj_{tag}.csv"));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(&path, &header_refs, rows)?;
    Ok(path)
}

#[derive(Debug, Clone, Serialize)]
pub struct FactorizationRecord {
    pub nu: usize,
    pub p: Rows,
    pub k: Rows,
    pub relative_residual: f64,
    /// Eigenvalues `[re, im]` of the two closed-loop matrices.
    pub spectrum_1: Vec<[f64; 2]>,
    pub spectrum_2: Vec<[f64; 2]>,
    pub max_real_part: Option<f64>,
    pub m_tilde: Rows,
    pub c_tilde: Rows,
    pub identity_residual: f64,
    pub grid_deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FactorizationReport {
    pub grid_points: usize,
    pub factorizations: Vec<FactorizationRecord>,
}

pub fn factorize(config: &Path, certificates: Option<&Path>, out: &Path) -> Result<(), CliError> {
    let problem = load_problem(config)?;
    let sources: Vec<(usize, DMatrix<f64>)> = match (certificates, &problem.inline_p) {
        (Some(path), _) => load_certificates(path, &problem)?.into_iter().map(|c| (c.nu, c.p)).collect(),
        (None, Some(p)) => vec![(p.nrows() - 1, p.clone())],
        (None, None) => {
            return Err(CliError::Config("factorize needs --certificates or an inline_p entry in the configuration".into()));
        }
    };
    let grid = riccati::log_grid(1e-3, 1e3, 200);
    let mut records = Vec::new();
    for (nu, p) in sources {
        let ctx = format!("nu={nu}");
        let numerical = |e: IqcError| CliError::Numerical(format!("{ctx}: Riccati equation: {e}"));
        let psi = statespace::psi_basis(nu);
        let k = riccati::solve_nonsym_are(&psi, &psi, &p).map_err(numerical)?;
        let rep = riccati::nonsym_are_report(&psi, &psi, &p, &k).map_err(numerical)?;
        let filter = statespace::example_filter(nu);
        let m = lmi::structured_m_numeric(&p);
        let z = riccati::terminal_cost_from_k(&k);
        let cf = riccati::canonical_factor(&filter, &m, &z.z).map_err(numerical)?;
        let deviation = riccati::verify_factorization(&filter, &m, &cf, &grid).map_err(numerical)?;
        let identity = cf.identity_residual(&filter, &m).map_err(numerical)?;
        let pairs = |v: &[nalgebra::Complex<f64>]| v.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>();
        let max_re = rep.max_real_part();
        records.push(FactorizationRecord {
            nu,
            p: from_matrix(&p),
            k: from_matrix(&k),
            relative_residual: rep.relative_residual,
            spectrum_1: pairs(&rep.spectrum_1),
            spectrum_2: pairs(&rep.spectrum_2),
            max_real_part: max_re.is_finite().then_some(max_re),
            m_tilde: from_matrix(&cf.m_tilde),
            c_tilde: from_matrix(cf.psi_tilde.c()),
            identity_residual: identity,
            grid_deviation: deviation,
        });
    }
    std::fs::create_dir_all(out)?;
    write_json(&out.join("factorization.json"), &FactorizationReport { grid_points: grid.len(), factorizations: records })
}
