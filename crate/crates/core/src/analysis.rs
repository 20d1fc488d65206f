//! End-to-end pipelines: invariant-ellipsoid synthesis, the convex robust
//! stability test, and the independent checks that re-verify returned
//! certificates (frequency sampling, Riccati route, definiteness).

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, IqcError, Result};
use crate::linalg;
use crate::lmi::{self, AssemblyOptions, ExampleVars, SdpProblem};
use crate::riccati::{self, StructuredTerminalCost};
use crate::sdp::{self, SdpSolution, SdpStatus, SolverOptions};
use crate::sim::{self, ContainmentStats};
use crate::statespace::{self, Interval, Realization, UncertainPlant};

/// Number of parameter samples used for the well-posedness check.
pub const WELL_POSED_SAMPLES: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AnalysisOptions {
    pub assembly: AssemblyOptions,
    pub solver: SolverOptions,
}

/// Solver outcome kept alongside the certificates.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverDiagnostics {
    pub status: SdpStatus,
    pub iterations: usize,
    pub objective: f64,
    pub rel_gap: f64,
    pub worst_residual: f64,
    pub residuals: Vec<(String, f64)>,
    pub message: String,
}

impl From<&SdpSolution> for SolverDiagnostics {
    fn from(s: &SdpSolution) -> Self {
        Self {
            status: s.status,
            iterations: s.iterations,
            objective: s.objective,
            rel_gap: s.rel_gap,
            worst_residual: s.worst_residual,
            residuals: s.residuals.clone(),
            message: s.message.clone(),
        }
    }
}

/// Solved multiplier and storage certificates for one basis length `nu`.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateBundle {
    pub nu: usize,
    pub p: DMatrix<f64>,
    /// Storage certificate on `(xi_1, xi_2, x)`.
    pub xcal: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub y: Option<DMatrix<f64>>,
    pub gamma: Option<f64>,
    pub z_tilde: StructuredTerminalCost,
    pub diagnostics: SolverDiagnostics,
}

impl CertificateBundle {
    /// Middle matrix `[[0, P], [P^T, 0]]`.
    pub fn m(&self) -> DMatrix<f64> {
        lmi::structured_m_numeric(&self.p)
    }

    fn from_solution(nu: usize, problem: &SdpProblem, vars: &ExampleVars, sol: &SdpSolution) -> Self {
        let l = &problem.layout;
        let k = l.extract(&sol.x, vars.k);
        Self {
            nu,
            p: l.extract(&sol.x, vars.p),
            xcal: l.extract(&sol.x, vars.xcal),
            r: l.extract(&sol.x, vars.r),
            y: vars.y.map(|y| l.extract(&sol.x, y)),
            gamma: None,
            z_tilde: riccati::terminal_cost_from_k(&k),
            k,
            diagnostics: sol.into(),
        }
    }
}

/// Invariant ellipsoid `{e : e^T Y^{-1} e <= 1}` for unit-energy disturbances.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidReport {
    pub y: DMatrix<f64>,
    pub trace: f64,
    /// `(theta, point)` pairs on the boundary.
    pub boundary: Vec<(f64, DVector<f64>)>,
    pub containment: Option<ContainmentStats>,
}

/// Checks `|det(I - D_zw delta)| >= tol` on equally spaced samples (both
/// endpoints included), and also rejects any real eigenvalue `lambda` of
/// `D_zw` with `1 / lambda` inside the interval, which sampling can miss.
pub fn check_well_posed(plant: &UncertainPlant, interval: &Interval, samples: usize) -> Result<()> {
    let nz = plant.n_z();
    for lambda in linalg::eigenvalues(&plant.d_zw)? {
        if lambda.im.abs() <= sim::WELL_POSED_TOL * (1.0 + lambda.norm()) && lambda.re != 0.0 {
            let delta = 1.0 / lambda.re;
            if interval.contains(delta) {
                return Err(IqcError::IllPosed { delta, det: 0.0 });
            }
        }
    }
    for delta in interval.samples(samples.max(2)) {
        let det = (DMatrix::<f64>::identity(nz, nz) - &plant.d_zw * delta).determinant();
        if !(det.abs() >= sim::WELL_POSED_TOL) {
            return Err(IqcError::IllPosed { delta, det: det.abs() });
        }
    }
    Ok(())
}

fn status_to_result(sol: &SdpSolution) -> Result<()> {
    match sol.status {
        SdpStatus::Optimal | SdpStatus::Feasible => Ok(()),
        SdpStatus::Infeasible => Err(IqcError::Infeasible { constraints: sol.infeasible_constraints.clone() }),
        SdpStatus::NumericalFailure => Err(IqcError::Solver(sol.message.clone())),
    }
}

/// Minimizes `trace(Y)` over the multiplier, storage and terminal-cost LMIs.
pub fn robust_ellipsoid_analysis(
    plant: &UncertainPlant,
    interval: &Interval,
    nu: usize,
    opts: &AnalysisOptions,
) -> Result<(CertificateBundle, EllipsoidReport)> {
    check_well_posed(plant, interval, WELL_POSED_SAMPLES)?;
    let (problem, vars) = lmi::assemble_example_lmis(plant, interval, nu, &opts.assembly)?;
    let sol = sdp::solve(&problem, &opts.solver)?;
    log::info!(
        "nu = {nu}: {} after {} iterations, trace(Y) = {:.8}, relative gap {:.1e}",
        sol.status.as_str(),
        sol.iterations,
        sol.objective,
        sol.rel_gap
    );
    status_to_result(&sol)?;
    let bundle = CertificateBundle::from_solution(nu, &problem, &vars, &sol);
    let y = bundle.y.clone().expect("ellipsoid problem has Y");
    let boundary = if plant.n_e() == 2 { ellipse_boundary_points(&y, 256)? } else { Vec::new() };
    let trace = y.trace();
    Ok((bundle, EllipsoidReport { y, trace, boundary, containment: None }))
}

/// Outcome of the convex robust-stability test.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityVerdict {
    /// True when all LMIs were solved; false means "not certified", never
    /// "unstable".
    pub certified: bool,
    pub bundle: Option<CertificateBundle>,
    /// `min_eig(X - diag(Z, 0))` for the convex terminal cost.
    pub coupling_margin: Option<f64>,
    pub message: String,
}

/// Robust stability of `z = G w + d`, `w = delta z` for all `delta` in the
/// interval, via the multiplier, terminal-cost and coupling LMIs.
pub fn robust_stability_test(g: &Realization, interval: &Interval, nu: usize, opts: &AnalysisOptions) -> Result<StabilityVerdict> {
    if g.n() > 0 && !statespace::is_hurwitz(g.a())? {
        return Err(IqcError::NotHurwitz { max_real_part: linalg::spectral_abscissa(g.a())? });
    }
    let (problem, vars) = lmi::assemble_stability_lmis(g, interval, nu, &opts.assembly)?;
    let sol = sdp::solve(&problem, &opts.solver)?;
    match sol.status {
        SdpStatus::Optimal | SdpStatus::Feasible => {
            let bundle = CertificateBundle::from_solution(nu, &problem, &vars, &sol);
            let margin = positivity_check(&bundle.xcal, &bundle.z_tilde.z)?;
            Ok(StabilityVerdict {
                certified: true,
                bundle: Some(bundle),
                coupling_margin: Some(margin),
                message: "robustly stable".into(),
            })
        }
        SdpStatus::Infeasible => Ok(StabilityVerdict {
            certified: false,
            bundle: None,
            coupling_margin: None,
            message: format!("not certified: LMIs infeasible ({})", sol.infeasible_constraints.join(", ")),
        }),
        SdpStatus::NumericalFailure => Err(IqcError::Solver(sol.message)),
    }
}

/// `0`, 200 logarithmic points on `[1e-3, 1e3]` and a large-frequency
/// surrogate `1e6`.
pub fn default_frequency_grid() -> Vec<f64> {
    let mut g = vec![0.0];
    g.extend(riccati::log_grid(1e-3, 1e3, 200));
    g.push(1e6);
    g
}

/// Largest eigenvalue over the grid of `F(iw)^* M F(iw)` with
/// `F = filter [G; I]`. Negative values mean the frequency-domain inequality
/// holds at every sampled point.
pub fn fdi_sample_check(filter: &Realization, m: &DMatrix<f64>, g: &Realization, grid: &[f64]) -> Result<f64> {
    let f = statespace::cascade(filter, &statespace::inverse_graph(g))?;
    if m.shape() != (f.p(), f.p()) {
        return dim_err(format!("multiplier is {}x{}, filter has {} outputs", m.nrows(), m.ncols(), f.p()));
    }
    let mc = linalg::to_complex(m);
    let mut worst = f64::NEG_INFINITY;
    for &w in grid {
        let fw = statespace::freq_response(&f, w)?;
        worst = worst.max(linalg::hermitian_max_eig(&(fw.adjoint() * &mc * fw))?);
    }
    Ok(worst)
}

/// Smallest `gamma` in `[lo, hi]` (to relative width `rel_tol`) for which
/// the Finsler-extended matrix is `⪯ -margin I`. Feasibility is monotone in
/// `gamma`, so bisection on `log gamma` applies.
#[allow(clippy::too_many_arguments)]
pub fn gamma_bisection(
    xcal: &DMatrix<f64>,
    m: &DMatrix<f64>,
    g: &Realization,
    filter: &Realization,
    lo: f64,
    hi: f64,
    rel_tol: f64,
    margin: f64,
) -> Result<f64> {
    if !(lo > 0.0 && hi >= lo) {
        return Err(IqcError::InvalidArgument(format!("gamma range [{lo}, {hi}] must be positive and ordered")));
    }
    let feasible = |gamma: f64| -> Result<bool> {
        let l = lmi::assemble_gamma_lmi(xcal, m, g, filter, gamma)?;
        Ok(linalg::sym_eigenvalues(&l)?.iter().copied().fold(f64::NEG_INFINITY, f64::max) <= -margin)
    };
    if !feasible(hi)? {
        return Err(IqcError::NoFeasibleGamma { lo, hi });
    }
    if feasible(lo)? {
        return Ok(lo);
    }
    let (mut a, mut b) = (lo, hi);
    while b / a > 1.0 + rel_tol {
        let mid = (a * b).sqrt();
        if feasible(mid)? {
            b = mid;
        } else {
            a = mid;
        }
    }
    Ok(b)
}

/// `min_eig(X - diag(Z, 0))`.
pub fn positivity_check(xcal: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<f64> {
    let nz = z.nrows();
    if z.ncols() != nz || xcal.nrows() != xcal.ncols() || nz > xcal.nrows() {
        return dim_err(format!("positivity check: Z is {}x{}, X is {}x{}", z.nrows(), z.ncols(), xcal.nrows(), xcal.ncols()));
    }
    let mut d = xcal.clone();
    let mut top = d.view_mut((0, 0), (nz, nz));
    top -= z;
    sdp::min_eig(&d)
}

/// `count` points `Y^{1/2} (cos theta, sin theta)` with `theta = 2 pi k / count`.
pub fn ellipse_boundary_points(y: &DMatrix<f64>, count: usize) -> Result<Vec<(f64, DVector<f64>)>> {
    if y.shape() != (2, 2) {
        return dim_err(format!("ellipse needs a 2x2 matrix, got {}x{}", y.nrows(), y.ncols()));
    }
    let min = sdp::min_eig(y)?;
    if !(min > 0.0) {
        return Err(IqcError::NotPositiveDefinite { min_eig: min });
    }
    let root = linalg::psd_sqrt(y)?;
    Ok((0..count)
        .map(|k| {
            let theta = std::f64::consts::TAU * k as f64 / count as f64;
            (theta, &root * DVector::from_vec(vec![theta.cos(), theta.sin()]))
        })
        .collect())
}

/// Terminal cost obtained from the non-symmetric Riccati equation for the
/// solved `P` (the route that does not need the convex relaxation of `K`).
pub fn are_terminal_cost(nu: usize, p: &DMatrix<f64>) -> Result<StructuredTerminalCost> {
    let psi = statespace::psi_basis(nu);
    Ok(riccati::terminal_cost_from_k(&riccati::solve_nonsym_are(&psi, &psi, p)?))
}

/// `max_eig(R - [[0, K], [K^T, 0]])`; negative when the terminal-cost LMI holds.
pub fn terminal_lmi_margin(r: &DMatrix<f64>, z: &StructuredTerminalCost) -> Result<f64> {
    if r.shape() != z.z.shape() {
        return dim_err(format!("R is {}x{}, Z is {}x{}", r.nrows(), r.ncols(), z.z.nrows(), z.z.ncols()));
    }
    if r.nrows() == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(linalg::sym_eigenvalues(&(r - &z.z))?.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// Largest deviation of `[1; delta]^* Pi [1; delta]` from
/// `(Psi J)^* M (Psi J) (1 - delta / beta)(delta - alpha)` over the grid,
/// relative to `1 + |lhs|`.
pub fn soft_iqc_identity_residual(nu: usize, interval: &Interval, p: &DMatrix<f64>, delta: f64, grid: &[f64]) -> Result<f64> {
    let m = linalg::to_complex(&lmi::structured_m_numeric(p));
    let filter = lmi::parametric_filter(nu, interval, 1)?;
    let psi_j = statespace::postmultiply(&statespace::example_filter(nu), &statespace::parametric_j(1))?;
    let factor = (1.0 - delta / interval.beta) * (delta - interval.alpha);
    let v = linalg::to_complex(&DMatrix::from_column_slice(2, 1, &[1.0, delta]));
    let mut worst: f64 = 0.0;
    for &w in grid {
        let f = statespace::freq_response(&filter, w)? * &v;
        let lhs = (f.adjoint() * &m * &f)[(0, 0)];
        let h = statespace::freq_response(&psi_j, w)?;
        let rhs = (h.adjoint() * &m * &h)[(0, 0)] * factor;
        worst = worst.max((lhs - rhs).norm() / (1.0 + lhs.norm()));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn positivity_identity() {
        assert_eq!(positivity_check(&DMatrix::identity(3, 3), &DMatrix::zeros(2, 2)).unwrap(), 1.0);
    }

    #[test]
    fn ellipse_points() {
        let pts = ellipse_boundary_points(&DMatrix::identity(2, 2), 8).unwrap();
        assert!(pts.iter().all(|(_, p)| (p.norm() - 1.0).abs() < 1e-14));
        let y = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]);
        let pts = ellipse_boundary_points(&y, 4).unwrap();
        assert_relative_eq!(pts[0].1[0], 2.0, epsilon = 1e-14);
        assert_relative_eq!(pts[1].1[1], 1.0, epsilon = 1e-14);
        let y = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let yi = y.clone().try_inverse().unwrap();
        for (_, p) in ellipse_boundary_points(&y, 256).unwrap() {
            assert_relative_eq!(p.dot(&(&yi * &p)), 1.0, epsilon = 1e-12);
        }
        assert!(ellipse_boundary_points(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]), 4).is_err());
    }

    #[test]
    fn fdi_trivial_and_flipped() {
        let g = Realization::static_gain(DMatrix::zeros(1, 1));
        let filter = Realization::static_gain(DMatrix::identity(2, 2));
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let grid = default_frequency_grid();
        assert_relative_eq!(fdi_sample_check(&filter, &m, &g, &grid).unwrap(), -1.0, epsilon = 1e-15);
        assert!(fdi_sample_check(&filter, &(-m), &g, &grid).unwrap() > 0.0);
    }

    #[test]
    fn empty_gamma_range_rejected() {
        let g = Realization::static_gain(DMatrix::zeros(1, 1));
        let filter = Realization::static_gain(DMatrix::identity(2, 2));
        // M = diag(1, 1) can never be certified.
        let m = DMatrix::identity(2, 2);
        let r = gamma_bisection(&DMatrix::zeros(0, 0), &m, &g, &filter, 1e-6, 1e-6, 1e-3, 0.0);
        assert!(matches!(r, Err(IqcError::NoFeasibleGamma { .. })));
    }

    #[test]
    fn zero_plant_is_certified() {
        let g = Realization::static_gain(DMatrix::zeros(1, 1));
        let v = robust_stability_test(&g, &Interval::new(-1.0, 1.0).unwrap(), 0, &AnalysisOptions::default()).unwrap();
        assert!(v.certified);
        assert!(v.bundle.unwrap().p[(0, 0)] > 0.0);
    }

    #[test]
    fn well_posedness_violation_detected() {
        let mut plant = UncertainPlant::example();
        plant.d_zw[(0, 0)] = 1.0;
        assert!(matches!(
            check_well_posed(&plant, &Interval::new(-0.6, 5.0).unwrap(), WELL_POSED_SAMPLES),
            Err(IqcError::IllPosed { .. })
        ));
    }
}
