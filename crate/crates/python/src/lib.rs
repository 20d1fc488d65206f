//! Python bindings. Matrices cross the boundary as lists of rows and vectors
//! as flat lists, so the module has no NumPy dependency (NumPy arrays are
//! accepted anywhere a nested sequence is).

use nalgebra::{Complex, DMatrix, DVector};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use iqc_core::analysis::{self, AnalysisOptions};
use iqc_core::sim::{self, ContainmentOptions};
use iqc_core::{lmi, riccati, statespace, IqcError};

create_exception!(iqc_dissipation, AnalysisError, PyException, "Raised for numerical or modelling failures in the analysis.");
create_exception!(iqc_dissipation, InfeasibleError, AnalysisError, "Raised when the LMIs have no solution.");

type Rows = Vec<Vec<f64>>;

fn err(e: IqcError) -> PyErr {
    match e {
        IqcError::Infeasible { .. } => InfeasibleError::new_err(e.to_string()),
        IqcError::Dimension(_) | IqcError::InvalidArgument(_) | IqcError::InvalidInterval { .. } => PyValueError::new_err(e.to_string()),
        _ => AnalysisError::new_err(e.to_string()),
    }
}

fn mat(rows: &Rows, name: &str) -> PyResult<DMatrix<f64>> {
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != c) {
        return Err(PyValueError::new_err(format!("{name}: rows have different lengths")));
    }
    Ok(DMatrix::from_fn(rows.len(), c, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn vecs(v: &[DVector<f64>]) -> Rows {
    v.iter().map(|x| x.iter().copied().collect()).collect()
}

/// State-space realization `(A, B, C, D)`.
#[pyclass(module = "iqc_dissipation", frozen)]
struct Realization(statespace::Realization);

#[pymethods]
impl Realization {
    #[new]
    fn new(a: Rows, b: Rows, c: Rows, d: Rows) -> PyResult<Self> {
        statespace::Realization::new(mat(&a, "a")?, mat(&b, "b")?, mat(&c, "c")?, mat(&d, "d")?).map(Self).map_err(err)
    }

    #[getter]
    fn a(&self) -> Rows {
        rows(self.0.a())
    }
    #[getter]
    fn b(&self) -> Rows {
        rows(self.0.b())
    }
    #[getter]
    fn c(&self) -> Rows {
        rows(self.0.c())
    }
    #[getter]
    fn d(&self) -> Rows {
        rows(self.0.d())
    }

    /// `(states, inputs, outputs)`.
    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        (self.0.n(), self.0.m(), self.0.p())
    }

    fn is_stable(&self) -> PyResult<bool> {
        self.0.is_stable().map_err(err)
    }

    /// Frequency response at `j omega` as nested lists of complex numbers.
    fn freq_response(&self, omega: f64) -> PyResult<Vec<Vec<Complex<f64>>>> {
        let g = statespace::freq_response(&self.0, omega).map_err(err)?;
        Ok(g.row_iter().map(|r| r.iter().copied().collect()).collect())
    }

    fn __repr__(&self) -> String {
        let (n, m, p) = self.shape();
        format!("Realization(states={n}, inputs={m}, outputs={p})")
    }
}

/// Parameter interval `[alpha, beta]` containing zero.
#[pyclass(module = "iqc_dissipation", frozen)]
struct Interval(statespace::Interval);

#[pymethods]
impl Interval {
    #[new]
    fn new(alpha: f64, beta: f64) -> PyResult<Self> {
        statespace::Interval::new(alpha, beta).map(Self).map_err(err)
    }
    #[getter]
    fn alpha(&self) -> f64 {
        self.0.alpha
    }
    #[getter]
    fn beta(&self) -> f64 {
        self.0.beta
    }
    fn __contains__(&self, delta: f64) -> bool {
        self.0.contains(delta)
    }
    fn __repr__(&self) -> String {
        format!("Interval({}, {})", self.0.alpha, self.0.beta)
    }
}

/// Plant with uncertainty channel `w = delta z`, disturbance `d` and
/// performance output `e`.
#[pyclass(module = "iqc_dissipation", frozen)]
struct UncertainPlant(statespace::UncertainPlant);

#[pymethods]
impl UncertainPlant {
    #[new]
    fn new(a: Rows, b_w: Rows, b_d: Rows, c_z: Rows, d_zw: Rows, d_zd: Rows, c_e: Rows) -> PyResult<Self> {
        statespace::UncertainPlant::new(
            mat(&a, "a")?,
            mat(&b_w, "b_w")?,
            mat(&b_d, "b_d")?,
            mat(&c_z, "c_z")?,
            mat(&d_zw, "d_zw")?,
            mat(&d_zd, "d_zd")?,
            mat(&c_e, "c_e")?,
        )
        .map(Self)
        .map_err(err)
    }

    /// The bundled fourth-order example.
    #[staticmethod]
    fn example() -> Self {
        Self(statespace::UncertainPlant::example())
    }

    /// Channel `w -> z` seen by the uncertainty.
    fn g(&self) -> Realization {
        Realization(self.0.g())
    }

    /// `{"n", "n_w", "n_d", "n_z", "n_e"}`.
    fn dims<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        d.set_item("n", self.0.n())?;
        d.set_item("n_w", self.0.n_w())?;
        d.set_item("n_d", self.0.n_d())?;
        d.set_item("n_z", self.0.n_z())?;
        d.set_item("n_e", self.0.n_e())?;
        Ok(d)
    }

    fn closed_loop(&self, delta: f64) -> PyResult<Realization> {
        sim::closed_loop(&self.0, delta).map(Realization).map_err(err)
    }
}

/// Multiplier, storage and terminal-cost certificates for one basis length.
#[pyclass(module = "iqc_dissipation", frozen)]
struct CertificateBundle(analysis::CertificateBundle);

#[pymethods]
impl CertificateBundle {
    #[getter]
    fn nu(&self) -> usize {
        self.0.nu
    }
    #[getter]
    fn p(&self) -> Rows {
        rows(&self.0.p)
    }
    #[getter]
    fn xcal(&self) -> Rows {
        rows(&self.0.xcal)
    }
    #[getter]
    fn r(&self) -> Rows {
        rows(&self.0.r)
    }
    #[getter]
    fn k(&self) -> Rows {
        rows(&self.0.k)
    }
    #[getter]
    fn y(&self) -> Option<Rows> {
        self.0.y.as_ref().map(rows)
    }
    #[getter]
    fn z_tilde(&self) -> Rows {
        rows(&self.0.z_tilde.z)
    }
    #[getter]
    fn m(&self) -> Rows {
        rows(&self.0.m())
    }
    #[getter]
    fn status(&self) -> &'static str {
        self.0.diagnostics.status.as_str()
    }
    #[getter]
    fn iterations(&self) -> usize {
        self.0.diagnostics.iterations
    }
    #[getter]
    fn objective(&self) -> f64 {
        self.0.diagnostics.objective
    }
    #[getter]
    fn residuals(&self) -> Vec<(String, f64)> {
        self.0.diagnostics.residuals.clone()
    }

    /// `min_eig(X - diag(Z, 0))`, positive when the storage certificate
    /// dominates the terminal cost.
    fn coupling_margin(&self) -> PyResult<f64> {
        analysis::positivity_check(&self.0.xcal, &self.0.z_tilde.z).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("CertificateBundle(nu={}, status={})", self.0.nu, self.status())
    }
}

fn options(eps_margin: Option<f64>) -> AnalysisOptions {
    let mut o = AnalysisOptions::default();
    if let Some(e) = eps_margin {
        o.assembly.eps_margin = e;
    }
    o
}

/// Minimum-trace invariant ellipsoid `{e : e^T Y^-1 e <= 1}` for
/// unit-energy disturbances. Returns `(bundle, trace)`.
#[pyfunction]
#[pyo3(signature = (plant, interval, nu, eps_margin=None))]
fn robust_ellipsoid_analysis(py: Python<'_>, plant: &UncertainPlant, interval: &Interval, nu: usize, eps_margin: Option<f64>) -> PyResult<(CertificateBundle, f64)> {
    let (p, iv, opts) = (plant.0.clone(), interval.0, options(eps_margin));
    let (bundle, report) = py.detach(move || analysis::robust_ellipsoid_analysis(&p, &iv, nu, &opts)).map_err(err)?;
    Ok((CertificateBundle(bundle), report.trace))
}

/// Convex robust-stability test for `w = delta z`. Returns
/// `(certified, message, bundle_or_None)`.
#[pyfunction]
#[pyo3(signature = (g, interval, nu, eps_margin=None))]
fn robust_stability_test(py: Python<'_>, g: &Realization, interval: &Interval, nu: usize, eps_margin: Option<f64>) -> PyResult<(bool, String, Option<CertificateBundle>)> {
    let (g, iv, opts) = (g.0.clone(), interval.0, options(eps_margin));
    let v = py.detach(move || analysis::robust_stability_test(&g, &iv, nu, &opts)).map_err(err)?;
    Ok((v.certified, v.message, v.bundle.map(CertificateBundle)))
}

/// Smallest `gamma` (to relative tolerance) certifying the gain bound from
/// `d` to `z` with the bundle's storage and multiplier.
#[pyfunction]
#[pyo3(signature = (bundle, g, interval, lo=1e-6, hi=1e8, rel_tol=1e-3))]
fn gamma_bisection(bundle: &CertificateBundle, g: &Realization, interval: &Interval, lo: f64, hi: f64, rel_tol: f64) -> PyResult<f64> {
    let b = &bundle.0;
    let filter = lmi::parametric_filter(b.nu, &interval.0, g.0.p()).map_err(err)?;
    analysis::gamma_bisection(&b.xcal, &b.m(), &g.0, &filter, lo, hi, rel_tol, 0.0).map_err(err)
}

/// Stabilizing solution `K` of the non-symmetric Riccati equation built from
/// the multiplier coefficients `P` on the basis of length `len(P) - 1`.
/// Returns `(K, relative_residual)`.
#[pyfunction]
fn solve_nonsym_are(p: Rows) -> PyResult<(Rows, f64)> {
    let p = mat(&p, "p")?;
    if p.nrows() == 0 || p.nrows() != p.ncols() {
        return Err(PyValueError::new_err("p must be a nonempty square matrix"));
    }
    let psi = statespace::psi_basis(p.nrows() - 1);
    let k = riccati::solve_nonsym_are(&psi, &psi, &p).map_err(err)?;
    let rep = riccati::nonsym_are_report(&psi, &psi, &p, &k).map_err(err)?;
    Ok((rows(&k), rep.relative_residual))
}

/// Stabilizing solution of the symmetric Riccati equation for the filter
/// `(a, b, c, d)` and middle matrix `m`. Returns `(Z, relative_residual)`.
#[pyfunction]
fn solve_sym_are(filter: &Realization, m: Rows) -> PyResult<(Rows, f64)> {
    let m = mat(&m, "m")?;
    let z = riccati::solve_sym_are(&filter.0, &m).map_err(err)?;
    let rep = riccati::sym_are_report(&filter.0, &m, &z).map_err(err)?;
    Ok((rows(&z), rep.relative_residual))
}

/// Simulates the loop from rest under held disturbance samples `d` (one row
/// per step). Returns a dict of channels `t, d, z, w, e, x, energy`.
#[pyfunction]
#[pyo3(signature = (plant, delta, d, dt=sim::DEFAULT_DT))]
fn simulate_loop<'py>(py: Python<'py>, plant: &UncertainPlant, delta: f64, d: Rows, dt: f64) -> PyResult<Bound<'py, PyDict>> {
    let d: Vec<DVector<f64>> = d.into_iter().map(DVector::from_vec).collect();
    let traj = sim::simulate_loop(&plant.0, delta, &d, dt).map_err(err)?;
    trajectory_dict(py, &traj)
}

fn trajectory_dict<'py>(py: Python<'py>, traj: &sim::Trajectory) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    out.set_item("t", traj.times())?;
    for name in traj.channel_names() {
        out.set_item(name, vecs(traj.channel(name).expect("listed channel")))?;
    }
    Ok(out)
}

/// Unit-energy disturbance driving `e` to the reachable-set boundary along
/// `direction`. Returns `(d, e_star, e_final, trajectory)`.
#[pyfunction]
#[pyo3(signature = (plant, delta, direction, horizon=sim::DEFAULT_HORIZON, dt=sim::DEFAULT_DT))]
fn worst_case_disturbance<'py>(
    py: Python<'py>,
    plant: &UncertainPlant,
    delta: f64,
    direction: Vec<f64>,
    horizon: f64,
    dt: f64,
) -> PyResult<(Rows, Vec<f64>, Vec<f64>, Bound<'py, PyDict>)> {
    let wc = sim::worst_case_disturbance(&plant.0, delta, &DVector::from_vec(direction), horizon, dt).map_err(err)?;
    let traj = trajectory_dict(py, &wc.trajectory)?;
    Ok((vecs(&wc.d), wc.e_star.as_slice().to_vec(), wc.e_final.as_slice().to_vec(), traj))
}

/// Randomized check that trajectories stay inside `{e : e^T Y^-1 e <= energy}`.
/// Returns `(runs, violations, worst_excess, max_level)`.
#[pyfunction]
#[pyo3(signature = (plant, interval, y, runs=100, horizon=sim::DEFAULT_HORIZON, dt=sim::DEFAULT_DT, seed=42))]
fn containment_check(
    py: Python<'_>,
    plant: &UncertainPlant,
    interval: &Interval,
    y: Rows,
    runs: usize,
    horizon: f64,
    dt: f64,
    seed: u64,
) -> PyResult<(usize, usize, f64, f64)> {
    let y = mat(&y, "y")?;
    let opts = ContainmentOptions { runs, horizon, dt, seed, ..ContainmentOptions::default() };
    let (p, iv) = (plant.0.clone(), interval.0);
    let s = py.detach(move || sim::containment_check(&p, &iv, &y, &opts)).map_err(err)?;
    Ok((s.runs, s.violations, s.worst_excess, s.max_level))
}

/// Boundary points `(theta, [e1, e2])` of a two-dimensional ellipse.
#[pyfunction]
#[pyo3(signature = (y, count=256))]
fn ellipse_boundary_points(y: Rows, count: usize) -> PyResult<Vec<(f64, Vec<f64>)>> {
    let pts = analysis::ellipse_boundary_points(&mat(&y, "y")?, count).map_err(err)?;
    Ok(pts.into_iter().map(|(t, p)| (t, p.as_slice().to_vec())).collect())
}

#[pymodule]
fn iqc_dissipation(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("AnalysisError", py.get_type::<AnalysisError>())?;
    m.add("InfeasibleError", py.get_type::<InfeasibleError>())?;
    m.add_class::<Realization>()?;
    m.add_class::<Interval>()?;
    m.add_class::<UncertainPlant>()?;
    m.add_class::<CertificateBundle>()?;
    m.add_function(wrap_pyfunction!(robust_ellipsoid_analysis, m)?)?;
    m.add_function(wrap_pyfunction!(robust_stability_test, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_bisection, m)?)?;
    m.add_function(wrap_pyfunction!(solve_nonsym_are, m)?)?;
    m.add_function(wrap_pyfunction!(solve_sym_are, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_loop, m)?)?;
    m.add_function(wrap_pyfunction!(worst_case_disturbance, m)?)?;
    m.add_function(wrap_pyfunction!(containment_check, m)?)?;
    m.add_function(wrap_pyfunction!(ellipse_boundary_points, m)?)?;
    Ok(())
}
