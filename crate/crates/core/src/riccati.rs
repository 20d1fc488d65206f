//! Stabilizing solutions of the Riccati equations that certify canonical
//! (J-spectral) factorizations of multipliers.
//!
//! Both the symmetric and the non-symmetric equation are solved through the
//! stable invariant subspace of an associated block matrix, computed with an
//! ordered complex Schur form. No initial guess is needed.

use nalgebra::{Complex, DMatrix};

use crate::error::{dim_err, IqcError, Result};
use crate::linalg::{self, block_matrix};
use crate::lmi;
use crate::statespace::{self, Realization};

/// Eigenvalues closer than this (relative) to the imaginary axis make the
/// stable subspace ambiguous and are reported as errors.
pub const AXIS_TOL: f64 = 1e-9;
/// Largest accepted condition number of the subspace basis block.
pub const MAX_BASIS_COND: f64 = 1e10;

/// Canonical factorization `Psi^* M Psi = Psi_t^* M_t Psi_t` with
/// `Psi_t = (A_Psi, B_Psi, C_t, I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalFactorization {
    pub psi_tilde: Realization,
    pub m_tilde: DMatrix<f64>,
    pub z_tilde: DMatrix<f64>,
}

/// Terminal cost `[[0, K], [K^T, 0]]` assembled from `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredTerminalCost {
    pub k: DMatrix<f64>,
    pub z: DMatrix<f64>,
}

/// Residual and closed-loop spectra of a solved Riccati equation.
#[derive(Debug, Clone, PartialEq)]
pub struct AreReport {
    /// Residual norm divided by the equation's scale.
    pub relative_residual: f64,
    pub spectrum_1: Vec<Complex<f64>>,
    pub spectrum_2: Vec<Complex<f64>>,
}

impl AreReport {
    pub fn max_real_part(&self) -> f64 {
        self.spectrum_1.iter().chain(&self.spectrum_2).map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Data of `A1^T K + K A2 + Q - (K B2 + S1) R^{-1} (B1^T K + S2) = 0`.
struct AreData {
    a1: DMatrix<f64>,
    b1: DMatrix<f64>,
    a2: DMatrix<f64>,
    b2: DMatrix<f64>,
    q: DMatrix<f64>,
    s1: DMatrix<f64>,
    s2: DMatrix<f64>,
    r_inv: DMatrix<f64>,
}

impl AreData {
    fn new(psi1: &Realization, psi2: &Realization, p: &DMatrix<f64>) -> Result<Self> {
        if p.shape() != (psi1.p(), psi2.p()) {
            return dim_err(format!(
                "middle matrix is {}x{}, filters have {} and {} outputs",
                p.nrows(),
                p.ncols(),
                psi1.p(),
                psi2.p()
            ));
        }
        if psi1.m() != psi2.m() {
            return dim_err(format!("filters have {} and {} inputs", psi1.m(), psi2.m()));
        }
        for psi in [psi1, psi2] {
            if psi.n() > 0 && !statespace::is_hurwitz(psi.a())? {
                return Err(IqcError::NotHurwitz { max_real_part: linalg::spectral_abscissa(psi.a())? });
            }
        }
        let r = psi1.d().transpose() * p * psi2.d();
        let r_inv = invert_checked(&r)?;
        Ok(Self {
            a1: psi1.a().clone(),
            b1: psi1.b().clone(),
            a2: psi2.a().clone(),
            b2: psi2.b().clone(),
            q: psi1.c().transpose() * p * psi2.c(),
            s1: psi1.c().transpose() * p * psi2.d(),
            s2: psi1.d().transpose() * p * psi2.c(),
            r_inv,
        })
    }

    fn residual(&self, k: &DMatrix<f64>) -> DMatrix<f64> {
        let left = k * &self.b2 + &self.s1;
        let right = self.b1.transpose() * k + &self.s2;
        self.a1.transpose() * k + k * &self.a2 + &self.q - left * &self.r_inv * right
    }

    fn scale(&self, k: &DMatrix<f64>) -> f64 {
        1.0 + (self.a1.transpose() * k).norm() + self.q.norm()
    }

    fn report(&self, k: &DMatrix<f64>) -> Result<AreReport> {
        let rel = self.residual(k).norm() / self.scale(k);
        let cl1 = self.a1.transpose() - (k * &self.b2 + &self.s1) * &self.r_inv * self.b1.transpose();
        let cl2 = &self.a2 - &self.b2 * &self.r_inv * (self.b1.transpose() * k + &self.s2);
        Ok(AreReport { relative_residual: rel, spectrum_1: linalg::eigenvalues(&cl1)?, spectrum_2: linalg::eigenvalues(&cl2)? })
    }

    fn solve(&self) -> Result<DMatrix<f64>> {
        let (n1, n2) = (self.a1.nrows(), self.a2.nrows());
        if n1 == 0 || n2 == 0 {
            return Ok(DMatrix::zeros(n1, n2));
        }
        let a1t = self.a1.transpose() - &self.s1 * &self.r_inv * self.b1.transpose();
        let a2 = &self.a2 - &self.b2 * &self.r_inv * &self.s2;
        let g = &self.b2 * &self.r_inv * self.b1.transpose();
        let q = &self.q - &self.s1 * &self.r_inv * &self.s2;
        let h = block_matrix(&[vec![a2, -g], vec![-q, -a1t]])?;
        // The graph [I; K] of the solution spans the stable subspace.
        linalg::stable_graph_solution(&h, n2, AXIS_TOL, MAX_BASIS_COND)
    }
}

fn invert_checked(r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if r.nrows() != r.ncols() {
        return dim_err(format!("D1^T P D2 is {}x{}, must be square", r.nrows(), r.ncols()));
    }
    let sv = r.clone().singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if r.nrows() > 0 && !(smin > 1e-12 * smax.max(1e-300)) {
        return Err(IqcError::Singular("D^T M D (feedthrough weight) is not invertible".into()));
    }
    linalg::inverse(r, "D^T M D")
}

fn check_stabilizing(report: &AreReport) -> Result<()> {
    let max_re = report.max_real_part();
    if !(max_re < 0.0) {
        return Err(IqcError::NotHurwitz { max_real_part: max_re });
    }
    Ok(())
}

/// Stabilizing solution `K` of
/// `A1^T K + K A2 + C1^T P C2 - (K B2 + C1^T P D2)(D1^T P D2)^{-1}(B1^T K + D1^T P C2) = 0`.
pub fn solve_nonsym_are(psi1: &Realization, psi2: &Realization, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let data = AreData::new(psi1, psi2, p)?;
    let k = data.solve()?;
    check_stabilizing(&data.report(&k)?)?;
    Ok(k)
}

/// Residual and closed-loop spectra of the non-symmetric equation at `k`.
pub fn nonsym_are_report(psi1: &Realization, psi2: &Realization, p: &DMatrix<f64>, k: &DMatrix<f64>) -> Result<AreReport> {
    let data = AreData::new(psi1, psi2, p)?;
    if k.shape() != (psi1.n(), psi2.n()) {
        return dim_err(format!("K is {}x{}, expected {}x{}", k.nrows(), k.ncols(), psi1.n(), psi2.n()));
    }
    data.report(k)
}

/// Stabilizing solution of
/// `A^T Z + Z A + C^T M C - (Z B + C^T M D)(D^T M D)^{-1}(B^T Z + D^T M C) = 0`.
pub fn solve_sym_are(psi: &Realization, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if (m - m.transpose()).norm() > 1e-12 * (1.0 + m.norm()) {
        return Err(IqcError::InvalidArgument("middle matrix must be symmetric".into()));
    }
    let data = AreData::new(psi, psi, m)?;
    let z = linalg::symmetrize(&data.solve()?);
    check_stabilizing(&data.report(&z)?)?;
    Ok(z)
}

/// Residual and closed-loop spectrum (`A - B C_t`) of the symmetric equation.
pub fn sym_are_report(psi: &Realization, m: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<AreReport> {
    nonsym_are_report(psi, psi, m, z)
}

/// Builds `Psi_t = (A, B, M_t^{-1}(B^T Z + D^T M C), I)` and `M_t = D^T M D`.
pub fn canonical_factor(psi: &Realization, m: &DMatrix<f64>, z_tilde: &DMatrix<f64>) -> Result<CanonicalFactorization> {
    if z_tilde.shape() != (psi.n(), psi.n()) {
        return dim_err(format!("Z is {}x{}, filter has {} states", z_tilde.nrows(), z_tilde.ncols(), psi.n()));
    }
    let m_tilde = linalg::symmetrize(&(psi.d().transpose() * m * psi.d()));
    let mt_inv = invert_checked(&m_tilde)?;
    let c_tilde = mt_inv * (psi.b().transpose() * z_tilde + psi.d().transpose() * m * psi.c());
    let k = psi.m();
    let psi_tilde = Realization::new(psi.a().clone(), psi.b().clone(), c_tilde, DMatrix::identity(k, k))?;
    Ok(CanonicalFactorization { psi_tilde, m_tilde, z_tilde: z_tilde.clone() })
}

impl CanonicalFactorization {
    /// Relative mismatch of the state-space identity
    /// `kyp(Z, M, Psi) = [C_t I]^T M_t [C_t I]`.
    pub fn identity_residual(&self, psi: &Realization, m: &DMatrix<f64>) -> Result<f64> {
        let lhs = lmi::kyp_numeric(&self.z_tilde, m, psi)?;
        let cd = linalg::hstack(&[self.psi_tilde.c(), self.psi_tilde.d()])?;
        let rhs = cd.transpose() * &self.m_tilde * cd;
        let scale = 1.0 + (psi.a().transpose() * &self.z_tilde).norm() + (psi.c().transpose() * m * psi.c()).norm();
        Ok((lhs - rhs).norm() / scale)
    }

    /// Spectrum of `A - B C_t`, the poles of the inverse factor.
    pub fn inverse_poles(&self) -> Result<Vec<Complex<f64>>> {
        linalg::eigenvalues(&(self.psi_tilde.a() - self.psi_tilde.b() * self.psi_tilde.c()))
    }
}

/// Largest relative deviation of `Psi^* M Psi` from `Psi_t^* M_t Psi_t` on a
/// frequency grid.
pub fn verify_factorization(psi: &Realization, m: &DMatrix<f64>, cf: &CanonicalFactorization, grid: &[f64]) -> Result<f64> {
    let mc = linalg::to_complex(m);
    let mtc = linalg::to_complex(&cf.m_tilde);
    let mut worst: f64 = 0.0;
    for &w in grid {
        let g = statespace::freq_response(psi, w)?;
        let gt = statespace::freq_response(&cf.psi_tilde, w)?;
        let lhs = g.adjoint() * &mc * &g;
        let rhs = gt.adjoint() * &mtc * &gt;
        worst = worst.max((&lhs - rhs).norm() / (1.0 + lhs.norm()));
    }
    Ok(worst)
}

pub fn terminal_cost_from_k(k: &DMatrix<f64>) -> StructuredTerminalCost {
    StructuredTerminalCost { k: k.clone(), z: lmi::structured_m_numeric(k) }
}

/// `n` logarithmically spaced points on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..n).map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64)).collect()
        }
    }
}
