//! Continuous-time state-space realizations and the interconnections used to
//! build multiplier filters.
//!
//! Static gains (zero states) are ordinary realizations here: every operation
//! accepts empty state blocks.

use nalgebra::{Complex, DMatrix};

use crate::error::{dim_err, IqcError, Result};
use crate::linalg::{self, block_matrix, CMatrix};

/// Spectral tolerance used to classify a matrix as Hurwitz.
pub const TOL_SPECTRAL: f64 = 1e-9;

/// A real realization `(A, B, C, D)` of `C (sI - A)^{-1} B + D`.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
}

impl Realization {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return dim_err(format!("state matrix is {}x{}, must be square", a.nrows(), a.ncols()));
        }
        if b.nrows() != n {
            return dim_err(format!("input matrix has {} rows, expected {n}", b.nrows()));
        }
        if c.ncols() != n {
            return dim_err(format!("output matrix has {} columns, expected {n}", c.ncols()));
        }
        if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return dim_err(format!(
                "feedthrough is {}x{}, expected {}x{}",
                d.nrows(),
                d.ncols(),
                c.nrows(),
                b.ncols()
            ));
        }
        Ok(Self { a, b, c, d })
    }

    /// A memoryless gain `y = d u`.
    pub fn static_gain(d: DMatrix<f64>) -> Self {
        let (p, m) = d.shape();
        Self { a: DMatrix::zeros(0, 0), b: DMatrix::zeros(0, m), c: DMatrix::zeros(p, 0), d }
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }
    /// Number of states.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    /// Number of inputs.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }
    /// Number of outputs.
    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    pub fn into_parts(self) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        (self.a, self.b, self.c, self.d)
    }

    pub fn is_stable(&self) -> Result<bool> {
        is_hurwitz(&self.a)
    }
}

/// Plant in feedback with a parametric uncertainty `w = delta z`, driven by a
/// disturbance `d`, with performance output `e = C_e x`.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertainPlant {
    pub a: DMatrix<f64>,
    pub b_w: DMatrix<f64>,
    pub b_d: DMatrix<f64>,
    pub c_z: DMatrix<f64>,
    pub d_zw: DMatrix<f64>,
    pub d_zd: DMatrix<f64>,
    pub c_e: DMatrix<f64>,
}

impl UncertainPlant {
    pub fn new(
        a: DMatrix<f64>,
        b_w: DMatrix<f64>,
        b_d: DMatrix<f64>,
        c_z: DMatrix<f64>,
        d_zw: DMatrix<f64>,
        d_zd: DMatrix<f64>,
        c_e: DMatrix<f64>,
    ) -> Result<Self> {
        let plant = Self { a, b_w, b_d, c_z, d_zw, d_zd, c_e };
        plant.validate()?;
        Ok(plant)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a.nrows();
        let checks: [(&str, &DMatrix<f64>, usize, usize); 7] = [
            ("a", &self.a, n, n),
            ("b_w", &self.b_w, n, self.n_w()),
            ("b_d", &self.b_d, n, self.n_d()),
            ("c_z", &self.c_z, self.n_z(), n),
            ("d_zw", &self.d_zw, self.n_z(), self.n_w()),
            ("d_zd", &self.d_zd, self.n_z(), self.n_d()),
            ("c_e", &self.c_e, self.n_e(), n),
        ];
        for (name, m, r, c) in checks {
            if m.shape() != (r, c) {
                return dim_err(format!("{name} is {}x{}, expected {r}x{c}", m.nrows(), m.ncols()));
            }
        }
        if self.n_z() != self.n_w() {
            return dim_err(format!("uncertainty channel must be square (n_z = {}, n_w = {})", self.n_z(), self.n_w()));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    pub fn n_w(&self) -> usize {
        self.b_w.ncols()
    }
    pub fn n_d(&self) -> usize {
        self.b_d.ncols()
    }
    pub fn n_z(&self) -> usize {
        self.c_z.nrows()
    }
    pub fn n_e(&self) -> usize {
        self.c_e.nrows()
    }

    /// The `w -> z` channel `G`.
    pub fn g(&self) -> Realization {
        Realization { a: self.a.clone(), b: self.b_w.clone(), c: self.c_z.clone(), d: self.d_zw.clone() }
    }

    /// The numerical example: a fourth-order plant with a scalar uncertain
    /// parameter and a two-dimensional performance output.
    pub fn example() -> Self {
        let a = DMatrix::from_row_slice(4, 4, &[
            -0.97, 2.2, 2.36, 3.45, //
            -0.21, -0.8, 5.2, -0.35, //
            -2.56, -4.97, -0.75, -9.75, //
            -3.64, 0.2, 9.68, -0.64,
        ]);
        let b_w = DMatrix::from_column_slice(4, 1, &[-0.62, -0.7, -1.42, 0.0]);
        let b_d = DMatrix::from_column_slice(4, 1, &[-0.1, -0.32, -0.84, 0.0]);
        let c_z = DMatrix::from_row_slice(1, 4, &[0.0, -0.36, 0.36, -0.57]);
        let d_zw = DMatrix::from_element(1, 1, -1.14);
        let d_zd = DMatrix::from_element(1, 1, -1.76);
        let c_e = DMatrix::from_row_slice(2, 4, &[1.5, -0.11, 0.0, 0.93, 0.1, 0.0, 0.0, 0.0]);
        Self { a, b_w, b_d, c_z, d_zw, d_zd, c_e }
    }
}

/// Uncertainty range `[alpha, beta]` for the parameter `delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub alpha: f64,
    pub beta: f64,
}

impl Interval {
    /// Requires finite endpoints with `alpha < 0 < beta`.
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !alpha.is_finite() || !beta.is_finite() {
            return Err(IqcError::InvalidInterval { alpha, beta, reason: "endpoints must be finite" });
        }
        if alpha > beta {
            return Err(IqcError::InvalidInterval { alpha, beta, reason: "alpha must not exceed beta" });
        }
        if !(alpha < 0.0 && 0.0 < beta) {
            return Err(IqcError::InvalidInterval { alpha, beta, reason: "zero must lie strictly inside" });
        }
        Ok(Self { alpha, beta })
    }

    pub fn contains(&self, delta: f64) -> bool {
        self.alpha <= delta && delta <= self.beta
    }

    /// `count` equally spaced samples including both endpoints.
    pub fn samples(&self, count: usize) -> Vec<f64> {
        match count {
            0 => Vec::new(),
            1 => vec![0.5 * (self.alpha + self.beta)],
            _ => (0..count)
                .map(|k| self.alpha + (self.beta - self.alpha) * k as f64 / (count - 1) as f64)
                .collect(),
        }
    }
}

/// Basis filter with transfer `col(1, 1/(s+1), ..., 1/(s+1)^nu)`, realized as
/// a chain of first-order lags.
pub fn psi_basis(nu: usize) -> Realization {
    let mut a = DMatrix::zeros(nu, nu);
    for i in 0..nu {
        a[(i, i)] = -1.0;
        if i > 0 {
            a[(i, i - 1)] = 1.0;
        }
    }
    let mut b = DMatrix::zeros(nu, 1);
    if nu > 0 {
        b[(0, 0)] = 1.0;
    }
    let mut c = DMatrix::zeros(nu + 1, nu);
    c.view_mut((1, 0), (nu, nu)).fill_with_identity();
    let mut d = DMatrix::zeros(nu + 1, 1);
    d[(0, 0)] = 1.0;
    Realization { a, b, c, d }
}

/// Realization of `diag(G1, G2)` with states ordered `(x1, x2)`.
pub fn diag_join(r1: &Realization, r2: &Realization) -> Realization {
    Realization {
        a: linalg::block_diag(&[&r1.a, &r2.a]),
        b: linalg::block_diag(&[&r1.b, &r2.b]),
        c: linalg::block_diag(&[&r1.c, &r2.c]),
        d: linalg::block_diag(&[&r1.d, &r2.d]),
    }
}

/// Series connection `outer * inner` with state `(x_outer, x_inner)`.
pub fn cascade(outer: &Realization, inner: &Realization) -> Result<Realization> {
    if outer.m() != inner.p() {
        return dim_err(format!("cascade: outer has {} inputs but inner has {} outputs", outer.m(), inner.p()));
    }
    let (no, ni) = (outer.n(), inner.n());
    let a = block_matrix(&[
        vec![outer.a.clone(), &outer.b * &inner.c],
        vec![DMatrix::zeros(ni, no), inner.a.clone()],
    ])?;
    let b = linalg::vstack(&[&(&outer.b * &inner.d), &inner.b])?;
    let c = linalg::hstack(&[&outer.c, &(&outer.d * &inner.c)])?;
    let d = &outer.d * &inner.d;
    Realization::new(a, b, c, d)
}

/// Realization of the inverse graph `[G; I]`.
pub fn inverse_graph(g: &Realization) -> Realization {
    let m = g.m();
    let c = linalg::vstack(&[&g.c, &DMatrix::zeros(m, g.n())]).expect("column counts agree");
    let d = linalg::vstack(&[&g.d, &DMatrix::identity(m, m)]).expect("column counts agree");
    Realization { a: g.a.clone(), b: g.b.clone(), c, d }
}

/// Left-multiplies the outputs by a constant matrix.
pub fn premultiply(k: &DMatrix<f64>, r: &Realization) -> Result<Realization> {
    if k.ncols() != r.p() {
        return dim_err(format!("premultiply: gain has {} columns, system has {} outputs", k.ncols(), r.p()));
    }
    Realization::new(r.a.clone(), r.b.clone(), k * &r.c, k * &r.d)
}

/// Right-multiplies the inputs by a constant matrix.
pub fn postmultiply(r: &Realization, k: &DMatrix<f64>) -> Result<Realization> {
    if k.nrows() != r.m() {
        return dim_err(format!("postmultiply: gain has {} rows, system has {} inputs", k.nrows(), r.m()));
    }
    Realization::new(r.a.clone(), &r.b * k, r.c.clone(), &r.d * k)
}

/// Evaluates `C (i omega I - A)^{-1} B + D`.
pub fn freq_response(r: &Realization, omega: f64) -> Result<CMatrix> {
    let d = linalg::to_complex(&r.d);
    let n = r.n();
    if n == 0 {
        return Ok(d);
    }
    let mut si_a = linalg::to_complex(&(-&r.a));
    for i in 0..n {
        si_a[(i, i)] += Complex::new(0.0, omega);
    }
    let lu = si_a.lu();
    // Reject evaluations at (or numerically at) a pole.
    let diag_min = (0..n).map(|i| lu.u()[(i, i)].norm()).fold(f64::INFINITY, f64::min);
    if diag_min <= 1e-13 * (1.0 + r.a.norm() + omega.abs()) {
        return Err(IqcError::Pole { omega });
    }
    let x = lu.solve(&linalg::to_complex(&r.b)).ok_or(IqcError::Pole { omega })?;
    Ok(linalg::to_complex(&r.c) * x + d)
}

/// True iff every eigenvalue has real part below `-TOL_SPECTRAL`.
pub fn is_hurwitz(a: &DMatrix<f64>) -> Result<bool> {
    Ok(linalg::spectral_abscissa(a)? < -TOL_SPECTRAL)
}

/// `T = [[I, -I/beta], [-alpha I, I]]` for an `n`-dimensional channel.
pub fn parametric_t(interval: &Interval, n: usize) -> Result<DMatrix<f64>> {
    if interval.beta == 0.0 {
        return Err(IqcError::InvalidInterval {
            alpha: interval.alpha,
            beta: interval.beta,
            reason: "beta must be nonzero",
        });
    }
    let eye = DMatrix::<f64>::identity(n, n);
    block_matrix(&[vec![eye.clone(), &eye * (-1.0 / interval.beta)], vec![&eye * (-interval.alpha), eye]])
}

/// `J = [I; I]`.
pub fn parametric_j(n: usize) -> DMatrix<f64> {
    let eye = DMatrix::<f64>::identity(n, n);
    linalg::vstack(&[&eye, &eye]).expect("same width")
}

/// `E = [I; 0]`.
pub fn parametric_e(n: usize) -> DMatrix<f64> {
    linalg::vstack(&[&DMatrix::identity(n, n), &DMatrix::zeros(n, n)]).expect("same width")
}

/// `Psi = diag(psi_basis(nu), psi_basis(nu))`, the filter of the scalar
/// parametric multiplier class.
pub fn example_filter(nu: usize) -> Realization {
    let psi = psi_basis(nu);
    diag_join(&psi, &psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn psi_basis_zero_is_static_one() {
        let p = psi_basis(0);
        assert_eq!((p.n(), p.m(), p.p()), (0, 1, 1));
        assert_eq!(p.d()[(0, 0)], 1.0);
    }

    #[test]
    fn psi_basis_one_matches_inspection() {
        let p = psi_basis(1);
        assert_eq!(p.a()[(0, 0)], -1.0);
        assert_eq!(p.b()[(0, 0)], 1.0);
        assert_eq!(p.c().as_slice(), &[0.0, 1.0]);
        assert_eq!(p.d().as_slice(), &[1.0, 0.0]);
        let g0 = freq_response(&p, 0.0).unwrap();
        assert_relative_eq!(g0[(1, 0)].re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn psi_basis_two_at_unit_frequency() {
        let g = freq_response(&psi_basis(2), 1.0).unwrap();
        let s1 = c(1.0, 0.0) / c(1.0, 1.0);
        let expect = [c(1.0, 0.0), s1, s1 * s1];
        for (i, e) in expect.iter().enumerate() {
            assert!((g[(i, 0)] - e).norm() < 1e-14);
        }
    }

    #[test]
    fn diag_join_of_gains() {
        let j = diag_join(
            &Realization::static_gain(DMatrix::from_element(1, 1, 1.0)),
            &Realization::static_gain(DMatrix::from_element(1, 1, 2.0)),
        );
        assert_eq!(j.d(), &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]));
        let jj = diag_join(&psi_basis(1), &psi_basis(1));
        assert_eq!((jj.n(), jj.m(), jj.p()), (2, 2, 4));
    }

    #[test]
    fn cascade_with_static_gain() {
        let r = cascade(&psi_basis(1), &Realization::static_gain(DMatrix::from_element(1, 1, 2.0))).unwrap();
        for w in [0.0, 0.3, 2.0] {
            let g = freq_response(&r, w).unwrap();
            assert!((g[(0, 0)] - c(2.0, 0.0)).norm() < 1e-14);
            assert!((g[(1, 0)] - c(2.0, 0.0) / c(1.0, w)).norm() < 1e-14);
        }
        assert!(cascade(&psi_basis(1), &psi_basis(1)).is_err());
    }

    #[test]
    fn inverse_graph_dimensions() {
        let f = inverse_graph(&Realization::static_gain(DMatrix::zeros(1, 1)));
        assert_eq!(f.d().as_slice(), &[0.0, 1.0]);
        let g = UncertainPlant::example().g();
        let f = inverse_graph(&g);
        assert_eq!((f.n(), f.m(), f.p()), (4, 1, 2));
    }

    #[test]
    fn example_plant_dc_gain() {
        let g = UncertainPlant::example().g();
        let dc = freq_response(&g, 0.0).unwrap();
        let oracle = g.d() - g.c() * g.a().clone().lu().solve(g.b()).unwrap();
        assert!((dc[(0, 0)].re - oracle[(0, 0)]).abs() < 1e-12);
        assert!(dc[(0, 0)].im.abs() < 1e-14);
    }

    #[test]
    fn pole_is_reported() {
        let r = Realization::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        assert!(matches!(freq_response(&r, 1.0), Err(IqcError::Pole { .. })));
    }

    #[test]
    fn hurwitz_classification() {
        assert!(is_hurwitz(&DMatrix::from_element(1, 1, -1.0)).unwrap());
        assert!(!is_hurwitz(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])).unwrap());
        assert!(is_hurwitz(&UncertainPlant::example().a).unwrap());
    }

    #[test]
    fn parametric_matrices() {
        let t = parametric_t(&Interval { alpha: -1.0, beta: 1.0 }, 1).unwrap();
        assert_eq!(t, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 1.0, 1.0]));
        let t = parametric_t(&Interval::new(-0.6, 5.0).unwrap(), 1).unwrap();
        assert_relative_eq!(t[(0, 1)], -0.2, epsilon = 1e-15);
        assert_relative_eq!(t[(1, 0)], 0.6, epsilon = 1e-15);
        assert_relative_eq!(t.determinant(), 1.12, epsilon = 1e-14);
        assert!(parametric_t(&Interval { alpha: -1.0, beta: 0.0 }, 1).is_err());
        assert_eq!(parametric_j(1).as_slice(), &[1.0, 1.0]);
        assert_eq!(parametric_e(1).as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn interval_validation() {
        assert!(Interval::new(1.0, -1.0).is_err());
        assert!(Interval::new(0.5, 1.0).is_err());
        assert!(Interval::new(f64::NAN, 1.0).is_err());
        let i = Interval::new(-0.6, 5.0).unwrap();
        let s = i.samples(101);
        assert_eq!(s.len(), 101);
        assert_eq!(s[0], -0.6);
        assert_eq!(s[100], 5.0);
    }

    #[test]
    fn realization_rejects_bad_shapes() {
        assert!(Realization::new(DMatrix::zeros(2, 2), DMatrix::zeros(1, 1), DMatrix::zeros(1, 2), DMatrix::zeros(1, 1))
            .is_err());
        assert!(Realization::new(DMatrix::zeros(1, 1), DMatrix::zeros(1, 1), DMatrix::zeros(1, 1), DMatrix::zeros(2, 1))
            .is_err());
    }
}
