//! Dense linear-algebra helpers shared by the analysis modules.
//!
//! Everything here works on `nalgebra` dynamic matrices and accepts
//! zero-sized operands, because static multipliers produce empty state
//! blocks throughout the pipeline.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

use crate::error::{IqcError, Result};

pub type CMatrix = DMatrix<Complex<f64>>;

const EIG_EPS: f64 = 1e-15;
const EIG_MAX_ITER: usize = 10_000;

/// Block-diagonal concatenation.
pub fn block_diag(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Assemble a dense matrix from a grid of blocks. Row heights and column
/// widths are taken from the blocks themselves and must agree.
pub fn block_matrix(grid: &[Vec<DMatrix<f64>>]) -> Result<DMatrix<f64>> {
    if grid.is_empty() {
        return Ok(DMatrix::zeros(0, 0));
    }
    let ncols = grid[0].len();
    let heights: Vec<usize> = grid.iter().map(|row| row[0].nrows()).collect();
    let widths: Vec<usize> = grid[0].iter().map(|b| b.ncols()).collect();
    for (i, row) in grid.iter().enumerate() {
        if row.len() != ncols {
            return Err(IqcError::Dimension(format!("block row {i} has {} blocks, expected {ncols}", row.len())));
        }
        for (j, b) in row.iter().enumerate() {
            if b.nrows() != heights[i] || b.ncols() != widths[j] {
                return Err(IqcError::Dimension(format!(
                    "block ({i},{j}) is {}x{}, expected {}x{}",
                    b.nrows(),
                    b.ncols(),
                    heights[i],
                    widths[j]
                )));
            }
        }
    }
    let mut out = DMatrix::zeros(heights.iter().sum(), widths.iter().sum());
    let mut r = 0;
    for (i, row) in grid.iter().enumerate() {
        let mut c = 0;
        for (j, b) in row.iter().enumerate() {
            out.view_mut((r, c), (heights[i], widths[j])).copy_from(b);
            c += widths[j];
        }
        r += heights[i];
    }
    Ok(out)
}

pub fn vstack(parts: &[&DMatrix<f64>]) -> Result<DMatrix<f64>> {
    block_matrix(&parts.iter().map(|p| vec![(*p).clone()]).collect::<Vec<_>>())
}

pub fn hstack(parts: &[&DMatrix<f64>]) -> Result<DMatrix<f64>> {
    block_matrix(&[parts.iter().map(|p| (*p).clone()).collect()])
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    if m.nrows() != m.ncols() {
        return Err(IqcError::Dimension(format!("eigenvalues of non-square {}x{}", m.nrows(), m.ncols())));
    }
    if m.nrows() == 0 {
        return Ok(DVector::zeros(0));
    }
    let eig = SymmetricEigen::try_new(symmetrize(m), EIG_EPS, EIG_MAX_ITER).ok_or(IqcError::NoConvergence)?;
    let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| a.total_cmp(b));
    Ok(DVector::from_vec(v))
}

/// Symmetric eigendecomposition `m = V diag(w) V^T` with ascending `w`.
pub fn sym_eigen(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    if n == 0 {
        return Ok((DVector::zeros(0), DMatrix::zeros(0, 0)));
    }
    let eig = SymmetricEigen::try_new(symmetrize(m), EIG_EPS, EIG_MAX_ITER).ok_or(IqcError::NoConvergence)?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let w = DVector::from_iterator(n, idx.iter().map(|&i| eig.eigenvalues[i]));
    let mut v = DMatrix::zeros(n, n);
    for (k, &i) in idx.iter().enumerate() {
        v.set_column(k, &eig.eigenvectors.column(i));
    }
    Ok((w, v))
}

/// Largest eigenvalue of a Hermitian matrix.
pub fn hermitian_max_eig(m: &CMatrix) -> Result<f64> {
    if m.nrows() == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    let h = (m + m.adjoint()).map(|z| z * 0.5);
    let eig = SymmetricEigen::try_new(h, EIG_EPS, EIG_MAX_ITER).ok_or(IqcError::NoConvergence)?;
    Ok(eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// Symmetric square root of a positive semidefinite matrix.
pub fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (w, v) = sym_eigen(m)?;
    let s = DMatrix::from_diagonal(&w.map(|x| x.max(0.0).sqrt()));
    Ok(&v * s * v.transpose())
}

/// Eigenvalues of a general real square matrix.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    if a.nrows() != a.ncols() {
        return Err(IqcError::Dimension(format!("eigenvalues of non-square {}x{}", a.nrows(), a.ncols())));
    }
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = a.clone().try_schur(EIG_EPS, EIG_MAX_ITER).ok_or(IqcError::NoConvergence)?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Largest real part of the spectrum (`-inf` for an empty matrix).
pub fn spectral_abscissa(a: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues(a)?.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    if a.nrows() == 0 {
        return DMatrix::zeros(0, 0);
    }
    a.exp()
}

pub fn solve(a: &DMatrix<f64>, b: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if a.nrows() == 0 {
        return Ok(DMatrix::zeros(0, b.ncols()));
    }
    a.clone().lu().solve(b).ok_or_else(|| IqcError::Singular(what.to_string()))
}

pub fn inverse(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if a.nrows() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let inv = a.clone().try_inverse().ok_or_else(|| IqcError::Singular(what.to_string()))?;
    if inv.iter().any(|x| !x.is_finite()) {
        return Err(IqcError::Singular(what.to_string()));
    }
    Ok(inv)
}

/// Solves `a X + X a^T + q = 0` by the vectorized (Kronecker) linear system.
pub fn lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let op = eye.kronecker(a) + a.kronecker(&eye);
    let rhs = DVector::from_iterator(n * n, q.iter().map(|v| -v));
    let sol = op.lu().solve(&rhs).ok_or_else(|| IqcError::Singular("Lyapunov operator".into()))?;
    Ok(symmetrize(&DMatrix::from_column_slice(n, n, sol.as_slice())))
}

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| Complex::new(x, 0.0))
}

/// Complex Schur form `a = Q T Q^H` with `T` upper triangular, obtained from
/// the real Schur form by splitting every 2x2 bump with a unitary rotation.
pub fn complex_schur(a: &DMatrix<f64>) -> Result<(CMatrix, CMatrix)> {
    let n = a.nrows();
    let (q, t) = a.clone().try_schur(EIG_EPS, EIG_MAX_ITER).ok_or(IqcError::NoConvergence)?.unpack();
    let mut q = to_complex(&q);
    let mut t = to_complex(&t);
    let mut k = 0;
    while k + 1 < n {
        let sub = t[(k + 1, k)];
        if sub.norm() <= f64::EPSILON * (t[(k, k)].norm() + t[(k + 1, k + 1)].norm()) {
            t[(k + 1, k)] = Complex::new(0.0, 0.0);
            k += 1;
            continue;
        }
        let (a11, a12, a21, a22) = (t[(k, k)], t[(k, k + 1)], t[(k + 1, k)], t[(k + 1, k + 1)]);
        let half_tr = (a11 + a22) * 0.5;
        let disc = ((a11 - a22) * 0.5).powi(2) + a12 * a21;
        let lambda = half_tr + disc.sqrt();
        let (mut v1, mut v2) = if a12.norm() >= a21.norm() { (a12, lambda - a11) } else { (lambda - a22, a21) };
        let nv = (v1.norm_sqr() + v2.norm_sqr()).sqrt();
        v1 /= nv;
        v2 /= nv;
        // G = [[v1, -conj(v2)], [v2, conj(v1)]]
        let g = [[v1, -v2.conj()], [v2, v1.conj()]];
        apply_left_adjoint(&mut t, k, &g);
        apply_right(&mut t, k, &g);
        apply_right(&mut q, k, &g);
        t[(k + 1, k)] = Complex::new(0.0, 0.0);
        k += 2;
    }
    Ok((q, t))
}

fn apply_left_adjoint(m: &mut CMatrix, k: usize, g: &[[Complex<f64>; 2]; 2]) {
    for j in 0..m.ncols() {
        let (x, y) = (m[(k, j)], m[(k + 1, j)]);
        m[(k, j)] = g[0][0].conj() * x + g[1][0].conj() * y;
        m[(k + 1, j)] = g[0][1].conj() * x + g[1][1].conj() * y;
    }
}

fn apply_right(m: &mut CMatrix, k: usize, g: &[[Complex<f64>; 2]; 2]) {
    for i in 0..m.nrows() {
        let (x, y) = (m[(i, k)], m[(i, k + 1)]);
        m[(i, k)] = x * g[0][0] + y * g[1][0];
        m[(i, k + 1)] = x * g[0][1] + y * g[1][1];
    }
}

/// Plane rotation `[c s; -conj(s) c]` annihilating `g` against `f`.
fn lartg(f: Complex<f64>, g: Complex<f64>) -> (f64, Complex<f64>) {
    if g.norm() == 0.0 {
        return (1.0, Complex::new(0.0, 0.0));
    }
    if f.norm() == 0.0 {
        return (0.0, g.conj() / g.norm());
    }
    let n = (f.norm_sqr() + g.norm_sqr()).sqrt();
    let phase = f / f.norm();
    (f.norm() / n, phase * g.conj() / n)
}

fn rot_rows(m: &mut CMatrix, r1: usize, r2: usize, from: usize, c: f64, s: Complex<f64>) {
    for j in from..m.ncols() {
        let (x, y) = (m[(r1, j)], m[(r2, j)]);
        m[(r1, j)] = x * c + s * y;
        m[(r2, j)] = y * c - s.conj() * x;
    }
}

fn rot_cols(m: &mut CMatrix, c1: usize, c2: usize, upto: usize, c: f64, s: Complex<f64>) {
    for i in 0..upto {
        let (x, y) = (m[(i, c1)], m[(i, c2)]);
        m[(i, c1)] = x * c + s * y;
        m[(i, c2)] = y * c - s.conj() * x;
    }
}

/// Swap the adjacent diagonal entries `k`, `k+1` of an upper-triangular
/// Schur factor, updating the unitary basis accordingly.
fn swap_adjacent(t: &mut CMatrix, q: &mut CMatrix, k: usize) {
    let n = t.nrows();
    let (t11, t22) = (t[(k, k)], t[(k + 1, k + 1)]);
    let (c, s) = lartg(t[(k, k + 1)], t22 - t11);
    if k + 2 < n {
        rot_rows(t, k, k + 1, k + 2, c, s);
    }
    rot_cols(t, k, k + 1, k, c, s.conj());
    t[(k, k)] = t22;
    t[(k + 1, k + 1)] = t11;
    let rows = q.nrows();
    rot_cols(q, k, k + 1, rows, c, s.conj());
}

/// Orthonormal basis (complex) of the invariant subspace of `h` belonging to
/// the eigenvalues in the open left half-plane, ordered by reordering the
/// complex Schur form. Eigenvalues within `axis_tol` of the imaginary axis
/// are reported as an error.
pub fn stable_invariant_subspace(h: &DMatrix<f64>, expected: usize, axis_tol: f64) -> Result<CMatrix> {
    let n = h.nrows();
    let (mut q, mut t) = complex_schur(h)?;
    let scale = 1.0 + h.norm();
    let mut stable = 0;
    for i in 0..n {
        let z = t[(i, i)];
        if z.re.abs() <= axis_tol * scale {
            return Err(IqcError::AxisEigenvalue { re: z.re, im: z.im, tol: axis_tol * scale });
        }
        if z.re < 0.0 {
            stable += 1;
        }
    }
    if stable != expected {
        return Err(IqcError::StableSubspace { expected, found: stable });
    }
    // Bubble every stable eigenvalue to the leading block.
    let mut placed = 0;
    for i in 0..n {
        if t[(i, i)].re < 0.0 {
            let mut j = i;
            while j > placed {
                swap_adjacent(&mut t, &mut q, j - 1);
                j -= 1;
            }
            placed += 1;
        }
    }
    Ok(q.columns(0, expected).into_owned())
}

/// Solves for `X = U2 U1^{-1}` where `[U1; U2]` spans the stable invariant
/// subspace of `h` and `U1` has `lead` rows. The result must be real.
pub fn stable_graph_solution(h: &DMatrix<f64>, lead: usize, axis_tol: f64, max_cond: f64) -> Result<DMatrix<f64>> {
    let n = h.nrows();
    if lead == 0 {
        return Ok(DMatrix::zeros(n, 0));
    }
    let u = stable_invariant_subspace(h, lead, axis_tol)?;
    let u1 = u.rows(0, lead).into_owned();
    let u2 = u.rows(lead, n - lead).into_owned();
    let sv = u1.clone().singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(cond <= max_cond) {
        return Err(IqcError::IllConditioned { cond });
    }
    // X U1 = U2  <=>  U1^T X^T = U2^T
    let xt = u1
        .transpose()
        .lu()
        .solve(&u2.transpose())
        .ok_or(IqcError::IllConditioned { cond: f64::INFINITY })?;
    let x = xt.transpose();
    let re = x.map(|z| z.re);
    let im_norm = x.map(|z| z.im).norm();
    if im_norm > 1e-6 * (1.0 + re.norm()) {
        return Err(IqcError::Solver(format!("stable subspace solution is not real (imaginary part {im_norm:e})")));
    }
    Ok(re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn block_diag_handles_empty_blocks() {
        let a = DMatrix::from_row_slice(1, 1, &[2.0]);
        let e = DMatrix::<f64>::zeros(0, 0);
        let b = block_diag(&[&e, &a, &e]);
        assert_eq!(b.shape(), (1, 1));
        assert_eq!(b[(0, 0)], 2.0);
    }

    #[test]
    fn block_matrix_rejects_ragged() {
        let a = DMatrix::<f64>::zeros(1, 1);
        let b = DMatrix::<f64>::zeros(2, 1);
        assert!(block_matrix(&[vec![a.clone(), a.clone()], vec![b, a]]).is_err());
    }

    #[test]
    fn complex_schur_reconstructs() {
        let a = DMatrix::from_row_slice(4, 4, &[
            -0.97, 2.2, 2.36, 3.45, -0.21, -0.8, 5.2, -0.35, -2.56, -4.97, -0.75, -9.75, -3.64, 0.2, 9.68, -0.64,
        ]);
        let (q, t) = complex_schur(&a).unwrap();
        let rec = &q * &t * q.adjoint();
        assert!((rec - to_complex(&a)).norm() < 1e-10);
        for i in 0..4 {
            for j in 0..i {
                assert!(t[(i, j)].norm() < 1e-12);
            }
        }
    }

    #[test]
    fn reordered_subspace_is_invariant() {
        let h = DMatrix::from_row_slice(4, 4, &[
            1.0, 2.0, 0.0, 0.5, -3.0, -1.0, 1.0, 0.0, 0.0, 0.3, -2.0, 1.0, 0.2, 0.0, 4.0, 0.5,
        ]);
        let stable = eigenvalues(&h).unwrap().iter().filter(|z| z.re < 0.0).count();
        let u = stable_invariant_subspace(&h, stable, 1e-9).unwrap();
        // H U = U (U^H H U)
        let hc = to_complex(&h);
        let proj = u.adjoint() * &hc * &u;
        assert!((&hc * &u - &u * &proj).norm() < 1e-10);
        let eig_proj: Vec<f64> = (0..stable).map(|i| proj[(i, i)].re).collect();
        assert!(eig_proj.iter().all(|&r| r < 0.0));
    }

    #[test]
    fn lyapunov_scalar() {
        let a = DMatrix::from_element(1, 1, -1.0);
        let q = DMatrix::from_element(1, 1, 1.0);
        assert_relative_eq!(lyapunov(&a, &q).unwrap()[(0, 0)], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let s = psd_sqrt(&m).unwrap();
        assert!((&s * &s - m).norm() < 1e-12);
    }
}
