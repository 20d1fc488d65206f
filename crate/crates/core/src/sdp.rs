//! Dense primal-dual interior-point solver for small semidefinite programs.
//!
//! Problems are taken in the form
//!
//! ```text
//! minimize c^T x   subject to   F_b(x) = F0_b + sum_i x_i F_bi ⪰ 0  for every block b
//! ```
//!
//! with the dual `maximize -<F0, Z>` over `Z ⪰ 0`, `<F_i, Z> = c_i`. Iterates
//! follow the Nesterov-Todd direction with a Mehrotra predictor-corrector and
//! an infeasible start (`x = 0`, `S`, `Z` scaled identities).
//!
//! The NT scaling is formed from Cholesky factors and one SVD per block, so
//! the scaled primal and dual iterates coincide with the same diagonal
//! matrix. The Schur complement is then a Gram matrix of the scaled
//! coefficient matrices and is positive semidefinite by construction.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::Result;
use crate::linalg;
use crate::lmi::SdpProblem;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol_feas: f64,
    pub tol_gap: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol_feas: 1e-8, tol_gap: 1e-8, max_iter: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    /// Converged to the requested gap and feasibility tolerances.
    Optimal,
    /// A feasible point was found but optimality was not certified (pure
    /// feasibility problems, or progress stalled near the optimum).
    Feasible,
    /// A dual improving ray was detected.
    Infeasible,
    NumericalFailure,
}

impl SdpStatus {
    pub fn is_success(&self) -> bool {
        matches!(self, SdpStatus::Optimal | SdpStatus::Feasible)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SdpStatus::Optimal => "optimal",
            SdpStatus::Feasible => "feasible",
            SdpStatus::Infeasible => "infeasible",
            SdpStatus::NumericalFailure => "numerical_failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub x: DVector<f64>,
    pub status: SdpStatus,
    pub objective: f64,
    pub dual_objective: f64,
    /// Most negative eigenvalue over all normalized constraints at `x`
    /// (margins included).
    pub worst_residual: f64,
    pub iterations: usize,
    pub rel_gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    /// Per-constraint smallest eigenvalue, in problem order.
    pub residuals: Vec<(String, f64)>,
    /// Constraints carrying most of the weight of an infeasibility ray.
    pub infeasible_constraints: Vec<String>,
    pub message: String,
}

/// Smallest eigenvalue of a symmetric matrix (`+inf` for an empty one).
pub fn min_eig(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() == 0 {
        return Ok(f64::INFINITY);
    }
    Ok(linalg::sym_eigenvalues(m)?[0])
}

struct Block {
    constraint: usize,
    f0: DMatrix<f64>,
    coeffs: Vec<(usize, DMatrix<f64>)>,
}

impl Block {
    fn size(&self) -> usize {
        self.f0.nrows()
    }

    fn eval(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut out = self.f0.clone();
        for (k, f) in &self.coeffs {
            out += f * x[*k];
        }
        out
    }
}

/// Per-block NT scaling: `G^T S G = G^{-1} Z G^{-T} = diag(lambda)`.
struct Scaling {
    g: DMatrix<f64>,
    g_inv: DMatrix<f64>,
    lambda: DVector<f64>,
    /// Scaled coefficient matrices `G^T F_i G`, in the block's coefficient order.
    ft: Vec<DMatrix<f64>>,
}

fn nt_scaling(s: &DMatrix<f64>, z: &DMatrix<f64>, block: &Block) -> Option<Scaling> {
    let ls = Cholesky::new(s.clone())?.l();
    let lz = Cholesky::new(z.clone())?.l();
    let svd = (lz.transpose() * &ls).svd(false, true);
    let v = svd.v_t?.transpose();
    let lambda = svd.singular_values;
    if lambda.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
        return None;
    }
    let sqrt_l = lambda.map(f64::sqrt);
    let mut g = ls.transpose().solve_upper_triangular(&v)?;
    for (j, sl) in sqrt_l.iter().enumerate() {
        g.column_mut(j).scale_mut(*sl);
    }
    let mut g_inv = v.transpose() * ls.transpose();
    for (i, sl) in sqrt_l.iter().enumerate() {
        g_inv.row_mut(i).scale_mut(1.0 / sl);
    }
    let gt = g.transpose();
    let ft = block.coeffs.iter().map(|(_, f)| &gt * f * &g).collect();
    Some(Scaling { g, g_inv, lambda, ft })
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b)
}

/// Largest `alpha` with `diag(lambda) + alpha * d ⪰ 0` (capped at 1e30).
fn max_step_scaled(lambda: &DVector<f64>, d: &DMatrix<f64>) -> f64 {
    let n = lambda.len();
    if n == 0 {
        return 1e30;
    }
    let inv = lambda.map(|l| 1.0 / l.sqrt());
    let m = DMatrix::from_fn(n, n, |i, j| d[(i, j)] * inv[i] * inv[j]);
    match linalg::sym_eigenvalues(&m) {
        Ok(w) if w[0] < 0.0 => -1.0 / w[0],
        Ok(_) => 1e30,
        Err(_) => 0.0,
    }
}

fn is_pd(m: &DMatrix<f64>) -> bool {
    m.nrows() == 0 || Cholesky::new(linalg::symmetrize(m)).is_some()
}

struct Direction {
    dx: DVector<f64>,
    ds: Vec<DMatrix<f64>>, // scaled
    dz: Vec<DMatrix<f64>>, // scaled
}

struct Residuals {
    rd: Vec<DMatrix<f64>>,
    rp: DVector<f64>,
}

struct SchurFactor {
    chol: Cholesky<f64, nalgebra::Dyn>,
    m: DMatrix<f64>,
}

impl SchurFactor {
    fn new(m: DMatrix<f64>) -> Option<Self> {
        let n = m.nrows();
        let dmax = (0..n).map(|i| m[(i, i)]).fold(0.0_f64, f64::max).max(1e-300);
        let mut reg = 0.0;
        for _ in 0..40 {
            let mut mr = m.clone();
            for i in 0..n {
                mr[(i, i)] += reg;
            }
            if let Some(chol) = Cholesky::new(mr) {
                return Some(Self { chol, m });
            }
            reg = if reg == 0.0 { 1e-15 * dmax } else { reg * 10.0 };
        }
        None
    }

    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let mut x = self.chol.solve(rhs);
        let r = rhs - &self.m * &x;
        x += self.chol.solve(&r);
        x
    }
}

struct Solver<'a> {
    blocks: Vec<Block>,
    c: &'a DVector<f64>,
    n: usize,
}

impl<'a> Solver<'a> {
    fn primal_map(&self, x: &DVector<f64>) -> Vec<DMatrix<f64>> {
        self.blocks.iter().map(|b| b.eval(x)).collect()
    }

    fn dual_map(&self, z: &[DMatrix<f64>]) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        for (b, blk) in self.blocks.iter().enumerate() {
            for (k, f) in &blk.coeffs {
                out[*k] += inner(f, &z[b]);
            }
        }
        out
    }

    fn schur(&self, sc: &[Scaling]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (b, blk) in self.blocks.iter().enumerate() {
            let k = blk.coeffs.len();
            if k == 0 {
                continue;
            }
            let nb = blk.size();
            let mut a = DMatrix::zeros(nb * nb, k);
            for (j, ft) in sc[b].ft.iter().enumerate() {
                a.column_mut(j).copy_from_slice(ft.as_slice());
            }
            let gram = a.transpose() * &a;
            for (i, (vi, _)) in blk.coeffs.iter().enumerate() {
                for (j, (vj, _)) in blk.coeffs.iter().enumerate() {
                    m[(*vi, *vj)] += gram[(i, j)];
                }
            }
        }
        linalg::symmetrize(&m)
    }

    fn direction(
        &self,
        sc: &[Scaling],
        res: &Residuals,
        factor: &SchurFactor,
        target_mu: f64,
        corr: Option<&[DMatrix<f64>]>,
    ) -> Direction {
        // Y_b = L_lambda^{-1}(2 target_mu I - 2 diag(lambda)^2 - corr_b)
        let mut y = Vec::with_capacity(self.blocks.len());
        let mut rd_t = Vec::with_capacity(self.blocks.len());
        for (b, s) in sc.iter().enumerate() {
            let nb = s.lambda.len();
            let mut rc = DMatrix::zeros(nb, nb);
            for i in 0..nb {
                rc[(i, i)] = 2.0 * target_mu - 2.0 * s.lambda[i] * s.lambda[i];
            }
            if let Some(corr) = corr {
                rc -= &corr[b];
            }
            y.push(DMatrix::from_fn(nb, nb, |i, j| rc[(i, j)] / (s.lambda[i] + s.lambda[j])));
            rd_t.push(s.g.transpose() * &res.rd[b] * &s.g);
        }
        let mut rhs = -&res.rp;
        for (b, blk) in self.blocks.iter().enumerate() {
            let t = &y[b] - &rd_t[b];
            for (j, (k, _)) in blk.coeffs.iter().enumerate() {
                rhs[*k] += inner(&sc[b].ft[j], &t);
            }
        }
        let dx = factor.solve(&rhs);
        let mut ds = Vec::with_capacity(self.blocks.len());
        let mut dz = Vec::with_capacity(self.blocks.len());
        for (b, blk) in self.blocks.iter().enumerate() {
            let mut d = rd_t[b].clone();
            for (j, (k, _)) in blk.coeffs.iter().enumerate() {
                d += &sc[b].ft[j] * dx[*k];
            }
            let d = linalg::symmetrize(&d);
            dz.push(linalg::symmetrize(&(&y[b] - &d)));
            ds.push(d);
        }
        Direction { dx, ds, dz }
    }
}

/// Solves the problem. Malformed problems are reported as errors; every
/// solver outcome (including infeasibility) is reported through the status.
pub fn solve(problem: &SdpProblem, opts: &SolverOptions) -> Result<SdpSolution> {
    problem.validate()?;
    let n = problem.layout.len();
    let c = &problem.objective;
    let blocks: Vec<Block> = problem
        .constraints
        .iter()
        .enumerate()
        .filter(|(_, con)| con.size() > 0)
        .map(|(i, con)| {
            let e = con.normalized();
            Block { constraint: i, f0: e.constant_term().clone(), coeffs: e.coefficients().to_vec() }
        })
        .collect();
    let solver = Solver { blocks, c, n };
    run(problem, &solver, opts)
}

fn finish(
    problem: &SdpProblem,
    x: DVector<f64>,
    status: SdpStatus,
    iterations: usize,
    stats: (f64, f64, f64, f64),
    infeasible_constraints: Vec<String>,
    message: String,
) -> Result<SdpSolution> {
    let mut residuals = Vec::with_capacity(problem.constraints.len());
    let mut worst = f64::INFINITY;
    for con in &problem.constraints {
        let r = con.residual(&x)?;
        worst = worst.min(r);
        residuals.push((con.name.clone(), r));
    }
    let (dual_objective, rel_gap, pinf, dinf) = stats;
    Ok(SdpSolution {
        objective: problem.objective.dot(&x),
        x,
        status,
        dual_objective,
        worst_residual: worst,
        iterations,
        rel_gap,
        primal_infeasibility: pinf,
        dual_infeasibility: dinf,
        residuals,
        infeasible_constraints,
        message,
    })
}

fn frob(mats: &[DMatrix<f64>]) -> f64 {
    mats.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
}

fn run(problem: &SdpProblem, sv: &Solver, opts: &SolverOptions) -> Result<SdpSolution> {
    let n = sv.n;
    let nb = sv.blocks.len();
    let feasibility = sv.c.iter().all(|v| *v == 0.0);

    if nb == 0 {
        let (status, msg) = if feasibility {
            (SdpStatus::Optimal, "no constraints".to_string())
        } else {
            (SdpStatus::NumericalFailure, "objective unbounded: no constraints".to_string())
        };
        return finish(problem, DVector::zeros(n), status, 0, (0.0, 0.0, 0.0, 0.0), vec![], msg);
    }
    if n == 0 {
        let x = DVector::zeros(0);
        let failing: Vec<String> = sv
            .blocks
            .iter()
            .filter(|b| min_eig(&b.f0).map(|e| e < 0.0).unwrap_or(true))
            .map(|b| problem.constraints[b.constraint].name.clone())
            .collect();
        let status = if failing.is_empty() { SdpStatus::Optimal } else { SdpStatus::Infeasible };
        return finish(problem, x, status, 0, (0.0, 0.0, 0.0, 0.0), failing, "no decision variables".into());
    }

    let f0: Vec<DMatrix<f64>> = sv.blocks.iter().map(|b| b.f0.clone()).collect();
    let norm_f0 = frob(&f0);
    let norm_c = sv.c.norm();
    let total: usize = sv.blocks.iter().map(Block::size).sum();

    // Initial point in the style of SDPT3.
    let mut x = DVector::zeros(n);
    let mut s = Vec::with_capacity(nb);
    let mut z = Vec::with_capacity(nb);
    for blk in &sv.blocks {
        let nbk = blk.size() as f64;
        let fmax = blk.coeffs.iter().map(|(_, f)| f.norm()).fold(1.0, f64::max);
        let xi = blk
            .coeffs
            .iter()
            .map(|(k, f)| (1.0 + sv.c[*k].abs()) / (1.0 + f.norm()))
            .fold(10.0_f64.max(nbk.sqrt()), f64::max);
        let eta = 10.0_f64.max(nbk.sqrt()).max(blk.f0.norm()).max(fmax);
        z.push(DMatrix::identity(blk.size(), blk.size()) * xi);
        s.push(DMatrix::identity(blk.size(), blk.size()) * eta);
    }

    let mut best_feasible: Option<(f64, DVector<f64>)> = None;
    let mut best_merit = f64::INFINITY;
    let mut since_improvement = 0;
    let mut last_stats = (0.0, f64::INFINITY, f64::INFINITY, f64::INFINITY);

    for it in 0..opts.max_iter {
        let fx = sv.primal_map(&x);
        let rd: Vec<DMatrix<f64>> = fx.iter().zip(&s).map(|(f, s)| f - s).collect();
        let az = sv.dual_map(&z);
        let rp = sv.c - &az;
        let sz: f64 = s.iter().zip(&z).map(|(s, z)| inner(s, z)).sum();
        let mu = sz / total as f64;
        let pobj = sv.c.dot(&x);
        let dobj: f64 = -f0.iter().zip(&z).map(|(f, z)| inner(f, z)).sum::<f64>();
        let rel_gap = sz / (1.0 + pobj.abs() + dobj.abs());
        let pinf = frob(&rd) / (1.0 + norm_f0);
        let dinf = rp.norm() / (1.0 + norm_c + frob(&z));
        last_stats = (dobj, rel_gap, pinf, dinf);

        let worst = fx.iter().map(|f| min_eig(f).unwrap_or(f64::NEG_INFINITY)).fold(f64::INFINITY, f64::min);
        let primal_ok = worst >= -opts.tol_feas;
        log::debug!(
            "sdp it {it}: pobj {pobj:.10e} dobj {dobj:.10e} gap {rel_gap:.2e} pinf {pinf:.2e} dinf {dinf:.2e} worst {worst:.2e}"
        );

        if feasibility && worst >= 0.0 {
            return finish(problem, x, SdpStatus::Feasible, it, last_stats, vec![], "strictly feasible point found".into());
        }
        if primal_ok && best_feasible.as_ref().map_or(true, |(o, _)| pobj < *o) {
            best_feasible = Some((pobj, x.clone()));
        }
        if rel_gap < opts.tol_gap && pinf < opts.tol_feas && dinf < opts.tol_feas && primal_ok {
            return finish(problem, x, SdpStatus::Optimal, it, last_stats, vec![], "converged".into());
        }

        // Dual improving ray: <F0, Zn> < 0 with A(Zn) ~ 0. Infeasibility that
        // exists only through the strictness margin has a ray value of the
        // order of the margin, so a looser residual test is accepted once
        // the dual objective has clearly diverged.
        let trz: f64 = z.iter().map(|m| m.trace()).sum();
        let ray_value = dobj / trz;
        let ray_residual = az.norm() / trz;
        let diverged = dobj > 1e6 * (1.0 + pobj.abs() + norm_f0);
        if ray_value > 1e-10 && (ray_residual <= 1e-8 * ray_value || (diverged && ray_residual <= 1e-3 * ray_value)) {
            let weights: Vec<f64> = z.iter().map(|m| m.trace() / trz).collect();
            let wmax = weights.iter().copied().fold(0.0, f64::max);
            let names = sv
                .blocks
                .iter()
                .zip(&weights)
                .filter(|(_, w)| **w >= 0.1 * wmax)
                .map(|(b, _)| problem.constraints[b.constraint].name.clone())
                .collect();
            return finish(problem, x, SdpStatus::Infeasible, it, last_stats, names, "dual improving ray detected".into());
        }

        let merit = rel_gap.max(pinf).max(dinf);
        if merit < 0.9 * best_merit {
            best_merit = merit;
            since_improvement = 0;
        } else {
            since_improvement += 1;
        }

        let stall = |x: DVector<f64>, why: &str| -> Result<SdpSolution> {
            match &best_feasible {
                Some((_, xb)) => finish(
                    problem,
                    xb.clone(),
                    SdpStatus::Feasible,
                    it,
                    last_stats,
                    vec![],
                    format!("{why}; returning best feasible iterate (relative gap {rel_gap:.1e})"),
                ),
                None => finish(problem, x, SdpStatus::NumericalFailure, it, last_stats, vec![], why.to_string()),
            }
        };
        if since_improvement >= 20 {
            return stall(x, "no progress in 20 iterations");
        }

        let mut scalings = Vec::with_capacity(nb);
        for (b, blk) in sv.blocks.iter().enumerate() {
            match nt_scaling(&s[b], &z[b], blk) {
                Some(sc) => scalings.push(sc),
                None => return stall(x, "scaling matrix lost definiteness"),
            }
        }
        let Some(factor) = SchurFactor::new(sv.schur(&scalings)) else {
            return stall(x, "Schur complement factorization failed");
        };
        let res = Residuals { rd, rp };

        // Predictor.
        let aff = sv.direction(&scalings, &res, &factor, 0.0, None);
        let step = |d: &Direction| -> (f64, f64) {
            let mut ap: f64 = 1e30;
            let mut ad: f64 = 1e30;
            for (b, sc) in scalings.iter().enumerate() {
                ap = ap.min(max_step_scaled(&sc.lambda, &d.ds[b]));
                ad = ad.min(max_step_scaled(&sc.lambda, &d.dz[b]));
            }
            (ap, ad)
        };
        let (ap, ad) = step(&aff);
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let mut sz_aff = 0.0;
        for (b, sc) in scalings.iter().enumerate() {
            let lam = DMatrix::from_diagonal(&sc.lambda);
            sz_aff += inner(&(&lam + &aff.ds[b] * ap), &(&lam + &aff.dz[b] * ad));
        }
        let mu_aff = sz_aff / total as f64;
        let sigma = (mu_aff / mu).max(0.0).powi(3).min(1.0);

        // Corrector.
        let corr: Vec<DMatrix<f64>> = aff
            .ds
            .iter()
            .zip(&aff.dz)
            .map(|(ds, dz)| {
                let p = ds * dz;
                &p + p.transpose()
            })
            .collect();
        let dir = sv.direction(&scalings, &res, &factor, sigma * mu, Some(&corr));
        let (ap, ad) = step(&dir);
        let mut ap = (0.95 * ap).min(1.0);
        let mut ad = (0.95 * ad).min(1.0);

        let ds: Vec<DMatrix<f64>> =
            scalings.iter().zip(&dir.ds).map(|(sc, d)| sc.g_inv.transpose() * d * &sc.g_inv).collect();
        let dz: Vec<DMatrix<f64>> = scalings.iter().zip(&dir.dz).map(|(sc, d)| &sc.g * d * sc.g.transpose()).collect();
        let advance = |m: &[DMatrix<f64>], d: &[DMatrix<f64>], a: f64| -> Vec<DMatrix<f64>> {
            m.iter().zip(d).map(|(m, d)| linalg::symmetrize(&(m + d * a))).collect()
        };
        let mut s_new = advance(&s, &ds, ap);
        let mut tries = 0;
        while !s_new.iter().all(is_pd) && tries < 60 {
            ap *= 0.8;
            s_new = advance(&s, &ds, ap);
            tries += 1;
        }
        let mut z_new = advance(&z, &dz, ad);
        tries = 0;
        while !z_new.iter().all(is_pd) && tries < 60 {
            ad *= 0.8;
            z_new = advance(&z, &dz, ad);
            tries += 1;
        }
        if ap < 1e-12 && ad < 1e-12 {
            return stall(x, "step lengths vanished");
        }
        x += &dir.dx * ap;
        s = s_new;
        z = z_new;
    }

    let (_, rel_gap, pinf, dinf) = last_stats;
    let msg = format!(
        "iteration limit {} reached (relative gap {rel_gap:.1e}, primal {pinf:.1e}, dual {dinf:.1e})",
        opts.max_iter
    );
    let x = best_feasible.map(|(_, x)| x).unwrap_or(x);
    finish(problem, x, SdpStatus::NumericalFailure, opts.max_iter, last_stats, vec![], msg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmi::{AffineMatrix, LmiConstraint, Sense, VarLayout};
    use approx::assert_relative_eq;

    #[test]
    fn trace_projection() {
        let mut layout = VarLayout::new();
        let y = layout.add_symmetric("Y", 2);
        let target = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let expr = layout.var(y).sub(&AffineMatrix::constant(target)).unwrap().into_symmetric().unwrap();
        let mut p = SdpProblem::new(layout);
        p.push(LmiConstraint::nonstrict("Y >= C", expr, Sense::Psd));
        p.minimize_trace(y);
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert_relative_eq!(sol.objective, 3.0, epsilon = 1e-7);
        let yv = p.layout.extract(&sol.x, y);
        assert!((yv - DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0])).norm() < 1e-6);
    }

    #[test]
    fn two_by_two_eigenvalue_bound() {
        let mut layout = VarLayout::new();
        let x = layout.add_scalar("x");
        let mut e = AffineMatrix::constant(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        e = e.add(&AffineMatrix::blocks(&[vec![layout.var(x), AffineMatrix::zeros(1, 1)], vec![AffineMatrix::zeros(1, 1), layout.var(x)]]).unwrap()).unwrap();
        let mut p = SdpProblem::new(layout);
        p.push(LmiConstraint::nonstrict("[[x,1],[1,x]]", e.into_symmetric().unwrap(), Sense::Psd));
        p.objective[0] = 1.0;
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert_relative_eq!(sol.x[0], 1.0, epsilon = 1e-7);
    }

    #[test]
    fn scalar_lyapunov_feasibility() {
        let mut layout = VarLayout::new();
        let pv = layout.add_scalar("p");
        let e = layout.var(pv).scale(-2.0).into_symmetric().unwrap();
        let mut p = SdpProblem::new(layout);
        p.push(LmiConstraint::strict("lyap", e, Sense::Nsd, 1e-6));
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Feasible);
        assert!(sol.x[0] >= 5e-7);
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let mut layout = VarLayout::new();
        let v = layout.add_scalar("x");
        let x = layout.var(v);
        let one = AffineMatrix::constant(DMatrix::from_element(1, 1, 1.0));
        let mut p = SdpProblem::new(layout);
        p.push(LmiConstraint::nonstrict("x >= 1", x.sub(&one).unwrap().into_symmetric().unwrap(), Sense::Psd));
        p.push(LmiConstraint::nonstrict("x <= -1", x.add(&one).unwrap().into_symmetric().unwrap(), Sense::Nsd));
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Infeasible);
        assert_eq!(sol.infeasible_constraints.len(), 2);
    }

    #[test]
    fn constant_constraint_without_variables() {
        let layout = VarLayout::new();
        let mut p = SdpProblem::new(layout);
        p.push(LmiConstraint::strict(
            "fdi",
            crate::lmi::AffineMatrixExpr::constant(DMatrix::from_element(1, 1, 1.0)).unwrap(),
            Sense::Nsd,
            1e-6,
        ));
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Infeasible);
        assert_eq!(sol.infeasible_constraints, vec!["fdi".to_string()]);
    }

    #[test]
    fn min_eig_basics() {
        assert_eq!(min_eig(&DMatrix::identity(3, 3)).unwrap(), 1.0);
        assert_relative_eq!(min_eig(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap(), -1.0, epsilon = 1e-14);
    }
}
