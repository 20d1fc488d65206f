//! Time-domain engine: exact zero-order-hold simulation, quadratic supply
//! integrals, finite-horizon gramians and worst-case disturbances.
//!
//! Inputs are held constant on every sampling interval `[t_k, t_k + dt)`.
//! States are then exact at the sample times, and quadratic integrals of
//! outputs over each hold interval are evaluated exactly with a Van Loan
//! block exponential instead of a quadrature rule, so discrete dissipation
//! margins differ from their continuous-time values by roundoff only.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{dim_err, IqcError, Result};
use crate::linalg::{self, block_matrix};
use crate::statespace::{self, Interval, Realization, UncertainPlant};

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_HORIZON: f64 = 30.0;
/// Smallest accepted `|det(I - D_zw delta)|`.
pub const WELL_POSED_TOL: f64 = 1e-9;

/// Uniformly sampled named signals, `t_k = k dt` for `k = 0..=K`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub dt: f64,
    channels: BTreeMap<String, Vec<DVector<f64>>>,
}

impl Trajectory {
    pub fn new(dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(IqcError::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        Ok(Self { dt, channels: BTreeMap::new() })
    }

    pub fn insert(&mut self, name: &str, samples: Vec<DVector<f64>>) -> Result<()> {
        if let Some(len) = self.channels.values().next().map(Vec::len) {
            if samples.len() != len {
                return dim_err(format!("channel {name} has {} samples, trajectory has {len}", samples.len()));
            }
        }
        self.channels.insert(name.to_string(), samples);
        Ok(())
    }

    pub fn channel(&self, name: &str) -> Option<&[DVector<f64>]> {
        self.channels.get(name).map(Vec::as_slice)
    }

    pub fn channel_names(&self) -> impl Iterator<Item = &str> {
        self.channels.keys().map(String::as_str)
    }

    /// Number of samples `K + 1`.
    pub fn len(&self) -> usize {
        self.channels.values().next().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| k as f64 * self.dt).collect()
    }
}

/// Exact discretization `x+ = Ad x + Bd u` for inputs held over `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Zoh {
    pub ad: DMatrix<f64>,
    pub bd: DMatrix<f64>,
}

impl Zoh {
    pub fn new(a: &DMatrix<f64>, b: &DMatrix<f64>, dt: f64) -> Result<Self> {
        let (n, m) = b.shape();
        if a.shape() != (n, n) {
            return dim_err(format!("zoh: A is {}x{}, B has {n} rows", a.nrows(), a.ncols()));
        }
        let aug = block_matrix(&[vec![a.clone(), b.clone()], vec![DMatrix::zeros(m, n), DMatrix::zeros(m, m)]])? * dt;
        let e = linalg::expm(&aug);
        Ok(Self { ad: e.view((0, 0), (n, n)).into_owned(), bd: e.view((0, n), (n, m)).into_owned() })
    }

    pub fn for_realization(r: &Realization, dt: f64) -> Result<Self> {
        Self::new(r.a(), r.b(), dt)
    }
}

/// Exact integral of `y^T W y` over one hold interval of a realization,
/// as the quadratic form `[x; u]^T Phi [x; u]` in the state at the start of
/// the interval and the held input.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSupply {
    phi: DMatrix<f64>,
    n: usize,
}

impl QuadraticSupply {
    pub fn new(r: &Realization, weight: &DMatrix<f64>, dt: f64) -> Result<Self> {
        let (n, m, p) = (r.n(), r.m(), r.p());
        if weight.shape() != (p, p) {
            return dim_err(format!("supply weight is {}x{}, realization has {p} outputs", weight.nrows(), weight.ncols()));
        }
        let ahat = block_matrix(&[vec![r.a().clone(), r.b().clone()], vec![DMatrix::zeros(m, n), DMatrix::zeros(m, m)]])?;
        let chat = linalg::hstack(&[r.c(), r.d()])?;
        let q = chat.transpose() * weight * &chat;
        let k = n + m;
        let vl = block_matrix(&[vec![-ahat.transpose(), q], vec![DMatrix::zeros(k, k), ahat]])? * dt;
        let e = linalg::expm(&vl);
        let f12 = e.view((0, k), (k, k)).into_owned();
        let f22 = e.view((k, k), (k, k)).into_owned();
        Ok(Self { phi: linalg::symmetrize(&(f22.transpose() * f12)), n })
    }

    pub fn interval(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let (n, k) = (self.n, self.phi.nrows());
        let mut acc = 0.0;
        for i in 0..k {
            let vi = if i < n { x[i] } else { u[i - n] };
            if vi == 0.0 {
                continue;
            }
            let mut row = 0.0;
            for j in 0..k {
                let vj = if j < n { x[j] } else { u[j - n] };
                row += self.phi[(i, j)] * vj;
            }
            acc += vi * row;
        }
        acc
    }
}

/// Running integrals along a simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyAccumulator {
    supply: QuadraticSupply,
    pub total: f64,
}

impl EnergyAccumulator {
    pub fn new(supply: QuadraticSupply) -> Self {
        Self { supply, total: 0.0 }
    }

    /// Adds the integral over `[t_k, t_k + dt)` and returns the new total.
    pub fn step(&mut self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        self.total += self.supply.interval(x, u);
        self.total
    }
}

fn check_inputs(r: &Realization, u: &[DVector<f64>]) -> Result<()> {
    if let Some(bad) = u.iter().position(|v| v.len() != r.m()) {
        return dim_err(format!("input sample {bad} has length {}, system has {} inputs", u[bad].len(), r.m()));
    }
    Ok(())
}

/// Simulates from `x0` (zero if `None`) with inputs held between samples.
/// Channels: `u`, `x`, `y` with `y_k = C x_k + D u_k`.
pub fn simulate_zoh(r: &Realization, u: &[DVector<f64>], dt: f64, x0: Option<&DVector<f64>>) -> Result<Trajectory> {
    let mut traj = Trajectory::new(dt)?;
    check_inputs(r, u)?;
    let zoh = Zoh::for_realization(r, dt)?;
    let mut x = match x0 {
        Some(x0) if x0.len() != r.n() => return dim_err(format!("initial state has length {}, expected {}", x0.len(), r.n())),
        Some(x0) => x0.clone(),
        None => DVector::zeros(r.n()),
    };
    let mut xs = Vec::with_capacity(u.len());
    let mut ys = Vec::with_capacity(u.len());
    for uk in u {
        ys.push(r.c() * &x + r.d() * uk);
        xs.push(x.clone());
        x = &zoh.ad * &x + &zoh.bd * uk;
    }
    traj.insert("u", u.to_vec())?;
    traj.insert("x", xs)?;
    traj.insert("y", ys)?;
    Ok(traj)
}

/// Filter output and state `(y, xi)` from `xi(0) = 0`.
pub fn filter_response(filter: &Realization, u: &[DVector<f64>], dt: f64) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
    let mut t = simulate_zoh(filter, u, dt, None)?;
    let y = t.channels.remove("y").unwrap_or_default();
    let xi = t.channels.remove("x").unwrap_or_default();
    Ok((y, xi))
}

fn loop_gain(plant: &UncertainPlant, delta: f64) -> Result<DMatrix<f64>> {
    let nz = plant.n_z();
    let f = DMatrix::<f64>::identity(nz, nz) - &plant.d_zw * delta;
    let det = f.determinant();
    if !(det.abs() >= WELL_POSED_TOL) {
        return Err(IqcError::IllPosed { delta, det: det.abs() });
    }
    linalg::inverse(&f, "I - D_zw delta")
}

/// Loop `w = delta z` closed around the plant, as a realization from `d` to
/// the stacked outputs `(z, w, e, x)`.
pub fn closed_loop(plant: &UncertainPlant, delta: f64) -> Result<Realization> {
    plant.validate()?;
    let l = loop_gain(plant, delta)?;
    let n = plant.n();
    let cz = &l * &plant.c_z;
    let dz = &l * &plant.d_zd;
    let a = &plant.a + &plant.b_w * delta * &cz;
    let b = &plant.b_d + &plant.b_w * delta * &dz;
    let nd = plant.n_d();
    let c = linalg::vstack(&[&cz, &(&cz * delta), &plant.c_e, &DMatrix::identity(n, n)])?;
    let d = linalg::vstack(&[&dz, &(&dz * delta), &DMatrix::zeros(plant.n_e(), nd), &DMatrix::zeros(n, nd)])?;
    Realization::new(a, b, c, d)
}

/// Row ranges of the closed-loop outputs `(z, w, e, x)`.
pub fn closed_loop_rows(plant: &UncertainPlant) -> [std::ops::Range<usize>; 4] {
    let (nz, nw, ne, n) = (plant.n_z(), plant.n_w(), plant.n_e(), plant.n());
    [0..nz, nz..nz + nw, nz + nw..nz + nw + ne, nz + nw + ne..nz + nw + ne + n]
}

fn rows(m: &DMatrix<f64>, r: &std::ops::Range<usize>) -> DMatrix<f64> {
    m.rows(r.start, r.len()).into_owned()
}

/// Closed loop with a multiplier filter driven by `u = (z, w)`. State
/// `(xi, x)`, input `d`, outputs `(y, z, w, e, d)`.
pub fn loop_with_filter(plant: &UncertainPlant, delta: f64, filter: &Realization) -> Result<Realization> {
    let cl = closed_loop(plant, delta)?;
    let [rz, rw, re, _] = closed_loop_rows(plant);
    let ru = rz.start..rw.end;
    let inner = Realization::new(cl.a().clone(), cl.b().clone(), rows(cl.c(), &ru), rows(cl.d(), &ru))?;
    let f = statespace::cascade(filter, &inner)?;
    let nf = filter.n();
    let pad = |m: DMatrix<f64>| linalg::hstack(&[&DMatrix::zeros(m.nrows(), nf), &m]);
    let nd = plant.n_d();
    let c = linalg::vstack(&[
        f.c(),
        &pad(rows(cl.c(), &rz))?,
        &pad(rows(cl.c(), &rw))?,
        &pad(rows(cl.c(), &re))?,
        &DMatrix::zeros(nd, f.n()),
    ])?;
    let d = linalg::vstack(&[f.d(), &rows(cl.d(), &rz), &rows(cl.d(), &rw), &rows(cl.d(), &re), &DMatrix::identity(nd, nd)])?;
    Realization::new(f.a().clone(), f.b().clone(), c, d)
}

/// Worst value over all sample times of a running supply plus a terminal
/// quadratic form of the state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginReport {
    /// Minimum over `T` of the certified quantity (nonnegative when it holds).
    pub worst: f64,
    /// Magnitude of the signals involved, for relative tolerances.
    pub scale: f64,
}

impl MarginReport {
    pub fn holds(&self, rel_tol: f64) -> bool {
        self.worst >= -rel_tol * self.scale
    }
}

/// Minimum over `T` of `int_0^T y^T M y dt + xi(T)^T Z xi(T)` for the filter
/// driven by the held input `u` from rest.
pub fn check_finite_horizon_iqc(
    filter: &Realization,
    m: &DMatrix<f64>,
    z_term: &DMatrix<f64>,
    u: &[DVector<f64>],
    dt: f64,
) -> Result<MarginReport> {
    check_inputs(filter, u)?;
    if z_term.shape() != (filter.n(), filter.n()) {
        return dim_err(format!("terminal cost is {}x{}, filter has {} states", z_term.nrows(), z_term.ncols(), filter.n()));
    }
    let zoh = Zoh::for_realization(filter, dt)?;
    let mut supply = EnergyAccumulator::new(QuadraticSupply::new(filter, m, dt)?);
    let p = filter.p();
    let mut norm_acc = EnergyAccumulator::new(QuadraticSupply::new(filter, &DMatrix::identity(p, p), dt)?);
    let mut xi = DVector::zeros(filter.n());
    let mut worst: f64 = 0.0;
    for uk in u.iter().take(u.len().saturating_sub(1)) {
        let integral = supply.step(&xi, uk);
        norm_acc.step(&xi, uk);
        xi = &zoh.ad * &xi + &zoh.bd * uk;
        worst = worst.min(integral + xi.dot(&(z_term * &xi)));
    }
    let mnorm = linalg::sym_eigenvalues(m)?.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    Ok(MarginReport { worst, scale: 1.0 + mnorm * norm_acc.total + z_term.norm() * xi.norm_squared() })
}

/// Minimum over `T` of
/// `-[(xi, x)(T)^T (X - diag(Z, 0)) (xi, x)(T) + int_0^T |z|^2 / gamma - gamma |d|^2 dt]`
/// along the loop `z = G w + d`, `w = delta z`, with the filter in the loop.
#[allow(clippy::too_many_arguments)]
pub fn check_dissipation(
    xcal: &DMatrix<f64>,
    z_term: &DMatrix<f64>,
    gamma: f64,
    g: &Realization,
    filter: &Realization,
    delta: f64,
    d: &[DVector<f64>],
    dt: f64,
) -> Result<MarginReport> {
    if !(gamma > 0.0) {
        return Err(IqcError::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    let (n, nz) = (g.n(), g.p());
    let plant = UncertainPlant::new(
        g.a().clone(),
        g.b().clone(),
        DMatrix::zeros(n, nz),
        g.c().clone(),
        g.d().clone(),
        DMatrix::identity(nz, nz),
        DMatrix::zeros(0, n),
    )?;
    let lp = loop_with_filter(&plant, delta, filter)?;
    let nxi = filter.n();
    if xcal.shape() != (nxi + n, nxi + n) || z_term.shape() != (nxi, nxi) {
        return dim_err("dissipation check: certificate sizes do not match the loop".to_string());
    }
    check_inputs(&lp, d)?;
    let mut storage = xcal.clone();
    let mut top = storage.view_mut((0, 0), (nxi, nxi));
    top -= z_term;
    // Outputs (y, z, w, e, d): weight z by 1/gamma and d by -gamma.
    let p = lp.p();
    let ny = filter.p();
    let mut w = DMatrix::zeros(p, p);
    for i in 0..nz {
        w[(ny + i, ny + i)] = 1.0 / gamma;
        w[(p - nz + i, p - nz + i)] = -gamma;
    }
    let mut supply = EnergyAccumulator::new(QuadraticSupply::new(&lp, &w, dt)?);
    let zoh = Zoh::for_realization(&lp, dt)?;
    let mut s = DVector::zeros(lp.n());
    let mut worst: f64 = 0.0;
    let mut d_energy = 0.0;
    let mut max_storage: f64 = 0.0;
    for dk in d.iter().take(d.len().saturating_sub(1)) {
        let integral = supply.step(&s, dk);
        d_energy += dk.norm_squared() * dt;
        s = &zoh.ad * &s + &zoh.bd * dk;
        let v = s.dot(&(&storage * &s));
        max_storage = max_storage.max(v.abs());
        worst = worst.min(-(v + integral));
    }
    Ok(MarginReport { worst, scale: 1.0 + gamma * d_energy + max_storage })
}

/// Margins along one trajectory of the loop with the filter inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopMargins {
    /// Minimum over `T` of `-[s(T)^T X s(T) + int_0^T y^T M y - |d|^2 dt]`
    /// with `s = (xi, x)`.
    pub storage: MarginReport,
    /// For each terminal cost `Z`, the minimum over `T` of
    /// `int_0^T y^T M y dt + xi(T)^T Z xi(T)`.
    pub iqc: Vec<MarginReport>,
}

fn quad(m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    let mut acc = 0.0;
    for j in 0..v.len() {
        if v[j] != 0.0 {
            acc += v[j] * m.column(j).dot(v);
        }
    }
    acc
}

/// Simulates `loop_with_filter(plant, delta, filter)` once under `d` and
/// evaluates the storage-decay inequality certified by the ellipsoid LMI and
/// the finite-horizon IQC for every terminal cost in `z_terms`.
#[allow(clippy::too_many_arguments)]
pub fn loop_margins(
    plant: &UncertainPlant,
    delta: f64,
    filter: &Realization,
    xcal: &DMatrix<f64>,
    m: &DMatrix<f64>,
    z_terms: &[&DMatrix<f64>],
    d: &[DVector<f64>],
    dt: f64,
) -> Result<LoopMargins> {
    let lp = loop_with_filter(plant, delta, filter)?;
    check_inputs(&lp, d)?;
    let (nxi, ns, ny) = (filter.n(), lp.n(), filter.p());
    if xcal.shape() != (ns, ns) || m.shape() != (ny, ny) {
        return dim_err(format!("certificate sizes do not match a loop with {ns} states and {ny} filter outputs"));
    }
    if let Some(z) = z_terms.iter().find(|z| z.shape() != (nxi, nxi)) {
        return dim_err(format!("terminal cost is {}x{}, filter has {nxi} states", z.nrows(), z.ncols()));
    }
    let p = lp.p();
    let mut w = DMatrix::zeros(p, p);
    w.view_mut((0, 0), (ny, ny)).copy_from(m);
    let mut e = DMatrix::zeros(p, p);
    e.view_mut((0, 0), (ny, ny)).fill_with_identity();
    let mut supply = EnergyAccumulator::new(QuadraticSupply::new(&lp, &w, dt)?);
    let mut y_norm = EnergyAccumulator::new(QuadraticSupply::new(&lp, &e, dt)?);
    let zoh = Zoh::for_realization(&lp, dt)?;
    let mnorm = linalg::sym_eigenvalues(m)?.iter().fold(0.0_f64, |a, v| a.max(v.abs()));

    let mut s = DVector::zeros(ns);
    let mut next = DVector::zeros(ns);
    let mut energy = 0.0;
    let mut storage_worst: f64 = 0.0;
    let mut storage_max: f64 = 0.0;
    let mut iqc_worst = vec![0.0_f64; z_terms.len()];
    let mut terminal_max = vec![0.0_f64; z_terms.len()];
    for dk in d.iter().take(d.len().saturating_sub(1)) {
        let integral = supply.step(&s, dk);
        y_norm.step(&s, dk);
        energy += dk.norm_squared() * dt;
        next.gemv(1.0, &zoh.ad, &s, 0.0);
        next.gemv(1.0, &zoh.bd, dk, 1.0);
        std::mem::swap(&mut s, &mut next);
        let v = quad(xcal, &s);
        storage_max = storage_max.max(v.abs());
        storage_worst = storage_worst.min(-(v + integral - energy));
        let xi = s.rows(0, nxi).into_owned();
        for (i, z) in z_terms.iter().enumerate() {
            let t = quad(z, &xi);
            terminal_max[i] = terminal_max[i].max(t.abs());
            iqc_worst[i] = iqc_worst[i].min(integral + t);
        }
    }
    let storage = MarginReport { worst: storage_worst, scale: 1.0 + energy + storage_max };
    let iqc = iqc_worst
        .iter()
        .zip(&terminal_max)
        .map(|(w, t)| MarginReport { worst: *w, scale: 1.0 + mnorm * y_norm.total + t })
        .collect();
    Ok(LoopMargins { storage, iqc })
}

/// Controllability gramian: `A W + W A^T + B B^T = 0`.
pub fn gramian(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() > 0 && !statespace::is_hurwitz(a)? {
        return Err(IqcError::NotHurwitz { max_real_part: linalg::spectral_abscissa(a)? });
    }
    if b.nrows() != a.nrows() {
        return dim_err(format!("gramian: B has {} rows, A is {}x{}", b.nrows(), a.nrows(), a.ncols()));
    }
    linalg::lyapunov(a, &(b * b.transpose()))
}

/// Finite-horizon gramian `W_T = W - e^{AT} W e^{A^T T}`.
pub fn finite_horizon_gramian(a: &DMatrix<f64>, b: &DMatrix<f64>, horizon: f64) -> Result<DMatrix<f64>> {
    let w = gramian(a, b)?;
    let e = linalg::expm(&(a * horizon));
    Ok(linalg::symmetrize(&(&w - &e * &w * e.transpose())))
}

/// Worst-case unit-energy disturbance steering the performance output to the
/// reachable-set boundary along a direction.
#[derive(Debug, Clone, PartialEq)]
pub struct WorstCase {
    /// Held disturbance samples (`K + 1` values; the last one is never applied).
    pub d: Vec<DVector<f64>>,
    /// Predicted boundary point `e*`.
    pub e_star: DVector<f64>,
    /// Performance output reached by simulation at the horizon.
    pub e_final: DVector<f64>,
    /// `C_e W_T C_e^T`.
    pub reachable: DMatrix<f64>,
    pub trajectory: Trajectory,
}

fn steps_for(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !(horizon > 0.0) || !horizon.is_finite() {
        return Err(IqcError::InvalidArgument(format!("need positive dt and horizon, got {dt} and {horizon}")));
    }
    Ok((horizon / dt).round() as usize)
}

/// Minimum-energy input reaching `e*` on the boundary of
/// `{e : e^T (C_e W_T C_e^T)^{-1} e <= 1}` along `direction`, sampled at the
/// interval midpoints and rescaled to unit discrete energy.
pub fn worst_case_disturbance(
    plant: &UncertainPlant,
    delta: f64,
    direction: &DVector<f64>,
    horizon: f64,
    dt: f64,
) -> Result<WorstCase> {
    let steps = steps_for(horizon, dt)?;
    if direction.len() != plant.n_e() || direction.norm() == 0.0 {
        return Err(IqcError::InvalidArgument(format!("direction must be a nonzero vector of length {}", plant.n_e())));
    }
    let cl = closed_loop(plant, delta)?;
    let t_exact = steps as f64 * dt;
    let wt = finite_horizon_gramian(cl.a(), cl.b(), t_exact)?;
    let h = linalg::symmetrize(&(&plant.c_e * &wt * plant.c_e.transpose()));
    let h_eig = linalg::sym_eigenvalues(&h)?;
    if h_eig.len() > 0 && !(h_eig[0] > 1e-12 * h_eig[h_eig.len() - 1].max(1e-300)) {
        return Err(IqcError::Singular("C_e W_T C_e^T is rank deficient".into()));
    }
    let h_inv_dir = linalg::solve(&h, &DMatrix::from_column_slice(direction.len(), 1, direction.as_slice()), "C_e W_T C_e^T")?;
    let scale = direction.dot(&h_inv_dir.column(0)).sqrt();
    let e_star = direction / scale;
    // W_T^{-1} x_f = C_e^T H^{-1} e*
    let lam = plant.c_e.transpose() * (h_inv_dir.column(0) / scale);
    let at = cl.a().transpose();
    let half = linalg::expm(&(&at * (0.5 * dt)));
    let full = linalg::expm(&(&at * dt));
    let nd = plant.n_d();
    let mut d = vec![DVector::zeros(nd); steps + 1];
    let mut v = &half * lam;
    for k in (0..steps).rev() {
        d[k] = cl.b().transpose() * &v;
        v = &full * v;
    }
    let energy: f64 = d.iter().map(|x| x.norm_squared()).sum::<f64>() * dt;
    if energy > 0.0 {
        let s = energy.sqrt();
        for x in &mut d {
            *x /= s;
        }
    }
    let traj = simulate_loop(plant, delta, &d, dt)?;
    let e_final = traj.channel("e").and_then(|e| e.last().cloned()).unwrap_or_else(|| DVector::zeros(plant.n_e()));
    Ok(WorstCase { d, e_star, e_final, reachable: h, trajectory: traj })
}

/// Simulates the closed loop from rest. Channels `d`, `z`, `w`, `e`, `x` and
/// the running disturbance energy `energy`.
pub fn simulate_loop(plant: &UncertainPlant, delta: f64, d: &[DVector<f64>], dt: f64) -> Result<Trajectory> {
    let cl = closed_loop(plant, delta)?;
    let t = simulate_zoh(&cl, d, dt, None)?;
    let y = t.channel("y").expect("simulation output");
    let split = |r: &std::ops::Range<usize>| -> Vec<DVector<f64>> { y.iter().map(|v| v.rows(r.start, r.len()).into_owned()).collect() };
    let [rz, rw, re, rx] = closed_loop_rows(plant);
    let mut out = Trajectory::new(dt)?;
    let mut energy = Vec::with_capacity(d.len());
    let mut acc = 0.0;
    for dk in d {
        energy.push(DVector::from_element(1, acc));
        acc += dk.norm_squared() * dt;
    }
    out.insert("d", d.to_vec())?;
    out.insert("z", split(&rz))?;
    out.insert("w", split(&rw))?;
    out.insert("e", split(&re))?;
    out.insert("x", split(&rx))?;
    out.insert("energy", energy)?;
    Ok(out)
}

/// Kinds of randomized disturbances used by the soundness check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DisturbanceKind {
    PiecewiseConstant,
    Sinusoidal,
    WorstCase,
}

/// Random disturbance with unit discrete energy `dt * sum |d_k|^2 = 1`,
/// active on a random initial window of the horizon.
pub fn random_disturbance<R: Rng + ?Sized>(rng: &mut R, kind: DisturbanceKind, nd: usize, steps: usize, dt: f64) -> Vec<DVector<f64>> {
    let mut d = vec![DVector::zeros(nd); steps + 1];
    if steps == 0 || nd == 0 {
        return d;
    }
    let active = ((rng.random_range(0.05..1.0) * steps as f64) as usize).max(1);
    match kind {
        DisturbanceKind::PiecewiseConstant | DisturbanceKind::WorstCase => {
            let segments = rng.random_range(1..=20usize);
            let len = active.div_ceil(segments);
            for s in 0..segments {
                let level = DVector::from_fn(nd, |_, _| StandardNormal.sample(rng));
                for x in d.iter_mut().skip(s * len).take(len.min(active.saturating_sub(s * len))) {
                    x.copy_from(&level);
                }
            }
        }
        DisturbanceKind::Sinusoidal => {
            let tones = rng.random_range(1..=3usize);
            let params: Vec<(f64, f64, DVector<f64>)> = (0..tones)
                .map(|_| {
                    let w = 10f64.powf(rng.random_range(-1.0..1.5));
                    let phase = rng.random_range(0.0..std::f64::consts::TAU);
                    (w, phase, DVector::from_fn(nd, |_, _| StandardNormal.sample(rng)))
                })
                .collect();
            for (k, x) in d.iter_mut().take(active).enumerate() {
                let t = (k as f64 + 0.5) * dt;
                for (w, ph, amp) in &params {
                    *x += amp * (w * t + ph).sin();
                }
            }
        }
    }
    let energy: f64 = d[..steps].iter().map(|x| x.norm_squared()).sum::<f64>() * dt;
    if energy > 0.0 {
        let s = energy.sqrt();
        for x in &mut d {
            *x /= s;
        }
    }
    d[steps].fill(0.0);
    d
}

/// Options of the randomized invariance check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContainmentOptions {
    pub runs: usize,
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
    /// Relative tolerance `tol * (1 + energy)`.
    pub rel_tol: f64,
}

impl Default for ContainmentOptions {
    fn default() -> Self {
        Self { runs: 1000, horizon: DEFAULT_HORIZON, dt: DEFAULT_DT, seed: 42, rel_tol: 1e-5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContainmentStats {
    pub runs: usize,
    /// Runs with at least one sample violating `e^T Y^{-1} e <= energy + tol`.
    pub violations: usize,
    /// Largest `e^T Y^{-1} e - energy` over all runs and samples.
    pub worst_excess: f64,
    /// Largest `e^T Y^{-1} e` seen.
    pub max_level: f64,
}

/// Allocation-free fixed-dimension simulator of the closed loop used by the
/// randomized check.
struct LoopStepper {
    n: usize,
    nd: usize,
    ne: usize,
    ad: Vec<f64>,
    bd: Vec<f64>,
    ce: Vec<f64>,
    y_inv: Vec<f64>,
}

impl LoopStepper {
    fn new(plant: &UncertainPlant, delta: f64, y_inv: &DMatrix<f64>, dt: f64) -> Result<Self> {
        let cl = closed_loop(plant, delta)?;
        let zoh = Zoh::for_realization(&cl, dt)?;
        let row_major = |m: &DMatrix<f64>| m.transpose().as_slice().to_vec();
        Ok(Self {
            n: plant.n(),
            nd: plant.n_d(),
            ne: plant.n_e(),
            ad: row_major(&zoh.ad),
            bd: row_major(&zoh.bd),
            ce: row_major(&plant.c_e),
            y_inv: row_major(y_inv),
        })
    }

    /// Returns `(max excess, max level, violated)` along the run.
    fn run(&self, d: &[DVector<f64>], dt: f64, rel_tol: f64, x: &mut [f64], xn: &mut [f64], e: &mut [f64]) -> (f64, f64, bool) {
        let (n, nd, ne) = (self.n, self.nd, self.ne);
        x.fill(0.0);
        let mut energy = 0.0;
        let mut worst = f64::NEG_INFINITY;
        let mut level_max: f64 = 0.0;
        let mut violated = false;
        for dk in d {
            for i in 0..ne {
                e[i] = (0..n).map(|j| self.ce[i * n + j] * x[j]).sum();
            }
            let mut level = 0.0;
            for i in 0..ne {
                for j in 0..ne {
                    level += e[i] * self.y_inv[i * ne + j] * e[j];
                }
            }
            let excess = level - energy;
            worst = worst.max(excess);
            level_max = level_max.max(level);
            if excess > rel_tol * (1.0 + energy) {
                violated = true;
            }
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += self.ad[i * n + j] * x[j];
                }
                for j in 0..nd {
                    acc += self.bd[i * nd + j] * dk[j];
                }
                xn[i] = acc;
            }
            x.copy_from_slice(xn);
            energy += dk.norm_squared() * dt;
        }
        (worst, level_max, violated)
    }
}

/// Randomized check of `e(T)^T Y^{-1} e(T) <= int_0^T |d|^2` over the
/// uncertainty interval. Runs are independent and seeded by index, so the
/// result does not depend on thread scheduling.
pub fn containment_check(plant: &UncertainPlant, interval: &Interval, y: &DMatrix<f64>, opts: &ContainmentOptions) -> Result<ContainmentStats> {
    let steps = steps_for(opts.horizon, opts.dt)?;
    let y_eig = linalg::sym_eigenvalues(y)?;
    if y_eig.len() != plant.n_e() || !(y_eig[0] > 0.0) {
        return Err(IqcError::NotPositiveDefinite { min_eig: y_eig.get(0).copied().unwrap_or(f64::NAN) });
    }
    let y_inv = linalg::inverse(y, "Y")?;
    let results: Vec<Result<(f64, f64, bool)>> = (0..opts.runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ run as u64);
            let delta = rng.random_range(interval.alpha..=interval.beta);
            let kind = match run % 10 {
                0 => DisturbanceKind::WorstCase,
                1..=5 => DisturbanceKind::PiecewiseConstant,
                _ => DisturbanceKind::Sinusoidal,
            };
            let d = if kind == DisturbanceKind::WorstCase {
                let theta = rng.random_range(0.0..std::f64::consts::TAU);
                let dir = DVector::from_fn(plant.n_e(), |i, _| match i {
                    0 => theta.cos(),
                    1 => theta.sin(),
                    _ => 0.0,
                });
                let t_active = rng.random_range(1.0..opts.horizon);
                let mut d = worst_case_disturbance(plant, delta, &dir, t_active, opts.dt)?.d;
                d.truncate(d.len() - 1);
                d.resize(steps + 1, DVector::zeros(plant.n_d()));
                d
            } else {
                random_disturbance(&mut rng, kind, plant.n_d(), steps, opts.dt)
            };
            let stepper = LoopStepper::new(plant, delta, &y_inv, opts.dt)?;
            let (mut x, mut xn, mut e) = (vec![0.0; plant.n()], vec![0.0; plant.n()], vec![0.0; plant.n_e()]);
            Ok(stepper.run(&d, opts.dt, opts.rel_tol, &mut x, &mut xn, &mut e))
        })
        .collect();
    let mut stats = ContainmentStats { runs: opts.runs, violations: 0, worst_excess: f64::NEG_INFINITY, max_level: 0.0 };
    for r in results {
        let (excess, level, violated) = r?;
        stats.worst_excess = stats.worst_excess.max(excess);
        stats.max_level = stats.max_level.max(level);
        stats.violations += violated as usize;
    }
    Ok(stats)
}
