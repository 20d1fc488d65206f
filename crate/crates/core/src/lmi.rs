//! Affine matrix expressions over a flat decision vector, and the LMIs of the
//! robust analysis built from them.
//!
//! Symmetric decision blocks are vectorized by their lower triangle in
//! row-major order with the plain basis `E_ij + E_ji`, so the scalar stored
//! for an off-diagonal entry equals that entry. General blocks use row-major
//! order with basis `E_ij`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, IqcError, Result};
use crate::linalg::{self, block_matrix};
use crate::statespace::{self, Interval, Realization, UncertainPlant};

/// Default relative strictness margin for strict LMIs.
pub const DEFAULT_EPS_MARGIN: f64 = 1e-6;
/// Default spectral-norm bound on every decision matrix.
pub const DEFAULT_NORM_BOUND: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Symmetric(usize),
    General(usize, usize),
    Scalar,
}

impl VarKind {
    pub fn len(&self) -> usize {
        match *self {
            VarKind::Symmetric(s) => s * (s + 1) / 2,
            VarKind::General(r, c) => r * c,
            VarKind::Scalar => 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> (usize, usize) {
        match *self {
            VarKind::Symmetric(s) => (s, s),
            VarKind::General(r, c) => (r, c),
            VarKind::Scalar => (1, 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarBlock {
    pub name: String,
    pub kind: VarKind,
    pub offset: usize,
}

/// Ordered decision-variable blocks partitioning `0..len`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VarLayout {
    blocks: Vec<VarBlock>,
    len: usize,
}

impl VarLayout {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, kind: VarKind) -> VarId {
        let id = VarId(self.blocks.len());
        self.blocks.push(VarBlock { name: name.to_string(), kind, offset: self.len });
        self.len += kind.len();
        id
    }

    pub fn add_symmetric(&mut self, name: &str, s: usize) -> VarId {
        self.add(name, VarKind::Symmetric(s))
    }

    pub fn add_general(&mut self, name: &str, r: usize, c: usize) -> VarId {
        self.add(name, VarKind::General(r, c))
    }

    pub fn add_scalar(&mut self, name: &str) -> VarId {
        self.add(name, VarKind::Scalar)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn blocks(&self) -> &[VarBlock] {
        &self.blocks
    }

    pub fn block(&self, id: VarId) -> &VarBlock {
        &self.blocks[id.0]
    }

    pub fn find(&self, name: &str) -> Option<VarId> {
        self.blocks.iter().position(|b| b.name == name).map(VarId)
    }

    /// Flat index of entry `(i, j)` of a block. For symmetric blocks either
    /// triangle may be addressed.
    pub fn index(&self, id: VarId, i: usize, j: usize) -> usize {
        let b = self.block(id);
        match b.kind {
            VarKind::Symmetric(_) => {
                let (i, j) = if i >= j { (i, j) } else { (j, i) };
                b.offset + i * (i + 1) / 2 + j
            }
            VarKind::General(_, c) => b.offset + i * c + j,
            VarKind::Scalar => b.offset,
        }
    }

    /// Reassembles the matrix value of a block from a flat vector.
    pub fn extract(&self, x: &DVector<f64>, id: VarId) -> DMatrix<f64> {
        let (r, c) = self.block(id).kind.shape();
        DMatrix::from_fn(r, c, |i, j| x[self.index(id, i, j)])
    }

    /// Writes a matrix value into the flat vector (symmetric blocks read
    /// their lower triangle).
    pub fn insert(&self, x: &mut DVector<f64>, id: VarId, value: &DMatrix<f64>) {
        let b = self.block(id);
        let (r, c) = b.kind.shape();
        for i in 0..r {
            for j in 0..c {
                if matches!(b.kind, VarKind::Symmetric(_)) && j > i {
                    continue;
                }
                x[self.index(id, i, j)] = value[(i, j)];
            }
        }
    }

    /// The block as an affine expression of the decision vector.
    pub fn var(&self, id: VarId) -> AffineMatrix {
        let b = self.block(id);
        let (r, c) = b.kind.shape();
        let mut out = AffineMatrix::constant(DMatrix::zeros(r, c));
        for i in 0..r {
            for j in 0..c {
                let k = self.index(id, i, j);
                out.terms.entry(k).or_insert_with(|| DMatrix::zeros(r, c))[(i, j)] = 1.0;
            }
        }
        out
    }
}

/// A general (not necessarily square) matrix-valued affine function
/// `constant + sum_k x_k coeff_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMatrix {
    constant: DMatrix<f64>,
    terms: BTreeMap<usize, DMatrix<f64>>,
}

impl AffineMatrix {
    pub fn constant(c: DMatrix<f64>) -> Self {
        Self { constant: c, terms: BTreeMap::new() }
    }

    pub fn zeros(r: usize, c: usize) -> Self {
        Self::constant(DMatrix::zeros(r, c))
    }

    pub fn shape(&self) -> (usize, usize) {
        self.constant.shape()
    }

    pub fn constant_term(&self) -> &DMatrix<f64> {
        &self.constant
    }

    pub fn terms(&self) -> impl Iterator<Item = (usize, &DMatrix<f64>)> {
        self.terms.iter().map(|(k, v)| (*k, v))
    }

    fn map(&self, f: impl Fn(&DMatrix<f64>) -> DMatrix<f64>) -> Self {
        Self { constant: f(&self.constant), terms: self.terms.iter().map(|(k, v)| (*k, f(v))).collect() }
    }

    pub fn transpose(&self) -> Self {
        self.map(|m| m.transpose())
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|m| m * s)
    }

    pub fn left_mul(&self, l: &DMatrix<f64>) -> Result<Self> {
        if l.ncols() != self.shape().0 {
            return dim_err(format!("left factor has {} columns, expression has {} rows", l.ncols(), self.shape().0));
        }
        Ok(self.map(|m| l * m))
    }

    pub fn right_mul(&self, r: &DMatrix<f64>) -> Result<Self> {
        if r.nrows() != self.shape().1 {
            return dim_err(format!("right factor has {} rows, expression has {} columns", r.nrows(), self.shape().1));
        }
        Ok(self.map(|m| m * r))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return dim_err(format!("adding {:?} and {:?} expressions", self.shape(), other.shape()));
        }
        let mut out = self.clone();
        out.constant += &other.constant;
        for (k, v) in &other.terms {
            match out.terms.get_mut(k) {
                Some(t) => *t += v,
                None => {
                    out.terms.insert(*k, v.clone());
                }
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-1.0))
    }

    /// Assembles a grid of expressions; heights and widths must agree.
    pub fn blocks(grid: &[Vec<AffineMatrix>]) -> Result<Self> {
        let constant = block_matrix(&grid.iter().map(|r| r.iter().map(|e| e.constant.clone()).collect()).collect::<Vec<_>>())?;
        let keys: std::collections::BTreeSet<usize> =
            grid.iter().flat_map(|r| r.iter().flat_map(|e| e.terms.keys().copied())).collect();
        let mut terms = BTreeMap::new();
        for k in keys {
            let g: Vec<Vec<DMatrix<f64>>> = grid
                .iter()
                .map(|r| r.iter().map(|e| e.terms.get(&k).cloned().unwrap_or_else(|| DMatrix::zeros(e.shape().0, e.shape().1))).collect())
                .collect();
            terms.insert(k, block_matrix(&g)?);
        }
        Ok(Self { constant, terms })
    }

    pub fn evaluate(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for (k, v) in &self.terms {
            out += v * x[*k];
        }
        out
    }

    /// Converts to a symmetric expression, checking symmetry of every stored
    /// matrix to `1e-12` relative.
    pub fn into_symmetric(self) -> Result<AffineMatrixExpr> {
        let (r, c) = self.shape();
        if r != c {
            return dim_err(format!("symmetric expression must be square, got {r}x{c}"));
        }
        let check = |m: &DMatrix<f64>| -> Result<DMatrix<f64>> {
            let asym = (m - m.transpose()).norm();
            if asym > 1e-12 * (1.0 + m.norm()) {
                return Err(IqcError::InvalidArgument(format!("expression is not symmetric (asymmetry {asym:e})")));
            }
            Ok(linalg::symmetrize(m))
        };
        let constant = check(&self.constant)?;
        let mut coeffs = Vec::with_capacity(self.terms.len());
        for (k, v) in self.terms {
            let v = check(&v)?;
            if v.iter().any(|e| *e != 0.0) {
                coeffs.push((k, v));
            }
        }
        Ok(AffineMatrixExpr { constant, coeffs })
    }
}

/// Symmetric matrix-valued affine function of the decision vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMatrixExpr {
    constant: DMatrix<f64>,
    coeffs: Vec<(usize, DMatrix<f64>)>,
}

impl AffineMatrixExpr {
    pub fn constant(c: DMatrix<f64>) -> Result<Self> {
        AffineMatrix::constant(c).into_symmetric()
    }

    pub fn size(&self) -> usize {
        self.constant.nrows()
    }

    pub fn constant_term(&self) -> &DMatrix<f64> {
        &self.constant
    }

    pub fn coefficients(&self) -> &[(usize, DMatrix<f64>)] {
        &self.coeffs
    }

    pub fn evaluate(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for (k, v) in &self.coeffs {
            out += v * x[*k];
        }
        out
    }

    pub fn as_general(&self) -> AffineMatrix {
        AffineMatrix { constant: self.constant.clone(), terms: self.coeffs.iter().cloned().collect() }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { constant: &self.constant * s, coeffs: self.coeffs.iter().map(|(k, v)| (*k, v * s)).collect() }
    }

    /// `L^T S L`.
    pub fn congruence(&self, l: &DMatrix<f64>) -> Result<Self> {
        let lt = l.transpose();
        self.as_general().left_mul(&lt)?.right_mul(l)?.into_symmetric()
    }

    /// `L^T S R + R^T S L`.
    pub fn two_sided(&self, l: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<Self> {
        let half = self.as_general().left_mul(&l.transpose())?.right_mul(r)?;
        half.add(&half.transpose())?.into_symmetric()
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.as_general().add(&other.as_general())?.into_symmetric()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    /// `expr ⪰ margin I`
    Psd,
    /// `expr ⪯ -margin I`
    Nsd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmiConstraint {
    pub name: String,
    pub expr: AffineMatrixExpr,
    pub sense: Sense,
    pub margin: f64,
}

impl LmiConstraint {
    /// Strict constraint with margin `eps_margin * max(1, ||constant||)`.
    pub fn strict(name: &str, expr: AffineMatrixExpr, sense: Sense, eps_margin: f64) -> Self {
        let margin = eps_margin * expr.constant.norm().max(1.0);
        Self { name: name.to_string(), expr, sense, margin }
    }

    pub fn nonstrict(name: &str, expr: AffineMatrixExpr, sense: Sense) -> Self {
        Self { name: name.to_string(), expr, sense, margin: 0.0 }
    }

    pub fn size(&self) -> usize {
        self.expr.size()
    }

    /// The constraint in `F(x) ⪰ 0` form.
    pub fn normalized(&self) -> AffineMatrixExpr {
        let sign = match self.sense {
            Sense::Psd => 1.0,
            Sense::Nsd => -1.0,
        };
        let mut e = self.expr.scale(sign);
        let n = e.size();
        e.constant -= DMatrix::<f64>::identity(n, n) * self.margin;
        e
    }

    /// Smallest eigenvalue of the normalized constraint at `x` (`+inf` for
    /// empty constraints, which hold vacuously).
    pub fn residual(&self, x: &DVector<f64>) -> Result<f64> {
        if self.size() == 0 {
            return Ok(f64::INFINITY);
        }
        Ok(linalg::sym_eigenvalues(&self.normalized().evaluate(x))?[0])
    }
}

/// Linear objective over LMI constraints: minimize `c^T x`.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub layout: VarLayout,
    pub objective: DVector<f64>,
    pub constraints: Vec<LmiConstraint>,
}

impl SdpProblem {
    pub fn new(layout: VarLayout) -> Self {
        let n = layout.len();
        Self { layout, objective: DVector::zeros(n), constraints: Vec::new() }
    }

    pub fn push(&mut self, c: LmiConstraint) {
        self.constraints.push(c);
    }

    /// Adds `objective += trace(V)` for a symmetric block.
    pub fn minimize_trace(&mut self, id: VarId) {
        let (s, _) = self.layout.block(id).kind.shape();
        for i in 0..s {
            let k = self.layout.index(id, i, i);
            self.objective[k] += 1.0;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.layout.len();
        if self.objective.len() != n {
            return dim_err(format!("objective has length {}, layout has {n}", self.objective.len()));
        }
        for c in &self.constraints {
            if !c.margin.is_finite() || c.margin < 0.0 {
                return Err(IqcError::InvalidArgument(format!("constraint {} has invalid margin {}", c.name, c.margin)));
            }
            if let Some((k, _)) = c.expr.coeffs.iter().find(|(k, _)| *k >= n) {
                return Err(IqcError::InvalidArgument(format!("constraint {} references variable {k} >= {n}", c.name)));
            }
        }
        Ok(())
    }

    /// Bounds every decision block to spectral norm `rho`. Symmetric blocks
    /// get `-rho I ⪯ V ⪯ rho I`, general blocks `[[rho I, V], [V^T, rho I]] ⪰ 0`.
    pub fn add_norm_bounds(&mut self, rho: f64) -> Result<()> {
        let blocks: Vec<(VarId, VarBlock)> =
            self.layout.blocks().iter().cloned().enumerate().map(|(i, b)| (VarId(i), b)).collect();
        for (id, b) in blocks {
            if b.kind.is_empty() {
                continue;
            }
            let v = self.layout.var(id);
            match b.kind {
                VarKind::Symmetric(s) => {
                    let r = AffineMatrix::constant(DMatrix::identity(s, s) * rho);
                    self.push(LmiConstraint::nonstrict(
                        &format!("norm bound {} (upper)", b.name),
                        r.sub(&v)?.into_symmetric()?,
                        Sense::Psd,
                    ));
                    self.push(LmiConstraint::nonstrict(
                        &format!("norm bound {} (lower)", b.name),
                        r.add(&v)?.into_symmetric()?,
                        Sense::Psd,
                    ));
                }
                _ => {
                    let (r, c) = b.kind.shape();
                    let e = AffineMatrix::blocks(&[
                        vec![AffineMatrix::constant(DMatrix::identity(r, r) * rho), v.clone()],
                        vec![v.transpose(), AffineMatrix::constant(DMatrix::identity(c, c) * rho)],
                    ])?;
                    self.push(LmiConstraint::nonstrict(&format!("norm bound {}", b.name), e.into_symmetric()?, Sense::Psd));
                }
            }
        }
        Ok(())
    }
}

fn stack_io(r: &Realization) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let n = r.n();
    let m = r.m();
    let e = linalg::hstack(&[&DMatrix::identity(n, n), &DMatrix::zeros(n, m)])?;
    let ab = linalg::hstack(&[r.a(), r.b()])?;
    let cd = linalg::hstack(&[r.c(), r.d()])?;
    Ok((e, ab, cd))
}

/// `[[A^T X + X A, X B], [B^T X, 0]] + [C D]^T M [C D]` as an affine
/// expression in the variables of `x` and `m`.
pub fn kyp_form(x: &AffineMatrixExpr, m: &AffineMatrixExpr, real: &Realization) -> Result<AffineMatrixExpr> {
    if x.size() != real.n() {
        return dim_err(format!("kyp: X is {}x{0}, realization has {} states", x.size(), real.n()));
    }
    if m.size() != real.p() {
        return dim_err(format!("kyp: M is {}x{0}, realization has {} outputs", m.size(), real.p()));
    }
    let (e, ab, cd) = stack_io(real)?;
    x.two_sided(&e, &ab)?.add(&m.congruence(&cd)?)
}

/// Numeric counterpart of [`kyp_form`].
pub fn kyp_numeric(x: &DMatrix<f64>, m: &DMatrix<f64>, real: &Realization) -> Result<DMatrix<f64>> {
    if x.shape() != (real.n(), real.n()) || m.shape() != (real.p(), real.p()) {
        return dim_err("kyp: X or M does not match the realization".to_string());
    }
    let (e, ab, cd) = stack_io(real)?;
    let half = e.transpose() * x * &ab;
    Ok(linalg::symmetrize(&(&half + half.transpose() + cd.transpose() * m * cd)))
}

/// The multiplier middle matrix `[[0, P], [P^T, 0]]`.
pub fn structured_m(p: &AffineMatrix) -> Result<AffineMatrixExpr> {
    let (r, c) = p.shape();
    AffineMatrix::blocks(&[vec![AffineMatrix::zeros(r, r), p.clone()], vec![p.transpose(), AffineMatrix::zeros(c, c)]])?
        .into_symmetric()
}

pub fn structured_m_numeric(p: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = p.shape();
    block_matrix(&[vec![DMatrix::zeros(r, r), p.clone()], vec![p.transpose(), DMatrix::zeros(c, c)]]).expect("consistent blocks")
}

/// `kyp(X, M, filtered) ⪯ -eps I`, the certificate of the frequency-domain
/// inequality for the filtered inverse graph.
pub fn assemble_fdi_lmi(
    filtered: &Realization,
    xcal: &AffineMatrixExpr,
    m: &AffineMatrixExpr,
    eps_margin: f64,
) -> Result<LmiConstraint> {
    Ok(LmiConstraint::strict("fdi", kyp_form(xcal, m, filtered)?, Sense::Nsd, eps_margin))
}

/// Realization of `filter * [G; I]` for the loop `z = G w + d`, with inputs
/// `(w, d)`, state `(xi, x)` and outputs `(y, z, d)`.
pub fn extended_loop(g: &Realization, filter: &Realization) -> Result<Realization> {
    let (nz, nw) = (g.p(), g.m());
    if filter.m() != nz + nw {
        return dim_err(format!("filter has {} inputs, expected {}", filter.m(), nz + nw));
    }
    let inner = Realization::new(
        g.a().clone(),
        linalg::hstack(&[g.b(), &DMatrix::zeros(g.n(), nz)])?,
        linalg::vstack(&[g.c(), &DMatrix::zeros(nw, g.n())])?,
        block_matrix(&[vec![g.d().clone(), DMatrix::identity(nz, nz)], vec![DMatrix::identity(nw, nw), DMatrix::zeros(nw, nz)]])?,
    )?;
    let f = statespace::cascade(filter, &inner)?;
    let nf = filter.n();
    let c = linalg::vstack(&[
        f.c(),
        &linalg::hstack(&[&DMatrix::zeros(nz, nf), g.c()])?,
        &DMatrix::zeros(nz, f.n()),
    ])?;
    let d = linalg::vstack(&[
        f.d(),
        &linalg::hstack(&[g.d(), &DMatrix::identity(nz, nz)])?,
        &linalg::hstack(&[&DMatrix::zeros(nz, nw), &DMatrix::identity(nz, nz)])?,
    ])?;
    Realization::new(f.a().clone(), f.b().clone(), c, d)
}

/// The Finsler-extended matrix with middle matrix `diag(M, I/gamma, -gamma I)`
/// evaluated at fixed `(X, M)`. The loop is negative definite for all large
/// enough `gamma` whenever the plain certificate is.
pub fn assemble_gamma_lmi(
    xcal: &DMatrix<f64>,
    m: &DMatrix<f64>,
    g: &Realization,
    filter: &Realization,
    gamma: f64,
) -> Result<DMatrix<f64>> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(IqcError::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    let ext = extended_loop(g, filter)?;
    let nz = g.p();
    let mid = linalg::block_diag(&[m, &(DMatrix::identity(nz, nz) / gamma), &(DMatrix::identity(nz, nz) * -gamma)]);
    kyp_numeric(xcal, &mid, &ext)
}

/// Filter `Psi T` used with the parametric multiplier class.
pub fn parametric_filter(nu: usize, interval: &Interval, nz: usize) -> Result<Realization> {
    if nz != 1 {
        return dim_err(format!("the basis multiplier is implemented for scalar channels, got n_z = {nz}"));
    }
    statespace::postmultiply(&statespace::example_filter(nu), &statespace::parametric_t(interval, nz)?)
}

/// Decision variables of the multiplier search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExampleVars {
    pub p: VarId,
    pub xcal: VarId,
    pub r: VarId,
    pub k: VarId,
    pub y: Option<VarId>,
}

/// The positivity constraint `kyp(R, M, Psi J) ⪰ eps I` and the filtered
/// inverse-graph constraint `kyp(X, M, Psi T [G; I]) ⪯ -eps I`.
pub fn assemble_pn_lmis(
    nu: usize,
    interval: &Interval,
    g: &Realization,
    layout: &VarLayout,
    vars: &ExampleVars,
    eps_margin: f64,
) -> Result<(LmiConstraint, LmiConstraint)> {
    let nz = g.p();
    let m = structured_m(&layout.var(vars.p))?;
    let psi = statespace::example_filter(nu);
    let psi_j = statespace::postmultiply(&psi, &statespace::parametric_j(nz))?;
    let r = layout.var(vars.r).into_symmetric()?;
    let pos = LmiConstraint::strict("positivity (R)", kyp_form(&r, &m, &psi_j)?, Sense::Psd, eps_margin);
    let filtered = statespace::cascade(&parametric_filter(nu, interval, nz)?, &statespace::inverse_graph(g))?;
    let xcal = layout.var(vars.xcal).into_symmetric()?;
    let mut fdi = assemble_fdi_lmi(&filtered, &xcal, &m, eps_margin)?;
    fdi.name = "kyp (X)".to_string();
    Ok((pos, fdi))
}

/// Terminal-cost LMI `R - [[0, K], [K^T, 0]] ⪯ -eps I`.
fn terminal_lmi(layout: &VarLayout, vars: &ExampleVars, eps_margin: f64) -> Result<LmiConstraint> {
    let r = layout.var(vars.r);
    let z = structured_m(&layout.var(vars.k))?.as_general();
    Ok(LmiConstraint::strict("terminal cost (R, K)", r.sub(&z)?.into_symmetric()?, Sense::Nsd, eps_margin))
}

/// `X - diag([[0, K], [K^T, 0]], 0)` as an affine expression.
fn coupled_storage(layout: &VarLayout, vars: &ExampleVars, n_plant: usize) -> Result<AffineMatrix> {
    let z = structured_m(&layout.var(vars.k))?.as_general();
    let nxi = z.shape().0;
    let zpad = AffineMatrix::blocks(&[
        vec![z, AffineMatrix::zeros(nxi, n_plant)],
        vec![AffineMatrix::zeros(n_plant, nxi), AffineMatrix::zeros(n_plant, n_plant)],
    ])?;
    layout.var(vars.xcal).sub(&zpad)
}

fn example_layout(nu: usize, n_plant: usize, n_e: Option<usize>) -> (VarLayout, ExampleVars) {
    let mut layout = VarLayout::new();
    let p = layout.add_general("P", nu + 1, nu + 1);
    let xcal = layout.add_symmetric("X", 2 * nu + n_plant);
    let r = layout.add_symmetric("R", 2 * nu);
    let k = layout.add_general("K", nu, nu);
    let y = n_e.map(|ne| layout.add_symmetric("Y", ne));
    (layout, ExampleVars { p, xcal, r, k, y })
}

/// Realization of `Psi T [G_full; I]` driven by `(w, d)`, with the
/// disturbance appended as an extra output.
pub fn example_kyp_realization(plant: &UncertainPlant, interval: &Interval, nu: usize) -> Result<Realization> {
    let (n, nz, nw, nd) = (plant.n(), plant.n_z(), plant.n_w(), plant.n_d());
    let inner = Realization::new(
        plant.a.clone(),
        linalg::hstack(&[&plant.b_w, &plant.b_d])?,
        linalg::vstack(&[&plant.c_z, &DMatrix::zeros(nw, n)])?,
        block_matrix(&[vec![plant.d_zw.clone(), plant.d_zd.clone()], vec![DMatrix::identity(nw, nw), DMatrix::zeros(nw, nd)]])?,
    )?;
    let f = statespace::cascade(&parametric_filter(nu, interval, nz)?, &inner)?;
    let c = linalg::vstack(&[f.c(), &DMatrix::zeros(nd, f.n())])?;
    let d = linalg::vstack(&[f.d(), &linalg::hstack(&[&DMatrix::zeros(nd, nw), &DMatrix::identity(nd, nd)])?])?;
    Realization::new(f.a().clone(), f.b().clone(), c, d)
}

/// Problem options shared by the assembly routines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblyOptions {
    pub eps_margin: f64,
    /// Spectral-norm bound on every decision matrix; `None` disables it.
    pub norm_bound: Option<f64>,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self { eps_margin: DEFAULT_EPS_MARGIN, norm_bound: Some(DEFAULT_NORM_BOUND) }
    }
}

/// Invariant-ellipsoid problem: minimize `trace(Y)` subject to the plant
/// certificate, the ellipsoid coupling, the terminal-cost LMI and the
/// positivity LMI.
pub fn assemble_example_lmis(
    plant: &UncertainPlant,
    interval: &Interval,
    nu: usize,
    opts: &AssemblyOptions,
) -> Result<(SdpProblem, ExampleVars)> {
    plant.validate()?;
    let (n, ne, nd) = (plant.n(), plant.n_e(), plant.n_d());
    let (layout, vars) = example_layout(nu, n, Some(ne));
    let y_id = vars.y.expect("layout has Y");
    let m = structured_m(&layout.var(vars.p))?;
    let mid = AffineMatrix::blocks(&[
        vec![m.as_general(), AffineMatrix::zeros(m.size(), nd)],
        vec![AffineMatrix::zeros(nd, m.size()), AffineMatrix::constant(-DMatrix::<f64>::identity(nd, nd))],
    ])?
    .into_symmetric()?;
    let real = example_kyp_realization(plant, interval, nu)?;
    let xcal = layout.var(vars.xcal).into_symmetric()?;
    let kyp = LmiConstraint::strict("kyp (X)", kyp_form(&xcal, &mid, &real)?, Sense::Nsd, opts.eps_margin);

    let ce_pad = linalg::hstack(&[&DMatrix::zeros(ne, 2 * nu), &plant.c_e])?;
    let storage = coupled_storage(&layout, &vars, n)?;
    let coupling = AffineMatrix::blocks(&[
        vec![layout.var(y_id), AffineMatrix::constant(ce_pad.clone())],
        vec![AffineMatrix::constant(ce_pad.transpose()), storage],
    ])?
    .into_symmetric()?;
    let coupling = LmiConstraint::strict("coupling (Y, X, K)", coupling, Sense::Psd, opts.eps_margin);

    let terminal = terminal_lmi(&layout, &vars, opts.eps_margin)?;
    let (pos, _) = assemble_pn_lmis(nu, interval, &plant.g(), &layout, &vars, opts.eps_margin)?;

    let mut problem = SdpProblem::new(layout);
    problem.push(kyp);
    problem.push(coupling);
    problem.push(terminal);
    problem.push(pos);
    problem.minimize_trace(y_id);
    if let Some(rho) = opts.norm_bound {
        problem.add_norm_bounds(rho)?;
    }
    Ok((problem, vars))
}

/// Pure feasibility problem of the convex robust-stability test for the loop
/// `z = G w + d`, `w = delta z`.
pub fn assemble_stability_lmis(
    g: &Realization,
    interval: &Interval,
    nu: usize,
    opts: &AssemblyOptions,
) -> Result<(SdpProblem, ExampleVars)> {
    let n = g.n();
    let (layout, vars) = example_layout(nu, n, None);
    let (pos, fdi) = assemble_pn_lmis(nu, interval, g, &layout, &vars, opts.eps_margin)?;
    let terminal = terminal_lmi(&layout, &vars, opts.eps_margin)?;
    let coupling = LmiConstraint::strict(
        "coupling (X, K)",
        coupled_storage(&layout, &vars, n)?.into_symmetric()?,
        Sense::Psd,
        opts.eps_margin,
    );
    let mut problem = SdpProblem::new(layout);
    problem.push(fdi);
    problem.push(coupling);
    problem.push(terminal);
    problem.push(pos);
    if let Some(rho) = opts.norm_bound {
        problem.add_norm_bounds(rho)?;
    }
    Ok((problem, vars))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn layout_counts_for_nu_three() {
        let (layout, _) = example_layout(3, 4, Some(2));
        let sizes: Vec<usize> = layout.blocks().iter().map(|b| b.kind.len()).collect();
        assert_eq!(sizes, vec![16, 55, 21, 9, 3]);
        assert_eq!(layout.len(), 104);
    }

    #[test]
    fn symmetric_vectorization_round_trips() {
        let mut layout = VarLayout::new();
        let id = layout.add_symmetric("S", 3);
        let v = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        let mut x = DVector::zeros(layout.len());
        layout.insert(&mut x, id, &v);
        assert_eq!(x.as_slice(), &[1.0, 2.0, 4.0, 3.0, 5.0, 6.0]);
        assert_eq!(layout.extract(&x, id), v);
        assert_eq!(layout.var(id).evaluate(&x), v);
    }

    #[test]
    fn kyp_form_scalar_expansion() {
        let r = Realization::new(scalar(-1.0), scalar(1.0), scalar(1.0), scalar(0.0)).unwrap();
        let k = kyp_numeric(&scalar(1.0), &scalar(1.0), &r).unwrap();
        assert_eq!(k, DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, 0.0]));
        let x = AffineMatrixExpr::constant(scalar(1.0)).unwrap();
        let m = AffineMatrixExpr::constant(scalar(1.0)).unwrap();
        assert_eq!(kyp_form(&x, &m, &r).unwrap().evaluate(&DVector::zeros(0)), k);
    }

    #[test]
    fn kyp_form_without_storage_is_output_quadratic() {
        let r = Realization::new(scalar(-2.0), scalar(1.0), scalar(3.0), scalar(0.5)).unwrap();
        let k = kyp_numeric(&scalar(0.0), &scalar(2.0), &r).unwrap();
        let cd = DMatrix::from_row_slice(1, 2, &[3.0, 0.5]);
        assert_eq!(k, cd.transpose() * scalar(2.0) * cd);
    }

    #[test]
    fn example_kyp_matches_cascade_blocks() {
        let plant = UncertainPlant::example();
        let interval = Interval::new(-0.6, 5.0).unwrap();
        let nu = 2;
        let real = example_kyp_realization(&plant, &interval, nu).unwrap();
        let psi = statespace::example_filter(nu);
        let t = statespace::parametric_t(&interval, 1).unwrap();
        let cf = linalg::vstack(&[&plant.c_z, &DMatrix::zeros(1, 4)]).unwrap();
        let df = linalg::vstack(&[&plant.d_zw, &scalar(1.0)]).unwrap();
        let dd = linalg::vstack(&[&plant.d_zd, &scalar(0.0)]).unwrap();
        let bt = psi.b() * &t;
        let a = block_matrix(&[vec![psi.a().clone(), &bt * &cf], vec![DMatrix::zeros(4, 2 * nu), plant.a.clone()]]).unwrap();
        let b = block_matrix(&[vec![&bt * &df, &bt * &dd], vec![plant.b_w.clone(), plant.b_d.clone()]]).unwrap();
        assert_eq!(real.a(), &a);
        assert_eq!(real.b(), &b);
        assert_eq!(real.p(), 2 * (nu + 1) + 1);
    }

    #[test]
    fn example_problem_shapes_for_static_multiplier() {
        let (problem, _) = assemble_example_lmis(
            &UncertainPlant::example(),
            &Interval::new(-0.6, 5.0).unwrap(),
            0,
            &AssemblyOptions { norm_bound: None, ..Default::default() },
        )
        .unwrap();
        let sizes: Vec<usize> = problem.constraints.iter().map(|c| c.size()).collect();
        // kyp: 4 states + 2 inputs; coupling: 2 + 4; terminal: empty; positivity: 1.
        assert_eq!(sizes, vec![6, 6, 0, 1]);
        assert_eq!(problem.objective.sum(), 2.0);
    }

    #[test]
    fn positivity_for_static_multiplier_is_two_p() {
        let (layout, vars) = example_layout(0, 4, None);
        let g = UncertainPlant::example().g();
        let (pos, fdi) = assemble_pn_lmis(0, &Interval::new(-0.6, 5.0).unwrap(), &g, &layout, &vars, 1e-6).unwrap();
        let mut x = DVector::zeros(layout.len());
        x[layout.index(vars.p, 0, 0)] = 0.7;
        assert_relative_eq!(pos.expr.evaluate(&x)[(0, 0)], 1.4, epsilon = 1e-15);
        assert_eq!(fdi.size(), 5);
    }

    #[test]
    fn norm_bounds_cover_every_block() {
        let mut layout = VarLayout::new();
        layout.add_symmetric("S", 2);
        layout.add_general("K", 1, 2);
        layout.add_general("E", 0, 0);
        let mut p = SdpProblem::new(layout);
        p.add_norm_bounds(10.0).unwrap();
        assert_eq!(p.constraints.len(), 3);
        assert_eq!(p.constraints[2].size(), 3);
        p.validate().unwrap();
    }

    #[test]
    fn gamma_matrix_bottom_block() {
        let g = Realization::static_gain(scalar(0.0));
        let filter = Realization::static_gain(DMatrix::identity(2, 2));
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let x = DMatrix::zeros(0, 0);
        let l = assemble_gamma_lmi(&x, &m, &g, &filter, 100.0).unwrap();
        // inputs (w, d): y = (d, w), z = d, d = d.
        assert_relative_eq!(l[(0, 0)], -1.0, epsilon = 1e-14);
        assert_relative_eq!(l[(1, 1)], 1.0 + 0.01 - 100.0, epsilon = 1e-12);
        assert!(assemble_gamma_lmi(&x, &m, &g, &filter, 0.0).is_err());
    }
}
