//! Analysis configuration: strict JSON schema and shape validation.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use iqc_core::analysis::AnalysisOptions;
use iqc_core::lmi::AssemblyOptions;
use iqc_core::sdp::SolverOptions;
use iqc_core::sim::ContainmentOptions;
use iqc_core::{Interval, UncertainPlant};

use crate::error::CliError;

pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    pub a: Rows,
    pub b_w: Rows,
    pub b_d: Rows,
    pub c_z: Rows,
    pub d_zw: Rows,
    pub d_zd: Rows,
    pub c_e: Rows,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaConfig {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub eps_margin: f64,
    pub tol_feas: f64,
    pub tol_gap: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = SolverOptions::default();
        Self { eps_margin: AssemblyOptions::default().eps_margin, tol_feas: s.tol_feas, tol_gap: s.tol_gap, max_iter: s.max_iter }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub n_random_runs: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        let c = ContainmentOptions::default();
        Self { dt: c.dt, horizon: c.horizon, n_random_runs: c.runs, seed: c.seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub plant: PlantConfig,
    pub delta: DeltaConfig,
    pub nu_list: Vec<usize>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub sim: SimConfig,
    /// Multiplier coefficient matrix used by `factorize` when no certificate
    /// file is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inline_p: Option<Rows>,
}

/// Validated configuration with the matrices in library form.
#[derive(Debug, Clone)]
pub struct Problem {
    pub plant: UncertainPlant,
    pub interval: Interval,
    pub nu_list: Vec<usize>,
    pub options: AnalysisOptions,
    pub sim: SimConfig,
    pub inline_p: Option<DMatrix<f64>>,
}

pub fn to_matrix(rows: &Rows, path: &str) -> Result<DMatrix<f64>, CliError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if let Some(i) = rows.iter().position(|row| row.len() != c) {
        return Err(CliError::Config(format!("{path}[{i}]: row has {} entries, expected {c}", rows[i].len())));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(CliError::Config(format!("{path}: entries must be finite")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn from_matrix(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn expect_shape(m: &DMatrix<f64>, path: &str, rows: usize, cols: Option<usize>, why: &str) -> Result<(), CliError> {
    let cols_ok = cols.is_none_or(|c| m.ncols() == c);
    if m.nrows() != rows || !cols_ok {
        let want = match cols {
            Some(c) => format!("{rows}x{c}"),
            None => format!("{rows} rows"),
        };
        return Err(CliError::Config(format!("plant.{path}: expected {want} ({why}), got {}x{}", m.nrows(), m.ncols())));
    }
    Ok(())
}

impl AnalysisConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let at = e.path().to_string();
            CliError::Config(format!("{}: {at}: {}", path.display(), e.into_inner()))
        })
    }

    pub fn validate(&self) -> Result<Problem, CliError> {
        let p = &self.plant;
        let a = to_matrix(&p.a, "plant.a")?;
        let n = a.nrows();
        expect_shape(&a, "a", n, Some(n), "square")?;
        let b_w = to_matrix(&p.b_w, "plant.b_w")?;
        expect_shape(&b_w, "b_w", n, None, "rows of plant.a")?;
        let b_d = to_matrix(&p.b_d, "plant.b_d")?;
        expect_shape(&b_d, "b_d", n, None, "rows of plant.a")?;
        let c_z = to_matrix(&p.c_z, "plant.c_z")?;
        let nz = c_z.nrows();
        expect_shape(&c_z, "c_z", nz, Some(n), "columns of plant.a")?;
        let d_zw = to_matrix(&p.d_zw, "plant.d_zw")?;
        expect_shape(&d_zw, "d_zw", nz, Some(b_w.ncols()), "rows of plant.c_z, columns of plant.b_w")?;
        let d_zd = to_matrix(&p.d_zd, "plant.d_zd")?;
        expect_shape(&d_zd, "d_zd", nz, Some(b_d.ncols()), "rows of plant.c_z, columns of plant.b_d")?;
        let c_e = to_matrix(&p.c_e, "plant.c_e")?;
        expect_shape(&c_e, "c_e", c_e.nrows(), Some(n), "columns of plant.a")?;
        if b_w.ncols() != nz {
            return Err(CliError::Config(format!("plant.b_w: uncertainty channel needs n_w = n_z = {nz}, got {}", b_w.ncols())));
        }
        let plant = UncertainPlant::new(a, b_w, b_d, c_z, d_zw, d_zd, c_e).map_err(|e| CliError::Config(format!("plant: {e}")))?;
        let interval = Interval::new(self.delta.min, self.delta.max).map_err(|e| CliError::Config(format!("delta: {e}")))?;
        if self.nu_list.is_empty() {
            return Err(CliError::Config("nu_list: must not be empty".into()));
        }
        let s = &self.solver;
        if !(s.eps_margin >= 0.0 && s.tol_feas > 0.0 && s.tol_gap > 0.0 && s.max_iter > 0) {
            return Err(CliError::Config("solver: tolerances must be positive and eps_margin nonnegative".into()));
        }
        let sim = self.sim;
        if !(sim.dt > 0.0 && sim.horizon > sim.dt && sim.horizon.is_finite()) {
            return Err(CliError::Config("sim: need 0 < dt < horizon".into()));
        }
        let inline_p = self.inline_p.as_ref().map(|r| to_matrix(r, "inline_p")).transpose()?;
        if let Some(p) = &inline_p {
            if p.nrows() != p.ncols() || p.nrows() == 0 {
                return Err(CliError::Config(format!("inline_p: expected a nonempty square matrix, got {}x{}", p.nrows(), p.ncols())));
            }
        }
        let options = AnalysisOptions {
            assembly: AssemblyOptions { eps_margin: s.eps_margin, ..AssemblyOptions::default() },
            solver: SolverOptions { tol_feas: s.tol_feas, tol_gap: s.tol_gap, max_iter: s.max_iter },
        };
        Ok(Problem { plant, interval, nu_list: self.nu_list.clone(), options, sim, inline_p })
    }
}
