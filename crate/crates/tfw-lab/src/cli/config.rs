//! Run configuration: a flat JSON document with one section per concern.
//!
//! ```json
//! {
//!   "grid":    {"half_width": 10.0, "num_points": 2048},
//!   "model":   {"preset": "tfw"},
//!   "nuclear": {"kind": "jellium", "rho0": 1.0},
//!   "solver":  {"tol_constraint": 1e-8, "tol_residual": 1e-6},
//!   "analysis": {"truncation_ks": [2, 4, 6, 8, 10, 12]},
//!   "output":  {"directory": "out"}
//! }
//! ```
//!
//! Unknown keys are rejected with a message naming the key. Every section
//! except `grid` and `nuclear` is optional.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::functional::{AlmState, ModelParams};
use crate::grid::{Grid1D, GridRef};
use crate::nuclear::{self, NuclearDensity};
use crate::solver::SolverOptions;
use crate::{Error, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    #[serde(default)]
    pub model: ModelSection,
    pub nuclear: NuclearSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub half_width: f64,
    pub num_points: usize,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// "tfw" or "tfwd"; explicit coefficients below override the preset.
    pub preset: Option<String>,
    pub c_w: Option<f64>,
    pub c_tf: Option<f64>,
    pub c_d: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NuclearSection {
    /// One of "jellium", "comb", "bump", "gaussian", "file".
    pub kind: String,
    pub rho0: Option<f64>,
    pub sigma: Option<f64>,
    pub period: Option<f64>,
    pub center: Option<f64>,
    pub width: Option<f64>,
    pub height: Option<f64>,
    pub amplitude: Option<f64>,
    pub path: Option<String>,
    pub defect_half_width: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub tol_constraint: Option<f64>,
    pub tol_residual: Option<f64>,
    pub max_outer: Option<usize>,
    pub max_inner: Option<usize>,
    pub inner_grad_tol: Option<f64>,
    pub step_init: Option<f64>,
    pub armijo_c: Option<f64>,
    pub backtrack_factor: Option<f64>,
    pub seed: Option<u64>,
    pub mu0: Option<f64>,
    pub c0: Option<f64>,
    pub kappa: Option<f64>,
    pub c_min: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    /// Truncation widths for the gamma_K table; strictly increasing and
    /// above the defect width. Default: j * L/5 for j = 1..6.
    pub truncation_ks: Option<Vec<f64>>,
    /// Tail buffer excluded near the periodic boundary in decay fits.
    /// Default: 10% of the box length.
    pub boundary_buffer: Option<f64>,
    /// Box half-widths for the convergence study.
    pub convergence_sizes: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: Option<String>,
    /// Subset of ["csv", "json"]; default both.
    pub formats: Option<Vec<String>>,
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub model: Option<String>,
}

/// A config with every section resolved into domain objects.
pub struct Resolved {
    pub grid: GridRef,
    pub model: ModelParams,
    pub nuclear: NuclearDensity,
    pub solver: SolverOptions,
    pub alm: AlmState,
    pub truncation_ks: Vec<f64>,
    pub boundary_buffer: Option<f64>,
    pub convergence_sizes: Vec<f64>,
    pub out_dir: PathBuf,
    pub write_csv: bool,
    pub write_json: bool,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn resolve(&self, overrides: &Overrides) -> Result<Resolved> {
        let grid = Grid1D::shared(self.grid.half_width, self.grid.num_points)?;
        let model = resolve_model(&self.model, overrides.model.as_deref())?;
        let nuclear = build_nuclear(&self.nuclear, &grid)?;
        let (solver, alm) = resolve_solver(&self.solver, overrides.seed)?;

        let l = grid.half_width();
        let truncation_ks = self
            .analysis
            .truncation_ks
            .clone()
            .unwrap_or_else(|| (1..=6).map(|j| j as f64 * l / 5.0).collect());
        let out_dir = overrides
            .out_dir
            .clone()
            .or_else(|| self.output.directory.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"));
        let (write_csv, write_json) = resolve_formats(&self.output)?;

        Ok(Resolved {
            grid,
            model,
            nuclear,
            solver,
            alm,
            truncation_ks,
            boundary_buffer: self.analysis.boundary_buffer,
            convergence_sizes: self.analysis.convergence_sizes.clone().unwrap_or_default(),
            out_dir,
            write_csv,
            write_json,
        })
    }

    /// Grid and model must agree between the reference and perturbation
    /// configs of a defect run.
    pub fn ensure_same_experiment(&self, other: &RunConfig) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::Config(format!(
                "grid mismatch between configs: {:?} vs {:?}",
                self.grid, other.grid
            )));
        }
        let a = resolve_model(&self.model, None)?;
        let b = resolve_model(&other.model, None)?;
        if a != b {
            return Err(Error::Config(format!(
                "model mismatch between configs: {a:?} vs {b:?}"
            )));
        }
        Ok(())
    }
}

pub fn resolve_model(section: &ModelSection, override_preset: Option<&str>) -> Result<ModelParams> {
    let preset_name = override_preset.or(section.preset.as_deref()).unwrap_or("tfw");
    let base = match preset_name {
        "tfw" => ModelParams::tfw(),
        "tfwd" => ModelParams::tfwd(),
        other => {
            return Err(Error::Config(format!(
                "unknown model preset '{other}' (expected 'tfw' or 'tfwd')"
            )))
        }
    };
    // Explicit coefficients are ignored when the preset comes from the
    // command line, which always wins.
    if override_preset.is_some() {
        return Ok(base);
    }
    ModelParams::new(
        section.c_w.unwrap_or(base.c_w),
        section.c_tf.unwrap_or(base.c_tf),
        section.c_d.unwrap_or(base.c_d),
    )
}

pub fn build_nuclear(section: &NuclearSection, grid: &GridRef) -> Result<NuclearDensity> {
    let require = |name: &str, v: Option<f64>| {
        v.ok_or_else(|| {
            Error::Config(format!(
                "nuclear kind '{}' requires the key '{name}'",
                section.kind
            ))
        })
    };
    match section.kind.as_str() {
        "jellium" => nuclear::jellium(grid.clone(), require("rho0", section.rho0)?),
        "comb" => nuclear::gaussian_comb(
            grid.clone(),
            require("sigma", section.sigma)?,
            require("period", section.period)?,
        ),
        "bump" => nuclear::uniform_bump(
            grid.clone(),
            require("center", section.center)?,
            require("width", section.width)?,
            require("height", section.height)?,
        ),
        "gaussian" => nuclear::gaussian_perturbation(
            grid.clone(),
            require("amplitude", section.amplitude)?,
            require("sigma", section.sigma)?,
        ),
        "file" => {
            let path = section.path.as_ref().ok_or_else(|| {
                Error::Config("nuclear kind 'file' requires the key 'path'".into())
            })?;
            nuclear::from_file(grid.clone(), Path::new(path), section.defect_half_width)
        }
        other => Err(Error::Config(format!(
            "unknown nuclear kind '{other}' (expected jellium, comb, bump, gaussian, or file)"
        ))),
    }
}

/// Perturbations must be slab-confined; extended kinds cannot serve as nu.
pub fn ensure_perturbation_kind(section: &NuclearSection) -> Result<()> {
    match section.kind.as_str() {
        "bump" | "gaussian" | "file" => Ok(()),
        other => Err(Error::Config(format!(
            "nuclear kind '{other}' is not slab-confined and cannot be used as a perturbation"
        ))),
    }
}

fn resolve_solver(section: &SolverSection, seed: Option<u64>) -> Result<(SolverOptions, AlmState)> {
    let d = SolverOptions::default();
    let opts = SolverOptions {
        tol_constraint: section.tol_constraint.unwrap_or(d.tol_constraint),
        tol_residual: section.tol_residual.unwrap_or(d.tol_residual),
        max_outer: section.max_outer.unwrap_or(d.max_outer),
        max_inner: section.max_inner.unwrap_or(d.max_inner),
        inner_grad_tol: section.inner_grad_tol.unwrap_or(d.inner_grad_tol),
        step_init: section.step_init.unwrap_or(d.step_init),
        armijo_c: section.armijo_c.unwrap_or(d.armijo_c),
        backtrack_factor: section.backtrack_factor.unwrap_or(d.backtrack_factor),
        seed: seed.or(section.seed).unwrap_or(d.seed),
    };
    opts.validate()?;
    let alm_default = AlmState::default();
    let alm = AlmState::new(
        section.mu0.unwrap_or(alm_default.mu),
        section.c0.unwrap_or(alm_default.c),
        section.kappa.unwrap_or(alm_default.kappa),
        section.c_min.unwrap_or(alm_default.c_min),
    )?;
    Ok((opts, alm))
}

fn resolve_formats(section: &OutputSection) -> Result<(bool, bool)> {
    match &section.formats {
        None => Ok((true, true)),
        Some(list) => {
            let mut csv = false;
            let mut json = false;
            for f in list {
                match f.as_str() {
                    "csv" => csv = true,
                    "json" => json = true,
                    other => {
                        return Err(Error::Config(format!(
                            "unknown output format '{other}' (expected 'csv' or 'json')"
                        )))
                    }
                }
            }
            Ok((csv, json))
        }
    }
}
