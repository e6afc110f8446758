//! Command-line front end: `solve`, `relative-energy`, `decay-study`,
//! `convergence-study`, `uniqueness-probe`.
//!
//! Exit-code contract: 0 converged, 1 not converged (trace still written),
//! 2 invalid input. Payload files are deterministic for a fixed config and
//! seed; wall-clock data goes to `metadata.json` only.

pub mod config;
pub mod output;

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::analysis::{self, DefectFields};
use crate::functional;
use crate::grid::Grid1D;
use crate::nuclear::{self, NuclearDensity};
use crate::solver::{self, SolveResult};
use crate::{Error, Result};
use config::{Overrides, Resolved, RunConfig};
use output::Emitted;

#[derive(Debug, Parser)]
#[command(
    name = "tfw-lab",
    about = "Quasi-1D TFW/TFWD ground states and defect energetics",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the ground state for one nuclear configuration.
    Solve(SolveArgs),
    /// Solve reference and perturbed crystals and report the relative energy.
    RelativeEnergy(RelativeEnergyArgs),
    /// Fit the exponential decay of the defect fields.
    DecayStudy(DecayStudyArgs),
    /// Re-solve the defect on growing boxes at fixed spacing.
    ConvergenceStudy(ConvergenceStudyArgs),
    /// Solve from randomized starts and report the solution spread.
    UniquenessProbe(UniquenessProbeArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for randomized initial guesses; overrides the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Force the model preset.
    #[arg(long, value_parser = ["tfw", "tfwd"])]
    pub model: Option<String>,
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            out_dir: self.out.clone(),
            seed: self.seed,
            model: self.model.clone(),
        }
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct RelativeEnergyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Config whose nuclear section describes the perturbation nu.
    #[arg(long)]
    pub perturbation: PathBuf,
    /// Also minimize the relative-energy functional directly and report the
    /// cross-check value.
    #[arg(long)]
    pub variational: bool,
}

#[derive(Debug, Args)]
pub struct DecayStudyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub perturbation: PathBuf,
}

#[derive(Debug, Args)]
pub struct ConvergenceStudyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub perturbation: PathBuf,
    /// Box half-widths, e.g. --sizes 5,10,20,40. Falls back to
    /// analysis.convergence_sizes in the config.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct UniquenessProbeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Number of randomized initializations.
    #[arg(long, default_value_t = 3)]
    pub trials: usize,
}

/// Run a parsed command and map the outcome onto the exit-code contract.
pub fn run(cli: Cli) -> i32 {
    let outcome = match cli.command {
        Command::Solve(args) => cmd_solve(&args),
        Command::RelativeEnergy(args) => cmd_relative_energy(&args),
        Command::DecayStudy(args) => cmd_decay_study(&args),
        Command::ConvergenceStudy(args) => cmd_convergence_study(&args),
        Command::UniquenessProbe(args) => cmd_uniqueness_probe(&args),
    };
    match outcome {
        Ok(true) => 0,
        Ok(false) => {
            eprintln!("not converged; diagnostics written");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::NotConverged(_) | Error::LineSearchStall { .. } => 1,
                _ => 2,
            }
        }
    }
}

fn solve_resolved(r: &Resolved) -> Result<SolveResult> {
    solver::staggered_solve_with(&r.nuclear, &r.model, &r.solver, r.alm, None)
}

pub fn cmd_solve(args: &SolveArgs) -> Result<bool> {
    let started = Instant::now();
    let cfg = RunConfig::load(&args.common.config)?;
    let r = cfg.resolve(&args.common.overrides())?;
    let result = solve_resolved(&r)?;

    let mut emitted = Emitted::default();
    if r.write_csv {
        let path = r.out_dir.join("fields.csv");
        output::write_file(
            &path,
            &output::fields_csv(&r.nuclear, &result.state.u, &result.state.phi),
        )?;
        emitted.csv(path, output::FIELDS_HEADER);
        let path = r.out_dir.join("trace.csv");
        output::write_file(&path, &output::trace_csv(&result))?;
        emitted.csv(path, output::TRACE_HEADER);
    }
    if r.write_json {
        let path = r.out_dir.join("summary.json");
        output::write_file(
            &path,
            &output::solve_summary_json(&result, r.nuclear.total_charge(), r.solver.seed),
        )?;
        emitted.json(
            path,
            vec![
                "converged",
                "energy",
                "energy_per_length",
                "mu_final",
                "outer_iterations",
                "constraint_violation",
                "el_residual",
                "total_charge",
                "seed",
                "trace",
            ],
        );
    }
    output::write_file(
        &r.out_dir.join("metadata.json"),
        &output::metadata_json("solve", started.elapsed()),
    )?;
    emitted.validate()?;

    println!(
        "solve: converged={} energy={:.9} outer={} |Q|/charge={:.3e} residual={:.3e}",
        result.converged,
        result.energy,
        result.outer_iterations,
        result.constraint_violation,
        result.el_residual
    );
    Ok(result.converged)
}

/// Shared setup of the defect pipeline: both solves plus the difference
/// fields. Returns `Ok(Err(..))`-style `None` when a solve failed to
/// converge, after writing the diagnostic traces.
struct DefectRun {
    reference: SolveResult,
    perturbed: SolveResult,
    nu: NuclearDensity,
    m2: NuclearDensity,
    resolved: Resolved,
}

fn run_defect_pair(
    common: &CommonArgs,
    perturbation: &PathBuf,
) -> Result<std::result::Result<DefectRun, Box<DefectRun>>> {
    let cfg_ref = RunConfig::load(&common.config)?;
    let cfg_pert = RunConfig::load(perturbation)?;
    cfg_ref.ensure_same_experiment(&cfg_pert)?;
    config::ensure_perturbation_kind(&cfg_pert.nuclear)?;

    let resolved = cfg_ref.resolve(&common.overrides())?;
    let nu = config::build_nuclear(&cfg_pert.nuclear, &resolved.grid)?;
    let m2 = nuclear::superpose(&resolved.nuclear, &nu)?;

    let reference = solve_resolved(&resolved)?;
    let perturbed =
        solver::staggered_solve_with(&m2, &resolved.model, &resolved.solver, resolved.alm, None)?;

    let run = DefectRun {
        reference,
        perturbed,
        nu,
        m2,
        resolved,
    };
    if run.reference.converged && run.perturbed.converged {
        Ok(Ok(run))
    } else {
        Ok(Err(Box::new(run)))
    }
}

fn write_defect_traces(run: &DefectRun, emitted: &mut Emitted) -> Result<()> {
    if !run.resolved.write_csv {
        return Ok(());
    }
    let path = run.resolved.out_dir.join("trace_reference.csv");
    output::write_file(&path, &output::trace_csv(&run.reference))?;
    emitted.csv(path, output::TRACE_HEADER);
    let path = run.resolved.out_dir.join("trace_perturbed.csv");
    output::write_file(&path, &output::trace_csv(&run.perturbed))?;
    emitted.csv(path, output::TRACE_HEADER);
    Ok(())
}

fn write_defect_csv(run: &DefectRun, d: &DefectFields, emitted: &mut Emitted) -> Result<()> {
    if !run.resolved.write_csv {
        return Ok(());
    }
    let path = run.resolved.out_dir.join("defect.csv");
    output::write_file(
        &path,
        &output::defect_csv(
            &run.resolved.nuclear,
            &run.m2,
            &run.reference.state.u,
            &run.perturbed.state.u,
            &run.reference.state.phi,
            &run.perturbed.state.phi,
            d.v(),
            d.phi_d(),
        ),
    )?;
    emitted.csv(path, output::DEFECT_HEADER);
    Ok(())
}

pub fn cmd_relative_energy(args: &RelativeEnergyArgs) -> Result<bool> {
    let started = Instant::now();
    let mut emitted = Emitted::default();
    let run = match run_defect_pair(&args.common, &args.perturbation)? {
        Ok(run) => run,
        Err(run) => {
            write_defect_traces(&run, &mut emitted)?;
            output::write_file(
                &run.resolved.out_dir.join("metadata.json"),
                &output::metadata_json("relative-energy", started.elapsed()),
            )?;
            emitted.validate()?;
            return Ok(false);
        }
    };
    let r = &run.resolved;

    let d = DefectFields::new(&run.reference, &run.perturbed, &run.nu)?;
    let variational_value = if args.variational {
        let (value, _w) =
            analysis::variational_cross_check(&run.reference, &run.nu, &r.model, &r.solver)?;
        Some(value)
    } else {
        None
    };
    let report = analysis::build_report(
        &d,
        &r.model,
        &r.truncation_ks,
        r.boundary_buffer,
        variational_value,
    )?;
    let gamma_direct = functional::energy(&run.perturbed.state.u, &run.m2, &r.model)?
        - functional::energy(&run.reference.state.u, &r.nuclear, &r.model)?;

    write_defect_traces(&run, &mut emitted)?;
    write_defect_csv(&run, &d, &mut emitted)?;
    if r.write_csv {
        let rows: Vec<(f64, f64)> = report.truncated.iter().map(|t| (t.k, t.gamma)).collect();
        let path = r.out_dir.join("truncation.csv");
        output::write_file(&path, &output::truncation_csv(&rows))?;
        emitted.csv(path, output::TRUNCATION_HEADER);
    }
    if r.write_json {
        let path = r.out_dir.join("report.json");
        output::write_file(
            &path,
            &output::relative_energy_report_json(&report, gamma_direct),
        )?;
        emitted.json(
            path,
            vec![
                "gamma",
                "gamma_direct_difference",
                "truncated",
                "neutrality_defect",
                "decay_u",
                "decay_phi",
                "variational_value",
            ],
        );
    }
    output::write_file(
        &r.out_dir.join("metadata.json"),
        &output::metadata_json("relative-energy", started.elapsed()),
    )?;
    emitted.validate()?;

    println!(
        "relative-energy: gamma={:.9} direct={:.9} neutrality={:.3e} decay_k2=({:.4}, {:.4})",
        report.gamma,
        gamma_direct,
        report.neutrality_defect,
        report.decay_u.k2,
        report.decay_phi.k2
    );
    if let Some(v) = report.variational_value {
        println!(
            "variational: value={:.9} agreement={:.3e}",
            v,
            (v - report.gamma).abs() / report.gamma.abs().max(f64::MIN_POSITIVE)
        );
    }
    Ok(true)
}

pub fn cmd_decay_study(args: &DecayStudyArgs) -> Result<bool> {
    let started = Instant::now();
    let mut emitted = Emitted::default();
    let run = match run_defect_pair(&args.common, &args.perturbation)? {
        Ok(run) => run,
        Err(run) => {
            write_defect_traces(&run, &mut emitted)?;
            output::write_file(
                &run.resolved.out_dir.join("metadata.json"),
                &output::metadata_json("decay-study", started.elapsed()),
            )?;
            emitted.validate()?;
            return Ok(false);
        }
    };
    let r = &run.resolved;

    let d = DefectFields::new(&run.reference, &run.perturbed, &run.nu)?;
    let core = run.nu.defect_half_width();
    let buffer = r
        .boundary_buffer
        .unwrap_or(0.2 * d.v().grid().half_width());
    let decay_u = analysis::fit_decay(d.v(), core, buffer)?;
    let decay_phi = analysis::fit_decay(d.phi_d(), core, buffer)?;

    write_defect_traces(&run, &mut emitted)?;
    write_defect_csv(&run, &d, &mut emitted)?;
    if r.write_json {
        let path = r.out_dir.join("decay.json");
        output::write_file(
            &path,
            &output::decay_study_json(&decay_u, &decay_phi, core, buffer),
        )?;
        emitted.json(
            path,
            vec!["core_half_width", "boundary_buffer", "decay_u", "decay_phi"],
        );
    }
    output::write_file(
        &r.out_dir.join("metadata.json"),
        &output::metadata_json("decay-study", started.elapsed()),
    )?;
    emitted.validate()?;

    println!(
        "decay-study: k2_u={:.4} (R2={:.4}) k2_phi={:.4} (R2={:.4})",
        decay_u.k2, decay_u.correlation, decay_phi.k2, decay_phi.correlation
    );
    Ok(true)
}

pub fn cmd_convergence_study(args: &ConvergenceStudyArgs) -> Result<bool> {
    let started = Instant::now();
    let cfg_ref = RunConfig::load(&args.common.config)?;
    let cfg_pert = RunConfig::load(&args.perturbation)?;
    cfg_ref.ensure_same_experiment(&cfg_pert)?;
    config::ensure_perturbation_kind(&cfg_pert.nuclear)?;
    let base = cfg_ref.resolve(&args.common.overrides())?;

    let sizes = if args.sizes.is_empty() {
        base.convergence_sizes.clone()
    } else {
        args.sizes.clone()
    };
    if sizes.len() < 3 {
        return Err(Error::Config(format!(
            "convergence study needs at least 3 box sizes for a rate fit, got {}",
            sizes.len()
        )));
    }
    for pair in sizes.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::Config(
                "convergence-study sizes must be strictly increasing".into(),
            ));
        }
    }

    // Keep the base spacing; scale the point count with the box.
    let h = base.grid.spacing();
    let mut grids = Vec::new();
    for &l in &sizes {
        let n_real = 2.0 * l / h;
        let n = n_real.round() as usize;
        if n % 2 != 0 || (n_real - n as f64).abs() > 1e-9 * n as f64 {
            return Err(Error::Config(format!(
                "box half-width {l} is incommensurate with the base spacing {h} \
                 (needs an even point count, got {n_real})"
            )));
        }
        grids.push(Grid1D::shared(l, n)?);
    }

    // Independent solves per size run concurrently; each solve is
    // single-threaded and deterministic, and results are assembled in size
    // order.
    let mut runs: Vec<Option<Result<(SolveResult, SolveResult, NuclearDensity)>>> =
        (0..sizes.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for grid in &grids {
            let cfg_ref = &cfg_ref;
            let cfg_pert = &cfg_pert;
            let base = &base;
            handles.push(scope.spawn(move || -> Result<_> {
                let m1 = config::build_nuclear(&cfg_ref.nuclear, grid)?;
                let nu = config::build_nuclear(&cfg_pert.nuclear, grid)?;
                if grid.half_width() <= 2.0 * nu.defect_half_width() {
                    return Err(Error::Config(format!(
                        "box half-width {} does not clear the defect width {}",
                        grid.half_width(),
                        2.0 * nu.defect_half_width()
                    )));
                }
                let m2 = nuclear::superpose(&m1, &nu)?;
                let reference =
                    solver::staggered_solve_with(&m1, &base.model, &base.solver, base.alm, None)?;
                let perturbed =
                    solver::staggered_solve_with(&m2, &base.model, &base.solver, base.alm, None)?;
                Ok((reference, perturbed, nu))
            }));
        }
        for (slot, handle) in runs.iter_mut().zip(handles) {
            *slot = Some(handle.join().expect("solver thread panicked"));
        }
    });

    let mut solves = Vec::new();
    for (i, slot) in runs.into_iter().enumerate() {
        let (reference, perturbed, nu) = slot.expect("slot filled")?;
        if !reference.converged || !perturbed.converged {
            return Err(Error::NotConverged(format!(
                "solve at box half-width {} did not converge",
                sizes[i]
            )));
        }
        solves.push((reference, perturbed, nu));
    }

    let mut rows: Vec<(f64, f64, f64)> = Vec::new();
    let (largest_ref, largest_pert, _) = solves.last().expect("at least three sizes");
    let largest_grid = largest_pert.state.u.grid().clone();
    let _ = largest_ref;
    for (i, (reference, perturbed, nu)) in solves.iter().enumerate() {
        let d = DefectFields::new(reference, perturbed, nu)?;
        let gamma = analysis::relative_energy(&d, &base.model)?;
        // Restrict the largest-box solution to this box; the grids nest
        // because the spacing is shared.
        let offset = (largest_grid.num_points() - perturbed.state.u.len()) / 2;
        let diff = perturbed
            .state
            .u
            .values()
            .iter()
            .enumerate()
            .map(|(j, &v)| (v - largest_pert.state.u.values()[j + offset]).abs())
            .fold(0.0_f64, f64::max);
        rows.push((sizes[i], gamma, diff));
    }

    // Exponential rate of the field differences, excluding the self-compared
    // largest box.
    let fit_rows: Vec<(f64, f64)> = rows[..rows.len() - 1]
        .iter()
        .filter(|(_, _, d)| *d > 1e-300)
        .map(|&(l, _, d)| (l, d.ln()))
        .collect();
    let rate = if fit_rows.len() >= 2 {
        let n = fit_rows.len() as f64;
        let xm = fit_rows.iter().map(|r| r.0).sum::<f64>() / n;
        let ym = fit_rows.iter().map(|r| r.1).sum::<f64>() / n;
        let sxx: f64 = fit_rows.iter().map(|r| (r.0 - xm) * (r.0 - xm)).sum();
        let sxy: f64 = fit_rows.iter().map(|r| (r.0 - xm) * (r.1 - ym)).sum();
        let syy: f64 = fit_rows.iter().map(|r| (r.1 - ym) * (r.1 - ym)).sum();
        let slope = sxy / sxx;
        let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
        Some((-slope, r2))
    } else {
        None
    };

    let mut emitted = Emitted::default();
    if base.write_csv {
        let path = base.out_dir.join("convergence.csv");
        output::write_file(&path, &output::convergence_csv(&rows))?;
        emitted.csv(path, output::CONVERGENCE_HEADER);
    }
    if base.write_json {
        let path = base.out_dir.join("convergence.json");
        output::write_file(&path, &output::convergence_study_json(&rows, rate))?;
        emitted.json(
            path,
            vec!["rows", "field_difference_rate", "field_difference_fit_r2"],
        );
    }
    output::write_file(
        &base.out_dir.join("metadata.json"),
        &output::metadata_json("convergence-study", started.elapsed()),
    )?;
    emitted.validate()?;

    for &(l, gamma, diff) in &rows {
        println!("convergence-study: L={l} gamma={gamma:.9} u_diff={diff:.3e}");
    }
    Ok(true)
}

pub fn cmd_uniqueness_probe(args: &UniquenessProbeArgs) -> Result<bool> {
    let started = Instant::now();
    let cfg = RunConfig::load(&args.common.config)?;
    let r = cfg.resolve(&args.common.overrides())?;
    let (spread, results) =
        solver::uniqueness_probe_runs(&r.nuclear, &r.model, &r.solver, args.trials)?;
    let energies: Vec<f64> = results.iter().map(|s| s.energy).collect();

    let mut emitted = Emitted::default();
    if r.write_json {
        let path = r.out_dir.join("uniqueness.json");
        output::write_file(
            &path,
            &output::uniqueness_json(spread, args.trials, &energies),
        )?;
        emitted.json(path, vec!["trials", "spread_sup", "trial_energies"]);
    }
    output::write_file(
        &r.out_dir.join("metadata.json"),
        &output::metadata_json("uniqueness-probe", started.elapsed()),
    )?;
    emitted.validate()?;

    println!("uniqueness-probe: trials={} spread={spread:.3e}", args.trials);
    Ok(true)
}
