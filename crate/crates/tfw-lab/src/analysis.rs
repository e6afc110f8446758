//! Defect energetics and locality diagnostics.
//!
//! Given converged solves of the perfect crystal `m1` and the perturbed
//! crystal `m2 = m1 + nu`, this module evaluates the relative (surface)
//! energy of the perturbation directly from the difference fields
//! `v = u2 - u1` and `phi_d = phi2 - phi1`:
//!
//! ```text
//! gamma = C_W int |v'|^2
//!       + C_TF int [ |u1+v|^{10/3} - u1^{10/3} - (10/3) u1^{7/3} v ]
//!       - C_D  int [ |u1+v|^{8/3}  - u1^{8/3}  - (8/3)  u1^{5/3} v ]
//!       + 1/2 int phi_d ((u1+v)^2 - u1^2 - nu)
//!       +     int phi_1 (v^2 - nu),
//! ```
//!
//! with the constraint multipliers folded into the potentials
//! (`phi_1 + mu_1`, `phi_d + (mu_2 - mu_1)`): on a finite periodic box the
//! Euler-Lagrange equation holds for the shifted potential, and the folding
//! makes `gamma` equal to the direct energy difference
//! `E(u2, m2) - E(u1, m1)` up to solver residuals. The potentials are
//! re-gauged to zero mean internally, so a common constant added to both
//! inputs cannot move the result.
//!
//! The same integrand restricted to `|z| <= K/2` gives the truncated
//! estimator; its error against the full value decays exponentially in `K`,
//! which is what the locality theory predicts and what the decay fits
//! measure directly on `|v|` and `|phi_d|`.

use crate::functional::{self, FieldState, ModelParams};
use crate::grid::{self, Field};
use crate::nuclear::NuclearDensity;
use crate::poisson::PoissonWorkspace;
use crate::solver::{self, SolveResult, SolverOptions};
use crate::{Error, Result};

/// Difference fields of a defect against its reference crystal.
#[derive(Debug, Clone)]
pub struct DefectFields {
    v: Field,
    phi_d: Field,
    reference: FieldState,
    perturbation: NuclearDensity,
    mu_ref: f64,
    mu_pert: f64,
    perturbed_converged: bool,
}

impl DefectFields {
    /// Build from two staggered solves. The reference must have converged;
    /// the perturbed solve may be unconverged (the neutrality diagnostic is
    /// expected to expose that), but energy evaluations will refuse it.
    pub fn new(
        reference: &SolveResult,
        perturbed: &SolveResult,
        nu: &NuclearDensity,
    ) -> Result<DefectFields> {
        if !reference.converged {
            return Err(Error::NotConverged(
                "reference solve must converge before defect analysis".into(),
            ));
        }
        let mut d = DefectFields::from_states(
            reference.state.clone(),
            reference.mu_final,
            &perturbed.state,
            perturbed.mu_final,
            nu,
        )?;
        d.perturbed_converged = perturbed.converged;
        Ok(d)
    }

    /// Assemble from raw states. Exposed so gauge experiments can shift the
    /// potentials before forming the difference fields.
    pub fn from_states(
        reference: FieldState,
        mu_ref: f64,
        perturbed: &FieldState,
        mu_pert: f64,
        nu: &NuclearDensity,
    ) -> Result<DefectFields> {
        grid::check_same_grid(&reference.u, &perturbed.u)?;
        grid::check_same_grid(&reference.u, nu.field())?;
        let v = perturbed.u.linear_combination(1.0, -1.0, &reference.u)?;
        let phi_d = perturbed.phi.linear_combination(1.0, -1.0, &reference.phi)?;
        Ok(DefectFields {
            v,
            phi_d,
            reference,
            perturbation: nu.clone(),
            mu_ref,
            mu_pert,
            perturbed_converged: true,
        })
    }

    pub fn v(&self) -> &Field {
        &self.v
    }

    pub fn phi_d(&self) -> &Field {
        &self.phi_d
    }

    pub fn reference(&self) -> &FieldState {
        &self.reference
    }

    pub fn perturbation(&self) -> &NuclearDensity {
        &self.perturbation
    }

    pub fn mu_ref(&self) -> f64 {
        self.mu_ref
    }

    pub fn mu_pert(&self) -> f64 {
        self.mu_pert
    }

    /// Defect width `L0` (twice the perturbation's support half-width).
    pub fn defect_width(&self) -> f64 {
        2.0 * self.perturbation.defect_half_width()
    }

    fn require_converged(&self) -> Result<()> {
        if self.perturbed_converged {
            Ok(())
        } else {
            Err(Error::NotConverged(
                "perturbed solve did not converge; relative energy undefined".into(),
            ))
        }
    }
}

/// Exponential fit `|f| ~ k1 exp(-k2 dist)` on the tails of a field.
#[derive(Debug, Clone, Copy)]
pub struct DecayFit {
    pub k1: f64,
    pub k2: f64,
    /// `(z_lo, z_hi)` in `|z|`; the fit uses both tails mirrored.
    pub fit_window: (f64, f64),
    /// R-squared of the log-linear regression.
    pub correlation: f64,
}

/// One row of the truncation study.
#[derive(Debug, Clone, Copy)]
pub struct TruncatedGamma {
    pub k: f64,
    pub gamma: f64,
}

/// Everything the relative-energy pipeline reports.
#[derive(Debug, Clone)]
pub struct RelativeEnergyReport {
    /// Relative energy per unit cross-sectional area.
    pub gamma: f64,
    pub truncated: Vec<TruncatedGamma>,
    /// `|int (v^2 + 2 u1 v - nu)| / max(1, int |nu|)`.
    pub neutrality_defect: f64,
    pub decay_u: DecayFit,
    pub decay_phi: DecayFit,
    /// Present when the variational cross-check was run.
    pub variational_value: Option<f64>,
}

/// Relative energy of the defect, all four terms of the difference formula.
pub fn relative_energy(d: &DefectFields, params: &ModelParams) -> Result<f64> {
    d.require_converged()?;
    Ok(gamma_windowed(d, params, d.v.grid().half_width()))
}

/// Same integrand as [`relative_energy`] restricted to `|z| <= K/2`.
/// `K` must exceed the defect width `L0` and fit in the box (`K <= 2L`).
pub fn truncated_relative_energy(d: &DefectFields, params: &ModelParams, k: f64) -> Result<f64> {
    d.require_converged()?;
    let l0 = d.defect_width();
    let box_len = d.v.grid().length();
    if !(k > l0 && k <= box_len) {
        return Err(Error::InvalidInput(format!(
            "truncation width K = {k} must lie in (L0, 2L] = ({l0}, {box_len}]"
        )));
    }
    Ok(gamma_windowed(d, params, k / 2.0))
}

fn gamma_windowed(d: &DefectFields, params: &ModelParams, half_window: f64) -> f64 {
    let u1 = d.reference.u.values();
    let v = d.v.values();
    let nu = d.perturbation.values();
    let grid = d.v.grid();
    let h = grid.spacing();
    let n = grid.num_points();
    let z = grid.coordinates();

    // Re-gauge both potentials and fold the multipliers in, making the
    // result insensitive to any common constant in the inputs.
    let phi1 = d.reference.phi.values();
    let phi_d = d.phi_d.values();
    let mean1 = phi1.iter().sum::<f64>() / n as f64;
    let mean_d = phi_d.iter().sum::<f64>() / n as f64;
    let shift1 = d.mu_ref - mean1;
    let shift_d = (d.mu_pert - d.mu_ref) - mean_d;

    let inv_2h = 1.0 / (2.0 * h);
    let tf_c = 10.0 / 3.0;
    let dirac_c = 8.0 / 3.0;
    let mut acc = 0.0;
    for i in 0..n {
        if z[i].abs() > half_window {
            continue;
        }
        let prev = v[if i == 0 { n - 1 } else { i - 1 }];
        let next = v[if i + 1 == n { 0 } else { i + 1 }];
        let dv = (next - prev) * inv_2h;

        let a = u1[i];
        let b = a + v[i];
        let mut term = params.c_w * dv * dv
            + params.c_tf
                * (functional::abs_pow_10_3(b)
                    - functional::abs_pow_10_3(a)
                    - tf_c * functional::signed_pow_7_3(a) * v[i]);
        if params.c_d > 0.0 {
            term -= params.c_d
                * (functional::abs_pow_8_3(b)
                    - functional::abs_pow_8_3(a)
                    - dirac_c * functional::signed_pow_5_3(a) * v[i]);
        }
        let q = v[i] * v[i] + 2.0 * a * v[i] - nu[i];
        term += 0.5 * (phi_d[i] + shift_d) * q;
        term += (phi1[i] + shift1) * (v[i] * v[i] - nu[i]);
        acc += term;
    }
    acc * h
}

/// Relative size of the charge-neutrality defect
/// `int (v^2 + 2 u1 v) = int nu`. Discriminates converged from unconverged
/// perturbed states.
pub fn check_charge_neutrality(d: &DefectFields) -> f64 {
    let u1 = d.reference.u.values();
    let v = d.v.values();
    let nu = d.perturbation.values();
    let h = d.v.grid().spacing();
    let mut defect = 0.0;
    let mut nu_abs = 0.0;
    for i in 0..v.len() {
        defect += v[i] * v[i] + 2.0 * u1[i] * v[i] - nu[i];
        nu_abs += nu[i].abs();
    }
    (defect * h).abs() / (nu_abs * h).max(1.0)
}

/// Least-squares line through `(dist, log|f|)` over both tails, where
/// `dist = |z| - core_half_width` and the window is
/// `core_half_width + h <= |z| <= L - boundary_buffer`. Samples at or below
/// the noise floor `1e-13` are excluded.
pub fn fit_decay(f: &Field, core_half_width: f64, boundary_buffer: f64) -> Result<DecayFit> {
    if !(core_half_width >= 0.0 && boundary_buffer >= 0.0) {
        return Err(Error::InvalidInput(
            "fit window parameters must be nonnegative".into(),
        ));
    }
    let grid = f.grid();
    let z_lo = core_half_width + grid.spacing();
    let z_hi = grid.half_width() - boundary_buffer;
    if z_lo >= z_hi {
        return Err(Error::InvalidInput(format!(
            "decay fit window [{z_lo}, {z_hi}] is empty"
        )));
    }
    const NOISE_FLOOR: f64 = 1e-13;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut in_window = 0usize;
    for (&z, &val) in grid.coordinates().iter().zip(f.values()) {
        let az = z.abs();
        if az < z_lo || az > z_hi {
            continue;
        }
        in_window += 1;
        if val.abs() > NOISE_FLOOR {
            xs.push(az - core_half_width);
            ys.push(val.abs().ln());
        }
    }
    if in_window < 10 {
        return Err(Error::InvalidInput(format!(
            "decay fit window holds only {in_window} samples; need at least 10"
        )));
    }
    if xs.len() < 10 {
        return Err(Error::InvalidInput(format!(
            "only {} samples above the noise floor in the decay fit window",
            xs.len()
        )));
    }

    let n = xs.len() as f64;
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(&ys) {
        sxx += (x - x_mean) * (x - x_mean);
        sxy += (x - x_mean) * (y - y_mean);
        syy += (y - y_mean) * (y - y_mean);
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let correlation = if syy > 0.0 {
        (sxy * sxy) / (sxx * syy)
    } else {
        1.0
    };
    Ok(DecayFit {
        k1: intercept.exp(),
        k2: -slope,
        fit_window: (z_lo, z_hi),
        correlation,
    })
}

// ---------------------------------------------------------------------------
// Variational cross-check
// ---------------------------------------------------------------------------

/// The relative-energy functional `E(w)` with augmented-Lagrangian terms for
/// the charge constraint `int ((u1+w)^2 - u1^2) = int nu`. Each evaluation
/// resolves the Poisson problem for the residual charge, so the Coulomb term
/// is differentiated exactly rather than staggered.
struct VariationalObjective<'a> {
    u1: &'a [f64],
    phi1_hat: Vec<f64>,
    nu: &'a [f64],
    h: f64,
    params: ModelParams,
    lambda: f64,
    c: f64,
    poisson: PoissonWorkspace,
    q: Vec<f64>,
    phi_w: Vec<f64>,
    scratch: Vec<f64>,
}

impl VariationalObjective<'_> {
    /// Residual charge `q = (u1+w)^2 - u1^2 - nu` and its integral.
    fn residual_charge(&mut self, w: &[f64]) -> f64 {
        let mut g = 0.0;
        for i in 0..w.len() {
            let q = w[i] * w[i] + 2.0 * self.u1[i] * w[i] - self.nu[i];
            self.q[i] = q;
            g += q;
        }
        g * self.h
    }

    /// Pure functional value (no multiplier/penalty terms).
    fn functional_value(&mut self, w: &[f64]) -> f64 {
        self.residual_charge(w);
        self.poisson
            .solve_into(&self.q, self.h, &mut self.phi_w, &mut self.scratch);
        let tf_c = 10.0 / 3.0;
        let dirac_c = 8.0 / 3.0;
        let mut acc = 0.0;
        for i in 0..w.len() {
            let a = self.u1[i];
            let b = a + w[i];
            acc += self.params.c_tf
                * (functional::abs_pow_10_3(b)
                    - functional::abs_pow_10_3(a)
                    - tf_c * functional::signed_pow_7_3(a) * w[i]);
            if self.params.c_d > 0.0 {
                acc -= self.params.c_d
                    * (functional::abs_pow_8_3(b)
                        - functional::abs_pow_8_3(a)
                        - dirac_c * functional::signed_pow_5_3(a) * w[i]);
            }
            acc += self.phi1_hat[i] * (w[i] * w[i] - self.nu[i]);
            acc += 0.5 * self.phi_w[i] * self.q[i];
        }
        self.params.c_w * functional::kinetic_quadrature(w, self.h) + acc * self.h
    }

    fn constraint(&mut self, w: &[f64]) -> f64 {
        self.residual_charge(w)
    }

    /// Stationarity residual `grad E + 2 lambda (u1 + w)`.
    fn stationarity_sup(&mut self, w: &[f64]) -> f64 {
        let mut buf = vec![0.0; w.len()];
        self.gradient_of_functional(w, &mut buf);
        for i in 0..w.len() {
            buf[i] += 2.0 * self.lambda * (self.u1[i] + w[i]);
        }
        grid::sup_norm(&buf)
    }

    fn gradient_of_functional(&mut self, w: &[f64], out: &mut [f64]) {
        self.residual_charge(w);
        self.poisson
            .solve_into(&self.q, self.h, &mut self.phi_w, &mut self.scratch);
        let tf_c = 10.0 / 3.0;
        let dirac_c = 8.0 / 3.0;
        for i in 0..w.len() {
            let a = self.u1[i];
            let b = a + w[i];
            let mut g = self.params.c_tf
                * tf_c
                * (functional::signed_pow_7_3(b) - functional::signed_pow_7_3(a));
            if self.params.c_d > 0.0 {
                g -= self.params.c_d
                    * dirac_c
                    * (functional::signed_pow_5_3(b) - functional::signed_pow_5_3(a));
            }
            g += 2.0 * self.phi1_hat[i] * w[i];
            g += 2.0 * self.phi_w[i] * b;
            out[i] = g;
        }
        functional::add_kinetic_gradient(w, self.h, self.params.c_w, out);
    }
}

impl solver::Objective for VariationalObjective<'_> {
    fn value(&mut self, w: &[f64]) -> f64 {
        let e = self.functional_value(w);
        let g = self.residual_charge(w);
        e + self.lambda * g + g * g / (2.0 * self.c)
    }

    fn gradient(&mut self, w: &[f64], out: &mut [f64]) {
        self.gradient_of_functional(w, out);
        let g = self.residual_charge(w);
        let mult = 2.0 * (self.lambda + g / self.c);
        for i in 0..w.len() {
            out[i] += mult * (self.u1[i] + w[i]);
        }
    }
}

/// Directly minimize the relative-energy functional over perturbations `w`
/// of the reference square-root density, subject to the charge constraint,
/// with the same augmented-Lagrangian machinery as the ground-state solver.
/// Returns the minimum value and the minimizer.
///
/// This is an independent computational route to the relative energy: it
/// shares only the grid and the Poisson solver with the difference-field
/// formula of [`relative_energy`].
pub fn variational_cross_check(
    reference: &SolveResult,
    nu: &NuclearDensity,
    params: &ModelParams,
    opts: &SolverOptions,
) -> Result<(f64, Field)> {
    if !reference.converged {
        return Err(Error::NotConverged(
            "variational cross-check needs a converged reference state".into(),
        ));
    }
    opts.validate()?;
    grid::check_same_grid(&reference.state.u, nu.field())?;

    let gridref = reference.state.u.grid().clone();
    let n = gridref.num_points();
    let h = gridref.spacing();

    let phi1 = reference.state.phi.values();
    let mean1 = phi1.iter().sum::<f64>() / n as f64;
    let phi1_hat: Vec<f64> = phi1
        .iter()
        .map(|&p| p - mean1 + reference.mu_final)
        .collect();

    let nu_scale = nu.values().iter().map(|v| v.abs()).sum::<f64>() * h;
    let mut obj = VariationalObjective {
        u1: reference.state.u.values(),
        phi1_hat,
        nu: nu.values(),
        h,
        params: *params,
        lambda: 0.0,
        c: 1.0,
        poisson: PoissonWorkspace::new(n),
        q: vec![0.0; n],
        phi_w: vec![0.0; n],
        scratch: vec![0.0; n],
    };

    let ctl = solver::DescentControl {
        max_steps: opts.max_inner,
        grad_tol: opts.inner_grad_tol,
        step_init: opts.step_init,
        armijo_c: opts.armijo_c,
        backtrack_factor: opts.backtrack_factor,
    };
    let kappa = 0.5;
    let c_min = 1e-6;

    let mut w = vec![0.0; n];
    let mut converged = false;
    for _ in 0..opts.max_outer {
        solver::armijo_descent(&mut obj, &mut w, h, &ctl, None)?;
        let g = obj.constraint(&w);
        obj.lambda += g / obj.c;
        obj.c = (kappa * obj.c).max(c_min);
        let rel_g = g.abs() / nu_scale.max(1.0);
        if rel_g <= opts.tol_constraint && obj.stationarity_sup(&w) <= opts.tol_residual {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NotConverged(format!(
            "variational minimization stopped with constraint residual {:.3e}",
            obj.constraint(&w).abs()
        )));
    }
    let value = obj.functional_value(&w);
    Ok((value, Field::new(gridref, w)?))
}

/// Assemble the full relative-energy report: gamma, the truncation table,
/// the neutrality defect, and the decay fits of both difference fields.
pub fn build_report(
    d: &DefectFields,
    params: &ModelParams,
    truncation_ks: &[f64],
    boundary_buffer: Option<f64>,
    variational_value: Option<f64>,
) -> Result<RelativeEnergyReport> {
    let l0 = d.defect_width();
    for pair in truncation_ks.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::InvalidInput(
                "truncation K values must be strictly increasing".into(),
            ));
        }
    }
    if let Some(&k) = truncation_ks.first() {
        if k <= l0 {
            return Err(Error::InvalidInput(format!(
                "truncation K values must exceed the defect width L0 = {l0}"
            )));
        }
    }
    let gamma = relative_energy(d, params)?;
    let truncated = truncation_ks
        .iter()
        .map(|&k| {
            truncated_relative_energy(d, params, k).map(|gamma| TruncatedGamma { k, gamma })
        })
        .collect::<Result<Vec<_>>>()?;
    // Default buffer: 10% of the box length, keeping the periodic image of
    // the defect out of the fitted tail.
    let buffer = boundary_buffer.unwrap_or(0.2 * d.v.grid().half_width());
    let core = d.perturbation.defect_half_width();
    Ok(RelativeEnergyReport {
        gamma,
        truncated,
        neutrality_defect: check_charge_neutrality(d),
        decay_u: fit_decay(&d.v, core, buffer)?,
        decay_phi: fit_decay(&d.phi_d, core, buffer)?,
        variational_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid1D;
    use crate::nuclear;

    #[test]
    fn synthetic_exponential_is_recovered_within_one_percent() {
        let g = Grid1D::shared(10.0, 2048).unwrap();
        let f = Field::from_fn(g, |z| 3.0 * (-2.0 * z.abs()).exp()).unwrap();
        let fit = fit_decay(&f, 0.0, 1.0).unwrap();
        assert!((fit.k1 - 3.0).abs() <= 0.03, "k1 = {}", fit.k1);
        assert!((fit.k2 - 2.0).abs() <= 0.02, "k2 = {}", fit.k2);
        assert!(fit.correlation >= 0.999);
    }

    #[test]
    fn lorentzian_control_is_distinguished_from_exponential() {
        let g = Grid1D::shared(20.0, 2048).unwrap();
        let f = Field::from_fn(g, |z| 1.0 / (1.0 + z * z)).unwrap();
        let fit = fit_decay(&f, 0.0, 2.0).unwrap();
        assert!(
            fit.correlation < 0.97,
            "lorentzian tail looked exponential: R^2 = {}",
            fit.correlation
        );
    }

    #[test]
    fn decay_fit_window_preconditions() {
        let g = Grid1D::shared(5.0, 64).unwrap();
        let f = Field::from_fn(g.clone(), |z| (-z.abs()).exp()).unwrap();
        assert!(fit_decay(&f, 4.9, 0.2).is_err()); // empty window
        let tiny = Field::constant(g, 1e-15).unwrap();
        assert!(fit_decay(&tiny, 0.0, 0.5).is_err()); // all below noise floor
    }

    #[test]
    fn zero_perturbation_gives_exactly_zero() {
        let g = Grid1D::shared(5.0, 128).unwrap();
        let m = nuclear::jellium(g.clone(), 1.0).unwrap();
        let params = ModelParams::tfw();
        let opts = SolverOptions::default();
        let a = crate::solver::staggered_solve(&m, &params, &opts, None).unwrap();
        let b = crate::solver::staggered_solve(&m, &params, &opts, None).unwrap();
        let nu = nuclear::uniform_bump(g, 0.0, 0.1, 0.0).unwrap();
        let d = DefectFields::new(&a, &b, &nu).unwrap();
        assert_eq!(relative_energy(&d, &params).unwrap(), 0.0);
        assert_eq!(check_charge_neutrality(&d), 0.0);
        // Full-box truncation is the identity.
        let full = truncated_relative_energy(&d, &params, 10.0).unwrap();
        assert_eq!(full, 0.0);
        // K below the defect width is rejected.
        assert!(truncated_relative_energy(&d, &params, 0.05).is_err());
        assert!(truncated_relative_energy(&d, &params, 11.0).is_err());
    }

    #[test]
    fn variational_with_zero_perturbation_stays_at_zero() {
        let g = Grid1D::shared(5.0, 128).unwrap();
        let m = nuclear::jellium(g.clone(), 1.0).unwrap();
        let params = ModelParams::tfw();
        let opts = SolverOptions::default();
        let reference = crate::solver::staggered_solve(&m, &params, &opts, None).unwrap();
        let nu = nuclear::uniform_bump(g, 0.0, 0.1, 0.0).unwrap();
        let (value, w) = variational_cross_check(&reference, &nu, &params, &opts).unwrap();
        assert!(value.abs() <= 1e-10, "value {value}");
        assert!(w.sup_norm() <= 1e-6, "w sup {}", w.sup_norm());
    }
}
