//! Staggered augmented-Lagrangian solver for the TFW/TFWD ground state.
//!
//! One outer iteration performs, in order:
//! 1. inner minimization of the augmented Lagrangian over `u` at frozen
//!    potential (plain gradient descent with Armijo backtracking),
//! 2. multiplier update `mu <- mu + Q / c` with `Q = integral (u^2 - m)`,
//! 3. penalty shrink `c <- max(kappa c, c_min)`,
//! 4. re-solve of the periodic Poisson problem for the potential.
//!
//! The loop stops when both the relative charge-constraint violation and the
//! sup-norm of the Euler-Lagrange residual (multiplier absorbed) are below
//! tolerance; the convergence test runs after the Poisson update so the
//! staggered fixed point is explicit. Identical inputs and seed produce
//! bit-identical results: the solver is sequential and allocation order is
//! fixed.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::functional::{self, AlmState, FieldState, ModelParams};
use crate::grid::{self, Field};
use crate::nuclear::NuclearDensity;
use crate::poisson::PoissonWorkspace;
use crate::{Error, Result};

/// Tolerances and budgets of the staggered solve.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Bound on `|integral(u^2 - m)|` relative to the total charge.
    pub tol_constraint: f64,
    /// Bound on the sup-norm of the Euler-Lagrange residual.
    pub tol_residual: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Inner gradient-descent stop: sup-norm of the Lagrangian gradient.
    pub inner_grad_tol: f64,
    /// Initial (and maximal) trial step of the backtracking line search.
    pub step_init: f64,
    /// Armijo sufficient-decrease fraction, in (0, 1).
    pub armijo_c: f64,
    /// Step shrink factor of the backtracking line search, in (0, 1).
    pub backtrack_factor: f64,
    /// Seed for randomized initial guesses (uniqueness probes).
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol_constraint: 1e-8,
            tol_residual: 1e-6,
            max_outer: 500,
            max_inner: 50_000,
            inner_grad_tol: 1e-7,
            step_init: 1.0,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            seed: 0,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tol_constraint", self.tol_constraint),
            ("tol_residual", self.tol_residual),
            ("inner_grad_tol", self.inner_grad_tol),
            ("step_init", self.step_init),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "solver option {name} must be positive, got {v}"
                )));
            }
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::InvalidInput(
                "solver iteration budgets must be at least 1".into(),
            ));
        }
        for (name, v) in [
            ("armijo_c", self.armijo_c),
            ("backtrack_factor", self.backtrack_factor),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidInput(format!(
                    "solver option {name} must lie in (0, 1), got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// One outer iteration of the staggered loop, as written to the trace CSV.
#[derive(Debug, Clone, Copy)]
pub struct TraceRecord {
    pub outer_iter: usize,
    /// Physical energy (with the Coulomb 1/2) at the current state.
    pub energy: f64,
    /// Charge defect `Q = integral (u^2 - m)` before the multiplier update.
    pub charge_defect: f64,
    /// Multiplier after the update of this iteration.
    pub mu: f64,
    /// Penalty parameter after the shrink of this iteration.
    pub c: f64,
    pub inner_steps: usize,
    pub el_residual: f64,
}

/// Converged (or final) state of a staggered solve.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub state: FieldState,
    pub mu_final: f64,
    pub energy: f64,
    pub outer_iterations: usize,
    /// `|integral(u^2 - m)|` relative to the total charge.
    pub constraint_violation: f64,
    /// Sup-norm of the Euler-Lagrange residual with the multiplier absorbed.
    pub el_residual: f64,
    pub converged: bool,
    pub trace: Vec<TraceRecord>,
}

// ---------------------------------------------------------------------------
// Inner descent engine
// ---------------------------------------------------------------------------

pub(crate) trait Objective {
    fn value(&mut self, x: &[f64]) -> f64;
    fn gradient(&mut self, x: &[f64], out: &mut [f64]);
}

pub(crate) struct DescentControl {
    pub max_steps: usize,
    pub grad_tol: f64,
    pub step_init: f64,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
}

impl DescentControl {
    fn from_options(opts: &SolverOptions) -> DescentControl {
        DescentControl {
            max_steps: opts.max_inner,
            grad_tol: opts.inner_grad_tol,
            step_init: opts.step_init,
            armijo_c: opts.armijo_c,
            backtrack_factor: opts.backtrack_factor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum StopReason {
    GradientTol,
    MaxSteps,
    /// The line search could not resolve further decrease; the gradient was
    /// already near the requested tolerance.
    Stalled,
}

pub(crate) struct DescentOutcome {
    pub steps: usize,
    pub value: f64,
    pub grad_sup: f64,
    #[allow(dead_code)]
    pub reason: StopReason,
}

/// Gradient descent with warm-started Armijo backtracking. The accepted
/// value sequence is non-increasing by construction. `value_trace`, when
/// given, receives the objective value at the start and after every accepted
/// step.
pub(crate) fn armijo_descent(
    obj: &mut dyn Objective,
    x: &mut [f64],
    h: f64,
    ctl: &DescentControl,
    mut value_trace: Option<&mut Vec<f64>>,
) -> Result<DescentOutcome> {
    let n = x.len();
    let mut grad = vec![0.0; n];
    let mut candidate = vec![0.0; n];

    let mut value = obj.value(x);
    obj.gradient(x, &mut grad);
    if let Some(tr) = value_trace.as_deref_mut() {
        tr.push(value);
    }

    let step_floor_factor = 1e-16;
    let mut t = ctl.step_init;
    let mut steps = 0;
    let mut grad_sup = grid::sup_norm(&grad);

    while steps < ctl.max_steps {
        if grad_sup <= ctl.grad_tol {
            return Ok(DescentOutcome {
                steps,
                value,
                grad_sup,
                reason: StopReason::GradientTol,
            });
        }
        let gg = h * grad.iter().map(|g| g * g).sum::<f64>();

        // Warm start: grow the trial step once per iteration, capped at the
        // configured initial step.
        t = (t / ctl.backtrack_factor).min(ctl.step_init);
        loop {
            for i in 0..n {
                candidate[i] = x[i] - t * grad[i];
            }
            let cand_value = obj.value(&candidate);
            // Near the resolution floor the decrement underflows the ulp of
            // the value and the test degrades to plain non-increase, which is
            // exactly the acceptable behavior.
            if cand_value <= value - ctl.armijo_c * t * gg {
                x.copy_from_slice(&candidate);
                value = cand_value;
                break;
            }
            t *= ctl.backtrack_factor;
            if t < step_floor_factor * ctl.step_init {
                if grad_sup <= 1e3 * ctl.grad_tol {
                    // No resolvable decrease left; the iterate is converged
                    // to rounding for every practical purpose.
                    return Ok(DescentOutcome {
                        steps,
                        value,
                        grad_sup,
                        reason: StopReason::Stalled,
                    });
                }
                return Err(Error::LineSearchStall {
                    step: t,
                    grad_sup,
                    inner_steps: steps,
                });
            }
        }
        steps += 1;
        if let Some(tr) = value_trace.as_deref_mut() {
            tr.push(value);
        }
        obj.gradient(x, &mut grad);
        grad_sup = grid::sup_norm(&grad);
    }

    Ok(DescentOutcome {
        steps,
        value,
        grad_sup,
        reason: if grad_sup <= ctl.grad_tol {
            StopReason::GradientTol
        } else {
            StopReason::MaxSteps
        },
    })
}

/// Augmented Lagrangian at frozen potential, as a descent objective.
struct FrozenPhiObjective<'a> {
    m: &'a [f64],
    phi: &'a [f64],
    h: f64,
    alm: AlmState,
    params: ModelParams,
}

impl Objective for FrozenPhiObjective<'_> {
    fn value(&mut self, x: &[f64]) -> f64 {
        functional::al_value(x, self.m, self.phi, self.h, &self.alm, &self.params)
    }

    fn gradient(&mut self, x: &[f64], out: &mut [f64]) {
        functional::al_gradient(x, self.m, self.phi, self.h, &self.alm, &self.params, out);
    }
}

/// Inner minimization `u = argmin L(u, mu, c)` at frozen potential.
pub fn minimize_u(
    u0: &Field,
    m: &NuclearDensity,
    phi: &Field,
    alm: &AlmState,
    params: &ModelParams,
    opts: &SolverOptions,
) -> Result<Field> {
    Ok(minimize_u_traced(u0, m, phi, alm, params, opts)?.u)
}

/// [`minimize_u`] with the accepted objective values exposed, for
/// monotonicity checks.
pub fn minimize_u_traced(
    u0: &Field,
    m: &NuclearDensity,
    phi: &Field,
    alm: &AlmState,
    params: &ModelParams,
    opts: &SolverOptions,
) -> Result<InnerRun> {
    grid::check_same_grid(u0, m.field())?;
    grid::check_same_grid(u0, phi)?;
    opts.validate()?;
    let mut obj = FrozenPhiObjective {
        m: m.values(),
        phi: phi.values(),
        h: u0.grid().spacing(),
        alm: *alm,
        params: *params,
    };
    let mut x = u0.values().to_vec();
    let mut values = Vec::new();
    let outcome = armijo_descent(
        &mut obj,
        &mut x,
        u0.grid().spacing(),
        &DescentControl::from_options(opts),
        Some(&mut values),
    )?;
    Ok(InnerRun {
        u: Field::new(u0.grid().clone(), x)?,
        values,
        steps: outcome.steps,
        grad_sup: outcome.grad_sup,
    })
}

/// Result of one inner minimization, with the accepted-value history.
#[derive(Debug, Clone)]
pub struct InnerRun {
    pub u: Field,
    /// Objective value at the start and after every accepted step;
    /// non-increasing by construction.
    pub values: Vec<f64>,
    pub steps: usize,
    pub grad_sup: f64,
}

// ---------------------------------------------------------------------------
// Outer staggered loop
// ---------------------------------------------------------------------------

/// Staggered solve with the standard initial multiplier state
/// (`mu = 0`, `c = 1`, `kappa = 1/2`).
pub fn staggered_solve(
    m: &NuclearDensity,
    params: &ModelParams,
    opts: &SolverOptions,
    init: Option<FieldState>,
) -> Result<SolveResult> {
    staggered_solve_with(m, params, opts, AlmState::default(), init)
}

/// Staggered solve with explicit initial multiplier/penalty state.
pub fn staggered_solve_with(
    m: &NuclearDensity,
    params: &ModelParams,
    opts: &SolverOptions,
    alm0: AlmState,
    init: Option<FieldState>,
) -> Result<SolveResult> {
    opts.validate()?;
    if !m.is_nonnegative() {
        return Err(Error::InvalidInput(
            "nuclear density must be nonnegative to solve for a ground state".into(),
        ));
    }
    let total_charge = m.total_charge();
    if !(total_charge > 0.0) {
        return Err(Error::InvalidInput(format!(
            "nuclear density must carry positive total charge, got {total_charge}"
        )));
    }

    let gridref = m.grid().clone();
    let n = gridref.num_points();
    let h = gridref.spacing();

    let (mut u, mut phi) = match init {
        Some(state) => {
            grid::check_same_grid(&state.u, m.field())?;
            (state.u.values().to_vec(), state.phi.values().to_vec())
        }
        None => {
            // Charge-consistent uniform start: u0 = sqrt(mean density).
            let mean = total_charge / gridref.length();
            (vec![mean.sqrt(); n], vec![0.0; n])
        }
    };

    let mut alm = alm0;
    let poisson_ws = PoissonWorkspace::new(n);
    let mut scratch = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut residual_buf = vec![0.0; n];
    let mut trace = Vec::new();

    let ctl = DescentControl::from_options(opts);
    let mut converged = false;
    let mut constraint_violation = f64::INFINITY;
    let mut el_residual_sup = f64::INFINITY;
    let mut outer = 0;

    while outer < opts.max_outer {
        let mut obj = FrozenPhiObjective {
            m: m.values(),
            phi: &phi,
            h,
            alm,
            params: *params,
        };
        let inner = armijo_descent(&mut obj, &mut u, h, &ctl, None)?;

        let q = functional::charge_defect(&u, m.values(), h);
        alm.mu += q / alm.c;
        alm.shrink_penalty();

        for i in 0..n {
            rhs[i] = u[i] * u[i] - m.values()[i];
        }
        poisson_ws.solve_into(&rhs, h, &mut phi, &mut scratch);

        functional::el_residual(&u, &phi, alm.mu, h, params, &mut residual_buf);
        el_residual_sup = grid::sup_norm(&residual_buf);
        constraint_violation = q.abs() / total_charge;

        let energy = physical_energy(&u, m.values(), &phi, h, params);
        trace.push(TraceRecord {
            outer_iter: outer,
            energy,
            charge_defect: q,
            mu: alm.mu,
            c: alm.c,
            inner_steps: inner.steps,
            el_residual: el_residual_sup,
        });

        outer += 1;
        if constraint_violation <= opts.tol_constraint && el_residual_sup <= opts.tol_residual {
            converged = true;
            break;
        }
    }

    // Report the +u representative of the (u, -u) pair.
    if u.iter().sum::<f64>() < 0.0 {
        for v in u.iter_mut() {
            *v = -*v;
        }
    }

    let energy = physical_energy(&u, m.values(), &phi, h, params);
    let state = FieldState::new(
        Field::new(gridref.clone(), u)?,
        Field::new(gridref, phi)?,
    )?;
    Ok(SolveResult {
        state,
        mu_final: alm.mu,
        energy,
        outer_iterations: outer,
        constraint_violation,
        el_residual: el_residual_sup,
        converged,
        trace,
    })
}

/// Physical energy evaluated with an already-available potential of the net
/// charge (avoids a redundant Poisson solve in the outer loop).
fn physical_energy(u: &[f64], m: &[f64], phi: &[f64], h: f64, params: &ModelParams) -> f64 {
    let mut tf = 0.0;
    let mut dirac = 0.0;
    let mut coulomb = 0.0;
    for i in 0..u.len() {
        let ui = u[i];
        tf += functional::abs_pow_10_3(ui);
        if params.c_d > 0.0 {
            dirac += functional::abs_pow_8_3(ui);
        }
        coulomb += (ui * ui - m[i]) * phi[i];
    }
    params.c_w * functional::kinetic_quadrature(u, h) + params.c_tf * tf * h
        - params.c_d * dirac * h
        + 0.5 * coulomb * h
}

/// Sup-norm of the Euler-Lagrange residual of a reported state.
pub fn el_residual_sup(state: &FieldState, mu: f64, params: &ModelParams) -> f64 {
    let mut buf = vec![0.0; state.u.len()];
    functional::el_residual(
        state.u.values(),
        state.phi.values(),
        mu,
        state.u.grid().spacing(),
        params,
        &mut buf,
    );
    grid::sup_norm(&buf)
}

/// Solve from `trials` randomized positive initial guesses and return the
/// largest pairwise sup-distance of `|u|`. For the (convex) TFW model the
/// spread bounds the uniqueness defect; for TFWD it is reported, not
/// asserted.
pub fn uniqueness_probe(
    m: &NuclearDensity,
    params: &ModelParams,
    opts: &SolverOptions,
    trials: usize,
) -> Result<f64> {
    if trials < 2 {
        return Err(Error::InvalidInput(format!(
            "uniqueness probe needs at least 2 trials, got {trials}"
        )));
    }
    let gridref = m.grid().clone();
    let mean = (m.total_charge() / gridref.length()).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut solutions: Vec<Vec<f64>> = Vec::with_capacity(trials);
    for trial in 0..trials {
        let u0: Vec<f64> = (0..gridref.num_points())
            .map(|_| mean * rng.gen_range(0.25..1.75))
            .collect();
        let init = FieldState::new(
            Field::new(gridref.clone(), u0)?,
            Field::zeros(gridref.clone()),
        )?;
        let result = staggered_solve(m, params, opts, Some(init))?;
        if !result.converged {
            return Err(Error::NotConverged(format!(
                "uniqueness trial {trial} stopped at constraint violation {:.3e}, \
                 EL residual {:.3e}",
                result.constraint_violation, result.el_residual
            )));
        }
        solutions.push(result.state.u.values().to_vec());
    }
    let mut spread = 0.0_f64;
    for a in 0..solutions.len() {
        for b in a + 1..solutions.len() {
            let d = solutions[a]
                .iter()
                .zip(&solutions[b])
                .map(|(&x, &y)| (x.abs() - y.abs()).abs())
                .fold(0.0_f64, f64::max);
            spread = spread.max(d);
        }
    }
    Ok(spread)
}
