//! Deterministic direct solver for the periodic 1D Poisson problem
//!
//! ```text
//!     -phi'' = 4 pi (rhs - mean(rhs)),      integral(phi) = 0.
//! ```
//!
//! The second derivative is the compact central stencil of [`crate::grid`],
//! so the discrete system is the circulant tridiagonal-with-corners matrix.
//! The periodic problem is solvable only for zero-mean sources, hence the
//! mean of `rhs` is subtracted first and reported alongside the solution;
//! the zero-integral gauge mirrors the supercell potential normalization.
//!
//! Pinning `phi[N-1] = 0` and dropping the (redundant) last row turns the
//! corner system into a plain tridiagonal one: both wraparound entries
//! multiply the pinned unknown. One Thomas sweep then solves it exactly, and
//! the zero-mean representative is recovered by a constant shift. The
//! elimination coefficients depend only on `N` and are cached; a cached
//! workspace is read-only during solves and safe to share across threads.

use crate::grid::{self, Field};

/// Output of [`solve_periodic_poisson`].
#[derive(Debug, Clone)]
pub struct PoissonSolution {
    /// Potential with zero-mean gauge.
    pub phi: Field,
    /// Mean of the source that was subtracted to make the periodic problem
    /// solvable. Tends to zero as the charge constraint is satisfied.
    pub source_mean: f64,
}

/// Cached Thomas-elimination coefficients for grids with `n` points.
#[derive(Debug, Clone)]
pub struct PoissonWorkspace {
    n: usize,
    /// `inv_denom[i] = 1 / (-2 - c'_{i-1})` for the tridiag(1, -2, 1) system
    /// of size `n - 1`.
    inv_denom: Vec<f64>,
}

impl PoissonWorkspace {
    pub fn new(n: usize) -> PoissonWorkspace {
        let m = n - 1;
        let mut inv_denom = Vec::with_capacity(m);
        let mut c_prev = 0.0;
        for _ in 0..m {
            let inv = 1.0 / (-2.0 - c_prev);
            inv_denom.push(inv);
            c_prev = inv; // c'_i = 1 * inv
        }
        PoissonWorkspace { n, inv_denom }
    }

    /// Solve in place: `phi` receives the zero-mean potential; the return
    /// value is the subtracted source mean. `scratch` must have length `n`.
    pub fn solve_into(&self, rhs: &[f64], h: f64, phi: &mut [f64], scratch: &mut [f64]) -> f64 {
        let n = self.n;
        assert_eq!(rhs.len(), n);
        assert_eq!(phi.len(), n);
        assert_eq!(scratch.len(), n);

        let source_mean = rhs.iter().sum::<f64>() / n as f64;

        // Right-hand side of the pinned tridiagonal system: T phi = h^2 * g,
        // g = -4 pi (rhs - mean).
        let h2 = h * h;
        for i in 0..n - 1 {
            scratch[i] = -4.0 * std::f64::consts::PI * (rhs[i] - source_mean) * h2;
        }

        // Forward sweep of the Thomas algorithm with cached pivots.
        let m = n - 1;
        scratch[0] *= self.inv_denom[0];
        for i in 1..m {
            scratch[i] = (scratch[i] - scratch[i - 1]) * self.inv_denom[i];
        }
        // Back substitution; the pinned sample closes the periodic wrap.
        phi[n - 1] = 0.0;
        phi[m - 1] = scratch[m - 1];
        for i in (0..m - 1).rev() {
            phi[i] = scratch[i] - self.inv_denom[i] * phi[i + 1];
        }

        // Shift to the zero-mean representative.
        let phi_mean = phi.iter().sum::<f64>() / n as f64;
        for v in phi.iter_mut() {
            *v -= phi_mean;
        }
        source_mean
    }
}

/// Solve `-phi'' = 4 pi (rhs - mean(rhs))` with zero-mean gauge.
pub fn solve_periodic_poisson(rhs: &Field) -> PoissonSolution {
    let n = rhs.len();
    let ws = PoissonWorkspace::new(n);
    let mut phi = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let source_mean = ws.solve_into(rhs.values(), rhs.grid().spacing(), &mut phi, &mut scratch);
    PoissonSolution {
        // Solver output of finite inputs is finite; reuse the validated path anyway.
        phi: Field::new(rhs.grid().clone(), phi).expect("poisson solution is finite"),
        source_mean,
    }
}
