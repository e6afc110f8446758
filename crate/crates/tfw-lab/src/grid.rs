//! Periodic 1D computational domain, trapezoid quadrature, and
//! finite-difference stencils shared by every other module.
//!
//! The domain is `[-L, L)` sampled at `N` uniformly spaced points
//! `z_i = -L + i*h`, `h = 2L/N`, with periodic identification `z_N == z_0`.
//! On a periodic grid the trapezoid rule reduces to the plain Riemann sum
//! `h * sum_i f_i`, which is what [`integrate`] computes.

use std::sync::Arc;

use crate::{Error, Result};

/// Shared handle to an immutable grid.
pub type GridRef = Arc<Grid1D>;

/// Uniform periodic mesh on `[-L, L)`.
#[derive(Debug, Clone)]
pub struct Grid1D {
    half_width: f64,
    num_points: usize,
    spacing: f64,
    coordinates: Vec<f64>,
}

impl Grid1D {
    /// Build a grid with half-width `L` and `N` sample points.
    ///
    /// `N` must be even and at least 8 so that mesh-halving convergence
    /// studies nest.
    pub fn new(half_width: f64, num_points: usize) -> Result<Grid1D> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidInput(format!(
                "grid half_width must be positive and finite, got {half_width}"
            )));
        }
        if num_points < 8 || num_points % 2 != 0 {
            return Err(Error::InvalidInput(format!(
                "grid num_points must be even and >= 8, got {num_points}"
            )));
        }
        let spacing = 2.0 * half_width / num_points as f64;
        let coordinates = (0..num_points)
            .map(|i| -half_width + i as f64 * spacing)
            .collect();
        Ok(Grid1D {
            half_width,
            num_points,
            spacing,
            coordinates,
        })
    }

    /// Like [`Grid1D::new`] but wrapped in a shared handle.
    pub fn shared(half_width: f64, num_points: usize) -> Result<GridRef> {
        Ok(Arc::new(Grid1D::new(half_width, num_points)?))
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn coordinates(&self) -> &[f64] {
        &self.coordinates
    }

    /// Domain length `2L`.
    pub fn length(&self) -> f64 {
        2.0 * self.half_width
    }
}

impl PartialEq for Grid1D {
    fn eq(&self, other: &Self) -> bool {
        self.half_width == other.half_width && self.num_points == other.num_points
    }
}

/// Real-valued samples on a [`Grid1D`]. Immutable once built; all samples
/// are finite by construction.
#[derive(Debug, Clone)]
pub struct Field {
    grid: GridRef,
    values: Vec<f64>,
}

impl Field {
    /// Wrap raw samples, checking length and finiteness. A non-finite sample
    /// is reported with its index.
    pub fn new(grid: GridRef, values: Vec<f64>) -> Result<Field> {
        if values.len() != grid.num_points() {
            return Err(Error::InvalidInput(format!(
                "field has {} samples but grid has {} points",
                values.len(),
                grid.num_points()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                index,
                context: Some("field construction".into()),
            });
        }
        Ok(Field { grid, values })
    }

    /// Sample a function at the grid coordinates.
    pub fn from_fn(grid: GridRef, f: impl Fn(f64) -> f64) -> Result<Field> {
        let values = grid.coordinates().iter().map(|&z| f(z)).collect();
        Field::new(grid, values)
    }

    pub fn constant(grid: GridRef, value: f64) -> Result<Field> {
        let n = grid.num_points();
        Field::new(grid, vec![value; n])
    }

    pub fn zeros(grid: GridRef) -> Field {
        let n = grid.num_points();
        Field {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn grid(&self) -> &GridRef {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sup_norm(&self) -> f64 {
        sup_norm(&self.values)
    }

    /// Pointwise `a*self + b*other`. Both fields must share the grid.
    pub fn linear_combination(&self, a: f64, b: f64, other: &Field) -> Result<Field> {
        check_same_grid(self, other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&x, &y)| a * x + b * y)
            .collect();
        Field::new(self.grid.clone(), values)
    }
}

pub(crate) fn check_same_grid(a: &Field, b: &Field) -> Result<()> {
    if a.grid.as_ref() == b.grid.as_ref() {
        Ok(())
    } else {
        Err(Error::GridMismatch(format!(
            "L={} N={} vs L={} N={}",
            a.grid.half_width(),
            a.grid.num_points(),
            b.grid.half_width(),
            b.grid.num_points()
        )))
    }
}

pub(crate) fn sup_norm(values: &[f64]) -> f64 {
    values.iter().fold(0.0_f64, |m, &v| m.max(v.abs()))
}

/// Periodic trapezoid rule `h * sum_i f_i`. Exact for constants and for
/// full-period trigonometric modes.
pub fn integrate(f: &Field) -> f64 {
    trapezoid(f.values(), f.grid().spacing())
}

pub(crate) fn trapezoid(values: &[f64], h: f64) -> f64 {
    h * values.iter().sum::<f64>()
}

/// Second-order central stencil `(f_{i-1} - 2 f_i + f_{i+1}) / h^2` with
/// periodic wraparound.
pub fn second_derivative(f: &Field) -> Field {
    let mut out = vec![0.0; f.len()];
    second_derivative_into(f.values(), f.grid().spacing(), &mut out);
    Field {
        grid: f.grid().clone(),
        values: out,
    }
}

pub(crate) fn second_derivative_into(values: &[f64], h: f64, out: &mut [f64]) {
    let n = values.len();
    let inv_h2 = 1.0 / (h * h);
    for i in 0..n {
        let prev = values[if i == 0 { n - 1 } else { i - 1 }];
        let next = values[if i + 1 == n { 0 } else { i + 1 }];
        out[i] = (prev - 2.0 * values[i] + next) * inv_h2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    /// Composite Simpson rule on an oversampled copy of the integrand;
    /// independent of the trapezoid path.
    fn simpson_oracle(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
        let n = 2 * panels;
        let h = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(a + i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn grid_rejects_bad_parameters() {
        assert!(Grid1D::new(0.0, 64).is_err());
        assert!(Grid1D::new(-1.0, 64).is_err());
        assert!(Grid1D::new(5.0, 7).is_err());
        assert!(Grid1D::new(5.0, 9).is_err());
        assert!(Grid1D::new(5.0, 64).is_ok());
    }

    #[test]
    fn grid_spacing_is_uniform() {
        let g = Grid1D::new(10.0, 1000).unwrap();
        assert_eq!(g.spacing(), 0.02);
        let z = g.coordinates();
        assert_eq!(z[0], -10.0);
        for i in 0..z.len() - 1 {
            let dz = z[i + 1] - z[i];
            assert!((dz - g.spacing()).abs() <= 4.0 * f64::EPSILON * g.half_width());
        }
    }

    #[test]
    fn field_requires_matching_length_and_finite_samples() {
        let g = Grid1D::shared(5.0, 16).unwrap();
        assert!(Field::new(g.clone(), vec![0.0; 8]).is_err());
        let mut v = vec![1.0; 16];
        v[11] = f64::NAN;
        match Field::new(g, v) {
            Err(Error::NonFinite { index, .. }) => assert_eq!(index, 11),
            other => panic!("expected NonFinite error, got {other:?}"),
        }
    }

    #[test]
    fn integrate_constant_is_exact() {
        let g = Grid1D::shared(5.0, 64).unwrap();
        let f = Field::constant(g, 1.0).unwrap();
        assert_eq!(integrate(&f), 10.0);
    }

    #[test]
    fn integrate_full_period_sinusoid_vanishes() {
        let g = Grid1D::shared(5.0, 64).unwrap();
        let f = Field::from_fn(g, |z| (2.0 * PI * z / 10.0).sin()).unwrap();
        assert!(integrate(&f).abs() < 1e-12);
    }

    #[test]
    fn integrate_gaussian_matches_quadrature_oracle() {
        let g = Grid1D::shared(8.0, 512).unwrap();
        let f = Field::from_fn(g, |z| (-z * z).exp()).unwrap();
        let oracle = simpson_oracle(|z| (-z * z).exp(), -8.0, 8.0, 4096);
        assert!((oracle - PI.sqrt()).abs() < 1e-12);
        assert!((integrate(&f) - oracle).abs() < 1e-10);
    }

    #[test]
    fn second_derivative_of_constant_is_zero() {
        let g = Grid1D::shared(5.0, 32).unwrap();
        let f = Field::constant(g, 3.7).unwrap();
        for &v in second_derivative(&f).values() {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn second_derivative_impulse_stencil_row() {
        let g = Grid1D::shared(5.0, 16).unwrap();
        let h = g.spacing();
        let mut v = vec![0.0; 16];
        v[0] = 1.0 / h;
        let f = Field::new(g, v).unwrap();
        let d = second_derivative(&f);
        let h3 = h * h * h;
        let tol = 1e-12 / h3;
        assert!((d.values()[15] - 1.0 / h3).abs() <= tol);
        assert!((d.values()[0] + 2.0 / h3).abs() <= tol);
        assert!((d.values()[1] - 1.0 / h3).abs() <= tol);
        for i in 2..15 {
            assert_eq!(d.values()[i], 0.0);
        }
    }

    #[test]
    fn second_derivative_converges_at_order_two() {
        let half_width = 5.0;
        let k = 2.0 * PI / (2.0 * half_width);
        let max_err = |n: usize| {
            let g = Grid1D::shared(half_width, n).unwrap();
            let f = Field::from_fn(g.clone(), |z| (k * z).sin()).unwrap();
            let d = second_derivative(&f);
            g.coordinates()
                .iter()
                .zip(d.values())
                .map(|(&z, &dv)| (dv + k * k * (k * z).sin()).abs())
                .fold(0.0_f64, f64::max)
        };
        let errs: Vec<f64> = [64usize, 128, 256, 512].iter().map(|&n| max_err(n)).collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(
                (order - 2.0).abs() <= 0.1,
                "observed order {order}, errors {errs:?}"
            );
        }
    }

    proptest! {
        /// Telescoping: the periodic stencil sums to zero, so its integral
        /// vanishes for every field.
        #[test]
        fn integral_of_second_derivative_vanishes(values in prop::collection::vec(-100.0f64..100.0, 32)) {
            let g = Grid1D::shared(4.0, 32).unwrap();
            let h = g.spacing();
            let f = Field::new(g, values).unwrap();
            let tol = 1e-12 * f.sup_norm().max(1.0) / (h * h);
            prop_assert!(integrate(&second_derivative(&f)).abs() <= tol);
        }

        /// Linearity of the quadrature.
        #[test]
        fn integrate_is_linear(
            a in -10.0f64..10.0,
            b in -10.0f64..10.0,
            xs in prop::collection::vec(-50.0f64..50.0, 16),
            ys in prop::collection::vec(-50.0f64..50.0, 16),
        ) {
            let g = Grid1D::shared(2.0, 16).unwrap();
            let fx = Field::new(g.clone(), xs).unwrap();
            let fy = Field::new(g.clone(), ys).unwrap();
            let combo = fx.linear_combination(a, b, &fy).unwrap();
            let lhs = integrate(&combo);
            let rhs = a * integrate(&fx) + b * integrate(&fy);
            let scale = lhs.abs().max(rhs.abs()).max(1.0);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
        }
    }
}
