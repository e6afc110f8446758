//! Nuclear charge densities: the reference crystals and the slab-confined
//! perturbations applied to them.
//!
//! A perturbation carries a `defect_half_width` marking the support of the
//! nuclear change along `z`; the analysis module excludes that core region
//! when fitting the decay of the electronic response. Reference densities
//! (jellium, mollified Dirac comb) are nonnegative; perturbations may be
//! negative pointwise as long as the superposed total stays nonnegative.

use crate::grid::{integrate, Field, GridRef};
use crate::{Error, Result};

/// Sampled nuclear charge density plus defect-support metadata.
#[derive(Debug, Clone)]
pub struct NuclearDensity {
    field: Field,
    /// Half-width of the slab containing the nuclear perturbation
    /// (`L0 / 2`); zero for perfect crystals.
    defect_half_width: f64,
    total_charge: f64,
}

impl NuclearDensity {
    fn from_field(field: Field, defect_half_width: f64) -> NuclearDensity {
        let total_charge = integrate(&field);
        NuclearDensity {
            field,
            defect_half_width,
            total_charge,
        }
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn grid(&self) -> &GridRef {
        self.field.grid()
    }

    pub fn values(&self) -> &[f64] {
        self.field.values()
    }

    pub fn defect_half_width(&self) -> f64 {
        self.defect_half_width
    }

    /// Equals `integrate(field)` by construction.
    pub fn total_charge(&self) -> f64 {
        self.total_charge
    }

    /// True if every sample is nonnegative (required of densities that are
    /// solved for, as opposed to perturbations).
    pub fn is_nonnegative(&self) -> bool {
        self.field.values().iter().all(|&v| v >= 0.0)
    }
}

/// Uniform background charge `m = rho0`.
pub fn jellium(grid: GridRef, rho0: f64) -> Result<NuclearDensity> {
    if !(rho0.is_finite() && rho0 > 0.0) {
        return Err(Error::InvalidInput(format!(
            "jellium density must be positive, got {rho0}"
        )));
    }
    Ok(NuclearDensity::from_field(
        Field::constant(grid, rho0)?,
        0.0,
    ))
}

/// Top-hat perturbation of the given height on
/// `[center - width/2, center + width/2]`, edges resolved to the nearest
/// sample. Negative heights describe charge removal; the combined density is
/// validated in [`superpose`].
pub fn uniform_bump(grid: GridRef, center: f64, width: f64, height: f64) -> Result<NuclearDensity> {
    if !(width.is_finite() && width > 0.0) {
        return Err(Error::InvalidInput(format!(
            "bump width must be positive, got {width}"
        )));
    }
    if !height.is_finite() {
        return Err(Error::InvalidInput("bump height must be finite".into()));
    }
    let l = grid.half_width();
    if center.abs() + width / 2.0 >= l {
        return Err(Error::InvalidInput(format!(
            "bump [{:.6}, {:.6}] extends past the domain [-{l}, {l})",
            center - width / 2.0,
            center + width / 2.0
        )));
    }
    let h = grid.spacing();
    let n = grid.num_points();
    // Round each edge to the nearest grid index; fill the half-open index
    // range so the sampled charge is width*height up to one cell.
    let idx = |z: f64| (((z + l) / h).round() as isize).clamp(0, n as isize) as usize;
    let (i_lo, i_hi) = (idx(center - width / 2.0), idx(center + width / 2.0));
    let mut values = vec![0.0; n];
    for v in &mut values[i_lo..i_hi] {
        *v = height;
    }
    Ok(NuclearDensity::from_field(
        Field::new(grid, values)?,
        center.abs() + width / 2.0,
    ))
}

/// Mollified Dirac comb: Gaussians of width `sigma` centered on the lattice
/// `k * period`, normalized by `(2 pi sigma^2)^(-1/2)` so each tooth carries
/// charge `1/sqrt(2)`.
pub fn gaussian_comb(grid: GridRef, sigma: f64, period: f64) -> Result<NuclearDensity> {
    if !(period.is_finite() && period > 0.0) {
        return Err(Error::InvalidInput(format!(
            "comb period must be positive, got {period}"
        )));
    }
    if !(sigma.is_finite() && sigma > 0.0 && sigma < period / 4.0) {
        return Err(Error::InvalidInput(format!(
            "comb width sigma must satisfy 0 < sigma < period/4, got sigma={sigma} period={period}"
        )));
    }
    let l = grid.half_width();
    let cells = 2.0 * l / period;
    if (cells - cells.round()).abs() > 1e-9 * cells.round().max(1.0) {
        return Err(Error::InvalidInput(format!(
            "domain length {} is not an integer multiple of the comb period {period}",
            2.0 * l
        )));
    }
    // Periodic images beyond 6 sigma of the box contribute below
    // double-precision noise.
    let reach = l + 6.0 * sigma;
    let k_max = (reach / period).floor() as i64;
    let norm = 1.0 / (2.0 * std::f64::consts::PI * sigma * sigma).sqrt();
    let values = grid
        .coordinates()
        .iter()
        .map(|&z| {
            (-k_max..=k_max)
                .map(|k| {
                    let t = (z - k as f64 * period) / sigma;
                    norm * (-t * t).exp()
                })
                .sum()
        })
        .collect();
    Ok(NuclearDensity::from_field(Field::new(grid, values)?, 0.0))
}

/// Gaussian perturbation `nu(z) = M (2 pi sigma^2)^(-1/2) exp(-z^2/sigma^2)`
/// centered at the origin; total charge `M / sqrt(2)`.
pub fn gaussian_perturbation(grid: GridRef, amplitude: f64, sigma: f64) -> Result<NuclearDensity> {
    if !(amplitude.is_finite() && amplitude > 0.0) {
        return Err(Error::InvalidInput(format!(
            "gaussian amplitude M must be positive, got {amplitude}"
        )));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidInput(format!(
            "gaussian width sigma must be positive, got {sigma}"
        )));
    }
    let l = grid.half_width();
    let tail = (-(l / sigma) * (l / sigma)).exp();
    if tail > 1e-14 {
        return Err(Error::InvalidInput(format!(
            "gaussian tail {tail:.3e} at |z| = {l} is not negligible; enlarge the box or shrink sigma"
        )));
    }
    let norm = amplitude / (2.0 * std::f64::consts::PI * sigma * sigma).sqrt();
    let field = Field::from_fn(grid, |z| {
        let t = z / sigma;
        norm * (-t * t).exp()
    })?;
    let peak = field.sup_norm();
    let defect_half_width = field
        .grid()
        .coordinates()
        .iter()
        .zip(field.values())
        .filter(|&(_, &v)| v > 1e-14 * peak)
        .map(|(&z, _)| z.abs())
        .fold(0.0_f64, f64::max);
    Ok(NuclearDensity::from_field(field, defect_half_width))
}

/// Perturbed density `m2 = m1 + nu`. Rejected if the sum is negative
/// anywhere; a sum that touches zero is allowed.
pub fn superpose(m1: &NuclearDensity, nu: &NuclearDensity) -> Result<NuclearDensity> {
    let field = m1.field.linear_combination(1.0, 1.0, &nu.field)?;
    if let Some((i, _)) = field.values().iter().enumerate().find(|&(_, &v)| v < 0.0) {
        return Err(Error::InvalidInput(format!(
            "superposed density is negative at z = {:.6}; m1 + nu >= 0 is required",
            field.grid().coordinates()[i]
        )));
    }
    Ok(NuclearDensity::from_field(field, nu.defect_half_width))
}

/// Load a density from a two-column text file `z m`, one sample per line,
/// `#`-prefixed comment lines allowed. The samples must match the grid point
/// for point; a mismatch in count or coordinates is an error.
pub fn from_file(
    grid: GridRef,
    path: &std::path::Path,
    defect_half_width: Option<f64>,
) -> Result<NuclearDensity> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split_whitespace();
        let parse = |s: Option<&str>| -> Result<f64> {
            s.ok_or_else(|| {
                Error::InvalidInput(format!("{}:{}: expected two columns", path.display(), lineno + 1))
            })?
            .parse::<f64>()
            .map_err(|e| Error::InvalidInput(format!("{}:{}: {e}", path.display(), lineno + 1)))
        };
        let z = parse(cols.next())?;
        let m = parse(cols.next())?;
        rows.push((z, m));
    }
    if rows.len() != grid.num_points() {
        return Err(Error::InvalidInput(format!(
            "{} has {} samples but the grid has {} points",
            path.display(),
            rows.len(),
            grid.num_points()
        )));
    }
    let h = grid.spacing();
    let mut values = Vec::with_capacity(rows.len());
    for (i, ((z, m), &zg)) in rows.iter().zip(grid.coordinates()).enumerate() {
        if (z - zg).abs() > 1e-9 * h.max(zg.abs()) {
            return Err(Error::InvalidInput(format!(
                "{} row {i}: coordinate {z} does not match grid point {zg} (different N or h?)",
                path.display()
            )));
        }
        values.push(*m);
    }
    let field = Field::new(grid, values)?;
    let support = field
        .grid()
        .coordinates()
        .iter()
        .zip(field.values())
        .filter(|&(_, &v)| v != 0.0)
        .map(|(&z, _)| z.abs())
        .fold(0.0_f64, f64::max);
    Ok(NuclearDensity::from_field(
        field,
        defect_half_width.unwrap_or(support),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid1D;

    fn grid(l: f64, n: usize) -> GridRef {
        Grid1D::shared(l, n).unwrap()
    }

    #[test]
    fn jellium_charge_and_rejection() {
        let g = grid(10.0, 1600);
        let m = jellium(g.clone(), 1.0).unwrap();
        assert_eq!(m.total_charge(), 20.0);
        assert_eq!(m.defect_half_width(), 0.0);
        assert!((jellium(g.clone(), 8.0).unwrap().total_charge() - 160.0).abs() < 1e-12);
        assert!(jellium(g, 0.0).is_err());
    }

    #[test]
    fn bump_charge_within_one_cell() {
        let g = grid(10.0, 1600); // h = 0.0125
        let nu = uniform_bump(g, 0.0, 0.05, 11.0).unwrap();
        assert!((nu.total_charge() - 0.55).abs() <= 0.0125 * 11.0);
        assert!((nu.defect_half_width() - 0.025).abs() < 1e-15);
    }

    #[test]
    fn bump_must_fit_inside_the_domain() {
        let g = grid(10.0, 64);
        assert!(uniform_bump(g.clone(), 0.0, 20.0, 1.0).is_err());
        assert!(uniform_bump(g, 9.9, 0.5, 1.0).is_err());
    }

    #[test]
    fn perturbed_jellium_matches_density_eleven_inside_the_bump() {
        let g = grid(10.0, 1600);
        let m1 = jellium(g.clone(), 1.0).unwrap();
        let nu = uniform_bump(g.clone(), 0.0, 0.05, 10.0).unwrap();
        let m2 = superpose(&m1, &nu).unwrap();
        for (&z, &v) in g.coordinates().iter().zip(m2.values()) {
            if z.abs() < 0.02 {
                assert_eq!(v, 11.0);
            } else if z.abs() > 0.03 {
                assert_eq!(v, 1.0);
            }
        }
        let total = m1.total_charge() + nu.total_charge();
        assert!((m2.total_charge() - total).abs() <= 1e-12 * total.abs());
    }

    #[test]
    fn comb_tooth_charge_is_inverse_sqrt_two() {
        let g = grid(10.0, 2048);
        let m = gaussian_comb(g, 0.1, 1.0).unwrap();
        let expected = 20.0 / 2.0_f64.sqrt();
        assert!(
            (m.total_charge() - expected).abs() < 1e-9,
            "total {} vs {expected}",
            m.total_charge()
        );
        assert!(m.values().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn comb_preconditions() {
        let g = grid(10.0, 256);
        assert!(gaussian_comb(g.clone(), 0.25, 1.0).is_err()); // sigma >= period/4
        assert!(gaussian_comb(g, 0.1, 0.7).is_err()); // incommensurate
    }

    #[test]
    fn gaussian_perturbation_charge() {
        let g = grid(10.0, 2048);
        let nu = gaussian_perturbation(g, 1.0, 0.1).unwrap();
        assert!((nu.total_charge() - 1.0 / 2.0_f64.sqrt()).abs() < 1e-10);
        assert!(nu.defect_half_width() > 0.0 && nu.defect_half_width() < 1.0);
        let g2 = grid(10.0, 2048);
        assert!(gaussian_perturbation(g2.clone(), 0.0, 0.1).is_err());
        // Tail not negligible: sigma comparable to the box.
        assert!(gaussian_perturbation(g2, 1.0, 4.0).is_err());
    }

    #[test]
    fn comb_plus_gaussian_builds_the_perturbed_crystal() {
        let g = grid(10.0, 2048);
        let m1 = gaussian_comb(g.clone(), 0.1, 1.0).unwrap();
        let nu = gaussian_perturbation(g, 0.5, 0.1).unwrap();
        let m2 = superpose(&m1, &nu).unwrap();
        let expected = m1.total_charge() + nu.total_charge();
        assert!((m2.total_charge() - expected).abs() <= 1e-12 * expected);
        assert_eq!(m2.defect_half_width(), nu.defect_half_width());
    }

    #[test]
    fn superpose_identity_and_negativity() {
        let g = grid(10.0, 1600);
        let m = jellium(g.clone(), 1.0).unwrap();
        let zero = NuclearDensity::from_field(Field::zeros(g.clone()), 0.0);
        let same = superpose(&m, &zero).unwrap();
        assert_eq!(same.values(), m.values());

        // Touching zero is the boundary of the constraint and is allowed.
        let vacancy = uniform_bump(g.clone(), 0.0, 0.05, -1.0).unwrap();
        let depleted = superpose(&m, &vacancy).unwrap();
        assert!(depleted.values().iter().copied().fold(f64::INFINITY, f64::min) == 0.0);

        // Going below zero anywhere is rejected.
        let too_deep = uniform_bump(g, 0.0, 0.05, -2.0).unwrap();
        assert!(superpose(&m, &too_deep).is_err());
    }

    #[test]
    fn file_roundtrip_and_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.dat");
        let g = grid(5.0, 16);
        let m = jellium(g.clone(), 2.0).unwrap();
        let mut text = String::from("# z m\n");
        for (&z, &v) in g.coordinates().iter().zip(m.values()) {
            text.push_str(&format!("{z:.17e} {v:.17e}\n"));
        }
        std::fs::write(&path, &text).unwrap();
        let loaded = from_file(g.clone(), &path, None).unwrap();
        assert_eq!(loaded.values(), m.values());

        let wrong = grid(5.0, 32);
        assert!(from_file(wrong, &path, None).is_err());
        let shifted = grid(6.0, 16);
        assert!(from_file(shifted, &path, None).is_err());
    }
}
