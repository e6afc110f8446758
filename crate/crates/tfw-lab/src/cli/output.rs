//! CSV/JSON emission with a fixed on-disk contract:
//! - floats carry 17 significant digits, so payloads round-trip exactly and
//!   repeated runs with the same seed are byte-identical;
//! - JSON keys are written in a fixed order by hand, never via a map;
//! - wall-clock metadata lives in `metadata.json`, away from the payloads.
//!
//! Every emitted file is re-opened and validated against the documented
//! column/field list before a command may exit 0.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::analysis::{DecayFit, RelativeEnergyReport};
use crate::grid::Field;
use crate::nuclear::NuclearDensity;
use crate::solver::SolveResult;
use crate::{Error, Result};

/// 17 significant digits; enough to reproduce any f64 bit pattern.
pub fn fmt_f64(x: f64) -> String {
    debug_assert!(x.is_finite(), "payload floats must be finite, got {x}");
    format!("{x:.16e}")
}

fn json_opt(x: Option<f64>) -> String {
    match x {
        Some(v) => fmt_f64(v),
        None => "null".into(),
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// CSV payloads
// ---------------------------------------------------------------------------

pub const FIELDS_HEADER: &str = "z,m,u,phi";
pub const DEFECT_HEADER: &str = "z,m1,m2,u1,u2,phi1,phi2,v,phi_d";
pub const TRACE_HEADER: &str = "outer_iter,energy,Q,mu,c,inner_steps,el_residual";
pub const TRUNCATION_HEADER: &str = "K,gamma_K";
pub const CONVERGENCE_HEADER: &str = "L,gamma_L,u_diff_sup";

pub fn fields_csv(m: &NuclearDensity, u: &Field, phi: &Field) -> String {
    let mut out = String::from(FIELDS_HEADER);
    out.push('\n');
    let z = u.grid().coordinates();
    for i in 0..u.len() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fmt_f64(z[i]),
            fmt_f64(m.values()[i]),
            fmt_f64(u.values()[i]),
            fmt_f64(phi.values()[i]),
        );
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub fn defect_csv(
    m1: &NuclearDensity,
    m2: &NuclearDensity,
    u1: &Field,
    u2: &Field,
    phi1: &Field,
    phi2: &Field,
    v: &Field,
    phi_d: &Field,
) -> String {
    let mut out = String::from(DEFECT_HEADER);
    out.push('\n');
    let z = u1.grid().coordinates();
    for i in 0..u1.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            fmt_f64(z[i]),
            fmt_f64(m1.values()[i]),
            fmt_f64(m2.values()[i]),
            fmt_f64(u1.values()[i]),
            fmt_f64(u2.values()[i]),
            fmt_f64(phi1.values()[i]),
            fmt_f64(phi2.values()[i]),
            fmt_f64(v.values()[i]),
            fmt_f64(phi_d.values()[i]),
        );
    }
    out
}

pub fn trace_csv(result: &SolveResult) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in &result.trace {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.outer_iter,
            fmt_f64(r.energy),
            fmt_f64(r.charge_defect),
            fmt_f64(r.mu),
            fmt_f64(r.c),
            r.inner_steps,
            fmt_f64(r.el_residual),
        );
    }
    out
}

pub fn truncation_csv(rows: &[(f64, f64)]) -> String {
    let mut out = String::from(TRUNCATION_HEADER);
    out.push('\n');
    for &(k, gamma) in rows {
        let _ = writeln!(out, "{},{}", fmt_f64(k), fmt_f64(gamma));
    }
    out
}

pub fn convergence_csv(rows: &[(f64, f64, f64)]) -> String {
    let mut out = String::from(CONVERGENCE_HEADER);
    out.push('\n');
    for &(l, gamma, diff) in rows {
        let _ = writeln!(out, "{},{},{}", fmt_f64(l), fmt_f64(gamma), fmt_f64(diff));
    }
    out
}

// ---------------------------------------------------------------------------
// JSON payloads (hand-written, fixed key order)
// ---------------------------------------------------------------------------

pub fn solve_summary_json(result: &SolveResult, total_charge: f64, seed: u64) -> String {
    let length = result.state.u.grid().length();
    let mut out = String::from("{\n");
    let _ = writeln!(out, "  \"converged\": {},", result.converged);
    let _ = writeln!(out, "  \"energy\": {},", fmt_f64(result.energy));
    let _ = writeln!(
        out,
        "  \"energy_per_length\": {},",
        fmt_f64(result.energy / length)
    );
    let _ = writeln!(out, "  \"mu_final\": {},", fmt_f64(result.mu_final));
    let _ = writeln!(out, "  \"outer_iterations\": {},", result.outer_iterations);
    let _ = writeln!(
        out,
        "  \"constraint_violation\": {},",
        fmt_f64(result.constraint_violation)
    );
    let _ = writeln!(out, "  \"el_residual\": {},", fmt_f64(result.el_residual));
    let _ = writeln!(out, "  \"total_charge\": {},", fmt_f64(total_charge));
    let _ = writeln!(out, "  \"seed\": {seed},");
    let _ = writeln!(out, "  \"trace\": [");
    for (i, r) in result.trace.iter().enumerate() {
        let comma = if i + 1 == result.trace.len() { "" } else { "," };
        let _ = writeln!(
            out,
            "    {{\"outer_iter\": {}, \"energy\": {}, \"Q\": {}, \"mu\": {}, \"c\": {}, \
             \"inner_steps\": {}, \"el_residual\": {}}}{comma}",
            r.outer_iter,
            fmt_f64(r.energy),
            fmt_f64(r.charge_defect),
            fmt_f64(r.mu),
            fmt_f64(r.c),
            r.inner_steps,
            fmt_f64(r.el_residual),
        );
    }
    out.push_str("  ]\n}\n");
    out
}

fn decay_fit_json(fit: &DecayFit, indent: &str) -> String {
    format!(
        "{{\n{indent}  \"k1\": {},\n{indent}  \"k2\": {},\n{indent}  \"fit_window\": [{}, {}],\n\
         {indent}  \"correlation\": {}\n{indent}}}",
        fmt_f64(fit.k1),
        fmt_f64(fit.k2),
        fmt_f64(fit.fit_window.0),
        fmt_f64(fit.fit_window.1),
        fmt_f64(fit.correlation),
    )
}

pub fn relative_energy_report_json(report: &RelativeEnergyReport, gamma_direct: f64) -> String {
    let mut out = String::from("{\n");
    let _ = writeln!(out, "  \"gamma\": {},", fmt_f64(report.gamma));
    let _ = writeln!(out, "  \"gamma_direct_difference\": {},", fmt_f64(gamma_direct));
    let _ = writeln!(out, "  \"truncated\": [");
    for (i, row) in report.truncated.iter().enumerate() {
        let comma = if i + 1 == report.truncated.len() { "" } else { "," };
        let _ = writeln!(
            out,
            "    {{\"K\": {}, \"gamma_K\": {}}}{comma}",
            fmt_f64(row.k),
            fmt_f64(row.gamma)
        );
    }
    let _ = writeln!(out, "  ],");
    let _ = writeln!(
        out,
        "  \"neutrality_defect\": {},",
        fmt_f64(report.neutrality_defect)
    );
    let _ = writeln!(out, "  \"decay_u\": {},", decay_fit_json(&report.decay_u, "  "));
    let _ = writeln!(out, "  \"decay_phi\": {},", decay_fit_json(&report.decay_phi, "  "));
    let _ = writeln!(
        out,
        "  \"variational_value\": {}",
        json_opt(report.variational_value)
    );
    out.push_str("}\n");
    out
}

pub fn decay_study_json(
    decay_u: &DecayFit,
    decay_phi: &DecayFit,
    core_half_width: f64,
    boundary_buffer: f64,
) -> String {
    format!(
        "{{\n  \"core_half_width\": {},\n  \"boundary_buffer\": {},\n  \"decay_u\": {},\n  \
         \"decay_phi\": {}\n}}\n",
        fmt_f64(core_half_width),
        fmt_f64(boundary_buffer),
        decay_fit_json(decay_u, "  "),
        decay_fit_json(decay_phi, "  "),
    )
}

pub fn convergence_study_json(rows: &[(f64, f64, f64)], rate: Option<(f64, f64)>) -> String {
    let mut out = String::from("{\n  \"rows\": [\n");
    for (i, &(l, gamma, diff)) in rows.iter().enumerate() {
        let comma = if i + 1 == rows.len() { "" } else { "," };
        let _ = writeln!(
            out,
            "    {{\"L\": {}, \"gamma_L\": {}, \"u_diff_sup\": {}}}{comma}",
            fmt_f64(l),
            fmt_f64(gamma),
            fmt_f64(diff)
        );
    }
    out.push_str("  ],\n");
    match rate {
        Some((k, r2)) => {
            let _ = writeln!(out, "  \"field_difference_rate\": {},", fmt_f64(k));
            let _ = writeln!(out, "  \"field_difference_fit_r2\": {}", fmt_f64(r2));
        }
        None => {
            out.push_str("  \"field_difference_rate\": null,\n");
            out.push_str("  \"field_difference_fit_r2\": null\n");
        }
    }
    out.push_str("}\n");
    out
}

pub fn uniqueness_json(spread: f64, trials: usize, energies: &[f64]) -> String {
    let mut out = String::from("{\n");
    let _ = writeln!(out, "  \"trials\": {trials},");
    let _ = writeln!(out, "  \"spread_sup\": {},", fmt_f64(spread));
    let items: Vec<String> = energies.iter().map(|&e| fmt_f64(e)).collect();
    let _ = writeln!(out, "  \"trial_energies\": [{}]", items.join(", "));
    out.push_str("}\n");
    out
}

/// Wall-clock details, kept out of the deterministic payloads.
pub fn metadata_json(command: &str, elapsed: std::time::Duration) -> String {
    let now = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!(
        "{{\n  \"command\": \"{command}\",\n  \"unix_time\": {now},\n  \"elapsed_seconds\": \
         {:.3}\n}}\n",
        elapsed.as_secs_f64()
    )
}

// ---------------------------------------------------------------------------
// Schema validation of emitted files
// ---------------------------------------------------------------------------

/// Check a written CSV against its documented header.
pub fn validate_csv(path: &Path, expected_header: &str) -> Result<()> {
    let text = std::fs::read_to_string(path)?;
    let first = text.lines().next().unwrap_or("");
    if first != expected_header {
        return Err(Error::Config(format!(
            "{}: header '{first}' does not match the documented schema '{expected_header}'",
            path.display()
        )));
    }
    Ok(())
}

/// Check a written JSON document for the documented top-level keys.
pub fn validate_json(path: &Path, required_keys: &[&str]) -> Result<()> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: invalid JSON: {e}", path.display())))?;
    let object = value
        .as_object()
        .ok_or_else(|| Error::Config(format!("{}: expected a JSON object", path.display())))?;
    for key in required_keys {
        if !object.contains_key(*key) {
            return Err(Error::Config(format!(
                "{}: missing documented key '{key}'",
                path.display()
            )));
        }
    }
    Ok(())
}

/// Validation manifest collected while a command writes its outputs.
#[derive(Default)]
pub struct Emitted {
    csv: Vec<(PathBuf, &'static str)>,
    json: Vec<(PathBuf, Vec<&'static str>)>,
}

impl Emitted {
    pub fn csv(&mut self, path: PathBuf, header: &'static str) {
        self.csv.push((path, header));
    }

    pub fn json(&mut self, path: PathBuf, keys: Vec<&'static str>) {
        self.json.push((path, keys));
    }

    pub fn validate(&self) -> Result<()> {
        for (path, header) in &self.csv {
            validate_csv(path, header)?;
        }
        for (path, keys) in &self.json {
            validate_json(path, keys)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_carry_17_significant_digits_and_parse_back() {
        let x = std::f64::consts::PI * 1e-7;
        let s = fmt_f64(x);
        assert_eq!(s.parse::<f64>().unwrap(), x);
        assert!(s.contains('e'));
        let digits: usize = s
            .chars()
            .take_while(|c| *c != 'e')
            .filter(|c| c.is_ascii_digit())
            .count();
        assert_eq!(digits, 17);
    }

    #[test]
    fn json_payloads_are_valid_json() {
        let report = RelativeEnergyReport {
            gamma: 1.5,
            truncated: vec![crate::analysis::TruncatedGamma { k: 2.0, gamma: 1.4 }],
            neutrality_defect: 1e-9,
            decay_u: DecayFit {
                k1: 0.1,
                k2: 1.6,
                fit_window: (0.05, 8.0),
                correlation: 0.999,
            },
            decay_phi: DecayFit {
                k1: 0.2,
                k2: 1.5,
                fit_window: (0.05, 8.0),
                correlation: 0.998,
            },
            variational_value: None,
        };
        let text = relative_energy_report_json(&report, 1.5000001);
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(value["decay_u"]["k2"].as_f64().unwrap() > 0.0);
        assert!(value["variational_value"].is_null());
    }
}
