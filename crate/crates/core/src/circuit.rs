//! Map flux-tunable transmon resonators to (ω, J, U) and back.
//!
//! All evaluation is in SI; frequencies come out as angular frequencies
//! (rad/s). Φ₀ denotes the reduced flux quantum ℏ/2e.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// CODATA 2018 exact values.
pub mod constants {
    pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
    pub const PLANCK: f64 = 6.626_070_15e-34;
    pub const HBAR: f64 = PLANCK / (2.0 * std::f64::consts::PI);
    /// ℏ/2e
    pub const REDUCED_FLUX_QUANTUM: f64 = HBAR / (2.0 * ELEMENTARY_CHARGE);
}

use constants::{ELEMENTARY_CHARGE as E_CHARGE, HBAR, REDUCED_FLUX_QUANTUM};

/// Which asymmetric-junction expression to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JosephsonFormula {
    /// √(1 + d² tan x)
    #[default]
    TanLinear,
    /// √(1 + d² tan² x), the usual asymmetric SQUID result.
    TanSquared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    /// Junction energies (J).
    pub e_j1: f64,
    pub e_j2: f64,
    /// Shunt capacitance (F).
    pub c_j: f64,
    /// Coupling capacitance (F).
    pub c: f64,
    /// Flux bias (Wb).
    pub flux: f64,
    #[serde(default = "default_flux_quantum")]
    pub flux_quantum: f64,
}

fn default_flux_quantum() -> f64 {
    REDUCED_FLUX_QUANTUM
}

impl CircuitParams {
    pub fn new(e_j1: f64, e_j2: f64, c_j: f64, c: f64, flux: f64) -> Result<Self> {
        let p = CircuitParams { e_j1, e_j2, c_j, c, flux, flux_quantum: REDUCED_FLUX_QUANTUM };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("e_j1", self.e_j1), ("e_j2", self.e_j2), ("c_j", self.c_j), ("c", self.c)] {
            if !(v > 0.0) {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.flux_quantum > 0.0) {
            return Err(Error::invalid("flux_quantum", "must be positive"));
        }
        Ok(())
    }

    pub fn with_flux(&self, flux: f64) -> Self {
        CircuitParams { flux, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveJunction {
    pub e_j: f64,
    pub d: f64,
    /// False when cos(Φ_g/2Φ₀) ≤ 0 or the radicand is negative.
    pub on_branch: bool,
}

/// E_J = (E_J1 + E_J2) cos x √(1 + d² tan x), x = Φ_g/2Φ₀,
/// d = (E_J2 − E_J1)/(E_J2 + E_J1).
pub fn effective_josephson(e_j1: f64, e_j2: f64, flux: f64, flux_quantum: f64, formula: JosephsonFormula) -> EffectiveJunction {
    let x = flux / (2.0 * flux_quantum);
    let d = (e_j2 - e_j1) / (e_j2 + e_j1);
    let t = match formula {
        JosephsonFormula::TanLinear => x.tan(),
        JosephsonFormula::TanSquared => x.tan().powi(2),
    };
    let radicand = 1.0 + d * d * t;
    EffectiveJunction {
        e_j: (e_j1 + e_j2) * x.cos() * radicand.sqrt(),
        d,
        on_branch: x.cos() > 0.0 && radicand >= 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedHamiltonianParams {
    pub e_j: f64,
    pub d: f64,
    /// C̃ = C_J + 2C
    pub c_tilde: f64,
    /// L̃ = Φ₀²/E_J
    pub l_tilde: f64,
    pub e_c: f64,
    pub e_l: f64,
    /// Angular frequencies (rad/s).
    pub omega: f64,
    pub hopping: f64,
    pub interaction: f64,
    pub delta_omega: f64,
    pub lambda: f64,
    /// E_L/E_C > 1
    pub transmon: bool,
    pub on_branch: bool,
}

pub fn derive_params(cp: &CircuitParams, formula: JosephsonFormula) -> Result<DerivedHamiltonianParams> {
    cp.validate()?;
    let junction = effective_josephson(cp.e_j1, cp.e_j2, cp.flux, cp.flux_quantum, formula);
    let e_j = junction.e_j;
    if !(e_j > 0.0) {
        return Err(Error::invalid("flux", format!("effective E_J = {e_j:e} is not positive")));
    }
    let phi0 = cp.flux_quantum;
    let c_tilde = cp.c_j + 2.0 * cp.c;
    let l_tilde = phi0 * phi0 / e_j;
    let omega = 1.0 / (l_tilde * c_tilde).sqrt();
    let e_c = E_CHARGE * E_CHARGE / (2.0 * c_tilde);
    let e_l = phi0 * phi0 / l_tilde;
    let lambda = (2.0 * e_c / e_l).powf(0.25);
    let l2 = lambda * lambda;
    Ok(DerivedHamiltonianParams {
        e_j,
        d: junction.d,
        c_tilde,
        l_tilde,
        e_c,
        e_l,
        omega,
        hopping: -omega * cp.c / (2.0 * c_tilde),
        interaction: -e_j * (-l2).exp() * l2 * l2 / 4.0 / HBAR,
        delta_omega: l2 * e_j * (-l2).exp() / HBAR,
        lambda,
        transmon: e_l / e_c > 1.0,
        on_branch: junction.on_branch,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningRow {
    pub flux: f64,
    pub omega: f64,
    pub hopping: f64,
    pub interaction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub rows: Vec<TuningRow>,
    /// (max − min)/(max + min) over the rows.
    pub omega_spread: f64,
    pub hopping_spread: f64,
    pub interaction_spread: f64,
}

impl TuningReport {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        use crate::propagate::fmt12;
        writeln!(w, "flux,omega,J,U")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{}", fmt12(r.flux), fmt12(r.omega), fmt12(r.hopping), fmt12(r.interaction))?;
        }
        Ok(())
    }
}

fn spread(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.map(f64::abs).collect();
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    if max + min == 0.0 {
        0.0
    } else {
        (max - min) / (max + min)
    }
}

pub fn tuning_range_report(cp: &CircuitParams, fluxes: &[f64], formula: JosephsonFormula) -> Result<TuningReport> {
    let rows = fluxes
        .iter()
        .map(|&flux| {
            let d = derive_params(&cp.with_flux(flux), formula)?;
            Ok(TuningRow { flux, omega: d.omega, hopping: d.hopping, interaction: d.interaction })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TuningReport {
        omega_spread: spread(rows.iter().map(|r| r.omega)),
        hopping_spread: spread(rows.iter().map(|r| r.hopping)),
        interaction_spread: spread(rows.iter().map(|r| r.interaction)),
        rows,
    })
}

/// Flux on [0, πΦ₀) at which ω equals `target` (bisection; ω must change
/// sign relative to the target across the bracket).
pub fn flux_for_frequency(cp: &CircuitParams, target: f64, formula: JosephsonFormula) -> Result<f64> {
    let f = |flux: f64| -> Result<f64> { Ok(derive_params(&cp.with_flux(flux), formula)?.omega - target) };
    let mut a = 0.0;
    let mut b = std::f64::consts::PI * cp.flux_quantum * (1.0 - 1e-9);
    let (fa, fb) = (f(a)?, f(b)?);
    if fa == 0.0 {
        return Ok(a);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::NoConvergence { residuals: vec![fa, fb] });
    }
    let mut fa = fa;
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = f(m)?;
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
        if (b - a) <= 1e-15 * cp.flux_quantum {
            break;
        }
    }
    Ok(0.5 * (a + b))
}

/// Target Hamiltonian parameters, angular frequencies in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignTargets {
    pub omega: f64,
    pub hopping: f64,
    pub interaction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub params: CircuitParams,
    /// Relative residuals (ω, J, U) of the forward map.
    pub residuals: [f64; 3],
    pub newton_iterations: usize,
}

fn relative_residuals(cp: &CircuitParams, t: &DesignTargets) -> Result<[f64; 3]> {
    let d = derive_params(cp, JosephsonFormula::TanLinear)?;
    Ok([d.omega / t.omega - 1.0, d.hopping / t.hopping - 1.0, d.interaction / t.interaction - 1.0])
}

/// Symmetric junctions at zero flux.
///
/// Initial guess: with ℏω = 2E_Jλ² and |U|/ω = λ²e^{−λ²}/8, solve for λ²
/// on the branch λ² < 1, then E_J = ℏω/2λ², E_C = λ⁴E_J/2, C̃ = e²/2E_C,
/// C = 2C̃|J|/ω and C_J = C̃ − 2C. A damped Newton iteration in log
/// variables polishes the result against the forward map.
pub fn inverse_design(targets: &DesignTargets) -> Result<Design> {
    let DesignTargets { omega, hopping, interaction } = *targets;
    if !(omega > 0.0) {
        return Err(Error::invalid("omega", format!("must be positive, got {omega}")));
    }
    if !(interaction < 0.0) {
        return Err(Error::invalid("interaction", format!("U must be negative, got {interaction}")));
    }
    if !(hopping < 0.0) {
        return Err(Error::invalid("hopping", format!("J must be negative (capacitive coupling), got {hopping}")));
    }
    let ratio = 8.0 * interaction.abs() / omega;
    if ratio >= (-1.0f64).exp() {
        return Err(Error::invalid("interaction", format!("|U|/ω = {} exceeds the maximum 1/(8e)", interaction.abs() / omega)));
    }
    // x e^{-x} = ratio on (0, 1)
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let m = 0.5 * (lo + hi);
        if m * (-m).exp() < ratio {
            lo = m;
        } else {
            hi = m;
        }
    }
    let l2 = 0.5 * (lo + hi);
    let e_j = HBAR * omega / (2.0 * l2);
    let e_c = l2 * l2 * e_j / 2.0;
    let c_tilde = E_CHARGE * E_CHARGE / (2.0 * e_c);
    let c = 2.0 * c_tilde * hopping.abs() / omega;
    let c_j = c_tilde - 2.0 * c;
    if !(c_j > 0.0) {
        return Err(Error::invalid("hopping", format!("|J|/ω = {} needs C_J ≤ 0", hopping.abs() / omega)));
    }

    let build = |x: [f64; 3]| CircuitParams {
        e_j1: 0.5 * x[0].exp(),
        e_j2: 0.5 * x[0].exp(),
        c_j: x[1].exp(),
        c: x[2].exp(),
        flux: 0.0,
        flux_quantum: REDUCED_FLUX_QUANTUM,
    };
    let mut x = [e_j.ln(), c_j.ln(), c.ln()];
    let mut r = relative_residuals(&build(x), targets)?;
    let norm = |r: &[f64; 3]| r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut iterations = 0;
    while norm(&r) > 1e-13 && iterations < 50 {
        iterations += 1;
        let h = 1e-7;
        let mut jac = nalgebra::Matrix3::zeros();
        for k in 0..3 {
            let mut xp = x;
            xp[k] += h;
            let rp = relative_residuals(&build(xp), targets)?;
            for i in 0..3 {
                jac[(i, k)] = (rp[i] - r[i]) / h;
            }
        }
        let Some(step) = jac.lu().solve(&nalgebra::Vector3::new(-r[0], -r[1], -r[2])) else {
            break;
        };
        let mut damping = 1.0;
        loop {
            let trial = [x[0] + damping * step[0], x[1] + damping * step[1], x[2] + damping * step[2]];
            if let Ok(rt) = relative_residuals(&build(trial), targets) {
                if norm(&rt) < norm(&r) {
                    x = trial;
                    r = rt;
                    break;
                }
            }
            damping *= 0.5;
            if damping < 1e-6 {
                break;
            }
        }
        if damping < 1e-6 {
            break;
        }
    }
    if norm(&r) > 1e-9 {
        return Err(Error::NoConvergence { residuals: r.to_vec() });
    }
    Ok(Design { params: build(x), residuals: r, newton_iterations: iterations })
}

/// Design a resonator whose zero-flux frequency is ω₀ + Δ and tabulate the
/// flux sweep down to ω₀ − Δ.
pub fn modulation_tuning_report(
    carrier: f64,
    modulation: f64,
    hopping: f64,
    interaction: f64,
    points: usize,
    formula: JosephsonFormula,
) -> Result<(Design, TuningReport)> {
    let design = inverse_design(&DesignTargets { omega: carrier + modulation, hopping, interaction })?;
    let low = flux_for_frequency(&design.params, carrier - modulation, formula)?;
    let fluxes: Vec<f64> = (0..points.max(1))
        .map(|k| if points <= 1 { 0.0 } else { low * k as f64 / (points - 1) as f64 })
        .collect();
    let report = tuning_range_report(&design.params, &fluxes, formula)?;
    Ok((design, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const GHZ: f64 = 1e9;
    const MHZ: f64 = 1e6;

    fn targets() -> DesignTargets {
        DesignTargets { omega: 5.0 * GHZ, hopping: -40.0 * MHZ, interaction: -40.0 * MHZ }
    }

    #[test]
    fn constants_consistent() {
        assert!((REDUCED_FLUX_QUANTUM - 3.291_059_784_754_533e-16).abs() < 1e-28);
    }

    #[test]
    fn josephson_examples() {
        let phi0 = REDUCED_FLUX_QUANTUM;
        let j = effective_josephson(9.0, 11.0, 0.0, phi0, JosephsonFormula::TanLinear);
        assert_eq!(j.e_j, 20.0);
        assert!((j.d - 0.1).abs() < 1e-15);
        let j = effective_josephson(5.0, 5.0, 0.8 * phi0, phi0, JosephsonFormula::TanLinear);
        assert_eq!(j.d, 0.0);
        assert!((j.e_j - 10.0 * 0.4f64.cos()).abs() < 1e-12);
        let j = effective_josephson(9.0, 11.0, 0.6 * phi0, phi0, JosephsonFormula::TanLinear);
        let expect = 20.0 * 0.3f64.cos() * (1.0 + 0.01 * 0.3f64.tan()).sqrt();
        assert!((j.e_j - expect).abs() < 1e-12);
        let sq = effective_josephson(9.0, 11.0, 0.6 * phi0, phi0, JosephsonFormula::TanSquared);
        assert!((sq.e_j - 20.0 * 0.3f64.cos() * (1.0 + 0.01 * 0.3f64.tan().powi(2)).sqrt()).abs() < 1e-12);
        assert!(!effective_josephson(5.0, 5.0, 1.2 * PI * phi0, phi0, JosephsonFormula::TanLinear).on_branch);
    }

    #[test]
    fn degenerate_junction_identities() {
        // Φ_g = 0: E_J = E_J1 + E_J2 exactly, for both formulas.
        for f in [JosephsonFormula::TanLinear, JosephsonFormula::TanSquared] {
            let j = effective_josephson(3.7e-24, 1.1e-24, 0.0, REDUCED_FLUX_QUANTUM, f);
            assert_eq!(j.e_j, 3.7e-24 + 1.1e-24);
            let s = effective_josephson(2.0e-24, 2.0e-24, 0.0, REDUCED_FLUX_QUANTUM, f);
            assert_eq!(s.d, 0.0);
            assert_eq!(s.e_j, 4.0e-24);
        }
    }

    #[test]
    fn round_trip() {
        let d = inverse_design(&targets()).unwrap();
        let f = derive_params(&d.params, JosephsonFormula::TanLinear).unwrap();
        assert!((f.omega / 5e9 - 1.0).abs() < 1e-6);
        assert!((f.hopping / -40e6 - 1.0).abs() < 1e-6);
        assert!((f.interaction / -40e6 - 1.0).abs() < 1e-6);
        assert!(f.transmon);
        assert!((f.lambda.powi(2) - 0.0686).abs() < 5e-4);
    }

    #[test]
    fn infeasible_targets() {
        assert!(inverse_design(&DesignTargets { interaction: 40.0 * MHZ, ..targets() }).is_err());
        assert!(inverse_design(&DesignTargets { hopping: 40.0 * MHZ, ..targets() }).is_err());
        assert!(inverse_design(&DesignTargets { interaction: -1.0 * GHZ, ..targets() }).is_err());
    }

    #[test]
    fn scaling_and_signs() {
        let d = inverse_design(&targets()).unwrap().params;
        let a = derive_params(&d, JosephsonFormula::TanLinear).unwrap();
        let c_small = derive_params(&CircuitParams { c: d.c * 1e-6, ..d }, JosephsonFormula::TanLinear).unwrap();
        assert!(c_small.hopping.abs() < 1e-5 * a.hopping.abs());
        assert!(a.interaction < 0.0 && a.hopping * d.c < 0.0);
        // doubling C̃ at fixed L̃ scales ω by 1/√2
        let doubled = CircuitParams { c_j: d.c_j * 2.0, c: d.c * 2.0, ..d };
        let b = derive_params(&doubled, JosephsonFormula::TanLinear).unwrap();
        assert!((b.omega / a.omega - 0.5f64.sqrt()).abs() < 1e-12);
        // E_J → αE_J, capacitances → C/α scales every frequency by α
        let alpha = 3.0;
        let scaled = CircuitParams { e_j1: d.e_j1 * alpha, e_j2: d.e_j2 * alpha, c_j: d.c_j / alpha, c: d.c / alpha, ..d };
        let s = derive_params(&scaled, JosephsonFormula::TanLinear).unwrap();
        for (x, y) in [(s.omega, a.omega), (s.hopping, a.hopping), (s.interaction, a.interaction), (s.delta_omega, a.delta_omega)] {
            assert!((x / y - alpha).abs() < 1e-12);
        }
        assert!((s.lambda - a.lambda).abs() < 1e-14);
    }

    #[test]
    fn josephson_monotone_on_branch() {
        let phi0 = REDUCED_FLUX_QUANTUM;
        let mut last = f64::INFINITY;
        for k in 1..100 {
            let e = effective_josephson(1.0, 1.0, PI * phi0 * k as f64 / 100.0, phi0, JosephsonFormula::TanLinear).e_j;
            assert!(e < last);
            last = e;
        }
    }

    #[test]
    fn eight_percent_tuning() {
        let (_, report) =
            modulation_tuning_report(5.0 * GHZ, 0.4 * GHZ, -40.0 * MHZ, -40.0 * MHZ, 41, JosephsonFormula::TanLinear).unwrap();
        assert!((report.omega_spread - 0.08).abs() < 1e-9, "{}", report.omega_spread);
        let j_range = report.hopping_spread * 2.0 * 40.0 * MHZ;
        assert!(j_range < 0.1 * 0.4 * GHZ);
        assert!(report.interaction_spread < 0.1);
    }

    #[test]
    fn zero_width_range() {
        let d = inverse_design(&targets()).unwrap().params;
        let r = tuning_range_report(&d, &[0.0], JosephsonFormula::TanLinear).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.omega_spread, 0.0);
    }

    #[test]
    fn flux_inversion() {
        let d = inverse_design(&targets()).unwrap().params;
        let flux = flux_for_frequency(&d, 4.0 * GHZ, JosephsonFormula::TanLinear).unwrap();
        let w = derive_params(&d.with_flux(flux), JosephsonFormula::TanLinear).unwrap().omega;
        assert!((w / 4e9 - 1.0).abs() < 1e-9);
        assert!(flux_for_frequency(&d, 6.0 * GHZ, JosephsonFormula::TanLinear).is_err());
    }
}
