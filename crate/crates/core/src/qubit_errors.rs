//! Closed-form qubit error models: charge dispersion, phase flips from
//! offset-charge jumps, bit flips from the dipole transient of a charge
//! burst, the adiabaticity crossover and correlated-error thresholds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::WeightingGrid;
use crate::geometry::QubitGeometry;
use crate::induced::EventOutcome;
use crate::units::{norm, Vec3, HBAR, PLANCK_H, UM_PER_M};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmonParams {
    /// E_C/h (Hz).
    pub e_c_hz: f64,
    /// E_J/h (Hz).
    pub e_j_hz: f64,
    /// ω₀₁ (rad/s).
    pub w01: f64,
    /// Surface-code cycle time τ_sc (s).
    pub tau_sc: f64,
}

impl TransmonParams {
    /// E_C/h = 250 MHz, E_J/h = 12.5 GHz, ω₀₁/2π = 5 GHz, τ_sc = 1 µs.
    pub fn conventional() -> Self {
        TransmonParams { e_c_hz: 250e6, e_j_hz: 12.5e9, w01: std::f64::consts::TAU * 5e9, tau_sc: 1e-6 }
    }

    pub fn new(e_c_hz: f64, xi: f64, w01: f64, tau_sc: f64) -> Result<Self> {
        let p = TransmonParams { e_c_hz, e_j_hz: xi * e_c_hz, w01, tau_sc };
        p.validate()?;
        Ok(p)
    }

    pub fn from_qubit(q: &QubitGeometry, tau_sc: f64) -> Result<Self> {
        let p = TransmonParams { e_c_hz: q.charging_energy_hz, e_j_hz: q.josephson_energy_hz, w01: q.frequency_w01, tau_sc };
        p.validate()?;
        Ok(p)
    }

    pub fn xi(&self) -> f64 {
        self.e_j_hz / self.e_c_hz
    }

    /// E_C/ħ (rad/s).
    pub fn e_c_rad(&self) -> f64 {
        PLANCK_H * self.e_c_hz / HBAR
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.e_c_hz > 0.0) {
            return Err(Error::invalid("transmon.e_c_hz", "must be positive"));
        }
        if !(self.xi() > 1.0) {
            return Err(Error::invalid("transmon.e_j_hz", "E_J/E_C must exceed 1"));
        }
        if !(self.w01 > 0.0) {
            return Err(Error::invalid("transmon.w01", "must be positive"));
        }
        if !(self.tau_sc > 0.0) {
            return Err(Error::invalid("transmon.tau_sc", "must be positive"));
        }
        Ok(())
    }
}

/// Half the peak-to-peak charge modulation of ω₀₁ (rad/s).
pub fn charge_dispersion(p: &TransmonParams) -> f64 {
    let h = 0.5 * p.xi();
    16.0 * (2.0 / std::f64::consts::PI).sqrt() * p.e_c_rad() * h.powf(0.75) * (-(8.0 * p.xi()).sqrt()).exp() * (16.0 * h.sqrt() + 1.0)
}

/// ε_φ = (Δω₀₁² τ²/3)·sin²(πΔq/2e), clamped to [0, 1]. `dq` is the unaliased jump in e.
pub fn phase_flip_error(dq: f64, dispersion: f64, tau_sc: f64) -> f64 {
    let s = (std::f64::consts::FRAC_PI_2 * dq).sin();
    (dispersion * dispersion * tau_sc * tau_sc / 3.0 * s * s).clamp(0.0, 1.0)
}

/// Which charges make up the random dipole of a deposit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DipoleCharges {
    /// Every liberated electron and hole, 2·E/pair_energy.
    #[default]
    Liberated,
    /// Pairs left after recombination thinning.
    RetainedPairs,
}

/// How the rotations of separate deposits combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationSum {
    #[default]
    Signed,
    Quadrature,
}

/// Rotation angle θ of one deposit of `n` charges at gradient `grad_alpha` (1/m).
pub fn deposit_rotation(n: f64, grad_alpha: f64, cos_eta: f64, p: &TransmonParams, c_s: f64) -> f64 {
    let e_c = PLANCK_H * p.e_c_hz;
    2.0 * n.sqrt() * c_s * grad_alpha * (e_c / (HBAR * p.w01.powi(3))).sqrt() * cos_eta
}

/// Energy given to the qubit by one deposit, in units of E_C.
pub fn deposit_energy_ec(n: f64, grad_alpha: f64, cos_eta: f64, p: &TransmonParams, c_s: f64) -> f64 {
    n * (c_s * grad_alpha * cos_eta / p.w01).powi(2)
}

/// One charge deposit as seen by the bit-flip model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deposit {
    pub position: Vec3,
    /// Charges contributing to the dipole.
    pub charges: u64,
    /// Unit dipole orientation.
    pub dipole: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DipoleResult {
    pub theta: f64,
    pub eps_theta: f64,
    pub energy_ec: f64,
    /// Deposits without a usable gradient.
    pub skipped: u32,
}

/// Bit-flip error from the nonadiabatic dipole transient of an event.
pub fn dipole_transient_error(
    deposits: &[Deposit],
    grid: &WeightingGrid,
    p: &TransmonParams,
    c_s: f64,
    sum: RotationSum,
    cap: f64,
) -> DipoleResult {
    let mut out = DipoleResult::default();
    let mut acc = 0.0;
    for d in deposits {
        if d.charges == 0 {
            continue;
        }
        let g = match grid.grad_alpha_at(d.position) {
            Ok(g) => g,
            Err(_) => {
                if grid.covers(d.position) {
                    out.skipped += 1;
                }
                continue;
            }
        };
        let gn = norm(g);
        if gn == 0.0 {
            continue;
        }
        let cos_eta = (g[0] * d.dipole[0] + g[1] * d.dipole[1] + g[2] * d.dipole[2]) / gn;
        let grad_m = gn * UM_PER_M;
        let th = deposit_rotation(d.charges as f64, grad_m, cos_eta, p, c_s);
        match sum {
            RotationSum::Signed => acc += th,
            RotationSum::Quadrature => acc += th * th,
        }
        out.energy_ec += deposit_energy_ec(d.charges as f64, grad_m, cos_eta, p, c_s);
    }
    out.theta = match sum {
        RotationSum::Signed => acc,
        RotationSum::Quadrature => acc.sqrt(),
    };
    out.eps_theta = (out.theta * out.theta / 6.0).min(cap);
    out
}

/// Grid nodes inside the substrate where the transient is nonadiabatic:
/// c_s|∇α|E_C/ħ ≥ ω₀₁².
#[derive(Debug, Clone, PartialEq)]
pub struct NonadiabaticRegion {
    pub nodes: Vec<[usize; 3]>,
    /// Summed node volume (µm³).
    pub volume: f64,
}

pub fn nonadiabatic_surface(grid: &WeightingGrid, p: &TransmonParams, c_s: f64) -> NonadiabaticRegion {
    let [nx, ny, _] = grid.dims();
    let k_top = grid.surface_index();
    let threshold = p.w01 * p.w01 / (c_s * p.e_c_rad());
    let mut nodes = Vec::new();
    let mut volume = 0.0;
    for k in 0..=k_top {
        for j in 0..ny {
            for i in 0..nx {
                let g = grid.node_gradient(i, j, k);
                if norm(g) * UM_PER_M >= threshold {
                    nodes.push([i, j, k]);
                    volume += grid.node_volume(i, j, k);
                }
            }
        }
    }
    NonadiabaticRegion { nodes, volume }
}

/// Threshold for correlated errors spanning `m` qubits: p^m.
pub fn fault_threshold(p: f64, m: u32) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid("p", "must lie in (0, 1)"));
    }
    if m == 0 {
        return Err(Error::invalid("m", "must be at least 1"));
    }
    Ok(p.powi(m as i32))
}

/// Which per-qubit error an exceedance curve is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    PhaseFlip,
    BitFlip,
}

/// How two per-qubit errors combine into a joint error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointRule {
    #[default]
    Min,
    GeometricMean,
}

impl JointRule {
    pub fn combine(self, a: f64, b: f64) -> f64 {
        match self {
            JointRule::Min => a.min(b),
            JointRule::GeometricMean => (a * b).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceedancePoint {
    pub level: f64,
    pub fraction: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceedanceCurve {
    pub pair: (String, String),
    pub kind: ErrorKind,
    pub n_events: usize,
    pub points: Vec<ExceedancePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub rule: JointRule,
    pub curves: Vec<ExceedanceCurve>,
    /// (m, p_m) for the uncorrelated threshold `threshold_p`.
    pub threshold_p: f64,
    pub thresholds: Vec<(u32, f64)>,
}

fn error_of(o: &crate::induced::QubitOutcome, kind: ErrorKind) -> f64 {
    match kind {
        ErrorKind::PhaseFlip => o.eps_phi,
        ErrorKind::BitFlip => o.eps_theta,
    }
}

/// Fraction of events whose joint error exceeds each level, per pair.
pub fn exceedance_curve(
    outcomes: &[EventOutcome],
    pair: (&str, &str),
    kind: ErrorKind,
    levels: &[f64],
    rule: JointRule,
) -> Result<ExceedanceCurve> {
    if outcomes.is_empty() {
        return Err(Error::invalid("outcomes", "need at least one event"));
    }
    let idx = |id: &str| {
        outcomes[0]
            .per_qubit
            .iter()
            .position(|q| q.qubit_id == id)
            .ok_or_else(|| Error::invalid("pair", format!("unknown qubit {id}")))
    };
    let (ia, ib) = (idx(pair.0)?, idx(pair.1)?);
    let joint: Vec<f64> = outcomes
        .iter()
        .map(|o| rule.combine(error_of(&o.per_qubit[ia], kind), error_of(&o.per_qubit[ib], kind)))
        .collect();
    let n = joint.len() as f64;
    let points = levels
        .iter()
        .map(|&level| {
            let k = joint.iter().filter(|&&e| e > level).count() as f64;
            let f = k / n;
            ExceedancePoint { level, fraction: f, stderr: (f * (1.0 - f) / n).sqrt() }
        })
        .collect();
    Ok(ExceedanceCurve { pair: (pair.0.to_string(), pair.1.to_string()), kind, n_events: outcomes.len(), points })
}

/// Exceedance curves for every pair and both error kinds, plus the p^m table.
pub fn exceedance_curves(outcomes: &[EventOutcome], pairs: &[(String, String)], levels: &[f64], rule: JointRule) -> Result<ErrorReport> {
    let mut curves = Vec::new();
    for kind in [ErrorKind::PhaseFlip, ErrorKind::BitFlip] {
        for (a, b) in pairs {
            curves.push(exceedance_curve(outcomes, (a, b), kind, levels, rule)?);
        }
    }
    let threshold_p: f64 = 1e-2;
    let thresholds = (1..=4).map(|m| (m, threshold_p.powi(m as i32))).collect();
    Ok(ErrorReport { rule, curves, threshold_p, thresholds })
}

/// Log-spaced levels from 10^lo to 10^hi, `per_decade` per decade.
pub fn log_levels(lo: i32, hi: i32, per_decade: usize) -> Vec<f64> {
    let n = (hi - lo) as usize * per_decade;
    (0..=n).map(|i| 10f64.powf(lo as f64 + i as f64 / per_decade as f64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn reference_transmon() -> TransmonParams {
        TransmonParams::new(250e6, 50.0, TAU * 5e9, 1e-6).unwrap()
    }

    #[test]
    fn dispersion_value() {
        let d = charge_dispersion(&reference_transmon()) / TAU;
        assert!((d - 5957.1).abs() < 0.5, "{d}");
    }

    #[test]
    fn phase_flip_periodicity() {
        let d = TAU * 6000.0;
        let top = phase_flip_error(1.0, d, 1e-6);
        assert!((top - (d * 1e-6).powi(2) / 3.0).abs() < 1e-15);
        for &q in &[0.1, 0.37, 0.8] {
            let e = phase_flip_error(q, d, 1e-6);
            assert!((e - phase_flip_error(q + 2.0, d, 1e-6)).abs() < 1e-18);
            assert!((e - phase_flip_error(-q, d, 1e-6)).abs() < 1e-18);
            assert!(e < top);
        }
    }

    #[test]
    fn thresholds() {
        assert_eq!(fault_threshold(1e-2, 1).unwrap(), 1e-2);
        assert!((fault_threshold(1e-2, 2).unwrap() - 1e-4).abs() < 1e-19);
        assert!(fault_threshold(1.0, 2).is_err());
    }

    #[test]
    fn perpendicular_dipole_gives_no_rotation() {
        let p = reference_transmon();
        assert_eq!(deposit_rotation(1e4, 1e3, 0.0, &p, 6e3), 0.0);
        let t1 = deposit_rotation(1e4, 1e3, 1.0, &p, 6e3);
        assert!((deposit_rotation(4e4, 1e3, 1.0, &p, 6e3) - 2.0 * t1).abs() < 1e-15);
        assert!((deposit_rotation(1e4, 1e3, 1.0, &p, 12e3) - 2.0 * t1).abs() < 1e-15);
    }
}
