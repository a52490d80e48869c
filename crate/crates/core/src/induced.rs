//! Induced offset charge, aliasing, measurement noise and the Ramsey
//! readout transfer function.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::WeightingGrid;
use crate::transport::CarrierSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QubitOutcome {
    pub qubit_id: String,
    pub dq_raw: f64,
    pub dq_aliased: f64,
    pub dq_measured: f64,
    pub eps_phi: f64,
    pub eps_theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventOutcome {
    pub event_id: u64,
    pub species: crate::source::Species,
    pub time: f64,
    pub per_qubit: Vec<QubitOutcome>,
}

/// Δq = Σ (−sign)·weight·α(r), in units of e. Carriers outside the grid add nothing.
pub fn induced_offset_charge(carriers: &CarrierSet, grid: &WeightingGrid) -> f64 {
    carriers.entries.iter().map(|c| -(c.sign as f64) * c.weight * grid.alpha_or_zero(c.position)).sum()
}

/// Folds a charge into [−0.5, 0.5).
pub fn alias(dq: f64) -> f64 {
    let a = dq - dq.round_ties_even();
    if a >= 0.5 { a - 1.0 } else { a }
}

/// Adds Gaussian readout noise and re-aliases.
pub fn measure<R: Rng + ?Sized>(dq_aliased: f64, sigma_q: f64, rng: &mut R) -> f64 {
    if sigma_q == 0.0 {
        return alias(dq_aliased);
    }
    let g: f64 = StandardNormal.sample(rng);
    alias(dq_aliased + sigma_q * g)
}

/// P₁ after the charge-sensitive Ramsey sequence at gate charge `n_g` (e).
pub fn ramsey_response(n_g: f64, contrast: f64, offset: f64) -> f64 {
    offset + 0.5 * contrast * (PI * (PI * n_g).cos()).cos()
}

/// One simulated Ramsey scan: `points` gate charges across one period, each
/// averaged over `shots` single-shot readouts.
pub fn ramsey_scan<R: Rng + ?Sized>(
    offset_charge: f64,
    points: usize,
    shots: u64,
    contrast: f64,
    offset: f64,
    rng: &mut R,
) -> Vec<(f64, f64)> {
    (0..points)
        .map(|i| {
            let n_ext = i as f64 / points as f64;
            let p = ramsey_response(n_ext + offset_charge, contrast, offset).clamp(0.0, 1.0);
            let k = Binomial::new(shots, p).expect("valid probability").sample(rng);
            (n_ext, k as f64 / shots as f64)
        })
        .collect()
}

/// Least-squares fit of (contrast, offset) at fixed charge; returns the residual.
fn linear_fit(scan: &[(f64, f64)], q: f64) -> (f64, f64, f64) {
    // Model: y = offset + contrast·b(x) with b = cos(π cos(π(x+q)))/2.
    let n = scan.len() as f64;
    let (mut sb, mut sbb, mut sy, mut sby) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in scan {
        let b = ramsey_response(x + q, 1.0, 0.0);
        sb += b;
        sbb += b * b;
        sy += y;
        sby += b * y;
    }
    let det = n * sbb - sb * sb;
    let (c, o) = if det.abs() < 1e-15 { (0.0, sy / n) } else { ((n * sby - sb * sy) / det, (sbb * sy - sb * sby) / det) };
    let rss = scan.iter().map(|&(x, y)| (y - o - c * ramsey_response(x + q, 1.0, 0.0)).powi(2)).sum();
    (c, o, rss)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RamseyFit {
    /// Offset charge, aliased to [−0.5, 0.5).
    pub offset_charge: f64,
    pub contrast: f64,
    pub offset: f64,
    pub rss: f64,
}

/// Recovers the offset charge of a scan. The response is even in n_g, so the
/// sign is fixed by requiring positive contrast and the result is reported
/// modulo 1e; a scan only resolves |δn_g|.
pub fn fit_ramsey_scan(scan: &[(f64, f64)]) -> Result<RamseyFit> {
    if scan.len() < 4 {
        return Err(Error::invalid("scan", "need at least 4 points"));
    }
    let grid = 1000;
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..grid {
        let q = -0.5 + i as f64 / grid as f64;
        let (c, _, rss) = linear_fit(scan, q);
        if c > 0.0 && rss < best.0 {
            best = (rss, q);
        }
    }
    if !best.0.is_finite() {
        return Err(Error::FitFailed { reason: "no positive-contrast solution".into(), residual_trace: Vec::new() });
    }
    // Golden-section refinement around the grid minimum.
    let (mut a, mut b) = (best.1 - 1.0 / grid as f64, best.1 + 1.0 / grid as f64);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let c1 = b - g * (b - a);
        let c2 = a + g * (b - a);
        if linear_fit(scan, c1).2 < linear_fit(scan, c2).2 {
            b = c2;
        } else {
            a = c1;
        }
    }
    let q = 0.5 * (a + b);
    let (contrast, offset, rss) = linear_fit(scan, q);
    Ok(RamseyFit { offset_charge: alias(q), contrast, offset, rss })
}

/// Distance between two charges on the 1e circle, ignoring sign (the scan
/// cannot tell δn_g from −δn_g).
pub fn charge_distance_unsigned(a: f64, b: f64) -> f64 {
    (alias(a).abs() - alias(b).abs()).abs()
}
