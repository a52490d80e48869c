//! Quasiparticle-poisoning transient after an impact: the T₁ dropout curve,
//! its least-squares fit, the quasiparticle-density conversion, the phonon
//! dwell time, and a synthetic counting experiment.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ChipLayout;
use crate::rng::{stream, Purpose};
use crate::units::{ELEMENTARY_CHARGE, HBAR, UM_PER_M};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoveryParams {
    /// Recovery time τ (s).
    pub tau: f64,
    /// Timing jitter σ (s).
    pub sigma: f64,
    /// Superconducting gap Δ (eV).
    pub delta_gap: f64,
    /// ω₀₁ (rad/s).
    pub w01: f64,
}

impl Default for RecoveryParams {
    fn default() -> Self {
        RecoveryParams { tau: 130e-6, sigma: 210e-6, delta_gap: 190e-6, w01: std::f64::consts::TAU * 4.5e9 }
    }
}

impl RecoveryParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !(self.sigma > 0.0) {
            return Err(Error::invalid("recovery.tau/sigma", "must be positive"));
        }
        if !(self.delta_gap > 0.0) {
            return Err(Error::invalid("recovery.delta_gap", "must be positive"));
        }
        if !(self.w01 > 0.0) {
            return Err(Error::invalid("recovery.w01", "must be positive"));
        }
        Ok(())
    }
}

/// Scaled complementary error function e^{x²}·erfc(x).
pub fn erfcx(x: f64) -> f64 {
    if x < 5.0 {
        return (x * x).exp() * libm::erfc(x);
    }
    // Continued fraction, evaluated from the tail.
    let mut f = x;
    for k in (1..=60).rev() {
        f = x + 0.5 * k as f64 / f;
    }
    1.0 / (std::f64::consts::PI.sqrt() * f)
}

/// Exponential recovery step convolved with a Gaussian of width σ:
/// ½·exp((σ² − 2τt)/2τ²)·erfc((σ² − τt)/(√2στ)).
pub fn dropout_curve(t: f64, tau: f64, sigma: f64) -> f64 {
    let b = (sigma * sigma - tau * t) / (std::f64::consts::SQRT_2 * sigma * tau);
    let p = if b > 0.0 {
        // Rewritten so the large exponent and the tiny erfc cancel analytically.
        0.5 * (-t * t / (2.0 * sigma * sigma)).exp() * erfcx(b)
    } else {
        0.5 * ((sigma * sigma - 2.0 * tau * t) / (2.0 * tau * tau)).exp() * libm::erfc(b)
    };
    p.clamp(0.0, 1.0)
}

/// Result of a dropout fit; amplitude and baseline are the linear nuisance
/// parameters of `y = baseline + amplitude·P₁(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropoutFit {
    pub tau: f64,
    pub tau_err: f64,
    pub sigma: f64,
    pub sigma_err: f64,
    pub amplitude: f64,
    pub baseline: f64,
    pub rss: f64,
    pub iterations: usize,
    /// τ ran far beyond the sampled time span.
    pub tau_unbounded: bool,
    pub residual_trace: Vec<f64>,
}

/// Optimal (baseline, amplitude) and residuals for fixed (τ, σ).
fn project(samples: &[(f64, f64)], tau: f64, sigma: f64) -> (f64, f64, DVector<f64>) {
    let n = samples.len() as f64;
    let b: Vec<f64> = samples.iter().map(|&(t, _)| dropout_curve(t, tau, sigma)).collect();
    let (sb, sbb) = (b.iter().sum::<f64>(), b.iter().map(|v| v * v).sum::<f64>());
    let sy: f64 = samples.iter().map(|s| s.1).sum();
    let sby: f64 = samples.iter().zip(&b).map(|(s, v)| s.1 * v).sum();
    let det = n * sbb - sb * sb;
    let (amp, base) = if det.abs() < 1e-300 { (0.0, sy / n) } else { ((n * sby - sb * sy) / det, (sbb * sy - sb * sby) / det) };
    let r = DVector::from_iterator(samples.len(), samples.iter().zip(&b).map(|(s, v)| s.1 - base - amp * v));
    (base, amp, r)
}

/// Levenberg-Marquardt fit of (τ, σ) with the linear parameters projected
/// out. Works in log τ, log σ; the Jacobian is by central differences.
pub fn fit_dropout(samples: &[(f64, f64)], guess: (f64, f64)) -> Result<DropoutFit> {
    if samples.len() < 10 {
        return Err(Error::invalid("samples", "need at least 10 samples"));
    }
    if !(guess.0 > 0.0 && guess.1 > 0.0) {
        return Err(Error::invalid("guess", "τ and σ must be positive"));
    }
    let span = samples.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max) - samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let resid = |p: &DVector<f64>| project(samples, p[0].exp(), p[1].exp()).2;
    let mut p = DVector::from_vec(vec![guess.0.ln(), guess.1.ln()]);
    let mut r = resid(&p);
    let mut rss = r.norm_squared();
    let mut lambda = 1e-3;
    let mut trace = vec![rss];
    let max_iter = 500;
    let jac = |p: &DVector<f64>| {
        let mut j = DMatrix::zeros(samples.len(), 2);
        for k in 0..2 {
            let h = 1e-6;
            let mut up = p.clone();
            let mut dn = p.clone();
            up[k] += h;
            dn[k] -= h;
            j.set_column(k, &((resid(&up) - resid(&dn)) / (2.0 * h)));
        }
        j
    };
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let j = jac(&p);
        let jtj = j.transpose() * &j;
        let g = j.transpose() * &r;
        let mut accepted = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for d in 0..2 {
                a[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&(-&g)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = &p + &step;
            let rt = resid(&trial);
            let rss_t = rt.norm_squared();
            if rss_t.is_finite() && rss_t <= rss {
                let small = step.amax() < 1e-8;
                p = trial;
                r = rt;
                rss = rss_t;
                lambda = (lambda * 0.3).max(1e-12);
                accepted = true;
                trace.push(rss);
                if small {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if converged || !accepted || p[0] > (1e3 * span.max(1e-300)).ln() {
            // Rejected steps at large damping mean we are at the minimum.
            converged = converged || !accepted;
            break;
        }
    }
    let (tau, sigma) = (p[0].exp(), p[1].exp());
    let tau_unbounded = tau > 1e2 * span;
    if !converged && !tau_unbounded {
        return Err(Error::FitFailed { reason: format!("no convergence after {iterations} iterations"), residual_trace: trace });
    }
    let (baseline, amplitude, _) = project(samples, tau, sigma);
    let j = jac(&p);
    let dof = (samples.len() as f64 - 4.0).max(1.0);
    let s2 = rss / dof;
    let cov = (j.transpose() * &j).try_inverse();
    let (tau_err, sigma_err) = match cov {
        Some(c) if c[(0, 0)] >= 0.0 && c[(1, 1)] >= 0.0 => (tau * (s2 * c[(0, 0)]).sqrt(), sigma * (s2 * c[(1, 1)]).sqrt()),
        _ if tau_unbounded => (f64::INFINITY, f64::INFINITY),
        _ => {
            return Err(Error::FitFailed { reason: "singular normal matrix (flat data?)".into(), residual_trace: trace });
        }
    };
    Ok(DropoutFit { tau, tau_err, sigma, sigma_err, amplitude, baseline, rss, iterations, tau_unbounded, residual_trace: trace })
}

fn gap_rate_scale(delta_gap_ev: f64, w01: f64) -> f64 {
    (2.0 * delta_gap_ev * ELEMENTARY_CHARGE * w01 / HBAR).sqrt()
}

/// x_QP = π·ΔΓ₀₁ / √(2Δω₀₁/ħ).
pub fn xqp_from_rate(delta_gamma: f64, p: &RecoveryParams) -> f64 {
    std::f64::consts::PI * delta_gamma / gap_rate_scale(p.delta_gap, p.w01)
}

/// ΔΓ₀₁ = (x_QP/π)·√(2Δω₀₁/ħ).
pub fn rate_from_xqp(x_qp: f64, p: &RecoveryParams) -> f64 {
    x_qp / std::f64::consts::PI * gap_rate_scale(p.delta_gap, p.w01)
}

/// x₀²/(β c_s z₀) with x₀ the chip side (s).
pub fn phonon_dwell_time(layout: &ChipLayout) -> f64 {
    let s = &layout.substrate;
    let x0 = s.side_x.max(s.side_y) / UM_PER_M;
    let z0 = s.thickness / UM_PER_M;
    x0 * x0 / (layout.anchor_fraction_beta * s.sound_speed * z0)
}

/// Settings of the synthetic dropout experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DropoutExperiment {
    pub n_events: u64,
    /// Time between measurement cycles (s).
    pub duty_cycle: f64,
    /// Idle time between the X pulse and readout (s).
    pub idle: f64,
    /// Window around the trigger (s).
    pub t_start: f64,
    pub t_end: f64,
    /// Background relaxation rate Γ₀₁ (1/s).
    pub gamma0: f64,
    /// Peak excess rate ΔΓ₀₁ just after the impact (1/s).
    pub delta_gamma_peak: f64,
}

impl Default for DropoutExperiment {
    fn default() -> Self {
        DropoutExperiment {
            n_events: 142,
            duty_cycle: 40e-6,
            idle: 10e-6,
            t_start: -1.0e-3,
            t_end: 2.0e-3,
            gamma0: 1.0 / 30e-6 * 0.1,
            delta_gamma_peak: 6.0e4,
        }
    }
}

/// Emulates the counting experiment: each event's true impact time is offset
/// from the trigger by N(0, σ); in every cycle the qubit is heralded in the
/// ground state, excited, left idle and measured, giving |1⟩ with
/// probability exp(−Γ₀₁(t)·idle). Returns (t, averaged P₁) per cycle.
pub fn synthetic_dropout(params: &RecoveryParams, exp: &DropoutExperiment, seed: u64) -> Result<Vec<(f64, f64)>> {
    params.validate()?;
    if !(exp.duty_cycle > 0.0 && exp.t_end > exp.t_start && exp.n_events > 0) {
        return Err(Error::invalid("experiment", "invalid timing window"));
    }
    let n_cycles = ((exp.t_end - exp.t_start) / exp.duty_cycle).floor() as usize + 1;
    let mut ones = vec![0u64; n_cycles];
    for e in 0..exp.n_events {
        let mut rng = stream(seed, Purpose::Synthetic, e);
        let g: f64 = StandardNormal.sample(&mut rng);
        let t0 = params.sigma * g;
        for (c, n1) in ones.iter_mut().enumerate() {
            let t = exp.t_start + c as f64 * exp.duty_cycle;
            let dt = t - t0;
            let excess = if dt >= 0.0 { exp.delta_gamma_peak * (-dt / params.tau).exp() } else { 0.0 };
            let p1 = (-(exp.gamma0 + excess) * exp.idle).exp();
            *n1 += (rng.random::<f64>() < p1) as u64;
        }
    }
    Ok(ones.iter().enumerate().map(|(c, &k)| (exp.t_start + c as f64 * exp.duty_cycle, k as f64 / exp.n_events as f64)).collect())
}

/// Noisy samples of `baseline + amplitude·P₁(t)` with binomial counting noise.
pub fn binomial_samples<R: Rng + ?Sized>(times: &[f64], tau: f64, sigma: f64, baseline: f64, amplitude: f64, shots: u64, rng: &mut R) -> Vec<(f64, f64)> {
    times
        .iter()
        .map(|&t| {
            let p = (baseline + amplitude * dropout_curve(t, tau, sigma)).clamp(0.0, 1.0);
            let k = Binomial::new(shots, p).expect("valid probability").sample(rng);
            (t, k as f64 / shots as f64)
        })
        .collect()
}
