//! Charge-jump detection and the single- and joint-qubit statistics built
//! from it: correlation probability with coincidence correction, charge and
//! 13/24 asymmetries, rates and joint histograms.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::induced::{alias, EventOutcome};

/// Default jump threshold (e).
pub const JUMP_THRESHOLD: f64 = 0.1;

/// 0.1 < |dq| ≤ 0.5 with the given lower threshold.
#[inline]
pub fn is_jump(dq: f64, threshold: f64) -> bool {
    let a = dq.abs();
    a > threshold && a <= 0.5
}

/// Per-cycle (or per-event) aliased charges and jump flags, indexed like `qubit_ids`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    pub cycle_id: u64,
    pub dq: Vec<f64>,
    pub is_jump: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpSeries {
    pub qubit_ids: Vec<String>,
    pub records: Vec<JumpRecord>,
}

impl JumpSeries {
    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.qubit_ids.iter().position(|q| q == id).ok_or_else(|| Error::invalid("qubit", format!("unknown qubit {id}")))
    }
}

fn check_threshold(threshold: f64) -> Result<()> {
    if !(threshold > 0.0 && threshold <= 0.5) {
        return Err(Error::invalid("threshold", "must lie in (0, 0.5]"));
    }
    Ok(())
}

/// Event mode: one record per event from the measured charges.
pub fn detect_jumps(outcomes: &[EventOutcome], threshold: f64) -> Result<JumpSeries> {
    check_threshold(threshold)?;
    let qubit_ids = outcomes.first().map(|o| o.per_qubit.iter().map(|q| q.qubit_id.clone()).collect()).unwrap_or_default();
    let records = outcomes
        .iter()
        .map(|o| {
            let dq: Vec<f64> = o.per_qubit.iter().map(|q| q.dq_measured).collect();
            let is_jump = dq.iter().map(|&d| is_jump(d, threshold)).collect();
            JumpRecord { cycle_id: o.event_id, dq, is_jump }
        })
        .collect();
    Ok(JumpSeries { qubit_ids, records })
}

/// Time-series mode: cycle-to-cycle differences of a measured charge series.
/// `series[c][q]` is the measured (aliased) charge of qubit q in cycle c.
pub fn detect_jumps_series(qubit_ids: &[String], series: &[Vec<f64>], threshold: f64) -> Result<JumpSeries> {
    check_threshold(threshold)?;
    let records = series
        .windows(2)
        .enumerate()
        .map(|(c, w)| {
            let dq: Vec<f64> = w[1].iter().zip(&w[0]).map(|(b, a)| alias(b - a)).collect();
            let is_jump = dq.iter().map(|&d| is_jump(d, threshold)).collect();
            JumpRecord { cycle_id: c as u64 + 1, dq, is_jump }
        })
        .collect();
    Ok(JumpSeries { qubit_ids: qubit_ids.to_vec(), records })
}

/// Emulates the cycle-based measurement: events are binned into cycles of
/// `cycle_time`, their raw charges accumulate, and each cycle's charge is
/// read out with Gaussian noise and aliased.
pub fn emulate_time_series<R: Rng + ?Sized>(
    outcomes: &[EventOutcome],
    cycle_time: f64,
    n_cycles: usize,
    sigma_q: f64,
    rng: &mut R,
) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    if !(cycle_time > 0.0) {
        return Err(Error::invalid("cycle_time", "must be positive"));
    }
    let ids: Vec<String> = outcomes.first().map(|o| o.per_qubit.iter().map(|q| q.qubit_id.clone()).collect()).unwrap_or_default();
    let nq = ids.len();
    let mut charge = vec![0.0; nq];
    let mut series = Vec::with_capacity(n_cycles + 1);
    let mut next = 0;
    for c in 0..=n_cycles {
        let t_end = c as f64 * cycle_time;
        while next < outcomes.len() && outcomes[next].time <= t_end {
            for (q, o) in charge.iter_mut().zip(&outcomes[next].per_qubit) {
                *q += o.dq_raw;
            }
            next += 1;
        }
        let row = charge
            .iter()
            .map(|&q| {
                let g: f64 = StandardNormal.sample(rng);
                alias(q + sigma_q * g)
            })
            .collect();
        series.push(row);
    }
    Ok((ids, series))
}

/// Coincidence-corrected joint probability, floored at 0.
pub fn corrected_joint_probability(p_obs_a: f64, p_obs_b: f64, p_obs_ab: f64) -> Result<f64> {
    for (n, v) in [("p_obs_a", p_obs_a), ("p_obs_b", p_obs_b), ("p_obs_ab", p_obs_ab)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::invalid(n, "must lie in [0, 1]"));
        }
    }
    let den = 1.0 + p_obs_ab - (p_obs_a + p_obs_b);
    if !(den > 0.0) {
        return Err(Error::invalid("p_obs", "pathological input: nonpositive denominator"));
    }
    Ok(((p_obs_ab - p_obs_a * p_obs_b) / den).max(0.0))
}

/// Observed probabilities generated by true single rates p_a, p_b and joint rate p_ab.
pub fn compose_observed(p_a: f64, p_b: f64, p_ab: f64) -> (f64, f64, f64) {
    (p_ab + p_a * (1.0 - p_ab), p_ab + p_b * (1.0 - p_ab), p_ab + p_a * p_b * (1.0 - p_ab))
}

/// 2·p_AB / (p_A + p_B), clamped to [0, 1].
pub fn correlation_probability(p_ab: f64, p_obs_a: f64, p_obs_b: f64) -> Result<f64> {
    let den = p_obs_a + p_obs_b;
    if !(den > 0.0) {
        return Err(Error::Undefined("correlation probability with no single-qubit jumps"));
    }
    Ok((2.0 * p_ab / den).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

/// Fraction of jumps that are positive, over all qubits.
pub fn charge_asymmetry(jumps: &JumpSeries) -> Result<Estimate> {
    let (mut pos, mut total) = (0u64, 0u64);
    for r in &jumps.records {
        for (d, j) in r.dq.iter().zip(&r.is_jump) {
            if *j {
                total += 1;
                if *d > 0.0 {
                    pos += 1;
                }
            }
        }
    }
    if total == 0 {
        return Err(Error::Undefined("charge asymmetry without jumps"));
    }
    let f = pos as f64 / total as f64;
    Ok(Estimate { value: f, stderr: (f * (1.0 - f) / total as f64).sqrt() })
}

/// Joint-jump counts by sign quadrant: [Q1 (+,+), Q2 (−,+), Q3 (−,−), Q4 (+,−)].
pub fn quadrant_counts(jumps: &JumpSeries, a: &str, b: &str) -> Result<[u64; 4]> {
    let (ia, ib) = (jumps.index_of(a)?, jumps.index_of(b)?);
    let mut n = [0u64; 4];
    for r in &jumps.records {
        if r.is_jump[ia] && r.is_jump[ib] {
            let q = match (r.dq[ia] > 0.0, r.dq[ib] > 0.0) {
                (true, true) => 0,
                (false, true) => 1,
                (false, false) => 2,
                (true, false) => 3,
            };
            n[q] += 1;
        }
    }
    Ok(n)
}

/// (N₁ + N₃ − N₂ − N₄) / N over joint jumps of a pair.
pub fn asymmetry_1324(jumps: &JumpSeries, a: &str, b: &str) -> Result<Estimate> {
    let n = quadrant_counts(jumps, a, b)?;
    let total: u64 = n.iter().sum();
    if total == 0 {
        return Err(Error::Undefined("13/24 asymmetry without joint jumps"));
    }
    let v = (n[0] + n[2]) as f64 / total as f64 * 2.0 - 1.0;
    let f = (v + 1.0) / 2.0;
    Ok(Estimate { value: v, stderr: 2.0 * (f * (1.0 - f) / total as f64).sqrt() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    pub qubit_a: String,
    pub qubit_b: String,
    /// Center-to-center distance (µm).
    pub separation: f64,
    pub n_cycles: u64,
    pub p_obs_a: Estimate,
    pub p_obs_b: Estimate,
    pub p_obs_ab: Estimate,
    pub p_ab: Estimate,
    pub p_corr: Option<Estimate>,
    pub asym_1324: Option<Estimate>,
}

/// Whether joint probabilities are corrected for random coincidences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coincidence {
    /// Each record holds at most one event; p_AB = p_AB^obs.
    None,
    /// Records are measurement cycles that may hold unrelated events.
    Correct,
}

fn binom(k: u64, n: u64) -> Estimate {
    let f = k as f64 / n as f64;
    Estimate { value: f, stderr: (f * (1.0 - f) / n as f64).sqrt() }
}

pub fn pair_stats(jumps: &JumpSeries, a: &str, b: &str, separation: f64, coincidence: Coincidence) -> Result<PairStats> {
    let (ia, ib) = (jumps.index_of(a)?, jumps.index_of(b)?);
    let n = jumps.records.len() as u64;
    if n == 0 {
        return Err(Error::invalid("jumps", "no cycles"));
    }
    let (mut na, mut nb, mut nab) = (0u64, 0u64, 0u64);
    for r in &jumps.records {
        na += r.is_jump[ia] as u64;
        nb += r.is_jump[ib] as u64;
        nab += (r.is_jump[ia] && r.is_jump[ib]) as u64;
    }
    let (pa, pb, pab) = (binom(na, n), binom(nb, n), binom(nab, n));
    let p_ab_value = match coincidence {
        Coincidence::None => pab.value,
        Coincidence::Correct => corrected_joint_probability(pa.value, pb.value, pab.value)?,
    };
    let den_ab = 1.0 + pab.value - pa.value - pb.value;
    let p_ab = Estimate { value: p_ab_value, stderr: if den_ab > 0.0 { pab.stderr / den_ab } else { f64::NAN } };
    let p_corr = correlation_probability(p_ab.value, pa.value, pb.value).ok().map(|v| {
        // Delta method on 2x/(y+z), treating the counts as the dominant noise.
        let s = pa.value + pb.value;
        let rel = (p_ab.stderr / p_ab.value.max(1e-300)).powi(2) + (pa.stderr.powi(2) + pb.stderr.powi(2)) / (s * s);
        Estimate { value: v, stderr: v * rel.sqrt() }
    });
    let asym = asymmetry_1324(jumps, a, b).ok();
    Ok(PairStats {
        qubit_a: a.to_string(),
        qubit_b: b.to_string(),
        separation,
        n_cycles: n,
        p_obs_a: pa,
        p_obs_b: pb,
        p_obs_ab: pab,
        p_ab,
        p_corr,
        asym_1324: asym,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub id: String,
    pub count: u64,
    /// Hz.
    pub rate: f64,
    pub stderr: f64,
    /// 95% upper limit (Hz), reported for every rate.
    pub upper_95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatesReport {
    pub cycle_time: f64,
    pub n_cycles: u64,
    pub qubits: Vec<Rate>,
    /// Pair rates from the corrected joint probability.
    pub pairs: Vec<Rate>,
}

/// Jump rates Γ = count / (n_cycles · cycle_time).
pub fn rates_report(jumps: &JumpSeries, pairs: &[PairStats], cycle_time: f64) -> Result<RatesReport> {
    if !(cycle_time > 0.0) {
        return Err(Error::invalid("cycle_time", "must be positive"));
    }
    let n = jumps.records.len() as u64;
    if n == 0 {
        return Err(Error::invalid("jumps", "zero cycles"));
    }
    let t = n as f64 * cycle_time;
    let rate = |id: String, k: u64| Rate {
        id,
        count: k,
        rate: k as f64 / t,
        stderr: (k as f64).sqrt() / t,
        // Gaussian approximation above a handful of counts, exact for zero.
        upper_95: if k == 0 { 2.995_732 / t } else { (k as f64 + 1.645 * (k as f64).sqrt() + 1.0) / t },
    };
    let qubits = jumps
        .qubit_ids
        .iter()
        .enumerate()
        .map(|(q, id)| rate(id.clone(), jumps.records.iter().filter(|r| r.is_jump[q]).count() as u64))
        .collect();
    let pairs = pairs
        .iter()
        .map(|p| {
            let k = (p.p_ab.value * n as f64).round() as u64;
            let mut r = rate(format!("{}-{}", p.qubit_a, p.qubit_b), k);
            r.rate = p.p_ab.value / cycle_time;
            r.stderr = p.p_ab.stderr / cycle_time;
            r
        })
        .collect();
    Ok(RatesReport { cycle_time, n_cycles: n, qubits, pairs })
}

/// 2D histogram of joint aliased charges over [−0.5, 0.5)².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointHistogram {
    pub qubit_a: String,
    pub qubit_b: String,
    pub bin_width: f64,
    pub bins: usize,
    /// Row-major counts, `counts[ia * bins + ib]`.
    pub counts: Vec<u64>,
}

pub fn joint_histogram(jumps: &JumpSeries, a: &str, b: &str, bin_width: f64) -> Result<JointHistogram> {
    if !(bin_width > 0.0 && bin_width <= 1.0) {
        return Err(Error::invalid("bin_width", "must lie in (0, 1]"));
    }
    let (ia, ib) = (jumps.index_of(a)?, jumps.index_of(b)?);
    let bins = (1.0 / bin_width).round() as usize;
    let mut counts = vec![0u64; bins * bins];
    let bin = |v: f64| (((v + 0.5) / bin_width).floor().max(0.0) as usize).min(bins - 1);
    for r in &jumps.records {
        counts[bin(r.dq[ia]) * bins + bin(r.dq[ib])] += 1;
    }
    Ok(JointHistogram { qubit_a: a.to_string(), qubit_b: b.to_string(), bin_width, bins, counts })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(rows: &[[f64; 2]]) -> JumpSeries {
        JumpSeries {
            qubit_ids: vec!["A".into(), "B".into()],
            records: rows
                .iter()
                .enumerate()
                .map(|(i, r)| JumpRecord { cycle_id: i as u64, dq: r.to_vec(), is_jump: r.iter().map(|&d| is_jump(d, 0.1)).collect() })
                .collect(),
        }
    }

    #[test]
    fn threshold_rule() {
        assert!(!is_jump(0.09, 0.1));
        assert!(is_jump(0.11, 0.1));
        assert!(!is_jump(0.1, 0.1));
        assert!(is_jump(-0.5, 0.1));
    }

    #[test]
    fn table_row() {
        let p = corrected_joint_probability(0.055, 0.061, 0.027).unwrap();
        assert!((p - 0.025_955).abs() < 1e-6, "{p}");
        assert!((correlation_probability(0.026, 0.055, 0.061).unwrap() - 0.448_275_9).abs() < 1e-6);
        assert_eq!(corrected_joint_probability(0.2, 0.3, 0.06).unwrap(), 0.0);
        assert!(corrected_joint_probability(0.5, 0.5, 0.3).is_ok());
        assert!(corrected_joint_probability(0.9, 0.9, 0.5).is_err());
    }

    #[test]
    fn compose_then_invert() {
        let (a, b, ab) = compose_observed(0.03, 0.035, 0.026);
        let p = corrected_joint_probability(a, b, ab).unwrap();
        assert!((p - 0.026).abs() < 1e-15);
    }

    #[test]
    fn asymmetries() {
        let s = series(&[[0.2, 0.3], [-0.2, -0.3], [0.2, 0.0], [0.2, 0.3]]);
        assert_eq!(asymmetry_1324(&s, "A", "B").unwrap().value, 1.0);
        assert_eq!(quadrant_counts(&s, "A", "B").unwrap(), [2, 0, 1, 0]);
        assert!((charge_asymmetry(&s).unwrap().value - 5.0 / 7.0).abs() < 1e-15);
        assert!(charge_asymmetry(&series(&[[0.0, 0.05]])).is_err());
        assert!(asymmetry_1324(&series(&[[0.3, 0.05]]), "A", "B").is_err());
    }

    #[test]
    fn series_differences_alias() {
        let ids = vec!["A".to_string()];
        let s = detect_jumps_series(&ids, &[vec![0.45], vec![-0.45], vec![-0.45]], 0.1).unwrap();
        assert_eq!(s.records.len(), 2);
        assert!((s.records[0].dq[0] - 0.1).abs() < 1e-12);
        assert!(!s.records[1].is_jump[0]);
    }

    #[test]
    fn rates() {
        let mut rows = vec![[0.0, 0.0]; 1000];
        for r in rows.iter_mut().take(55) {
            r[0] = 0.3;
        }
        let s = series(&rows);
        let r = rates_report(&s, &[], 44.0).unwrap();
        assert!((r.qubits[0].rate - 0.055 / 44.0).abs() < 1e-15);
        assert_eq!(r.qubits[1].rate, 0.0);
        assert!(r.qubits[1].upper_95 > 0.0);
    }

    #[test]
    fn histogram_conserves_counts() {
        let s = series(&[[0.2, 0.3], [-0.5, 0.49999], [0.0, -0.1]]);
        let h = joint_histogram(&s, "A", "B", 0.02).unwrap();
        assert_eq!(h.bins, 50);
        assert_eq!(h.counts.iter().sum::<u64>(), 3);
    }
}
