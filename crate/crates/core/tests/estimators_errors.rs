mod common;

use chargeburst::induced::{alias, measure};
use chargeburst::qubit_errors::{deposit_energy_ec, deposit_rotation, exceedance_curve, fault_threshold, phase_flip_error, ErrorKind, JointRule, TransmonParams};
use chargeburst::recovery::{dropout_curve, fit_dropout, rate_from_xqp, xqp_from_rate, RecoveryParams};
use chargeburst::rng::{stream, Purpose};
use chargeburst::stats::{
    asymmetry_1324, charge_asymmetry, compose_observed, corrected_joint_probability, is_jump, joint_histogram, quadrant_counts, JumpRecord,
    JumpSeries,
};
use proptest::prelude::*;
use rand::Rng;

fn series(rows: &[(f64, f64)]) -> JumpSeries {
    JumpSeries {
        qubit_ids: vec!["A".into(), "B".into()],
        records: rows
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| JumpRecord { cycle_id: i as u64, dq: vec![a, b], is_jump: vec![is_jump(a, 0.1), is_jump(b, 0.1)] })
            .collect(),
    }
}

proptest! {
    #[test]
    fn alias_lands_in_half_open_interval(x in -1e3f64..1e3) {
        let a = alias(x);
        prop_assert!((-0.5..0.5).contains(&a));
        prop_assert!(((x - a) - (x - a).round()).abs() < 1e-9);
    }

    #[test]
    fn alias_is_periodic_and_idempotent(x in -50.0f64..50.0, k in -20i32..20) {
        let a = alias(x);
        prop_assert!((alias(x + k as f64) - a).abs() < 1e-9 || (alias(x + k as f64) - a).abs() > 1.0 - 1e-9);
        prop_assert_eq!(alias(a), a);
    }

    #[test]
    fn alias_is_odd_away_from_the_edge(x in -0.49f64..0.49, k in -5i32..5) {
        prop_assert!((alias(-(x + k as f64)) + alias(x + k as f64)).abs() < 1e-9);
    }

    #[test]
    fn noiseless_measurement_is_identity(x in -0.5f64..0.5) {
        let mut rng = stream(0, Purpose::Noise, 0);
        prop_assert_eq!(measure(x, 0.0, &mut rng), alias(x));
    }

    #[test]
    fn coincidence_correction_inverts_composition(p_a in 0.0f64..0.3, p_b in 0.0f64..0.3, p_ab in 0.0f64..0.3) {
        let (oa, ob, oab) = compose_observed(p_a, p_b, p_ab);
        let back = corrected_joint_probability(oa, ob, oab).unwrap();
        prop_assert!((back - p_ab).abs() < 1e-12, "{} vs {}", back, p_ab);
    }

    #[test]
    fn independent_jumps_have_no_joint_rate(p_a in 0.0f64..0.5, p_b in 0.0f64..0.5) {
        let v = corrected_joint_probability(p_a, p_b, p_a * p_b).unwrap();
        prop_assert!(v.abs() < 1e-12);
    }

    #[test]
    fn every_joint_jump_lands_in_one_quadrant(rows in prop::collection::vec((-0.5f64..0.5, -0.5f64..0.5), 1..300)) {
        let s = series(&rows);
        let q = quadrant_counts(&s, "A", "B").unwrap();
        let joint = s.records.iter().filter(|r| r.is_jump[0] && r.is_jump[1]).count() as u64;
        prop_assert_eq!(q.iter().sum::<u64>(), joint);
        let h = joint_histogram(&s, "A", "B", 0.02).unwrap();
        prop_assert_eq!(h.counts.iter().sum::<u64>(), rows.len() as u64);
    }

    #[test]
    fn mirrored_jumps_are_sign_balanced(rows in prop::collection::vec((0.11f64..0.5, 0.11f64..0.5), 1..100)) {
        let mut all: Vec<(f64, f64)> = rows.clone();
        all.extend(rows.iter().map(|&(a, b)| (-a, b)));
        let s = series(&all);
        prop_assert!((asymmetry_1324(&s, "A", "B").unwrap().value).abs() < 1e-12);
        let mut both = rows.clone();
        both.extend(rows.iter().map(|&(a, b)| (-a, -b)));
        prop_assert!((charge_asymmetry(&series(&both)).unwrap().value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn phase_flip_is_even_and_2e_periodic(dq in -3.0f64..3.0) {
        let d = 2.0 * std::f64::consts::PI * 6.0e3;
        let e = phase_flip_error(dq, d, 1e-6);
        prop_assert!((phase_flip_error(-dq, d, 1e-6) - e).abs() < 1e-15);
        prop_assert!((phase_flip_error(dq + 2.0, d, 1e-6) - e).abs() < 1e-15);
        prop_assert!(e <= phase_flip_error(1.0, d, 1e-6) + 1e-18);
    }

    #[test]
    fn rotation_scales_with_root_n_and_sound_speed(n in 1.0f64..1e6, g in 1.0f64..1e4, c in -1.0f64..1.0) {
        let p = TransmonParams::conventional();
        let t = deposit_rotation(n, g, c, &p, 6e3);
        prop_assert!((deposit_rotation(4.0 * n, g, c, &p, 6e3) - 2.0 * t).abs() <= 1e-12 * t.abs().max(1e-300));
        prop_assert!((deposit_rotation(n, g, c, &p, 12e3) - 2.0 * t).abs() <= 1e-12 * t.abs().max(1e-300));
    }

    #[test]
    fn fault_threshold_decreases_with_degree(p in 1e-6f64..0.999, m in 1u32..10) {
        prop_assert!(fault_threshold(p, m + 1).unwrap() < fault_threshold(p, m).unwrap());
    }

    #[test]
    fn exceedance_is_nonincreasing(errs in prop::collection::vec((0.0f64..1e-3, 0.0f64..1e-3), 1..200)) {
        let outcomes: Vec<_> = errs.iter().enumerate().map(|(i, &(a, b))| chargeburst::induced::EventOutcome {
            event_id: i as u64,
            species: chargeburst::source::Species::Gamma,
            time: i as f64,
            per_qubit: [("A", a), ("B", b)].iter().map(|&(id, e)| chargeburst::induced::QubitOutcome {
                qubit_id: id.into(), dq_raw: 0.0, dq_aliased: 0.0, dq_measured: 0.0, eps_phi: e, eps_theta: e,
            }).collect(),
        }).collect();
        let levels = chargeburst::qubit_errors::log_levels(-8, -3, 4);
        for rule in [JointRule::Min, JointRule::GeometricMean] {
            let c = exceedance_curve(&outcomes, ("A", "B"), ErrorKind::PhaseFlip, &levels, rule).unwrap();
            prop_assert!(c.points.windows(2).all(|w| w[1].fraction <= w[0].fraction));
        }
    }

    #[test]
    fn xqp_round_trip(x in 1e-9f64..1e-3) {
        let p = RecoveryParams::default();
        prop_assert!((xqp_from_rate(rate_from_xqp(x, &p), &p) / x - 1.0).abs() < 1e-13);
    }

    #[test]
    fn dropout_curve_is_bounded_and_continuous(t in -3e-3f64..8e-3) {
        let (tau, sigma) = (130e-6, 210e-6);
        let y = dropout_curve(t, tau, sigma);
        prop_assert!((0.0..=1.0).contains(&y));
        prop_assert!((dropout_curve(t + 1e-9, tau, sigma) - y).abs() < 1e-4);
    }
}

#[test]
fn dipole_energy_averages_to_a_third() {
    let p = TransmonParams::conventional();
    let mut rng = stream(9, Purpose::Dipole, 0);
    let n = 200_000;
    let full = deposit_energy_ec(1e4, 1e3, 1.0, &p, 6e3);
    let mean = (0..n).map(|_| deposit_energy_ec(1e4, 1e3, 2.0 * rng.random::<f64>() - 1.0, &p, 6e3)).sum::<f64>() / n as f64;
    // Var(c²) for uniform c is 4/45.
    let err = (4.0f64 / 45.0 / n as f64).sqrt() * full;
    assert!((mean - full / 3.0).abs() < 4.0 * err, "{mean} vs {}", full / 3.0);
}

#[test]
fn coincidence_correction_recovers_truth_under_sampling() {
    let (p_a, p_b, p_ab) = (0.04, 0.05, 0.025);
    let n = 1_000_000;
    let mut rng = stream(10, Purpose::Synthetic, 0);
    let (mut na, mut nb, mut nab) = (0u64, 0u64, 0u64);
    for _ in 0..n {
        let joint = rng.random::<f64>() < p_ab;
        let a = joint || rng.random::<f64>() < p_a;
        let b = joint || rng.random::<f64>() < p_b;
        na += a as u64;
        nb += b as u64;
        nab += (a && b) as u64;
    }
    let f = |k: u64| k as f64 / n as f64;
    let est = corrected_joint_probability(f(na), f(nb), f(nab)).unwrap();
    let se = (p_ab * (1.0 - p_ab) / n as f64).sqrt() * 1.2;
    assert!((est - p_ab).abs() < 4.0 * se, "{est} vs {p_ab} (se {se})");
}

#[test]
fn noiseless_dropout_fit_is_exact() {
    let (tau, sigma) = (130e-6, 210e-6);
    let s: Vec<(f64, f64)> = (0..76).map(|i| -1e-3 + 40e-6 * i as f64).map(|t| (t, 0.97 - 0.6 * dropout_curve(t, tau, sigma))).collect();
    let f = fit_dropout(&s, (100e-6, 150e-6)).unwrap();
    assert!((f.tau / tau - 1.0).abs() < 1e-6 && (f.sigma / sigma - 1.0).abs() < 1e-6, "{f:?}");
}

#[test]
fn dropout_curve_decays_with_rate_one_over_tau() {
    let (tau, sigma) = (130e-6, 210e-6);
    let r = dropout_curve(4e-3, tau, sigma) / dropout_curve(4e-3 + tau, tau, sigma);
    assert!((r.ln() - 1.0).abs() < 1e-6);
    assert!(dropout_curve(-4e-3, tau, sigma) < 1e-30);
}
