//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any line fails.

mod common;

use std::io::Write;

use chargeburst::config::SimulationConfig;
use chargeburst::field::{solve_weighting_for, GridSpec, WallBoundary, WeightingGrid};
use chargeburst::geometry::{default_layout, default_substrate, QubitGeometry};
use chargeburst::induced::alias;
use chargeburst::pipeline;
use chargeburst::qubit_errors::{charge_dispersion, exceedance_curve, fault_threshold, ErrorKind, JointRule, TransmonParams};
use chargeburst::recovery::{binomial_samples, dropout_curve, fit_dropout, phonon_dwell_time, synthetic_dropout, DropoutExperiment, RecoveryParams};
use chargeburst::rng::{stream, Purpose};
use chargeburst::source::{sample_event_stream, SourceSpec, Species, StreamLength};
use chargeburst::stats::{compose_observed, corrected_joint_probability};
use chargeburst::transport::{build_charge_pdf, Kinematics, PdfGrid, TransportParams};
use common::{fixture, ks_statistic, scalar, KS_CRITICAL_1PCT};
use rand::Rng;

struct Report {
    failed: Vec<usize>,
}

impl Report {
    fn line(&mut self, id: usize, ok: bool, detail: String) {
        if !ok {
            self.failed.push(id);
        }
        // Written past the harness capture so the lines show in every run.
        let _ = writeln!(std::io::stderr(), "criterion {id:>2}: {} {detail}", if ok { "PASS" } else { "FAIL" });
    }
}

fn within(got: f64, want: f64, tol: f64) -> bool {
    (got - want).abs() <= tol
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

fn dispersion(r: &mut Report) {
    let hz = charge_dispersion(&TransmonParams::conventional()) / std::f64::consts::TAU;
    r.line(1, within(hz, 6.0e3, 0.02 * 6.0e3), format!("charge dispersion {hz:.1} Hz (target 6.0 kHz ± 2%)"));
}

fn thresholds(r: &mut Report) {
    let p2 = fault_threshold(1e-2, 2).unwrap();
    let p3 = fault_threshold(1e-2, 3).unwrap();
    let ok = within(p2, 1e-4, 1e-18) && within(p3, 1e-6, 1e-20);
    r.line(2, ok, format!("p = 1e-2 gives p2 = {p2:e}, p3 = {p3:e}"));
}

fn coincidence(r: &mut Report) {
    let row = corrected_joint_probability(0.055, 0.061, 0.027).unwrap();
    let row_ok = (row * 1000.0).round() == 26.0;

    let (p_a, p_b, p_ab) = (0.03, 0.04, 0.02);
    let n = 1_000_000u64;
    let mut rng = stream(3, Purpose::Synthetic, 0);
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
    let (oa, ob, oab) = compose_observed(p_a, p_b, p_ab);
    let exact = corrected_joint_probability(oa, ob, oab).unwrap();
    let se = (oab * (1.0 - oab) / n as f64).sqrt() / (1.0 + oab - oa - ob);
    let mc_ok = within(est, p_ab, 4.0 * se) && within(exact, p_ab, 1e-15);
    r.line(3, row_ok && mc_ok, format!("table row p_AB = {row:.4}; round trip {est:.5} vs {p_ab} (4σ = {:.5}) at N = 1e6", 4.0 * se));
}

fn island(radius: f64, cavity: f64) -> QubitGeometry {
    QubitGeometry { center: [0.0, 0.0], island_radius: radius, cavity_radius: cavity, ..default_layout().qubits[0].clone() }
}

fn nearest(axis: &[f64], v: f64) -> usize {
    axis.iter().enumerate().min_by(|a, b| (a.1 - v).abs().total_cmp(&(b.1 - v).abs())).unwrap().0
}

/// Largest gap between the nodal gradient and a five-node-wide central
/// difference along x, 30 µm below the surface.
fn gradient_mismatch(g: &WeightingGrid, z: f64) -> f64 {
    let (k, j) = (nearest(g.z(), z), nearest(g.y(), 0.0));
    let x = g.x();
    (-12..=12)
        .map(|m| nearest(x, 5.0 * m as f64))
        .map(|i| {
            let wide = (g.node_value(i + 2, j, k) - g.node_value(i - 2, j, k)) / (x[i + 2] - x[i - 2]);
            (g.node_gradient(i, j, k)[0] - wide).abs()
        })
        .fold(0.0, f64::max)
}

fn weighting_field(r: &mut Report) {
    let s = default_substrate();
    let t = s.thickness;
    let plate = GridSpec { lateral_boundary: WallBoundary::Insulating, bottom_boundary: WallBoundary::Grounded, ..GridSpec::uniform(50.0, 5.0, 200.0) };
    let g = solve_weighting_for(&island(1000.0, 1001.0), &s, &plate).unwrap();
    let worst = (0..=30)
        .map(|iz| t * iz as f64 / 30.0)
        .map(|z| ((g.alpha_at([40.0, -60.0, z]).unwrap() - z / t) / (z / t).max(1.0)).abs())
        .fold(0.0, f64::max);
    let slope = g.grad_alpha_at([10.0, 10.0, 0.5 * t]).unwrap()[2] * t;

    let solve = |h: f64| {
        let spec = GridSpec {
            core_spacing: h,
            core_half_width: 100.0,
            max_lateral_spacing: 25.0,
            half_width: 200.0,
            surface_spacing_z: h,
            max_spacing_z: h,
            growth: 1.0,
            vacuum_height: 100.0,
            tolerance: 1e-8,
            ..GridSpec::default()
        };
        chargeburst::field::load_or_solve(&island(70.0, 90.0), &s, &spec, &common::cache_dir()).unwrap()
    };
    let (ec, ef) = (gradient_mismatch(&solve(5.0), t - 30.0), gradient_mismatch(&solve(2.5), t - 30.0));
    let ok = worst < 0.02 && within(slope, 1.0, 0.02) && ec / ef > 3.0;
    r.line(4, ok, format!("plate max deviation {:.3}%, slope·t = {slope:.4}; gradient mismatch ratio h/(h/2) = {:.2}", 100.0 * worst, ec / ef));
}

fn full_pipeline(r: &mut Report) {
    let out_dir = common::scratch("acceptance");
    let config = SimulationConfig { n_events: 20_000, output_dir: out_dir, ..SimulationConfig::default() };
    let run = pipeline::run(&config, Some(&common::cache_dir())).unwrap();
    let a = &run.analysis;
    let n_gamma = run.outcomes.iter().filter(|o| o.species == Species::Gamma).count();

    let targets = [("Q3", "Q4", 0.54, 0.10), ("Q1", "Q2", 0.46, 0.10), ("Q1", "Q3", 0.00, 0.02)];
    let mut ok = true;
    let mut detail = Vec::new();
    for (x, y, want, tol) in targets {
        let p = a.pair(x, y).unwrap();
        let v = p.p_corr.map_or(f64::NAN, |e| e.value);
        ok &= within(v, want, tol);
        detail.push(format!("{:.0} µm {v:.3} ({want:.2} ± {tol:.2})", p.separation));
    }
    r.line(5, ok, format!("p_corr {} from {} events ({n_gamma} gamma)", detail.join(", "), run.outcomes.len()));

    let asym = a.charge_asymmetry.map_or(f64::NAN, |e| e.value);
    let a1324 = a.pair("Q3", "Q4").and_then(|p| p.asym_1324).map_or(f64::NAN, |e| e.value);
    r.line(6, asym > 0.5 && a1324 > 0.0, format!("charge asymmetry {asym:.3} (> 0.5), 13/24 asymmetry at 340 µm {a1324:.3} (> 0)"));

    let subset = |s: Species| run.outcomes.iter().filter(|o| o.species == s).cloned().collect::<Vec<_>>();
    let (gamma, muon) = (subset(Species::Gamma), subset(Species::Muon));
    let frac = |o: &[_], x, y, kind, level| exceedance_curve(o, (x, y), kind, &[level], JointRule::Min).unwrap().points[0].fraction;

    let phi_340 = frac(&gamma, "Q3", "Q4", ErrorKind::PhaseFlip, 1e-6);
    let phi_640 = frac(&gamma, "Q1", "Q2", ErrorKind::PhaseFlip, 1e-6);
    let phi_far = frac(&muon, "Q1", "Q3", ErrorKind::PhaseFlip, 1e-6);
    let ok = within(phi_340, 0.11, 0.03) && within(phi_640, 0.097, 0.03) && within(phi_far, 0.072, 0.02);
    r.line(
        7,
        ok,
        format!(
            "joint ε_φ > 1e-6: gamma 340 µm {:.1}% (11 ± 3), gamma 640 µm {:.1}% (9.7 ± 3), muon 3195 µm {:.1}% (7.2 ± 2, {} muons)",
            100.0 * phi_340,
            100.0 * phi_640,
            100.0 * phi_far,
            muon.len()
        ),
    );

    let th_340 = frac(&gamma, "Q3", "Q4", ErrorKind::BitFlip, 1e-8);
    let th_640 = frac(&gamma, "Q1", "Q2", ErrorKind::BitFlip, 1e-8);
    let ok = within(th_340, 0.012, 0.005) && within(th_640, 0.007, 0.005);
    r.line(8, ok, format!("joint ε_θ > 1e-8: gamma 340 µm {:.2}% (1.2 ± 0.5), gamma 640 µm {:.2}% (0.7 ± 0.5)", 100.0 * th_340, 100.0 * th_640));
}

fn dropout(r: &mut Report) {
    let p = RecoveryParams::default();
    let text = std::fs::read_to_string(fixture("dropout_curve.csv")).unwrap();
    let worst = text
        .lines()
        .skip(1)
        .map(|l| l.split_once(',').unwrap())
        .map(|(t, v)| (dropout_curve(t.parse().unwrap(), p.tau, p.sigma) - v.parse::<f64>().unwrap()).abs())
        .fold(0.0, f64::max);

    // Heralded |1⟩ fraction averaged over 142 events per point.
    let times: Vec<f64> = (0..76).map(|c| -1e-3 + 40e-6 * c as f64).collect();
    let fits: Vec<f64> = (0..256u64)
        .map(|k| {
            let mut rng = stream(9, Purpose::Synthetic, k);
            let s = binomial_samples(&times, p.tau, p.sigma, 0.967, -0.58, 142, &mut rng);
            fit_dropout(&s, (100e-6, 150e-6)).map_or(f64::INFINITY, |f| f.tau)
        })
        .collect();
    let tau_med = median(fits.clone());
    let within_10 = fits.iter().filter(|&&t| within(t, p.tau, 0.1 * p.tau)).count();

    let emulated: Vec<f64> = (0..64u64)
        .map(|seed| {
            let s = synthetic_dropout(&p, &DropoutExperiment::default(), seed).unwrap();
            fit_dropout(&s, (100e-6, 150e-6)).map_or(f64::INFINITY, |f| f.tau)
        })
        .collect();

    let ok = worst < 1e-9 && within(tau_med, p.tau, 0.1 * p.tau);
    r.line(
        9,
        ok,
        format!(
            "curve vs fixture max |Δ| = {worst:.1e}; median fitted τ over 256 noisy sets {:.1} µs (130 ± 13), {within_10}/256 single fits within 10%, counting emulator median {:.1} µs",
            tau_med * 1e6,
            median(emulated) * 1e6
        ),
    );
}

fn dwell(r: &mut Report) {
    let t = phonon_dwell_time(&default_layout());
    let tau = RecoveryParams::default().tau;
    let ok = within(t, scalar("phonon_dwell_s"), 1e-12) && within(t, 86.8e-6, 0.05e-6) && t > 0.5 * 100e-6 && t < 2.0 * 100e-6 && t > 0.5 * tau && t < 2.0 * tau;
    r.line(10, ok, format!("phonon dwell time {:.1} µs (consistent with ~100 µs; τ/t = {:.2})", t * 1e6, tau / t));
}

fn property_summary(r: &mut Report) {
    let mut checks = Vec::new();

    let aliasing = (-400..=400).map(|i| i as f64 * 0.0137).all(|q| {
        let a = alias(q);
        (-0.5..=0.5).contains(&a) && within(alias(a), a, 1e-12) && within(alias(q + 1.0), a, 1e-9) && (a.abs() == 0.5 || within(alias(-q), -a, 1e-12))
    });
    checks.push(("aliasing algebra", aliasing));

    let identities = [(0.01, 0.02, 0.005), (0.1, 0.05, 0.0), (0.3, 0.2, 0.1)].iter().all(|&(a, b, ab)| {
        let (oa, ob, oab) = compose_observed(a, b, ab);
        within(corrected_joint_probability(oa, ob, oab).unwrap(), ab, 1e-12)
    });
    checks.push(("estimator identities", identities));

    let s = default_substrate();
    let (e, h) = build_charge_pdf(&TransportParams::default(), &s, &PdfGrid { lateral_bins: 31, ..PdfGrid::default() }, 10_000, 1).unwrap();
    let mass = [&e, &h].iter().all(|pdf| pdf.layers.iter().all(|l| l.in_range() + l.absorbed == pdf.sample_count));
    checks.push(("PDF mass conservation", mass));

    let k = Kinematics::new(&TransportParams { valley_spread_sigma: 10f64.to_radians(), ..TransportParams::default() }, &s);
    let mut rng = stream(11, Purpose::Transport, 0);
    let holes: Vec<f64> = (0..20_000).map(|_| k.hole_direction(&mut rng)[2]).collect();
    let iso = ks_statistic(holes, |x| (0.5 * (x + 1.0)).clamp(0.0, 1.0)) < KS_CRITICAL_1PCT;
    let near = |d: [f64; 3]| d[2].abs() > 20f64.to_radians().cos();
    let fe = (0..20_000).filter(|_| near(k.electron_direction(&mut rng))).count() as f64 / 20_000.0;
    checks.push(("transport isotropy/anisotropy", iso && within(fe, (1.0 - (-2.0f64).exp()) / 3.0, 0.01)));

    let spec = SourceSpec { rng_seed: 5, ..SourceSpec::default() };
    let det = sample_event_stream(&spec, &s, StreamLength::Events(200)).unwrap() == sample_event_stream(&spec, &s, StreamLength::Events(200)).unwrap();
    checks.push(("fixed-seed determinism", det));

    let q = QubitGeometry { center: [0.0, 0.0], ..default_layout().qubits[0].clone() };
    let g = chargeburst::field::load_or_solve(&q, &s, &common::coarse_grid(), &common::cache_dir()).unwrap();
    // In the uniform core the nodal stencil reduces to a central difference.
    let (x, y) = (g.x(), g.y());
    let (ic, jc, ks) = (nearest(x, 0.0), nearest(y, 0.0), g.surface_index());
    let fd = [(ic + 3, jc - 5, ks - 4), (ic - 7, jc + 2, ks - 2), (ic, jc + 9, ks - 6)].iter().all(|&(i, j, k)| {
        let gr = g.node_gradient(i, j, k);
        let dx = (g.node_value(i + 1, j, k) - g.node_value(i - 1, j, k)) / (x[i + 1] - x[i - 1]);
        let dy = (g.node_value(i, j + 1, k) - g.node_value(i, j - 1, k)) / (y[j + 1] - y[j - 1]);
        within(gr[0], dx, 1e-9 * dx.abs().max(1e-6)) && within(gr[1], dy, 1e-9 * dy.abs().max(1e-6))
    });
    checks.push(("gradient finite differences", fd));

    let ok = checks.iter().all(|c| c.1);
    let list: Vec<String> = checks.iter().map(|(n, p)| format!("{n} {}", if *p { "ok" } else { "FAILED" })).collect();
    r.line(11, ok, format!("{}; full suites in the other test targets", list.join(", ")));
}

#[test]
fn acceptance_criteria() {
    let mut r = Report { failed: Vec::new() };
    dispersion(&mut r);
    thresholds(&mut r);
    coincidence(&mut r);
    weighting_field(&mut r);
    full_pipeline(&mut r);
    dropout(&mut r);
    dwell(&mut r);
    property_summary(&mut r);
    assert!(r.failed.is_empty(), "failed criteria: {:?}", r.failed);
}
