mod common;

use std::sync::OnceLock;

use chargeburst::field::{solve_weighting_for, GridSpec, WallBoundary, WeightingGrid};
use chargeburst::geometry::{default_layout, default_substrate, QubitGeometry};
use chargeburst::induced::induced_offset_charge;
use chargeburst::transport::{Carrier, CarrierSet};
use common::coarse_grid;
use proptest::prelude::*;

fn qubit(island: f64, cavity: f64) -> QubitGeometry {
    QubitGeometry { center: [0.0, 0.0], island_radius: island, cavity_radius: cavity, ..default_layout().qubits[0].clone() }
}

/// Single qubit at the origin of its own coarse grid.
fn grid() -> &'static WeightingGrid {
    static G: OnceLock<WeightingGrid> = OnceLock::new();
    G.get_or_init(|| {
        let q = default_layout().qubits[0].clone();
        let q = QubitGeometry { center: [0.0, 0.0], ..q };
        chargeburst::field::load_or_solve(&q, &default_substrate(), &coarse_grid(), &common::cache_dir()).unwrap()
    })
}

fn at(g: &WeightingGrid, x: f64, y: f64, z: f64) -> f64 {
    g.alpha_at([x, y, z]).unwrap()
}

#[test]
fn parallel_plate_is_linear() {
    let s = default_substrate();
    let spec = GridSpec { lateral_boundary: WallBoundary::Insulating, bottom_boundary: WallBoundary::Grounded, ..GridSpec::uniform(50.0, 5.0, 200.0) };
    let g = solve_weighting_for(&qubit(1000.0, 1001.0), &s, &spec).unwrap();
    let t = s.thickness;
    for iz in 0..=30 {
        let z = t * iz as f64 / 30.0;
        for &(x, y) in &[(0.0, 0.0), (120.0, -75.0), (-180.0, 180.0)] {
            assert!((at(&g, x, y, z) - z / t).abs() < 0.02 * 1.0f64.max(z / t), "z {z}");
        }
    }
    let gr = g.grad_alpha_at([10.0, 10.0, 0.5 * t]).unwrap();
    assert!((gr[2] * t - 1.0).abs() < 0.02 && gr[0].abs() < 1e-6 && gr[1].abs() < 1e-6, "{gr:?}");
}

/// x-derivative at node (i, j, k) from a five-node-wide central difference.
fn wide_dx(g: &WeightingGrid, i: usize, j: usize, k: usize) -> f64 {
    let x = g.x();
    (g.node_value(i + 2, j, k) - g.node_value(i - 2, j, k)) / (x[i + 2] - x[i - 2])
}

fn nearest(axis: &[f64], v: f64) -> usize {
    axis.iter().enumerate().min_by(|a, b| (a.1 - v).abs().total_cmp(&(b.1 - v).abs())).unwrap().0
}

#[test]
fn gradient_converges_at_second_order() {
    let s = default_substrate();
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
        chargeburst::field::load_or_solve(&qubit(70.0, 90.0), &s, &spec, &common::cache_dir()).unwrap()
    };
    let (coarse, fine) = (solve(5.0), solve(2.5));
    let mismatch = |g: &WeightingGrid| {
        let k = nearest(g.z(), s.thickness - 30.0);
        let j = nearest(g.y(), 0.0);
        (-12..=12)
            .map(|m| nearest(g.x(), 5.0 * m as f64))
            .map(|i| (g.node_gradient(i, j, k)[0] - wide_dx(g, i, j, k)).abs())
            .fold(0.0, f64::max)
    };
    let (ec, ef) = (mismatch(&coarse), mismatch(&fine));
    eprintln!("gradient mismatch coarse {ec:e} fine {ef:e} ratio {}", ec / ef);
    assert!(ec / ef > 3.0, "coarse {ec:e}, fine {ef:e}, ratio {}", ec / ef);
}

#[test]
fn maximum_principle() {
    let g = grid();
    let [nx, ny, nz] = g.dims();
    let v = g.values();
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, &x| (a.0.min(x), a.1.max(x)));
    assert!(lo >= -1e-9 && hi <= 1.0 + 1e-9 && lo.abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
    for k in 1..nz - 1 {
        for j in 1..ny - 1 {
            for i in 1..nx - 1 {
                let c = g.node_value(i, j, k);
                let nb = [(i - 1, j, k), (i + 1, j, k), (i, j - 1, k), (i, j + 1, k), (i, j, k - 1), (i, j, k + 1)].map(|(a, b, d)| g.node_value(a, b, d));
                let (mn, mx) = nb.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, &x| (a.0.min(x), a.1.max(x)));
                assert!(c >= mn - 1e-5 && c <= mx + 1e-5, "node ({i},{j},{k}) = {c} outside [{mn}, {mx}]");
            }
        }
    }
}

#[test]
fn field_has_the_square_symmetries() {
    let g = grid();
    let [nx, ny, nz] = g.dims();
    assert_eq!(nx, ny);
    for k in (0..nz).step_by(3) {
        for j in (0..ny).step_by(2) {
            for i in (0..nx).step_by(2) {
                let v = g.node_value(i, j, k);
                for w in [g.node_value(nx - 1 - i, j, k), g.node_value(i, ny - 1 - j, k), g.node_value(j, i, k)] {
                    assert!((v - w).abs() < 1e-4, "({i},{j},{k}): {v} vs {w}");
                }
            }
        }
    }
}

#[test]
fn alpha_decays_away_from_the_island() {
    let g = grid();
    let q = &default_layout().qubits[0];
    let z = g.z()[g.surface_index() - 1];
    let mut prev = f64::INFINITY;
    let mut r = q.cavity_radius;
    while r < 550.0 {
        let a = at(g, r * 0.6, r * 0.8, z);
        assert!(a <= prev + 1e-9, "r {r}: {a} > {prev}");
        prev = a;
        r += 5.0;
    }
}

#[test]
fn interpolation_is_exact_at_nodes() {
    let g = grid();
    let [nx, ny, nz] = g.dims();
    for (i, j, k) in [(0, 0, 0), (nx / 2, ny / 2, g.surface_index()), (nx / 3, ny - 1, nz / 2), (nx - 1, 5, nz - 1)] {
        assert_eq!(g.alpha_at(g.node_position(i, j, k)).unwrap(), g.node_value(i, j, k));
    }
}

#[test]
fn gradient_below_the_center_points_up() {
    let g = grid();
    let t = default_substrate().thickness;
    for depth in [20.0, 60.0, 150.0] {
        let gr = g.grad_alpha_at([0.0, 0.0, t - depth]).unwrap();
        assert!(gr[2] > 0.0 && gr[0].abs() < 1e-6 * gr[2].abs().max(1e-9) + 1e-9 && gr[1].abs() < 1e-6 * gr[2].abs().max(1e-9) + 1e-9, "{gr:?}");
    }
}

fn cloud(sign: i8, weight: f64, pts: &[[f64; 3]]) -> CarrierSet {
    CarrierSet { origin_event_id: 0, entries: pts.iter().map(|&p| Carrier { sign, position: p, weight }).collect(), beyond_table: 0 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn induced_charge_is_linear(pts in prop::collection::vec((-300.0f64..300.0, -300.0f64..300.0, 0.0f64..375.0), 1..40), w in 0.1f64..10.0) {
        let g = grid();
        let p: Vec<[f64; 3]> = pts.iter().map(|&(x, y, z)| [x, y, z]).collect();
        let one = induced_offset_charge(&cloud(-1, 1.0, &p), g);
        let scaled = induced_offset_charge(&cloud(-1, w, &p), g);
        prop_assert!((scaled - w * one).abs() < 1e-12 * (1.0 + scaled.abs()));
        let holes = induced_offset_charge(&cloud(1, 1.0, &p), g);
        prop_assert!((holes + one).abs() < 1e-12 * (1.0 + one.abs()));
        prop_assert!(one >= 0.0);
    }

    #[test]
    fn charges_beyond_the_box_induce_nothing(x in 700.0f64..3000.0, y in -3000.0f64..3000.0, z in 0.0f64..375.0) {
        let g = grid();
        prop_assert_eq!(induced_offset_charge(&cloud(-1, 1.0, &[[x, y, z], [y, x, z]]), g), 0.0);
    }
}

#[test]
fn electrons_under_the_island_induce_positive_charge() {
    let g = grid();
    let dq = induced_offset_charge(&cloud(-1, 1.0, &[[0.0, 0.0, 360.0], [20.0, -10.0, 340.0]]), g);
    assert!(dq > 0.5, "{dq}");
}
