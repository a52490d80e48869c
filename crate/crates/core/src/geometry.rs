//! Chip, substrate and qubit electrode geometry.
//!
//! The substrate occupies `[0, side_x] × [0, side_y] × [0, thickness]` in µm,
//! with the metallized surface at `z = thickness`. Qubit centers are given in
//! the same lateral frame.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{cross, dot, norm, normalize, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Substrate {
    pub side_x: f64,
    pub side_y: f64,
    /// Chip thickness z₀ (µm).
    pub thickness: f64,
    pub relative_permittivity: f64,
    /// ⟨001⟩ direction in the chip frame.
    pub crystal_axis_normal: Vec3,
    /// ⟨110⟩ direction in the chip frame.
    pub crystal_axis_edge: Vec3,
    /// Sound speed c_s (m/s).
    pub sound_speed: f64,
}

impl Substrate {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("substrate.side_x", self.side_x), ("substrate.side_y", self.side_y), ("substrate.thickness", self.thickness)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.relative_permittivity >= 1.0) {
            return Err(Error::invalid("substrate.relative_permittivity", "must be >= 1"));
        }
        if !(self.sound_speed > 0.0) {
            return Err(Error::invalid("substrate.sound_speed", "must be positive"));
        }
        let n = self.crystal_axis_normal;
        let e = self.crystal_axis_edge;
        if (norm(n) - 1.0).abs() > 1e-9 || (norm(e) - 1.0).abs() > 1e-9 || dot(n, e).abs() > 1e-9 {
            return Err(Error::invalid("substrate.crystal_axis_*", "crystal axes must be orthonormal"));
        }
        Ok(())
    }

    pub fn contains(&self, p: Vec3) -> bool {
        p[0] >= 0.0 && p[0] <= self.side_x && p[1] >= 0.0 && p[1] <= self.side_y && p[2] >= 0.0 && p[2] <= self.thickness
    }

    /// The six ⟨100⟩ conduction-band valley directions in the chip frame.
    ///
    /// With ⟨001⟩ normal to the chip and ⟨110⟩ along an edge, the in-plane
    /// valleys point along the chip diagonals.
    pub fn valley_axes(&self) -> [Vec3; 6] {
        let n = normalize(self.crystal_axis_normal);
        let e = normalize(self.crystal_axis_edge);
        // [1-10] completes the frame; [100] and [010] are the half-sum/difference.
        let perp = cross(n, e);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let a = [s * (e[0] - perp[0]), s * (e[1] - perp[1]), s * (e[2] - perp[2])];
        let b = [s * (e[0] + perp[0]), s * (e[1] + perp[1]), s * (e[2] + perp[2])];
        let neg = |v: Vec3| [-v[0], -v[1], -v[2]];
        [a, neg(a), b, neg(b), n, neg(n)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QubitGeometry {
    pub id: String,
    /// Island center in the chip frame (µm).
    pub center: [f64; 2],
    pub island_radius: f64,
    pub cavity_radius: f64,
    /// E_C/h (Hz).
    pub charging_energy_hz: f64,
    /// E_J/h (Hz).
    pub josephson_energy_hz: f64,
    /// ω₀₁ (rad/s).
    pub frequency_w01: f64,
}

impl QubitGeometry {
    pub fn validate(&self) -> Result<()> {
        let f = |name: &str| format!("qubit[{}].{}", self.id, name);
        if !(self.island_radius > 0.0) {
            return Err(Error::invalid(f("island_radius"), "must be positive"));
        }
        if !(self.cavity_radius > self.island_radius) {
            return Err(Error::invalid(f("cavity_radius"), "must exceed island_radius"));
        }
        if !(self.charging_energy_hz > 0.0) || !(self.josephson_energy_hz > self.charging_energy_hz) {
            return Err(Error::invalid(f("josephson_energy_hz"), "E_J/E_C must exceed 1"));
        }
        if !(self.frequency_w01 > 0.0) {
            return Err(Error::invalid(f("frequency_w01"), "must be positive"));
        }
        Ok(())
    }

    pub fn distance_to(&self, other: &QubitGeometry) -> f64 {
        (self.center[0] - other.center[0]).hypot(self.center[1] - other.center[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChipLayout {
    pub substrate: Substrate,
    pub qubits: Vec<QubitGeometry>,
    /// Fraction β of the chip perimeter acoustically anchored.
    pub anchor_fraction_beta: f64,
}

impl ChipLayout {
    pub fn validate(&self) -> Result<()> {
        self.substrate.validate()?;
        if !(self.anchor_fraction_beta > 0.0 && self.anchor_fraction_beta <= 1.0) {
            return Err(Error::invalid("anchor_fraction_beta", "must lie in (0, 1]"));
        }
        let s = &self.substrate;
        for (i, q) in self.qubits.iter().enumerate() {
            q.validate()?;
            let [x, y] = q.center;
            let r = q.cavity_radius;
            if x - r < 0.0 || x + r > s.side_x || y - r < 0.0 || y + r > s.side_y {
                return Err(Error::invalid(format!("qubit[{}].center", q.id), "qubit circle extends past the substrate"));
            }
            for other in &self.qubits[..i] {
                if other.id == q.id {
                    return Err(Error::invalid(format!("qubit[{}].id", q.id), "duplicate qubit id"));
                }
                if q.distance_to(other) <= q.cavity_radius + other.cavity_radius {
                    return Err(Error::invalid(format!("qubit[{}].center", q.id), format!("overlaps qubit {}", other.id)));
                }
            }
        }
        Ok(())
    }

    pub fn qubit(&self, id: &str) -> Result<&QubitGeometry> {
        self.qubits
            .iter()
            .find(|q| q.id == id)
            .ok_or_else(|| Error::invalid("qubit_id", format!("no qubit named {id}")))
    }

    pub fn qubit_index(&self, id: &str) -> Option<usize> {
        self.qubits.iter().position(|q| q.id == id)
    }

    /// Reads a layout from a TOML file with a `[substrate]` table and one
    /// `[[qubits]]` table per qubit.
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let layout: ChipLayout = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        layout.validate()?;
        Ok(layout)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("layout serializes")
    }
}

pub const DEFAULT_ISLAND_RADIUS: f64 = 70.0;
pub const DEFAULT_CAVITY_RADIUS: f64 = 90.5;
pub const SILICON_PERMITTIVITY: f64 = 11.7;

/// Separation of the pair representatives Q1 and Q3 (µm).
pub const PAIR_SPACING: f64 = 3195.0;

pub fn default_substrate() -> Substrate {
    Substrate {
        side_x: 6250.0,
        side_y: 6250.0,
        thickness: 375.0,
        relative_permittivity: SILICON_PERMITTIVITY,
        crystal_axis_normal: [0.0, 0.0, 1.0],
        crystal_axis_edge: [1.0, 0.0, 0.0],
        sound_speed: 6.0e3,
    }
}

/// The four-qubit chip: a 640 µm pair (Q1, Q2) and a 340 µm pair (Q3, Q4) on
/// opposite sides, placed so that the pair midpoints are mirror images about
/// the chip center and |Q1 − Q3| = 3195 µm.
pub fn default_layout() -> ChipLayout {
    let substrate = default_substrate();
    let cx = substrate.side_x / 2.0;
    let cy = substrate.side_y / 2.0;
    let half_a = 320.0;
    let half_b = 170.0;
    let dy = half_a - half_b;
    let dx = (PAIR_SPACING * PAIR_SPACING - dy * dy).sqrt();
    let xa = cx - dx / 2.0;
    let xb = cx + dx / 2.0;
    // E_J/E_C = 24 with the measured mean transition frequencies.
    let ec = 345.0e6;
    let mk = |id: &str, x: f64, y: f64, f01_ghz: f64| QubitGeometry {
        id: id.to_string(),
        center: [x, y],
        island_radius: DEFAULT_ISLAND_RADIUS,
        cavity_radius: DEFAULT_CAVITY_RADIUS,
        charging_energy_hz: ec,
        josephson_energy_hz: 24.0 * ec,
        frequency_w01: 2.0 * PI * f01_ghz * 1e9,
    };
    ChipLayout {
        qubits: vec![
            mk("Q1", xa, cy - half_a, 4.5641),
            mk("Q2", xa, cy + half_a, 4.4330),
            mk("Q3", xb, cy - half_b, 4.2939),
            mk("Q4", xb, cy + half_b, 4.3973),
        ],
        substrate,
        anchor_fraction_beta: 0.2,
    }
}

/// Effective sensing area π ε r_i r_o of a concentric island for uniform fields (µm²).
pub fn sensing_area(q: &QubitGeometry, eps: f64) -> Result<f64> {
    if !(q.island_radius > 0.0) || !(q.cavity_radius >= q.island_radius) {
        return Err(Error::invalid("island_radius", "degenerate island geometry"));
    }
    if !(eps > 0.0) {
        return Err(Error::invalid("eps", "permittivity must be positive"));
    }
    Ok(PI * eps * q.island_radius * q.cavity_radius)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout_separations() {
        let l = default_layout();
        l.validate().unwrap();
        let d = |a: &str, b: &str| l.qubit(a).unwrap().distance_to(l.qubit(b).unwrap());
        assert!((d("Q3", "Q4") - 340.0).abs() < 1e-9);
        assert!((d("Q1", "Q2") - 640.0).abs() < 1e-9);
        assert!((d("Q1", "Q3") - 3195.0).abs() < 1e-9);
        assert!(d("Q2", "Q4") > 3000.0);
    }

    #[test]
    fn default_layout_mirror_symmetry() {
        let l = default_layout();
        let cx = l.substrate.side_x / 2.0;
        let cy = l.substrate.side_y / 2.0;
        let mid = |a: &str, b: &str| {
            let (p, q) = (l.qubit(a).unwrap().center, l.qubit(b).unwrap().center);
            [(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0]
        };
        let m12 = mid("Q1", "Q2");
        let m34 = mid("Q3", "Q4");
        assert!((m12[0] - (2.0 * cx - m34[0])).abs() < 1e-9);
        assert!((m12[1] - cy).abs() < 1e-9 && (m34[1] - cy).abs() < 1e-9);
    }

    #[test]
    fn sensing_area_values() {
        let l = default_layout();
        let a = sensing_area(&l.qubits[0], 11.7).unwrap();
        assert!((a - 2.328e5).abs() / 2.328e5 < 1e-3, "{a}");
        let mut q = l.qubits[0].clone();
        q.island_radius = 1.0;
        q.cavity_radius = 1.0;
        assert!((sensing_area(&q, 1.0).unwrap() - PI).abs() < 1e-12);
        q.island_radius = 0.0;
        assert!(sensing_area(&q, 1.0).is_err());
    }

    #[test]
    fn invariant_violations_are_rejected() {
        let mut l = default_layout();
        l.qubits[1].center = l.qubits[0].center;
        assert!(l.validate().is_err());
        let mut l = default_layout();
        l.qubits[0].center = [10.0, 10.0];
        assert!(l.validate().is_err());
        let mut l = default_layout();
        l.substrate.crystal_axis_edge = [1.0, 1.0, 0.0];
        assert!(l.validate().is_err());
        let mut l = default_layout();
        l.qubits[2].josephson_energy_hz = 0.5 * l.qubits[2].charging_energy_hz;
        assert!(l.validate().is_err());
    }

    #[test]
    fn valleys_are_unit_and_along_diagonals() {
        let s = default_substrate();
        for v in s.valley_axes() {
            assert!((norm(v) - 1.0).abs() < 1e-12);
        }
        let v = s.valley_axes()[0];
        assert!((v[0].abs() - v[1].abs()).abs() < 1e-12 && v[2] == 0.0);
    }

    #[test]
    fn toml_round_trip() {
        let l = default_layout();
        let text = l.to_toml_string();
        let back = ChipLayout::from_toml_str(&text).unwrap();
        assert_eq!(l, back);
    }
}
