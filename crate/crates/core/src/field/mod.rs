//! Weighting potential α(r): the offset charge induced on one qubit island by
//! a unit point charge at r.
//!
//! α solves Laplace's equation in a local box around the qubit: silicon below
//! the metallized surface, vacuum above it up to a grounded lid, the island
//! disc held at 1 and the surrounding groundplane at 0. The box is discretized
//! on a tensor-product grid that is fine around the island gap and coarsens
//! geometrically outward.

mod cache;
mod solver;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ChipLayout, QubitGeometry, Substrate};
use crate::units::Vec3;

pub use cache::{cache_key, load_or_solve, read_grid, write_grid};
pub use solver::SolveStats;

/// Boundary condition on the outer walls of the solve box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WallBoundary {
    /// α = 0 (grounded enclosure).
    Grounded,
    /// Zero normal field.
    Insulating,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    /// Red-black successive over-relaxation.
    Sor,
    /// Jacobi-preconditioned conjugate gradients.
    Cg,
}

/// Discretization and solver settings for one weighting-field solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    /// Lateral node spacing inside the uniform core around the island (µm).
    pub core_spacing: f64,
    /// Half-width of the uniform lateral core (µm); must cover the cavity.
    pub core_half_width: f64,
    /// Largest lateral spacing reached by geometric growth (µm).
    pub max_lateral_spacing: f64,
    /// Half-width of the solve box (µm).
    pub half_width: f64,
    /// Vertical spacing at the metallized surface (µm).
    pub surface_spacing_z: f64,
    /// Largest vertical spacing (µm).
    pub max_spacing_z: f64,
    /// Spacing ratio between neighbouring cells outside the core.
    pub growth: f64,
    /// Height of the vacuum layer between the chip surface and the grounded lid (µm).
    pub vacuum_height: f64,
    pub lateral_boundary: WallBoundary,
    pub bottom_boundary: WallBoundary,
    pub solver: SolverKind,
    /// Over-relaxation factor for [`SolverKind::Sor`].
    pub omega: f64,
    /// Target relative residual ‖b − Aα‖/‖b‖.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            core_spacing: 2.5,
            core_half_width: 110.0,
            max_lateral_spacing: 25.0,
            half_width: 1000.0,
            surface_spacing_z: 2.0,
            max_spacing_z: 12.5,
            growth: 1.1,
            vacuum_height: 500.0,
            lateral_boundary: WallBoundary::Grounded,
            bottom_boundary: WallBoundary::Insulating,
            solver: SolverKind::Cg,
            omega: 1.9,
            tolerance: 1e-6,
            max_iterations: 20_000,
        }
    }
}

impl GridSpec {
    /// Uniform grid with the same spacing everywhere (growth disabled).
    pub fn uniform(lateral: f64, vertical: f64, half_width: f64) -> Self {
        GridSpec {
            core_spacing: lateral,
            core_half_width: half_width,
            max_lateral_spacing: lateral,
            half_width,
            surface_spacing_z: vertical,
            max_spacing_z: vertical,
            growth: 1.0,
            ..GridSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("grid.core_spacing", self.core_spacing),
            ("grid.core_half_width", self.core_half_width),
            ("grid.max_lateral_spacing", self.max_lateral_spacing),
            ("grid.half_width", self.half_width),
            ("grid.surface_spacing_z", self.surface_spacing_z),
            ("grid.max_spacing_z", self.max_spacing_z),
            ("grid.vacuum_height", self.vacuum_height),
            ("grid.tolerance", self.tolerance),
        ];
        for (name, v) in pos {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.growth >= 1.0) {
            return Err(Error::invalid("grid.growth", "must be >= 1"));
        }
        if self.max_lateral_spacing < self.core_spacing || self.max_spacing_z < self.surface_spacing_z {
            return Err(Error::invalid("grid.max_*_spacing", "must not be smaller than the fine spacing"));
        }
        if !(self.omega > 0.0 && self.omega < 2.0) {
            return Err(Error::invalid("grid.omega", "over-relaxation factor must lie in (0, 2)"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("grid.max_iterations", "must be positive"));
        }
        Ok(())
    }
}

/// Coordinates of a geometrically graded axis that starts at `start` with
/// spacing `h0` and ends exactly at `end`.
pub fn graded_axis(start: f64, end: f64, h0: f64, h_max: f64, growth: f64) -> Vec<f64> {
    let length = (end - start).abs();
    let dir = if end >= start { 1.0 } else { -1.0 };
    let mut steps = Vec::new();
    let mut h = h0;
    let mut total = 0.0;
    while total < length - 1e-9 {
        steps.push(h);
        total += h;
        h = (h * growth).min(h_max);
    }
    // Absorb the overshoot into the coarse end.
    let excess = total - length;
    let n_steps = steps.len();
    if n_steps > 1 && excess > 0.5 * steps[n_steps - 1] {
        let removed = steps.pop().unwrap();
        let deficit = removed - excess;
        let n = steps.len();
        let tail = n.min(4);
        for s in &mut steps[n - tail..] {
            *s += deficit / tail as f64;
        }
    } else if let Some(last) = steps.last_mut() {
        *last -= excess;
    }
    let mut coords = Vec::with_capacity(steps.len() + 1);
    let mut x = start;
    coords.push(x);
    for s in &steps {
        x += dir * s;
        coords.push(x);
    }
    *coords.last_mut().unwrap() = end;
    coords
}

/// Symmetric lateral axis: uniform core, geometric growth, then uniform coarse
/// cells out to `±half_width`.
pub fn lateral_axis(spec: &GridSpec) -> Vec<f64> {
    let core = spec.core_half_width.min(spec.half_width);
    let n_core = (core / spec.core_spacing).round().max(1.0) as usize;
    let h = core / n_core as f64;
    let mut half: Vec<f64> = (0..=n_core).map(|i| i as f64 * h).collect();
    if spec.half_width > core + 1e-9 {
        let outer = graded_axis(core, spec.half_width, h * spec.growth, spec.max_lateral_spacing, spec.growth);
        half.extend_from_slice(&outer[1..]);
    }
    let mut axis: Vec<f64> = half.iter().rev().map(|x| -x).collect();
    axis.pop();
    axis.extend_from_slice(&half);
    axis
}

/// Vertical axis from the bottom of the substrate (z = 0) to the lid, with a
/// node on the metallized surface.
pub fn vertical_axis(spec: &GridSpec, thickness: f64) -> (Vec<f64>, usize) {
    let mut below = graded_axis(thickness, 0.0, spec.surface_spacing_z, spec.max_spacing_z, spec.growth);
    below.reverse();
    let k_top = below.len() - 1;
    let above = graded_axis(thickness, thickness + spec.vacuum_height, spec.surface_spacing_z, spec.max_spacing_z.max(spec.surface_spacing_z) * 4.0, spec.growth);
    below.extend_from_slice(&above[1..]);
    (below, k_top)
}

#[derive(Debug)]
pub(crate) struct FieldData {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub k_top: usize,
    pub values: Vec<f64>,
    pub grad: Vec<[f64; 3]>,
}

impl FieldData {
    #[inline]
    fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.y.len() + j) * self.x.len() + i
    }
}

/// A solved weighting potential for one qubit.
///
/// Coordinates are local: x, y relative to the island center and z measured
/// from the bottom of the substrate. `origin` is the chip-frame position of
/// the local origin. Cloning and [`WeightingGrid::relocated`] share the
/// underlying arrays.
#[derive(Debug, Clone)]
pub struct WeightingGrid {
    pub qubit_id: String,
    pub origin: Vec3,
    pub residual: f64,
    pub iterations: usize,
    pub(crate) data: Arc<FieldData>,
}

/// Cell lookup on a sorted axis: index of the lower node and the fractional offset.
#[inline]
fn locate(axis: &[f64], v: f64) -> Option<(usize, f64)> {
    let n = axis.len();
    if !(v >= axis[0] && v <= axis[n - 1]) {
        return None;
    }
    let hi = axis.partition_point(|&a| a <= v).clamp(1, n - 1);
    let lo = hi - 1;
    let t = (v - axis[lo]) / (axis[hi] - axis[lo]);
    Some((lo, t))
}

impl WeightingGrid {
    pub fn x(&self) -> &[f64] {
        &self.data.x
    }
    pub fn y(&self) -> &[f64] {
        &self.data.y
    }
    pub fn z(&self) -> &[f64] {
        &self.data.z
    }
    pub fn values(&self) -> &[f64] {
        &self.data.values
    }
    /// Index of the node plane on the metallized surface.
    pub fn surface_index(&self) -> usize {
        self.data.k_top
    }
    pub fn dims(&self) -> [usize; 3] {
        [self.data.x.len(), self.data.y.len(), self.data.z.len()]
    }

    /// Stored value at node (i, j, k).
    pub fn node_value(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data.values[self.data.idx(i, j, k)]
    }

    /// Chip-frame position of node (i, j, k).
    pub fn node_position(&self, i: usize, j: usize, k: usize) -> Vec3 {
        [self.data.x[i] + self.origin[0], self.data.y[j] + self.origin[1], self.data.z[k] + self.origin[2]]
    }

    /// Node gradient estimate (1/µm) at node (i, j, k).
    pub fn node_gradient(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        self.data.grad[self.data.idx(i, j, k)]
    }

    /// The same field centered on another qubit with identical electrode geometry.
    pub fn relocated(&self, qubit_id: &str, center: [f64; 2]) -> WeightingGrid {
        WeightingGrid {
            qubit_id: qubit_id.to_string(),
            origin: [center[0], center[1], self.origin[2]],
            residual: self.residual,
            iterations: self.iterations,
            data: Arc::clone(&self.data),
        }
    }

    /// Whether a chip-frame point lies inside the grid box.
    #[inline]
    pub fn covers(&self, r: Vec3) -> bool {
        let d = &self.data;
        let lx = r[0] - self.origin[0];
        let ly = r[1] - self.origin[1];
        let lz = r[2] - self.origin[2];
        lx >= d.x[0] && lx <= d.x[d.x.len() - 1] && ly >= d.y[0] && ly <= d.y[d.y.len() - 1] && lz >= d.z[0] && lz <= d.z[d.z.len() - 1]
    }

    #[inline]
    fn cell(&self, r: Vec3) -> Option<[(usize, f64); 3]> {
        let d = &self.data;
        Some([
            locate(&d.x, r[0] - self.origin[0])?,
            locate(&d.y, r[1] - self.origin[1])?,
            locate(&d.z, r[2] - self.origin[2])?,
        ])
    }

    #[inline]
    fn trilinear<T: Copy, F: Fn(T, f64) -> T, G: Fn(T, T) -> T>(&self, c: [(usize, f64); 3], get: impl Fn(usize) -> T, mul: F, plus: G) -> T {
        let [(i, tx), (j, ty), (k, tz)] = c;
        let d = &self.data;
        let w = |a: usize, b: usize, cc: usize| get(d.idx(i + a, j + b, k + cc));
        let c00 = plus(mul(w(0, 0, 0), 1.0 - tx), mul(w(1, 0, 0), tx));
        let c10 = plus(mul(w(0, 1, 0), 1.0 - tx), mul(w(1, 1, 0), tx));
        let c01 = plus(mul(w(0, 0, 1), 1.0 - tx), mul(w(1, 0, 1), tx));
        let c11 = plus(mul(w(0, 1, 1), 1.0 - tx), mul(w(1, 1, 1), tx));
        let c0 = plus(mul(c00, 1.0 - ty), mul(c10, ty));
        let c1 = plus(mul(c01, 1.0 - ty), mul(c11, ty));
        plus(mul(c0, 1.0 - tz), mul(c1, tz))
    }

    /// Trilinear interpolation of α at a chip-frame position, clamped to [0, 1].
    pub fn alpha_at(&self, r: Vec3) -> Result<f64> {
        let c = self.cell(r).ok_or(Error::OutOfBounds { what: "weighting grid", position: r })?;
        let v = self.trilinear(c, |n| self.data.values[n], |a, s| a * s, |a, b| a + b);
        Ok(v.clamp(0.0, 1.0))
    }

    /// α at r, or 0 outside the grid box (charge beyond the local box is screened).
    #[inline]
    pub fn alpha_or_zero(&self, r: Vec3) -> f64 {
        match self.cell(r) {
            Some(c) => self.trilinear(c, |n| self.data.values[n], |a, s| a * s, |a, b| a + b).clamp(0.0, 1.0),
            None => 0.0,
        }
    }

    /// ∇α at a chip-frame position in 1/µm, interpolated from nodal
    /// second-order differences. Points in the outermost lateral cells or
    /// outside the box are rejected.
    pub fn grad_alpha_at(&self, r: Vec3) -> Result<Vec3> {
        let c = self.cell(r).ok_or(Error::OutOfBounds { what: "weighting grid", position: r })?;
        let (nx, ny) = (self.data.x.len(), self.data.y.len());
        if c[0].0 == 0 || c[0].0 >= nx - 2 || c[1].0 == 0 || c[1].0 >= ny - 2 {
            return Err(Error::OutOfBounds { what: "gradient interior of the weighting grid", position: r });
        }
        Ok(self.trilinear(
            c,
            |n| self.data.grad[n],
            |a, s| [a[0] * s, a[1] * s, a[2] * s],
            |a, b| [a[0] + b[0], a[1] + b[1], a[2] + b[2]],
        ))
    }

    /// Dual-cell volume of node (i, j, k) in µm³.
    pub fn node_volume(&self, i: usize, j: usize, k: usize) -> f64 {
        let half = |a: &[f64], n: usize| {
            let lo = if n > 0 { a[n] - a[n - 1] } else { 0.0 };
            let hi = if n + 1 < a.len() { a[n + 1] - a[n] } else { 0.0 };
            0.5 * (lo + hi)
        };
        half(&self.data.x, i) * half(&self.data.y, j) * half(&self.data.z, k)
    }
}

/// Nodal gradient with second-order differences on the nonuniform grid. On
/// the metallized plane the vertical derivative is taken from the substrate side.
fn nodal_gradient(x: &[f64], y: &[f64], z: &[f64], k_top: usize, u: &[f64]) -> Vec<[f64; 3]> {
    let (nx, ny, nz) = (x.len(), y.len(), z.len());
    let idx = |i: usize, j: usize, k: usize| (k * ny + j) * nx + i;
    let d1 = |a: &[f64], n: usize, f: &dyn Fn(usize) -> f64| -> f64 {
        let len = a.len();
        if n == 0 {
            (f(1) - f(0)) / (a[1] - a[0])
        } else if n == len - 1 {
            (f(n) - f(n - 1)) / (a[n] - a[n - 1])
        } else {
            let hm = a[n] - a[n - 1];
            let hp = a[n + 1] - a[n];
            ((f(n + 1) - f(n)) * hm / hp + (f(n) - f(n - 1)) * hp / hm) / (hm + hp)
        }
    };
    let mut g = vec![[0.0; 3]; nx * ny * nz];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let gx = d1(x, i, &|ii| u[idx(ii, j, k)]);
                let gy = d1(y, j, &|jj| u[idx(i, jj, k)]);
                let gz = if k == k_top && k > 0 {
                    (u[idx(i, j, k)] - u[idx(i, j, k - 1)]) / (z[k] - z[k - 1])
                } else {
                    d1(z, k, &|kk| u[idx(i, j, kk)])
                };
                g[idx(i, j, k)] = [gx, gy, gz];
            }
        }
    }
    g
}

/// Builds the grid and Dirichlet data for one qubit and solves for α.
pub fn solve_weighting_for(qubit: &QubitGeometry, substrate: &Substrate, spec: &GridSpec) -> Result<WeightingGrid> {
    spec.validate()?;
    substrate.validate()?;
    if !(qubit.island_radius > 0.0 && qubit.cavity_radius > qubit.island_radius) {
        return Err(Error::invalid("qubit", "degenerate island geometry"));
    }
    let x = lateral_axis(spec);
    let (z, k_top) = vertical_axis(spec, substrate.thickness);
    let covers_plane = qubit.island_radius >= spec.half_width * std::f64::consts::SQRT_2;
    if !covers_plane {
        if spec.core_half_width < qubit.cavity_radius {
            return Err(Error::invalid("grid.core_half_width", "uniform core must cover the cavity radius"));
        }
        let across = x.iter().filter(|&&v| v >= qubit.island_radius && v <= qubit.cavity_radius).count();
        if across < 4 {
            return Err(Error::invalid(
                "grid.core_spacing",
                format!("island-ground gap resolved by {across} nodes; at least 4 required"),
            ));
        }
    }
    let y = x.clone();
    let problem = solver::Problem::new(&x, &y, &z, k_top, substrate.relative_permittivity, spec, qubit.island_radius, qubit.cavity_radius);
    let (values, stats) = problem.solve(spec)?;
    let grad = nodal_gradient(&x, &y, &z, k_top, &values);
    Ok(WeightingGrid {
        qubit_id: qubit.id.clone(),
        origin: [qubit.center[0], qubit.center[1], 0.0],
        residual: stats.residual,
        iterations: stats.iterations,
        data: Arc::new(FieldData { x, y, z, k_top, values, grad }),
    })
}

/// Solves the weighting potential of `qubit_id` in `layout`.
pub fn solve_weighting(layout: &ChipLayout, qubit_id: &str, spec: &GridSpec) -> Result<WeightingGrid> {
    let q = layout.qubit(qubit_id)?;
    solve_weighting_for(q, &layout.substrate, spec)
}

/// Every qubit's grid in layout order. Qubits sharing an electrode geometry
/// reuse one solve.
pub fn solve_layout(layout: &ChipLayout, spec: &GridSpec, cache_dir: Option<&std::path::Path>) -> Result<Vec<WeightingGrid>> {
    let mut solved: Vec<(String, WeightingGrid)> = Vec::new();
    let mut out = Vec::with_capacity(layout.qubits.len());
    for q in &layout.qubits {
        let key = cache_key(q, &layout.substrate, spec);
        let grid = if let Some((_, g)) = solved.iter().find(|(k, _)| *k == key) {
            g.relocated(&q.id, q.center)
        } else {
            let g = match cache_dir {
                Some(dir) => load_or_solve(q, &layout.substrate, spec, dir)?,
                None => solve_weighting_for(q, &layout.substrate, spec)?,
            };
            solved.push((key, g.clone()));
            g
        };
        out.push(grid);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graded_axis_hits_endpoints() {
        let a = graded_axis(375.0, 0.0, 2.0, 12.5, 1.1);
        assert_eq!(a[0], 375.0);
        assert_eq!(*a.last().unwrap(), 0.0);
        assert!(a.windows(2).all(|w| w[1] < w[0]));
        assert!((a[0] - a[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn lateral_axis_is_symmetric() {
        let spec = GridSpec::default();
        let a = lateral_axis(&spec);
        let n = a.len();
        for i in 0..n {
            assert!((a[i] + a[n - 1 - i]).abs() < 1e-9);
        }
        assert!(a.windows(2).all(|w| w[1] > w[0]));
        assert!((a[n - 1] - spec.half_width).abs() < 1e-9);
    }

    #[test]
    fn vertical_axis_has_surface_node() {
        let spec = GridSpec::default();
        let (z, kt) = vertical_axis(&spec, 375.0);
        assert_eq!(z[0], 0.0);
        assert_eq!(z[kt], 375.0);
        assert!((z.last().unwrap() - 875.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_underresolved_gap() {
        let l = crate::geometry::default_layout();
        let spec = GridSpec { core_spacing: 8.0, ..GridSpec::default() };
        let err = solve_weighting(&l, "Q1", &spec).unwrap_err();
        assert!(err.is_config(), "{err}");
    }

    #[test]
    fn unknown_qubit_is_rejected() {
        let l = crate::geometry::default_layout();
        assert!(solve_weighting(&l, "Q9", &GridSpec::default()).is_err());
    }
}
