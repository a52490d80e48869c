//! Physical constants and small vector helpers.
//!
//! Lengths are in µm, energies in eV, charge in units of e, times in s and
//! angular frequencies in rad/s unless a name says otherwise.

use std::f64::consts::PI;

/// Planck constant (J s).
pub const PLANCK_H: f64 = 6.626_070_15e-34;
/// Reduced Planck constant (J s).
pub const HBAR: f64 = PLANCK_H / (2.0 * PI);
/// Elementary charge (C), also J per eV.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

pub const UM_PER_M: f64 = 1.0e6;

pub type Vec3 = [f64; 3];

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub fn normalize(a: Vec3) -> Vec3 {
    let n = norm(a);
    scale(a, 1.0 / n)
}

/// Energy quoted as a frequency (E/h in Hz) converted to joules.
#[inline]
pub fn hz_to_joule(f: f64) -> f64 {
    f * PLANCK_H
}

/// A sibling of `path` that no other writer in any process uses.
pub(crate) fn unique_tmp(path: &std::path::Path) -> std::path::PathBuf {
    use std::sync::atomic::{AtomicU64, Ordering};
    static NEXT: AtomicU64 = AtomicU64::new(0);
    path.with_extension(format!("tmp{}-{}", std::process::id(), NEXT.fetch_add(1, Ordering::Relaxed)))
}
