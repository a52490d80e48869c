//! Finite-volume Laplace operator on a tensor-product grid and its iterative solvers.

use rayon::prelude::*;

use super::{GridSpec, SolverKind, WallBoundary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

/// Discrete problem: symmetric 7-point operator with fluxes weighted by the
/// permittivity of the layer each face sits in.
pub(crate) struct Problem {
    nx: usize,
    ny: usize,
    nz: usize,
    hx: Vec<f64>,
    hy: Vec<f64>,
    inv_dxp: Vec<f64>,
    inv_dyp: Vec<f64>,
    /// Lateral flux weight of plane k: ε·height of the dual face.
    lat: Vec<f64>,
    /// Vertical coupling between planes k and k+1: ε / Δz.
    vert: Vec<f64>,
    fixed: Vec<bool>,
    diag: Vec<f64>,
    init: Vec<f64>,
}

impl Problem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(x: &[f64], y: &[f64], z: &[f64], k_top: usize, eps_r: f64, spec: &GridSpec, r_island: f64, r_cavity: f64) -> Self {
        let (nx, ny, nz) = (x.len(), y.len(), z.len());
        let dual = |a: &[f64]| -> Vec<f64> {
            (0..a.len())
                .map(|n| {
                    let lo = if n > 0 { a[n] - a[n - 1] } else { 0.0 };
                    let hi = if n + 1 < a.len() { a[n + 1] - a[n] } else { 0.0 };
                    0.5 * (lo + hi)
                })
                .collect()
        };
        let inv_p = |a: &[f64]| -> Vec<f64> { (0..a.len()).map(|n| if n + 1 < a.len() { 1.0 / (a[n + 1] - a[n]) } else { 0.0 }).collect() };
        let layer_eps = |k: usize| if k < k_top { eps_r } else { 1.0 };
        let lat = (0..nz)
            .map(|k| {
                let below = if k > 0 { layer_eps(k - 1) * (z[k] - z[k - 1]) } else { 0.0 };
                let above = if k + 1 < nz { layer_eps(k) * (z[k + 1] - z[k]) } else { 0.0 };
                0.5 * (below + above)
            })
            .collect();
        let vert = (0..nz).map(|k| if k + 1 < nz { layer_eps(k) / (z[k + 1] - z[k]) } else { 0.0 }).collect();

        let n = nx * ny * nz;
        let mut fixed = vec![false; n];
        let mut init = vec![0.0; n];
        let idx = |i: usize, j: usize, k: usize| (k * ny + j) * nx + i;
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let p = idx(i, j, k);
                    let wall = i == 0 || j == 0 || i == nx - 1 || j == ny - 1;
                    if k == nz - 1
                        || (k == 0 && spec.bottom_boundary == WallBoundary::Grounded)
                        || (wall && spec.lateral_boundary == WallBoundary::Grounded)
                    {
                        fixed[p] = true;
                    } else if k == k_top {
                        let rho = x[i].hypot(y[j]);
                        if rho <= r_island {
                            fixed[p] = true;
                            init[p] = 1.0;
                        } else if rho >= r_cavity {
                            fixed[p] = true;
                        }
                    }
                }
            }
        }
        let mut pb = Problem {
            nx,
            ny,
            nz,
            hx: dual(x),
            hy: dual(y),
            inv_dxp: inv_p(x),
            inv_dyp: inv_p(y),
            lat,
            vert,
            fixed,
            diag: Vec::new(),
            init,
        };
        pb.diag = pb.compute_diag();
        pb
    }

    fn compute_diag(&self) -> Vec<f64> {
        let (nx, ny, nz) = (self.nx, self.ny, self.nz);
        let mut d = vec![0.0; nx * ny * nz];
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let mut s = 0.0;
                    if i + 1 < nx {
                        s += self.hy[j] * self.lat[k] * self.inv_dxp[i];
                    }
                    if i > 0 {
                        s += self.hy[j] * self.lat[k] * self.inv_dxp[i - 1];
                    }
                    if j + 1 < ny {
                        s += self.hx[i] * self.lat[k] * self.inv_dyp[j];
                    }
                    if j > 0 {
                        s += self.hx[i] * self.lat[k] * self.inv_dyp[j - 1];
                    }
                    if k + 1 < nz {
                        s += self.hx[i] * self.hy[j] * self.vert[k];
                    }
                    if k > 0 {
                        s += self.hx[i] * self.hy[j] * self.vert[k - 1];
                    }
                    d[(k * ny + j) * nx + i] = s;
                }
            }
        }
        d
    }

    /// Σ a_nb · u_nb around node (i, j, k).
    #[inline(always)]
    fn neighbor_sum(&self, u: &[f64], i: usize, j: usize, k: usize) -> f64 {
        let (nx, ny, nz) = (self.nx, self.ny, self.nz);
        let p = (k * ny + j) * nx + i;
        let plane = nx * ny;
        let lat = self.lat[k];
        let mut s = 0.0;
        if i + 1 < nx {
            s += self.hy[j] * lat * self.inv_dxp[i] * u[p + 1];
        }
        if i > 0 {
            s += self.hy[j] * lat * self.inv_dxp[i - 1] * u[p - 1];
        }
        if j + 1 < ny {
            s += self.hx[i] * lat * self.inv_dyp[j] * u[p + nx];
        }
        if j > 0 {
            s += self.hx[i] * lat * self.inv_dyp[j - 1] * u[p - nx];
        }
        let hxy = self.hx[i] * self.hy[j];
        if k + 1 < nz {
            s += hxy * self.vert[k] * u[p + plane];
        }
        if k > 0 {
            s += hxy * self.vert[k - 1] * u[p - plane];
        }
        s
    }

    /// out_P = Σ a_nb src_nb − diag_P src_P on free nodes, 0 on fixed nodes.
    fn residual_like(&self, src: &[f64], out: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        out.par_chunks_mut(nx * ny).enumerate().for_each(|(k, plane)| {
            for j in 0..ny {
                for i in 0..nx {
                    let p = (k * ny + j) * nx + i;
                    plane[j * nx + i] = if self.fixed[p] { 0.0 } else { self.neighbor_sum(src, i, j, k) - self.diag[p] * src[p] };
                }
            }
        });
    }

    pub fn solve(&self, spec: &GridSpec) -> Result<(Vec<f64>, SolveStats)> {
        match spec.solver {
            SolverKind::Cg => self.solve_cg(spec),
            SolverKind::Sor => self.solve_sor(spec),
        }
    }

    fn b_norm(&self) -> f64 {
        // b = contributions of fixed neighbours, i.e. the residual of the
        // field that is zero on every free node.
        let mut r = vec![0.0; self.init.len()];
        self.residual_like(&self.init, &mut r);
        norm2(&r).max(f64::MIN_POSITIVE)
    }

    fn solve_cg(&self, spec: &GridSpec) -> Result<(Vec<f64>, SolveStats)> {
        let n = self.init.len();
        let mut u = self.init.clone();
        let mut r = vec![0.0; n];
        self.residual_like(&u, &mut r);
        let b_norm = norm2(&r).max(f64::MIN_POSITIVE);
        let inv_diag: Vec<f64> = self.diag.iter().zip(&self.fixed).map(|(&d, &f)| if f || d == 0.0 { 0.0 } else { 1.0 / d }).collect();
        let mut zv: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
        let mut p = zv.clone();
        let mut ap = vec![0.0; n];
        let mut rz = dot(&r, &zv);
        let mut rel = norm2(&r) / b_norm;
        let mut it = 0;
        while rel > spec.tolerance {
            if it >= spec.max_iterations {
                return Err(Error::NotConverged { iterations: it, residual: rel });
            }
            // A p = −(Σ a p_nb − diag p) since the residual form carries the opposite sign.
            self.residual_like(&p, &mut ap);
            ap.par_iter_mut().for_each(|v| *v = -*v);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                return Err(Error::NotConverged { iterations: it, residual: rel });
            }
            let a = rz / pap;
            u.par_iter_mut().zip(&p).for_each(|(ui, pi)| *ui += a * pi);
            r.par_iter_mut().zip(&ap).for_each(|(ri, api)| *ri -= a * api);
            zv.par_iter_mut().zip(r.par_iter().zip(&inv_diag)).for_each(|(zi, (ri, di))| *zi = ri * di);
            let rz_new = dot(&r, &zv);
            let beta = rz_new / rz;
            rz = rz_new;
            p.par_iter_mut().zip(&zv).for_each(|(pi, zi)| *pi = zi + beta * *pi);
            it += 1;
            if it % 50 == 0 {
                // Refresh the recursive residual to avoid drift.
                self.residual_like(&u, &mut r);
            }
            rel = norm2(&r) / b_norm;
        }
        self.residual_like(&u, &mut r);
        let rel = norm2(&r) / b_norm;
        Ok((u, SolveStats { iterations: it, residual: rel }))
    }

    fn solve_sor(&self, spec: &GridSpec) -> Result<(Vec<f64>, SolveStats)> {
        let (nx, ny, nz) = (self.nx, self.ny, self.nz);
        let b_norm = self.b_norm();
        let mut u = self.init.clone();
        let mut r = vec![0.0; u.len()];
        let omega = spec.omega;
        let mut it = 0;
        loop {
            if it % 10 == 0 {
                self.residual_like(&u, &mut r);
                let rel = norm2(&r) / b_norm;
                if rel <= spec.tolerance {
                    return Ok((u, SolveStats { iterations: it, residual: rel }));
                }
                if it >= spec.max_iterations {
                    return Err(Error::NotConverged { iterations: it, residual: rel });
                }
            }
            for color in 0..2 {
                for k in 0..nz {
                    for j in 0..ny {
                        let start = (color + j + k) % 2;
                        for i in (start..nx).step_by(2) {
                            let p = (k * ny + j) * nx + i;
                            if self.fixed[p] {
                                continue;
                            }
                            let gs = self.neighbor_sum(&u, i, j, k) / self.diag[p];
                            u[p] += omega * (gs - u[p]);
                        }
                    }
                }
            }
            it += 1;
        }
    }
}

/// Inner product with fixed chunking so the result does not depend on the thread count.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    const CHUNK: usize = 8192;
    let partial: Vec<f64> = a.par_chunks(CHUNK).zip(b.par_chunks(CHUNK)).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum()).collect();
    partial.iter().sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
