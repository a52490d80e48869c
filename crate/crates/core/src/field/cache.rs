//! On-disk cache for solved weighting grids.
//!
//! File layout (little endian): the 8-byte magic `CBWGRID1`, a u64 header
//! length, a JSON header, then the x, y, z node coordinates and the node
//! values as f64.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{nodal_gradient, solve_weighting_for, FieldData, GridSpec, WeightingGrid};
use crate::error::{Error, Result};
use crate::geometry::{QubitGeometry, Substrate};

const MAGIC: &[u8; 8] = b"CBWGRID1";

#[derive(Serialize, Deserialize)]
struct Header {
    key: String,
    qubit_id: String,
    origin: [f64; 3],
    nx: usize,
    ny: usize,
    nz: usize,
    k_top: usize,
    residual: f64,
    iterations: usize,
    spec: GridSpec,
}

#[derive(Serialize)]
struct KeyInput<'a> {
    island_radius: f64,
    cavity_radius: f64,
    thickness: f64,
    relative_permittivity: f64,
    spec: &'a GridSpec,
}

/// Hash of everything that determines the solved field (electrode geometry,
/// substrate and grid settings). Independent of the qubit's position.
pub fn cache_key(q: &QubitGeometry, s: &Substrate, spec: &GridSpec) -> String {
    let input = KeyInput {
        island_radius: q.island_radius,
        cavity_radius: q.cavity_radius,
        thickness: s.thickness,
        relative_permittivity: s.relative_permittivity,
        spec,
    };
    let json = serde_json::to_string(&input).expect("key serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

fn cache_path(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("alpha-{}.bin", &key[..16]))
}

pub fn write_grid(path: &Path, grid: &WeightingGrid, key: &str, spec: &GridSpec) -> Result<()> {
    let d = &grid.data;
    let header = Header {
        key: key.to_string(),
        qubit_id: grid.qubit_id.clone(),
        origin: grid.origin,
        nx: d.x.len(),
        ny: d.y.len(),
        nz: d.z.len(),
        k_top: d.k_top,
        residual: grid.residual,
        iterations: grid.iterations,
        spec: spec.clone(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
    let tmp = crate::units::unique_tmp(path);
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(MAGIC)?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for arr in [&d.x, &d.y, &d.z, &d.values] {
            for v in arr.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
    }
    std::fs::rename(tmp, path)?;
    Ok(())
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

/// Reads a cached grid; returns the grid and its stored key.
pub fn read_grid(path: &Path) -> Result<(WeightingGrid, String)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("{} is not a weighting-grid cache", path.display())));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
    r.read_exact(&mut json)?;
    let h: Header = serde_json::from_slice(&json).map_err(|e| Error::Format(e.to_string()))?;
    let x = read_f64s(&mut r, h.nx)?;
    let y = read_f64s(&mut r, h.ny)?;
    let z = read_f64s(&mut r, h.nz)?;
    let values = read_f64s(&mut r, h.nx * h.ny * h.nz)?;
    let grad = nodal_gradient(&x, &y, &z, h.k_top, &values);
    let grid = WeightingGrid {
        qubit_id: h.qubit_id,
        origin: h.origin,
        residual: h.residual,
        iterations: h.iterations,
        data: Arc::new(FieldData { x, y, z, k_top: h.k_top, values, grad }),
    };
    Ok((grid, h.key))
}

/// Returns the cached field for this geometry if present, otherwise solves
/// and stores it.
pub fn load_or_solve(q: &QubitGeometry, s: &Substrate, spec: &GridSpec, dir: &Path) -> Result<WeightingGrid> {
    let key = cache_key(q, s, spec);
    let path = cache_path(dir, &key);
    if path.exists() {
        match read_grid(&path) {
            Ok((grid, stored)) if stored == key => {
                log::info!("loaded weighting field from {}", path.display());
                return Ok(grid.relocated(&q.id, q.center));
            }
            Ok(_) => log::warn!("cache key mismatch in {}; re-solving", path.display()),
            Err(e) => log::warn!("unreadable cache {}: {e}; re-solving", path.display()),
        }
    }
    log::info!("solving weighting field for {}", q.id);
    let grid = solve_weighting_for(q, s, spec)?;
    std::fs::create_dir_all(dir)?;
    write_grid(&path, &grid, &key, spec)?;
    Ok(grid)
}
