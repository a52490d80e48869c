//! Electron-hole pair creation and kinematic carrier transport.
//!
//! Every carrier makes a single straight flight: holes in an isotropic
//! direction, electrons along one of the six valley axes with a Gaussian
//! angular spread. The flight length is exponential with mean `lambda_trap`
//! and ends early at the substrate surface.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::Substrate;
use crate::rng::{stream, Purpose};
use crate::source::{clamp_to_substrate, exit_distance, ImpactEvent};
use crate::units::{add, cross, dot, normalize, scale, sub, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportParams {
    /// Mean trapping length (µm).
    pub lambda_trap: f64,
    /// Fraction of pairs that escape recombination.
    pub f_q: f64,
    /// Energy per electron-hole pair (eV).
    pub pair_energy: f64,
    /// Electron flight axes; empty means the substrate's six valley axes.
    pub valley_axes: Vec<Vec3>,
    /// Gaussian angular spread about the valley axis (rad).
    pub valley_spread_sigma: f64,
    /// Largest number of pairs tracked per event before weighted subsampling.
    pub max_carriers_per_event: u64,
}

impl Default for TransportParams {
    fn default() -> Self {
        TransportParams {
            lambda_trap: 300.0,
            f_q: 0.2,
            pair_energy: 3.6,
            valley_axes: Vec::new(),
            valley_spread_sigma: 25f64.to_radians(),
            max_carriers_per_event: 20_000,
        }
    }
}

impl TransportParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_trap > 0.0) {
            return Err(Error::invalid("transport.lambda_trap", "must be positive"));
        }
        if !(self.f_q > 0.0 && self.f_q <= 1.0) {
            return Err(Error::invalid("transport.f_q", "must lie in (0, 1]"));
        }
        if !(self.pair_energy > 0.0) {
            return Err(Error::invalid("transport.pair_energy", "must be positive"));
        }
        if !(self.valley_spread_sigma >= 0.0) {
            return Err(Error::invalid("transport.valley_spread_sigma", "must be nonnegative"));
        }
        if self.max_carriers_per_event == 0 {
            return Err(Error::invalid("transport.max_carriers_per_event", "must be positive"));
        }
        if self.valley_axes.iter().any(|a| !(crate::units::norm(*a) > 0.0)) {
            return Err(Error::invalid("transport.valley_axes", "axes must be nonzero"));
        }
        Ok(())
    }

    fn axes(&self, substrate: &Substrate) -> Vec<Vec3> {
        if self.valley_axes.is_empty() {
            substrate.valley_axes().to_vec()
        } else {
            self.valley_axes.iter().map(|a| normalize(*a)).collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CarrierKind {
    Electron,
    Hole,
}

impl CarrierKind {
    pub fn sign(self) -> i8 {
        match self {
            CarrierKind::Electron => -1,
            CarrierKind::Hole => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Carrier {
    /// −1 electron, +1 hole.
    pub sign: i8,
    pub position: Vec3,
    pub weight: f64,
}

/// Pair origins of one event, before transport.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialCarriers {
    pub event_id: u64,
    /// Birth position of each tracked pair.
    pub pairs: Vec<Vec3>,
    /// Weight carried by each tracked pair.
    pub weight: f64,
    /// Pairs surviving recombination, per segment, before subsampling.
    pub retained_per_segment: Vec<u64>,
}

impl InitialCarriers {
    pub fn retained(&self) -> u64 {
        self.retained_per_segment.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CarrierSet {
    pub origin_event_id: u64,
    pub entries: Vec<Carrier>,
    /// Carriers whose displacement fell outside a PDF table (not in `entries`).
    pub beyond_table: u64,
}

/// Pair count of one deposit: round(E / pair_energy).
pub fn raw_pair_count(energy_ev: f64, pair_energy: f64) -> u64 {
    (energy_ev / pair_energy).round().max(0.0) as u64
}

/// Liberates pairs along each segment and applies recombination thinning and
/// the per-event cap.
pub fn create_pairs<R: Rng + ?Sized>(event: &ImpactEvent, params: &TransportParams, rng: &mut R) -> InitialCarriers {
    let retained: Vec<u64> = event
        .segments
        .iter()
        .map(|s| {
            let n = raw_pair_count(s.energy_ev, params.pair_energy);
            if n == 0 || params.f_q >= 1.0 {
                n
            } else {
                Binomial::new(n, params.f_q).expect("valid binomial").sample(rng)
            }
        })
        .collect();
    let total: u64 = retained.iter().sum();
    let cap = params.max_carriers_per_event;
    let (kept, weight) = if total > cap {
        // Uniform subsample without replacement, split across segments.
        let mut idx = rand::seq::index::sample(rng, total as usize, cap as usize).into_vec();
        idx.sort_unstable();
        let mut kept = vec![0u64; retained.len()];
        let mut seg = 0;
        let mut upper = retained[0] as usize;
        for i in idx {
            while i >= upper {
                seg += 1;
                upper += retained[seg] as usize;
            }
            kept[seg] += 1;
        }
        (kept, total as f64 / cap as f64)
    } else {
        (retained.clone(), 1.0)
    };
    let mut pairs = Vec::with_capacity(kept.iter().sum::<u64>() as usize);
    for (seg, &n) in event.segments.iter().zip(&kept) {
        let d = sub(seg.end, seg.start);
        for _ in 0..n {
            pairs.push(add(seg.start, scale(d, rng.random::<f64>())));
        }
    }
    InitialCarriers { event_id: event.event_id, pairs, weight, retained_per_segment: retained }
}

fn perpendicular_basis(a: Vec3) -> (Vec3, Vec3) {
    let helper = if a[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let e1 = normalize(cross(a, helper));
    let e2 = cross(a, e1);
    (e1, e2)
}

/// Direction sampler for the two carrier species.
pub struct Kinematics {
    axes: Vec<(Vec3, Vec3, Vec3)>,
    sigma: f64,
    lambda: f64,
}

impl Kinematics {
    pub fn new(params: &TransportParams, substrate: &Substrate) -> Self {
        let axes = params
            .axes(substrate)
            .into_iter()
            .map(|a| {
                let (e1, e2) = perpendicular_basis(a);
                (a, e1, e2)
            })
            .collect();
        Kinematics { axes, sigma: params.valley_spread_sigma, lambda: params.lambda_trap }
    }

    pub fn hole_direction<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        let cos_t = 2.0 * rng.random::<f64>() - 1.0;
        let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
        let phi = std::f64::consts::TAU * rng.random::<f64>();
        [sin_t * phi.cos(), sin_t * phi.sin(), cos_t]
    }

    pub fn electron_direction<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        let (a, e1, e2) = self.axes[rng.random_range(0..self.axes.len())];
        if self.sigma == 0.0 {
            return a;
        }
        // Polar deflection from a 2D Gaussian in the tangent plane.
        let g1: f64 = StandardNormal.sample(rng);
        let g2: f64 = StandardNormal.sample(rng);
        let (u, v) = (self.sigma * g1, self.sigma * g2);
        let t = u.hypot(v);
        if t == 0.0 {
            return a;
        }
        let (s, c) = t.sin_cos();
        normalize(add(scale(a, c), add(scale(e1, s * u / t), scale(e2, s * v / t))))
    }

    /// Final position of a carrier born at `p` flying along `dir`.
    pub fn fly<R: Rng + ?Sized>(&self, substrate: &Substrate, p: Vec3, dir: Vec3, rng: &mut R) -> Vec3 {
        let s: f64 = self.lambda * <Exp1 as Distribution<f64>>::sample(&Exp1, rng);
        let t = exit_distance(substrate, p, dir);
        clamp_to_substrate(substrate, add(p, scale(dir, s.min(t))))
    }
}

/// Moves every carrier of an event to its trapping or surface point.
pub fn transport<R: Rng + ?Sized>(initial: &InitialCarriers, params: &TransportParams, substrate: &Substrate, rng: &mut R) -> CarrierSet {
    let kin = Kinematics::new(params, substrate);
    let mut entries = Vec::with_capacity(2 * initial.pairs.len());
    for &p in &initial.pairs {
        let de = kin.electron_direction(rng);
        let e = kin.fly(substrate, p, de, rng);
        let dh = kin.hole_direction(rng);
        let h = kin.fly(substrate, p, dh, rng);
        entries.push(Carrier { sign: -1, position: e, weight: initial.weight });
        entries.push(Carrier { sign: 1, position: h, weight: initial.weight });
    }
    CarrierSet { origin_event_id: initial.event_id, entries, beyond_table: 0 }
}

/// Binning of a displacement table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdfGrid {
    /// Origin-depth layer thickness (µm).
    pub z_layer: f64,
    /// Lateral displacement bin (µm).
    pub lateral_bin: f64,
    /// Bins per lateral axis, centered on the origin (odd).
    pub lateral_bins: usize,
    /// Bins spanning the substrate thickness for the final depth.
    pub vertical_bins: usize,
}

impl Default for PdfGrid {
    fn default() -> Self {
        PdfGrid { z_layer: 10.0, lateral_bin: 10.0, lateral_bins: 101, vertical_bins: 101 }
    }
}

impl PdfGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.z_layer > 0.0 && self.lateral_bin > 0.0) {
            return Err(Error::invalid("pdf", "bin widths must be positive"));
        }
        if self.lateral_bins % 2 == 0 || self.vertical_bins == 0 {
            return Err(Error::invalid("pdf.lateral_bins", "must be odd and positive"));
        }
        Ok(())
    }

    pub fn z_bin_edges(&self, thickness: f64) -> Vec<f64> {
        let mut edges = vec![0.0];
        while *edges.last().unwrap() + 1e-9 < thickness {
            edges.push((edges.last().unwrap() + self.z_layer).min(thickness));
        }
        edges
    }
}

/// Per-layer table of final positions for one carrier species.
///
/// A carrier born at depth z in layer `l` ends in bin `(ix, iy, iz)`: lateral
/// displacement `(ix − c)·lateral_bin`, and absolute final depth in bin `iz`
/// of `vertical_bins` equal slices of the substrate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargePdf {
    pub species: CarrierKind,
    pub grid: PdfGrid,
    pub thickness: f64,
    pub z_bin_edges: Vec<f64>,
    pub sample_count: u64,
    pub layers: Vec<PdfLayer>,
    pub params_hash: String,
}

/// Sparse histogram: occupied bin indices with their counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdfLayer {
    pub bins: Vec<u32>,
    pub counts: Vec<u64>,
    /// Carriers displaced beyond the lateral table range.
    pub absorbed: u64,
    #[serde(skip)]
    cumulative: Vec<u64>,
}

impl PdfLayer {
    fn from_hist(mut hist: Vec<(u32, u64)>, absorbed: u64) -> Self {
        hist.sort_unstable();
        let (bins, counts): (Vec<u32>, Vec<u64>) = hist.into_iter().unzip();
        let mut l = PdfLayer { bins, counts, absorbed, cumulative: Vec::new() };
        l.rebuild();
        l
    }

    fn rebuild(&mut self) {
        let mut acc = 0;
        self.cumulative = self
            .counts
            .iter()
            .map(|c| {
                acc += c;
                acc
            })
            .collect();
    }

    pub fn in_range(&self) -> u64 {
        self.cumulative.last().copied().unwrap_or(0)
    }

    /// Fraction of carriers inside the table.
    pub fn mass(&self) -> f64 {
        let total = self.in_range() + self.absorbed;
        if total == 0 { 0.0 } else { self.in_range() as f64 / total as f64 }
    }

    pub fn count_at(&self, bin: u32) -> u64 {
        self.bins.binary_search(&bin).map(|i| self.counts[i]).unwrap_or(0)
    }
}

impl ChargePdf {
    pub fn layer_index(&self, z: f64) -> Option<usize> {
        if !(z >= 0.0 && z <= self.thickness) {
            return None;
        }
        let n = self.layers.len();
        Some(self.z_bin_edges.partition_point(|e| *e <= z).saturating_sub(1).min(n - 1))
    }

    pub fn bin_index(&self, ix: usize, iy: usize, iz: usize) -> u32 {
        let n = self.grid.lateral_bins;
        ((iz * n + iy) * n + ix) as u32
    }

    fn unpack(&self, bin: u32) -> (usize, usize, usize) {
        let n = self.grid.lateral_bins;
        let b = bin as usize;
        (b % n, (b / n) % n, b / (n * n))
    }

    /// Bin of a displacement, or `None` outside the lateral range.
    fn locate(&self, dx: f64, dy: f64, z: f64) -> Option<u32> {
        let g = &self.grid;
        let c = (g.lateral_bins / 2) as f64;
        let ix = (dx / g.lateral_bin + c + 0.5).floor();
        let iy = (dy / g.lateral_bin + c + 0.5).floor();
        if ix < 0.0 || iy < 0.0 || ix >= g.lateral_bins as f64 || iy >= g.lateral_bins as f64 {
            return None;
        }
        let dz = self.thickness / g.vertical_bins as f64;
        let iz = ((z / dz).floor() as usize).min(g.vertical_bins - 1);
        Some(self.bin_index(ix as usize, iy as usize, iz))
    }

    fn rebuild(&mut self) {
        for l in &mut self.layers {
            l.rebuild();
        }
    }
}

fn pdf_params_hash(params: &TransportParams, substrate: &Substrate, grid: &PdfGrid, samples: u64, seed: u64) -> String {
    let json = serde_json::to_string(&(params, substrate, grid, samples, seed)).expect("params serialize");
    hex::encode(Sha256::digest(json.as_bytes()))
}

/// Builds electron and hole displacement tables. Carriers start on the chip's
/// central vertical line, uniformly in depth within each layer.
pub fn build_charge_pdf(
    params: &TransportParams,
    substrate: &Substrate,
    grid: &PdfGrid,
    samples_per_zbin: u64,
    seed: u64,
) -> Result<(ChargePdf, ChargePdf)> {
    params.validate()?;
    grid.validate()?;
    if samples_per_zbin < 10_000 {
        return Err(Error::invalid("samples_per_zbin", "must be at least 10000"));
    }
    let edges = grid.z_bin_edges(substrate.thickness);
    let hash = pdf_params_hash(params, substrate, grid, samples_per_zbin, seed);
    let empty = |species| ChargePdf {
        species,
        grid: grid.clone(),
        thickness: substrate.thickness,
        z_bin_edges: edges.clone(),
        sample_count: samples_per_zbin,
        layers: Vec::new(),
        params_hash: hash.clone(),
    };
    let mut e_pdf = empty(CarrierKind::Electron);
    let mut h_pdf = empty(CarrierKind::Hole);
    let kin = Kinematics::new(params, substrate);
    let origin_xy = [0.5 * substrate.side_x, 0.5 * substrate.side_y];
    let layers: Vec<(PdfLayer, PdfLayer)> = (0..edges.len() - 1)
        .into_par_iter()
        .map(|l| {
            let mut rng = stream(seed, Purpose::PdfBuild, l as u64);
            let mut he = std::collections::HashMap::<u32, u64>::new();
            let mut hh = std::collections::HashMap::<u32, u64>::new();
            let (mut ae, mut ah) = (0u64, 0u64);
            for _ in 0..samples_per_zbin {
                let z = edges[l] + rng.random::<f64>() * (edges[l + 1] - edges[l]);
                let p = [origin_xy[0], origin_xy[1], z];
                let de = kin.electron_direction(&mut rng);
                let fe = kin.fly(substrate, p, de, &mut rng);
                let dh = kin.hole_direction(&mut rng);
                let fh = kin.fly(substrate, p, dh, &mut rng);
                match e_pdf.locate(fe[0] - p[0], fe[1] - p[1], fe[2]) {
                    Some(b) => *he.entry(b).or_default() += 1,
                    None => ae += 1,
                }
                match h_pdf.locate(fh[0] - p[0], fh[1] - p[1], fh[2]) {
                    Some(b) => *hh.entry(b).or_default() += 1,
                    None => ah += 1,
                }
            }
            (PdfLayer::from_hist(he.into_iter().collect(), ae), PdfLayer::from_hist(hh.into_iter().collect(), ah))
        })
        .collect();
    for (le, lh) in layers {
        e_pdf.layers.push(le);
        h_pdf.layers.push(lh);
    }
    Ok((e_pdf, h_pdf))
}

fn draw_from<R: Rng + ?Sized>(pdf: &ChargePdf, layer: &PdfLayer, origin: Vec3, rng: &mut R) -> Option<Vec3> {
    let total = layer.in_range() + layer.absorbed;
    let u = rng.random_range(0..total);
    if u >= layer.in_range() {
        return None;
    }
    let i = layer.cumulative.partition_point(|c| *c <= u);
    let (ix, iy, iz) = pdf.unpack(layer.bins[i]);
    let g = &pdf.grid;
    let c = (g.lateral_bins / 2) as f64;
    let dz = pdf.thickness / g.vertical_bins as f64;
    Some([
        origin[0] + (ix as f64 - c + rng.random::<f64>() - 0.5) * g.lateral_bin,
        origin[1] + (iy as f64 - c + rng.random::<f64>() - 0.5) * g.lateral_bin,
        (iz as f64 + rng.random::<f64>()) * dz,
    ])
}

/// Draws final positions for `n_pairs` pairs born at `origin` from the
/// origin-depth layer of each table.
pub fn sample_from_pdf<R: Rng + ?Sized>(
    electrons: &ChargePdf,
    holes: &ChargePdf,
    substrate: &Substrate,
    origin: Vec3,
    n_pairs: u64,
    weight: f64,
    event_id: u64,
    rng: &mut R,
) -> Result<CarrierSet> {
    let mut set = CarrierSet { origin_event_id: event_id, entries: Vec::new(), beyond_table: 0 };
    append_from_pdf(electrons, holes, substrate, origin, n_pairs, weight, rng, &mut set)?;
    Ok(set)
}

#[allow(clippy::too_many_arguments)]
fn append_from_pdf<R: Rng + ?Sized>(
    electrons: &ChargePdf,
    holes: &ChargePdf,
    substrate: &Substrate,
    origin: Vec3,
    n_pairs: u64,
    weight: f64,
    rng: &mut R,
    set: &mut CarrierSet,
) -> Result<()> {
    let out_of_table = || Error::OutOfBounds { what: "charge PDF origin depth", position: origin };
    let le = electrons.layer_index(origin[2]).ok_or_else(out_of_table)?;
    let lh = holes.layer_index(origin[2]).ok_or_else(out_of_table)?;
    for (pdf, layer, sign) in [(electrons, &electrons.layers[le], -1i8), (holes, &holes.layers[lh], 1i8)] {
        for _ in 0..n_pairs {
            match draw_from(pdf, layer, origin, rng) {
                Some(p) => set.entries.push(Carrier { sign, position: clamp_to_substrate(substrate, p), weight }),
                None => set.beyond_table += 1,
            }
        }
    }
    Ok(())
}

/// PDF-table counterpart of `create_pairs` + `transport` for a whole event.
pub fn transport_with_pdf<R: Rng + ?Sized>(
    initial: &InitialCarriers,
    electrons: &ChargePdf,
    holes: &ChargePdf,
    substrate: &Substrate,
    rng: &mut R,
) -> Result<CarrierSet> {
    let mut set = CarrierSet { origin_event_id: initial.event_id, entries: Vec::with_capacity(2 * initial.pairs.len()), beyond_table: 0 };
    for &p in &initial.pairs {
        append_from_pdf(electrons, holes, substrate, p, 1, initial.weight, rng, &mut set)?;
    }
    Ok(set)
}

const PDF_MAGIC: &[u8; 8] = b"CBCPDF01";

/// Writes both tables to a versioned binary file.
pub fn write_pdf_cache(path: &Path, electrons: &ChargePdf, holes: &ChargePdf) -> Result<()> {
    let json = serde_json::to_vec(&(electrons, holes)).map_err(|e| Error::Format(e.to_string()))?;
    let tmp = crate::units::unique_tmp(path);
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(PDF_MAGIC)?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        w.flush()?;
    }
    std::fs::rename(tmp, path)?;
    Ok(())
}

/// Reads tables written by `write_pdf_cache`; when `expected_hash` is given
/// the stored parameter hash must match it.
pub fn read_pdf_cache(path: &Path, expected_hash: Option<&str>) -> Result<(ChargePdf, ChargePdf)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != PDF_MAGIC {
        return Err(Error::Format(format!("{} is not a charge-PDF cache", path.display())));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
    r.read_exact(&mut json)?;
    let (mut e, mut h): (ChargePdf, ChargePdf) = serde_json::from_slice(&json).map_err(|e| Error::Format(e.to_string()))?;
    if let Some(want) = expected_hash {
        if e.params_hash != want || h.params_hash != want {
            return Err(Error::Format(format!("{} was built with different parameters", path.display())));
        }
    }
    e.rebuild();
    h.rebuild();
    Ok((e, h))
}

/// Loads cached tables for these parameters or builds and stores them.
pub fn load_or_build_pdf(
    params: &TransportParams,
    substrate: &Substrate,
    grid: &PdfGrid,
    samples_per_zbin: u64,
    seed: u64,
    dir: &Path,
) -> Result<(ChargePdf, ChargePdf)> {
    let hash = pdf_params_hash(params, substrate, grid, samples_per_zbin, seed);
    let path = dir.join(format!("pdf-{}.bin", &hash[..16]));
    if path.exists() {
        match read_pdf_cache(&path, Some(&hash)) {
            Ok(t) => return Ok(t),
            Err(e) => log::warn!("ignoring charge-PDF cache {}: {e}", path.display()),
        }
    }
    let t = build_charge_pdf(params, substrate, grid, samples_per_zbin, seed)?;
    std::fs::create_dir_all(dir)?;
    write_pdf_cache(&path, &t.0, &t.1)?;
    Ok(t)
}

/// Text dump of one layer: `dx dy z count` per occupied bin.
pub fn dump_layer<W: Write>(mut w: W, pdf: &ChargePdf, layer: usize) -> Result<()> {
    let l = pdf.layers.get(layer).ok_or_else(|| Error::invalid("layer", "out of range"))?;
    let g = &pdf.grid;
    let c = (g.lateral_bins / 2) as f64;
    let dz = pdf.thickness / g.vertical_bins as f64;
    writeln!(w, "# {} layer {} z=[{}, {}) absorbed={}", match pdf.species {
        CarrierKind::Electron => "electron",
        CarrierKind::Hole => "hole",
    }, layer, pdf.z_bin_edges[layer], pdf.z_bin_edges[layer + 1], l.absorbed)?;
    writeln!(w, "dx_um dy_um z_um count")?;
    for (&b, &n) in l.bins.iter().zip(&l.counts) {
        let (ix, iy, iz) = pdf.unpack(b);
        writeln!(w, "{} {} {} {}", (ix as f64 - c) * g.lateral_bin, (iy as f64 - c) * g.lateral_bin, (iz as f64 + 0.5) * dz, n)?;
    }
    Ok(())
}

/// Unit displacement direction, or `None` for carriers that did not move.
pub fn displacement_direction(from: Vec3, to: Vec3) -> Option<Vec3> {
    let d = sub(to, from);
    let n = dot(d, d).sqrt();
    (n > 0.0).then(|| scale(d, 1.0 / n))
}
