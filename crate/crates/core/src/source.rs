//! Particle impact generators: gamma-ray point deposits and straight muon
//! tracks through the substrate, with Poisson arrival times.

use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Substrate;
use crate::rng::{stream, Purpose};
use crate::units::{add, norm, scale, sub, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Species {
    Gamma,
    Muon,
}

impl Species {
    pub fn as_str(self) -> &'static str {
        match self {
            Species::Gamma => "gamma",
            Species::Muon => "muon",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: Vec3,
    pub end: Vec3,
    pub energy_ev: f64,
}

impl Segment {
    pub fn length(&self) -> f64 {
        norm(sub(self.end, self.start))
    }
    pub fn midpoint(&self) -> Vec3 {
        scale(add(self.start, self.end), 0.5)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactEvent {
    pub event_id: u64,
    pub species: Species,
    /// Arrival time (s).
    pub time: f64,
    pub segments: Vec<Segment>,
}

impl ImpactEvent {
    pub fn total_energy(&self) -> f64 {
        self.segments.iter().map(|s| s.energy_ev).sum()
    }
}

/// Energy distribution of gamma-ray deposits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GammaSpectrum {
    /// Exponential with the given mean, truncated at `cutoff_ev`.
    Exponential { mean_ev: f64, cutoff_ev: f64 },
    /// Every deposit has the same energy.
    Delta { energy_ev: f64 },
    /// Piecewise-linear density through the given points.
    Tabulated { energy_ev: Vec<f64>, density: Vec<f64> },
}

impl Default for GammaSpectrum {
    fn default() -> Self {
        GammaSpectrum::Exponential { mean_ev: 100.0e3, cutoff_ev: 1.0e6 }
    }
}

impl GammaSpectrum {
    pub fn validate(&self) -> Result<()> {
        match self {
            GammaSpectrum::Exponential { mean_ev, cutoff_ev } => {
                if !(*mean_ev > 0.0 && *cutoff_ev > 0.0) {
                    return Err(Error::invalid("source.gamma_spectrum", "mean and cutoff must be positive"));
                }
            }
            GammaSpectrum::Delta { energy_ev } => {
                if !(*energy_ev > 0.0) {
                    return Err(Error::invalid("source.gamma_spectrum.energy_ev", "must be positive"));
                }
            }
            GammaSpectrum::Tabulated { energy_ev, density } => {
                if energy_ev.len() < 2 || energy_ev.len() != density.len() {
                    return Err(Error::invalid("source.gamma_spectrum", "table needs at least two (energy, density) rows"));
                }
                if energy_ev.windows(2).any(|w| w[1] <= w[0]) || energy_ev[0] < 0.0 {
                    return Err(Error::invalid("source.gamma_spectrum.energy_ev", "energies must be nonnegative and increasing"));
                }
                if density.iter().any(|d| *d < 0.0) || self.tabulated_mass() <= 0.0 {
                    return Err(Error::invalid("source.gamma_spectrum.density", "density must be nonnegative with positive mass"));
                }
            }
        }
        Ok(())
    }

    fn tabulated_mass(&self) -> f64 {
        match self {
            GammaSpectrum::Tabulated { energy_ev, density } => energy_ev
                .windows(2)
                .zip(density.windows(2))
                .map(|(e, d)| 0.5 * (d[0] + d[1]) * (e[1] - e[0]))
                .sum(),
            _ => 1.0,
        }
    }

    /// Mean of the (normalized) spectrum.
    pub fn mean(&self) -> f64 {
        match self {
            GammaSpectrum::Exponential { mean_ev, cutoff_ev } => {
                let r = cutoff_ev / mean_ev;
                mean_ev - cutoff_ev * (-r).exp() / (1.0 - (-r).exp())
            }
            GammaSpectrum::Delta { energy_ev } => *energy_ev,
            GammaSpectrum::Tabulated { energy_ev, density } => {
                // Exact first moment of the piecewise-linear density.
                let m: f64 = energy_ev
                    .windows(2)
                    .zip(density.windows(2))
                    .map(|(e, d)| {
                        let h = e[1] - e[0];
                        h * (d[0] * (2.0 * e[0] + e[1]) + d[1] * (e[0] + 2.0 * e[1])) / 6.0
                    })
                    .sum();
                m / self.tabulated_mass()
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            GammaSpectrum::Exponential { mean_ev, cutoff_ev } => {
                let u: f64 = rng.random();
                let tail = (-cutoff_ev / mean_ev).exp();
                -mean_ev * (1.0 - u * (1.0 - tail)).ln()
            }
            GammaSpectrum::Delta { energy_ev } => *energy_ev,
            GammaSpectrum::Tabulated { energy_ev, density } => {
                let total = self.tabulated_mass();
                let mut target = rng.random::<f64>() * total;
                for (e, d) in energy_ev.windows(2).zip(density.windows(2)) {
                    let h = e[1] - e[0];
                    let mass = 0.5 * (d[0] + d[1]) * h;
                    if target <= mass || e[1] == *energy_ev.last().unwrap() {
                        // Invert the quadratic CDF of the linear piece.
                        let slope = (d[1] - d[0]) / h;
                        let t = target.min(mass);
                        let x = if slope.abs() < 1e-300 {
                            if d[0] > 0.0 { t / d[0] } else { 0.0 }
                        } else {
                            let disc = (d[0] * d[0] + 2.0 * slope * t).max(0.0);
                            (disc.sqrt() - d[0]) / slope
                        };
                        return e[0] + x.clamp(0.0, h);
                    }
                    target -= mass;
                }
                *energy_ev.last().unwrap()
            }
        }
    }

    /// Loads a two-column `energy_eV density` table. Blank lines and lines
    /// starting with `#` are ignored; columns may be separated by whitespace or commas.
    pub fn from_table_file(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut energy_ev = Vec::new();
        let mut density = Vec::new();
        for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = t.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
            let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), n + 1)));
            if cols.len() < 2 {
                return Err(Error::Format(format!("{}:{}: expected two columns", path.display(), n + 1)));
            }
            energy_ev.push(parse(cols[0])?);
            density.push(parse(cols[1])?);
        }
        let s = GammaSpectrum::Tabulated { energy_ev, density };
        s.validate()?;
        Ok(s)
    }
}

/// Rates and distributions of the two particle species.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceSpec {
    /// Γ_γ (Hz).
    pub gamma_rate: f64,
    /// Γ_µ (Hz).
    pub muon_rate: f64,
    pub gamma_spectrum: GammaSpectrum,
    /// Length of the gamma deposit segment (µm); 0 gives a point deposit.
    pub gamma_segment_length: f64,
    /// Mean muon stopping power including folded-in secondaries (eV/µm).
    pub muon_dedx_mean: f64,
    /// Log-normal σ of the per-segment energy fluctuation.
    pub muon_dedx_sigma: f64,
    /// n in the cosⁿθ zenith intensity; infinity gives vertical tracks.
    pub muon_zenith_exponent: f64,
    /// Longest muon track segment (µm).
    pub muon_segment_max: f64,
    pub rng_seed: u64,
}

/// Stopping power that gives a 460 keV mean muon deposit in the default
/// chip with a cos²θ zenith law (mean clipped chord ≈ 532 µm).
pub const DEFAULT_MUON_DEDX: f64 = 865.0;

impl Default for SourceSpec {
    fn default() -> Self {
        SourceSpec {
            gamma_rate: 19.8e-3,
            muon_rate: 0.5e-3,
            gamma_spectrum: GammaSpectrum::default(),
            gamma_segment_length: 0.0,
            muon_dedx_mean: DEFAULT_MUON_DEDX,
            muon_dedx_sigma: 0.3,
            muon_zenith_exponent: 2.0,
            muon_segment_max: 25.0,
            rng_seed: 1,
        }
    }
}

impl SourceSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_rate >= 0.0) || !(self.muon_rate >= 0.0) {
            return Err(Error::invalid("source.*_rate", "rates must be nonnegative"));
        }
        self.gamma_spectrum.validate()?;
        if !(self.gamma_segment_length >= 0.0) {
            return Err(Error::invalid("source.gamma_segment_length", "must be nonnegative"));
        }
        if !(self.muon_dedx_mean > 0.0) {
            return Err(Error::invalid("source.muon_dedx_mean", "must be positive"));
        }
        if !(self.muon_dedx_sigma >= 0.0) {
            return Err(Error::invalid("source.muon_dedx_sigma", "must be nonnegative"));
        }
        if !(self.muon_zenith_exponent >= 0.0) {
            return Err(Error::invalid("source.muon_zenith_exponent", "must be nonnegative"));
        }
        if !(self.muon_segment_max > 0.0) {
            return Err(Error::invalid("source.muon_segment_max", "must be positive"));
        }
        Ok(())
    }
}

fn isotropic_direction<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    let cos_t = 2.0 * rng.random::<f64>() - 1.0;
    let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
    let phi = 2.0 * PI * rng.random::<f64>();
    [sin_t * phi.cos(), sin_t * phi.sin(), cos_t]
}

/// Distance from `p` (inside the substrate) to the boundary along unit `dir`.
pub fn exit_distance(s: &Substrate, p: Vec3, dir: Vec3) -> f64 {
    let hi = [s.side_x, s.side_y, s.thickness];
    let mut t = f64::INFINITY;
    for a in 0..3 {
        if dir[a] > 0.0 {
            t = t.min((hi[a] - p[a]) / dir[a]);
        } else if dir[a] < 0.0 {
            t = t.min(-p[a] / dir[a]);
        }
    }
    t.max(0.0)
}

/// Clamps a point onto the closed substrate box (absorbs rounding at exits).
pub fn clamp_to_substrate(s: &Substrate, p: Vec3) -> Vec3 {
    [p[0].clamp(0.0, s.side_x), p[1].clamp(0.0, s.side_y), p[2].clamp(0.0, s.thickness)]
}

/// One gamma-ray deposit: position uniform in the volume, energy from the spectrum.
pub fn sample_gamma<R: Rng + ?Sized>(spec: &SourceSpec, substrate: &Substrate, rng: &mut R) -> Vec<Segment> {
    let p = [
        rng.random::<f64>() * substrate.side_x,
        rng.random::<f64>() * substrate.side_y,
        rng.random::<f64>() * substrate.thickness,
    ];
    let energy_ev = spec.gamma_spectrum.sample(rng);
    if spec.gamma_segment_length <= 0.0 {
        return vec![Segment { start: p, end: p, energy_ev }];
    }
    let dir = isotropic_direction(rng);
    let half = 0.5 * spec.gamma_segment_length;
    let fwd = exit_distance(substrate, p, dir).min(half);
    let back = exit_distance(substrate, p, scale(dir, -1.0)).min(half);
    let start = clamp_to_substrate(substrate, add(p, scale(dir, -back)));
    let end = clamp_to_substrate(substrate, add(p, scale(dir, fwd)));
    vec![Segment { start, end, energy_ev }]
}

/// Downward direction with intensity ∝ cosⁿθ per solid angle.
fn muon_direction<R: Rng + ?Sized>(n: f64, rng: &mut R) -> Vec3 {
    let cos_t = if n.is_infinite() { 1.0 } else { rng.random::<f64>().powf(1.0 / (n + 1.0)) };
    let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
    let phi = 2.0 * PI * rng.random::<f64>();
    [sin_t * phi.cos(), sin_t * phi.sin(), -cos_t]
}

/// A straight muon chord entering through the top surface, split into
/// segments no longer than `muon_segment_max`.
pub fn sample_muon<R: Rng + ?Sized>(spec: &SourceSpec, substrate: &Substrate, rng: &mut R) -> Vec<Segment> {
    let (entry, dir, length) = loop {
        let entry = [rng.random::<f64>() * substrate.side_x, rng.random::<f64>() * substrate.side_y, substrate.thickness];
        let dir = muon_direction(spec.muon_zenith_exponent, rng);
        let length = exit_distance(substrate, entry, dir);
        if length >= 1.0 {
            break (entry, dir, length);
        }
    };
    let n = (length / spec.muon_segment_max).ceil().max(1.0) as usize;
    let step = length / n as f64;
    let sigma = spec.muon_dedx_sigma;
    (0..n)
        .map(|i| {
            let start = clamp_to_substrate(substrate, add(entry, scale(dir, i as f64 * step)));
            let end = clamp_to_substrate(substrate, add(entry, scale(dir, (i + 1) as f64 * step)));
            let fluct = if sigma > 0.0 {
                let g: f64 = StandardNormal.sample(rng);
                (sigma * g - 0.5 * sigma * sigma).exp()
            } else {
                1.0
            };
            Segment { start, end, energy_ev: step * spec.muon_dedx_mean * fluct }
        })
        .collect()
}

/// How much of an event stream to generate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StreamLength {
    Events(u64),
    /// Simulated time span (s).
    Duration(f64),
}

/// Arrival time and species of each event, without its geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventPlan {
    pub event_id: u64,
    pub species: Species,
    pub time: f64,
}

/// Poisson arrivals at the summed rate; each event's species is drawn in
/// proportion to the two rates.
pub fn plan_events(spec: &SourceSpec, length: StreamLength) -> Result<Vec<EventPlan>> {
    spec.validate()?;
    let total = spec.gamma_rate + spec.muon_rate;
    let seed = spec.rng_seed;
    let draw = |id: u64, t_prev: f64| -> EventPlan {
        let dt: f64 = Exp1.sample(&mut stream(seed, Purpose::Arrival, id));
        let u: f64 = stream(seed, Purpose::Species, id).random();
        let species = if u * total < spec.gamma_rate { Species::Gamma } else { Species::Muon };
        EventPlan { event_id: id, species, time: t_prev + dt / total }
    };
    match length {
        StreamLength::Events(n) => {
            if n > 0 && total <= 0.0 {
                return Err(Error::invalid("source.*_rate", "at least one rate must be positive"));
            }
            let mut t = 0.0;
            Ok((0..n)
                .map(|id| {
                    let p = draw(id, t);
                    t = p.time;
                    p
                })
                .collect())
        }
        StreamLength::Duration(d) => {
            if !(d >= 0.0) {
                return Err(Error::invalid("duration", "must be nonnegative"));
            }
            let mut out = Vec::new();
            if total <= 0.0 || d == 0.0 {
                return Ok(out);
            }
            let mut t = 0.0;
            for id in 0.. {
                let p = draw(id, t);
                if p.time > d {
                    break;
                }
                t = p.time;
                out.push(p);
            }
            Ok(out)
        }
    }
}

/// Generates the geometry of one planned event from its own random stream.
pub fn generate_event(spec: &SourceSpec, substrate: &Substrate, plan: &EventPlan) -> ImpactEvent {
    let mut rng = stream(spec.rng_seed, Purpose::Source, plan.event_id);
    let segments = match plan.species {
        Species::Gamma => sample_gamma(spec, substrate, &mut rng),
        Species::Muon => sample_muon(spec, substrate, &mut rng),
    };
    ImpactEvent { event_id: plan.event_id, species: plan.species, time: plan.time, segments }
}

/// A time-ordered event stream. Generation is parallel but the output only
/// depends on the spec.
pub fn sample_event_stream(spec: &SourceSpec, substrate: &Substrate, length: StreamLength) -> Result<Vec<ImpactEvent>> {
    let plans = plan_events(spec, length)?;
    Ok(plans.par_iter().map(|p| generate_event(spec, substrate, p)).collect())
}

/// Writes events as JSON lines, one event per line.
pub fn write_events_jsonl<W: Write>(mut w: W, events: &[ImpactEvent]) -> Result<()> {
    for e in events {
        serde_json::to_writer(&mut w, e).map_err(|e| Error::Format(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_events_jsonl<R: BufRead>(r: R) -> Result<Vec<ImpactEvent>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Format(e.to_string()))?);
    }
    Ok(out)
}
