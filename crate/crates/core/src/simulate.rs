//! Per-event chain: pair creation, transport, induced charge on each qubit
//! and the two error models.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::config::{SimulationConfig, TransportMode};
use crate::error::Result;
use crate::field::{solve_layout, WeightingGrid};
use crate::geometry::ChipLayout;
use crate::induced::{alias, induced_offset_charge, measure, EventOutcome, QubitOutcome};
use crate::qubit_errors::{charge_dispersion, dipole_transient_error, phase_flip_error, Deposit, DipoleCharges, TransmonParams};
use crate::rng::{stream, Purpose};
use crate::source::ImpactEvent;
use crate::transport::{create_pairs, raw_pair_count, load_or_build_pdf, transport, transport_with_pdf, ChargePdf};

/// Counters that do not belong to any single outcome.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Diagnostics {
    /// Deposits inside a grid box whose gradient was unavailable.
    pub skipped_gradients: u64,
    /// PDF draws beyond the table range.
    pub beyond_table: u64,
    /// Tracked pairs over all events.
    pub tracked_pairs: u64,
}

impl Diagnostics {
    fn merge(self, o: Diagnostics) -> Diagnostics {
        Diagnostics {
            skipped_gradients: self.skipped_gradients + o.skipped_gradients,
            beyond_table: self.beyond_table + o.beyond_table,
            tracked_pairs: self.tracked_pairs + o.tracked_pairs,
        }
    }
}

pub struct Simulator {
    pub config: SimulationConfig,
    pub layout: ChipLayout,
    pub grids: Vec<WeightingGrid>,
    pub transmons: Vec<TransmonParams>,
    pub dispersions: Vec<f64>,
    pdf: Option<(ChargePdf, ChargePdf)>,
}

fn isotropic<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    let c = 2.0 * rng.random::<f64>() - 1.0;
    let s = (1.0 - c * c).max(0.0).sqrt();
    let phi = std::f64::consts::TAU * rng.random::<f64>();
    [s * phi.cos(), s * phi.sin(), c]
}

impl Simulator {
    /// Validates the config, solves (or loads) the weighting fields and, in
    /// PDF mode, the displacement tables.
    pub fn new(config: SimulationConfig, cache_dir: Option<&Path>) -> Result<Self> {
        config.validate()?;
        let layout = config.resolve_layout()?;
        let grids = solve_layout(&layout, &config.grid, cache_dir)?;
        Self::with_grids(config, layout, grids, cache_dir)
    }

    /// Like [`Simulator::new`] with weighting fields supplied by the caller.
    pub fn with_grids(config: SimulationConfig, layout: ChipLayout, grids: Vec<WeightingGrid>, cache_dir: Option<&Path>) -> Result<Self> {
        config.validate()?;
        let transmons = vec![config.errors.transmon; layout.qubits.len()];
        let dispersions = transmons.iter().map(charge_dispersion).collect();
        let pdf = match config.transport_mode {
            TransportMode::Direct => None,
            TransportMode::Pdf => {
                let seed = config.seed();
                let (g, n) = (&config.pdf.grid, config.pdf.samples_per_zbin);
                let reach = 0.5 * g.lateral_bins as f64 * g.lateral_bin;
                let lost = (-reach / config.transport.lambda_trap).exp();
                if lost > 1e-4 {
                    log::warn!("displacement table reaches ±{reach} µm; about {lost:.1e} of flights are longer and dropped");
                }
                Some(match cache_dir {
                    Some(dir) => load_or_build_pdf(&config.transport, &layout.substrate, g, n, seed, dir)?,
                    None => crate::transport::build_charge_pdf(&config.transport, &layout.substrate, g, n, seed)?,
                })
            }
        };
        Ok(Simulator { config, layout, grids, transmons, dispersions, pdf })
    }

    pub fn qubit_ids(&self) -> Vec<String> {
        self.layout.qubits.iter().map(|q| q.id.clone()).collect()
    }

    /// Full chain for one event. Randomness comes from the event's own streams.
    pub fn simulate_event(&self, event: &ImpactEvent) -> Result<(EventOutcome, Diagnostics)> {
        let cfg = &self.config;
        let seed = cfg.seed();
        let id = event.event_id;
        let substrate = &self.layout.substrate;
        let initial = create_pairs(event, &cfg.transport, &mut stream(seed, Purpose::Pairs, id));
        let mut trng = stream(seed, Purpose::Transport, id);
        let carriers = match &self.pdf {
            None => transport(&initial, &cfg.transport, substrate, &mut trng),
            Some((e, h)) => transport_with_pdf(&initial, e, h, substrate, &mut trng)?,
        };
        let mut drng = stream(seed, Purpose::Dipole, id);
        let deposits: Vec<Deposit> = event
            .segments
            .iter()
            .zip(&initial.retained_per_segment)
            .map(|(s, &kept)| {
                let charges = match cfg.errors.dipole_charges {
                    DipoleCharges::Liberated => 2 * raw_pair_count(s.energy_ev, cfg.transport.pair_energy),
                    DipoleCharges::RetainedPairs => kept,
                };
                Deposit { position: s.midpoint(), charges, dipole: isotropic(&mut drng) }
            })
            .collect();
        let mut nrng = stream(seed, Purpose::Noise, id);
        let mut diag = Diagnostics { beyond_table: carriers.beyond_table, tracked_pairs: initial.pairs.len() as u64, ..Diagnostics::default() };
        let per_qubit = self
            .grids
            .iter()
            .zip(&self.transmons)
            .zip(&self.dispersions)
            .map(|((grid, tp), &disp)| {
                let dq_raw = induced_offset_charge(&carriers, grid);
                let dq_aliased = alias(dq_raw);
                let dq_measured = measure(dq_aliased, cfg.sigma_q, &mut nrng);
                let dip = dipole_transient_error(
                    &deposits,
                    grid,
                    tp,
                    substrate.sound_speed,
                    cfg.errors.rotation_sum,
                    cfg.errors.eps_theta_cap,
                );
                diag.skipped_gradients += dip.skipped as u64;
                QubitOutcome {
                    qubit_id: grid.qubit_id.clone(),
                    dq_raw,
                    dq_aliased,
                    dq_measured,
                    eps_phi: phase_flip_error(dq_raw, disp, tp.tau_sc),
                    eps_theta: dip.eps_theta,
                }
            })
            .collect();
        Ok((EventOutcome { event_id: id, species: event.species, time: event.time, per_qubit }, diag))
    }

    /// Runs every event in parallel; the output order follows the input.
    pub fn simulate_events(&self, events: &[ImpactEvent]) -> Result<(Vec<EventOutcome>, Diagnostics)> {
        let results: Vec<(EventOutcome, Diagnostics)> = events.par_iter().map(|e| self.simulate_event(e)).collect::<Result<_>>()?;
        let diag = results.iter().fold(Diagnostics::default(), |a, (_, d)| a.merge(*d));
        Ok((results.into_iter().map(|(o, _)| o).collect(), diag))
    }
}
