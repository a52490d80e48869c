//! End-to-end runs: events, outcomes, statistics and error reports written
//! to an output directory together with a manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{SimulationConfig, StatsMode};
use crate::error::{Error, Result};
use crate::induced::{EventOutcome, QubitOutcome};
use crate::qubit_errors::{exceedance_curves, log_levels, ErrorReport};
use crate::rng::{stream, Purpose};
use crate::simulate::{Diagnostics, Simulator};
use crate::source::{read_events_jsonl, sample_event_stream, ImpactEvent, Species, StreamLength};
use crate::stats::{
    charge_asymmetry, detect_jumps, detect_jumps_series, emulate_time_series, joint_histogram, pair_stats, rates_report, Coincidence,
    Estimate, JointHistogram, JumpSeries, PairStats, RatesReport,
};

pub const OUTCOMES_SCHEMA: &str = "chargeburst-outcomes/1";
pub const EVENTS_SCHEMA: &str = "chargeburst-events/1";
pub const JUMPS_SCHEMA: &str = "chargeburst-jumps/1";
pub const EXCEEDANCE_SCHEMA: &str = "chargeburst-exceedance/1";
pub const PAIRS_SCHEMA: &str = "chargeburst-pairs/1";
pub const MANIFEST_SCHEMA: &str = "chargeburst-manifest/1";
const BIN_MAGIC: &[u8; 8] = b"CBOUT001";

/// Joint-histogram bin width (e).
pub const HISTOGRAM_BIN: f64 = 0.02;

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn json_err(e: serde_json::Error) -> Error {
    Error::Format(e.to_string())
}

/// Identifies a run: hash of the resolved configuration and the crate version.
/// Identical config and seed give the same id.
pub fn run_id(config: &SimulationConfig) -> Result<String> {
    let text = config.to_toml_string()?;
    let mut h = Sha256::new();
    h.update(env!("CARGO_PKG_VERSION").as_bytes());
    h.update([0]);
    h.update(text.as_bytes());
    Ok(hex::encode(h.finalize())[..16].to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub run_id: String,
    pub config_hash: String,
    pub seed: u64,
    pub package: String,
    pub version: String,
    pub n_events: u64,
    pub stats_mode: StatsMode,
    pub wall_time_s: f64,
    pub diagnostics: Diagnostics,
    pub files: Vec<FileEntry>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Manifest> {
        let text = fs::read_to_string(dir.join("manifest.json"))?;
        serde_json::from_str(&text).map_err(json_err)
    }
}

/// Statistics and error reports for one set of outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub run_id: String,
    pub qubit_ids: Vec<String>,
    pub n_records: u64,
    pub charge_asymmetry: Option<Estimate>,
    pub pairs: Vec<PairStats>,
    pub rates: Option<RatesReport>,
    /// Keyed by event subset: "all", "gamma", "muon".
    pub errors: BTreeMap<String, ErrorReport>,
}

impl Analysis {
    pub fn pair(&self, a: &str, b: &str) -> Option<&PairStats> {
        self.pairs.iter().find(|p| (p.qubit_a == a && p.qubit_b == b) || (p.qubit_a == b && p.qubit_b == a))
    }
}

/// Everything a run produces in memory.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub manifest: Manifest,
    pub events: Vec<ImpactEvent>,
    pub outcomes: Vec<EventOutcome>,
    pub jumps: JumpSeries,
    pub histograms: Vec<JointHistogram>,
    pub analysis: Analysis,
}

/// All unordered qubit pairs in layout order, with separations.
pub fn layout_pairs(sim: &Simulator) -> Vec<(String, String, f64)> {
    let q = &sim.layout.qubits;
    let mut out = Vec::new();
    for i in 0..q.len() {
        for j in i + 1..q.len() {
            out.push((q[i].id.clone(), q[j].id.clone(), q[i].distance_to(&q[j])));
        }
    }
    out
}

/// Events for a configuration; identical for every transport setting.
pub fn generate_events(config: &SimulationConfig, sim: &Simulator) -> Result<Vec<ImpactEvent>> {
    sample_event_stream(&config.source, &sim.layout.substrate, StreamLength::Events(config.n_events))
}

/// Jump records for the configured statistics mode.
pub fn jumps_for(config: &SimulationConfig, outcomes: &[EventOutcome], qubit_ids: &[String]) -> Result<JumpSeries> {
    match config.stats_mode {
        StatsMode::Event => {
            let mut j = detect_jumps(outcomes, config.jump_threshold)?;
            j.qubit_ids = qubit_ids.to_vec();
            Ok(j)
        }
        StatsMode::TimeSeries => {
            let t_end = outcomes.last().map(|o| o.time).unwrap_or(0.0);
            let n_cycles = (t_end / config.cycle_time).ceil() as usize;
            let mut rng = stream(config.seed(), Purpose::Cycle, 0);
            let (_, series) = emulate_time_series(outcomes, config.cycle_time, n_cycles, config.sigma_q, &mut rng)?;
            if outcomes.is_empty() {
                return Ok(JumpSeries { qubit_ids: qubit_ids.to_vec(), records: Vec::new() });
            }
            detect_jumps_series(qubit_ids, &series, config.jump_threshold)
        }
    }
}

/// Pair statistics, rates and exceedance curves.
pub fn analyze(
    config: &SimulationConfig,
    run_id: &str,
    pairs: &[(String, String, f64)],
    outcomes: &[EventOutcome],
    jumps: &JumpSeries,
) -> Result<Analysis> {
    let n = jumps.records.len() as u64;
    let coincidence = match config.stats_mode {
        StatsMode::Event => Coincidence::None,
        StatsMode::TimeSeries => Coincidence::Correct,
    };
    let mut stats = Vec::new();
    let mut rates = None;
    let mut asym = None;
    if n > 0 {
        for (a, b, s) in pairs {
            stats.push(pair_stats(jumps, a, b, *s, coincidence)?);
        }
        // Event mode spreads the simulated time evenly over the records.
        let cycle = match config.stats_mode {
            StatsMode::Event => outcomes.last().map(|o| o.time).unwrap_or(0.0) / n as f64,
            StatsMode::TimeSeries => config.cycle_time,
        };
        if cycle > 0.0 {
            rates = Some(rates_report(jumps, &stats, cycle)?);
        }
        asym = charge_asymmetry(jumps).ok();
    }
    let levels = log_levels(config.errors.level_decades[0], config.errors.level_decades[1], config.errors.levels_per_decade);
    let names: Vec<(String, String)> = pairs.iter().map(|(a, b, _)| (a.clone(), b.clone())).collect();
    let mut errors = BTreeMap::new();
    for (key, filter) in [("all", None), ("gamma", Some(Species::Gamma)), ("muon", Some(Species::Muon))] {
        let subset: Vec<EventOutcome> = outcomes.iter().filter(|o| filter.is_none_or(|s| o.species == s)).cloned().collect();
        if subset.is_empty() || names.is_empty() {
            continue;
        }
        errors.insert(key.to_string(), exceedance_curves(&subset, &names, &levels, config.errors.joint_rule)?);
    }
    Ok(Analysis {
        run_id: run_id.to_string(),
        qubit_ids: jumps.qubit_ids.clone(),
        n_records: n,
        charge_asymmetry: asym,
        pairs: stats,
        rates,
        errors,
    })
}

/// Runs the full chain and writes the artifacts to `config.output_dir`.
/// Files are staged and moved into place only after every stage succeeded.
pub fn run(config: &SimulationConfig, cache_dir: Option<&Path>) -> Result<RunOutput> {
    let start = Instant::now();
    config.validate()?;
    let id = run_id(config)?;
    log::info!("run {id}: preparing weighting fields");
    let sim = Simulator::new(config.clone(), cache_dir)?;
    let events = generate_events(config, &sim)?;
    log::info!("run {id}: simulating {} events", events.len());
    let (outcomes, diagnostics) = sim.simulate_events(&events)?;
    let ids = sim.qubit_ids();
    let jumps = jumps_for(config, &outcomes, &ids)?;
    let pairs = layout_pairs(&sim);
    let analysis = analyze(config, &id, &pairs, &outcomes, &jumps)?;
    let histograms = pairs.iter().map(|(a, b, _)| joint_histogram(&jumps, a, b, HISTOGRAM_BIN)).collect::<Result<Vec<_>>>()?;

    let out_dir = &config.output_dir;
    fs::create_dir_all(out_dir)?;
    let staging = out_dir.join(format!(".staging-{id}"));
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    fs::create_dir_all(&staging)?;
    let written = write_artifacts(&staging, config, &id, &events, &outcomes, &jumps, &histograms, &analysis);
    let files = match written {
        Ok(f) => f,
        Err(e) => {
            let _ = fs::remove_dir_all(&staging);
            return Err(e);
        }
    };
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA.to_string(),
        run_id: id.clone(),
        config_hash: sha256_hex(config.to_toml_string()?.as_bytes()),
        seed: config.seed(),
        package: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        n_events: events.len() as u64,
        stats_mode: config.stats_mode,
        wall_time_s: start.elapsed().as_secs_f64(),
        diagnostics,
        files,
    };
    let finish = || -> Result<()> {
        fs::write(staging.join("manifest.json"), serde_json::to_string_pretty(&manifest).map_err(json_err)?)?;
        for entry in fs::read_dir(&staging)? {
            let entry = entry?;
            fs::rename(entry.path(), out_dir.join(entry.file_name()))?;
        }
        fs::remove_dir(&staging)?;
        Ok(())
    };
    if let Err(e) = finish() {
        let _ = fs::remove_dir_all(&staging);
        return Err(e);
    }
    log::info!("run {id}: done in {:.1} s", manifest.wall_time_s);
    Ok(RunOutput { manifest, events, outcomes, jumps, histograms, analysis })
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(dir.join(name))?))
}

#[allow(clippy::too_many_arguments)]
fn write_artifacts(
    dir: &Path,
    config: &SimulationConfig,
    id: &str,
    events: &[ImpactEvent],
    outcomes: &[EventOutcome],
    jumps: &JumpSeries,
    histograms: &[JointHistogram],
    analysis: &Analysis,
) -> Result<Vec<FileEntry>> {
    fs::write(dir.join("config.toml"), config.to_toml_string()?)?;
    write_events(create(dir, "events.jsonl")?, id, events)?;
    write_outcomes_csv(create(dir, "outcomes.csv")?, id, outcomes)?;
    write_outcomes_bin(create(dir, "outcomes.bin")?, id, outcomes)?;
    write_jumps_csv(create(dir, "jumps.csv")?, id, jumps)?;
    write_pairs_csv(create(dir, "pair_stats.csv")?, id, &analysis.pairs)?;
    write_exceedance_csv(create(dir, "exceedance.csv")?, id, &analysis.errors)?;
    let tagged = |name: &str, value: serde_json::Value| -> Result<()> {
        let doc = serde_json::json!({ "run_id": id, name: value });
        fs::write(dir.join(format!("{name}.json")), serde_json::to_string_pretty(&doc).map_err(json_err)?)?;
        Ok(())
    };
    tagged("histograms", serde_json::to_value(histograms).map_err(json_err)?)?;
    tagged("pair_stats", serde_json::to_value(&analysis.pairs).map_err(json_err)?)?;
    tagged("rates", serde_json::to_value(&analysis.rates).map_err(json_err)?)?;
    tagged("errors", serde_json::to_value(&analysis.errors).map_err(json_err)?)?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(analysis).map_err(json_err)?)?;

    let mut files = Vec::new();
    let mut names: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    names.sort();
    for p in names {
        let bytes = fs::read(&p)?;
        files.push(FileEntry { name: p.file_name().unwrap().to_string_lossy().into_owned(), sha256: sha256_hex(&bytes) });
    }
    Ok(files)
}

#[derive(Serialize, Deserialize)]
struct JsonlHeader {
    schema: String,
    run_id: String,
}

/// Event log: a header line followed by one event per line.
pub fn write_events<W: Write>(mut w: W, id: &str, events: &[ImpactEvent]) -> Result<()> {
    serde_json::to_writer(&mut w, &JsonlHeader { schema: EVENTS_SCHEMA.into(), run_id: id.into() }).map_err(json_err)?;
    w.write_all(b"\n")?;
    crate::source::write_events_jsonl(&mut w, events)?;
    w.flush()?;
    Ok(())
}

/// Reads an event log written by [`write_events`]; returns the run id too.
pub fn read_events(path: &Path) -> Result<(String, Vec<ImpactEvent>)> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let mut first = String::new();
    r.read_line(&mut first)?;
    let h: JsonlHeader = serde_json::from_str(&first).map_err(json_err)?;
    if h.schema != EVENTS_SCHEMA {
        return Err(Error::Format(format!("unsupported event log schema {}", h.schema)));
    }
    Ok((h.run_id, read_events_jsonl(r)?))
}

const OUTCOME_COLUMNS: &str = "event_id,species,time,qubit_id,dq_raw,dq_aliased,dq_measured,eps_phi,eps_theta";

/// One row per event and qubit, after a `# schema run_id=...` line.
pub fn write_outcomes_csv<W: Write>(mut w: W, id: &str, outcomes: &[EventOutcome]) -> Result<()> {
    writeln!(w, "# {OUTCOMES_SCHEMA} run_id={id}")?;
    writeln!(w, "{OUTCOME_COLUMNS}")?;
    for o in outcomes {
        for q in &o.per_qubit {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                o.event_id,
                o.species.as_str(),
                o.time,
                q.qubit_id,
                q.dq_raw,
                q.dq_aliased,
                q.dq_measured,
                q.eps_phi,
                q.eps_theta
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

fn header_run_id(line: &str, schema: &str) -> Result<String> {
    let rest = line
        .strip_prefix("# ")
        .and_then(|l| l.strip_prefix(schema))
        .and_then(|l| l.trim().strip_prefix("run_id="))
        .ok_or_else(|| Error::Format(format!("expected `# {schema} run_id=...` header")))?;
    Ok(rest.trim().to_string())
}

pub fn read_outcomes_csv(path: &Path) -> Result<(String, Vec<EventOutcome>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let id = header_run_id(lines.next().unwrap_or(""), OUTCOMES_SCHEMA)?;
    if lines.next() != Some(OUTCOME_COLUMNS) {
        return Err(Error::Format("unexpected outcome columns".into()));
    }
    let bad = |n: usize| Error::Format(format!("outcomes.csv line {}: malformed row", n + 3));
    let mut out: Vec<EventOutcome> = Vec::new();
    for (n, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(bad(n));
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad(n));
        let event_id: u64 = f[0].parse().map_err(|_| bad(n))?;
        let species = match f[1] {
            "gamma" => Species::Gamma,
            "muon" => Species::Muon,
            _ => return Err(bad(n)),
        };
        let q = QubitOutcome {
            qubit_id: f[3].to_string(),
            dq_raw: num(4)?,
            dq_aliased: num(5)?,
            dq_measured: num(6)?,
            eps_phi: num(7)?,
            eps_theta: num(8)?,
        };
        match out.last_mut() {
            Some(o) if o.event_id == event_id => o.per_qubit.push(q),
            _ => out.push(EventOutcome { event_id, species, time: num(2)?, per_qubit: vec![q] }),
        }
    }
    Ok((id, out))
}

/// Compact little-endian log: magic, run id, qubit ids, then per event
/// `event_id u64, species u8, time f64` and five f64 per qubit.
pub fn write_outcomes_bin<W: Write>(mut w: W, id: &str, outcomes: &[EventOutcome]) -> Result<()> {
    w.write_all(BIN_MAGIC)?;
    let mut idb = [0u8; 16];
    for (d, s) in idb.iter_mut().zip(id.bytes()) {
        *d = s;
    }
    w.write_all(&idb)?;
    let ids: Vec<&str> = outcomes.first().map(|o| o.per_qubit.iter().map(|q| q.qubit_id.as_str()).collect()).unwrap_or_default();
    w.write_all(&(ids.len() as u32).to_le_bytes())?;
    for q in &ids {
        w.write_all(&(q.len() as u32).to_le_bytes())?;
        w.write_all(q.as_bytes())?;
    }
    w.write_all(&(outcomes.len() as u64).to_le_bytes())?;
    for o in outcomes {
        w.write_all(&o.event_id.to_le_bytes())?;
        w.write_all(&[o.species as u8])?;
        w.write_all(&o.time.to_le_bytes())?;
        for q in &o.per_qubit {
            for v in [q.dq_raw, q.dq_aliased, q.dq_measured, q.eps_phi, q.eps_theta] {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_outcomes_bin(path: &Path) -> Result<(String, Vec<EventOutcome>)> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != BIN_MAGIC {
        return Err(Error::Format("not an outcome log".into()));
    }
    let mut idb = [0u8; 16];
    r.read_exact(&mut idb)?;
    let id = String::from_utf8_lossy(&idb).trim_end_matches('\0').to_string();
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4)?;
    let nq = u32::from_le_bytes(b4) as usize;
    let mut ids = Vec::with_capacity(nq);
    for _ in 0..nq {
        r.read_exact(&mut b4)?;
        let mut s = vec![0u8; u32::from_le_bytes(b4) as usize];
        r.read_exact(&mut s)?;
        ids.push(String::from_utf8(s).map_err(|e| Error::Format(e.to_string()))?);
    }
    r.read_exact(&mut b8)?;
    let n = u64::from_le_bytes(b8);
    let mut out = Vec::new();
    for _ in 0..n {
        r.read_exact(&mut b8)?;
        let event_id = u64::from_le_bytes(b8);
        let mut sp = [0u8; 1];
        r.read_exact(&mut sp)?;
        let species = match sp[0] {
            0 => Species::Gamma,
            1 => Species::Muon,
            _ => return Err(Error::Format("bad species tag".into())),
        };
        r.read_exact(&mut b8)?;
        let time = f64::from_le_bytes(b8);
        let mut per_qubit = Vec::with_capacity(nq);
        for qid in &ids {
            let mut v = [0.0; 5];
            for x in &mut v {
                r.read_exact(&mut b8)?;
                *x = f64::from_le_bytes(b8);
            }
            per_qubit.push(QubitOutcome {
                qubit_id: qid.clone(),
                dq_raw: v[0],
                dq_aliased: v[1],
                dq_measured: v[2],
                eps_phi: v[3],
                eps_theta: v[4],
            });
        }
        out.push(EventOutcome { event_id, species, time, per_qubit });
    }
    Ok((id, out))
}

fn write_jumps_csv<W: Write>(mut w: W, id: &str, jumps: &JumpSeries) -> Result<()> {
    writeln!(w, "# {JUMPS_SCHEMA} run_id={id}")?;
    let mut head = vec!["cycle_id".to_string()];
    head.extend(jumps.qubit_ids.iter().map(|q| format!("dq_{q}")));
    head.extend(jumps.qubit_ids.iter().map(|q| format!("jump_{q}")));
    writeln!(w, "{}", head.join(","))?;
    for r in &jumps.records {
        let mut row = vec![r.cycle_id.to_string()];
        row.extend(r.dq.iter().map(|d| d.to_string()));
        row.extend(r.is_jump.iter().map(|&j| (j as u8).to_string()));
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn opt(e: &Option<Estimate>) -> (String, String) {
    match e {
        Some(e) => (e.value.to_string(), e.stderr.to_string()),
        None => (String::new(), String::new()),
    }
}

fn write_pairs_csv<W: Write>(mut w: W, id: &str, pairs: &[PairStats]) -> Result<()> {
    writeln!(w, "# {PAIRS_SCHEMA} run_id={id}")?;
    writeln!(
        w,
        "qubit_a,qubit_b,separation_um,n_cycles,p_obs_a,p_obs_b,p_obs_ab,p_ab,p_ab_err,p_corr,p_corr_err,asym_1324,asym_1324_err"
    )?;
    for p in pairs {
        let (pc, pce) = opt(&p.p_corr);
        let (a, ae) = opt(&p.asym_1324);
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{pc},{pce},{a},{ae}",
            p.qubit_a, p.qubit_b, p.separation, p.n_cycles, p.p_obs_a.value, p.p_obs_b.value, p.p_obs_ab.value, p.p_ab.value, p.p_ab.stderr
        )?;
    }
    w.flush()?;
    Ok(())
}

fn write_exceedance_csv<W: Write>(mut w: W, id: &str, errors: &BTreeMap<String, ErrorReport>) -> Result<()> {
    writeln!(w, "# {EXCEEDANCE_SCHEMA} run_id={id}")?;
    writeln!(w, "subset,kind,qubit_a,qubit_b,n_events,level,fraction,stderr")?;
    for (subset, rep) in errors {
        for c in &rep.curves {
            let kind = serde_json::to_value(c.kind).map_err(json_err)?;
            for p in &c.points {
                writeln!(
                    w,
                    "{subset},{},{},{},{},{},{},{}",
                    kind.as_str().unwrap_or(""),
                    c.pair.0,
                    c.pair.1,
                    c.n_events,
                    p.level,
                    p.fraction,
                    p.stderr
                )?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Recomputes the error report of a finished run from its outcome log.
pub fn errors_from_run(dir: &Path, config: &SimulationConfig) -> Result<BTreeMap<String, ErrorReport>> {
    let manifest = Manifest::read(dir)?;
    let (id, outcomes) = read_outcomes_bin(&dir.join("outcomes.bin"))?;
    if id != manifest.run_id {
        return Err(Error::Format(format!("outcome log belongs to run {id}, manifest to {}", manifest.run_id)));
    }
    let ids: Vec<String> = outcomes.first().map(|o| o.per_qubit.iter().map(|q| q.qubit_id.clone()).collect()).unwrap_or_default();
    let mut pairs = Vec::new();
    for i in 0..ids.len() {
        for j in i + 1..ids.len() {
            pairs.push((ids[i].clone(), ids[j].clone(), 0.0));
        }
    }
    let empty = JumpSeries { qubit_ids: ids, records: Vec::new() };
    Ok(analyze(config, &id, &pairs, &outcomes, &empty)?.errors)
}

// ---------------------------------------------------------------------------
// Parameter scan

/// Reference values the scan is scored against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanTargets {
    /// (qubit_a, qubit_b, p_corr, uncertainty).
    pub p_corr: Vec<(String, String, f64, f64)>,
    /// Pair whose 13/24 asymmetry must be positive.
    pub asym_pair: (String, String),
}

impl Default for ScanTargets {
    fn default() -> Self {
        ScanTargets {
            p_corr: vec![("Q3".into(), "Q4".into(), 0.54, 0.04), ("Q1".into(), "Q2".into(), 0.46, 0.04)],
            asym_pair: ("Q3".into(), "Q4".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub lambda_trap: f64,
    pub f_q: f64,
    pub pairs: Vec<PairStats>,
    pub charge_asymmetry: Option<Estimate>,
    pub asym_1324: Option<Estimate>,
    /// Σ((p_corr − target)/σ)² plus 100 for each violated sign condition.
    pub score: f64,
    pub best: bool,
}

fn score(a: &Analysis, t: &ScanTargets) -> f64 {
    let mut s = 0.0;
    for (x, y, target, sig) in &t.p_corr {
        let v = a.pair(x, y).and_then(|p| p.p_corr).map(|e| e.value).unwrap_or(0.0);
        s += ((v - target) / sig).powi(2);
    }
    if a.charge_asymmetry.is_none_or(|e| e.value <= 0.5) {
        s += 100.0;
    }
    let asym = a.pair(&t.asym_pair.0, &t.asym_pair.1).and_then(|p| p.asym_1324);
    if asym.is_none_or(|e| e.value <= 0.0) {
        s += 100.0;
    }
    s
}

/// Runs the chain for every (λ_trap, f_q) combination on one shared event
/// stream and flags the row closest to the targets.
pub fn parameter_scan(
    config: &SimulationConfig,
    lambdas: &[f64],
    f_qs: &[f64],
    targets: &ScanTargets,
    cache_dir: Option<&Path>,
) -> Result<Vec<ScanRow>> {
    if lambdas.is_empty() || f_qs.is_empty() {
        return Err(Error::invalid("scan", "grid must not be empty"));
    }
    let base = Simulator::new(config.clone(), cache_dir)?;
    let events = generate_events(config, &base)?;
    let pairs = layout_pairs(&base);
    let ids = base.qubit_ids();
    let mut rows = Vec::new();
    for &l in lambdas {
        for &f in f_qs {
            let mut c = config.clone();
            c.transport.lambda_trap = l;
            c.transport.f_q = f;
            log::info!("scan point lambda_trap={l} f_q={f}");
            let sim = Simulator::with_grids(c.clone(), base.layout.clone(), base.grids.clone(), cache_dir)?;
            let (outcomes, _) = sim.simulate_events(&events)?;
            let jumps = jumps_for(&c, &outcomes, &ids)?;
            let a = analyze(&c, &run_id(&c)?, &pairs, &outcomes, &jumps)?;
            let asym = a.pair(&targets.asym_pair.0, &targets.asym_pair.1).and_then(|p| p.asym_1324);
            rows.push(ScanRow {
                lambda_trap: l,
                f_q: f,
                score: score(&a, targets),
                charge_asymmetry: a.charge_asymmetry,
                asym_1324: asym,
                pairs: a.pairs,
                best: false,
            });
        }
    }
    if let Some(i) = rows.iter().enumerate().min_by(|a, b| a.1.score.total_cmp(&b.1.score)).map(|(i, _)| i) {
        rows[i].best = true;
    }
    Ok(rows)
}

pub fn write_scan_csv<W: Write>(mut w: W, rows: &[ScanRow]) -> Result<()> {
    let names: Vec<String> = rows.first().map(|r| r.pairs.iter().map(|p| format!("p_corr_{}_{}", p.qubit_a, p.qubit_b)).collect()).unwrap_or_default();
    writeln!(w, "lambda_trap,f_q,{},charge_asymmetry,asym_1324,score,best", names.join(","))?;
    for r in rows {
        let pc: Vec<String> = r.pairs.iter().map(|p| p.p_corr.map(|e| e.value.to_string()).unwrap_or_default()).collect();
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.lambda_trap,
            r.f_q,
            pc.join(","),
            opt(&r.charge_asymmetry).0,
            opt(&r.asym_1324).0,
            r.score,
            r.best as u8
        )?;
    }
    w.flush()?;
    Ok(())
}
