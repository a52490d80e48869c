use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use chargeburst::config::SimulationConfig;
use chargeburst::field::solve_layout;
use chargeburst::pipeline::{self, Manifest, ScanTargets};
use chargeburst::qubit_errors::JointRule;
use chargeburst::recovery::{dropout_curve, fit_dropout, synthetic_dropout, DropoutExperiment};
use chargeburst::stats::JointHistogram;
use chargeburst::svg;
use chargeburst::transport::{dump_layer, load_or_build_pdf};

#[derive(Parser)]
#[command(name = "chargeburst", version, about = "Charge bursts and correlated qubit errors from particle impacts")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML configuration; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the number of events.
    #[arg(long, global = true)]
    events: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Cache for weighting fields and displacement tables.
    #[arg(long, global = true, default_value = ".chargeburst-cache")]
    cache_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Solve (or load) the weighting field of every qubit.
    SolveField {
        /// Also write α on the vertical plane through this qubit as CSV.
        #[arg(long)]
        slice: Option<String>,
    },
    /// Build (or load) the electron and hole displacement tables.
    BuildPdf {
        /// Write this depth layer of both tables as CSV.
        #[arg(long)]
        dump_layer: Option<usize>,
    },
    /// Run the full simulation and write all artifacts.
    Simulate,
    /// Grid scan over trapping length and charge production efficiency.
    Scan {
        /// Trapping lengths (µm), comma separated.
        #[arg(long, value_delimiter = ',', default_value = "100,300,1000")]
        lambdas: Vec<f64>,
        /// Charge production efficiencies, comma separated.
        #[arg(long = "fq", value_delimiter = ',', default_value = "0.1,0.2,0.5")]
        f_qs: Vec<f64>,
    },
    /// Recompute the error report of a finished run.
    Errors {
        /// Run directory (default: --out or the configured output directory).
        #[arg(long)]
        run: Option<PathBuf>,
        #[arg(long, value_enum)]
        rule: Option<RuleArg>,
    },
    /// Fit the recovery curve to measured or synthetic dropout data.
    FitDropout {
        /// CSV with columns t (s) and occupation; synthetic data when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Initial guess for τ (s).
        #[arg(long, default_value_t = 100e-6)]
        tau0: f64,
        /// Initial guess for σ (s).
        #[arg(long, default_value_t = 150e-6)]
        sigma0: f64,
    },
    /// Render SVG figures for a finished run.
    Plot {
        #[arg(long)]
        run: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Min,
    GeometricMean,
}

fn load_config(g: &Global) -> anyhow::Result<SimulationConfig> {
    let mut c = match &g.config {
        Some(p) => SimulationConfig::from_file(p).with_context(|| format!("reading {}", p.display()))?,
        None => SimulationConfig::default(),
    };
    if let Some(s) = g.seed {
        c.source.rng_seed = s;
    }
    if let Some(n) = g.events {
        c.n_events = n;
    }
    if let Some(o) = &g.out {
        c.output_dir = o.clone();
    }
    Ok(c)
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(ce) = cause.downcast_ref::<chargeburst::Error>() {
            if ce.is_config() {
                return 2;
            }
            if ce.is_numerical() {
                return 3;
            }
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).target(env_logger::Target::Stderr).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.global.workers {
        if n == 0 {
            return Err(chargeburst::Error::InvalidInput { field: "workers".into(), reason: "must be at least 1".into() }.into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let config = load_config(&cli.global)?;
    config.validate()?;
    let cache = cli.global.cache_dir.as_path();
    match cli.command {
        Command::SolveField { slice } => solve_field(&config, cache, slice.as_deref()),
        Command::BuildPdf { dump_layer } => build_pdf(&config, cache, dump_layer),
        Command::Simulate => simulate(&config, cache),
        Command::Scan { lambdas, f_qs } => scan(&config, cache, &lambdas, &f_qs),
        Command::Errors { run, rule } => errors(&config, run, rule),
        Command::FitDropout { input, tau0, sigma0 } => fit(&config, input, (tau0, sigma0)),
        Command::Plot { run } => plot(&config, run),
    }
}

fn solve_field(config: &SimulationConfig, cache: &Path, slice: Option<&str>) -> anyhow::Result<()> {
    let layout = config.resolve_layout()?;
    let grids = solve_layout(&layout, &config.grid, Some(cache))?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "qubit,nx,ny,nz,iterations,residual,alpha_center")?;
    for (q, g) in layout.qubits.iter().zip(&grids) {
        let d = g.dims();
        let a = g.alpha_or_zero([q.center[0], q.center[1], layout.substrate.thickness]);
        writeln!(out, "{},{},{},{},{},{:e},{}", q.id, d[0], d[1], d[2], g.iterations, g.residual, a)?;
    }
    if let Some(id) = slice {
        let i = layout.qubit_index(id).with_context(|| format!("unknown qubit {id}"))?;
        let (q, g) = (&layout.qubits[i], &grids[i]);
        fs::create_dir_all(&config.output_dir)?;
        let path = config.output_dir.join(format!("alpha_slice_{id}.csv"));
        let mut w = std::io::BufWriter::new(fs::File::create(&path)?);
        writeln!(w, "x_um,z_um,alpha,grad_alpha_per_m")?;
        let hw = config.grid.half_width;
        let t = layout.substrate.thickness;
        for ix in 0..=200 {
            let x = q.center[0] - hw + 2.0 * hw * ix as f64 / 200.0;
            for iz in 0..=75 {
                let z = t * iz as f64 / 75.0;
                let r = [x, q.center[1], z];
                let a = g.alpha_or_zero(r);
                let gr = g.grad_alpha_at(r).map(|v| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt() * 1e6).unwrap_or(f64::NAN);
                writeln!(w, "{},{},{},{}", x - q.center[0], z, a, gr)?;
            }
        }
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

fn build_pdf(config: &SimulationConfig, cache: &Path, layer: Option<usize>) -> anyhow::Result<()> {
    let layout = config.resolve_layout()?;
    let (e, h) = load_or_build_pdf(&config.transport, &layout.substrate, &config.pdf.grid, config.pdf.samples_per_zbin, config.seed(), cache)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "species,layer,samples,absorbed_fraction")?;
    for pdf in [&e, &h] {
        for (k, l) in pdf.layers.iter().enumerate() {
            let absorbed = l.absorbed as f64 / pdf.sample_count as f64;
            writeln!(out, "{:?},{k},{},{absorbed}", pdf.species, pdf.sample_count)?;
        }
    }
    if let Some(k) = layer {
        fs::create_dir_all(&config.output_dir)?;
        for (name, pdf) in [("electron", &e), ("hole", &h)] {
            let path = config.output_dir.join(format!("pdf_{name}_layer{k}.csv"));
            dump_layer(std::io::BufWriter::new(fs::File::create(&path)?), pdf, k)?;
            log::info!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn fmt_est(e: Option<chargeburst::stats::Estimate>) -> String {
    e.map(|e| format!("{:.3}({:.3})", e.value, e.stderr)).unwrap_or_else(|| "undefined".into())
}

fn simulate(config: &SimulationConfig, cache: &Path) -> anyhow::Result<()> {
    let r = pipeline::run(config, Some(cache))?;
    let a = &r.analysis;
    let mut out = std::io::stdout().lock();
    writeln!(out, "run {} ({} events, {:.1} s)", r.manifest.run_id, r.manifest.n_events, r.manifest.wall_time_s)?;
    writeln!(out, "charge asymmetry {}", fmt_est(a.charge_asymmetry))?;
    writeln!(out, "pair     sep_um   p_obs_a  p_obs_b  p_ab     p_corr          asym_1324")?;
    for p in &a.pairs {
        writeln!(
            out,
            "{:<8} {:>7.0}  {:.4}   {:.4}   {:.4}   {:<15} {}",
            format!("{}-{}", p.qubit_a, p.qubit_b),
            p.separation,
            p.p_obs_a.value,
            p.p_obs_b.value,
            p.p_ab.value,
            fmt_est(p.p_corr),
            fmt_est(p.asym_1324)
        )?;
    }
    writeln!(out, "outputs in {}", config.output_dir.display())?;
    Ok(())
}

fn scan(config: &SimulationConfig, cache: &Path, lambdas: &[f64], f_qs: &[f64]) -> anyhow::Result<()> {
    let rows = pipeline::parameter_scan(config, lambdas, f_qs, &ScanTargets::default(), Some(cache))?;
    fs::create_dir_all(&config.output_dir)?;
    let path = config.output_dir.join("scan.csv");
    pipeline::write_scan_csv(std::io::BufWriter::new(fs::File::create(&path)?), &rows)?;
    pipeline::write_scan_csv(std::io::stdout().lock(), &rows)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn run_dir(config: &SimulationConfig, run: Option<PathBuf>) -> PathBuf {
    run.unwrap_or_else(|| config.output_dir.clone())
}

fn errors(config: &SimulationConfig, run: Option<PathBuf>, rule: Option<RuleArg>) -> anyhow::Result<()> {
    let dir = run_dir(config, run);
    let mut c = config.clone();
    if let Some(r) = rule {
        c.errors.joint_rule = match r {
            RuleArg::Min => JointRule::Min,
            RuleArg::GeometricMean => JointRule::GeometricMean,
        };
    }
    let report = pipeline::errors_from_run(&dir, &c)?;
    serde_json::to_writer_pretty(std::io::stdout().lock(), &report)?;
    println!();
    Ok(())
}

fn read_samples(path: &Path) -> anyhow::Result<Vec<(f64, f64)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        match (f.first().map(|s| s.trim().parse::<f64>()), f.get(1).map(|s| s.trim().parse::<f64>())) {
            (Some(Ok(t)), Some(Ok(y))) => out.push((t, y)),
            _ if n == 0 => continue,
            _ => return Err(chargeburst::Error::Format(format!("{} line {}: expected t,occupation", path.display(), n + 1)).into()),
        }
    }
    Ok(out)
}

fn fit(config: &SimulationConfig, input: Option<PathBuf>, guess: (f64, f64)) -> anyhow::Result<()> {
    let samples = match &input {
        Some(p) => read_samples(p)?,
        None => synthetic_dropout(&config.recovery, &DropoutExperiment::default(), config.seed())?,
    };
    let f = fit_dropout(&samples, guess)?;
    serde_json::to_writer_pretty(std::io::stdout().lock(), &f)?;
    println!();
    fs::create_dir_all(&config.output_dir)?;
    let (t0, t1) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, s| (a.0.min(s.0), a.1.max(s.0)));
    let curve: Vec<(f64, f64)> = (0..=400)
        .map(|i| t0 + (t1 - t0) * i as f64 / 400.0)
        .map(|t| (t * 1e6, f.baseline + f.amplitude * dropout_curve(t, f.tau, f.sigma)))
        .collect();
    let pts: Vec<(f64, f64)> = samples.iter().map(|&(t, y)| (t * 1e6, y)).collect();
    let title = format!("τ = {:.0} ± {:.0} µs, σ = {:.0} ± {:.0} µs", f.tau * 1e6, f.tau_err * 1e6, f.sigma * 1e6, f.sigma_err * 1e6);
    let path = config.output_dir.join("dropout_fit.svg");
    fs::write(&path, svg::scatter_with_curve(&pts, &curve, &title, "t (µs)", "occupation"))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn tagged<T: serde::de::DeserializeOwned>(dir: &Path, name: &str, run_id: &str) -> anyhow::Result<T> {
    let path = dir.join(format!("{name}.json"));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?)?;
    let id = v.get("run_id").and_then(|x| x.as_str()).unwrap_or("");
    if id != run_id {
        bail!(chargeburst::Error::Format(format!("{} belongs to run {id}, manifest to {run_id}", path.display())));
    }
    Ok(serde_json::from_value(v.get(name).cloned().unwrap_or_default())?)
}

fn plot(config: &SimulationConfig, run: Option<PathBuf>) -> anyhow::Result<()> {
    let dir = run_dir(config, run);
    let m = Manifest::read(&dir)?;
    let hists: Vec<JointHistogram> = tagged(&dir, "histograms", &m.run_id)?;
    let errors: std::collections::BTreeMap<String, chargeburst::qubit_errors::ErrorReport> = tagged(&dir, "errors", &m.run_id)?;
    let (id, outcomes) = pipeline::read_outcomes_bin(&dir.join("outcomes.bin"))?;
    if id != m.run_id {
        bail!(chargeburst::Error::Format(format!("outcomes.bin belongs to run {id}, manifest to {}", m.run_id)));
    }
    let plots = dir.join("plots");
    fs::create_dir_all(&plots)?;
    let mut n = 0;
    for h in &hists {
        let name = format!("joint_{}_{}.svg", h.qubit_a, h.qubit_b);
        fs::write(plots.join(name), svg::joint_heatmap(h, &format!("{}-{} joint offset charge", h.qubit_a, h.qubit_b)))?;
        n += 1;
    }
    if let Some(first) = outcomes.first() {
        for (k, q) in first.per_qubit.iter().enumerate() {
            let v: Vec<f64> = outcomes.iter().map(|o| o.per_qubit[k].dq_measured).filter(|d| d.abs() > config.jump_threshold).collect();
            let s = svg::histogram(&v, -0.5, 0.5, 50, &format!("{} jumps (|Δq| > {} e)", q.qubit_id, config.jump_threshold), "Δq (e)");
            fs::write(plots.join(format!("hist_{}.svg", q.qubit_id)), s)?;
            n += 1;
        }
    }
    for (subset, rep) in &errors {
        for kind in ["phase_flip", "bit_flip"] {
            let curves: Vec<_> = rep.curves.iter().filter(|c| serde_json::to_value(c.kind).ok().and_then(|v| v.as_str().map(|s| s == kind)) == Some(true)).cloned().collect();
            let s = svg::exceedance(&curves, &format!("{subset} events, {}", kind.replace('_', " ")));
            fs::write(plots.join(format!("exceedance_{subset}_{kind}.svg")), s)?;
            n += 1;
        }
    }
    println!("wrote {n} figures to {}", plots.display());
    Ok(())
}
