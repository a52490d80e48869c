#![allow(dead_code)]

use std::path::{Path, PathBuf};

use chargeburst::config::SimulationConfig;
use chargeburst::field::GridSpec;

/// Weighting-field and PDF cache shared by all test binaries.
pub fn cache_dir() -> PathBuf {
    let d = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("chargeburst-cache");
    std::fs::create_dir_all(&d).unwrap();
    d
}

/// A fresh scratch directory under the target tmp dir.
pub fn scratch(name: &str) -> PathBuf {
    let d = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("scratch").join(name);
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn scalar(key: &str) -> f64 {
    let text = std::fs::read_to_string(fixture("scalars.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v[key].as_f64().unwrap_or_else(|| panic!("missing fixture scalar {key}"))
}

/// Coarse grid that still resolves the island gap; solves in seconds.
pub fn coarse_grid() -> GridSpec {
    GridSpec {
        core_spacing: 5.0,
        core_half_width: 100.0,
        max_lateral_spacing: 50.0,
        half_width: 600.0,
        surface_spacing_z: 5.0,
        max_spacing_z: 25.0,
        vacuum_height: 300.0,
        ..GridSpec::default()
    }
}

pub fn coarse_config(n_events: u64, out: &Path) -> SimulationConfig {
    let mut c = SimulationConfig::default();
    c.grid = coarse_grid();
    c.n_events = n_events;
    c.output_dir = out.to_path_buf();
    c
}

/// Kolmogorov-Smirnov statistic √N·D of `samples` against `cdf`.
pub fn ks_statistic(mut samples: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let d = samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    d * n.sqrt()
}

/// √N·D above which a KS test rejects at p = 0.01.
pub const KS_CRITICAL_1PCT: f64 = 1.628;
