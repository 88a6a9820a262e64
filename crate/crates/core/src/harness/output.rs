use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{plot, DropResult, DropSeeds, ExperimentConfig};
use crate::baselines::SchemeId;
use crate::error::{Error, Result};
use crate::mec_model::MetricsReport;

/// Header of `summary.csv`.
pub const SUMMARY_COLUMNS: [&str; 22] = [
    "scheme",
    "n_sbs",
    "drops",
    "failed",
    "sum_latency_mean",
    "sum_latency_std",
    "ul_latency_mean",
    "computation_latency_mean",
    "backhaul_latency_mean",
    "dl_latency_mean",
    "energy_efficiency_mean",
    "jain_ul_mean",
    "jain_exe_mean",
    "rate_p10_mean",
    "rate_p20_mean",
    "rate_p50_mean",
    "rate_p80_mean",
    "rate_p90_mean",
    "served_mean",
    "unserved_mean",
    "swaps_mean",
    "late_swaps_total",
];

/// Header of `drops.csv`.
pub const DROPS_COLUMNS: [&str; 26] = [
    "n_sbs",
    "drop",
    "topology_seed",
    "channel_seed",
    "scheme",
    "sum_latency",
    "ul_latency",
    "computation_latency",
    "backhaul_latency",
    "dl_latency",
    "energy_efficiency",
    "jain_ul",
    "jain_exe",
    "rate_p10",
    "rate_p20",
    "rate_p50",
    "rate_p80",
    "rate_p90",
    "served",
    "unserved",
    "fallback_assigned",
    "swaps",
    "late_swaps",
    "rounds",
    "solver_residual",
    "error",
];

/// Per-scheme means over the drops of one sweep point. Means skip drops
/// whose metrics are missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scheme: SchemeId,
    pub n_sbs: usize,
    pub drops: usize,
    pub failed: usize,
    pub sum_latency_mean: f64,
    pub sum_latency_std: f64,
    pub ul_latency_mean: f64,
    pub computation_latency_mean: f64,
    pub backhaul_latency_mean: f64,
    pub dl_latency_mean: f64,
    pub energy_efficiency_mean: f64,
    pub jain_ul_mean: f64,
    pub jain_exe_mean: f64,
    pub rate_p10_mean: f64,
    pub rate_p20_mean: f64,
    pub rate_p50_mean: f64,
    pub rate_p80_mean: f64,
    pub rate_p90_mean: f64,
    pub served_mean: f64,
    pub unserved_mean: f64,
    pub swaps_mean: f64,
    pub late_swaps_total: usize,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Sample standard deviation; 0 for fewer than two values.
fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// One row per (sweep point, scheme), in sweep then configured scheme order.
pub fn summarize(cfg: &ExperimentConfig, results: &[DropResult]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for n_sbs in cfg.sweep_points() {
        for &scheme in &cfg.schemes {
            let outcomes: Vec<_> = results
                .iter()
                .filter(|r| r.sweep_value == n_sbs)
                .flat_map(|r| r.schemes.iter().filter(|s| s.scheme == scheme))
                .collect();
            let ok: Vec<&MetricsReport> =
                outcomes.iter().filter_map(|o| o.metrics.as_ref()).collect();
            let col =
                |f: fn(&MetricsReport) -> f64| -> Vec<f64> { ok.iter().map(|m| f(m)).collect() };
            let pct = |i: usize| {
                mean(
                    &ok.iter()
                        .map(|m| m.rate_percentiles.as_array()[i])
                        .collect::<Vec<_>>(),
                )
            };
            let sum_latency = col(|m| m.sum_latency);
            rows.push(SummaryRow {
                scheme,
                n_sbs,
                drops: outcomes.len(),
                failed: outcomes.len() - ok.len(),
                sum_latency_mean: mean(&sum_latency),
                sum_latency_std: std_dev(&sum_latency),
                ul_latency_mean: mean(&col(|m| m.sum_ul_latency)),
                computation_latency_mean: mean(&col(|m| m.sum_computation_latency)),
                backhaul_latency_mean: mean(&col(|m| m.sum_backhaul_latency)),
                dl_latency_mean: mean(&col(|m| m.sum_dl_latency)),
                energy_efficiency_mean: mean(&col(|m| m.energy_efficiency)),
                jain_ul_mean: mean(&col(|m| m.jain_ul)),
                jain_exe_mean: mean(&col(|m| m.jain_exe)),
                rate_p10_mean: pct(0),
                rate_p20_mean: pct(1),
                rate_p50_mean: pct(2),
                rate_p80_mean: pct(3),
                rate_p90_mean: pct(4),
                served_mean: mean(&col(|m| m.served as f64)),
                unserved_mean: mean(&col(|m| m.unserved as f64)),
                swaps_mean: mean(
                    &outcomes
                        .iter()
                        .map(|o| o.diagnostics.swaps as f64)
                        .collect::<Vec<_>>(),
                ),
                late_swaps_total: outcomes.iter().map(|o| o.diagnostics.late_swaps).sum(),
            });
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropSeedRecord {
    pub drop: usize,
    pub seeds: DropSeeds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub n_sbs: usize,
    pub drop: usize,
    pub scheme: SchemeId,
    pub error: String,
}

/// Contents of `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub package: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub drop_seeds: Vec<DropSeedRecord>,
    pub failures: Vec<FailureRecord>,
    pub files: Vec<String>,
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|source| io_error(path, source))?;
    Ok(serde_json::from_str(&text)?)
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Replaces `dir/name` with `bytes` through a temporary file in `dir`.
fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_error(dir, e))?;
    tmp.write_all(bytes).map_err(|e| io_error(&path, e))?;
    tmp.as_file().sync_all().map_err(|e| io_error(&path, e))?;
    tmp.persist(&path).map_err(|e| io_error(&path, e.error))?;
    Ok(path)
}

fn csv_bytes<F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> Result<()>>(fill: F) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        fill(&mut w)?;
        w.flush()
            .map_err(|e| io_error(Path::new("<csv buffer>"), e))?;
    }
    Ok(buf)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn drops_csv(results: &[DropResult]) -> Result<Vec<u8>> {
    csv_bytes(|w| {
        w.write_record(DROPS_COLUMNS)?;
        for r in results {
            for s in &r.schemes {
                let m = s.metrics.as_ref();
                let f = |g: fn(&MetricsReport) -> f64| opt(m.map(g));
                let pct = |i: usize| opt(m.map(|m| m.rate_percentiles.as_array()[i]));
                let d = &s.diagnostics;
                w.write_record([
                    r.sweep_value.to_string(),
                    r.drop.to_string(),
                    r.seeds.topology.to_string(),
                    r.seeds.channels.to_string(),
                    s.scheme.to_string(),
                    f(|m| m.sum_latency),
                    f(|m| m.sum_ul_latency),
                    f(|m| m.sum_computation_latency),
                    f(|m| m.sum_backhaul_latency),
                    f(|m| m.sum_dl_latency),
                    f(|m| m.energy_efficiency),
                    f(|m| m.jain_ul),
                    f(|m| m.jain_exe),
                    pct(0),
                    pct(1),
                    pct(2),
                    pct(3),
                    pct(4),
                    m.map(|m| m.served.to_string()).unwrap_or_default(),
                    m.map(|m| m.unserved.to_string()).unwrap_or_default(),
                    d.fallback_assigned.to_string(),
                    d.swaps.to_string(),
                    d.late_swaps.to_string(),
                    d.rounds.to_string(),
                    opt(d.solver_residual),
                    d.error.clone().unwrap_or_default(),
                ])?;
            }
        }
        Ok(())
    })
}

fn summary_csv(rows: &[SummaryRow]) -> Result<Vec<u8>> {
    csv_bytes(|w| {
        for row in rows {
            w.serialize(row)?;
        }
        Ok(())
    })
}

/// Writes `summary.csv`, `drops.csv`, `manifest.json` and, with `plots`,
/// SVG charts into `dir`, replacing earlier files atomically. Returns the
/// written paths.
pub fn emit_outputs(
    cfg: &ExperimentConfig,
    results: &[DropResult],
    dir: &Path,
    plots: bool,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let rows = summarize(cfg, results);
    let mut files = vec![
        write_atomic(dir, "summary.csv", &summary_csv(&rows)?)?,
        write_atomic(dir, "drops.csv", &drops_csv(results)?)?,
    ];
    if plots {
        for (name, svg) in plot::charts(cfg, &rows) {
            files.push(write_atomic(dir, &name, svg.as_bytes())?);
        }
    }

    let failures = results
        .iter()
        .flat_map(|r| {
            r.schemes.iter().filter_map(move |s| {
                s.diagnostics.error.as_ref().map(|e| FailureRecord {
                    n_sbs: r.sweep_value,
                    drop: r.drop,
                    scheme: s.scheme,
                    error: e.clone(),
                })
            })
        })
        .collect();
    let mut names: Vec<String> = files
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    names.push("manifest.json".into());
    let manifest = Manifest {
        package: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        drop_seeds: (0..cfg.n_drops)
            .map(|drop| DropSeedRecord {
                drop,
                seeds: super::drop_seeds(cfg.seed, drop),
            })
            .collect(),
        failures,
        files: names,
    };
    files.push(write_atomic(
        dir,
        "manifest.json",
        &serde_json::to_vec_pretty(&manifest)?,
    )?);
    Ok(files)
}
