//! Monte-Carlo experiments: seeded drops, the scheme pipelines and metric
//! aggregation.

mod output;
mod plot;

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    allocate_dl, associate_biased_rsrp, associate_min_pl, greedy_links, BiasConfig, SchemeId,
};
use crate::error::{Error, Result};
use crate::matching::{
    build_preferences, complete_assignment, spa_match, swap_match, Capacities, SwapContext,
    SwapRecord,
};
use crate::mec_model::{evaluate, Assignment, Link, MetricsReport, PowerAllocation};
use crate::power_opt::{
    fpc_for_links, fpc_matrix, solve_optimal_power, PowerProblem, SolverError, SolverParams,
};
use crate::topology::{Direction, Network, NetworkConfig};

pub use output::{
    emit_outputs, load_manifest, summarize, Manifest, SummaryRow, DROPS_COLUMNS, SUMMARY_COLUMNS,
};

/// Everything needed to reproduce an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network: NetworkConfig,
    pub solver: SolverParams,
    pub bias: BiasConfig,
    pub schemes: Vec<SchemeId>,
    pub n_drops: usize,
    /// SBS counts to sweep; `None` keeps the network's own count.
    pub sweep_sbs: Option<Vec<usize>>,
    /// Cap on swap / power-optimization rounds.
    pub max_rounds: usize,
    /// Master seed. Per-drop seeds derive from it; `network.seed` is unused.
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            network: NetworkConfig::default(),
            solver: SolverParams::default(),
            bias: BiasConfig::default(),
            schemes: SchemeId::ALL.to_vec(),
            n_drops: 50,
            sweep_sbs: None,
            max_rounds: 5,
            seed: 1,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.bias.validate()?;
        if self.schemes.is_empty() {
            return Err(Error::Config("scheme list is empty".into()));
        }
        let mut seen = self.schemes.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.schemes.len() {
            return Err(Error::Config("scheme list has duplicates".into()));
        }
        if self.n_drops == 0 {
            return Err(Error::Config("n_drops must be at least 1".into()));
        }
        if self.max_rounds == 0 {
            return Err(Error::Config("max_rounds must be at least 1".into()));
        }
        if self.sweep_sbs.as_ref().is_some_and(Vec::is_empty) {
            return Err(Error::Config("sweep_sbs is empty".into()));
        }
        let s = &self.solver;
        if !(s.zeta > 0.0 && s.zeta < 1.0 && s.epsilon > 0.0 && s.epsilon < 1.0) {
            return Err(Error::Config(
                "solver zeta and epsilon must lie in (0, 1)".into(),
            ));
        }
        if !(s.inner_tol > 0.0 && s.outer_tol > 0.0) || s.p_floor_w.is_some_and(|p| !(p > 0.0)) {
            return Err(Error::Config(
                "solver tolerances and power floor must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sweep points as SBS counts; a single point without a sweep.
    pub fn sweep_points(&self) -> Vec<usize> {
        self.sweep_sbs
            .clone()
            .unwrap_or_else(|| vec![self.network.sbs_count()])
    }

    /// Network configuration of one drop.
    pub fn drop_network(&self, n_sbs: usize, seeds: DropSeeds) -> NetworkConfig {
        NetworkConfig {
            n_sbs: Some(n_sbs),
            seed: seeds.topology,
            ..self.network.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropSeeds {
    pub topology: u64,
    pub channels: u64,
}

/// Seeds of drop `index`: stream `index` of a generator keyed by the master
/// seed. Shared by every sweep point.
pub fn drop_seeds(master: u64, index: usize) -> DropSeeds {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index as u64);
    DropSeeds {
        topology: rng.gen(),
        channels: rng.gen(),
    }
}

/// Stage counters and solver status of one scheme run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Devices SPA left unmatched and the fallback placed.
    pub fallback_assigned: usize,
    pub swaps: usize,
    /// Swaps found after the first power optimization.
    pub late_swaps: usize,
    /// Power optimization rounds.
    pub rounds: usize,
    pub solver_converged: Option<bool>,
    pub solver_residual: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeOutcome {
    pub scheme: SchemeId,
    pub metrics: Option<MetricsReport>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DropResult {
    pub sweep_value: usize,
    pub drop: usize,
    pub seeds: DropSeeds,
    pub schemes: Vec<SchemeOutcome>,
}

/// UL links from SPA matching plus the fallback for unmatched devices.
/// Returns the links and the number of fallback placements.
pub fn spa_links(net: &Network) -> (Vec<Option<Link>>, usize) {
    let fpc = fpc_matrix(net);
    let profile = build_preferences(net, &fpc, net.cfg.candidate_stations);
    let caps = Capacities::for_network(net);
    let out = spa_match(&profile, &caps);
    let n_sub = net.n_sub();
    let mut links: Vec<Option<Link>> = (0..net.n_md())
        .map(|k| {
            out.matching
                .of_md(k)
                .map(|c| Link::new(c / n_sub, c % n_sub))
        })
        .collect();
    let placed = complete_assignment(net, &mut links, &fpc);
    (links, placed.len())
}

/// Swap matching under `power`, returning the executed swaps.
pub fn swap_stage(net: &Network, links: &mut [Option<Link>], power: &[f64]) -> Vec<SwapRecord> {
    let ctx = SwapContext {
        net,
        ul_power: power,
    };
    swap_match(&ctx, links).swaps
}

/// Optimized UL powers for `links` starting from `p_init`. Stalled solves
/// yield their last powers with the error recorded.
fn power_stage(
    net: &Network,
    links: &[Option<Link>],
    p_init: &[f64],
    params: &SolverParams,
    diag: &mut Diagnostics,
) -> Vec<f64> {
    let problem = match PowerProblem::from_links(net, links, params.p_floor_w) {
        Ok(p) => p,
        Err(e) => {
            diag.error = Some(e.to_string());
            return p_init.to_vec();
        }
    };
    match solve_optimal_power(&problem, p_init, params) {
        Ok(sol) => {
            diag.solver_converged = Some(sol.converged);
            diag.solver_residual = Some(sol.residual);
            sol.power
        }
        Err(SolverError::Stalled {
            residual,
            best_power,
        }) => {
            diag.solver_converged = Some(false);
            diag.solver_residual = Some(residual);
            diag.error = Some(format!("power solver stalled at residual {residual:e}"));
            best_power
        }
        Err(e) => {
            diag.solver_converged = Some(false);
            diag.error = Some(e.to_string());
            p_init.to_vec()
        }
    }
}

/// UL links and powers of `scheme` on `net`.
pub fn run_scheme_ul(
    net: &Network,
    scheme: SchemeId,
    cfg: &ExperimentConfig,
    diag: &mut Diagnostics,
) -> (Vec<Option<Link>>, Vec<f64>) {
    let fpc = fpc_matrix(net);
    let mut links = match scheme {
        SchemeId::Cuda => {
            let station_of: Vec<usize> = (0..net.n_md())
                .map(|k| associate_biased_rsrp(net, k, &cfg.bias))
                .collect();
            greedy_links(net, Direction::Ul, &station_of, |k, m| fpc[k][m])
        }
        SchemeId::MinPlGFpc => {
            let station_of: Vec<usize> = (0..net.n_md())
                .map(|k| associate_min_pl(net, k, &fpc, &cfg.bias))
                .collect();
            greedy_links(net, Direction::Ul, &station_of, |k, m| fpc[k][m])
        }
        SchemeId::SpaFpc | SchemeId::SpaSmFpc | SchemeId::SpaSmOpa => {
            let (links, placed) = spa_links(net);
            diag.fallback_assigned = placed;
            links
        }
    };
    let mut power = fpc_for_links(net, &links);
    if scheme.uses_swap() {
        diag.swaps += swap_stage(net, &mut links, &power).len();
    }
    if scheme.uses_opa() {
        for round in 1..=cfg.max_rounds {
            power = power_stage(net, &links, &power, &cfg.solver, diag);
            diag.rounds = round;
            if round == cfg.max_rounds {
                log::info!("swap/power alternation stopped at the cap of {round} rounds");
                break;
            }
            let late = swap_stage(net, &mut links, &power).len();
            diag.swaps += late;
            diag.late_swaps += late;
            if late == 0 {
                break;
            }
        }
    }
    (links, power)
}

/// Runs every configured scheme on drop `index` at SBS count `n_sbs`.
pub fn run_drop(cfg: &ExperimentConfig, n_sbs: usize, index: usize) -> Result<DropResult> {
    let seeds = drop_seeds(cfg.seed, index);
    let net = Network::generate(&cfg.drop_network(n_sbs, seeds), seeds.channels)?;
    let (dl_links, dl_power) = allocate_dl(&net, &cfg.bias);
    let schemes = cfg
        .schemes
        .iter()
        .map(|&scheme| {
            let mut diagnostics = Diagnostics::default();
            let (ul, power) = run_scheme_ul(&net, scheme, cfg, &mut diagnostics);
            let assignment = Assignment {
                ul,
                dl: dl_links.clone(),
            };
            let powers = PowerAllocation {
                ul: power,
                dl: dl_power.clone(),
            };
            let metrics = match evaluate(&net, &assignment, &powers) {
                Ok(e) => Some(e.report),
                Err(e) => {
                    diagnostics.error.get_or_insert(e.to_string());
                    None
                }
            };
            SchemeOutcome {
                scheme,
                metrics,
                diagnostics,
            }
        })
        .collect();
    Ok(DropResult {
        sweep_value: n_sbs,
        drop: index,
        seeds,
        schemes,
    })
}

/// Runs all drops at every sweep point, in parallel, ordered by sweep point
/// then drop index.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<DropResult>> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = cfg
        .sweep_points()
        .into_iter()
        .flat_map(|s| (0..cfg.n_drops).map(move |d| (s, d)))
        .collect();
    let results: Vec<DropResult> = jobs
        .into_par_iter()
        .map(|(s, d)| run_drop(cfg, s, d))
        .collect::<Result<_>>()?;
    let late: usize = results
        .iter()
        .flat_map(|r| &r.schemes)
        .map(|s| s.diagnostics.late_swaps)
        .sum();
    log::info!(
        "{} drops done; {late} swaps found after power optimization",
        results.len()
    );
    Ok(results)
}
