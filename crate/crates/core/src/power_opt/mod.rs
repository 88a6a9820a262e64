//! UL transmit power control.
//!
//! [`fpc_power`] is fractional power control. [`solve_optimal_power`]
//! minimizes the UL latency sum `Σ b_k / R_k(P)` for a fixed assignment in
//! two stages:
//!
//! 1. Successive convex approximation. Each rate is replaced by a concave
//!    lower bound tight at the current iterate; the resulting convex
//!    `Σ b/R̄` is minimized by projected Newton in `Q = log2 P`. A Newton
//!    polish on the exact objective finishes the stage.
//! 2. The parametric form `Σ λ_k (b_k − τ_k R̄_k)` of the last surrogate,
//!    with damped Newton updates of `(λ, τ)` until
//!    `ρ_k = λ_k R_k − 1` and `κ_k = τ_k R_k − b_k` vanish.
//!
//! The parametric objective built from the true rates is not convex. Under
//! co-channel interference its stationary point is typically a saddle, so
//! the iteration on `(λ, τ)` is run only on convex surrogates.
//!
//! Devices interfere only with devices on the same subchannel, so the
//! problem splits into independent groups, one per occupied subchannel.

pub mod sca;

use std::io::Write;

use nalgebra::DMatrix;

use sca::Objective;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mec_model::Link;
use crate::topology::{Direction, Network};
use crate::units::dbm_to_watts;

pub use sca::{BoundedRates, Surrogate};

/// Fractional power control toward station `m`:
/// `min(P_max, P0 + w·PL)` in dBm, with `PL` the UL path loss including
/// shadowing.
pub fn fpc_power(net: &Network, k: usize, m: usize) -> f64 {
    let cfg = &net.cfg;
    let pl = net.channels.pathloss_db(Direction::Ul, k, m);
    let dbm = (cfg.fpc_target_dbm + cfg.fpc_compensation * pl).min(net.devices[k].max_tx_power_dbm);
    dbm_to_watts(dbm)
}

/// `fpc[k][m]` for every device and station.
pub fn fpc_matrix(net: &Network) -> Vec<Vec<f64>> {
    (0..net.n_md())
        .map(|k| (0..net.n_bs()).map(|m| fpc_power(net, k, m)).collect())
        .collect()
}

/// FPC power toward each device's UL station; 0 for devices without one.
pub fn fpc_for_links(net: &Network, links: &[Option<Link>]) -> Vec<f64> {
    links
        .iter()
        .enumerate()
        .map(|(k, l)| l.map_or(0.0, |l| fpc_power(net, k, l.station)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    /// Armijo contraction factor.
    pub zeta: f64,
    /// Armijo sufficient-decrease factor.
    pub epsilon: f64,
    /// Relative change of the SCA surrogate value that ends an inner solve.
    pub inner_tol: f64,
    /// Target for `sqrt(Σ ρ² + κ²)`.
    pub outer_tol: f64,
    pub max_outer: usize,
    pub max_sca: usize,
    pub max_newton: usize,
    pub max_armijo: u32,
    /// Outer iterations without residual improvement before giving up.
    pub stall_window: usize,
    /// Lower power bound in watts; defaults to `1e-6 · P_max`.
    pub p_floor_w: Option<f64>,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            zeta: 0.5,
            epsilon: 0.01,
            inner_tol: 1e-6,
            outer_tol: 1e-5,
            max_outer: 50,
            max_sca: 100,
            max_newton: 100,
            max_armijo: 30,
            stall_window: 10,
            p_floor_w: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolverError {
    #[error("invalid power problem: {0}")]
    InvalidProblem(String),
    #[error("non-finite value in group {group}")]
    NonFinite { group: usize },
    #[error("residual stalled at {residual:e}")]
    Stalled { residual: f64, best_power: Vec<f64> },
}

/// Co-channel devices and the gains among them.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupProblem {
    /// Device ids in the enclosing network, ascending.
    pub members: Vec<usize>,
    pub bits: Vec<f64>,
    /// `gain[(j, i)]`: gain from device `j` to the receiver of device `i`.
    pub gain: DMatrix<f64>,
    pub noise: f64,
    pub bandwidth: f64,
    pub p_min: Vec<f64>,
    pub p_max: Vec<f64>,
}

impl GroupProblem {
    /// Group with members numbered `0..bits.len()`; `gain[j][i]` as above.
    pub fn new(
        bits: Vec<f64>,
        gain: &[Vec<f64>],
        noise: f64,
        bandwidth: f64,
        p_min: Vec<f64>,
        p_max: Vec<f64>,
    ) -> Result<Self> {
        let n = bits.len();
        if n == 0
            || gain.len() != n
            || gain.iter().any(|r| r.len() != n)
            || p_min.len() != n
            || p_max.len() != n
        {
            return Err(Error::Config("group dimensions do not match".into()));
        }
        if gain.iter().flatten().any(|g| !(*g > 0.0 && g.is_finite()))
            || bits.iter().any(|b| !(*b > 0.0))
            || !(noise > 0.0 && bandwidth > 0.0)
        {
            return Err(Error::Domain(
                "gains, task sizes, noise and bandwidth must be positive".into(),
            ));
        }
        if p_min
            .iter()
            .zip(&p_max)
            .any(|(lo, hi)| !(*lo > 0.0 && lo <= hi))
        {
            return Err(Error::Domain(
                "power bounds must satisfy 0 < p_min <= p_max".into(),
            ));
        }
        Ok(Self {
            members: (0..n).collect(),
            bits,
            gain: DMatrix::from_fn(n, n, |j, i| gain[j][i]),
            noise,
            bandwidth,
            p_min,
            p_max,
        })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn sinr(&self, p: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let interference: f64 = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| p[j] * self.gain[(j, i)])
                    .sum();
                p[i] * self.gain[(i, i)] / (interference + self.noise)
            })
            .collect()
    }

    pub fn rates(&self, p: &[f64]) -> Vec<f64> {
        self.sinr(p)
            .iter()
            .map(|g| self.bandwidth * (1.0 + g).log2())
            .collect()
    }

    /// `Σ b_i / R_i(P)`.
    pub fn latency_sum(&self, p: &[f64]) -> f64 {
        self.rates(p)
            .iter()
            .zip(&self.bits)
            .map(|(r, b)| b / r)
            .sum()
    }

    /// `Σ λ_i (b_i − τ_i R_i(P))`.
    pub fn inner_objective(&self, lambda: &[f64], tau: &[f64], p: &[f64]) -> f64 {
        let r = self.rates(p);
        (0..self.len())
            .map(|i| lambda[i] * (self.bits[i] - tau[i] * r[i]))
            .sum()
    }
}

/// A fixed UL assignment split into co-channel groups.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerProblem {
    pub n_md: usize,
    pub groups: Vec<GroupProblem>,
}

impl PowerProblem {
    /// Groups the devices of `links` by subchannel. `p_floor` overrides the
    /// default lower bound of `1e-6 · P_max`.
    pub fn from_links(net: &Network, links: &[Option<Link>], p_floor: Option<f64>) -> Result<Self> {
        let n_sub = net.n_sub();
        let mut by_sub = vec![Vec::new(); n_sub];
        for (k, l) in links.iter().enumerate() {
            if let Some(l) = l {
                by_sub[l.subchannel].push(k);
            }
        }
        let bandwidth = net.cfg.subchannel_bandwidth(Direction::Ul);
        let noise = net.cfg.noise_power(Direction::Ul);
        let ch = &net.channels;
        let mut groups = Vec::new();
        for (n, members) in by_sub.into_iter().enumerate() {
            if members.is_empty() {
                continue;
            }
            let station = |i: usize| links[members[i]].unwrap().station;
            let size = members.len();
            let p_max: Vec<f64> = members
                .iter()
                .map(|&k| net.devices[k].max_tx_power())
                .collect();
            let p_min = match p_floor {
                Some(f) => vec![f; size],
                None => p_max.iter().map(|p| p * 1e-6).collect(),
            };
            if p_min
                .iter()
                .zip(&p_max)
                .any(|(lo, hi)| !(*lo > 0.0 && lo <= hi))
            {
                return Err(Error::Config("power floor must lie in (0, P_max]".into()));
            }
            groups.push(GroupProblem {
                bits: members
                    .iter()
                    .map(|&k| net.devices[k].task.input_bits)
                    .collect(),
                gain: DMatrix::from_fn(size, size, |j, i| {
                    ch.gain(Direction::Ul, members[j], station(i), n)
                }),
                noise,
                bandwidth,
                p_min,
                p_max,
                members,
            });
        }
        Ok(Self {
            n_md: links.len(),
            groups,
        })
    }

    /// Wraps a single group whose members are devices `0..len`.
    pub fn single(group: GroupProblem) -> Self {
        Self {
            n_md: group.len(),
            groups: vec![group],
        }
    }

    pub fn latency_sum(&self, p: &[f64]) -> f64 {
        self.groups
            .iter()
            .map(|g| g.latency_sum(&gather(&g.members, p)))
            .sum()
    }
}

fn gather(members: &[usize], v: &[f64]) -> Vec<f64> {
    members.iter().map(|&k| v[k]).collect()
}

/// One damped Newton step on `(λ, τ)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuterStep {
    pub group: usize,
    pub iteration: usize,
    /// `Σ ρ² + κ²` after the step.
    pub residual: f64,
    /// Accepted step length `ζ^i`.
    pub step: f64,
    pub armijo_trials: u32,
}

/// Objective history of one SCA run.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ScaTrace {
    /// Surrogate value at the minimizer of surrogate `t`.
    pub surrogate: Vec<f64>,
    /// True objective at linearization point `t`.
    pub objective: Vec<f64>,
    /// Relative gap between surrogate `t` and the true objective at the
    /// minimizer of surrogate `t`.
    pub tightness_gap: Vec<f64>,
}

impl ScaTrace {
    pub fn iterations(&self) -> usize {
        self.surrogate.len()
    }

    /// Whether each surrogate minimum is no larger than the previous one,
    /// up to `rel` relative slack.
    pub fn is_monotone(&self, rel: f64) -> bool {
        self.surrogate
            .windows(2)
            .all(|w| w[1] <= w[0] + rel * w[0].abs())
    }
}

/// Optimized powers with the auxiliary variables at termination. Vectors
/// are indexed by device; devices without a link have zero entries.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSolution {
    pub power: Vec<f64>,
    pub lambda: Vec<f64>,
    pub tau: Vec<f64>,
    /// `Σ ρ² + κ²` over all groups.
    pub residual: f64,
    /// Largest number of Newton steps on `(λ, τ)` taken by any group.
    pub outer_iterations: usize,
    pub converged: bool,
    pub trace: Vec<OuterStep>,
    /// SCA descent on the latency sum, one entry per group.
    pub descent: Vec<ScaTrace>,
}

fn residual_of(bits: &[f64], lambda: &[f64], tau: &[f64], rates: &[f64]) -> f64 {
    if rates.iter().any(|r| !(*r > 0.0)) {
        return f64::INFINITY;
    }
    (0..bits.len())
        .map(|i| {
            let rho = lambda[i] * rates[i] - 1.0;
            let kappa = tau[i] * rates[i] - bits[i];
            rho * rho + kappa * kappa
        })
        .sum()
}

fn log_box(group: &GroupProblem) -> (Vec<f64>, Vec<f64>) {
    (
        group.p_min.iter().map(|p| p.log2()).collect(),
        group.p_max.iter().map(|p| p.log2()).collect(),
    )
}

fn to_log(group: &GroupProblem, p: &[f64]) -> Vec<f64> {
    let (lo, hi) = log_box(group);
    (0..p.len())
        .map(|i| p[i].max(f64::MIN_POSITIVE).log2().clamp(lo[i], hi[i]))
        .collect()
}

fn to_power(q: &[f64]) -> Vec<f64> {
    q.iter().map(|x| x.exp2()).collect()
}

/// SCA on the latency sum: each surrogate `Σ b/R̄_t` is convex and is
/// minimized directly. Ends with a projected Newton polish on the exact
/// objective. Returns `Q` and the surrogate history.
fn sca_descent(group: &GroupProblem, q0: &[f64], params: &SolverParams) -> (Vec<f64>, ScaTrace) {
    let (lo, hi) = log_box(group);
    let mut q = q0.to_vec();
    let mut trace = ScaTrace::default();
    for _ in 0..params.max_sca {
        let sur = sca::LatencySurrogate::at(group, &q);
        let at_point = sur.value(&q);
        let next = sca::minimize_box(&sur, &q, &lo, &hi, params.max_newton);
        let value = sur.value(&next);
        if !(value <= at_point) {
            break;
        }
        let exact = group.latency_sum(&to_power(&next));
        let previous = trace.surrogate.last().copied();
        trace.objective.push(at_point);
        trace.surrogate.push(value);
        let gap = (value - exact).abs() / exact;
        trace.tightness_gap.push(gap);
        q = next;
        let settled = previous.is_some_and(|v| v - value <= params.inner_tol * value)
            && gap <= params.inner_tol.powi(2);
        if at_point - value <= f64::EPSILON * value || settled {
            break;
        }
    }
    let exact = sca::TrueLatency::new(group, &q);
    (
        sca::minimize_box(&exact, &q, &lo, &hi, params.max_newton),
        trace,
    )
}

/// Minimizes `Σ λ_i (b_i − τ_i R_i(P))` over the power box by SCA from
/// `p0`, refreshing the bound coefficients at each iterate.
pub fn solve_inner_sca(
    group: &GroupProblem,
    lambda: &[f64],
    tau: &[f64],
    p0: &[f64],
    params: &SolverParams,
) -> (Vec<f64>, ScaTrace) {
    let (lo, hi) = log_box(group);
    let scale: f64 = lambda.iter().zip(&group.bits).map(|(l, b)| l * b).sum();
    let mut q = to_log(group, p0);
    let mut trace = ScaTrace::default();
    for _ in 0..params.max_sca {
        let p = to_power(&q);
        let s = Surrogate::new(BoundedRates::at(group, &p), lambda, tau);
        let at_point = s.value(&q);
        let next = sca::minimize_box(&s, &q, &lo, &hi, params.max_newton);
        let value = s.value(&next);
        if !(value <= at_point) {
            break;
        }
        let exact = group.inner_objective(lambda, tau, &to_power(&next));
        let previous = trace.surrogate.last().copied();
        trace.objective.push(at_point);
        trace.surrogate.push(value);
        let gap = (value - exact).abs() / scale.max(f64::MIN_POSITIVE);
        trace.tightness_gap.push(gap);
        q = next;
        let settled = previous.is_some_and(|v| v - value <= params.inner_tol * scale);
        if at_point - value <= f64::EPSILON * scale || settled {
            break;
        }
    }
    (to_power(&q), trace)
}

struct NewtonState {
    lambda: Vec<f64>,
    tau: Vec<f64>,
    q: Vec<f64>,
    /// Bounded rates at `q`.
    rates: Vec<f64>,
    residual: f64,
}

/// Minimizer of the convex parametric surrogate for `(λ, τ)`.
fn evaluate(
    bound: &BoundedRates<'_>,
    lambda: Vec<f64>,
    tau: Vec<f64>,
    warm: &[f64],
    params: &SolverParams,
) -> NewtonState {
    let group = bound.group();
    let (lo, hi) = log_box(group);
    let s = Surrogate::new(bound.clone(), &lambda, &tau);
    let q = sca::minimize_box(&s, warm, &lo, &hi, params.max_newton);
    let rates = s.rates(&q);
    let residual = residual_of(&group.bits, &lambda, &tau, &rates);
    NewtonState {
        lambda,
        tau,
        q,
        rates,
        residual,
    }
}

struct GroupOutcome {
    power: Vec<f64>,
    lambda: Vec<f64>,
    tau: Vec<f64>,
    residual: f64,
    iterations: usize,
    converged: bool,
    stalled: bool,
    descent: ScaTrace,
}

/// SCA descent from `p_init`, then damped Newton on `(λ, τ)` for the
/// surrogate tight at the descent's end point.
fn solve_group(
    group: &GroupProblem,
    index: usize,
    p_init: &[f64],
    params: &SolverParams,
    target: f64,
    trace: &mut Vec<OuterStep>,
) -> std::result::Result<GroupOutcome, SolverError> {
    let n = group.len();
    let (q, descent) = sca_descent(group, &to_log(group, p_init), params);
    let start = to_power(&q);
    let r0 = group.rates(&start);
    if r0.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(SolverError::NonFinite { group: index });
    }
    let bound = BoundedRates::at(group, &start);
    let lambda = r0.iter().map(|r| 1.0 / r).collect();
    let tau = r0.iter().zip(&group.bits).map(|(r, b)| b / r).collect();
    let mut state = evaluate(&bound, lambda, tau, &q, params);
    let mut best = state.residual;
    let mut since_best = 0;
    let mut iterations = 0;
    let mut stalled = false;

    while state.residual > target && iterations < params.max_outer {
        iterations += 1;
        let r = &state.rates;
        let d_lambda: Vec<f64> = (0..n).map(|i| 1.0 / r[i] - state.lambda[i]).collect();
        let d_tau: Vec<f64> = (0..n)
            .map(|i| group.bits[i] / r[i] - state.tau[i])
            .collect();
        let mut accepted = None;
        for i in 0..params.max_armijo {
            let step = params.zeta.powi(i as i32);
            let lambda = (0..n)
                .map(|k| state.lambda[k] + step * d_lambda[k])
                .collect();
            let tau = (0..n).map(|k| state.tau[k] + step * d_tau[k]).collect();
            let next = evaluate(&bound, lambda, tau, &state.q, params);
            if next.residual <= (1.0 - params.epsilon * step).powi(2) * state.residual {
                accepted = Some((next, step, i + 1));
                break;
            }
        }
        let (next, step, trials) = match accepted {
            Some(a) => a,
            None => {
                log::warn!("group {index}: Armijo search exhausted at iteration {iterations}");
                let step = params.zeta.powi(params.max_armijo as i32 - 1);
                let lambda = (0..n)
                    .map(|k| state.lambda[k] + step * d_lambda[k])
                    .collect();
                let tau = (0..n).map(|k| state.tau[k] + step * d_tau[k]).collect();
                let next = evaluate(&bound, lambda, tau, &state.q, params);
                if !next.residual.is_finite() {
                    stalled = true;
                    break;
                }
                (next, step, params.max_armijo)
            }
        };
        state = next;
        trace.push(OuterStep {
            group: index,
            iteration: iterations,
            residual: state.residual,
            step,
            armijo_trials: trials,
        });
        if state.residual < best {
            best = state.residual;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= params.stall_window {
                stalled = true;
                break;
            }
        }
    }
    let power = to_power(&state.q);
    let residual = residual_of(&group.bits, &state.lambda, &state.tau, &group.rates(&power));
    if !residual.is_finite() {
        return Err(SolverError::NonFinite { group: index });
    }
    Ok(GroupOutcome {
        converged: residual <= target,
        power,
        lambda: state.lambda,
        tau: state.tau,
        residual,
        iterations,
        stalled,
        descent,
    })
}

/// Minimizes the UL latency sum of `problem` starting from `p_init`
/// (indexed by device).
///
/// Returns [`SolverError::Stalled`] with the last powers when some Newton
/// run stops improving for `stall_window` steps. Running out of iterations
/// yields a solution with `converged == false`.
pub fn solve_optimal_power(
    problem: &PowerProblem,
    p_init: &[f64],
    params: &SolverParams,
) -> std::result::Result<PowerSolution, SolverError> {
    if p_init.len() != problem.n_md {
        return Err(SolverError::InvalidProblem(
            "initial power length mismatch".into(),
        ));
    }
    if !(params.zeta > 0.0 && params.zeta < 1.0 && params.epsilon > 0.0 && params.epsilon < 1.0) {
        return Err(SolverError::InvalidProblem(
            "zeta and epsilon must lie in (0, 1)".into(),
        ));
    }
    let target = params.outer_tol.powi(2) / problem.groups.len().max(1) as f64;
    let mut solution = PowerSolution {
        power: vec![0.0; problem.n_md],
        lambda: vec![0.0; problem.n_md],
        tau: vec![0.0; problem.n_md],
        residual: 0.0,
        outer_iterations: 0,
        converged: true,
        trace: Vec::new(),
        descent: Vec::new(),
    };
    let mut stalled = false;
    for (index, group) in problem.groups.iter().enumerate() {
        let init = gather(&group.members, p_init);
        let out = solve_group(group, index, &init, params, target, &mut solution.trace)?;
        for (i, &k) in group.members.iter().enumerate() {
            solution.power[k] = out.power[i];
            solution.lambda[k] = out.lambda[i];
            solution.tau[k] = out.tau[i];
        }
        solution.residual += out.residual;
        solution.outer_iterations = solution.outer_iterations.max(out.iterations);
        solution.converged &= out.converged;
        solution.descent.push(out.descent);
        stalled |= out.stalled;
    }
    if stalled {
        return Err(SolverError::Stalled {
            residual: solution.residual,
            best_power: solution.power,
        });
    }
    if !solution.converged {
        log::warn!(
            "power solver stopped unconverged, residual {:e}",
            solution.residual
        );
    }
    Ok(solution)
}

/// First-order optimality measures of a solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KktReport {
    /// `max |1 − λ_k R_k|`.
    pub lambda_residual: f64,
    /// `max |b_k − τ_k R_k|`.
    pub tau_residual: f64,
    /// `max |P_k ∂L/∂P_k|` after zeroing components that push against an
    /// active bound, by central differences of the inner objective.
    pub stationarity: f64,
    /// Smallest distance to either power bound, relative to `P_max`.
    pub box_slack: f64,
}

pub fn kkt_residuals(problem: &PowerProblem, solution: &PowerSolution) -> KktReport {
    let mut report = KktReport {
        lambda_residual: 0.0,
        tau_residual: 0.0,
        stationarity: 0.0,
        box_slack: f64::INFINITY,
    };
    for g in &problem.groups {
        let p = gather(&g.members, &solution.power);
        let lambda = gather(&g.members, &solution.lambda);
        let tau = gather(&g.members, &solution.tau);
        let r = g.rates(&p);
        for i in 0..g.len() {
            report.lambda_residual = report.lambda_residual.max((1.0 - lambda[i] * r[i]).abs());
            report.tau_residual = report.tau_residual.max((g.bits[i] - tau[i] * r[i]).abs());

            let h = 1e-6 * p[i];
            let mut up = p.clone();
            let mut dn = p.clone();
            up[i] += h;
            dn[i] -= h;
            let d = (g.inner_objective(&lambda, &tau, &up) - g.inner_objective(&lambda, &tau, &dn))
                / (2.0 * h);
            let at_hi = p[i] >= g.p_max[i] * (1.0 - 1e-9);
            let at_lo = p[i] <= g.p_min[i] * (1.0 + 1e-9);
            let projected = if (at_hi && d < 0.0) || (at_lo && d > 0.0) {
                0.0
            } else {
                d
            };
            report.stationarity = report.stationarity.max((p[i] * projected).abs());
            let slack = (p[i] - g.p_min[i]).min(g.p_max[i] - p[i]) / g.p_max[i];
            report.box_slack = report.box_slack.min(slack);
        }
    }
    report
}

/// Writes the outer-iteration trace as CSV.
pub fn write_trace_csv<W: Write>(trace: &[OuterStep], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in trace {
        w.serialize(row)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: "<solver trace>".into(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::tiny_network;

    fn two_users(cross: f64) -> GroupProblem {
        GroupProblem::new(
            vec![4e6, 5e6],
            &[vec![1e-10, cross], vec![cross, 4e-11]],
            8e-16,
            2e5,
            vec![2e-7, 2e-7],
            vec![0.2, 0.2],
        )
        .unwrap()
    }

    fn grid_min(g: &GroupProblem, points: usize) -> f64 {
        let axis = |i: usize| -> Vec<f64> {
            let (lo, hi) = (g.p_min[i].ln(), g.p_max[i].ln());
            (0..points)
                .map(|s| (lo + (hi - lo) * s as f64 / (points - 1) as f64).exp())
                .collect()
        };
        let (a, b) = (axis(0), axis(1));
        let mut best = f64::INFINITY;
        for &x in &a {
            for &y in &b {
                best = best.min(g.latency_sum(&[x, y]));
            }
        }
        best
    }

    #[test]
    fn fpc_follows_pathloss_and_caps_at_max() {
        let net = tiny_network(&[vec![1e-10, 1e-16]], 1);
        // PL = 100 dB: -80 + 70 = -10 dBm.
        assert!((fpc_power(&net, 0, 0) - 1e-4).abs() < 1e-12);
        // PL = 160 dB: -80 + 112 = 32 dBm, capped at 23 dBm.
        assert!((fpc_power(&net, 0, 1) - dbm_to_watts(23.0)).abs() < 1e-12);
    }

    #[test]
    fn weak_interference_means_full_power() {
        let g = two_users(1e-18);
        let problem = PowerProblem::single(g);
        let sol = solve_optimal_power(&problem, &[0.01, 0.01], &SolverParams::default()).unwrap();
        for p in &sol.power {
            assert!((p - 0.2).abs() < 1e-9, "{p}");
        }
    }

    #[test]
    fn matches_grid_search_under_strong_interference() {
        let g = two_users(2e-11);
        let problem = PowerProblem::single(g.clone());
        let sol = solve_optimal_power(&problem, &[0.2, 0.2], &SolverParams::default()).unwrap();
        let best = grid_min(&g, 400);
        assert!(problem.latency_sum(&sol.power) <= best * 1.005);
    }

    #[test]
    fn converges_to_tight_residual() {
        let g = two_users(5e-12);
        let problem = PowerProblem::single(g);
        let sol = solve_optimal_power(&problem, &[0.05, 0.2], &SolverParams::default()).unwrap();
        assert!(sol.converged);
        assert!(sol.residual <= 1e-10, "{}", sol.residual);
        let kkt = kkt_residuals(&problem, &sol);
        assert!(kkt.lambda_residual < 1e-5 && kkt.tau_residual < 1e-5);
    }

    #[test]
    fn reaches_reference_optima() {
        // Independent high-resolution minimizations of the same problems.
        let cases = [
            (1e-13, 4.866059295, -3.3473126),
            (1e-12, 7.4797255152, -3.3245128),
            (5e-12, 11.8976568604, -3.2347288),
            (2e-11, 21.788354658, -3.1777526),
        ];
        for (cross, value, q0) in cases {
            let problem = PowerProblem::single(two_users(cross));
            let sol = solve_optimal_power(&problem, &[0.2, 0.2], &SolverParams::default()).unwrap();
            let got = problem.latency_sum(&sol.power);
            assert!(
                (got - value).abs() <= 1e-8 * value,
                "{cross}: {got} vs {value}"
            );
            assert!((sol.power[0].log2() - q0).abs() < 1e-5);
            assert!((sol.power[1] - 0.2).abs() < 1e-9);
            assert!(sol.descent[0].is_monotone(1e-12));
            assert!(sol.descent[0].tightness_gap.last().unwrap() <= &1e-9);
        }
    }

    #[test]
    fn inner_sca_is_monotone_and_tight() {
        let g = two_users(5e-12);
        let p0 = [0.01, 0.05];
        let r = g.rates(&p0);
        let lambda: Vec<f64> = r.iter().map(|r| 1.0 / r).collect();
        let tau: Vec<f64> = r.iter().zip(&g.bits).map(|(r, b)| b / r).collect();
        let params = SolverParams::default();
        let (p, trace) = solve_inner_sca(&g, &lambda, &tau, &p0, &params);
        assert!(trace.iterations() >= 2);
        assert!(trace.is_monotone(0.0));
        // Surrogate t touches the true objective at its own linearization point.
        for w in trace.objective.windows(2).zip(&trace.surrogate) {
            assert!(w.0[1] <= *w.1 + 1e-9 * w.1.abs().max(1.0));
        }
        assert!(g.inner_objective(&lambda, &tau, &p) <= g.inner_objective(&lambda, &tau, &p0));
    }

    #[test]
    fn groups_follow_subchannels() {
        let net = tiny_network(
            &[vec![1e-10, 1e-12], vec![1e-12, 1e-10], vec![1e-11, 1e-11]],
            2,
        );
        let links = vec![
            Some(Link::new(0, 0)),
            Some(Link::new(1, 0)),
            Some(Link::new(1, 1)),
        ];
        let problem = PowerProblem::from_links(&net, &links, None).unwrap();
        assert_eq!(problem.groups.len(), 2);
        assert_eq!(problem.groups[0].members, vec![0, 1]);
        assert_eq!(problem.groups[0].gain[(1, 0)], 1e-12);
        assert_eq!(problem.groups[0].gain[(0, 1)], 1e-12);
        assert_eq!(problem.groups[1].members, vec![2]);
        let pmax = net.devices[0].max_tx_power();
        assert!((problem.groups[0].p_min[0] - pmax * 1e-6).abs() < 1e-18);
    }

    #[test]
    fn rejects_bad_initial_length() {
        let problem = PowerProblem::single(two_users(1e-12));
        assert!(matches!(
            solve_optimal_power(&problem, &[0.1], &SolverParams::default()),
            Err(SolverError::InvalidProblem(_))
        ));
    }
}
