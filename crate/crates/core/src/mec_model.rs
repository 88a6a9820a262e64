//! Task model, link rates, latency decomposition and network metrics.
//!
//! Every scheme is scored by the functions in this module. Tasks are fully
//! offloaded: input bits go up to the UL serving station, execute on its
//! cloudlet, and the output returns from the DL serving station. When the two
//! stations differ the output crosses the backhaul first.
//!
//! Anything that cannot be delivered (no link, or a zero rate) is charged
//! `f64::INFINITY` and excluded from the sums in [`MetricsReport`], which
//! counts such devices as unserved instead.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::{Direction, Network};

/// An offloaded task: input size and the two ratios that derive output size
/// and CPU demand from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub input_bits: f64,
    pub output_ratio: f64,
    pub cycles_per_bit: f64,
}

impl TaskSpec {
    pub fn new(input_bits: f64, output_ratio: f64, cycles_per_bit: f64) -> Self {
        assert!(input_bits > 0.0 && output_ratio > 0.0 && cycles_per_bit > 0.0);
        Self {
            input_bits,
            output_ratio,
            cycles_per_bit,
        }
    }

    pub fn output_bits(&self) -> f64 {
        self.output_ratio * self.input_bits
    }

    pub fn cycles(&self) -> f64 {
        self.cycles_per_bit * self.input_bits
    }
}

/// Serving station and subchannel of one link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Link {
    pub station: usize,
    pub subchannel: usize,
}

impl Link {
    pub fn new(station: usize, subchannel: usize) -> Self {
        Self {
            station,
            subchannel,
        }
    }
}

/// Per-device UL and DL links. `None` marks an unserved direction.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Assignment {
    pub ul: Vec<Option<Link>>,
    pub dl: Vec<Option<Link>>,
}

impl Assignment {
    pub fn new(n_md: usize) -> Self {
        Self {
            ul: vec![None; n_md],
            dl: vec![None; n_md],
        }
    }

    pub fn n_md(&self) -> usize {
        self.ul.len()
    }

    pub fn link(&self, dir: Direction, k: usize) -> Option<Link> {
        match dir {
            Direction::Ul => self.ul[k],
            Direction::Dl => self.dl[k],
        }
    }

    /// Devices using each subchannel in `dir`, in ascending id order.
    pub fn occupants(&self, dir: Direction, n_sub: usize) -> Vec<Vec<usize>> {
        let links = match dir {
            Direction::Ul => &self.ul,
            Direction::Dl => &self.dl,
        };
        let mut occ = vec![Vec::new(); n_sub];
        for (k, link) in links.iter().enumerate() {
            if let Some(l) = link {
                occ[l.subchannel].push(k);
            }
        }
        occ
    }

    /// Number of devices whose UL is served by each station.
    pub fn server_loads(&self, n_bs: usize) -> Vec<usize> {
        let mut loads = vec![0; n_bs];
        for l in self.ul.iter().flatten() {
            loads[l.station] += 1;
        }
        loads
    }

    /// Checks that no two devices share a (station, subchannel) in either
    /// direction.
    pub fn is_orthogonal(&self) -> bool {
        for links in [&self.ul, &self.dl] {
            let mut seen = std::collections::HashSet::new();
            for l in links.iter().flatten() {
                if !seen.insert(*l) {
                    return false;
                }
            }
        }
        true
    }

    /// RFC-4180 rows `md_id,bs_id,subchannel,direction` for assigned links.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["md_id", "bs_id", "subchannel", "direction"])?;
        for (dir, links) in [("ul", &self.ul), ("dl", &self.dl)] {
            for (k, l) in links.iter().enumerate() {
                if let Some(l) = l {
                    w.write_record([
                        k.to_string(),
                        l.station.to_string(),
                        l.subchannel.to_string(),
                        dir.to_string(),
                    ])?;
                }
            }
        }
        w.flush().map_err(|source| Error::Io {
            path: "<assignment csv>".into(),
            source,
        })?;
        Ok(())
    }
}

/// UL transmit power per device and DL power per station and subchannel,
/// both in watts.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PowerAllocation {
    pub ul: Vec<f64>,
    pub dl: Vec<Vec<f64>>,
}

/// Per-device latency components in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub ul: f64,
    pub exe: f64,
    pub backhaul: f64,
    pub dl: f64,
}

impl LatencyBreakdown {
    pub const UNSERVED: LatencyBreakdown = LatencyBreakdown {
        ul: f64::INFINITY,
        exe: f64::INFINITY,
        backhaul: f64::INFINITY,
        dl: f64::INFINITY,
    };

    pub fn total(&self) -> f64 {
        self.ul + self.exe + self.backhaul + self.dl
    }

    pub fn is_served(&self) -> bool {
        self.total().is_finite()
    }
}

/// Shannon rate over one subchannel.
#[inline]
pub fn shannon_rate(bandwidth: f64, signal: f64, interference: f64, noise: f64) -> f64 {
    bandwidth * (1.0 + signal / (interference + noise)).log2()
}

/// UL SINR of device `k` on its assigned link.
pub fn ul_sinr(
    net: &Network,
    k: usize,
    assignment: &Assignment,
    powers: &PowerAllocation,
) -> Option<f64> {
    let link = assignment.ul[k]?;
    let ch = &net.channels;
    let interference: f64 = assignment
        .ul
        .iter()
        .enumerate()
        .filter(|&(j, l)| j != k && matches!(l, Some(l) if l.subchannel == link.subchannel))
        .map(|(j, _)| powers.ul[j] * ch.gain(Direction::Ul, j, link.station, link.subchannel))
        .sum();
    let signal = powers.ul[k] * ch.gain(Direction::Ul, k, link.station, link.subchannel);
    Some(signal / (interference + net.cfg.noise_power(Direction::Ul)))
}

/// UL rate of device `k` in bits/s; interference comes from every other
/// device transmitting on the same subchannel, received at `k`'s station.
/// Unassigned devices have rate 0.
pub fn ul_rate(net: &Network, k: usize, assignment: &Assignment, powers: &PowerAllocation) -> f64 {
    match ul_sinr(net, k, assignment, powers) {
        Some(sinr) => net.cfg.subchannel_bandwidth(Direction::Ul) * (1.0 + sinr).log2(),
        None => 0.0,
    }
}

/// UL rates of all devices, grouping by subchannel.
pub fn ul_rates(net: &Network, assignment: &Assignment, powers: &PowerAllocation) -> Vec<f64> {
    let bw = net.cfg.subchannel_bandwidth(Direction::Ul);
    let noise = net.cfg.noise_power(Direction::Ul);
    let occ = assignment.occupants(Direction::Ul, net.n_sub());
    let ch = &net.channels;
    let mut rates = vec![0.0; assignment.n_md()];
    for (n, users) in occ.iter().enumerate() {
        for &k in users {
            let m = assignment.ul[k].unwrap().station;
            let interference: f64 = users
                .iter()
                .filter(|&&j| j != k)
                .map(|&j| powers.ul[j] * ch.gain(Direction::Ul, j, m, n))
                .sum();
            rates[k] = shannon_rate(
                bw,
                powers.ul[k] * ch.gain(Direction::Ul, k, m, n),
                interference,
                noise,
            );
        }
    }
    rates
}

/// DL rate of device `k` in bits/s. A station interferes on subchannel `n`
/// when it serves some DL device on `n`.
pub fn dl_rate(net: &Network, k: usize, assignment: &Assignment, powers: &PowerAllocation) -> f64 {
    let Some(link) = assignment.dl[k] else {
        return 0.0;
    };
    let n = link.subchannel;
    let ch = &net.channels;
    let mut active = vec![false; net.n_bs()];
    for l in assignment.dl.iter().flatten() {
        if l.subchannel == n {
            active[l.station] = true;
        }
    }
    let interference: f64 = active
        .iter()
        .enumerate()
        .filter(|&(i, &on)| on && i != link.station)
        .map(|(i, _)| powers.dl[i][n] * ch.gain(Direction::Dl, k, i, n))
        .sum();
    shannon_rate(
        net.cfg.subchannel_bandwidth(Direction::Dl),
        powers.dl[link.station][n] * ch.gain(Direction::Dl, k, link.station, n),
        interference,
        net.cfg.noise_power(Direction::Dl),
    )
}

pub fn dl_rates(net: &Network, assignment: &Assignment, powers: &PowerAllocation) -> Vec<f64> {
    (0..assignment.n_md())
        .map(|k| dl_rate(net, k, assignment, powers))
        .collect()
}

/// Latency components of device `k`. `server_loads[m]` is the number of
/// devices sharing station `m`'s cloudlet.
pub fn latency_from_rates(
    net: &Network,
    k: usize,
    assignment: &Assignment,
    ul_rate: f64,
    dl_rate: f64,
    server_loads: &[usize],
) -> LatencyBreakdown {
    let (Some(ul), Some(dl)) = (assignment.ul[k], assignment.dl[k]) else {
        return LatencyBreakdown::UNSERVED;
    };
    let task = &net.devices[k].task;
    let per_device_cpu =
        net.stations[ul.station].compute_capacity / server_loads[ul.station].max(1) as f64;
    let backhaul = if ul.station != dl.station {
        task.output_bits() / net.cfg.backhaul_bps
    } else {
        0.0
    };
    LatencyBreakdown {
        ul: if ul_rate > 0.0 {
            task.input_bits / ul_rate
        } else {
            f64::INFINITY
        },
        exe: task.cycles() / per_device_cpu,
        backhaul,
        dl: if dl_rate > 0.0 {
            task.output_bits() / dl_rate
        } else {
            f64::INFINITY
        },
    }
}

pub fn latency(
    net: &Network,
    k: usize,
    assignment: &Assignment,
    powers: &PowerAllocation,
    server_loads: &[usize],
) -> LatencyBreakdown {
    latency_from_rates(
        net,
        k,
        assignment,
        ul_rate(net, k, assignment, powers),
        dl_rate(net, k, assignment, powers),
        server_loads,
    )
}

/// Network UL energy efficiency: total UL rate over total UL transmit power,
/// across assigned devices.
pub fn energy_efficiency(
    net: &Network,
    assignment: &Assignment,
    powers: &PowerAllocation,
) -> Result<f64> {
    let rates = ul_rates(net, assignment, powers);
    energy_efficiency_from(&rates, &powers.ul, assignment)
}

fn energy_efficiency_from(rates: &[f64], ul_power: &[f64], assignment: &Assignment) -> Result<f64> {
    let (mut rate_sum, mut power_sum) = (0.0, 0.0);
    for (k, link) in assignment.ul.iter().enumerate() {
        if link.is_some() {
            rate_sum += rates[k];
            power_sum += ul_power[k];
        }
    }
    if power_sum <= 0.0 {
        return Err(Error::ZeroPower);
    }
    Ok(rate_sum / power_sum)
}

/// Jain's fairness index `(Σx)² / (n·Σx²)`.
pub fn jain_index(values: &[f64]) -> Result<f64> {
    if values.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::Domain(
            "jain index needs finite nonnegative values".into(),
        ));
    }
    let sum: f64 = values.iter().sum();
    let sum_sq: f64 = values.iter().map(|v| v * v).sum();
    if sum_sq == 0.0 {
        return Err(Error::AllZero);
    }
    Ok(sum * sum / (values.len() as f64 * sum_sq))
}

pub const PERCENTILES: [u32; 5] = [10, 20, 50, 80, 90];

/// Nearest-rank percentiles of per-device rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePercentiles {
    pub p10: f64,
    pub p20: f64,
    pub p50: f64,
    pub p80: f64,
    pub p90: f64,
}

impl RatePercentiles {
    pub fn get(&self, p: u32) -> Option<f64> {
        match p {
            10 => Some(self.p10),
            20 => Some(self.p20),
            50 => Some(self.p50),
            80 => Some(self.p80),
            90 => Some(self.p90),
            _ => None,
        }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.p10, self.p20, self.p50, self.p80, self.p90]
    }
}

/// Value at nearest rank `ceil(p/100 · n)` of the sorted input.
pub fn nearest_rank(sorted: &[f64], p: u32) -> f64 {
    let n = sorted.len();
    let rank = ((p as f64 / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

pub fn rate_percentiles(rates: &[f64]) -> Result<RatePercentiles> {
    if rates.is_empty() {
        return Err(Error::Domain("percentiles of an empty list".into()));
    }
    let mut sorted = rates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let p = |q| nearest_rank(&sorted, q);
    Ok(RatePercentiles {
        p10: p(10),
        p20: p(20),
        p50: p(50),
        p80: p(80),
        p90: p(90),
    })
}

/// Aggregate metrics of one scheme on one drop. Sums and fairness indices
/// cover served devices only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sum_latency: f64,
    pub sum_ul_latency: f64,
    pub sum_computation_latency: f64,
    pub sum_backhaul_latency: f64,
    pub sum_dl_latency: f64,
    /// bits/s per watt.
    pub energy_efficiency: f64,
    pub jain_ul: f64,
    pub jain_exe: f64,
    pub rate_percentiles: RatePercentiles,
    pub served: usize,
    pub unserved: usize,
}

/// Per-device latencies plus the aggregate report.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub latencies: Vec<LatencyBreakdown>,
    pub ul_rates: Vec<f64>,
    pub dl_rates: Vec<f64>,
    pub report: MetricsReport,
}

pub fn evaluate(
    net: &Network,
    assignment: &Assignment,
    powers: &PowerAllocation,
) -> Result<Evaluation> {
    let ul = ul_rates(net, assignment, powers);
    let dl = dl_rates(net, assignment, powers);
    let loads = assignment.server_loads(net.n_bs());
    let latencies: Vec<_> = (0..assignment.n_md())
        .map(|k| latency_from_rates(net, k, assignment, ul[k], dl[k], &loads))
        .collect();

    let served: Vec<&LatencyBreakdown> = latencies.iter().filter(|l| l.is_served()).collect();
    let sum = |f: fn(&LatencyBreakdown) -> f64| served.iter().map(|l| f(l)).sum::<f64>();
    let ul_lat: Vec<f64> = served.iter().map(|l| l.ul).collect();
    let exe_lat: Vec<f64> = served.iter().map(|l| l.exe).collect();
    let assigned_rates: Vec<f64> = assignment
        .ul
        .iter()
        .zip(&ul)
        .filter_map(|(l, r)| l.map(|_| *r))
        .collect();

    let report = MetricsReport {
        sum_latency: sum(LatencyBreakdown::total),
        sum_ul_latency: sum(|l| l.ul),
        sum_computation_latency: sum(|l| l.exe),
        sum_backhaul_latency: sum(|l| l.backhaul),
        sum_dl_latency: sum(|l| l.dl),
        energy_efficiency: energy_efficiency_from(&ul, &powers.ul, assignment)?,
        jain_ul: jain_index(&ul_lat)?,
        jain_exe: jain_index(&exe_lat)?,
        rate_percentiles: rate_percentiles(&assigned_rates)?,
        served: served.len(),
        unserved: latencies.len() - served.len(),
    };
    Ok(Evaluation {
        latencies,
        ul_rates: ul,
        dl_rates: dl,
        report,
    })
}

/// Sum of UL transmission latency over devices with a UL link.
pub fn sum_ul_latency(net: &Network, assignment: &Assignment, ul_power: &[f64]) -> f64 {
    let powers = PowerAllocation {
        ul: ul_power.to_vec(),
        dl: Vec::new(),
    };
    ul_rates(net, assignment, &powers)
        .iter()
        .enumerate()
        .filter(|(k, _)| assignment.ul[*k].is_some())
        .map(|(k, r)| net.devices[k].task.input_bits / r)
        .sum()
}
