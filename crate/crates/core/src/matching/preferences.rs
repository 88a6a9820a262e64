use serde::{Deserialize, Serialize};

use super::ProjectId;
use crate::error::{Error, Result};
use crate::topology::{Direction, Network, StationKind};

/// Strict preference lists of devices over projects and of stations over
/// devices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceProfile {
    pub n_stations: usize,
    pub n_subchannels: usize,
    /// `md_prefs[k]` lists acceptable projects, most preferred first.
    pub md_prefs: Vec<Vec<ProjectId>>,
    /// `bs_prefs[m]` ranks every device that finds some project of `m`
    /// acceptable, most preferred first.
    pub bs_prefs: Vec<Vec<usize>>,
}

impl PreferenceProfile {
    pub fn n_md(&self) -> usize {
        self.md_prefs.len()
    }

    pub fn n_projects(&self) -> usize {
        self.n_stations * self.n_subchannels
    }

    pub fn station_of(&self, c: ProjectId) -> usize {
        c / self.n_subchannels
    }

    /// Position of `c` in device `k`'s list.
    pub fn md_rank(&self, k: usize, c: ProjectId) -> Option<usize> {
        self.md_prefs[k].iter().position(|&x| x == c)
    }

    /// Position of device `k` in station `m`'s list.
    pub fn bs_rank(&self, m: usize, k: usize) -> Option<usize> {
        self.bs_prefs[m].iter().position(|&x| x == k)
    }

    /// `rank[m][k]`, `usize::MAX` for unranked devices.
    pub fn bs_rank_table(&self) -> Vec<Vec<usize>> {
        self.bs_prefs
            .iter()
            .map(|list| {
                let mut r = vec![usize::MAX; self.n_md()];
                for (pos, &k) in list.iter().enumerate() {
                    r[k] = pos;
                }
                r
            })
            .collect()
    }

    /// U_m^n: station `m`'s list restricted to devices that find `c` acceptable.
    pub fn projected_list(&self, c: ProjectId) -> Vec<usize> {
        self.bs_prefs[self.station_of(c)]
            .iter()
            .copied()
            .filter(|&k| self.md_prefs[k].contains(&c))
            .collect()
    }

    /// Checks list consistency: projects in range, no duplicates, and station
    /// lists holding exactly the devices that find one of their projects
    /// acceptable.
    pub fn validate(&self) -> Result<()> {
        let n_proj = self.n_projects();
        if self.bs_prefs.len() != self.n_stations {
            return Err(Error::Config(
                "one station list per station required".into(),
            ));
        }
        for (k, list) in self.md_prefs.iter().enumerate() {
            let mut seen = vec![false; n_proj];
            for &c in list {
                if c >= n_proj || std::mem::replace(&mut seen[c], true) {
                    return Err(Error::Config(format!(
                        "device {k} list has invalid or repeated project {c}"
                    )));
                }
            }
        }
        for m in 0..self.n_stations {
            let mut expected: Vec<usize> = (0..self.n_md())
                .filter(|&k| self.md_prefs[k].iter().any(|&c| self.station_of(c) == m))
                .collect();
            let mut got = self.bs_prefs[m].clone();
            got.sort_unstable();
            expected.sort_unstable();
            if got != expected {
                return Err(Error::Config(format!(
                    "station {m} list does not match device acceptability"
                )));
            }
        }
        Ok(())
    }
}

/// Maximum number of devices each station may serve.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capacities {
    pub station: Vec<usize>,
}

impl Capacities {
    /// `round_half_up(ν_m · K / (M+1))`, clamped to `[1, N]`.
    pub fn from_load_factors(load_factors: &[f64], n_md: usize, n_sub: usize) -> Self {
        let n_bs = load_factors.len() as f64;
        let station = load_factors
            .iter()
            .map(|nu| {
                let avg = nu * n_md as f64 / n_bs;
                ((avg + 0.5).floor() as usize).clamp(1, n_sub)
            })
            .collect();
        Self { station }
    }

    pub fn for_network(net: &Network) -> Self {
        let factors: Vec<f64> = net
            .stations
            .iter()
            .map(|s| match s.kind {
                StationKind::Mbs => net.cfg.mbs_load_factor,
                StationKind::Sbs => net.cfg.sbs_load_factor,
            })
            .collect();
        Self::from_load_factors(&factors, net.n_md(), net.n_sub())
    }
}

/// Builds the profile for a drop.
///
/// Each device accepts every subchannel of its `candidate_stations` nearest
/// stations, ranked by interference-free UL SNR under `fpc[k][m]` (the FPC
/// power device `k` would use toward station `m`). The MBS ranks devices by
/// descending CPU demand, SBSs by ascending demand. Ties go to the lower id.
pub fn build_preferences(
    net: &Network,
    fpc: &[Vec<f64>],
    candidate_stations: usize,
) -> PreferenceProfile {
    let n_bs = net.n_bs();
    let n_sub = net.n_sub();
    let m_k = candidate_stations.clamp(1, n_bs);
    let ch = &net.channels;

    let md_prefs: Vec<Vec<ProjectId>> = (0..net.n_md())
        .map(|k| {
            let mut options: Vec<(f64, ProjectId)> = net.stations_by_distance(k)[..m_k]
                .iter()
                .flat_map(|&m| {
                    (0..n_sub)
                        .map(move |n| (fpc[k][m] * ch.gain(Direction::Ul, k, m, n), m * n_sub + n))
                })
                .collect();
            options.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            options.into_iter().map(|(_, c)| c).collect()
        })
        .collect();

    let bs_prefs = (0..n_bs)
        .map(|m| {
            let mut list: Vec<usize> = (0..net.n_md())
                .filter(|&k| md_prefs[k].iter().any(|&c| c / n_sub == m))
                .collect();
            let descending = net.stations[m].kind == StationKind::Mbs;
            list.sort_by(|&a, &b| {
                let (ca, cb) = (net.devices[a].task.cycles(), net.devices[b].task.cycles());
                let ord = if descending {
                    cb.total_cmp(&ca)
                } else {
                    ca.total_cmp(&cb)
                };
                ord.then(a.cmp(&b))
            });
            list
        })
        .collect();

    PreferenceProfile {
        n_stations: n_bs,
        n_subchannels: n_sub,
        md_prefs,
        bs_prefs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mec_model::TaskSpec;
    use crate::testutil::tiny_network;

    #[test]
    fn list_length_is_candidates_times_subchannels() {
        let net = Network::generate(&crate::topology::NetworkConfig::default(), 4).unwrap();
        let fpc = vec![vec![0.1; net.n_bs()]; net.n_md()];
        let p = build_preferences(&net, &fpc, 2);
        assert!(p.md_prefs.iter().all(|l| l.len() == 50));
        p.validate().unwrap();
        // Clamped when asking for more stations than exist.
        let all = build_preferences(&net, &fpc, 100);
        assert!(all.md_prefs.iter().all(|l| l.len() == 25 * net.n_bs()));
    }

    #[test]
    fn mbs_and_sbs_rank_in_opposite_orders() {
        let mut net = tiny_network(&[vec![1e-9, 1e-9], vec![1e-9, 1e-9]], 2);
        net.devices[0].task = TaskSpec::new(3e6, 0.2, 330.0); // 9.9e8 cycles
        net.devices[1].task = TaskSpec::new(1e6, 0.2, 330.0); // 3.3e8 cycles
        let fpc = vec![vec![0.1; 2]; 2];
        let p = build_preferences(&net, &fpc, 2);
        assert_eq!(p.bs_prefs[0], vec![0, 1]);
        assert_eq!(p.bs_prefs[1], vec![1, 0]);
    }

    #[test]
    fn devices_rank_by_snr() {
        let mut net = tiny_network(&[vec![1e-9, 1e-9]], 2);
        use crate::topology::Direction::Ul;
        net.channels.set_gain(Ul, 0, 1, 1, 5e-9);
        net.channels.set_gain(Ul, 0, 0, 1, 2e-9);
        let fpc = vec![vec![0.1, 0.1]];
        let p = build_preferences(&net, &fpc, 2);
        assert_eq!(p.md_prefs[0], vec![3, 1, 0, 2]);
    }

    #[test]
    fn capacity_rounding() {
        let mut nu = vec![0.8; 26];
        nu[0] = 2.0;
        let caps = Capacities::from_load_factors(&nu, 250, 25);
        assert_eq!(caps.station[0], 19);
        assert_eq!(caps.station[1], 8); // 0.8 * 250 / 26 = 7.69
        let clamp_hi = Capacities::from_load_factors(&[2.0, 0.8], 250, 25);
        assert_eq!(clamp_hi.station, vec![25, 25]);
        let clamp_lo = Capacities::from_load_factors(&[0.01, 0.01], 2, 25);
        assert_eq!(clamp_lo.station, vec![1, 1]);
        // Exactly half rounds up: 0.5 * 3 / 1 = 1.5 → 2.
        assert_eq!(
            Capacities::from_load_factors(&[0.5], 3, 25).station,
            vec![2]
        );
    }
}
