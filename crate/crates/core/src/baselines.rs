//! Reference association and allocation rules, and the DL side shared by
//! every scheme.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mec_model::Link;
use crate::topology::{Direction, Network, StationKind};
use crate::units::watts_to_dbm;

/// Resource allocation schemes compared by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SchemeId {
    /// Coupled association: both directions follow biased RSRP; greedy
    /// subchannels; FPC.
    #[serde(rename = "CUDA")]
    Cuda,
    /// UL to the lowest-path-loss station; greedy subchannels; FPC.
    #[serde(rename = "MinPL-G-FPC")]
    MinPlGFpc,
    #[serde(rename = "SPA-FPC")]
    SpaFpc,
    #[serde(rename = "SPA-SM-FPC")]
    SpaSmFpc,
    #[serde(rename = "SPA-SM-OPA")]
    SpaSmOpa,
}

impl SchemeId {
    pub const ALL: [SchemeId; 5] = [
        SchemeId::Cuda,
        SchemeId::MinPlGFpc,
        SchemeId::SpaFpc,
        SchemeId::SpaSmFpc,
        SchemeId::SpaSmOpa,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeId::Cuda => "CUDA",
            SchemeId::MinPlGFpc => "MinPL-G-FPC",
            SchemeId::SpaFpc => "SPA-FPC",
            SchemeId::SpaSmFpc => "SPA-SM-FPC",
            SchemeId::SpaSmOpa => "SPA-SM-OPA",
        }
    }

    pub fn uses_spa(self) -> bool {
        matches!(
            self,
            SchemeId::SpaFpc | SchemeId::SpaSmFpc | SchemeId::SpaSmOpa
        )
    }

    pub fn uses_swap(self) -> bool {
        matches!(self, SchemeId::SpaSmFpc | SchemeId::SpaSmOpa)
    }

    pub fn uses_opa(self) -> bool {
        self == SchemeId::SpaSmOpa
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_uppercase())
            .collect();
        SchemeId::ALL
            .into_iter()
            .find(|id| id.as_str().replace('-', "").to_ascii_uppercase() == norm)
            .ok_or_else(|| Error::Config(format!("unknown scheme {s:?}")))
    }
}

/// Association biases in dB, per station kind.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasConfig {
    /// Added to the RSRP of MBS / SBS in DL association.
    pub dl_mbs_db: f64,
    pub dl_sbs_db: f64,
    /// UL cell bias `W_m` in min-path-loss association.
    pub ul_mbs_db: f64,
    pub ul_sbs_db: f64,
}

impl BiasConfig {
    pub fn validate(&self) -> Result<()> {
        if [
            self.dl_mbs_db,
            self.dl_sbs_db,
            self.ul_mbs_db,
            self.ul_sbs_db,
        ]
        .iter()
        .all(|b| b.is_finite())
        {
            Ok(())
        } else {
            Err(Error::Config("biases must be finite".into()))
        }
    }

    fn dl(&self, kind: StationKind) -> f64 {
        match kind {
            StationKind::Mbs => self.dl_mbs_db,
            StationKind::Sbs => self.dl_sbs_db,
        }
    }

    fn ul(&self, kind: StationKind) -> f64 {
        match kind {
            StationKind::Mbs => self.ul_mbs_db,
            StationKind::Sbs => self.ul_sbs_db,
        }
    }
}

/// Index of the largest score; ties go to the lowest index.
fn argmax(scores: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, s) in scores.enumerate() {
        if s > best.1 {
            best = (i, s);
        }
    }
    best.0
}

/// Station with the largest biased DL reference power at device `k`, in dB.
pub fn associate_biased_rsrp(net: &Network, k: usize, bias: &BiasConfig) -> usize {
    argmax(net.stations.iter().map(|s| {
        s.max_tx_power_dbm - net.channels.pathloss_db(Direction::Dl, k, s.id) + bias.dl(s.kind)
    }))
}

/// Station maximizing `P_{k,m} W_m / PL_{k,m}`, with `P_{k,m}` the FPC power
/// toward `m` (`fpc[k][m]`, watts).
pub fn associate_min_pl(net: &Network, k: usize, fpc: &[Vec<f64>], bias: &BiasConfig) -> usize {
    argmax(net.stations.iter().map(|s| {
        watts_to_dbm(fpc[k][s.id]) + bias.ul(s.kind)
            - net.channels.pathloss_db(Direction::Ul, k, s.id)
    }))
}

/// Greedy subchannels inside station `m`'s cell: (device, subchannel) pairs
/// are taken by descending SNR, `power[i]` being the transmit power paired
/// with `members[i]`. Returns one entry per member; `None` when the cell
/// ran out of subchannels.
pub fn greedy_subchannels(
    net: &Network,
    dir: Direction,
    m: usize,
    members: &[usize],
    power: &[f64],
) -> Vec<Option<usize>> {
    let n_sub = net.n_sub();
    let mut pairs: Vec<(f64, usize, usize)> = members
        .iter()
        .enumerate()
        .flat_map(|(i, &k)| (0..n_sub).map(move |n| (i, k, n)))
        .map(|(i, k, n)| (power[i] * net.channels.gain(dir, k, m, n), i, n))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut out = vec![None; members.len()];
    let mut taken = vec![false; n_sub];
    let mut left = members.len().min(n_sub);
    for (_, i, n) in pairs {
        if left == 0 {
            break;
        }
        if out[i].is_none() && !taken[n] {
            out[i] = Some(n);
            taken[n] = true;
            left -= 1;
        }
    }
    out
}

/// Links from a station per device and greedy subchannels inside each cell.
/// `power(k, m)` is the transmit power on a `k`–`m` link.
pub fn greedy_links<F: Fn(usize, usize) -> f64>(
    net: &Network,
    dir: Direction,
    station_of: &[usize],
    power: F,
) -> Vec<Option<Link>> {
    let mut links = vec![None; station_of.len()];
    for m in 0..net.n_bs() {
        let members: Vec<usize> = (0..station_of.len())
            .filter(|&k| station_of[k] == m)
            .collect();
        let p: Vec<f64> = members.iter().map(|&k| power(k, m)).collect();
        for (i, n) in greedy_subchannels(net, dir, m, &members, &p)
            .into_iter()
            .enumerate()
        {
            links[members[i]] = n.map(|n| Link::new(m, n));
        }
    }
    links
}

/// Equal split of each station's maximum power over its subchannels, in
/// watts, indexed `[station][subchannel]`.
pub fn dl_power(net: &Network) -> Vec<Vec<f64>> {
    net.stations
        .iter()
        .map(|s| {
            vec![crate::units::dbm_to_watts(s.max_tx_power_dbm) / net.n_sub() as f64; net.n_sub()]
        })
        .collect()
}

/// DL side common to every scheme: biased RSRP association, greedy
/// subchannels and equal power.
pub fn allocate_dl(net: &Network, bias: &BiasConfig) -> (Vec<Option<Link>>, Vec<Vec<f64>>) {
    let station_of: Vec<usize> = (0..net.n_md())
        .map(|k| associate_biased_rsrp(net, k, bias))
        .collect();
    let power = dl_power(net);
    let links = greedy_links(net, Direction::Dl, &station_of, |_, m| power[m][0]);
    (links, power)
}
