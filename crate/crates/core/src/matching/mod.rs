//! Joint UL cell association and subchannel allocation as a three-party
//! student-project allocation: devices propose to (station, subchannel)
//! projects, stations act as lecturers with a load capacity, and every
//! project holds at most one device.
//!
//! [`spa_match`] produces the device-optimal stable matching for a fixed
//! preference profile. Because preferences are built without interference,
//! [`swap_match`] then trades subchannels between devices of the same
//! station until no swap-blocking pair remains.

mod preferences;
mod spa;
mod swap;

pub use preferences::{build_preferences, Capacities, PreferenceProfile};
pub use spa::{is_blocking_pair, spa_match, spa_match_traced, SpaOutcome};
pub use swap::{
    certify_exchange_stable, complete_assignment, find_swap_block, swap_match, SwapContext,
    SwapRecord, SwapReport,
};

use crate::mec_model::Link;

/// Project index: subchannel `n` of station `m` is `m * n_sub + n`.
pub type ProjectId = usize;

/// A set of (device, project) pairs with the derived per-device,
/// per-project and per-station views.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matching {
    n_sub: usize,
    by_md: Vec<Option<ProjectId>>,
    by_project: Vec<Option<usize>>,
    station_load: Vec<usize>,
}

impl Matching {
    pub fn empty(n_md: usize, n_bs: usize, n_sub: usize) -> Self {
        Self {
            n_sub,
            by_md: vec![None; n_md],
            by_project: vec![None; n_bs * n_sub],
            station_load: vec![0; n_bs],
        }
    }

    pub fn n_md(&self) -> usize {
        self.by_md.len()
    }

    pub fn n_bs(&self) -> usize {
        self.station_load.len()
    }

    pub fn n_sub(&self) -> usize {
        self.n_sub
    }

    pub fn station_of(&self, c: ProjectId) -> usize {
        c / self.n_sub
    }

    pub fn project(&self, m: usize, n: usize) -> ProjectId {
        m * self.n_sub + n
    }

    /// M(u_k).
    pub fn of_md(&self, k: usize) -> Option<ProjectId> {
        self.by_md[k]
    }

    /// M(c_n).
    pub fn of_project(&self, c: ProjectId) -> Option<usize> {
        self.by_project[c]
    }

    /// |M(s_m)|.
    pub fn station_load(&self, m: usize) -> usize {
        self.station_load[m]
    }

    /// M(s_m), ascending device id.
    pub fn station_members(&self, m: usize) -> Vec<usize> {
        (m * self.n_sub..(m + 1) * self.n_sub)
            .filter_map(|c| self.by_project[c])
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn contains(&self, k: usize, c: ProjectId) -> bool {
        self.by_md[k] == Some(c)
    }

    pub fn insert(&mut self, k: usize, c: ProjectId) {
        assert!(self.by_md[k].is_none(), "device {k} already assigned");
        assert!(self.by_project[c].is_none(), "project {c} already occupied");
        self.by_md[k] = Some(c);
        self.by_project[c] = Some(k);
        self.station_load[c / self.n_sub] += 1;
    }

    pub fn remove(&mut self, k: usize) -> Option<ProjectId> {
        let c = self.by_md[k].take()?;
        self.by_project[c] = None;
        self.station_load[c / self.n_sub] -= 1;
        Some(c)
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, ProjectId)> + '_ {
        self.by_md
            .iter()
            .enumerate()
            .filter_map(|(k, c)| c.map(|c| (k, c)))
    }

    pub fn to_links(&self) -> Vec<Option<Link>> {
        self.by_md
            .iter()
            .map(|c| c.map(|c| Link::new(c / self.n_sub, c % self.n_sub)))
            .collect()
    }

    pub fn from_links(links: &[Option<Link>], n_bs: usize, n_sub: usize) -> Self {
        let mut m = Self::empty(links.len(), n_bs, n_sub);
        for (k, l) in links.iter().enumerate() {
            if let Some(l) = l {
                m.insert(k, l.station * n_sub + l.subchannel);
            }
        }
        m
    }
}
