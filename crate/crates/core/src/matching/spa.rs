use std::collections::VecDeque;

use super::{Capacities, Matching, PreferenceProfile, ProjectId};

#[derive(Debug, Clone)]
pub struct SpaOutcome {
    pub matching: Matching,
    /// Devices left unassigned with exhausted lists.
    pub unassigned: Vec<usize>,
    /// Number of proposals made.
    pub proposals: usize,
}

/// Device-optimal stable matching for `profile` under `caps`.
pub fn spa_match(profile: &PreferenceProfile, caps: &Capacities) -> SpaOutcome {
    spa_match_traced(profile, caps, |_| {})
}

/// Same as [`spa_match`], calling `observe` after every provisional
/// assignment and after every rejection.
pub fn spa_match_traced<F: FnMut(&Matching)>(
    profile: &PreferenceProfile,
    caps: &Capacities,
    mut observe: F,
) -> SpaOutcome {
    let n_md = profile.n_md();
    let n_bs = profile.n_stations;
    let n_sub = profile.n_subchannels;
    let n_proj = profile.n_projects();
    assert_eq!(caps.station.len(), n_bs);

    let rank = profile.bs_rank_table();
    // acceptable[k][c]: still on k's list.
    let mut acceptable = vec![vec![false; n_proj]; n_md];
    for (k, list) in profile.md_prefs.iter().enumerate() {
        for &c in list {
            acceptable[k][c] = true;
        }
    }
    let mut head = vec![0usize; n_md];
    let mut matching = Matching::empty(n_md, n_bs, n_sub);
    let mut free: VecDeque<usize> = (0..n_md).collect();
    let mut proposals = 0;

    let worst_on_project = |matching: &Matching, c: ProjectId| matching.of_project(c);
    let worst_at_station = |matching: &Matching, m: usize| {
        matching
            .station_members(m)
            .into_iter()
            .max_by_key(|&k| rank[m][k])
    };

    while let Some(k) = free.pop_front() {
        let list = &profile.md_prefs[k];
        while head[k] < list.len() && !acceptable[k][list[head[k]]] {
            head[k] += 1;
        }
        let Some(&c) = list.get(head[k]) else {
            continue;
        };
        let m = c / n_sub;
        proposals += 1;

        // Provisional assignment. A project holds one device, so an
        // occupied project becomes over-subscribed and rejects its worse
        // applicant.
        match matching.of_project(c) {
            Some(incumbent) => {
                let (keep, reject) = if rank[m][k] < rank[m][incumbent] {
                    (k, incumbent)
                } else {
                    (incumbent, k)
                };
                if keep == k {
                    matching.remove(incumbent);
                    matching.insert(k, c);
                }
                observe(&matching);
                free.push_back(reject);
            }
            None => {
                matching.insert(k, c);
                if matching.station_load(m) > caps.station[m] {
                    let r = worst_at_station(&matching, m).expect("station has members");
                    matching.remove(r);
                    free.push_back(r);
                }
                observe(&matching);
            }
        }

        if let Some(w) = worst_on_project(&matching, c) {
            // Project full: drop every successor of its occupant on U_m^n.
            for &t in &profile.bs_prefs[m] {
                if rank[m][t] > rank[m][w] {
                    acceptable[t][c] = false;
                }
            }
        }
        if matching.station_load(m) == caps.station[m] {
            let w = worst_at_station(&matching, m).expect("full station has members");
            for &t in &profile.bs_prefs[m] {
                if rank[m][t] > rank[m][w] {
                    for n in 0..n_sub {
                        acceptable[t][m * n_sub + n] = false;
                    }
                }
            }
        }
    }

    let unassigned = (0..n_md).filter(|&k| matching.of_md(k).is_none()).collect();
    SpaOutcome {
        matching,
        unassigned,
        proposals,
    }
}

/// Whether `(k, c)` blocks `matching` under the original profile:
///
/// (a) `k` finds `c` acceptable; (b) `k` is unassigned or prefers `c` to its
/// current project; and (c) one of
/// (c1) `c` and its station are both under-subscribed,
/// (c2) `c` is under-subscribed, the station is full, and `k` is already a
/// member or is preferred to the station's worst member,
/// (c3) `c` is full and the station prefers `k` to its occupant.
pub fn is_blocking_pair(
    k: usize,
    c: ProjectId,
    matching: &Matching,
    profile: &PreferenceProfile,
    caps: &Capacities,
) -> bool {
    if matching.contains(k, c) {
        return false;
    }
    let Some(rank_c) = profile.md_rank(k, c) else {
        return false;
    };
    if let Some(cur) = matching.of_md(k) {
        match profile.md_rank(k, cur) {
            Some(rank_cur) if rank_cur <= rank_c => return false,
            _ => {}
        }
    }
    let m = profile.station_of(c);
    let Some(rank_k) = profile.bs_rank(m, k) else {
        return false;
    };
    let prefers_k_to = |other: usize| profile.bs_rank(m, other).is_none_or(|r| rank_k < r);
    let load = matching.station_load(m);
    match matching.of_project(c) {
        None if load < caps.station[m] => true,
        None if load == caps.station[m] => {
            let members = matching.station_members(m);
            members.contains(&k)
                || members
                    .iter()
                    .copied()
                    .max_by_key(|&t| profile.bs_rank(m, t).unwrap_or(usize::MAX))
                    .is_some_and(prefers_k_to)
        }
        None => false,
        Some(occupant) => prefers_k_to(occupant),
    }
}
