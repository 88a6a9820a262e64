use serde::Serialize;

use crate::mec_model::{shannon_rate, Link};
use crate::topology::{Direction, Network};

/// Relative margin a swap must improve the affected latency sum by.
const STRICT_DECREASE: f64 = 1e-12;

/// Channels, transmit powers and link constants a swap is evaluated under.
#[derive(Debug, Clone, Copy)]
pub struct SwapContext<'a> {
    pub net: &'a Network,
    pub ul_power: &'a [f64],
}

impl SwapContext<'_> {
    fn rate(&self, links: &[Option<Link>], users: &[usize], j: usize, n: usize) -> f64 {
        let m = links[j].expect("occupant has a link").station;
        let ch = &self.net.channels;
        let interference: f64 = users
            .iter()
            .filter(|&&i| i != j)
            .map(|&i| self.ul_power[i] * ch.gain(Direction::Ul, i, m, n))
            .sum();
        shannon_rate(
            self.net.cfg.subchannel_bandwidth(Direction::Ul),
            self.ul_power[j] * ch.gain(Direction::Ul, j, m, n),
            interference,
            self.net.cfg.noise_power(Direction::Ul),
        )
    }

    fn latency(&self, links: &[Option<Link>], users: &[usize], j: usize, n: usize) -> f64 {
        self.net.devices[j].task.input_bits / self.rate(links, users, j, n)
    }

    fn group_latency(&self, links: &[Option<Link>], users: &[usize], n: usize) -> f64 {
        users
            .iter()
            .map(|&j| self.latency(links, users, j, n))
            .sum()
    }
}

/// One executed swap. `partner` is the device that moved the other way,
/// `None` for a move onto a vacant subchannel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwapRecord {
    pub device: usize,
    pub partner: Option<usize>,
    pub station: usize,
    pub from: usize,
    pub to: usize,
    /// UL latency summed over every device on both subchannels.
    pub affected_before: f64,
    pub affected_after: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SwapReport {
    pub swaps: Vec<SwapRecord>,
    pub passes: usize,
}

fn occupancy(links: &[Option<Link>], n_sub: usize) -> Vec<Vec<usize>> {
    let mut occ = vec![Vec::new(); n_sub];
    for (k, l) in links.iter().enumerate() {
        if let Some(l) = l {
            occ[l.subchannel].push(k);
        }
    }
    occ
}

struct Candidate {
    partner: Option<usize>,
    before: f64,
    after: f64,
}

/// Evaluates whether device `k` and subchannel `to` of its own station form
/// a swap-blocking pair, given per-subchannel occupancy `occ`.
fn evaluate(
    ctx: &SwapContext<'_>,
    links: &[Option<Link>],
    occ: &[Vec<usize>],
    k: usize,
    to: usize,
) -> Option<Candidate> {
    let Link {
        station: m,
        subchannel: from,
    } = links[k]?;
    if to == from {
        return None;
    }
    let partner = occ[to]
        .iter()
        .copied()
        .find(|&j| links[j].map(|l| l.station) == Some(m));

    let mut new_from: Vec<usize> = occ[from].iter().copied().filter(|&j| j != k).collect();
    let mut new_to: Vec<usize> = occ[to]
        .iter()
        .copied()
        .filter(|&j| Some(j) != partner)
        .collect();
    new_to.push(k);
    if let Some(p) = partner {
        new_from.push(p);
    }
    let mut moved = links.to_vec();
    moved[k] = Some(Link::new(m, to));
    if let Some(p) = partner {
        moved[p] = Some(Link::new(m, from));
    }

    // (a) k gains rate on the target subchannel.
    let k_before = ctx.rate(links, &occ[from], k, from);
    let k_after = ctx.rate(&moved, &new_to, k, to);
    if !(k_after > k_before) {
        return None;
    }
    // (b) the occupant gains rate too and the pair's UL latency drops.
    if let Some(p) = partner {
        let p_before = ctx.rate(links, &occ[to], p, to);
        let p_after = ctx.rate(&moved, &new_from, p, from);
        if !(p_after > p_before) {
            return None;
        }
        let bits = |j: usize| ctx.net.devices[j].task.input_bits;
        let pair_before = bits(k) / k_before + bits(p) / p_before;
        let pair_after = bits(k) / k_after + bits(p) / p_after;
        if !(pair_after < pair_before) {
            return None;
        }
    }
    // (c) latency over every device on both subchannels drops.
    let before =
        ctx.group_latency(links, &occ[from], from) + ctx.group_latency(links, &occ[to], to);
    let after = ctx.group_latency(&moved, &new_from, from) + ctx.group_latency(&moved, &new_to, to);
    if !(after < before * (1.0 - STRICT_DECREASE)) {
        return None;
    }
    Some(Candidate {
        partner,
        before,
        after,
    })
}

/// Whether device `k` and subchannel `to` at `k`'s station swap-block.
pub fn find_swap_block(ctx: &SwapContext<'_>, links: &[Option<Link>], k: usize, to: usize) -> bool {
    let occ = occupancy(links, ctx.net.n_sub());
    evaluate(ctx, links, &occ, k, to).is_some()
}

/// Swaps subchannels between devices of the same station until a full pass
/// over devices finds no swap-blocking pair.
///
/// Devices are visited by ascending id; each tries target subchannels in
/// decreasing order of its own rate gain and executes the first that
/// swap-blocks.
pub fn swap_match(ctx: &SwapContext<'_>, links: &mut [Option<Link>]) -> SwapReport {
    let n_sub = ctx.net.n_sub();
    let mut occ = occupancy(links, n_sub);
    let mut report = SwapReport::default();
    loop {
        report.passes += 1;
        let mut swapped = false;
        for k in 0..links.len() {
            let Some(Link {
                station: m,
                subchannel: from,
            }) = links[k]
            else {
                continue;
            };
            let current = ctx.rate(links, &occ[from], k, from);
            let mut targets: Vec<(f64, usize)> = (0..n_sub)
                .filter(|&to| to != from)
                .filter_map(|to| {
                    let mut users: Vec<usize> = occ[to]
                        .iter()
                        .copied()
                        .filter(|&j| links[j].map(|l| l.station) != Some(m))
                        .collect();
                    users.push(k);
                    let mut moved = links.to_vec();
                    moved[k] = Some(Link::new(m, to));
                    let gain = ctx.rate(&moved, &users, k, to) - current;
                    (gain > 0.0).then_some((gain, to))
                })
                .collect();
            targets.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

            for (_, to) in targets {
                if let Some(c) = evaluate(ctx, links, &occ, k, to) {
                    occ[from].retain(|&j| j != k);
                    occ[to].push(k);
                    links[k] = Some(Link::new(m, to));
                    if let Some(p) = c.partner {
                        occ[to].retain(|&j| j != p);
                        occ[from].push(p);
                        links[p] = Some(Link::new(m, from));
                    }
                    report.swaps.push(SwapRecord {
                        device: k,
                        partner: c.partner,
                        station: m,
                        from,
                        to,
                        affected_before: c.before,
                        affected_after: c.after,
                    });
                    swapped = true;
                    break;
                }
            }
        }
        if !swapped {
            break;
        }
    }
    report
}

/// Exhaustively checks every (device, other subchannel of its station) pair;
/// true when none swap-blocks.
pub fn certify_exchange_stable(ctx: &SwapContext<'_>, links: &[Option<Link>]) -> bool {
    let occ = occupancy(links, ctx.net.n_sub());
    (0..links.len()).all(|k| {
        links[k].is_none()
            || (0..ctx.net.n_sub()).all(|to| evaluate(ctx, links, &occ, k, to).is_none())
    })
}

/// Gives every unassigned device a link: the lowest-path-loss station with
/// a free subchannel, on its least-interfered free subchannel. `fpc[k][m]`
/// is the power device `k` would use toward station `m`. Returns the devices
/// placed this way.
pub fn complete_assignment(
    net: &Network,
    links: &mut [Option<Link>],
    fpc: &[Vec<f64>],
) -> Vec<usize> {
    let n_sub = net.n_sub();
    let ch = &net.channels;
    let mut placed = Vec::new();
    for k in 0..links.len() {
        if links[k].is_some() {
            continue;
        }
        let mut stations: Vec<usize> = (0..net.n_bs()).collect();
        stations.sort_by(|&a, &b| {
            ch.pathloss_db(Direction::Ul, k, a)
                .total_cmp(&ch.pathloss_db(Direction::Ul, k, b))
                .then(a.cmp(&b))
        });
        for m in stations {
            let mut used = vec![false; n_sub];
            for l in links.iter().flatten().filter(|l| l.station == m) {
                used[l.subchannel] = true;
            }
            let best = (0..n_sub).filter(|&n| !used[n]).min_by(|&a, &b| {
                let interference = |n: usize| -> f64 {
                    links
                        .iter()
                        .enumerate()
                        .filter_map(|(j, l)| l.filter(|l| l.subchannel == n).map(|l| (j, l)))
                        .map(|(j, l)| fpc[j][l.station] * ch.gain(Direction::Ul, j, m, n))
                        .sum()
                };
                interference(a).total_cmp(&interference(b)).then(a.cmp(&b))
            });
            if let Some(n) = best {
                links[k] = Some(Link::new(m, n));
                placed.push(k);
                break;
            }
        }
    }
    placed
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mec_model::sum_ul_latency;
    use crate::testutil::tiny_network;
    use crate::topology::Direction::Ul;

    #[test]
    fn isolated_devices_on_best_channels_do_not_swap() {
        let mut net = tiny_network(&[vec![1e-9, 1e-12], vec![1e-12, 1e-9]], 2);
        net.channels.set_gain(Ul, 0, 0, 0, 2e-9);
        net.channels.set_gain(Ul, 1, 1, 1, 2e-9);
        let power = vec![0.1, 0.1];
        let ctx = SwapContext {
            net: &net,
            ul_power: &power,
        };
        let mut links = vec![Some(Link::new(0, 0)), Some(Link::new(1, 1))];
        let before = links.clone();
        let report = swap_match(&ctx, &mut links);
        assert!(report.swaps.is_empty());
        assert_eq!(links, before);
        assert!(certify_exchange_stable(&ctx, &links));
    }

    #[test]
    fn vacant_move_touches_only_the_mover() {
        // One device, two subchannels, the second much better.
        let mut net = tiny_network(&[vec![1e-10], vec![1e-10]], 2);
        net.channels.set_gain(Ul, 0, 0, 1, 1e-9);
        let power = vec![0.1, 0.1];
        let ctx = SwapContext {
            net: &net,
            ul_power: &power,
        };
        let mut links = vec![Some(Link::new(0, 0)), None];
        assert!(!certify_exchange_stable(&ctx, &links));
        let report = swap_match(&ctx, &mut links);
        assert_eq!(report.swaps.len(), 1);
        assert_eq!(report.swaps[0].partner, None);
        assert_eq!(links, vec![Some(Link::new(0, 1)), None]);
        assert!(certify_exchange_stable(&ctx, &links));
    }

    #[test]
    fn swap_reduces_interference_in_two_cells() {
        // Cell 0 hosts devices 0 and 1 on subchannels 0 and 1. Device 2 in
        // cell 1 sits on subchannel 0 and is loud toward station 0 there.
        // Device 0 is near station 1 (interferes there), device 1 is not.
        // Swapping devices 0 and 1 relieves both cells.
        let mut net = tiny_network(
            &[vec![1e-9, 1e-11], vec![1e-9, 1e-13], vec![1e-11, 1e-9]],
            2,
        );
        // Station 0 hears device 2 on subchannel 0. Device 1 fades on
        // subchannel 1 and is strong on subchannel 0.
        net.channels.set_gain(Ul, 2, 0, 0, 5e-10);
        net.channels.set_gain(Ul, 2, 0, 1, 1e-13);
        net.channels.set_gain(Ul, 1, 0, 1, 1e-13);
        net.channels.set_gain(Ul, 1, 0, 0, 2e-9);
        let power = vec![0.1; 3];
        let ctx = SwapContext {
            net: &net,
            ul_power: &power,
        };
        let mut links = vec![
            Some(Link::new(0, 0)),
            Some(Link::new(0, 1)),
            Some(Link::new(1, 0)),
        ];
        let before = sum_ul_latency(
            &net,
            &crate::mec_model::Assignment {
                ul: links.clone(),
                dl: vec![],
            },
            &power,
        );
        assert!(!certify_exchange_stable(&ctx, &links));
        let report = swap_match(&ctx, &mut links);
        assert_eq!(report.swaps.len(), 1);
        assert_eq!(report.swaps[0].partner, Some(1));
        assert_eq!(links[0], Some(Link::new(0, 1)));
        assert_eq!(links[1], Some(Link::new(0, 0)));
        let after = sum_ul_latency(
            &net,
            &crate::mec_model::Assignment {
                ul: links.clone(),
                dl: vec![],
            },
            &power,
        );
        assert!(after < before);
        assert!(certify_exchange_stable(&ctx, &links));
    }

    #[test]
    fn empty_matching_is_stable() {
        let net = tiny_network(&[vec![1e-9]], 3);
        let power = vec![0.1];
        let ctx = SwapContext {
            net: &net,
            ul_power: &power,
        };
        assert!(certify_exchange_stable(&ctx, &[None]));
    }

    #[test]
    fn fallback_uses_lowest_pathloss_station_with_room() {
        let net = tiny_network(&[vec![1e-9, 1e-8], vec![1e-9, 1e-8]], 1);
        let fpc = vec![vec![0.1; 2]; 2];
        let mut links = vec![None, None];
        let placed = complete_assignment(&net, &mut links, &fpc);
        assert_eq!(placed, vec![0, 1]);
        assert_eq!(links[0], Some(Link::new(1, 0)));
        // Station 1 has a single subchannel, so device 1 goes to station 0.
        assert_eq!(links[1], Some(Link::new(0, 0)));
    }
}
