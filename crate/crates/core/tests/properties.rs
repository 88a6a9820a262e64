use proptest::prelude::*;

use dude_mec::matching::{
    build_preferences, certify_exchange_stable, is_blocking_pair, spa_match, swap_match,
    Capacities, SwapContext,
};
use dude_mec::mec_model::{
    jain_index, rate_percentiles, shannon_rate, sum_ul_latency, Assignment, Link,
};
use dude_mec::power_opt::sca::bound_coefficients;
use dude_mec::power_opt::{
    fpc_for_links, fpc_matrix, solve_optimal_power, GroupProblem, PowerProblem, SolverParams,
};
use dude_mec::topology::{Direction, Network};
use dude_mec::units::{dbm_to_watts, watts_to_dbm};

/// Network with `gains[k][m][n]` on both directions.
fn network(gains: &[Vec<Vec<f64>>]) -> Network {
    let n_sub = gains[0][0].len();
    let flat: Vec<Vec<f64>> = gains
        .iter()
        .map(|row| row.iter().map(|g| g[0]).collect())
        .collect();
    let mut net = Network::from_gain_matrix(&flat, n_sub).unwrap();
    for (k, row) in gains.iter().enumerate() {
        for (m, per_sub) in row.iter().enumerate() {
            for (n, &g) in per_sub.iter().enumerate() {
                net.channels.set_gain(Direction::Ul, k, m, n, g);
                net.channels.set_gain(Direction::Dl, k, m, n, g);
            }
        }
    }
    net
}

fn gains(
    max_md: usize,
    max_bs: usize,
    max_sub: usize,
) -> impl Strategy<Value = Vec<Vec<Vec<f64>>>> {
    (1..=max_md, 1..=max_bs, 1..=max_sub).prop_flat_map(|(k, m, n)| {
        prop::collection::vec(
            prop::collection::vec(
                prop::collection::vec((-13.0f64..-8.0).prop_map(|e| 10f64.powf(e)), n),
                m,
            ),
            k,
        )
    })
}

fn ul_latency(net: &Network, links: &[Option<Link>], power: &[f64]) -> f64 {
    let a = Assignment {
        ul: links.to_vec(),
        dl: vec![None; links.len()],
    };
    sum_ul_latency(net, &a, power)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rate_bound_is_below_and_tight(sinr in 1e-4f64..1e4, other in 1e-4f64..1e4) {
        let (mu1, mu2) = bound_coefficients(sinr);
        let at = |g: f64| mu1 * g.log2() + mu2;
        prop_assert!((at(sinr) - (1.0 + sinr).log2()).abs() <= 1e-12 * (1.0 + sinr).log2().max(1.0));
        prop_assert!(at(other) <= (1.0 + other).log2() + 1e-12);
    }

    #[test]
    fn jain_index_is_bounded_and_scale_free(v in prop::collection::vec(0.01f64..100.0, 1..30), c in 0.1f64..10.0) {
        let j = jain_index(&v).unwrap();
        let n = v.len() as f64;
        prop_assert!(j >= 1.0 / n - 1e-12 && j <= 1.0 + 1e-12);
        let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
        prop_assert!((jain_index(&scaled).unwrap() - j).abs() <= 1e-12);
    }

    #[test]
    fn percentiles_are_ordered_members(v in prop::collection::vec(0.0f64..1e7, 1..50)) {
        let p = rate_percentiles(&v).unwrap().as_array();
        prop_assert!(p.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(p.iter().all(|x| v.contains(x)));
    }

    #[test]
    fn rate_rises_with_signal_and_falls_with_interference(s in 1e-15f64..1e-9, i in 0.0f64..1e-9, f in 1.01f64..10.0) {
        let noise = 8e-16;
        let r = shannon_rate(2e5, s, i, noise);
        prop_assert!(shannon_rate(2e5, s * f, i, noise) > r);
        prop_assert!(shannon_rate(2e5, s, i * f + 1e-18, noise) < r);
    }

    #[test]
    fn dbm_round_trip(dbm in -120.0f64..60.0) {
        prop_assert!((watts_to_dbm(dbm_to_watts(dbm)) - dbm).abs() < 1e-9);
    }

    #[test]
    fn spa_is_stable_and_feasible(g in gains(6, 3, 3)) {
        let net = network(&g);
        let fpc = fpc_matrix(&net);
        let profile = build_preferences(&net, &fpc, 2);
        prop_assert!(profile.validate().is_ok());
        let caps = Capacities::for_network(&net);
        let out = spa_match(&profile, &caps);
        for m in 0..net.n_bs() {
            prop_assert!(out.matching.station_load(m) <= caps.station[m]);
        }
        for k in 0..net.n_md() {
            for &c in &profile.md_prefs[k] {
                prop_assert!(!is_blocking_pair(k, c, &out.matching, &profile, &caps));
            }
        }
    }

    #[test]
    fn swap_matching_never_raises_latency(g in gains(6, 2, 4)) {
        let net = network(&g);
        let n_sub = net.n_sub();
        // Round-robin start: device k on station k % M, subchannel k / M.
        let links: Vec<Option<Link>> = (0..net.n_md())
            .map(|k| {
                let (m, n) = (k % net.n_bs(), k / net.n_bs());
                (n < n_sub).then(|| Link::new(m, n))
            })
            .collect();
        let power = fpc_for_links(&net, &links);
        let ctx = SwapContext { net: &net, ul_power: &power };
        let mut after = links.clone();
        let report = swap_match(&ctx, &mut after);
        prop_assert!(certify_exchange_stable(&ctx, &after));
        let (b, a) = (ul_latency(&net, &links, &power), ul_latency(&net, &after, &power));
        let improved = if report.swaps.is_empty() { a == b } else { a < b };
        prop_assert!(improved, "latency {} -> {}", b, a);
        for (x, y) in links.iter().zip(&after) {
            prop_assert_eq!(x.map(|l| l.station), y.map(|l| l.station));
        }
    }

    #[test]
    fn optimized_powers_stay_in_box_and_beat_the_start(
        d in prop::collection::vec(-12.0f64..-9.0, 3),
        c in prop::collection::vec(-14.0f64..-10.0, 6),
        p0 in prop::collection::vec(-6.0f64..-0.7, 3),
    ) {
        let e = |x: f64| 10f64.powf(x);
        let gain = vec![
            vec![e(d[0]), e(c[0]), e(c[1])],
            vec![e(c[2]), e(d[1]), e(c[3])],
            vec![e(c[4]), e(c[5]), e(d[2])],
        ];
        let g = GroupProblem::new(vec![3e6, 6e6, 3e6], &gain, 8e-16, 2e5, vec![2e-7; 3], vec![0.2; 3]).unwrap();
        let problem = PowerProblem::single(g);
        let start: Vec<f64> = p0.iter().map(|&x| e(x)).collect();
        let power = match solve_optimal_power(&problem, &start, &SolverParams::default()) {
            Ok(s) => s.power,
            Err(dude_mec::power_opt::SolverError::Stalled { best_power, .. }) => best_power,
            Err(err) => return Err(TestCaseError::fail(err.to_string())),
        };
        prop_assert!(power.iter().all(|&p| (2e-7 * (1.0 - 1e-12)..=0.2 * (1.0 + 1e-12)).contains(&p)));
        prop_assert!(problem.latency_sum(&power) <= problem.latency_sum(&start) * (1.0 + 1e-9));
    }
}
