//! Whole-run properties of the simulator, checked against an independent
//! cycle-by-cycle recurrence of the halo-exchange timing.

use idlewave::app::Boundary;
use idlewave::engine::{simulate_detailed, Engine};
use idlewave::network::{transfer_time, NetworkParams, Topology};
use idlewave::noise::{compute_cost, jitter_stream, InjectedDelay, NoiseClass, SpeedGroup};
use idlewave::{simulate, Cycles, Direction, IdleRecord, Rank, SimConfig};
use proptest::prelude::*;

/// Records predicted by the blocking-exchange recurrence. Blackouts and NIC
/// contention are not modelled here.
fn recurrence(cfg: &SimConfig) -> Vec<(Rank, u64, Direction, Cycles, Cycles)> {
    let cfg = cfg.resolved();
    let topo = cfg.topology;
    let net = cfg.network;
    let n = topo.ranks as usize;
    let periodic = cfg.app.boundary == Boundary::Periodic;
    let left = |r: usize| if periodic { Some((r + n - 1) % n) } else { r.checked_sub(1) };
    let right = |r: usize| if periodic { Some((r + 1) % n) } else { (r + 1 < n).then_some(r + 1) };
    let hop = |a: usize, b: usize| {
        let class = topo.locality(a as Rank, b as Rank).unwrap();
        transfer_time(cfg.app.message_bytes, class, &net) + net.send_overhead
    };
    let mut rngs: Vec<_> = (0..n).map(|r| jitter_stream(cfg.seed, r as Rank)).collect();
    let base = cfg.app.base_compute_cost();

    let mut start = vec![0; n];
    let mut out = Vec::new();
    for k in 0..cfg.app.cycles {
        // (time the leftward send completes, time the rightward send completes)
        let mut sends = vec![(0, 0); n];
        for r in 0..n {
            let cost = compute_cost(r as Rank, base, &cfg.noise, &mut rngs[r]) + cfg.noise.injected_delay(r as Rank, k);
            let mut t = start[r] + cost;
            if left(r).is_some() {
                t += net.send_overhead;
                sends[r].0 = t;
            }
            if right(r).is_some() {
                t += net.send_overhead;
                sends[r].1 = t;
            }
            start[r] = t;
        }
        for r in 0..n {
            let mut t = start[r];
            if let Some(l) = left(r) {
                let arrive = sends[l].1 + hop(l, r);
                out.push((r as Rank, k, Direction::Left, t, t.max(arrive)));
                t = t.max(arrive);
            }
            if let Some(rr) = right(r) {
                let arrive = sends[rr].0 + hop(rr, r);
                out.push((r as Rank, k, Direction::Right, t, t.max(arrive)));
                t = t.max(arrive);
            }
            start[r] = t;
        }
    }
    out.sort_by_key(|&(r, k, d, s, _)| (s, r, k, d));
    out
}

fn flatten(records: &[IdleRecord]) -> Vec<(Rank, u64, Direction, Cycles, Cycles)> {
    let mut v: Vec<_> = records
        .iter()
        .map(|r| (r.rank, r.cycle, r.dir, r.wait_start, r.wait_end))
        .collect();
    v.sort_by_key(|&(r, k, d, s, _)| (s, r, k, d));
    v
}

fn small_config(ranks: u32, cycles: u64, compute: u64) -> SimConfig {
    let mut c = SimConfig::new(ranks, cycles, 3);
    c.app.grid_points_per_rank = compute;
    c.network = NetworkParams {
        latency_intra_socket: 50,
        latency_inter_socket: 80,
        latency_inter_node: 200,
        bandwidth_cost: 0,
        send_overhead: 10,
        nic_service: 30,
        nic_contention: false,
    };
    c
}

#[test]
fn three_rank_hand_trace() {
    // C=100, o=10, L=50; rank 0 is held up by 500 cycles in cycle 0.
    let mut c = small_config(3, 2, 100);
    c.noise.injected_delays.push(InjectedDelay {
        rank: 0,
        cycle: 0,
        duration: 500,
    });
    let got = flatten(simulate(&c).unwrap().records());
    use Direction::*;
    let mut want = vec![
        (0, 0, Right, 610, 610),
        (1, 0, Left, 120, 670),
        (1, 0, Right, 670, 670),
        (2, 0, Left, 110, 180),
        (0, 1, Right, 720, 840),
        (1, 1, Left, 790, 790),
        (1, 1, Right, 790, 790),
        (2, 1, Left, 290, 850),
    ];
    want.sort_by_key(|&(r, k, d, s, _)| (s, r, k, d));
    assert_eq!(got, want);
    assert_eq!(got, recurrence(&c));
}

#[test]
fn fig1_staircase_follows_recurrence() {
    let mut c = SimConfig::new(7, 20, 1);
    c.noise.injected_delays.push(InjectedDelay {
        rank: 0,
        cycle: 3,
        duration: 10_500_000,
    });
    let trace = simulate(&c).unwrap();
    assert_eq!(flatten(trace.records()), recurrence(&c));

    let long: Vec<&IdleRecord> = trace.records().iter().filter(|r| r.duration() >= 1_000_000).collect();
    assert_eq!(long.iter().map(|r| r.rank).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5, 6]);
    // A rightward hop costs compute, two sends, latency and the receive overhead.
    let n = c.network;
    let hop = c.app.base_compute_cost() + 3 * n.send_overhead + n.latency_intra_socket + n.bandwidth_cost * c.app.message_bytes;
    for w in long.windows(2) {
        let gap = w[1].wait_start - w[0].wait_start;
        assert!(gap.abs_diff(hop) <= hop / 1000, "gap {gap} vs {hop}");
    }
}

#[test]
fn zero_noise_ring_is_steady_after_first_cycle() {
    let c = small_config(6, 12, 1000);
    let mut c = c;
    c.app.boundary = Boundary::Periodic;
    let trace = simulate(&c).unwrap();
    for dir in [Direction::Left, Direction::Right] {
        let idles: Vec<Cycles> = trace
            .records()
            .iter()
            .filter(|r| r.dir == dir && r.cycle >= 1)
            .map(|r| r.duration())
            .collect();
        assert!(idles.windows(2).all(|w| w[0] == w[1]), "{dir}: {idles:?}");
    }
}

#[test]
fn nic_busy_time_matches_inter_node_messages() {
    let mut c = small_config(12, 7, 500);
    c.topology = Topology::new(12, 2, 2);
    c.network.nic_contention = true;
    let res = simulate_detailed(&c).unwrap();
    // 3 nodes, 2 boundaries, 2 messages per boundary per cycle
    let messages: u64 = res.nic_served.iter().sum();
    assert_eq!(messages, 7 * 2 * 2);
    assert_eq!(messages * c.network.nic_service, 7 * 4 * 30);
}

#[test]
fn contention_raises_idle_next_to_node_boundaries() {
    let mut c = SimConfig::new(128, 100, 1);
    c.preset = Some(idlewave::Preset::Pal);
    let res = simulate_detailed(&c).unwrap();
    let rpn = 32;
    let mean = |sel: &dyn Fn(u32) -> bool| {
        let v: Vec<f64> = (0..128).filter(|&r| sel(r)).map(|r| res.accounts[r as usize].idle as f64).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let boundary = mean(&|r| r != 0 && r != 127 && (r % rpn == 0 || r % rpn == rpn - 1));
    let interior = mean(&|r| {
        let m = r % 16;
        (1..15).contains(&m)
    });
    assert!(boundary > interior, "boundary {boundary} interior {interior}");
}

#[test]
fn wait_order_never_changes_completion_times() {
    let mut c = small_config(9, 15, 700);
    c.noise.jitter_sigma = 0.3;
    c.noise.injected_delays.push(InjectedDelay {
        rank: 4,
        cycle: 2,
        duration: 5000,
    });
    let a = Engine::with_wait_order(&c, Direction::Left).unwrap().run().unwrap();
    let b = Engine::with_wait_order(&c, Direction::Right).unwrap().run().unwrap();
    let finish = |r: &idlewave::engine::SimResult| r.accounts.iter().map(|a| (a.finish, a.idle)).collect::<Vec<_>>();
    assert_eq!(finish(&a), finish(&b));
    let exits = |r: &idlewave::engine::SimResult| {
        let mut v: Vec<_> = r
            .trace
            .records()
            .iter()
            .map(|x| (x.rank, x.cycle, x.wait_end))
            .collect();
        v.sort();
        v.dedup_by_key(|x| (x.0, x.1));
        v.iter().map(|x| (x.0, x.1)).collect::<Vec<_>>()
    };
    assert_eq!(exits(&a), exits(&b));
}

fn arb_config() -> impl Strategy<Value = SimConfig> {
    (
        2u32..12,
        1u64..8,
        1u64..2000,
        1u32..5,
        1u32..3,
        any::<bool>(),
        0.0f64..0.5,
        prop::collection::vec((0u32..12, 0u64..8, 0u64..5000), 0..3),
        any::<u64>(),
    )
        .prop_map(|(ranks, cycles, compute, cps, spn, periodic, sigma, delays, seed)| {
            let mut c = small_config(ranks, cycles, compute);
            c.seed = seed;
            c.topology = Topology::new(ranks, cps, spn);
            c.app.boundary = if periodic { Boundary::Periodic } else { Boundary::NonPeriodic };
            c.noise.jitter_sigma = sigma;
            c.noise.injected_delays = delays
                .into_iter()
                .map(|(r, k, d)| InjectedDelay {
                    rank: r % ranks,
                    cycle: k % cycles,
                    duration: d,
                })
                .collect();
            c
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn engine_matches_recurrence(c in arb_config()) {
        let trace = simulate(&c).unwrap();
        prop_assert_eq!(flatten(trace.records()), recurrence(&c));
    }

    #[test]
    fn record_count_law(ranks in 2u32..20, cycles in 1u64..12, periodic in any::<bool>()) {
        let mut c = small_config(ranks, cycles, 100);
        c.app.boundary = if periodic { Boundary::Periodic } else { Boundary::NonPeriodic };
        let per_cycle = if periodic { 2 * ranks } else { 2 * ranks - 2 };
        prop_assert_eq!(simulate(&c).unwrap().len() as u64, cycles * u64::from(per_cycle));
    }

    #[test]
    fn conservation_and_determinism(
        c in arb_config(),
        contention in any::<bool>(),
        noise_period in 100u64..5000,
        noise_len in 0u64..300,
        slow in 0.5f64..4.0,
    ) {
        let mut c = c;
        c.network.nic_contention = contention;
        c.noise.os_noise.push(NoiseClass { period: noise_period, duration: noise_len, jitter_fraction: 0.5, affected_ranks: None });
        c.noise.speed_groups.push(SpeedGroup { first: 0, last: 0, factor: slow });
        let a = simulate_detailed(&c).unwrap();
        let b = simulate_detailed(&c).unwrap();
        prop_assert_eq!(a.trace.to_bytes(), b.trace.to_bytes());
        for acct in &a.accounts {
            prop_assert_eq!(acct.compute + acct.send + acct.noise + acct.idle, acct.finish);
        }
        for r in a.trace.records() {
            prop_assert!(r.wait_end >= r.wait_start);
        }
    }
}
