#![allow(dead_code)]

use idlewave::trace::TraceSource;
use idlewave::{Cycles, Direction, IdleRecord, Rank, Trace, TraceHeader};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CLOCK: u64 = 2_100_000_000;

/// Builds a trace from `(rank, start, end)` triples; cycle indices are
/// assigned per rank in input order.
pub fn trace_of(ranks: u32, intervals: &[(Rank, Cycles, Cycles)]) -> Trace {
    let mut next = vec![0u64; ranks as usize];
    let records: Vec<IdleRecord> = intervals
        .iter()
        .map(|&(rank, s, e)| {
            let cycle = next[rank as usize];
            next[rank as usize] += 1;
            IdleRecord {
                rank,
                cycle,
                peer: None,
                dir: Direction::Left,
                wait_start: s,
                wait_end: e,
            }
        })
        .collect();
    let header = TraceHeader {
        format_version: 1,
        ranks,
        cycles: next.iter().copied().max().unwrap_or(0).max(1),
        clock_hz: CLOCK,
        config_fingerprint: "constructed".into(),
        source: TraceSource::Ingested,
    };
    Trace::new(header, records).unwrap()
}

/// Every rank repeats one idle of `width` per `period`, rank r offset by
/// `r * delta`, `reps` times.
pub fn shifted_pattern(ranks: u32, period: Cycles, width: Cycles, delta: Cycles, reps: u64) -> Trace {
    let mut iv = Vec::new();
    for r in 0..ranks {
        for j in 0..reps {
            let s = j * period + u64::from(r) * delta;
            iv.push((r, s, s + width));
        }
    }
    trace_of(ranks, &iv)
}

/// Idles of random length in `[min_len, 2*min_len)` at uniformly random,
/// non-overlapping positions, drawn independently per rank.
pub fn random_onsets(ranks: u32, span: Cycles, count: usize, min_len: Cycles, seed: u64) -> Trace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut iv = Vec::new();
    for r in 0..ranks {
        let mut starts: Vec<Cycles> = (0..count).map(|_| rng.random_range(0..span)).collect();
        starts.sort_unstable();
        let mut free = 0;
        for s in starts {
            let s = s.max(free);
            let e = s + rng.random_range(min_len..2 * min_len);
            iv.push((r, s, e));
            free = e + 1;
        }
    }
    trace_of(ranks, &iv)
}

/// Onsets `t(r) = first + r * step` on every rank, each idle `width` long.
pub fn staircase(ranks: u32, first: Cycles, step: Cycles, width: Cycles) -> Trace {
    let iv: Vec<_> = (0..ranks)
        .map(|r| {
            let s = first + u64::from(r) * step;
            (r, s, s + width)
        })
        .collect();
    trace_of(ranks, &iv)
}
