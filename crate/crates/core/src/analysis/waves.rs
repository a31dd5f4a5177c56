use serde::{Deserialize, Serialize};

use crate::trace::Trace;
use crate::{Cycles, Rank};

/// A chain of long-idle onsets on consecutive ranks with a fitted
/// `onset = a + slope * rank` line. Speeds are `1 / slope`, positive when the
/// front travels toward higher ranks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveFront {
    /// In order of travel.
    pub points: Vec<(Rank, Cycles)>,
    pub speed_ranks_per_gcycle: f64,
    pub speed_ranks_per_sec: f64,
    pub r_squared: f64,
}

impl WaveFront {
    /// Fitted onset delay between neighbouring ranks, in cycles.
    pub fn onset_gap(&self) -> f64 {
        1e9 / self.speed_ranks_per_gcycle.abs()
    }

    pub fn ranks(&self) -> impl Iterator<Item = Rank> + '_ {
        self.points.iter().map(|p| p.0)
    }

    fn fit(points: Vec<(Rank, Cycles)>, clock_hz: u64) -> Option<Self> {
        let n = points.len() as f64;
        let mx = points.iter().map(|p| f64::from(p.0)).sum::<f64>() / n;
        let my = points.iter().map(|p| p.1 as f64).sum::<f64>() / n;
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for &(r, t) in &points {
            let dx = f64::from(r) - mx;
            let dy = t as f64 - my;
            sxx += dx * dx;
            sxy += dx * dy;
            syy += dy * dy;
        }
        let slope = sxy / sxx;
        if slope == 0.0 || !slope.is_finite() {
            return None;
        }
        let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
        Some(Self {
            points,
            speed_ranks_per_gcycle: 1e9 / slope,
            speed_ranks_per_sec: clock_hz as f64 / slope,
            r_squared,
        })
    }
}

/// Three times the mean per-cycle duration of the traced run.
pub fn default_chaining_window(trace: &Trace) -> Cycles {
    let cycles = trace.header().cycles.max(1);
    3 * trace.span().div_ceil(cycles).max(1)
}

/// Greedy onset chaining. Onsets (wait starts of idles lasting at least
/// `threshold`) are taken as seeds in time order. From each unused seed a
/// chain is grown toward higher and toward lower ranks, each step taking the
/// earliest unused onset on the next rank that is strictly later and within
/// `window` cycles. Chains of at least three points become fronts.
pub fn detect_waves(trace: &Trace, threshold: Cycles, window: Cycles) -> Vec<WaveFront> {
    let ranks = trace.ranks() as usize;
    let mut by_rank: Vec<Vec<Cycles>> = vec![Vec::new(); ranks];
    for r in trace.records().iter().filter(|r| r.duration() >= threshold) {
        by_rank[r.rank as usize].push(r.wait_start);
    }
    for v in &mut by_rank {
        v.sort_unstable();
        v.dedup();
    }
    let mut used: Vec<Vec<bool>> = by_rank.iter().map(|v| vec![false; v.len()]).collect();

    let mut seeds: Vec<(Cycles, usize, usize)> = by_rank
        .iter()
        .enumerate()
        .flat_map(|(r, v)| v.iter().enumerate().map(move |(i, &t)| (t, r, i)))
        .collect();
    seeds.sort_unstable();

    let grow = |used: &Vec<Vec<bool>>, rank: usize, t: Cycles, up: bool| -> Vec<(usize, usize)> {
        let mut chain = Vec::new();
        let (mut r, mut t) = (rank, t);
        loop {
            let next = if up { r + 1 } else { r.wrapping_sub(1) };
            if next >= ranks {
                break;
            }
            let cands = &by_rank[next];
            let from = cands.partition_point(|&c| c <= t);
            let Some(i) = (from..cands.len())
                .take_while(|&i| cands[i] - t <= window)
                .find(|&i| !used[next][i])
            else {
                break;
            };
            chain.push((next, i));
            r = next;
            t = cands[i];
        }
        chain
    };

    let mut fronts = Vec::new();
    for (t, r, i) in seeds {
        if used[r][i] {
            continue;
        }
        for up in [false, true] {
            let chain = grow(&used, r, t, up);
            if chain.len() < 2 {
                continue;
            }
            let mut points = vec![(r as Rank, t)];
            for &(cr, ci) in &chain {
                used[cr][ci] = true;
                points.push((cr as Rank, by_rank[cr][ci]));
            }
            fronts.extend(WaveFront::fit(points, trace.clock_hz()));
        }
        used[r][i] = true;
    }
    fronts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{Direction, IdleRecord, TraceHeader, TraceSource};

    fn trace(ranks: u32, onsets: &[(Rank, Cycles, Cycles)]) -> Trace {
        let header = TraceHeader {
            format_version: 1,
            ranks,
            cycles: 1000,
            clock_hz: 2_000_000_000,
            config_fingerprint: "test".into(),
            source: TraceSource::Simulated,
        };
        let records = onsets
            .iter()
            .enumerate()
            .map(|(i, &(rank, s, d))| IdleRecord {
                rank,
                cycle: i as u64,
                peer: None,
                dir: Direction::Left,
                wait_start: s,
                wait_end: s + d,
            })
            .collect();
        Trace::new(header, records).unwrap()
    }

    #[test]
    fn no_long_idles_no_fronts() {
        let t = trace(4, &[(0, 0, 10), (1, 5, 10), (2, 9, 10)]);
        assert!(detect_waves(&t, 1_000_000, 1_000_000_000).is_empty());
    }

    #[test]
    fn staircase_speed() {
        let step = 2_000_000_000 / 128;
        let pts: Vec<_> = (0..128).map(|r| (r, 1_000_000_000 + u64::from(r) * step, 2_000_000)).collect();
        let fronts = detect_waves(&trace(128, &pts), 1_000_000, 3 * step);
        assert_eq!(fronts.len(), 1);
        let f = &fronts[0];
        assert_eq!(f.points.len(), 128);
        assert!((f.speed_ranks_per_gcycle - 64.0).abs() < 1e-6);
        assert!((f.speed_ranks_per_sec - 128.0).abs() < 1e-6);
        assert!(f.r_squared > 0.999_999);
        assert!((f.onset_gap() - step as f64).abs() < 1e-3);
    }

    #[test]
    fn window_breaks_chains() {
        let pts = [(0, 0, 5), (1, 10, 5), (2, 20, 5), (3, 100, 5), (4, 110, 5)];
        let fronts = detect_waves(&trace(5, &pts), 5, 15);
        assert_eq!(fronts.len(), 1);
        assert_eq!(fronts[0].ranks().collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn two_sided_front_from_shared_seed() {
        let pts = [(2, 0, 5), (1, 10, 5), (0, 20, 5), (3, 10, 5), (4, 20, 5)];
        let fronts = detect_waves(&trace(5, &pts), 5, 15);
        assert_eq!(fronts.len(), 2);
        assert!(fronts[0].speed_ranks_per_gcycle < 0.0);
        assert!(fronts[1].speed_ranks_per_gcycle > 0.0);
        assert_eq!(fronts[0].speed_ranks_per_gcycle, -fronts[1].speed_ranks_per_gcycle);
    }
}
