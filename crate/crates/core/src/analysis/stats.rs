use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::trace::Trace;
use crate::{Cycles, Rank};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankStats {
    pub rank: Rank,
    pub min_idle: Cycles,
    pub mean_idle: f64,
    pub max_idle: Cycles,
    pub count: u64,
}

/// Exact per-rank statistics over every record, zero-length ones included.
/// Ranks without records are absent from the result.
pub fn idle_stats(trace: &Trace) -> Vec<RankStats> {
    let mut acc: BTreeMap<Rank, (Cycles, u128, Cycles, u64)> = BTreeMap::new();
    for r in trace.records() {
        let d = r.duration();
        let e = acc.entry(r.rank).or_insert((Cycles::MAX, 0, 0, 0));
        e.0 = e.0.min(d);
        e.1 += u128::from(d);
        e.2 = e.2.max(d);
        e.3 += 1;
    }
    acc.into_iter()
        .map(|(rank, (min, sum, max, count))| RankStats {
            rank,
            min_idle: min,
            mean_idle: sum as f64 / count as f64,
            max_idle: max,
            count,
        })
        .collect()
}
