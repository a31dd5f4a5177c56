use crate::trace::Trace;
use crate::Cycles;

/// Per-rank long-idle occupancy. `rows[r][b]` is 1 when some idle period of
/// rank `r` lasting at least the threshold overlaps
/// `[origin + b*bin, origin + (b+1)*bin)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinarySeries {
    pub bin: Cycles,
    pub origin: Cycles,
    pub rows: Vec<Vec<u8>>,
}

impl BinarySeries {
    pub fn len(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, rank: usize) -> &[u8] {
        &self.rows[rank]
    }

    pub fn has_activity(&self, rank: usize) -> bool {
        self.rows[rank].iter().any(|&v| v != 0)
    }
}

/// Bins anchored at time 0. Panics if `threshold` or `bin` is zero.
pub fn binarize(trace: &Trace, threshold: Cycles, bin: Cycles) -> BinarySeries {
    binarize_from(trace, threshold, bin, 0)
}

/// As [`binarize`], with bins anchored at `origin`. Parts of records before
/// the origin are dropped.
pub fn binarize_from(trace: &Trace, threshold: Cycles, bin: Cycles, origin: Cycles) -> BinarySeries {
    assert!(threshold > 0 && bin > 0, "threshold and bin must be positive");
    let span = trace.span().saturating_sub(origin);
    let len = span.div_ceil(bin) as usize;
    let mut rows = vec![vec![0u8; len]; trace.ranks() as usize];
    for r in trace.records() {
        if r.duration() < threshold || r.wait_end <= origin {
            continue;
        }
        let start = r.wait_start.max(origin) - origin;
        let end = r.wait_end - origin;
        let first = (start / bin) as usize;
        let last = (end.div_ceil(bin) as usize).min(len);
        rows[r.rank as usize][first..last].fill(1);
    }
    BinarySeries { bin, origin, rows }
}
