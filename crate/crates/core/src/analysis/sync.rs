use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::correlation::{autocorrelation, circular_cross_correlation};
use super::series::binarize_from;
use super::{AnalysisError, DEFAULT_THRESHOLD};
use crate::trace::Trace;
use crate::{Cycles, Rank};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncConfig {
    pub threshold: Cycles,
    pub bin: Cycles,
    /// Traces shorter than this many periods are flagged low-confidence.
    pub min_periods: f64,
    /// Relative deviation from the median period tolerated per rank.
    pub period_tolerance: f64,
    /// Minimum cross-correlation peak for a rank to count as phase-locked.
    pub peak_threshold: f64,
    /// Minimum confidence for the report to count as synchronized.
    pub sync_confidence: f64,
}

impl Default for SyncConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            bin: 100_000,
            min_periods: 10.0,
            period_tolerance: 0.1,
            peak_threshold: 0.5,
            sync_confidence: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncReport {
    /// Common period in cycles; 0 when no rank is periodic.
    pub period: Cycles,
    /// Offset of each included rank relative to the lowest included rank,
    /// in `[0, period)`.
    pub phases: BTreeMap<Rank, Cycles>,
    pub confidence: f64,
    pub excluded_ranks: Vec<Rank>,
    pub synchronized: bool,
    /// The trace covers fewer than `min_periods` periods.
    pub low_confidence: bool,
}

/// Dominant period of a 0/1 series, in cycles.
///
/// The autocorrelation is taken over first differences, which keeps idle
/// onsets and ends but drops slow trends such as a leading stretch without
/// idles. The period is the first local maximum after the first zero
/// crossing that exceeds the `3/sqrt(n)` noise floor and reaches 80% of the
/// tallest such maximum.
pub fn estimate_period(series: &[u8], bin: Cycles) -> Option<Cycles> {
    let x: Vec<f64> = series.windows(2).map(|w| f64::from(w[1]) - f64::from(w[0])).collect();
    let acf = autocorrelation(&x);
    let n = acf.len();
    if n < 4 {
        return None;
    }
    let floor = 3.0 / (n as f64).sqrt();
    let zero = (1..n).find(|&k| acf[k] <= 0.0)?;
    let peaks: Vec<usize> = (zero + 1..n - 1)
        .filter(|&k| acf[k] > acf[k - 1] && acf[k] >= acf[k + 1] && acf[k] > floor)
        .collect();
    let tallest = peaks.iter().map(|&k| acf[k]).fold(f64::NEG_INFINITY, f64::max);
    peaks
        .into_iter()
        .find(|&k| acf[k] >= 0.8 * tallest)
        .map(|k| k as Cycles * bin)
}

fn phase_and_peak(a: &[u8], b: &[u8], bin: Cycles, period: Cycles) -> Result<(Cycles, f64), AnalysisError> {
    if a.len() != b.len() {
        return Err(AnalysisError::LengthMismatch(a.len(), b.len()));
    }
    let fa: Vec<f64> = a.iter().map(|&v| f64::from(v)).collect();
    let fb: Vec<f64> = b.iter().map(|&v| f64::from(v)).collect();
    let xc = circular_cross_correlation(&fa, &fb).ok_or(AnalysisError::UndefinedPhase)?;
    let mut best = 0;
    for (s, &v) in xc.iter().enumerate() {
        if v > xc[best] + 1e-9 {
            best = s;
        }
    }
    let shift = best as Cycles * bin;
    let shift = if period > 0 { shift % period } else { shift };
    Ok((shift, xc[best]))
}

/// Shift in cycles that best aligns `a` onto `b` (`b[i] ≈ a[i - shift]`),
/// reduced modulo `period` when it is non-zero. Ties go to the smallest shift.
pub fn phase_between(a: &[u8], b: &[u8], bin: Cycles, period: Cycles) -> Result<Cycles, AnalysisError> {
    phase_and_peak(a, b, bin, period).map(|(s, _)| s)
}

/// Detects a common periodic idle pattern across ranks.
///
/// Ranks without long idles are excluded first; fewer than three remaining
/// is an error. Each remaining rank gets a period estimate, ranks without
/// one or more than `period_tolerance` away from the median are excluded,
/// and phases are measured against the lowest remaining rank. Confidence is
/// the share of the other ranks with long idles that stayed included and
/// whose correlation peak reaches `peak_threshold`.
///
/// Bins are anchored at the earliest wait start, so shifting every timestamp
/// by a constant leaves the report unchanged.
pub fn detect_self_sync(trace: &Trace, cfg: &SyncConfig) -> Result<SyncReport, AnalysisError> {
    if cfg.threshold == 0 || cfg.bin == 0 {
        return Err(AnalysisError::InvalidArgument("threshold and bin must be positive".into()));
    }
    let origin = trace.records().iter().map(|r| r.wait_start).min().unwrap_or(0);
    let series = binarize_from(trace, cfg.threshold, cfg.bin, origin);
    let ranks = trace.ranks() as usize;

    let mut excluded: Vec<Rank> = Vec::new();
    let mut active = Vec::new();
    for r in 0..ranks {
        if series.has_activity(r) {
            active.push(r);
        } else {
            excluded.push(r as Rank);
        }
    }
    if active.len() < 3 {
        return Err(AnalysisError::InsufficientData {
            included: active.len(),
            required: 3,
        });
    }

    let mut periodic: Vec<(usize, Cycles)> = Vec::new();
    for &r in &active {
        match estimate_period(series.row(r), cfg.bin) {
            Some(p) => periodic.push((r, p)),
            None => excluded.push(r as Rank),
        }
    }
    if periodic.is_empty() {
        excluded.sort_unstable();
        return Ok(SyncReport {
            period: 0,
            phases: BTreeMap::new(),
            confidence: 0.0,
            excluded_ranks: excluded,
            synchronized: false,
            low_confidence: true,
        });
    }

    let mut sorted: Vec<Cycles> = periodic.iter().map(|p| p.1).collect();
    sorted.sort_unstable();
    let period = sorted[(sorted.len() - 1) / 2];
    let tolerance = cfg.period_tolerance * period as f64;
    let mut included = Vec::new();
    for (r, p) in periodic {
        if (p as f64 - period as f64).abs() <= tolerance {
            included.push(r);
        } else {
            excluded.push(r as Rank);
        }
    }

    let reference = included[0];
    let mut phases = BTreeMap::from([(reference as Rank, 0)]);
    let mut locked = 0usize;
    for pair in included.windows(2) {
        let (prev, r) = (pair[0], pair[1]);
        let (shift, _) = phase_and_peak(series.row(reference), series.row(r), cfg.bin, period)?;
        phases.insert(r as Rank, shift);
        let (_, peak) = phase_and_peak(series.row(prev), series.row(r), cfg.bin, period)?;
        if peak >= cfg.peak_threshold {
            locked += 1;
        }
    }
    excluded.sort_unstable();

    let confidence = locked as f64 / (active.len() - 1) as f64;
    let covered = series.len() as f64 * cfg.bin as f64;
    let low_confidence = covered < cfg.min_periods * period as f64;
    Ok(SyncReport {
        period,
        phases,
        confidence,
        excluded_ranks: excluded,
        synchronized: confidence >= cfg.sync_confidence && !low_confidence,
        low_confidence,
    })
}
