//! Delay sources acting on a single rank: static speed factors, per-cycle
//! multiplicative jitter, OS-noise blackout intervals and scripted delays.
//!
//! Every rank owns independent ChaCha8 streams derived from the master seed.
//! Stream ids are `rank << 16 | purpose`, where purpose 0 is compute jitter
//! and purpose `1 + i` is the i-th OS-noise class. Adding ranks or noise
//! classes therefore never changes the draws an existing rank sees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Cycles, Rank};

/// Speed multiplier applied to a contiguous, inclusive rank range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedGroup {
    pub first: Rank,
    pub last: Rank,
    pub factor: f64,
}

/// Periodic OS interference: one blackout of `duration` every `period`
/// cycles, each displaced by up to `jitter_fraction * period / 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseClass {
    pub period: Cycles,
    pub duration: Cycles,
    #[serde(default)]
    pub jitter_fraction: f64,
    /// `None` means every rank.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub affected_ranks: Option<Vec<Rank>>,
}

impl NoiseClass {
    pub fn affects(&self, rank: Rank) -> bool {
        self.affected_ranks
            .as_ref()
            .is_none_or(|ranks| ranks.contains(&rank))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectedDelay {
    pub rank: Rank,
    pub cycle: u64,
    pub duration: Cycles,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub jitter_sigma: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub speed_groups: Vec<SpeedGroup>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub os_noise: Vec<NoiseClass>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub injected_delays: Vec<InjectedDelay>,
}

impl NoiseConfig {
    /// Later groups override earlier ones.
    pub fn speed_factor(&self, rank: Rank) -> f64 {
        self.speed_groups
            .iter()
            .rev()
            .find(|g| (g.first..=g.last).contains(&rank))
            .map_or(1.0, |g| g.factor)
    }

    pub fn injected_delay(&self, rank: Rank, cycle: u64) -> Cycles {
        self.injected_delays
            .iter()
            .filter(|d| d.rank == rank && d.cycle == cycle)
            .map(|d| d.duration)
            .sum()
    }
}

const JITTER_PURPOSE: u64 = 0;

pub fn rank_stream(seed: u64, rank: Rank, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((u64::from(rank) << 16) | purpose);
    rng
}

pub fn jitter_stream(seed: u64, rank: Rank) -> ChaCha8Rng {
    rank_stream(seed, rank, JITTER_PURPOSE)
}

pub fn os_noise_stream(seed: u64, rank: Rank, class_index: usize) -> ChaCha8Rng {
    rank_stream(seed, rank, 1 + class_index as u64)
}

/// Cost of one compute phase: `base * speed_factor * exp(sigma * z)` with
/// `z ~ N(0, 1)`, i.e. log-normal jitter with median 1. One normal draw is
/// consumed per call regardless of sigma so streams stay aligned.
pub fn compute_cost(rank: Rank, base_cost: Cycles, cfg: &NoiseConfig, rng: &mut impl Rng) -> Cycles {
    let z: f64 = rng.sample(StandardNormal);
    let jitter = (cfg.jitter_sigma * z).exp();
    (base_cost as f64 * cfg.speed_factor(rank) * jitter).round() as Cycles
}

/// Unbounded, non-decreasing sequence of `(start, duration)` blackouts for
/// one rank and one noise class.
#[derive(Debug, Clone)]
pub struct NoiseEvents {
    period: Cycles,
    duration: Cycles,
    half_spread: i64,
    k: u64,
    rng: ChaCha8Rng,
}

impl NoiseEvents {
    pub fn new(class: &NoiseClass, rng: ChaCha8Rng) -> Self {
        let jf = class.jitter_fraction.clamp(0.0, 1.0);
        Self {
            period: class.period,
            duration: class.duration,
            half_spread: (jf * class.period as f64 / 2.0).floor() as i64,
            k: 0,
            rng,
        }
    }
}

impl Iterator for NoiseEvents {
    type Item = (Cycles, Cycles);

    fn next(&mut self) -> Option<Self::Item> {
        let nominal = self.k.checked_mul(self.period)?;
        self.k += 1;
        let offset = if self.half_spread > 0 {
            self.rng.random_range(-self.half_spread..=self.half_spread)
        } else {
            0
        };
        let start = (nominal as i128 + offset as i128).max(0) as Cycles;
        Some((start, self.duration))
    }
}

pub fn os_noise_schedule(
    rank: Rank,
    horizon: Cycles,
    class: &NoiseClass,
    rng: ChaCha8Rng,
) -> Vec<(Cycles, Cycles)> {
    if !class.affects(rank) {
        return Vec::new();
    }
    NoiseEvents::new(class, rng)
        .take_while(|&(start, _)| start < horizon)
        .collect()
}

/// Merged blackout timeline of all noise classes affecting one rank.
#[derive(Debug, Clone, Default)]
pub struct Blackouts {
    sources: Vec<std::iter::Peekable<NoiseEvents>>,
}

impl Blackouts {
    pub fn for_rank(seed: u64, rank: Rank, cfg: &NoiseConfig) -> Self {
        let sources = cfg
            .os_noise
            .iter()
            .enumerate()
            .filter(|(_, class)| class.affects(rank) && class.duration > 0)
            .map(|(i, class)| NoiseEvents::new(class, os_noise_stream(seed, rank, i)).peekable())
            .collect();
        Self { sources }
    }

    /// Earliest-starting blackout that is still active at or after `t`.
    fn next_after(&mut self, t: Cycles) -> Option<(usize, Cycles, Cycles)> {
        loop {
            let (idx, start, dur) = self
                .sources
                .iter_mut()
                .enumerate()
                .filter_map(|(i, s)| s.peek().map(|&(st, d)| (i, st, d)))
                .min_by_key(|&(i, st, _)| (st, i))?;
            if start + dur <= t {
                self.sources[idx].next();
                continue;
            }
            return Some((idx, start, start + dur));
        }
    }

    /// Runs `work` cycles of computation starting at `start`, pausing during
    /// blackouts. Returns the completion time and the blackout time absorbed.
    pub fn run_work(&mut self, start: Cycles, work: Cycles) -> (Cycles, Cycles) {
        let mut t = start;
        let mut remaining = work;
        let mut absorbed = 0;
        while let Some((idx, b_start, b_end)) = self.next_after(t) {
            if b_start <= t {
                absorbed += b_end - t;
                t = b_end;
                self.sources[idx].next();
            } else if b_start < t + remaining {
                remaining -= b_start - t;
                t = b_start;
            } else {
                break;
            }
        }
        (t + remaining, absorbed)
    }
}
